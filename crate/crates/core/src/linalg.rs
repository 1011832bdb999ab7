use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

pub(crate) const JITTER_START: f64 = 1e-10;
pub(crate) const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor of `m + jitter·I`, with jitter starting at
/// `1e-10·scale` and growing tenfold up to `1e-4·scale`.
pub(crate) fn jittered_cholesky(
    m: &DMatrix<f64>,
    scale: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * scale;
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(a) {
            return Ok((chol, jitter));
        }
        rel *= 10.0;
        if rel > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::Numerical(format!(
                "matrix of size {} is not positive definite even with jitter {:.1e}; \
                 the kernel matrix is ill-conditioned (duplicate inputs or too long a length-scale)",
                m.nrows(),
                JITTER_MAX * scale
            )));
        }
    }
}

/// `log|A|` from its Cholesky factor.
pub(crate) fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}
