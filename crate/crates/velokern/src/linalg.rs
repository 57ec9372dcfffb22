//! Dense symmetric positive definite solves.
//!
//! Ridge-regularized Gram systems `(1/gamma) I + G` are SPD by construction,
//! so they are solved through an unpivoted Cholesky factorization. If the
//! factorization fails (loss of definiteness through round-off), one retry is
//! made with a diagonal jitter of `1e-10 * trace / n`; a second failure is a
//! hard numerical error carrying the index of the offending pivot.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative jitter applied once when the first factorization attempt fails.
pub const JITTER_SCALE: f64 = 1e-10;

/// Lower-triangular Cholesky factor of an SPD matrix.
///
/// The factor is stored explicitly and all solves run through the
/// forward/back substitutions below, so a factor that is serialized and
/// reloaded reproduces solves bit-for-bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpdFactor {
    l: DMatrix<f64>,
    jitter: f64,
}

impl SpdFactor {
    /// Factor `m` (assumed symmetric), retrying once with diagonal jitter.
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "SPD factorization needs a square non-empty matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some(chol) = Cholesky::new(m.clone()) {
            return Ok(Self {
                l: chol.unpack(),
                jitter: 0.0,
            });
        }
        let jitter = JITTER_SCALE * m.trace() / n as f64;
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        match Cholesky::new(shifted.clone()) {
            Some(chol) => Ok(Self {
                l: chol.unpack(),
                jitter,
            }),
            None => Err(Error::Factorization {
                pivot: first_bad_pivot(&shifted),
            }),
        }
    }

    /// Rebuild a factor from its stored parts (model deserialization).
    pub fn from_parts(l: DMatrix<f64>, jitter: f64) -> Result<Self> {
        if l.nrows() != l.ncols() || l.is_empty() {
            return Err(Error::InvalidInput(
                "stored SPD factor must be square and non-empty".into(),
            ));
        }
        Ok(Self { l, jitter })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Lower-triangular factor `L` with `L L^T = M (+ jitter I)`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Diagonal shift that was added before factorization (`0.0` normally).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solve `M x = b` for one right-hand side.
    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.solve_mat(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
        Ok(DVector::from_column_slice(m.column(0).as_slice()))
    }

    /// Solve `M X = B` column by column via forward and back substitution.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "solve dimension mismatch: factor is {}x{}, rhs has {} rows",
                n,
                n,
                b.nrows()
            )));
        }
        let mut x = b.clone();
        for c in 0..x.ncols() {
            // Forward: L z = b.
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
            // Back: L^T x = z.
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Zero-based index of the first non-positive pivot a plain unpivoted
/// Cholesky sweep encounters on `m`. Only called on matrices that are known
/// to fail, to report a useful diagnostic.
fn first_bad_pivot(m: &DMatrix<f64>) -> usize {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return j;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    n.saturating_sub(1)
}
