//! Scheduling kernels and the structured block-diagonal weighting they
//! induce on multi-step regressors.
//!
//! A positive-definite kernel `kappa` on scheduling vectors replaces the
//! finite basis expansion: every inner product of two feature chains
//! collapses into a block-diagonal matrix whose scalar weights are suffix
//! products of `1 + kappa` along the paired prediction windows. The head
//! block (the initial window regressor) receives the full product over all
//! steps; the input block joining at step `m` receives the product over
//! steps `m..L`, so the final input block is weighted by the single factor
//! of its own step.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::signals::{DataMatrices, HankelMatrix};
use crate::structure::BasisSet;

/// A scheduling kernel, closed under the compositions used by the
/// extended family: sums, products, and the `1 + kappa` shift.
#[derive(Clone)]
pub enum KernelSpec {
    /// `exp(-||a - b||^2 / sigma^2)`.
    Rbf { sigma: f64 },
    /// `a' b`.
    Linear,
    /// `psi(a)' psi(b)` for a finite basis; with the empty basis this is
    /// the zero kernel, which collapses the structured weighting to plain
    /// Euclidean inner products.
    ExplicitBasis(Arc<BasisSet>),
    /// `1 + kappa(a, b)`.
    OnePlus(Box<KernelSpec>),
    Sum(Box<KernelSpec>, Box<KernelSpec>),
    Product(Box<KernelSpec>, Box<KernelSpec>),
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rbf { sigma } => write!(f, "Rbf {{ sigma: {sigma} }}"),
            Self::Linear => write!(f, "Linear"),
            Self::ExplicitBasis(b) => write!(f, "ExplicitBasis(n_psi = {})", b.len()),
            Self::OnePlus(k) => write!(f, "OnePlus({k:?})"),
            Self::Sum(a, b) => write!(f, "Sum({a:?}, {b:?})"),
            Self::Product(a, b) => write!(f, "Product({a:?}, {b:?})"),
        }
    }
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "RBF width must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self::Rbf { sigma })
    }

    /// The zero kernel: all structured weights become 1 and the Gram matrix
    /// reduces to plain inner products of the stacked regressors.
    pub fn zero() -> Self {
        Self::ExplicitBasis(Arc::new(BasisSet::empty()))
    }

    /// Construct a kernel from its configuration name. `sigma` is required
    /// exactly when the named kernel contains an RBF component.
    pub fn from_name(name: &str, sigma: Option<f64>) -> Result<Self> {
        let need_sigma = || -> Result<f64> {
            sigma.ok_or_else(|| {
                Error::Config(format!("kernel '{name}' requires a width parameter sigma"))
            })
        };
        let k = match name {
            "linear" => Self::Linear,
            "zero" => Self::zero(),
            "rbf" => Self::rbf(need_sigma()?)?,
            "linear_times_oneplus_rbf" | "oneplus_rbf_times_linear" => Self::Product(
                Box::new(Self::Linear),
                Box::new(Self::OnePlus(Box::new(Self::rbf(need_sigma()?)?))),
            ),
            "oneplus_linear_times_rbf" => Self::Product(
                Box::new(Self::OnePlus(Box::new(Self::Linear))),
                Box::new(Self::rbf(need_sigma()?)?),
            ),
            "linear_plus_rbf" => Self::Sum(
                Box::new(Self::Linear),
                Box::new(Self::rbf(need_sigma()?)?),
            ),
            "linear_times_rbf" => Self::Product(
                Box::new(Self::Linear),
                Box::new(Self::rbf(need_sigma()?)?),
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown kernel '{other}'; expected one of rbf, linear, zero, \
                     linear_times_oneplus_rbf, oneplus_linear_times_rbf, linear_plus_rbf, \
                     linear_times_rbf"
                )))
            }
        };
        Ok(k)
    }

    /// Configuration name, if this kernel is one of the named family.
    pub fn name(&self) -> Option<&'static str> {
        match self {
            Self::Linear => Some("linear"),
            Self::Rbf { .. } => Some("rbf"),
            Self::ExplicitBasis(b) if b.is_empty() => Some("zero"),
            Self::ExplicitBasis(_) => None,
            Self::Product(a, b) => match (a.as_ref(), b.as_ref()) {
                (Self::Linear, Self::OnePlus(inner)) if matches!(inner.as_ref(), Self::Rbf { .. }) => {
                    Some("linear_times_oneplus_rbf")
                }
                (Self::OnePlus(inner), Self::Rbf { .. }) if matches!(inner.as_ref(), Self::Linear) => {
                    Some("oneplus_linear_times_rbf")
                }
                (Self::Linear, Self::Rbf { .. }) => Some("linear_times_rbf"),
                _ => None,
            },
            Self::Sum(a, b) => match (a.as_ref(), b.as_ref()) {
                (Self::Linear, Self::Rbf { .. }) => Some("linear_plus_rbf"),
                _ => None,
            },
            Self::OnePlus(_) => None,
        }
    }

    /// The RBF width appearing in this kernel, if any.
    pub fn sigma(&self) -> Option<f64> {
        match self {
            Self::Rbf { sigma } => Some(*sigma),
            Self::Linear | Self::ExplicitBasis(_) => None,
            Self::OnePlus(k) => k.sigma(),
            Self::Sum(a, b) | Self::Product(a, b) => a.sigma().or_else(|| b.sigma()),
        }
    }

    /// Replace every RBF width in the composition. Used by the grid search
    /// to sweep sigma without re-parsing the kernel name.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Ok(match self {
            Self::Rbf { .. } => Self::rbf(sigma)?,
            Self::Linear => Self::Linear,
            Self::ExplicitBasis(b) => Self::ExplicitBasis(b.clone()),
            Self::OnePlus(k) => Self::OnePlus(Box::new(k.with_sigma(sigma)?)),
            Self::Sum(a, b) => Self::Sum(
                Box::new(a.with_sigma(sigma)?),
                Box::new(b.with_sigma(sigma)?),
            ),
            Self::Product(a, b) => Self::Product(
                Box::new(a.with_sigma(sigma)?),
                Box::new(b.with_sigma(sigma)?),
            ),
        })
    }

    /// Evaluate `kappa(a, b)`.
    pub fn eval(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "kernel arguments differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let v = match self {
            Self::Rbf { sigma } => {
                let d2 = (a - b).norm_squared();
                (-d2 / (sigma * sigma)).exp()
            }
            Self::Linear => a.dot(b),
            Self::ExplicitBasis(basis) => {
                if basis.is_empty() {
                    0.0
                } else {
                    basis.eval(a)?.dot(&basis.eval(b)?)
                }
            }
            Self::OnePlus(k) => 1.0 + k.eval(a, b)?,
            Self::Sum(k1, k2) => k1.eval(a, b)? + k2.eval(a, b)?,
            Self::Product(k1, k2) => k1.eval(a, b)? * k2.eval(a, b)?,
        };
        if !v.is_finite() {
            return Err(Error::Numerical(
                "kernel evaluation produced a non-finite value".into(),
            ));
        }
        Ok(v)
    }
}

/// The block-diagonal weighting induced by a kernel on a pair of
/// prediction windows: `scalars[m]` weights the inner product of block `m`
/// of the stacked regressors (`m = 0` the head of length `head_dim`,
/// `m = 1..L` the per-step input blocks of length `n_u`).
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredBlock {
    pub scalars: Vec<f64>,
    pub head_dim: usize,
    pub n_u: usize,
}

impl StructuredBlock {
    /// Build from the per-step values `1 + kappa(w_i[t], w_j[t])`,
    /// `t = 0..L-1`. The head weight `scalars[0]` is the product over all
    /// entries; the input joining at step `m` is expanded by that step and
    /// every later one, so `scalars[m]` is the product of entries
    /// `m-1..L-1` (the head and the first input share the full product).
    pub fn from_one_plus(one_plus: &[f64], head_dim: usize, n_u: usize) -> Self {
        let horizon = one_plus.len();
        let mut suffix = vec![1.0; horizon + 1];
        for t in (0..horizon).rev() {
            suffix[t] = suffix[t + 1] * one_plus[t];
        }
        let mut scalars = Vec::with_capacity(horizon + 1);
        scalars.push(suffix[0]);
        scalars.extend((1..=horizon).map(|m| suffix[m - 1]));
        Self {
            scalars,
            head_dim,
            n_u,
        }
    }

    /// Build from two prediction windows (columns = steps, equal widths).
    pub fn from_windows(
        kernel: &KernelSpec,
        wi: &DMatrix<f64>,
        wj: &DMatrix<f64>,
        head_dim: usize,
        n_u: usize,
    ) -> Result<Self> {
        if wi.ncols() != wj.ncols() || wi.nrows() != wj.nrows() {
            return Err(Error::InvalidInput(
                "paired prediction windows must have matching shapes".into(),
            ));
        }
        let mut one_plus = Vec::with_capacity(wi.ncols());
        for t in 0..wi.ncols() {
            let a = wi.column(t).into_owned();
            let b = wj.column(t).into_owned();
            one_plus.push(1.0 + kernel.eval(&a, &b)?);
        }
        Ok(Self::from_one_plus(&one_plus, head_dim, n_u))
    }

    pub fn horizon(&self) -> usize {
        self.scalars.len() - 1
    }

    /// Total regressor length the weighting applies to.
    pub fn dim(&self) -> usize {
        self.head_dim + self.horizon() * self.n_u
    }

    /// The scalar weight applied to coordinate `idx` of the regressor.
    fn weight_at(&self, idx: usize) -> f64 {
        if idx < self.head_dim {
            self.scalars[0]
        } else {
            self.scalars[1 + (idx - self.head_dim) / self.n_u]
        }
    }

    /// Dense diagonal form, for verification at small sizes.
    pub fn densify(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |r, c| if r == c { self.weight_at(r) } else { 0.0 })
    }

    /// `x' K y` without forming the diagonal.
    pub fn weighted_inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        let mut acc = 0.0;
        for i in 0..x.len() {
            acc += self.weight_at(i) * x[i] * y[i];
        }
        acc
    }

    /// `K x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| self.weight_at(i) * x[i])
    }
}

/// The block-diagonal kernel slice for a pair of windows — the quantity
/// the implicit predictor sums regressor inner products against.
pub fn kernel_slice(
    kernel: &KernelSpec,
    wi: &DMatrix<f64>,
    wj: &DMatrix<f64>,
    head_dim: usize,
    n_u: usize,
) -> Result<StructuredBlock> {
    StructuredBlock::from_windows(kernel, wi, wj, head_dim, n_u)
}

/// Symmetric table of `1 + kappa` over a sample sequence (columns).
pub fn one_plus_table(kernel: &KernelSpec, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = samples.ncols();
    let cols: Vec<DVector<f64>> = (0..n).map(|i| samples.column(i).into_owned()).collect();
    let mut table = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 1.0 + kernel.eval(&cols[i], &cols[j])?;
            table[(i, j)] = v;
            table[(j, i)] = v;
        }
    }
    Ok(table)
}

/// The effective Gram matrix of the structured predictor:
/// `G[i, j] = X_i' K(W_i, W_j) X_j` over all training columns.
pub fn effective_gram(kernel: &KernelSpec, data: &DataMatrices) -> Result<DMatrix<f64>> {
    effective_gram_parts(
        kernel,
        &data.w_l,
        &data.x_matrix(),
        data.dims.head_dim(),
        data.dims.n_u,
    )
}

/// [`effective_gram`] over explicit parts: the scheduling-window Hankel
/// matrix and the stacked regressor columns.
///
/// When the scheduling Hankel matrix still carries its generating sequence
/// (the unmodified training case), kernel evaluations are shared through a
/// sample-pair table; otherwise each window pair is evaluated directly.
pub fn effective_gram_parts(
    kernel: &KernelSpec,
    w_l: &HankelMatrix,
    x: &DMatrix<f64>,
    head_dim: usize,
    n_u: usize,
) -> Result<DMatrix<f64>> {
    let horizon = w_l.depth;
    let n_c = w_l.width();
    if x.ncols() != n_c || x.nrows() != head_dim + horizon * n_u {
        return Err(Error::InvalidInput(format!(
            "regressor matrix {}x{} does not match {} windows of regressor length {}",
            x.nrows(),
            x.ncols(),
            n_c,
            head_dim + horizon * n_u
        )));
    }
    let mut gram = DMatrix::zeros(n_c, n_c);
    if let Some(seq) = w_l.try_source_sequence() {
        let table = one_plus_table(kernel, &seq)?;
        for i in 0..n_c {
            let xi = x.column(i).into_owned();
            for j in i..n_c {
                let xj = x.column(j).into_owned();
                // The input joining at step m carries the suffix product of
                // 1 + kappa over steps m..L; the head carries the full
                // product, accumulated once the loop reaches the front.
                let mut scalar = 1.0;
                let mut acc = 0.0;
                for m in (1..=horizon).rev() {
                    scalar *= table[(i + m - 1, j + m - 1)];
                    acc += scalar * block_inner(&xi, &xj, head_dim, n_u, m);
                }
                acc += scalar * block_inner(&xi, &xj, head_dim, n_u, 0);
                gram[(i, j)] = acc;
                gram[(j, i)] = acc;
            }
        }
    } else {
        for i in 0..n_c {
            let xi = x.column(i).into_owned();
            let wi = w_l.column_window(i);
            for j in i..n_c {
                let xj = x.column(j).into_owned();
                let wj = w_l.column_window(j);
                let block = StructuredBlock::from_windows(kernel, &wi, &wj, head_dim, n_u)?;
                let v = block.weighted_inner(&xi, &xj);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
    }
    Ok(gram)
}

/// Inner product of regressor block `m` (`m = 0` head, else input chunk).
fn block_inner(x: &DVector<f64>, y: &DVector<f64>, head_dim: usize, n_u: usize, m: usize) -> f64 {
    if m == 0 {
        let mut acc = 0.0;
        for i in 0..head_dim {
            acc += x[i] * y[i];
        }
        acc
    } else {
        let off = head_dim + (m - 1) * n_u;
        let mut acc = 0.0;
        for i in 0..n_u {
            acc += x[off + i] * y[off + i];
        }
        acc
    }
}
