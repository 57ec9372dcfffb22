//! Benchmark configuration: one TOML file drives data generation, model
//! fitting, evaluation, and the hyper-parameter grid search.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::hyperopt::GridSpec;
use crate::kernels::KernelSpec;
use crate::signals::Dims;

/// Excitation of the generated input signal.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub mean: f64,
    pub variance: f64,
}

/// A hyper-parameter that is either fixed or deferred to the grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperValue {
    Fixed(f64),
    Grid,
}

impl HyperValue {
    pub fn fixed(&self) -> Option<f64> {
        match self {
            Self::Fixed(v) => Some(*v),
            Self::Grid => None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumOrKeyword {
    Num(f64),
    Keyword(String),
}

impl NumOrKeyword {
    fn into_hyper(self, field: &str) -> Result<HyperValue> {
        match self {
            Self::Num(v) => {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Config(format!(
                        "{field} must be positive and finite, got {v}"
                    )));
                }
                Ok(HyperValue::Fixed(v))
            }
            Self::Keyword(s) if s == "grid" => Ok(HyperValue::Grid),
            Self::Keyword(s) => Err(Error::Config(format!(
                "{field} must be a positive number or the string \"grid\", got \"{s}\""
            ))),
        }
    }
}

/// Which data-generating system the benchmark runs on. All built-in systems
/// are single-input single-output.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    /// The nonlinear benchmark system with exponential and bilinear terms.
    Example,
    /// A fixed stable second-order linear system.
    Linear,
    /// Additively separable polynomial lags: `y(k) = sum_i P_i(y(k-i)) +
    /// sum_j Q_j(u(k-j))`. Coefficient arrays start at degree one, so the
    /// origin is always an equilibrium.
    Polynomial {
        poly_y: Vec<Vec<f64>>,
        poly_u: Vec<Vec<f64>>,
    },
}

/// Which predictor the benchmark fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorMode {
    Structured,
    UnstructuredVelocity,
    UnstructuredPrimal,
}

/// How evaluation supplies the scheduling information a query needs beyond
/// the measured initial window and the input sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulingMode {
    /// Take the scheduling windows from the measured evaluation trajectory
    /// (the known-scheduling assumption).
    Measured,
    /// Estimate unknown future output levels by the fixed-point refinement;
    /// only measured past data and the input sequence reach the predictor.
    Iterative,
}

impl SchedulingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Measured => "measured",
            Self::Iterative => "iterative",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "measured" => Ok(Self::Measured),
            "iterative" => Ok(Self::Iterative),
            other => Err(Error::Config(format!(
                "unknown scheduling \"{other}\"; expected measured or iterative"
            ))),
        }
    }
}

impl PredictorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Structured => "structured",
            Self::UnstructuredVelocity => "unstructured_velocity",
            Self::UnstructuredPrimal => "unstructured_primal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(Self::Structured),
            "unstructured_velocity" => Ok(Self::UnstructuredVelocity),
            "unstructured_primal" => Ok(Self::UnstructuredPrimal),
            other => Err(Error::Config(format!(
                "unknown mode \"{other}\"; expected structured, unstructured_velocity, \
                 or unstructured_primal"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: String,
    #[serde(rename = "N")]
    n: usize,
    ell: usize,
    #[serde(rename = "L")]
    l: usize,
    noise_variance: f64,
    input: InputSpec,
    kernel: String,
    gamma: NumOrKeyword,
    #[serde(default)]
    sigma: Option<NumOrKeyword>,
    seed: u64,
    mode: String,
    #[serde(default)]
    poly_y: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    poly_u: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    sigma_grid: Option<Vec<f64>>,
    #[serde(default)]
    gamma_grid: Option<Vec<f64>>,
    #[serde(default)]
    train_fraction: Option<f64>,
    #[serde(default)]
    shuffle_split: Option<bool>,
    #[serde(default)]
    eval_windows: Option<usize>,
    #[serde(default)]
    quad_nodes: Option<usize>,
    #[serde(default)]
    scheduling: Option<String>,
}

/// Fully validated benchmark configuration.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub system: SystemSpec,
    /// Number of data increments; the dictionary trajectory holds
    /// `n_data + 1` samples (times `0..=n_data`).
    pub n_data: usize,
    pub ell: usize,
    pub horizon: usize,
    pub noise_variance: f64,
    pub input: InputSpec,
    pub kernel: String,
    pub gamma: HyperValue,
    pub sigma: Option<HyperValue>,
    pub seed: u64,
    pub mode: PredictorMode,
    pub sigma_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub train_fraction: f64,
    pub shuffle_split: bool,
    pub eval_windows: usize,
    pub quad_nodes: usize,
    pub scheduling: SchedulingMode,
}

impl BenchmarkConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("cannot parse configuration: {e}")))?;
        let system = match raw.system.as_str() {
            "example" => {
                if raw.poly_y.is_some() || raw.poly_u.is_some() {
                    return Err(Error::Config(
                        "poly_y/poly_u only apply to system = \"polynomial\"".into(),
                    ));
                }
                SystemSpec::Example
            }
            "linear" => {
                if raw.poly_y.is_some() || raw.poly_u.is_some() {
                    return Err(Error::Config(
                        "poly_y/poly_u only apply to system = \"polynomial\"".into(),
                    ));
                }
                SystemSpec::Linear
            }
            "polynomial" => {
                let poly_y = raw.poly_y.clone().ok_or_else(|| {
                    Error::Config("system = \"polynomial\" requires poly_y".into())
                })?;
                let poly_u = raw.poly_u.clone().ok_or_else(|| {
                    Error::Config("system = \"polynomial\" requires poly_u".into())
                })?;
                if poly_y.is_empty() || poly_u.is_empty() {
                    return Err(Error::Config(
                        "polynomial system needs at least one output and one input lag".into(),
                    ));
                }
                if poly_y
                    .iter()
                    .chain(poly_u.iter())
                    .flatten()
                    .any(|c| !c.is_finite())
                {
                    return Err(Error::Config(
                        "polynomial coefficients must be finite".into(),
                    ));
                }
                SystemSpec::Polynomial { poly_y, poly_u }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown system \"{other}\"; expected example, linear, or polynomial"
                )))
            }
        };
        let mode = PredictorMode::parse(&raw.mode)?;
        if raw.ell == 0 || raw.l == 0 {
            return Err(Error::Config("ell and L must be at least 1".into()));
        }
        if raw.n < raw.l + raw.ell {
            return Err(Error::Config(format!(
                "N = {} is too small for ell = {} and L = {}",
                raw.n, raw.ell, raw.l
            )));
        }
        if !(raw.noise_variance.is_finite() && raw.noise_variance >= 0.0) {
            return Err(Error::Config(format!(
                "noise_variance must be non-negative, got {}",
                raw.noise_variance
            )));
        }
        if !(raw.input.variance.is_finite() && raw.input.variance >= 0.0)
            || !raw.input.mean.is_finite()
        {
            return Err(Error::Config(
                "input.mean must be finite and input.variance non-negative".into(),
            ));
        }
        let gamma = raw.gamma.into_hyper("gamma")?;
        let sigma = raw
            .sigma
            .map(|s| s.into_hyper("sigma"))
            .transpose()?;
        let train_fraction = raw.train_fraction.unwrap_or(0.7);
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie strictly between 0 and 1, got {train_fraction}"
            )));
        }
        let quad_nodes = raw.quad_nodes.unwrap_or(crate::velocity::DEFAULT_QUAD_NODES);
        if quad_nodes < 3 || quad_nodes % 2 == 0 {
            return Err(Error::Config(format!(
                "quad_nodes must be an odd number of at least 3, got {quad_nodes}"
            )));
        }
        let eval_windows = raw.eval_windows.unwrap_or(100);
        if eval_windows == 0 {
            return Err(Error::Config("eval_windows must be at least 1".into()));
        }
        let scheduling = raw
            .scheduling
            .as_deref()
            .map(SchedulingMode::parse)
            .transpose()?
            .unwrap_or(SchedulingMode::Measured);
        for (name, grid) in [("sigma_grid", &raw.sigma_grid), ("gamma_grid", &raw.gamma_grid)] {
            if let Some(g) = grid {
                if g.is_empty() || g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::Config(format!(
                        "{name} must be a non-empty list of positive numbers"
                    )));
                }
            }
        }
        let config = Self {
            system,
            n_data: raw.n,
            ell: raw.ell,
            horizon: raw.l,
            noise_variance: raw.noise_variance,
            input: raw.input,
            kernel: raw.kernel,
            gamma,
            sigma,
            seed: raw.seed,
            mode,
            sigma_grid: raw.sigma_grid.unwrap_or_else(GridSpec::default_sigmas),
            gamma_grid: raw.gamma_grid.unwrap_or_else(GridSpec::default_gammas),
            train_fraction,
            shuffle_split: raw.shuffle_split.unwrap_or(false),
            eval_windows,
            quad_nodes,
            scheduling,
        };
        // Surface kernel-name typos immediately, with a placeholder width.
        KernelSpec::from_name(&config.kernel, Some(1.0))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Problem dimensions for a dictionary of `n_data` increments.
    pub fn dims_for(&self, n_data: usize) -> Result<Dims> {
        Dims::uniform(1, 1, self.ell, self.horizon, n_data)
    }

    pub fn dims(&self) -> Result<Dims> {
        self.dims_for(self.n_data)
    }

    /// Resolve the kernel with its fixed width. Errors when the width is
    /// deferred to the grid search.
    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let sigma = match &self.sigma {
            Some(HyperValue::Fixed(v)) => Some(*v),
            Some(HyperValue::Grid) => {
                return Err(Error::Config(
                    "sigma is set to \"grid\"; run the grid search and fix the selected width"
                        .into(),
                ))
            }
            None => None,
        };
        KernelSpec::from_name(&self.kernel, sigma)
    }

    /// Fixed regularization weight. Errors when deferred to the grid search.
    pub fn fixed_gamma(&self) -> Result<f64> {
        self.gamma.fixed().ok_or_else(|| {
            Error::Config(
                "gamma is set to \"grid\"; run the grid search and fix the selected weight".into(),
            )
        })
    }

    /// Grid-search settings drawn from this configuration.
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            sigmas: self.sigma_grid.clone(),
            gammas: self.gamma_grid.clone(),
            train_fraction: self.train_fraction,
            shuffle: self.shuffle_split,
            seed: self.seed,
        }
    }
}
