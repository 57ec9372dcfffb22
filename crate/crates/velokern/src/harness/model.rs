//! Model persistence. A fitted predictor round-trips through JSON with
//! bit-identical predictions: floats serialize in shortest-roundtrip form
//! and the dual coefficients are recomputed from the stored factorization
//! by exactly the same substitution the fit used.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::SpdFactor;
use crate::regression::{FittedPredictor, UnstructuredPredictor, UnstructuredVariant};
use crate::signals::{Dims, HankelMatrix};

use super::config::PredictorMode;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuredPayload {
    pub x_cols: DMatrix<f64>,
    pub w_l: HankelMatrix,
    pub y_l: DMatrix<f64>,
    pub spd: SpdFactor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnstructuredPayload {
    pub z: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub spd: SpdFactor,
}

/// A predictor of either family, as written to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub mode: String,
    pub dims: Dims,
    pub kernel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub gamma: f64,
    pub n_c: usize,
    pub fit_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<StructuredPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unstructured: Option<UnstructuredPayload>,
}

/// A predictor restored from disk.
#[derive(Debug)]
pub enum LoadedPredictor {
    Structured(FittedPredictor),
    Unstructured(UnstructuredPredictor),
}

fn persistable_name(kernel: &KernelSpec) -> Result<String> {
    kernel.name().map(str::to_owned).ok_or_else(|| {
        Error::Config(
            "this kernel composition has no registered name (explicit basis functions \
             are closures) and cannot be persisted"
            .into(),
        )
    })
}

impl SavedModel {
    pub fn from_structured(pred: &FittedPredictor, fit_seconds: f64) -> Result<Self> {
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            mode: PredictorMode::Structured.as_str().to_owned(),
            dims: pred.dims,
            kernel: persistable_name(&pred.kernel)?,
            sigma: pred.kernel.sigma(),
            gamma: pred.gamma,
            n_c: pred.n_cols(),
            fit_seconds,
            structured: Some(StructuredPayload {
                x_cols: pred.x_cols.clone(),
                w_l: pred.w_windows.clone(),
                y_l: pred.y_l.clone(),
                spd: pred.spd.clone(),
            }),
            unstructured: None,
        })
    }

    pub fn from_unstructured(pred: &UnstructuredPredictor, fit_seconds: f64) -> Result<Self> {
        let mode = match pred.variant {
            UnstructuredVariant::Primal => PredictorMode::UnstructuredPrimal,
            UnstructuredVariant::Velocity => PredictorMode::UnstructuredVelocity,
        };
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            mode: mode.as_str().to_owned(),
            dims: pred.dims,
            kernel: persistable_name(&pred.kernel)?,
            sigma: pred.kernel.sigma(),
            gamma: pred.gamma,
            n_c: pred.z.ncols(),
            fit_seconds,
            structured: None,
            unstructured: Some(UnstructuredPayload {
                z: pred.z.clone(),
                targets: pred.targets.clone(),
                spd: pred.spd.clone(),
            }),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer(BufWriter::new(file), self)
            .map_err(|e| Error::Data {
                path: path.display().to_string(),
                line: 0,
                message: format!("cannot serialize model: {e}"),
            })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let model: Self = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Data {
            path: path.display().to_string(),
            line: 0,
            message: format!("cannot parse model: {e}"),
        })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} is not supported (expected {})",
                model.format_version, MODEL_FORMAT_VERSION
            )));
        }
        Ok(model)
    }

    pub fn mode(&self) -> Result<PredictorMode> {
        PredictorMode::parse(&self.mode)
    }

    fn kernel_spec(&self) -> Result<KernelSpec> {
        KernelSpec::from_name(&self.kernel, self.sigma)
    }

    /// Rebuild the predictor this model was saved from. The dual
    /// coefficients are recomputed from the stored targets and
    /// factorization, reproducing the original fit bit for bit.
    pub fn load_predictor(&self) -> Result<LoadedPredictor> {
        let kernel = self.kernel_spec()?;
        match self.mode()? {
            PredictorMode::Structured => {
                let payload = self.structured.as_ref().ok_or_else(|| {
                    Error::Config("structured model is missing its payload".into())
                })?;
                if payload.x_cols.ncols() != self.n_c
                    || payload.y_l.ncols() != self.n_c
                    || payload.spd.dim() != self.n_c
                {
                    return Err(Error::Config(
                        "structured payload columns disagree with the recorded count".into(),
                    ));
                }
                let a_dual = payload.spd.solve_mat(&payload.y_l.transpose())?.transpose();
                Ok(LoadedPredictor::Structured(FittedPredictor {
                    dims: self.dims,
                    kernel,
                    gamma: self.gamma,
                    x_cols: payload.x_cols.clone(),
                    w_windows: payload.w_l.clone(),
                    y_l: payload.y_l.clone(),
                    spd: payload.spd.clone(),
                    a_dual,
                }))
            }
            mode => {
                let payload = self.unstructured.as_ref().ok_or_else(|| {
                    Error::Config("unstructured model is missing its payload".into())
                })?;
                if payload.z.ncols() != self.n_c
                    || payload.targets.ncols() != self.n_c
                    || payload.spd.dim() != self.n_c
                {
                    return Err(Error::Config(
                        "unstructured payload columns disagree with the recorded count".into(),
                    ));
                }
                let variant = match mode {
                    PredictorMode::UnstructuredPrimal => UnstructuredVariant::Primal,
                    PredictorMode::UnstructuredVelocity => UnstructuredVariant::Velocity,
                    PredictorMode::Structured => unreachable!("handled above"),
                };
                let a_dual = payload
                    .spd
                    .solve_mat(&payload.targets.transpose())?
                    .transpose();
                Ok(LoadedPredictor::Unstructured(UnstructuredPredictor {
                    variant,
                    dims: self.dims,
                    kernel,
                    gamma: self.gamma,
                    z: payload.z.clone(),
                    targets: payload.targets.clone(),
                    spd: payload.spd.clone(),
                    a_dual,
                }))
            }
        }
    }
}
