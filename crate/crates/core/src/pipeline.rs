//! A trained model together with its optional kernel feature map, and its
//! on-disk document format.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, SampleMatrix};
use crate::error::{Error, Result};
use crate::inference::{self, Decision, RankResult};
use crate::kernel::{fit_kernel_map, KernelConfig, KernelMap};
use crate::numkit::SymMatrix;
use crate::pcsda::{self, FitConfig, ModelParts, PcsdaModel};

const FORMAT: &str = "pcsda-model";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub fit: FitConfig,
    pub kernel: Option<KernelConfig>,
}

/// Maps a training set to the space the linear model is fitted in: kernel
/// features when a kernel is configured, the raw features otherwise.
pub fn featurize_training(
    train: &LabeledDataset,
    kernel: Option<&KernelConfig>,
) -> Result<(Option<KernelMap>, LabeledDataset)> {
    match kernel {
        None => Ok((None, train.clone())),
        Some(cfg) => {
            let sigma = cfg.resolve_sigma(&train.positives())?;
            let map = fit_kernel_map(train.data(), sigma, cfg.cutoff)?;
            let features = train.with_data(map.training_features())?;
            Ok((Some(map), features))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    kernel: Option<KernelMap>,
    model: PcsdaModel,
}

impl Pipeline {
    pub fn new(kernel: Option<KernelMap>, model: PcsdaModel) -> Result<Self> {
        if let Some(k) = &kernel {
            if k.dim() != model.input_dim() {
                return Err(Error::Model(format!(
                    "kernel map has {} features but the model expects {}",
                    k.dim(),
                    model.input_dim()
                )));
            }
        }
        Ok(Pipeline { kernel, model })
    }

    pub fn train(train: &LabeledDataset, cfg: &TrainConfig) -> Result<Self> {
        let (kernel, features) = featurize_training(train, cfg.kernel.as_ref())?;
        let model = pcsda::fit(&features, &cfg.fit)?;
        Pipeline::new(kernel, model)
    }

    pub fn model(&self) -> &PcsdaModel {
        &self.model
    }

    pub fn kernel(&self) -> Option<&KernelMap> {
        self.kernel.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        match &self.kernel {
            Some(k) => k.input_dim(),
            None => self.model.input_dim(),
        }
    }

    pub fn features(&self, x: &SampleMatrix) -> Result<SampleMatrix> {
        match &self.kernel {
            Some(k) => k.map_points(x),
            None => Ok(x.clone()),
        }
    }

    pub fn project(&self, x: &SampleMatrix) -> Result<SampleMatrix> {
        self.model.project(&self.features(x)?)
    }

    pub fn classify(&self, x: &SampleMatrix, equiprobable: bool) -> Result<Vec<Decision>> {
        inference::classify(&self.model, &self.features(x)?, equiprobable)
    }

    pub fn rank(&self, x: &SampleMatrix) -> Result<RankResult> {
        inference::rank(&self.model, &self.features(x)?)
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc::from_pipeline(self);
        let mut s = serde_json::to_string_pretty(&doc).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| Error::Model(format!("cannot parse model: {e}")))?;
        doc.into_pipeline()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

impl MatrixDoc {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn to_matrix(&self, what: &str) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Model(format!(
                "{what}: {} values for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelDoc {
    kind: String,
    sigma: f64,
    cutoff: f64,
    train_points: MatrixDoc,
    eigvecs: MatrixDoc,
    scale: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    input_dim: usize,
    dim: usize,
    k: usize,
    ridge: f64,
    prior_p: f64,
    prior_n: f64,
    mean: Vec<f64>,
    projection: MatrixDoc,
    eigenvalues: Vec<f64>,
    phi_p: MatrixDoc,
    phi_o: MatrixDoc,
    kernel: Option<KernelDoc>,
}

impl ModelDoc {
    fn from_pipeline(p: &Pipeline) -> Self {
        let m = &p.model;
        ModelDoc {
            format: FORMAT.into(),
            version: VERSION,
            input_dim: p.input_dim(),
            dim: m.dim(),
            k: m.k(),
            ridge: m.ridge(),
            prior_p: m.prior_p(),
            prior_n: m.prior_n(),
            mean: m.mean().as_slice().to_vec(),
            projection: MatrixDoc::from_matrix(m.projection()),
            eigenvalues: m.eigenvalues().to_vec(),
            phi_p: MatrixDoc::from_matrix(m.phi_p().as_matrix()),
            phi_o: MatrixDoc::from_matrix(m.phi_o().as_matrix()),
            kernel: p.kernel.as_ref().map(|k| KernelDoc {
                kind: "rbf".into(),
                sigma: k.sigma(),
                cutoff: k.cutoff(),
                train_points: MatrixDoc::from_matrix(k.train_points().as_matrix()),
                eigvecs: MatrixDoc::from_matrix(k.eigvecs()),
                scale: k.scale().as_slice().to_vec(),
            }),
        }
    }

    fn into_pipeline(self) -> Result<Pipeline> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Model(format!(
                "unsupported document {} v{}",
                self.format, self.version
            )));
        }
        let projection = self.projection.to_matrix("projection")?;
        if projection.ncols() != self.dim {
            return Err(Error::Model("dim does not match the projection".into()));
        }
        let model = PcsdaModel::from_parts(ModelParts {
            projection,
            eigenvalues: self.eigenvalues,
            phi_p: SymMatrix::new(self.phi_p.to_matrix("phi_p")?)?,
            phi_o: SymMatrix::new(self.phi_o.to_matrix("phi_o")?)?,
            mean: DVector::from_vec(self.mean),
            prior_p: self.prior_p,
            k: self.k,
            ridge: self.ridge,
        })?;
        let kernel = match self.kernel {
            None => None,
            Some(k) => {
                if k.kind != "rbf" {
                    return Err(Error::Model(format!("unknown kernel kind {:?}", k.kind)));
                }
                Some(KernelMap::from_parts(
                    SampleMatrix::new(k.train_points.to_matrix("train_points")?)?,
                    k.sigma,
                    k.eigvecs.to_matrix("eigvecs")?,
                    DVector::from_vec(k.scale),
                    k.cutoff,
                )?)
            }
        };
        let p = Pipeline::new(kernel, model)?;
        if p.input_dim() != self.input_dim {
            return Err(Error::Model("input_dim does not match the stored matrices".into()));
        }
        Ok(p)
    }
}
