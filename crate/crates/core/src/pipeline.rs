//! Training loop, evaluation, history export and the model artifact format.
//!
//! A single ChaCha8 stream seeded from [`TrainConfig::seed`] drives, in order:
//! weight initialization (layer by layer, weights row-major), then for each
//! training epoch a Fisher-Yates shuffle of the sample order followed by one
//! standard-normal draw per latent element of every β-VAE batch. The AE makes
//! no noise draws.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{to_matrix, BeatEpoch};
use crate::nncore::{AdaDeltaConfig, AdaDeltaState, Matrix, NnError};
use crate::vae::{LossParts, Model, ModelKind, VaeError, LATENT_DIM};

/// β values tried by the sweep command.
pub const BETA_SWEEP: [f64; 6] = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0];

const MAGIC: &[u8; 8] = b"BEATSPC\0";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] VaeError),
    #[error("artifact: {0}")]
    Artifact(String),
    #[error("artifact version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NnError> for PipelineError {
    fn from(e: NnError) -> Self {
        PipelineError::Model(e.into())
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    /// Weight of the KL term; unused by the AE.
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adadelta: AdaDeltaConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model_kind: ModelKind::BetaVae,
            beta: 0.5,
            epochs: 50,
            batch_size: 128,
            adadelta: AdaDeltaConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(PipelineError::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(PipelineError::Config("epochs and batch size must be positive".into()));
        }
        let AdaDeltaConfig { rho, epsilon } = self.adadelta;
        if rho.is_nan() || rho <= 0.0 || rho >= 1.0 || epsilon.is_nan() || epsilon <= 0.0 {
            return Err(PipelineError::Config(format!(
                "adadelta needs 0 < rho < 1 and epsilon > 0, got rho={rho} epsilon={epsilon}"
            )));
        }
        Ok(())
    }

    /// β as it enters the loss: zero for the AE.
    pub fn effective_beta(&self) -> f64 {
        match self.model_kind {
            ModelKind::Ae => 0.0,
            ModelKind::BetaVae => self.beta,
        }
    }
}

/// Deterministic (zero-noise) metrics after each training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub l_r: f64,
    pub d_kl: f64,
    pub test_loss: Option<f64>,
}

/// Loss of a single optimizer step, as seen by that step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub batch: usize,
    pub parts: LossParts,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
}

impl TrainHistory {
    /// `epoch,loss,l_r,d_kl,test_loss`; the `d_kl` column is omitted for the AE.
    pub fn to_csv(&self, kind: ModelKind) -> String {
        let with_kl = kind == ModelKind::BetaVae;
        let mut s = String::from(if with_kl {
            "epoch,loss,l_r,d_kl,test_loss\n"
        } else {
            "epoch,loss,l_r,test_loss\n"
        });
        for e in &self.epochs {
            let test = e.test_loss.map(|v| format!("{v:.12e}")).unwrap_or_default();
            if with_kl {
                s.push_str(&format!(
                    "{},{:.12e},{:.12e},{:.12e},{}\n",
                    e.epoch, e.loss, e.l_r, e.d_kl, test
                ));
            } else {
                s.push_str(&format!("{},{:.12e},{:.12e},{}\n", e.epoch, e.loss, e.l_r, test));
            }
        }
        s
    }
}

/// Metrics over a whole dataset with zero sampling noise.
pub fn evaluate(model: &Model, epochs: &[BeatEpoch], beta: f64) -> Result<LossParts> {
    if epochs.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let beta = if model.kind() == ModelKind::Ae { 0.0 } else { beta };
    Ok(model.evaluate(&to_matrix(epochs), beta)?)
}

/// One optimizer step on `x`. Returns the loss parts of the step.
fn step(
    model: &mut Model,
    x: &Matrix,
    beta: f64,
    optimizer: &mut AdaDeltaState,
    rng: &mut ChaCha8Rng,
) -> Result<Option<LossParts>> {
    let (parts, grads) = match model {
        Model::Ae(ae) => {
            let fwd = ae.forward(x)?;
            let (parts, g) = ae.backward(x, &fwd)?;
            (parts, g.flatten())
        }
        Model::BetaVae(vae) => {
            let fwd = vae.forward(x, rng)?;
            let (parts, g) = vae.backward(x, &fwd, beta)?;
            (parts, g.flatten())
        }
    };
    if !parts.loss.is_finite() {
        return Ok(None);
    }
    let mut params = model.params();
    optimizer.step(&mut params, &grads)?;
    model.set_params(&params)?;
    Ok(Some(parts))
}

/// Trains a fresh model. Fully determined by `(train, config)`.
pub fn train(
    train: &[BeatEpoch],
    test: &[BeatEpoch],
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::init(config.model_kind, &mut rng);
    let mut optimizer = AdaDeltaState::new(model.param_count(), config.adadelta);
    let beta = config.effective_beta();
    let all = to_matrix(train);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let x = all.select_rows(idx);
            match step(&mut model, &x, beta, &mut optimizer, &mut rng)? {
                Some(parts) => history.steps.push(StepRecord { epoch, batch, parts }),
                None => return Err(PipelineError::NonFiniteLoss { epoch, batch }),
            }
        }
        let parts = evaluate(&model, train, beta)?;
        if !parts.loss.is_finite() {
            return Err(PipelineError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        let test_loss = if test.is_empty() {
            None
        } else {
            Some(evaluate(&model, test, beta)?.loss)
        };
        history.epochs.push(EpochRecord {
            epoch,
            loss: parts.loss,
            l_r: parts.l_r,
            d_kl: parts.d_kl,
            test_loss,
        });
    }
    Ok((model, history))
}

/// A trained model plus everything needed to reproduce and audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub version: u32,
    pub model: Model,
    pub config: TrainConfig,
    pub dataset_hash: String,
}

impl ModelArtifact {
    pub fn new(model: Model, config: TrainConfig, dataset_hash: String) -> Self {
        ModelArtifact {
            version: ARTIFACT_VERSION,
            model,
            config,
            dataset_hash,
        }
    }

    /// Layout (little-endian): magic, version u32, kind u8, beta f64,
    /// epochs u32, batch u32, rho f64, epsilon f64, seed u64, hash length u32
    /// and bytes, layer count u32, `(out u32, in u32)` per layer,
    /// parameter count u64, parameters f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&self.version.to_le_bytes());
        b.push(match self.config.model_kind {
            ModelKind::Ae => 0,
            ModelKind::BetaVae => 1,
        });
        b.extend_from_slice(&self.config.beta.to_le_bytes());
        b.extend_from_slice(&(self.config.epochs as u32).to_le_bytes());
        b.extend_from_slice(&(self.config.batch_size as u32).to_le_bytes());
        b.extend_from_slice(&self.config.adadelta.rho.to_le_bytes());
        b.extend_from_slice(&self.config.adadelta.epsilon.to_le_bytes());
        b.extend_from_slice(&self.config.seed.to_le_bytes());
        b.extend_from_slice(&(self.dataset_hash.len() as u32).to_le_bytes());
        b.extend_from_slice(self.dataset_hash.as_bytes());
        let shapes = self.model.layer_shapes();
        b.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
        for (out, inp) in shapes {
            b.extend_from_slice(&(out as u32).to_le_bytes());
            b.extend_from_slice(&(inp as u32).to_le_bytes());
        }
        let params = self.model.params();
        b.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            b.extend_from_slice(&p.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(PipelineError::Artifact("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != ARTIFACT_VERSION {
            return Err(PipelineError::Version {
                found: version,
                expected: ARTIFACT_VERSION,
            });
        }
        let model_kind = match r.take(1)?[0] {
            0 => ModelKind::Ae,
            1 => ModelKind::BetaVae,
            k => return Err(PipelineError::Artifact(format!("unknown model kind {k}"))),
        };
        let beta = r.f64()?;
        let epochs = r.u32()? as usize;
        let batch_size = r.u32()? as usize;
        let rho = r.f64()?;
        let epsilon = r.f64()?;
        let seed = r.u64()?;
        let hash_len = r.u32()? as usize;
        let dataset_hash = String::from_utf8(r.take(hash_len)?.to_vec())
            .map_err(|_| PipelineError::Artifact("dataset hash is not utf-8".into()))?;
        let n_layers = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(n_layers.min(16));
        for _ in 0..n_layers {
            let out = r.u32()? as usize;
            let inp = r.u32()? as usize;
            shapes.push((out, inp));
        }
        let n_params = r.u64()? as usize;

        let mut scratch = ChaCha8Rng::seed_from_u64(0);
        let mut model = Model::init(model_kind, &mut scratch);
        if shapes != model.layer_shapes() {
            return Err(PipelineError::Artifact(format!(
                "layer shapes {shapes:?} do not match a {} model",
                model_kind.name()
            )));
        }
        let declared: usize = shapes.iter().map(|(o, i)| o * i + o).sum();
        if n_params != declared {
            return Err(PipelineError::Artifact(format!(
                "parameter count {n_params} disagrees with shapes ({declared})"
            )));
        }
        let raw = r.take(n_params.checked_mul(8).ok_or_else(|| {
            PipelineError::Artifact("parameter count overflows".into())
        })?)?;
        if r.pos != bytes.len() {
            return Err(PipelineError::Artifact(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let params: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        model.set_params(&params)?;
        Ok(ModelArtifact {
            version,
            model,
            config: TrainConfig {
                model_kind,
                beta,
                epochs,
                batch_size,
                adadelta: AdaDeltaConfig { rho, epsilon },
                seed,
            },
            dataset_hash,
        })
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| PipelineError::Artifact(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_model(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&artifact.to_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelArtifact> {
    ModelArtifact::from_bytes(&fs::read(path)?)
}

/// Compares the artifact's recorded dataset hash against `hash`.
pub fn provenance_warning(artifact: &ModelArtifact, hash: &str) -> Option<String> {
    (artifact.dataset_hash != hash).then(|| {
        format!(
            "warning: model was trained on dataset {} but the manifest reports {}",
            short(&artifact.dataset_hash),
            short(hash)
        )
    })
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

/// Zero latent batch, used for deterministic decoding.
pub fn zero_latent(rows: usize) -> Matrix {
    Matrix::zeros(rows, LATENT_DIM)
}
