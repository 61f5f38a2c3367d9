//! Linear dense auto-encoder and β-VAE.
//!
//! Both models map 30-sample beat epochs through a 20-unit intermediate layer
//! to a 10-dimensional embedding and back. Every layer is affine, so the
//! whole network is affine in its input and the decoder is affine in the
//! latent vector.
//!
//! The β-VAE encoder shares one trunk layer between the mean head and the
//! log-variance head. Sampling uses `z = mu + exp(logvar / 2) * noise` with the
//! noise kept alongside the latent so the backward pass can reuse the exact draw.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::nncore::{rmse_loss, DenseGrads, DenseLayer, Matrix, NnError};

/// Samples per epoch fed to the encoder.
pub const INPUT_DIM: usize = 30;
/// Width of the intermediate layer.
pub const HIDDEN_DIM: usize = 20;
/// Embedding size.
pub const LATENT_DIM: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VaeError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("beta must be nonnegative, got {0}")]
    NegativeBeta(f64),
}

pub type Result<T> = std::result::Result<T, VaeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Ae,
    BetaVae,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ae => "ae",
            ModelKind::BetaVae => "beta-vae",
        }
    }
}

/// Loss and its parts. `loss` is computed as `l_r + beta * d_kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub loss: f64,
    pub l_r: f64,
    pub d_kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub enc1: DenseLayer,
    pub enc2: DenseLayer,
    pub dec1: DenseLayer,
    pub dec2: DenseLayer,
}

/// Intermediate activations of an AE forward pass.
#[derive(Debug, Clone)]
pub struct AeForward {
    pub hidden: Matrix,
    pub code: Matrix,
    pub dec_hidden: Matrix,
    pub x_hat: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeGrads {
    pub enc1: DenseGrads,
    pub enc2: DenseGrads,
    pub dec1: DenseGrads,
    pub dec2: DenseGrads,
}

impl AeGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in [&self.enc1, &self.enc2, &self.dec1, &self.dec2] {
            g.write_flat(&mut out);
        }
        out
    }
}

impl AeModel {
    /// Glorot initialization, layers drawn in order enc1, enc2, dec1, dec2.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        AeModel {
            enc1: DenseLayer::glorot(INPUT_DIM, HIDDEN_DIM, rng),
            enc2: DenseLayer::glorot(HIDDEN_DIM, LATENT_DIM, rng),
            dec1: DenseLayer::glorot(LATENT_DIM, HIDDEN_DIM, rng),
            dec2: DenseLayer::glorot(HIDDEN_DIM, INPUT_DIM, rng),
        }
    }

    pub fn layers(&self) -> [&DenseLayer; 4] {
        [&self.enc1, &self.enc2, &self.dec1, &self.dec2]
    }

    fn layers_mut(&mut self) -> [&mut DenseLayer; 4] {
        [&mut self.enc1, &mut self.enc2, &mut self.dec1, &mut self.dec2]
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.enc2.forward(&self.enc1.forward(x)?)?)
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        Ok(self.dec2.forward(&self.dec1.forward(z)?)?)
    }

    pub fn forward(&self, x: &Matrix) -> Result<AeForward> {
        let hidden = self.enc1.forward(x)?;
        let code = self.enc2.forward(&hidden)?;
        let dec_hidden = self.dec1.forward(&code)?;
        let x_hat = self.dec2.forward(&dec_hidden)?;
        Ok(AeForward {
            hidden,
            code,
            dec_hidden,
            x_hat,
        })
    }

    /// RMSE reconstruction loss and gradients for every layer.
    pub fn backward(&self, x: &Matrix, fwd: &AeForward) -> Result<(LossParts, AeGrads)> {
        let (l_r, g_xhat) = rmse_loss(&fwd.x_hat, x)?;
        let (dec2, g_dh) = self.dec2.backward(&fwd.dec_hidden, &g_xhat)?;
        let (dec1, g_code) = self.dec1.backward(&fwd.code, &g_dh)?;
        let (enc2, g_h) = self.enc2.backward(&fwd.hidden, &g_code)?;
        let (enc1, _) = self.enc1.backward(x, &g_h)?;
        let parts = LossParts {
            loss: l_r,
            l_r,
            d_kl: 0.0,
        };
        Ok((
            parts,
            AeGrads {
                enc1,
                enc2,
                dec1,
                dec2,
            },
        ))
    }

    pub fn loss(&self, x: &Matrix) -> Result<f64> {
        Ok(rmse_loss(&self.forward(x)?.x_hat, x)?.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub enc1: DenseLayer,
    pub mu_head: DenseLayer,
    pub logvar_head: DenseLayer,
    pub dec1: DenseLayer,
    pub dec2: DenseLayer,
}

/// One reparameterized draw for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub mu: Matrix,
    pub logvar: Matrix,
    pub z: Matrix,
    pub noise: Matrix,
}

#[derive(Debug, Clone)]
pub struct VaeForward {
    pub hidden: Matrix,
    pub latent: LatentBatch,
    pub dec_hidden: Matrix,
    pub x_hat: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrads {
    pub enc1: DenseGrads,
    pub mu_head: DenseGrads,
    pub logvar_head: DenseGrads,
    pub dec1: DenseGrads,
    pub dec2: DenseGrads,
}

impl VaeGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in [
            &self.enc1,
            &self.mu_head,
            &self.logvar_head,
            &self.dec1,
            &self.dec2,
        ] {
            g.write_flat(&mut out);
        }
        out
    }
}

impl VaeModel {
    /// Glorot initialization, layers drawn in order enc1, mu, logvar, dec1, dec2.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        VaeModel {
            enc1: DenseLayer::glorot(INPUT_DIM, HIDDEN_DIM, rng),
            mu_head: DenseLayer::glorot(HIDDEN_DIM, LATENT_DIM, rng),
            logvar_head: DenseLayer::glorot(HIDDEN_DIM, LATENT_DIM, rng),
            dec1: DenseLayer::glorot(LATENT_DIM, HIDDEN_DIM, rng),
            dec2: DenseLayer::glorot(HIDDEN_DIM, INPUT_DIM, rng),
        }
    }

    pub fn layers(&self) -> [&DenseLayer; 5] {
        [
            &self.enc1,
            &self.mu_head,
            &self.logvar_head,
            &self.dec1,
            &self.dec2,
        ]
    }

    fn layers_mut(&mut self) -> [&mut DenseLayer; 5] {
        [
            &mut self.enc1,
            &mut self.mu_head,
            &mut self.logvar_head,
            &mut self.dec1,
            &mut self.dec2,
        ]
    }

    pub fn encode(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let h = self.enc1.forward(x)?;
        Ok((self.mu_head.forward(&h)?, self.logvar_head.forward(&h)?))
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        Ok(self.dec2.forward(&self.dec1.forward(z)?)?)
    }

    /// Forward pass with an explicit noise matrix (zeros for deterministic mode).
    pub fn forward_with_noise(&self, x: &Matrix, noise: Matrix) -> Result<VaeForward> {
        let hidden = self.enc1.forward(x)?;
        let mu = self.mu_head.forward(&hidden)?;
        let logvar = self.logvar_head.forward(&hidden)?;
        let latent = latent_from_noise(mu, logvar, noise)?;
        let dec_hidden = self.dec1.forward(&latent.z)?;
        let x_hat = self.dec2.forward(&dec_hidden)?;
        Ok(VaeForward {
            hidden,
            latent,
            dec_hidden,
            x_hat,
        })
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &Matrix, rng: &mut R) -> Result<VaeForward> {
        let noise = standard_normal(x.rows(), LATENT_DIM, rng);
        self.forward_with_noise(x, noise)
    }

    /// Loss parts and gradients for every layer, reusing the forward pass noise.
    pub fn backward(&self, x: &Matrix, fwd: &VaeForward, beta: f64) -> Result<(LossParts, VaeGrads)> {
        let LatentBatch {
            mu,
            logvar,
            noise,
            ..
        } = &fwd.latent;
        if noise.shape() != mu.shape() {
            return Err(NnError::Shape {
                op: "vae_backward",
                left: noise.shape(),
                right: mu.shape(),
            }
            .into());
        }
        let parts = vae_loss(x, &fwd.x_hat, mu, logvar, beta)?;
        let (_, g_xhat) = rmse_loss(&fwd.x_hat, x)?;
        let (dec2, g_dh) = self.dec2.backward(&fwd.dec_hidden, &g_xhat)?;
        let (dec1, g_z) = self.dec1.backward(&fwd.latent.z, &g_dh)?;

        let batch = x.rows() as f64;
        let mut g_mu = g_z.clone();
        let mut g_logvar = g_z;
        for i in 0..mu.as_slice().len() {
            let m = mu.as_slice()[i];
            let lv = logvar.as_slice()[i];
            let e = noise.as_slice()[i];
            g_mu.as_mut_slice()[i] += beta * m / batch;
            let through_sampler = g_logvar.as_slice()[i] * 0.5 * (0.5 * lv).exp() * e;
            g_logvar.as_mut_slice()[i] = through_sampler + beta * 0.5 * (lv.exp() - 1.0) / batch;
        }

        let (mu_head, g_h_mu) = self.mu_head.backward(&fwd.hidden, &g_mu)?;
        let (logvar_head, g_h_lv) = self.logvar_head.backward(&fwd.hidden, &g_logvar)?;
        let g_h = g_h_mu.add(&g_h_lv)?;
        let (enc1, _) = self.enc1.backward(x, &g_h)?;
        Ok((
            parts,
            VaeGrads {
                enc1,
                mu_head,
                logvar_head,
                dec1,
                dec2,
            },
        ))
    }

    /// Loss at a fixed noise draw.
    pub fn loss_with_noise(&self, x: &Matrix, noise: &Matrix, beta: f64) -> Result<LossParts> {
        let fwd = self.forward_with_noise(x, noise.clone())?;
        vae_loss(x, &fwd.x_hat, &fwd.latent.mu, &fwd.latent.logvar, beta)
    }
}

fn latent_from_noise(mu: Matrix, logvar: Matrix, noise: Matrix) -> Result<LatentBatch> {
    if mu.shape() != logvar.shape() || mu.shape() != noise.shape() {
        return Err(NnError::Shape {
            op: "reparameterize",
            left: mu.shape(),
            right: noise.shape(),
        }
        .into());
    }
    let z = Matrix::from_vec(
        mu.rows(),
        mu.cols(),
        mu.as_slice()
            .iter()
            .zip(logvar.as_slice())
            .zip(noise.as_slice())
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect(),
    )?;
    Ok(LatentBatch {
        mu,
        logvar,
        z,
        noise,
    })
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

/// Draws noise row-major from `rng` and forms `z = mu + exp(logvar/2) * noise`.
pub fn reparameterize<R: Rng + ?Sized>(
    mu: &Matrix,
    logvar: &Matrix,
    rng: &mut R,
) -> Result<LatentBatch> {
    let noise = standard_normal(mu.rows(), mu.cols(), rng);
    latent_from_noise(mu.clone(), logvar.clone(), noise)
}

/// KL divergence to N(0, 1), summed over dimensions and averaged over the batch.
pub fn kl_divergence(mu: &Matrix, logvar: &Matrix) -> Result<f64> {
    if mu.shape() != logvar.shape() {
        return Err(NnError::Shape {
            op: "kl_divergence",
            left: mu.shape(),
            right: logvar.shape(),
        }
        .into());
    }
    if mu.rows() == 0 {
        return Err(NnError::EmptyBatch.into());
    }
    let total: f64 = mu
        .as_slice()
        .iter()
        .zip(logvar.as_slice())
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - lv - 1.0))
        .sum();
    Ok(total / mu.rows() as f64)
}

/// `L_R + beta * D_KL`.
pub fn vae_loss(
    x: &Matrix,
    x_hat: &Matrix,
    mu: &Matrix,
    logvar: &Matrix,
    beta: f64,
) -> Result<LossParts> {
    if beta.is_nan() || beta < 0.0 {
        return Err(VaeError::NegativeBeta(beta));
    }
    let (l_r, _) = rmse_loss(x_hat, x)?;
    let d_kl = kl_divergence(mu, logvar)?;
    Ok(LossParts {
        loss: l_r + beta * d_kl,
        l_r,
        d_kl,
    })
}

/// Either trained model, behind one interface for training and analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Ae(AeModel),
    BetaVae(VaeModel),
}

impl Model {
    pub fn init<R: Rng + ?Sized>(kind: ModelKind, rng: &mut R) -> Self {
        match kind {
            ModelKind::Ae => Model::Ae(AeModel::init(rng)),
            ModelKind::BetaVae => Model::BetaVae(VaeModel::init(rng)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Ae(_) => ModelKind::Ae,
            Model::BetaVae(_) => ModelKind::BetaVae,
        }
    }

    pub fn layers(&self) -> Vec<&DenseLayer> {
        match self {
            Model::Ae(m) => m.layers().to_vec(),
            Model::BetaVae(m) => m.layers().to_vec(),
        }
    }

    /// `(out, in)` for every layer, in parameter order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers()
            .iter()
            .map(|l| (l.out_dim(), l.in_dim()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// All parameters, layer by layer, weights row-major then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            l.write_flat(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(NnError::Shape {
                op: "set_params",
                left: (self.param_count(), 1),
                right: (params.len(), 1),
            }
            .into());
        }
        let mut rest = params;
        match self {
            Model::Ae(m) => {
                for l in m.layers_mut() {
                    rest = l.read_flat(rest);
                }
            }
            Model::BetaVae(m) => {
                for l in m.layers_mut() {
                    rest = l.read_flat(rest);
                }
            }
        }
        Ok(())
    }

    /// Deterministic embedding: the code for the AE, `mu` for the β-VAE.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Model::Ae(m) => m.encode(x),
            Model::BetaVae(m) => Ok(m.encode(x)?.0),
        }
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        match self {
            Model::Ae(m) => m.decode(z),
            Model::BetaVae(m) => m.decode(z),
        }
    }

    /// Reconstruction with zero sampling noise.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.decode(&self.embed(x)?)
    }

    /// Loss parts with zero sampling noise. `beta` is ignored for the AE.
    pub fn evaluate(&self, x: &Matrix, beta: f64) -> Result<LossParts> {
        match self {
            Model::Ae(m) => {
                let l_r = m.loss(x)?;
                Ok(LossParts {
                    loss: l_r,
                    l_r,
                    d_kl: 0.0,
                })
            }
            Model::BetaVae(m) => {
                let noise = Matrix::zeros(x.rows(), LATENT_DIM);
                m.loss_with_noise(x, &noise, beta)
            }
        }
    }
}
