//! Interpretability tools over a trained model: embedding statistics,
//! significant-dimension detection, single-dimension sweeps, corner decoding
//! and per-class reconstruction error.
//!
//! Every operation runs in deterministic mode (no sampling noise).

use thiserror::Error;

use crate::dataset::{to_matrix, BeatEpoch, EPOCH_LEN};
use crate::nncore::{rmse_loss, Matrix};
use crate::vae::{Model, VaeError, LATENT_DIM};
use crate::wfdb::BeatLabel;

/// Default significance threshold on std(μ).
pub const DEFAULT_TAU: f64 = 0.2;
/// Latent coordinate used for the corners.
pub const CORNER_VALUE: f64 = 2.0;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dimension {0} out of range 0..{LATENT_DIM}")]
    Dimension(usize),
    #[error("corner dimensions must differ (got {0} twice)")]
    SameDimension(usize),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Model(#[from] VaeError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStats {
    pub mean_mu: Vec<f64>,
    /// Unbiased (N−1) standard deviation of μ per dimension.
    pub std_mu: Vec<f64>,
    /// Mean of exp(logvar/2); `None` for the AE.
    pub mean_sigma: Option<Vec<f64>>,
    pub count: usize,
}

impl EmbeddingStats {
    /// Dimensions ordered by descending std.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.std_mu.len()).collect();
        idx.sort_by(|&a, &b| self.std_mu[b].total_cmp(&self.std_mu[a]).then(a.cmp(&b)));
        idx
    }

    /// Ratio of the k-th to the (k+1)-th largest std (k is 1-based).
    pub fn gap_ratio(&self, k: usize) -> f64 {
        let r = self.ranked();
        if k == 0 || k >= r.len() {
            return f64::NAN;
        }
        self.std_mu[r[k - 1]] / self.std_mu[r[k]]
    }
}

fn column_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mean: Vec<f64> = m.col_sums().into_iter().map(|s| s / n).collect();
    let mut ss = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for ((acc, v), mu) in ss.iter_mut().zip(row).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std = if m.rows() < 2 {
        vec![0.0; m.cols()]
    } else {
        ss.into_iter().map(|s| (s / (n - 1.0)).sqrt()).collect()
    };
    (mean, std)
}

/// Deterministic embedding of every epoch and its per-dimension statistics.
pub fn embed_dataset(model: &Model, epochs: &[BeatEpoch]) -> Result<(Matrix, EmbeddingStats)> {
    if epochs.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    let x = to_matrix(epochs);
    let (mu, mean_sigma) = match model {
        Model::Ae(ae) => (ae.encode(&x)?, None),
        Model::BetaVae(vae) => {
            let (mu, logvar) = vae.encode(&x)?;
            let sigma = logvar.map(|lv| (0.5 * lv).exp());
            let n = sigma.rows() as f64;
            (mu, Some(sigma.col_sums().into_iter().map(|s| s / n).collect()))
        }
    };
    let (mean_mu, std_mu) = column_stats(&mu);
    let stats = EmbeddingStats {
        mean_mu,
        std_mu,
        mean_sigma,
        count: epochs.len(),
    };
    Ok((mu, stats))
}

/// Dimensions whose std(μ) exceeds `tau`, largest std first.
pub fn significant_dims(stats: &EmbeddingStats, tau: f64) -> Vec<usize> {
    stats
        .ranked()
        .into_iter()
        .filter(|&d| stats.std_mu[d] > tau)
        .collect()
}

/// Evenly spaced grid including both ends.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Seven points over [-3, 3].
pub fn default_grid() -> Vec<f64> {
    linear_grid(-3.0, 3.0, 7)
}

/// Where the non-swept coordinates of a sweep come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepBase {
    /// The deterministic encoding of the chosen epoch.
    Encoded,
    /// The latent origin (all zeros).
    Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub base_epoch: BeatEpoch,
    pub base_latent: Vec<f64>,
    pub dimension: usize,
    pub grid: Vec<f64>,
    pub decoded: Vec<[f64; EPOCH_LEN]>,
}

fn rows_to_epochs(m: &Matrix) -> Vec<[f64; EPOCH_LEN]> {
    m.iter_rows()
        .map(|r| {
            let mut out = [0.0; EPOCH_LEN];
            out.copy_from_slice(r);
            out
        })
        .collect()
}

/// Decodes the base latent with `dim` replaced by each grid value in turn.
pub fn perturb_sweep(
    model: &Model,
    epoch: &BeatEpoch,
    dim: usize,
    grid: &[f64],
    base: SweepBase,
) -> Result<SweepResult> {
    if dim >= LATENT_DIM {
        return Err(AnalysisError::Dimension(dim));
    }
    if grid.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    let base_latent = match base {
        SweepBase::Encoded => model
            .embed(&to_matrix(std::slice::from_ref(epoch)))?
            .row(0)
            .to_vec(),
        SweepBase::Origin => vec![0.0; LATENT_DIM],
    };
    let mut z = Matrix::zeros(grid.len(), LATENT_DIM);
    for (i, &v) in grid.iter().enumerate() {
        z.row_mut(i).copy_from_slice(&base_latent);
        z.set(i, dim, v);
    }
    let decoded = rows_to_epochs(&model.decode(&z)?);
    Ok(SweepResult {
        base_epoch: epoch.clone(),
        base_latent,
        dimension: dim,
        grid: grid.to_vec(),
        decoded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CornerResult {
    pub dims: (usize, usize),
    pub corners: [[f64; LATENT_DIM]; 4],
    pub decoded: [[f64; EPOCH_LEN]; 4],
}

/// Corner coordinates for the two swept dims, in panel order.
pub const CORNER_SIGNS: [(f64, f64); 4] = [(-1.0, 1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];

/// Decodes the four corners (±2, ±2) of the plane spanned by `dims`, all other
/// coordinates zero.
pub fn corner_decode(model: &Model, dims: (usize, usize)) -> Result<CornerResult> {
    let (a, b) = dims;
    for d in [a, b] {
        if d >= LATENT_DIM {
            return Err(AnalysisError::Dimension(d));
        }
    }
    if a == b {
        return Err(AnalysisError::SameDimension(a));
    }
    let mut corners = [[0.0; LATENT_DIM]; 4];
    for (c, (sa, sb)) in corners.iter_mut().zip(CORNER_SIGNS) {
        c[a] = sa * CORNER_VALUE;
        c[b] = sb * CORNER_VALUE;
    }
    let z = Matrix::from_rows(&corners).expect("fixed shape");
    let out = rows_to_epochs(&model.decode(&z)?);
    let mut decoded = [[0.0; EPOCH_LEN]; 4];
    decoded.copy_from_slice(&out);
    Ok(CornerResult {
        dims,
        corners,
        decoded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub split: String,
    /// `None` for the all-classes row.
    pub class: Option<BeatLabel>,
    pub count: usize,
    pub l_r: f64,
}

fn rmse_of(model: &Model, epochs: &[BeatEpoch]) -> Result<f64> {
    let x = to_matrix(epochs);
    let x_hat = model.reconstruct(&x)?;
    Ok(rmse_loss(&x_hat, &x).map_err(VaeError::from)?.0)
}

/// Reconstruction RMSE per split, overall and per class. Classes absent
/// from a split are left out.
pub fn reconstruction_report(model: &Model, splits: &[(&str, &[BeatEpoch])]) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for &(name, epochs) in splits {
        if epochs.is_empty() {
            return Err(AnalysisError::EmptyDataset);
        }
        rows.push(ReportRow {
            split: name.to_string(),
            class: None,
            count: epochs.len(),
            l_r: rmse_of(model, epochs)?,
        });
        for label in [BeatLabel::Normal, BeatLabel::Paced] {
            let subset: Vec<BeatEpoch> = epochs.iter().filter(|e| e.label == label).cloned().collect();
            if subset.is_empty() {
                continue;
            }
            rows.push(ReportRow {
                split: name.to_string(),
                class: Some(label),
                count: subset.len(),
                l_r: rmse_of(model, &subset)?,
            });
        }
    }
    Ok(rows)
}

fn row_csv(prefix: &str, samples: &[f64]) -> String {
    let mut s = prefix.to_string();
    for v in samples {
        s.push(',');
        s.push_str(&crate::dataset::format_sample(*v));
    }
    s.push('\n');
    s
}

fn sample_header(prefix: &str) -> String {
    let mut s = prefix.to_string();
    for i in 0..EPOCH_LEN {
        s.push_str(&format!(",s{i}"));
    }
    s.push('\n');
    s
}

impl SweepResult {
    /// One row per grid point: `dim,value,s0..s29`.
    pub fn to_csv(&self) -> String {
        let mut s = sample_header("dim,value");
        for (v, d) in self.grid.iter().zip(&self.decoded) {
            s.push_str(&row_csv(&format!("{},{}", self.dimension, crate::dataset::format_sample(*v)), d));
        }
        s
    }
}

impl CornerResult {
    /// One row per corner: `dim_a,dim_b,value_a,value_b,s0..s29`.
    pub fn to_csv(&self) -> String {
        let (a, b) = self.dims;
        let mut s = sample_header("dim_a,dim_b,value_a,value_b");
        for (c, d) in self.corners.iter().zip(&self.decoded) {
            s.push_str(&row_csv(&format!("{a},{b},{},{}", c[a], c[b]), d));
        }
        s
    }
}

impl EmbeddingStats {
    /// `dim,mean_mu,std_mu,mean_sigma,significant`.
    pub fn to_csv(&self, tau: Option<f64>) -> String {
        let sig = tau.map(|t| significant_dims(self, t));
        let mut s = String::from("dim,mean_mu,std_mu,mean_sigma,significant\n");
        for d in 0..self.std_mu.len() {
            let sigma = self
                .mean_sigma
                .as_ref()
                .map(|m| crate::dataset::format_sample(m[d]))
                .unwrap_or_default();
            let flag = match &sig {
                Some(list) => (if list.contains(&d) { "yes" } else { "no" }).to_string(),
                None => "n/a".to_string(),
            };
            s.push_str(&format!(
                "{d},{},{},{sigma},{flag}\n",
                crate::dataset::format_sample(self.mean_mu[d]),
                crate::dataset::format_sample(self.std_mu[d]),
            ));
        }
        s
    }
}

/// `split,class,count,l_r`; class `all` for the overall row.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("split,class,count,l_r\n");
    for r in rows {
        let class = r.class.map_or("all".to_string(), |c| c.tag().to_string());
        s.push_str(&format!("{},{},{},{}\n", r.split, class, r.count, crate::dataset::format_sample(r.l_r)));
    }
    s
}
