//! Butterworth IIR design by bilinear transform, second-order-section
//! filtering and integer-factor decimation.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

/// Output rate of the epoch pipeline.
pub const TARGET_RATE_HZ: f64 = 60.0;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("filter order must be at least 1")]
    Order,
    #[error("band edges must satisfy 0 < {low} < {high} < {nyquist} Hz")]
    BandEdges { low: f64, high: f64, nyquist: f64 },
    #[error("non-finite input sample at index {0}")]
    NonFinite(usize),
    #[error("sampling rate {0} Hz is not an integer multiple of the target rate")]
    Decimation(f64),
}

/// One biquad `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadSection {
    pub const IDENTITY: BiquadSection = BiquadSection {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        let a1 = Complex64::new(self.a1, 0.0);
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    fn response(&self, zinv: Complex64) -> Complex64 {
        let zinv2 = zinv * zinv;
        (self.b0 + zinv * self.b1 + zinv2 * self.b2) / (1.0 + zinv * self.a1 + zinv2 * self.a2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosCascade {
    pub sections: Vec<BiquadSection>,
    pub overall_gain: f64,
}

impl SosCascade {
    pub fn identity() -> Self {
        SosCascade {
            sections: vec![BiquadSection::IDENTITY],
            overall_gain: 1.0,
        }
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(BiquadSection::is_stable)
    }
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

/// Left-half-plane poles of the unit-cutoff analog Butterworth prototype.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (1..=order)
        .map(|k| {
            let theta = PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let fs2 = 2.0 * fs;
    (fs2 + s) / (fs2 - s)
}

/// Groups digital poles into conjugate pairs (real poles paired among
/// themselves) and builds sections sharing the numerator `numerator`.
fn pair_sections(poles: &[Complex64], numerator: [f64; 3]) -> Vec<BiquadSection> {
    let tol = 1e-10;
    let mut pairs: Vec<(Complex64, Complex64)> = poles
        .iter()
        .filter(|p| p.im > tol)
        .map(|&p| (p, p.conj()))
        .collect();
    let mut reals: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= tol)
        .map(|p| p.re)
        .collect();
    reals.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    for chunk in reals.chunks(2) {
        let second = chunk.get(1).copied().unwrap_or(0.0);
        pairs.push((Complex64::new(chunk[0], 0.0), Complex64::new(second, 0.0)));
    }
    pairs.sort_by(|x, y| {
        let mx = x.0.norm().max(x.1.norm());
        let my = y.0.norm().max(y.1.norm());
        mx.total_cmp(&my)
    });
    pairs
        .into_iter()
        .map(|(p, q)| BiquadSection {
            b0: numerator[0],
            b1: numerator[1],
            b2: numerator[2],
            a1: -(p + q).re,
            a2: (p * q).re,
        })
        .collect()
}

/// Designs a digital Butterworth bandpass of the given prototype order.
///
/// The analog prototype is shifted to the band with `s -> (s^2 + w0^2) / (B s)`,
/// where both edges are prewarped, then mapped with the bilinear transform.
/// The result has `order` sections, each with a zero at `z = 1` and `z = -1`,
/// and magnitude `1/sqrt(2)` exactly at `f_low` and `f_high`.
pub fn design_butter_bandpass(
    order: usize,
    f_low: f64,
    f_high: f64,
    fs: f64,
) -> Result<SosCascade, DspError> {
    if order < 1 {
        return Err(DspError::Order);
    }
    let nyquist = fs / 2.0;
    if !(f_low > 0.0 && f_low < f_high && f_high < nyquist) {
        return Err(DspError::BandEdges {
            low: f_low,
            high: f_high,
            nyquist,
        });
    }
    let w1 = prewarp(f_low, fs);
    let w2 = prewarp(f_high, fs);
    let bw = w2 - w1;
    let w0_sq = w1 * w2;

    let mut analog = Vec::with_capacity(2 * order);
    for p in prototype_poles(order) {
        let pb = p * bw;
        let root = (pb * pb - 4.0 * w0_sq).sqrt();
        analog.push((pb + root) / 2.0);
        analog.push((pb - root) / 2.0);
    }

    // Gain of the bilinear map: k_a * prod(2fs - zeros) / prod(2fs - poles),
    // with k_a = B^n and n analog zeros at the origin.
    let fs2 = 2.0 * fs;
    let denom = analog
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &s| acc * (fs2 - s));
    let gain = ((bw * fs2).powi(order as i32) / denom).re;

    let digital: Vec<Complex64> = analog.iter().map(|&s| bilinear(s, fs)).collect();
    Ok(SosCascade {
        sections: pair_sections(&digital, [1.0, 0.0, -1.0]),
        overall_gain: gain,
    })
}

/// Designs a digital Butterworth lowpass (used for the optional anti-alias stage).
pub fn design_butter_lowpass(order: usize, f_cut: f64, fs: f64) -> Result<SosCascade, DspError> {
    if order < 1 {
        return Err(DspError::Order);
    }
    let nyquist = fs / 2.0;
    if !(f_cut > 0.0 && f_cut < nyquist) {
        return Err(DspError::BandEdges {
            low: 0.0,
            high: f_cut,
            nyquist,
        });
    }
    let wc = prewarp(f_cut, fs);
    let analog: Vec<Complex64> = prototype_poles(order).into_iter().map(|p| p * wc).collect();
    let fs2 = 2.0 * fs;
    let denom = analog
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &s| acc * (fs2 - s));
    let gain = (wc.powi(order as i32) / denom).re;
    let digital: Vec<Complex64> = analog.iter().map(|&s| bilinear(s, fs)).collect();

    let mut sections = pair_sections(&digital, [1.0, 2.0, 1.0]);
    if order % 2 == 1 {
        // The lone real pole sits in a section with a single zero at z = -1.
        if let Some(s) = sections.iter_mut().find(|s| s.a2 == 0.0) {
            s.b1 = 1.0;
            s.b2 = 0.0;
        }
    }
    Ok(SosCascade {
        sections,
        overall_gain: gain,
    })
}

/// Complex gain of the cascade at frequency `f`.
pub fn frequency_response(cascade: &SosCascade, f: f64, fs: f64) -> Complex64 {
    let omega = 2.0 * PI * f / fs;
    let zinv = Complex64::from_polar(1.0, -omega);
    cascade
        .sections
        .iter()
        .fold(Complex64::new(cascade.overall_gain, 0.0), |acc, s| {
            acc * s.response(zinv)
        })
}

/// Causal filtering from zero initial state, transposed direct form II per section.
pub fn filter_forward(cascade: &SosCascade, x: &[f64]) -> Result<Vec<f64>, DspError> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(DspError::NonFinite(i));
    }
    let mut y: Vec<f64> = x.iter().map(|v| v * cascade.overall_gain).collect();
    for s in &cascade.sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in y.iter_mut() {
            let input = *v;
            let out = s.b0 * input + z1;
            z1 = s.b1 * input - s.a1 * out + z2;
            z2 = s.b2 * input - s.a2 * out;
            *v = out;
        }
    }
    Ok(y)
}

/// Integer decimation factor from `fs_in` down to 60 Hz.
pub fn decimation_factor(fs_in: f64) -> Result<usize, DspError> {
    let ratio = fs_in / TARGET_RATE_HZ;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-9 {
        return Err(DspError::Decimation(fs_in));
    }
    Ok(factor as usize)
}

/// Keeps every `fs_in/60`-th sample starting at index 0.
pub fn resample_to_60hz(x: &[f64], fs_in: f64) -> Result<Vec<f64>, DspError> {
    let factor = decimation_factor(fs_in)?;
    Ok(x.chunks_exact(factor).map(|c| c[0]).collect())
}
