//! Synthetic WFDB records for exercising the full ingest path without the
//! MIT-BIH files. Records are written as `.hea` / format-212 `.dat` / `.atr`
//! triples at 360 Hz with two channels, like the real database.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{TEST_PATIENTS, TRAIN_PATIENTS};
use crate::wfdb::{encode_212, encode_annotations, Annotation, BeatLabel};

pub const FIXTURE_RATE_HZ: f64 = 360.0;
const GAIN: f64 = 200.0;
const BASELINE: i32 = 1024;

/// Which beat class dominates a synthetic record.
pub fn dominant_class(patient: &str) -> BeatLabel {
    match patient {
        "102" | "104" | "107" | "217" => BeatLabel::Paced,
        _ => BeatLabel::Normal,
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticRecord {
    pub name: String,
    pub header: String,
    pub dat: Vec<u8>,
    pub atr: Vec<u8>,
    /// ADC values, channel-interleaved as stored.
    pub adu: Vec<i16>,
    pub annotations: Vec<Annotation>,
}

fn gauss(t: f64, centre: f64, width: f64) -> f64 {
    let u = (t - centre) / width;
    (-0.5 * u * u).exp()
}

/// Millivolt waveform of one beat at time offset `t` seconds from the R peak.
fn beat_shape(class: BeatLabel, t: f64, amp: f64, width: f64) -> f64 {
    match class {
        BeatLabel::Normal => {
            0.12 * gauss(t, -0.20, 0.025)
                - 0.10 * gauss(t, -0.025, 0.008 * width)
                + amp * gauss(t, 0.0, 0.011 * width)
                - 0.20 * gauss(t, 0.03, 0.010 * width)
                + 0.30 * gauss(t, 0.26, 0.045)
        }
        BeatLabel::Paced => {
            let spike = if (-0.045..-0.040).contains(&t) { 1.5 } else { 0.0 };
            spike - amp * 0.9 * gauss(t, -0.01, 0.035 * width)
                + amp * 0.7 * gauss(t, 0.07, 0.045 * width)
                - 0.25 * gauss(t, 0.30, 0.05)
        }
    }
}

/// Builds a two-channel record of `seconds` length for `patient`.
///
/// Beats follow a jittered RR interval; every beat carries a random amplitude
/// and width factor. A rhythm annotation opens the record and a few beats of
/// an excluded class (PVC or paced fusion) are mixed in.
pub fn synthesize_record(patient: &str, seconds: f64, seed: u64) -> SyntheticRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ patient.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64)));
    let n = (seconds * FIXTURE_RATE_HZ) as usize;
    let class = dominant_class(patient);
    let mut signal = vec![0.0f64; n];

    let mut annotations = vec![{
        let mut a = Annotation::new(0, 28);
        a.aux = Some(if class == BeatLabel::Paced { "(P" } else { "(N" }.to_string());
        a
    }];
    let mut t_beat = 0.6;
    let mut k = 0usize;
    while t_beat < seconds - 0.6 {
        let peak = (t_beat * FIXTURE_RATE_HZ).round() as usize;
        let (beat_class, code) = if k % 37 == 36 {
            // Excluded beat types still appear in the stream.
            match class {
                BeatLabel::Normal => (BeatLabel::Paced, 5),
                BeatLabel::Paced => (BeatLabel::Normal, 38),
            }
        } else {
            (class, class.code())
        };
        let amp = 1.0 + 0.15 * rng.sample::<f64, _>(StandardNormal);
        let width = 1.0 + 0.10 * rng.sample::<f64, _>(StandardNormal);
        let lo = peak.saturating_sub(180);
        let hi = (peak + 180).min(n);
        for (i, v) in signal.iter_mut().enumerate().take(hi).skip(lo) {
            let t = (i as f64 - peak as f64) / FIXTURE_RATE_HZ;
            *v += beat_shape(beat_class, t, amp, width.max(0.5));
        }
        annotations.push(Annotation::new(peak as u64, code));
        t_beat += 0.8 + 0.05 * rng.sample::<f64, _>(StandardNormal);
        k += 1;
    }

    let wander_phase = rng.random_range(0.0..2.0 * PI);
    let mut adu = Vec::with_capacity(2 * n);
    for (i, &v) in signal.iter().enumerate() {
        let t = i as f64 / FIXTURE_RATE_HZ;
        let wander = 0.15 * (2.0 * PI * 0.3 * t + wander_phase).sin();
        let noise: f64 = 0.01 * rng.sample::<f64, _>(StandardNormal);
        let ch0 = v + wander + noise;
        let ch1 = 0.5 * v - 0.3 * wander;
        for mv in [ch0, ch1] {
            let a = (mv * GAIN).round() as i32 + BASELINE;
            adu.push(a.clamp(-2048, 2047) as i16);
        }
    }
    let dat = encode_212(&adu);
    let atr = encode_annotations(&annotations);
    let checksum = |ch: usize| -> i16 {
        adu.iter()
            .skip(ch)
            .step_by(2)
            .fold(0i16, |acc, &v| acc.wrapping_add(v))
    };
    let first = |ch: usize| adu.get(ch).copied().unwrap_or(0);
    let header = format!(
        "{patient} 2 360 {n}\n\
         {patient}.dat 212 200 11 1024 {} {} 0 MLII\n\
         {patient}.dat 212 200 11 1024 {} {} 0 V1\n\
         # synthetic fixture\n",
        first(0),
        checksum(0),
        first(1),
        checksum(1),
    );
    SyntheticRecord {
        name: patient.to_string(),
        header,
        dat,
        atr,
        adu,
        annotations,
    }
}

impl SyntheticRecord {
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.hea", self.name)), &self.header)?;
        fs::write(dir.join(format!("{}.dat", self.name)), &self.dat)?;
        fs::write(dir.join(format!("{}.atr", self.name)), &self.atr)?;
        Ok(())
    }
}

/// Writes synthetic stand-ins for all eight split patients into `dir`.
pub fn write_synthetic_database(dir: &Path, seconds: f64, seed: u64) -> io::Result<Vec<SyntheticRecord>> {
    let mut out = Vec::new();
    for p in TRAIN_PATIENTS.iter().chain(&TEST_PATIENTS) {
        let r = synthesize_record(p, seconds, seed);
        r.write_to(dir)?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfdb;

    #[test]
    fn fixture_parses_back() {
        let r = synthesize_record("107", 30.0, 1);
        let dir = tempfile::tempdir().unwrap();
        r.write_to(dir.path()).unwrap();
        let rec = wfdb::load_record(dir.path(), "107").unwrap();
        assert_eq!(rec.header.sample_count, 30 * 360);
        assert_eq!(rec.channels.len(), 2);
        assert_eq!(rec.annotations, r.annotations);
        let beats = wfdb::select_beats(&rec.annotations);
        assert!(beats.iter().all(|(_, l)| *l == BeatLabel::Paced));
        assert!(!beats.is_empty());
    }
}
