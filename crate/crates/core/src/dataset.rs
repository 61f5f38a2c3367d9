//! Beat epochs: extraction from 60 Hz signals, min-max normalization,
//! center cropping, the fixed patient split and the epoch CSV format.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsp::{self, DspError, SosCascade};
use crate::nncore::Matrix;
use crate::wfdb::{self, BeatLabel, Record};

/// Samples per stored epoch (0.5 s at 60 Hz).
pub const EPOCH_LEN: usize = 30;
/// Samples per extracted window (1 s at 60 Hz).
pub const WINDOW_LEN: usize = 60;
const HALF_WINDOW: usize = WINDOW_LEN / 2;
const CROP_START: usize = (WINDOW_LEN - EPOCH_LEN) / 2;

/// Training patients: normal (101, 106) then paced (102, 104).
pub const TRAIN_PATIENTS: [&str; 4] = ["101", "106", "102", "104"];
/// Test patients: normal (103, 105) then paced (107, 217).
pub const TEST_PATIENTS: [&str; 4] = ["103", "105", "107", "217"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("window has zero peak-to-peak range")]
    ConstantWindow,
    #[error("expected a window of {expected} samples, got {got}")]
    WindowLength { expected: usize, got: usize },
    #[error("missing records: {}", .0.join(", "))]
    MissingRecords(Vec<String>),
    #[error("record {0} has no usable beats")]
    NoUsableBeats(String),
    #[error("record {record}: channel {channel} does not exist")]
    NoSuchChannel { record: String, channel: usize },
    #[error("record {record}: {source}")]
    Dsp {
        record: String,
        #[source]
        source: DspError,
    },
    #[error("epoch csv line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn of_patient(patient: &str) -> Option<Split> {
        if TRAIN_PATIENTS.contains(&patient) {
            Some(Split::Train)
        } else if TEST_PATIENTS.contains(&patient) {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// A normalized, cropped beat.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatEpoch {
    pub samples: [f64; EPOCH_LEN],
    pub label: BeatLabel,
    pub patient_id: String,
    /// Position of the beat among the patient's emitted epochs.
    pub beat_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub epochs: Vec<BeatEpoch>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn patients(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for e in &self.epochs {
            if !seen.contains(&e.patient_id.as_str()) {
                seen.push(&e.patient_id);
            }
        }
        seen
    }
}

/// Stacks epochs into an `N × 30` batch.
pub fn to_matrix(epochs: &[BeatEpoch]) -> Matrix {
    let mut data = Vec::with_capacity(epochs.len() * EPOCH_LEN);
    for e in epochs {
        data.extend_from_slice(&e.samples);
    }
    Matrix::from_vec(epochs.len(), EPOCH_LEN, data).expect("rows are EPOCH_LEN wide")
}

/// The 1 s window centered on `beat_index_60`, or `None` when the beat is too
/// close to either end of the signal.
pub fn extract_epoch(signal60: &[f64], beat_index_60: usize) -> Option<&[f64]> {
    let start = beat_index_60.checked_sub(HALF_WINDOW)?;
    let end = beat_index_60 + HALF_WINDOW;
    signal60.get(start..end)
}

/// Affine map of `window` onto [-1, 1] using its own min and max.
pub fn normalize_epoch(window: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range.is_nan() || range <= 0.0 {
        return Err(DatasetError::ConstantWindow);
    }
    Ok(window
        .iter()
        .map(|&v| (2.0 * (v - lo) / range - 1.0).clamp(-1.0, 1.0))
        .collect())
}

/// Center 0.5 s of a 1 s window: indices 15..45.
pub fn crop_center(window: &[f64]) -> Result<[f64; EPOCH_LEN]> {
    if window.len() != WINDOW_LEN {
        return Err(DatasetError::WindowLength {
            expected: WINDOW_LEN,
            got: window.len(),
        });
    }
    let mut out = [0.0; EPOCH_LEN];
    out.copy_from_slice(&window[CROP_START..CROP_START + EPOCH_LEN]);
    Ok(out)
}

/// Preprocessing settings applied to every record.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub channel: usize,
    pub filter_order: usize,
    pub f_low: f64,
    pub f_high: f64,
    /// Adds a 25 Hz lowpass ahead of decimation.
    pub extra_lowpass: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            channel: 0,
            filter_order: 5,
            f_low: 1.0,
            f_high: 60.0,
            extra_lowpass: false,
        }
    }
}

impl PreprocessConfig {
    /// Canonical text form, used for the manifest's config hash.
    pub fn canonical(&self) -> String {
        format!(
            "channel={};order={};f_low={:?};f_high={:?};extra_lowpass={};target_hz=60;window={};crop={}",
            self.channel,
            self.filter_order,
            self.f_low,
            self.f_high,
            self.extra_lowpass,
            WINDOW_LEN,
            EPOCH_LEN
        )
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Per-record bookkeeping reported in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordSummary {
    pub record: String,
    pub normal: usize,
    pub paced: usize,
    pub skipped_edge: usize,
    pub rejected_flat: usize,
}

/// Filters, decimates and cuts one record into epochs.
pub fn preprocess_record(
    record: &Record,
    config: &PreprocessConfig,
) -> Result<(Vec<BeatEpoch>, RecordSummary)> {
    let name = record.header.record_name.clone();
    let dsp_err = |source| DatasetError::Dsp {
        record: name.clone(),
        source,
    };
    let signal = record
        .channels
        .get(config.channel)
        .ok_or_else(|| DatasetError::NoSuchChannel {
            record: name.clone(),
            channel: config.channel,
        })?;
    let fs = record.sampling_rate_hz();
    let factor = dsp::decimation_factor(fs).map_err(dsp_err)?;
    let bandpass = dsp::design_butter_bandpass(config.filter_order, config.f_low, config.f_high, fs)
        .map_err(dsp_err)?;
    let mut filtered = dsp::filter_forward(&bandpass, signal).map_err(dsp_err)?;
    if config.extra_lowpass {
        let lowpass: SosCascade = dsp::design_butter_lowpass(config.filter_order, 25.0, fs).map_err(dsp_err)?;
        filtered = dsp::filter_forward(&lowpass, &filtered).map_err(dsp_err)?;
    }
    let signal60 = dsp::resample_to_60hz(&filtered, fs).map_err(dsp_err)?;

    let mut summary = RecordSummary {
        record: name.clone(),
        ..Default::default()
    };
    let mut epochs = Vec::new();
    for (sample, label) in wfdb::select_beats(&record.annotations) {
        let idx60 = sample as usize / factor;
        let Some(window) = extract_epoch(&signal60, idx60) else {
            summary.skipped_edge += 1;
            continue;
        };
        let normalized = match normalize_epoch(window) {
            Ok(w) => w,
            Err(_) => {
                summary.rejected_flat += 1;
                continue;
            }
        };
        let samples = crop_center(&normalized)?;
        match label {
            BeatLabel::Normal => summary.normal += 1,
            BeatLabel::Paced => summary.paced += 1,
        }
        epochs.push(BeatEpoch {
            samples,
            label,
            patient_id: name.clone(),
            beat_index: epochs.len(),
        });
    }
    if epochs.is_empty() {
        return Err(DatasetError::NoUsableBeats(name));
    }
    Ok((epochs, summary))
}

/// Result of [`build_datasets`].
#[derive(Debug, Clone)]
pub struct BuiltDatasets {
    pub train: Dataset,
    pub test: Dataset,
    /// In split order: train patients, then test patients.
    pub summaries: Vec<RecordSummary>,
}

/// Builds the fixed train/test split from the eight patient records.
/// Records may be given in any order; output follows the split tables.
pub fn build_datasets(records: &[Record], config: &PreprocessConfig) -> Result<BuiltDatasets> {
    let by_name: BTreeMap<&str, &Record> = records
        .iter()
        .map(|r| (r.header.record_name.as_str(), r))
        .collect();
    let missing: Vec<String> = TRAIN_PATIENTS
        .iter()
        .chain(&TEST_PATIENTS)
        .filter(|p| !by_name.contains_key(*p))
        .map(|p| p.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingRecords(missing));
    }

    let mut summaries = Vec::new();
    let mut assemble = |split: Split, patients: &[&str]| -> Result<Dataset> {
        let mut epochs = Vec::new();
        for p in patients {
            let (e, s) = preprocess_record(by_name[p], config)?;
            epochs.extend(e);
            summaries.push(s);
        }
        Ok(Dataset { split, epochs })
    };
    let train = assemble(Split::Train, &TRAIN_PATIENTS)?;
    let test = assemble(Split::Test, &TEST_PATIENTS)?;
    Ok(BuiltDatasets {
        train,
        test,
        summaries,
    })
}

/// Synthetic two-class fixture parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub class: BeatLabel,
    pub count: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

fn gauss(t: f64, centre: f64, width: f64) -> f64 {
    let u = (t - centre) / width;
    (-0.5 * u * u).exp()
}

/// Noise-free beat shape for a class, before normalization.
pub fn synthetic_template(class: BeatLabel) -> [f64; EPOCH_LEN] {
    let mut out = [0.0; EPOCH_LEN];
    for (i, v) in out.iter_mut().enumerate() {
        let t = i as f64;
        *v = match class {
            // Narrow upright QRS at the center, small T-like bump after it.
            BeatLabel::Normal => gauss(t, 15.0, 0.9) + 0.25 * gauss(t, 24.0, 2.2),
            // Wide biphasic complex: downstroke, then a broad upstroke.
            BeatLabel::Paced => -gauss(t, 12.0, 2.5) + 0.8 * gauss(t, 20.0, 3.0),
        };
    }
    out
}

/// Generates `count` noisy, normalized copies of the class template.
pub fn generate_synthetic(spec: &SynthSpec) -> Vec<BeatEpoch> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let template = synthetic_template(spec.class);
    let patient_id = match spec.class {
        BeatLabel::Normal => "synthetic-n",
        BeatLabel::Paced => "synthetic-p",
    };
    (0..spec.count)
        .map(|i| {
            let noisy: Vec<f64> = template
                .iter()
                .map(|&v| {
                    if spec.noise_sd > 0.0 {
                        v + spec.noise_sd * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        v
                    }
                })
                .collect();
            let normalized = normalize_epoch(&noisy).expect("templates are not flat");
            let mut samples = [0.0; EPOCH_LEN];
            samples.copy_from_slice(&normalized);
            BeatEpoch {
                samples,
                label: spec.class,
                patient_id: patient_id.to_string(),
                beat_index: i,
            }
        })
        .collect()
}

/// Both classes, `per_class` each, normal first. Seeds are derived from `seed`.
pub fn synthetic_pair(per_class: usize, noise_sd: f64, seed: u64) -> Vec<BeatEpoch> {
    let mut out = generate_synthetic(&SynthSpec {
        class: BeatLabel::Normal,
        count: per_class,
        noise_sd,
        seed: seed.wrapping_mul(2),
    });
    out.extend(generate_synthetic(&SynthSpec {
        class: BeatLabel::Paced,
        count: per_class,
        noise_sd,
        seed: seed.wrapping_mul(2).wrapping_add(1),
    }));
    out
}

/// Nine significant digits, exponent form.
pub fn format_sample(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes epochs as `patient,label,s0..s29`.
pub fn write_epochs_csv<W: Write>(epochs: &[BeatEpoch], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["patient".to_string(), "label".to_string()];
    header.extend((0..EPOCH_LEN).map(|i| format!("s{i}")));
    w.write_record(&header).map_err(csv_io)?;
    for e in epochs {
        let mut row = vec![e.patient_id.clone(), e.label.tag().to_string()];
        row.extend(e.samples.iter().map(|&v| format_sample(v)));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> DatasetError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io),
        other => DatasetError::Csv {
            line,
            reason: format!("{other:?}"),
        },
    }
}

pub fn epochs_to_csv_bytes(epochs: &[BeatEpoch]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_epochs_csv(epochs, &mut buf).expect("writing to memory");
    buf
}

/// Reads an epoch CSV; errors carry the 1-based line number.
pub fn read_epochs_csv<R: Read>(input: R) -> Result<Vec<BeatEpoch>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(csv_io)?.clone();
    if header.len() != EPOCH_LEN + 2 || &header[0] != "patient" || &header[1] != "label" {
        return Err(DatasetError::Csv {
            line: 1,
            reason: "expected header patient,label,s0..s29".into(),
        });
    }
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_io)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| DatasetError::Csv { line, reason };
        if rec.len() != EPOCH_LEN + 2 {
            return Err(bad(format!("expected {} fields, found {}", EPOCH_LEN + 2, rec.len())));
        }
        let label = BeatLabel::from_tag(&rec[1])
            .ok_or_else(|| bad(format!("unknown label {:?}", &rec[1])))?;
        let mut samples = [0.0; EPOCH_LEN];
        for (i, s) in samples.iter_mut().enumerate() {
            let field = &rec[i + 2];
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("column s{i}: not a number: {field:?}")))?;
            if !v.is_finite() || v.abs() > 1.0 + 1e-9 {
                return Err(bad(format!("column s{i}: {v} outside [-1, 1]")));
            }
            *s = v;
        }
        let patient_id = rec[0].to_string();
        let counter = counters.entry(patient_id.clone()).or_insert(0);
        out.push(BeatEpoch {
            samples,
            label,
            patient_id,
            beat_index: *counter,
        });
        *counter += 1;
    }
    Ok(out)
}

/// Hash identifying a train/test CSV pair.
pub fn dataset_hash(train_csv: &[u8], test_csv: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update((train_csv.len() as u64).to_le_bytes());
    h.update(train_csv);
    h.update(test_csv);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Text manifest written next to the epoch CSVs.
pub fn render_manifest(config: &PreprocessConfig, dataset_hash: &str, summaries: &[RecordSummary]) -> String {
    let mut s = String::new();
    s.push_str("manifest_version = 1\n");
    s.push_str(&format!("config = {}\n", config.canonical()));
    s.push_str(&format!("config_hash = {}\n", config.hash()));
    s.push_str(&format!("dataset_hash = {dataset_hash}\n"));
    for r in summaries {
        let split = Split::of_patient(&r.record).map_or("-", Split::name);
        s.push_str(&format!(
            "record {} split={} normal={} paced={} skipped_edge={} rejected_flat={}\n",
            r.record, split, r.normal, r.paced, r.skipped_edge, r.rejected_flat
        ));
    }
    s
}

/// Pulls `dataset_hash` out of a manifest.
pub fn manifest_dataset_hash(text: &str) -> Option<String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == "dataset_hash")
        .map(|(_, v)| v.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extract_whole_signal_at_center() {
        let s: Vec<f64> = (0..60).map(|i| i as f64).collect();
        assert_eq!(extract_epoch(&s, 30).unwrap(), &s[..]);
        assert!(extract_epoch(&s, 10).is_none());
        assert!(extract_epoch(&s, 31).is_none());
    }

    #[test]
    fn normalize_linear_map() {
        assert_eq!(normalize_epoch(&[0.0, 5.0, 10.0]).unwrap(), vec![-1.0, 0.0, 1.0]);
        let w = [-1.0, 0.25, 1.0, -0.5];
        assert_eq!(normalize_epoch(&w).unwrap(), w.to_vec());
        assert!(matches!(normalize_epoch(&[3.0; 60]), Err(DatasetError::ConstantWindow)));
    }

    #[test]
    fn crop_ramp() {
        let w: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let c = crop_center(&w).unwrap();
        assert_eq!(c.to_vec(), (15..45).map(|i| i as f64).collect::<Vec<_>>());
        // Window center (index 30) lands at crop offset 15.
        assert_eq!(c[15], 30.0);
        assert!(matches!(
            crop_center(&w[..59]),
            Err(DatasetError::WindowLength { expected: 60, got: 59 })
        ));
    }

    #[test]
    fn crop_keeps_symmetry() {
        let w: Vec<f64> = (0..60).map(|i| ((i as f64) - 29.5).powi(2)).collect();
        let c = crop_center(&w).unwrap();
        for i in 0..15 {
            assert_eq!(c[i], c[29 - i]);
        }
    }

    #[test]
    fn split_membership() {
        for p in TRAIN_PATIENTS {
            assert_eq!(Split::of_patient(p), Some(Split::Train));
        }
        for p in TEST_PATIENTS {
            assert_eq!(Split::of_patient(p), Some(Split::Test));
        }
        assert_eq!(Split::of_patient("100"), None);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SynthSpec {
            class: BeatLabel::Normal,
            count: 2,
            noise_sd: 0.0,
            seed: 3,
        };
        let a = generate_synthetic(&spec);
        assert_eq!(a[0].samples, a[1].samples);
        assert_eq!(a, generate_synthetic(&spec));
        let noisy = SynthSpec { noise_sd: 0.1, ..spec };
        assert_eq!(generate_synthetic(&noisy), generate_synthetic(&noisy));
        assert_ne!(generate_synthetic(&noisy)[0].samples, a[0].samples);
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn class_templates_are_dissimilar() {
        let mean = |label| {
            let e = generate_synthetic(&SynthSpec {
                class: label,
                count: 200,
                noise_sd: 0.05,
                seed: 1,
            });
            let mut m = [0.0; EPOCH_LEN];
            for ep in &e {
                for (a, b) in m.iter_mut().zip(&ep.samples) {
                    *a += b / e.len() as f64;
                }
            }
            m
        };
        let r = correlation(&mean(BeatLabel::Normal), &mean(BeatLabel::Paced));
        assert!(r < 0.5, "correlation {r}");
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let epochs = synthetic_pair(3, 0.05, 9);
        let bytes = epochs_to_csv_bytes(&epochs);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("patient,label,s0,s1,"));
        assert!(text.lines().next().unwrap().ends_with(",s29"));
        let back = read_epochs_csv(&bytes[..]).unwrap();
        assert_eq!(back.len(), 6);
        for (a, b) in epochs.iter().zip(&back) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.patient_id, b.patient_id);
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert!((x - y).abs() <= 5e-9 * x.abs().max(1e-300) + 1e-300);
            }
        }

        let mut broken = text.lines().take(3).collect::<Vec<_>>().join("\n");
        broken.push_str("\nsynthetic-n,X");
        broken.push_str(&",0.0".repeat(30));
        broken.push('\n');
        match read_epochs_csv(broken.as_bytes()) {
            Err(DatasetError::Csv { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_hash_parses_back() {
        let m = render_manifest(&PreprocessConfig::default(), "abc123", &[]);
        assert_eq!(manifest_dataset_hash(&m).as_deref(), Some("abc123"));
    }

    proptest! {
        #[test]
        fn synthetic_epochs_satisfy_invariants(seed in any::<u64>(), noise in 0.0f64..0.5) {
            for e in synthetic_pair(4, noise, seed) {
                prop_assert_eq!(e.samples.len(), EPOCH_LEN);
                prop_assert!(e.samples.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn normalized_spans_unit_interval(w in prop::collection::vec(-100.0f64..100.0, 2..80)) {
            prop_assume!(w.iter().any(|&v| v != w[0]));
            let n = normalize_epoch(&w).unwrap();
            let lo = n.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = n.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(lo, -1.0);
            prop_assert_eq!(hi, 1.0);
        }
    }
}
