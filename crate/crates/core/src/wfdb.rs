//! Reader for PhysioNet WFDB records: text headers, format-212 signal files
//! and MIT-format annotation files.
//!
//! Only what the MIT-BIH Arrhythmia records need is supported: single-segment
//! records whose signals are all stored in format 212.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// WFDB's default ADC gain, used when the header leaves it unset or zero.
pub const DEFAULT_GAIN: f64 = 200.0;

/// MIT annotation code for a normal beat (`N`).
pub const CODE_NORMAL: u8 = 1;
/// MIT annotation code for a paced beat (`/`).
pub const CODE_PACED: u8 = 12;

const SKIP: u8 = 59;
const NUM: u8 = 60;
const SUB: u8 = 61;
const CHN: u8 = 62;
const AUX: u8 = 63;

#[derive(Debug, Error)]
pub enum WfdbError {
    #[error("malformed record line: {0}")]
    RecordLine(String),
    #[error("no channels")]
    NoChannels,
    #[error("header declares {declared} channels but has {found} signal lines")]
    ChannelCountMismatch { declared: usize, found: usize },
    #[error("malformed signal line for channel {channel}: {reason}")]
    SignalLine { channel: usize, reason: String },
    #[error("channel {channel}: unsupported storage format {format} (only 212 is supported)")]
    UnsupportedFormat { channel: usize, format: u32 },
    #[error("signal file truncated: {needed} bytes needed, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("zero adc gain")]
    ZeroGain,
    #[error("annotation stream ended without a terminator at byte {0}")]
    Unterminated(usize),
    #[error("aux string at byte {offset} overruns the buffer ({len} bytes declared)")]
    AuxOverrun { offset: usize, len: usize },
    #[error("annotation at sample {index} lies beyond the record's {count} samples")]
    AnnotationOutOfRange { index: u64, count: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, WfdbError>;

/// One signal line of a header.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub file_name: String,
    pub format: u32,
    /// ADC units per millivolt.
    pub adc_gain: f64,
    pub adc_baseline: i32,
    pub adc_resolution: u32,
    pub adc_zero: i32,
    pub initial_value: Option<i32>,
    pub checksum: Option<i32>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_name: String,
    pub sampling_rate_hz: f64,
    pub sample_count: usize,
    pub channels: Vec<ChannelSpec>,
}

impl RecordHeader {
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }
}

/// Beat classes kept for embedding. Everything else in the annotation stream is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BeatLabel {
    Normal,
    Paced,
}

impl BeatLabel {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            CODE_NORMAL => Some(BeatLabel::Normal),
            CODE_PACED => Some(BeatLabel::Paced),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            BeatLabel::Normal => CODE_NORMAL,
            BeatLabel::Paced => CODE_PACED,
        }
    }

    /// Single-letter tag used in epoch CSV files.
    pub fn tag(self) -> char {
        match self {
            BeatLabel::Normal => 'N',
            BeatLabel::Paced => 'P',
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "N" => Some(BeatLabel::Normal),
            "P" => Some(BeatLabel::Paced),
            _ => None,
        }
    }
}

impl fmt::Display for BeatLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BeatLabel::Normal => f.write_str("Normal"),
            BeatLabel::Paced => f.write_str("Paced"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub sample_index: u64,
    pub code: u8,
    pub subtype: i8,
    pub channel: u8,
    pub num: i8,
    pub aux: Option<String>,
}

impl Annotation {
    pub fn new(sample_index: u64, code: u8) -> Self {
        Annotation {
            sample_index,
            code,
            subtype: 0,
            channel: 0,
            num: 0,
            aux: None,
        }
    }
}

/// A fully loaded record with signals converted to millivolts.
#[derive(Debug, Clone)]
pub struct Record {
    pub header: RecordHeader,
    pub channels: Vec<Vec<f64>>,
    pub annotations: Vec<Annotation>,
}

impl Record {
    /// Assembles a record, checking channel lengths and annotation bounds.
    pub fn new(
        header: RecordHeader,
        channels: Vec<Vec<f64>>,
        mut annotations: Vec<Annotation>,
    ) -> Result<Self> {
        if channels.len() != header.channel_count() {
            return Err(WfdbError::ChannelCountMismatch {
                declared: header.channel_count(),
                found: channels.len(),
            });
        }
        if let Some(bad) = channels.iter().find(|c| c.len() != header.sample_count) {
            return Err(WfdbError::Truncated {
                needed: header.sample_count,
                available: bad.len(),
            });
        }
        if let Some(a) = annotations
            .iter()
            .find(|a| a.sample_index >= header.sample_count as u64)
        {
            return Err(WfdbError::AnnotationOutOfRange {
                index: a.sample_index,
                count: header.sample_count,
            });
        }
        annotations.sort_by_key(|a| a.sample_index);
        Ok(Record {
            header,
            channels,
            annotations,
        })
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.header.sampling_rate_hz
    }
}

fn leading_number(field: &str) -> &str {
    let end = field
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e'))
        .unwrap_or(field.len());
    &field[..end]
}

/// Parses the text of a `.hea` file.
pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut lines = text
        .lines()
        .map(|l| match l.find('#') {
            Some(i) => &l[..i],
            None => l,
        })
        .map(str::trim)
        .filter(|l| !l.is_empty());

    let record_line = lines
        .next()
        .ok_or_else(|| WfdbError::RecordLine("empty header".into()))?;
    let fields: Vec<&str> = record_line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(WfdbError::RecordLine(record_line.to_string()));
    }
    let record_name = fields[0].to_string();
    if record_name.contains('/') {
        return Err(WfdbError::RecordLine(format!(
            "multi-segment record {record_name} is not supported"
        )));
    }
    let declared: usize = fields[1]
        .parse()
        .map_err(|_| WfdbError::RecordLine(format!("bad channel count {:?}", fields[1])))?;
    if declared == 0 {
        return Err(WfdbError::NoChannels);
    }
    let sampling_rate_hz = match fields.get(2) {
        Some(f) => leading_number(f)
            .parse::<f64>()
            .map_err(|_| WfdbError::RecordLine(format!("bad sampling frequency {f:?}")))?,
        None => 250.0,
    };
    if sampling_rate_hz.is_nan() || sampling_rate_hz <= 0.0 {
        return Err(WfdbError::RecordLine(format!(
            "sampling frequency must be positive, got {sampling_rate_hz}"
        )));
    }
    let sample_count = match fields.get(3) {
        Some(f) => f
            .parse()
            .map_err(|_| WfdbError::RecordLine(format!("bad sample count {f:?}")))?,
        None => 0,
    };

    let signal_lines: Vec<&str> = lines.collect();
    if signal_lines.len() != declared {
        return Err(WfdbError::ChannelCountMismatch {
            declared,
            found: signal_lines.len(),
        });
    }
    let channels = signal_lines
        .iter()
        .enumerate()
        .map(|(i, l)| parse_signal_line(i, l))
        .collect::<Result<Vec<_>>>()?;

    Ok(RecordHeader {
        record_name,
        sampling_rate_hz,
        sample_count,
        channels,
    })
}

fn parse_signal_line(channel: usize, line: &str) -> Result<ChannelSpec> {
    let bad = |reason: String| WfdbError::SignalLine { channel, reason };
    let mut parts = line.splitn(9, char::is_whitespace).filter(|s| !s.is_empty());
    let file_name = parts
        .next()
        .ok_or_else(|| bad("missing file name".into()))?
        .to_string();
    let format_field = parts.next().ok_or_else(|| bad("missing format".into()))?;
    // Skew ("x") and byte offset (":") suffixes are not used by format-212 MIT-BIH files.
    let format: u32 = leading_number(format_field)
        .parse()
        .map_err(|_| bad(format!("bad format {format_field:?}")))?;
    if format != 212 {
        return Err(WfdbError::UnsupportedFormat { channel, format });
    }

    let rest: Vec<&str> = line.split_whitespace().skip(2).collect();
    let int_at = |i: usize| -> Result<Option<i32>> {
        rest.get(i)
            .map(|f| f.parse::<i32>().map_err(|_| bad(format!("bad integer {f:?}"))))
            .transpose()
    };

    let adc_resolution = int_at(1)?.map(|r| r as u32).filter(|&r| r > 0).unwrap_or(12);
    let adc_zero = int_at(2)?.unwrap_or(0);
    let initial_value = int_at(3)?;
    let checksum = int_at(4)?;

    let (adc_gain, explicit_baseline) = match rest.first() {
        Some(g) => parse_gain(g).map_err(bad)?,
        None => (DEFAULT_GAIN, None),
    };
    let description = if rest.len() > 6 {
        rest[6..].join(" ")
    } else {
        String::new()
    };

    Ok(ChannelSpec {
        file_name,
        format,
        adc_gain,
        adc_baseline: explicit_baseline.unwrap_or(adc_zero),
        adc_resolution,
        adc_zero,
        initial_value,
        checksum,
        description,
    })
}

/// Parses `gain[(baseline)][/units]`.
fn parse_gain(field: &str) -> std::result::Result<(f64, Option<i32>), String> {
    let without_units = field.split('/').next().unwrap_or(field);
    let (gain_text, baseline) = match without_units.find('(') {
        Some(open) => {
            let close = without_units[open..]
                .find(')')
                .map(|c| c + open)
                .ok_or_else(|| format!("unclosed baseline in {field:?}"))?;
            let b = without_units[open + 1..close]
                .parse::<i32>()
                .map_err(|_| format!("bad baseline in {field:?}"))?;
            (&without_units[..open], Some(b))
        }
        None => (without_units, None),
    };
    let gain: f64 = gain_text
        .parse()
        .map_err(|_| format!("bad gain {field:?}"))?;
    let gain = if gain == 0.0 { DEFAULT_GAIN } else { gain };
    Ok((gain, baseline))
}

#[inline]
fn sign_extend_12(v: u16) -> i16 {
    ((v << 4) as i16) >> 4
}

/// Decodes an interleaved format-212 stream into `count` samples.
pub fn decode_212(bytes: &[u8], count: usize) -> Result<Vec<i16>> {
    let needed = (3 * count).div_ceil(2);
    if bytes.len() < needed {
        return Err(WfdbError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let mut out = Vec::with_capacity(count);
    for group in bytes.chunks(3) {
        if out.len() == count {
            break;
        }
        let b0 = group[0] as u16;
        let b1 = group[1] as u16;
        out.push(sign_extend_12(((b1 & 0x0F) << 8) | b0));
        if out.len() == count {
            break;
        }
        let b2 = group[2] as u16;
        out.push(sign_extend_12(((b1 & 0xF0) << 4) | b2));
    }
    Ok(out)
}

/// Packs samples into format 212. Values are truncated to 12 bits.
pub fn encode_212(samples: &[i16]) -> Vec<u8> {
    let mut out = Vec::with_capacity((3 * samples.len()).div_ceil(2));
    for pair in samples.chunks(2) {
        let a = (pair[0] as u16) & 0x0FFF;
        match pair.get(1) {
            Some(&b) => {
                let b = (b as u16) & 0x0FFF;
                out.push((a & 0xFF) as u8);
                out.push(((a >> 8) | ((b >> 8) << 4)) as u8);
                out.push((b & 0xFF) as u8);
            }
            None => {
                out.push((a & 0xFF) as u8);
                out.push((a >> 8) as u8);
            }
        }
    }
    out
}

/// Reads the per-channel ADC samples of a format-212 signal file.
pub fn read_signal_212(bytes: &[u8], header: &RecordHeader) -> Result<Vec<Vec<i16>>> {
    let n_ch = header.channel_count();
    if n_ch == 0 {
        return Err(WfdbError::NoChannels);
    }
    if let Some((channel, c)) = header
        .channels
        .iter()
        .enumerate()
        .find(|(_, c)| c.format != 212)
    {
        return Err(WfdbError::UnsupportedFormat {
            channel,
            format: c.format,
        });
    }
    let total = header.sample_count * n_ch;
    let flat = decode_212(bytes, total)?;
    let mut channels = vec![Vec::with_capacity(header.sample_count); n_ch];
    for frame in flat.chunks_exact(n_ch) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    Ok(channels)
}

/// Converts ADC units to millivolts: `(adu - baseline) / gain`.
pub fn to_physical(adu: &[i16], gain: f64, baseline: i32) -> Result<Vec<f64>> {
    if gain == 0.0 {
        return Err(WfdbError::ZeroGain);
    }
    let baseline = baseline as f64;
    Ok(adu.iter().map(|&v| (v as f64 - baseline) / gain).collect())
}

/// Parses an MIT-format annotation file.
pub fn parse_annotations(bytes: &[u8]) -> Result<Vec<Annotation>> {
    let mut out: Vec<Annotation> = Vec::new();
    let mut pos = 0usize;
    let mut time: i64 = 0;
    // NUM and CHN are sticky in the MIT format; SUB resets for each annotation.
    let mut num: i8 = 0;
    let mut chan: u8 = 0;

    loop {
        if pos + 2 > bytes.len() {
            return Err(WfdbError::Unterminated(pos));
        }
        let word = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]);
        pos += 2;
        let code = (word >> 10) as u8;
        let field = word & 0x03FF;
        match code {
            0 if field == 0 => break,
            0 => time += field as i64,
            SKIP => {
                if pos + 4 > bytes.len() {
                    return Err(WfdbError::Unterminated(pos));
                }
                let high = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]) as u32;
                let low = u16::from_le_bytes([bytes[pos + 2], bytes[pos + 3]]) as u32;
                pos += 4;
                time += ((high << 16) | low) as i32 as i64;
            }
            NUM => {
                num = field as i16 as i8;
                if let Some(last) = out.last_mut() {
                    last.num = num;
                }
            }
            SUB => {
                if let Some(last) = out.last_mut() {
                    last.subtype = field as u8 as i8;
                }
            }
            CHN => {
                chan = field as u8;
                if let Some(last) = out.last_mut() {
                    last.channel = chan;
                }
            }
            AUX => {
                let len = field as usize;
                if pos + len > bytes.len() {
                    return Err(WfdbError::AuxOverrun { offset: pos, len });
                }
                let text = String::from_utf8_lossy(&bytes[pos..pos + len])
                    .trim_end_matches('\0')
                    .to_string();
                pos += len + (len & 1);
                if let Some(last) = out.last_mut() {
                    last.aux = Some(text);
                }
            }
            _ => {
                time += field as i64;
                out.push(Annotation {
                    sample_index: time.max(0) as u64,
                    code,
                    subtype: 0,
                    channel: chan,
                    num,
                    aux: None,
                });
            }
        }
    }
    out.sort_by_key(|a| a.sample_index);
    Ok(out)
}

/// Writes annotations in MIT format. Intended for building test fixtures;
/// only the fields the reader understands are emitted.
pub fn encode_annotations(annotations: &[Annotation]) -> Vec<u8> {
    let mut out = Vec::new();
    let push = |w: u16, out: &mut Vec<u8>| out.extend_from_slice(&w.to_le_bytes());
    let mut prev = 0u64;
    let mut num = 0i8;
    let mut chan = 0u8;
    for a in annotations {
        let delta = a.sample_index - prev;
        if delta > 0x03FF {
            push((SKIP as u16) << 10, &mut out);
            let d = delta as u32;
            push((d >> 16) as u16, &mut out);
            push((d & 0xFFFF) as u16, &mut out);
            push((a.code as u16) << 10, &mut out);
        } else {
            push(((a.code as u16) << 10) | delta as u16, &mut out);
        }
        prev = a.sample_index;
        if a.subtype != 0 {
            push(((SUB as u16) << 10) | (a.subtype as u8 as u16), &mut out);
        }
        if a.channel != chan {
            chan = a.channel;
            push(((CHN as u16) << 10) | chan as u16, &mut out);
        }
        if a.num != num {
            num = a.num;
            push(((NUM as u16) << 10) | (num as u8 as u16), &mut out);
        }
        if let Some(aux) = &a.aux {
            let bytes = aux.as_bytes();
            let len = bytes.len().min(0x03FF);
            push(((AUX as u16) << 10) | len as u16, &mut out);
            out.extend_from_slice(&bytes[..len]);
            if len & 1 == 1 {
                out.push(0);
            }
        }
    }
    push(0, &mut out);
    out
}

/// Keeps normal and paced beats, in order.
pub fn select_beats(annotations: &[Annotation]) -> Vec<(u64, BeatLabel)> {
    annotations
        .iter()
        .filter_map(|a| BeatLabel::from_code(a.code).map(|l| (a.sample_index, l)))
        .collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| WfdbError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads `<dir>/<name>.hea`, its signal file and `<dir>/<name>.atr`.
pub fn load_record(dir: &Path, name: &str) -> Result<Record> {
    let hea_path = dir.join(format!("{name}.hea"));
    let text = String::from_utf8_lossy(&read_file(&hea_path)?).into_owned();
    let header = parse_header(&text)?;

    let dat_name = &header.channels[0].file_name;
    if header.channels.iter().any(|c| &c.file_name != dat_name) {
        return Err(WfdbError::SignalLine {
            channel: 0,
            reason: "signals spread over several files are not supported".into(),
        });
    }
    let dat = read_file(&dir.join(dat_name))?;
    let adu = read_signal_212(&dat, &header)?;
    let channels = adu
        .iter()
        .zip(&header.channels)
        .map(|(s, c)| to_physical(s, c.adc_gain, c.adc_baseline))
        .collect::<Result<Vec<_>>>()?;

    let annotations = parse_annotations(&read_file(&dir.join(format!("{name}.atr")))?)?;
    Record::new(header, channels, annotations)
}
