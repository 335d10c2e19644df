//! Landmark file reading and writing.
//!
//! Two forms are supported. The structured form is one JSON document:
//!
//! ```text
//! {"schema_version":1,"fps":25.0,"label":"book","source_id":"07069",
//!  "frames":[{"xy":[x0,y0,...,x53,y53],"present":[1,0,...]}, ...]}
//! ```
//!
//! The tabular form is a `#`-prefixed header line holding the same header
//! object, then CSV with one frame per row and columns `<slot>_x`,
//! `<slot>_y`, `<slot>_present` for every slot.
//!
//! Coordinates are written with the shortest decimal text that parses back
//! to the same `f64`, so reading a written file is bit-exact.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::frame::{PoseSequence, SkeletalFrame};
use super::schema::{CanonicalSchema, FRAME_DIM, SLOT_COUNT};
use super::SkeletalError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkFormat {
    Structured,
    Tabular,
}

impl LandmarkFormat {
    /// `.csv` selects the tabular form; everything else is structured.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => LandmarkFormat::Tabular,
            _ => LandmarkFormat::Structured,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    fps: f64,
    label: Option<String>,
    source_id: String,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    xy: Vec<f64>,
    present: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    #[serde(flatten)]
    header: Header,
    frames: Vec<FrameRecord>,
}

fn format_err(line: Option<usize>, message: impl Into<String>) -> SkeletalError {
    SkeletalError::Format {
        line,
        message: message.into(),
    }
}

fn header_of(seq: &PoseSequence) -> Header {
    Header {
        schema_version: SCHEMA_VERSION,
        fps: seq.fps,
        label: seq.label.clone(),
        source_id: seq.source_id.clone(),
    }
}

fn check_header(h: &Header, line: Option<usize>) -> Result<(), SkeletalError> {
    if h.schema_version != SCHEMA_VERSION {
        return Err(format_err(
            line,
            format!("unsupported schema_version {}", h.schema_version),
        ));
    }
    if !(h.fps.is_finite() && h.fps > 0.0) {
        return Err(format_err(line, format!("fps must be positive, got {}", h.fps)));
    }
    Ok(())
}

fn build_frame(index: usize, xy: &[f64], present: &[bool]) -> Result<SkeletalFrame, SkeletalError> {
    if xy.len() != FRAME_DIM {
        return Err(SkeletalError::Format {
            line: None,
            message: format!(
                "frame {index}: expected {FRAME_DIM} coordinates ({SLOT_COUNT} points), found {} ({} points)",
                xy.len(),
                xy.len() / 2
            ),
        });
    }
    if present.len() != SLOT_COUNT {
        return Err(format_err(
            None,
            format!("frame {index}: expected {SLOT_COUNT} presence bits, found {}", present.len()),
        ));
    }
    let mut coords = [[0.0; 2]; SLOT_COUNT];
    let mut flags = [false; SLOT_COUNT];
    for slot in 0..SLOT_COUNT {
        coords[slot] = [xy[2 * slot], xy[2 * slot + 1]];
        flags[slot] = present[slot];
        if flags[slot] && !(coords[slot][0].is_finite() && coords[slot][1].is_finite()) {
            return Err(format_err(None, format!("frame {index}: non-finite coordinate in slot {slot}")));
        }
    }
    SkeletalFrame::new(coords, flags).map_err(|e| format_err(None, format!("frame {index}: {e}")))
}

/// Serializes to the structured (canonical) form.
pub fn to_structured_string(seq: &PoseSequence) -> String {
    let doc = Document {
        header: header_of(seq),
        frames: seq
            .frames()
            .iter()
            .map(|f| FrameRecord {
                xy: f.to_vector().to_vec(),
                present: f.present().iter().map(|&p| p as u8).collect(),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("landmark document serializes")
}

pub fn from_structured_str(text: &str) -> Result<PoseSequence, SkeletalError> {
    let doc: Document =
        serde_json::from_str(text).map_err(|e| format_err(Some(e.line()), e.to_string()))?;
    check_header(&doc.header, None)?;
    let frames = doc
        .frames
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let present = rec
                .present
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(format_err(None, format!("frame {i}: presence bit must be 0 or 1, got {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            build_frame(i, &rec.xy, &present)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if frames.is_empty() {
        return Err(format_err(None, "document has no frames"));
    }
    let h = doc.header;
    PoseSequence::new(frames, h.fps, h.label, h.source_id)
}

fn tabular_columns() -> Vec<String> {
    let mut cols = Vec::with_capacity(SLOT_COUNT * 3);
    for name in CanonicalSchema.names() {
        cols.push(format!("{name}_x"));
        cols.push(format!("{name}_y"));
        cols.push(format!("{name}_present"));
    }
    cols
}

pub fn to_tabular_string(seq: &PoseSequence) -> String {
    let mut out = Vec::new();
    let header = serde_json::to_string(&header_of(seq)).expect("header serializes");
    writeln!(out, "# {header}").unwrap();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(tabular_columns()).unwrap();
        for f in seq.frames() {
            let mut row = Vec::with_capacity(SLOT_COUNT * 3);
            for slot in 0..SLOT_COUNT {
                let [x, y] = f.coords()[slot];
                row.push(x.to_string());
                row.push(y.to_string());
                row.push((f.is_present(slot) as u8).to_string());
            }
            w.write_record(&row).unwrap();
        }
        w.flush().unwrap();
    }
    String::from_utf8(out).expect("csv output is utf-8")
}

pub fn from_tabular_str(text: &str) -> Result<PoseSequence, SkeletalError> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let header_json = first
        .trim_end_matches('\r')
        .strip_prefix('#')
        .ok_or_else(|| format_err(Some(1), "tabular file must start with a `#` header line"))?;
    let header: Header =
        serde_json::from_str(header_json.trim()).map_err(|e| format_err(Some(1), format!("header: {e}")))?;
    check_header(&header, Some(1))?;

    let mut reader = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
    let columns = reader
        .headers()
        .map_err(|e| format_err(Some(2), e.to_string()))?
        .clone();
    let mut positions = Vec::with_capacity(SLOT_COUNT * 3);
    for name in tabular_columns() {
        let pos = columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| format_err(Some(2), format!("missing column `{name}`")))?;
        positions.push(pos);
    }

    let mut frames = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header comment + column row precede the first frame
        let line = i + 3;
        let record = record.map_err(|e| format_err(Some(line), e.to_string()))?;
        let field = |k: usize| -> Result<&str, SkeletalError> {
            record
                .get(positions[k])
                .ok_or_else(|| format_err(Some(line), format!("frame {i}: missing field `{}`", tabular_columns()[k])))
        };
        let mut xy = Vec::with_capacity(FRAME_DIM);
        let mut present = Vec::with_capacity(SLOT_COUNT);
        for slot in 0..SLOT_COUNT {
            for axis in 0..2 {
                let raw = field(3 * slot + axis)?;
                let v: f64 = raw.trim().parse().map_err(|_| {
                    format_err(
                        Some(line),
                        format!("frame {i}: field `{}` is not a number: {raw:?}", tabular_columns()[3 * slot + axis]),
                    )
                })?;
                xy.push(v);
            }
            let bit = field(3 * slot + 2)?;
            present.push(match bit.trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(format_err(
                        Some(line),
                        format!("frame {i}: presence bit must be 0 or 1, got {other:?}"),
                    ))
                }
            });
        }
        frames.push(build_frame(i, &xy, &present).map_err(|e| match e {
            SkeletalError::Format { message, .. } => format_err(Some(line), message),
            other => other,
        })?);
    }
    if frames.is_empty() {
        return Err(format_err(None, "file has no frame rows"));
    }
    PoseSequence::new(frames, header.fps, header.label, header.source_id)
}

/// Parses either form, detected from the first non-whitespace character.
pub fn parse_sequence(text: &str) -> Result<PoseSequence, SkeletalError> {
    match text.trim_start().chars().next() {
        Some('{') => from_structured_str(text),
        Some('#') => from_tabular_str(text.trim_start()),
        _ => Err(format_err(Some(1), "unrecognized landmark file: expected `{` or `#`")),
    }
}

pub fn read_sequence(path: &Path) -> Result<PoseSequence, SkeletalError> {
    parse_sequence(&std::fs::read_to_string(path)?)
}

/// Writes atomically (temp file in the same directory, then rename).
pub fn write_sequence_as(seq: &PoseSequence, path: &Path, format: LandmarkFormat) -> Result<(), SkeletalError> {
    let text = match format {
        LandmarkFormat::Structured => to_structured_string(seq),
        LandmarkFormat::Tabular => to_tabular_string(seq),
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path).map_err(|e| SkeletalError::Io(e.error))?;
    Ok(())
}

/// Writes in the form implied by the file extension.
pub fn write_sequence(seq: &PoseSequence, path: &Path) -> Result<(), SkeletalError> {
    write_sequence_as(seq, path, LandmarkFormat::for_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(label: Option<&str>) -> PoseSequence {
        let frames = (0..3)
            .map(|i| {
                let mut f = SkeletalFrame::empty();
                for slot in (0..SLOT_COUNT).filter(|s| (s + i) % 3 != 0) {
                    f.set(slot, [0.1 * slot as f64 / 7.0, 1.0 / (slot as f64 + 3.0)]);
                }
                f
            })
            .collect();
        PoseSequence::new(frames, 29.97, label.map(String::from), "clip-1").unwrap()
    }

    #[test]
    fn structured_round_trip_keeps_label() {
        let seq = sample(Some("book"));
        let back = from_structured_str(&to_structured_string(&seq)).unwrap();
        assert_eq!(back, seq);
        assert_eq!(back.label.as_deref(), Some("book"));
    }

    #[test]
    fn tabular_round_trip() {
        let seq = sample(None);
        let text = to_tabular_string(&seq);
        assert!(text.starts_with("# {"));
        assert!(text.lines().nth(1).unwrap().starts_with("nose_x,nose_y,nose_present"));
        assert_eq!(parse_sequence(&text).unwrap(), seq);
    }

    #[test]
    fn short_frame_names_index() {
        let seq = sample(None);
        let mut v: serde_json::Value = serde_json::from_str(&to_structured_string(&seq)).unwrap();
        let xy = v["frames"][1]["xy"].as_array_mut().unwrap();
        xy.truncate(106);
        let err = from_structured_str(&v.to_string()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, SkeletalError::Format { .. }));
        assert!(msg.contains("frame 1"), "{msg}");
        assert!(msg.contains("53"), "{msg}");
    }

    #[test]
    fn tabular_errors_carry_line() {
        let seq = sample(None);
        let text = to_tabular_string(&seq);
        let broken: String = text
            .lines()
            .enumerate()
            .map(|(i, l)| if i == 3 { l.replacen("0", "x", 1) } else { l.to_string() })
            .collect::<Vec<_>>()
            .join("\n");
        match parse_sequence(&broken).unwrap_err() {
            SkeletalError::Format { line, message } => {
                assert_eq!(line, Some(4), "{message}");
                assert!(message.contains("frame 1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sentinel_violation_rejected() {
        let seq = sample(None);
        let mut v: serde_json::Value = serde_json::from_str(&to_structured_string(&seq)).unwrap();
        v["frames"][0]["present"][0] = 0.into();
        v["frames"][0]["xy"][0] = 0.25.into();
        assert!(from_structured_str(&v.to_string()).is_err());
    }

    #[test]
    fn file_round_trip_both_forms() {
        let dir = tempfile::tempdir().unwrap();
        let seq = sample(Some("drink"));
        for name in ["a.landmarks", "a.csv"] {
            let p = dir.path().join(name);
            write_sequence(&seq, &p).unwrap();
            assert_eq!(read_sequence(&p).unwrap(), seq);
        }
    }

    fn arb_frame() -> impl Strategy<Value = SkeletalFrame> {
        prop::collection::vec(prop::option::weighted(0.8, (-2.0f64..2.0, -2.0f64..2.0)), SLOT_COUNT).prop_map(
            |pts| {
                let pts: Vec<_> = pts.into_iter().map(|p| p.map(|(x, y)| [x, y])).collect();
                SkeletalFrame::from_points(&pts).unwrap()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn any_sequence_round_trips(
            frames in prop::collection::vec(arb_frame(), 1..6),
            fps in 1.0f64..120.0,
            label in prop::option::of("[a-z]{1,8}"),
            tabular in any::<bool>(),
        ) {
            let seq = PoseSequence::new(frames, fps, label, "p").unwrap();
            let text = if tabular { to_tabular_string(&seq) } else { to_structured_string(&seq) };
            prop_assert_eq!(parse_sequence(&text).unwrap(), seq);
        }
    }
}
