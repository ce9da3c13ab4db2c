//! On-disk formats: softmax probability maps (`.mspb`), label masks (`.msgt`),
//! segment graphs (JSON lines) and the dataset manifest.
//!
//! Both binary formats are little-endian:
//!
//! ```text
//! mspb: b"MSPB" | u8 version=1 | u32 height | u32 width | u16 q | f32[height*width*q]
//! msgt: b"MSGT" | u8 version=1 | u32 height | u32 width | u16[height*width]
//! ```
//!
//! Payloads are row-major with the class index varying fastest.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graph::SegmentGraph;

pub const PROBMAP_MAGIC: &[u8; 4] = b"MSPB";
pub const LABELMASK_MAGIC: &[u8; 4] = b"MSGT";
pub const FORMAT_VERSION: u8 = 1;
/// Ground-truth value of unlabeled pixels.
pub const UNLABELED: u16 = u16::MAX;
/// Maximum deviation of a pixel's class vector sum from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;

const HEADER_LEN: usize = 4 + 1 + 4 + 4;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite probability at pixel {pixel}, class {class}")]
    NonFiniteValue { pixel: usize, class: usize },
    #[error("class probabilities of pixel {pixel} sum to {sum}")]
    NotNormalized { pixel: usize, sum: f64 },
    #[error("label {label} at pixel {pixel} is outside 0..{num_classes} and not the unlabeled sentinel")]
    LabelOutOfRange {
        pixel: usize,
        label: u16,
        num_classes: u16,
    },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: {message}")]
    InconsistentFeatureWidth { line: usize, message: String },
    #[error("line {line}: {message}")]
    InconsistentGraph { line: usize, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-pixel softmax output of a segmentation network.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    pub height: u32,
    pub width: u32,
    pub num_classes: u16,
    /// `[height][width][num_classes]`, class-minor.
    pub probs: Vec<f32>,
}

impl ProbMap {
    pub fn new(height: u32, width: u32, num_classes: u16, probs: Vec<f32>) -> Result<Self, DataError> {
        let map = ProbMap {
            height,
            width,
            num_classes,
            probs,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn num_pixels(&self) -> usize {
        self.height as usize * self.width as usize
    }

    /// Class vector of the pixel with row-major index `pixel`.
    pub fn row(&self, pixel: usize) -> &[f32] {
        let q = self.num_classes as usize;
        &self.probs[pixel * q..(pixel + 1) * q]
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.num_classes < 2 {
            return Err(DataError::ShapeMismatch(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.height == 0 || self.width == 0 {
            return Err(DataError::ShapeMismatch(format!(
                "empty image {}x{}",
                self.height, self.width
            )));
        }
        let expected = self.num_pixels() * self.num_classes as usize;
        if self.probs.len() != expected {
            return Err(DataError::ShapeMismatch(format!(
                "payload has {} values, header implies {expected}",
                self.probs.len()
            )));
        }
        for pixel in 0..self.num_pixels() {
            let row = self.row(pixel);
            let mut sum = 0.0f64;
            for (class, &p) in row.iter().enumerate() {
                if !p.is_finite() {
                    return Err(DataError::NonFiniteValue { pixel, class });
                }
                if p < 0.0 {
                    return Err(DataError::NotNormalized {
                        pixel,
                        sum: f64::from(p),
                    });
                }
                sum += f64::from(p);
            }
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(DataError::NotNormalized { pixel, sum });
            }
        }
        Ok(())
    }
}

/// Per-pixel class ids; [`UNLABELED`] marks pixels without ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub height: u32,
    pub width: u32,
    pub labels: Vec<u16>,
}

impl LabelMask {
    pub fn new(height: u32, width: u32, labels: Vec<u16>) -> Result<Self, DataError> {
        if height == 0 || width == 0 {
            return Err(DataError::ShapeMismatch(format!("empty mask {height}x{width}")));
        }
        if labels.len() != height as usize * width as usize {
            return Err(DataError::ShapeMismatch(format!(
                "{} labels for a {height}x{width} mask",
                labels.len()
            )));
        }
        Ok(LabelMask {
            height,
            width,
            labels,
        })
    }

    pub fn num_pixels(&self) -> usize {
        self.labels.len()
    }

    pub fn check_labels(&self, num_classes: u16) -> Result<(), DataError> {
        match self
            .labels
            .iter()
            .position(|&l| l >= num_classes && l != UNLABELED)
        {
            Some(pixel) => Err(DataError::LabelOutOfRange {
                pixel,
                label: self.labels[pixel],
                num_classes,
            }),
            None => Ok(()),
        }
    }

    pub fn check_matches(&self, probs: &ProbMap) -> Result<(), DataError> {
        if self.height != probs.height || self.width != probs.width {
            return Err(DataError::ShapeMismatch(format!(
                "mask is {}x{}, probability map is {}x{}",
                self.height, self.width, probs.height, probs.width
            )));
        }
        Ok(())
    }
}

fn parse_header<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<(u32, u32, &'a [u8]), DataError> {
    if bytes.len() < 4 {
        return Err(DataError::ShapeMismatch(format!(
            "file of {} bytes has no header",
            bytes.len()
        )));
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &found != magic {
        return Err(DataError::BadMagic {
            found,
            expected: *magic,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(DataError::ShapeMismatch("truncated header".into()));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(DataError::UnsupportedVersion(bytes[4]));
    }
    let height = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes"));
    let width = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes"));
    Ok((height, width, &bytes[HEADER_LEN..]))
}

fn checked_len(parts: &[u64]) -> Result<usize, DataError> {
    parts
        .iter()
        .try_fold(1u64, |acc, &p| acc.checked_mul(p))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| DataError::ShapeMismatch("declared size overflows".into()))
}

pub fn encode_probmap(map: &ProbMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 2 + map.probs.len() * 4);
    out.extend_from_slice(PROBMAP_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&map.height.to_le_bytes());
    out.extend_from_slice(&map.width.to_le_bytes());
    out.extend_from_slice(&map.num_classes.to_le_bytes());
    for p in &map.probs {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_probmap(bytes: &[u8]) -> Result<ProbMap, DataError> {
    let (height, width, rest) = parse_header(bytes, PROBMAP_MAGIC)?;
    if rest.len() < 2 {
        return Err(DataError::ShapeMismatch("truncated header".into()));
    }
    let num_classes = u16::from_le_bytes([rest[0], rest[1]]);
    let payload = &rest[2..];
    let count = checked_len(&[u64::from(height), u64::from(width), u64::from(num_classes)])?;
    if payload.len() as u64 != count as u64 * 4 {
        return Err(DataError::ShapeMismatch(format!(
            "payload is {} bytes, header declares {count} f32 values",
            payload.len()
        )));
    }
    let probs = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    ProbMap::new(height, width, num_classes, probs)
}

pub fn encode_labelmask(mask: &LabelMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + mask.labels.len() * 2);
    out.extend_from_slice(LABELMASK_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&mask.height.to_le_bytes());
    out.extend_from_slice(&mask.width.to_le_bytes());
    for l in &mask.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

/// Decodes a mask; labels are range-checked against `num_classes`.
pub fn decode_labelmask(bytes: &[u8], num_classes: u16) -> Result<LabelMask, DataError> {
    let (height, width, payload) = parse_header(bytes, LABELMASK_MAGIC)?;
    let count = checked_len(&[u64::from(height), u64::from(width)])?;
    if payload.len() as u64 != count as u64 * 2 {
        return Err(DataError::ShapeMismatch(format!(
            "payload is {} bytes, header declares {count} u16 labels",
            payload.len()
        )));
    }
    let labels = payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let mask = LabelMask::new(height, width, labels)?;
    mask.check_labels(num_classes)?;
    Ok(mask)
}

pub fn read_probmap(path: &Path) -> Result<ProbMap, DataError> {
    decode_probmap(&fs::read(path).map_err(io_err(path))?)
}

pub fn write_probmap(map: &ProbMap, path: &Path) -> Result<(), DataError> {
    map.validate()?;
    fs::write(path, encode_probmap(map)).map_err(io_err(path))
}

pub fn read_labelmask(path: &Path, num_classes: u16) -> Result<LabelMask, DataError> {
    decode_labelmask(&fs::read(path).map_err(io_err(path))?, num_classes)
}

pub fn write_labelmask(mask: &LabelMask, path: &Path) -> Result<(), DataError> {
    fs::write(path, encode_labelmask(mask)).map_err(io_err(path))
}

/// One line of a graph file.
#[derive(Debug, Serialize, Deserialize)]
struct GraphLine {
    frame_id: String,
    num_nodes: usize,
    features: Vec<Vec<f64>>,
    edges: Vec<[u32; 2]>,
    iou_adj: Vec<f64>,
    iou0: Vec<u8>,
    feature_names: Vec<String>,
}

/// Writes one JSON object per graph. Floats use the shortest representation
/// that parses back to the identical `f64`.
pub fn write_graph_jsonl<'a, I>(graphs: I, path: &Path) -> Result<(), DataError>
where
    I: IntoIterator<Item = &'a SegmentGraph>,
{
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for graph in graphs {
        let line = GraphLine {
            frame_id: graph.frame_id.clone(),
            num_nodes: graph.num_nodes(),
            features: graph.features.clone(),
            edges: graph.edges.iter().map(|&(a, b)| [a, b]).collect(),
            iou_adj: graph.iou_adj.clone(),
            iou0: graph.iou0.clone(),
            feature_names: graph.feature_names.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_graph_jsonl(path: &Path) -> Result<Vec<SegmentGraph>, DataError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut graphs = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: GraphLine =
            serde_json::from_str(&line).map_err(|e| DataError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        let p = parsed.feature_names.len();
        if parsed.features.iter().any(|row| row.len() != p) {
            return Err(DataError::InconsistentFeatureWidth {
                line: line_no,
                message: format!("feature rows do not all have {p} entries"),
            });
        }
        match width {
            Some(w) if w != p => {
                return Err(DataError::InconsistentFeatureWidth {
                    line: line_no,
                    message: format!("{p} features, earlier lines have {w}"),
                })
            }
            _ => width = Some(p),
        }
        let graph = SegmentGraph {
            frame_id: parsed.frame_id,
            features: parsed.features,
            feature_names: parsed.feature_names,
            edges: parsed.edges.iter().map(|e| (e[0], e[1])).collect(),
            iou_adj: parsed.iou_adj,
            iou0: parsed.iou0,
        };
        if graph.num_nodes() != parsed.num_nodes {
            return Err(DataError::InconsistentGraph {
                line: line_no,
                message: format!(
                    "num_nodes is {} but {} feature rows",
                    parsed.num_nodes,
                    graph.num_nodes()
                ),
            });
        }
        graph
            .validate()
            .map_err(|message| DataError::InconsistentGraph {
                line: line_no,
                message,
            })?;
        graphs.push(graph);
    }
    Ok(graphs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: String,
    pub probmap: String,
    pub labelmask: String,
}

/// `manifest.json` at the root of a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub num_classes: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    pub frames: Vec<FrameEntry>,
}

impl DatasetManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn for_frames<I: IntoIterator<Item = String>>(num_classes: u16, ids: I) -> Self {
        let frames = ids
            .into_iter()
            .map(|id| FrameEntry {
                probmap: format!("prob/{id}.mspb"),
                labelmask: format!("gt/{id}.msgt"),
                id,
            })
            .collect();
        DatasetManifest {
            num_classes,
            class_names: None,
            frames,
        }
    }

    pub fn load(root: &Path) -> Result<Self, DataError> {
        let path = root.join(Self::FILE_NAME);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate(root)?;
        Ok(manifest)
    }

    pub fn save(&self, root: &Path) -> Result<(), DataError> {
        let path = root.join(Self::FILE_NAME);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn validate(&self, root: &Path) -> Result<(), DataError> {
        if self.num_classes < 2 {
            return Err(DataError::Manifest("need at least 2 classes".into()));
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.num_classes as usize {
                return Err(DataError::Manifest(format!(
                    "{} class names for {} classes",
                    names.len(),
                    self.num_classes
                )));
            }
        }
        let mut seen = HashSet::new();
        for frame in &self.frames {
            if !seen.insert(frame.id.as_str()) {
                return Err(DataError::Manifest(format!("duplicate frame id {}", frame.id)));
            }
            for rel in [&frame.probmap, &frame.labelmask] {
                let path = root.join(rel);
                if !path.is_file() {
                    return Err(DataError::Manifest(format!(
                        "frame {}: missing file {}",
                        frame.id,
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reads the probability map and mask of one frame and checks they agree.
    pub fn load_frame(&self, root: &Path, frame: &FrameEntry) -> Result<(ProbMap, LabelMask), DataError> {
        let probs = read_probmap(&root.join(&frame.probmap))?;
        if probs.num_classes != self.num_classes {
            return Err(DataError::ShapeMismatch(format!(
                "frame {} has {} classes, manifest declares {}",
                frame.id, probs.num_classes, self.num_classes
            )));
        }
        let mask = read_labelmask(&root.join(&frame.labelmask), self.num_classes)?;
        mask.check_matches(&probs)?;
        Ok((probs, mask))
    }
}
