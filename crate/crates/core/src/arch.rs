//! Layer stacks and their compact string form.
//!
//! `L242-S1` is Linear(242) followed by SAGE-mean(1). Codes: `L` linear,
//! `S` SAGE-mean, `X` SAGE-max, `G` attention. An attention layer may carry a
//! head count, `G91@h4`; without it the layer uses [`DEFAULT_GAT_HEADS`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const DEFAULT_GAT_HEADS: usize = 4;
pub const MIN_DEPTH: usize = 2;
pub const MAX_DEPTH: usize = 4;
pub const MIN_WIDTH: usize = 10;
pub const MAX_WIDTH: usize = 400;
pub const MIN_LR: f64 = 0.001;
pub const MAX_LR: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Linear,
    SageMean,
    SageMax,
    Gat { heads: usize },
}

impl LayerKind {
    pub fn code(&self) -> char {
        match self {
            LayerKind::Linear => 'L',
            LayerKind::SageMean => 'S',
            LayerKind::SageMax => 'X',
            LayerKind::Gat { .. } => 'G',
        }
    }

    /// Whether the layer reads neighbor features.
    pub fn uses_edges(&self) -> bool {
        !matches!(self, LayerKind::Linear)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub width: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ArchError {
    #[error("cannot parse architecture {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("architecture out of bounds: {0}")]
    OutOfBounds(String),
}

/// Layer stack plus learning rate. ReLU follows every layer but the last,
/// which has width 1 and a sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub layers: Vec<LayerSpec>,
    pub learning_rate: f64,
}

impl ArchitectureSpec {
    pub fn parse(layers: &str, learning_rate: f64) -> Result<Self, ArchError> {
        Ok(ArchitectureSpec {
            layers: parse_layers(layers)?,
            learning_rate,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_graph_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.kind.uses_edges()).count()
    }

    /// Layer string without the learning rate.
    pub fn layer_string(&self) -> String {
        self.layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Gat { heads } if heads != DEFAULT_GAT_HEADS => {
                    format!("G{}@h{heads}", l.width)
                }
                kind => format!("{}{}", kind.code(), l.width),
            })
            .collect::<Vec<_>>()
            .join("-")
    }

    /// Layer codes only, e.g. `LSS`.
    pub fn short_name(&self) -> String {
        self.layers.iter().map(|l| l.kind.code()).collect()
    }

    /// Minimal structural checks needed to build a model.
    pub fn check_buildable(&self) -> Result<(), ArchError> {
        if self.layers.is_empty() {
            return Err(ArchError::OutOfBounds("no layers".into()));
        }
        if self.layers.last().map(|l| l.width) != Some(1) {
            return Err(ArchError::OutOfBounds("final layer must have width 1".into()));
        }
        for l in &self.layers {
            if l.width == 0 {
                return Err(ArchError::OutOfBounds("zero-width layer".into()));
            }
            if let LayerKind::Gat { heads: 0 } = l.kind {
                return Err(ArchError::OutOfBounds("attention layer with 0 heads".into()));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ArchError::OutOfBounds(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Checks the search-space bounds: depth 2..=4, hidden widths 10..=400,
    /// final width 1, learning rate in [0.001, 0.2].
    pub fn validate(&self) -> Result<(), ArchError> {
        self.check_buildable()?;
        let depth = self.depth();
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&depth) {
            return Err(ArchError::OutOfBounds(format!("depth {depth} not in 2..=4")));
        }
        for l in &self.layers[..depth - 1] {
            if !(MIN_WIDTH..=MAX_WIDTH).contains(&l.width) {
                return Err(ArchError::OutOfBounds(format!(
                    "hidden width {} not in 10..=400",
                    l.width
                )));
            }
        }
        if !(MIN_LR..=MAX_LR).contains(&self.learning_rate) {
            return Err(ArchError::OutOfBounds(format!(
                "learning rate {} not in [0.001, 0.2]",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.layer_string())
    }
}

pub fn parse_layers(input: &str) -> Result<Vec<LayerSpec>, ArchError> {
    let err = |reason: String| ArchError::Parse {
        input: input.to_string(),
        reason,
    };
    if input.trim().is_empty() {
        return Err(err("empty string".into()));
    }
    input
        .trim()
        .split('-')
        .map(|token| {
            let mut chars = token.chars();
            let code = chars.next().ok_or_else(|| err("empty layer".into()))?;
            let rest = chars.as_str();
            let (width_str, heads) = match rest.split_once("@h") {
                Some((w, h)) => {
                    if code != 'G' {
                        return Err(err(format!("head count on non-attention layer {token:?}")));
                    }
                    let heads = h
                        .parse::<usize>()
                        .map_err(|_| err(format!("bad head count in {token:?}")))?;
                    (w, Some(heads))
                }
                None => (rest, None),
            };
            if width_str.is_empty() || !width_str.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err(format!("bad width in {token:?}")));
            }
            let width = width_str
                .parse::<usize>()
                .map_err(|_| err(format!("bad width in {token:?}")))?;
            let kind = match code {
                'L' => LayerKind::Linear,
                'S' => LayerKind::SageMean,
                'X' => LayerKind::SageMax,
                'G' => LayerKind::Gat {
                    heads: heads.unwrap_or(DEFAULT_GAT_HEADS),
                },
                other => return Err(err(format!("unknown layer code {other:?}"))),
            };
            Ok(LayerSpec { kind, width })
        })
        .collect()
}

impl FromStr for ArchitectureSpec {
    type Err = ArchError;

    /// Parses `LAYERS` or `LAYERS@lr=RATE`; the bare form gets learning rate 0.001.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once("@lr=") {
            Some((layers, lr)) => {
                let lr = lr.parse::<f64>().map_err(|_| ArchError::Parse {
                    input: s.to_string(),
                    reason: "bad learning rate".into(),
                })?;
                ArchitectureSpec::parse(layers, lr)
            }
            None => ArchitectureSpec::parse(s, MIN_LR),
        }
    }
}
