//! Per-segment uncertainty and geometry features.
//!
//! Layout of a feature vector for `q` classes (`16 + q` entries):
//!
//! | index | name | meaning |
//! |---|---|---|
//! | 0 | `S` | segment size in pixels |
//! | 1 | `S_in` | interior pixels |
//! | 2 | `S_bd` | boundary pixels |
//! | 3 | `S_rel` | `S / S_bd` |
//! | 4 | `S_rel_in` | `S_in / S_bd` |
//! | 5 | `bary_h` | barycenter row / image height |
//! | 6 | `bary_w` | barycenter column / image width |
//! | 7 | `num_segments` | predicted segments in the frame |
//! | 8..=10 | `E`, `E_in`, `E_bd` | mean normalized entropy over all / interior / boundary pixels |
//! | 11..=13 | `D`, `D_in`, `D_bd` | mean probability margin, same pixel sets |
//! | 14, 15 | `E_var`, `D_var` | population variance over the whole segment |
//! | 16.. | `p_mean_<c>` | mean softmax probability of class `c` |
//!
//! Segments without interior pixels report their whole-segment means as
//! interior means.

use crate::dataio::ProbMap;
use crate::segments::{SegmentGeometry, SegmentMap};

pub const NUM_BASE_FEATURES: usize = 16;

const BASE_NAMES: [&str; NUM_BASE_FEATURES] = [
    "S",
    "S_in",
    "S_bd",
    "S_rel",
    "S_rel_in",
    "bary_h",
    "bary_w",
    "num_segments",
    "E",
    "E_in",
    "E_bd",
    "D",
    "D_in",
    "D_bd",
    "E_var",
    "D_var",
];

pub fn feature_names(num_classes: usize) -> Vec<String> {
    BASE_NAMES
        .iter()
        .map(|s| s.to_string())
        .chain((0..num_classes).map(|c| format!("p_mean_{c}")))
        .collect()
}

/// Entropy normalized by `log q`, with `0 log 0 = 0`; clamped to `[0, 1]`.
pub fn pixel_entropy(row: &[f64]) -> f64 {
    let q = row.len();
    debug_assert!(q >= 2);
    let h: f64 = row
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    (h / (q as f64).ln()).clamp(0.0, 1.0)
}

/// `1 - p_max + p_second`. An exact tie for the maximum gives 1.
pub fn pixel_margin(row: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in row {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    (1.0 - first + second).clamp(0.0, 1.0)
}

#[derive(Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn variance(&self) -> f64 {
        let m = self.mean();
        (self.sum_sq / self.n as f64 - m * m).max(0.0)
    }
}

/// Feature vector of one predicted segment, in the layout of the module docs.
pub fn segment_features(
    segment: usize,
    segments: &SegmentMap,
    geometry: &SegmentGeometry,
    probs: &ProbMap,
    num_segments_in_frame: usize,
) -> Vec<f64> {
    let q = probs.num_classes as usize;
    let shape = geometry.shapes[segment];
    let pixels = &segments.seg_pixels[segment];
    assert!(!pixels.is_empty(), "segment {segment} has no pixels");

    let (mut e_all, mut e_in, mut e_bd) = (Moments::default(), Moments::default(), Moments::default());
    let (mut d_all, mut d_in, mut d_bd) = (Moments::default(), Moments::default(), Moments::default());
    let mut class_sums = vec![0.0; q];
    let mut row = vec![0.0; q];
    for &p in pixels {
        for (dst, &src) in row.iter_mut().zip(probs.row(p as usize)) {
            *dst = f64::from(src);
        }
        let e = pixel_entropy(&row);
        let d = pixel_margin(&row);
        e_all.push(e);
        d_all.push(d);
        if geometry.interior[p as usize] {
            e_in.push(e);
            d_in.push(d);
        } else {
            e_bd.push(e);
            d_bd.push(d);
        }
        for (acc, &v) in class_sums.iter_mut().zip(&row) {
            *acc += v;
        }
    }
    let (e_in_mean, d_in_mean) = if e_in.n == 0 {
        (e_all.mean(), d_all.mean())
    } else {
        (e_in.mean(), d_in.mean())
    };

    let s = shape.size as f64;
    let s_bd = shape.boundary_size as f64;
    let mut out = Vec::with_capacity(NUM_BASE_FEATURES + q);
    out.extend_from_slice(&[
        s,
        shape.interior_size as f64,
        s_bd,
        s / s_bd,
        shape.interior_size as f64 / s_bd,
        shape.barycenter.0 / f64::from(segments.height),
        shape.barycenter.1 / f64::from(segments.width),
        num_segments_in_frame as f64,
        e_all.mean(),
        e_in_mean,
        e_bd.mean(),
        d_all.mean(),
        d_in_mean,
        d_bd.mean(),
        e_all.variance(),
        d_all.variance(),
    ]);
    out.extend(class_sums.iter().map(|v| (v / s).clamp(0.0, 1.0)));
    out
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("standardization needs at least 2 training rows, got {0}")]
    EmptyTrainSet(usize),
}

/// Per-feature z-scoring with statistics of the training rows.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Features whose training std falls below this map to zero.
pub const MIN_STD: f64 = 1e-12;

impl Standardizer {
    pub fn fit<'a, I>(rows: I) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0usize;
        let mut sums: Vec<f64> = Vec::new();
        let mut rows_seen: Vec<&[f64]> = Vec::new();
        for row in rows {
            if sums.is_empty() {
                sums = vec![0.0; row.len()];
            }
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v;
            }
            rows_seen.push(row);
            n += 1;
        }
        if n < 2 {
            return Err(FeatureError::EmptyTrainSet(n));
        }
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; means.len()];
        for row in rows_seen {
            for ((acc, &v), m) in sq.iter_mut().zip(row).zip(&means) {
                *acc += (v - m) * (v - m);
            }
        }
        let stds = sq.iter().map(|s| (s / n as f64).sqrt()).collect();
        Ok(Standardizer { means, stds })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| if s < MIN_STD { 0.0 } else { (v - m) / s })
            .collect()
    }
}

/// Fits on `train` and standardizes both sets.
pub fn standardize(
    train: &[Vec<f64>],
    eval: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Standardizer), FeatureError> {
    let st = Standardizer::fit(train.iter().map(Vec::as_slice))?;
    let tr = train.iter().map(|r| st.apply(r)).collect();
    let ev = eval.iter().map(|r| st.apply(r)).collect();
    Ok((tr, ev, st))
}
