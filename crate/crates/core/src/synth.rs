//! Synthetic (probability map, ground truth) pairs where the chance that a
//! segment is mispredicted grows with the number of incompatible neighbors.
//!
//! A frame is built in a fixed order of random draws from one stream seeded
//! with `derive_seed(config.seed, frame_seed)`:
//!
//! 1. `num_sites` Voronoi sites, row then column, uniform over the image;
//!    pixel centers go to the nearest site (ties to the lower index). A
//!    layout with an empty cell is redrawn, at most 100 times.
//! 2. one uniform class per cell.
//! 3. per ground-truth segment (canonical order): one uniform deciding a flip
//!    with probability `p0 + p1 * phi`, where `phi` is the fraction of adjacent
//!    ground-truth segments whose class is incompatible; a flipped segment
//!    then draws a replacement class uniformly among the other classes.
//! 4. per predicted segment (canonical order): a confidence `c` uniform in
//!    `[confidence_low, confidence_high]`.
//! 5. per pixel (row-major) and class: noise `g` uniform in `[0, 1)`. The
//!    pixel's vector is `c` on the predicted class, `(1 - c) / (q - 1)`
//!    elsewhere, plus `noise_scale * g`, renormalized.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{write_labelmask, write_probmap, DataError, DatasetManifest, LabelMask, ProbMap};
use crate::graph::build_edges;
use crate::rng::{below, derive_seed, rng_from_seed, unit_f64, Rng};
use crate::segments::connected_components;

pub const MAX_LAYOUT_ATTEMPTS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("no Voronoi layout without empty cells after {0} attempts")]
    DegenerateCell(usize),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub height: u32,
    pub width: u32,
    pub num_sites: usize,
    pub num_classes: u16,
    /// Symmetric 0/1 matrix with zero diagonal; `None` selects
    /// `M[a][b] = 1` iff `a != b` and `(a + b) % 3 == 0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub incompatibility: Option<Vec<Vec<u8>>>,
    pub base_error: f64,
    pub neighbor_error_gain: f64,
    pub confidence_low: f64,
    pub confidence_high: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 128,
            width: 128,
            num_sites: 40,
            num_classes: 8,
            incompatibility: None,
            base_error: 0.05,
            neighbor_error_gain: 0.45,
            confidence_low: 0.75,
            confidence_high: 0.97,
            noise_scale: 0.03,
            seed: 0,
        }
    }
}

pub fn default_incompatibility(num_classes: usize) -> Vec<Vec<u8>> {
    (0..num_classes)
        .map(|a| {
            (0..num_classes)
                .map(|b| u8::from(a != b && (a + b) % 3 == 0))
                .collect()
        })
        .collect()
}

impl SynthConfig {
    pub fn incompatibility_matrix(&self) -> Vec<Vec<u8>> {
        self.incompatibility
            .clone()
            .unwrap_or_else(|| default_incompatibility(self.num_classes as usize))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let q = self.num_classes as usize;
        if self.height == 0 || self.width == 0 {
            return bad("image must be at least 1x1".into());
        }
        if q < 2 {
            return bad("need at least 2 classes".into());
        }
        if self.num_sites == 0 || self.num_sites > self.height as usize * self.width as usize {
            return bad(format!("num_sites {} must be in 1..=pixels", self.num_sites));
        }
        let (p0, p1) = (self.base_error, self.neighbor_error_gain);
        if !(p0 >= 0.0 && p1 >= 0.0 && p0 + p1 <= 1.0) {
            return bad(format!("need 0 <= p0, 0 <= p1, p0 + p1 <= 1 (got {p0}, {p1})"));
        }
        let (lo, hi) = (self.confidence_low, self.confidence_high);
        if !(lo < hi && hi <= 1.0) {
            return bad(format!("need confidence_low < confidence_high <= 1 (got {lo}, {hi})"));
        }
        if !(self.noise_scale >= 0.0) {
            return bad("noise_scale must be non-negative".into());
        }
        // The noisy runner-up must stay below the lowest confidence.
        if lo <= (1.0 - lo) / (q - 1) as f64 + self.noise_scale {
            return bad(format!(
                "confidence_low {lo} too small to keep the argmax under noise {}",
                self.noise_scale
            ));
        }
        let m = self.incompatibility_matrix();
        if m.len() != q || m.iter().any(|row| row.len() != q) {
            return bad(format!("incompatibility matrix must be {q}x{q}"));
        }
        for a in 0..q {
            if m[a][a] != 0 {
                return bad(format!("incompatibility diagonal at {a} must be 0"));
            }
            for b in 0..q {
                if m[a][b] > 1 || m[a][b] != m[b][a] {
                    return bad("incompatibility matrix must be symmetric 0/1".into());
                }
            }
        }
        Ok(())
    }
}

/// Ground-truth segment bookkeeping from step 3, kept for analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipRecord {
    pub phi: f64,
    pub flipped: bool,
}

#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub probs: ProbMap,
    pub gt: LabelMask,
    pub predicted: LabelMask,
    pub flips: Vec<FlipRecord>,
}

fn voronoi_cells(config: &SynthConfig, rng: &mut Rng) -> Result<Vec<u32>, SynthError> {
    let (h, w) = (config.height as usize, config.width as usize);
    let n = config.num_sites;
    for _ in 0..MAX_LAYOUT_ATTEMPTS {
        let sites: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let r = unit_f64(rng) * h as f64;
                let c = unit_f64(rng) * w as f64;
                (r, c)
            })
            .collect();
        let mut cell = vec![0u32; h * w];
        let mut used = vec![false; n];
        for r in 0..h {
            for c in 0..w {
                let (pr, pc) = (r as f64 + 0.5, c as f64 + 0.5);
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (i, &(sr, sc)) in sites.iter().enumerate() {
                    let d = (pr - sr) * (pr - sr) + (pc - sc) * (pc - sc);
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                cell[r * w + c] = best as u32;
                used[best] = true;
            }
        }
        if used.iter().all(|&u| u) {
            return Ok(cell);
        }
    }
    Err(SynthError::DegenerateCell(MAX_LAYOUT_ATTEMPTS))
}

pub fn generate_frame_detailed(config: &SynthConfig, frame_seed: u64) -> Result<SynthFrame, SynthError> {
    config.validate()?;
    let q = config.num_classes as usize;
    let incompatible = config.incompatibility_matrix();
    let mut rng = rng_from_seed(derive_seed(config.seed, frame_seed));

    let cells = voronoi_cells(config, &mut rng)?;
    let cell_class: Vec<u16> = (0..config.num_sites)
        .map(|_| below(&mut rng, q as u64) as u16)
        .collect();
    let gt = LabelMask::new(
        config.height,
        config.width,
        cells.iter().map(|&c| cell_class[c as usize]).collect(),
    )?;

    let gt_segments = connected_components(&gt, false);
    let mut neighbors = vec![Vec::new(); gt_segments.num_segments()];
    for (a, b) in build_edges(&gt_segments) {
        neighbors[a as usize].push(b as usize);
        neighbors[b as usize].push(a as usize);
    }
    let mut predicted = gt.clone();
    let mut flips = Vec::with_capacity(neighbors.len());
    for (k, adj) in neighbors.iter().enumerate() {
        let class = gt_segments.seg_class[k] as usize;
        let phi = if adj.is_empty() {
            0.0
        } else {
            let bad = adj
                .iter()
                .filter(|&&v| incompatible[class][gt_segments.seg_class[v] as usize] == 1)
                .count();
            bad as f64 / adj.len() as f64
        };
        let flip_prob = config.base_error + config.neighbor_error_gain * phi;
        let flipped = unit_f64(&mut rng) < flip_prob;
        if flipped {
            let new_class = ((class as u64 + 1 + below(&mut rng, q as u64 - 1)) % q as u64) as u16;
            for &p in &gt_segments.seg_pixels[k] {
                predicted.labels[p as usize] = new_class;
            }
        }
        flips.push(FlipRecord { phi, flipped });
    }

    let pred_segments = connected_components(&predicted, false);
    let span = config.confidence_high - config.confidence_low;
    let confidence: Vec<f64> = (0..pred_segments.num_segments())
        .map(|_| config.confidence_low + span * unit_f64(&mut rng))
        .collect();

    let mut probs = Vec::with_capacity(gt.num_pixels() * q);
    let mut row = vec![0.0f64; q];
    for (pixel, &class) in predicted.labels.iter().enumerate() {
        let c = confidence[pred_segments.seg_id[pixel] as usize];
        let rest = (1.0 - c) / (q - 1) as f64;
        let mut total = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            let base = if j == class as usize { c } else { rest };
            *v = base + config.noise_scale * unit_f64(&mut rng);
            total += *v;
        }
        probs.extend(row.iter().map(|v| (v / total) as f32));
    }
    let probs = ProbMap::new(config.height, config.width, config.num_classes, probs)?;
    Ok(SynthFrame {
        probs,
        gt,
        predicted,
        flips,
    })
}

/// `(probability map, ground truth)` of frame `frame_seed`.
pub fn generate_frame(config: &SynthConfig, frame_seed: u64) -> Result<(ProbMap, LabelMask), SynthError> {
    let frame = generate_frame_detailed(config, frame_seed)?;
    Ok((frame.probs, frame.gt))
}

pub fn frame_id(index: usize) -> String {
    format!("frame_{index:05}")
}

/// Writes `num_frames` frames (seeds `0..num_frames`) plus the manifest under `root`.
pub fn write_dataset(config: &SynthConfig, num_frames: usize, root: &Path) -> Result<DatasetManifest, SynthError> {
    config.validate()?;
    for dir in ["prob", "gt"] {
        let path = root.join(dir);
        std::fs::create_dir_all(&path).map_err(|source| DataError::Io { path, source })?;
    }
    let manifest = DatasetManifest::for_frames(config.num_classes, (0..num_frames).map(frame_id));
    manifest
        .frames
        .par_iter()
        .enumerate()
        .try_for_each(|(i, entry)| -> Result<(), SynthError> {
            let (probs, gt) = generate_frame(config, i as u64)?;
            write_probmap(&probs, &root.join(&entry.probmap))?;
            write_labelmask(&gt, &root.join(&entry.labelmask))?;
            Ok(())
        })?;
    manifest.save(root)?;
    Ok(manifest)
}
