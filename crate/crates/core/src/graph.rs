//! Segment adjacency graphs with adjusted-IoU targets.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{DataError, DatasetManifest, LabelMask, ProbMap};
use crate::features::{feature_names, segment_features};
use crate::segments::{argmax_prediction, connected_components, geometry, SegmentMap, NO_SEGMENT};

/// One frame: a node per predicted segment, an undirected edge per pair of
/// 8-adjacent segments.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGraph {
    pub frame_id: String,
    pub features: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
    /// Canonical `(a, b)` pairs with `a < b`, sorted.
    pub edges: Vec<(u32, u32)>,
    pub iou_adj: Vec<f64>,
    pub iou0: Vec<u8>,
}

impl SegmentGraph {
    pub fn num_nodes(&self) -> usize {
        self.features.len()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Copy with every edge removed.
    pub fn without_edges(&self) -> SegmentGraph {
        SegmentGraph {
            edges: Vec::new(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let m = self.num_nodes();
        if self.iou_adj.len() != m || self.iou0.len() != m {
            return Err(format!(
                "{m} nodes but {} iou_adj and {} iou0 entries",
                self.iou_adj.len(),
                self.iou0.len()
            ));
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.edges {
            if a == b {
                return Err(format!("self-loop on node {a}"));
            }
            if a as usize >= m || b as usize >= m {
                return Err(format!("edge ({a}, {b}) references a node >= {m}"));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(format!("duplicate edge ({a}, {b})"));
            }
        }
        for (i, (&iou, &bin)) in self.iou_adj.iter().zip(&self.iou0).enumerate() {
            if !(0.0..=1.0).contains(&iou) {
                return Err(format!("iou_adj[{i}] = {iou} outside [0, 1]"));
            }
            if bin != binarize_iou(iou) {
                return Err(format!("iou0[{i}] = {bin} disagrees with iou_adj {iou}"));
            }
        }
        Ok(())
    }
}

/// All pairs of segments with at least one pair of 8-adjacent pixels.
pub fn build_edges(map: &SegmentMap) -> Vec<(u32, u32)> {
    let (h, w) = (map.height as usize, map.width as usize);
    let mut edges = Vec::new();
    let mut link = |a: u32, b: u32| {
        if a != b && a != NO_SEGMENT && b != NO_SEGMENT {
            edges.push((a.min(b), a.max(b)));
        }
    };
    for r in 0..h {
        for c in 0..w {
            let a = map.seg_id[r * w + c];
            // Forward half of the neighborhood covers every adjacent pair once.
            if c + 1 < w {
                link(a, map.seg_id[r * w + c + 1]);
            }
            if r + 1 < h {
                if c > 0 {
                    link(a, map.seg_id[(r + 1) * w + c - 1]);
                }
                link(a, map.seg_id[(r + 1) * w + c]);
                if c + 1 < w {
                    link(a, map.seg_id[(r + 1) * w + c + 1]);
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Adjusted IoU of predicted segment `segment`.
///
/// `K'` is the union of ground-truth segments of the predicted class that touch
/// the segment, `Q` the other predicted segments touching `K'`. The result is
/// `|k ∩ K'| / |k ∪ (K' minus the pixels of Q)|`, and 0 when `K'` is empty.
pub fn adjusted_iou(segment: usize, pred: &SegmentMap, gt: &SegmentMap) -> f64 {
    let class = pred.seg_class[segment];
    let pixels = &pred.seg_pixels[segment];

    let gt_in_k: BTreeSet<u32> = pixels
        .iter()
        .map(|&p| gt.seg_id[p as usize])
        .filter(|&g| g != NO_SEGMENT && gt.seg_class[g as usize] == class)
        .collect();
    if gt_in_k.is_empty() {
        return 0.0;
    }

    let mut intersection = 0usize;
    for &p in pixels {
        let g = gt.seg_id[p as usize];
        if g != NO_SEGMENT && gt_in_k.contains(&g) {
            intersection += 1;
        }
    }

    let others: BTreeSet<u32> = gt_in_k
        .iter()
        .flat_map(|&g| gt.seg_pixels[g as usize].iter())
        .map(|&p| pred.seg_id[p as usize])
        .filter(|&s| s as usize != segment)
        .collect();

    // Pixels of K' outside the segment that no segment of Q claims.
    let mut outside = 0usize;
    for &g in &gt_in_k {
        for &p in &gt.seg_pixels[g as usize] {
            let s = pred.seg_id[p as usize];
            if s as usize != segment && !others.contains(&s) {
                outside += 1;
            }
        }
    }
    intersection as f64 / (pixels.len() + outside) as f64
}

/// 0 for an adjusted IoU of exactly zero, 1 otherwise.
pub fn binarize_iou(iou_adj: f64) -> u8 {
    u8::from(iou_adj > 0.0)
}

/// Full per-frame pipeline from softmax output and ground truth to a graph.
pub fn build_graph(frame_id: &str, probs: &ProbMap, gt: &LabelMask) -> Result<SegmentGraph, DataError> {
    gt.check_matches(probs)?;
    gt.check_labels(probs.num_classes)?;
    let pred_mask = argmax_prediction(probs);
    let pred = connected_components(&pred_mask, false);
    let gt_segments = connected_components(gt, true);
    let geo = geometry(&pred);
    let m = pred.num_segments();

    let features = (0..m)
        .map(|k| segment_features(k, &pred, &geo, probs, m))
        .collect();
    let iou_adj: Vec<f64> = (0..m).map(|k| adjusted_iou(k, &pred, &gt_segments)).collect();
    let iou0 = iou_adj.iter().map(|&v| binarize_iou(v)).collect();
    Ok(SegmentGraph {
        frame_id: frame_id.to_string(),
        features,
        feature_names: feature_names(probs.num_classes as usize),
        edges: build_edges(&pred),
        iou_adj,
        iou0,
    })
}

/// Graphs of every frame of a dataset, in manifest order.
pub fn build_dataset_graphs(manifest: &DatasetManifest, root: &Path) -> Result<Vec<SegmentGraph>, DataError> {
    manifest
        .frames
        .par_iter()
        .map(|frame| {
            let (probs, gt) = manifest.load_frame(root, frame)?;
            build_graph(&frame.id, &probs, &gt)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub frames: usize,
    pub segments: usize,
    pub edges: usize,
    /// Share of segments with `IoU_0 = 1`.
    pub positive_rate: f64,
}

impl GraphSummary {
    pub fn of(graphs: &[SegmentGraph]) -> Self {
        let segments: usize = graphs.iter().map(SegmentGraph::num_nodes).sum();
        let positives: usize = graphs
            .iter()
            .flat_map(|g| &g.iou0)
            .filter(|&&l| l == 1)
            .count();
        GraphSummary {
            frames: graphs.len(),
            segments,
            edges: graphs.iter().map(|g| g.edges.len()).sum(),
            positive_rate: if segments == 0 { 0.0 } else { positives as f64 / segments as f64 },
        }
    }
}
