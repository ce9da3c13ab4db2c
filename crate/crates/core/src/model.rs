//! Layer stacks assembled from an [`ArchitectureSpec`].

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::arch::{ArchError, ArchitectureSpec, LayerKind};
use crate::features::Standardizer;
use crate::graph::SegmentGraph;
use crate::layers::{
    gat_backward, gat_forward, linear_backward, linear_forward, sage_backward, sage_forward, Adjacency,
    Aggregation, GatCache, HeadParams, SageCache,
};
use crate::nn::{glorot_uniform, NnError, ParamId, ParamStore};
use crate::rng::rng_from_seed;

/// Node features and adjacency of one graph or of a disjoint union of graphs.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub features: Array2<f64>,
    pub adjacency: Adjacency,
    /// Neighbor subsets for SAGE layers; `None` means full neighborhoods.
    pub sage_adjacency: Option<Adjacency>,
}

impl GraphInput {
    pub fn new(features: Array2<f64>, adjacency: Adjacency) -> Self {
        GraphInput {
            features,
            adjacency,
            sage_adjacency: None,
        }
    }

    pub fn from_graph(graph: &SegmentGraph) -> Self {
        Self::batch(std::slice::from_ref(graph), |row| row.to_vec())
    }

    /// Disjoint union of `graphs`; `transform` maps each raw feature row.
    pub fn batch<F>(graphs: &[SegmentGraph], transform: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let total: usize = graphs.iter().map(SegmentGraph::num_nodes).sum();
        let width = graphs.first().map_or(0, SegmentGraph::num_features);
        let mut features = Array2::zeros((total, width));
        let mut edges = Vec::new();
        let mut offset = 0u32;
        for g in graphs {
            for (i, row) in g.features.iter().enumerate() {
                let mapped = transform(row);
                features
                    .row_mut(offset as usize + i)
                    .assign(&Array1::from(mapped));
            }
            edges.extend(g.edges.iter().map(|&(a, b)| (a + offset, b + offset)));
            offset += g.num_nodes() as u32;
        }
        GraphInput::new(features, Adjacency::from_edges(total, &edges))
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn without_edges(&self) -> Self {
        GraphInput::new(self.features.clone(), Adjacency::empty(self.num_nodes()))
    }
}

#[derive(Debug, Clone)]
enum LayerParams {
    Dense { weight: ParamId, bias: ParamId },
    Gat { heads: Vec<(ParamId, ParamId)>, bias: ParamId },
}

#[derive(Debug, Clone)]
enum LayerCache {
    Linear,
    Sage(SageCache),
    Gat(GatCache),
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Array2<f64>>,
    layers: Vec<LayerCache>,
    pub scores: Vec<f64>,
}

/// A compiled layer stack: which parameters in a [`ParamStore`] belong to
/// which layer.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ArchitectureSpec,
    pub in_features: usize,
    layers: Vec<LayerParams>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Model {
    /// Creates the model and its Glorot-uniform parameters (biases zero).
    ///
    /// Parameters are drawn in layer order from one stream seeded with `seed`:
    /// for each layer its weight, or for attention layers each head's weight
    /// then attention vector.
    pub fn init(spec: &ArchitectureSpec, in_features: usize, seed: u64) -> Result<(Model, ParamStore), ArchError> {
        spec.check_buildable()?;
        let mut rng = rng_from_seed(seed);
        let mut store = ParamStore::new();
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut d_in = in_features;
        for (i, layer) in spec.layers.iter().enumerate() {
            let d_out = layer.width;
            let params = match layer.kind {
                LayerKind::Linear => LayerParams::Dense {
                    weight: store.add(format!("layer{i}.weight"), glorot_uniform(d_in, d_out, d_in, d_out, &mut rng)),
                    bias: store.add(format!("layer{i}.bias"), Array2::zeros((1, d_out))),
                },
                LayerKind::SageMean | LayerKind::SageMax => LayerParams::Dense {
                    weight: store.add(
                        format!("layer{i}.weight"),
                        glorot_uniform(2 * d_in, d_out, 2 * d_in, d_out, &mut rng),
                    ),
                    bias: store.add(format!("layer{i}.bias"), Array2::zeros((1, d_out))),
                },
                LayerKind::Gat { heads } => {
                    let heads = (0..heads)
                        .map(|l| {
                            let w = store.add(
                                format!("layer{i}.head{l}.weight"),
                                glorot_uniform(d_in, d_out, d_in, d_out, &mut rng),
                            );
                            let a = store.add(
                                format!("layer{i}.head{l}.attention"),
                                glorot_uniform(2 * d_out, 1, 2 * d_out, 1, &mut rng),
                            );
                            (w, a)
                        })
                        .collect();
                    LayerParams::Gat {
                        heads,
                        bias: store.add(format!("layer{i}.bias"), Array2::zeros((1, d_out))),
                    }
                }
            };
            layers.push(params);
            d_in = d_out;
        }
        Ok((
            Model {
                spec: spec.clone(),
                in_features,
                layers,
            },
            store,
        ))
    }

    /// Rebuilds the layer-to-parameter mapping for an existing store, e.g. one
    /// restored from a checkpoint.
    pub fn bind(spec: &ArchitectureSpec, in_features: usize, store: &ParamStore) -> Result<Model, NnError> {
        let (model, fresh) = Model::init(spec, in_features, 0).map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
        if fresh.params().len() != store.params().len() {
            return Err(NnError::ShapeMismatch("parameter count differs from architecture".into()));
        }
        for (a, b) in fresh.params().iter().zip(store.params()) {
            if a.name != b.name || a.value.dim() != b.value.dim() {
                return Err(NnError::ShapeMismatch(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    b.name,
                    b.value.dim(),
                    a.name,
                    a.value.dim()
                )));
            }
        }
        Ok(model)
    }

    /// Scores in (0, 1), one per node.
    pub fn forward(&self, store: &ParamStore, input: &GraphInput) -> Result<ForwardCache, NnError> {
        if input.features.ncols() != self.in_features {
            return Err(NnError::ShapeMismatch(format!(
                "model expects {} features, graph has {}",
                self.in_features,
                input.features.ncols()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = input.features.clone();
        for (i, (spec, params)) in self.spec.layers.iter().zip(&self.layers).enumerate() {
            let (out, cache) = match (spec.kind, params) {
                (LayerKind::Linear, LayerParams::Dense { weight, bias }) => (
                    linear_forward(&h, store.value(*weight), store.value(*bias))?,
                    LayerCache::Linear,
                ),
                (LayerKind::SageMean | LayerKind::SageMax, LayerParams::Dense { weight, bias }) => {
                    let agg = if spec.kind == LayerKind::SageMean {
                        Aggregation::Mean
                    } else {
                        Aggregation::Max
                    };
                    let adj = input.sage_adjacency.as_ref().unwrap_or(&input.adjacency);
                    let (out, cache) = sage_forward(&h, adj, store.value(*weight), store.value(*bias), agg)?;
                    (out, LayerCache::Sage(cache))
                }
                (LayerKind::Gat { .. }, LayerParams::Gat { heads, bias }) => {
                    let hp = head_params(store, heads);
                    let (out, cache) = gat_forward(&h, &input.adjacency, &hp, store.value(*bias))?;
                    (out, LayerCache::Gat(cache))
                }
                _ => unreachable!("layer params built from the same spec"),
            };
            let activated = if i == last {
                out.mapv(sigmoid)
            } else {
                out.mapv(|x| x.max(0.0))
            };
            inputs.push(std::mem::replace(&mut h, activated));
            pre.push(out);
            caches.push(cache);
        }
        let scores = h.column(0).to_vec();
        Ok(ForwardCache {
            inputs,
            pre,
            layers: caches,
            scores,
        })
    }

    pub fn predict(&self, store: &ParamStore, input: &GraphInput) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(store, input)?.scores)
    }

    /// Accumulates `d loss / d param` into `store` given `d loss / d score`.
    pub fn backward(&self, store: &mut ParamStore, input: &GraphInput, cache: &ForwardCache, d_scores: &[f64]) {
        let last = self.layers.len() - 1;
        // Through the sigmoid.
        let mut d_out = Array2::from_shape_fn((d_scores.len(), 1), |(k, _)| {
            let s = cache.scores[k];
            d_scores[k] * s * (1.0 - s)
        });
        for i in (0..=last).rev() {
            if i != last {
                d_out.zip_mut_with(&cache.pre[i], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            let h = &cache.inputs[i];
            let d_input = match (&self.layers[i], &cache.layers[i]) {
                (LayerParams::Dense { weight, bias }, LayerCache::Linear) => {
                    let g = linear_backward(h, store.value(*weight), &d_out);
                    store.accumulate(*weight, &g.weight);
                    store.accumulate(*bias, &g.bias);
                    g.input
                }
                (LayerParams::Dense { weight, bias }, LayerCache::Sage(sc)) => {
                    let adj = input.sage_adjacency.as_ref().unwrap_or(&input.adjacency);
                    let g = sage_backward(sc, adj, store.value(*weight), &d_out);
                    store.accumulate(*weight, &g.weight);
                    store.accumulate(*bias, &g.bias);
                    g.input
                }
                (LayerParams::Gat { heads, bias }, LayerCache::Gat(gc)) => {
                    let g = {
                        let hp = head_params(store, heads);
                        gat_backward(h, &input.adjacency, &hp, gc, &d_out)
                    };
                    for ((w, a), (dw, da)) in heads.iter().zip(&g.heads) {
                        store.accumulate(*w, dw);
                        store.accumulate(*a, da);
                    }
                    store.accumulate(*bias, &g.bias);
                    g.input
                }
                _ => unreachable!("cache built by this model"),
            };
            d_out = d_input;
        }
    }
}

fn head_params<'a>(store: &'a ParamStore, heads: &[(ParamId, ParamId)]) -> Vec<HeadParams<'a>> {
    heads
        .iter()
        .map(|&(w, a)| HeadParams {
            weight: store.value(w),
            attention: store.value(a),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Best parameters of one training run plus everything needed to score new graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: String,
    pub learning_rate: f64,
    pub in_features: usize,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub params: BTreeMap<String, StoredParam>,
}

impl Checkpoint {
    pub fn capture(model: &Model, store: &ParamStore, standardizer: &Standardizer) -> Self {
        let params = store
            .params()
            .iter()
            .map(|p| {
                let (r, c) = p.value.dim();
                (
                    p.name.clone(),
                    StoredParam {
                        shape: [r, c],
                        values: p.value.iter().copied().collect(),
                    },
                )
            })
            .collect();
        Checkpoint {
            arch: model.spec.layer_string(),
            learning_rate: model.spec.learning_rate,
            in_features: model.in_features,
            feature_means: standardizer.means.clone(),
            feature_stds: standardizer.stds.clone(),
            params,
        }
    }

    pub fn restore(&self) -> Result<(Model, ParamStore, Standardizer), NnError> {
        let spec = ArchitectureSpec::parse(&self.arch, self.learning_rate)
            .map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
        let (model, mut store) =
            Model::init(&spec, self.in_features, 0).map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
        for p in store.params_mut() {
            let stored = self
                .params
                .get(&p.name)
                .ok_or_else(|| NnError::ShapeMismatch(format!("checkpoint lacks {}", p.name)))?;
            let value = Array2::from_shape_vec((stored.shape[0], stored.shape[1]), stored.values.clone())
                .map_err(|e| NnError::ShapeMismatch(format!("{}: {e}", p.name)))?;
            if value.dim() != p.value.dim() {
                return Err(NnError::ShapeMismatch(format!("{} has wrong shape", p.name)));
            }
            p.value = value;
        }
        let standardizer = Standardizer {
            means: self.feature_means.clone(),
            stds: self.feature_stds.clone(),
        };
        Ok((model, store, standardizer))
    }
}
