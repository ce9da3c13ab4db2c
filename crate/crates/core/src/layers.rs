//! Forward and backward passes of the linear, GraphSAGE (mean/max) and
//! graph-attention layers.
//!
//! Node features are rows of an `M x d` matrix. Weights are stored
//! `d_in x d_out`, biases as `1 x d_out`, so a layer output is `H W + b`.
//! Activations are applied by the model, not here.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::nn::NnError;
use crate::rng::{below, derive_seed, rng_from_seed};

/// Negative slope of the attention LeakyReLU.
pub const ATTENTION_SLOPE: f64 = 0.2;

/// Sorted neighbor lists of an undirected graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn from_edges(num_nodes: usize, edges: &[(u32, u32)]) -> Self {
        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(a, b) in edges {
            neighbors[a as usize].push(b as usize);
            neighbors[b as usize].push(a as usize);
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }
        Adjacency { neighbors }
    }

    pub fn empty(num_nodes: usize) -> Self {
        Adjacency {
            neighbors: vec![Vec::new(); num_nodes],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    /// Keeps at most `sample_size` neighbors per node, drawn uniformly without
    /// replacement from a stream seeded by `(seed, node)`.
    pub fn sampled(&self, sample_size: usize, seed: u64) -> Adjacency {
        let neighbors = self
            .neighbors
            .iter()
            .enumerate()
            .map(|(node, list)| {
                if list.len() <= sample_size {
                    return list.clone();
                }
                let mut rng = rng_from_seed(derive_seed(seed, node as u64));
                let mut pool = list.clone();
                // Partial Fisher-Yates: the first `sample_size` slots are the sample.
                for i in 0..sample_size {
                    let j = i + below(&mut rng, (pool.len() - i) as u64) as usize;
                    pool.swap(i, j);
                }
                pool.truncate(sample_size);
                pool.sort_unstable();
                pool
            })
            .collect();
        Adjacency { neighbors }
    }
}

fn check_weight(h: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>, in_factor: usize, layer: &str) -> Result<(), NnError> {
    let expected_in = h.ncols() * in_factor;
    if w.nrows() != expected_in {
        return Err(NnError::ShapeMismatch(format!(
            "{layer}: weight has {} rows, input needs {expected_in}",
            w.nrows()
        )));
    }
    if b.dim() != (1, w.ncols()) {
        return Err(NnError::ShapeMismatch(format!(
            "{layer}: bias is {:?}, expected (1, {})",
            b.dim(),
            w.ncols()
        )));
    }
    Ok(())
}

fn check_nodes(h: &Array2<f64>, adj: &Adjacency) -> Result<(), NnError> {
    if h.nrows() != adj.num_nodes() {
        return Err(NnError::ShapeMismatch(format!(
            "{} feature rows for {} nodes",
            h.nrows(),
            adj.num_nodes()
        )));
    }
    Ok(())
}

/// Parameter gradients of a linear or SAGE layer plus the input gradient.
#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Array2<f64>,
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

pub fn linear_forward(h: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>, NnError> {
    check_weight(h, w, b, 1, "linear")?;
    Ok(h.dot(w) + b)
}

pub fn linear_backward(h: &Array2<f64>, w: &Array2<f64>, d_out: &Array2<f64>) -> DenseGrads {
    DenseGrads {
        input: d_out.dot(&w.t()),
        weight: h.t().dot(d_out),
        bias: d_out.sum_axis(Axis(0)).insert_axis(Axis(0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Max,
}

/// What the SAGE backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct SageCache {
    /// `[h_k | n_k]` per node.
    pub concat: Array2<f64>,
    /// For max aggregation: which neighbor supplied each coordinate.
    argmax: Option<Vec<Vec<usize>>>,
}

/// `W [h_k | AGG(h_v : v in N(k))] + b`; an empty neighborhood aggregates to 0.
pub fn sage_forward(
    h: &Array2<f64>,
    adj: &Adjacency,
    w: &Array2<f64>,
    b: &Array2<f64>,
    agg: Aggregation,
) -> Result<(Array2<f64>, SageCache), NnError> {
    check_nodes(h, adj)?;
    check_weight(h, w, b, 2, "sage")?;
    let (m, d) = h.dim();
    let mut concat = Array2::zeros((m, 2 * d));
    concat.slice_mut(s![.., ..d]).assign(h);
    let mut argmax = (agg == Aggregation::Max).then(|| vec![Vec::new(); m]);
    for (k, nbrs) in adj.neighbors.iter().enumerate() {
        if nbrs.is_empty() {
            continue;
        }
        let mut agg_row = concat.slice_mut(s![k, d..]);
        match agg {
            Aggregation::Mean => {
                for &v in nbrs {
                    agg_row += &h.row(v);
                }
                agg_row /= nbrs.len() as f64;
            }
            Aggregation::Max => {
                let mut best = vec![nbrs[0]; d];
                for j in 0..d {
                    let mut val = h[[nbrs[0], j]];
                    for &v in &nbrs[1..] {
                        if h[[v, j]] > val {
                            val = h[[v, j]];
                            best[j] = v;
                        }
                    }
                    agg_row[j] = val;
                }
                if let Some(a) = argmax.as_mut() {
                    a[k] = best;
                }
            }
        }
    }
    let out = concat.dot(w) + b;
    Ok((out, SageCache { concat, argmax }))
}

pub fn sage_backward(cache: &SageCache, adj: &Adjacency, w: &Array2<f64>, d_out: &Array2<f64>) -> DenseGrads {
    let d = cache.concat.ncols() / 2;
    let d_concat = d_out.dot(&w.t());
    let mut d_input = d_concat.slice(s![.., ..d]).to_owned();
    for (k, nbrs) in adj.neighbors.iter().enumerate() {
        if nbrs.is_empty() {
            continue;
        }
        let d_agg = d_concat.slice(s![k, d..]);
        match &cache.argmax {
            None => {
                let scale = 1.0 / nbrs.len() as f64;
                for &v in nbrs {
                    d_input.row_mut(v).scaled_add(scale, &d_agg);
                }
            }
            Some(argmax) => {
                for (j, &v) in argmax[k].iter().enumerate() {
                    d_input[[v, j]] += d_agg[j];
                }
            }
        }
    }
    DenseGrads {
        input: d_input,
        weight: cache.concat.t().dot(d_out),
        bias: d_out.sum_axis(Axis(0)).insert_axis(Axis(0)),
    }
}

/// Weights of one attention head: projection `d_in x d_out` and attention
/// vector `2 d_out x 1` split as `[self | neighbor]`.
#[derive(Debug, Clone, Copy)]
pub struct HeadParams<'a> {
    pub weight: &'a Array2<f64>,
    pub attention: &'a Array2<f64>,
}

#[derive(Debug, Clone)]
struct HeadCache {
    projected: Array2<f64>,
    /// Per node, attention weights over `[k, neighbors...]`.
    alpha: Vec<Vec<f64>>,
    /// Per node, whether each pre-activation score was positive.
    positive: Vec<Vec<bool>>,
}

#[derive(Debug, Clone)]
pub struct GatCache {
    heads: Vec<HeadCache>,
}

impl GatCache {
    /// Attention weights of `head` for node `k` over `[k, neighbors of k...]`.
    pub fn attention(&self, head: usize, k: usize) -> &[f64] {
        &self.heads[head].alpha[k]
    }
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        ATTENTION_SLOPE * x
    }
}

/// Multi-head attention layer; head outputs are averaged, then `b` is added.
///
/// Head `l`: `z = W_l h`, `e_kv = LeakyReLU(a_l . [z_k | z_v])` for
/// `v in N(k) + {k}`, `alpha_k = softmax(e_k)`, output `sum_v alpha_kv z_v`.
pub fn gat_forward(
    h: &Array2<f64>,
    adj: &Adjacency,
    heads: &[HeadParams<'_>],
    b: &Array2<f64>,
) -> Result<(Array2<f64>, GatCache), NnError> {
    check_nodes(h, adj)?;
    if heads.is_empty() {
        return Err(NnError::ShapeMismatch("attention layer without heads".into()));
    }
    let m = h.nrows();
    let d_out = heads[0].weight.ncols();
    let mut out = Array2::zeros((m, d_out));
    let mut caches = Vec::with_capacity(heads.len());
    for head in heads {
        check_weight(h, head.weight, b, 1, "gat")?;
        if head.attention.dim() != (2 * d_out, 1) {
            return Err(NnError::ShapeMismatch(format!(
                "gat: attention vector is {:?}, expected ({}, 1)",
                head.attention.dim(),
                2 * d_out
            )));
        }
        let z = h.dot(head.weight);
        let a = head.attention.column(0);
        let score_self: Array1<f64> = z.dot(&a.slice(s![..d_out]));
        let score_nbr: Array1<f64> = z.dot(&a.slice(s![d_out..]));
        let mut alpha = Vec::with_capacity(m);
        let mut positive = Vec::with_capacity(m);
        for k in 0..m {
            let members = std::iter::once(k).chain(adj.neighbors[k].iter().copied());
            let pre: Vec<f64> = members.clone().map(|v| score_self[k] + score_nbr[v]).collect();
            let e: Vec<f64> = pre.iter().map(|&x| leaky(x)).collect();
            let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = e.iter().map(|&x| (x - max).exp()).collect();
            let total: f64 = exp.iter().sum();
            let weights: Vec<f64> = exp.iter().map(|x| x / total).collect();
            let mut row = out.row_mut(k);
            for (v, &wt) in members.zip(&weights) {
                row.scaled_add(wt / heads.len() as f64, &z.row(v));
            }
            positive.push(pre.iter().map(|&x| x > 0.0).collect());
            alpha.push(weights);
        }
        caches.push(HeadCache {
            projected: z,
            alpha,
            positive,
        });
    }
    out += b;
    Ok((out, GatCache { heads: caches }))
}

pub struct GatGrads {
    pub input: Array2<f64>,
    /// Per head: `(d weight, d attention)`.
    pub heads: Vec<(Array2<f64>, Array2<f64>)>,
    pub bias: Array2<f64>,
}

pub fn gat_backward(
    h: &Array2<f64>,
    adj: &Adjacency,
    heads: &[HeadParams<'_>],
    cache: &GatCache,
    d_out: &Array2<f64>,
) -> GatGrads {
    let m = h.nrows();
    let scale = 1.0 / heads.len() as f64;
    let mut d_input = Array2::zeros(h.raw_dim());
    let mut head_grads = Vec::with_capacity(heads.len());
    for (head, hc) in heads.iter().zip(&cache.heads) {
        let z = &hc.projected;
        let d = z.ncols();
        let a = head.attention.column(0);
        let mut d_z = Array2::<f64>::zeros(z.raw_dim());
        let mut d_score_self = Array1::<f64>::zeros(m);
        let mut d_score_nbr = Array1::<f64>::zeros(m);
        for k in 0..m {
            let g: ArrayView1<f64> = d_out.row(k);
            let members: Vec<usize> = std::iter::once(k).chain(adj.neighbors[k].iter().copied()).collect();
            let alpha = &hc.alpha[k];
            let d_alpha: Vec<f64> = members.iter().map(|&v| scale * g.dot(&z.row(v))).collect();
            let weighted: f64 = alpha.iter().zip(&d_alpha).map(|(a, da)| a * da).sum();
            for (i, &v) in members.iter().enumerate() {
                d_z.row_mut(v).scaled_add(scale * alpha[i], &g);
                let d_e = alpha[i] * (d_alpha[i] - weighted);
                let d_pre = if hc.positive[k][i] { d_e } else { ATTENTION_SLOPE * d_e };
                d_score_self[k] += d_pre;
                d_score_nbr[v] += d_pre;
            }
        }
        let mut d_attention = Array2::zeros((2 * d, 1));
        d_attention
            .slice_mut(s![..d, 0])
            .assign(&z.t().dot(&d_score_self));
        d_attention
            .slice_mut(s![d.., 0])
            .assign(&z.t().dot(&d_score_nbr));
        let a_self = a.slice(s![..d]).insert_axis(Axis(0));
        let a_nbr = a.slice(s![d..]).insert_axis(Axis(0));
        d_z += &d_score_self.view().insert_axis(Axis(1)).dot(&a_self);
        d_z += &d_score_nbr.view().insert_axis(Axis(1)).dot(&a_nbr);
        d_input += &d_z.dot(&head.weight.t());
        head_grads.push((h.t().dot(&d_z), d_attention));
    }
    GatGrads {
        input: d_input,
        heads: head_grads,
        bias: d_out.sum_axis(Axis(0)).insert_axis(Axis(0)),
    }
}
