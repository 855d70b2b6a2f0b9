//! Neural encoder producing soft community assignments.
//!
//! The model has three blocks:
//!
//! 1. a projection block: affine `d → H`, node normalization, rectifier,
//!    plus a skip-connected second affine `H → H`;
//! 2. `layers` encoder layers, either neighbor attention
//!    ([`attention_layer_forward`]) or graph convolution
//!    ([`gcn_layer_forward`]);
//! 3. an affine head `H → C` followed by a row-wise softmax.
//!
//! Gradients are derived by hand per layer; [`backward`] runs them in
//! reverse over the cache recorded by [`forward`].

mod attention;
mod gcn;
pub mod layers;

pub use attention::{
    attention_layer_backward, attention_layer_forward, AttentionCache, AttentionParams, NeighborIndex,
};
pub use gcn::{gcn_layer_backward, gcn_layer_forward, GcnCache, GcnParams, NormalizedAdjacency};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Matrix};
use crate::seed;
use crate::spectral::SpectralEmbedding;
use layers::{all_finite, relu, relu_backward, softmax_rows, softmax_rows_backward, Affine, Norm, NormCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Attention,
    Gcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    BetheHessian,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub clusters: usize,
    pub encoder_kind: EncoderKind,
    pub init_kind: InitKind,
}

impl EncoderConfig {
    /// Two layers, three heads, width 48.
    pub fn new(clusters: usize, encoder_kind: EncoderKind, init_kind: InitKind) -> Self {
        EncoderConfig { layers: 2, heads: 3, hidden: 48, clusters, encoder_kind, init_kind }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.clusters == 0 {
            return Err(Error::InvalidParameter("hidden, heads and clusters must be positive".into()));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::InvalidParameter(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment(pub Matrix);

impl SoftAssignment {
    /// Row-wise argmax, ties to the lowest cluster index.
    pub fn argmax(&self) -> crate::graph::LabelVector {
        let labels = self
            .0
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        crate::graph::LabelVector(labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    pub input: Affine,
    pub norm: Norm,
    pub skip: Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerParams {
    Attention(AttentionParams),
    Gcn(GcnParams),
}

impl LayerParams {
    fn zeros_like(&self) -> Self {
        match self {
            LayerParams::Attention(p) => LayerParams::Attention(p.zeros_like()),
            LayerParams::Gcn(p) => LayerParams::Gcn(p.zeros_like()),
        }
    }
}

/// All learnable tensors of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub projection: ProjectionParams,
    pub layers: Vec<LayerParams>,
    pub head: Affine,
}

impl ModelParams {
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            projection: ProjectionParams {
                input: self.projection.input.zeros_like(),
                norm: self.projection.norm.zeros_like(),
                skip: self.projection.skip.zeros_like(),
            },
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
            head: self.head.zeros_like(),
        }
    }

    /// Every tensor with a dotted name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("projection.input.w".into(), &self.projection.input.w),
            ("projection.input.b".into(), &self.projection.input.b),
            ("projection.norm.gamma".into(), &self.projection.norm.gamma),
            ("projection.norm.beta".into(), &self.projection.norm.beta),
            ("projection.skip.w".into(), &self.projection.skip.w),
            ("projection.skip.b".into(), &self.projection.skip.b),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            let named = match layer {
                LayerParams::Attention(p) => p.tensors(),
                LayerParams::Gcn(p) => p.tensors(),
            };
            out.extend(named.into_iter().map(|(name, t)| (format!("layers.{i}.{name}"), t)));
        }
        out.push(("head.w".into(), &self.head.w));
        out.push(("head.b".into(), &self.head.b));
        out
    }

    /// Same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = vec![
            &mut self.projection.input.w,
            &mut self.projection.input.b,
            &mut self.projection.norm.gamma,
            &mut self.projection.norm.beta,
            &mut self.projection.skip.w,
            &mut self.projection.skip.b,
        ];
        for layer in &mut self.layers {
            match layer {
                LayerParams::Attention(p) => out.extend(p.tensors_mut()),
                LayerParams::Gcn(p) => out.extend(p.tensors_mut()),
            }
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| all_finite(t))
    }

    /// Position-weighted checksum used to detect caches from other parameters.
    fn fingerprint(&self) -> f64 {
        let mut acc = 0.0;
        let mut pos = 1.0;
        for (_, t) in self.named_tensors() {
            for &v in t.iter() {
                acc += v * pos;
                pos += 1.0;
            }
        }
        acc
    }
}

/// Draws encoder parameters: `N(0, 1/fan_in)` weights, zero biases,
/// unit normalization scales and zero shifts.
pub fn init_params(cfg: &EncoderConfig, input_dim: usize, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(seed, seed::stream::PARAMS));
    let h = cfg.hidden;
    let projection = ProjectionParams {
        input: Affine::init(&mut rng, input_dim, h),
        norm: Norm::new(h),
        skip: Affine::init(&mut rng, h, h),
    };
    let layers = (0..cfg.layers)
        .map(|_| match cfg.encoder_kind {
            EncoderKind::Attention => LayerParams::Attention(AttentionParams::init(&mut rng, h, cfg.heads)),
            EncoderKind::Gcn => LayerParams::Gcn(GcnParams::init(&mut rng, h)),
        })
        .collect();
    let head = Affine::init(&mut rng, h, cfg.clusters);
    Ok(ModelParams { projection, layers, head })
}

/// Input features: the Bethe Hessian eigenvectors, or standard normal noise
/// of the same width (`d = clusters`).
pub fn initial_embeddings(
    g: &Graph,
    cfg: &EncoderConfig,
    spectral: Option<&SpectralEmbedding>,
    seed: u64,
) -> Result<Matrix> {
    match cfg.init_kind {
        InitKind::BetheHessian => {
            let emb = spectral.ok_or_else(|| {
                Error::InvalidParameter("bethe-hessian init requires a spectral embedding".into())
            })?;
            if emb.vectors.nrows() != g.n() {
                return Err(Error::dims(format!("{} rows", g.n()), format!("{} rows", emb.vectors.nrows())));
            }
            Ok(emb.vectors.clone())
        }
        InitKind::Random => {
            let mut rng = seed::rng(seed::derive(seed, seed::stream::EMBEDDING));
            Ok(Matrix::from_fn(g.n(), cfg.clusters, |_, _| StandardNormal.sample(&mut rng)))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionCache {
    pre: Matrix,
    norm: NormCache,
    normalized: Matrix,
    activated: Matrix,
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Attention(AttentionCache),
    Gcn(GcnCache),
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: f64,
    x0: Matrix,
    projection: ProjectionCache,
    layers: Vec<LayerCache>,
    head_input: Matrix,
    pub u: Matrix,
}

impl ForwardCache {
    pub fn layers(&self) -> &[LayerCache] {
        &self.layers
    }
}

fn check_finite(m: &Matrix, name: impl FnOnce() -> String) -> Result<()> {
    if all_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite(name()))
    }
}

/// Runs the encoder and returns the soft assignment with its cache.
pub fn forward(g: &Graph, x0: &Matrix, params: &ModelParams) -> Result<(SoftAssignment, ForwardCache)> {
    if x0.nrows() != g.n() {
        return Err(Error::dims(format!("{} rows", g.n()), format!("{} rows", x0.nrows())));
    }
    if x0.ncols() != params.projection.input.w.nrows() {
        return Err(Error::dims(
            format!("{} input features", params.projection.input.w.nrows()),
            format!("{} columns", x0.ncols()),
        ));
    }
    check_finite(x0, || "input embeddings".into())?;

    let pp = &params.projection;
    let pre = pp.input.forward(x0);
    let (normalized, norm) = pp.norm.forward(&pre);
    let activated = relu(&normalized);
    let mut x = &activated + pp.skip.forward(&activated);
    check_finite(&x, || "projection block".into())?;
    let projection = ProjectionCache { pre, norm, normalized, activated };

    let mut index = None;
    let mut adjacency = None;
    let mut layers = Vec::with_capacity(params.layers.len());
    for (i, layer) in params.layers.iter().enumerate() {
        let (out, cache) = match layer {
            LayerParams::Attention(p) => {
                let idx = index.get_or_insert_with(|| NeighborIndex::new(g)).clone();
                let (out, c) = attention::attention_forward_indexed(idx, &x, p);
                (out, LayerCache::Attention(c))
            }
            LayerParams::Gcn(p) => {
                let adj = adjacency.get_or_insert_with(|| NormalizedAdjacency::new(g)).clone();
                let (out, c) = gcn::gcn_forward_with(adj, &x, p);
                (out, LayerCache::Gcn(c))
            }
        };
        check_finite(&out, || format!("encoder layer {i}"))?;
        layers.push(cache);
        x = out;
    }

    let logits = params.head.forward(&x);
    let u = softmax_rows(&logits);
    check_finite(&u, || "output head".into())?;
    let cache = ForwardCache {
        fingerprint: params.fingerprint(),
        x0: x0.clone(),
        projection,
        layers,
        head_input: x,
        u: u.clone(),
    };
    Ok((SoftAssignment(u), cache))
}

/// Gradients of the encoder parameters and of its input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ModelParams,
    pub x0: Matrix,
}

/// Reverse pass for an upstream gradient `∂L/∂U`.
pub fn backward(cache: &ForwardCache, params: &ModelParams, du: &Matrix) -> Result<Gradients> {
    if du.shape() != cache.u.shape() {
        return Err(Error::dims(
            format!("{:?}", cache.u.shape()),
            format!("{:?}", du.shape()),
        ));
    }
    if cache.layers.len() != params.layers.len() || cache.fingerprint != params.fingerprint() {
        return Err(Error::StaleCache("parameters changed since forward".into()));
    }
    let mut grad = params.zeros_like();

    let dlogits = softmax_rows_backward(&cache.u, du);
    let mut dx = params.head.backward(&cache.head_input, &dlogits, &mut grad.head);

    for (i, (layer, lc)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        dx = match (layer, lc) {
            (LayerParams::Attention(p), LayerCache::Attention(c)) => {
                let (g, d) = attention_layer_backward(c, p, &dx);
                grad.layers[i] = LayerParams::Attention(g);
                d
            }
            (LayerParams::Gcn(p), LayerCache::Gcn(c)) => {
                let (g, d) = gcn_layer_backward(c, p, &dx);
                grad.layers[i] = LayerParams::Gcn(g);
                d
            }
            _ => return Err(Error::StaleCache(format!("layer {i} kind differs from cache"))),
        };
    }

    let pp = &params.projection;
    let pc = &cache.projection;
    let gp = &mut grad.projection;
    let dact = &dx + pp.skip.backward(&pc.activated, &dx, &mut gp.skip);
    let dnorm = relu_backward(&pc.normalized, &dact);
    let dpre = pp.norm.backward(&pc.norm, &dnorm, &mut gp.norm);
    let dx0 = pp.input.backward(&cache.x0, &dpre, &mut gp.input);
    debug_assert_eq!(pc.pre.shape(), dpre.shape());

    Ok(Gradients { params: grad, x0: dx0 })
}
