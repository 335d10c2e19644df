//! The encoder–decoder classifier.
//!
//! ```text
//! frames [T × 108] + positional rows ──► encoder × N ──► norm ──► memory
//!                                                                  │
//! class query [1 × 108] ──► decoder × M (cross-attention only) ◄───┘
//!                                 │
//!                               norm ──► linear head ──► logits [C]
//! ```
//!
//! Encoder layers are post-norm self-attention + ReLU feed-forward blocks.
//! Decoder layers drop self-attention: with a single query token it reduces
//! to a fixed linear map and carries no sequence information.

use ndarray::{s, Array1, Array2, ArrayD, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    dropout_backward, AttentionCache, Dropout, FeedForward, FeedForwardCache, LayerNorm, LayerNormCache, Linear,
    MultiHeadAttention, ParamFn, ParamMutFn,
};
use super::{ModelConfig, ModelError};
use crate::skeletal::{PoseSequence, FRAME_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub self_attn: MultiHeadAttention,
    pub feed_forward: FeedForward,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub cross_attn: MultiHeadAttention,
    pub feed_forward: FeedForward,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
}

/// Forward cache shared by encoder and decoder layers.
struct BlockCache {
    attn: AttentionCache,
    attn_mask: Option<Array2<f64>>,
    norm1: LayerNormCache,
    ff: FeedForwardCache,
    ff_mask: Option<Array2<f64>>,
    norm2: LayerNormCache,
}

/// Post-norm residual block: `norm2(h + ff(h))` with `h = norm1(x + attn(x, kv))`.
fn block_forward(
    attn: &MultiHeadAttention,
    ff: &FeedForward,
    norm1: &LayerNorm,
    norm2: &LayerNorm,
    x: &ArrayView2<f64>,
    kv: &ArrayView2<f64>,
    dropout: &mut Dropout,
) -> (Array2<f64>, BlockCache) {
    let (a, attn_cache) = attn.forward(x, kv);
    let (a, attn_mask) = dropout.apply(a);
    let (h, norm1_cache) = norm1.forward(&(x + &a).view());
    let (f, ff_cache) = ff.forward(&h.view(), dropout);
    let (f, ff_mask) = dropout.apply(f);
    let (out, norm2_cache) = norm2.forward(&(&h + &f).view());
    let cache = BlockCache {
        attn: attn_cache,
        attn_mask,
        norm1: norm1_cache,
        ff: ff_cache,
        ff_mask,
        norm2: norm2_cache,
    };
    (out, cache)
}

/// Returns (d input, d key/value input).
#[allow(clippy::too_many_arguments)]
fn block_backward(
    attn: &MultiHeadAttention,
    ff: &FeedForward,
    norm1: &LayerNorm,
    norm2: &LayerNorm,
    cache: &BlockCache,
    dout: &ArrayView2<f64>,
    g_attn: &mut MultiHeadAttention,
    g_ff: &mut FeedForward,
    g_norm1: &mut LayerNorm,
    g_norm2: &mut LayerNorm,
) -> (Array2<f64>, Array2<f64>) {
    let dres2 = norm2.backward(&cache.norm2, dout, g_norm2);
    let df = dropout_backward(dres2.clone(), &cache.ff_mask);
    let dh = dres2 + ff.backward(&cache.ff, &df.view(), g_ff);
    let dres1 = norm1.backward(&cache.norm1, &dh.view(), g_norm1);
    let da = dropout_backward(dres1.clone(), &cache.attn_mask);
    let (dx_attn, dkv) = attn.backward(&cache.attn, &da.view(), g_attn);
    (dres1 + dx_attn, dkv)
}

impl EncoderLayer {
    fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = cfg.width();
        Self {
            self_attn: MultiHeadAttention::init(w, cfg.attention_heads, rng),
            feed_forward: FeedForward::init(w, cfg.feedforward_dim, rng),
            norm1: LayerNorm::new(w),
            norm2: LayerNorm::new(w),
        }
    }

    fn zeros(cfg: &ModelConfig) -> Self {
        let w = cfg.width();
        Self {
            self_attn: MultiHeadAttention::zeros(w, cfg.attention_heads),
            feed_forward: FeedForward::zeros(w, cfg.feedforward_dim),
            norm1: LayerNorm::zeros(w),
            norm2: LayerNorm::zeros(w),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: ParamFn<'a, '_>) {
        self.self_attn.visit(&format!("{prefix}.self_attn"), f);
        self.feed_forward.visit(&format!("{prefix}.feed_forward"), f);
        self.norm1.visit(&format!("{prefix}.norm1"), f);
        self.norm2.visit(&format!("{prefix}.norm2"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: ParamMutFn<'a, '_>) {
        self.self_attn.visit_mut(&format!("{prefix}.self_attn"), f);
        self.feed_forward.visit_mut(&format!("{prefix}.feed_forward"), f);
        self.norm1.visit_mut(&format!("{prefix}.norm1"), f);
        self.norm2.visit_mut(&format!("{prefix}.norm2"), f);
    }
}

impl DecoderLayer {
    fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = cfg.width();
        Self {
            cross_attn: MultiHeadAttention::init(w, cfg.attention_heads, rng),
            feed_forward: FeedForward::init(w, cfg.feedforward_dim, rng),
            norm1: LayerNorm::new(w),
            norm2: LayerNorm::new(w),
        }
    }

    fn zeros(cfg: &ModelConfig) -> Self {
        let w = cfg.width();
        Self {
            cross_attn: MultiHeadAttention::zeros(w, cfg.attention_heads),
            feed_forward: FeedForward::zeros(w, cfg.feedforward_dim),
            norm1: LayerNorm::zeros(w),
            norm2: LayerNorm::zeros(w),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: ParamFn<'a, '_>) {
        self.cross_attn.visit(&format!("{prefix}.cross_attn"), f);
        self.feed_forward.visit(&format!("{prefix}.feed_forward"), f);
        self.norm1.visit(&format!("{prefix}.norm1"), f);
        self.norm2.visit(&format!("{prefix}.norm2"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: ParamMutFn<'a, '_>) {
        self.cross_attn.visit_mut(&format!("{prefix}.cross_attn"), f);
        self.feed_forward.visit_mut(&format!("{prefix}.feed_forward"), f);
        self.norm1.visit_mut(&format!("{prefix}.norm1"), f);
        self.norm2.visit_mut(&format!("{prefix}.norm2"), f);
    }
}

/// Weights of the classifier. Shapes are fully determined by [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: ModelConfig,
    pub pos_embedding: Array2<f64>,
    pub class_query: Array1<f64>,
    pub encoder: Vec<EncoderLayer>,
    pub encoder_norm: LayerNorm,
    pub decoder: Vec<DecoderLayer>,
    pub decoder_norm: LayerNorm,
    pub head: Linear,
}

/// Everything `backward` needs from a training forward pass.
pub struct Tape {
    frames: usize,
    encoder: Vec<BlockCache>,
    encoder_norm: LayerNormCache,
    memory: Array2<f64>,
    decoder: Vec<BlockCache>,
    decoder_norm: LayerNormCache,
    summary: Array2<f64>,
}

impl Network {
    /// Randomly initialized weights; equal seeds give equal weights.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = config.width();
        let pos_embedding = Array2::from_shape_fn((config.max_frames, w), |_| rng.gen::<f64>());
        let class_query = Array1::from_shape_fn(w, |_| rng.gen::<f64>());
        let encoder = (0..config.encoder_layers).map(|_| EncoderLayer::init(config, &mut rng)).collect();
        let decoder = (0..config.decoder_layers).map(|_| DecoderLayer::init(config, &mut rng)).collect();
        let head = Linear::init_default(w, config.num_classes, &mut rng);
        Ok(Self {
            config: config.clone(),
            pos_embedding,
            class_query,
            encoder,
            encoder_norm: LayerNorm::new(w),
            decoder,
            decoder_norm: LayerNorm::new(w),
            head,
        })
    }

    /// All-zero twin, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let c = config;
        let w = c.width();
        Ok(Self {
            config: c.clone(),
            pos_embedding: Array2::zeros((c.max_frames, w)),
            class_query: Array1::zeros(w),
            encoder: (0..c.encoder_layers).map(|_| EncoderLayer::zeros(c)).collect(),
            encoder_norm: LayerNorm::zeros(w),
            decoder: (0..c.decoder_layers).map(|_| DecoderLayer::zeros(c)).collect(),
            decoder_norm: LayerNorm::zeros(w),
            head: Linear::zeros(w, c.num_classes),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Visits every trainable tensor with its stable name.
    pub fn visit_params<'a>(&'a self, f: &mut dyn FnMut(String, ndarray::ArrayViewD<'a, f64>)) {
        f("pos_embedding".into(), self.pos_embedding.view().into_dyn());
        f("class_query".into(), self.class_query.view().into_dyn());
        for (i, layer) in self.encoder.iter().enumerate() {
            layer.visit(&format!("encoder.layers.{i}"), f);
        }
        self.encoder_norm.visit("encoder.norm", f);
        for (i, layer) in self.decoder.iter().enumerate() {
            layer.visit(&format!("decoder.layers.{i}"), f);
        }
        self.decoder_norm.visit("decoder.norm", f);
        self.head.visit("head", f);
    }

    pub fn visit_params_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, ndarray::ArrayViewMutD<'a, f64>)) {
        f("pos_embedding".into(), self.pos_embedding.view_mut().into_dyn());
        f("class_query".into(), self.class_query.view_mut().into_dyn());
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            layer.visit_mut(&format!("encoder.layers.{i}"), f);
        }
        self.encoder_norm.visit_mut("encoder.norm", f);
        for (i, layer) in self.decoder.iter_mut().enumerate() {
            layer.visit_mut(&format!("decoder.layers.{i}"), f);
        }
        self.decoder_norm.visit_mut("decoder.norm", f);
        self.head.visit_mut("head", f);
    }

    /// Named owned copies of every tensor.
    pub fn named_tensors(&self) -> Vec<(String, ArrayD<f64>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, t| out.push((name, t.to_owned())));
        out
    }

    /// Sum of all tensor sizes.
    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, t| n += t.len());
        n
    }

    /// `self -= lr * grad`, tensor by tensor.
    pub fn sgd_step(&mut self, grad: &Network, learning_rate: f64) {
        let mut grads = Vec::new();
        grad.visit_params(&mut |_, t| grads.push(t));
        let mut i = 0;
        self.visit_params_mut(&mut |_, mut p| {
            p.scaled_add(-learning_rate, &grads[i]);
            i += 1;
        });
    }

    pub fn fill_zero(&mut self) {
        self.visit_params_mut(&mut |_, mut t| t.fill(0.0));
    }

    /// Frames flattened in schema order (x then y per slot), one row each.
    pub fn input_matrix(&self, seq: &PoseSequence) -> Result<Array2<f64>, ModelError> {
        if self.config.input_dim != FRAME_DIM {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.input_dim,
                found: FRAME_DIM,
            });
        }
        let mut x = Array2::zeros((seq.len(), FRAME_DIM));
        for (row, frame) in x.rows_mut().into_iter().zip(seq.frames()) {
            let v = frame.to_vector();
            row.into_iter().zip(v.iter()).for_each(|(dst, &src)| *dst = src);
        }
        Ok(x)
    }

    fn position_row(&self, t: usize) -> usize {
        t.min(self.config.max_frames - 1)
    }

    fn with_positions(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for (t, mut row) in h.rows_mut().into_iter().enumerate() {
            row += &self.pos_embedding.row(self.position_row(t));
        }
        h
    }

    /// Inference-mode logits for a frame matrix.
    pub fn logits_for_matrix(&self, x: &Array2<f64>) -> Result<Array1<f64>, ModelError> {
        let (logits, _) = self.forward_matrix(x, None)?;
        Ok(logits)
    }

    /// Inference-mode logits for a (normalized) sequence.
    pub fn forward(&self, seq: &PoseSequence) -> Result<Array1<f64>, ModelError> {
        self.logits_for_matrix(&self.input_matrix(seq)?)
    }

    /// Forward pass keeping everything `backward` needs. `dropout_rng`
    /// enables dropout (training mode); `None` is inference mode.
    pub fn forward_matrix(
        &self,
        x: &Array2<f64>,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array1<f64>, Tape), ModelError> {
        if x.ncols() != self.config.input_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.input_dim,
                found: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Err(ModelError::EmptySequence);
        }
        let mut dropout = Dropout {
            rate: self.config.dropout,
            rng: dropout_rng,
        };

        let mut h = self.with_positions(x);
        let mut encoder = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let (out, cache) = block_forward(
                &layer.self_attn,
                &layer.feed_forward,
                &layer.norm1,
                &layer.norm2,
                &h.view(),
                &h.view(),
                &mut dropout,
            );
            encoder.push(cache);
            h = out;
        }
        let (memory, encoder_norm) = self.encoder_norm.forward(&h.view());

        let mut q = self.class_query.view().insert_axis(Axis(0)).to_owned();
        let mut decoder = Vec::with_capacity(self.decoder.len());
        for layer in &self.decoder {
            let (out, cache) = block_forward(
                &layer.cross_attn,
                &layer.feed_forward,
                &layer.norm1,
                &layer.norm2,
                &q.view(),
                &memory.view(),
                &mut dropout,
            );
            decoder.push(cache);
            q = out;
        }
        let (summary, decoder_norm) = self.decoder_norm.forward(&q.view());
        let logits = self.head.forward(&summary.view()).row(0).to_owned();
        let tape = Tape {
            frames: x.nrows(),
            encoder,
            encoder_norm,
            memory,
            decoder,
            decoder_norm,
            summary,
        };
        Ok((logits, tape))
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
    pub fn backward(&self, tape: &Tape, dlogits: &Array1<f64>, grad: &mut Network) {
        let dlogits = dlogits.view().insert_axis(Axis(0));
        let dsummary = self.head.backward(&tape.summary.view(), &dlogits, &mut grad.head);
        let mut dq = self.decoder_norm.backward(&tape.decoder_norm, &dsummary.view(), &mut grad.decoder_norm);
        let mut dmemory = Array2::zeros(tape.memory.raw_dim());
        for (i, layer) in self.decoder.iter().enumerate().rev() {
            let g = &mut grad.decoder[i];
            let (dq_in, dkv) = block_backward(
                &layer.cross_attn,
                &layer.feed_forward,
                &layer.norm1,
                &layer.norm2,
                &tape.decoder[i],
                &dq.view(),
                &mut g.cross_attn,
                &mut g.feed_forward,
                &mut g.norm1,
                &mut g.norm2,
            );
            dmemory += &dkv;
            dq = dq_in;
        }
        grad.class_query += &dq.row(0);

        let mut dh = self.encoder_norm.backward(&tape.encoder_norm, &dmemory.view(), &mut grad.encoder_norm);
        for (i, layer) in self.encoder.iter().enumerate().rev() {
            let g = &mut grad.encoder[i];
            let (dx, dkv) = block_backward(
                &layer.self_attn,
                &layer.feed_forward,
                &layer.norm1,
                &layer.norm2,
                &tape.encoder[i],
                &dh.view(),
                &mut g.self_attn,
                &mut g.feed_forward,
                &mut g.norm1,
                &mut g.norm2,
            );
            dh = dx + dkv;
        }
        for t in 0..tape.frames {
            let row = self.position_row(t);
            let mut target = grad.pos_embedding.slice_mut(s![row, ..]);
            target += &dh.row(t);
        }
    }

    /// Overwrites tensors from `(name, data)` pairs; every tensor must be
    /// supplied exactly once with the expected shape.
    pub fn load_named(&mut self, mut tensors: std::collections::HashMap<String, ArrayD<f64>>) -> Result<(), ModelError> {
        let mut missing = None;
        let mut bad_shape = None;
        self.visit_params_mut(&mut |name, mut dst| match tensors.remove(&name) {
            Some(src) if src.shape() == dst.shape() => dst.assign(&src),
            Some(src) => {
                bad_shape.get_or_insert(format!("{name}: expected {:?}, found {:?}", dst.shape(), src.shape()));
            }
            None => {
                missing.get_or_insert(name);
            }
        });
        if let Some(name) = missing {
            return Err(ModelError::Checkpoint(format!("missing tensor `{name}`")));
        }
        if let Some(msg) = bad_shape {
            return Err(ModelError::Checkpoint(format!("shape mismatch for {msg}")));
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(ModelError::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(())
    }
}

/// Softmax cross-entropy: returns (loss, d loss / d logits).
pub fn cross_entropy(logits: &Array1<f64>, target: usize) -> (f64, Array1<f64>) {
    let probs = super::softmax(logits);
    let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
    let mut grad = probs;
    grad[target] -= 1.0;
    (loss, grad)
}
