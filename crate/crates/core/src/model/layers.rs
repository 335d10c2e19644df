//! Building blocks with explicit forward caches and backward passes.
//!
//! Activations are row-major `tokens × features`. Every `backward` adds
//! parameter gradients into a gradient twin of the layer and returns the
//! gradient with respect to its input.

use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) type ParamFn<'a, 'b> = &'b mut dyn FnMut(String, ArrayViewD<'a, f64>);
pub(crate) type ParamMutFn<'a, 'b> = &'b mut dyn FnMut(String, ArrayViewMutD<'a, f64>);

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), bound: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.gen_range(-bound..bound))
}

/// Dropout state for one forward pass. `None` means inference mode.
pub(crate) struct Dropout<'r> {
    pub rate: f64,
    pub rng: Option<&'r mut ChaCha8Rng>,
}

impl Dropout<'_> {
    /// Returns the masked activation and the scaled keep-mask, if any.
    pub fn apply(&mut self, x: Array2<f64>) -> (Array2<f64>, Option<Array2<f64>>) {
        match self.rng.as_deref_mut() {
            Some(rng) if self.rate > 0.0 => {
                let keep = 1.0 / (1.0 - self.rate);
                let rate = self.rate;
                let mask = Array2::from_shape_fn(x.raw_dim(), |_| if rng.gen::<f64>() < rate { 0.0 } else { keep });
                (x * &mask, Some(mask))
            }
            _ => (x, None),
        }
    }
}

pub(crate) fn dropout_backward(dy: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => dy * m,
        None => dy,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform `±1/sqrt(in)` weights and bias.
    pub fn init_default(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = uniform(rng, (output, input), bound);
        let bias = Array1::from_shape_fn(output, |_| rng.gen_range(-bound..bound));
        Self { weight, bias }
    }

    /// Xavier-uniform weights and zero bias.
    pub fn init_xavier(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        Self {
            weight: uniform(rng, (output, input), bound),
            bias: Array1::zeros(output),
        }
    }

    /// Xavier-uniform weights, default-style bias.
    pub fn init_xavier_biased(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut l = Self::init_xavier(input, output, rng);
        let bound = 1.0 / (input as f64).sqrt();
        l.bias.mapv_inplace(|_| rng.gen_range(-bound..bound));
        l
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn backward(&self, x: &ArrayView2<f64>, dy: &ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &dy.t().dot(x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: ParamFn<'a, '_>) {
        f(format!("{prefix}.weight"), self.weight.view().into_dyn());
        f(format!("{prefix}.bias"), self.bias.view().into_dyn());
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, prefix: &str, f: ParamMutFn<'a, '_>) {
        f(format!("{prefix}.weight"), self.weight.view_mut().into_dyn());
        f(format!("{prefix}.bias"), self.bias.view_mut().into_dyn());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub weight: Array1<f64>,
    pub bias: Array1<f64>,
}

pub(crate) struct LayerNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self {
            weight: Array1::ones(width),
            bias: Array1::zeros(width),
        }
    }

    pub fn zeros(width: usize) -> Self {
        Self {
            weight: Array1::zeros(width),
            bias: Array1::zeros(width),
        }
    }

    pub(crate) fn forward(&self, x: &ArrayView2<f64>) -> (Array2<f64>, LayerNormCache) {
        let width = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / width;
        let centered = x - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / width;
        let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
        let normalized = centered * inv_std.view().insert_axis(Axis(1));
        let y = &normalized * &self.weight + &self.bias;
        (y, LayerNormCache { normalized, inv_std })
    }

    pub(crate) fn backward(&self, cache: &LayerNormCache, dy: &ArrayView2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        let width = dy.ncols() as f64;
        grad.weight += &(dy * &cache.normalized).sum_axis(Axis(0));
        grad.bias += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.weight;
        let sum_dxhat = dxhat.sum_axis(Axis(1));
        let sum_dxhat_xhat = (&dxhat * &cache.normalized).sum_axis(Axis(1));
        let mut dx = Array2::zeros(dy.raw_dim());
        Zip::indexed(&mut dx).for_each(|(r, c), v| {
            *v = cache.inv_std[r] / width
                * (width * dxhat[(r, c)] - sum_dxhat[r] - cache.normalized[(r, c)] * sum_dxhat_xhat[r]);
        });
        dx
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: ParamFn<'a, '_>) {
        f(format!("{prefix}.weight"), self.weight.view().into_dyn());
        f(format!("{prefix}.bias"), self.bias.view().into_dyn());
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, prefix: &str, f: ParamMutFn<'a, '_>) {
        f(format!("{prefix}.weight"), self.weight.view_mut().into_dyn());
        f(format!("{prefix}.bias"), self.bias.view_mut().into_dyn());
    }
}

/// Row-wise softmax, max-subtracted.
pub(crate) fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub q_proj: Linear,
    pub k_proj: Linear,
    pub v_proj: Linear,
    pub out_proj: Linear,
}

pub(crate) struct AttentionCache {
    query_in: Array2<f64>,
    kv_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    weights: Vec<Array2<f64>>,
    context: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn init(width: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            heads,
            q_proj: Linear::init_xavier(width, width, rng),
            k_proj: Linear::init_xavier(width, width, rng),
            v_proj: Linear::init_xavier(width, width, rng),
            out_proj: Linear::init_xavier(width, width, rng),
        }
    }

    pub fn zeros(width: usize, heads: usize) -> Self {
        Self {
            heads,
            q_proj: Linear::zeros(width, width),
            k_proj: Linear::zeros(width, width),
            v_proj: Linear::zeros(width, width),
            out_proj: Linear::zeros(width, width),
        }
    }

    fn head_dim(&self) -> usize {
        self.q_proj.weight.nrows() / self.heads
    }

    pub(crate) fn forward(&self, query_in: &ArrayView2<f64>, kv_in: &ArrayView2<f64>) -> (Array2<f64>, AttentionCache) {
        let q = self.q_proj.forward(query_in);
        let k = self.k_proj.forward(kv_in);
        let v = self.v_proj.forward(kv_in);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut context = Array2::zeros(q.raw_dim());
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            softmax_rows(&mut scores);
            context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            weights.push(scores);
        }
        let y = self.out_proj.forward(&context.view());
        let cache = AttentionCache {
            query_in: query_in.to_owned(),
            kv_in: kv_in.to_owned(),
            q,
            k,
            v,
            weights,
            context,
        };
        (y, cache)
    }

    /// Returns gradients w.r.t. the query input and the key/value input.
    pub(crate) fn backward(
        &self,
        cache: &AttentionCache,
        dy: &ArrayView2<f64>,
        grad: &mut MultiHeadAttention,
    ) -> (Array2<f64>, Array2<f64>) {
        let dcontext = self.out_proj.backward(&cache.context.view(), dy, &mut grad.out_proj);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let a = &cache.weights[h];
            let dctx = dcontext.slice(cols);
            dv.slice_mut(cols).assign(&a.t().dot(&dctx));
            let da = dctx.dot(&cache.v.slice(cols).t());
            let row_dot = (&da * a).sum_axis(Axis(1));
            let dscores = (da - &row_dot.insert_axis(Axis(1))) * a * scale;
            dq.slice_mut(cols).assign(&dscores.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&dscores.t().dot(&cache.q.slice(cols)));
        }
        let dquery = self.q_proj.backward(&cache.query_in.view(), &dq.view(), &mut grad.q_proj);
        let mut dkv = self.k_proj.backward(&cache.kv_in.view(), &dk.view(), &mut grad.k_proj);
        dkv += &self.v_proj.backward(&cache.kv_in.view(), &dv.view(), &mut grad.v_proj);
        (dquery, dkv)
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: ParamFn<'a, '_>) {
        self.q_proj.visit(&format!("{prefix}.q_proj"), f);
        self.k_proj.visit(&format!("{prefix}.k_proj"), f);
        self.v_proj.visit(&format!("{prefix}.v_proj"), f);
        self.out_proj.visit(&format!("{prefix}.out_proj"), f);
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, prefix: &str, f: ParamMutFn<'a, '_>) {
        self.q_proj.visit_mut(&format!("{prefix}.q_proj"), f);
        self.k_proj.visit_mut(&format!("{prefix}.k_proj"), f);
        self.v_proj.visit_mut(&format!("{prefix}.v_proj"), f);
        self.out_proj.visit_mut(&format!("{prefix}.out_proj"), f);
    }
}

/// Two-layer ReLU MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub linear1: Linear,
    pub linear2: Linear,
}

pub(crate) struct FeedForwardCache {
    input: Array2<f64>,
    pre_activation: Array2<f64>,
    hidden: Array2<f64>,
    mask: Option<Array2<f64>>,
}

impl FeedForward {
    pub fn init(width: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            linear1: Linear::init_xavier_biased(width, hidden, rng),
            linear2: Linear::init_xavier_biased(hidden, width, rng),
        }
    }

    pub fn zeros(width: usize, hidden: usize) -> Self {
        Self {
            linear1: Linear::zeros(width, hidden),
            linear2: Linear::zeros(hidden, width),
        }
    }

    pub(crate) fn forward(&self, x: &ArrayView2<f64>, dropout: &mut Dropout) -> (Array2<f64>, FeedForwardCache) {
        let pre_activation = self.linear1.forward(x);
        let (hidden, mask) = dropout.apply(pre_activation.mapv(|v| v.max(0.0)));
        let y = self.linear2.forward(&hidden.view());
        let cache = FeedForwardCache {
            input: x.to_owned(),
            pre_activation,
            hidden,
            mask,
        };
        (y, cache)
    }

    pub(crate) fn backward(&self, cache: &FeedForwardCache, dy: &ArrayView2<f64>, grad: &mut FeedForward) -> Array2<f64> {
        let dhidden = self.linear2.backward(&cache.hidden.view(), dy, &mut grad.linear2);
        let mut dpre = dropout_backward(dhidden, &cache.mask);
        Zip::from(&mut dpre)
            .and(&cache.pre_activation)
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        self.linear1.backward(&cache.input.view(), &dpre.view(), &mut grad.linear1)
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: ParamFn<'a, '_>) {
        self.linear1.visit(&format!("{prefix}.linear1"), f);
        self.linear2.visit(&format!("{prefix}.linear2"), f);
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, prefix: &str, f: ParamMutFn<'a, '_>) {
        self.linear1.visit_mut(&format!("{prefix}.linear1"), f);
        self.linear2.visit_mut(&format!("{prefix}.linear2"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    /// Central-difference check of d(sum(w ⊙ f(x)))/dx against `backward`.
    fn check_input_grad(
        x: &Array2<f64>,
        f: impl Fn(&Array2<f64>) -> Array2<f64>,
        analytic: impl Fn(&Array2<f64>, &Array2<f64>) -> Array2<f64>,
    ) {
        let y = f(x);
        let w = Array2::from_shape_fn(y.raw_dim(), |(r, c)| ((r * 7 + c * 3) % 11) as f64 / 11.0 - 0.4);
        let dx = analytic(x, &w);
        let h = 1e-6;
        for idx in [(0, 0), (1, 2), (x.nrows() - 1, x.ncols() - 1)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = ((f(&xp) * &w).sum() - (f(&xm) * &w).sum()) / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "{idx:?}: fd {fd} vs {}", dx[idx]);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let ln = LayerNorm::new(4);
        let x = ndarray::array![[1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 1.0, -1.0]];
        let (y, _) = ln.forward(&x.view());
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            assert!((row.mapv(|v| v * v).sum() / 4.0 - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn layer_norm_gradient() {
        let mut r = rng();
        let mut ln = LayerNorm::new(6);
        ln.weight.mapv_inplace(|_| r.gen_range(0.5..1.5));
        let x = uniform(&mut r, (3, 6), 1.0);
        check_input_grad(
            &x,
            |x| ln.forward(&x.view()).0,
            |x, w| {
                let (_, cache) = ln.forward(&x.view());
                ln.backward(&cache, &w.view(), &mut LayerNorm::zeros(6))
            },
        );
    }

    #[test]
    fn attention_gradient_both_inputs() {
        let mut r = rng();
        let attn = MultiHeadAttention::init(6, 2, &mut r);
        let q = uniform(&mut r, (2, 6), 1.0);
        let kv = uniform(&mut r, (4, 6), 1.0);
        check_input_grad(
            &q,
            |q| attn.forward(&q.view(), &kv.view()).0,
            |q, w| {
                let (_, c) = attn.forward(&q.view(), &kv.view());
                attn.backward(&c, &w.view(), &mut MultiHeadAttention::zeros(6, 2)).0
            },
        );
        check_input_grad(
            &kv,
            |kv| attn.forward(&q.view(), &kv.view()).0,
            |kv, w| {
                let (_, c) = attn.forward(&q.view(), &kv.view());
                attn.backward(&c, &w.view(), &mut MultiHeadAttention::zeros(6, 2)).1
            },
        );
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut r = rng();
        let attn = MultiHeadAttention::init(6, 3, &mut r);
        let x = uniform(&mut r, (5, 6), 2.0);
        let (_, cache) = attn.forward(&x.view(), &x.view());
        for w in &cache.weights {
            for row in w.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn feed_forward_gradient() {
        let mut r = rng();
        let ff = FeedForward::init(6, 10, &mut r);
        let x = uniform(&mut r, (3, 6), 1.0);
        check_input_grad(
            &x,
            |x| ff.forward(&x.view(), &mut Dropout { rate: 0.0, rng: None }).0,
            |x, w| {
                let (_, c) = ff.forward(&x.view(), &mut Dropout { rate: 0.0, rng: None });
                ff.backward(&c, &w.view(), &mut FeedForward::zeros(6, 10))
            },
        );
    }

    #[test]
    fn dropout_scales_kept_units() {
        let mut r = rng();
        let x = Array2::ones((20, 20));
        let (y, mask) = Dropout { rate: 0.25, rng: Some(&mut r) }.apply(x);
        let mask = mask.unwrap();
        assert!(y.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
        assert_eq!(y, mask);
        let (y, mask) = Dropout { rate: 0.25, rng: None }.apply(Array2::ones((2, 2)));
        assert!(mask.is_none());
        assert_eq!(y, Array2::<f64>::ones((2, 2)));
    }
}
