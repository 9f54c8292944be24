use ndarray::{Array, Array1, Array2, Dimension};
use rand_distr::{Distribution, Normal};

use super::config::{EncoderConfig, Trainability};
use crate::rng::Rng;

/// Parameter group, used for freezing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Embeddings,
    /// 1-based encoder layer index.
    Layer(usize),
    IntentHead,
    Classifier,
}

impl ParamGroup {
    pub fn is_trainable(self, t: &Trainability) -> bool {
        match self {
            ParamGroup::Embeddings => t.embeddings,
            ParamGroup::Layer(l) => t.layers.contains(&l),
            ParamGroup::IntentHead => t.intent_head,
            ParamGroup::Classifier => t.classifier,
        }
    }
}

/// Flat view over an owned ndarray tensor.
pub trait ParamTensor {
    fn shape_vec(&self) -> Vec<usize>;
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];
}

impl<D: Dimension> ParamTensor for Array<f64, D> {
    fn shape_vec(&self) -> Vec<usize> {
        self.shape().to_vec()
    }

    fn values(&self) -> &[f64] {
        self.as_slice().expect("parameters are kept in standard layout")
    }

    fn values_mut(&mut self) -> &mut [f64] {
        self.as_slice_mut().expect("parameters are kept in standard layout")
    }
}

pub struct TensorRef<'a> {
    pub name: String,
    pub group: ParamGroup,
    pub tensor: &'a dyn ParamTensor,
}

pub struct TensorMut<'a> {
    pub name: String,
    pub group: ParamGroup,
    pub tensor: &'a mut dyn ParamTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNormParams {
    pub fn new(width: usize) -> Self {
        LayerNormParams {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
        }
    }

    fn zeros(width: usize) -> Self {
        LayerNormParams {
            gamma: Array1::zeros(width),
            beta: Array1::zeros(width),
        }
    }
}

/// One pre-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1: LayerNormParams,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2: LayerNormParams,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl BlockParams {
    fn init(cfg: &EncoderConfig, rng: &mut Rng) -> Self {
        let (h, f) = (cfg.hidden_size, cfg.ffn_size);
        let mut g = |r, c| gaussian(r, c, cfg.init_std, rng);
        BlockParams {
            ln1: LayerNormParams::new(h),
            wq: g(h, h),
            bq: Array1::zeros(h),
            wk: g(h, h),
            bk: Array1::zeros(h),
            wv: g(h, h),
            bv: Array1::zeros(h),
            wo: g(h, h),
            bo: Array1::zeros(h),
            ln2: LayerNormParams::new(h),
            w1: g(h, f),
            b1: Array1::zeros(f),
            w2: g(f, h),
            b2: Array1::zeros(h),
        }
    }

    fn zeros(cfg: &EncoderConfig) -> Self {
        let (h, f) = (cfg.hidden_size, cfg.ffn_size);
        BlockParams {
            ln1: LayerNormParams::zeros(h),
            wq: Array2::zeros((h, h)),
            bq: Array1::zeros(h),
            wk: Array2::zeros((h, h)),
            bk: Array1::zeros(h),
            wv: Array2::zeros((h, h)),
            bv: Array1::zeros(h),
            wo: Array2::zeros((h, h)),
            bo: Array1::zeros(h),
            ln2: LayerNormParams::zeros(h),
            w1: Array2::zeros((h, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, h)),
            b2: Array1::zeros(h),
        }
    }

    fn fields(&self) -> [(&'static str, &dyn ParamTensor); 16] {
        [
            ("ln1.gamma", &self.ln1.gamma),
            ("ln1.beta", &self.ln1.beta),
            ("attn.wq", &self.wq),
            ("attn.bq", &self.bq),
            ("attn.wk", &self.wk),
            ("attn.bk", &self.bk),
            ("attn.wv", &self.wv),
            ("attn.bv", &self.bv),
            ("attn.wo", &self.wo),
            ("attn.bo", &self.bo),
            ("ln2.gamma", &self.ln2.gamma),
            ("ln2.beta", &self.ln2.beta),
            ("ffn.w1", &self.w1),
            ("ffn.b1", &self.b1),
            ("ffn.w2", &self.w2),
            ("ffn.b2", &self.b2),
        ]
    }

    fn fields_mut(&mut self) -> [(&'static str, &mut dyn ParamTensor); 16] {
        let BlockParams {
            ln1,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            ln2,
            w1,
            b1,
            w2,
            b2,
        } = self;
        [
            ("ln1.gamma", &mut ln1.gamma),
            ("ln1.beta", &mut ln1.beta),
            ("attn.wq", wq),
            ("attn.bq", bq),
            ("attn.wk", wk),
            ("attn.bk", bk),
            ("attn.wv", wv),
            ("attn.bv", bv),
            ("attn.wo", wo),
            ("attn.bo", bo),
            ("ln2.gamma", &mut ln2.gamma),
            ("ln2.beta", &mut ln2.beta),
            ("ffn.w1", w1),
            ("ffn.b1", b1),
            ("ffn.w2", w2),
            ("ffn.b2", b2),
        ]
    }
}

/// Every trainable tensor of the model. The same struct holds gradients.
///
/// `classifier_w` is `(K+1, D)`; the K-way classifier is its first K rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<BlockParams>,
    pub intent_w: Array2<f64>,
    pub intent_b: Array1<f64>,
    pub classifier_w: Array2<f64>,
    pub classifier_b: Array1<f64>,
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

impl EncoderParams {
    /// Seeded Gaussian weights, zero biases, unit LayerNorm gains.
    pub fn init(cfg: &EncoderConfig, num_known: usize, rng: &mut Rng) -> Self {
        let (h, d) = (cfg.hidden_size, cfg.intent_dim);
        let token_embedding = gaussian(cfg.vocab_size, h, cfg.init_std, rng);
        let position_embedding = gaussian(cfg.max_len + 1, h, cfg.init_std, rng);
        let layers = (0..cfg.num_layers).map(|_| BlockParams::init(cfg, rng)).collect();
        let intent_w = gaussian(h, d, cfg.init_std, rng);
        let classifier_w = gaussian(num_known + 1, d, cfg.init_std, rng);
        EncoderParams {
            token_embedding,
            position_embedding,
            layers,
            intent_w,
            intent_b: Array1::zeros(d),
            classifier_w,
            classifier_b: Array1::zeros(num_known + 1),
        }
    }

    pub fn zeros(cfg: &EncoderConfig, num_known: usize) -> Self {
        let (h, d) = (cfg.hidden_size, cfg.intent_dim);
        EncoderParams {
            token_embedding: Array2::zeros((cfg.vocab_size, h)),
            position_embedding: Array2::zeros((cfg.max_len + 1, h)),
            layers: (0..cfg.num_layers).map(|_| BlockParams::zeros(cfg)).collect(),
            intent_w: Array2::zeros((h, d)),
            intent_b: Array1::zeros(d),
            classifier_w: Array2::zeros((num_known + 1, d)),
            classifier_b: Array1::zeros(num_known + 1),
        }
    }

    /// Tensors in a fixed order, used by the optimizer and checkpoints.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = vec![
            TensorRef {
                name: "embeddings.token".into(),
                group: ParamGroup::Embeddings,
                tensor: &self.token_embedding,
            },
            TensorRef {
                name: "embeddings.position".into(),
                group: ParamGroup::Embeddings,
                tensor: &self.position_embedding,
            },
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            for (field, tensor) in layer.fields() {
                out.push(TensorRef {
                    name: format!("layer.{}.{field}", i + 1),
                    group: ParamGroup::Layer(i + 1),
                    tensor,
                });
            }
        }
        let tail: [(&str, ParamGroup, &dyn ParamTensor); 4] = [
            ("intent_head.weight", ParamGroup::IntentHead, &self.intent_w),
            ("intent_head.bias", ParamGroup::IntentHead, &self.intent_b),
            ("classifier.weight", ParamGroup::Classifier, &self.classifier_w),
            ("classifier.bias", ParamGroup::Classifier, &self.classifier_b),
        ];
        out.extend(tail.into_iter().map(|(name, group, tensor)| TensorRef {
            name: name.into(),
            group,
            tensor,
        }));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let EncoderParams {
            token_embedding,
            position_embedding,
            layers,
            intent_w,
            intent_b,
            classifier_w,
            classifier_b,
        } = self;
        let mut out = vec![
            TensorMut {
                name: "embeddings.token".into(),
                group: ParamGroup::Embeddings,
                tensor: token_embedding,
            },
            TensorMut {
                name: "embeddings.position".into(),
                group: ParamGroup::Embeddings,
                tensor: position_embedding,
            },
        ];
        for (i, layer) in layers.iter_mut().enumerate() {
            for (field, tensor) in layer.fields_mut() {
                out.push(TensorMut {
                    name: format!("layer.{}.{field}", i + 1),
                    group: ParamGroup::Layer(i + 1),
                    tensor,
                });
            }
        }
        let tail: [(&str, ParamGroup, &mut dyn ParamTensor); 4] = [
            ("intent_head.weight", ParamGroup::IntentHead, intent_w),
            ("intent_head.bias", ParamGroup::IntentHead, intent_b),
            ("classifier.weight", ParamGroup::Classifier, classifier_w),
            ("classifier.bias", ParamGroup::Classifier, classifier_b),
        ];
        out.extend(tail.into_iter().map(|(name, group, tensor)| TensorMut {
            name: name.into(),
            group,
            tensor,
        }));
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.tensor.values().len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.tensor.values().iter().all(|v| v.is_finite()))
    }

    pub(crate) fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.tensor.values_mut().fill(0.0);
        }
    }
}
