use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{s, Array2, Array3, Zip};

use super::config::{EncoderConfig, Trainability};
use super::hidden::{gather, mean_pool, mean_pool_backward, scatter, HiddenStates, Packing};
use super::ops::{
    attention, attention_backward, gelu, gelu_backward, layer_norm, layer_norm_backward, linear,
    linear_backward, LayerNormCache,
};
use super::params::{BlockParams, EncoderParams};
use crate::data::CLS_ID;
use crate::error::{Error, Result};
use crate::rng;

/// Layer-indexed text encoder with mean pooling, a ReLU intent head and a
/// shared `(K+1)`-way classifier.
#[derive(Debug)]
pub struct EncoderModel {
    config: EncoderConfig,
    num_known: usize,
    pub(crate) params: EncoderParams,
    truncations: AtomicUsize,
}

impl Clone for EncoderModel {
    fn clone(&self) -> Self {
        EncoderModel {
            config: self.config.clone(),
            num_known: self.num_known,
            params: self.params.clone(),
            truncations: AtomicUsize::new(self.truncations()),
        }
    }
}

struct BlockCache {
    ln1: LayerNormCache,
    y1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln2: LayerNormCache,
    y2: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

/// Activations saved by a forward pass over a layer range.
pub(crate) struct LayersTape {
    from: usize,
    packing: Packing,
    blocks: Vec<BlockCache>,
}

pub(crate) struct ReadoutTape {
    mask: Array2<bool>,
    pooled: Array2<f64>,
    pre: Array2<f64>,
    z: Array2<f64>,
}

pub(crate) struct EmbedTape {
    ids: Vec<Vec<u32>>,
}

impl EncoderModel {
    /// Fresh model with seeded Gaussian initialization.
    pub fn new(config: EncoderConfig, num_known: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_known == 0 {
            return Err(Error::invalid("the model needs at least one known class"));
        }
        let params = EncoderParams::init(&config, num_known, &mut rng::stream(seed, "model.init"));
        Ok(EncoderModel {
            config,
            num_known,
            params,
            truncations: AtomicUsize::new(0),
        })
    }

    pub(crate) fn from_parts(
        config: EncoderConfig,
        num_known: usize,
        params: EncoderParams,
    ) -> Result<Self> {
        config.validate()?;
        Ok(EncoderModel {
            config,
            num_known,
            params,
            truncations: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    /// K, the number of known classes.
    pub fn num_known(&self) -> usize {
        self.num_known
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut EncoderParams {
        &mut self.params
    }

    pub fn trainable(&self) -> &Trainability {
        &self.config.trainable
    }

    /// Inputs longer than `max_len` seen so far (they were truncated).
    pub fn truncations(&self) -> usize {
        self.truncations.load(Ordering::Relaxed)
    }

    /// Selects which parameter groups the optimizer may update.
    pub fn set_trainable(&mut self, trainable: Trainability) -> Result<()> {
        self.config.validate_trainable(&trainable)?;
        self.config.trainable = trainable;
        Ok(())
    }

    /// Layer-0 states of one utterance: shape `(1, len + 1, H)`.
    pub fn embed(&self, ids: &[u32]) -> Result<HiddenStates> {
        self.embed_batch(&[ids])
    }

    pub fn embed_batch(&self, batch: &[&[u32]]) -> Result<HiddenStates> {
        Ok(self.embed_batch_taped(batch)?.0)
    }

    pub(crate) fn embed_batch_taped(&self, batch: &[&[u32]]) -> Result<(HiddenStates, EmbedTape)> {
        if batch.is_empty() {
            return Err(Error::Empty("empty batch".into()));
        }
        let vocab = self.config.vocab_size;
        let mut ids = Vec::with_capacity(batch.len());
        for seq in batch {
            if let Some(&bad) = seq.iter().find(|&&id| id as usize >= vocab) {
                return Err(Error::invalid(format!(
                    "token id {bad} outside vocabulary of size {vocab}"
                )));
            }
            let kept = if seq.len() > self.config.max_len {
                self.truncations.fetch_add(1, Ordering::Relaxed);
                &seq[..self.config.max_len]
            } else {
                seq
            };
            let mut with_cls = Vec::with_capacity(kept.len() + 1);
            with_cls.push(CLS_ID);
            with_cls.extend_from_slice(kept);
            ids.push(with_cls);
        }
        let len = ids.iter().map(Vec::len).max().unwrap_or(1);
        let width = self.config.hidden_size;
        let mut values = Array3::zeros((ids.len(), len, width));
        let mut mask = Array2::from_elem((ids.len(), len), false);
        let (tok, pos) = (&self.params.token_embedding, &self.params.position_embedding);
        for (b, seq) in ids.iter().enumerate() {
            for (t, &id) in seq.iter().enumerate() {
                let mut dst = values.slice_mut(s![b, t, ..]);
                dst.assign(&tok.row(id as usize));
                dst += &pos.row(t);
                mask[[b, t]] = true;
            }
        }
        Ok((HiddenStates { values, mask }, EmbedTape { ids }))
    }

    pub(crate) fn embed_backward(&self, tape: &EmbedTape, dh: &Array3<f64>, grads: &mut EncoderParams) {
        for (b, seq) in tape.ids.iter().enumerate() {
            for (t, &id) in seq.iter().enumerate() {
                let d = dh.slice(s![b, t, ..]);
                let mut tok = grads.token_embedding.row_mut(id as usize);
                tok += &d;
                let mut pos = grads.position_embedding.row_mut(t);
                pos += &d;
            }
        }
    }

    fn check_range(&self, h: &HiddenStates, from: usize, to: usize) -> Result<()> {
        if from > to || to > self.config.num_layers {
            return Err(Error::invalid(format!(
                "layer range {from}..{to} invalid for {} layers",
                self.config.num_layers
            )));
        }
        if h.hidden_size() != self.config.hidden_size {
            return Err(Error::Shape(format!(
                "hidden size {} does not match encoder width {}",
                h.hidden_size(),
                self.config.hidden_size
            )));
        }
        Ok(())
    }

    /// Applies layers `from+1 ..= to` (1-based). `from == to` is the identity.
    /// Masked positions of the output are zero.
    pub fn forward_layers(&self, h: &HiddenStates, from: usize, to: usize) -> Result<HiddenStates> {
        if from == to {
            self.check_range(h, from, to)?;
            return Ok(h.clone());
        }
        Ok(self.forward_layers_taped(h, from, to)?.0)
    }

    pub(crate) fn forward_layers_taped(
        &self,
        h: &HiddenStates,
        from: usize,
        to: usize,
    ) -> Result<(HiddenStates, LayersTape)> {
        self.check_range(h, from, to)?;
        let packing = h.packing()?;
        let mut x = h.gather(&packing);
        let mut blocks = Vec::with_capacity(to - from);
        for layer in &self.params.layers[from..to] {
            let (y, cache) = self.block_forward(layer, &x, &packing.offsets);
            x = y;
            blocks.push(cache);
        }
        let out = HiddenStates {
            values: scatter(&x, &packing),
            mask: h.mask.clone(),
        };
        Ok((
            out,
            LayersTape {
                from,
                packing,
                blocks,
            },
        ))
    }

    /// Backpropagates through a taped layer range; returns the input gradient.
    pub(crate) fn backward_layers(
        &self,
        tape: &LayersTape,
        d_out: &Array3<f64>,
        grads: &mut EncoderParams,
    ) -> Array3<f64> {
        let mut d = gather(d_out, &tape.packing);
        for (i, cache) in tape.blocks.iter().enumerate().rev() {
            let l = tape.from + i;
            d = self.block_backward(&self.params.layers[l], cache, &d, &tape.packing.offsets, &mut grads.layers[l]);
        }
        scatter(&d, &tape.packing)
    }

    fn block_forward(&self, p: &BlockParams, x: &Array2<f64>, offsets: &[usize]) -> (Array2<f64>, BlockCache) {
        let eps = self.config.layer_norm_eps;
        let (y1, ln1) = layer_norm(x, &p.ln1, eps);
        let q = linear(&y1, &p.wq, &p.bq);
        let k = linear(&y1, &p.wk, &p.bk);
        let v = linear(&y1, &p.wv, &p.bv);
        let (ctx, probs) = attention(&q, &k, &v, offsets, self.config.num_heads);
        let mut x1 = linear(&ctx, &p.wo, &p.bo);
        x1 += x;
        let (y2, ln2) = layer_norm(&x1, &p.ln2, eps);
        let u = linear(&y2, &p.w1, &p.b1);
        let g = gelu(&u);
        let mut out = linear(&g, &p.w2, &p.b2);
        out += &x1;
        let cache = BlockCache {
            ln1,
            y1,
            q,
            k,
            v,
            probs,
            ctx,
            ln2,
            y2,
            u,
            g,
        };
        (out, cache)
    }

    fn block_backward(
        &self,
        p: &BlockParams,
        c: &BlockCache,
        d_out: &Array2<f64>,
        offsets: &[usize],
        gp: &mut BlockParams,
    ) -> Array2<f64> {
        // feed-forward branch
        let dg = linear_backward(&c.g, d_out, &p.w2, &mut gp.w2, &mut gp.b2);
        let du = gelu_backward(&c.u, &dg);
        let dy2 = linear_backward(&c.y2, &du, &p.w1, &mut gp.w1, &mut gp.b1);
        let mut dx1 = layer_norm_backward(&dy2, &c.ln2, &p.ln2, &mut gp.ln2);
        dx1 += d_out;

        // attention branch
        let dctx = linear_backward(&c.ctx, &dx1, &p.wo, &mut gp.wo, &mut gp.bo);
        let ag = attention_backward(&dctx, &c.q, &c.k, &c.v, &c.probs, offsets, self.config.num_heads);
        let mut dy1 = linear_backward(&c.y1, &ag.dq, &p.wq, &mut gp.wq, &mut gp.bq);
        dy1 += &linear_backward(&c.y1, &ag.dk, &p.wk, &mut gp.wk, &mut gp.bk);
        dy1 += &linear_backward(&c.y1, &ag.dv, &p.wv, &mut gp.wv, &mut gp.bv);
        let mut dx = layer_norm_backward(&dy1, &c.ln1, &p.ln1, &mut gp.ln1);
        dx += &dx1;
        dx
    }

    /// `ReLU(pooled · W_h + b_h)`, one row per sample.
    pub fn intent_head(&self, pooled: &Array2<f64>) -> Result<Array2<f64>> {
        if pooled.ncols() != self.config.hidden_size {
            return Err(Error::Shape(format!(
                "pooled width {} does not match hidden size {}",
                pooled.ncols(),
                self.config.hidden_size
            )));
        }
        Ok(linear(pooled, &self.params.intent_w, &self.params.intent_b).mapv(|v| v.max(0.0)))
    }

    /// Logits of the K-way (`num_classes == K`) or (K+1)-way classifier.
    /// The K-way classifier is the first K rows of the (K+1)-way one.
    pub fn classify(&self, z: &Array2<f64>, num_classes: usize) -> Result<Array2<f64>> {
        let k = self.num_known;
        if num_classes != k && num_classes != k + 1 {
            return Err(Error::invalid(format!(
                "classifier has {k} or {} outputs, not {num_classes}",
                k + 1
            )));
        }
        if z.ncols() != self.config.intent_dim {
            return Err(Error::Shape(format!(
                "intent width {} does not match {}",
                z.ncols(),
                self.config.intent_dim
            )));
        }
        let w = self.params.classifier_w.slice(s![..num_classes, ..]);
        let b = self.params.classifier_b.slice(s![..num_classes]);
        let mut logits = z.dot(&w.t());
        logits += &b;
        Ok(logits)
    }

    /// Mean pool, intent head and (K+1)-way classifier, with saved activations.
    pub(crate) fn readout_taped(&self, h: &HiddenStates) -> Result<(Array2<f64>, ReadoutTape)> {
        let pooled = mean_pool(h)?;
        let pre = linear(&pooled, &self.params.intent_w, &self.params.intent_b);
        let z = pre.mapv(|v| v.max(0.0));
        let logits = self.classify(&z, self.num_known + 1)?;
        Ok((
            logits,
            ReadoutTape {
                mask: h.mask.clone(),
                pooled,
                pre,
                z,
            },
        ))
    }

    /// `d_logits` has K+1 columns. Returns the gradient w.r.t. the last hidden states.
    pub(crate) fn readout_backward(
        &self,
        tape: &ReadoutTape,
        d_logits: &Array2<f64>,
        grads: &mut EncoderParams,
    ) -> Array3<f64> {
        ndarray::linalg::general_mat_mul(1.0, &d_logits.t(), &tape.z, 1.0, &mut grads.classifier_w);
        grads.classifier_b += &d_logits.sum_axis(ndarray::Axis(0));
        let mut d_pre = d_logits.dot(&self.params.classifier_w);
        Zip::from(&mut d_pre).and(&tape.pre).for_each(|d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        let d_pooled = linear_backward(
            &tape.pooled,
            &d_pre,
            &self.params.intent_w,
            &mut grads.intent_w,
            &mut grads.intent_b,
        );
        mean_pool_backward(&tape.mask, &d_pooled)
    }

    /// Final-layer hidden states of a batch of token id sequences.
    pub fn encode(&self, batch: &[&[u32]]) -> Result<HiddenStates> {
        let h0 = self.embed_batch(batch)?;
        self.forward_layers(&h0, 0, self.config.num_layers)
    }

    /// Intent representations `z`, one row per sequence.
    pub fn represent(&self, batch: &[&[u32]]) -> Result<Array2<f64>> {
        let h = self.encode(batch)?;
        self.intent_head(&mean_pool(&h)?)
    }

    /// (K+1)-way logits, one row per sequence.
    pub fn logits(&self, batch: &[&[u32]]) -> Result<Array2<f64>> {
        let z = self.represent(batch)?;
        self.classify(&z, self.num_known + 1)
    }

    /// A zeroed gradient accumulator shaped like the parameters.
    pub fn zero_grads(&self) -> EncoderParams {
        EncoderParams::zeros(&self.config, self.num_known)
    }
}
