//! Inference, the maximum-softmax-probability baseline, metrics and dumps.

mod dump;
mod metrics;

use ndarray::{s, Array2, ArrayView1};

use crate::data::EncodedCorpus;
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::loss::softmax;

pub use dump::{dump_confusion, dump_embeddings};
pub use metrics::{compute_metrics, ClassScores, MetricsReport};

pub const DEFAULT_MSP_THRESHOLD: f64 = 0.5;

/// 0-based index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// 1-based class of a row of K+1 logits.
pub fn predict_from_logits(logits: ArrayView1<f64>) -> usize {
    argmax(&logits.to_vec()) + 1
}

/// MSP decision from a logit row: softmax over the first `num_known`
/// logits; a top probability below `threshold` means the open class.
pub fn msp_from_logits(logits: ArrayView1<f64>, num_known: usize, threshold: f64) -> usize {
    let probs = softmax(logits.slice(s![..num_known]));
    let best = argmax(probs.as_slice().expect("contiguous"));
    if probs[best] < threshold {
        num_known + 1
    } else {
        best + 1
    }
}

pub fn predict(model: &EncoderModel, ids: &[u32]) -> Result<usize> {
    let logits = model.logits(&[ids])?;
    Ok(predict_from_logits(logits.row(0)))
}

pub fn msp_predict(model: &EncoderModel, ids: &[u32], threshold: f64) -> Result<usize> {
    let logits = model.logits(&[ids])?;
    Ok(msp_from_logits(logits.row(0), model.num_known(), threshold))
}

/// (K+1)-way logits for every utterance, computed in chunks.
pub fn corpus_logits(model: &EncoderModel, data: &EncodedCorpus, batch_size: usize) -> Result<Array2<f64>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let width = model.num_known() + 1;
    let mut out = Array2::zeros((data.len(), width));
    let mut start = 0;
    for chunk in data.ids.chunks(batch_size) {
        let batch: Vec<&[u32]> = chunk.iter().map(Vec::as_slice).collect();
        let logits = model.logits(&batch)?;
        out.slice_mut(s![start..start + chunk.len(), ..]).assign(&logits);
        start += chunk.len();
    }
    Ok(out)
}

pub fn predict_corpus(model: &EncoderModel, data: &EncodedCorpus, batch_size: usize) -> Result<Vec<usize>> {
    let logits = corpus_logits(model, data, batch_size)?;
    Ok(logits.rows().into_iter().map(predict_from_logits).collect())
}

/// Metrics of the (K+1)-way classifier, including accuracy of the K-way
/// restriction on known-class samples.
pub fn evaluate(model: &EncoderModel, test: &EncodedCorpus, batch_size: usize) -> Result<MetricsReport> {
    let logits = corpus_logits(model, test, batch_size)?;
    let preds: Vec<usize> = logits.rows().into_iter().map(predict_from_logits).collect();
    finish(&logits, preds, &test.labels, model.num_known())
}

/// Metrics of the MSP baseline on the K-way classifier.
pub fn evaluate_msp(
    model: &EncoderModel,
    test: &EncodedCorpus,
    threshold: f64,
    batch_size: usize,
) -> Result<MetricsReport> {
    let k = model.num_known();
    let logits = corpus_logits(model, test, batch_size)?;
    let preds = logits
        .rows()
        .into_iter()
        .map(|row| msp_from_logits(row, k, threshold))
        .collect();
    finish(&logits, preds, &test.labels, k)
}

fn finish(logits: &Array2<f64>, preds: Vec<usize>, golds: &[usize], k: usize) -> Result<MetricsReport> {
    let mut report = compute_metrics(&preds, golds, k)?;
    let known: Vec<usize> = (0..golds.len()).filter(|&i| golds[i] <= k).collect();
    if !known.is_empty() {
        let hits = known
            .iter()
            .filter(|&&i| argmax(&logits.slice(s![i, ..k]).to_vec()) + 1 == golds[i])
            .count();
        report.acc_kok = Some(hits as f64 / known.len() as f64);
    }
    Ok(report)
}
