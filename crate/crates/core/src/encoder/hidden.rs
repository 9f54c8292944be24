use ndarray::{s, Array2, Array3, Axis};

use crate::error::{Error, Result};

/// Per-position hidden states of a padded batch. Position 0 of every sample
/// is the CLS token; `mask[[b, t]]` marks valid positions.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    pub values: Array3<f64>,
    pub mask: Array2<bool>,
}

/// Row layout of the valid positions of a batch, packed sample by sample.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Packing {
    pub offsets: Vec<usize>,
    pub positions: Vec<(usize, usize)>,
    pub seq_len: usize,
}

impl Packing {
    pub fn rows(&self) -> usize {
        self.positions.len()
    }

    pub fn batch_size(&self) -> usize {
        self.offsets.len() - 1
    }
}

impl HiddenStates {
    pub fn new(values: Array3<f64>, mask: Array2<bool>) -> Result<Self> {
        let (b, l, _) = values.dim();
        if mask.dim() != (b, l) {
            return Err(Error::Shape(format!(
                "mask {:?} does not match values ({b}, {l}, _)",
                mask.dim()
            )));
        }
        Ok(HiddenStates { values, mask })
    }

    pub fn batch_size(&self) -> usize {
        self.values.dim().0
    }

    pub fn seq_len(&self) -> usize {
        self.values.dim().1
    }

    pub fn hidden_size(&self) -> usize {
        self.values.dim().2
    }

    /// Number of valid positions per sample.
    pub fn lengths(&self) -> Vec<usize> {
        self.mask
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&m| m).count())
            .collect()
    }

    /// Sample `b` as a batch of one.
    pub fn sample(&self, b: usize) -> HiddenStates {
        HiddenStates {
            values: self.values.slice(s![b..b + 1, .., ..]).to_owned(),
            mask: self.mask.slice(s![b..b + 1, ..]).to_owned(),
        }
    }

    /// Concatenates batches, zero-padding to the longest sequence.
    pub fn stack(items: &[HiddenStates]) -> Result<HiddenStates> {
        let first = items
            .first()
            .ok_or_else(|| Error::Empty("no hidden states to stack".into()))?;
        let width = first.hidden_size();
        if items.iter().any(|h| h.hidden_size() != width) {
            return Err(Error::Shape("hidden sizes differ".into()));
        }
        let batch: usize = items.iter().map(HiddenStates::batch_size).sum();
        let len = items.iter().map(HiddenStates::seq_len).max().unwrap_or(0);
        let mut values = Array3::zeros((batch, len, width));
        let mut mask = Array2::from_elem((batch, len), false);
        let mut row = 0;
        for h in items {
            let (b, l) = (h.batch_size(), h.seq_len());
            values.slice_mut(s![row..row + b, ..l, ..]).assign(&h.values);
            mask.slice_mut(s![row..row + b, ..l]).assign(&h.mask);
            row += b;
        }
        Ok(HiddenStates { values, mask })
    }

    pub(crate) fn packing(&self) -> Result<Packing> {
        let mut offsets = Vec::with_capacity(self.batch_size() + 1);
        let mut positions = Vec::new();
        offsets.push(0);
        for (b, row) in self.mask.rows().into_iter().enumerate() {
            let before = positions.len();
            positions.extend(row.iter().enumerate().filter(|(_, &m)| m).map(|(t, _)| (b, t)));
            if positions.len() == before {
                return Err(Error::invalid(format!("sample {b} has no valid positions")));
            }
            offsets.push(positions.len());
        }
        Ok(Packing {
            offsets,
            positions,
            seq_len: self.seq_len(),
        })
    }

    pub(crate) fn gather(&self, packing: &Packing) -> Array2<f64> {
        gather(&self.values, packing)
    }
}

pub(crate) fn gather(values: &Array3<f64>, packing: &Packing) -> Array2<f64> {
    let width = values.dim().2;
    let mut rows = Array2::zeros((packing.rows(), width));
    for (mut dst, &(b, t)) in rows.rows_mut().into_iter().zip(&packing.positions) {
        dst.assign(&values.slice(s![b, t, ..]));
    }
    rows
}

/// Inverse of [`gather`]; invalid positions are zero.
pub(crate) fn scatter(rows: &Array2<f64>, packing: &Packing) -> Array3<f64> {
    let mut values = Array3::zeros((packing.batch_size(), packing.seq_len, rows.ncols()));
    for (src, &(b, t)) in rows.rows().into_iter().zip(&packing.positions) {
        values.slice_mut(s![b, t, ..]).assign(&src);
    }
    values
}

/// Mean over the valid positions (CLS included) of every sample: `(batch, H)`.
pub fn mean_pool(h: &HiddenStates) -> Result<Array2<f64>> {
    let (batch, _, width) = h.values.dim();
    let mut pooled = Array2::zeros((batch, width));
    for (b, mut out) in pooled.axis_iter_mut(Axis(0)).enumerate() {
        let mut count = 0usize;
        for (t, &valid) in h.mask.row(b).iter().enumerate() {
            if valid {
                out += &h.values.slice(s![b, t, ..]);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::invalid(format!("sample {b} has no valid positions to pool")));
        }
        out /= count as f64;
    }
    Ok(pooled)
}

/// Gradient of [`mean_pool`] with respect to the hidden states.
pub(crate) fn mean_pool_backward(mask: &Array2<bool>, d_pooled: &Array2<f64>) -> Array3<f64> {
    let (batch, len) = mask.dim();
    let mut dh = Array3::zeros((batch, len, d_pooled.ncols()));
    for b in 0..batch {
        let count = mask.row(b).iter().filter(|&&m| m).count() as f64;
        let share = &d_pooled.row(b) / count;
        for (t, &valid) in mask.row(b).iter().enumerate() {
            if valid {
                dh.slice_mut(s![b, t, ..]).assign(&share);
            }
        }
    }
    dh
}
