//! The two training loss terms. Both compare softmaxed logits against the
//! label matrix normalized into a distribution: one softmax over all n·m
//! cells, and one pair of row-wise/column-wise softmaxes.

use jf_autodiff::{Tape, Tensor, Var};

use super::Error;

/// Ground-truth joint cells of an n × m sample.
#[derive(Debug, Clone)]
pub struct Labels {
    pub n: usize,
    pub m: usize,
    pub positives: Vec<(usize, usize)>,
}

impl Labels {
    pub fn new(n: usize, m: usize, positives: Vec<(usize, usize)>) -> Result<Self, Error> {
        if positives.is_empty() {
            return Err(Error::NoPositiveLabels);
        }
        for &(u, v) in &positives {
            if u >= n || v >= m {
                return Err(Error::LabelOutOfRange { u, v, n, m });
            }
        }
        Ok(Self { n, m, positives })
    }

    /// Label matrix scaled to sum to 1, as a flat row-major tensor.
    fn weights(&self, shape: Vec<usize>) -> Tensor {
        let mut data = vec![0.0; self.n * self.m];
        let share = 1.0 / self.positives.len() as f64;
        for &(u, v) in &self.positives {
            data[u * self.m + v] += share;
        }
        Tensor::new(shape, data).expect("weight shape matches n*m")
    }
}

/// Cross-entropy of the label distribution against a softmax over all cells.
pub(crate) fn loss_ce_var(tape: &mut Tape, logits: Var, labels: &Labels) -> Result<Var, Error> {
    let flat = tape.reshape(logits, vec![1, labels.n * labels.m])?;
    let log_probs = tape.log_softmax(flat, 1)?;
    let w = tape.leaf(labels.weights(vec![1, labels.n * labels.m]));
    let weighted = tape.mul(w, log_probs)?;
    let total = tape.sum(weighted);
    Ok(tape.neg(total))
}

/// Cross-entropy against row-wise plus column-wise softmaxes, which scores a
/// cell well only if it wins both its row and its column.
pub(crate) fn loss_sym_var(tape: &mut Tape, logits: Var, labels: &Labels) -> Result<Var, Error> {
    let w = tape.leaf(labels.weights(vec![labels.n, labels.m]));
    let row_lp = tape.log_softmax(logits, 1)?;
    let col_lp = tape.log_softmax(logits, 0)?;
    let row_term = tape.mul(w, row_lp)?;
    let col_term = tape.mul(w, col_lp)?;
    let both = tape.add(row_term, col_term)?;
    let total = tape.sum(both);
    Ok(tape.neg(total))
}

/// Convenience scalar evaluation of the all-cells cross-entropy.
pub fn loss_ce(logits: &Tensor, labels: &Labels) -> Result<f64, Error> {
    let mut tape = Tape::new();
    let l = tape.leaf(logits.clone());
    let loss = loss_ce_var(&mut tape, l, labels)?;
    Ok(tape.value(loss).item()?)
}

/// Convenience scalar evaluation of the row+column cross-entropy.
pub fn loss_sym(logits: &Tensor, labels: &Labels) -> Result<f64, Error> {
    let mut tape = Tape::new();
    let l = tape.leaf(logits.clone());
    let loss = loss_sym_var(&mut tape, l, labels)?;
    Ok(tape.value(loss).item()?)
}
