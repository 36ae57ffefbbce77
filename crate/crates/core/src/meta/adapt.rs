use std::sync::Arc;

use ndarray::Array2;

use crate::autodiff::{Adam, ParamStore, Tape};
use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 10.0;

/// Per-class weight vectors scored by scaled cosine similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineClassifier {
    /// k x d class weights.
    pub weights: Array2<f64>,
    pub tau: f64,
}

impl CosineClassifier {
    pub fn logits(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut tape = Tape::new();
        let a = tape.leaf(h.clone());
        let w = tape.leaf(self.weights.clone());
        let c = tape.cosine(a, w);
        tape.value(c) * self.tau
    }

    pub fn predict(&self, h: &Array2<f64>) -> Vec<usize> {
        super::argmax_rows(&self.logits(h))
    }
}

/// Fits a cosine classifier on frozen support embeddings. Weights start at
/// the class means and take `steps` Adam steps on the mean support
/// cross-entropy of `tau * cos(h, w_j)`.
pub fn cosine_adapt(
    hs: &Array2<f64>,
    ys: &[usize],
    k: usize,
    steps: usize,
    lr: f64,
    tau: f64,
) -> Result<CosineClassifier> {
    if hs.nrows() != ys.len() || ys.is_empty() {
        return Err(Error::Dimension(format!("{} support rows, {} labels", hs.nrows(), ys.len())));
    }
    let d = hs.ncols();
    let mut init = Array2::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (row, &y) in hs.rows().into_iter().zip(ys) {
        if y >= k {
            return Err(Error::Episode(format!("support label {y} outside 0..{k}")));
        }
        let mut r = init.row_mut(y);
        r += &row;
        counts[y] += 1;
    }
    for (j, &c) in counts.iter().enumerate() {
        if c > 0 {
            let mut r = init.row_mut(j);
            r /= c as f64;
        }
    }

    let mut store = ParamStore::new();
    let w = store.add("cosine.weights", init);
    let mut adam = Adam::new(&store);
    let targets = Arc::new(ys.to_vec());
    let scale = 1.0 / ys.len() as f64;
    for _ in 0..steps {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.leaf(hs.clone());
        let c = tape.cosine(x, p.var(w));
        let logits = tape.scale(c, tau);
        let ce = tape.cross_entropy(logits, targets.clone());
        let loss = tape.scale(ce, scale);
        let mut grads = tape.backward(loss);
        let g = store.gradients(&mut grads, &p);
        adam.step(&mut store, &g, lr)?;
    }
    Ok(CosineClassifier {
        weights: store.get(w).clone(),
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(angles: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((angles.len(), 2), |(i, j)| {
            if j == 0 {
                angles[i].cos()
            } else {
                angles[i].sin()
            }
        })
    }

    #[test]
    fn separable_circle_fits() {
        // Class 0 near angle 0, class 1 near angle 1.2; the class means alone
        // misplace one point, adaptation must fix it.
        let hs = circle(&[0.0, 0.3, 0.7, 1.2, 1.0, 0.8]);
        let ys = [0, 0, 0, 1, 1, 1];
        let init = cosine_adapt(&hs, &ys, 2, 0, 0.1, DEFAULT_TAU).unwrap();
        let fit = cosine_adapt(&hs, &ys, 2, 200, 0.1, DEFAULT_TAU).unwrap();
        assert_eq!(fit.predict(&hs), ys.to_vec());
        assert_ne!(init.weights, fit.weights);
    }

    #[test]
    fn zero_lr_keeps_init() {
        let hs = circle(&[0.0, 0.1, 2.0, 2.2]);
        let ys = [0, 0, 1, 1];
        let a = cosine_adapt(&hs, &ys, 2, 0, 0.0, DEFAULT_TAU).unwrap();
        let b = cosine_adapt(&hs, &ys, 2, 25, 0.0, DEFAULT_TAU).unwrap();
        assert_eq!(a, b);
    }
}
