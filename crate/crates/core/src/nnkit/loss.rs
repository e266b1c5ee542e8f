use crate::error::{Error, Result};
use crate::nnkit::activation::{log_softmax_row, softmax_row};
use crate::nnkit::tensor::Tensor;
use crate::scalar::Scalar;

/// `-log softmax(logits)[label]`, computed through log-sum-exp.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<T> {
    if label >= logits.len() {
        return Err(Error::Domain(format!("label {label} outside {} classes", logits.len())));
    }
    Ok(-log_softmax_row(logits)[label])
}

/// Mean loss, its gradient w.r.t. the logits and the number of argmax hits.
#[derive(Clone, Debug)]
pub struct CrossEntropy<T> {
    pub loss: T,
    pub grad: Tensor<T>,
    pub correct: usize,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Batch-mean softmax cross-entropy over `N×C` logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<CrossEntropy<T>> {
    logits.expect_rank(2, "logits")?;
    let (n, c) = (logits.dim(0), logits.dim(1));
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Domain(format!("label {bad} outside {c} classes")));
    }
    let scale = T::one() / T::lit(n.max(1) as f64);
    let mut grad = Tensor::zeros(&[n, c]);
    let mut total = T::zero();
    let mut correct = 0;
    for (i, (&label, row)) in labels.iter().zip(logits.data().chunks(c)).enumerate() {
        total += -log_softmax_row(row)[label];
        if argmax(row) == label {
            correct += 1;
        }
        let p = softmax_row(row);
        let g = grad.outer_mut(i);
        for (j, (gv, pv)) in g.iter_mut().zip(p).enumerate() {
            let onehot = if j == label { T::one() } else { T::zero() };
            *gv = (pv - onehot) * scale;
        }
    }
    Ok(CrossEntropy { loss: total * scale, grad, correct })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln10() {
        let l = cross_entropy(&[0.0f64; 10], 3).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
        assert!((l - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn dominant_true_class_costs_nothing() {
        let mut z = [0.0f32; 10];
        z[7] = 1000.0;
        assert!(cross_entropy(&z, 7).unwrap().abs() < 1e-6);
    }

    #[test]
    fn invalid_label_is_domain_error() {
        assert!(matches!(cross_entropy(&[0.0f32; 3], 3), Err(Error::Domain(_))));
        let z = Tensor::<f32>::zeros(&[1, 3]);
        assert!(matches!(softmax_cross_entropy(&z, &[5]), Err(Error::Domain(_))));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0]), 1);
    }
}
