use super::Tensor;
use crate::error::{Error, Result};

/// Probability floor used by the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let k = out.cols();
    for row in out.data_mut().chunks_exact_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// `−ln p[b, target_b]`, with `p` clamped at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &Tensor, targets: &[usize]) -> Result<Vec<f64>> {
    check_targets(probs, targets)?;
    Ok(probs.iter_rows().zip(targets).map(|(p, &t)| -p[t].max(PROB_FLOOR).ln()).collect())
}

/// Shannon entropy of each row in nats; `0·ln 0 = 0`.
pub fn entropy(probs: &Tensor) -> Vec<f64> {
    probs.iter_rows().map(row_entropy).collect()
}

pub fn row_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Chain rule through softmax: given `dL/dp`, returns `dL/dz`.
pub fn softmax_backward(probs: &Tensor, dprobs: &Tensor) -> Tensor {
    let mut out = dprobs.clone();
    let k = out.cols();
    for (d, p) in out.data_mut().chunks_exact_mut(k).zip(probs.iter_rows()) {
        let dot: f64 = d.iter().zip(p).map(|(a, b)| a * b).sum();
        d.iter_mut().zip(p).for_each(|(g, pi)| *g = pi * (*g - dot));
    }
    out
}

/// Mean cross-entropy against `targets` and its logit gradient
/// `(p − onehot)/B`.
pub fn mean_cross_entropy(probs: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    let losses = cross_entropy(probs, targets)?;
    let b = targets.len() as f64;
    let mut grad = probs.clone();
    let k = grad.cols();
    for (row, &t) in grad.data_mut().chunks_exact_mut(k).zip(targets) {
        row[t] -= 1.0;
        row.iter_mut().for_each(|v| *v /= b);
    }
    Ok((losses.iter().sum::<f64>() / b, grad))
}

/// Mean prediction entropy and its logit gradient
/// `dH/dz_j = −p_j (ln p_j + H)`, divided by `B`.
pub fn mean_entropy(probs: &Tensor) -> (f64, Tensor) {
    let b = probs.rows() as f64;
    let mut grad = probs.clone();
    let k = grad.cols();
    let mut total = 0.0;
    for row in grad.data_mut().chunks_exact_mut(k) {
        let h = row_entropy(row);
        total += h;
        for p in row.iter_mut() {
            *p = if *p > 0.0 { -*p * (p.ln() + h) / b } else { 0.0 };
        }
    }
    (total / b, grad)
}

fn check_targets(probs: &Tensor, targets: &[usize]) -> Result<()> {
    if targets.len() != probs.rows() {
        return Err(Error::config(format!("{} targets for {} rows", targets.len(), probs.rows())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= probs.cols()) {
        return Err(Error::config(format!("target {t} outside [0, {})", probs.cols())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Tensor {
        Tensor::matrix(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&row(&[0.0, 0.0])).data(), &[0.5, 0.5]);
        let p = softmax(&row(&[1000.0, 0.0]));
        assert!(p.all_finite());
        assert!((p.data()[0] - 1.0).abs() < 1e-15 && p.data()[1] < 1e-300);
        let p = softmax(&row(&[2f64.ln(), 0.0]));
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&row(&[0.0, 1.0]), &[1]).unwrap(), vec![0.0]);
        let l = cross_entropy(&row(&[0.6, 0.4]), &[0]).unwrap()[0];
        assert!((l - 0.510_825_623_765_990_7).abs() < 1e-12);
        let l = cross_entropy(&row(&[0.1; 10]), &[3]).unwrap()[0];
        assert!((l - 10f64.ln()).abs() < 1e-12);
        let l = cross_entropy(&row(&[1.0, 0.0]), &[1]).unwrap()[0];
        assert_eq!(l, -(1e-12f64).ln());
        assert!(cross_entropy(&row(&[1.0, 0.0]), &[2]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&row(&[0.0, 1.0, 0.0])), vec![0.0]);
        assert!((entropy(&row(&[0.25; 4]))[0] - 4f64.ln()).abs() < 1e-15);
        let h = entropy(&row(&[0.9, 0.1]))[0];
        assert!((h - 0.325_082_973_391_448_2).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_one_hot_has_zero_gradient() {
        let (h, g) = mean_entropy(&Tensor::matrix(2, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap());
        assert_eq!(h, 0.0);
        assert!(g.data().iter().all(|v| *v == 0.0));
        let (h, _) = mean_entropy(&row(&[0.2; 5]));
        assert!((h - 5f64.ln()).abs() < 1e-12);
    }
}
