//! Row normalizers that map an arbitrary real vector onto the probability
//! simplex.
//!
//! * [`softmax_row`] is dense: every output is strictly positive.
//! * [`sparsemax_row`] is the Euclidean projection onto the simplex
//!   (sort-and-threshold). Coordinates below the threshold τ come out as
//!   exact zeros, which is what lets a mask drop a state element entirely.
//!
//! ```text
//! sparsemax(v) = argmin_{p ≥ 0, Σp = 1} ‖p − v‖²  =  [v − τ]₊
//! ```

/// Numerically stable softmax (max-subtracted).
pub fn softmax_row(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Vector-Jacobian product of softmax given its output `p`.
pub fn softmax_backward(p: &[f64], upstream: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(upstream).map(|(p, g)| p * g).sum();
    p.iter().zip(upstream).map(|(p, g)| p * (g - inner)).collect()
}

/// Threshold τ such that `Σ max(v_i − τ, 0) = 1`.
pub fn sparsemax_threshold(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut support = 0;
    let mut support_sum = 0.0;
    for (k, &z) in sorted.iter().enumerate() {
        cumsum += z;
        if 1.0 + (k + 1) as f64 * z > cumsum {
            support = k + 1;
            support_sum = cumsum;
        }
    }
    (support_sum - 1.0) / support as f64
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn sparsemax_row(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let tau = sparsemax_threshold(v);
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Vector-Jacobian product of sparsemax at input `v`.
///
/// On the support S = {i : p_i > 0} the Jacobian is `I − 𝟙𝟙ᵀ/|S|`; it is zero
/// elsewhere. An input sitting exactly on a support boundary gets the
/// smaller-support Jacobian, since the boundary coordinate has `p_i = 0`.
pub fn sparsemax_backward(v: &[f64], upstream: &[f64]) -> Vec<f64> {
    let p = sparsemax_row(v);
    sparsemax_backward_from_output(&p, upstream)
}

pub(crate) fn sparsemax_backward_from_output(p: &[f64], upstream: &[f64]) -> Vec<f64> {
    let (count, total) = p
        .iter()
        .zip(upstream)
        .filter(|(p, _)| **p > 0.0)
        .fold((0usize, 0.0), |(c, t), (_, g)| (c + 1, t + g));
    let mean = if count > 0 { total / count as f64 } else { 0.0 };
    p.iter()
        .zip(upstream)
        .map(|(p, g)| if *p > 0.0 { g - mean } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_symmetric_inputs() {
        assert!(close(&softmax_row(&[0.0, 0.0]), &[0.5, 0.5], 1e-15));
        for c in [-50.0, 0.0, 3.5, 900.0] {
            let third = 1.0 / 3.0;
            assert!(close(&softmax_row(&[c, c, c]), &[third; 3], 1e-15));
        }
    }

    #[test]
    fn softmax_large_input_does_not_overflow() {
        let p = softmax_row(&[1000.0, 0.0]);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1] < 1e-300);
    }

    #[test]
    fn softmax_shift_invariant() {
        let v = [0.3, -1.2, 2.0, 0.0];
        let shifted: Vec<f64> = v.iter().map(|x| x + 17.25).collect();
        assert!(close(&softmax_row(&v), &softmax_row(&shifted), 1e-15));
    }

    #[test]
    fn sparsemax_examples() {
        let third = 1.0 / 3.0;
        assert!(close(&sparsemax_row(&[1.0, 1.0, 1.0]), &[third; 3], 1e-15));
        assert_eq!(sparsemax_row(&[2.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        assert!(close(&sparsemax_row(&[0.6, 0.4]), &[0.6, 0.4], 1e-15));
    }

    #[test]
    fn sparsemax_backward_full_support_annihilates_sum_direction() {
        let v = [0.3, 0.2, 0.25, 0.25];
        assert!(sparsemax_row(&v).iter().all(|p| *p > 0.0));
        let g = sparsemax_backward(&v, &[1.0; 4]);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn sparsemax_backward_inactive_coordinates_are_zero() {
        let g = sparsemax_backward(&[2.0, 0.0, 0.0], &[0.3, -1.0, 4.0]);
        assert_eq!(g[1], 0.0);
        assert_eq!(g[2], 0.0);
    }
}
