use crate::error::{Error, Result};

/// Central-difference gradient estimate of a scalar function.
///
/// Coordinate i is `(f(p + h eᵢ) − f(p − h eᵢ)) / 2h`.
pub fn finite_diff<F>(mut f: F, p: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        probe[i] = p[i] + h;
        let plus = f(&probe);
        probe[i] = p[i] - h;
        let minus = f(&probe);
        probe[i] = p[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("finite_diff evaluation at coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector function; row i is output i.
pub fn finite_diff_jacobian<F>(mut f: F, p: &[f64], h: f64) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut probe = p.to_vec();
    let mut columns = Vec::with_capacity(p.len());
    for j in 0..p.len() {
        probe[j] = p[j] + h;
        let plus = f(&probe);
        probe[j] = p[j] - h;
        let minus = f(&probe);
        probe[j] = p[j];
        if plus.iter().chain(&minus).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("finite_diff_jacobian evaluation at coordinate {j}")));
        }
        columns.push(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let m = columns.first().map_or(0, Vec::len);
    Ok((0..m).map(|i| columns.iter().map(|c| c[i]).collect()).collect())
}

/// |a − b| / max(|a|, |b|, floor); the floor keeps near-zero gradients from
/// producing meaningless ratios.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = finite_diff(|p| p.iter().map(|x| x * x).sum(), &[1.0, 2.0], 1e-6).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function() {
        let g = finite_diff(|_| 7.5, &[1.0, -3.0, 2.0], 1e-6).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn sine_at_zero() {
        let g = finite_diff(|p| p[0].sin(), &[0.0], 1e-6).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn non_finite_is_an_error() {
        assert!(finite_diff(|p| 1.0 / p[0], &[0.0], 0.0).is_err());
        assert!(finite_diff(|_| f64::NAN, &[0.0], 1e-6).is_err());
    }

    #[test]
    fn jacobian_of_linear_map() {
        let j = finite_diff_jacobian(|p| vec![2.0 * p[0] - p[1], 3.0 * p[1]], &[0.4, 0.1], 1e-6).unwrap();
        let expected = [[2.0, -1.0], [0.0, 3.0]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((j[i][k] - expected[i][k]).abs() < 1e-8);
            }
        }
    }
}
