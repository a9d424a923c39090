//! Euclidean projection onto the probability simplex.

/// `argmin ‖w - v‖₂` over `{w ≥ 0, Σw = 1}` by the sorted-threshold method.
///
/// Sort descending, find the largest `ρ` with `u_ρ - (Σ_{j≤ρ} u_j - 1)/ρ > 0`,
/// shift by that threshold and clip at zero.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // The threshold makes Σw = 1 up to rounding; remove the last ulps so the
    // backtest contract sees an exact simplex point.
    let s: f64 = w.iter().sum();
    if s > 0.0 && s != 1.0 {
        for x in &mut w {
            *x /= s;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        let w = project_simplex(&[0.5, 0.5, 0.5]);
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(project_simplex(&[-0.75, 1.75]), vec![0.0, 1.0]);
        assert_eq!(project_simplex(&[7.0]), vec![1.0]);
    }
}
