//! L1-median (geometric median) by the modified Weiszfeld iteration of
//! Vardi and Zhang, which stays well defined when an iterate lands on a
//! data point.

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `Σ_j ‖p_j - μ‖₂`.
pub fn l1_objective(points: &[Vec<f64>], mu: &[f64]) -> f64 {
    points.iter().map(|p| distance(p, mu)).sum()
}

#[derive(Clone, Debug)]
pub struct MedianResult {
    pub median: Vec<f64>,
    pub iterations: usize,
    /// Objective value at the start and after every iteration.
    pub objective_trace: Vec<f64>,
}

/// Starts at the centroid; stops when the L1 step falls below `tol` times
/// the L1 norm of the iterate, or after `max_iter` iterations.
pub fn l1_median(points: &[Vec<f64>], tol: f64, max_iter: usize) -> MedianResult {
    assert!(!points.is_empty(), "l1_median of no points");
    let d = points[0].len();
    let n = points.len() as f64;
    let mut mu = vec![0.0; d];
    for p in points {
        for (m, v) in mu.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut trace = vec![l1_objective(points, &mu)];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        let mut r = vec![0.0; d];
        let mut coincident = 0.0;
        for p in points {
            let dist = distance(p, &mu);
            if dist <= 1e-300 {
                coincident += 1.0;
                continue;
            }
            den += 1.0 / dist;
            for j in 0..d {
                num[j] += p[j] / dist;
                r[j] += (p[j] - mu[j]) / dist;
            }
        }
        if den == 0.0 {
            break; // every point coincides with μ
        }
        let t: Vec<f64> = num.iter().map(|v| v / den).collect();
        let next: Vec<f64> = if coincident == 0.0 {
            t
        } else {
            let rn = norm2(&r);
            if rn <= coincident {
                // μ is a data point satisfying the optimality condition
                trace.push(trace[trace.len() - 1]);
                break;
            }
            let g = coincident / rn;
            t.iter().zip(&mu).map(|(ti, mi)| (1.0 - g) * ti + g * mi).collect()
        };
        let step: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        let size: f64 = next.iter().map(|v| v.abs()).sum();
        mu = next;
        trace.push(l1_objective(points, &mu));
        if step <= tol * size {
            break;
        }
    }
    MedianResult { median: mu, iterations, objective_trace: trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_are_their_own_median() {
        let p = vec![vec![1.0, 0.9, 1.2]; 5];
        let r = l1_median(&p, 1e-6, 200);
        assert_eq!(r.median, p[0]);
    }

    #[test]
    fn collinear_median_is_middle_point() {
        let p = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![10.0, 0.0]];
        let r = l1_median(&p, 1e-12, 1000);
        assert!((r.median[0] - 1.0).abs() < 1e-6, "{:?}", r.median);
    }
}
