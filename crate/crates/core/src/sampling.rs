//! Deterministic point sets for grid scans.

use crate::field::Weights;
use crate::flag::sr_pseudo_norm;

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// The `i`-th Halton point in `[0,1)^n`.
pub fn halton(i: u64, n: usize) -> Vec<f64> {
    assert!(n <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
    (0..n).map(|k| radical_inverse(i + 1, PRIMES[k])).collect()
}

/// `count` quasi-random points with `||x||_sR <= radius`, starting with the
/// origin. Candidates come from the box `|x_i| <= radius^{w_i}` and are
/// rejected outside the pseudo-ball.
pub fn sr_ball_points(w: &Weights, radius: f64, count: usize) -> Vec<Vec<f64>> {
    let n = w.len();
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(vec![0.0; n]);
    let half: Vec<f64> = w.as_slice().iter().map(|&wi| radius.powi(wi as i32)).collect();
    let mut i = 0u64;
    while out.len() < count {
        let u = halton(i, n);
        i += 1;
        let x: Vec<f64> = u.iter().zip(&half).map(|(t, h)| (2.0 * t - 1.0) * h).collect();
        if sr_pseudo_norm(&x, w) <= radius {
            out.push(x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(0, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(1, 1), vec![0.25]);
    }

    #[test]
    fn ball_points_stay_inside() {
        let w = Weights::new(vec![1, 1, 2]).unwrap();
        let pts = sr_ball_points(&w, 10.0, 500);
        assert_eq!(pts.len(), 500);
        assert!(pts.iter().all(|p| sr_pseudo_norm(p, &w) <= 10.0));
        assert_eq!(pts[0], vec![0.0; 3]);
    }
}
