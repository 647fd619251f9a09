//! Summary statistics used by the experiments.

use rand::Rng;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Trailing moving average over at most `window` values.
pub fn smooth(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Two-sided paired permutation test of `mean(a - b) = 0`: each pair's
/// difference keeps or flips its sign at random. Returns
/// `(1 + #{|perm mean| >= |observed mean|}) / (1 + permutations)`.
pub fn paired_permutation_test<R: Rng + ?Sized>(a: &[f64], b: &[f64], permutations: usize, rng: &mut R) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples need equal lengths");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let observed = d.iter().sum::<f64>().abs();
    // tolerance for sums that differ only by float rounding
    let tol = 1e-9 * (1.0 + observed);
    let mut hits = 0usize;
    for _ in 0..permutations {
        let mut s = 0.0;
        for x in &d {
            if rng.random::<bool>() {
                s += x;
            } else {
                s -= x;
            }
        }
        if s.abs() >= observed - tol {
            hits += 1;
        }
    }
    (1 + hits) as f64 / (1 + permutations) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smoothing_window() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(smooth(&[2.0], 10), vec![2.0]);
    }

    #[test]
    fn permutation_p_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = vec![1.0; 30];
        let b = vec![0.0; 30];
        assert!(paired_permutation_test(&a, &b, 2000, &mut rng) < 0.01);
        assert_eq!(paired_permutation_test(&a, &a, 100, &mut rng), 1.0);
    }

    #[test]
    fn median_and_spread() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(std_dev(&[1.0, 3.0]), 1.0);
    }
}
