//! Exhaustive policy enumeration with exact policy evaluation.

use krrl_core::mdp::TaskMdp;
use rand::Rng;

/// Dense random MDP: `p[s][a][t]` and `r[s][a][t]`.
#[derive(Debug, Clone)]
pub struct DenseMdp {
    pub p: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<Vec<f64>>>,
}

impl DenseMdp {
    pub fn random<R: Rng>(n: usize, m: usize, rng: &mut R) -> DenseMdp {
        let mut p = vec![vec![vec![0.0; n]; m]; n];
        let mut r = vec![vec![vec![0.0; n]; m]; n];
        for s in 0..n {
            for a in 0..m {
                // sparse-ish rows: each successor kept with probability 1/2
                let mut w: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { rng.random::<f64>() } else { 0.0 }).collect();
                if w.iter().all(|x| *x == 0.0) {
                    w[rng.random_range(0..n)] = 1.0;
                }
                let total: f64 = w.iter().sum();
                for t in 0..n {
                    p[s][a][t] = w[t] / total;
                    r[s][a][t] = rng.random_range(-10.0..10.0);
                }
            }
        }
        DenseMdp { p, r }
    }

    pub fn to_task_mdp(&self) -> TaskMdp {
        let n = self.p.len();
        let m = self.p[0].len();
        let mut mdp = TaskMdp::new(n, m);
        for s in 0..n {
            for a in 0..m {
                let row: Vec<(usize, f64, f64)> =
                    (0..n).filter(|t| self.p[s][a][*t] > 0.0).map(|t| (t, self.p[s][a][t], self.r[s][a][t])).collect();
                mdp.set_row(s, a, row);
            }
        }
        mdp
    }

    /// Solve `(I - gamma P_pi) v = r_pi` by Gaussian elimination.
    pub fn evaluate(&self, policy: &[usize], gamma: f64) -> Vec<f64> {
        let n = self.p.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        for s in 0..n {
            let act = policy[s];
            a[s][s] = 1.0;
            for t in 0..n {
                a[s][t] -= gamma * self.p[s][act][t];
                a[s][n] += self.p[s][act][t] * self.r[s][act][t];
            }
        }
        for col in 0..n {
            let piv = (col..n).max_by(|i, j| a[*i][col].abs().total_cmp(&a[*j][col].abs())).unwrap();
            a.swap(col, piv);
            for row in 0..n {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..=n {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        (0..n).map(|s| a[s][n] / a[s][s]).collect()
    }

    /// Best value per state over all deterministic stationary policies.
    pub fn optimal_values(&self, gamma: f64) -> Vec<f64> {
        let n = self.p.len();
        let m = self.p[0].len();
        let mut best = vec![f64::NEG_INFINITY; n];
        let mut policy = vec![0usize; n];
        for code in 0..m.pow(n as u32) {
            let mut c = code;
            for s in policy.iter_mut() {
                *s = c % m;
                c /= m;
            }
            for (b, v) in best.iter_mut().zip(self.evaluate(&policy, gamma)) {
                *b = b.max(v);
            }
        }
        best
    }
}
