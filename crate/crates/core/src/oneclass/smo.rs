//! Pairwise coordinate descent for quadratic programs over the capped simplex
//!
//! ```text
//! min  1/2 a'Qa + p'a   s.t.  sum(a) = 1,  0 <= a_i <= C
//! ```
//!
//! Each step moves mass between the maximal violating pair, which keeps the
//! equality constraint exact.

use crate::error::{Error, Result};

pub(crate) struct SimplexQp<'a> {
    /// Row-major `n x n` quadratic term.
    pub quad: &'a [f64],
    pub linear: &'a [f64],
    pub cap: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub alphas: Vec<f64>,
    /// `Q a + p` at the solution.
    pub gradient: Vec<f64>,
}

const MIN_CURVATURE: f64 = 1e-12;

impl SimplexQp<'_> {
    fn n(&self) -> usize {
        self.linear.len()
    }

    fn q(&self, i: usize, j: usize) -> f64 {
        self.quad[i * self.n() + j]
    }

    /// Index able to grow with the smallest gradient and index able to
    /// shrink with the largest one. Ties go to the lowest index.
    fn select(&self, alphas: &[f64], gradient: &[f64]) -> (usize, usize, f64) {
        let mut up = usize::MAX;
        let mut down = usize::MAX;
        for k in 0..alphas.len() {
            if alphas[k] < self.cap && (up == usize::MAX || gradient[k] < gradient[up]) {
                up = k;
            }
            if alphas[k] > 0.0 && (down == usize::MAX || gradient[k] > gradient[down]) {
                down = k;
            }
        }
        if up == usize::MAX || down == usize::MAX {
            return (0, 0, 0.0);
        }
        (up, down, gradient[down] - gradient[up])
    }

    pub fn solve(&self, tolerance: f64, max_iterations: usize) -> Result<Solution> {
        let n = self.n();
        debug_assert_eq!(self.quad.len(), n * n);
        let mut alphas = vec![1.0 / n as f64; n];
        let mut gradient: Vec<f64> = (0..n)
            .map(|i| {
                let row = &self.quad[i * n..(i + 1) * n];
                row.iter().zip(&alphas).map(|(q, a)| q * a).sum::<f64>() + self.linear[i]
            })
            .collect();

        let mut iterations = 0;
        loop {
            let (up, down, violation) = self.select(&alphas, &gradient);
            if violation <= tolerance {
                return Ok(Solution { alphas, gradient });
            }
            if iterations >= max_iterations {
                return Err(Error::NotConverged {
                    iterations,
                    violation,
                    alphas,
                });
            }
            iterations += 1;

            let curvature =
                (self.q(up, up) + self.q(down, down) - 2.0 * self.q(up, down)).max(MIN_CURVATURE);
            let room_up = self.cap - alphas[up];
            let room_down = alphas[down];
            let mut step = violation / curvature;
            if step >= room_up.min(room_down) {
                step = room_up.min(room_down);
                if room_up <= room_down {
                    alphas[up] = self.cap;
                    alphas[down] -= step;
                } else {
                    alphas[up] += step;
                    alphas[down] = 0.0;
                }
                if room_up == room_down {
                    alphas[down] = 0.0;
                }
            } else {
                alphas[up] += step;
                alphas[down] -= step;
            }

            let (row_up, row_down) = (up * n, down * n);
            for (k, g) in gradient.iter_mut().enumerate() {
                *g += step * (self.quad[row_up + k] - self.quad[row_down + k]);
            }
        }
    }
}
