//! Scaling-form half-steps with absorbed potentials.
//!
//! With reference potentials `(f̄, ḡ)` and `K̃_ij = exp((f̄_i + ḡ_j)/ε + L_ij)`,
//! the log-domain updates become
//!
//! ```text
//! f_i = f̄_i − ε log((1/n) Σ_j K̃_ij exp((g_j − ḡ_j)/ε))
//! g_j = ḡ_j − ε log((1/m) Σ_i K̃_ij exp((f_i − f̄_i)/ε))
//! ```
//!
//! which costs a matrix-vector product instead of one `exp` per entry. The
//! reference is re-absorbed whenever the scalings leave a safe range; the
//! half-step is then recomputed in the log domain.

use rayon::prelude::*;

use super::sinkhorn::SinkhornSolver;
use crate::error::Result;

/// Scalings stay within `exp(±ABSORB_LOG)` of the reference.
const ABSORB_LOG: f64 = 40.0;
/// Sums outside `[SAFE_MIN, SAFE_MAX]` trigger a log-domain fallback.
const SAFE_MIN: f64 = 1e-200;
const SAFE_MAX: f64 = 1e200;
const COLUMN_BLOCK: usize = 64;

pub(crate) struct Absorbed {
    f_ref: Vec<f64>,
    g_ref: Vec<f64>,
    scaled: Vec<f64>,
    n: usize,
    valid: bool,
}

impl Absorbed {
    pub(crate) fn new(m: usize, n: usize) -> Self {
        Self { f_ref: vec![0.0; m], g_ref: vec![0.0; n], scaled: Vec::new(), n, valid: false }
    }

    fn absorb(&mut self, solver: &SinkhornSolver, f: &[f64], g: &[f64]) {
        let eps = solver.kernel().epsilon();
        let l = solver.kernel().log_entries();
        let l = l.as_slice().expect("row-major kernel");
        let n = self.n;
        self.f_ref.copy_from_slice(f);
        self.g_ref.copy_from_slice(g);
        let gs: Vec<f64> = g.iter().map(|x| x / eps).collect();
        self.scaled.resize(l.len(), 0.0);
        self.scaled
            .par_chunks_mut(n)
            .zip(l.par_chunks(n))
            .zip(f.par_iter())
            .for_each(|((out, row), fi)| {
                let fs = fi / eps;
                for ((o, a), b) in out.iter_mut().zip(row).zip(&gs) {
                    *o = (a + fs + b).exp();
                }
            });
        self.valid = true;
    }

    fn scalings(reference: &[f64], current: &[f64], eps: f64) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(current.len());
        for (r, c) in reference.iter().zip(current) {
            let s = (c - r) / eps;
            if !(s.abs() <= ABSORB_LOG) {
                return None;
            }
            out.push(s.exp());
        }
        Some(out)
    }

    pub(crate) fn update_f(&mut self, solver: &SinkhornSolver, g: &[f64]) -> Result<Vec<f64>> {
        let eps = solver.kernel().epsilon();
        let n = self.n;
        if self.valid {
            if let Some(b) = Self::scalings(&self.g_ref, g, eps) {
                let sums: Vec<f64> = self
                    .scaled
                    .par_chunks(n)
                    .map(|row| row.iter().zip(&b).map(|(k, v)| k * v).sum::<f64>() / n as f64)
                    .collect();
                if sums.iter().all(|s| (SAFE_MIN..=SAFE_MAX).contains(s)) {
                    return Ok(self.f_ref.iter().zip(&sums).map(|(r, s)| r - eps * s.ln()).collect());
                }
            }
        }
        let f_next = solver.update_f(g)?;
        self.absorb(solver, &f_next, g);
        Ok(f_next)
    }

    pub(crate) fn update_g(&mut self, solver: &SinkhornSolver, f: &[f64]) -> Result<Vec<f64>> {
        let eps = solver.kernel().epsilon();
        let n = self.n;
        let m = f.len();
        if self.valid {
            if let Some(a) = Self::scalings(&self.f_ref, f, eps) {
                let partials: Vec<Vec<f64>> = self
                    .scaled
                    .par_chunks(COLUMN_BLOCK * n)
                    .zip(a.par_chunks(COLUMN_BLOCK))
                    .map(|(block, ab)| {
                        let mut acc = vec![0.0; n];
                        for (row, ai) in block.chunks_exact(n).zip(ab) {
                            for (s, k) in acc.iter_mut().zip(row) {
                                *s += k * ai;
                            }
                        }
                        acc
                    })
                    .collect();
                let mut sums = vec![0.0; n];
                for p in &partials {
                    for (s, v) in sums.iter_mut().zip(p) {
                        *s += v;
                    }
                }
                let sums: Vec<f64> = sums.iter().map(|s| s / m as f64).collect();
                if sums.iter().all(|s| (SAFE_MIN..=SAFE_MAX).contains(s)) {
                    return Ok(self.g_ref.iter().zip(&sums).map(|(r, s)| r - eps * s.ln()).collect());
                }
            }
        }
        let g_next = solver.update_g(f)?;
        self.absorb(solver, f, &g_next);
        Ok(g_next)
    }
}
