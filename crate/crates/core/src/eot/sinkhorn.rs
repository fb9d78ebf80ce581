use ndarray::Array2;
use rayon::prelude::*;

use super::hilbert::{contraction_bound, hilbert_metric_log, HilbertDiagnostics};
use super::kernel::{build_kernel, EotProblem, KernelMatrix};
use super::stabilized::Absorbed;
use crate::error::{Error, Result};

/// Marginal error at which the reference solution `v*` is considered exact.
pub const REFERENCE_MARGINAL_TOL: f64 = 1e-12;

/// Rows per block in the column reduction. Fixed so the reduction order does
/// not depend on the number of worker threads.
const COLUMN_BLOCK: usize = 64;

/// Dual potentials `(f, g)` after `iteration` Sinkhorn iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub iteration: usize,
    /// Set when a tolerance-based stopping rule was met.
    pub converged: bool,
    /// Set once the pair has been shifted so that `mean(g) = 0`.
    pub g_normalized: bool,
}

impl DualPotentials {
    /// The initialization `(u, v) = (1, 1)`.
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            f: vec![0.0; m],
            g: vec![0.0; n],
            iteration: 0,
            converged: false,
            g_normalized: false,
        }
    }

    /// `(f + a, g − a)`; leaves the coupling unchanged.
    pub fn shifted(&self, a: f64) -> Self {
        Self {
            f: self.f.iter().map(|x| x + a).collect(),
            g: self.g.iter().map(|x| x - a).collect(),
            g_normalized: false,
            ..self.clone()
        }
    }

    /// Shift so that `mean(g) = 0`.
    pub fn normalize_g(&self) -> Self {
        let c = self.g.iter().sum::<f64>() / self.g.len() as f64;
        let mut out = self.shifted(c);
        // The subtraction above leaves a residual mean of order ulp(c).
        let residual = out.g.iter().sum::<f64>() / out.g.len() as f64;
        for x in &mut out.g {
            *x -= residual;
        }
        for x in &mut out.f {
            *x += residual;
        }
        out.g_normalized = true;
        out
    }

    fn is_finite(&self) -> bool {
        self.f.iter().chain(&self.g).all(|x| x.is_finite())
    }
}

/// When to stop a Sinkhorn run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// Run exactly this many iterations.
    Iterations(usize),
    /// Stop at the first `k ≥ 1` whose coupling has ℓ₁ marginal error ≤ `tol`.
    MarginalTolerance { tol: f64, max_iter: usize },
    /// Stop at the first `k ≥ 1` with `d_Hilb(v^(k), v^(k−1)) ≤ tol`.
    HilbertTolerance { tol: f64, max_iter: usize },
}

impl StoppingRule {
    pub fn budget(&self) -> usize {
        match *self {
            StoppingRule::Iterations(k) => k,
            StoppingRule::MarginalTolerance { max_iter, .. } => max_iter,
            StoppingRule::HilbertTolerance { max_iter, .. } => max_iter,
        }
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// `d_Hilb(v^(k), v*)`; only present when a reference was requested.
    pub hilbert_error_v: Option<f64>,
    pub dual_objective: f64,
    pub marginal_error: f64,
}

/// Result of a Sinkhorn run.
#[derive(Debug, Clone)]
pub struct SinkhornRun {
    pub potentials: DualPotentials,
    pub trace: Vec<IterationRecord>,
    /// Present for [`SinkhornSolver::run_with_reference`].
    pub diagnostics: Option<HilbertDiagnostics>,
}

impl SinkhornRun {
    pub fn final_marginal_error(&self) -> f64 {
        self.trace.last().map_or(f64::INFINITY, |r| r.marginal_error)
    }

    /// Writes the trace as CSV with columns
    /// `k,hilbert_error_v,dual_objective,marginal_error`.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "hilbert_error_v", "dual_objective", "marginal_error"])?;
        for r in &self.trace {
            w.write_record([
                r.k.to_string(),
                r.hilbert_error_v.map(|h| h.to_string()).unwrap_or_default(),
                r.dual_objective.to_string(),
                r.marginal_error.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Log-domain Sinkhorn on a precomputed kernel.
///
/// One iteration is an `f`-update followed by a `g`-update:
///
/// ```text
/// f_i ← −ε ( LSE_j (g_j/ε + L_ij) − log n )
/// g_j ← −ε ( LSE_i (f_i/ε + L_ij) − log m )
/// ```
///
/// with `L_ij = −½‖X_i − Y_j‖²/ε`. Each half-step is the exact maximizer of
/// the empirical dual objective in its block of variables.
#[derive(Debug, Clone)]
pub struct SinkhornSolver {
    kernel: KernelMatrix,
    scheme: Scheme,
}

/// How `run` evaluates the half-steps. Both produce the same iterate
/// sequence up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// One log-sum-exp per row and column.
    #[default]
    LogDomain,
    /// Matrix-vector products against a kernel with absorbed potentials,
    /// falling back to the log domain when the scalings drift too far.
    Absorbed,
}

impl SinkhornSolver {
    pub fn new(problem: &EotProblem) -> Self {
        Self { kernel: build_kernel(problem), scheme: Scheme::LogDomain }
    }

    pub fn from_kernel(kernel: KernelMatrix) -> Self {
        Self { kernel, scheme: Scheme::LogDomain }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    fn epsilon(&self) -> f64 {
        self.kernel.epsilon()
    }

    fn check_shapes(&self, p: &DualPotentials) -> Result<()> {
        if p.f.len() != self.kernel.m() || p.g.len() != self.kernel.n() {
            return Err(Error::Dimension(format!(
                "potentials have lengths ({}, {}), kernel is {}x{}",
                p.f.len(),
                p.g.len(),
                self.kernel.m(),
                self.kernel.n()
            )));
        }
        Ok(())
    }

    pub fn update_f(&self, g: &[f64]) -> Result<Vec<f64>> {
        let eps = self.epsilon();
        let log_n = (self.kernel.n() as f64).ln();
        let gs: Vec<f64> = g.iter().map(|x| x / eps).collect();
        let l = self.kernel.log_entries();
        let l = l.as_slice().expect("row-major kernel");
        let f: Vec<f64> = l
            .par_chunks(self.kernel.n())
            .map(|row| {
                let mut max = f64::NEG_INFINITY;
                for (a, b) in row.iter().zip(&gs) {
                    max = max.max(a + b);
                }
                let s: f64 = row.iter().zip(&gs).map(|(a, b)| (a + b - max).exp()).sum();
                -eps * (max + s.ln() - log_n)
            })
            .collect();
        if let Some(i) = f.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("f-update produced a non-finite value at row {i}")));
        }
        Ok(f)
    }

    pub fn update_g(&self, f: &[f64]) -> Result<Vec<f64>> {
        let eps = self.epsilon();
        let n = self.kernel.n();
        let log_m = (self.kernel.m() as f64).ln();
        let fs: Vec<f64> = f.iter().map(|x| x / eps).collect();
        let l = self.kernel.log_entries();
        let l = l.as_slice().expect("row-major kernel");
        let partials: Vec<(Vec<f64>, Vec<f64>)> = l
            .par_chunks(COLUMN_BLOCK * n)
            .zip(fs.par_chunks(COLUMN_BLOCK))
            .map(|(block, fb)| {
                let mut max = vec![f64::NEG_INFINITY; n];
                for (row, fi) in block.chunks_exact(n).zip(fb) {
                    for (mx, a) in max.iter_mut().zip(row) {
                        *mx = mx.max(a + fi);
                    }
                }
                let mut sum = vec![0.0; n];
                for (row, fi) in block.chunks_exact(n).zip(fb) {
                    for ((s, a), mx) in sum.iter_mut().zip(row).zip(&max) {
                        *s += (a + fi - mx).exp();
                    }
                }
                (max, sum)
            })
            .collect();
        let mut max = vec![f64::NEG_INFINITY; n];
        let mut sum = vec![0.0; n];
        for (bm, bs) in &partials {
            for j in 0..n {
                let m = max[j].max(bm[j]);
                sum[j] = sum[j] * (max[j] - m).exp() + bs[j] * (bm[j] - m).exp();
                max[j] = m;
            }
        }
        let g: Vec<f64> = max
            .iter()
            .zip(&sum)
            .map(|(mx, s)| -eps * (mx + s.ln() - log_m))
            .collect();
        if let Some(j) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("g-update produced a non-finite value at column {j}")));
        }
        Ok(g)
    }

    /// One full iteration `k → k + 1`.
    pub fn iterate(&self, state: &DualPotentials) -> Result<DualPotentials> {
        self.check_shapes(state)?;
        if !state.is_finite() {
            return Err(Error::Numeric("input potentials are not finite".into()));
        }
        let f = self.update_f(&state.g)?;
        let g = self.update_g(&f)?;
        Ok(DualPotentials {
            f,
            g,
            iteration: state.iteration + 1,
            converged: false,
            g_normalized: false,
        })
    }

    /// Row-marginal ℓ₁ error of the coupling defined by `(f, g)`, recovered
    /// from the `f` that the next half-step would produce. After a `g`-update
    /// the column marginals are exact, so this is the full marginal error.
    fn row_error_from_update(&self, f: &[f64], f_next: &[f64]) -> f64 {
        let eps = self.epsilon();
        let m = f.len() as f64;
        f.iter()
            .zip(f_next)
            .map(|(a, b)| (((a - b) / eps).exp() - 1.0).abs())
            .sum::<f64>()
            / m
    }

    /// Runs from `(0, 0)`.
    pub fn run(&self, stop: StoppingRule) -> Result<SinkhornRun> {
        let init = DualPotentials::zeros(self.kernel.m(), self.kernel.n());
        self.run_from(init, stop)
    }

    /// Runs from an arbitrary starting point; iteration numbers continue from
    /// `init.iteration`.
    pub fn run_from(&self, init: DualPotentials, stop: StoppingRule) -> Result<SinkhornRun> {
        let (potentials, trace) = self.run_inner(init, stop, None)?;
        Ok(SinkhornRun { potentials, trace, diagnostics: None })
    }

    fn run_inner(
        &self,
        init: DualPotentials,
        stop: StoppingRule,
        mut history: Option<&mut Vec<Vec<f64>>>,
    ) -> Result<(DualPotentials, Vec<IterationRecord>)> {
        self.check_shapes(&init)?;
        let eps = self.epsilon();
        let start = init.iteration;
        let end = start + stop.budget();
        let mut state = init;
        let mut trace = Vec::new();
        let mut absorbed = match self.scheme {
            Scheme::LogDomain => None,
            Scheme::Absorbed => Some(Absorbed::new(self.kernel.m(), self.kernel.n())),
        };
        if let Some(h) = history.as_deref_mut() {
            h.push(state.g.clone());
        }
        loop {
            let f_next = match absorbed.as_mut() {
                Some(a) => a.update_f(self, &state.g)?,
                None => self.update_f(&state.g)?,
            };
            let marginal_error = self.row_error_from_update(&state.f, &f_next);
            let dual = if state.iteration == 0 {
                self.dual_objective(&state)
            } else {
                mean(&state.f) + mean(&state.g)
            };
            trace.push(IterationRecord {
                k: state.iteration,
                hilbert_error_v: None,
                dual_objective: dual,
                marginal_error,
            });
            if state.converged {
                break;
            }
            if state.iteration >= 1 {
                if let StoppingRule::MarginalTolerance { tol, .. } = stop {
                    if marginal_error <= tol {
                        state.converged = true;
                        break;
                    }
                }
            }
            if state.iteration >= end {
                break;
            }
            let g_next = match absorbed.as_mut() {
                Some(a) => a.update_g(self, &f_next)?,
                None => self.update_g(&f_next)?,
            };
            let step = hilbert_metric_log(&g_next, &state.g, eps)?;
            state = DualPotentials {
                f: f_next,
                g: g_next,
                iteration: state.iteration + 1,
                converged: false,
                g_normalized: false,
            };
            if let Some(h) = history.as_deref_mut() {
                h.push(state.g.clone());
            }
            if let StoppingRule::HilbertTolerance { tol, .. } = stop {
                if step <= tol {
                    // one more pass through the loop records the marginal error
                    state.converged = true;
                }
            }
        }
        if state.converged {
            state = state.normalize_g();
            state.converged = true;
        }
        Ok((state, trace))
    }

    /// Runs with `stop` and additionally records `d_Hilb(v^(k), v*)` for every
    /// iteration, where `v*` comes from continuing the same sequence to
    /// marginal error [`REFERENCE_MARGINAL_TOL`] (capped at ten times the
    /// budget). Contraction constants are attached.
    pub fn run_with_reference(&self, problem: &EotProblem, stop: StoppingRule) -> Result<SinkhornRun> {
        let eps = self.epsilon();
        let mut history = Vec::new();
        let init = DualPotentials::zeros(self.kernel.m(), self.kernel.n());
        let (potentials, mut trace) = self.run_inner(init, stop, Some(&mut history))?;

        let cap = 10 * stop.budget().max(1);
        let mut reference = potentials.clone();
        reference.converged = false;
        let remaining = cap.saturating_sub(reference.iteration);
        let (reference, _) = self.run_inner(
            reference,
            StoppingRule::MarginalTolerance { tol: REFERENCE_MARGINAL_TOL, max_iter: remaining },
            None,
        )?;
        let errors = history
            .iter()
            .map(|g| hilbert_metric_log(g, &reference.g, eps))
            .collect::<Result<Vec<f64>>>()?;
        for (rec, e) in trace.iter_mut().zip(&errors) {
            rec.hilbert_error_v = Some(*e);
        }
        let mut diagnostics = contraction_bound(problem);
        diagnostics.per_iteration_hilbert_error = errors;
        diagnostics.reference_approximate = !reference.converged;
        Ok(SinkhornRun { potentials, trace, diagnostics: Some(diagnostics) })
    }

    /// Empirical dual objective `Φ(f, g)`.
    pub fn dual_objective(&self, p: &DualPotentials) -> f64 {
        let mean_density = self.coupling_density(p).mean().unwrap_or(0.0);
        mean(&p.f) + mean(&p.g) - self.epsilon() * (mean_density - 1.0)
    }

    /// `exp((f_i + g_j − ½‖X_i − Y_j‖²)/ε)`, the density of the coupling
    /// with respect to `μ_m ⊗ ν_n`.
    pub fn coupling_density(&self, p: &DualPotentials) -> Array2<f64> {
        let eps = self.epsilon();
        let mut out = self.kernel.log_entries().clone();
        for (mut row, fi) in out.outer_iter_mut().zip(&p.f) {
            for (x, gj) in row.iter_mut().zip(&p.g) {
                *x = ((fi + gj) / eps + *x).exp();
            }
        }
        out
    }

    /// Coupling masses: density divided by `mn`.
    pub fn coupling_mass(&self, p: &DualPotentials) -> Array2<f64> {
        let scale = 1.0 / (p.f.len() * p.g.len()) as f64;
        self.coupling_density(p).mapv(|x| x * scale)
    }

    /// `max(‖row sums − 1/m‖₁, ‖column sums − 1/n‖₁)` of the coupling masses.
    pub fn marginal_error(&self, p: &DualPotentials) -> f64 {
        let mass = self.coupling_mass(p);
        marginal_error_of(&mass)
    }
}

pub(crate) fn marginal_error_of(mass: &Array2<f64>) -> f64 {
    let (m, n) = mass.dim();
    let rows: f64 = mass
        .rows()
        .into_iter()
        .map(|r| (r.sum() - 1.0 / m as f64).abs())
        .sum();
    let cols: f64 = mass
        .columns()
        .into_iter()
        .map(|c| (c.sum() - 1.0 / n as f64).abs())
        .sum();
    rows.max(cols)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One Sinkhorn iteration on `problem`. Rebuilds the kernel; use
/// [`SinkhornSolver`] for repeated calls.
pub fn sinkhorn_iterate(problem: &EotProblem, state: &DualPotentials) -> Result<DualPotentials> {
    SinkhornSolver::new(problem).iterate(state)
}

/// Runs Sinkhorn from `(0, 0)` and returns the potentials at the stopping
/// iteration together with Hilbert-metric diagnostics against a reference.
pub fn run_sinkhorn(problem: &EotProblem, stop: StoppingRule) -> Result<(DualPotentials, HilbertDiagnostics)> {
    let run = SinkhornSolver::new(problem).run_with_reference(problem, stop)?;
    Ok((run.potentials, run.diagnostics.expect("reference run attaches diagnostics")))
}

pub fn dual_objective(problem: &EotProblem, potentials: &DualPotentials) -> f64 {
    SinkhornSolver::new(problem).dual_objective(potentials)
}

pub fn coupling_density(problem: &EotProblem, potentials: &DualPotentials) -> Array2<f64> {
    SinkhornSolver::new(problem).coupling_density(potentials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;

    fn problem(x: &[f64], y: &[f64], eps: f64) -> EotProblem {
        EotProblem::new(PointCloud::from_scalars(x).unwrap(), PointCloud::from_scalars(y).unwrap(), eps)
            .unwrap()
    }

    #[test]
    fn single_atom_coupling_is_one_after_one_iteration() {
        for &(x, y, eps) in &[(0.0, 0.0, 1.0), (-2.0, 3.0, 0.1), (5.0, 1.0, 7.0)] {
            let p = problem(&[x], &[y], eps);
            let s = sinkhorn_iterate(&p, &DualPotentials::zeros(1, 1)).unwrap();
            let density = coupling_density(&p, &s);
            assert!((density[[0, 0]] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_instance_stays_symmetric() {
        let p = problem(&[-1.0, 1.0], &[-1.0, 1.0], 1.0);
        let solver = SinkhornSolver::new(&p);
        let mut s = DualPotentials::zeros(2, 2);
        for _ in 0..10 {
            s = solver.iterate(&s).unwrap();
            assert!((s.f[0] - s.f[1]).abs() < 1e-12);
            assert!((s.g[0] - s.g[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_budget_returns_initialization() {
        let p = problem(&[0.0, 1.0], &[0.5], 0.3);
        let run = SinkhornSolver::new(&p).run(StoppingRule::Iterations(0)).unwrap();
        assert_eq!(run.potentials, DualPotentials::zeros(2, 1));
        assert_eq!(run.trace.len(), 1);
    }

    #[test]
    fn single_atom_converges_at_iteration_one() {
        let p = problem(&[0.3], &[-1.2], 0.2);
        let solver = SinkhornSolver::new(&p);
        for tol in [1.0, 1e-3, 1e-14] {
            let run = solver.run(StoppingRule::MarginalTolerance { tol, max_iter: 100 }).unwrap();
            assert_eq!(run.potentials.iteration, 1);
            assert!(run.potentials.converged);
        }
        let run = solver.run(StoppingRule::HilbertTolerance { tol: 1e-9, max_iter: 100 }).unwrap();
        assert!(run.potentials.converged);
        assert!(run.potentials.iteration <= 2);
    }

    #[test]
    fn converged_potentials_are_g_normalized() {
        let p = problem(&[0.0, 0.4, 1.0], &[0.1, 2.0], 0.5);
        let run = SinkhornSolver::new(&p)
            .run(StoppingRule::MarginalTolerance { tol: 1e-10, max_iter: 1000 })
            .unwrap();
        assert!(run.potentials.g_normalized);
        let mean_g: f64 = run.potentials.g.iter().sum::<f64>() / 2.0;
        assert!(mean_g.abs() < 1e-12);
    }

    #[test]
    fn trace_marginal_error_matches_direct_computation() {
        let p = problem(&[0.0, 0.4, 1.0, -0.7], &[0.1, 2.0, -0.3], 0.4);
        let solver = SinkhornSolver::new(&p);
        let run = solver.run(StoppingRule::Iterations(5)).unwrap();
        let last = run.trace.last().unwrap();
        assert_eq!(last.k, 5);
        let direct = solver.marginal_error(&run.potentials);
        assert!((last.marginal_error - direct).abs() < 1e-12);
        assert!((last.dual_objective - solver.dual_objective(&run.potentials)).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let p = problem(&[0.0, 1.0], &[0.0], 1.0);
        let err = sinkhorn_iterate(&p, &DualPotentials::zeros(3, 1)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn tiny_epsilon_stays_finite() {
        let p = problem(&[-50.0, 0.0, 30.0], &[100.0, -80.0], 1e-3);
        let run = SinkhornSolver::new(&p).run(StoppingRule::Iterations(20)).unwrap();
        assert!(run.potentials.f.iter().chain(&run.potentials.g).all(|x| x.is_finite()));
    }

    #[test]
    fn trace_csv_has_declared_columns() {
        let p = problem(&[0.0, 1.0], &[0.0, 1.0], 0.5);
        let solver = SinkhornSolver::new(&p);
        let run = solver.run_with_reference(&p, StoppingRule::Iterations(3)).unwrap();
        let mut buf = Vec::new();
        run.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k,hilbert_error_v,dual_objective,marginal_error"));
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn absorbed_scheme_tracks_log_domain() {
        use crate::rng;
        use rand::Rng;
        let mut r = rng::stream(8, 0);
        let mut pts = |k: usize| PointCloud::from_rows(&(0..k).map(|_| vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).collect::<Vec<_>>()).unwrap();
        let (x, y) = (pts(40), pts(30));
        for eps in [1.0, 0.05, 0.002] {
            let p = EotProblem::new(x.clone(), y.clone(), eps).unwrap();
            let stop = StoppingRule::Iterations(300);
            let a = SinkhornSolver::new(&p).run(stop).unwrap();
            let b = SinkhornSolver::new(&p).with_scheme(Scheme::Absorbed).run(stop).unwrap();
            let gap = a.potentials.g.iter().zip(&b.potentials.g).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-9 * (1.0 + eps), "eps={eps} gap={gap}");
            let ea = a.final_marginal_error();
            let eb = b.final_marginal_error();
            assert!((ea - eb).abs() <= 1e-9 + 1e-6 * ea, "eps={eps}: {ea} vs {eb}");
        }
    }
}
