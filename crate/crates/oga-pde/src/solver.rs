//! The orthogonal greedy iteration: residual-driven neuron selection with
//! optional local refinement, Galerkin projection onto the selected span, and
//! iterate bookkeeping.
//!
//! Each iteration scans every candidate neuron with one cached sweep over the
//! quadrature nodes (the dominant cost, `O(candidates * nodes)`), takes the
//! argmax of the absolute residual pairing, optionally refines the free
//! parameters of the winner by gradient ascent with backtracking, then
//! re-solves the projection system for all coefficients.

use crate::dictionary::{relu_pow, sample_candidates, CandidateSet, Neuron, SamplingMode, SamplingOptions};
use crate::error::{Error, Result};
use crate::linalg::{solve_symmetric, GramSystem};
use crate::metrics;
use crate::problem::{Field, FieldSample, ProblemSpec};
use crate::quadrature::QuadratureGrid;

/// The greedy iterate `u_n = sum a_i g_i`. Neurons are append-only history in
/// selection order; only the coefficients change after later projections.
#[derive(Debug, Clone, Default)]
pub struct Model {
    neurons: Vec<Neuron>,
    coefficients: Vec<f64>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a model directly from (coefficient, neuron) pairs.
    pub fn from_terms(terms: impl IntoIterator<Item = (f64, Neuron)>) -> Result<Self> {
        let mut model = Self::new();
        for (a, g) in terms {
            if let Some(first) = model.neurons.first() {
                if first.dim() != g.dim() {
                    return Err(Error::InvalidNeuron(
                        "all model neurons must share one dimension".into(),
                    ));
                }
            }
            model.neurons.push(g);
            model.coefficients.push(a);
        }
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn neurons(&self) -> &[Neuron] {
        &self.neurons
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    fn push(&mut self, neuron: Neuron) {
        self.neurons.push(neuron);
        self.coefficients.push(0.0);
    }

    fn pop(&mut self) {
        self.neurons.pop();
        self.coefficients.pop();
    }

    fn set_coefficients(&mut self, coefficients: Vec<f64>) {
        assert_eq!(coefficients.len(), self.neurons.len());
        self.coefficients = coefficients;
    }

    /// Value and gradient in one pass over the neurons.
    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let mut value = 0.0;
        for (a, g) in self.coefficients.iter().zip(&self.neurons) {
            let z = g.pre_activation(x);
            if z > 0.0 {
                let p = relu_pow(z, g.k() - 1);
                value += a * p * z;
                let s = a * g.k() as f64 * p;
                for (gi, w) in grad.iter_mut().zip(g.omega()) {
                    *gi += s * w;
                }
            }
        }
        value
    }
}

impl Field for Model {
    fn value(&self, x: &[f64]) -> f64 {
        let mut value = 0.0;
        for (a, g) in self.coefficients.iter().zip(&self.neurons) {
            value += a * g.eval(x);
        }
        value
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut buf = vec![0.0; x.len()];
        for (a, g) in self.coefficients.iter().zip(&self.neurons) {
            g.grad_into(x, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += a * b;
            }
        }
    }
}

/// Solver knobs; the sampling options double as the dictionary definition.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub n_max: usize,
    /// Iteration counts at which a model snapshot and errors are recorded;
    /// ascending, within `1..=n_max`.
    pub checkpoints: Vec<usize>,
    pub sampling: SamplingOptions,
    pub refine: bool,
    pub refine_max_iters: usize,
    pub refine_step_tol: f64,
    pub duplicate_tol: f64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for pair in self.checkpoints.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::config("checkpoints", "must be strictly ascending"));
            }
        }
        if let Some(&first) = self.checkpoints.first() {
            if first < 1 {
                return Err(Error::config("checkpoints", "entries must be >= 1"));
            }
        }
        if let Some(&last) = self.checkpoints.last() {
            if last > self.n_max {
                return Err(Error::config(
                    "checkpoints",
                    format!("entry {last} exceeds n_max = {}", self.n_max),
                ));
            }
        }
        if self.refine_max_iters == 0 {
            return Err(Error::config("refine_max_iters", "must be >= 1"));
        }
        if !(self.refine_step_tol > 0.0) {
            return Err(Error::config("refine_step_tol", "must be positive"));
        }
        if !(self.duplicate_tol > 0.0) {
            return Err(Error::config("duplicate_tol", "must be positive"));
        }
        Ok(())
    }
}

/// Weighted per-node cache for residual scans: with `u` the current iterate,
/// `q[j] = w_j A grad u(x_j)` and `r[j] = w_j (c u(x_j) - f(x_j))`, so that
/// `<g, u - u_exact>_H = sum_j grad g(x_j) . q[j] + g(x_j) r[j]`.
struct ScanCache {
    q: Vec<f64>,
    r: Vec<f64>,
}

/// Mutable solver state: the model plus every node-indexed cache needed to
/// evaluate residual pairings without re-sampling the model.
pub struct SolverState<'a> {
    problem: &'a ProblemSpec,
    grid: &'a QuadratureGrid,
    model: Model,
    model_values: FieldSample,
    source_values: Vec<f64>,
    gram: GramSystem,
}

impl<'a> SolverState<'a> {
    pub fn new(problem: &'a ProblemSpec, grid: &'a QuadratureGrid) -> Self {
        assert_eq!(problem.dim(), grid.dim(), "problem/grid dimension mismatch");
        let source_values: Vec<f64> = grid.iter_nodes().map(|x| problem.source_at(x)).collect();
        Self {
            problem,
            grid,
            model: Model::new(),
            model_values: FieldSample::zeros(grid.len(), grid.dim()),
            source_values,
            gram: GramSystem::new(),
        }
    }

    pub fn problem(&self) -> &ProblemSpec {
        self.problem
    }

    pub fn grid(&self) -> &QuadratureGrid {
        self.grid
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn gram(&self) -> &GramSystem {
        &self.gram
    }

    pub fn source_values(&self) -> &[f64] {
        &self.source_values
    }

    fn scan_cache(&self) -> ScanCache {
        let d = self.grid.dim();
        let n = self.grid.len();
        let c = self.problem.reaction();
        let mut q = vec![0.0; n * d];
        let mut r = vec![0.0; n];
        let mut av = vec![0.0; d];
        for (j, &w) in self.grid.weights().iter().enumerate() {
            self.problem
                .apply_diffusion(self.model_values.gradient(j), &mut av);
            for i in 0..d {
                q[j * d + i] = w * av[i];
            }
            r[j] = w * (c * self.model_values.values[j] - self.source_values[j]);
        }
        ScanCache { q, r }
    }

    /// `<g, u_n - u>_H = (grad g, A grad u_n) + (c g, u_n) - (f, g)`,
    /// evaluated in one quadrature pass against the cached iterate.
    pub fn residual_functional(&self, g: &Neuron) -> f64 {
        objective(self.grid, &self.scan_cache(), g.omega(), g.b(), g.k())
    }

    /// Append a neuron: extends the Gram matrix by one symmetric row/column
    /// and the load vector by `(f, g_new)`. Coefficients are refreshed by the
    /// next [`SolverState::project`].
    pub fn append_neuron(&mut self, neuron: Neuron) {
        assert_eq!(neuron.dim(), self.grid.dim());
        let d = self.grid.dim();
        let n_nodes = self.grid.len();
        let c = self.problem.reaction();

        // One sampling pass for the new neuron: values, gradients, A grad.
        let mut vals = vec![0.0; n_nodes];
        let mut agrad = vec![0.0; n_nodes * d];
        let mut grad = vec![0.0; d];
        for (j, x) in self.grid.iter_nodes().enumerate() {
            vals[j] = neuron.eval(x);
            neuron.grad_into(x, &mut grad);
            self.problem
                .apply_diffusion(&grad, &mut agrad[j * d..(j + 1) * d]);
        }

        // a(g_new, g_i) for every selected neuron, one pass per pair.
        let mut row = Vec::with_capacity(self.model.len());
        for g_i in self.model.neurons() {
            let k = g_i.k();
            let omega = g_i.omega();
            let mut acc = 0.0;
            for (j, (x, &w)) in self
                .grid
                .iter_nodes()
                .zip(self.grid.weights())
                .enumerate()
            {
                let z = g_i.pre_activation(x);
                if z > 0.0 {
                    let p = relu_pow(z, k - 1);
                    let mut oa = 0.0;
                    for (wi, ai) in omega.iter().zip(&agrad[j * d..(j + 1) * d]) {
                        oa += wi * ai;
                    }
                    acc += w * (k as f64 * p * oa + c * p * z * vals[j]);
                }
            }
            row.push(acc);
        }

        // Diagonal a(g_new, g_new) and load (f, g_new).
        let mut diag = 0.0;
        let mut load = 0.0;
        let mut grad_new = vec![0.0; d];
        for (j, (x, &w)) in self
            .grid
            .iter_nodes()
            .zip(self.grid.weights())
            .enumerate()
        {
            neuron.grad_into(x, &mut grad_new);
            let mut ga = 0.0;
            for (gi, ai) in grad_new.iter().zip(&agrad[j * d..(j + 1) * d]) {
                ga += gi * ai;
            }
            diag += w * (ga + c * vals[j] * vals[j]);
            load += w * self.source_values[j] * vals[j];
        }

        self.gram.push_row(&row, diag, load);
        self.model.push(neuron);
    }

    /// Galerkin projection: solve the Gram system for all coefficients and
    /// refresh the cached iterate samples. Returns the condition estimate of
    /// the projection matrix.
    pub fn project(&mut self) -> Result<f64> {
        let solution = solve_symmetric(&self.gram)?;
        self.model.set_coefficients(solution.coefficients);
        self.refresh_model_values();
        Ok(solution.condition_estimate)
    }

    /// Undo the most recent [`SolverState::append_neuron`]; used when a
    /// projection attempt reports a near-dependent system.
    pub(crate) fn pop_neuron(&mut self) {
        self.model.pop();
        self.gram.pop_row();
    }

    fn refresh_model_values(&mut self) {
        let d = self.grid.dim();
        for (j, x) in self.grid.iter_nodes().enumerate() {
            self.model_values.values[j] = self
                .model
                .value_and_gradient(x, &mut self.model_values.gradients[j * d..(j + 1) * d]);
        }
    }

    /// Worst Galerkin residual `max_j |a(u_n, g_j) - (f, g_j)|` re-evaluated
    /// by quadrature, together with the scale `||G|| ||a|| + ||rhs||`
    /// (infinity norms).
    pub fn quasi_orthogonality(&self) -> QuasiOrthogonality {
        let cache = self.scan_cache();
        let mut worst: f64 = 0.0;
        for g in self.model.neurons() {
            worst = worst.max(objective(self.grid, &cache, g.omega(), g.b(), g.k()).abs());
        }
        let coeff_inf = self
            .model
            .coefficients()
            .iter()
            .map(|a| a.abs())
            .fold(0.0, f64::max);
        let scale = self.gram.norm_inf() * coeff_inf + self.gram.rhs_norm_inf();
        QuasiOrthogonality {
            max_residual: worst,
            scale,
        }
    }
}

/// Result of [`SolverState::quasi_orthogonality`].
#[derive(Debug, Clone, Copy)]
pub struct QuasiOrthogonality {
    pub max_residual: f64,
    pub scale: f64,
}

impl QuasiOrthogonality {
    pub fn ratio(&self) -> f64 {
        if self.scale > 0.0 {
            self.max_residual / self.scale
        } else {
            self.max_residual
        }
    }
}

/// Residual pairing of one candidate against the cached iterate.
#[inline]
fn objective(grid: &QuadratureGrid, cache: &ScanCache, omega: &[f64], b: f64, k: u32) -> f64 {
    let d = grid.dim();
    let kf = k as f64;
    let mut acc = 0.0;
    for ((x, q), &r) in grid
        .flat_nodes()
        .chunks_exact(d)
        .zip(cache.q.chunks_exact(d))
        .zip(&cache.r)
    {
        let mut z = b;
        let mut oq = 0.0;
        for i in 0..d {
            z += omega[i] * x[i];
            oq += omega[i] * q[i];
        }
        if z > 0.0 {
            let p = relu_pow(z, k - 1);
            acc += p * (kf * oq + z * r);
        }
    }
    acc
}

/// Objective plus its derivative with respect to the offset `b`. Only defined
/// for `k >= 2`, where the integrand's derivative stays integrable.
fn objective_db(
    grid: &QuadratureGrid,
    cache: &ScanCache,
    omega: &[f64],
    b: f64,
    k: u32,
) -> (f64, f64) {
    let d = grid.dim();
    let kf = k as f64;
    let mut acc = 0.0;
    let mut acc_db = 0.0;
    for ((x, q), &r) in grid
        .flat_nodes()
        .chunks_exact(d)
        .zip(cache.q.chunks_exact(d))
        .zip(&cache.r)
    {
        let mut z = b;
        let mut oq = 0.0;
        for i in 0..d {
            z += omega[i] * x[i];
            oq += omega[i] * q[i];
        }
        if z > 0.0 {
            let p2 = relu_pow(z, k - 2);
            let p1 = p2 * z;
            acc += p1 * (kf * oq + z * r);
            acc_db += kf * ((kf - 1.0) * p2 * oq + p1 * r);
        }
    }
    (acc, acc_db)
}

/// Objective plus derivatives with respect to `(theta, b)` for angular
/// candidates `omega = (cos theta, sin theta)`.
fn objective_dtheta_db(
    grid: &QuadratureGrid,
    cache: &ScanCache,
    theta: f64,
    b: f64,
    k: u32,
) -> (f64, f64, f64) {
    let omega = [theta.cos(), theta.sin()];
    let omega_t = [-theta.sin(), theta.cos()];
    let kf = k as f64;
    let mut acc = 0.0;
    let mut acc_dt = 0.0;
    let mut acc_db = 0.0;
    for ((x, q), &r) in grid
        .flat_nodes()
        .chunks_exact(2)
        .zip(cache.q.chunks_exact(2))
        .zip(&cache.r)
    {
        let z = omega[0] * x[0] + omega[1] * x[1] + b;
        if z > 0.0 {
            let z_t = omega_t[0] * x[0] + omega_t[1] * x[1];
            let oq = omega[0] * q[0] + omega[1] * q[1];
            let otq = omega_t[0] * q[0] + omega_t[1] * q[1];
            let p2 = relu_pow(z, k - 2);
            let p1 = p2 * z;
            acc += p1 * (kf * oq + z * r);
            acc_dt += kf * ((kf - 1.0) * p2 * z_t * oq + p1 * otq + p1 * z_t * r);
            acc_db += kf * ((kf - 1.0) * p2 * oq + p1 * r);
        }
    }
    (acc, acc_dt, acc_db)
}

/// Index of the entry with the largest absolute value; ties go to the lowest
/// index.
pub(crate) fn argmax_abs(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        let a = v.abs();
        match best {
            Some((_, cur)) if a <= cur => {}
            _ => best = Some((i, a)),
        }
    }
    best.map(|(i, _)| i)
}

/// Outcome of one greedy selection.
#[derive(Debug, Clone)]
pub struct Selection {
    pub neuron: Neuron,
    /// Index of the grid candidate the result started from.
    pub candidate_index: usize,
    /// Scan objective of that starting candidate.
    pub grid_objective: f64,
    /// Objective of the returned neuron (equals `grid_objective` unless
    /// refinement improved on it).
    pub objective: f64,
}

fn duplicates_model(model: &Model, neuron: &Neuron, tol: f64) -> bool {
    model
        .neurons()
        .iter()
        .any(|g| g.omega() == neuron.omega() && (g.b() - neuron.b()).abs() < tol)
}

/// Gradient ascent with backtracking on `phi = F^2 / 2` over the free
/// parameters of `start`: `b` alone in sign-vector mode, `(theta, b)` in
/// angular mode. Steps are preconditioned by the candidate-grid spacings so
/// one full step moves at most one grid cell per parameter. Returns the
/// refined neuron and its objective; never worse than the start.
fn refine_neuron(
    grid: &QuadratureGrid,
    cache: &ScanCache,
    start: &Neuron,
    start_objective: f64,
    mode: SamplingMode,
    spacing_b: f64,
    spacing_theta: f64,
    cfg: &SolverConfig,
) -> (Neuron, f64) {
    let k = start.k();
    match mode {
        SamplingMode::SignVectors => {
            let omega = start.omega().to_vec();
            let mut b = start.b();
            let mut f_cur = start_objective;
            for _ in 0..cfg.refine_max_iters {
                let (f, df) = objective_db(grid, cache, &omega, b, k);
                f_cur = f;
                let slope = f * df;
                if slope == 0.0 {
                    break;
                }
                let dir = slope.signum() * spacing_b;
                let mut step = 1.0f64;
                let mut accepted = false;
                while step * spacing_b >= cfg.refine_step_tol {
                    let b_new = b + step * dir;
                    let f_new = objective(grid, cache, &omega, b_new, k);
                    if f_new * f_new > f_cur * f_cur {
                        b = b_new;
                        f_cur = f_new;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted || step * spacing_b < cfg.refine_step_tol {
                    break;
                }
            }
            (start.with_offset(b), f_cur)
        }
        SamplingMode::Angular2D => {
            let mut theta = start.omega()[1].atan2(start.omega()[0]);
            let mut b = start.b();
            let mut f_cur = start_objective;
            for _ in 0..cfg.refine_max_iters {
                let (f, dt, db) = objective_dtheta_db(grid, cache, theta, b, k);
                f_cur = f;
                let (gt, gb) = (f * dt, f * db);
                if gt == 0.0 && gb == 0.0 {
                    break;
                }
                // Precondition by squared spacings, then cap the full step at
                // one grid cell per parameter.
                let (mut st, mut sb) = (gt * spacing_theta * spacing_theta, gb * spacing_b * spacing_b);
                let lambda = (st.abs() / spacing_theta).max(sb.abs() / spacing_b);
                st /= lambda;
                sb /= lambda;
                let mut step = 1.0f64;
                let mut accepted = false;
                while step * (st.abs().max(sb.abs())) >= cfg.refine_step_tol {
                    let (tn, bn) = (theta + step * st, b + step * sb);
                    let f_new = {
                        let omega = [tn.cos(), tn.sin()];
                        objective(grid, cache, &omega, bn, k)
                    };
                    if f_new * f_new > f_cur * f_cur {
                        theta = tn;
                        b = bn;
                        f_cur = f_new;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            let neuron = Neuron::new(vec![theta.cos(), theta.sin()], b, k)
                .expect("angular direction is nonzero");
            (neuron, f_cur)
        }
    }
}

/// Candidate objectives plus the ranking used for fallbacks: descending
/// absolute objective, ties to the lower index.
struct SelectionPlan {
    cache: ScanCache,
    objectives: Vec<f64>,
    order: Vec<usize>,
    primary: usize,
}

fn plan_selection(state: &SolverState, candidates: &CandidateSet) -> Result<SelectionPlan> {
    if candidates.is_empty() {
        return Err(Error::DictionaryExhausted);
    }
    let cache = state.scan_cache();
    let objectives: Vec<f64> = candidates
        .neurons()
        .iter()
        .map(|g| objective(state.grid, &cache, g.omega(), g.b(), g.k()))
        .collect();
    let primary = argmax_abs(&objectives).expect("nonempty candidate set");
    let mut order: Vec<usize> = (0..objectives.len()).collect();
    order.sort_by(|&a, &b| {
        objectives[b]
            .abs()
            .partial_cmp(&objectives[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(SelectionPlan {
        cache,
        objectives,
        order,
        primary,
    })
}

fn refine_primary(
    state: &SolverState,
    candidates: &CandidateSet,
    cfg: &SolverConfig,
    plan: &SelectionPlan,
) -> (Neuron, f64) {
    let start = &candidates.neurons()[plan.primary];
    if cfg.refine && start.k() >= 2 {
        // Angle spacing is 2 pi / n_theta; the candidate list stores
        // directions * offsets, so recover the direction count.
        let n_dirs = (candidates.len() / (candidates.n_b() + 1)).max(1);
        let spacing_theta = 2.0 * std::f64::consts::PI / n_dirs as f64;
        refine_neuron(
            state.grid,
            &plan.cache,
            start,
            plan.objectives[plan.primary],
            candidates.mode(),
            candidates.b_spacing(),
            spacing_theta,
            cfg,
        )
    } else {
        (start.clone(), plan.objectives[plan.primary])
    }
}

/// Best-ranked grid candidate that is neither a duplicate of a selected
/// neuron nor in `skip`.
fn fallback_candidate(
    state: &SolverState,
    candidates: &CandidateSet,
    cfg: &SolverConfig,
    plan: &SelectionPlan,
    skip: &[bool],
) -> Option<Selection> {
    for &idx in &plan.order {
        if skip[idx] {
            continue;
        }
        let cand = &candidates.neurons()[idx];
        if !duplicates_model(state.model(), cand, cfg.duplicate_tol) {
            return Some(Selection {
                neuron: cand.clone(),
                candidate_index: idx,
                grid_objective: plan.objectives[idx],
                objective: plan.objectives[idx],
            });
        }
    }
    None
}

/// One greedy step: scan all candidates, take the absolute-value argmax with
/// lowest-index tie-break, refine its free parameters when enabled, and fall
/// back to the next-best non-duplicate grid candidate if the result collides
/// with a selected neuron.
pub fn select_neuron(
    state: &SolverState,
    candidates: &CandidateSet,
    cfg: &SolverConfig,
) -> Result<Selection> {
    let plan = plan_selection(state, candidates)?;
    let (neuron, obj) = refine_primary(state, candidates, cfg, &plan);
    if !duplicates_model(state.model(), &neuron, cfg.duplicate_tol) {
        return Ok(Selection {
            neuron,
            candidate_index: plan.primary,
            grid_objective: plan.objectives[plan.primary],
            objective: obj,
        });
    }
    let skip = vec![false; candidates.len()];
    fallback_candidate(state, candidates, cfg, &plan, &skip).ok_or(Error::DictionaryExhausted)
}

/// Snapshot recorded at a checkpoint iteration.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub n: usize,
    pub model: Model,
    pub l2_error: Option<f64>,
    pub h1_error: Option<f64>,
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct IterationDiag {
    pub n: usize,
    pub candidate_index: usize,
    pub grid_objective: f64,
    pub objective: f64,
    pub quasi: QuasiOrthogonality,
    pub condition_estimate: f64,
}

/// Full run record: checkpoints plus diagnostics.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub checkpoints: Vec<Checkpoint>,
    pub iterations: Vec<IterationDiag>,
    /// Worst `max_j |a(u_n,g_j) - (f,g_j)| / (||G|| ||a|| + ||rhs||)` over
    /// all projections.
    pub quasi_worst_ratio: f64,
}

/// Execute `n_max` select/project steps, recording model snapshots and
/// solve-grid errors at each checkpoint. Deterministic for a fixed config.
pub fn run(problem: &ProblemSpec, grid: &QuadratureGrid, cfg: &SolverConfig) -> Result<RunReport> {
    cfg.validate()?;
    let candidates = sample_candidates(problem.domain(), &cfg.sampling)?;
    let mut state = SolverState::new(problem, grid);
    let mut checkpoints = Vec::with_capacity(cfg.checkpoints.len());
    let mut iterations = Vec::with_capacity(cfg.n_max);
    let mut quasi_worst_ratio: f64 = 0.0;

    if cfg.n_max == 0 {
        let (l2, h1) = checkpoint_errors(&state, grid, problem);
        checkpoints.push(Checkpoint {
            n: 0,
            model: state.model().clone(),
            l2_error: l2,
            h1_error: h1,
        });
        return Ok(RunReport {
            checkpoints,
            iterations,
            quasi_worst_ratio,
        });
    }

    // A selected neuron can render the Gram system numerically singular
    // (near-dependence on the selected span); treat the solver error as the
    // signal it is, drop that neuron, and continue down the candidate
    // ranking.
    const PROJECTION_RETRIES: usize = 64;

    for n in 1..=cfg.n_max {
        let plan = plan_selection(&state, &candidates).map_err(|e| e.at_iteration(n))?;
        let mut skip = vec![false; candidates.len()];

        let (refined, refined_obj) = refine_primary(&state, &candidates, cfg, &plan);
        let mut attempt = if duplicates_model(state.model(), &refined, cfg.duplicate_tol) {
            None
        } else {
            Some(Selection {
                neuron: refined,
                candidate_index: plan.primary,
                grid_objective: plan.objectives[plan.primary],
                objective: refined_obj,
            })
        };

        let mut accepted = None;
        for _ in 0..=PROJECTION_RETRIES {
            let selection = match attempt.take() {
                Some(sel) => sel,
                None => match fallback_candidate(&state, &candidates, cfg, &plan, &skip) {
                    Some(sel) => sel,
                    None => {
                        return Err(Error::DictionaryExhausted.at_iteration(n));
                    }
                },
            };
            state.append_neuron(selection.neuron.clone());
            match state.project() {
                Ok(condition_estimate) => {
                    accepted = Some((selection, condition_estimate));
                    break;
                }
                Err(Error::SingularProjection { .. }) => {
                    state.pop_neuron();
                    skip[selection.candidate_index] = true;
                }
                Err(e) => return Err(e.at_iteration(n)),
            }
        }
        let Some((selection, condition_estimate)) = accepted else {
            return Err(Error::SingularProjection {
                index: state.model().len(),
                pivot: 0.0,
            }
            .at_iteration(n));
        };

        let quasi = state.quasi_orthogonality();
        quasi_worst_ratio = quasi_worst_ratio.max(quasi.ratio());
        iterations.push(IterationDiag {
            n,
            candidate_index: selection.candidate_index,
            grid_objective: selection.grid_objective,
            objective: selection.objective,
            quasi,
            condition_estimate,
        });
        if cfg.checkpoints.contains(&n) {
            let (l2, h1) = checkpoint_errors(&state, grid, problem);
            checkpoints.push(Checkpoint {
                n,
                model: state.model().clone(),
                l2_error: l2,
                h1_error: h1,
            });
        }
    }

    Ok(RunReport {
        checkpoints,
        iterations,
        quasi_worst_ratio,
    })
}

fn checkpoint_errors(
    state: &SolverState,
    grid: &QuadratureGrid,
    problem: &ProblemSpec,
) -> (Option<f64>, Option<f64>) {
    match problem.exact() {
        Some(exact) => {
            let (l2, h1) = metrics::l2_h1_errors(grid, state.model(), exact);
            (Some(l2), Some(h1))
        }
        None => (None, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::SamplingOptions;
    use crate::problem::{preset, sample_field, Preset, ProblemSpec};
    use crate::quadrature::{integrate, BoxDomain, QuadratureGrid};

    fn unit_problem(c: f64) -> ProblemSpec {
        // -u'' + c u = 1 on (0,1), pure source, no exact solution.
        ProblemSpec::new(
            BoxDomain::interval(0.0, 1.0).unwrap(),
            vec![1.0],
            c,
            |_| 1.0,
            None,
        )
        .unwrap()
    }

    fn sign_cfg(n_max: usize, n_b: usize, margin: f64, refine: bool) -> SolverConfig {
        SolverConfig {
            n_max,
            checkpoints: vec![],
            sampling: SamplingOptions {
                mode: SamplingMode::SignVectors,
                n_b,
                n_theta: 0,
                k: 2,
                margin,
                normalize: false,
            },
            refine,
            refine_max_iters: 20,
            refine_step_tol: 1e-10,
            duplicate_tol: 1e-12,
        }
    }

    #[test]
    fn argmax_abs_breaks_ties_by_lowest_index() {
        assert_eq!(argmax_abs(&[0.1, -0.5, 0.5]), Some(1));
        assert_eq!(argmax_abs(&[]), None);
        assert_eq!(argmax_abs(&[2.0]), Some(0));
    }

    #[test]
    fn residual_of_empty_model_is_negative_source_pairing() {
        // u_0 = 0, f = 1, g = relu(x)^2 on (0,1):
        // <g, u_0 - u>_H = -(f, g) = -int_0^1 x^2 = -1/3.
        let problem = unit_problem(-1.0);
        let grid = QuadratureGrid::build(problem.domain(), &[64], 2).unwrap();
        let state = SolverState::new(&problem, &grid);
        let g = Neuron::new(vec![1.0], 0.0, 2).unwrap();
        let v = state.residual_functional(&g);
        assert!((v + 1.0 / 3.0).abs() < 1e-13, "{v}");
    }

    #[test]
    fn residual_of_zero_source_is_zero() {
        let problem = ProblemSpec::new(
            BoxDomain::interval(0.0, 1.0).unwrap(),
            vec![1.0],
            -1.0,
            |_| 0.0,
            None,
        )
        .unwrap();
        let grid = QuadratureGrid::build(problem.domain(), &[32], 2).unwrap();
        let state = SolverState::new(&problem, &grid);
        let g = Neuron::new(vec![-1.0], 0.7, 3).unwrap();
        assert_eq!(state.residual_functional(&g), 0.0);
    }

    #[test]
    fn residual_matches_term_by_term_integration() {
        // Derived oracle: evaluate (grad g, A grad u), (c g, u), (f, g) as
        // three separate integrals on a one-neuron model.
        let problem = unit_problem(-2.5);
        let grid = QuadratureGrid::build(problem.domain(), &[128], 2).unwrap();
        let mut state = SolverState::new(&problem, &grid);
        state.append_neuron(Neuron::new(vec![1.0], -0.25, 2).unwrap());
        state.project().unwrap();

        let g = Neuron::new(vec![-1.0], 0.9, 2).unwrap();
        let gs = sample_field(&grid, &g);
        let us = sample_field(&grid, state.model());
        let c = problem.reaction();

        let grad_term: Vec<f64> = (0..grid.len())
            .map(|j| gs.gradient(j)[0] * us.gradient(j)[0])
            .collect();
        let react_term: Vec<f64> = (0..grid.len())
            .map(|j| c * gs.values[j] * us.values[j])
            .collect();
        let src_term: Vec<f64> = (0..grid.len())
            .map(|j| state.source_values()[j] * gs.values[j])
            .collect();
        let expect = integrate(&grid, &grad_term) + integrate(&grid, &react_term)
            - integrate(&grid, &src_term);

        let got = state.residual_functional(&g);
        let scale = expect.abs().max(1.0);
        assert!(((got - expect) / scale).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn select_matches_closed_form_enumeration() {
        // Empty model, f = 1, c = -1, A = 1 on (0,1), sign vectors, n_b = 4,
        // margin 0 so b in {-1,-0.5,0,0.5,1}, refine off. The objective of a
        // candidate is -(f,g); closed forms for int_0^1 relu(w x + b)^2:
        //   w = +1: 0, 1/24, 1/3, 13/12 + 1/4 = ... computed below
        //   w = -1: mirrored.
        let problem = unit_problem(-1.0);
        let grid = QuadratureGrid::build(problem.domain(), &[256], 2).unwrap();
        let state = SolverState::new(&problem, &grid);
        let cfg = sign_cfg(1, 4, 0.0, false);
        let candidates = sample_candidates(problem.domain(), &cfg.sampling).unwrap();
        assert_eq!(candidates.len(), 10);

        // int_0^1 max(0, x + b)^2 dx for b >= -1: ((1+b)^3 - max(0,b)^3)/3.
        let pos = |b: f64| ((1.0 + b).powi(3) - b.max(0.0).powi(3)) / 3.0;
        // int_0^1 max(0, -x + b)^2 dx = (b^3 - max(0, b-1)^3)/3 for b >= 0.
        let neg = |b: f64| {
            if b <= 0.0 {
                0.0
            } else {
                (b.powi(3) - (b - 1.0).max(0.0).powi(3)) / 3.0
            }
        };
        let mut expected = Vec::new();
        for b in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            expected.push(-pos(b));
        }
        for b in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            expected.push(-neg(b));
        }
        let best = argmax_abs(&expected).unwrap();
        // Largest magnitude is w = +1, b = 1 with value -7/3.
        assert_eq!(best, 4);
        assert!((expected[4] + 7.0 / 3.0).abs() < 1e-15);

        let sel = select_neuron(&state, &candidates, &cfg).unwrap();
        assert_eq!(sel.candidate_index, 4);
        assert_eq!(sel.neuron.omega(), &[1.0]);
        assert_eq!(sel.neuron.b(), 1.0);
        assert!((sel.objective - expected[4]).abs() < 1e-10);
    }

    #[test]
    fn refinement_never_worsens_the_objective() {
        let problem = preset(Preset::Example1, -1.0).unwrap();
        let grid = QuadratureGrid::build(problem.domain(), &[200], 2).unwrap();
        let mut cfg = sign_cfg(30, 20, 1.0, true);
        cfg.checkpoints = vec![];
        let candidates = sample_candidates(problem.domain(), &cfg.sampling).unwrap();
        let mut state = SolverState::new(&problem, &grid);
        let mut compared = 0;
        for _ in 0..30 {
            let sel = select_neuron(&state, &candidates, &cfg).unwrap();
            assert!(
                sel.objective.abs() >= sel.grid_objective.abs() - 1e-12,
                "refined {} worse than grid {}",
                sel.objective,
                sel.grid_objective
            );
            compared += 1;
            state.append_neuron(sel.neuron);
            state.project().unwrap();
        }
        assert_eq!(compared, 30);
    }

    #[test]
    fn one_neuron_projection_is_ratio_of_integrals() {
        let problem = unit_problem(-1.0);
        let grid = QuadratureGrid::build(problem.domain(), &[128], 2).unwrap();
        let mut state = SolverState::new(&problem, &grid);
        let g = Neuron::new(vec![1.0], 0.0, 2).unwrap();
        state.append_neuron(g.clone());
        state.project().unwrap();

        let gs = sample_field(&grid, &g);
        let fg: Vec<f64> = (0..grid.len())
            .map(|j| state.source_values()[j] * gs.values[j])
            .collect();
        let load = integrate(&grid, &fg);
        let agg: Vec<f64> = (0..grid.len())
            .map(|j| {
                gs.gradient(j)[0] * gs.gradient(j)[0]
                    + problem.reaction() * gs.values[j] * gs.values[j]
            })
            .collect();
        let diag = integrate(&grid, &agg);
        let expect = load / diag;
        let got = state.model().coefficients()[0];
        assert!(((got - expect) / expect).abs() < 1e-13, "{got} vs {expect}");
    }

    #[test]
    fn projection_is_idempotent() {
        let problem = unit_problem(-3.0);
        let grid = QuadratureGrid::build(problem.domain(), &[64], 2).unwrap();
        let mut state = SolverState::new(&problem, &grid);
        for b in [0.0, 0.4, 0.8] {
            state.append_neuron(Neuron::new(vec![1.0], b, 2).unwrap());
        }
        state.project().unwrap();
        let first = state.model().coefficients().to_vec();
        state.project().unwrap();
        let second = state.model().coefficients().to_vec();
        for (a, b) in first.iter().zip(&second) {
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }

    #[test]
    fn quasi_orthogonality_after_projection() {
        let problem = preset(Preset::Example1, -1.0).unwrap();
        let grid = QuadratureGrid::build(problem.domain(), &[400], 2).unwrap();
        let cfg = sign_cfg(12, 50, 1.0, true);
        let candidates = sample_candidates(problem.domain(), &cfg.sampling).unwrap();
        let mut state = SolverState::new(&problem, &grid);
        for _ in 0..12 {
            let sel = select_neuron(&state, &candidates, &cfg).unwrap();
            state.append_neuron(sel.neuron);
            state.project().unwrap();
            let q = state.quasi_orthogonality();
            assert!(
                q.max_residual <= 1e-9 * q.scale,
                "residual {} vs scale {}",
                q.max_residual,
                q.scale
            );
        }
    }

    #[test]
    fn gram_rhs_matches_direct_integration() {
        let problem = unit_problem(-1.0);
        let grid = QuadratureGrid::build(problem.domain(), &[64], 2).unwrap();
        let mut state = SolverState::new(&problem, &grid);
        let neurons = [
            Neuron::new(vec![1.0], 0.2, 2).unwrap(),
            Neuron::new(vec![-1.0], 0.9, 2).unwrap(),
        ];
        for g in &neurons {
            state.append_neuron(g.clone());
        }
        for (j, g) in neurons.iter().enumerate() {
            let gs = sample_field(&grid, g);
            let fg: Vec<f64> = (0..grid.len())
                .map(|i| state.source_values()[i] * gs.values[i])
                .collect();
            let expect = integrate(&grid, &fg);
            let got = state.gram().rhs()[j];
            assert!((got - expect).abs() <= 1e-13 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn duplicate_candidates_fall_back_then_exhaust() {
        let problem = unit_problem(-1.0);
        let grid = QuadratureGrid::build(problem.domain(), &[32], 2).unwrap();
        let cfg = sign_cfg(8, 1, 0.0, false);
        let candidates = sample_candidates(problem.domain(), &cfg.sampling).unwrap();
        let total = candidates.len();
        let mut state = SolverState::new(&problem, &grid);
        // Install every candidate directly; the next selection has nothing
        // left to pick.
        for g in candidates.neurons() {
            state.append_neuron(g.clone());
        }
        assert_eq!(state.model().len(), total);
        match select_neuron(&state, &candidates, &cfg) {
            Err(Error::DictionaryExhausted) => {}
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn selection_skips_duplicates_of_selected_neurons() {
        let problem = unit_problem(-1.0);
        let grid = QuadratureGrid::build(problem.domain(), &[64], 2).unwrap();
        let cfg = sign_cfg(8, 4, 0.0, false);
        let candidates = sample_candidates(problem.domain(), &cfg.sampling).unwrap();
        let mut state = SolverState::new(&problem, &grid);
        let first = select_neuron(&state, &candidates, &cfg).unwrap();
        state.append_neuron(first.neuron.clone());
        state.project().unwrap();
        let second = select_neuron(&state, &candidates, &cfg).unwrap();
        assert!(
            first.neuron.omega() != second.neuron.omega()
                || first.neuron.b() != second.neuron.b()
        );
    }

    #[test]
    fn history_is_append_only() {
        let problem = preset(Preset::Example1, -1.0).unwrap();
        let grid = QuadratureGrid::build(problem.domain(), &[200], 2).unwrap();
        let cfg = sign_cfg(10, 30, 1.0, true);
        let candidates = sample_candidates(problem.domain(), &cfg.sampling).unwrap();
        let mut state = SolverState::new(&problem, &grid);
        let mut seen: Vec<Neuron> = Vec::new();
        for _ in 0..10 {
            let sel = select_neuron(&state, &candidates, &cfg).unwrap();
            state.append_neuron(sel.neuron);
            state.project().unwrap();
            for (old, cur) in seen.iter().zip(state.model().neurons()) {
                assert_eq!(old, cur);
            }
            seen = state.model().neurons().to_vec();
        }
    }

    #[test]
    fn run_with_zero_iterations_reports_exact_norms() {
        let problem = preset(Preset::Example1, -1.0).unwrap();
        let grid = QuadratureGrid::build(problem.domain(), &[500], 2).unwrap();
        let cfg = SolverConfig {
            n_max: 0,
            checkpoints: vec![],
            ..sign_cfg(0, 10, 1.0, false)
        };
        let report = run(&problem, &grid, &cfg).unwrap();
        assert_eq!(report.checkpoints.len(), 1);
        let cp = &report.checkpoints[0];
        assert!(cp.model.is_empty());
        // ||cos(pi x)||_0 = 1 and ||cos(pi x)||_1 = sqrt(1 + pi^2) on (-1,1).
        let l2 = cp.l2_error.unwrap();
        let h1 = cp.h1_error.unwrap();
        assert!((l2 - 1.0).abs() < 1e-10, "{l2}");
        let expect_h1 = (1.0 + std::f64::consts::PI.powi(2)).sqrt();
        assert!((h1 - expect_h1).abs() < 1e-9, "{h1}");
    }

    #[test]
    fn run_is_deterministic() {
        let problem = preset(Preset::Example1, -1.0).unwrap();
        let grid = QuadratureGrid::build(problem.domain(), &[300], 2).unwrap();
        let mut cfg = sign_cfg(16, 40, 1.0, true);
        cfg.checkpoints = vec![8, 16];
        let a = run(&problem, &grid, &cfg).unwrap();
        let b = run(&problem, &grid, &cfg).unwrap();
        assert_eq!(a.checkpoints.len(), b.checkpoints.len());
        for (ca, cb) in a.checkpoints.iter().zip(&b.checkpoints) {
            assert_eq!(ca.l2_error, cb.l2_error);
            assert_eq!(ca.h1_error, cb.h1_error);
            assert_eq!(ca.model.coefficients(), cb.model.coefficients());
        }
    }

    #[test]
    fn invalid_checkpoints_are_rejected() {
        let mut cfg = sign_cfg(8, 10, 0.0, false);
        cfg.checkpoints = vec![4, 2];
        assert!(cfg.validate().is_err());
        cfg.checkpoints = vec![4, 16];
        assert!(cfg.validate().is_err());
        cfg.checkpoints = vec![2, 4, 8];
        assert!(cfg.validate().is_ok());
    }
}
