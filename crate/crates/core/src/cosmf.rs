//! Coupled structured matrix factorization: objective, block gradients,
//! custom step-size rules, constraint variants, initialization, and the
//! end-to-end solve entry point.
//!
//! The data couple a spectrally decimated observation `Y_M ~ F A S` with a
//! spatially decimated one `Y_H ~ A S G`; `A` lives in the box `[0,1]` and
//! `S` either has unit-simplex columns (plain) or nuclear-norm-bounded
//! abundance-map rows (NNC).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{
    BlockProblem, BlockSpec, ExtrapolationMode, ExtrapolationSchedule, HibcdEngine, RunFailure,
    SolverTrace, StopRule, UpdateRule,
};
use crate::error::Error;
use crate::linalg::eigen::lambda_max_dense;
use crate::linalg::{
    power_iteration_lambda_max, simplex_null_basis, DenseMatrix, DenseSymOp, FnSymOp,
    SimplexNullBasis, SpatialDecimationOperator,
};
use crate::metrics::naive_interpolation;
use crate::proxlo::{
    lo_box01, lo_colwise_simplex, lo_rowwise_nuclear, mat_from_row, prox_box01,
    prox_colwise_simplex, prox_rowwise_nuclear, WarmStartStore,
};
use crate::Result;

/// Constraint variant for the `S` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Column-wise unit simplex.
    Plain,
    /// Row-wise nuclear-norm balls of radii `tau_i`.
    Nnc,
}

/// How per-iteration largest eigenvalues are computed in the step-size rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepEig {
    /// Power iteration with a small safety inflation; the descent verifier
    /// backstops under-estimates.
    Power {
        tol: f64,
        max_iter: usize,
        safety: f64,
    },
    /// Dense symmetric eigendecomposition (test mode).
    Dense,
}

impl Default for StepEig {
    fn default() -> Self {
        StepEig::Power {
            tol: 1e-10,
            max_iter: 5_000,
            safety: 1.0 + 1e-6,
        }
    }
}

/// Problem data and precomputed spectral constants.
#[derive(Debug, Clone)]
pub struct CosmfProblem {
    pub y_m: DenseMatrix,
    pub y_h: DenseMatrix,
    pub f: DenseMatrix,
    pub g: SpatialDecimationOperator,
    pub n: usize,
    pub variant: Variant,
    pub tau: Vec<f64>,
    pub l_x: usize,
    pub l_y: usize,
    /// `lammax(G^T G)`, computed once at construction.
    pub theta_g: f64,
    /// `lammax(F F^T)`, computed once at construction.
    pub theta_f: f64,
    psi: SimplexNullBasis,
}

impl CosmfProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        y_m: DenseMatrix,
        y_h: DenseMatrix,
        f: DenseMatrix,
        g: SpatialDecimationOperator,
        n: usize,
        variant: Variant,
        tau: Vec<f64>,
        l_x: usize,
        l_y: usize,
    ) -> Result<Self> {
        let m = f.cols();
        let m_m = f.rows();
        let l = l_x * l_y;
        if y_m.shape() != (m_m, l) {
            return Err(Error::invalid(format!(
                "Y_M must be {}x{}, got {:?}",
                m_m,
                l,
                y_m.shape()
            )));
        }
        if y_h.shape() != (m, g.output_len()) {
            return Err(Error::invalid(format!(
                "Y_H must be {}x{}, got {:?}",
                m,
                g.output_len(),
                y_h.shape()
            )));
        }
        if g.input_len() != l {
            return Err(Error::invalid("G input length must equal L_x * L_y"));
        }
        if n < 2 || n >= m.min(l) {
            return Err(Error::invalid(format!(
                "model order N={n} must satisfy 2 <= N < min(M={m}, L={l})"
            )));
        }
        if variant == Variant::Nnc {
            if tau.len() != n {
                return Err(Error::invalid("NNC variant needs one tau per material"));
            }
            if tau.iter().any(|&t| t <= 0.0) {
                return Err(Error::invalid("tau radii must be positive"));
            }
        }
        // theta_G via the power method on v -> G^T (G v); dimension L_H.
        let theta_g = {
            let op = FnSymOp {
                dim: g.output_len(),
                apply: |x: &[f64], out: &mut [f64]| {
                    let row = DenseMatrix::from_vec(1, x.len(), x.to_vec()).unwrap();
                    let gv = g.apply_adjoint(&row);
                    let back = g.apply(&gv);
                    out.copy_from_slice(back.row(0));
                },
            };
            power_iteration_lambda_max(&op, 1e-12, 20_000, 0x717).value * (1.0 + 1e-6)
        };
        let theta_f = lambda_max_dense(&f.matmul_nt(&f)).max(0.0);
        let psi = simplex_null_basis(n)?;
        Ok(CosmfProblem {
            y_m,
            y_h,
            f,
            g,
            n,
            variant,
            tau,
            l_x,
            l_y,
            theta_g,
            theta_f,
            psi,
        })
    }

    pub fn bands(&self) -> usize {
        self.f.cols()
    }

    pub fn coarse_bands(&self) -> usize {
        self.f.rows()
    }

    pub fn pixels(&self) -> usize {
        self.l_x * self.l_y
    }

    pub fn simplex_basis(&self) -> &SimplexNullBasis {
        &self.psi
    }
}

/// `f(A, S) = 1/2 ||Y_M - F A S||_F^2 + 1/2 ||Y_H - A S G||_F^2`, evaluated
/// through the neighborhood form of `G`.
pub fn objective(a: &DenseMatrix, s: &DenseMatrix, problem: &CosmfProblem) -> f64 {
    let fa = problem.f.matmul(a);
    let resid_m = fa.matmul(s).sub(&problem.y_m);
    let sg = problem.g.apply(s);
    let resid_h = a.matmul(&sg).sub(&problem.y_h);
    0.5 * resid_m.frob_norm_sq() + 0.5 * resid_h.frob_norm_sq()
}

/// `grad_S f = (FA)^T (FAS - Y_M) + A^T (ASG - Y_H) G^T`.
pub fn grad_s(a: &DenseMatrix, s: &DenseMatrix, problem: &CosmfProblem) -> DenseMatrix {
    let fa = problem.f.matmul(a);
    let resid_m = fa.matmul(s).sub(&problem.y_m);
    let term_m = fa.matmul_tn(&resid_m);
    let sg = problem.g.apply(s);
    let resid_h = a.matmul(&sg).sub(&problem.y_h);
    let term_h = problem.g.apply_adjoint(&a.matmul_tn(&resid_h));
    term_m.add(&term_h)
}

/// `grad_A f = F^T (FAS - Y_M) S^T + (ASG - Y_H) (SG)^T`.
pub fn grad_a(a: &DenseMatrix, s: &DenseMatrix, problem: &CosmfProblem) -> DenseMatrix {
    let fa = problem.f.matmul(a);
    let resid_m = fa.matmul(s).sub(&problem.y_m);
    let term_m = problem.f.matmul_tn(&resid_m.matmul_nt(s));
    let sg = problem.g.apply(s);
    let resid_h = a.matmul(&sg).sub(&problem.y_h);
    let term_h = resid_h.matmul_nt(&sg);
    term_m.add(&term_h)
}

fn lambda_max(m: &DenseMatrix, eig: StepEig) -> f64 {
    match eig {
        StepEig::Dense => lambda_max_dense(m),
        StepEig::Power {
            tol,
            max_iter,
            safety,
        } => power_iteration_lambda_max(&DenseSymOp(m), tol, max_iter, 0x5e7).value * safety,
    }
}

/// FPG step size for the `S` block: `max(delta_S, lammax(B^T (theta_G I +
/// F^T F) B))` with `B = A Psi` (plain) or `B = A` (NNC).
pub fn stepsize_s(a: &DenseMatrix, problem: &CosmfProblem, delta_s: f64, eig: StepEig) -> f64 {
    let b = match problem.variant {
        Variant::Plain => a.matmul(&problem.psi.psi),
        Variant::Nnc => a.clone(),
    };
    let fb = problem.f.matmul(&b);
    let form = b
        .matmul_tn(&b)
        .scale(problem.theta_g)
        .add(&fb.matmul_tn(&fb));
    delta_s.max(lambda_max(&form, eig))
}

/// FPG step size for the `A` block: `max(delta_A, lammax(theta_F S S^T +
/// (SG)(SG)^T))`.
pub fn stepsize_a(s: &DenseMatrix, problem: &CosmfProblem, delta_a: f64, eig: StepEig) -> f64 {
    let sg = problem.g.apply(s);
    let form = s
        .matmul_nt(s)
        .scale(problem.theta_f)
        .add(&sg.matmul_nt(&sg));
    delta_a.max(lambda_max(&form, eig))
}

/// Adaptive FW step size for `S`:
/// `1 ^ (-<grad_S f, D>) / (||A D G||_F^2 + ||F A D||_F^2 + delta_S ||D||_F^2)`.
pub fn fw_gamma_s(
    a: &DenseMatrix,
    s: &DenseMatrix,
    d_s: &DenseMatrix,
    problem: &CosmfProblem,
    delta_s: f64,
) -> f64 {
    let d_norm_sq = d_s.frob_norm_sq();
    if d_norm_sq == 0.0 {
        return 0.0;
    }
    let numerator = -grad_s(a, s, problem).inner(d_s);
    let denom = s_curvature(a, d_s, problem, delta_s);
    (numerator / denom).clamp(0.0, 1.0)
}

/// `||A D G||_F^2 + ||F A D||_F^2 + delta ||D||_F^2`, multiplications
/// ordered so no `M x L` intermediate is formed.
fn s_curvature(a: &DenseMatrix, d: &DenseMatrix, problem: &CosmfProblem, delta: f64) -> f64 {
    let dg = problem.g.apply(d);
    let fa = problem.f.matmul(a);
    a.matmul(&dg).frob_norm_sq() + fa.matmul(d).frob_norm_sq() + delta * d.frob_norm_sq()
}

/// `||F D S||_F^2 + ||D S G||_F^2 + delta ||D||_F^2` for the `A` block.
fn a_curvature(s: &DenseMatrix, d: &DenseMatrix, problem: &CosmfProblem, delta: f64) -> f64 {
    let fd = problem.f.matmul(d);
    let sg = problem.g.apply(s);
    fd.matmul(s).frob_norm_sq() + d.matmul(&sg).frob_norm_sq() + delta * d.frob_norm_sq()
}

/// Adaptive FW step size for `A`, by the same development:
/// `1 ^ (-<grad_A f, D>) / (||F D S||_F^2 + ||D S G||_F^2 + delta_A ||D||_F^2)`.
pub fn fw_gamma_a(
    s: &DenseMatrix,
    a: &DenseMatrix,
    d_a: &DenseMatrix,
    problem: &CosmfProblem,
    delta_a: f64,
) -> f64 {
    let d_norm_sq = d_a.frob_norm_sq();
    if d_norm_sq == 0.0 {
        return 0.0;
    }
    let numerator = -grad_a(a, s, problem).inner(d_a);
    let denom = a_curvature(s, d_a, problem, delta_a);
    (numerator / denom).clamp(0.0, 1.0)
}

/// Starting-point strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// `A0` i.i.d. uniform on `[0,1]`, `S0` columns all `1/N`.
    Uniform,
    /// `A0` = N spectrally distant columns of the naive-interpolated HS
    /// image, `S0` uniform.
    DataDriven,
}

/// Builds a feasible `(A0, S0)` for the given variant.
pub fn init(
    problem: &CosmfProblem,
    strategy: InitStrategy,
    seed: u64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let m = problem.bands();
    let n = problem.n;
    let l = problem.pixels();
    let a0 = match strategy {
        InitStrategy::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            DenseMatrix::from_fn(m, n, |_, _| rng.random::<f64>())
        }
        InitStrategy::DataDriven => {
            let interp =
                naive_interpolation(&problem.y_h, problem.l_x, problem.l_y, problem.g.factor())?;
            let clipped = prox_box01(&interp);
            data_driven_columns(&clipped, n)
        }
    };
    let mut s0 = DenseMatrix::from_fn(n, l, |_, _| 1.0 / n as f64);
    if problem.variant == Variant::Nnc {
        // Rescale rows so each abundance map fits its nuclear-norm budget.
        for i in 0..n {
            let nn = mat_from_row(s0.row(i), problem.l_x, problem.l_y).frob_norm();
            // Rank-1 constant map: nuclear norm equals the Frobenius norm.
            if nn > problem.tau[i] {
                let scale = problem.tau[i] / nn;
                for v in s0.row_mut(i) {
                    *v *= scale;
                }
            }
        }
    }
    Ok((a0, s0))
}

/// Greedy farthest-point (in spectral angle) column selection.
fn data_driven_columns(x: &DenseMatrix, n: usize) -> DenseMatrix {
    let (m, l) = x.shape();
    let norms: Vec<f64> = (0..l)
        .map(|c| {
            (0..m)
                .map(|r| x.get(r, c) * x.get(r, c))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut selected = Vec::with_capacity(n);
    let first = (0..l)
        .max_by(|&a, &b| norms[a].partial_cmp(&norms[b]).unwrap())
        .unwrap_or(0);
    selected.push(first);
    let cos = |a: usize, b: usize| -> f64 {
        if norms[a] == 0.0 || norms[b] == 0.0 {
            return 1.0;
        }
        let dot: f64 = (0..m).map(|r| x.get(r, a) * x.get(r, b)).sum();
        (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0)
    };
    while selected.len() < n {
        // Column maximizing the minimum angle (= minimizing max cosine) to
        // the selected set.
        let mut best = None;
        let mut best_score = f64::INFINITY;
        for c in 0..l {
            if selected.contains(&c) {
                continue;
            }
            let worst: f64 = selected
                .iter()
                .map(|&sc| cos(c, sc).abs())
                .fold(f64::NEG_INFINITY, f64::max);
            if worst < best_score {
                best_score = worst;
                best = Some(c);
            }
        }
        match best {
            Some(c) => selected.push(c),
            None => break,
        }
    }
    while selected.len() < n {
        selected.push(selected[selected.len() - 1]);
    }
    DenseMatrix::from_fn(m, n, |r, c| x.get(r, selected[c]))
}

/// Feasibility of `A` for the box constraint.
pub fn a_feasible(a: &DenseMatrix, tol: f64) -> bool {
    a.as_slice().iter().all(|&v| v >= -tol && v <= 1.0 + tol)
}

/// Cheap one-sided feasibility screen for `S`, used on the solver hot path.
///
/// Plain: exact (nonnegativity + column sums). NNC: the Frobenius norm lower
/// bounds the nuclear norm, so a row failing `||row||_F <= tau_i` is
/// certainly infeasible; rows passing the screen are accepted, with exact
/// membership maintained by the prox/LO constructions.
fn s_feasible_screen(s: &DenseMatrix, problem: &CosmfProblem, tol: f64) -> bool {
    match problem.variant {
        Variant::Plain => s_feasible(s, problem, tol),
        Variant::Nnc => (0..s.rows()).all(|i| {
            let frob: f64 = s.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            frob <= problem.tau[i] + tol.max(1e-9) * (1.0 + problem.tau[i])
        }),
    }
}

/// Feasibility of `S` for the chosen variant.
pub fn s_feasible(s: &DenseMatrix, problem: &CosmfProblem, tol: f64) -> bool {
    match problem.variant {
        Variant::Plain => {
            for c in 0..s.cols() {
                let mut sum = 0.0;
                for r in 0..s.rows() {
                    let v = s.get(r, c);
                    if v < -tol {
                        return false;
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > tol.max(1e-12) * (s.rows() as f64) {
                    return false;
                }
            }
            true
        }
        Variant::Nnc => {
            for i in 0..s.rows() {
                let m = mat_from_row(s.row(i), problem.l_x, problem.l_y);
                match crate::linalg::eigen::nuclear_norm(&m) {
                    Ok(nn) => {
                        if nn > problem.tau[i] + tol.max(1e-9) * (1.0 + problem.tau[i]) {
                            return false;
                        }
                    }
                    Err(_) => return false,
                }
            }
            true
        }
    }
}

/// Adapter wiring a [`CosmfProblem`] into the generic engine, block order
/// `[A, S]`.
pub struct CosmfBlocks<'a> {
    pub problem: &'a CosmfProblem,
    pub delta_a: f64,
    pub delta_s: f64,
    pub eig: StepEig,
    warm: WarmStartStore,
}

impl<'a> CosmfBlocks<'a> {
    pub fn new(problem: &'a CosmfProblem, delta_a: f64, delta_s: f64, eig: StepEig) -> Self {
        CosmfBlocks {
            problem,
            delta_a,
            delta_s,
            eig,
            warm: WarmStartStore::with_rows(problem.n),
        }
    }
}

impl BlockProblem for CosmfBlocks<'_> {
    fn num_blocks(&self) -> usize {
        2
    }

    fn objective(&self, x: &[DenseMatrix]) -> f64 {
        objective(&x[0], &x[1], self.problem)
    }

    fn block_gradient(&self, i: usize, x: &[DenseMatrix]) -> DenseMatrix {
        match i {
            0 => grad_a(&x[0], &x[1], self.problem),
            _ => grad_s(&x[0], &x[1], self.problem),
        }
    }

    fn block_h(&self, i: usize, xi: &DenseMatrix) -> f64 {
        let feasible = match i {
            0 => a_feasible(xi, 1e-6),
            _ => s_feasible_screen(xi, self.problem, 1e-6),
        };
        if feasible {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn block_prox(&mut self, i: usize, v: &DenseMatrix, _beta: f64) -> Result<DenseMatrix> {
        match i {
            0 => Ok(prox_box01(v)),
            _ => match self.problem.variant {
                Variant::Plain => Ok(prox_colwise_simplex(v)),
                Variant::Nnc => {
                    prox_rowwise_nuclear(v, &self.problem.tau, self.problem.l_x, self.problem.l_y)
                }
            },
        }
    }

    fn block_lo(&mut self, i: usize, grad: &DenseMatrix) -> Result<DenseMatrix> {
        match i {
            0 => Ok(lo_box01(grad)),
            _ => match self.problem.variant {
                Variant::Plain => Ok(lo_colwise_simplex(grad)),
                Variant::Nnc => lo_rowwise_nuclear(
                    grad,
                    &self.problem.tau,
                    self.problem.l_x,
                    self.problem.l_y,
                    &mut self.warm,
                ),
            },
        }
    }

    fn fpg_stepsize(&mut self, i: usize, x: &[DenseMatrix]) -> f64 {
        match i {
            0 => stepsize_a(&x[1], self.problem, self.delta_a, self.eig),
            _ => stepsize_s(&x[0], self.problem, self.delta_s, self.eig),
        }
    }

    fn fw_curvature(&self, i: usize, x: &[DenseMatrix], d: &DenseMatrix) -> f64 {
        match i {
            0 => a_curvature(&x[1], d, self.problem, self.delta_a),
            _ => s_curvature(&x[0], d, self.problem, self.delta_s),
        }
    }

    fn diameter_bound(&self, i: usize) -> Option<f64> {
        let p = self.problem;
        Some(match i {
            // Box [0,1]^{M x N}.
            0 => ((p.bands() * p.n) as f64).sqrt(),
            _ => match p.variant {
                // Each simplex column has diameter sqrt(2).
                Variant::Plain => (2.0 * p.pixels() as f64).sqrt(),
                // Each nuclear ball has diameter 2 tau_i.
                Variant::Nnc => p.tau.iter().map(|t| 4.0 * t * t).sum::<f64>().sqrt(),
            },
        })
    }

    fn is_feasible(&self, i: usize, xi: &DenseMatrix) -> bool {
        match i {
            0 => a_feasible(xi, 1e-9),
            _ => s_feasible(xi, self.problem, 1e-9),
        }
    }
}

/// Solver configuration for [`solve`].
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub rule_a: UpdateRule,
    pub rule_s: UpdateRule,
    /// Safeguards; when absent, `1e-6 *` the initial step-size scale with an
    /// absolute floor of `1e-12`.
    pub delta_a: Option<f64>,
    pub delta_s: Option<f64>,
    pub inner_repeats_a: usize,
    pub inner_repeats_s: usize,
    pub extrapolation: ExtrapolationMode,
    pub alpha_cap: f64,
    pub stop: StopRule,
    pub init: InitStrategy,
    pub eig: StepEig,
    /// FW-gap cadence in the trace (0 disables gap tracking).
    pub gap_every: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            rule_a: UpdateRule::Fpg,
            rule_s: UpdateRule::Fw,
            delta_a: None,
            delta_s: None,
            inner_repeats_a: 1,
            inner_repeats_s: 1,
            extrapolation: ExtrapolationMode::FistaAsWritten,
            alpha_cap: 0.9999,
            stop: StopRule::default(),
            init: InitStrategy::DataDriven,
            eig: StepEig::default(),
            gap_every: 1,
        }
    }
}

/// Recovered factors and the product estimate.
pub struct CosmfSolution {
    pub a: DenseMatrix,
    pub s: DenseMatrix,
    pub x_hat: DenseMatrix,
    pub trace: SolverTrace,
    pub delta_a: f64,
    pub delta_s: f64,
}

/// End-to-end solve: initialize, wire the blocks into the engine in the
/// order `A` then `S`, and run to the stop rule.
pub fn solve(
    problem: &CosmfProblem,
    config: &SolveConfig,
    seed: u64,
) -> std::result::Result<CosmfSolution, Box<RunFailure>> {
    let (a0, s0) = init(problem, config.init, seed).map_err(|error| {
        Box::new(RunFailure {
            error,
            trace: SolverTrace {
                initial_objective: f64::NAN,
                records: Vec::new(),
                stop_reason: crate::engine::StopReason::MaxIter,
            },
        })
    })?;
    solve_from(problem, config, a0, s0)
}

/// [`solve`] from a caller-supplied starting point.
pub fn solve_from(
    problem: &CosmfProblem,
    config: &SolveConfig,
    a0: DenseMatrix,
    s0: DenseMatrix,
) -> std::result::Result<CosmfSolution, Box<RunFailure>> {
    // Safeguards default to a small fraction of the initial step-size scale.
    let eig = config.eig;
    let beta_a0 = stepsize_a(&s0, problem, 0.0, eig);
    let beta_s0 = stepsize_s(&a0, problem, 0.0, eig);
    let delta_a = config.delta_a.unwrap_or((1e-6 * beta_a0).max(1e-12));
    let delta_s = config.delta_s.unwrap_or((1e-6 * beta_s0).max(1e-12));

    let mut blocks_problem = CosmfBlocks::new(problem, delta_a, delta_s, eig);
    // f is convex in each block, so rho_A = rho_S = 0.
    let mut spec_a = BlockSpec::new(config.rule_a, delta_a);
    spec_a.inner_repeats = config.inner_repeats_a;
    spec_a.alpha_cap = config.alpha_cap;
    let mut spec_s = BlockSpec::new(config.rule_s, delta_s);
    spec_s.inner_repeats = config.inner_repeats_s;
    spec_s.alpha_cap = config.alpha_cap;

    let schedule = ExtrapolationSchedule::new(config.extrapolation, config.alpha_cap);
    let mut engine = HibcdEngine::new(schedule, config.stop.clone());
    engine.gap_every = config.gap_every;
    let outcome = engine.run(&mut blocks_problem, &[spec_a, spec_s], vec![a0, s0])?;
    let mut state = outcome.state;
    let s = state.pop().expect("two blocks");
    let a = state.pop().expect("two blocks");
    let x_hat = a.matmul(&s);
    Ok(CosmfSolution {
        a,
        s,
        x_hat,
        trace: outcome.trace,
        delta_a,
        delta_s,
    })
}
