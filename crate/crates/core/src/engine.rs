//! Generic multi-block solver: per-block FPG or FW updates with inner
//! repeats, extrapolation, sufficient-descent certification, FW-gap
//! stationarity tracking, and stopping logic.

use std::time::Instant;

use crate::error::Error;
use crate::linalg::DenseMatrix;

/// Update rule assigned to a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    Fpg,
    Fw,
}

/// Per-block configuration.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub rule: UpdateRule,
    /// Inner repeats `L_i >= 1` of the block update within one cycle.
    pub inner_repeats: usize,
    /// Safeguard `delta_i > 0`: floor for FPG step sizes, ridge for FW
    /// curvature forms.
    pub safeguard: f64,
    /// Weak-convexity parameter `rho_i >= 0` of `f` in this block.
    pub weak_convexity: f64,
    /// Step-size quality `eta_i >= 1` (diagnostic only).
    pub step_quality: f64,
    /// Extrapolation cap `alpha_bar in [0, 1)`.
    pub alpha_cap: f64,
}

impl BlockSpec {
    pub fn new(rule: UpdateRule, safeguard: f64) -> Self {
        BlockSpec {
            rule,
            inner_repeats: 1,
            safeguard,
            weak_convexity: 0.0,
            step_quality: 1.0,
            alpha_cap: 0.9999,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.inner_repeats < 1 {
            return Err(Error::invalid("inner repeats must be >= 1"));
        }
        if self.safeguard <= 0.0 || self.safeguard.is_nan() {
            return Err(Error::invalid("safeguard delta must be positive"));
        }
        if self.weak_convexity < 0.0 {
            return Err(Error::invalid("weak convexity must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.alpha_cap) {
            return Err(Error::invalid("alpha cap must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Contract a problem must satisfy to be driven by the engine.
///
/// The engine owns the iterate `x = (x_1, ..., x_m)` as a slice of matrices;
/// gradients, objective values, prox/LO oracles and step-size forms are
/// evaluated through this trait. Extrapolated points may be passed to
/// `objective`/`block_gradient` even when they are infeasible.
pub trait BlockProblem {
    fn num_blocks(&self) -> usize;

    /// Smooth objective `f(x)`.
    fn objective(&self, x: &[DenseMatrix]) -> f64;

    /// Gradient of `f` with respect to block `i`, other blocks fixed.
    fn block_gradient(&self, i: usize, x: &[DenseMatrix]) -> DenseMatrix;

    /// Convex term `h_i` at a point (0 for indicators of feasible points).
    fn block_h(&self, i: usize, xi: &DenseMatrix) -> f64;

    /// `prox_{h_i / beta}(v)`.
    fn block_prox(&mut self, i: usize, v: &DenseMatrix, beta: f64) -> Result<DenseMatrix, Error>;

    /// `argmin_y <g, y> + h_i(y)`.
    fn block_lo(&mut self, i: usize, grad: &DenseMatrix) -> Result<DenseMatrix, Error>;

    /// FPG step-size rule value `beta_hat_i` at the current state (already
    /// floored by the safeguard).
    fn fpg_stepsize(&mut self, i: usize, x: &[DenseMatrix]) -> f64;

    /// FW curvature form `|| R_hat^{1/2} d ||^2`, including the safeguard
    /// ridge `delta_i ||d||^2`.
    fn fw_curvature(&self, i: usize, x: &[DenseMatrix], d: &DenseMatrix) -> f64;

    /// Feasibility of a block value for `dom(h_i)`, used to validate `x0`.
    fn is_feasible(&self, i: usize, xi: &DenseMatrix) -> bool;

    /// Diameter bound of `dom(h_i)`, diagnostics only.
    fn diameter_bound(&self, _i: usize) -> Option<f64> {
        None
    }
}

/// Extrapolation weight sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtrapolationMode {
    /// `mu_{k+1} = (1 + sqrt(1 + 4 mu_k)) / 2` taken literally.
    FistaAsWritten,
    /// The standard recursion with `mu_k^2` under the square root.
    FistaSquared,
    /// Constant weight.
    Constant(f64),
}

/// Stateful emitter of extrapolation weights `alpha_k`, capped at `cap`.
#[derive(Debug, Clone)]
pub struct ExtrapolationSchedule {
    pub mode: ExtrapolationMode,
    pub cap: f64,
    mu: f64,
}

impl ExtrapolationSchedule {
    pub fn new(mode: ExtrapolationMode, cap: f64) -> Self {
        ExtrapolationSchedule { mode, cap, mu: 1.0 }
    }

    /// Emits `alpha_k` and advances the internal state.
    pub fn next_alpha(&mut self) -> f64 {
        let alpha = match self.mode {
            ExtrapolationMode::Constant(a) => a,
            ExtrapolationMode::FistaAsWritten => {
                let mu_next = 0.5 * (1.0 + (1.0 + 4.0 * self.mu).sqrt());
                let a = (self.mu - 1.0) / mu_next;
                self.mu = mu_next;
                a
            }
            ExtrapolationMode::FistaSquared => {
                let mu_next = 0.5 * (1.0 + (1.0 + 4.0 * self.mu * self.mu).sqrt());
                let a = (self.mu - 1.0) / mu_next;
                self.mu = mu_next;
                a
            }
        };
        alpha.clamp(0.0, self.cap)
    }
}

impl Default for ExtrapolationSchedule {
    fn default() -> Self {
        ExtrapolationSchedule::new(ExtrapolationMode::FistaAsWritten, 0.9999)
    }
}

/// Stopping criteria; whichever fires first ends the run.
#[derive(Debug, Clone)]
pub struct StopRule {
    /// Stop when `|F(x^k) - F(x^{k+1})| < obj_tol`.
    pub obj_tol: f64,
    pub max_outer: usize,
    /// Stop when the total FW gap drops to this value.
    pub gap_tol: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            obj_tol: 1e-4,
            max_outer: 3000,
            gap_tol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ObjTol,
    MaxIter,
    GapTol,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::ObjTol => "obj_tol",
            StopReason::MaxIter => "max_iter",
            StopReason::GapTol => "gap_tol",
        }
    }
}

/// One row per executed outer iteration; values describe the state after the
/// iteration and the steps taken within it.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub elapsed_secs: f64,
    pub objective: f64,
    pub fw_gap_total: Option<f64>,
    pub block_gaps: Vec<Option<f64>>,
    /// `beta_hat` (FPG) or `gamma` (FW) of each block's last inner repeat.
    pub step_values: Vec<f64>,
    pub alpha: f64,
    pub descent_ok: bool,
    pub backtracks: usize,
}

#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub initial_objective: f64,
    pub records: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

impl SolverTrace {
    pub fn final_objective(&self) -> f64 {
        self.records
            .last()
            .map(|r| r.objective)
            .unwrap_or(self.initial_objective)
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn total_backtracks(&self) -> usize {
        self.records.iter().map(|r| r.backtracks).sum()
    }
}

/// Engine failure carrying whatever trace was accumulated before the error.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub trace: SolverTrace,
}

pub struct RunOutcome {
    pub state: Vec<DenseMatrix>,
    pub trace: SolverTrace,
}

/// Relative slack tolerance for descent certificates.
const DESCENT_TOL: f64 = 1e-9;
/// Doubling attempts before a step is declared failed.
const MAX_BACKTRACKS: usize = 50;

/// Sufficient-descent certificate for a candidate step.
///
/// For FPG, `quad` is `beta_hat / 2 * ||x+ - z||^2`; for FW it is
/// `1/2 * ||R_hat^{1/2} (x+ - x)||^2`. Returns the certificate truth value
/// and the slack `rhs - f_new`, accepted down to `-1e-9 * (1 + |f_ref|)`.
pub fn verify_sufficient_descent(
    f_ref: f64,
    grad_inner_step: f64,
    quad: f64,
    f_new: f64,
) -> (bool, f64) {
    let rhs = f_ref + grad_inner_step + quad;
    let slack = rhs - f_new;
    (slack >= -DESCENT_TOL * (1.0 + f_ref.abs()), slack)
}

/// Upper bound on the inner repeats worth running per block (engine-level
/// constant analysis), and the refined recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepeatBound {
    /// `ceil(sqrt(eta/2))` for FW, `ceil(sqrt((2 eta + 1 + rho/beta)/2))`
    /// for FPG.
    pub bound: usize,
    /// The bound refined by the single-update clause: 1 when FW with
    /// `eta <= 4`, or FPG with `rho = 0` and `eta <= 3/2`.
    pub recommended: usize,
}

pub fn inner_repeat_bound(rule: UpdateRule, eta: f64, rho_over_beta: f64) -> RepeatBound {
    assert!(eta >= 1.0, "step quality eta must be >= 1");
    assert!(
        (0.0..=1.0).contains(&rho_over_beta),
        "rho/beta must lie in [0, 1]"
    );
    let bound = match rule {
        UpdateRule::Fw => (eta / 2.0).sqrt().ceil() as usize,
        UpdateRule::Fpg => ((2.0 * eta + 1.0 + rho_over_beta) / 2.0).sqrt().ceil() as usize,
    }
    .max(1);
    let single = match rule {
        UpdateRule::Fw => eta <= 4.0,
        UpdateRule::Fpg => rho_over_beta == 0.0 && eta <= 1.5,
    };
    RepeatBound {
        bound,
        recommended: if single { 1 } else { bound },
    }
}

/// Total and per-block FW gaps at a feasible point.
///
/// `g_i(x) = <grad_i f(x), x_i - y_i> + h_i(x_i) - h_i(y_i)` with `y_i` from
/// the block LO oracle; the total gap is the sum over blocks.
pub fn fw_gap(problem: &mut dyn BlockProblem, x: &[DenseMatrix]) -> Result<(f64, Vec<f64>), Error> {
    let m = problem.num_blocks();
    let mut gaps = Vec::with_capacity(m);
    for i in 0..m {
        let grad = problem.block_gradient(i, x);
        let y = problem.block_lo(i, &grad)?;
        let gap =
            grad.inner(&x[i]) - grad.inner(&y) + problem.block_h(i, &x[i]) - problem.block_h(i, &y);
        gaps.push(gap);
    }
    Ok((gaps.iter().sum(), gaps))
}

/// Multi-block solver loop. Blocks are visited in order within each outer
/// iteration, each repeated `inner_repeats` times.
pub struct HibcdEngine {
    pub schedule: ExtrapolationSchedule,
    pub stop: StopRule,
    /// Compute the FW gap every `gap_every` outer iterations (0 disables,
    /// unless `gap_tol` stopping forces it).
    pub gap_every: usize,
}

impl HibcdEngine {
    pub fn new(schedule: ExtrapolationSchedule, stop: StopRule) -> Self {
        HibcdEngine {
            schedule,
            stop,
            gap_every: 1,
        }
    }

    pub fn run(
        mut self,
        problem: &mut dyn BlockProblem,
        blocks: &[BlockSpec],
        x0: Vec<DenseMatrix>,
    ) -> Result<RunOutcome, Box<RunFailure>> {
        let m = problem.num_blocks();
        let fail_early = |error: Error| {
            Box::new(RunFailure {
                error,
                trace: SolverTrace {
                    initial_objective: f64::NAN,
                    records: Vec::new(),
                    stop_reason: StopReason::MaxIter,
                },
            })
        };
        if blocks.len() != m || x0.len() != m {
            return Err(fail_early(Error::invalid(
                "block specs and starting point must match the problem's block count",
            )));
        }
        for (i, spec) in blocks.iter().enumerate() {
            spec.validate().map_err(&fail_early)?;
            if !problem.is_feasible(i, &x0[i]) {
                return Err(fail_early(Error::invalid(format!(
                    "starting point infeasible for block {i}"
                ))));
            }
        }

        let mut state = x0;
        // Previous value of each block, one update ago; realizes the
        // extrapolation difference both across inner repeats and across
        // outer iterations.
        let mut prev: Vec<DenseMatrix> = state.clone();
        let mut last_beta: Vec<Option<f64>> = vec![None; m];

        let mut records: Vec<IterationRecord> = Vec::new();
        let mut prev_objective = problem.objective(&state);
        let initial_objective = prev_objective;
        let fail = |error: Error, records: Vec<IterationRecord>| {
            Box::new(RunFailure {
                error,
                trace: SolverTrace {
                    initial_objective,
                    records,
                    stop_reason: StopReason::MaxIter,
                },
            })
        };
        if !prev_objective.is_finite() {
            return Err(fail(
                Error::numerical("objective not finite at the starting point"),
                records,
            ));
        }

        let start = Instant::now();
        let mut stop_reason = StopReason::MaxIter;
        for k in 0..self.stop.max_outer {
            let alpha_k = self.schedule.next_alpha();
            let mut step_values = vec![0.0; m];
            let mut descent_ok = true;
            let mut backtracks = 0usize;

            for i in 0..m {
                let spec = &blocks[i];
                for _ in 0..spec.inner_repeats {
                    let step = match spec.rule {
                        UpdateRule::Fpg => fpg_step(
                            problem,
                            spec,
                            i,
                            alpha_k,
                            &mut state,
                            &mut prev,
                            &mut last_beta[i],
                        ),
                        UpdateRule::Fw => fw_step(problem, spec, i, &mut state, &mut prev),
                    };
                    match step {
                        Ok(outcome) => {
                            step_values[i] = outcome.step_value;
                            descent_ok &= outcome.certified;
                            backtracks += outcome.backtracks;
                        }
                        Err(e) => return Err(fail(e, records)),
                    }
                }
            }

            let objective = problem.objective(&state);
            if !objective.is_finite() {
                return Err(fail(
                    Error::numerical(format!("objective became non-finite at iteration {k}")),
                    records,
                ));
            }

            let want_gap =
                self.stop.gap_tol.is_some() || (self.gap_every > 0 && k % self.gap_every == 0);
            let (gap_total, block_gaps) = if want_gap {
                match fw_gap(problem, &state) {
                    Ok((g, gs)) => (Some(g), gs.into_iter().map(Some).collect()),
                    Err(e) => return Err(fail(e, records)),
                }
            } else {
                (None, vec![None; m])
            };

            records.push(IterationRecord {
                iter: k,
                elapsed_secs: start.elapsed().as_secs_f64(),
                objective,
                fw_gap_total: gap_total,
                block_gaps,
                step_values,
                alpha: alpha_k,
                descent_ok,
                backtracks,
            });

            if let (Some(tol), Some(g)) = (self.stop.gap_tol, gap_total) {
                if g <= tol {
                    stop_reason = StopReason::GapTol;
                    break;
                }
            }
            if (prev_objective - objective).abs() < self.stop.obj_tol {
                stop_reason = StopReason::ObjTol;
                break;
            }
            prev_objective = objective;
        }

        Ok(RunOutcome {
            state,
            trace: SolverTrace {
                initial_objective,
                records,
                stop_reason,
            },
        })
    }
}

/// One-call wrapper over [`HibcdEngine`] with gap tracking every iteration.
pub fn run(
    problem: &mut dyn BlockProblem,
    blocks: &[BlockSpec],
    schedule: ExtrapolationSchedule,
    stop: StopRule,
    x0: Vec<DenseMatrix>,
) -> Result<RunOutcome, Box<RunFailure>> {
    HibcdEngine::new(schedule, stop).run(problem, blocks, x0)
}

struct StepOutcome {
    step_value: f64,
    certified: bool,
    backtracks: usize,
}

/// FPG update of block `i`: prox step from the extrapolated point, with the
/// descent certificate re-verified and the step size doubled on failure.
fn fpg_step(
    problem: &mut dyn BlockProblem,
    spec: &BlockSpec,
    i: usize,
    alpha_k: f64,
    state: &mut [DenseMatrix],
    prev: &mut [DenseMatrix],
    last_beta: &mut Option<f64>,
) -> Result<StepOutcome, Error> {
    let mut beta = problem.fpg_stepsize(i, state);
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::numerical(format!(
            "step-size provider returned {beta} for block {i}"
        )));
    }
    beta = beta.max(spec.safeguard);

    let x_i = state[i].clone();
    let momentum = x_i.sub(&prev[i]);
    let mut backtracks = 0;
    loop {
        // Extrapolation weight capped per the step-size-ratio condition
        // alpha <= alpha_bar * sqrt(beta_prev / (rho + beta)).
        let beta_prev = last_beta.unwrap_or(beta);
        let cap = spec.alpha_cap * (beta_prev / (spec.weak_convexity + beta)).sqrt();
        let alpha = alpha_k.min(cap);

        state[i] = x_i.add_scaled(alpha, &momentum);
        let f_z = problem.objective(state);
        let grad_z = problem.block_gradient(i, state);
        let prox_input = state[i].add_scaled(-1.0 / beta, &grad_z);
        let candidate = match problem.block_prox(i, &prox_input, beta) {
            Ok(c) => c,
            Err(e) => {
                state[i] = x_i;
                return Err(e);
            }
        };
        let diff = candidate.sub(&state[i]);
        let grad_dot = grad_z.inner(&diff);
        let quad = 0.5 * beta * diff.frob_norm_sq();
        state[i] = candidate;
        let f_new = problem.objective(state);

        let (ok, _slack) = verify_sufficient_descent(f_z, grad_dot, quad, f_new);
        if ok {
            prev[i] = x_i;
            *last_beta = Some(beta);
            return Ok(StepOutcome {
                step_value: beta,
                certified: true,
                backtracks,
            });
        }
        backtracks += 1;
        if backtracks > MAX_BACKTRACKS {
            state[i] = x_i;
            return Err(Error::numerical(format!(
                "descent certificate failed after {MAX_BACKTRACKS} doublings on block {i}"
            )));
        }
        beta *= 2.0;
    }
}

/// FW update of block `i`: LO direction with the adaptive step size, the
/// curvature form inflated on certificate failure.
fn fw_step(
    problem: &mut dyn BlockProblem,
    _spec: &BlockSpec,
    i: usize,
    state: &mut [DenseMatrix],
    prev: &mut [DenseMatrix],
) -> Result<StepOutcome, Error> {
    let grad = problem.block_gradient(i, state);
    let y = problem.block_lo(i, &grad)?;
    let d = y.sub(&state[i]);
    let d_norm_sq = d.frob_norm_sq();
    if d_norm_sq == 0.0 {
        // Block-stationary; record gamma = 0 and skip.
        return Ok(StepOutcome {
            step_value: 0.0,
            certified: true,
            backtracks: 0,
        });
    }
    let h_x = problem.block_h(i, &state[i]);
    let h_y = problem.block_h(i, &y);
    let numerator = -grad.inner(&d) + h_x - h_y;
    let mut curvature = problem.fw_curvature(i, state, &d);
    if !curvature.is_finite() || curvature <= 0.0 {
        return Err(Error::numerical(format!(
            "FW curvature form not positive definite on block {i}: {curvature}"
        )));
    }
    let f_x = problem.objective(state);
    let mut backtracks = 0;
    loop {
        let gamma = (numerator / curvature).clamp(0.0, 1.0);
        let candidate = state[i].add_scaled(gamma, &d);
        let old = std::mem::replace(&mut state[i], candidate);
        let f_new = problem.objective(state);
        let step = state[i].sub(&old);
        let (ok, _slack) = verify_sufficient_descent(
            f_x,
            grad.inner(&step),
            0.5 * gamma * gamma * curvature,
            f_new,
        );
        if ok {
            prev[i] = old;
            return Ok(StepOutcome {
                step_value: gamma,
                certified: true,
                backtracks,
            });
        }
        state[i] = old;
        backtracks += 1;
        if backtracks > MAX_BACKTRACKS {
            return Err(Error::numerical(format!(
                "FW certificate failed after {MAX_BACKTRACKS} curvature doublings on block {i}"
            )));
        }
        curvature *= 2.0;
    }
}
