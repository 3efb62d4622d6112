//! Forward sweep over the horizon with a damped-Newton inner iteration at
//! each time step.
//!
//! At step `k` the stationarity system is built from the current moments and
//! value matrix, then driven toward `Abar xbar = bbar` by iterating
//!
//! ```text
//! g_0 = (Rbar + f'')^-1 f'(x)
//! g_j = (Rbar + f'')^-1 [f'(x) + Rbar g_{j-1}],   j = 1..depth
//! x  <- x - g_depth
//! ```
//!
//! where `f` is the squared residual and `Rbar = rho*I` damps the singular
//! directions of the rank-deficient Hessian. The recursion depth grows with
//! the outer iteration index, so late steps approach exact Newton steps on
//! the range of the Hessian. Each time step warm-starts from the previous
//! step's solution.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::model::{CostWeights, GainPair, OutputMap, PartitionedSystem};
use crate::moments::{
    assemble_upsilon_m, closed_loop, propagate_moments, riccati_forward_step, seed_moments,
    RiccatiState,
};
use crate::stationarity::{
    build_system, residual_gradient, residual_hessian, residual_norm, unvec_gains, GainVector,
    StationaritySystem,
};
use crate::{validate_problem, Error};

/// Which observation map the solver feeds the controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackMode {
    /// Controllers see their own state slice (`H = I`).
    #[default]
    State,
    /// Controllers see `y_i = H_i x_i` through the configured output maps.
    Output,
}

/// Tuning knobs of the forward sweep.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Horizon `N`; gains are produced for `k = 0..=N`.
    pub horizon: usize,
    /// Hard cap `I` on inner iterations per time step.
    pub inner_iterations: usize,
    /// Damping weight: `Rbar = rho * I` unless overridden.
    pub rho: f64,
    /// Seed of the forward value recursion, `P(0) = delta*I`.
    pub delta: f64,
    /// Inner iterate at `k = 0`; zero vector when absent.
    pub x0_init: Option<DVector<f64>>,
    /// Early-exit threshold on `||Abar x - bbar||`.
    pub inner_tol: f64,
    pub feedback_mode: FeedbackMode,
    /// Return the lowest-residual iterate seen rather than the last one.
    pub best_so_far_guard: bool,
    /// Upper bound on the recursion depth regardless of outer index.
    pub depth_cap: usize,
    /// Full-matrix damping weight replacing `rho * I`.
    pub rbar_override: Option<DMatrix<f64>>,
    /// Keep the value-matrix trajectory in the report.
    pub retain_riccati: bool,
}

impl SolverConfig {
    pub fn new(horizon: usize, inner_iterations: usize) -> Self {
        Self {
            horizon,
            inner_iterations: inner_iterations.max(1),
            rho: 1.0,
            delta: 1.0,
            x0_init: None,
            inner_tol: 1e-9,
            feedback_mode: FeedbackMode::State,
            best_so_far_guard: true,
            depth_cap: 50,
            rbar_override: None,
            retain_riccati: false,
        }
    }
}

/// Everything produced by one [`solve`] run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Gain schedule, `k = 0..=N`.
    pub gains: Vec<GainPair>,
    /// Stationarity residual `e(k) = ||Abar xbar - bbar||` of the accepted
    /// iterate at each step.
    pub residuals: Vec<f64>,
    /// Closed-loop state trajectory, `k = 0..=N+1`.
    pub states: Vec<DVector<f64>>,
    /// Value matrices `P(0)..P(N+1)` when retention is enabled.
    pub p_trace: Option<Vec<DMatrix<f64>>>,
    /// Evaluated cost of the schedule.
    pub cost: f64,
    /// Inner iterations spent per time step.
    pub iterations_used: Vec<usize>,
    pub warnings: Vec<String>,
}

fn damping_matrix(cfg: &SolverConfig, d: usize) -> Result<DMatrix<f64>, Error> {
    match &cfg.rbar_override {
        Some(rbar) => {
            if rbar.nrows() != d || rbar.ncols() != d {
                return Err(Error::Dimension(format!(
                    "damping override must be {d}x{d}, got {}x{}",
                    rbar.nrows(),
                    rbar.ncols()
                )));
            }
            Ok(rbar.clone())
        }
        None => {
            if cfg.rho <= 0.0 {
                return Err(Error::Validation(format!(
                    "damping weight rho must be positive, got {}",
                    cfg.rho
                )));
            }
            Ok(DMatrix::identity(d, d) * cfg.rho)
        }
    }
}

fn factor_damped_hessian(
    s: &StationaritySystem,
    rbar: &DMatrix<f64>,
) -> Result<Cholesky<f64, Dyn>, Error> {
    Cholesky::new(rbar + residual_hessian(s)).ok_or_else(|| {
        Error::Numerical("damped Hessian is not positive definite".into())
    })
}

fn recursion_step(
    chol: &Cholesky<f64, Dyn>,
    rbar: &DMatrix<f64>,
    grad: &DVector<f64>,
    depth: usize,
) -> DVector<f64> {
    let mut g = chol.solve(grad);
    for _ in 0..depth {
        g = chol.solve(&(grad + rbar * &g));
    }
    g
}

/// Runs the damped-Newton recursion to the given depth and returns the step
/// `g_depth`. The factorization of `rho*I + f''` is computed once per call.
pub fn g_recursion(
    s: &StationaritySystem,
    x: &GainVector,
    rho: f64,
    depth: usize,
) -> Result<DVector<f64>, Error> {
    if rho <= 0.0 {
        return Err(Error::Validation(format!(
            "damping weight rho must be positive, got {rho}"
        )));
    }
    let rbar = DMatrix::identity(s.bbar.len(), s.bbar.len()) * rho;
    let chol = factor_damped_hessian(s, &rbar)?;
    Ok(recursion_step(&chol, &rbar, &residual_gradient(s, x), depth))
}

/// Inner iteration at one time step: `x <- x - g_i(x)` with recursion depth
/// equal to the outer index (capped), early exit below `inner_tol`, and the
/// best-so-far guard. Returns the accepted iterate and the residual history
/// (initial residual first, one entry per completed update after it).
pub fn inner_solve(
    s: &StationaritySystem,
    x_start: &GainVector,
    cfg: &SolverConfig,
) -> Result<(GainVector, Vec<f64>), Error> {
    let d = s.bbar.len();
    if x_start.len() != d {
        return Err(Error::Dimension(format!(
            "warm start length {} does not match system size {d}",
            x_start.len()
        )));
    }
    let rbar = damping_matrix(cfg, d)?;
    let chol = factor_damped_hessian(s, &rbar)?;

    let mut x = x_start.clone();
    let mut history = vec![residual_norm(s, &x)];
    let mut best = (x.clone(), history[0]);
    for i in 0..cfg.inner_iterations {
        if *history.last().unwrap() < cfg.inner_tol {
            break;
        }
        let depth = i.min(cfg.depth_cap);
        let g = recursion_step(&chol, &rbar, &residual_gradient(s, &x), depth);
        x -= g;
        let e = residual_norm(s, &x);
        history.push(e);
        if e < best.1 {
            best = (x.clone(), e);
        }
    }
    if cfg.best_so_far_guard {
        Ok((best.0, history))
    } else {
        Ok((x, history))
    }
}

/// Full forward sweep: per step, assemble the gain-equation coefficients
/// from the current value matrix, solve the stationarity system warm-started
/// from the previous step, then advance moments, value matrix, and state
/// under the accepted gains. Deterministic for identical inputs.
pub fn solve(
    sys: &PartitionedSystem,
    cost: &CostWeights,
    hmap: &OutputMap,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SolveReport, Error> {
    let heff = match cfg.feedback_mode {
        FeedbackMode::State => OutputMap::identity(sys.n1, sys.n2),
        FeedbackMode::Output => hmap.clone(),
    };
    let report = validate_problem(sys, cost, &heff);
    if !report.passed() {
        return Err(Error::Validation(report.errors.join("; ")));
    }
    if x0.len() != sys.n() {
        return Err(Error::Dimension(format!(
            "initial state length {} does not match n = {}",
            x0.len(),
            sys.n()
        )));
    }
    let mut warnings = report.warnings;
    if cfg.delta != cost.delta {
        warnings.push(format!(
            "value seed delta {} differs from cost.delta {}; the solver seeds P(0) with {}",
            cfg.delta, cost.delta, cfg.delta
        ));
    }

    let d = sys.m1 * heff.p1() + sys.m2 * heff.p2();
    let mut xbar = match &cfg.x0_init {
        Some(init) => {
            if init.len() != d {
                return Err(Error::Dimension(format!(
                    "x0_init length {} does not match gain vector length {d}",
                    init.len()
                )));
            }
            init.clone()
        }
        None => DVector::zeros(d),
    };

    let mut moments = seed_moments(x0, sys.n1)?;
    let mut value = RiccatiState::seed(cfg.delta, sys.n());
    let mut state = x0.clone();

    let steps = cfg.horizon + 1;
    let mut gains = Vec::with_capacity(steps);
    let mut residuals = Vec::with_capacity(steps);
    let mut iterations_used = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps + 1);
    let mut p_trace = cfg.retain_riccati.then(Vec::new);
    states.push(state.clone());
    let mut warned_degenerate = false;

    for k in 0..steps {
        if let Some(trace) = p_trace.as_mut() {
            trace.push(value.p.clone());
        }
        let um = assemble_upsilon_m(&value, sys, cost);
        let system = build_system(&moments, &um, &heff)?;
        if !warned_degenerate && system.abar.amax() == 0.0 && system.bbar.amax() == 0.0 {
            warnings.push(format!(
                "degenerate stationarity system at k = {k} (zero moments); \
                 warm-start gains are returned unchanged from there on"
            ));
            warned_degenerate = true;
        }
        let (next_xbar, history) = inner_solve(&system, &xbar, cfg)?;
        xbar = next_xbar;
        let gain = unvec_gains(&xbar, &system.dims)?;
        residuals.push(residual_norm(&system, &xbar));
        iterations_used.push(history.len() - 1);

        moments = propagate_moments(&moments, &gain, sys, &heff)?;
        value = riccati_forward_step(&value, &gain, sys, cost, &heff)?;
        state = closed_loop(sys, &gain, &heff) * &state;
        states.push(state.clone());
        gains.push(gain);
    }
    if let Some(trace) = p_trace.as_mut() {
        trace.push(value.p.clone());
    }

    let cost_value = eval_cost(&gains, sys, cost, &heff, x0, cfg.horizon)?;
    Ok(SolveReport {
        gains,
        residuals,
        states,
        p_trace,
        cost: cost_value,
        iterations_used,
        warnings,
    })
}

/// Evaluates the cost of a gain schedule two ways: as the quadratic sum
/// along the simulated trajectory and as the trace form over the propagated
/// moments. The two are algebraically identical; disagreement beyond 1e-9
/// relative is reported as a numerical error. Returns the trajectory form.
pub fn eval_cost(
    gains: &[GainPair],
    sys: &PartitionedSystem,
    cost: &CostWeights,
    hmap: &OutputMap,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<f64, Error> {
    if gains.len() != horizon + 1 {
        return Err(Error::Dimension(format!(
            "gain schedule has {} entries, expected horizon + 1 = {}",
            gains.len(),
            horizon + 1
        )));
    }
    if x0.len() != sys.n() {
        return Err(Error::Dimension(format!(
            "initial state length {} does not match n = {}",
            x0.len(),
            sys.n()
        )));
    }
    let h = hmap.assembled();

    let mut state = x0.clone();
    let mut quadratic = 0.0;
    for gain in gains {
        let u = crate::model::assemble_gain(gain) * &h * &state;
        quadratic += (&cost.q * &state).dot(&state) + (&cost.r * &u).dot(&u);
        state = &sys.a * &state + &sys.b * &u;
    }
    quadratic += (&cost.p_terminal * &state).dot(&state);

    let mut moments = seed_moments(x0, sys.n1)?;
    let mut trace_form = 0.0;
    for gain in gains {
        let kh = crate::model::assemble_gain(gain) * &h;
        let weight = &cost.q + kh.transpose() * &cost.r * &kh;
        trace_form += (weight * moments.assembled()).trace();
        moments = propagate_moments(&moments, gain, sys, hmap)?;
    }
    trace_form += (&cost.p_terminal * moments.assembled()).trace();

    // the routes are algebraically identical but accumulate rounding
    // separately; allow 1e-9 relative per accumulated step
    let scale = quadratic.abs().max(trace_form.abs()).max(f64::MIN_POSITIVE);
    let tol = 1e-9 * scale * (horizon + 1) as f64;
    if (quadratic - trace_form).abs() > tol {
        return Err(Error::Numerical(format!(
            "trajectory cost {quadratic} and trace-form cost {trace_form} disagree"
        )));
    }
    Ok(quadratic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::assemble_gain;
    use crate::stationarity::GainDims;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_system(abar: f64, bbar: f64) -> StationaritySystem {
        StationaritySystem {
            abar: dmatrix![abar],
            bbar: dvector![bbar],
            dims: GainDims { m1: 1, p1: 1, m2: 1, p2: 1 },
        }
    }

    fn sec4_problem() -> (PartitionedSystem, CostWeights, OutputMap, DVector<f64>) {
        let sys = crate::model::tests::paper_sec4_system();
        let cost = CostWeights::new(
            DMatrix::identity(4, 4),
            DMatrix::identity(4, 4) * 0.5,
            DMatrix::identity(4, 4) * 2.0,
            2.0,
        )
        .unwrap();
        (sys, cost, OutputMap::identity(2, 2), dvector![5.0, 3.0, 2.0, 3.0])
    }

    #[test]
    fn g_recursion_hand_values() {
        let s = scalar_system(1.0, 2.0);
        let g0 = g_recursion(&s, &dvector![0.0], 1.0, 0).unwrap();
        assert_relative_eq!(g0[0], -4.0 / 3.0, max_relative = 1e-15);
        let g1 = g_recursion(&s, &dvector![0.0], 1.0, 1).unwrap();
        assert_relative_eq!(g1[0], -16.0 / 9.0, max_relative = 1e-15);
    }

    #[test]
    fn g_recursion_zero_at_solution() {
        let s = scalar_system(1.0, 2.0);
        for depth in [0, 1, 5, 40] {
            let g = g_recursion(&s, &dvector![2.0], 1.0, depth).unwrap();
            assert_eq!(g[0], 0.0);
        }
    }

    #[test]
    fn g_recursion_limit_solves_newton_system() {
        // full-rank case: deep recursion approaches f'' g = f'
        let s = StationaritySystem {
            abar: dmatrix![1.0, 0.0; 0.0, 2.0],
            bbar: dvector![1.0, 1.0],
            dims: GainDims { m1: 1, p1: 1, m2: 1, p2: 1 },
        };
        let x = dvector![0.3, -0.7];
        let g = g_recursion(&s, &x, 1.0, 400).unwrap();
        let lhs = residual_hessian(&s) * &g;
        let rhs = residual_gradient(&s, &x);
        assert!((lhs - rhs).amax() <= 1e-8);
    }

    #[test]
    fn g_recursion_rejects_nonpositive_rho() {
        let s = scalar_system(1.0, 2.0);
        assert!(g_recursion(&s, &dvector![0.0], 0.0, 0).is_err());
    }

    #[test]
    fn inner_solve_hand_iterates() {
        let s = scalar_system(1.0, 2.0);
        let mut cfg = SolverConfig::new(0, 2);
        cfg.rho = 1.0;
        let (x, history) = inner_solve(&s, &dvector![0.0], &cfg).unwrap();
        assert_relative_eq!(x[0], 52.0 / 27.0, max_relative = 1e-14);
        assert_eq!(history.len(), 3);
        assert_relative_eq!(history[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(history[1], 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(history[2], 2.0 / 27.0, max_relative = 1e-14);
    }

    #[test]
    fn inner_solve_fixed_point_is_untouched() {
        let s = scalar_system(1.0, 2.0);
        let cfg = SolverConfig::new(0, 30);
        let (x, history) = inner_solve(&s, &dvector![2.0], &cfg).unwrap();
        assert_eq!(x[0], 2.0);
        assert_eq!(history.len(), 1); // early exit before any step
    }

    #[test]
    fn inner_solve_degenerate_system_returns_start() {
        let s = scalar_system(0.0, 0.0);
        let cfg = SolverConfig::new(0, 30);
        let (x, _) = inner_solve(&s, &dvector![7.5], &cfg).unwrap();
        assert_eq!(x[0], 7.5);
    }

    #[test]
    fn inner_solve_never_returns_worse_than_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let root = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let abar = &root * root.transpose();
            let target = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let s = StationaritySystem {
                bbar: &abar * target,
                abar,
                dims: GainDims { m1: 2, p1: 1, m2: 2, p2: 1 },
            };
            let start = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let mut cfg = SolverConfig::new(0, 8);
            cfg.rho = 0.5;
            let (x, history) = inner_solve(&s, &start, &cfg).unwrap();
            assert!(residual_norm(&s, &x) <= history[0].max(cfg.inner_tol));
        }
    }

    #[test]
    fn solve_dead_plant_keeps_zero_gains() {
        let (_, cost, hmap, x0) = sec4_problem();
        let sys = PartitionedSystem::new(
            DMatrix::zeros(4, 4),
            crate::model::tests::paper_sec4_system().b,
            2,
            2,
            2,
            2,
        )
        .unwrap();
        let cfg = SolverConfig::new(10, 20);
        let report = solve(&sys, &cost, &hmap, &x0, &cfg).unwrap();
        for gain in &report.gains {
            assert_eq!(assemble_gain(gain), DMatrix::zeros(4, 4));
        }
        // dead plant: state is zero from k = 1 on, so the moments degenerate
        assert!(report.warnings.iter().any(|w| w.contains("degenerate")));
    }

    #[test]
    fn solve_zero_initial_state_warns_and_returns_warm_start() {
        let (sys, cost, hmap, _) = sec4_problem();
        let cfg = SolverConfig::new(5, 10);
        let report = solve(&sys, &cost, &hmap, &dvector![0.0, 0.0, 0.0, 0.0], &cfg).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("k = 0")));
        for gain in &report.gains {
            assert_eq!(assemble_gain(gain), DMatrix::zeros(4, 4));
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let (sys, cost, hmap, x0) = sec4_problem();
        let mut cfg = SolverConfig::new(20, 30);
        cfg.rho = 1e-3;
        let a = solve(&sys, &cost, &hmap, &x0, &cfg).unwrap();
        let b = solve(&sys, &cost, &hmap, &x0, &cfg).unwrap();
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        for (ga, gb) in a.gains.iter().zip(&b.gains) {
            assert_eq!(ga, gb);
        }
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn solve_reported_states_match_reported_gains() {
        let (sys, cost, hmap, x0) = sec4_problem();
        let mut cfg = SolverConfig::new(15, 30);
        cfg.rho = 1e-3;
        let report = solve(&sys, &cost, &hmap, &x0, &cfg).unwrap();
        let mut state = x0.clone();
        for (k, gain) in report.gains.iter().enumerate() {
            state = closed_loop(&sys, gain, &hmap) * &state;
            assert_eq!(state, report.states[k + 1], "trajectory mismatch at k = {k}");
        }
    }

    #[test]
    fn solve_residuals_within_inner_budget() {
        let (sys, cost, hmap, x0) = sec4_problem();
        let mut cfg = SolverConfig::new(30, 60);
        cfg.rho = 1e-3;
        let report = solve(&sys, &cost, &hmap, &x0, &cfg).unwrap();
        assert_eq!(report.residuals.len(), 31);
        assert!(report.residuals.iter().all(|&e| e >= 0.0));
        assert!(report.iterations_used.iter().all(|&n| n <= 60));
    }

    #[test]
    fn output_mode_with_identity_maps_equals_state_mode() {
        let (sys, cost, hmap, x0) = sec4_problem();
        let mut cfg = SolverConfig::new(12, 40);
        cfg.rho = 1e-3;
        let state_report = solve(&sys, &cost, &hmap, &x0, &cfg).unwrap();
        cfg.feedback_mode = FeedbackMode::Output;
        let output_report = solve(&sys, &cost, &OutputMap::identity(2, 2), &x0, &cfg).unwrap();
        for (a, b) in state_report.gains.iter().zip(&output_report.gains) {
            assert!((&a.k1 - &b.k1).amax() <= 1e-10);
            assert!((&a.k2 - &b.k2).amax() <= 1e-10);
        }
        assert_relative_eq!(state_report.cost, output_report.cost, max_relative = 1e-12);
    }

    #[test]
    fn solve_with_rectangular_output_maps() {
        // each controller sees a 1-dimensional projection of its slice
        let (sys, cost, _, x0) = sec4_problem();
        let hmap = OutputMap::new(dmatrix![1.0, 0.5], dmatrix![0.5, 1.0]);
        let mut cfg = SolverConfig::new(10, 40);
        cfg.rho = 1e-3;
        cfg.feedback_mode = FeedbackMode::Output;
        let report = solve(&sys, &cost, &hmap, &x0, &cfg).unwrap();
        assert_eq!(report.gains[0].k1.shape(), (2, 1));
        assert_eq!(report.gains[0].k2.shape(), (2, 1));
        assert_eq!(report.residuals.len(), 11);
    }

    #[test]
    fn eval_cost_one_step_dead_plant() {
        let sys = PartitionedSystem::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            1,
            1,
            1,
            1,
        )
        .unwrap();
        let cost = CostWeights::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            dmatrix![3.0, 0.0; 0.0, 4.0],
            1.0,
        )
        .unwrap();
        let gains = [GainPair::zeros(1, 1, 1, 1)];
        let j = eval_cost(
            &gains,
            &sys,
            &cost,
            &OutputMap::identity(1, 1),
            &dvector![1.0, 1.0],
            0,
        )
        .unwrap();
        assert_relative_eq!(j, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn eval_cost_zero_gain_is_open_loop_sum() {
        let (sys, cost, hmap, x0) = sec4_problem();
        let gains: Vec<GainPair> = (0..4).map(|_| GainPair::zeros(2, 2, 2, 2)).collect();
        let j = eval_cost(&gains, &sys, &cost, &hmap, &x0, 3).unwrap();
        let mut state = x0.clone();
        let mut expected = 0.0;
        for _ in 0..4 {
            expected += (&cost.q * &state).dot(&state);
            state = &sys.a * &state;
        }
        expected += (&cost.p_terminal * &state).dot(&state);
        assert_relative_eq!(j, expected, max_relative = 1e-12);
    }

    #[test]
    fn eval_cost_rejects_wrong_schedule_length() {
        let (sys, cost, hmap, x0) = sec4_problem();
        let gains = [GainPair::zeros(2, 2, 2, 2)];
        assert!(eval_cost(&gains, &sys, &cost, &hmap, &x0, 3).is_err());
    }

    #[test]
    fn eval_cost_trace_and_trajectory_forms_agree_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let rnd = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
                DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
            };
            let sys =
                PartitionedSystem::new(rnd(&mut rng, 4, 4), rnd(&mut rng, 4, 4), 2, 2, 2, 2)
                    .unwrap();
            let mq = rnd(&mut rng, 4, 4);
            let mr = rnd(&mut rng, 4, 4);
            let cost = CostWeights::new(
                &mq * mq.transpose(),
                &mr * mr.transpose() + DMatrix::identity(4, 4) * 0.1,
                DMatrix::identity(4, 4),
                1.0,
            )
            .unwrap();
            let hmap = OutputMap::identity(2, 2);
            let x0 = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let gains: Vec<GainPair> = (0..5)
                .map(|_| GainPair::new(rnd(&mut rng, 2, 2) * 0.4, rnd(&mut rng, 2, 2) * 0.4))
                .collect();
            let j = eval_cost(&gains, &sys, &cost, &hmap, &x0, 4).unwrap();
            // independent trace-form evaluation over the propagated moments
            let mut moments = seed_moments(&x0, 2).unwrap();
            let mut trace_form = 0.0;
            for gain in &gains {
                let k = assemble_gain(gain);
                trace_form += ((&cost.q + k.transpose() * &cost.r * &k)
                    * moments.assembled())
                .trace();
                moments = propagate_moments(&moments, gain, &sys, &hmap).unwrap();
            }
            trace_form += (&cost.p_terminal * moments.assembled()).trace();
            assert!((j - trace_form).abs() <= 1e-9 * j.abs().max(trace_form.abs()));
        }
    }

    #[test]
    fn scalar_damping_and_equivalent_matrix_override_agree() {
        let (sys, cost, hmap, x0) = sec4_problem();
        let mut cfg = SolverConfig::new(8, 25);
        cfg.rho = 1e-2;
        let scalar_run = solve(&sys, &cost, &hmap, &x0, &cfg).unwrap();
        cfg.rbar_override = Some(DMatrix::identity(8, 8) * 1e-2);
        let matrix_run = solve(&sys, &cost, &hmap, &x0, &cfg).unwrap();
        for (a, b) in scalar_run.gains.iter().zip(&matrix_run.gains) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn retained_value_trace_starts_at_the_seed() {
        let (sys, cost, hmap, x0) = sec4_problem();
        let mut cfg = SolverConfig::new(6, 10);
        cfg.delta = 2.0;
        cfg.retain_riccati = true;
        let report = solve(&sys, &cost, &hmap, &x0, &cfg).unwrap();
        let trace = report.p_trace.as_ref().unwrap();
        assert_eq!(trace.len(), 8); // P(0)..P(N+1)
        assert_eq!(trace[0], DMatrix::identity(4, 4) * 2.0);
        // each entry reproduces one forward value step under the gains
        for (k, gain) in report.gains.iter().enumerate() {
            let next = riccati_forward_step(
                &RiccatiState { p: trace[k].clone() },
                gain,
                &sys,
                &cost,
                &hmap,
            )
            .unwrap();
            assert_eq!(next.p, trace[k + 1]);
        }
    }

    #[test]
    fn solve_rejects_invalid_problem() {
        let (sys, _, hmap, x0) = sec4_problem();
        let bad_cost = CostWeights::new(
            -DMatrix::identity(4, 4),
            DMatrix::identity(4, 4),
            DMatrix::identity(4, 4),
            1.0,
        )
        .unwrap();
        let err = solve(&sys, &bad_cost, &hmap, &x0, &SolverConfig::new(3, 5)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn solve_rejects_wrong_initial_state_length() {
        let (sys, cost, hmap, _) = sec4_problem();
        let err =
            solve(&sys, &cost, &hmap, &dvector![1.0, 2.0], &SolverConfig::new(3, 5)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }
}
