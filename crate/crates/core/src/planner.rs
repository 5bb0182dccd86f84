//! Finite-horizon trajectory optimisation with risk-field costs.
//!
//! Single shooting over the input sequence: states follow from forward
//! simulation, input bounds are enforced by projection, and state bounds by a
//! quadratic hinge penalty followed by a forward feasibility repair. The
//! optimiser is a projected BFGS method with an Armijo line search along the
//! projection arc.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{poly_eval, poly_slope, FieldSample, RiskFieldSet};
use crate::vehicle::{rollout, step, Bounds, EgoInput, EgoState, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    /// Stage state weights `[x, y, θ, v, δ]`.
    pub state: [f64; 5],
    /// Input weights `[a, ω]`.
    pub input: [f64; 2],
    /// Terminal state weights.
    pub terminal: [f64; 5],
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            state: [0.0, 0.0, 0.0, 0.001, 0.0],
            input: [0.1, 10.0],
            terminal: [0.2, 0.02, 0.0, 0.01, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Stop once the projected gradient infinity norm falls below this.
    pub tolerance: f64,
    /// Admissible state-bound excess on returned trajectories.
    pub constraint_tolerance: f64,
    /// Weight of the quadratic state-bound hinge.
    pub penalty_weight: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-4,
            constraint_tolerance: 1e-6,
            penalty_weight: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmpcConfig {
    pub horizon: usize,
    pub t_s: f64,
    pub weights: Weights,
    pub bounds: Bounds,
    pub vehicle: VehicleParams,
    pub solver: SolverSettings,
    /// Scale applied to the object risk fields.
    pub object_weight: f64,
    /// Scale applied to the marking risk fields.
    pub marking_weight: f64,
    /// Distance ahead of the rear axle, along the heading, at which the
    /// risk fields are evaluated.
    pub field_offset: f64,
    /// Reference velocity v̄, m/s.
    pub v_ref: f64,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        Self {
            horizon: 23,
            t_s: 0.15,
            weights: Weights::default(),
            bounds: Bounds::default(),
            vehicle: VehicleParams::default(),
            solver: SolverSettings::default(),
            object_weight: 10.0,
            marking_weight: 10.0,
            field_offset: 0.0,
            v_ref: 10.0,
        }
    }
}

impl NmpcConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let nonneg = w.state.iter().chain(&w.input).chain(&w.terminal).all(|&x| x >= 0.0);
        let s = &self.solver;
        if self.horizon < 2 {
            return Err(Error::Input(format!("horizon must be ≥ 2, got {}", self.horizon)));
        }
        if !(self.t_s > 0.0) {
            return Err(Error::Input("sample time must be positive".into()));
        }
        if !nonneg || !(self.object_weight >= 0.0 && self.marking_weight >= 0.0) {
            return Err(Error::Input("weights must be non-negative".into()));
        }
        if !(s.tolerance > 0.0 && s.constraint_tolerance > 0.0 && s.penalty_weight >= 0.0) {
            return Err(Error::Input("solver tolerances must be positive".into()));
        }
        if !self.bounds.is_consistent() {
            return Err(Error::Input("inconsistent bounds".into()));
        }
        Ok(())
    }
}

/// Reference states `r_0..=r_N` along a lane centreline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub states: Vec<EgoState>,
}

impl Reference {
    /// Constant reference, mostly useful for tests.
    pub fn constant(state: EgoState, horizon: usize) -> Self {
        Self {
            states: vec![state; horizon + 1],
        }
    }

    /// Places `r_k` on the centreline `y = p(x)` at arc length `k·t_s·v̄`
    /// beyond the point abeam `from_x`, heading along the lane tangent.
    pub fn along_centerline(center: &[f64; 4], from_x: f64, direction: f64, config: &NmpcConfig) -> Self {
        let dir = if direction < 0.0 { -1.0 } else { 1.0 };
        let step = config.t_s * config.v_ref;
        let h = 0.01 * dir;
        let mut x = from_x;
        let mut travelled = 0.0;
        let mut states = Vec::with_capacity(config.horizon + 1);
        for k in 0..=config.horizon {
            let target = k as f64 * step;
            while travelled < target {
                let slope = poly_slope(center, x + 0.5 * h);
                let ds = h.abs() * (1.0 + slope * slope).sqrt();
                if travelled + ds > target {
                    x += h * (target - travelled) / ds;
                    travelled = target;
                } else {
                    x += h;
                    travelled += ds;
                }
            }
            let slope = poly_slope(center, x);
            let theta = if dir > 0.0 { slope.atan() } else { wrap_angle(slope.atan() + PI) };
            states.push(EgoState {
                x,
                y: poly_eval(center, x),
                theta,
                v: config.v_ref,
                delta: 0.0,
            });
        }
        Self { states }
    }

    pub fn goal(&self) -> &EgoState {
        self.states.last().expect("reference is never empty")
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

fn error(s: &EgoState, r: &EgoState) -> [f64; 5] {
    [s.x - r.x, s.y - r.y, wrap_angle(s.theta - r.theta), s.v - r.v, s.delta - r.delta]
}

fn weighted_sq(w: &[f64], e: &[f64]) -> f64 {
    w.iter().zip(e).map(|(w, e)| w * e * e).sum()
}

/// Stage cost at step `k`: weighted state error, weighted input and the risk
/// fields evaluated at `(x_k, y_k)`, shifted by the configured field offset.
pub fn stage_cost(state: &EgoState, input: &EgoInput, r: &EgoState, fields: &RiskFieldSet, k: usize, config: &NmpcConfig) -> f64 {
    let w = &config.weights;
    weighted_sq(&w.state, &error(state, r))
        + weighted_sq(&w.input, &[input.a, input.omega])
        + field_sample(state, fields, k, config).value
}

fn field_sample(s: &EgoState, fields: &RiskFieldSet, k: usize, config: &NmpcConfig) -> FieldSample {
    let o = config.field_offset;
    let (sin, cos) = s.theta.sin_cos();
    let (x, y) = if o == 0.0 { (s.x, s.y) } else { (s.x + o * cos, s.y + o * sin) };
    fields.weighted_sample(k, x, y, config.object_weight, config.marking_weight)
}

pub fn terminal_cost(state: &EgoState, r: &EgoState, config: &NmpcConfig) -> f64 {
    weighted_sq(&config.weights.terminal, &error(state, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// The line search found no further decrease before convergence.
    Stalled,
    InfeasibleStart,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::Stalled => "stalled",
            SolveStatus::InfeasibleStart => "infeasible-start",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<EgoState>,
    pub inputs: Vec<EgoInput>,
    /// Objective of the returned trajectory.
    pub cost: f64,
    /// Objective of the (repaired) initial guess.
    pub initial_cost: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Largest state or input bound excess.
    pub max_violation: f64,
}

/// The optimal-control problem for one planning cycle.
pub struct Problem<'a> {
    pub initial: EgoState,
    pub reference: &'a Reference,
    pub fields: &'a RiskFieldSet,
    pub config: &'a NmpcConfig,
}

impl Problem<'_> {
    pub fn dimension(&self) -> usize {
        2 * self.config.horizon
    }

    fn inputs(z: &[f64]) -> Vec<EgoInput> {
        z.chunks_exact(2).map(|c| EgoInput { a: c[0], omega: c[1] }).collect()
    }

    pub fn rollout(&self, z: &[f64]) -> Vec<EgoState> {
        rollout(&self.initial, &Self::inputs(z), &self.config.vehicle, self.config.t_s)
    }

    fn penalty(&self, s: &EgoState) -> (f64, f64, f64) {
        let b = &self.config.bounds;
        let w = self.config.solver.penalty_weight;
        let hinge = |x: f64, lo: f64, hi: f64| {
            if x > hi {
                x - hi
            } else if x < lo {
                x - lo
            } else {
                0.0
            }
        };
        let hv = hinge(s.v, b.state_lower[3], b.state_upper[3]);
        let hd = hinge(s.delta, b.state_lower[4], b.state_upper[4]);
        (w * (hv * hv + hd * hd), 2.0 * w * hv, 2.0 * w * hd)
    }

    /// Total objective for input vector `z = [a_0, ω_0, a_1, ω_1, …]`.
    pub fn cost(&self, z: &[f64]) -> f64 {
        let states = self.rollout(z);
        self.cost_of(z, &states)
    }

    fn cost_of(&self, z: &[f64], states: &[EgoState]) -> f64 {
        let cfg = self.config;
        let n = cfg.horizon;
        let w = &cfg.weights;
        let mut j = 0.0;
        for c in z.chunks_exact(2) {
            j += weighted_sq(&w.input, c);
        }
        for (k, s) in states.iter().enumerate().skip(1) {
            let r = &self.reference.states[k];
            let e = error(s, r);
            j += if k < n { weighted_sq(&w.state, &e) } else { weighted_sq(&w.terminal, &e) };
            j += field_sample(s, self.fields, k, cfg).value;
            j += self.penalty(s).0;
        }
        j
    }

    /// Objective and its gradient by the discrete adjoint.
    pub fn cost_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let cfg = self.config;
        let n = cfg.horizon;
        let t = cfg.t_s;
        let l = cfg.vehicle.wheelbase;
        let w = &cfg.weights;
        let states = self.rollout(z);
        let mut j = 0.0;
        let mut grad = vec![0.0; z.len()];
        for (i, c) in z.chunks_exact(2).enumerate() {
            j += weighted_sq(&w.input, c);
            grad[2 * i] = 2.0 * w.input[0] * c[0];
            grad[2 * i + 1] = 2.0 * w.input[1] * c[1];
        }
        let mut lambda = [0.0; 5];
        for k in (1..=n).rev() {
            let s = &states[k];
            let e = error(s, &self.reference.states[k]);
            let wk = if k < n { &w.state } else { &w.terminal };
            j += weighted_sq(wk, &e);
            let f = field_sample(s, self.fields, k, cfg);
            j += f.value;
            let (p, dpv, dpd) = self.penalty(s);
            j += p;
            let mut local = [0.0; 5];
            for i in 0..5 {
                local[i] = 2.0 * wk[i] * e[i];
            }
            local[0] += f.dx;
            local[1] += f.dy;
            if cfg.field_offset != 0.0 {
                let (sin, cos) = s.theta.sin_cos();
                local[2] += cfg.field_offset * (cos * f.dy - sin * f.dx);
            }
            local[3] += dpv;
            local[4] += dpd;
            // λ_k = ∇ℓ_k + A_kᵀ λ_{k+1}
            let next = lambda;
            lambda = local;
            if k < n {
                let (sin, cos) = s.theta.sin_cos();
                let (tan, cosd) = (s.delta.tan(), s.delta.cos());
                lambda[0] += next[0];
                lambda[1] += next[1];
                lambda[2] += next[2] + t * s.v * (cos * next[1] - sin * next[0]);
                lambda[3] += next[3] + t * (cos * next[0] + sin * next[1] + tan / l * next[2]);
                lambda[4] += next[4] + t * s.v / (l * cosd * cosd) * next[2];
            }
            // inputs u_{k-1} enter x_k only through v and δ
            grad[2 * (k - 1)] += t * lambda[3];
            grad[2 * (k - 1) + 1] += t * lambda[4];
        }
        (j, grad)
    }

    /// Clamps each input so that the following state stays within its
    /// velocity and steering bounds, walking forward along the horizon.
    pub fn repair(&self, z: &mut [f64]) {
        self.repair_with_bounds(z);
    }

    /// [`Self::repair`], also returning the per-variable interval each input
    /// was clamped to.
    fn repair_with_bounds(&self, z: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let cfg = self.config;
        let b = &cfg.bounds;
        let t = cfg.t_s;
        let mut lo = vec![0.0; z.len()];
        let mut hi = vec![0.0; z.len()];
        let mut s = self.initial;
        for k in 0..cfg.horizon {
            let (ia, iw) = (2 * k, 2 * k + 1);
            lo[ia] = b.input_lower[0].max((b.state_lower[3] - s.v) / t).min(b.input_upper[0]);
            hi[ia] = b.input_upper[0].min((b.state_upper[3] - s.v) / t).max(lo[ia]);
            lo[iw] = b.input_lower[1].max((b.state_lower[4] - s.delta) / t).min(b.input_upper[1]);
            hi[iw] = b.input_upper[1].min((b.state_upper[4] - s.delta) / t).max(lo[iw]);
            z[ia] = z[ia].clamp(lo[ia], hi[ia]);
            z[iw] = z[iw].clamp(lo[iw], hi[iw]);
            let u = EgoInput { a: z[ia], omega: z[iw] };
            s = step(&s, &u, &cfg.vehicle, t);
        }
        (lo, hi)
    }
}

/// Infinity norm of `P(z − g) − z` over the box `[lo, hi]`.
fn projected_gradient_norm(z: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..z.len())
        .map(|i| ((z[i] - g[i]).clamp(lo[i], hi[i]) - z[i]).abs())
        .fold(0.0, f64::max)
}

fn max_violation(config: &NmpcConfig, states: &[EgoState], inputs: &[EgoInput]) -> f64 {
    let b = &config.bounds;
    let s = states.iter().skip(1).map(|s| b.state_violation(s)).fold(0.0, f64::max);
    let u = inputs
        .iter()
        .flat_map(|u| b.check_input(u))
        .map(|v| v.amount())
        .fold(0.0, f64::max);
    s.max(u)
}

fn zero_rollout(initial: &EgoState, config: &NmpcConfig) -> (Vec<EgoState>, Vec<EgoInput>) {
    let inputs = vec![EgoInput::default(); config.horizon];
    (rollout(initial, &inputs, &config.vehicle, config.t_s), inputs)
}

/// Solves one planning cycle from `initial`, starting at the inputs of
/// `warm_start` when given and at zero inputs otherwise.
pub fn solve(
    initial: &EgoState,
    reference: &Reference,
    fields: &RiskFieldSet,
    config: &NmpcConfig,
    warm_start: Option<&Trajectory>,
) -> Result<Trajectory> {
    config.validate()?;
    let n = config.horizon;
    if reference.states.len() != n + 1 {
        return Err(Error::Input(format!(
            "reference has {} states, horizon needs {}",
            reference.states.len(),
            n + 1
        )));
    }
    let b = &config.bounds;
    let tol = config.solver.constraint_tolerance;
    if initial.to_array().iter().any(|x| !x.is_finite()) || b.state_violation(initial) > tol {
        let (states, inputs) = zero_rollout(initial, config);
        return Ok(Trajectory {
            max_violation: max_violation(config, &states, &inputs),
            states,
            inputs,
            cost: f64::INFINITY,
            initial_cost: f64::INFINITY,
            status: SolveStatus::InfeasibleStart,
            iterations: 0,
        });
    }
    let problem = Problem {
        initial: b.clamp_state(*initial),
        reference,
        fields,
        config,
    };

    let mut z0: Vec<f64> = match warm_start {
        Some(w) if w.inputs.len() == n => w.inputs.iter().flat_map(|u| [u.a, u.omega]).collect(),
        _ => vec![0.0; 2 * n],
    };
    problem.repair(&mut z0);
    let initial_cost = problem.cost(&z0);

    let (z, status, iterations) = minimize(&problem, z0.clone());

    let mut z = z;
    problem.repair(&mut z);
    let mut cost = problem.cost(&z);
    let mut chosen = z;
    if !(cost <= initial_cost) {
        chosen = z0;
        cost = initial_cost;
    }
    let inputs = Problem::inputs(&chosen);
    let states = problem.rollout(&chosen);
    Ok(Trajectory {
        max_violation: max_violation(config, &states, &inputs),
        states,
        inputs,
        cost,
        initial_cost,
        status,
        iterations,
    })
}

/// Projected Newton iteration on the free variables. The Hessian is the
/// central difference of the adjoint gradient, with eigenvalues floored so
/// every step is a descent direction. Iterates stay feasible through the
/// forward repair, which doubles as the projection along the search arc.
fn minimize(problem: &Problem<'_>, mut z: Vec<f64>) -> (Vec<f64>, SolveStatus, usize) {
    let settings = &problem.config.solver;
    let dim = z.len();
    let (mut lo, mut hi) = problem.repair_with_bounds(&mut z);
    let (mut f, mut g) = problem.cost_and_gradient(&z);
    for iter in 0..settings.max_iterations {
        if projected_gradient_norm(&z, &g, &lo, &hi) <= settings.tolerance {
            return (z, SolveStatus::Converged, iter);
        }
        let eps = 1e-10;
        let free: Vec<usize> = (0..dim)
            .filter(|&i| !((z[i] <= lo[i] + eps && g[i] > 0.0) || (z[i] >= hi[i] - eps && g[i] < 0.0)))
            .collect();
        let mut d = vec![0.0; dim];
        let mut escape = None;
        if !free.is_empty() {
            let h = reduced_hessian(problem, &z, &free);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
            let (step, negative) = newton_step(h, &gf);
            for (j, &i) in free.iter().enumerate() {
                d[i] = step[j];
            }
            escape = negative.map(|(lambda, q)| {
                let mut e = d.clone();
                for (j, &i) in free.iter().enumerate() {
                    e[i] += q[j];
                }
                (e, lambda)
            });
        }
        let mut accepted = None;
        if let Some((e, lambda)) = &escape {
            accepted = line_search(problem, &z, f, &g, e, *lambda);
        }
        if accepted.is_none() {
            accepted = line_search(problem, &z, f, &g, &d, 0.0);
        }
        if accepted.is_none() {
            let steepest: Vec<f64> = (0..dim).map(|i| if free.contains(&i) { -g[i] } else { 0.0 }).collect();
            accepted = line_search(problem, &z, f, &g, &steepest, 0.0);
        }
        let Some((z_new, f_new, bounds)) = accepted else {
            return (z, SolveStatus::Stalled, iter);
        };
        z = z_new;
        f = f_new;
        g = problem.cost_and_gradient(&z).1;
        (lo, hi) = bounds;
    }
    let status = if projected_gradient_norm(&z, &g, &lo, &hi) <= settings.tolerance {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIterations
    };
    (z, status, settings.max_iterations)
}

fn reduced_hessian(problem: &Problem<'_>, z: &[f64], free: &[usize]) -> DMatrix<f64> {
    const H: f64 = 1e-5;
    let n = free.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut probe = z.to_vec();
    for (c, &i) in free.iter().enumerate() {
        probe[i] = z[i] + H;
        let gp = problem.cost_and_gradient(&probe).1;
        probe[i] = z[i] - H;
        let gm = problem.cost_and_gradient(&probe).1;
        probe[i] = z[i];
        for (r, &k) in free.iter().enumerate() {
            m[(r, c)] = (gp[k] - gm[k]) / (2.0 * H);
        }
    }
    (&m + m.transpose()) * 0.5
}

/// `−H⁻¹ g` with the spectrum of `H` floored to keep it positive definite,
/// plus the unit eigenvector of the most negative eigenvalue, oriented
/// downhill, when the curvature is clearly negative.
fn newton_step(h: DMatrix<f64>, g: &DVector<f64>) -> (DVector<f64>, Option<(f64, DVector<f64>)>) {
    let eig = SymmetricEigen::new(h);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let floor = (top * 1e-8).max(1e-8);
    let q = &eig.eigenvectors;
    let mut coeff = q.transpose() * g;
    for (c, &l) in coeff.iter_mut().zip(eig.eigenvalues.iter()) {
        *c /= l.abs().max(floor);
    }
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let negative = (lmin < -1e-6 * top.max(1.0)).then(|| {
        let mut v = q.column(imin).clone_owned();
        let slope = v.dot(g);
        // orthogonal to the gradient: orient by the largest component
        let flip = if slope.abs() > 1e-12 * g.norm() {
            slope > 0.0
        } else {
            v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0) < 0.0
        };
        if flip {
            v = -v;
        }
        (lmin, v)
    });
    (-(q * coeff), negative)
}

type Step = (Vec<f64>, f64, (Vec<f64>, Vec<f64>));

/// Armijo backtracking along the repaired arc `R(z + α d)`. A negative
/// `curvature` (`dᵀHd` of a negative-curvature component) adds its
/// second-order decrease to the sufficient-decrease model.
fn line_search(problem: &Problem<'_>, z: &[f64], f: f64, g: &[f64], d: &[f64], curvature: f64) -> Option<Step> {
    const C1: f64 = 1e-4;
    let mut alpha = 1.0;
    for _ in 0..40 {
        let mut trial: Vec<f64> = z.iter().zip(d).map(|(x, d)| x + alpha * d).collect();
        let bounds = problem.repair_with_bounds(&mut trial);
        let decrease: f64 = g.iter().zip(trial.iter().zip(z)).map(|(g, (t, x))| g * (t - x)).sum::<f64>()
            + 0.5 * alpha * alpha * curvature.min(0.0);
        if decrease < 0.0 {
            let ft = problem.cost(&trial);
            if ft <= f + C1 * decrease {
                return Some((trial, ft, bounds));
            }
        } else if trial == z {
            return None;
        }
        alpha *= 0.5;
    }
    None
}

/// Shifts the inputs one step forward, duplicating the last, and re-rolls
/// the states from the previous trajectory's second state.
pub fn shift_warm_start(previous: &Trajectory, config: &NmpcConfig) -> Trajectory {
    let start = previous.states.get(1).or(previous.states.first()).copied().unwrap_or_default();
    let inputs: Vec<EgoInput> = if previous.status == SolveStatus::InfeasibleStart || previous.inputs.is_empty() {
        vec![EgoInput::default(); config.horizon]
    } else {
        let mut v: Vec<EgoInput> = previous.inputs.iter().skip(1).copied().collect();
        let last = *previous.inputs.last().expect("non-empty");
        v.resize(config.horizon, last);
        v
    };
    let states = rollout(&start, &inputs, &config.vehicle, config.t_s);
    Trajectory {
        max_violation: max_violation(config, &states, &inputs),
        states,
        inputs,
        cost: previous.cost,
        initial_cost: previous.cost,
        status: previous.status,
        iterations: 0,
    }
}

/// Per-cycle solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub cycle: usize,
    pub time: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub initial_cost: f64,
    pub cost: f64,
    pub max_violation: f64,
}

impl SolveRecord {
    pub fn new(cycle: usize, time: f64, t: &Trajectory) -> Self {
        Self {
            cycle,
            time,
            status: t.status,
            iterations: t.iterations,
            initial_cost: t.initial_cost,
            cost: t.cost,
            max_violation: t.max_violation,
        }
    }
}

/// Writes solver diagnostics as comma-separated rows: `cycle,time,status,
/// iterations,initial_cost,cost,max_violation`.
pub fn write_solver_log<W: Write>(out: W, records: &[SolveRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cycle", "time", "status", "iterations", "initial_cost", "cost", "max_violation"])?;
    for r in records {
        w.write_record([
            r.cycle.to_string(),
            format!("{:.2}", r.time),
            r.status.as_str().to_owned(),
            r.iterations.to_string(),
            format!("{:.9}", r.initial_cost),
            format!("{:.9}", r.cost),
            format!("{:.3e}", r.max_violation),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "solver log".into(),
        source: e,
    })
}
