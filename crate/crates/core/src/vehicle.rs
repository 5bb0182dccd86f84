//! Discrete kinematic bicycle model (rear-axle referenced), state/input
//! bounds, and rollouts.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub delta: f64,
}

impl EgoState {
    pub fn to_array(self) -> [f64; 5] {
        [self.x, self.y, self.theta, self.v, self.delta]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            theta: a[2],
            v: a[3],
            delta: a[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoInput {
    /// Longitudinal acceleration, m/s².
    pub a: f64,
    /// Steering rate, rad/s.
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub width: f64,
    pub length: f64,
    /// Distance from the rear axle back to the rear bumper.
    pub rear_overhang: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.8,
            width: 1.9,
            length: 4.5,
            rear_overhang: 0.9,
        }
    }
}

impl VehicleParams {
    /// Offset from the rear axle to the bounding-box centre along the heading.
    pub fn center_offset(&self) -> f64 {
        0.5 * self.length - self.rear_overhang
    }

    /// Offset from the rear axle to the front bumper.
    pub fn front_offset(&self) -> f64 {
        self.length - self.rear_overhang
    }

    /// Lateral acceleration `v²·tan(δ)/L`.
    pub fn lateral_acceleration(&self, state: &EgoState) -> f64 {
        state.v * state.v * state.delta.tan() / self.wheelbase
    }
}

pub const STATE_NAMES: [&str; 5] = ["x", "y", "theta", "v", "delta"];
pub const INPUT_NAMES: [&str; 2] = ["a", "omega"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub state_lower: [f64; 5],
    pub state_upper: [f64; 5],
    pub input_lower: [f64; 2],
    pub input_upper: [f64; 2],
}

impl Default for Bounds {
    fn default() -> Self {
        let inf = f64::INFINITY;
        Self {
            state_lower: [-inf, -inf, -inf, -2.0, -0.1],
            state_upper: [inf, inf, inf, 10.0, 0.1],
            input_lower: [-4.0, -1.5],
            input_upper: [2.0, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub component: &'static str,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Violation {
    pub fn amount(&self) -> f64 {
        (self.lower - self.value).max(self.value - self.upper).max(0.0)
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {} outside [{}, {}]",
            self.component, self.value, self.lower, self.upper
        )
    }
}

impl Bounds {
    pub fn is_consistent(&self) -> bool {
        self.state_lower.iter().zip(&self.state_upper).all(|(l, u)| l <= u)
            && self.input_lower.iter().zip(&self.input_upper).all(|(l, u)| l <= u)
    }

    pub fn check_state(&self, s: &EgoState) -> Vec<Violation> {
        collect(&STATE_NAMES, &s.to_array(), &self.state_lower, &self.state_upper)
    }

    pub fn check_input(&self, u: &EgoInput) -> Vec<Violation> {
        collect(&INPUT_NAMES, &[u.a, u.omega], &self.input_lower, &self.input_upper)
    }

    pub fn clamp_input(&self, u: EgoInput) -> EgoInput {
        EgoInput {
            a: u.a.clamp(self.input_lower[0], self.input_upper[0]),
            omega: u.omega.clamp(self.input_lower[1], self.input_upper[1]),
        }
    }

    pub fn clamp_state(&self, s: EgoState) -> EgoState {
        let mut a = s.to_array();
        for i in 0..5 {
            a[i] = a[i].clamp(self.state_lower[i], self.state_upper[i]);
        }
        EgoState::from_array(a)
    }

    /// Largest bound excess of the state, 0 when inside.
    pub fn state_violation(&self, s: &EgoState) -> f64 {
        self.check_state(s).iter().map(Violation::amount).fold(0.0, f64::max)
    }
}

fn collect(names: &[&'static str], v: &[f64], lo: &[f64], hi: &[f64]) -> Vec<Violation> {
    names
        .iter()
        .enumerate()
        .filter(|&(i, _)| !(lo[i] <= v[i] && v[i] <= hi[i]))
        .map(|(i, &component)| Violation {
            component,
            value: v[i],
            lower: lo[i],
            upper: hi[i],
        })
        .collect()
}

/// One forward-Euler step of the kinematic bicycle model.
pub fn step(s: &EgoState, u: &EgoInput, params: &VehicleParams, t_s: f64) -> EgoState {
    debug_assert!(t_s > 0.0);
    let (sin, cos) = s.theta.sin_cos();
    EgoState {
        x: s.x + t_s * s.v * cos,
        y: s.y + t_s * s.v * sin,
        theta: s.theta + t_s * s.v / params.wheelbase * s.delta.tan(),
        v: s.v + t_s * u.a,
        delta: s.delta + t_s * u.omega,
    }
}

pub fn rollout(initial: &EgoState, inputs: &[EgoInput], params: &VehicleParams, t_s: f64) -> Vec<EgoState> {
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(*initial);
    let mut s = *initial;
    for u in inputs {
        s = step(&s, u, params, t_s);
        out.push(s);
    }
    out
}
