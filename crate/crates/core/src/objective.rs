//! Reduced objective, penalty and their gradients.

use serde::{Deserialize, Serialize};

use crate::adjoint::{self, AdjointTrajectory};
use crate::error::{Error, Result};
use crate::fem::{self, Discretization};
use crate::materials::ScaledModel;
use crate::sparse;
use crate::state::{self, NewtonConfig, StateTrajectory, TimeGrid};

/// Boundary current on the control vertices at every time level `0..=K`,
/// stored level-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    n_control: usize,
    values: Vec<f64>,
}

impl ControlField {
    pub fn zeros(steps: usize, n_control: usize) -> ControlField {
        ControlField::constant(steps, n_control, 0.0)
    }

    pub fn constant(steps: usize, n_control: usize, value: f64) -> ControlField {
        ControlField {
            n_control,
            values: vec![value; (steps + 1) * n_control],
        }
    }

    pub fn from_values(steps: usize, n_control: usize, values: Vec<f64>) -> Result<ControlField> {
        if values.len() != (steps + 1) * n_control {
            return Err(Error::InvalidInput(format!(
                "control needs {} values, got {}",
                (steps + 1) * n_control,
                values.len()
            )));
        }
        Ok(ControlField { n_control, values })
    }

    pub fn steps(&self) -> usize {
        self.values
            .len()
            .checked_div(self.n_control)
            .map_or(0, |levels| levels - 1)
    }

    pub fn n_control(&self) -> usize {
        self.n_control
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_control..(k + 1) * self.n_control]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n_control..(k + 1) * self.n_control]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Objective weights and bounds in physical units (K, A/m²).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveParams {
    /// Target temperature on the design region, K.
    pub theta_d: f64,
    pub gamma: f64,
    pub s_exp: f64,
    pub q_exp: f64,
    pub beta: f64,
    pub p_exp: f64,
    /// Upper temperature bound, K.
    pub theta_max: f64,
    /// Upper bound of the boundary current density, A/m².
    pub u_max: f64,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        ObjectiveParams {
            theta_d: 1500.0,
            gamma: 1e-8,
            s_exp: 2.0,
            q_exp: 2.0,
            beta: 1e-5,
            p_exp: 4.0,
            theta_max: 1700.0,
            u_max: 1e8,
        }
    }
}

impl ObjectiveParams {
    /// Checks the parameter ranges; `theta_floor` is `max(θ₀, θ_l)` in K.
    pub fn validate(&self, theta_floor: f64) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("objective parameter {what}")));
        let all = [
            self.theta_d,
            self.gamma,
            self.s_exp,
            self.q_exp,
            self.beta,
            self.p_exp,
            self.theta_max,
            self.u_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("is not finite");
        }
        if !(self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if self.gamma < 0.0 {
            return bad("gamma must be nonnegative");
        }
        if self.s_exp < 2.0 || self.q_exp < 2.0 {
            return bad("s_exp and q_exp must be at least 2");
        }
        if !(self.p_exp > 2.0) {
            return bad("p_exp must exceed 2");
        }
        if self.u_max < 0.0 {
            return bad("u_max must be nonnegative");
        }
        if self.theta_max < theta_floor {
            return bad("theta_max must not lie below the initial and ambient temperature");
        }
        Ok(())
    }

    pub fn scaled(&self, model: &ScaledModel) -> ScaledParams {
        let t = model.temperature_scale();
        let u = model.scaling.as_ref().map_or(1.0, |s| s.current_density);
        ScaledParams {
            theta_d: self.theta_d / t,
            gamma: self.gamma,
            s_exp: self.s_exp,
            q_exp: self.q_exp,
            beta: self.beta,
            p_exp: self.p_exp,
            theta_max: self.theta_max / t,
            u_max: self.u_max / u,
        }
    }
}

/// [`ObjectiveParams`] with temperatures and current in scaled units.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledParams {
    pub theta_d: f64,
    pub gamma: f64,
    pub s_exp: f64,
    pub q_exp: f64,
    pub beta: f64,
    pub p_exp: f64,
    pub theta_max: f64,
    pub u_max: f64,
}

/// Moreau–Yosida penalty parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    pub lambda: f64,
}

impl PenaltyState {
    pub fn off() -> PenaltyState {
        PenaltyState { lambda: 0.0 }
    }

    /// Nodal multiplier density `λ(θ − θ_max)_+`.
    pub fn multiplier(&self, theta: &[f64], theta_max: f64) -> Vec<f64> {
        theta.iter().map(|t| self.lambda * (t - theta_max).max(0.0)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub tracking: f64,
    pub gradient_term: f64,
    pub tikhonov: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyValue {
    pub value: f64,
    /// Largest `(θ − θ_max)_+` over all nodes and levels, K.
    pub max_violation_k: f64,
}

fn check_grid(traj: &StateTrajectory, control: &ControlField) -> Result<()> {
    if traj.steps() != control.steps() {
        return Err(Error::InvalidInput(format!(
            "trajectory has {} steps, control {}",
            traj.steps(),
            control.steps()
        )));
    }
    Ok(())
}

/// Objective terms without the penalty; `penalty` and `total` cover only these.
pub fn eval_objective(
    disc: &Discretization,
    traj: &StateTrajectory,
    control: &ControlField,
    params: &ScaledParams,
    dt: f64,
) -> Result<ObjectiveBreakdown> {
    check_grid(traj, control)?;
    let steps = traj.steps();
    let diff: Vec<f64> = traj.theta[steps].iter().map(|t| t - params.theta_d).collect();
    let tracking = 0.5 * sparse::dot(&diff, &disc.design_mass.matvec(&diff));

    let gradient_term = if params.gamma == 0.0 {
        0.0
    } else {
        let sum: f64 = traj.theta[1..]
            .iter()
            .map(|t| dt * fem::gradient_norm_power(disc, t, params.q_exp).powf(params.s_exp / params.q_exp))
            .sum();
        params.gamma / params.s_exp * sum
    };

    let m = &disc.control_weights;
    let mut smooth = 0.0;
    for k in 0..steps {
        let (a, b) = (control.slice(k), control.slice(k + 1));
        smooth += dt * (0..m.len()).map(|c| m[c] * ((b[c] - a[c]) / dt).powi(2)).sum::<f64>();
    }
    let mut growth = 0.0;
    for k in 1..=steps {
        let u = control.slice(k);
        growth += dt * (0..m.len()).map(|c| m[c] * u[c].abs().powf(params.p_exp)).sum::<f64>();
    }
    let tikhonov = 0.5 * params.beta * (smooth + growth);

    Ok(ObjectiveBreakdown {
        tracking,
        gradient_term,
        tikhonov,
        penalty: 0.0,
        total: tracking + gradient_term + tikhonov,
    })
}

/// `(λ/2) Σ_{k≥1} dt Σ_i m_i (θ_k − θ_max)_+²` and the largest violation in K.
pub fn eval_penalty(
    disc: &Discretization,
    traj: &StateTrajectory,
    params: &ScaledParams,
    penalty: &PenaltyState,
    dt: f64,
    temperature_scale: f64,
) -> PenaltyValue {
    let mut value = 0.0;
    for t in &traj.theta[1..] {
        value += dt
            * t.iter()
                .zip(&disc.lumped_mass)
                .map(|(t, m)| m * (t - params.theta_max).max(0.0).powi(2))
                .sum::<f64>();
    }
    let worst = traj.max_theta() - params.theta_max;
    PenaltyValue {
        value: 0.5 * penalty.lambda * value,
        max_violation_k: worst.max(0.0) * temperature_scale,
    }
}

/// Gradient of the penalized reduced objective in the inner product
/// `⟨a, b⟩ = Σ_k dt Σ_c m_c a_{k,c} b_{k,c}`; end levels are pinned to zero.
pub fn reduced_gradient(
    disc: &Discretization,
    control: &ControlField,
    adj: &AdjointTrajectory,
    params: &ScaledParams,
    dt: f64,
) -> Result<ControlField> {
    let steps = control.steps();
    if adj.control_load.len() != steps + 1 {
        return Err(Error::InvalidInput("adjoint and control grids differ".into()));
    }
    let m = &disc.control_weights;
    let mut g = ControlField::zeros(steps, control.n_control());
    for k in 1..steps {
        let (prev, cur, next) = (control.slice(k - 1), control.slice(k), control.slice(k + 1));
        let load = &adj.control_load[k];
        for (c, out) in g.slice_mut(k).iter_mut().enumerate() {
            let dtt = (next[c] - 2.0 * cur[c] + prev[c]) / (dt * dt);
            let growth = 0.5 * params.p_exp * cur[c].abs().powf(params.p_exp - 2.0) * cur[c];
            *out = params.beta * (growth - dtt) + load[c] / m[c];
        }
    }
    Ok(g)
}

/// Clamps to `[0, u_max]` and zeroes the first and last level.
pub fn project_control(control: &mut ControlField, u_max: f64) {
    let n = control.n_control();
    project_values(control.values_mut(), n, u_max);
}

/// [`project_control`] on the flat level-major values.
pub fn project_values(values: &mut [f64], n_control: usize, u_max: f64) {
    let last = values.len() - n_control;
    for (i, v) in values.iter_mut().enumerate() {
        *v = if i < n_control || i >= last {
            0.0
        } else {
            v.clamp(0.0, u_max)
        };
    }
}

/// Everything needed to evaluate `u ↦ j(u)` and its gradient.
#[derive(Clone, Debug)]
pub struct ReducedProblem {
    pub disc: Discretization,
    pub model: ScaledModel,
    pub grid: TimeGrid,
    /// Initial temperature, scaled.
    pub theta0: Vec<f64>,
    pub params: ObjectiveParams,
    pub scaled: ScaledParams,
    pub newton: NewtonConfig,
}

/// Forward solution with its objective breakdown.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub traj: StateTrajectory,
    pub objective: ObjectiveBreakdown,
    pub max_violation_k: f64,
}

impl ReducedProblem {
    /// `theta0_k` is the uniform initial temperature in K.
    pub fn new(
        disc: Discretization,
        model: ScaledModel,
        grid: TimeGrid,
        theta0_k: f64,
        params: ObjectiveParams,
        newton: NewtonConfig,
    ) -> Result<ReducedProblem> {
        params.validate(theta0_k.max(model.kelvin(model.theta_l)))?;
        let scaled = params.scaled(&model);
        let theta0 = vec![theta0_k / model.temperature_scale(); disc.n_vertices()];
        Ok(ReducedProblem {
            disc,
            model,
            grid,
            theta0,
            params,
            scaled,
            newton,
        })
    }

    pub fn n_control(&self) -> usize {
        self.disc.dofs.n_control()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn zero_control(&self) -> ControlField {
        ControlField::zeros(self.steps(), self.n_control())
    }

    /// Weights of the control inner product, one per control value.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity((self.steps() + 1) * self.n_control());
        for _ in 0..=self.steps() {
            w.extend(self.disc.control_weights.iter().map(|m| self.grid.dt * m));
        }
        w
    }

    pub fn inner(&self, a: &ControlField, b: &ControlField) -> f64 {
        let m = &self.disc.control_weights;
        let nc = m.len();
        a.values()
            .iter()
            .zip(b.values())
            .enumerate()
            .map(|(i, (x, y))| self.grid.dt * m[i % nc] * x * y)
            .sum()
    }

    pub fn project(&self, control: &mut ControlField) {
        project_control(control, self.scaled.u_max);
    }

    pub fn forward(&self, control: &ControlField) -> Result<StateTrajectory> {
        state::solve_forward(&self.disc, &self.model, control, &self.theta0, &self.grid, &self.newton)
    }

    pub fn objective(
        &self,
        traj: &StateTrajectory,
        control: &ControlField,
        penalty: &PenaltyState,
    ) -> Result<(ObjectiveBreakdown, f64)> {
        let mut o = eval_objective(&self.disc, traj, control, &self.scaled, self.grid.dt)?;
        let p = eval_penalty(
            &self.disc,
            traj,
            &self.scaled,
            penalty,
            self.grid.dt,
            self.model.temperature_scale(),
        );
        o.penalty = p.value;
        o.total += p.value;
        Ok((o, p.max_violation_k))
    }

    pub fn evaluate(&self, control: &ControlField, penalty: &PenaltyState) -> Result<Evaluation> {
        let traj = self.forward(control)?;
        let (objective, max_violation_k) = self.objective(&traj, control, penalty)?;
        Ok(Evaluation {
            traj,
            objective,
            max_violation_k,
        })
    }

    pub fn adjoint(&self, traj: &StateTrajectory, penalty: &PenaltyState) -> Result<AdjointTrajectory> {
        adjoint::solve_adjoint(
            &self.disc,
            &self.model,
            traj,
            &self.grid,
            &self.scaled,
            penalty,
            &self.newton,
        )
    }

    pub fn gradient(
        &self,
        control: &ControlField,
        traj: &StateTrajectory,
        penalty: &PenaltyState,
    ) -> Result<(ControlField, AdjointTrajectory)> {
        let adj = self.adjoint(traj, penalty)?;
        let g = reduced_gradient(&self.disc, control, &adj, &self.scaled, self.grid.dt)?;
        Ok((g, adj))
    }
}
