//! Backward sweep with the transposed step Jacobians of the forward scheme.
//!
//! For loads `ℓ_k` and terminal value `ϑ_{K+1}` the sweep solves
//!
//! ```text
//!   J_kᵀ (ϑ_k, ψ_k) = (M ϑ_{k+1}/dt + ℓ_k, 0),   k = K, …, 1,
//! ```
//!
//! so that `Σ_k ℓ_k·δθ_k = Σ_k (Nᵀψ_k)·h_k` for every forward sensitivity
//! `δθ = 𝒮'(u)h`.

use crate::error::Result;
use crate::fem::{self, Discretization};
use crate::materials::ScaledModel;
use crate::objective::{PenaltyState, ScaledParams};
use crate::sparse::bicgstab_solve;
use crate::state::{step_jacobian, NewtonConfig, StateTrajectory, TimeGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct AdjointTrajectory {
    /// Adjoint temperature per level; level 0 repeats level 1, the initial-time dual variable.
    pub vartheta: Vec<Vec<f64>>,
    /// Adjoint potential per level (full nodal, zero on grounded vertices); level 0 is zero.
    pub psi: Vec<Vec<f64>>,
    /// `ψ_k` at the control vertices.
    pub boundary_trace_psi: Vec<Vec<f64>>,
    /// `Nᵀψ_k`: the boundary-mass weighted trace, one entry per control vertex.
    pub control_load: Vec<Vec<f64>>,
    /// `ϑ_{K+1}`, the nodal terminal value.
    pub terminal: Vec<f64>,
}

/// Terminal load `M_E(θ_K − θ_d) + dt·λ M_L(θ_K − θ_max)_+`.
pub fn terminal_condition(
    disc: &Discretization,
    traj: &StateTrajectory,
    params: &ScaledParams,
    penalty: &PenaltyState,
    dt: f64,
) -> Vec<f64> {
    let theta = traj.theta.last().expect("non-empty trajectory");
    let diff: Vec<f64> = theta.iter().map(|t| t - params.theta_d).collect();
    let mut load = disc.design_mass.matvec(&diff);
    for (i, m) in penalty.multiplier(theta, params.theta_max).into_iter().enumerate() {
        load[i] += dt * disc.lumped_mass[i] * m;
    }
    load
}

/// One transposed step; returns `(ϑ, ψ)` with `ψ` as a full nodal vector.
#[allow(clippy::too_many_arguments)]
pub fn adjoint_step(
    disc: &Discretization,
    model: &ScaledModel,
    theta_next: &[f64],
    phi_next: &[f64],
    vartheta_incoming: &[f64],
    rhs: &[f64],
    dt: f64,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = disc.n_vertices();
    let jt = step_jacobian(disc, model, theta_next, phi_next, dt).transpose();
    let mut b: Vec<f64> = (0..n)
        .map(|i| disc.lumped_mass[i] * vartheta_incoming[i] / dt + rhs[i])
        .collect();
    b.resize(n + disc.dofs.n_free(), 0.0);
    let (x, _) = bicgstab_solve(&jt, &b, cfg.linear_tol, cfg.linear_maxit)?;
    Ok((x[..n].to_vec(), disc.dofs.extend(&x[n..])))
}

/// Backward sweep for arbitrary per-step loads `ℓ_k` (`k = 1..=K`).
pub fn adjoint_sweep<F>(
    disc: &Discretization,
    model: &ScaledModel,
    traj: &StateTrajectory,
    dt: f64,
    terminal: Vec<f64>,
    mut load: F,
    cfg: &NewtonConfig,
) -> Result<AdjointTrajectory>
where
    F: FnMut(usize) -> Vec<f64>,
{
    let steps = traj.steps();
    let n = disc.n_vertices();
    let mut vartheta = vec![Vec::new(); steps + 1];
    let mut psi = vec![vec![0.0; n]; steps + 1];
    let mut incoming = terminal.clone();
    for k in (1..=steps).rev() {
        let (v, p) = adjoint_step(disc, model, &traj.theta[k], &traj.phi[k], &incoming, &load(k), dt, cfg)
            .map_err(|e| e.at_step(k))?;
        psi[k] = p;
        vartheta[k] = v;
        incoming = vartheta[k].clone();
    }
    vartheta[0] = incoming;
    let control = &disc.dofs.control;
    let boundary_trace_psi = psi.iter().map(|p| control.iter().map(|&v| p[v]).collect()).collect();
    let control_load = psi
        .iter()
        .map(|p| disc.control_mass.transpose_matvec(&disc.dofs.restrict(p)))
        .collect();
    Ok(AdjointTrajectory {
        vartheta,
        psi,
        boundary_trace_psi,
        control_load,
        terminal,
    })
}

/// Adjoint of the penalized objective at the trajectory `traj`.
pub fn solve_adjoint(
    disc: &Discretization,
    model: &ScaledModel,
    traj: &StateTrajectory,
    grid: &TimeGrid,
    params: &ScaledParams,
    penalty: &PenaltyState,
    cfg: &NewtonConfig,
) -> Result<AdjointTrajectory> {
    let steps = traj.steps();
    let dt = grid.dt;
    let mut terminal = terminal_condition(disc, traj, params, penalty, dt);
    for (t, m) in terminal.iter_mut().zip(&disc.lumped_mass) {
        *t /= m;
    }
    adjoint_sweep(
        disc,
        model,
        traj,
        dt,
        terminal,
        |k| {
            let theta = &traj.theta[k];
            let mut rhs = vec![0.0; theta.len()];
            if params.gamma > 0.0 {
                let q = fem::gradient_norm_power(disc, theta, params.q_exp);
                let w = if params.s_exp == params.q_exp {
                    1.0
                } else if q == 0.0 {
                    0.0
                } else {
                    q.powf((params.s_exp - params.q_exp) / params.q_exp)
                };
                for (r, l) in rhs.iter_mut().zip(fem::assemble_qlaplacian(disc, theta, params.q_exp)) {
                    *r += params.gamma * w * l;
                }
            }
            if k < steps {
                for (i, m) in penalty.multiplier(theta, params.theta_max).into_iter().enumerate() {
                    rhs[i] += disc.lumped_mass[i] * m;
                }
            }
            rhs
        },
        cfg,
    )
}
