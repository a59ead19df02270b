//! Implicit Euler time stepping of the coupled thermistor system with a fully
//! coupled Newton solve per step.
//!
//! Unknowns of one step are `x = (θ, φ_free)`; the residual is
//!
//! ```text
//!   R_θ = M (θ − θ_prev)/dt + K_η(θ) θ + B (θ − θ_l) − F(θ, φ)
//!   R_φ = A_σ(θ) φ − N u
//! ```
//!
//! with `M` and `B` the row-lumped volume and boundary mass matrices. Lumping
//! keeps `M/dt + K_η + B` an M-matrix on path-simplex meshes, so the discrete
//! temperature obeys the minimum principle.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{self, Discretization, NO_SLOT};
use crate::materials::ScaledModel;
use crate::objective::ControlField;
use crate::sparse::{self, bicgstab_solve, cg_solve, SparseMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    /// Absolute tolerance on the Euclidean norm of the scaled residual.
    pub tol_abs: f64,
    pub max_iter: usize,
    /// Relative residual tolerance of the inner linear solves.
    pub linear_tol: f64,
    pub linear_maxit: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol_abs: 1e-10,
            max_iter: 20,
            linear_tol: 1e-12,
            linear_maxit: 5000,
        }
    }
}

/// Uniform time grid in scaled time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<TimeGrid> {
        if steps == 0 || !(t1 > t0) {
            return Err(Error::InvalidInput(format!(
                "time grid needs t1 > t0 and at least one step (got [{t0}, {t1}], {steps})"
            )));
        }
        Ok(TimeGrid {
            t0,
            dt: (t1 - t0) / steps as f64,
            steps,
        })
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
}

/// Residual norms of one Newton solve; entry 0 is the pre-step guess.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub residuals: Vec<f64>,
}

impl StepStats {
    pub fn iterations(&self) -> usize {
        self.residuals.len() - 1
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap()
    }

    /// Largest `r_{i+1} / r_i^order` over the last two contractions.
    pub fn contraction_constant(&self, order: f64) -> Option<f64> {
        let r = &self.residuals;
        if r.len() < 3 {
            return None;
        }
        let tail = &r[r.len().saturating_sub(3)..];
        Some(
            tail.windows(2)
                .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0].powf(order) })
                .fold(0.0, f64::max),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    /// Nodal temperature per time level (scaled).
    pub theta: Vec<Vec<f64>>,
    /// Nodal potential per time level (scaled), zero on grounded vertices.
    pub phi: Vec<Vec<f64>>,
    /// Newton statistics of steps `1..=K`.
    pub newton_stats: Vec<StepStats>,
}

impl StateTrajectory {
    pub fn steps(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn min_theta(&self) -> f64 {
        self.theta.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_theta(&self) -> f64 {
        self.theta.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Potential for a given temperature and boundary current slice.
pub fn solve_potential(
    disc: &Discretization,
    model: &ScaledModel,
    theta: &[f64],
    u_slice: &[f64],
    cfg: &NewtonConfig,
) -> Result<Vec<f64>> {
    let a = fem::assemble_potential_system(disc, model, theta);
    let load = disc.dofs.restrict(&fem::assemble_control_load(disc, u_slice));
    let (phi, _) = cg_solve(&a, &load, cfg.linear_tol.max(1e-14), cfg.linear_maxit)?;
    Ok(disc.dofs.extend(&phi))
}

fn robin_diag<'a>(disc: &'a Discretization, model: &ScaledModel) -> impl Iterator<Item = f64> + 'a {
    let r = model.robin;
    disc.lumped_boundary.iter().map(move |b| r * b)
}

/// Coupled step residual `(R_θ, R_φ)`; `phi` is a full nodal vector.
pub fn step_residual(
    disc: &Discretization,
    model: &ScaledModel,
    theta_prev: &[f64],
    theta: &[f64],
    phi: &[f64],
    u_slice: &[f64],
    dt: f64,
) -> Vec<f64> {
    let n = disc.n_vertices();
    let idx = &disc.dofs.free_index;
    let mut r = vec![0.0; n + disc.dofs.n_free()];
    for (i, rb) in robin_diag(disc, model).enumerate() {
        r[i] = disc.lumped_mass[i] * (theta[i] - theta_prev[i]) / dt + rb * (theta[i] - model.theta_l);
    }
    for ((tet, el), l) in disc.cells().zip(&disc.patterns.local) {
        let tc = fem::centroid(tet, theta);
        let eta = model.heat.value(tc);
        let s = model.electric.value(tc);
        let gp = el.gradient(tet, phi);
        let joule = model.joule * s * (gp[0] * gp[0] + gp[1] * gp[1] + gp[2] * gp[2]) * el.volume / 4.0;
        for a in 0..4 {
            let (mut kt, mut ap) = (0.0, 0.0);
            for b in 0..4 {
                kt += l[a][b] * theta[tet[b]];
                ap += l[a][b] * phi[tet[b]];
            }
            r[tet[a]] += eta * kt - joule;
            if let Some(f) = idx[tet[a]] {
                r[n + f] += s * ap;
            }
        }
    }
    let load = fem::assemble_control_load(disc, u_slice);
    for (k, &v) in disc.dofs.free.iter().enumerate() {
        r[n + k] -= load[v];
    }
    r
}

/// Exact Jacobian of [`step_residual`] with respect to `(θ, φ_free)`.
pub fn step_jacobian(disc: &Discretization, model: &ScaledModel, theta: &[f64], phi: &[f64], dt: f64) -> SparseMatrix {
    let p = &disc.patterns;
    let mut values = vec![0.0; p.coupled.nnz()];
    for (i, rb) in robin_diag(disc, model).enumerate() {
        values[p.coupled_diag[i]] += disc.lumped_mass[i] / dt + rb;
    }
    for (e, (tet, el)) in disc.cells().enumerate() {
        let tc = fem::centroid(tet, theta);
        let (eta, deta) = model.heat.eval(tc);
        let (s, ds) = model.electric.eval(tc);
        let gt = el.gradient(tet, theta);
        let gp = el.gradient(tet, phi);
        let gp2 = dot3(&gp, &gp);
        let v = el.volume;
        let joule_theta = model.joule * ds / 4.0 * gp2 * v / 4.0;
        let l = &p.local[e];
        for a in 0..4 {
            let heat_flux = deta * v * dot3(&gt, &el.grads[a]) / 4.0;
            let cur_flux = ds * v * dot3(&gp, &el.grads[a]) / 4.0;
            for b in 0..4 {
                values[p.theta_theta[e][a][b]] += eta * l[a][b] + heat_flux - joule_theta;
                let tp = p.theta_phi[e][a][b];
                if tp != NO_SLOT {
                    values[tp] -= model.joule * 2.0 * s * dot3(&gp, &el.grads[b]) * v / 4.0;
                }
                let pt = p.phi_theta[e][a][b];
                if pt != NO_SLOT {
                    values[pt] += cur_flux;
                }
                let pp = p.phi_phi[e][a][b];
                if pp != NO_SLOT {
                    values[pp] += s * l[a][b];
                }
            }
        }
    }
    p.coupled.with_values(values)
}

#[inline]
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Semi-implicit guess: potential at the old temperature, then one linear
/// heat step with coefficients and Joule source frozen at the old level.
fn pre_step(
    disc: &Discretization,
    model: &ScaledModel,
    theta_prev: &[f64],
    u_next: &[f64],
    dt: f64,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let phi = solve_potential(disc, model, theta_prev, u_next, cfg)?;
    let joule = fem::assemble_joule_load(disc, model, theta_prev, &phi);
    let mut diag = Vec::with_capacity(theta_prev.len());
    let mut rhs = Vec::with_capacity(theta_prev.len());
    for (i, rb) in robin_diag(disc, model).enumerate() {
        let m = disc.lumped_mass[i] / dt;
        diag.push(m + rb);
        rhs.push(m * theta_prev[i] + rb * model.theta_l + joule[i]);
    }
    let a = fem::assemble_heat_stiffness(disc, model, theta_prev).add_diagonal(&diag)?;
    let (theta, _) = cg_solve(&a, &rhs, cfg.linear_tol.max(1e-14), cfg.linear_maxit)?;
    Ok((theta, phi))
}

/// One implicit Euler step: returns `(θ_next, φ_next, stats)`.
pub fn step(
    disc: &Discretization,
    model: &ScaledModel,
    theta_prev: &[f64],
    u_next: &[f64],
    dt: f64,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, Vec<f64>, StepStats)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let n = disc.n_vertices();
    let (mut theta, mut phi) = pre_step(disc, model, theta_prev, u_next, dt, cfg)?;
    let mut residuals = Vec::new();
    loop {
        let r = step_residual(disc, model, theta_prev, &theta, &phi, u_next, dt);
        let rn = sparse::norm(&r);
        if !rn.is_finite() {
            return Err(Error::NonFinite("Newton residual"));
        }
        residuals.push(rn);
        let iterations = residuals.len() - 1;
        if iterations >= 1 && rn <= cfg.tol_abs {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(Error::Newton {
                iterations,
                history: residuals,
            });
        }
        let jac = step_jacobian(disc, model, &theta, &phi, dt);
        let minus_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let (delta, _) = bicgstab_solve(&jac, &minus_r, cfg.linear_tol, cfg.linear_maxit)?;
        for i in 0..n {
            theta[i] += delta[i];
        }
        for (k, &v) in disc.dofs.free.iter().enumerate() {
            phi[v] += delta[n + k];
        }
        if !all_finite(&theta) || !all_finite(&phi) {
            return Err(Error::NonFinite("Newton iterate"));
        }
    }
    Ok((theta, phi, StepStats { residuals }))
}

/// Runs all steps of `grid`; the control slice `k` drives step `k`.
pub fn solve_forward(
    disc: &Discretization,
    model: &ScaledModel,
    control: &ControlField,
    theta0: &[f64],
    grid: &TimeGrid,
    cfg: &NewtonConfig,
) -> Result<StateTrajectory> {
    if control.steps() != grid.steps || control.n_control() != disc.dofs.n_control() {
        return Err(Error::InvalidInput(format!(
            "control has {} steps x {} nodes, expected {} x {}",
            control.steps(),
            control.n_control(),
            grid.steps,
            disc.dofs.n_control()
        )));
    }
    if theta0.len() != disc.n_vertices() {
        return Err(Error::InvalidInput("initial temperature has the wrong length".into()));
    }
    let mut theta = vec![theta0.to_vec()];
    let mut phi = vec![solve_potential(disc, model, theta0, control.slice(0), cfg)?];
    let mut stats = Vec::with_capacity(grid.steps);
    for k in 1..=grid.steps {
        let (t, p, s) = step(disc, model, &theta[k - 1], control.slice(k), grid.dt, cfg).map_err(|e| e.at_step(k))?;
        theta.push(t);
        phi.push(p);
        stats.push(s);
    }
    let traj = StateTrajectory {
        times: (0..=grid.steps).map(|k| grid.time(k)).collect(),
        theta,
        phi,
        newton_stats: stats,
    };
    log::debug!(
        "forward solve: {} steps, min θ {:.6e}, max θ {:.6e}, max Newton iterations {}",
        grid.steps,
        traj.min_theta(),
        traj.max_theta(),
        traj.newton_stats.iter().map(StepStats::iterations).max().unwrap_or(0)
    );
    Ok(traj)
}

/// Forward sensitivity `δθ_k = 𝒮'(u)h` at time levels `0..=K` (`δθ_0 = 0`).
pub fn solve_linearized(
    disc: &Discretization,
    model: &ScaledModel,
    traj: &StateTrajectory,
    h: &ControlField,
    grid: &TimeGrid,
    cfg: &NewtonConfig,
) -> Result<Vec<Vec<f64>>> {
    let n = disc.n_vertices();
    let mut out = vec![vec![0.0; n]];
    for k in 1..=grid.steps {
        let jac = step_jacobian(disc, model, &traj.theta[k], &traj.phi[k], grid.dt);
        let load = fem::assemble_control_load(disc, h.slice(k));
        let prev = &out[k - 1];
        let mut rhs: Vec<f64> = (0..n).map(|i| disc.lumped_mass[i] * prev[i] / grid.dt).collect();
        rhs.extend(disc.dofs.free.iter().map(|&v| load[v]));
        let (dx, _) = bicgstab_solve(&jac, &rhs, cfg.linear_tol, cfg.linear_maxit).map_err(|e| e.at_step(k))?;
        out.push(dx[..n].to_vec());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimumPrinciple {
    /// `min(min θ_l, min θ₀)`
    pub m_inf: f64,
    pub min_found: f64,
    pub violated: bool,
}

pub fn check_minimum_principle(traj: &StateTrajectory, theta_l: f64, theta0: &[f64], tol: f64) -> MinimumPrinciple {
    let m_inf = theta0.iter().copied().fold(theta_l, f64::min);
    let min_found = traj.min_theta();
    MinimumPrinciple {
        m_inf,
        min_found,
        violated: min_found < m_inf - tol,
    }
}

const CACHE_MAGIC: &[u8; 8] = b"THMTRAJ\0";
const CACHE_VERSION: u32 = 1;

/// Writes the trajectory as a versioned little-endian binary file.
pub fn write_trajectory_cache(traj: &StateTrajectory, w: &mut impl Write) -> Result<()> {
    let n = traj.theta.first().map_or(0, Vec::len) as u64;
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&(traj.steps() as u64).to_le_bytes())?;
    for t in &traj.times {
        w.write_all(&t.to_le_bytes())?;
    }
    for field in [&traj.theta, &traj.phi] {
        for level in field.iter() {
            for v in level {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    for s in &traj.newton_stats {
        w.write_all(&(s.residuals.len() as u32).to_le_bytes())?;
        for r in &s.residuals {
            w.write_all(&r.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_trajectory_cache(r: &mut impl Read) -> Result<StateTrajectory> {
    fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        r.read_exact(&mut b)?;
        Ok(b)
    }
    let f64s = |r: &mut dyn Read, len: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            out.push(f64::from_le_bytes(b));
        }
        Ok(out)
    };
    if &take::<8>(r)? != CACHE_MAGIC {
        return Err(Error::InvalidInput("not a trajectory cache file".into()));
    }
    let version = u32::from_le_bytes(take(r)?);
    if version != CACHE_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported trajectory cache version {version}"
        )));
    }
    let n = u64::from_le_bytes(take(r)?) as usize;
    let steps = u64::from_le_bytes(take(r)?) as usize;
    let times = f64s(r, steps + 1)?;
    let theta = (0..=steps).map(|_| f64s(r, n)).collect::<Result<Vec<_>>>()?;
    let phi = (0..=steps).map(|_| f64s(r, n)).collect::<Result<Vec<_>>>()?;
    let mut newton_stats = Vec::with_capacity(steps);
    for _ in 0..steps {
        let len = u32::from_le_bytes(take(r)?) as usize;
        newton_stats.push(StepStats {
            residuals: f64s(r, len)?,
        });
    }
    Ok(StateTrajectory {
        times,
        theta,
        phi,
        newton_stats,
    })
}

pub fn save_trajectory_cache(traj: &StateTrajectory, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_trajectory_cache(traj, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_trajectory_cache(path: &Path) -> Result<StateTrajectory> {
    let bytes = std::fs::read(path)?;
    read_trajectory_cache(&mut bytes.as_slice())
}
