//! Subcommand implementations shared by the binary and the tests.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use thermistor_core::materials::ScalingSet;
use thermistor_core::mesh::BoundaryTag;
use thermistor_core::objective::{ControlField, ObjectiveBreakdown, PenaltyState, ReducedProblem};
use thermistor_core::optimizer::{solve_ocp, OptResult, StageSummary, Termination};
use thermistor_core::state::{check_minimum_principle, write_trajectory_cache, StateTrajectory};
use thermistor_core::verify::{default_eps_sweep, fd_directional};

use crate::config::RunConfig;
use crate::output::{series_csv, vtk_unstructured, write_atomic};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum DumpFields {
    None,
    Final,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinPrincipleReport {
    pub m_inf_k: f64,
    pub min_found_k: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NewtonSummary {
    pub max_iterations: usize,
    pub max_final_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub scenario: String,
    pub seed: u64,
    pub vertices: usize,
    pub tets: usize,
    pub control_vertices: usize,
    pub steps: usize,
    pub dt_s: f64,
    pub scaling: Option<ScalingSet>,
    pub initial_objective: Option<ObjectiveBreakdown>,
    pub objective: Option<ObjectiveBreakdown>,
    #[serde(rename = "max_violation_K")]
    pub max_violation_k: Option<f64>,
    pub max_theta_k: Option<f64>,
    pub min_principle: Option<MinPrincipleReport>,
    pub termination: Option<Termination>,
    pub ncg_iterations: usize,
    pub stages: Vec<StageSummary>,
    pub forward_solves: usize,
    pub adjoint_solves: usize,
    pub newton: Option<NewtonSummary>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn newton_summary(traj: &StateTrajectory) -> NewtonSummary {
    NewtonSummary {
        max_iterations: traj.newton_stats.iter().map(|s| s.iterations()).max().unwrap_or(0),
        max_final_residual: traj.newton_stats.iter().map(|s| s.final_residual()).fold(0.0, f64::max),
    }
}

/// Control vertex closest to the centroid of the contact vertices.
pub fn control_probe_index(prob: &ReducedProblem) -> usize {
    let verts = prob.disc.mesh.vertices();
    let control = &prob.disc.dofs.control;
    let mut c = [0.0; 3];
    for &v in control {
        for k in 0..3 {
            c[k] += verts[v][k] / control.len() as f64;
        }
    }
    let d2 = |v: usize| (0..3).map(|k| (verts[v][k] - c[k]).powi(2)).sum::<f64>();
    (0..control.len())
        .min_by(|&a, &b| d2(control[a]).total_cmp(&d2(control[b])))
        .expect("control vertices exist")
}

fn write_series(out: &Path, cfg: &RunConfig, prob: &ReducedProblem, result: &OptResult) -> anyhow::Result<()> {
    let model = &prob.model;
    let ts = cfg.scaling.time;
    let times: Vec<f64> = result.final_eval.traj.times.iter().map(|t| t * ts).collect();
    for (i, p) in cfg.probes.iter().enumerate() {
        let scaled = p.map(|c| c / cfg.scaling.length);
        let v = prob.disc.mesh.nearest_vertex(&scaled);
        let theta: Vec<f64> = result
            .final_eval
            .traj
            .theta
            .iter()
            .map(|t| model.kelvin(t[v]))
            .collect();
        write_atomic(
            &out.join(format!("probe_{i}.csv")),
            series_csv("time_s,theta_K", &times, &theta).as_bytes(),
        )?;
    }
    let c = control_probe_index(prob);
    let u: Vec<f64> = (0..=prob.steps())
        .map(|k| result.control.slice(k)[c] * cfg.scaling.current_density)
        .collect();
    write_atomic(
        &out.join("control.csv"),
        series_csv("time_s,u_A_per_m2", &times, &u).as_bytes(),
    )?;
    Ok(())
}

fn write_fields(
    out: &Path,
    cfg: &RunConfig,
    prob: &ReducedProblem,
    result: &OptResult,
    penalty: &PenaltyState,
    dump: DumpFields,
) -> anyhow::Result<()> {
    if dump == DumpFields::None {
        return Ok(());
    }
    let traj = &result.final_eval.traj;
    let adj = prob.adjoint(traj, penalty)?;
    let scaling = prob.model.scaling.as_ref().map_or(1.0, |s| s.potential);
    let levels: Vec<usize> = match dump {
        DumpFields::All => (0..=prob.steps()).collect(),
        _ => vec![prob.steps()],
    };
    for k in levels {
        let theta: Vec<f64> = traj.theta[k].iter().map(|t| prob.model.kelvin(*t)).collect();
        let phi: Vec<f64> = traj.phi[k].iter().map(|p| p * scaling).collect();
        let text = vtk_unstructured(
            &format!("level {k} t = {:e} s", traj.times[k] * cfg.scaling.time),
            &prob.disc.mesh,
            cfg.scaling.length,
            &[
                ("theta_K", &theta),
                ("phi_V", &phi),
                ("vartheta", &adj.vartheta[k]),
                ("psi", &adj.psi[k]),
            ],
        );
        let name = if dump == DumpFields::All {
            format!("fields_{k:04}.vtk")
        } else {
            "fields_final.vtk".into()
        };
        write_atomic(&out.join(name), text.as_bytes())?;
    }
    Ok(())
}

/// Optimizes the configured scenario and writes all artifacts to `out`.
///
/// On a solver failure a report with `status = "failed"` is still written.
pub fn run(cfg: &RunConfig, out: &Path, dump: DumpFields) -> anyhow::Result<RunReport> {
    let prob = cfg.build_problem()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let opt_cfg = cfg.optimizer_config();
    let mut report = RunReport {
        status: "failed".into(),
        error: None,
        scenario: cfg.scenario.as_str().into(),
        seed: cfg.seed,
        vertices: prob.disc.n_vertices(),
        tets: prob.disc.mesh.tets().len(),
        control_vertices: prob.n_control(),
        steps: prob.steps(),
        dt_s: prob.grid.dt * cfg.scaling.time,
        scaling: prob.model.scaling.clone(),
        initial_objective: None,
        objective: None,
        max_violation_k: None,
        max_theta_k: None,
        min_principle: None,
        termination: None,
        ncg_iterations: 0,
        stages: vec![],
        forward_solves: 0,
        adjoint_solves: 0,
        newton: None,
    };
    let result = match solve_ocp(&prob, &opt_cfg) {
        Ok(r) => r,
        Err(e) => {
            report.error = Some(e.to_string());
            write_atomic(&out.join("report.json"), report.to_json().as_bytes())?;
            return Err(e).context("optimization failed");
        }
    };
    let last_lambda = result.stages.last().map_or(0.0, |s| s.lambda);
    let penalty = PenaltyState { lambda: last_lambda };
    let traj = &result.final_eval.traj;
    let mp = check_minimum_principle(traj, prob.model.theta_l, &prob.theta0, 1e-8);
    let t = prob.model.temperature_scale();

    report.status = "ok".into();
    report.initial_objective = result.history.first().map(|h| h.objective);
    report.objective = Some(result.final_eval.objective);
    report.max_violation_k = Some(result.final_eval.max_violation_k);
    report.max_theta_k = Some(traj.max_theta() * t);
    report.min_principle = Some(MinPrincipleReport {
        m_inf_k: mp.m_inf * t,
        min_found_k: mp.min_found * t,
        violated: mp.violated,
    });
    report.termination = Some(result.termination);
    report.ncg_iterations = result.stages.iter().map(|s| s.iterations).sum();
    report.stages = result.stages.clone();
    report.forward_solves = result.forward_solves;
    report.adjoint_solves = result.adjoint_solves;
    report.newton = Some(newton_summary(traj));

    write_atomic(&out.join("history.csv"), result.history_csv().as_bytes())?;
    write_series(out, cfg, &prob, &result)?;
    let mut cache = Vec::new();
    write_trajectory_cache(traj, &mut cache)?;
    write_atomic(&out.join("trajectory.bin"), &cache)?;
    write_fields(out, cfg, &prob, &result, &penalty, dump)?;
    write_atomic(&out.join("report.json"), report.to_json().as_bytes())?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionCheck {
    pub index: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
    pub eps: f64,
    pub plateau: f64,
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientReport {
    pub lambda: f64,
    pub seed: u64,
    /// Bound violation at the base control, K.
    pub violation_k: f64,
    pub directions: Vec<DirectionCheck>,
    pub max_rel_error: f64,
}

impl GradientReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "gradient check, lambda = {:e}, seed = {}, base violation {:.3e} K\n",
            self.lambda, self.seed, self.violation_k
        );
        for d in &self.directions {
            if d.skipped {
                let _ = writeln!(s, "direction {}: zero direction, error defined as 0 (skipped)", d.index);
            } else {
                let _ = writeln!(
                    s,
                    "direction {}: adjoint {:.12e} fd {:.12e} rel error {:.3e} (eps {:.1e}, plateau {:.1e})",
                    d.index, d.adjoint, d.finite_difference, d.rel_error, d.eps, d.plateau
                );
            }
        }
        let _ = writeln!(s, "max rel error {:.3e}", self.max_rel_error);
        s
    }
}

/// Uniform random control in `[0.55, 0.95]·u_max` on interior levels; on the
/// desk box this drives the temperature past the default upper bound.
pub fn random_interior_control(prob: &ReducedProblem, rng: &mut impl Rng) -> ControlField {
    let mut c = prob.zero_control();
    let u_max = prob.scaled.u_max;
    for k in 1..prob.steps() {
        for v in c.slice_mut(k) {
            *v = u_max * (0.55 + 0.4 * rng.random::<f64>());
        }
    }
    c
}

/// Random direction with entries in `[−u_max/2, u_max/2]`, zero end levels.
pub fn random_direction(prob: &ReducedProblem, rng: &mut impl Rng) -> ControlField {
    let mut h = prob.zero_control();
    for k in 1..prob.steps() {
        for v in h.slice_mut(k) {
            *v = prob.scaled.u_max * (rng.random::<f64>() - 0.5);
        }
    }
    h
}

/// Adjoint directional derivatives against central differences along `directions`.
pub fn check_gradient_along(
    prob: &ReducedProblem,
    control: &ControlField,
    directions: &[ControlField],
    penalty: PenaltyState,
    seed: u64,
) -> anyhow::Result<GradientReport> {
    let ev = prob.evaluate(control, &penalty)?;
    let (g, _) = prob.gradient(control, &ev.traj, &penalty)?;
    let mut out = Vec::with_capacity(directions.len());
    for (index, h) in directions.iter().enumerate() {
        if h.values().iter().all(|&v| v == 0.0) {
            out.push(DirectionCheck {
                index,
                adjoint: 0.0,
                finite_difference: 0.0,
                rel_error: 0.0,
                eps: 0.0,
                plateau: 0.0,
                skipped: true,
            });
            continue;
        }
        let adjoint = prob.inner(&g, h);
        let fd = fd_directional(
            |x| {
                let c = ControlField::from_values(prob.steps(), prob.n_control(), x.to_vec())?;
                Ok(prob.evaluate(&c, &penalty)?.objective.total)
            },
            control.values(),
            h.values(),
            &default_eps_sweep(),
        )?;
        let scale = adjoint.abs().max(fd.estimate.abs());
        let rel_error = if scale == 0.0 {
            0.0
        } else {
            (fd.estimate - adjoint).abs() / scale
        };
        out.push(DirectionCheck {
            index,
            adjoint,
            finite_difference: fd.estimate,
            rel_error,
            eps: fd.eps,
            plateau: fd.plateau,
            skipped: false,
        });
    }
    let max_rel_error = out.iter().map(|d| d.rel_error).fold(0.0, f64::max);
    Ok(GradientReport {
        lambda: penalty.lambda,
        seed,
        violation_k: ev.max_violation_k,
        directions: out,
        max_rel_error,
    })
}

/// Random interior control and `n` random directions drawn from `seed`.
pub fn check_gradient(cfg: &RunConfig, n_directions: usize, seed: u64, lambda: f64) -> anyhow::Result<GradientReport> {
    let prob = cfg.build_problem()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let control = random_interior_control(&prob, &mut rng);
    let dirs: Vec<ControlField> = (0..n_directions).map(|_| random_direction(&prob, &mut rng)).collect();
    check_gradient_along(&prob, &control, &dirs, PenaltyState { lambda }, seed)
}

/// Mesh measures (SI units) and a tag audit.
pub fn mesh_info(cfg: &RunConfig) -> anyhow::Result<String> {
    let mesh = cfg.physical_mesh()?;
    let m = mesh.measures();
    let prob = cfg.build_problem()?;
    let dofs = &prob.disc.dofs;
    let mut s = String::new();
    let _ = writeln!(s, "vertices        {}", mesh.n_vertices());
    let _ = writeln!(s, "tets            {}", mesh.tets().len());
    let _ = writeln!(s, "boundary faces  {}", mesh.boundary_faces().len());
    let _ = writeln!(s, "design cells    {}", mesh.design_cells().len());
    let _ = writeln!(s, "volume          {:e} m^3", m.volume);
    let _ = writeln!(s, "boundary area   {:e} m^2", m.boundary_area);
    let _ = writeln!(s, "design volume   {:e} m^3", m.design_volume);
    for tag in BoundaryTag::ALL {
        let _ = writeln!(
            s,
            "{:<19} {:>5} faces  area {:e} m^2",
            tag.word(),
            mesh.faces_with_tag(tag).count(),
            m.area(tag)
        );
    }
    let grounded = dofs.dirichlet.iter().filter(|&&d| d).count();
    let _ = writeln!(s, "grounded vertices {grounded}");
    let _ = writeln!(s, "contact vertices  {}", dofs.n_control());
    let _ = writeln!(s, "free potential    {}", dofs.n_free());
    Ok(s)
}
