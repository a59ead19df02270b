//! Run configuration: TOML sections mirroring the solver settings.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use thermistor_core::fem::Discretization;
use thermistor_core::materials::{make_scaling, MaterialModel, ScaledModel, ScalingConfig};
use thermistor_core::mesh::{BoxSpec, Mesh};
use thermistor_core::objective::{ObjectiveParams, ReducedProblem};
use thermistor_core::optimizer::OptimizerConfig;
use thermistor_core::state::{NewtonConfig, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// No state constraint.
    Free,
    /// Penalty continuation on `θ ≤ θ_max`.
    Constrained,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Free => "free",
            Scenario::Constrained => "constrained",
        }
    }
}

/// Builtin box (lengths in m) or a mesh file with coordinates in m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dims_m: [f64; 3],
    pub contact_fraction: f64,
    pub design_depth: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            file: None,
            nx: 5,
            ny: 3,
            nz: 3,
            dims_m: [0.1, 0.06, 0.06],
            contact_fraction: 0.2,
            design_depth: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t0_s: f64,
    pub t1_s: f64,
    pub steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            t0_s: 0.0,
            t1_s: 2.0,
            steps: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureConfig {
    pub initial_k: f64,
    pub ambient_k: f64,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        TemperatureConfig {
            initial_k: 290.0,
            ambient_k: 290.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Points (m) whose temperature history is written.
    pub probes: Vec<[f64; 3]>,
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub temperatures: TemperatureConfig,
    pub material: MaterialModel,
    pub scaling: ScalingConfig,
    pub objective: ObjectiveParams,
    pub optimizer: OptimizerConfig,
    pub newton: NewtonConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::Constrained,
            seed: 0,
            output_dir: PathBuf::from("out"),
            probes: vec![[0.05, 0.03, 0.06], [0.01, 0.03, 0.06], [0.05, 0.03, 0.03]],
            mesh: MeshConfig::default(),
            time: TimeConfig::default(),
            temperatures: TemperatureConfig::default(),
            material: MaterialModel::default(),
            scaling: ScalingConfig::default(),
            objective: ObjectiveParams::default(),
            optimizer: OptimizerConfig::default(),
            newton: NewtonConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<RunConfig> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Reads a config file; relative mesh paths resolve against its directory.
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = RunConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let (Some(file), Some(dir)) = (cfg.mesh.file.as_mut(), path.parent()) {
            if file.is_relative() {
                *file = dir.join(&*file);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if let Some(f) = &self.mesh.file {
            if !f.is_file() {
                bail!("mesh file {} does not exist", f.display());
            }
        }
        self.material.validate()?;
        self.objective
            .validate(self.temperatures.initial_k.max(self.temperatures.ambient_k))?;
        self.optimizer_config().validate()?;
        if self.scenario == Scenario::Constrained && self.optimizer.lambda_schedule.iter().all(|&l| l == 0.0) {
            bail!("constrained scenario needs a positive penalty schedule");
        }
        if self.probes.iter().flatten().any(|c| !c.is_finite()) {
            bail!("probe coordinates must be finite");
        }
        Ok(())
    }

    /// Optimizer settings with the scenario applied.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        match self.scenario {
            Scenario::Free => OptimizerConfig {
                lambda_schedule: vec![0.0],
                ..self.optimizer.clone()
            },
            Scenario::Constrained => self.optimizer.clone(),
        }
    }

    /// Mesh in meters.
    pub fn physical_mesh(&self) -> anyhow::Result<Mesh> {
        Ok(match &self.mesh.file {
            Some(f) => Mesh::load(f)?,
            None => Mesh::build_box(&BoxSpec {
                nx: self.mesh.nx,
                ny: self.mesh.ny,
                nz: self.mesh.nz,
                dims: self.mesh.dims_m,
                contact_fraction: self.mesh.contact_fraction,
                design_depth: self.mesh.design_depth,
            })?,
        })
    }

    pub fn scaled_model(&self) -> anyhow::Result<ScaledModel> {
        let s = make_scaling(&self.material, &self.scaling, self.temperatures.initial_k)?;
        Ok(ScaledModel::new(&self.material, s, self.temperatures.ambient_k))
    }

    pub fn build_problem(&self) -> anyhow::Result<ReducedProblem> {
        self.validate()?;
        let model = self.scaled_model()?;
        let mesh = self.physical_mesh()?.scaled(1.0 / self.scaling.length)?;
        let disc = Discretization::new(mesh)?;
        let t = self.scaling.time;
        let grid = TimeGrid::new(self.time.t0_s / t, self.time.t1_s / t, self.time.steps)?;
        Ok(ReducedProblem::new(
            disc,
            model,
            grid,
            self.temperatures.initial_k,
            self.objective.clone(),
            self.newton.clone(),
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_sections_use_defaults() {
        let c = RunConfig::from_toml("scenario = \"free\"\n[time]\nsteps = 10\n[objective]\nbeta = 1e-4\n").unwrap();
        assert_eq!(c.scenario, Scenario::Free);
        assert_eq!(c.time.steps, 10);
        assert_eq!(c.time.t1_s, 2.0);
        assert_eq!(c.objective.beta, 1e-4);
        assert_eq!(c.objective.gamma, 1e-8);
        assert_eq!(c.optimizer_config().lambda_schedule, vec![0.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[time]\nstep = 10\n").is_err());
        assert!(RunConfig::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn shipped_desk_config_lists_the_defaults() {
        let c = RunConfig::from_toml(include_str!("../../../configs/desk.toml")).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn missing_mesh_file_fails_validation() {
        let mut c = RunConfig::default();
        c.mesh.file = Some(PathBuf::from("/nonexistent/mesh.txt"));
        assert!(c.validate().is_err());
    }

    #[test]
    fn problem_is_nondimensional() {
        let p = RunConfig::default().build_problem().unwrap();
        let m = p.disc.mesh.measures();
        assert!((m.volume - 0.36).abs() < 1e-12);
        assert!((p.grid.dt - 0.01).abs() < 1e-15);
        assert!((p.scaled.u_max - 1.0).abs() < 1e-15);
        assert!((p.theta0[0] - 290.0 / 1500.0).abs() < 1e-15);
    }
}
