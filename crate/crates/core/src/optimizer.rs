//! Projected Dai–Yuan conjugate gradients with penalty continuation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{project_values, ControlField, Evaluation, ObjectiveBreakdown, PenaltyState, ReducedProblem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_ncg_iters: usize,
    /// Stop a stage once `|j_old − j_new| / |j_old|` drops below this.
    pub rel_obj_tol: f64,
    /// Penalty parameters, one stage each. A single `0` runs without penalty.
    pub lambda_schedule: Vec<f64>,
    pub violation_stop_k: f64,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_trials: usize,
    /// Steepest-descent restart period.
    pub restart_every: usize,
    pub dy_denominator_eps: f64,
    /// Stop a stage when the projected gradient step `‖u − P(u − g)‖` falls below this.
    pub gradient_tol: f64,
    /// First trial step moves the largest entry by this fraction of the control bound.
    pub first_step_fraction: f64,
    /// Uniform start value as a fraction of the control bound; `u ≡ 0` is stationary.
    pub initial_control_fraction: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_ncg_iters: 150,
            rel_obj_tol: 1e-5,
            lambda_schedule: (0..=10).map(|i| 10f64.powi(i)).collect(),
            violation_stop_k: 1e-2,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_trials: 30,
            restart_every: 50,
            dy_denominator_eps: 1e-14,
            gradient_tol: 1e-12,
            first_step_fraction: 0.25,
            initial_control_fraction: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn free() -> Self {
        OptimizerConfig {
            lambda_schedule: vec![0.0],
            ..OptimizerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("optimizer setting {what}")));
        if self.lambda_schedule.is_empty() || self.lambda_schedule.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("lambda_schedule must be nonempty, finite and nonnegative");
        }
        if self.lambda_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return bad("lambda_schedule must be strictly increasing");
        }
        let positive = [
            self.rel_obj_tol,
            self.violation_stop_k,
            self.armijo_c1,
            self.dy_denominator_eps,
            self.gradient_tol,
            self.first_step_fraction,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return bad("tolerances and step fractions must be positive");
        }
        if !(self.armijo_c1 < 1.0 && self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("armijo_c1 and backtrack must lie in (0, 1)");
        }
        if self.max_trials == 0 || self.max_ncg_iters == 0 || self.restart_every == 0 {
            return bad("iteration limits must be positive");
        }
        if !(0.0..=1.0).contains(&self.initial_control_fraction) {
            return bad("initial_control_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), m)| m * x * y).sum()
}

/// Dai–Yuan update `d = −g + β d_prev`, `β = ⟨g,g⟩ / ⟨d_prev, g − g_prev⟩`.
///
/// Returns the direction and whether it was reset to steepest descent.
pub fn dai_yuan_direction(
    g: &[f64],
    prev: Option<(&[f64], &[f64])>,
    w: &[f64],
    denominator_eps: f64,
) -> (Vec<f64>, bool) {
    let steepest = || g.iter().map(|v| -v).collect::<Vec<_>>();
    let Some((g_prev, d_prev)) = prev else {
        return (steepest(), true);
    };
    let y: Vec<f64> = g.iter().zip(g_prev).map(|(a, b)| a - b).collect();
    let denom = weighted_dot(d_prev, &y, w);
    if denom <= denominator_eps {
        return (steepest(), true);
    }
    let beta = weighted_dot(g, g, w) / denom;
    let d: Vec<f64> = g.iter().zip(d_prev).map(|(gi, di)| -gi + beta * di).collect();
    if weighted_dot(&d, g, w) >= 0.0 {
        return (steepest(), true);
    }
    (d, false)
}

#[derive(Clone, Debug)]
pub enum LineSearch<T> {
    Accepted {
        alpha: f64,
        point: Vec<f64>,
        value: f64,
        payload: T,
    },
    /// No trial satisfied the Armijo condition.
    Stagnation,
    /// The projected arc does not move the iterate.
    NoProgress,
}

/// Settings of [`line_search`].
#[derive(Clone, Copy, Debug)]
pub struct ArmijoRule {
    pub c1: f64,
    pub backtrack: f64,
    pub max_trials: usize,
}

/// Backtracking Armijo search along `α ↦ P(u + α d)`.
///
/// Failed evaluations count as infinite objective values.
#[allow(clippy::too_many_arguments)]
pub fn line_search<T, F, P>(
    mut eval: F,
    project: P,
    u: &[f64],
    value: f64,
    d: &[f64],
    g: &[f64],
    w: &[f64],
    alpha0: f64,
    rule: ArmijoRule,
) -> LineSearch<T>
where
    F: FnMut(&[f64]) -> Result<(f64, T)>,
    P: Fn(&mut [f64]),
{
    let mut alpha = alpha0;
    let mut moved = false;
    for _ in 0..rule.max_trials {
        let mut trial: Vec<f64> = u.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        project(&mut trial);
        let step: Vec<f64> = trial.iter().zip(u).map(|(a, b)| a - b).collect();
        if step.iter().any(|&s| s != 0.0) {
            moved = true;
            let slope = weighted_dot(g, &step, w);
            match eval(&trial) {
                Ok((v, payload)) if v.is_finite() && v < value && v <= value + rule.c1 * slope => {
                    return LineSearch::Accepted {
                        alpha,
                        point: trial,
                        value: v,
                        payload,
                    };
                }
                Ok(_) => {}
                Err(e) => log::debug!("line search trial α={alpha:.3e} rejected: {e}"),
            }
        }
        alpha *= rule.backtrack;
    }
    if moved {
        LineSearch::Stagnation
    } else {
        LineSearch::NoProgress
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    RelativeChange,
    Stationary,
    MaxIterations,
    Stagnation,
    ViolationReached,
    ScheduleExhausted,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::RelativeChange => "relative_change",
            Termination::Stationary => "stationary",
            Termination::MaxIterations => "max_iterations",
            Termination::Stagnation => "stagnation",
            Termination::ViolationReached => "violation_reached",
            Termination::ScheduleExhausted => "schedule_exhausted",
        }
    }
}

/// One accepted iterate (iteration 0 is the stage start).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub stage: usize,
    pub lambda: f64,
    pub iter: usize,
    pub objective: ObjectiveBreakdown,
    pub grad_norm: f64,
    pub violation_k: f64,
    pub step: f64,
}

impl HistoryRow {
    pub const CSV_HEADER: &'static str =
        "stage,lambda,iter,total,tracking,gradient_term,tikhonov,penalty,grad_norm,violation_K,step";

    pub fn csv(&self) -> String {
        let o = &self.objective;
        format!(
            "{},{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.stage,
            self.lambda,
            self.iter,
            o.total,
            o.tracking,
            o.gradient_term,
            o.tikhonov,
            o.penalty,
            self.grad_norm,
            self.violation_k,
            self.step
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub lambda: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub objective: ObjectiveBreakdown,
    pub violation_k: f64,
}

#[derive(Clone, Debug)]
pub struct OptResult {
    pub control: ControlField,
    pub final_eval: Evaluation,
    pub history: Vec<HistoryRow>,
    pub stages: Vec<StageSummary>,
    pub forward_solves: usize,
    pub adjoint_solves: usize,
    pub termination: Termination,
}

impl OptResult {
    pub fn history_csv(&self) -> String {
        let mut s = String::from(HistoryRow::CSV_HEADER);
        s.push('\n');
        for row in &self.history {
            s.push_str(&row.csv());
            s.push('\n');
        }
        s
    }
}

struct Driver<'a> {
    prob: &'a ReducedProblem,
    cfg: &'a OptimizerConfig,
    weights: Vec<f64>,
    forward_solves: usize,
    adjoint_solves: usize,
}

impl Driver<'_> {
    fn field(&self, values: Vec<f64>) -> ControlField {
        ControlField::from_values(self.prob.steps(), self.prob.n_control(), values).expect("shape preserved")
    }

    fn evaluate(&mut self, u: &ControlField, penalty: &PenaltyState) -> Result<Evaluation> {
        self.forward_solves += 1;
        self.prob.evaluate(u, penalty)
    }

    fn gradient(&mut self, u: &ControlField, ev: &Evaluation, penalty: &PenaltyState) -> Result<ControlField> {
        self.adjoint_solves += 1;
        Ok(self.prob.gradient(u, &ev.traj, penalty)?.0)
    }

    /// `‖u − P(u − g)‖` in the control inner product.
    fn projected_gradient_norm(&self, u: &ControlField, g: &ControlField) -> f64 {
        let mut p = self.field(u.values().iter().zip(g.values()).map(|(a, b)| a - b).collect());
        self.prob.project(&mut p);
        let r: Vec<f64> = u.values().iter().zip(p.values()).map(|(a, b)| a - b).collect();
        weighted_dot(&r, &r, &self.weights).sqrt()
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        history: &mut Vec<HistoryRow>,
        stage: usize,
        lambda: f64,
        iter: usize,
        ev: &Evaluation,
        u: &ControlField,
        g: &ControlField,
        step: f64,
    ) {
        let row = HistoryRow {
            stage,
            lambda,
            iter,
            objective: ev.objective,
            grad_norm: self.projected_gradient_norm(u, g),
            violation_k: ev.max_violation_k,
            step,
        };
        log::info!(
            "stage {stage} λ={lambda:.1e} iter {iter}: j={:.8e} violation {:.3e} K",
            row.objective.total,
            row.violation_k
        );
        history.push(row);
    }

    /// Projected NCG at fixed penalty, starting from an evaluated iterate.
    fn stage(
        &mut self,
        stage: usize,
        penalty: PenaltyState,
        mut u: ControlField,
        mut ev: Evaluation,
        history: &mut Vec<HistoryRow>,
    ) -> Result<(ControlField, Evaluation, usize, Termination)> {
        let u_max = self.prob.scaled.u_max;
        let prob = self.prob;
        let rule = ArmijoRule {
            c1: self.cfg.armijo_c1,
            backtrack: self.cfg.backtrack,
            max_trials: self.cfg.max_trials,
        };
        let mut g = self.gradient(&u, &ev, &penalty)?;
        self.record(history, stage, penalty.lambda, 0, &ev, &u, &g, 0.0);
        let mut memory: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut alpha_prev: Option<f64> = None;
        for iter in 1..=self.cfg.max_ncg_iters {
            if self.projected_gradient_norm(&u, &g) <= self.cfg.gradient_tol {
                return Ok((u, ev, iter - 1, Termination::Stationary));
            }
            let restart_due = (iter - 1) % self.cfg.restart_every == 0;
            let prev = if restart_due {
                None
            } else {
                memory.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()))
            };
            let (mut d, mut restarted) =
                dai_yuan_direction(g.values(), prev, &self.weights, self.cfg.dy_denominator_eps);
            let outcome = loop {
                let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let first = self.cfg.first_step_fraction * u_max / dmax.max(f64::MIN_POSITIVE);
                let alpha0 = alpha_prev.map_or(first, |a| 2.0 * a);
                let mut evals = 0usize;
                let res = line_search(
                    |x| {
                        evals += 1;
                        let c = ControlField::from_values(prob.steps(), prob.n_control(), x.to_vec())?;
                        let e = prob.evaluate(&c, &penalty)?;
                        Ok((e.objective.total, e))
                    },
                    |x| project_values(x, prob.n_control(), u_max),
                    u.values(),
                    ev.objective.total,
                    &d,
                    g.values(),
                    &self.weights,
                    alpha0,
                    rule,
                );
                self.forward_solves += evals;
                match res {
                    LineSearch::Accepted { .. } => break res,
                    _ if !restarted => {
                        d = g.values().iter().map(|v| -v).collect();
                        restarted = true;
                    }
                    other => break other,
                }
            };
            let (alpha, point, payload) = match outcome {
                LineSearch::Accepted {
                    alpha, point, payload, ..
                } => (alpha, point, payload),
                LineSearch::NoProgress => return Ok((u, ev, iter - 1, Termination::Stationary)),
                LineSearch::Stagnation => return Ok((u, ev, iter - 1, Termination::Stagnation)),
            };
            let old = ev.objective.total;
            let new_u = self.field(point);
            let new_g = self.gradient(&new_u, &payload, &penalty)?;
            memory = Some((g.values().to_vec(), d));
            alpha_prev = Some(alpha);
            u = new_u;
            ev = payload;
            g = new_g;
            self.record(history, stage, penalty.lambda, iter, &ev, &u, &g, alpha);
            let rel = (old - ev.objective.total).abs() / old.abs().max(f64::MIN_POSITIVE);
            if rel < self.cfg.rel_obj_tol {
                return Ok((u, ev, iter, Termination::RelativeChange));
            }
        }
        Ok((u, ev, self.cfg.max_ncg_iters, Termination::MaxIterations))
    }
}

/// Penalty continuation from the uniform start control.
pub fn solve_ocp(prob: &ReducedProblem, cfg: &OptimizerConfig) -> Result<OptResult> {
    let mut u = ControlField::constant(
        prob.steps(),
        prob.n_control(),
        cfg.initial_control_fraction * prob.scaled.u_max,
    );
    prob.project(&mut u);
    solve_ocp_from(prob, cfg, u)
}

/// Penalty continuation from a given control (projected first).
pub fn solve_ocp_from(prob: &ReducedProblem, cfg: &OptimizerConfig, mut u: ControlField) -> Result<OptResult> {
    cfg.validate()?;
    prob.project(&mut u);
    let mut driver = Driver {
        prob,
        cfg,
        weights: prob.weights(),
        forward_solves: 0,
        adjoint_solves: 0,
    };
    let mut history = Vec::new();
    let mut stages = Vec::new();
    let penalized = cfg.lambda_schedule.iter().any(|&l| l > 0.0);
    let mut ev = driver.evaluate(
        &u,
        &PenaltyState {
            lambda: cfg.lambda_schedule[0],
        },
    )?;
    let mut termination = Termination::ScheduleExhausted;
    for (s, &lambda) in cfg.lambda_schedule.iter().enumerate() {
        let penalty = PenaltyState { lambda };
        if s > 0 {
            // Same trajectory, new weight on the penalty term.
            let (objective, v) = prob.objective(&ev.traj, &u, &penalty)?;
            ev.objective = objective;
            ev.max_violation_k = v;
        }
        let (nu, nev, iterations, stop) = driver.stage(s, penalty, u, ev, &mut history)?;
        u = nu;
        ev = nev;
        stages.push(StageSummary {
            lambda,
            iterations,
            termination: stop,
            objective: ev.objective,
            violation_k: ev.max_violation_k,
        });
        termination = stop;
        if penalized && ev.max_violation_k <= cfg.violation_stop_k {
            termination = Termination::ViolationReached;
            break;
        }
    }
    if penalized && termination != Termination::ViolationReached {
        termination = Termination::ScheduleExhausted;
    }
    Ok(OptResult {
        control: u,
        final_eval: ev,
        history,
        stages,
        forward_solves: driver.forward_solves,
        adjoint_solves: driver.adjoint_solves,
        termination,
    })
}
