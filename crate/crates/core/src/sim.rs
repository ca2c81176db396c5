//! Receding-horizon closed-loop simulation and feasibility sweeps.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{run_consensus, AdmmMessage, AdmmOptions, AdmmStatus};
use crate::error::Result;
use crate::model::DistributedSystem;
use crate::ocp::{solve_ocp, OcpOptions, OcpOutcome, OcpSolution, Scheme};
use crate::offline::TerminalIngredients;
use crate::sdp::SolveStatus;
use crate::terminal::TerminalSet;

/// How each online problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    Central,
    Admm,
}

impl std::str::FromStr for SolveMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "central" | "centralized" => Ok(SolveMode::Central),
            "admm" => Ok(SolveMode::Admm),
            other => Err(crate::error::Error::InvalidTopology(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for SolveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveMode::Central => "central",
            SolveMode::Admm => "admm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub ocp: OcpOptions,
    pub admm: AdmmOptions,
}

/// Status and, when optimal, the solution of one online problem.
#[derive(Debug, Clone)]
pub struct StepSolve {
    pub status: SolveStatus,
    pub solution: Option<OcpSolution>,
    pub admm_iterations: Option<usize>,
    pub messages: Vec<AdmmMessage>,
    pub note: Option<String>,
}

/// Solves the online problem at `x0` in the requested mode.
pub fn solve_step(
    scheme: Scheme,
    x0: &DVector<f64>,
    horizon: usize,
    ingredients: &TerminalIngredients,
    system: &DistributedSystem,
    mode: SolveMode,
    options: &SimOptions,
) -> Result<StepSolve> {
    match mode {
        SolveMode::Central => {
            let out = solve_ocp(scheme, x0, horizon, ingredients, system, &options.ocp)?;
            let note = match &out {
                OcpOutcome::NumericalFailure(m) => Some(m.clone()),
                _ => None,
            };
            Ok(StepSolve {
                status: out.status(),
                solution: out.solution().cloned(),
                admm_iterations: None,
                messages: Vec::new(),
                note,
            })
        }
        SolveMode::Admm => {
            let admm = AdmmOptions {
                pin_center: options.ocp.pin_center,
                ..options.admm
            };
            let rep = run_consensus(scheme, x0, horizon, ingredients, system, &admm)?;
            let (status, note) = match rep.status {
                AdmmStatus::Converged => (SolveStatus::Optimal, None),
                AdmmStatus::Infeasible => (
                    SolveStatus::Infeasible,
                    rep.failed_subsystem.map(|i| format!("local problem {} infeasible", i + 1)),
                ),
                AdmmStatus::NoConvergence => (
                    SolveStatus::NumericalFailure,
                    Some(format!("no consensus after {} rounds", rep.iterations)),
                ),
                AdmmStatus::NumericalFailure => (
                    SolveStatus::NumericalFailure,
                    rep.failed_subsystem.map(|i| format!("local problem {} failed", i + 1)),
                ),
            };
            Ok(StepSolve {
                status,
                solution: if status == SolveStatus::Optimal { rep.solution } else { None },
                admm_iterations: Some(rep.iterations),
                messages: rep.messages,
                note,
            })
        }
    }
}

/// One closed-loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub t: usize,
    pub x: DVector<f64>,
    /// Applied input; `None` when the step had no solution.
    pub u: Option<DVector<f64>>,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub sets: Vec<TerminalSet>,
    pub admm_iterations: Option<usize>,
    pub messages: Vec<AdmmMessage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub scheme: Scheme,
    pub horizon: usize,
    pub mode: SolveMode,
    pub records: Vec<SimRecord>,
    /// State after the last applied input.
    pub final_state: DVector<f64>,
    /// Why the run stopped early, if it did.
    pub truncated: Option<String>,
}

impl SimTrace {
    pub fn all_optimal(&self) -> bool {
        self.truncated.is_none() && self.records.iter().all(|r| r.status == SolveStatus::Optimal)
    }

    pub fn infeasible_steps(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.status == SolveStatus::Infeasible)
            .count()
    }

    /// `Σ_t x(t)ᵀ Q x(t) + u(t)ᵀ R u(t)` over the applied inputs.
    pub fn closed_loop_cost(&self, system: &DistributedSystem) -> f64 {
        self.records
            .iter()
            .filter_map(|r| r.u.as_ref().map(|u| system.global.stage_cost(&r.x, u)))
            .sum()
    }

    pub fn first_objective(&self) -> Option<f64> {
        self.records.first().and_then(|r| r.objective)
    }

    /// Writes `t,x1..xn,u1..um,status,J,c1..cn,a1..aM`, one row per step.
    pub fn write_csv(&self, out: &mut dyn Write, system: &DistributedSystem) -> std::io::Result<()> {
        let n = system.maps.global_state_dim();
        let m = system.maps.global_input_dim();
        let count = system.count();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|k| format!("x{k}")));
        header.extend((1..=m).map(|k| format!("u{k}")));
        header.push("status".into());
        header.push("J".into());
        header.extend((1..=n).map(|k| format!("c{k}")));
        header.extend((1..=count).map(|k| format!("a{k}")));
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let mut row = vec![r.t.to_string()];
            row.extend(r.x.iter().map(|v| format_num(*v)));
            match &r.u {
                Some(u) => row.extend(u.iter().map(|v| format_num(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), m)),
            }
            row.push(r.status.to_string());
            row.push(r.objective.map(format_num).unwrap_or_default());
            if r.sets.len() == count {
                row.extend(r.sets.iter().flat_map(|s| s.c.iter().map(|v| format_num(*v))));
                row.extend(r.sets.iter().map(|s| format_num(s.a)));
            } else {
                row.extend(std::iter::repeat_n(String::new(), n + count));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Newline-delimited JSON of the ADMM messages of every step.
    pub fn write_message_trace(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for r in &self.records {
            for msg in &r.messages {
                let mut v = serde_json::to_value(msg).map_err(std::io::Error::other)?;
                v["step"] = serde_json::json!(r.t);
                writeln!(out, "{v}")?;
            }
        }
        Ok(())
    }
}

fn format_num(v: f64) -> String {
    format!("{v:.10e}")
}

/// Closed-loop run: solve, apply the first input, advance the plant.
///
/// Stops at the first step without an optimal solution and records why.
#[allow(clippy::too_many_arguments)]
pub fn run(
    scheme: Scheme,
    x0: &DVector<f64>,
    horizon: usize,
    steps: usize,
    ingredients: &TerminalIngredients,
    system: &DistributedSystem,
    mode: SolveMode,
    options: &SimOptions,
) -> Result<SimTrace> {
    if steps == 0 {
        return Err(crate::error::Error::Dimension {
            context: "steps".into(),
            expected: "at least 1".into(),
            found: "0".into(),
        });
    }
    let mut x = x0.clone();
    let mut records = Vec::with_capacity(steps);
    let mut truncated = None;
    for t in 0..steps {
        let step = solve_step(scheme, &x, horizon, ingredients, system, mode, options)?;
        let Some(sol) = step.solution else {
            truncated = Some(format!(
                "step {t}: {}{}",
                step.status,
                step.note.map(|n| format!(" ({n})")).unwrap_or_default()
            ));
            records.push(SimRecord {
                t,
                x: x.clone(),
                u: None,
                status: step.status,
                objective: None,
                sets: Vec::new(),
                admm_iterations: step.admm_iterations,
                messages: step.messages,
            });
            break;
        };
        let u = sol.global_input(0);
        let next = system.global.step(&x, &u);
        records.push(SimRecord {
            t,
            x: x.clone(),
            u: Some(u),
            status: SolveStatus::Optimal,
            objective: Some(sol.objective),
            sets: sol.sets.clone(),
            admm_iterations: step.admm_iterations,
            messages: step.messages,
        });
        x = next;
    }
    Ok(SimTrace {
        scheme,
        horizon,
        mode,
        records,
        final_state: x,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub scheme: Scheme,
    pub x0: DVector<f64>,
    pub status: SolveStatus,
    pub objective: Option<f64>,
}

/// Per-scheme feasible count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub scheme: Scheme,
    pub points: usize,
    pub feasible: usize,
    pub numerical_failures: usize,
}

/// Solves the first online problem at every grid point for every scheme.
/// Runs on at most `jobs` threads (`0` means the rayon default); output
/// order is `schemes × grid`, independent of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn feasibility_sweep(
    schemes: &[Scheme],
    grid: &[DVector<f64>],
    horizon: usize,
    ingredients: &TerminalIngredients,
    system: &DistributedSystem,
    mode: SolveMode,
    options: &SimOptions,
    jobs: usize,
) -> Result<Vec<SweepPoint>> {
    let tasks: Vec<(Scheme, &DVector<f64>)> = schemes
        .iter()
        .flat_map(|&s| grid.iter().map(move |x| (s, x)))
        .collect();
    let work = || {
        tasks
            .par_iter()
            .map(|&(scheme, x0)| {
                let step = solve_step(scheme, x0, horizon, ingredients, system, mode, options)?;
                Ok(SweepPoint {
                    scheme,
                    x0: x0.clone(),
                    status: step.status,
                    objective: step.solution.map(|s| s.objective),
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| crate::error::Error::NumericalFailure(format!("thread pool: {e}")))?;
    pool.install(work)
}

pub fn summarize(points: &[SweepPoint]) -> Vec<SweepSummary> {
    let mut out: Vec<SweepSummary> = Vec::new();
    for p in points {
        let entry = match out.iter_mut().find(|s| s.scheme == p.scheme) {
            Some(e) => e,
            None => {
                out.push(SweepSummary {
                    scheme: p.scheme,
                    points: 0,
                    feasible: 0,
                    numerical_failures: 0,
                });
                out.last_mut().expect("just pushed")
            }
        };
        entry.points += 1;
        match p.status {
            SolveStatus::Optimal => entry.feasible += 1,
            SolveStatus::NumericalFailure | SolveStatus::Unbounded => entry.numerical_failures += 1,
            SolveStatus::Infeasible => {}
        }
    }
    out
}

/// `scheme,x1..xn,status,J`, one row per point.
pub fn write_sweep_csv(points: &[SweepPoint], out: &mut dyn Write) -> std::io::Result<()> {
    let n = points.first().map_or(0, |p| p.x0.len());
    let mut header = vec!["scheme".to_string()];
    header.extend((1..=n).map(|k| format!("x{k}")));
    header.push("status".into());
    header.push("J".into());
    writeln!(out, "{}", header.join(","))?;
    for p in points {
        let mut row = vec![p.scheme.tag().to_string()];
        row.extend(p.x0.iter().map(|v| format_num(*v)));
        row.push(p.status.to_string());
        row.push(p.objective.map(format_num).unwrap_or_default());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// `k × k` grid over `[lo, hi]²`, row-major in the first coordinate.
pub fn square_grid(lo: f64, hi: f64, k: usize) -> Vec<DVector<f64>> {
    let at = |i: usize| {
        if k <= 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (k - 1) as f64
        }
    };
    (0..k)
        .flat_map(|i| (0..k).map(move |j| DVector::from_vec(vec![at(i), at(j)])))
        .collect()
}
