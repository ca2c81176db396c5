//! Monte-Carlo checks of the terminal-set implications: points drawn from
//! the product of neighbor ellipsoids must map into the own set under the
//! terminal loop and satisfy every state and input row.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::inv_sqrt;
use crate::model::DistributedSystem;
use crate::offline::TerminalIngredients;
use crate::terminal::TerminalSet;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ViolationCount {
    pub count: usize,
    /// Largest excess over the bound, `0` when none.
    pub worst: f64,
}

impl ViolationCount {
    fn record(&mut self, excess: f64, tol: f64) {
        if excess > tol {
            self.count += 1;
            self.worst = self.worst.max(excess);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SoundnessReport {
    /// Samples drawn per subsystem.
    pub samples: usize,
    pub invariance: ViolationCount,
    pub state_rows: ViolationCount,
    pub input_rows: ViolationCount,
}

impl SoundnessReport {
    pub fn total_violations(&self) -> usize {
        self.invariance.count + self.state_rows.count + self.input_rows.count
    }
}

/// Draws `s` with `‖s‖ ≤ 1`; boundary points when `on_boundary`, otherwise
/// uniform in the ball.
fn unit_ball_point(rng: &mut ChaCha8Rng, n: usize, on_boundary: bool) -> DVector<f64> {
    loop {
        let g = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
        let norm = g.norm();
        if norm < 1e-12 {
            continue;
        }
        let radius = if on_boundary {
            1.0
        } else {
            rng.random::<f64>().powf(1.0 / n as f64)
        };
        return g * (radius / norm);
    }
}

/// Checks the implications of the sets of every subsystem with `samples`
/// draws each: half on the boundary of the product, half inside.
pub fn verify_terminal_sets(
    sets: &[TerminalSet],
    ingredients: &TerminalIngredients,
    system: &DistributedSystem,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<SoundnessReport> {
    let maps = &system.maps;
    if sets.len() != maps.count() {
        return Err(Error::Dimension {
            context: "terminal sets".into(),
            expected: maps.count().to_string(),
            found: sets.len().to_string(),
        });
    }
    let shapes = ingredients
        .p
        .iter()
        .enumerate()
        .map(|(j, p)| {
            inv_sqrt(p).ok_or(Error::InvalidSubsystem {
                subsystem: j,
                reason: "terminal cost block is not positive definite".into(),
            })
        })
        .collect::<Result<Vec<DMatrix<f64>>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SoundnessReport {
        samples,
        ..Default::default()
    };
    for (i, model) in system.models.iter().enumerate() {
        let hood = system.neighbors(i);
        let phi = ingredients.closed_loop_block(i, model);
        let input_rows = &model.input_rows * &ingredients.k[i];
        let own = &sets[i];
        for s in 0..samples {
            let on_boundary = s % 2 == 0;
            let parts: Vec<DVector<f64>> = hood
                .iter()
                .map(|&j| {
                    let dir = unit_ball_point(&mut rng, maps.state_dim(j), on_boundary);
                    &sets[j].c + &shapes[j] * dir * sets[j].a
                })
                .collect();
            let x_hood = DVector::from_vec(parts.iter().flat_map(|p| p.iter().copied()).collect());
            let next = &phi * &x_hood - &own.c;
            let level = (next.transpose() * &ingredients.p[i] * &next)[0];
            report.invariance.record(level - own.alpha(), tol);
            let state = &model.state_rows * &x_hood - &model.state_rhs;
            report.state_rows.record(state.max(), tol);
            let input = &input_rows * &x_hood - &model.input_rhs;
            report.input_rows.record(input.max(), tol);
        }
    }
    Ok(report)
}
