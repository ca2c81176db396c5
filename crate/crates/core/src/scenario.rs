//! Scenario files: subsystem models, topology and run parameters.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};
use crate::model::{DistributedSystem, SubsystemModel, Topology};
use crate::ocp::Scheme;
use crate::sim::SolveMode;

pub const DEFAULT_HORIZON: usize = 2;

/// A validated system plus optional run parameters.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: DistributedSystem,
    pub horizon: usize,
    pub x0: Option<DVector<f64>>,
    pub scheme: Option<Scheme>,
    pub mode: Option<SolveMode>,
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    subsystems: Vec<SubsystemEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<SolveMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct SubsystemEntry {
    A_Ni: Vec<Vec<f64>>,
    B: Vec<Vec<f64>>,
    G_Ni: Vec<Vec<f64>>,
    g_Ni: Vec<f64>,
    H: Vec<Vec<f64>>,
    h: Vec<f64>,
    Q_Ni: Vec<Vec<f64>>,
    R: Vec<Vec<f64>>,
    /// 1-based.
    neighbors: Vec<usize>,
}

impl Scenario {
    pub fn from_system(system: DistributedSystem) -> Self {
        Self {
            system,
            horizon: DEFAULT_HORIZON,
            x0: None,
            scheme: None,
            mode: None,
            steps: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let mut models = Vec::with_capacity(file.subsystems.len());
        let mut neighbors = Vec::with_capacity(file.subsystems.len());
        for (i, s) in file.subsystems.iter().enumerate() {
            let mat = |rows: &[Vec<f64>], name: &str| -> Result<DMatrix<f64>> {
                from_rows(rows).ok_or_else(|| Error::InvalidSubsystem {
                    subsystem: i,
                    reason: format!("{name} is ragged"),
                })
            };
            models.push(SubsystemModel {
                a: mat(&s.A_Ni, "A_Ni")?,
                b: mat(&s.B, "B")?,
                state_rows: mat(&s.G_Ni, "G_Ni")?,
                state_rhs: DVector::from_column_slice(&s.g_Ni),
                input_rows: mat(&s.H, "H")?,
                input_rhs: DVector::from_column_slice(&s.h),
                q: mat(&s.Q_Ni, "Q_Ni")?,
                r: mat(&s.R, "R")?,
            });
            let hood = s
                .neighbors
                .iter()
                .map(|&j| {
                    j.checked_sub(1).ok_or_else(|| {
                        Error::InvalidTopology(format!("subsystem {}: neighbor indices are 1-based", i + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            neighbors.push(hood);
        }
        let system = DistributedSystem::new(models, Topology::new(neighbors)?)?;
        let x0 = file.x0.map(DVector::from_vec);
        if let Some(x0) = &x0 {
            let n = system.maps.global_state_dim();
            if x0.len() != n {
                return Err(Error::Dimension {
                    context: "x0".into(),
                    expected: n.to_string(),
                    found: x0.len().to_string(),
                });
            }
        }
        Ok(Self {
            system,
            horizon: file.horizon.unwrap_or(DEFAULT_HORIZON),
            x0,
            scheme: file.scheme,
            mode: file.mode,
            steps: file.steps,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let topo = self.system.topology();
        let file = ScenarioFile {
            subsystems: self
                .system
                .models
                .iter()
                .enumerate()
                .map(|(i, m)| SubsystemEntry {
                    A_Ni: to_rows(&m.a),
                    B: to_rows(&m.b),
                    G_Ni: to_rows(&m.state_rows),
                    g_Ni: m.state_rhs.iter().copied().collect(),
                    H: to_rows(&m.input_rows),
                    h: m.input_rhs.iter().copied().collect(),
                    Q_Ni: to_rows(&m.q),
                    R: to_rows(&m.r),
                    neighbors: topo.neighbors(i).iter().map(|j| j + 1).collect(),
                })
                .collect(),
            horizon: Some(self.horizon),
            x0: self.x0.as_ref().map(|x| x.iter().copied().collect()),
            scheme: self.scheme,
            mode: self.mode,
            steps: self.steps,
        };
        serde_json::to_value(file).expect("plain data serializes")
    }
}

/// Two coupled scalar subsystems, `A = [[2, 0.5], [0.5, 2]]`, `B = I`, each
/// state in `[−5, 5]`, each input in `[−0.25, 1]`, `Q_Ni = 0.5·I₂`, `R_i = 0.1`.
pub fn benchmark_system() -> DistributedSystem {
    let model = |own: usize| {
        let other = 1 - own;
        let mut a = DMatrix::zeros(1, 2);
        a[(0, own)] = 2.0;
        a[(0, other)] = 0.5;
        let mut g = DMatrix::zeros(2, 2);
        g[(0, own)] = 1.0;
        g[(1, own)] = -1.0;
        SubsystemModel {
            a,
            b: dmatrix![1.0],
            state_rows: g,
            state_rhs: dvector![5.0, 5.0],
            input_rows: dmatrix![1.0; -1.0],
            input_rhs: dvector![1.0, 0.25],
            q: DMatrix::identity(2, 2) * 0.5,
            r: dmatrix![0.1],
        }
    };
    DistributedSystem::new(vec![model(0), model(1)], Topology::complete(2))
        .expect("benchmark system is valid")
}

/// The three initial states of the benchmark comparison.
pub fn benchmark_initial_states() -> [DVector<f64>; 3] {
    [dvector![-0.1, -0.4], dvector![-0.8, -0.1], dvector![-0.6, -0.6]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_global_matrices() {
        let sys = benchmark_system();
        assert_eq!(sys.global.a, dmatrix![2.0, 0.5; 0.5, 2.0]);
        assert_eq!(sys.global.b, DMatrix::identity(2, 2));
        assert_eq!(sys.global.q, DMatrix::identity(2, 2));
    }

    #[test]
    fn json_round_trip() {
        let mut sc = Scenario::from_system(benchmark_system());
        sc.x0 = Some(dvector![-0.1, -0.4]);
        sc.scheme = Some(Scheme::Rlxd);
        let text = serde_json::to_string(&sc.to_json()).unwrap();
        let back = Scenario::from_json_str(&text).unwrap();
        assert_eq!(back.system.models, sc.system.models);
        assert_eq!(back.x0, sc.x0);
        assert_eq!(back.scheme, Some(Scheme::Rlxd));
        assert_eq!(back.horizon, DEFAULT_HORIZON);
    }

    #[test]
    fn zero_based_neighbor_is_rejected() {
        let mut v = Scenario::from_system(benchmark_system()).to_json();
        v["subsystems"][0]["neighbors"] = serde_json::json!([0, 1]);
        assert!(Scenario::from_json_str(&v.to_string()).is_err());
    }

    #[test]
    fn wrong_x0_length_is_rejected() {
        let mut v = Scenario::from_system(benchmark_system()).to_json();
        v["x0"] = serde_json::json!([1.0]);
        assert!(Scenario::from_json_str(&v.to_string()).is_err());
    }
}
