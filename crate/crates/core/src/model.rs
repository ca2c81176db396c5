//! Subsystem dynamics, neighborhood topology and the selection-map algebra
//! relating local, neighborhood and global vectors.
//!
//! Neighborhoods are stored sorted ascending with the subsystem itself
//! included, and every neighborhood vector stacks its blocks in that order.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, block_diagonal, min_eigenvalue};

/// Local model of one subsystem `i`.
///
/// `x_i⁺ = a · x_Nᵢ + b · u_i`, state rows `state_rows · x_Nᵢ ≤ state_rhs`,
/// input rows `input_rows · u_i ≤ input_rhs` and stage cost
/// `x_Nᵢᵀ q x_Nᵢ + u_iᵀ r u_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub state_rows: DMatrix<f64>,
    pub state_rhs: DVector<f64>,
    pub input_rows: DMatrix<f64>,
    pub input_rhs: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl SubsystemModel {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn neighborhood_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_state_rows(&self) -> usize {
        self.state_rows.nrows()
    }

    pub fn num_input_rows(&self) -> usize {
        self.input_rows.nrows()
    }

    /// Structural checks against the declared neighborhood size. Positivity of
    /// the constraint bounds is checked per scheme, see
    /// [`SubsystemModel::check_origin_interior`].
    pub fn validate(&self, id: usize, neighborhood_dim: usize) -> Result<()> {
        let fail = |reason: String| Error::InvalidSubsystem { subsystem: id, reason };
        let n = self.state_dim();
        let m = self.input_dim();
        if n == 0 || m == 0 {
            return Err(fail("state and input dimensions must be positive".into()));
        }
        if self.a.ncols() != neighborhood_dim {
            return Err(fail(format!(
                "A_Ni has {} columns but the neighborhood has dimension {neighborhood_dim}",
                self.a.ncols()
            )));
        }
        if self.b.nrows() != n {
            return Err(fail(format!("B has {} rows, expected {n}", self.b.nrows())));
        }
        if self.state_rows.ncols() != neighborhood_dim
            || self.state_rows.nrows() != self.state_rhs.len()
        {
            return Err(fail(format!(
                "state constraints are {}x{} with {} bounds, expected {neighborhood_dim} columns",
                self.state_rows.nrows(),
                self.state_rows.ncols(),
                self.state_rhs.len()
            )));
        }
        if self.input_rows.ncols() != m || self.input_rows.nrows() != self.input_rhs.len() {
            return Err(fail(format!(
                "input constraints are {}x{} with {} bounds, expected {m} columns",
                self.input_rows.nrows(),
                self.input_rows.ncols(),
                self.input_rhs.len()
            )));
        }
        if self.q.shape() != (neighborhood_dim, neighborhood_dim) {
            return Err(fail(format!("Q_Ni must be {neighborhood_dim}x{neighborhood_dim}")));
        }
        if self.r.shape() != (m, m) {
            return Err(fail(format!("R must be {m}x{m}")));
        }
        if asymmetry(&self.q) > 1e-10 || asymmetry(&self.r) > 1e-10 {
            return Err(fail("Q_Ni and R must be symmetric".into()));
        }
        if min_eigenvalue(&self.q) < -1e-10 {
            return Err(fail("Q_Ni must be positive semidefinite".into()));
        }
        if min_eigenvalue(&self.r) <= 0.0 {
            return Err(fail("R must be positive definite".into()));
        }
        Ok(())
    }

    /// The origin strictly satisfies every state and input row.
    pub fn check_origin_interior(&self, id: usize) -> Result<()> {
        for (row, &bound) in self.state_rhs.iter().enumerate() {
            if bound <= 0.0 {
                return Err(Error::NonPositiveBound { subsystem: id, row, bound });
            }
        }
        for (row, &bound) in self.input_rhs.iter().enumerate() {
            if bound <= 0.0 {
                return Err(Error::NonPositiveBound {
                    subsystem: id,
                    row: self.num_state_rows() + row,
                    bound,
                });
            }
        }
        Ok(())
    }
}

/// Neighbor lists, 0-based, sorted ascending, each containing its own index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(mut neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let count = neighbors.len();
        if count == 0 {
            return Err(Error::InvalidTopology("no subsystems".into()));
        }
        for (i, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidTopology(format!(
                    "neighbor list of subsystem {i} has duplicates"
                )));
            }
            if let Some(&bad) = list.iter().find(|&&j| j >= count) {
                return Err(Error::InvalidTopology(format!(
                    "subsystem {i} references subsystem {bad}, only {count} exist"
                )));
            }
            if !list.contains(&i) {
                return Err(Error::InvalidTopology(format!(
                    "subsystem {i} must belong to its own neighborhood"
                )));
            }
        }
        Ok(Self { neighbors })
    }

    /// Every subsystem coupled to every other one.
    pub fn complete(count: usize) -> Self {
        Self {
            neighbors: vec![(0..count).collect(); count],
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Subsystems whose neighborhood contains `j`.
    pub fn dependents(&self, j: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.neighbors[i].contains(&j))
            .collect()
    }
}

/// Binary lifting matrices `U_i`, `W_Nᵢ`, `V_i` and per-neighbor extractors
/// `T_ij` with `T_ij · W_Nᵢ = U_j`.
#[derive(Debug, Clone)]
pub struct SelectionMaps {
    topology: Topology,
    state_dims: Vec<usize>,
    input_dims: Vec<usize>,
    state_offsets: Vec<usize>,
    input_offsets: Vec<usize>,
    pub u: Vec<DMatrix<f64>>,
    pub w: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
    extractors: Vec<BTreeMap<usize, DMatrix<f64>>>,
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .scan(0, |acc, &d| {
            let start = *acc;
            *acc += d;
            Some(start)
        })
        .collect()
}

fn selector(rows: usize, cols: usize, col_offset: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        s[(r, col_offset + r)] = 1.0;
    }
    s
}

pub fn build_selection_maps(
    topology: &Topology,
    state_dims: &[usize],
    input_dims: &[usize],
) -> Result<SelectionMaps> {
    let count = topology.len();
    for (what, dims) in [("state", state_dims), ("input", input_dims)] {
        if dims.len() != count {
            return Err(Error::Dimension {
                context: format!("{what} dimensions"),
                expected: count.to_string(),
                found: dims.len().to_string(),
            });
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidSubsystem {
                subsystem: i,
                reason: format!("{what} dimension must be positive"),
            });
        }
    }
    let n: usize = state_dims.iter().sum();
    let m: usize = input_dims.iter().sum();
    let state_offsets = offsets(state_dims);
    let input_offsets = offsets(input_dims);

    let u: Vec<_> = (0..count)
        .map(|i| selector(state_dims[i], n, state_offsets[i]))
        .collect();
    let v: Vec<_> = (0..count)
        .map(|i| selector(input_dims[i], m, input_offsets[i]))
        .collect();

    let mut w = Vec::with_capacity(count);
    let mut extractors = Vec::with_capacity(count);
    for i in 0..count {
        let hood = topology.neighbors(i);
        let n_hood: usize = hood.iter().map(|&j| state_dims[j]).sum();
        let mut wi = DMatrix::zeros(n_hood, n);
        let mut ext = BTreeMap::new();
        let mut row = 0;
        for &j in hood {
            wi.view_mut((row, 0), (state_dims[j], n)).copy_from(&u[j]);
            ext.insert(j, selector(state_dims[j], n_hood, row));
            row += state_dims[j];
        }
        w.push(wi);
        extractors.push(ext);
    }

    Ok(SelectionMaps {
        topology: topology.clone(),
        state_dims: state_dims.to_vec(),
        input_dims: input_dims.to_vec(),
        state_offsets,
        input_offsets,
        u,
        w,
        v,
        extractors,
    })
}

impl SelectionMaps {
    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn count(&self) -> usize {
        self.state_dims.len()
    }

    pub fn state_dim(&self, i: usize) -> usize {
        self.state_dims[i]
    }

    pub fn input_dim(&self, i: usize) -> usize {
        self.input_dims[i]
    }

    pub fn state_dims(&self) -> &[usize] {
        &self.state_dims
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn global_state_dim(&self) -> usize {
        self.state_dims.iter().sum()
    }

    pub fn global_input_dim(&self) -> usize {
        self.input_dims.iter().sum()
    }

    pub fn state_offset(&self, i: usize) -> usize {
        self.state_offsets[i]
    }

    pub fn input_offset(&self, i: usize) -> usize {
        self.input_offsets[i]
    }

    pub fn neighborhood_dim(&self, i: usize) -> usize {
        self.w[i].nrows()
    }

    /// Row offset of block `j` inside the neighborhood vector of `i`.
    pub fn neighborhood_offset(&self, i: usize, j: usize) -> Option<usize> {
        let mut row = 0;
        for &k in self.topology.neighbors(i) {
            if k == j {
                return Some(row);
            }
            row += self.state_dims[k];
        }
        None
    }

    pub fn extractor(&self, i: usize, j: usize) -> Result<&DMatrix<f64>> {
        self.extractors[i].get(&j).ok_or(Error::NotNeighbor { i, j })
    }

    /// Slices `x_j` out of a global state vector.
    pub fn local<'a>(&self, x: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        x.rows(self.state_offsets[i], self.state_dims[i])
    }

    /// Concatenates the neighborhood blocks of `i` from per-subsystem vectors.
    pub fn gather(&self, i: usize, parts: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.neighborhood_dim(i));
        let mut row = 0;
        for &j in self.topology.neighbors(i) {
            out.rows_mut(row, self.state_dims[j]).copy_from(&parts[j]);
            row += self.state_dims[j];
        }
        out
    }

    /// Splits a global state vector into per-subsystem blocks.
    pub fn split_state(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.count())
            .map(|i| self.local(x, i).into_owned())
            .collect()
    }

    pub fn split_input(&self, u: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.count())
            .map(|i| u.rows(self.input_offsets[i], self.input_dims[i]).into_owned())
            .collect()
    }

    pub fn concat(parts: &[DVector<f64>]) -> DVector<f64> {
        let total: usize = parts.iter().map(|p| p.len()).sum();
        let mut out = DVector::zeros(total);
        let mut row = 0;
        for p in parts {
            out.rows_mut(row, p.len()).copy_from(p);
            row += p.len();
        }
        out
    }
}

/// `W · blockdiag(blocks) · Wᵀ`, the neighborhood restriction of a
/// block-diagonal global matrix.
pub fn lift_block_diagonal(blocks: &[DMatrix<f64>], w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let global = block_diagonal(blocks);
    if global.nrows() != w.ncols() || !global.is_square() {
        return Err(Error::Dimension {
            context: "lift_block_diagonal".into(),
            expected: format!("blocks totalling {} rows", w.ncols()),
            found: format!("{}x{}", global.nrows(), global.ncols()),
        });
    }
    for (k, b) in blocks.iter().enumerate() {
        if asymmetry(b) > 1e-12 {
            return Err(Error::Dimension {
                context: format!("lift_block_diagonal block {k}"),
                expected: "symmetric".into(),
                found: "asymmetric".into(),
            });
        }
    }
    Ok(w * global * w.transpose())
}

/// Embeds neighbor `j`'s matrix into the neighborhood coordinates of `i`,
/// `T_ijᵀ · p_j · T_ij`.
pub fn neighbor_embed(
    p_j: &DMatrix<f64>,
    j: usize,
    maps: &SelectionMaps,
    i: usize,
) -> Result<DMatrix<f64>> {
    let t = maps.extractor(i, j)?;
    if p_j.shape() != (t.nrows(), t.nrows()) {
        return Err(Error::Dimension {
            context: format!("neighbor_embed P_{j}"),
            expected: format!("{0}x{0}", t.nrows()),
            found: format!("{}x{}", p_j.nrows(), p_j.ncols()),
        });
    }
    Ok(t.transpose() * p_j * t)
}

/// Global dynamics, constraint stack and cost weights.
#[derive(Debug, Clone)]
pub struct GlobalModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub state_rows: DMatrix<f64>,
    pub state_rhs: DVector<f64>,
    pub input_rows: DMatrix<f64>,
    pub input_rhs: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl GlobalModel {
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[0] + (u.transpose() * &self.r * u)[0]
    }
}

pub fn assemble_global(models: &[SubsystemModel], maps: &SelectionMaps) -> Result<GlobalModel> {
    if models.len() != maps.count() {
        return Err(Error::Dimension {
            context: "assemble_global".into(),
            expected: format!("{} models", maps.count()),
            found: models.len().to_string(),
        });
    }
    for (i, model) in models.iter().enumerate() {
        model.validate(i, maps.neighborhood_dim(i))?;
        if model.state_dim() != maps.state_dim(i) || model.input_dim() != maps.input_dim(i) {
            return Err(Error::InvalidSubsystem {
                subsystem: i,
                reason: "dimensions disagree with the selection maps".into(),
            });
        }
    }
    let n = maps.global_state_dim();
    let m = maps.global_input_dim();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut q = DMatrix::zeros(n, n);
    let mut r = DMatrix::zeros(m, m);
    let mut g_rows = Vec::new();
    let mut h_rows = Vec::new();
    for (i, model) in models.iter().enumerate() {
        let (u, w, v) = (&maps.u[i], &maps.w[i], &maps.v[i]);
        a += u.transpose() * &model.a * w;
        b += u.transpose() * &model.b * v;
        q += w.transpose() * &model.q * w;
        r += v.transpose() * &model.r * v;
        g_rows.push((&model.state_rows * w, model.state_rhs.clone()));
        h_rows.push((&model.input_rows * v, model.input_rhs.clone()));
    }
    let stack = |parts: Vec<(DMatrix<f64>, DVector<f64>)>, cols: usize| {
        let rows: usize = parts.iter().map(|p| p.0.nrows()).sum();
        let mut mat = DMatrix::zeros(rows, cols);
        let mut rhs = DVector::zeros(rows);
        let mut at = 0;
        for (pm, pv) in parts {
            mat.view_mut((at, 0), (pm.nrows(), cols)).copy_from(&pm);
            rhs.rows_mut(at, pv.len()).copy_from(&pv);
            at += pm.nrows();
        }
        (mat, rhs)
    };
    let (state_rows, state_rhs) = stack(g_rows, n);
    let (input_rows, input_rhs) = stack(h_rows, m);
    Ok(GlobalModel {
        a,
        b,
        state_rows,
        state_rhs,
        input_rows,
        input_rhs,
        q,
        r,
    })
}

/// A validated set of subsystem models together with their topology, maps and
/// global assembly.
#[derive(Debug, Clone)]
pub struct DistributedSystem {
    pub models: Vec<SubsystemModel>,
    pub maps: SelectionMaps,
    pub global: GlobalModel,
}

impl DistributedSystem {
    pub fn new(models: Vec<SubsystemModel>, topology: Topology) -> Result<Self> {
        if models.len() != topology.len() {
            return Err(Error::InvalidTopology(format!(
                "{} models for {} neighbor lists",
                models.len(),
                topology.len()
            )));
        }
        let state_dims: Vec<_> = models.iter().map(SubsystemModel::state_dim).collect();
        let input_dims: Vec<_> = models.iter().map(SubsystemModel::input_dim).collect();
        let maps = build_selection_maps(&topology, &state_dims, &input_dims)?;
        let global = assemble_global(&models, &maps)?;
        Ok(Self {
            models,
            maps,
            global,
        })
    }

    pub fn count(&self) -> usize {
        self.models.len()
    }

    pub fn topology(&self) -> &Topology {
        self.maps.topology()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.maps.topology().neighbors(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn chain() -> SelectionMaps {
        let topo = Topology::new(vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]).unwrap();
        build_selection_maps(&topo, &[1, 1, 1], &[1, 1, 1]).unwrap()
    }

    fn scalar_model(a: &[f64]) -> SubsystemModel {
        let k = a.len();
        SubsystemModel {
            a: DMatrix::from_row_slice(1, k, a),
            b: DMatrix::identity(1, 1),
            state_rows: DMatrix::from_row_slice(2, k, &[vec![1.0; k], vec![-1.0; k]].concat()),
            state_rhs: DVector::from_element(2, 5.0),
            input_rows: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            input_rhs: DVector::from_element(2, 1.0),
            q: DMatrix::identity(k, k),
            r: DMatrix::identity(1, 1),
        }
    }

    #[test]
    fn full_neighborhood_is_identity() {
        let topo = Topology::complete(2);
        let maps = build_selection_maps(&topo, &[1, 1], &[1, 1]).unwrap();
        assert_eq!(maps.w[0], DMatrix::identity(2, 2));
        assert_eq!(maps.w[1], DMatrix::identity(2, 2));
    }

    #[test]
    fn single_subsystem_maps() {
        let maps = build_selection_maps(&Topology::complete(1), &[1], &[1]).unwrap();
        assert_eq!(maps.u[0], DMatrix::identity(1, 1));
        assert_eq!(maps.w[0], DMatrix::identity(1, 1));
    }

    #[test]
    fn chain_maps_follow_concatenation_order() {
        let maps = chain();
        assert_eq!(maps.w[1], DMatrix::identity(3, 3));
        assert_eq!(maps.u[1], DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]));
        assert_eq!(
            maps.w[2],
            DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
        );
        for i in 0..3 {
            for &j in maps.topology().neighbors(i) {
                assert_eq!(maps.extractor(i, j).unwrap() * &maps.w[i], maps.u[j]);
            }
        }
    }

    #[test]
    fn rows_are_one_hot() {
        let maps = chain();
        for m in maps.u.iter().chain(&maps.w).chain(&maps.v) {
            for row in m.row_iter() {
                assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
                assert_eq!(row.iter().filter(|&&x| x == 0.0).count(), row.len() - 1);
            }
        }
    }

    #[test]
    fn topology_errors() {
        assert!(Topology::new(vec![vec![1], vec![1]]).is_err());
        assert!(Topology::new(vec![vec![0, 0]]).is_err());
        assert!(Topology::new(vec![vec![0, 3]]).is_err());
        assert!(Topology::new(vec![]).is_err());
        let t = Topology::new(vec![vec![1, 0], vec![1]]).unwrap();
        assert_eq!(t.neighbors(0), &[0, 1]);
        assert_eq!(t.dependents(1), vec![0, 1]);
    }

    #[test]
    fn dimension_errors_name_the_subsystem() {
        let err = build_selection_maps(&Topology::complete(2), &[1, 0], &[1, 1]).unwrap_err();
        assert!(matches!(err, Error::InvalidSubsystem { subsystem: 1, .. }));
        assert!(build_selection_maps(&Topology::complete(2), &[1], &[1, 1]).is_err());
    }

    #[test]
    fn lift_examples() {
        let blocks = [DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 3.0)];
        let full = lift_block_diagonal(&blocks, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(full, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])));
        let w = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(lift_block_diagonal(&blocks, &w).unwrap()[(0, 0)], 3.0);

        let maps = chain();
        let blocks: Vec<_> = [5.0, 7.0, 9.0].iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        // explicit triple product as the oracle
        let d = crate::linalg::block_diagonal(&blocks);
        let mut oracle = DMatrix::zeros(3, 3);
        for r in 0..3 {
            for c in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        oracle[(r, c)] += maps.w[1][(r, k)] * d[(k, l)] * maps.w[1][(c, l)];
                    }
                }
            }
        }
        assert_eq!(lift_block_diagonal(&blocks, &maps.w[1]).unwrap(), oracle);
        assert_eq!(oracle, DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 7.0, 9.0])));
        assert!(lift_block_diagonal(&blocks[..2], &maps.w[1]).is_err());
    }

    #[test]
    fn embed_examples() {
        let maps = build_selection_maps(&Topology::complete(2), &[1, 1], &[1, 1]).unwrap();
        let p2 = DMatrix::from_element(1, 1, 3.0);
        assert_eq!(
            neighbor_embed(&p2, 1, &maps, 0).unwrap(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 3.0]))
        );
        let p1 = DMatrix::from_element(1, 1, 2.0);
        assert_eq!(
            neighbor_embed(&p1, 0, &maps, 0).unwrap(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]))
        );
        let chain = chain();
        let p3 = DMatrix::from_element(1, 1, 9.0);
        assert_eq!(
            neighbor_embed(&p3, 2, &chain, 1).unwrap(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 9.0]))
        );
        assert!(matches!(
            neighbor_embed(&p3, 2, &chain, 0),
            Err(Error::NotNeighbor { i: 0, j: 2 })
        ));
    }

    #[test]
    fn decoupled_pair_assembles_block_diagonal() {
        let models = vec![scalar_model(&[0.3]), scalar_model(&[0.7])];
        let topo = Topology::new(vec![vec![0], vec![1]]).unwrap();
        let sys = DistributedSystem::new(models, topo).unwrap();
        assert_eq!(sys.global.a, DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.7]));
    }

    #[test]
    fn chain_assembles_tridiagonal() {
        let models = vec![
            scalar_model(&[1.0, 2.0]),
            scalar_model(&[3.0, 4.0, 5.0]),
            scalar_model(&[6.0, 7.0]),
        ];
        let topo = Topology::new(vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]).unwrap();
        let sys = DistributedSystem::new(models, topo).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 3.0, 4.0, 5.0, 0.0, 6.0, 7.0]);
        assert_eq!(sys.global.a, expected);
        assert_eq!(sys.global.b, DMatrix::identity(3, 3));
        assert_eq!(sys.global.state_rows.nrows(), 6);
    }

    #[test]
    fn model_validation_rejects_bad_shapes() {
        let mut m = scalar_model(&[1.0, 2.0]);
        assert!(m.validate(0, 2).is_ok());
        assert!(m.validate(0, 3).is_err());
        m.r = DMatrix::from_element(1, 1, 0.0);
        assert!(m.validate(0, 2).is_err());
        let mut m = scalar_model(&[1.0]);
        m.state_rhs[0] = 0.0;
        assert!(matches!(
            m.check_origin_interior(4),
            Err(Error::NonPositiveBound { subsystem: 4, row: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn gather_matches_w_maps(xs in proptest::collection::vec(-10.0..10.0f64, 6)) {
            let topo = Topology::new(vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]).unwrap();
            let maps = build_selection_maps(&topo, &[2, 1, 3], &[1, 1, 1]).unwrap();
            let x = DVector::from_vec(xs);
            let parts: Vec<_> = (0..3).map(|j| &maps.u[j] * &x).collect();
            for i in 0..3 {
                prop_assert_eq!(&maps.w[i] * &x, maps.gather(i, &parts));
            }
        }

        #[test]
        fn lift_preserves_psd(vals in proptest::collection::vec(-3.0..3.0f64, 9)) {
            let maps = chain();
            let blocks: Vec<_> = vals.chunks(3).map(|c| {
                let g = DMatrix::from_row_slice(1, 3, c);
                &g * g.transpose()
            }).collect();
            let lifted = lift_block_diagonal(&blocks, &maps.w[0]).unwrap();
            prop_assert!(min_eigenvalue(&lifted) >= -1e-10);
        }

        #[test]
        fn global_step_matches_local_dynamics(
            xs in proptest::collection::vec(-2.0..2.0f64, 3),
            us in proptest::collection::vec(-2.0..2.0f64, 3),
        ) {
            let models = vec![
                scalar_model(&[1.0, 2.0]),
                scalar_model(&[3.0, 4.0, 5.0]),
                scalar_model(&[6.0, 7.0]),
            ];
            let topo = Topology::new(vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]).unwrap();
            let sys = DistributedSystem::new(models, topo).unwrap();
            let x = DVector::from_vec(xs);
            let u = DVector::from_vec(us);
            let next = sys.global.step(&x, &u);
            for i in 0..3 {
                let local = &sys.models[i].a * (&sys.maps.w[i] * &x) + &sys.models[i].b * (&sys.maps.v[i] * &u);
                assert_relative_eq!(next[i], local[0], epsilon = 1e-14);
            }
        }
    }
}
