//! Linearized pseudorange model and the weighted least-squares operators
//! built on it.
//!
//! The state is ordered `(east, north, up, clock_1, ..., clock_C)`. Each
//! observation row holds the east/north/up components of the unit vector
//! from the user towards the satellite, followed by a 0/1 indicator for the
//! clock of the satellite's constellation.

pub mod geo;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar type the geometry algebra is generic over.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {}

impl<T> Scalar for T where T: RealField + Copy + FromPrimitive + ToPrimitive {}

pub const EAST: usize = 0;
pub const NORTH: usize = 1;
pub const UP: usize = 2;

/// Relative singular-value tolerance used for every rank decision.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Constellation {
    #[serde(rename = "GPS")]
    Gps,
    #[serde(rename = "GAL")]
    Galileo,
}

impl Constellation {
    pub fn tag(self) -> &'static str {
        match self {
            Constellation::Gps => "GPS",
            Constellation::Galileo => "GAL",
        }
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GPS" | "G" => Ok(Constellation::Gps),
            "GAL" | "GALILEO" | "E" => Ok(Constellation::Galileo),
            other => Err(Error::Parse(format!("unknown constellation `{other}`"))),
        }
    }
}

fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 converts to every supported scalar")
}

/// One epoch of the linear model `y = G x + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T: Scalar> {
    g: DMatrix<T>,
    w: DVector<T>,
    y: DVector<T>,
    sat_ids: Vec<String>,
    const_of: Vec<Constellation>,
    /// State column holding each constellation's clock, if the model has one.
    clock_cols: Vec<(Constellation, usize)>,
}

impl<T: Scalar> LinearModel<T> {
    /// Generic model with anonymous single-constellation labels and no clock
    /// bookkeeping. Fails unless `G` has full column rank under `W`.
    pub fn new(g: DMatrix<T>, w: DVector<T>, y: DVector<T>) -> Result<Self> {
        let n = g.nrows();
        let model = LinearModel {
            sat_ids: (0..n).map(|i| i.to_string()).collect(),
            const_of: vec![Constellation::Gps; n],
            clock_cols: Vec::new(),
            g,
            w,
            y,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model from line-of-sight unit vectors in ENU. One clock column is
    /// appended per constellation present, in `Constellation` order.
    pub fn from_los(
        los: &[[T; 3]],
        consts: &[Constellation],
        sat_ids: Vec<String>,
        w: DVector<T>,
        y: DVector<T>,
    ) -> Result<Self> {
        let n = los.len();
        if consts.len() != n || sat_ids.len() != n {
            return Err(Error::InsufficientGeometry("label count mismatch".into()));
        }
        let mut present: Vec<Constellation> = consts.to_vec();
        present.sort();
        present.dedup();
        let m = 3 + present.len();
        if n < m {
            return Err(Error::InsufficientGeometry(format!(
                "{n} satellites for {m} states"
            )));
        }
        let clock_cols: Vec<(Constellation, usize)> =
            present.iter().enumerate().map(|(i, c)| (*c, 3 + i)).collect();
        let mut g = DMatrix::zeros(n, m);
        for (i, row) in los.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                g[(i, j)] = *v;
            }
            let col = clock_cols.iter().find(|(c, _)| *c == consts[i]).unwrap().1;
            g[(i, col)] = T::one();
        }
        let model = LinearModel { g, w, y, sat_ids, const_of: consts.to_vec(), clock_cols };
        model.validate()?;
        Ok(model)
    }

    pub fn with_labels(mut self, sat_ids: Vec<String>, const_of: Vec<Constellation>) -> Result<Self> {
        if sat_ids.len() != self.n() || const_of.len() != self.n() {
            return Err(Error::InsufficientGeometry("label count mismatch".into()));
        }
        self.sat_ids = sat_ids;
        self.const_of = const_of;
        Ok(self)
    }

    pub fn with_observations(&self, y: DVector<T>) -> Self {
        assert_eq!(y.len(), self.n());
        LinearModel { y, ..self.clone() }
    }

    pub fn with_weights(&self, w: DVector<T>) -> Result<Self> {
        let model = LinearModel { w, ..self.clone() };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = self.g.shape();
        if self.w.len() != n || self.y.len() != n {
            return Err(Error::InsufficientGeometry("dimension mismatch".into()));
        }
        if n < m || m == 0 {
            return Err(Error::InsufficientGeometry(format!("{n} rows for {m} states")));
        }
        if self.w.iter().any(|w| !(*w > T::zero())) {
            return Err(Error::InsufficientGeometry("weights must be positive".into()));
        }
        if weighted_pinv(&self.g, &self.w, &[]).is_none() {
            return Err(Error::InsufficientGeometry("geometry matrix is rank deficient".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    pub fn g(&self) -> &DMatrix<T> {
        &self.g
    }

    pub fn w(&self) -> &DVector<T> {
        &self.w
    }

    pub fn y(&self) -> &DVector<T> {
        &self.y
    }

    pub fn sat_ids(&self) -> &[String] {
        &self.sat_ids
    }

    pub fn const_of(&self) -> &[Constellation] {
        &self.const_of
    }

    pub fn clock_columns(&self) -> &[(Constellation, usize)] {
        &self.clock_cols
    }

    /// Distinct constellations, in `Constellation` order.
    pub fn constellations(&self) -> Vec<Constellation> {
        let mut c = self.const_of.clone();
        c.sort();
        c.dedup();
        c
    }

    /// Indices of the measurements belonging to `c`.
    pub fn indices_of(&self, c: Constellation) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.const_of[i] == c).collect()
    }
}

/// `(G^T W G)^-1 G^T W` restricted to the rows not in `excluded`, through the
/// SVD of `sqrt(W) G`. Returns `None` when the kept rows are rank deficient.
fn weighted_pinv<T: Scalar>(g: &DMatrix<T>, w: &DVector<T>, excluded: &[usize]) -> Option<DMatrix<T>> {
    let (n, m) = g.shape();
    let mut sw = w.map(|x| x.sqrt());
    for &i in excluded {
        sw[i] = T::zero();
    }
    let mut a = g.clone();
    for i in 0..n {
        let s = sw[i];
        for j in 0..m {
            a[(i, j)] *= s;
        }
    }
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(T::zero(), |acc, s| acc.max(*s));
    if !(smax > T::zero()) || sv.iter().any(|s| *s <= smax * cast::<T>(RANK_TOL)) {
        return None;
    }
    let u = svd.u.as_ref()?;
    let vt = svd.v_t.as_ref()?;
    // S = V diag(1/s) U^T diag(sqrt w)
    let mut ut = u.transpose();
    for r in 0..ut.nrows() {
        let inv = T::one() / sv[r];
        for c in 0..n {
            ut[(r, c)] *= inv * sw[c];
        }
    }
    let mut s = vt.transpose() * ut;
    for &i in excluded {
        s.column_mut(i).fill(T::zero());
    }
    Some(s)
}

/// Weighted least-squares state estimate and solution matrix.
pub fn wls_solve<T: Scalar>(model: &LinearModel<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    let s = weighted_pinv(&model.g, &model.w, &[]).ok_or(Error::SingularNormalMatrix)?;
    let x = &s * &model.y;
    Ok((x, s))
}

/// Subset solution and projection for one exclusion set.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetOps<T: Scalar> {
    pub excluded: Vec<usize>,
    /// `m x n` solution matrix with zero columns at excluded rows.
    pub s: DMatrix<T>,
    /// `n x n` projection `G S^(k)`.
    pub ptilde: DMatrix<T>,
    /// States dropped because they became unobservable (reduced-state subsets).
    pub dropped_states: Vec<usize>,
}

/// Subset operators with the weights of `excluded` zeroed.
pub fn subset_ops<T: Scalar>(model: &LinearModel<T>, excluded: &[usize]) -> Result<SubsetOps<T>> {
    let s = weighted_pinv(&model.g, &model.w, excluded)
        .ok_or_else(|| Error::SubsetRankDeficient(excluded.to_vec()))?;
    let ptilde = &model.g * &s;
    Ok(SubsetOps { excluded: excluded.to_vec(), s, ptilde, dropped_states: Vec::new() })
}

/// Subset operators over the reduced state: clock columns of constellations
/// with no remaining measurement are dropped, and the corresponding rows of
/// the returned `m x n` solution matrix are zero.
pub fn subset_ops_reduced<T: Scalar>(model: &LinearModel<T>, excluded: &[usize]) -> Result<SubsetOps<T>> {
    let n = model.n();
    let dropped: Vec<usize> = model
        .clock_cols
        .iter()
        .filter(|(c, _)| (0..n).all(|i| model.const_of[i] != *c || excluded.contains(&i)))
        .map(|(_, col)| *col)
        .collect();
    if dropped.is_empty() {
        return subset_ops(model, excluded);
    }
    let keep: Vec<usize> = (0..model.m()).filter(|j| !dropped.contains(j)).collect();
    let g_red = model.g.select_columns(keep.iter());
    let s_red = weighted_pinv(&g_red, &model.w, excluded)
        .ok_or_else(|| Error::SubsetRankDeficient(excluded.to_vec()))?;
    let mut s = DMatrix::zeros(model.m(), n);
    for (r, &state) in keep.iter().enumerate() {
        s.row_mut(state).copy_from(&s_red.row(r));
    }
    let ptilde = &model.g * &s;
    Ok(SubsetOps { excluded: excluded.to_vec(), s, ptilde, dropped_states: dropped })
}

/// Full-set solution plus subset operators for a list of exclusion sets.
#[derive(Debug, Clone)]
pub struct SolutionOps<T: Scalar> {
    pub s: DMatrix<T>,
    pub subsets: Vec<Result<SubsetOps<T>>>,
}

impl<T: Scalar> SolutionOps<T> {
    /// `reduced[k]` selects the reduced-state subset for exclusion set `k`.
    pub fn build(model: &LinearModel<T>, excluded: &[Vec<usize>], reduced: &[bool]) -> Result<Self> {
        let (_, s) = wls_solve(model)?;
        let subsets = excluded
            .iter()
            .zip(reduced)
            .map(|(ex, &red)| if red { subset_ops_reduced(model, ex) } else { subset_ops(model, ex) })
            .collect();
        Ok(SolutionOps { s, subsets })
    }

    pub fn subset(&self, k: usize) -> Result<&SubsetOps<T>> {
        self.subsets[k].as_ref().map_err(|e| e.clone())
    }
}

/// Coefficients of the fault-free part of the position error under a fault
/// hypothesis: `q = s_v E + sum_{j in excluded} S_{v,j} g_j S^(k)`.
pub fn q_vector<T: Scalar>(model: &LinearModel<T>, s: &DMatrix<T>, sub: &SubsetOps<T>, axis: usize) -> DVector<T> {
    let n = model.n();
    let mut q = DVector::from_fn(n, |j, _| s[(axis, j)]);
    for &j in &sub.excluded {
        q[j] = T::zero();
    }
    for &j in &sub.excluded {
        let coef = s[(axis, j)];
        // row j of G S^(k) is row j of ptilde
        for c in 0..n {
            q[c] += coef * sub.ptilde[(j, c)];
        }
    }
    q
}

/// Worst-case position bias from per-measurement nominal biases:
/// `sum_i |S_{v,i}| b_i`.
pub fn bias_projection<T: Scalar>(s: &DMatrix<T>, b_nom: &[T], axis: usize) -> T {
    s.row(axis)
        .iter()
        .zip(b_nom)
        .fold(T::zero(), |acc, (sv, b)| acc + sv.abs() * *b)
}
