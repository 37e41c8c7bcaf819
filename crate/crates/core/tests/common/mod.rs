#![allow(dead_code)]

pub mod oracle;

use jkraim::model::{Constellation, LinearModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Random unit LOS above 5 degrees elevation.
pub fn random_los<R: Rng>(rng: &mut R) -> [f64; 3] {
    let el: f64 = rng.gen_range(5f64..90.0).to_radians();
    let az: f64 = rng.gen_range(0f64..360.0).to_radians();
    [el.cos() * az.sin(), el.cos() * az.cos(), el.sin()]
}

/// Random full-rank geometry with `n` rows and `m` states (4: one clock,
/// 5: two constellations split roughly in half).
pub fn random_model<R: Rng>(rng: &mut R, n: usize, m: usize) -> LinearModel<f64> {
    loop {
        let los: Vec<[f64; 3]> = (0..n).map(|_| random_los(rng)).collect();
        let consts: Vec<Constellation> = (0..n)
            .map(|i| if m == 5 && i >= n / 2 { Constellation::Galileo } else { Constellation::Gps })
            .collect();
        let w = DVector::from_fn(n, |_, _| rng.gen_range(0.5..4.0));
        let y = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let ids = (0..n).map(|i| format!("S{i}")).collect();
        if let Ok(model) = LinearModel::from_los(&los, &consts, ids, w, y) {
            return model;
        }
    }
}

/// `(G^T W G)^-1 G^T W` with the weights of `excluded` zeroed, by explicit
/// inversion of the normal matrix.
pub fn normal_eq_solution(g: &DMatrix<f64>, w: &DVector<f64>, excluded: &[usize]) -> Option<DMatrix<f64>> {
    let mut wk = w.clone();
    for &i in excluded {
        wk[i] = 0.0;
    }
    let wd = DMatrix::from_diagonal(&wk);
    let n = g.transpose() * &wd * g;
    Some(n.try_inverse()? * g.transpose() * wd)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}
