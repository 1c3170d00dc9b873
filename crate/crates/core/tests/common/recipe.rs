//! The two-spin swap written out with the 4x4 branching matrices.

#![allow(dead_code)]

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spinbath::C64;

use super::c;

/// Phases from branching coefficients `(alpha, alpha_alpha, beta_alpha, 0)`.
pub fn branch_to_phases() -> Matrix4<C64> {
    let r = |v: [f64; 4]| v.map(|x| c(x, 0.0));
    Matrix4::from_rows(&[
        r([1.0, 1.0, 0.0, 0.0]).into(),
        r([1.0, -1.0, 0.0, 0.0]).into(),
        r([-1.0, 0.0, 1.0, 0.0]).into(),
        r([-1.0, 0.0, -1.0, 0.0]).into(),
    ])
}

pub fn phases_to_branch() -> Matrix4<C64> {
    let r = |v: [f64; 4]| v.map(|x| c(x, 0.0));
    Matrix4::from_rows(&[
        r([0.0, 0.0, -0.5, -0.5]).into(),
        r([0.5, -0.5, 0.0, 0.0]).into(),
        r([0.0, 0.0, 0.5, -0.5]).into(),
        r([1.0, 1.0, 1.0, 1.0]).into(),
    ])
}

/// Two-spin swap of the right-hand spin of `|l r>`, step by step.
/// `lambda` is ordered `|00>, |01>, |10>, |11>`.
pub fn recipe_right(lambda: [C64; 4], b: C64) -> [C64; 4] {
    let logs = lambda.map(|x| C64::new(x.norm().ln(), x.arg()));
    let shift = -logs.iter().sum::<C64>() / 4.0;
    let a = Vector4::from_iterator(logs.iter().map(|l| l + shift));
    let mut branch = phases_to_branch() * a;
    assert!(branch[3].norm() < 1e-12, "phases must sum to zero");
    branch[1] = b;
    branch[2] = b;
    let a_new = branch_to_phases() * branch;
    let v: Vec<C64> = a_new.iter().map(|x| x.exp()).collect();
    let z = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    [v[0] / z, v[1] / z, v[2] / z, v[3] / z]
}

pub fn random_amps(rng: &mut ChaCha8Rng) -> [C64; 4] {
    let mut v = [C64::new(0.0, 0.0); 4];
    for x in v.iter_mut() {
        *x = C64::from_polar(rng.random_range(0.05..1.0), rng.random_range(-3.1..3.1));
    }
    v
}

/// The left spin is swapped by relabeling it as the leaf of the tree.
pub fn recipe_left(lambda: [C64; 4], b: C64) -> [C64; 4] {
    let w = recipe_right([lambda[0], lambda[2], lambda[1], lambda[3]], b);
    [w[0], w[2], w[1], w[3]]
}

pub fn deficit(a: &[C64], b: &[C64]) -> f64 {
    let ov: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    1.0 - ov.norm_sqr() / (na * nb)
}

