//! Exact solution of the rotating-wave oscillator coupled to a bath of
//! harmonic modes. The single-particle Hamiltonian is a symmetric arrowhead
//! matrix; everything follows from its spectral decomposition.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ArrowheadModel {
    pub omega: f64,
    pub omegas: Vec<f64>,
    pub chis: Vec<f64>,
}

impl ArrowheadModel {
    pub fn new(omega: f64, omegas: Vec<f64>, chis: Vec<f64>) -> Result<Self> {
        if omegas.len() != chis.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} couplings", omegas.len()),
                got: format!("{}", chis.len()),
            });
        }
        if !omega.is_finite() || omegas.iter().chain(&chis).any(|x| !x.is_finite()) {
            return Err(Error::Config("arrowhead entries must be finite".into()));
        }
        Ok(Self { omega, omegas, chis })
    }

    /// Maps the spin bath onto bosons: `omega_k = eps_k`, `chi_k = d_k / sqrt(2 m omega_k)`.
    /// A zero-energy mode has `d_k = 0` and gets `chi_k = 0`.
    pub fn from_bath(omega: f64, mass: f64, energies: &[f64], couplings: &[f64]) -> Result<Self> {
        let chis = energies
            .iter()
            .zip(couplings)
            .map(|(&e, &d)| if e > 0.0 { d / (2.0 * mass * e).sqrt() } else { 0.0 })
            .collect();
        Self::new(omega, energies.to_vec(), chis)
    }

    pub fn n_modes(&self) -> usize {
        self.omegas.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n_modes() + 1;
        let mut h = DMatrix::zeros(n, n);
        h[(0, 0)] = self.omega;
        for (k, (w, c)) in self.omegas.iter().zip(&self.chis).enumerate() {
            h[(k + 1, k + 1)] = *w;
            h[(0, k + 1)] = *c;
            h[(k + 1, 0)] = *c;
        }
        h
    }

    /// `omega - lambda - sum_j chi_j^2 / (omega_j - lambda)`.
    pub fn secular(&self, lambda: f64) -> f64 {
        self.omega - lambda - self.omegas.iter().zip(&self.chis).map(|(w, c)| c * c / (w - lambda)).sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub model: ArrowheadModel,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `|y_0^(i)|^2`.
    pub y0_sq: Vec<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

pub fn decompose(model: &ArrowheadModel) -> SpectralDecomposition {
    let eig = SymmetricEigen::new(model.matrix());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = order.len();
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let y0_sq = (0..n).map(|i| eigenvectors[(0, i)].powi(2)).collect();
    SpectralDecomposition { model: model.clone(), eigenvalues, y0_sq, eigenvectors }
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `|y_0^(i)|^2` from the closed form `(1 + sum_j chi_j^2/(omega_j - lambda_i)^2)^-1`;
    /// `None` where a denominator vanishes.
    pub fn y0_sq_closed_form(&self) -> Vec<Option<f64>> {
        let m = &self.model;
        self.eigenvalues
            .iter()
            .map(|&l| {
                let mut s = 1.0;
                for (w, c) in m.omegas.iter().zip(&m.chis) {
                    if *c == 0.0 {
                        continue;
                    }
                    let d = w - l;
                    if d.abs() < 1e-300_f64.max(1e-14 * l.abs()) {
                        return None;
                    }
                    s += c * c / (d * d);
                }
                Some(1.0 / s)
            })
            .collect()
    }

    /// Largest secular-equation residual over eigenvalues not pinned to a
    /// decoupled bath frequency, scaled by `1 + |lambda|`.
    pub fn secular_residual(&self) -> f64 {
        let m = &self.model;
        self.eigenvalues
            .iter()
            .zip(&self.y0_sq)
            .filter(|(_, &y)| y > 1e-14)
            .map(|(&l, _)| m.secular(l).abs() / (1.0 + l.abs()))
            .fold(0.0, f64::max)
    }

    /// Checks that exactly one eigenvalue lies in each gap between consecutive
    /// bath frequencies. Needs distinct frequencies and nonzero couplings.
    pub fn interlacing_holds(&self) -> bool {
        let mut w = self.model.omegas.clone();
        w.sort_by(f64::total_cmp);
        if w.windows(2).any(|p| p[1] <= p[0]) || self.model.chis.iter().any(|c| *c == 0.0) {
            return false;
        }
        for p in w.windows(2) {
            let n = self.eigenvalues.iter().filter(|&&l| l > p[0] && l < p[1]).count();
            if n != 1 {
                return false;
            }
        }
        let below = self.eigenvalues.iter().filter(|&&l| l < w[0]).count();
        let above = self.eigenvalues.iter().filter(|&&l| l > w[w.len() - 1]).count();
        below == 1 && above == 1
    }

    /// Full `U(t) = A e^{-i lambda t} A^T`.
    pub fn evolution_matrix(&self, t: f64) -> DMatrix<C64> {
        let n = self.dim();
        let ph: Vec<C64> = self.eigenvalues.iter().map(|l| C64::from_polar(1.0, -l * t)).collect();
        DMatrix::from_fn(n, n, |r, c| {
            (0..n).map(|l| ph[l] * (self.eigenvectors[(r, l)] * self.eigenvectors[(c, l)])).sum()
        })
    }

    /// `U_00(t) = sum_j |y_0^(j)|^2 e^{-i lambda_j t}`.
    pub fn u00(&self, t: f64) -> C64 {
        self.y0_sq.iter().zip(&self.eigenvalues).map(|(w, l)| C64::from_polar(*w, -l * t)).sum()
    }

    /// `U_0k(t)` for `k >= 1`, from the closed-form sum.
    pub fn u0k(&self, k: usize, t: f64) -> Option<C64> {
        let (wk, ck) = (self.model.omegas[k - 1], self.model.chis[k - 1]);
        let mut acc = C64::new(0.0, 0.0);
        for (y, l) in self.y0_sq.iter().zip(&self.eigenvalues) {
            if *y == 0.0 {
                continue;
            }
            let d = l - wk;
            if d == 0.0 {
                return None;
            }
            acc += C64::from_polar(y * ck / d, -l * t);
        }
        Some(acc)
    }

    /// `U_jk(t)` for `j, k >= 1`, from the closed-form sum. Only valid when
    /// every bath mode is coupled.
    pub fn ujk(&self, j: usize, k: usize, t: f64) -> Option<C64> {
        let m = &self.model;
        let (wj, cj, wk, ck) = (m.omegas[j - 1], m.chis[j - 1], m.omegas[k - 1], m.chis[k - 1]);
        let mut acc = C64::new(0.0, 0.0);
        for (y, l) in self.y0_sq.iter().zip(&self.eigenvalues) {
            let d = (l - wj) * (l - wk);
            if d == 0.0 {
                return None;
            }
            acc += C64::from_polar(y * cj * ck / d, -l * t);
        }
        Some(acc)
    }

    /// `sum_j y_j^4 + sum_{j<i} 2 cos(t (lambda_j - lambda_i)) y_j^2 y_i^2` with `y^2 = |y_0|^2`.
    pub fn u00_abs2(&self, t: f64) -> f64 {
        let y = &self.y0_sq;
        let l = &self.eigenvalues;
        let mut s: f64 = y.iter().map(|w| w * w).sum();
        for i in 0..y.len() {
            for j in 0..i {
                s += 2.0 * (t * (l[j] - l[i])).cos() * y[j] * y[i];
            }
        }
        s
    }

    /// Envelope `|U_00| - (omega / (2 H_S0)) (|U_00| - 1/|U_00|)`; `None` below the floor.
    pub fn r_envelope(&self, t: f64, hs0: f64, omega: f64) -> Option<f64> {
        r_envelope_from_u00(self.u00(t).norm(), hs0, omega)
    }
}

/// Floor on `|U_00|` below which the envelope is a gap.
pub const U00_FLOOR: f64 = 1e-12;

pub fn r_envelope_from_u00(u: f64, hs0: f64, omega: f64) -> Option<f64> {
    if u < U00_FLOOR || hs0 <= 0.0 {
        return None;
    }
    Some(u - omega / (2.0 * hs0) * (u - 1.0 / u))
}

/// `max |U U^dag - 1|` entry.
pub fn unitarity_residual(u: &DMatrix<C64>) -> f64 {
    let p = u * u.adjoint();
    let n = p.nrows();
    let mut r: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            r = r.max((p[(i, j)] - target).norm());
        }
    }
    r
}
