//! Reduced densities, coherence, energies and phase-space statistics.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{Term, TotalHamiltonian};
use crate::operator::Operator;
use crate::state::SpinorState;
use crate::system::{spin, GridSystem, SystemModel};

/// System density matrix after tracing out the bath.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedDensity {
    n: usize,
    /// Row-major `rho[i * n + j]`.
    rho: Vec<C64>,
}

impl ReducedDensity {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.rho[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).re).sum()
    }

    /// `tr(rho^2)` for Hermitian `rho`.
    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|x| x.norm_sqr()).sum()
    }

    /// `tr(rho A)` for a row-major `n x n` matrix `A`.
    pub fn expectation(&self, a: &[C64]) -> C64 {
        let n = self.n;
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.get(i, j) * a[j * n + i]).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j));
        let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.n;
        let mut e: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                e = e.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        e
    }
}

/// `rho[i][j] = sum_s psi(s, i) psi*(s, j)`, normalized to unit trace.
pub fn partial_trace_bath(state: &SpinorState) -> ReducedDensity {
    let n = state.n_sys();
    let mut rho = vec![C64::new(0.0, 0.0); n * n];
    for s in 0..state.n_components() {
        let b = state.block(s);
        for i in 0..n {
            let bi = b[i];
            if bi.norm_sqr() == 0.0 {
                continue;
            }
            let row = &mut rho[i * n..(i + 1) * n];
            for (r, bj) in row.iter_mut().zip(b) {
                *r += bi * bj.conj();
            }
        }
    }
    let tr: f64 = (0..n).map(|i| rho[i * n + i].re).sum();
    if tr > 0.0 {
        rho.iter_mut().for_each(|x| *x /= tr);
    }
    ReducedDensity { n, rho }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoherenceVariant {
    /// `sum_{i != j} |rho_ij|`.
    Discrete,
    /// `sum_{i,j} |rho_ij| dq^2`, a quadrature of `int int |rho(q, q')| dq dq'`.
    Grid { dq: f64 },
}

pub fn coherence_l1(rho: &ReducedDensity, variant: CoherenceVariant) -> f64 {
    let n = rho.dim();
    match variant {
        CoherenceVariant::Discrete => {
            let mut c = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        c += rho.get(i, j).norm();
                    }
                }
            }
            c
        }
        CoherenceVariant::Grid { dq } => {
            // rho_ij = rho(q_i, q_j) dq with the unit-trace normalization
            rho.as_slice().iter().map(|x| x.norm()).sum::<f64>() * dq
        }
    }
}

/// Coherence variant appropriate for a system model.
pub fn coherence_variant(model: &SystemModel) -> CoherenceVariant {
    match model {
        SystemModel::Grid(g) => CoherenceVariant::Grid { dq: g.dq() },
        _ => CoherenceVariant::Discrete,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyChannels {
    pub e_s: f64,
    pub e_b: f64,
    pub e_sb: f64,
}

impl EnergyChannels {
    pub fn total(&self) -> f64 {
        self.e_s + self.e_b + self.e_sb
    }
}

pub fn energy_channels(state: &SpinorState, h: &TotalHamiltonian) -> Result<EnergyChannels> {
    let n2 = state.norm_sqr();
    let e = |t| -> Result<f64> { Ok(h.term(t).expectation(state)? / n2) };
    Ok(EnergyChannels { e_s: e(Term::System)?, e_b: e(Term::Bath)?, e_sb: e(Term::Coupling)? })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSpaceStats {
    pub q_mean: f64,
    pub p_mean: f64,
    pub dq: f64,
    pub dp: f64,
    /// `<p^2/2m - m w^2 q^2/2>`
    pub lagrangian: f64,
}

impl PhaseSpaceStats {
    /// `<a> = sqrt(m w / 2) (<q> + i <p> / (m w))`.
    pub fn ladder_mean(&self, mass: f64, omega: f64) -> C64 {
        (mass * omega / 2.0).sqrt() * C64::new(self.q_mean, self.p_mean / (mass * omega))
    }
}

pub fn phase_space_stats(state: &SpinorState, grid: &GridSystem) -> Result<PhaseSpaceStats> {
    state.check_shape(state.n_modes(), grid.ng())?;
    let n2 = state.norm_sqr();
    let ng = grid.ng();
    let mut wq = vec![0.0; ng];
    for s in 0..state.n_components() {
        for (w, x) in wq.iter_mut().zip(state.block(s)) {
            *w += x.norm_sqr();
        }
    }
    let (mut q1, mut q2) = (0.0, 0.0);
    for (w, q) in wq.iter().zip(grid.positions()) {
        q1 += w * q;
        q2 += w * q * q;
    }
    let wp = grid.momentum_distribution(state);
    let (mut p1, mut p2) = (0.0, 0.0);
    for (w, p) in wp.iter().zip(grid.momenta()) {
        p1 += w * p;
        p2 += w * p * p;
    }
    let (q1, q2, p1, p2) = (q1 / n2, q2 / n2, p1 / n2, p2 / n2);
    let (m, w) = (grid.mass(), grid.omega());
    Ok(PhaseSpaceStats {
        q_mean: q1,
        p_mean: p1,
        dq: (q2 - q1 * q1).max(0.0).sqrt(),
        dp: (p2 - p1 * p1).max(0.0).sqrt(),
        lagrangian: p2 / (2.0 * m) - 0.5 * m * w * w * q2,
    })
}

/// How the complex `<a>` enters the ratio.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderNorm {
    #[default]
    Modulus,
    RealPart,
}

impl LadderNorm {
    pub fn apply(&self, a: C64) -> f64 {
        match self {
            LadderNorm::Modulus => a.norm(),
            LadderNorm::RealPart => a.re.abs(),
        }
    }
}

/// Relative floor on `|<a(t)>|` below which the ratio is a gap.
pub const RATIO_GAP_FLOOR: f64 = 1e-8;

/// Initial values the ratio is normalized by.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioReference {
    pub a0: f64,
    pub hs0: f64,
}

impl RatioReference {
    pub fn new(a0: f64, hs0: f64) -> Result<Self> {
        if !(a0 > 1e-12) || !(hs0 != 0.0) {
            return Err(Error::RatioUndefined(a0));
        }
        Ok(Self { a0, hs0 })
    }

    /// `R = (|<a(0)>| / H_S(0)) (H_S(t) / |<a(t)>|)`; `None` marks a gap.
    pub fn ratio(&self, a_t: f64, hs_t: f64) -> Option<f64> {
        if a_t < RATIO_GAP_FLOOR * self.a0 {
            None
        } else {
            Some(self.a0 / self.hs0 * hs_t / a_t)
        }
    }
}

/// Ratio series from `(H_S(t), |<a(t)>|)` pairs; the first pair is `t = 0`.
pub fn ratio_r(series: &[(f64, f64)]) -> Result<Vec<Option<f64>>> {
    let Some(&(hs0, a0)) = series.first() else {
        return Ok(Vec::new());
    };
    let r = RatioReference::new(a0, hs0)?;
    Ok(series.iter().map(|&(hs, a)| r.ratio(a, hs)).collect())
}

/// `(Delta S^x, Delta S^z)` of the NV spin from its reduced density.
pub fn nv_spin_std(rho: &ReducedDensity, model: &SystemModel) -> Option<(f64, f64)> {
    let (sx, sz): (Vec<C64>, Vec<C64>) = match model {
        SystemModel::NvFull(_) => {
            let s = spin::spin1();
            (s[0].iter().flatten().copied().collect(), s[2].iter().flatten().copied().collect())
        }
        SystemModel::NvReduced(_) => {
            let s = spin::spin_half();
            (s[0].iter().flatten().copied().collect(), s[2].iter().flatten().copied().collect())
        }
        SystemModel::Grid(_) => return None,
    };
    let n = rho.dim();
    let std = |a: &[C64]| {
        let mut a2 = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                a2[i * n + j] = (0..n).map(|l| a[i * n + l] * a[l * n + j]).sum();
            }
        }
        let m = rho.expectation(a).re;
        (rho.expectation(&a2).re - m * m).max(0.0).sqrt()
    };
    Some((std(&sx), std(&sz)))
}

/// One output row; `None` fields are written as empty CSV cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservableRecord {
    pub t: f64,
    pub e_s: Option<f64>,
    pub e_b: Option<f64>,
    pub e_sb: Option<f64>,
    pub q_mean: Option<f64>,
    pub p_mean: Option<f64>,
    pub dq: Option<f64>,
    pub dp: Option<f64>,
    pub lagrangian: Option<f64>,
    pub coherence: Option<f64>,
    pub purity: Option<f64>,
    pub ratio_r: Option<f64>,
    pub survival: Option<f64>,
    pub nv_sx_std: Option<f64>,
    pub nv_sz_std: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 13] =
    ["t", "E_S", "E_B", "E_SB", "q_mean", "p_mean", "dq", "dp", "lagrangian", "coherence", "purity", "ratio_R", "survival"];
pub const NV_CSV_COLUMNS: [&str; 2] = ["nv_sx_std", "nv_sz_std"];

pub fn csv_header(nv: bool) -> String {
    let mut cols: Vec<&str> = CSV_COLUMNS.to_vec();
    if nv {
        cols.extend(NV_CSV_COLUMNS);
    }
    cols.join(",")
}

fn push_field(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(x) = v.filter(|x| x.is_finite()) {
        let _ = write!(out, "{x:.16e}");
    }
}

impl ObservableRecord {
    /// Column values in CSV order; NaN stands for a missing value.
    pub fn to_values(&self, nv: bool) -> Vec<f64> {
        let mut v: Vec<f64> = [
            self.e_s,
            self.e_b,
            self.e_sb,
            self.q_mean,
            self.p_mean,
            self.dq,
            self.dp,
            self.lagrangian,
            self.coherence,
            self.purity,
            self.ratio_r,
            self.survival,
        ]
        .iter()
        .map(|x| x.unwrap_or(f64::NAN))
        .collect();
        if nv {
            v.push(self.nv_sx_std.unwrap_or(f64::NAN));
            v.push(self.nv_sz_std.unwrap_or(f64::NAN));
        }
        v.insert(0, self.t);
        v
    }

    pub fn from_values(values: &[f64]) -> Self {
        let g = |i: usize| values.get(i).copied().filter(|x| x.is_finite());
        Self {
            t: values[0],
            e_s: g(1),
            e_b: g(2),
            e_sb: g(3),
            q_mean: g(4),
            p_mean: g(5),
            dq: g(6),
            dp: g(7),
            lagrangian: g(8),
            coherence: g(9),
            purity: g(10),
            ratio_r: g(11),
            survival: g(12),
            nv_sx_std: g(13),
            nv_sz_std: g(14),
        }
    }

    pub fn csv_row(&self, nv: bool) -> String {
        let mut s = format!("{:.16e}", self.t);
        for v in self.to_values(nv).into_iter().skip(1) {
            push_field(&mut s, Some(v));
        }
        s
    }
}

/// Everything needed to turn a state into an [`ObservableRecord`].
pub struct Recorder<'a> {
    pub h: &'a TotalHamiltonian,
    pub initial: Option<&'a SpinorState>,
    pub ratio: Option<(RatioReference, LadderNorm)>,
}

impl<'a> Recorder<'a> {
    pub fn new(h: &'a TotalHamiltonian) -> Self {
        Self { h, initial: None, ratio: None }
    }

    /// Enables the survival column relative to `initial`.
    pub fn with_initial(mut self, initial: &'a SpinorState) -> Self {
        self.initial = Some(initial);
        self
    }

    /// Enables the ratio column using the initial values of `state`.
    pub fn with_ratio_from(mut self, state: &SpinorState, norm: LadderNorm) -> Result<Self> {
        let grid = self.h.system().grid().ok_or(Error::RequiresGrid)?;
        let ps = phase_space_stats(state, grid)?;
        let hs0 = energy_channels(state, self.h)?.e_s;
        let a0 = norm.apply(ps.ladder_mean(grid.mass(), grid.omega()));
        self.ratio = Some((RatioReference::new(a0, hs0)?, norm));
        Ok(self)
    }

    pub fn record(&self, t: f64, state: &SpinorState) -> Result<ObservableRecord> {
        let model = self.h.system();
        let en = energy_channels(state, self.h)?;
        let rho = partial_trace_bath(state);
        let mut rec = ObservableRecord {
            t,
            e_s: Some(en.e_s),
            e_b: Some(en.e_b),
            e_sb: Some(en.e_sb),
            coherence: Some(coherence_l1(&rho, coherence_variant(model))),
            purity: Some(rho.purity()),
            ..Default::default()
        };
        if let Some(grid) = model.grid() {
            let ps = phase_space_stats(state, grid)?;
            rec.q_mean = Some(ps.q_mean);
            rec.p_mean = Some(ps.p_mean);
            rec.dq = Some(ps.dq);
            rec.dp = Some(ps.dp);
            rec.lagrangian = Some(ps.lagrangian);
            if let Some((r, norm)) = &self.ratio {
                rec.ratio_r = r.ratio(norm.apply(ps.ladder_mean(grid.mass(), grid.omega())), en.e_s);
            }
        }
        if let Some(psi0) = self.initial {
            rec.survival = Some(psi0.inner(state).norm_sqr() / (psi0.norm_sqr() * state.norm_sqr()));
        }
        if let Some((sx, sz)) = nv_spin_std(&rho, model) {
            rec.nv_sx_std = Some(sx);
            rec.nv_sz_std = Some(sz);
        }
        Ok(rec)
    }
}
