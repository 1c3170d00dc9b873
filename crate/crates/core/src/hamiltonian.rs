//! System-bath couplings and the assembled total Hamiltonian
//! `H = H_S + H_B + H_SB`, applied matrix-free.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{configuration_energy, BathSpec};
use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::state::{par_min_len, SpinorState};
use crate::system::{spin, NvSpec, SystemModel};

/// Sign of the exponent in the dephasing weights
/// `c_jk = c / (K (K-1)) exp(+-(eps_j - eps_k)^2 / (2 sigma^2))`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentSign {
    #[default]
    Negative,
    Positive,
}

/// Pairwise hop weights of the commuting (pure-dephasing) coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct DephasingCoupling {
    pub c: f64,
    pub sigma_eps: f64,
    pub sign: ExponentSign,
    /// Row-major `K x K`, symmetric, zero diagonal.
    weights: Vec<f64>,
    n_modes: usize,
}

impl DephasingCoupling {
    pub fn new(c: f64, sigma_eps: f64, energies: &[f64], sign: ExponentSign) -> Result<Self> {
        let k = energies.len();
        if k < 2 {
            return Err(Error::DephasingTooFewModes(k));
        }
        if !(sigma_eps > 0.0) {
            return Err(Error::Config(format!("inelastic bias sigma_eps must be positive, got {sigma_eps}")));
        }
        let pref = c / (k * (k - 1)) as f64;
        let s = match sign {
            ExponentSign::Negative => -1.0,
            ExponentSign::Positive => 1.0,
        };
        let mut weights = vec![0.0; k * k];
        for j in 0..k {
            for l in 0..k {
                if j != l {
                    let de = energies[j] - energies[l];
                    weights[j * k + l] = pref * (s * de * de / (2.0 * sigma_eps * sigma_eps)).exp();
                }
            }
        }
        Ok(Self { c, sigma_eps, sign, weights, n_modes: k })
    }

    /// `c_jk` for 1-based modes.
    pub fn weight(&self, j: usize, k: usize) -> f64 {
        self.weights[(j - 1) * self.n_modes + (k - 1)]
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CouplingSpec {
    None,
    /// `q ⊗ sum_k d_k (sigma_k^dag + sigma_k)`.
    Dipolar { d: Vec<f64> },
    /// `H_S ⊗ sum_{j<k} c_jk (sigma_j^dag sigma_k + h.c.)`.
    Dephasing(DephasingCoupling),
    /// Full NV dipole-dipole coupling with the spin-1 center at the origin.
    NvDipole { gamma: Vec<f64>, n: Vec<[f64; 3]> },
    /// Strong-field form `sum_k coeff_k (S^z - 1/2) s_k^z` on the pseudo-spin.
    NvReducedDipole { coeffs: Vec<f64> },
}

impl CouplingSpec {
    pub fn dipolar(bath: &BathSpec) -> Self {
        CouplingSpec::Dipolar { d: bath.couplings().to_vec() }
    }

    pub fn nv_dipole(spec: &NvSpec) -> Self {
        let (gamma, n) = spec.system_bath_couplings().into_iter().unzip();
        CouplingSpec::NvDipole { gamma, n }
    }

    /// `gamma_k [1 - 3 (n_k^z)^2]`, using the unit-vector z component.
    pub fn nv_reduced(spec: &NvSpec) -> Self {
        let coeffs = spec
            .system_bath_couplings()
            .into_iter()
            .map(|(g, n)| g * (1.0 - 3.0 * n[2] * n[2]))
            .collect();
        CouplingSpec::NvReducedDipole { coeffs }
    }

    fn n_modes(&self) -> Option<usize> {
        match self {
            CouplingSpec::None => None,
            CouplingSpec::Dipolar { d } => Some(d.len()),
            CouplingSpec::Dephasing(c) => Some(c.n_modes()),
            CouplingSpec::NvDipole { gamma, .. } => Some(gamma.len()),
            CouplingSpec::NvReducedDipole { coeffs } => Some(coeffs.len()),
        }
    }
}

#[derive(Clone, Debug)]
pub enum BathHamiltonian {
    Modes(BathSpec),
    /// Zeeman term plus the full dipole tensor between bath spins.
    NvDipolar(NvSpec),
    /// Zeeman term plus the secular `s^z s^z` part only.
    NvSecular(NvSpec),
}

impl BathHamiltonian {
    pub fn n_modes(&self) -> usize {
        match self {
            BathHamiltonian::Modes(b) => b.n_modes(),
            BathHamiltonian::NvDipolar(s) | BathHamiltonian::NvSecular(s) => s.n_modes(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    System,
    Bath,
    Coupling,
    Total,
}

/// 4x4 pair operator on bits (j, k), indexed `[2 b_j + b_k][2 b_j' + b_k']`.
/// Nonzero `(column, value)` entries of each row of a small dense block.
type SparseRows = Vec<Vec<(usize, C64)>>;

fn sparse_rows(m: &[C64], n: usize) -> SparseRows {
    (0..n)
        .map(|r| (0..n).filter(|&c| m[r * n + c].norm_sqr() > 0.0).map(|c| (c, m[r * n + c])).collect())
        .collect()
}

#[derive(Clone, Debug)]
struct NvBathKernel {
    /// Diagonal energy of each bath configuration.
    diagonal: Vec<f64>,
    /// Off-diagonal pair blocks (diagonal parts already folded into `diagonal`).
    pairs: Vec<(usize, usize, SparseRows)>,
}

#[derive(Clone, Debug)]
pub struct TotalHamiltonian {
    system: SystemModel,
    bath: BathHamiltonian,
    coupling: CouplingSpec,
    n_modes: usize,
    nv_bath: Option<NvBathKernel>,
    /// Per-mode `(n_sys*2) x (n_sys*2)` blocks of the full NV coupling.
    nv_coupling: Option<Vec<SparseRows>>,
}

/// Bath spin-1/2 operators in the bit basis (0 = down, 1 = up).
fn bath_spin() -> [[[C64; 2]; 2]; 3] {
    let z = C64::new(0.0, 0.0);
    let h = C64::new(0.5, 0.0);
    let sx = [[z, h], [h, z]];
    // <1|s^y|0> = 1/(2i) = -i/2
    let sy = [[z, C64::new(0.0, 0.5)], [C64::new(0.0, -0.5), z]];
    let sz = [[-h, z], [z, h]];
    [sx, sy, sz]
}

fn dipole_tensor(n: &[f64; 3]) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            t[a][b] = if a == b { 1.0 } else { 0.0 } - 3.0 * n[a] * n[b];
        }
    }
    t
}

fn nv_bath_kernel(spec: &NvSpec, secular: bool) -> NvBathKernel {
    let k = spec.n_modes();
    let zeeman = spec.bath_zeeman();
    let mut diagonal: Vec<f64> = (0..1usize << k)
        .map(|s| (0..k).map(|m| zeeman * (((s >> m) & 1) as f64 - 0.5)).sum())
        .collect();
    let s = bath_spin();
    let mut pairs = Vec::new();
    for (j, l, gamma, n) in spec.bath_bath_couplings() {
        let mut m = [[C64::new(0.0, 0.0); 4]; 4];
        if secular {
            let w = gamma * (1.0 - 3.0 * n[2] * n[2]);
            for (b, row) in m.iter_mut().enumerate() {
                row[b] = C64::new(w * ((b >> 1) as f64 - 0.5) * ((b & 1) as f64 - 0.5), 0.0);
            }
        } else {
            let t = dipole_tensor(&n);
            for a in 0..3 {
                for c in 0..3 {
                    if t[a][c] == 0.0 {
                        continue;
                    }
                    for r in 0..4 {
                        for col in 0..4 {
                            m[r][col] += gamma * t[a][c] * s[a][r >> 1][col >> 1] * s[c][r & 1][col & 1];
                        }
                    }
                }
            }
        }
        // fold the diagonal into the per-configuration energies
        for (cfg, e) in diagonal.iter_mut().enumerate() {
            let b = 2 * ((cfg >> j) & 1) + ((cfg >> l) & 1);
            *e += m[b][b].re;
        }
        for (b, row) in m.iter_mut().enumerate() {
            row[b] = C64::new(0.0, 0.0);
        }
        if m.iter().flatten().any(|x| x.norm() > 0.0) {
            pairs.push((j, l, sparse_rows(m.as_flattened(), 4)));
        }
    }
    NvBathKernel { diagonal, pairs }
}

fn nv_coupling_kernel(gamma: &[f64], n: &[[f64; 3]]) -> Vec<Vec<C64>> {
    let big = spin::spin1();
    let s = bath_spin();
    gamma
        .iter()
        .zip(n)
        .map(|(g, n)| {
            let t = dipole_tensor(n);
            // index (i, b) -> 2 i + b
            let mut m = vec![C64::new(0.0, 0.0); 36];
            for a in 0..3 {
                for c in 0..3 {
                    if t[a][c] == 0.0 {
                        continue;
                    }
                    for r in 0..6 {
                        for col in 0..6 {
                            m[r * 6 + col] += g * t[a][c] * big[a][r / 2][col / 2] * s[c][r % 2][col % 2];
                        }
                    }
                }
            }
            m
        })
        .collect()
}

impl TotalHamiltonian {
    pub fn new(system: SystemModel, bath: BathHamiltonian, coupling: CouplingSpec) -> Result<Self> {
        let n_modes = bath.n_modes();
        if let Some(k) = coupling.n_modes() {
            if k != n_modes {
                return Err(Error::ShapeMismatch {
                    expected: format!("coupling over {n_modes} modes"),
                    got: format!("{k}"),
                });
            }
        }
        let is_grid = system.grid().is_some();
        match (&coupling, &system) {
            (CouplingSpec::Dipolar { .. }, _) if !is_grid => {
                return Err(Error::Config("dipolar q-coupling needs a grid system".into()))
            }
            (CouplingSpec::NvDipole { .. }, SystemModel::NvFull(_)) => {}
            (CouplingSpec::NvDipole { .. }, _) => {
                return Err(Error::Config("full NV coupling needs the spin-1 NV model".into()))
            }
            (CouplingSpec::NvReducedDipole { .. }, SystemModel::NvReduced(_)) => {}
            (CouplingSpec::NvReducedDipole { .. }, _) => {
                return Err(Error::Config("reduced NV coupling needs the pseudo-spin model".into()))
            }
            _ => {}
        }
        let nv_bath = match &bath {
            BathHamiltonian::Modes(_) => None,
            BathHamiltonian::NvDipolar(s) => Some(nv_bath_kernel(s, false)),
            BathHamiltonian::NvSecular(s) => Some(nv_bath_kernel(s, true)),
        };
        let nv_coupling = match &coupling {
            CouplingSpec::NvDipole { gamma, n } => Some(nv_coupling_kernel(gamma, n).iter().map(|m| sparse_rows(m, 6)).collect()),
            _ => None,
        };
        Ok(Self { system, bath, coupling, n_modes, nv_bath, nv_coupling })
    }

    pub fn system(&self) -> &SystemModel {
        &self.system
    }

    pub fn bath(&self) -> &BathHamiltonian {
        &self.bath
    }

    pub fn coupling(&self) -> &CouplingSpec {
        &self.coupling
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_sys(&self) -> usize {
        self.system.n_sys()
    }

    fn check(&self, psi: &SpinorState, out: &SpinorState) -> Result<()> {
        psi.check_shape(self.n_modes, self.n_sys())?;
        out.check_shape(self.n_modes, self.n_sys())
    }

    pub fn apply_system_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        self.check(psi, out)?;
        self.system.hamiltonian_into(psi, out)
    }

    pub fn apply_bath_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        self.check(psi, out)?;
        self.bath_kernel(psi, out, false);
        Ok(())
    }

    /// Writes (or with `acc`, adds) `H_B psi` into `out`.
    fn bath_kernel(&self, psi: &SpinorState, out: &mut SpinorState, acc: bool) {
        let n_sys = psi.n_sys();
        match &self.bath {
            BathHamiltonian::Modes(spec) => {
                let energies = spec.energies();
                out.amplitudes_mut()
                    .par_chunks_mut(n_sys).with_min_len(par_min_len(n_sys))
                    .enumerate()
                    .for_each(|(s, blk)| {
                        let e = configuration_energy(s, energies);
                        for (o, x) in blk.iter_mut().zip(psi.block(s)) {
                            emit(o, x * e, acc);
                        }
                    });
            }
            _ => {
                let kernel = self.nv_bath.as_ref().expect("nv kernel");
                out.amplitudes_mut()
                    .par_chunks_mut(n_sys).with_min_len(par_min_len(n_sys))
                    .enumerate()
                    .for_each(|(s, blk)| {
                        let e = kernel.diagonal[s];
                        for (o, x) in blk.iter_mut().zip(psi.block(s)) {
                            emit(o, x * e, acc);
                        }
                        for (j, l, m) in &kernel.pairs {
                            let row = 2 * ((s >> j) & 1) + ((s >> l) & 1);
                            let base = s & !(1 << j) & !(1 << l);
                            for &(col, w) in &m[row] {
                                let src = base | ((col >> 1) << j) | ((col & 1) << l);
                                for (o, x) in blk.iter_mut().zip(psi.block(src)) {
                                    *o += w * x;
                                }
                            }
                        }
                    });
            }
        }
    }

    pub fn apply_coupling_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        self.check(psi, out)?;
        if let CouplingSpec::Dephasing(dc) = &self.coupling {
            let hopped = dephasing_hops(dc, psi, false);
            return self.system.hamiltonian_into(&hopped, out);
        }
        self.coupling_kernel(psi, out, false);
        Ok(())
    }

    /// Writes (or adds) the coupling for every variant except dephasing.
    fn coupling_kernel(&self, psi: &SpinorState, out: &mut SpinorState, acc: bool) {
        let n_sys = psi.n_sys();
        match &self.coupling {
            CouplingSpec::None => {
                if !acc {
                    out.fill_zero();
                }
            }
            CouplingSpec::Dephasing(_) => unreachable!("dephasing is applied through the system Hamiltonian"),
            CouplingSpec::Dipolar { d } => {
                let grid = self.system.grid().expect("validated grid");
                let q = grid.positions();
                out.amplitudes_mut()
                    .par_chunks_mut(n_sys).with_min_len(par_min_len(n_sys))
                    .enumerate()
                    .for_each_init(
                        || vec![C64::new(0.0, 0.0); n_sys],
                        |sum, (s, blk)| {
                            sum.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
                            for (k, dk) in d.iter().enumerate() {
                                if *dk == 0.0 {
                                    continue;
                                }
                                for (x, y) in sum.iter_mut().zip(psi.block(s ^ (1 << k))) {
                                    *x += y * *dk;
                                }
                            }
                            for ((o, x), qi) in blk.iter_mut().zip(sum.iter()).zip(q) {
                                emit(o, x * qi, acc);
                            }
                        },
                    );
            }
            CouplingSpec::NvDipole { .. } => {
                let blocks = self.nv_coupling.as_ref().expect("nv coupling kernel");
                out.amplitudes_mut()
                    .par_chunks_mut(n_sys).with_min_len(par_min_len(n_sys))
                    .enumerate()
                    .for_each(|(s, blk)| {
                        if !acc {
                            blk.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
                        }
                        for (k, m) in blocks.iter().enumerate() {
                            let b = (s >> k) & 1;
                            let base = s & !(1 << k);
                            for (i, o) in blk.iter_mut().enumerate() {
                                for &(col, w) in &m[2 * i + b] {
                                    *o += w * psi.get(base | ((col % 2) << k), col / 2);
                                }
                            }
                        }
                    });
            }
            CouplingSpec::NvReducedDipole { coeffs } => {
                out.amplitudes_mut()
                    .par_chunks_mut(n_sys).with_min_len(par_min_len(n_sys))
                    .enumerate()
                    .for_each(|(s, blk)| {
                        let field: f64 = coeffs
                            .iter()
                            .enumerate()
                            .map(|(k, c)| c * (((s >> k) & 1) as f64 - 0.5))
                            .sum();
                        // (S^z - 1/2) is 0 on |m_S=0> and -1 on |m_S=-1>
                        emit(&mut blk[0], C64::new(0.0, 0.0), acc);
                        emit(&mut blk[1], -psi.get(s, 1) * field, acc);
                    });
            }
        }
    }

    pub fn apply_term_into(&self, term: Term, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        match term {
            Term::System => self.apply_system_into(psi, out),
            Term::Bath => self.apply_bath_into(psi, out),
            Term::Coupling => self.apply_coupling_into(psi, out),
            Term::Total => self.apply_total_into(psi, out),
        }
    }

    pub fn apply_total_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        self.check(psi, out)?;
        if let CouplingSpec::Dephasing(dc) = &self.coupling {
            // H_S (1 + X) psi in a single system pass
            let shifted = dephasing_hops(dc, psi, true);
            self.system.hamiltonian_into(&shifted, out)?;
        } else {
            self.system.hamiltonian_into(psi, out)?;
            self.coupling_kernel(psi, out, true);
        }
        self.bath_kernel(psi, out, true);
        Ok(())
    }

    pub fn apply_total(&self, psi: &SpinorState) -> Result<SpinorState> {
        let mut out = psi.zeros_like();
        self.apply_total_into(psi, &mut out)?;
        Ok(out)
    }

    pub fn term(&self, term: Term) -> TermOperator<'_> {
        TermOperator { h: self, term }
    }
}

impl Operator for TotalHamiltonian {
    fn apply_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        self.apply_total_into(psi, out)
    }
}

/// One term of a [`TotalHamiltonian`] as an operator.
#[derive(Clone, Copy)]
pub struct TermOperator<'a> {
    h: &'a TotalHamiltonian,
    term: Term,
}

impl Operator for TermOperator<'_> {
    fn apply_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        self.h.apply_term_into(self.term, psi, out)
    }
}

pub fn apply_coupling(state: &SpinorState, h: &TotalHamiltonian) -> Result<SpinorState> {
    let mut out = state.zeros_like();
    h.apply_coupling_into(state, &mut out)?;
    Ok(out)
}

#[inline]
fn emit(o: &mut C64, v: C64, acc: bool) {
    if acc {
        *o += v;
    } else {
        *o = v;
    }
}

/// `sum_{j<k} c_jk (sigma_j^dag sigma_k + h.c.) psi`, plus `psi` itself when `with_identity`.
fn dephasing_hops(dc: &DephasingCoupling, psi: &SpinorState, with_identity: bool) -> SpinorState {
    let k = dc.n_modes;
    let n_sys = psi.n_sys();
    let mut hopped = if with_identity { psi.clone() } else { psi.zeros_like() };
    hopped
        .amplitudes_mut()
        .par_chunks_mut(n_sys).with_min_len(par_min_len(n_sys))
        .enumerate()
        .for_each(|(s, blk)| {
            for j in 0..k {
                for l in j + 1..k {
                    if ((s >> j) & 1) == ((s >> l) & 1) {
                        continue;
                    }
                    let w = dc.weights[j * k + l];
                    for (o, x) in blk.iter_mut().zip(psi.block(s ^ (1 << j) ^ (1 << l))) {
                        *o += x * w;
                    }
                }
            }
        });
    hopped
}

/// Dense operator on the system index, identity on the bath.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemLocalOperator {
    n: usize,
    /// Row-major `n x n`.
    matrix: Vec<C64>,
}

impl SystemLocalOperator {
    pub fn new(n: usize, matrix: Vec<C64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::ShapeMismatch { expected: format!("{n}x{n} matrix"), got: format!("{}", matrix.len()) });
        }
        Ok(Self { n, matrix })
    }

    /// Pseudo-spin `S^z` of the reduced NV model.
    pub fn pseudo_spin_z() -> Self {
        let sz = spin::spin_half()[2];
        Self { n: 2, matrix: sz.iter().flatten().copied().collect() }
    }

    pub fn matrix(&self) -> &[C64] {
        &self.matrix
    }
}

impl Operator for SystemLocalOperator {
    fn apply_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        psi.check_shape(psi.n_modes(), self.n)?;
        let n = self.n;
        out.amplitudes_mut()
            .par_chunks_mut(n).with_min_len(par_min_len(n))
            .zip(psi.amplitudes().par_chunks(n))
            .for_each(|(o, x)| {
                for (i, oi) in o.iter_mut().enumerate() {
                    *oi = self.matrix[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
                }
            });
        Ok(())
    }
}

/// `max_probe |(AB - BA) psi| / (|AB psi| + |BA psi| + floor)`.
pub fn commutator_residual(a: &dyn Operator, b: &dyn Operator, probes: &[SpinorState]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for psi in probes {
        let ab = a.apply(&b.apply(psi)?)?;
        let ba = b.apply(&a.apply(psi)?)?;
        let mut diff = ab.clone();
        diff.axpy(C64::new(-1.0, 0.0), &ba);
        let r = diff.norm() / (ab.norm() + ba.norm() + f64::MIN_POSITIVE);
        worst = worst.max(r);
    }
    Ok(worst)
}
