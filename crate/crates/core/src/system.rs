//! Primary-system models: a harmonic oscillator on a Fourier grid and the NV
//! center spin (full spin-1 or the strong-field pseudo-spin-1/2), plus
//! initial-state preparation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{par_min_len, SpinorState};

/// Physical constants for NV scenarios. Energies are angular frequencies in
/// rad/us (so `2 pi * 1 MHz = 2 pi rad/us`), lengths in nm, fields in Gauss.
pub mod constants {
    use std::f64::consts::PI;

    /// Bohr magneton over Planck's constant, MHz per Gauss.
    pub const MU_B_OVER_H_MHZ_PER_G: f64 = 1.399_624_493_6;
    /// `mu0 muB^2 / (4 pi h)` in MHz nm^3 (no Lande factors).
    pub const DIPOLAR_MHZ_NM3: f64 = 12.980_13;
    /// Zero-field splitting of the NV ground triplet, MHz.
    pub const NV_ZERO_FIELD_MHZ: f64 = 2870.0;

    pub const MU_B_RAD_PER_US_G: f64 = 2.0 * PI * MU_B_OVER_H_MHZ_PER_G;
    pub const DIPOLAR_RAD_PER_US_NM3: f64 = 2.0 * PI * DIPOLAR_MHZ_NM3;
    pub const NV_ZERO_FIELD_RAD_PER_US: f64 = 2.0 * PI * NV_ZERO_FIELD_MHZ;
}

/// Harmonic oscillator `p^2/2m + m w^2 q^2/2` sampled on a periodic grid.
#[derive(Clone)]
pub struct GridSystem {
    mass: f64,
    omega: f64,
    q_min: f64,
    q_max: f64,
    dq: f64,
    positions: Vec<f64>,
    momenta: Vec<f64>,
    potential: Vec<f64>,
    kinetic: Vec<C64>,
    momentum_mult: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for GridSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSystem")
            .field("mass", &self.mass)
            .field("omega", &self.omega)
            .field("ng", &self.ng())
            .field("q_min", &self.q_min)
            .field("q_max", &self.q_max)
            .finish()
    }
}

impl GridSystem {
    /// Grid points `q_i = q_min + i dq`, `dq = (q_max - q_min) / ng`.
    pub fn new(mass: f64, omega: f64, ng: usize, q_min: f64, q_max: f64) -> Result<Self> {
        if !(mass > 0.0) || !(omega > 0.0) {
            return Err(Error::Config(format!("mass and omega must be positive (m={mass}, omega={omega})")));
        }
        if ng < 4 || !ng.is_power_of_two() {
            return Err(Error::Config(format!("grid size must be a power of two >= 4, got {ng}")));
        }
        if !(q_max > q_min) {
            return Err(Error::Config(format!("grid bounds reversed: [{q_min}, {q_max}]")));
        }
        let dq = (q_max - q_min) / ng as f64;
        let positions: Vec<f64> = (0..ng).map(|i| q_min + dq * i as f64).collect();
        let dp = 2.0 * PI / (ng as f64 * dq);
        let momenta: Vec<f64> = (0..ng)
            .map(|j| if j < ng / 2 { j as f64 * dp } else { (j as f64 - ng as f64) * dp })
            .collect();
        let potential = positions.iter().map(|q| 0.5 * mass * omega * omega * q * q).collect();
        let kinetic = momenta.iter().map(|p| C64::new(p * p / (2.0 * mass), 0.0)).collect();
        let momentum_mult = momenta.iter().map(|p| C64::new(*p, 0.0)).collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(ng);
        let inverse = planner.plan_fft_inverse(ng);
        Ok(Self { mass, omega, q_min, q_max, dq, positions, momenta, potential, kinetic, momentum_mult, forward, inverse })
    }

    /// Symmetric bounds `+-(6 sqrt(3/(2 m w)) + |d|)`, wide enough for the
    /// infrared-excited and displaced packets.
    pub fn with_default_bounds(mass: f64, omega: f64, ng: usize, displacement: f64) -> Result<Self> {
        let half = default_half_width(mass, omega, displacement);
        Self::new(mass, omega, ng, -half, half)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn ng(&self) -> usize {
        self.positions.len()
    }

    pub fn dq(&self) -> f64 {
        self.dq
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.q_min, self.q_max)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// FFT-ordered momenta.
    pub fn momenta(&self) -> &[f64] {
        &self.momenta
    }

    /// Ground-state width `sqrt(1/(2 m w))`.
    pub fn ground_width(&self) -> f64 {
        (1.0 / (2.0 * self.mass * self.omega)).sqrt()
    }

    /// Normalized analytic ground-state Gaussian on the grid.
    pub fn gaussian(&self, center: f64) -> Vec<C64> {
        let s = self.ground_width();
        let mut v: Vec<C64> = self
            .positions
            .iter()
            .map(|q| C64::new((-(q - center).powi(2) / (4.0 * s * s)).exp(), 0.0))
            .collect();
        let n: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    /// Applies `F^-1 diag(f(p)) F` to every system block of `psi`.
    fn spectral_into(&self, psi: &SpinorState, out: &mut SpinorState, multiplier: &[C64]) {
        let ng = self.ng();
        let norm = 1.0 / ng as f64;
        out.amplitudes_mut().copy_from_slice(psi.amplitudes());
        let scratch_len = self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len());
        out.amplitudes_mut().par_chunks_mut(ng).with_min_len(par_min_len(ng)).for_each_init(
            || vec![C64::new(0.0, 0.0); scratch_len],
            |scratch, blk| {
                self.forward.process_with_scratch(blk, scratch);
                for (x, m) in blk.iter_mut().zip(multiplier) {
                    *x *= m * norm;
                }
                self.inverse.process_with_scratch(blk, scratch);
            },
        );
    }

    pub fn kinetic_into(&self, psi: &SpinorState, out: &mut SpinorState) {
        self.spectral_into(psi, out, &self.kinetic);
    }

    pub fn momentum_into(&self, psi: &SpinorState, out: &mut SpinorState) {
        self.spectral_into(psi, out, &self.momentum_mult);
    }

    pub fn hamiltonian_into(&self, psi: &SpinorState, out: &mut SpinorState) {
        self.kinetic_into(psi, out);
        let ng = self.ng();
        out.amplitudes_mut()
            .par_chunks_mut(ng).with_min_len(par_min_len(ng))
            .zip(psi.amplitudes().par_chunks(ng))
            .for_each(|(o, x)| {
                for ((o, x), v) in o.iter_mut().zip(x).zip(&self.potential) {
                    *o += x * v;
                }
            });
    }

    /// Multiplies each block by the position `q_i`.
    pub fn position_into(&self, psi: &SpinorState, out: &mut SpinorState) {
        let ng = self.ng();
        out.amplitudes_mut()
            .par_chunks_mut(ng).with_min_len(par_min_len(ng))
            .zip(psi.amplitudes().par_chunks(ng))
            .for_each(|(o, x)| {
                for ((o, x), q) in o.iter_mut().zip(x).zip(&self.positions) {
                    *o = x * q;
                }
            });
    }

    /// Exact translation by `d`, `exp(-i p d)`, applied in momentum space.
    pub fn translate(&self, psi: &SpinorState, d: f64) -> SpinorState {
        let mult: Vec<C64> = self.momenta.iter().map(|p| C64::from_polar(1.0, -p * d)).collect();
        let mut out = psi.zeros_like();
        self.spectral_into(psi, &mut out, &mult);
        out
    }

    /// Momentum-space probability of each grid momentum, summed over the bath.
    pub fn momentum_distribution(&self, psi: &SpinorState) -> Vec<f64> {
        let ng = self.ng();
        let mut buf = psi.amplitudes().to_vec();
        let mut scratch = vec![C64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        let mut w = vec![0.0; ng];
        for blk in buf.chunks_mut(ng) {
            self.forward.process_with_scratch(blk, &mut scratch);
            for (wj, x) in w.iter_mut().zip(blk.iter()) {
                *wj += x.norm_sqr() / ng as f64;
            }
        }
        w
    }
}

pub fn default_half_width(mass: f64, omega: f64, displacement: f64) -> f64 {
    6.0 * (3.0 / (2.0 * mass * omega)).sqrt() + displacement.abs()
}

/// NV center in a field along z with a bath of substitutional nitrogen spins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NvSpec {
    /// Zero-field splitting `D`, rad/us.
    pub zero_field: f64,
    pub g0: f64,
    pub g: f64,
    /// Field along z, Gauss.
    pub field: f64,
    /// Bohr magneton, rad/us per Gauss.
    pub mu_b: f64,
    /// `mu0 muB^2 / 4 pi`, rad/us nm^3.
    pub dipolar: f64,
    /// Bath spin positions relative to the NV center, nm.
    pub positions: Vec<[f64; 3]>,
}

impl NvSpec {
    pub fn new(field: f64, positions: Vec<[f64; 3]>) -> Result<Self> {
        let spec = Self {
            zero_field: constants::NV_ZERO_FIELD_RAD_PER_US,
            g0: 2.0,
            g: 2.0,
            field,
            mu_b: constants::MU_B_RAD_PER_US_G,
            dipolar: constants::DIPOLAR_RAD_PER_US_NM3,
            positions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, r) in self.positions.iter().enumerate() {
            let n = norm3(r);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidGeometry(format!("bath spin {} sits at the NV center", k + 1)));
            }
        }
        for j in 0..self.positions.len() {
            for k in j + 1..self.positions.len() {
                if !(norm3(&sub3(&self.positions[j], &self.positions[k])) > 0.0) {
                    return Err(Error::InvalidGeometry(format!("bath spins {} and {} coincide", j + 1, k + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.positions.len()
    }

    /// NV Zeeman energy `g0 muB B`.
    pub fn nv_zeeman(&self) -> f64 {
        self.g0 * self.mu_b * self.field
    }

    /// Bath-spin Zeeman energy `g muB B`.
    pub fn bath_zeeman(&self) -> f64 {
        self.g * self.mu_b * self.field
    }

    /// `gamma_k = mu0 muB^2 g0 g / (4 pi r_k^3)` and the unit vectors `n_k`.
    pub fn system_bath_couplings(&self) -> Vec<(f64, [f64; 3])> {
        self.positions
            .iter()
            .map(|r| {
                let d = norm3(r);
                (self.dipolar * self.g0 * self.g / d.powi(3), scale3(r, 1.0 / d))
            })
            .collect()
    }

    /// `gamma_jk` and `n_jk` for every pair `j < k` (0-based), row-major over pairs.
    pub fn bath_bath_couplings(&self) -> Vec<(usize, usize, f64, [f64; 3])> {
        let mut out = Vec::new();
        for j in 0..self.positions.len() {
            for k in j + 1..self.positions.len() {
                let r = sub3(&self.positions[j], &self.positions[k]);
                let d = norm3(&r);
                out.push((j, k, self.dipolar * self.g * self.g / d.powi(3), scale3(&r, 1.0 / d)));
            }
        }
        out
    }

    /// Largest dipolar coupling, system-bath or bath-bath.
    pub fn max_dipolar(&self) -> f64 {
        let a = self.system_bath_couplings().iter().map(|c| c.0).fold(0.0, f64::max);
        let b = self.bath_bath_couplings().iter().map(|c| c.2).fold(0.0, f64::max);
        a.max(b)
    }
}

pub(crate) fn norm3(r: &[f64; 3]) -> f64 {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale3(a: &[f64; 3], f: f64) -> [f64; 3] {
    [a[0] * f, a[1] * f, a[2] * f]
}

/// K positions uniform in the spherical shell `r_min <= |r| <= r_max`.
pub fn sample_nv_geometry(k: usize, r_min: f64, r_max: f64, seed: u64) -> Result<Vec<[f64; 3]>> {
    if !(r_min > 0.0) {
        return Err(Error::InvalidGeometry(format!("r_min must be positive, got {r_min}")));
    }
    if !(r_max > r_min) {
        return Err(Error::InvalidGeometry(format!("need r_min < r_max, got [{r_min}, {r_max}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (r_min.powi(3), r_max.powi(3));
    Ok((0..k)
        .map(|_| {
            let r = (a + rng.random::<f64>() * (b - a)).cbrt();
            let cos_t: f64 = 2.0 * rng.random::<f64>() - 1.0;
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            [r * sin_t * phi.cos(), r * sin_t * phi.sin(), r * cos_t]
        })
        .collect())
}

/// NV spin operators. Full model basis: `m_S = +1, 0, -1`. Pseudo-spin basis:
/// index 0 = `|m_S = 0>` (S^z = +1/2), index 1 = `|m_S = -1>` (S^z = -1/2).
pub mod spin {
    use num_complex::Complex64 as C64;

    const Z: C64 = C64::new(0.0, 0.0);

    pub fn spin1() -> [[[C64; 3]; 3]; 3] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let sx = [
            [Z, C64::new(r, 0.0), Z],
            [C64::new(r, 0.0), Z, C64::new(r, 0.0)],
            [Z, C64::new(r, 0.0), Z],
        ];
        let sy = [
            [Z, C64::new(0.0, -r), Z],
            [C64::new(0.0, r), Z, C64::new(0.0, -r)],
            [Z, C64::new(0.0, r), Z],
        ];
        let sz = [
            [C64::new(1.0, 0.0), Z, Z],
            [Z, Z, Z],
            [Z, Z, C64::new(-1.0, 0.0)],
        ];
        [sx, sy, sz]
    }

    pub fn spin_half() -> [[[C64; 2]; 2]; 3] {
        let h = C64::new(0.5, 0.0);
        let sx = [[Z, h], [h, Z]];
        let sy = [[Z, C64::new(0.0, -0.5)], [C64::new(0.0, 0.5), Z]];
        let sz = [[h, Z], [Z, -h]];
        [sx, sy, sz]
    }
}

#[derive(Clone, Debug)]
pub enum SystemModel {
    Grid(GridSystem),
    NvFull(NvSpec),
    NvReduced(NvSpec),
}

impl SystemModel {
    pub fn n_sys(&self) -> usize {
        match self {
            SystemModel::Grid(g) => g.ng(),
            SystemModel::NvFull(_) => 3,
            SystemModel::NvReduced(_) => 2,
        }
    }

    pub fn grid(&self) -> Option<&GridSystem> {
        match self {
            SystemModel::Grid(g) => Some(g),
            _ => None,
        }
    }

    pub fn nv(&self) -> Option<&NvSpec> {
        match self {
            SystemModel::NvFull(s) | SystemModel::NvReduced(s) => Some(s),
            SystemModel::Grid(_) => None,
        }
    }

    /// Diagonal of the NV system Hamiltonian in its spin basis.
    pub fn nv_levels(&self) -> Option<Vec<f64>> {
        match self {
            SystemModel::NvFull(s) => {
                let b = s.nv_zeeman();
                Some(vec![s.zero_field + b, 0.0, s.zero_field - b])
            }
            SystemModel::NvReduced(s) => {
                // D (Sz - 1/2)^2 + g0 muB B (Sz - 1/2) with Sz = +1/2, -1/2
                Some(vec![0.0, s.zero_field - s.nv_zeeman()])
            }
            SystemModel::Grid(_) => None,
        }
    }

    pub fn hamiltonian_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        psi.check_shape(psi.n_modes(), self.n_sys())?;
        out.check_shape(psi.n_modes(), self.n_sys())?;
        match self {
            SystemModel::Grid(g) => g.hamiltonian_into(psi, out),
            _ => {
                let levels = self.nv_levels().expect("nv model");
                let n = levels.len();
                out.amplitudes_mut()
                    .par_chunks_mut(n).with_min_len(par_min_len(n))
                    .zip(psi.amplitudes().par_chunks(n))
                    .for_each(|(o, x)| {
                        for ((o, x), e) in o.iter_mut().zip(x).zip(&levels) {
                            *o = x * e;
                        }
                    });
            }
        }
        Ok(())
    }
}

pub fn apply_system_hamiltonian(state: &SpinorState, model: &SystemModel) -> Result<SpinorState> {
    let mut out = state.zeros_like();
    model.hamiltonian_into(state, &mut out)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BathInit {
    Vacuum,
    /// Each mode in `sqrt(1-p)|0> + e^{i phi} sqrt(p)|1>` with a seeded random phase.
    RandomProduct { p_exc: f64, seed: u64 },
    /// One bit configuration, each mode excited with probability `p`.
    RandomConfiguration { p_exc: f64, seed: u64 },
}

impl BathInit {
    pub fn bath_vector(&self, n_modes: usize) -> Result<Vec<C64>> {
        let dim = 1usize << n_modes;
        let mut v = vec![C64::new(0.0, 0.0); dim];
        match *self {
            BathInit::Vacuum => v[0] = C64::new(1.0, 0.0),
            BathInit::RandomProduct { p_exc, seed } => {
                check_probability(p_exc)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let qubits: Vec<[C64; 2]> = (0..n_modes)
                    .map(|_| {
                        let phi = 2.0 * PI * rng.random::<f64>();
                        [C64::new((1.0 - p_exc).sqrt(), 0.0), C64::from_polar(p_exc.sqrt(), phi)]
                    })
                    .collect();
                for (s, x) in v.iter_mut().enumerate() {
                    *x = qubits.iter().enumerate().map(|(k, q)| q[(s >> k) & 1]).product();
                }
            }
            BathInit::RandomConfiguration { p_exc, seed } => {
                check_probability(p_exc)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = (0..n_modes).fold(0usize, |acc, k| {
                    if rng.random::<f64>() < p_exc { acc | (1 << k) } else { acc }
                });
                v[s] = C64::new(1.0, 0.0);
            }
        }
        Ok(v)
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("excitation probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Excitation {
    #[default]
    None,
    /// `q |g>`, normalized.
    Infrared,
    /// `exp(-i p d) |g>`.
    Displaced { d: f64 },
    /// `exp(-i p d) q |g>`, normalized.
    DisplacedInfrared { d: f64 },
}

impl Excitation {
    fn name(&self) -> &'static str {
        match self {
            Excitation::None => "none",
            Excitation::Infrared => "infrared",
            Excitation::Displaced { .. } => "displaced",
            Excitation::DisplacedInfrared { .. } => "displaced_infrared",
        }
    }
}

/// The state an excitation is applied to.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    /// A system-only vector; the bath is set from the [`BathInit`].
    Bare(&'a [C64]),
    /// A full system-bath state (e.g. the ground state of the total Hamiltonian).
    Total(&'a SpinorState),
}

pub fn prepare_state(
    model: &SystemModel,
    n_modes: usize,
    bath: &BathInit,
    excitation: Excitation,
    reference: Reference<'_>,
) -> Result<SpinorState> {
    let mut psi = match reference {
        Reference::Bare(sys) => {
            if sys.len() != model.n_sys() {
                return Err(Error::ShapeMismatch {
                    expected: format!("system vector of length {}", model.n_sys()),
                    got: format!("{}", sys.len()),
                });
            }
            SpinorState::product(&bath.bath_vector(n_modes)?, sys)?
        }
        Reference::Total(state) => {
            state.check_shape(n_modes, model.n_sys())?;
            state.clone()
        }
    };
    if excitation != Excitation::None {
        let grid = model.grid().ok_or_else(|| Error::UnsupportedExcitation(excitation.name().into()))?;
        if matches!(excitation, Excitation::Infrared | Excitation::DisplacedInfrared { .. }) {
            let mut out = psi.zeros_like();
            grid.position_into(&psi, &mut out);
            psi = out;
        }
        if let Excitation::Displaced { d } | Excitation::DisplacedInfrared { d } = excitation {
            psi = grid.translate(&psi, d);
        }
    }
    if psi.normalize() == 0.0 {
        return Err(Error::ZeroAmplitudes);
    }
    Ok(psi)
}

/// NV system basis vector for a given `m_S`.
pub fn nv_level_vector(model: &SystemModel, m_s: i32) -> Result<Vec<C64>> {
    let (n, idx) = match (model, m_s) {
        (SystemModel::NvFull(_), 1) => (3, 0),
        (SystemModel::NvFull(_), 0) => (3, 1),
        (SystemModel::NvFull(_), -1) => (3, 2),
        (SystemModel::NvReduced(_), 0) => (2, 0),
        (SystemModel::NvReduced(_), -1) => (2, 1),
        _ => return Err(Error::UnsupportedExcitation(format!("m_S = {m_s} for this model"))),
    };
    let mut v = vec![C64::new(0.0, 0.0); n];
    v[idx] = C64::new(1.0, 0.0);
    Ok(v)
}
