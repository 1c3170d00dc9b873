//! Bit-encoded two-level-system bath.
//!
//! Bath spinor component `s` encodes one configuration of the `K` modes: bit
//! `k - 1` of `s` is the occupation of mode `k` (modes are 1-based, bits are
//! counted from the least significant end). Every operator here acts on the
//! bath index only and is applied without building a matrix.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{par_min_len, SpinorState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumScheme {
    #[default]
    Uniform,
}

/// `K` points covering `[eps0, eps_c]`, endpoints included.
pub fn sample_spectrum(eps0: f64, eps_c: f64, k: usize, scheme: SpectrumScheme) -> Result<Vec<f64>> {
    if !(eps_c > eps0) {
        return Err(Error::InvalidSpectrum { eps0, eps_c });
    }
    if k == 0 {
        return Err(Error::Config("bath needs at least one mode".into()));
    }
    match scheme {
        SpectrumScheme::Uniform => {
            if k == 1 {
                return Ok(vec![eps0]);
            }
            let step = (eps_c - eps0) / (k - 1) as f64;
            Ok((0..k)
                .map(|i| if i + 1 == k { eps_c } else { eps0 + step * i as f64 })
                .collect())
        }
    }
}

/// Mode energies with the couplings and density of states derived from a
/// linear spectral density `J(eps) = eta * eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct BathSpec {
    energies: Vec<f64>,
    eta: f64,
    couplings: Vec<f64>,
    dos: Vec<f64>,
}

impl BathSpec {
    pub fn sampled(eps0: f64, eps_c: f64, k: usize, eta: f64, scheme: SpectrumScheme) -> Result<Self> {
        let energies = sample_spectrum(eps0, eps_c, k, scheme)?;
        if k == 1 {
            return Self::with_dos(energies, vec![1.0 / (eps_c - eps0)], eta);
        }
        Self::with_spacing_dos(energies, eta)
    }

    /// Density of states from the local spacing, `1 / (eps_{k+1} - eps_k)`; the
    /// last mode reuses the spacing below it.
    pub fn with_spacing_dos(energies: Vec<f64>, eta: f64) -> Result<Self> {
        if energies.len() < 2 {
            return Err(Error::Config(
                "spacing-derived density of states needs at least two modes".into(),
            ));
        }
        check_ascending(&energies, true)?;
        let n = energies.len();
        let dos = (0..n)
            .map(|k| {
                let gap = if k + 1 < n {
                    energies[k + 1] - energies[k]
                } else {
                    energies[n - 1] - energies[n - 2]
                };
                1.0 / gap
            })
            .collect();
        Self::with_dos(energies, dos, eta)
    }

    pub fn with_dos(energies: Vec<f64>, dos: Vec<f64>, eta: f64) -> Result<Self> {
        check_ascending(&energies, false)?;
        if dos.len() != energies.len() {
            return Err(Error::Config("density of states length differs from mode count".into()));
        }
        if dos.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Config("density of states must be positive and finite".into()));
        }
        if !(eta >= 0.0) {
            return Err(Error::Config(format!("spectral-density slope eta must be >= 0, got {eta}")));
        }
        if energies.iter().any(|e| *e < 0.0) {
            return Err(Error::Config("linear spectral density needs nonnegative mode energies".into()));
        }
        let couplings = coupling_constants(&energies, &dos, eta);
        Ok(Self { energies, eta, couplings, dos })
    }

    pub fn n_modes(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `d_k` for modes `1..=K` stored 0-based.
    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn dos(&self) -> &[f64] {
        &self.dos
    }
}

/// Degenerate modes are allowed unless `strict`.
fn check_ascending(energies: &[f64], strict: bool) -> Result<()> {
    if energies.is_empty() {
        return Err(Error::Config("bath needs at least one mode".into()));
    }
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::Config("mode energies must be finite".into()));
    }
    if strict && energies.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("mode energies must be strictly ascending".into()));
    }
    if energies.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("mode energies must be ascending".into()));
    }
    Ok(())
}

/// `d_k = sqrt(J(eps_k) / rho(eps_k))` with `J = eta * eps`.
pub fn coupling_constants(energies: &[f64], dos: &[f64], eta: f64) -> Vec<f64> {
    energies
        .iter()
        .zip(dos)
        .map(|(e, r)| (eta * e / r).max(0.0).sqrt())
        .collect()
}

/// Single-mode operators, with the spin components carrying a factor 1/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeOp {
    Create,
    Annihilate,
    Sx,
    Sy,
    Sz,
}

fn check_mode(k: usize, n_modes: usize) -> Result<usize> {
    if k == 0 || k > n_modes {
        return Err(Error::InvalidMode { k, n_modes });
    }
    Ok(1 << (k - 1))
}

pub fn apply_mode_op(state: &SpinorState, k: usize, op: ModeOp) -> Result<SpinorState> {
    let bit = check_mode(k, state.n_modes())?;
    let half = C64::new(0.5, 0.0);
    // -i/2 = 1/(2i)
    let inv_2i = C64::new(0.0, -0.5);
    let mut out = state.zeros_like();
    let n_sys = state.n_sys();
    out.amplitudes_mut()
        .par_chunks_mut(n_sys).with_min_len(par_min_len(n_sys))
        .enumerate()
        .for_each(|(s, blk)| {
            let excited = s & bit != 0;
            let (src, f) = match op {
                ModeOp::Create if excited => (s ^ bit, C64::new(1.0, 0.0)),
                ModeOp::Annihilate if !excited => (s ^ bit, C64::new(1.0, 0.0)),
                ModeOp::Create | ModeOp::Annihilate => return,
                ModeOp::Sx => (s ^ bit, half),
                // sigma^dag lands on excited components, sigma on empty ones
                ModeOp::Sy if excited => (s ^ bit, inv_2i),
                ModeOp::Sy => (s ^ bit, -inv_2i),
                ModeOp::Sz if excited => (s, half),
                ModeOp::Sz => (s, -half),
            };
            for (o, x) in blk.iter_mut().zip(state.block(src)) {
                *o = f * x;
            }
        });
    Ok(out)
}

/// `(sigma_j^dag sigma_k + sigma_k^dag sigma_j)`: moves one excitation between modes.
pub fn apply_pair_hop(state: &SpinorState, j: usize, k: usize) -> Result<SpinorState> {
    let bj = check_mode(j, state.n_modes())?;
    let bk = check_mode(k, state.n_modes())?;
    if j == k {
        return Err(Error::InvalidPair { j, k });
    }
    let mut out = state.zeros_like();
    let n_sys = state.n_sys();
    out.amplitudes_mut()
        .par_chunks_mut(n_sys).with_min_len(par_min_len(n_sys))
        .enumerate()
        .for_each(|(s, blk)| {
            if ((s & bj) != 0) != ((s & bk) != 0) {
                blk.copy_from_slice(state.block(s ^ bj ^ bk));
            }
        });
    Ok(out)
}

/// Total excitation energy of configuration `s`.
#[inline]
pub fn configuration_energy(s: usize, energies: &[f64]) -> f64 {
    energies
        .iter()
        .enumerate()
        .filter(|(k, _)| s >> k & 1 == 1)
        .map(|(_, e)| e)
        .sum()
}

/// `H_B = sum_k eps_k sigma_k^dag sigma_k`, diagonal in the bit basis.
pub fn apply_bath_hamiltonian(state: &SpinorState, spec: &BathSpec) -> Result<SpinorState> {
    let mut out = state.zeros_like();
    bath_hamiltonian_into(state, spec.energies(), &mut out)?;
    Ok(out)
}

pub(crate) fn bath_hamiltonian_into(state: &SpinorState, energies: &[f64], out: &mut SpinorState) -> Result<()> {
    state.check_shape(energies.len(), state.n_sys())?;
    let n_sys = state.n_sys();
    out.amplitudes_mut()
        .par_chunks_mut(n_sys).with_min_len(par_min_len(n_sys))
        .enumerate()
        .for_each(|(s, blk)| {
            let e = configuration_energy(s, energies);
            for (o, x) in blk.iter_mut().zip(state.block(s)) {
                *o = x * e;
            }
        });
    Ok(())
}
