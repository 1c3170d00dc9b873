//! The total wave function: one system-space block per bath configuration.
//!
//! Amplitudes are stored bath-major, `amps[s * n_sys + i]`, so that every
//! bath spinor component `s` owns a contiguous block of `n_sys` system
//! amplitudes. Grid FFTs and per-component operators work block by block.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SpinorState {
    n_modes: usize,
    n_sys: usize,
    amps: Vec<C64>,
}

impl SpinorState {
    pub fn zeros(n_modes: usize, n_sys: usize) -> Self {
        Self { n_modes, n_sys, amps: vec![C64::new(0.0, 0.0); n_sys << n_modes] }
    }

    pub fn from_amplitudes(n_modes: usize, n_sys: usize, amps: Vec<C64>) -> Result<Self> {
        let expected = n_sys << n_modes;
        if amps.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} amplitudes (2^{n_modes} x {n_sys})"),
                got: format!("{}", amps.len()),
            });
        }
        Ok(Self { n_modes, n_sys, amps })
    }

    /// Tensor product `bath ⊗ system`; `bath` has length `2^n_modes`.
    pub fn product(bath: &[C64], system: &[C64]) -> Result<Self> {
        let n_modes = bath.len().trailing_zeros() as usize;
        if !bath.len().is_power_of_two() {
            return Err(Error::ShapeMismatch {
                expected: "bath vector of length 2^K".into(),
                got: format!("{}", bath.len()),
            });
        }
        let mut amps = Vec::with_capacity(bath.len() * system.len());
        for b in bath {
            amps.extend(system.iter().map(|x| b * x));
        }
        Ok(Self { n_modes, n_sys: system.len(), amps })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_sys(&self) -> usize {
        self.n_sys
    }

    /// Number of bath spinor components, `2^K`.
    pub fn n_components(&self) -> usize {
        1 << self.n_modes
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    #[inline]
    pub fn get(&self, s: usize, i: usize) -> C64 {
        self.amps[s * self.n_sys + i]
    }

    #[inline]
    pub fn set(&mut self, s: usize, i: usize, value: C64) {
        self.amps[s * self.n_sys + i] = value;
    }

    /// System block of bath component `s`.
    pub fn block(&self, s: usize) -> &[C64] {
        &self.amps[s * self.n_sys..(s + 1) * self.n_sys]
    }

    pub fn block_mut(&mut self, s: usize) -> &mut [C64] {
        let n = self.n_sys;
        &mut self.amps[s * n..(s + 1) * n]
    }

    pub fn same_shape(&self, other: &SpinorState) -> bool {
        self.n_modes == other.n_modes && self.n_sys == other.n_sys
    }

    pub fn check_shape(&self, n_modes: usize, n_sys: usize) -> Result<()> {
        if self.n_modes != n_modes || self.n_sys != n_sys {
            return Err(Error::ShapeMismatch {
                expected: format!("K={n_modes}, N_sys={n_sys}"),
                got: format!("K={}, N_sys={}", self.n_modes, self.n_sys),
            });
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_modes, self.n_sys)
    }

    pub fn fill_zero(&mut self) {
        self.amps.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
    }

    /// `<self|other>`
    pub fn inner(&self, other: &SpinorState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            self.scale(1.0 / n);
        }
        n
    }

    pub fn scale(&mut self, f: f64) {
        self.amps.iter_mut().for_each(|a| *a *= f);
    }

    pub fn scale_c(&mut self, f: C64) {
        self.amps.iter_mut().for_each(|a| *a *= f);
    }

    /// `self += f * other`
    pub fn axpy(&mut self, f: C64, other: &SpinorState) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += f * b;
        }
    }

    /// `1 - |<self|other>|^2` for normalized states.
    pub fn overlap_deficit(&self, other: &SpinorState) -> f64 {
        1.0 - self.inner(other).norm_sqr() / (self.norm_sqr() * other.norm_sqr())
    }

    /// Squared probability of each bath component, summed over system index.
    pub fn bath_populations(&self) -> Vec<f64> {
        (0..self.n_components())
            .map(|s| self.block(s).iter().map(|a| a.norm_sqr()).sum())
            .collect()
    }
}

/// Amplitudes per parallel task; small states run on one thread.
const PAR_MIN_AMPLITUDES: usize = 4096;

/// Minimum number of `n_sys`-sized blocks handed to one rayon task.
pub(crate) fn par_min_len(n_sys: usize) -> usize {
    (PAR_MIN_AMPLITUDES / n_sys.max(1)).max(1)
}

/// Bit `k - 1` of spinor component `s`, i.e. the occupation of 1-based mode `k`.
#[inline]
pub fn mode_bit(s: usize, k: usize) -> usize {
    (s >> (k - 1)) & 1
}
