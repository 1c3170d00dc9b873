//! Short-iterative Lanczos propagation in real and imaginary time.
//!
//! Each step builds a Krylov basis of the current state, exponentiates the
//! tridiagonal projection and accepts the largest sub-step whose estimated
//! error is below `tol`. Output is delivered on a fixed time stride that is
//! independent of the internal step sizes.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::state::SpinorState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorConfig {
    /// Largest internal step.
    pub dt: f64,
    /// Per-step error bound on the propagated vector.
    pub tol: f64,
    pub krylov_dim_max: usize,
    /// Optional `(E_min, E_max)`; `E_min` is used as the energy shift in imaginary time.
    pub spectral_bounds: Option<(f64, f64)>,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self { dt: 1.0, tol: 1e-10, krylov_dim_max: 24, spectral_bounds: None }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("propagator dt must be positive, got {}", self.dt)));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-3) {
            return Err(Error::Config(format!("propagator tol must lie in (0, 1e-3], got {}", self.tol)));
        }
        if self.krylov_dim_max < 4 {
            return Err(Error::Config(format!("krylov_dim_max must be at least 4, got {}", self.krylov_dim_max)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Real,
    Imaginary,
}

/// Counters accumulated over a propagation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PropagationStats {
    pub steps: usize,
    pub matvecs: usize,
}

/// Lanczos propagator with reusable Krylov workspace.
pub struct Propagator {
    config: PropagatorConfig,
    basis: Vec<SpinorState>,
    work: Option<SpinorState>,
    stats: PropagationStats,
}

struct Projection {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// `beta_m` coupling the last basis vector to the residual, zero on breakdown.
    residual: f64,
}

impl Propagator {
    pub fn new(config: PropagatorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, basis: Vec::new(), work: None, stats: PropagationStats::default() })
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.config
    }

    pub fn stats(&self) -> PropagationStats {
        self.stats
    }

    fn ensure_workspace(&mut self, psi: &SpinorState) {
        let m = self.config.krylov_dim_max;
        if self.basis.first().is_some_and(|v| !v.same_shape(psi)) {
            self.basis.clear();
            self.work = None;
        }
        while self.basis.len() < m {
            self.basis.push(psi.zeros_like());
        }
        if self.work.is_none() {
            self.work = Some(psi.zeros_like());
        }
    }

    /// Lanczos recursion on `psi / |psi|`. Stops early once the step `tau`
    /// would already be accurate.
    fn lanczos(&mut self, h: &dyn Operator, psi: &SpinorState, tau: f64, dir: Direction) -> Result<Projection> {
        self.ensure_workspace(psi);
        let m = self.config.krylov_dim_max;
        let norm = psi.norm();
        self.basis[0].amplitudes_mut().copy_from_slice(psi.amplitudes());
        self.basis[0].scale(1.0 / norm);
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        let mut w = self.work.take().expect("workspace");
        let mut scale = 0.0f64;
        let mut residual = 0.0;
        for j in 0..m {
            h.apply_into(&self.basis[j], &mut w)?;
            self.stats.matvecs += 1;
            let a = self.basis[j].inner(&w).re;
            w.axpy(C64::new(-a, 0.0), &self.basis[j]);
            if j > 0 {
                w.axpy(C64::new(-beta[j - 1], 0.0), &self.basis[j - 1]);
            }
            // one pass of local reorthogonalization against the last two vectors
            for i in j.saturating_sub(1)..=j {
                let c = self.basis[i].inner(&w);
                w.axpy(-c, &self.basis[i]);
            }
            alpha.push(a);
            let b = w.norm();
            scale = scale.max(a.abs()).max(b);
            if b <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
                residual = 0.0;
                break;
            }
            residual = b;
            if j + 1 == m {
                break;
            }
            beta.push(b);
            if j >= 2 {
                let err = step_error(&alpha, &beta[..j], b, tau, dir)?;
                if err <= self.config.tol {
                    break;
                }
            }
            std::mem::swap(&mut self.basis[j + 1], &mut w);
            self.basis[j + 1].scale(1.0 / b);
        }
        self.work = Some(w);
        beta.truncate(alpha.len() - 1);
        Ok(Projection { alpha, beta, residual })
    }

    /// Advances `psi` by at most `tau` (signed for real time, positive for
    /// imaginary time) and returns the step actually taken.
    fn step(&mut self, h: &dyn Operator, psi: &mut SpinorState, tau: f64, dir: Direction) -> Result<f64> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::StepFailure { t: 0.0, reason: "zero state".into() });
        }
        let proj = self.lanczos(h, psi, tau, dir)?;
        let eig = tridiagonal_eigen(&proj.alpha, &proj.beta)?;
        let mut taken = tau;
        if proj.residual > 0.0 && eig.error(proj.residual, tau, dir, self.shift(&eig)) > self.config.tol {
            let (mut lo, mut hi) = (0.0, tau.abs());
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if eig.error(proj.residual, mid * tau.signum(), dir, self.shift(&eig)) <= self.config.tol {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if lo <= 1e-12 * tau.abs() {
                return Err(Error::StepFailure {
                    t: 0.0,
                    reason: format!(
                        "Krylov space of dimension {} cannot reach tol {:.1e}; residual {:.3e}",
                        proj.alpha.len(),
                        self.config.tol,
                        proj.residual
                    ),
                });
            }
            taken = lo * tau.signum();
        }
        let coeffs = eig.coefficients(taken, dir, self.shift(&eig));
        psi.fill_zero();
        for (v, c) in self.basis.iter().zip(&coeffs) {
            psi.axpy(c * norm, v);
        }
        self.stats.steps += 1;
        Ok(taken)
    }

    fn shift(&self, eig: &TridiagonalEigen) -> f64 {
        match self.config.spectral_bounds {
            Some((lo, _)) => lo.min(eig.min()),
            None => eig.min(),
        }
    }

    /// Propagates `psi` from 0 to `t_final` (either sign), calling `observer`
    /// at `t = 0`, every multiple of `stride` and at `t_final`.
    pub fn evolve_real<F>(
        &mut self,
        h: &dyn Operator,
        psi: &mut SpinorState,
        t_final: f64,
        stride: f64,
        mut observer: F,
    ) -> Result<PropagationStats>
    where
        F: FnMut(f64, &SpinorState) -> Result<()>,
    {
        if !(stride > 0.0) {
            return Err(Error::Config(format!("output stride must be positive, got {stride}")));
        }
        let start = self.stats;
        let sign = if t_final < 0.0 { -1.0 } else { 1.0 };
        let total = t_final.abs();
        let n_out = (total / stride * (1.0 + 1e-12)).floor() as usize;
        let mut targets: Vec<f64> = (1..=n_out).map(|n| n as f64 * stride).collect();
        if targets.last().map_or(total > 0.0, |&l| (total - l).abs() > 1e-12 * total.max(1.0)) {
            targets.push(total);
        }
        observer(0.0, psi)?;
        let mut t = 0.0;
        for target in targets {
            while target - t > 1e-14 * target.max(1.0) {
                let tau = (target - t).min(self.config.dt);
                let taken = self
                    .step(h, psi, sign * tau, Direction::Real)
                    .map_err(|e| with_time(e, sign * t))?;
                t += taken.abs();
            }
            t = target;
            observer(sign * t, psi)?;
        }
        Ok(PropagationStats { steps: self.stats.steps - start.steps, matvecs: self.stats.matvecs - start.matvecs })
    }

    /// Applies `exp(-H tau)` and renormalizes.
    fn imaginary_step(&mut self, h: &dyn Operator, psi: &mut SpinorState, tau: f64) -> Result<()> {
        let mut t = 0.0;
        while tau - t > 1e-14 * tau {
            let taken = self.step(h, psi, tau - t, Direction::Imaginary).map_err(|e| with_time(e, t))?;
            psi.normalize();
            t += taken;
        }
        Ok(())
    }

    /// Relaxes `seed` towards the ground state of `h` by repeated imaginary
    /// time steps of length `dt` until the energy changes by less than
    /// `1e-8` relative between iterations.
    pub fn ground_state_imaginary_time(
        &mut self,
        h: &dyn Operator,
        seed: &SpinorState,
        max_iterations: usize,
    ) -> Result<GroundState> {
        let mut psi = seed.clone();
        if psi.normalize() == 0.0 {
            return Err(Error::ZeroAmplitudes);
        }
        let mut energy = h.expectation(&psi)?;
        let mut last_change = f64::INFINITY;
        for it in 1..=max_iterations {
            let dt = self.config.dt;
            self.imaginary_step(h, &mut psi, dt)?;
            let e = h.expectation(&psi)?;
            last_change = (e - energy).abs();
            energy = e;
            if last_change <= 1e-8 * e.abs().max(1e-4) {
                return Ok(GroundState { state: psi, energy, iterations: it });
            }
        }
        Err(Error::NoConvergence { iterations: max_iterations, last_change })
    }
}

fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::StepFailure { reason, .. } => Error::StepFailure { t, reason },
        other => other,
    }
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: SpinorState,
    pub energy: f64,
    pub iterations: usize,
}

struct TridiagonalEigen {
    values: Vec<f64>,
    /// Column `l` is the eigenvector for `values[l]`.
    vectors: DMatrix<f64>,
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> Result<TridiagonalEigen> {
    let n = alpha.len();
    let mut t = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alpha[i];
        if i + 1 < n {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::StepFailure { t: 0.0, reason: "non-finite Lanczos coefficients".into() });
    }
    let eig = SymmetricEigen::new(t);
    Ok(TridiagonalEigen { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors })
}

impl TridiagonalEigen {
    fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn phase(&self, l: usize, tau: f64, dir: Direction, shift: f64) -> C64 {
        match dir {
            Direction::Real => C64::from_polar(1.0, -self.values[l] * tau),
            Direction::Imaginary => C64::new((-(self.values[l] - shift) * tau).exp(), 0.0),
        }
    }

    /// `exp(-i T tau) e_1` (or `exp(-T tau) e_1`, shifted).
    fn coefficients(&self, tau: f64, dir: Direction, shift: f64) -> Vec<C64> {
        let n = self.values.len();
        let w: Vec<C64> = (0..n).map(|l| self.phase(l, tau, dir, shift) * self.vectors[(0, l)]).collect();
        (0..n).map(|i| (0..n).map(|l| w[l] * self.vectors[(i, l)]).sum()).collect()
    }

    fn error(&self, residual: f64, tau: f64, dir: Direction, shift: f64) -> f64 {
        let c = self.coefficients(tau, dir, shift);
        let last = c.last().map_or(0.0, |x| x.norm());
        match dir {
            Direction::Real => residual * last,
            Direction::Imaginary => {
                let n: f64 = c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                residual * last / n.max(f64::MIN_POSITIVE)
            }
        }
    }
}

fn step_error(alpha: &[f64], beta: &[f64], residual: f64, tau: f64, dir: Direction) -> Result<f64> {
    let eig = tridiagonal_eigen(alpha, beta)?;
    let shift = eig.min();
    Ok(eig.error(residual, tau, dir, shift))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZenoReport {
    /// `1 / delta_h`; infinite for an eigenstate.
    pub t_z: f64,
    pub delta_h: f64,
    /// `(t, P(t))` with `P(t) = |<psi(0)|psi(t)>|^2`.
    pub survival_samples: Vec<(f64, f64)>,
}

impl ZenoReport {
    /// Largest relative deviation of `1 - P(t)` from `t^2 / t_Z^2` over the samples.
    pub fn quadratic_residual(&self) -> f64 {
        if !self.t_z.is_finite() {
            return self.survival_samples.iter().map(|(_, p)| (1.0 - p).abs()).fold(0.0, f64::max);
        }
        self.survival_samples
            .iter()
            .filter(|(t, _)| *t > 0.0)
            .map(|(t, p)| {
                let q = (t / self.t_z).powi(2);
                ((1.0 - p) - q).abs() / q
            })
            .fold(0.0, f64::max)
    }
}

/// Variance floor, relative to `<H^2>`, below which a state is treated as an eigenstate.
pub const ZENO_VARIANCE_FLOOR: f64 = 1e-14;

/// Energy spread `sqrt(|H psi|^2 - <H>^2)` of a normalized state.
pub fn energy_spread(h: &dyn Operator, psi: &SpinorState) -> Result<f64> {
    let hpsi = h.apply(psi)?;
    let n2 = psi.norm_sqr();
    let e = psi.inner(&hpsi).re / n2;
    let var = hpsi.norm_sqr() / n2 - e * e;
    let scale = (hpsi.norm_sqr() / n2).max(1.0);
    Ok(if var <= ZENO_VARIANCE_FLOOR * scale { 0.0 } else { var.sqrt() })
}

/// Zeno time of `psi` plus `n_samples` survival probabilities on `(0, 0.1 t_Z]`.
pub fn zeno_time(
    h: &dyn Operator,
    psi: &SpinorState,
    n_samples: usize,
    config: &PropagatorConfig,
) -> Result<ZenoReport> {
    let delta_h = energy_spread(h, psi)?;
    if delta_h == 0.0 {
        return Ok(ZenoReport { t_z: f64::INFINITY, delta_h, survival_samples: Vec::new() });
    }
    let t_z = 1.0 / delta_h;
    let mut samples = Vec::with_capacity(n_samples);
    if n_samples > 0 {
        let mut prop = Propagator::new(PropagatorConfig { tol: config.tol.min(1e-12), ..config.clone() })?;
        let stride = 0.1 * t_z / n_samples as f64;
        let mut state = psi.clone();
        let norm2 = psi.norm_sqr();
        prop.evolve_real(h, &mut state, 0.1 * t_z, stride, |t, s| {
            if t > 0.0 {
                samples.push((t, psi.inner(s).norm_sqr() / (norm2 * s.norm_sqr())));
            }
            Ok(())
        })?;
    }
    Ok(ZenoReport { t_z, delta_h, survival_samples: samples })
}
