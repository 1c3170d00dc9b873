//! Bath spin swaps and seeded ensembles of swap trajectories.
//!
//! Amplitudes are written as `lambda_s = e^{a_s} / Z` with complex phases
//! `a_s`. Replacing mode `k` pairs every component with its partner of
//! opposite bit `k`, keeps the branch average of their phases for the rest
//! of the bath and imposes the fresh spin on bit `k`.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::propagate::{Propagator, PropagatorConfig};
use crate::state::{par_min_len, SpinorState};

/// Magnitude substituted for exact zeros before taking logarithms.
pub const ZERO_CLAMP: f64 = 1e-30;

fn clamped_log(z: C64) -> C64 {
    let r = z.norm();
    if r < ZERO_CLAMP {
        C64::new(ZERO_CLAMP.ln(), z.arg())
    } else {
        C64::new(r.ln(), z.arg())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchingPhases {
    /// Shifted phases, `sum_s a_s = 0`.
    pub a: Vec<C64>,
    pub c_shift: C64,
}

impl BranchingPhases {
    /// `e^{a_s} / Z` with `Z` the normalization.
    pub fn amplitudes(&self) -> Vec<C64> {
        let v: Vec<C64> = self.a.iter().map(|a| a.exp()).collect();
        let z = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / z).collect()
    }
}

/// `a_s = c + log|lambda_s| + i arg(lambda_s)` with `c` chosen so that the phases sum to zero.
pub fn phases_from_amplitudes(lambda: &[C64]) -> Result<BranchingPhases> {
    if lambda.is_empty() || lambda.iter().all(|x| x.norm_sqr() == 0.0) {
        return Err(Error::ZeroAmplitudes);
    }
    let logs: Vec<C64> = lambda.iter().map(|&x| clamped_log(x)).collect();
    let c_shift = -logs.iter().sum::<C64>() / lambda.len() as f64;
    Ok(BranchingPhases { a: logs.into_iter().map(|l| l + c_shift).collect(), c_shift })
}

/// Normalized single-spin state `(amp0, amp1)` that replaces a bath mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreshSpin {
    pub amp0: C64,
    pub amp1: C64,
}

impl FreshSpin {
    pub fn new(amp0: C64, amp1: C64) -> Result<Self> {
        let n = (amp0.norm_sqr() + amp1.norm_sqr()).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Config("fresh spin must have nonzero norm".into()));
        }
        Ok(Self { amp0: amp0 / n, amp1: amp1 / n })
    }

    pub fn ground() -> Self {
        Self { amp0: C64::new(1.0, 0.0), amp1: C64::new(0.0, 0.0) }
    }

    pub fn excited() -> Self {
        Self { amp0: C64::new(0.0, 0.0), amp1: C64::new(1.0, 0.0) }
    }

    /// Branching coefficient `b`: amplitudes `(e^b, e^{-b}) / Z`.
    pub fn from_branch(b: C64) -> Self {
        Self::new(b.exp(), (-b).exp()).expect("finite b")
    }

    pub fn amp(&self, bit: usize) -> C64 {
        if bit == 0 {
            self.amp0
        } else {
            self.amp1
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapMode {
    /// Branch-averaged phases for the rest, fresh spin on bit `k`, renormalized.
    #[default]
    Full,
    /// Only the imaginary parts of the phases are replaced; magnitudes are kept.
    PhaseOnly,
    /// Projects mode `k` onto the fresh spin and renormalizes.
    Project,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    #[default]
    UniformRandom,
    RoundRobin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapPolicy {
    pub interval: f64,
    pub target_rule: TargetRule,
    pub fresh_spin: FreshSpin,
    pub n_r: usize,
    pub seed: u64,
    pub mode: SwapMode,
}

impl SwapPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.interval > 0.0) {
            return Err(Error::Config(format!("swap interval must be positive, got {}", self.interval)));
        }
        if self.n_r == 0 {
            return Err(Error::Config("ensemble size N_r must be at least 1".into()));
        }
        let n = self.fresh_spin.amp0.norm_sqr() + self.fresh_spin.amp1.norm_sqr();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("fresh spin must be normalized, norm^2 = {n}")));
        }
        Ok(())
    }
}

/// Replaces 1-based mode `k` of `state` by `fresh`.
pub fn swap_spin(state: &SpinorState, k: usize, fresh: FreshSpin, mode: SwapMode) -> Result<SpinorState> {
    let n_modes = state.n_modes();
    if k == 0 || k > n_modes {
        return Err(Error::InvalidMode { k, n_modes });
    }
    if state.norm_sqr() == 0.0 {
        return Err(Error::ZeroAmplitudes);
    }
    let bit = 1usize << (k - 1);
    let n_sys = state.n_sys();
    let log_f = [clamped_log(fresh.amp0), clamped_log(fresh.amp1)];
    let mut out = state.zeros_like();
    out.amplitudes_mut()
        .par_chunks_mut(n_sys).with_min_len(par_min_len(n_sys))
        .enumerate()
        .for_each(|(s, blk)| {
            let b = usize::from(s & bit != 0);
            let lo = s & !bit;
            match mode {
                SwapMode::Full | SwapMode::PhaseOnly => {
                    for (i, o) in blk.iter_mut().enumerate() {
                        // the shift c cancels between the branch average and the reconstruction;
                        // phases are principal-branch logs, averaged without unwrapping
                        let avg = 0.5 * (clamped_log(state.get(lo, i)) + clamped_log(state.get(lo | bit, i)));
                        let new = avg + log_f[b];
                        *o = if mode == SwapMode::Full {
                            new.exp()
                        } else {
                            C64::from_polar(state.get(s, i).norm(), new.im)
                        };
                    }
                }
                SwapMode::Project => {
                    let f = fresh.amp(b);
                    for (i, o) in blk.iter_mut().enumerate() {
                        let c = fresh.amp0.conj() * state.get(lo, i) + fresh.amp1.conj() * state.get(lo | bit, i);
                        *o = f * c;
                    }
                }
            }
        });
    if out.normalize() == 0.0 {
        return Err(Error::ZeroAmplitudes);
    }
    Ok(out)
}

/// Reduced density matrix of 1-based mode `k`, `[[rho00, rho01], [rho10, rho11]]`.
pub fn mode_density(state: &SpinorState, k: usize) -> Result<[[C64; 2]; 2]> {
    let n_modes = state.n_modes();
    if k == 0 || k > n_modes {
        return Err(Error::InvalidMode { k, n_modes });
    }
    let bit = 1usize << (k - 1);
    let mut rho = [[C64::new(0.0, 0.0); 2]; 2];
    for s in (0..state.n_components()).filter(|s| s & bit == 0) {
        for (x, y) in state.block(s).iter().zip(state.block(s | bit)) {
            rho[0][0] += x * x.conj();
            rho[0][1] += x * y.conj();
            rho[1][0] += y * x.conj();
            rho[1][1] += y * y.conj();
        }
    }
    let tr = (rho[0][0] + rho[1][1]).re;
    for r in rho.iter_mut().flatten() {
        *r /= tr;
    }
    Ok(rho)
}

/// Ensemble-averaged observables on a fixed time grid.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// `mean[n][j]`: observable `j` at `times[n]`, averaged over the successful realizations.
    pub mean: Vec<Vec<f64>>,
    pub n_ok: usize,
    /// Per-realization values `(index, values)` of the successful runs.
    pub realizations: Vec<(usize, Vec<Vec<f64>>)>,
    /// Realizations that failed, with their error.
    pub failures: Vec<(usize, Error)>,
}

struct Realization {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

/// Random stream for realization `index`.
pub fn realization_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn run_realization<F>(
    initial: &SpinorState,
    h: &dyn Operator,
    policy: &SwapPolicy,
    t_final: f64,
    stride: f64,
    config: &PropagatorConfig,
    index: usize,
    observe: &F,
) -> Result<Realization>
where
    F: Fn(f64, &SpinorState) -> Result<Vec<f64>> + Sync,
{
    let mut rng = realization_rng(policy.seed, index);
    let mut prop = Propagator::new(config.clone())?;
    let mut psi = initial.clone();
    let k_max = psi.n_modes();
    let eps = 1e-12 * t_final.max(1.0);
    let mut events: Vec<(f64, bool, bool)> = Vec::new();
    let n_out = (t_final / stride * (1.0 + 1e-12)).floor() as usize;
    for n in 0..=n_out {
        events.push((n as f64 * stride, true, false));
    }
    if k_max > 0 {
        let n_swap = (t_final / policy.interval * (1.0 + 1e-12)).floor() as usize;
        for n in 1..=n_swap {
            events.push((n as f64 * policy.interval, false, true));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    // merge coincident events
    let mut merged: Vec<(f64, bool, bool)> = Vec::new();
    for e in events {
        match merged.last_mut() {
            Some(last) if (e.0 - last.0).abs() <= eps => {
                last.1 |= e.1;
                last.2 |= e.2;
            }
            _ => merged.push(e),
        }
    }
    let mut out = Realization { times: Vec::new(), values: Vec::new() };
    let mut t = 0.0;
    let mut round_robin = 0usize;
    for (te, output, swap) in merged {
        if te > t {
            prop.evolve_real(h, &mut psi, te - t, te - t, |_, _| Ok(()))
                .map_err(|e| match e {
                    Error::StepFailure { t: dt, reason } => Error::StepFailure { t: t + dt, reason },
                    other => other,
                })?;
            t = te;
        }
        if swap {
            let k = match policy.target_rule {
                TargetRule::UniformRandom => rng.random_range(1..=k_max),
                TargetRule::RoundRobin => {
                    round_robin = round_robin % k_max + 1;
                    round_robin
                }
            };
            psi = swap_spin(&psi, k, policy.fresh_spin, policy.mode)?;
        }
        if output {
            out.times.push(te);
            out.values.push(observe(te, &psi)?);
        }
    }
    Ok(out)
}

/// Runs `policy.n_r` swap trajectories from `initial` and averages the
/// observables returned by `observe` on a `stride` grid. Each realization
/// propagates for `policy.interval`, swaps one spin, then observes.
/// The reduction runs in realization order, independent of scheduling.
pub fn ensemble_run<F>(
    initial: &SpinorState,
    h: &dyn Operator,
    policy: &SwapPolicy,
    t_final: f64,
    stride: f64,
    config: &PropagatorConfig,
    observe: F,
) -> Result<EnsembleResult>
where
    F: Fn(f64, &SpinorState) -> Result<Vec<f64>> + Sync,
{
    policy.validate()?;
    config.validate()?;
    if !(stride > 0.0) || !(t_final >= 0.0) {
        return Err(Error::Config(format!("invalid output grid: t_final={t_final}, stride={stride}")));
    }
    let runs: Vec<Result<Realization>> = (0..policy.n_r)
        .into_par_iter()
        .map(|idx| run_realization(initial, h, policy, t_final, stride, config, idx, &observe))
        .collect();
    let mut times = Vec::new();
    let mut sum: Vec<Vec<f64>> = Vec::new();
    let mut n_ok = 0usize;
    let mut failures = Vec::new();
    let mut realizations = Vec::new();
    for (idx, run) in runs.into_iter().enumerate() {
        match run {
            Ok(r) => {
                if n_ok == 0 {
                    times = r.times;
                    sum = r.values.clone();
                } else {
                    for (acc, v) in sum.iter_mut().zip(&r.values) {
                        for (a, x) in acc.iter_mut().zip(v) {
                            *a += x;
                        }
                    }
                }
                n_ok += 1;
                realizations.push((idx, r.values));
            }
            Err(e) => failures.push((idx, e)),
        }
    }
    if n_ok == 0 {
        let (_, e) = failures.swap_remove(0);
        return Err(e);
    }
    for row in &mut sum {
        for x in row.iter_mut() {
            *x /= n_ok as f64;
        }
    }
    Ok(EnsembleResult { times, mean: sum, n_ok, realizations, failures })
}
