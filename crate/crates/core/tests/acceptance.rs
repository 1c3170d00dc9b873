//! End-to-end acceptance checks, one test per criterion.
//!
//! Every test writes a `criterion N: PASS|FAIL ...` line to stderr (outside the
//! test harness capture) and then asserts, so a red criterion fails the run.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use common::recipe::{deficit, random_amps, recipe_left, recipe_right};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinbath::observables::coherence_variant;
use spinbath::oracle::unitarity_residual;
use spinbath::scenario::{build_case, sweep_stem, BathInitConfig};
use spinbath::swap::mode_density;
use spinbath::{
    coherence_l1, decompose, partial_trace_bath, run_scenario, sample_nv_geometry, swap_spin, ArrowheadModel,
    BathHamiltonian, BathSpec, CouplingSpec, DephasingCoupling, ExponentSign, FreshSpin, GridSystem, NvSpec,
    Operator, Propagator, PropagatorConfig, ScenarioConfig, SpectrumScheme, SwapMode, SystemModel,
    TotalHamiltonian, C64,
};

fn report(n: usize, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n:>2}: {verdict}  {detail}");
}

fn config(name: &str, sets: &[&str]) -> ScenarioConfig {
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    ScenarioConfig::from_toml_with_overrides(ScenarioConfig::builtin_source(name).unwrap(), &sets).unwrap()
}

/// Parsed trajectory CSV; empty cells become NaN.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Self {
        let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let mut lines = text.lines();
        let header = lines.next().unwrap().split(',').map(String::from).collect();
        let rows = lines
            .map(|l| l.split(',').map(|x| if x.is_empty() { f64::NAN } else { x.parse().unwrap() }).collect())
            .collect();
        Self { header, rows }
    }

    fn col(&self, name: &str) -> Vec<f64> {
        let i = self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i]).collect()
    }
}

fn run(cfg: &ScenarioConfig) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(cfg, dir.path()).unwrap();
    dir
}

fn slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let (mt, my) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    sxy / sxx
}

/// Maximum of `y` within consecutive windows of `per` samples.
fn window_maxima(y: &[f64], per: usize) -> Vec<f64> {
    y.chunks(per).filter(|c| c.len() == per).map(|c| c.iter().cloned().fold(f64::MIN, f64::max)).collect()
}

fn non_increasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + slack)
}

fn max_rel_drift(y: &[f64]) -> f64 {
    y.iter().map(|v| (v - y[0]).abs()).fold(0.0, f64::max) / y[0].abs()
}

// Energy relaxation of the infrared excitation, fitted before the first recurrence 2 pi / d_eps.
#[test]
fn criterion_01_dissipation_rate() {
    let target = 2.0 * PI * 1e-2;
    let mut windows = Vec::new();
    let mut rates = Vec::new();
    for k in [5usize, 7, 9] {
        let t_rec = 2.0 * PI * (k - 1) as f64 / 3.0;
        let cfg = config("fig3", &[&format!("bath.modes={k}"), &format!("t_final={t_rec}")]);
        let dir = run(&cfg);
        let tab = Table::read(&dir.path().join("fig3.csv"));
        let (t, es) = (tab.col("t"), tab.col("E_S"));
        let (tw, ly): (Vec<f64>, Vec<f64>) =
            t.iter().zip(&es).filter(|(t, _)| **t < t_rec).map(|(t, e)| (*t, (e - 0.5).ln())).unzip();
        rates.push(-slope(&tw, &ly));
        windows.push(t_rec);
    }
    let rate_ok = rates.iter().all(|r| (r - target).abs() <= 0.2 * target);
    let grows = windows.windows(2).all(|w| w[1] > w[0]);
    let ok = rate_ok && grows;
    report(
        1,
        ok,
        &format!(
            "rates K=5,7,9: {:.4} {:.4} {:.4} vs 2 pi eta omega = {target:.4} (20%); windows {:.1} {:.1} {:.1}",
            rates[0], rates[1], rates[2], windows[0], windows[1], windows[2]
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_02_pure_dephasing_conservation() {
    let cfg = ScenarioConfig::builtin("fig2").unwrap();
    let dir = run(&cfg);
    let tab = Table::read(&dir.path().join("fig2.csv"));
    let (es, eb, esb) = (tab.col("E_S"), tab.col("E_B"), tab.col("E_SB"));
    let drifts = [max_rel_drift(&es), max_rel_drift(&eb), max_rel_drift(&esb)];
    let abs_drift = [&es, &eb, &esb]
        .iter()
        .map(|y| y.iter().map(|v| (v - y[0]).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let l = tab.col("lagrangian");
    let l_amp = (l.iter().cloned().fold(f64::MIN, f64::max) - l.iter().cloned().fold(f64::MAX, f64::min)) / 2.0;
    let SystemModel::Grid(g) = build_case(&cfg, cfg.bath.eps0, false).unwrap().h.system().clone() else {
        unreachable!()
    };
    let mw = g.mass() * g.omega();
    let radius: Vec<f64> = tab
        .col("q_mean")
        .iter()
        .zip(tab.col("p_mean"))
        .map(|(q, p)| (mw * q * q + p * p / mw).sqrt())
        .collect();
    // samples per oscillation period
    let per = (2.0 * PI / g.omega() / cfg.stride).round() as usize;
    let coh = tab.col("coherence");
    let (coh_env, rad_env) = (window_maxima(&coh, per), window_maxima(&radius, per));
    let drift_ok = drifts.iter().all(|d| *d < 1e-5);
    let l_ok = l_amp >= 100.0 * abs_drift;
    let coh_ok = non_increasing(&coh_env, 1e-9) && coh_env.last() < coh_env.first();
    let rad_ok = non_increasing(&rad_env, 1e-9) && rad_env.last() < rad_env.first();
    let ok = drift_ok && l_ok && coh_ok && rad_ok;
    report(
        2,
        ok,
        &format!(
            "rel drift E_S {:.1e} E_B {:.1e} E_SB {:.1e} (< 1e-5); L amplitude {l_amp:.2e} vs 100 x {abs_drift:.1e}; \
             coherence envelope {:.3} -> {:.3} monotone {coh_ok}; radius envelope {:.3} -> {:.3} monotone {rad_ok}",
            drifts[0],
            drifts[1],
            drifts[2],
            coh_env[0],
            coh_env[coh_env.len() - 1],
            rad_env[0],
            rad_env[rad_env.len() - 1]
        ),
    );
    assert!(ok);
}

// Two oscillation periods; with no bath excitation the hops have nothing to move.
#[test]
fn criterion_03_dephasing_needs_activated_bath() {
    let mut cfg = ScenarioConfig::builtin("fig2").unwrap();
    cfg.bath.init = BathInitConfig::Vacuum;
    cfg.t_final = 2.0 * 2.0 * PI / 5e-4;
    let dir = run(&cfg);
    let coh = Table::read(&dir.path().join("fig2.csv")).col("coherence");
    let dev = coh.iter().map(|c| (c - coh[0]).abs()).fold(0.0, f64::max);
    let ok = dev < 1e-6;
    report(3, ok, &format!("vacuum bath: max |C_l1(t) - C_l1(0)| = {dev:.1e} (< 1e-6), C_l1(0) = {:.4}", coh[0]));
    assert!(ok);
}

#[test]
fn criterion_04_zeno_freezing() {
    let cfg = ScenarioConfig::builtin("fig4").unwrap();
    let dir = run(&cfg);
    let swap = Table::read(&dir.path().join("fig4.csv"));
    let free = Table::read(&dir.path().join("fig4_noswap.csv"));
    let (t, es, es_free) = (swap.col("t"), swap.col("E_S"), free.col("E_S"));
    let end = es_free.iter().position(|e| *e <= 0.5 * es_free[0]);
    let (ok, detail) = match end {
        None => (false, format!("swap-free run never decays by 50% (E_S {:.3} -> {:.3})", es_free[0], es_free[es_free.len() - 1])),
        Some(end) => {
            let drift = es[..=end].iter().map(|e| (e - es[0]).abs()).fold(0.0, f64::max) / es[0];
            let dq = swap.col("dq");
            let mean_dq = dq[end / 2..=end].iter().sum::<f64>() / (end - end / 2 + 1) as f64;
            let (excited, ground) = ((1.5f64).sqrt(), (0.5f64).sqrt());
            let dq_ok = (mean_dq - excited).abs() < 0.05 * excited;
            let e_ok = drift <= 0.05;
            (
                e_ok && dq_ok,
                format!(
                    "window t <= {:.2} (swap-free E_S {:.3} -> {:.3}); swapped E_S max drift {:.1}% (<= 5%); \
                     mean dq {mean_dq:.3} vs sqrt(3/2) = {excited:.3} (5%), ground {ground:.3}",
                    t[end],
                    es_free[0],
                    es_free[end],
                    100.0 * drift
                ),
            )
        }
    };
    report(4, ok, &detail);
    assert!(ok);
}

struct Fig5 {
    eps0: Vec<f64>,
    /// `(t, R)` per swept `eps0`, displaced infrared excitation.
    high: Vec<(Vec<f64>, Vec<f64>)>,
    /// Analytic curve per swept `eps0`.
    envelope: Vec<Vec<f64>>,
    /// `(t, R)` at `eps0 = 0` for the displaced ground state.
    low: (Vec<f64>, Vec<f64>),
}

fn fig5() -> &'static Fig5 {
    static RUNS: OnceLock<Fig5> = OnceLock::new();
    RUNS.get_or_init(|| {
        let eps0 = vec![0.0, 0.4, 0.8, 1.4];
        let mut cfg = ScenarioConfig::builtin("fig5").unwrap();
        cfg.sweep.as_mut().unwrap().eps0 = eps0.clone();
        let dir = run(&cfg);
        let env = Table::read(&dir.path().join("fig5_envelope.csv"));
        let (env_e, env_r) = (env.col("eps0"), env.col("r_envelope"));
        let mut high = Vec::new();
        let mut envelope = Vec::new();
        for e in &eps0 {
            let tab = Table::read(&dir.path().join(format!("{}.csv", sweep_stem("fig5", *e))));
            high.push((tab.col("t"), tab.col("ratio_R")));
            envelope.push(env_e.iter().zip(&env_r).filter(|(x, _)| *x == e).map(|(_, r)| *r).collect());
        }
        let mut low_cfg = config("fig5", &["initial.excitation.kind=\"displaced\"", "name=\"fig5b\""]);
        low_cfg.sweep.as_mut().unwrap().eps0 = vec![0.0];
        let dir = run(&low_cfg);
        let tab = Table::read(&dir.path().join(format!("{}.csv", sweep_stem("fig5b", 0.0))));
        Fig5 { eps0, high, envelope, low: (tab.col("t"), tab.col("ratio_R")) }
    })
}

#[test]
fn criterion_05_offresonance_decoupling() {
    let f = fig5();
    let eta = 1e-3;
    let (_, r_off) = &f.high[3];
    let (lo, hi) = r_off.iter().fold((f64::MAX, f64::MIN), |(a, b), r| (a.min(*r), b.max(*r)));
    let off_ok = lo >= 0.97 && hi <= 1.03;

    let below: Vec<usize> = (0..f.eps0.len()).filter(|&i| f.eps0[i] < 1.0).collect();
    let n_t = f.high[0].1.len();
    let spread = (0..n_t)
        .map(|j| {
            let v: Vec<f64> = below.iter().map(|&i| f.high[i].1[j]).collect();
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
        })
        .fold(0.0, f64::max);
    let spread_ok = spread < 0.05;

    let mut slopes = Vec::new();
    let mut below_one = true;
    for &i in &below {
        let (t, r) = &f.high[i];
        let (tw, rw): (Vec<f64>, Vec<f64>) = t.iter().zip(r).filter(|(t, _)| **t <= 10.0).map(|(a, b)| (*a, *b)).unzip();
        slopes.push(slope(&tw, &rw));
        below_one &= *r.last().unwrap() < 1.0;
    }
    let slope_ok = below_one && slopes.iter().all(|s| (s + eta / 2.0).abs() <= 0.3 * eta / 2.0);

    let (_, r_low) = &f.low;
    let low_min = r_low[1..].iter().cloned().fold(f64::MAX, f64::min);
    let low_ok = low_min > 1.0;
    let ok = off_ok && spread_ok && slope_ok && low_ok;
    report(
        5,
        ok,
        &format!(
            "eps0=1.4: R in [{lo:.4}, {hi:.4}]; spread over eps0<1: {spread:.4} (< 0.05); early slopes {} vs -eta/2 = {:.1e} (30%); \
             displaced ground: min R(t>0) = {low_min:.5}, R(end) = {:.4}",
            slopes.iter().map(|s| format!("{s:.2e}")).collect::<Vec<_>>().join(" "),
            -eta / 2.0,
            r_low[r_low.len() - 1]
        ),
    );
    assert!(ok);
}

fn sign_changes(a: &[f64], b: &[f64]) -> usize {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|x| *x != 0.0 && x.is_finite()).collect();
    d.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

#[test]
fn criterion_06_oracle_self_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut unit, mut abs2, mut secular) = (0.0f64, 0.0f64, 0.0f64);
    let mut interlaced = 0;
    for _ in 0..100 {
        let k = rng.random_range(1..=11);
        let mut omegas: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
        omegas.sort_by(f64::total_cmp);
        omegas.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let chis = omegas.iter().map(|_| rng.random_range(0.01..0.3)).collect();
        let d = decompose(&ArrowheadModel::new(rng.random_range(0.0..3.0), omegas, chis).unwrap());
        let t = rng.random_range(0.0..100.0);
        let u = d.evolution_matrix(t);
        unit = unit.max(unitarity_residual(&u));
        abs2 = abs2.max((d.u00_abs2(t) - u[(0, 0)].norm_sqr()).abs());
        secular = secular.max(d.secular_residual());
        interlaced += usize::from(d.interlacing_holds());
    }
    let algebra_ok = unit < 1e-10 && abs2 < 1e-12 && secular < 1e-8 && interlaced == 100;

    // a bounding curve is crossed less than once per period; a curve through the
    // oscillations is crossed about twice
    let f = fig5();
    let period = 2.0 * PI;
    let per_period: Vec<f64> = f
        .high
        .iter()
        .zip(&f.envelope)
        .map(|((t, r), env)| sign_changes(&r[1..], &env[1..]) as f64 * period / t[t.len() - 1])
        .collect();
    let max_dev = f
        .high
        .iter()
        .zip(&f.envelope)
        .map(|((_, r), env)| r.iter().zip(env).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let env_ok = per_period.iter().all(|c| *c < 1.0);
    let ok = algebra_ok && env_ok;
    report(
        6,
        ok,
        &format!(
            "100 models: unitarity {unit:.1e}, |U00|^2 {abs2:.1e}, secular {secular:.1e}, interlacing {interlaced}/100; \
             envelope crossings per period at eps0 {:?}: {} (< 1), max |R - envelope| {max_dev:.1e}",
            f.eps0,
            per_period.iter().map(|c| format!("{c:.2}")).collect::<Vec<_>>().join(" ")
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_07_swap_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = random_amps(&mut rng);
        let b = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let psi = spinbath::SpinorState::from_amplitudes(2, 1, lambda.to_vec()).unwrap();
        let right = swap_spin(&psi, 1, FreshSpin::from_branch(b), SwapMode::Full).unwrap();
        let left = swap_spin(&psi, 2, FreshSpin::from_branch(b), SwapMode::Full).unwrap();
        worst = worst.max(deficit(right.amplitudes(), &recipe_right(lambda, b)));
        worst = worst.max(deficit(left.amplitudes(), &recipe_left(lambda, b)));
    }
    let fresh = FreshSpin::new(c(0.8, 0.0), c(0.36, 0.48)).unwrap();
    let mut impurity: f64 = 0.0;
    for n_modes in 1..=7 {
        let psi = random_state(n_modes, 4, 70 + n_modes as u64);
        for k in 1..=n_modes {
            let rho = mode_density(&swap_spin(&psi, k, fresh, SwapMode::Full).unwrap(), k).unwrap();
            let purity = (rho[0][0] * rho[0][0] + 2.0 * rho[0][1] * rho[1][0] + rho[1][1] * rho[1][1]).re;
            impurity = impurity.max(1.0 - purity);
        }
    }
    let ok = worst < 1e-10 && impurity < 1e-10;
    report(7, ok, &format!("K=2 recipe, 1000 states x 2 spins: worst deficit {worst:.1e}; K<=7 max 1 - purity {impurity:.1e}"));
    assert!(ok);
}

fn apply_gap(h: &TotalHamiltonian, dense: &M, seed: u64) -> f64 {
    let psi = random_state(h.n_modes(), h.n_sys(), seed);
    let fast = h.apply(&psi).unwrap();
    rel_diff(fast.amplitudes(), (dense * to_vec(&psi)).as_slice())
}

#[test]
fn criterion_08_dense_oracle() {
    let mut worst: f64 = 0.0;
    for k in 1..=3 {
        for ng in [8, 16] {
            let g = GridSystem::with_default_bounds(1.0, 1.0, ng, 0.0).unwrap();
            let bath = BathSpec::sampled(0.5, 3.0, k, 0.05, SpectrumScheme::Uniform).unwrap();
            let dense = dense_dipolar(&g, &bath);
            let h = TotalHamiltonian::new(SystemModel::Grid(g), BathHamiltonian::Modes(bath.clone()), CouplingSpec::dipolar(&bath))
                .unwrap();
            worst = worst.max(apply_gap(&h, &dense, k as u64));
        }
        let spec = NvSpec::new(59.0, sample_nv_geometry(k, 1.0, 2.0, k as u64).unwrap()).unwrap();
        let h = TotalHamiltonian::new(SystemModel::NvFull(spec.clone()), BathHamiltonian::NvDipolar(spec.clone()), CouplingSpec::nv_dipole(&spec))
            .unwrap();
        worst = worst.max(apply_gap(&h, &dense_nv_full(&spec, false), 10 + k as u64));
        let h = TotalHamiltonian::new(
            SystemModel::NvReduced(spec.clone()),
            BathHamiltonian::NvSecular(spec.clone()),
            CouplingSpec::nv_reduced(&spec),
        )
        .unwrap();
        worst = worst.max(apply_gap(&h, &dense_nv_reduced(&spec, true), 20 + k as u64));
    }
    for k in 2..=3 {
        let g = GridSystem::with_default_bounds(1.0, 1.0, 16, 0.0).unwrap();
        let energies: Vec<f64> = (0..k).map(|i| 0.9 + 0.1 * i as f64).collect();
        let dense = dense_dephasing(&g, &energies, 0.5, 0.07);
        let dc = DephasingCoupling::new(0.5, 0.07, &energies, ExponentSign::Negative).unwrap();
        let h = TotalHamiltonian::new(
            SystemModel::Grid(g),
            BathHamiltonian::Modes(BathSpec::with_spacing_dos(energies, 0.0).unwrap()),
            CouplingSpec::Dephasing(dc),
        )
        .unwrap();
        worst = worst.max(apply_gap(&h, &dense, 30 + k as u64));
    }

    let g = GridSystem::with_default_bounds(1.0, 1.0, 16, 0.0).unwrap();
    let bath = BathSpec::sampled(0.0, 3.0, 3, 0.05, SpectrumScheme::Uniform).unwrap();
    let dense = dense_dipolar(&g, &bath);
    let h = TotalHamiltonian::new(SystemModel::Grid(g), BathHamiltonian::Modes(bath.clone()), CouplingSpec::dipolar(&bath)).unwrap();
    let psi0 = random_state(3, 16, 88);
    let t = 10.0;
    let exact = dense_propagate(&dense, &to_vec(&psi0), t);
    let mut psi = psi0;
    let mut prop = Propagator::new(PropagatorConfig { dt: 0.5, tol: 1e-10, ..Default::default() }).unwrap();
    prop.evolve_real(&h, &mut psi, t, t, |_, _| Ok(())).unwrap();
    let krylov = psi.overlap_deficit(&from_vec(&exact, 3, 16));
    let ok = worst < 1e-12 && krylov < 1e-8;
    report(8, ok, &format!("K<=3, N_sys<=16: max relative apply error {worst:.1e} (< 1e-12); Krylov vs expm at t=10/omega deficit {krylov:.1e} (< 1e-8)"));
    assert!(ok);
}

/// Max change of the diagonal of the reduced density and the first and last coherence.
fn nv_dephasing_run(model: &str, coupling: &str, interactions: &str, t_final: f64) -> (f64, f64, f64) {
    let mut cfg = config(
        "fig6",
        &[
            &format!("system.model=\"{model}\""),
            &format!("coupling.kind=\"{coupling}\""),
            &format!("bath.nv_interactions=\"{interactions}\""),
            "initial.nv_state=\"superposition\"",
        ],
    );
    cfg.swap = None;
    cfg.bath.init = BathInitConfig::RandomProduct { p_exc: 0.5 };
    let case = build_case(&cfg, 0.0, false).unwrap();
    let variant = coherence_variant(case.h.system());
    let rho0 = partial_trace_bath(&case.psi0);
    let n = rho0.dim();
    let mut psi = case.psi0.clone();
    let mut prop = Propagator::new(cfg.propagator.clone()).unwrap();
    let mut pop_dev: f64 = 0.0;
    let mut coh = Vec::new();
    prop.evolve_real(&case.h, &mut psi, t_final, 0.01, |_, s| {
        let rho = partial_trace_bath(s);
        for i in 0..n {
            pop_dev = pop_dev.max((rho.get(i, i).re - rho0.get(i, i).re).abs());
        }
        coh.push(coherence_l1(&rho, variant));
        Ok(())
    })
    .unwrap();
    let tail = &coh[coh.len() * 4 / 5..];
    (pop_dev, coh[0], tail.iter().sum::<f64>() / tail.len() as f64)
}

#[test]
fn criterion_09_nv_strong_field() {
    // pseudo-spin model with an activated (random product) bath
    let (pop, c0, c_tail) = nv_dephasing_run("reduced", "nv_reduced", "secular", 1.0);
    let static_ok = pop < 1e-6 && c_tail < 0.5 * c0;
    let (pop_full, _, _) = nv_dephasing_run("full", "nv_dipole", "full", 0.1);

    // swap scenario on a 0.1 us window
    let cfg = config("fig6", &["t_final=0.1"]);
    let dir = run(&cfg);
    let tab = Table::read(&dir.path().join("fig6.csv"));
    let spec = build_case(&cfg, 0.0, false).unwrap().h.system().nv().unwrap().clone();
    let e_minus = spec.zero_field - spec.nv_zeeman();
    let es = tab.col("E_S");
    let e_dev = es.iter().map(|e| (e - e_minus).abs()).fold(0.0, f64::max) / e_minus;
    let moved = |name: &str| {
        let v = tab.col(name);
        v.iter().map(|x| (x - v[0]).abs()).fold(0.0, f64::max)
    };
    let (dsx, dsz) = (moved("nv_sx_std"), moved("nv_sz_std"));
    // evolving: beyond 100 x the propagator tolerance
    let floor = 100.0 * cfg.propagator.tol;
    let swap_ok = e_dev <= 0.05 && dsx > floor && dsz > floor;
    let ok = static_ok && swap_ok;
    report(
        9,
        ok,
        &format!(
            "reduced model over 1 us: population change {pop:.1e} (< 1e-6), C_l1 {c0:.3} -> {c_tail:.3}; \
             full model population change over 0.1 us {pop_full:.1e} (info); swaps over 0.1 us: max |E_S - E(-1)|/E(-1) \
             {e_dev:.1e} (<= 5%), dSx moved {dsx:.1e}, dSz moved {dsz:.1e} (> {floor:.0e})"
        ),
    );
    assert!(ok);
}

fn outputs(cfg: &ScenarioConfig, threads: usize) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let out = pool.install(|| run_scenario(cfg, dir.path())).unwrap();
    let mut files: Vec<_> = out
        .files
        .iter()
        .flat_map(|p| {
            let meta = p.with_extension("meta.toml");
            [p.clone(), meta]
        })
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_determinism() {
    let mut fig5 = config("fig5", &["bath.modes=5", "t_final=5.0"]);
    fig5.sweep.as_mut().unwrap().eps0 = vec![0.0, 1.4];
    let cases = [
        config("fig2", &["bath.modes=5", "t_final=12566.4"]),
        config("fig3", &["bath.modes=5", "t_final=8.0"]),
        config("fig4", &["bath.modes=5", "t_final=4.0", "swap.n_r=4"]),
        fig5,
        config("fig6", &["t_final=0.004", "swap.n_r=4"]),
    ];
    let mut mismatched = Vec::new();
    let mut n_files = 0;
    for cfg in &cases {
        let a = outputs(cfg, 1);
        let b = outputs(cfg, 3);
        n_files += a.len();
        if a != b {
            mismatched.push(cfg.name.clone());
        }
    }
    let ok = mismatched.is_empty();
    report(10, ok, &format!("{n_files} files from fig2..fig6 with 1 vs 3 threads; mismatched: {mismatched:?}"));
    assert!(ok);
}
