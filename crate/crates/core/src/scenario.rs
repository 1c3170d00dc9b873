//! Configuration-driven scenario runner.
//!
//! A scenario is one TOML document (see `scenarios/` for the shipped
//! defaults). [`run_scenario`] builds the model, prepares the initial state,
//! propagates it (optionally as a swap ensemble or an `eps0` sweep) and writes
//! CSV trajectories, each with a `.meta.toml` sidecar holding the resolved
//! configuration.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{BathSpec, SpectrumScheme};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    commutator_residual, BathHamiltonian, CouplingSpec, DephasingCoupling, ExponentSign, Term, TotalHamiltonian,
};
use crate::observables::{csv_header, LadderNorm, ObservableRecord, Recorder};
use crate::oracle::{decompose, ArrowheadModel};
use crate::propagate::{energy_spread, Propagator, PropagatorConfig};
use crate::state::SpinorState;
use crate::swap::{ensemble_run, FreshSpin, SwapMode, SwapPolicy, TargetRule};
use crate::system::{
    default_half_width, nv_level_vector, prepare_state, sample_nv_geometry, BathInit, Excitation, GridSystem,
    NvSpec, Reference, SystemModel,
};
use crate::C64;

/// Largest bath handled without `full_duration` (memory grows as `2^K`).
pub const MAX_MODES: usize = 20;
/// Desk-scale NV window in microseconds.
pub const NV_DESK_WINDOW_US: f64 = 10.0;
/// Factor by which the Zeeman energy must exceed every dipolar coupling for
/// the pseudo-spin model.
pub const STRONG_FIELD_FACTOR: f64 = 10.0;

const BUILTIN: [(&str, &str, &str); 5] = [
    ("fig2", "pure_dephasing", include_str!("../scenarios/fig2.toml")),
    ("fig3", "dissipation", include_str!("../scenarios/fig3.toml")),
    ("fig4", "swap_zeno", include_str!("../scenarios/fig4.toml")),
    ("fig5", "offresonance_ratio", include_str!("../scenarios/fig5.toml")),
    ("fig6", "nv_center", include_str!("../scenarios/fig6.toml")),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    PureDephasing,
    Dissipation,
    SwapZeno,
    OffresonanceRatio,
    NvCenter,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub name: String,
    pub seed: u64,
    pub t_final: f64,
    pub stride: f64,
    /// Lifts the desk-scale caps on `t_final` (NV) and `K`.
    #[serde(default)]
    pub full_duration: bool,
    pub system: SystemConfig,
    pub bath: BathConfig,
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub propagator: PropagatorConfig,
    #[serde(default)]
    pub imaginary: ImaginaryConfig,
    #[serde(default)]
    pub ratio: RatioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap: Option<SwapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SystemConfig {
    Grid {
        mass: f64,
        omega: f64,
        ng: usize,
        /// Half width of the grid; derived from the ground-state width and
        /// the displacement when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        half_width: Option<f64>,
    },
    Nv {
        model: NvModel,
        field_gauss: f64,
        geometry: GeometryConfig,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NvModel {
    Full,
    Reduced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Shell the bath spins are drawn from (nm), seeded by the scenario seed.
    pub r_min: f64,
    pub r_max: f64,
    /// Explicit positions (nm); overrides the random draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 3]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub modes: usize,
    #[serde(default)]
    pub eps0: f64,
    #[serde(default)]
    pub eps_c: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub init: BathInitConfig,
    #[serde(default)]
    pub nv_interactions: NvInteractions,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum BathInitConfig {
    #[default]
    Vacuum,
    RandomProduct { p_exc: f64 },
    RandomConfiguration { p_exc: f64 },
}

impl BathInitConfig {
    fn resolve(&self, seed: u64) -> BathInit {
        match *self {
            BathInitConfig::Vacuum => BathInit::Vacuum,
            BathInitConfig::RandomProduct { p_exc } => BathInit::RandomProduct { p_exc, seed },
            BathInitConfig::RandomConfiguration { p_exc } => BathInit::RandomConfiguration { p_exc, seed },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NvInteractions {
    /// Full dipolar flip-flop between nitrogen spins.
    #[default]
    Full,
    /// Only the `s^z s^z` part.
    Secular,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum CouplingConfig {
    None,
    Dipolar,
    Dephasing {
        c: f64,
        sigma_eps: f64,
        #[serde(default)]
        sign: ExponentSign,
    },
    NvDipole,
    NvReduced,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Bare system ground state (or NV level) times the bath state.
    #[default]
    BareGround,
    /// Ground state of the total Hamiltonian by imaginary-time relaxation.
    TotalGround,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NvInitial {
    #[default]
    MinusOne,
    Zero,
    /// `(|0> + |-1>)/sqrt 2`.
    Superposition,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub reference: ReferenceKind,
    #[serde(default)]
    pub excitation: Excitation,
    #[serde(default)]
    pub nv_state: NvInitial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImaginaryConfig {
    pub dt: f64,
    pub max_iterations: usize,
}

impl Default for ImaginaryConfig {
    fn default() -> Self {
        Self { dt: 1.0, max_iterations: 5000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioConfig {
    pub norm: LadderNorm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreshConfig {
    /// `|0>`, spin down.
    #[default]
    Ground,
    Excited,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Fixed swap interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<f64>,
    /// Swap interval as a fraction of the initial-state Zeno time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeno_fraction: Option<f64>,
    #[serde(default)]
    pub target_rule: TargetRule,
    #[serde(default)]
    pub fresh: FreshConfig,
    pub n_r: usize,
    #[serde(default)]
    pub mode: SwapMode,
    /// Also write the swap-free trajectory as `<name>_noswap.csv`.
    #[serde(default)]
    pub compare_unswapped: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps0: Vec<f64>,
}

impl ScenarioConfig {
    pub fn builtin_names() -> Vec<&'static str> {
        BUILTIN.iter().map(|b| b.0).collect()
    }

    /// Shipped TOML for `fig2`..`fig6` or the matching scenario kind name.
    pub fn builtin_source(name: &str) -> Option<&'static str> {
        BUILTIN.iter().find(|b| b.0 == name || b.1 == name).map(|b| b.2)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let src = Self::builtin_source(name)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{name}' (expected fig2..fig6)")))?;
        Self::from_toml(src)
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `src`, applies `key=value` overrides (dotted keys) and deserializes.
    pub fn from_toml_with_overrides(src: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn grid_displacement(&self) -> f64 {
        match self.initial.excitation {
            Excitation::Displaced { d } | Excitation::DisplacedInfrared { d } => d.abs(),
            _ => 0.0,
        }
    }
}

/// Sets one dotted key in a TOML table. The value is parsed as a TOML value
/// and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn splitmix(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds derived from the scenario seed for each random ingredient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub geometry: u64,
    pub bath: u64,
    pub swap: u64,
}

impl DerivedSeeds {
    pub fn from_seed(seed: u64) -> Self {
        Self { geometry: splitmix(seed, 1), bath: splitmix(seed, 2), swap: splitmix(seed, 3) }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn into_result(self) -> Result<Vec<String>> {
        if self.errors.is_empty() {
            Ok(self.warnings)
        } else {
            Err(Error::Config(self.errors.join("; ")))
        }
    }
}

/// Static checks plus the cheap physics checks (strong field, grid coverage,
/// swap interval against the Zeno time of the bare initial state).
pub fn validate_config(cfg: &ScenarioConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    let err = |r: &mut ValidationReport, m: String| r.errors.push(m);
    if !(cfg.t_final > 0.0 && cfg.t_final.is_finite()) {
        err(&mut r, format!("t_final must be positive, got {}", cfg.t_final));
    }
    if !(cfg.stride > 0.0) || cfg.stride > cfg.t_final {
        err(&mut r, format!("stride must lie in (0, t_final], got {}", cfg.stride));
    }
    if cfg.name.is_empty() || cfg.name.contains(['/', '\\']) {
        err(&mut r, format!("name '{}' is not a plain file stem", cfg.name));
    }
    if let Err(e) = cfg.propagator.validate() {
        err(&mut r, e.to_string());
    }
    if !(cfg.imaginary.dt > 0.0) || cfg.imaginary.max_iterations == 0 {
        err(&mut r, "imaginary-time dt and max_iterations must be positive".into());
    }
    let k = cfg.bath.modes;
    if k == 0 {
        err(&mut r, "bath needs at least one mode".into());
    }
    if k > MAX_MODES && !cfg.full_duration {
        err(&mut r, format!("K = {k} exceeds the desk-scale cap of {MAX_MODES}; set full_duration = true"));
    }
    match &cfg.system {
        SystemConfig::Grid { mass, omega, ng, half_width } => {
            if !(*mass > 0.0 && *omega > 0.0) {
                err(&mut r, format!("mass and omega must be positive, got m={mass}, omega={omega}"));
            }
            if !ng.is_power_of_two() || *ng < 8 {
                err(&mut r, format!("ng must be a power of two >= 8, got {ng}"));
            }
            let eps_c_min = if cfg.sweep.is_some() { f64::NEG_INFINITY } else { cfg.bath.eps0 };
            if !(cfg.bath.eps_c > eps_c_min) {
                err(&mut r, format!("eps_c ({}) must exceed eps0 ({})", cfg.bath.eps_c, cfg.bath.eps0));
            }
            if cfg.bath.eta < 0.0 {
                err(&mut r, format!("eta must be non-negative, got {}", cfg.bath.eta));
            }
            if *mass > 0.0 && *omega > 0.0 && ng.is_power_of_two() {
                let need = default_half_width(*mass, *omega, cfg.grid_displacement());
                let hw = half_width.unwrap_or(need);
                if hw < need {
                    r.warnings.push(format!(
                        "grid half-width {hw} is below {need:.4} (6 excited-state widths plus displacement); the wave packet may wrap"
                    ));
                }
                // momentum coverage: the grid's Nyquist momentum against the excited-state width
                let p_max = std::f64::consts::PI * (*ng as f64) / (2.0 * hw);
                let p_need = 6.0 * (1.5 * mass * omega).sqrt() + mass * omega * cfg.grid_displacement();
                if p_max < p_need {
                    r.warnings.push(format!(
                        "momentum grid reaches {p_max:.4} but the state needs about {p_need:.4}; increase ng"
                    ));
                }
            }
            if matches!(cfg.coupling, CouplingConfig::NvDipole | CouplingConfig::NvReduced) {
                err(&mut r, "NV couplings need an NV system".into());
            }
        }
        SystemConfig::Nv { model, field_gauss, geometry } => {
            if !(geometry.r_min > 0.0 && geometry.r_max > geometry.r_min) && geometry.positions.is_none() {
                err(&mut r, format!("geometry shell [{}, {}] nm is empty", geometry.r_min, geometry.r_max));
            }
            if let Some(p) = &geometry.positions {
                if p.len() != k {
                    err(&mut r, format!("{} positions given for {k} modes", p.len()));
                }
            }
            match (model, cfg.coupling) {
                (NvModel::Full, CouplingConfig::NvDipole | CouplingConfig::None) => {}
                (NvModel::Reduced, CouplingConfig::NvReduced | CouplingConfig::None) => {}
                _ => err(&mut r, format!("coupling {:?} does not match the {model:?} NV model", cfg.coupling)),
            }
            if cfg.initial.excitation != Excitation::None {
                err(&mut r, "grid excitations do not apply to the NV center".into());
            }
            if cfg.t_final > NV_DESK_WINDOW_US && !cfg.full_duration {
                err(&mut r, format!(
                    "NV t_final {} us exceeds the desk-scale window of {NV_DESK_WINDOW_US} us; set full_duration = true",
                    cfg.t_final
                ));
            }
            if r.errors.is_empty() {
                match nv_spec(cfg) {
                    Ok(spec) => {
                        let zeeman = spec.bath_zeeman().min(spec.nv_zeeman());
                        let gmax = spec.max_dipolar();
                        if *model == NvModel::Reduced && zeeman < STRONG_FIELD_FACTOR * gmax {
                            r.warnings.push(format!(
                                "strong-field condition violated: g muB B = {zeeman:.4} rad/us < {STRONG_FIELD_FACTOR} x max coupling {gmax:.4} rad/us (B = {field_gauss} G)"
                            ));
                        }
                    }
                    Err(e) => err(&mut r, e.to_string()),
                }
            }
        }
    }
    match cfg.coupling {
        CouplingConfig::Dephasing { sigma_eps, .. } => {
            if k < 2 {
                err(&mut r, format!("dephasing coupling needs at least two modes, got {k}"));
            }
            if !(sigma_eps > 0.0) {
                err(&mut r, format!("sigma_eps must be positive, got {sigma_eps}"));
            }
        }
        CouplingConfig::Dipolar if cfg.bath.eta == 0.0 => {
            r.warnings.push("dipolar coupling with eta = 0 is identically zero".into());
        }
        _ => {}
    }
    if let Some(sw) = &cfg.swap {
        if sw.enabled {
            match (sw.interval, sw.zeno_fraction) {
                (Some(i), None) if i > 0.0 => {}
                (None, Some(f)) if f > 0.0 && f <= 1.0 => {}
                _ => err(&mut r, "swap needs exactly one of interval > 0 or zeno_fraction in (0, 1]".into()),
            }
            if sw.n_r == 0 {
                err(&mut r, "swap.n_r must be at least 1".into());
            }
            if let (Some(i), true) = (sw.interval, r.errors.is_empty()) {
                // bare initial state: cheap and close to the relaxed one at weak coupling
                if let Ok(t_z) = bare_zeno_time(cfg) {
                    if i > t_z {
                        r.warnings.push(format!("Zeno condition violated: swap interval {i} exceeds t_Z = {t_z:.4e}"));
                    }
                }
            }
        }
    }
    if let Some(sw) = &cfg.sweep {
        if sw.eps0.is_empty() {
            err(&mut r, "sweep.eps0 is empty".into());
        }
        for e in &sw.eps0 {
            if !(*e < cfg.bath.eps_c) {
                err(&mut r, format!("sweep value eps0 = {e} must lie below eps_c = {}", cfg.bath.eps_c));
            }
        }
        if cfg.swap.as_ref().is_some_and(|s| s.enabled) {
            err(&mut r, "an eps0 sweep cannot be combined with spin swaps".into());
        }
        if cfg.system_grid_params().is_none() {
            err(&mut r, "an eps0 sweep needs the grid oscillator".into());
        }
    }
    r
}

fn bare_zeno_time(cfg: &ScenarioConfig) -> Result<f64> {
    let case = build_case(cfg, cfg.bath.eps0, false)?;
    let dh = energy_spread(&case.h, &case.psi0)?;
    Ok(if dh == 0.0 { f64::INFINITY } else { 1.0 / dh })
}

impl ScenarioConfig {
    fn system_grid_params(&self) -> Option<(f64, f64, usize, Option<f64>)> {
        match self.system {
            SystemConfig::Grid { mass, omega, ng, half_width } => Some((mass, omega, ng, half_width)),
            _ => None,
        }
    }
}

fn nv_spec(cfg: &ScenarioConfig) -> Result<NvSpec> {
    let SystemConfig::Nv { field_gauss, geometry, .. } = &cfg.system else {
        return Err(Error::Config("not an NV scenario".into()));
    };
    let positions = match &geometry.positions {
        Some(p) => p.clone(),
        None => sample_nv_geometry(
            cfg.bath.modes,
            geometry.r_min,
            geometry.r_max,
            DerivedSeeds::from_seed(cfg.seed).geometry,
        )?,
    };
    NvSpec::new(*field_gauss, positions)
}

/// Model, Hamiltonian and initial state of one run.
pub struct Case {
    pub h: TotalHamiltonian,
    pub psi0: SpinorState,
    pub ground_energy: Option<f64>,
}

/// Builds the Hamiltonian for bath lower edge `eps0` and prepares the initial
/// state. `relax` enables the imaginary-time ground state when requested by
/// the config.
pub fn build_case(cfg: &ScenarioConfig, eps0: f64, relax: bool) -> Result<Case> {
    let seeds = DerivedSeeds::from_seed(cfg.seed);
    let k = cfg.bath.modes;
    let (model, bath, coupling) = match &cfg.system {
        SystemConfig::Grid { mass, omega, ng, half_width } => {
            let hw = half_width.unwrap_or_else(|| default_half_width(*mass, *omega, cfg.grid_displacement()));
            let grid = GridSystem::new(*mass, *omega, *ng, -hw, hw)?;
            let spec = BathSpec::sampled(eps0, cfg.bath.eps_c, k, cfg.bath.eta, SpectrumScheme::Uniform)?;
            let coupling = match cfg.coupling {
                CouplingConfig::None => CouplingSpec::None,
                CouplingConfig::Dipolar => CouplingSpec::dipolar(&spec),
                CouplingConfig::Dephasing { c, sigma_eps, sign } => {
                    CouplingSpec::Dephasing(DephasingCoupling::new(c, sigma_eps, spec.energies(), sign)?)
                }
                CouplingConfig::NvDipole | CouplingConfig::NvReduced => {
                    return Err(Error::Config("NV couplings need an NV system".into()))
                }
            };
            (SystemModel::Grid(grid), BathHamiltonian::Modes(spec), coupling)
        }
        SystemConfig::Nv { model, .. } => {
            let spec = nv_spec(cfg)?;
            let coupling = match (model, cfg.coupling) {
                (_, CouplingConfig::None) => CouplingSpec::None,
                (NvModel::Full, CouplingConfig::NvDipole) => CouplingSpec::nv_dipole(&spec),
                (NvModel::Reduced, CouplingConfig::NvReduced) => CouplingSpec::nv_reduced(&spec),
                _ => return Err(Error::Config(format!("coupling {:?} does not match the {model:?} NV model", cfg.coupling))),
            };
            let bath = match cfg.bath.nv_interactions {
                NvInteractions::Full => BathHamiltonian::NvDipolar(spec.clone()),
                NvInteractions::Secular => BathHamiltonian::NvSecular(spec.clone()),
            };
            let m = match model {
                NvModel::Full => SystemModel::NvFull(spec),
                NvModel::Reduced => SystemModel::NvReduced(spec),
            };
            (m, bath, coupling)
        }
    };
    let h = TotalHamiltonian::new(model, bath, coupling)?;
    let bath_init = cfg.bath.init.resolve(seeds.bath);
    let sys_vec: Vec<C64> = match h.system() {
        SystemModel::Grid(g) => g.gaussian(0.0),
        m => match cfg.initial.nv_state {
            NvInitial::MinusOne => nv_level_vector(m, -1)?,
            NvInitial::Zero => nv_level_vector(m, 0)?,
            NvInitial::Superposition => {
                let a = nv_level_vector(m, 0)?;
                let b = nv_level_vector(m, -1)?;
                a.iter().zip(&b).map(|(x, y)| (x + y) * std::f64::consts::FRAC_1_SQRT_2).collect()
            }
        },
    };
    let (psi0, ground_energy) = if relax && cfg.initial.reference == ReferenceKind::TotalGround {
        let seed_state = prepare_state(h.system(), k, &bath_init, Excitation::None, Reference::Bare(&sys_vec))?;
        let mut prop = Propagator::new(PropagatorConfig { dt: cfg.imaginary.dt, ..cfg.propagator.clone() })?;
        let g = prop.ground_state_imaginary_time(&h, &seed_state, cfg.imaginary.max_iterations)?;
        let psi = prepare_state(h.system(), k, &bath_init, cfg.initial.excitation, Reference::Total(&g.state))?;
        (psi, Some(g.energy))
    } else {
        let psi = prepare_state(h.system(), k, &bath_init, cfg.initial.excitation, Reference::Bare(&sys_vec))?;
        (psi, None)
    };
    Ok(Case { h, psi0, ground_energy })
}

/// Derived quantities recorded in every sidecar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub seeds: Option<DerivedSeeds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeno_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swap_interval: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realizations_ok: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failed_realizations: Vec<usize>,
    /// Relative `||[H, H_X] psi0||` for X = S, B, SB.
    pub commutator_system: f64,
    pub commutator_bath: f64,
    pub commutator_coupling: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

/// Contents of `<file>.meta.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub file: String,
    pub version: String,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realization: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    pub resolved: Resolved,
    pub config: ScenarioConfig,
}

impl Sidecar {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutput {
    /// CSV files written, in order.
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

struct Trajectory {
    records: Vec<ObservableRecord>,
    error: Option<Error>,
}

fn is_nv(cfg: &ScenarioConfig) -> bool {
    matches!(cfg.system, SystemConfig::Nv { .. })
}

fn commutators(h: &TotalHamiltonian, psi: &SpinorState) -> Result<(f64, f64, f64)> {
    let probes = [psi.clone()];
    Ok((
        commutator_residual(h, &h.term(Term::System), &probes)?,
        commutator_residual(h, &h.term(Term::Bath), &probes)?,
        commutator_residual(h, &h.term(Term::Coupling), &probes)?,
    ))
}

fn recorder<'a>(cfg: &ScenarioConfig, case: &'a Case) -> Result<Recorder<'a>> {
    let rec = Recorder::new(&case.h).with_initial(&case.psi0);
    if case.h.system().grid().is_none() {
        return Ok(rec);
    }
    match Recorder::new(&case.h).with_initial(&case.psi0).with_ratio_from(&case.psi0, cfg.ratio.norm) {
        Ok(r) => Ok(r),
        Err(Error::RatioUndefined(_)) => Ok(rec),
        Err(e) => Err(e),
    }
}

fn single_trajectory(cfg: &ScenarioConfig, case: &Case) -> Result<Trajectory> {
    let rec = recorder(cfg, case)?;
    let mut prop = Propagator::new(cfg.propagator.clone())?;
    let mut psi = case.psi0.clone();
    let mut records = Vec::new();
    let res = prop.evolve_real(&case.h, &mut psi, cfg.t_final, cfg.stride, |t, s| {
        records.push(rec.record(t, s)?);
        Ok(())
    });
    Ok(Trajectory { records, error: res.err() })
}

fn write_csv(path: &Path, records: &[ObservableRecord], nv: bool) -> Result<()> {
    let mut text = csv_header(nv);
    text.push('\n');
    for r in records {
        text.push_str(&r.csv_row(nv));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

struct Writer<'a> {
    cfg: &'a ScenarioConfig,
    dir: &'a Path,
    resolved: Resolved,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn emit(
        &mut self,
        stem: &str,
        records: &[ObservableRecord],
        error: Option<&Error>,
        realization: Option<usize>,
        eps0: Option<f64>,
    ) -> Result<()> {
        let csv = self.dir.join(format!("{stem}.csv"));
        write_csv(&csv, records, is_nv(self.cfg))?;
        self.sidecar(stem, &format!("{stem}.csv"), error, realization, eps0)?;
        self.files.push(csv);
        Ok(())
    }

    fn sidecar(&self, stem: &str, file: &str, error: Option<&Error>, realization: Option<usize>, eps0: Option<f64>) -> Result<()> {
        let meta = Sidecar {
            file: file.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            status: if error.is_some() { "failed".into() } else { "ok".into() },
            error: error.map(|e| e.to_string()),
            realization,
            eps0,
            resolved: self.resolved.clone(),
            config: self.cfg.clone(),
        };
        let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(self.dir.join(format!("{stem}.meta.toml")), text)?;
        Ok(())
    }
}

/// Validates, runs and writes every output of `cfg` under `out_dir`.
///
/// Files: `<name>.csv` (the single or ensemble-averaged trajectory),
/// `<name>_r<idx>.csv` per swap realization, `<name>_noswap.csv` when
/// requested, and for sweeps `<name>_eps0_<value>.csv` per spectrum plus
/// `<name>_envelope.csv`. On a propagation failure the records computed so
/// far are written, the sidecar is marked `failed` and the error returned.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioOutput> {
    let warnings = validate_config(cfg).into_result()?;
    fs::create_dir_all(out_dir)?;
    let mut w = Writer {
        cfg,
        dir: out_dir,
        resolved: Resolved { seeds: Some(DerivedSeeds::from_seed(cfg.seed)), warnings: warnings.clone(), ..Default::default() },
        files: Vec::new(),
    };
    if let Some(sweep) = &cfg.sweep {
        run_sweep(cfg, &sweep.eps0, &mut w)?;
        return Ok(ScenarioOutput { files: w.files, warnings });
    }
    let case = build_case(cfg, cfg.bath.eps0, true)?;
    w.resolved.ground_energy = case.ground_energy;
    let (cs, cb, csb) = commutators(&case.h, &case.psi0)?;
    w.resolved.commutator_system = cs;
    w.resolved.commutator_bath = cb;
    w.resolved.commutator_coupling = csb;
    let dh = energy_spread(&case.h, &case.psi0)?;
    w.resolved.zeno_time = Some(if dh == 0.0 { f64::INFINITY } else { 1.0 / dh });

    match cfg.swap.as_ref().filter(|s| s.enabled) {
        None => {
            let tr = single_trajectory(cfg, &case)?;
            w.emit(&cfg.name, &tr.records, tr.error.as_ref(), None, None)?;
            if let Some(e) = tr.error {
                return Err(e);
            }
        }
        Some(sw) => {
            let interval = match (sw.interval, sw.zeno_fraction) {
                (Some(i), _) => i,
                (None, Some(f)) => f * w.resolved.zeno_time.unwrap(),
                _ => unreachable!("validated"),
            };
            if !interval.is_finite() {
                return Err(Error::Config("initial state is an eigenstate: Zeno time is infinite".into()));
            }
            w.resolved.swap_interval = Some(interval);
            let policy = SwapPolicy {
                interval,
                target_rule: sw.target_rule,
                fresh_spin: match sw.fresh {
                    FreshConfig::Ground => FreshSpin::ground(),
                    FreshConfig::Excited => FreshSpin::excited(),
                },
                n_r: sw.n_r,
                seed: DerivedSeeds::from_seed(cfg.seed).swap,
                mode: sw.mode,
            };
            let rec = recorder(cfg, &case)?;
            let nv = is_nv(cfg);
            let ens = ensemble_run(&case.psi0, &case.h, &policy, cfg.t_final, cfg.stride, &cfg.propagator, |t, s| {
                Ok(rec.record(t, s)?.to_values(nv))
            })?;
            w.resolved.realizations_ok = Some(ens.n_ok);
            w.resolved.failed_realizations = ens.failures.iter().map(|f| f.0).collect();
            let to_records = |rows: &[Vec<f64>]| -> Vec<ObservableRecord> {
                ens.times
                    .iter()
                    .zip(rows)
                    .map(|(t, v)| {
                        let mut full = vec![*t];
                        full.extend_from_slice(&v[1..]);
                        ObservableRecord::from_values(&full)
                    })
                    .collect()
            };
            let mean = to_records(&ens.mean);
            let first_failure = ens.failures.first().map(|f| f.1.clone());
            w.emit(&cfg.name, &mean, first_failure.as_ref(), None, None)?;
            for (idx, rows) in &ens.realizations {
                w.emit(&format!("{}_r{idx:03}", cfg.name), &to_records(rows), None, Some(*idx), None)?;
            }
            if sw.compare_unswapped {
                let tr = single_trajectory(cfg, &case)?;
                w.emit(&format!("{}_noswap", cfg.name), &tr.records, tr.error.as_ref(), None, None)?;
                if let Some(e) = tr.error {
                    return Err(e);
                }
            }
            if let Some(e) = first_failure {
                return Err(e);
            }
        }
    }
    Ok(ScenarioOutput { files: w.files, warnings })
}

/// File stem for one sweep member.
pub fn sweep_stem(name: &str, eps0: f64) -> String {
    format!("{name}_eps0_{eps0:.4}")
}

fn run_sweep(cfg: &ScenarioConfig, values: &[f64], w: &mut Writer<'_>) -> Result<()> {
    let runs: Vec<Result<(Case, Trajectory)>> = values
        .par_iter()
        .map(|&e| {
            let case = build_case(cfg, e, true)?;
            let tr = single_trajectory(cfg, &case)?;
            Ok((case, tr))
        })
        .collect();
    let (mass, omega, _, _) = cfg.system_grid_params().expect("validated grid");
    let mut envelope = String::from("eps0,t,u00_abs,r_envelope\n");
    let mut first_err = None;
    for (&e, run) in values.iter().zip(runs) {
        let (case, tr) = run?;
        let stem = sweep_stem(&cfg.name, e);
        w.resolved.ground_energy = case.ground_energy;
        w.emit(&stem, &tr.records, tr.error.as_ref(), None, Some(e))?;
        let BathHamiltonian::Modes(spec) = case.h.bath() else { unreachable!("grid sweep") };
        let dec = decompose(&ArrowheadModel::from_bath(omega, mass, spec.energies(), spec.couplings())?);
        let hs0 = tr.records.first().and_then(|r| r.e_s).unwrap_or(f64::NAN);
        for r in &tr.records {
            let u = dec.u00_abs2(r.t).sqrt();
            let env = dec.r_envelope(r.t, hs0, omega).map(|x| format!("{x:.16e}")).unwrap_or_default();
            envelope.push_str(&format!("{e:.16e},{:.16e},{u:.16e},{env}\n", r.t));
        }
        if first_err.is_none() {
            first_err = tr.error;
        }
    }
    let path = w.dir.join(format!("{}_envelope.csv", cfg.name));
    fs::write(&path, envelope)?;
    w.sidecar(&format!("{}_envelope", cfg.name), &format!("{}_envelope.csv", cfg.name), first_err.as_ref(), None, None)?;
    w.files.push(path);
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Whether an error is a configuration problem (as opposed to a numerical failure).
pub fn is_config_error(e: &Error) -> bool {
    !matches!(
        e,
        Error::StepFailure { .. } | Error::NoConvergence { .. } | Error::ZeroAmplitudes | Error::RatioUndefined(_)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_validate() {
        for name in ScenarioConfig::builtin_names() {
            let cfg = ScenarioConfig::builtin(name).unwrap();
            let rep = validate_config(&cfg);
            assert!(rep.is_ok(), "{name}: {:?}", rep.errors);
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        for name in ScenarioConfig::builtin_names() {
            let cfg = ScenarioConfig::builtin(name).unwrap();
            let back = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn overrides_set_nested_keys() {
        let src = ScenarioConfig::builtin_source("fig3").unwrap();
        let cfg = ScenarioConfig::from_toml_with_overrides(src, &["bath.modes=5".into(), "name=short".into()]).unwrap();
        assert_eq!(cfg.bath.modes, 5);
        assert_eq!(cfg.name, "short");
        assert!(ScenarioConfig::from_toml_with_overrides(src, &["bath.bogus=1".into()]).is_err());
    }

    #[test]
    fn eps_c_below_eps0_is_a_hard_error() {
        let mut cfg = ScenarioConfig::builtin("fig3").unwrap();
        cfg.bath.eps0 = 3.0;
        cfg.bath.eps_c = 2.0;
        assert!(!validate_config(&cfg).is_ok());
    }

    #[test]
    fn weak_field_warns_for_pseudo_spin() {
        let mut cfg = ScenarioConfig::builtin("fig6").unwrap();
        cfg.system = SystemConfig::Nv {
            model: NvModel::Reduced,
            field_gauss: 0.01,
            geometry: GeometryConfig { r_min: 3.0, r_max: 6.0, positions: None },
        };
        cfg.coupling = CouplingConfig::NvReduced;
        let rep = validate_config(&cfg);
        assert!(rep.is_ok(), "{:?}", rep.errors);
        assert!(rep.warnings.iter().any(|w| w.contains("strong-field") && w.contains("10")));
    }

    #[test]
    fn slow_swaps_warn_about_zeno() {
        let mut cfg = ScenarioConfig::builtin("fig4").unwrap();
        cfg.bath.modes = 3;
        cfg.system = SystemConfig::Grid { mass: 1.0, omega: 1.0, ng: 32, half_width: None };
        let sw = cfg.swap.as_mut().unwrap();
        sw.zeno_fraction = None;
        sw.interval = Some(100.0);
        let rep = validate_config(&cfg);
        assert!(rep.warnings.iter().any(|w| w.contains("Zeno condition violated")), "{:?}", rep.warnings);
    }

    #[test]
    fn derived_seeds_differ() {
        let s = DerivedSeeds::from_seed(7);
        assert!(s.geometry != s.bath && s.bath != s.swap);
        assert_eq!(s, DerivedSeeds::from_seed(7));
    }
}
