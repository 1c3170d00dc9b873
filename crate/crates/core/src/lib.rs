//! Surrogate-Hamiltonian simulation of a primary system coupled to a bath of
//! two-level modes.
//!
//! The bath of `K` modes is encoded in the bits of a spinor index, so the
//! total state is `2^K` system wave functions (see [`SpinorState`]). All
//! Hamiltonian terms act matrix-free on that layout.

pub mod bath;
pub mod error;
pub mod hamiltonian;
pub mod operator;
pub mod oracle;
pub mod observables;
pub mod propagate;
pub mod scenario;
pub mod swap;
pub mod state;
pub mod system;

pub use bath::{apply_bath_hamiltonian, apply_mode_op, apply_pair_hop, sample_spectrum, BathSpec, ModeOp, SpectrumScheme};
pub use error::{Error, Result};
pub use hamiltonian::{
    apply_coupling, commutator_residual, BathHamiltonian, CouplingSpec, DephasingCoupling, ExponentSign,
    SystemLocalOperator, Term, TotalHamiltonian,
};
pub use num_complex::Complex64 as C64;
pub use observables::{
    coherence_l1, energy_channels, partial_trace_bath, phase_space_stats, CoherenceVariant, EnergyChannels,
    LadderNorm, ObservableRecord, Recorder, ReducedDensity,
};
pub use operator::Operator;
pub use oracle::{decompose, ArrowheadModel, SpectralDecomposition};
pub use propagate::{energy_spread, zeno_time, GroundState, PropagationStats, Propagator, PropagatorConfig, ZenoReport};
pub use scenario::{run_scenario, validate_config, ScenarioConfig, ScenarioKind, ScenarioOutput, ValidationReport};
pub use state::{mode_bit, SpinorState};
pub use swap::{ensemble_run, swap_spin, EnsembleResult, FreshSpin, SwapMode, SwapPolicy, TargetRule};
pub use system::{prepare_state, sample_nv_geometry, BathInit, Excitation, GridSystem, NvSpec, Reference, SystemModel};
