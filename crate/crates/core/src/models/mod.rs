//! Concrete processes: random-unitary and GUE evolution, IQP, order finding,
//! partial-swap extraction and pure dephasing.

pub mod dephasing;
pub mod haar_gue;
pub mod iqp;
pub mod pswap;
pub mod shor;

pub use dephasing::{dephasing_demo, dephasing_demo_with, dephasing_process, dephasing_sample, dephasing_unitary, DephasingSample};
pub use haar_gue::{gue_process, gue_process_with, haar_process, hamiltonian_process, GueOptions, SystemPosition};
pub use iqp::{iqp_classical_sample, iqp_classical_sample_with, iqp_decompose, iqp_mixture_choi, iqp_process, IqpCircuit, IqpDecomposition, IqpGate};
pub use pswap::{pswap_decompose, pswap_extraction, pswap_gate, recompose, rounds_for_precision, Gate, PswapExperiment, PswapResult};
pub use shor::{
    multiplicative_order, shor_attempt, shor_factor, shor_factor_with, shor_process, FactorReport, ShorAttempt, ShorMode,
    ShorSchedule, ShorSpec,
};

/// Largest register for models built from dense random unitaries.
pub const MAX_RANDOM_MODEL_QUBITS: usize = 10;
