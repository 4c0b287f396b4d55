//! Pure dephasing: `H_SE = |0⟩⟨0|_S ⊗ H_E`, so the system coherence is the
//! return amplitude of the environment.

use crate::ensembles::{gue_hamiltonian, random_timestep};
use crate::error::{Error, Result};
use crate::linalg::{eigh, kron_vec, partial_trace, spectral_unitary, ComplexMatrix, StateVector, C64, ONE, ZERO};
use crate::process::{InitialState, ProcessSpec, SeUnitary};
use crate::rng::RngStream;

use super::MAX_RANDOM_MODEL_QUBITS;

/// `U^t = |0⟩⟨0| ⊗ w_t + |1⟩⟨1| ⊗ I` with `w_t = exp(-i H_E t)`.
pub fn dephasing_unitary(w: &ComplexMatrix) -> ComplexMatrix {
    let d = w.rows();
    ComplexMatrix::from_fn(2 * d, 2 * d, |r, c| match (r / d, c / d) {
        (0, 0) => w[(r, c)],
        (1, 1) if r == c => ONE,
        _ => ZERO,
    })
}

/// One-step process from `|+⟩|0…0⟩` over time `t`; the system is qubit 0.
pub fn dephasing_process(h_env: &ComplexMatrix, t: f64) -> Result<ProcessSpec> {
    let n_env = h_env.num_qubits()?;
    let w = crate::linalg::expm_hermitian(h_env, t)?;
    let initial = plus_zero(n_env)?;
    ProcessSpec::new(vec![0], InitialState::Pure(initial), vec![SeUnitary::Dense(dephasing_unitary(&w))], None)
}

fn plus_zero(n_env: usize) -> Result<StateVector> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut env = vec![ZERO; 1 << n_env];
    env[0] = ONE;
    StateVector::new(kron_vec(&[C64::new(h, 0.0), C64::new(h, 0.0)], &env))
}

/// One evaluation at time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DephasingSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// `⟨X⟩² + ⟨Y⟩²` of the reduced system state.
    pub coherence: f64,
    /// `|⟨0|w_t|0⟩|²` from the environment alone.
    pub overlap: f64,
    /// Reduced system state.
    pub rho_system: [[C64; 2]; 2],
}

/// Evolves `|+⟩|0⟩` under `U^t` and compares the system coherence with the
/// environment return probability.
pub fn dephasing_sample(eigen: &(Vec<f64>, ComplexMatrix), t: f64) -> Result<DephasingSample> {
    let (vals, vecs) = eigen;
    let w = spectral_unitary(vals, vecs, t);
    let n_env = w.num_qubits()?;
    let psi = plus_zero(n_env)?.evolve(&dephasing_unitary(&w))?;
    let rho = partial_trace(psi.to_density().matrix(), &[0])?;
    let x = 2.0 * rho[(0, 1)].re;
    let y = -2.0 * rho[(0, 1)].im;
    Ok(DephasingSample {
        t,
        x,
        y,
        coherence: x * x + y * y,
        overlap: w[(0, 0)].norm_sqr(),
        rho_system: [[rho[(0, 0)], rho[(0, 1)]], [rho[(1, 0)], rho[(1, 1)]]],
    })
}

/// Draws one GUE environment Hamiltonian (no locality cutoff) and evaluates
/// `t_samples` random times uniform on `(0, 2π)`.
pub fn dephasing_demo(env_qubits: usize, t_samples: usize, rng: &mut RngStream) -> Result<Vec<DephasingSample>> {
    dephasing_demo_with(env_qubits, t_samples, false, rng)
}

pub fn dephasing_demo_with(
    env_qubits: usize,
    t_samples: usize,
    locality_cutoff: bool,
    rng: &mut RngStream,
) -> Result<Vec<DephasingSample>> {
    if env_qubits == 0 || env_qubits + 1 > MAX_RANDOM_MODEL_QUBITS {
        return Err(Error::InvalidArgument(format!(
            "env_qubits must be in 1..={}",
            MAX_RANDOM_MODEL_QUBITS - 1
        )));
    }
    let h = gue_hamiltonian(1 << env_qubits, locality_cutoff, rng)?;
    let eigen = eigh(&h)?;
    (0..t_samples).map(|_| dephasing_sample(&eigen, random_timestep(rng))).collect()
}
