use crate::ensembles::{gue_hamiltonian, haar_unitary, random_timestep};
use crate::error::{Error, Result};
use crate::linalg::{eigh, spectral_unitary, ComplexMatrix, StateVector};
use crate::process::{InitialState, ProcessSpec, SeUnitary};
use crate::rng::RngStream;

use super::MAX_RANDOM_MODEL_QUBITS;

fn check_size(env_qubits: usize, k: usize) -> Result<usize> {
    if env_qubits == 0 || k == 0 {
        return Err(Error::InvalidArgument("need env_qubits >= 1 and k >= 1".into()));
    }
    let n = env_qubits + 1;
    if n > MAX_RANDOM_MODEL_QUBITS {
        return Err(Error::DimensionCap { qubits: n, limit: MAX_RANDOM_MODEL_QUBITS });
    }
    Ok(n)
}

/// `k` independent Haar unitaries on system + environment, starting from
/// `|0…0⟩`. The system is qubit 0.
pub fn haar_process(env_qubits: usize, k: usize, rng: &mut RngStream) -> Result<ProcessSpec> {
    let n = check_size(env_qubits, k)?;
    let unitaries = (0..k)
        .map(|_| haar_unitary(1 << n, rng).map(SeUnitary::Dense))
        .collect::<Result<Vec<_>>>()?;
    ProcessSpec::new(vec![0], InitialState::Pure(StateVector::zero(n)), unitaries, None)
}

/// Which register qubit plays the system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemPosition {
    /// Qubit 0, the most significant bit of the basis label.
    First,
    /// The last qubit, the least significant bit.
    Last,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GueOptions {
    pub locality_cutoff: bool,
    pub system: SystemPosition,
}

impl Default for GueOptions {
    fn default() -> Self {
        Self { locality_cutoff: true, system: SystemPosition::Last }
    }
}

/// One GUE Hamiltonian `H` for the whole run, with `U_j = exp(-i H Δt_j)` and
/// `Δt_j` uniform on `(0, 2π)`.
pub fn gue_process(env_qubits: usize, k: usize, rng: &mut RngStream) -> Result<ProcessSpec> {
    gue_process_with(env_qubits, k, GueOptions::default(), rng)
}

pub fn gue_process_with(env_qubits: usize, k: usize, opts: GueOptions, rng: &mut RngStream) -> Result<ProcessSpec> {
    let n = check_size(env_qubits, k)?;
    let h = gue_hamiltonian(1 << n, opts.locality_cutoff, rng)?;
    let steps: Vec<f64> = (0..k).map(|_| random_timestep(rng)).collect();
    hamiltonian_process(&h, &steps, opts.system)
}

/// Process generated by a fixed Hamiltonian with the given step lengths.
pub fn hamiltonian_process(h: &ComplexMatrix, steps: &[f64], system: SystemPosition) -> Result<ProcessSpec> {
    let n = h.num_qubits()?;
    if steps.is_empty() {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let (vals, vecs) = eigh(h)?;
    let unitaries = steps.iter().map(|&dt| SeUnitary::Dense(spectral_unitary(&vals, &vecs, dt))).collect();
    // Physical times when every step is positive, plain step labels otherwise.
    let times = steps.iter().all(|&dt| dt > 0.0).then(|| {
        std::iter::once(0.0)
            .chain(steps.iter().scan(0.0, |t, dt| {
                *t += dt;
                Some(*t)
            }))
            .collect()
    });
    let sys = match system {
        SystemPosition::First => 0,
        SystemPosition::Last => n - 1,
    };
    ProcessSpec::new(vec![sys], InitialState::Pure(StateVector::zero(n)), unitaries, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{comp_basis_schedule, outcome_distribution, trajectory_probability};

    #[test]
    fn frozen_gue_dynamics_give_zeros() {
        let mut rng = RngStream::new(1, 0);
        let h = gue_hamiltonian(8, true, &mut rng).unwrap();
        let spec = hamiltonian_process(&h, &[0.0; 4], SystemPosition::Last).unwrap();
        let p = trajectory_probability(&spec, &comp_basis_schedule(5), &[0; 5]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_gue_matches_dense_enumeration() {
        let mut rng = RngStream::new(2, 0);
        let spec = gue_process(2, 2, &mut rng).unwrap();
        let sched = comp_basis_schedule(3);
        // Oracle: dense statevector with explicit projectors on the last qubit.
        let d = 8;
        for (x, p) in outcome_distribution(&spec, &sched).unwrap() {
            let mut psi = vec![crate::linalg::ZERO; d];
            psi[0] = crate::linalg::ONE;
            let project = |v: &mut Vec<crate::C64>, bit: u8| {
                for (i, z) in v.iter_mut().enumerate() {
                    if (i & 1) as u8 != bit {
                        *z = crate::linalg::ZERO;
                    }
                }
            };
            project(&mut psi, x[0]);
            for j in 0..2 {
                let u = spec.unitary(j).unwrap().to_dense();
                psi = u.apply(&psi).unwrap();
                project(&mut psi, x[j + 1]);
            }
            let q: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn size_cap() {
        let mut rng = RngStream::new(3, 0);
        assert!(matches!(haar_process(20, 1, &mut rng), Err(Error::DimensionCap { .. })));
        assert!(haar_process(0, 1, &mut rng).is_err());
    }
}
