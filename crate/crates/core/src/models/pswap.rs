//! Partial swap between a fresh system qubit and one environment qubit,
//! its Clifford + Rz circuit, and the repeated-extraction experiment.

use crate::error::{Error, Result};
use crate::gates;
use crate::linalg::{expm_hermitian, kron, ComplexMatrix, StateVector, C64, ONE, ZERO};
use crate::rng::RngStream;

/// `exp(-iθ/2 (XX + YY + ZZ))`, qubit 0 being the system.
pub fn pswap_gate(theta: f64) -> ComplexMatrix {
    let x = kron(&gates::pauli_x(), &gates::pauli_x());
    let y = kron(&gates::pauli_y(), &gates::pauli_y());
    let z = kron(&gates::pauli_z(), &gates::pauli_z());
    let h = &(&x + &y) + &z;
    expm_hermitian(&h, theta / 2.0).expect("Heisenberg generator is Hermitian")
}

/// One gate of a two-qubit circuit; qubit 0 is the system, qubit 1 the environment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    H(usize),
    S(usize),
    Sdg(usize),
    Cnot { control: usize, target: usize },
    Rz { qubit: usize, theta: f64 },
}

impl Gate {
    pub fn is_clifford(&self) -> bool {
        !matches!(self, Gate::Rz { .. })
    }

    /// The 4x4 matrix on `(system, environment)`.
    pub fn matrix(&self) -> ComplexMatrix {
        let single = |u: ComplexMatrix, q: usize| gates::on_qubit(&u, q, 2);
        match *self {
            Gate::H(q) => single(gates::hadamard(), q),
            Gate::S(q) => single(gates::s_gate(), q),
            Gate::Sdg(q) => single(gates::s_gate().adjoint(), q),
            Gate::Rz { qubit, theta } => single(gates::rz(theta), qubit),
            Gate::Cnot { control: 0, target: 1 } => gates::cnot(),
            Gate::Cnot { .. } => gates::cnot_reversed(),
        }
    }
}

/// Product of a gate list applied left to right in time.
pub fn recompose(circuit: &[Gate]) -> ComplexMatrix {
    circuit.iter().fold(ComplexMatrix::identity(4), |acc, g| &g.matrix() * &acc)
}

/// `exp(-iθ/2 ZZ)` sandwiched between basis changes, the rotation on the system.
fn zz_block(theta: f64, before: &[Gate], after: &[Gate]) -> Vec<Gate> {
    let cx = Gate::Cnot { control: 1, target: 0 };
    let mut v = before.to_vec();
    v.extend([cx, Gate::Rz { qubit: 0, theta }, cx]);
    v.extend_from_slice(after);
    v
}

/// Clifford + Rz circuit for `pswap_gate(θ)`: the ZZ, XX and YY factors each
/// contribute one `Rz(θ)` on the system.
pub fn pswap_decompose(theta: f64) -> Vec<Gate> {
    use Gate::*;
    let mut c = zz_block(theta, &[], &[]);
    c.extend(zz_block(theta, &[H(0), H(1)], &[H(0), H(1)]));
    c.extend(zz_block(theta, &[Sdg(0), Sdg(1), H(0), H(1)], &[H(0), H(1), S(0), S(1)]));
    c
}

/// Repeated extraction: a fresh `|0⟩` system meets the environment through
/// `pswap(θ)` and is measured and reset, `k` times.
#[derive(Clone, Debug, PartialEq)]
pub struct PswapExperiment {
    theta: f64,
    k: usize,
    env_state: StateVector,
}

impl PswapExperiment {
    pub fn new(theta: f64, k: usize, env_state: StateVector) -> Result<Self> {
        if !(theta > 0.0 && theta <= std::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, π], got {theta}")));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("need k >= 1".into()));
        }
        if env_state.num_qubits() != 1 {
            return Err(Error::DimensionMismatch("environment state must be one qubit".into()));
        }
        Ok(Self { theta, k, env_state })
    }

    /// Environment prepared as `prep |0⟩` by a given single-qubit unitary.
    pub fn from_prep(theta: f64, k: usize, prep: &ComplexMatrix) -> Result<Self> {
        if prep.rows() != 2 || !prep.is_unitary(1e-10) {
            return Err(Error::InvalidArgument("state preparation must be a 2x2 unitary".into()));
        }
        Self::new(theta, k, StateVector::zero(1).evolve(prep)?)
    }

    /// Environment `√(1-β²)|0⟩ + β|1⟩` with real amplitudes.
    pub fn with_excited_population(theta: f64, k: usize, beta_sq: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta_sq) {
            return Err(Error::InvalidArgument(format!("|β|² must lie in [0, 1], got {beta_sq}")));
        }
        let amps = vec![C64::new((1.0 - beta_sq).sqrt(), 0.0), C64::new(beta_sq.sqrt(), 0.0)];
        Self::new(theta, k, StateVector::new(amps)?)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn env_state(&self) -> &StateVector {
        &self.env_state
    }

    /// `1 − |β|² cos^{2k} θ`.
    pub fn closed_form(&self) -> f64 {
        let beta_sq = self.env_state.amplitudes()[1].norm_sqr();
        1.0 - beta_sq * self.theta.cos().powi(2 * self.k as i32)
    }

    /// Pr[env = 0] from the two-qubit density matrix under measure-and-reset.
    pub fn exact_probability(&self) -> f64 {
        let u = pswap_gate(self.theta);
        let sys0 = StateVector::zero(1);
        let mut rho = sys0.tensor(&self.env_state).to_density().into_matrix();
        let reset = [
            ComplexMatrix::from_rows(&[&[ONE, ZERO], &[ZERO, ZERO]]),
            ComplexMatrix::from_rows(&[&[ZERO, ONE], &[ZERO, ZERO]]),
        ]
        .map(|k| kron(&k, &gates::identity()));
        for _ in 0..self.k {
            rho = u.conjugate(&rho).expect("4x4");
            rho = reset.iter().fold(ComplexMatrix::zeros(4, 4), |acc, k| &acc + &k.conjugate(&rho).expect("4x4"));
        }
        (rho[(0, 0)] + rho[(2, 2)]).re
    }
}

/// Smallest `k` with `|cos θ|^{2k} ≤ ε`, so that `Pr[env = 0] ≥ 1 − ε` for any
/// environment state.
pub fn rounds_for_precision(theta: f64, eps: f64) -> usize {
    let c = theta.cos().abs();
    if c < 1e-15 {
        return 1;
    }
    if c >= 1.0 {
        return usize::MAX;
    }
    ((eps.ln() / (2.0 * c.ln())).ceil() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PswapResult {
    pub closed_form: f64,
    pub exact: f64,
    pub empirical: f64,
    pub standard_error: f64,
    /// Final environment readout per shot.
    pub env_bits: Vec<u8>,
}

fn measure_system(psi: &mut [C64; 4], rng: &mut RngStream) -> u8 {
    let p1 = psi[2].norm_sqr() + psi[3].norm_sqr();
    let total = p1 + psi[0].norm_sqr() + psi[1].norm_sqr();
    let bit = u8::from(rng.uniform() * total < p1);
    let (keep, norm) = if bit == 1 { (2, p1) } else { (0, total - p1) };
    let s = 1.0 / norm.sqrt();
    // Collapse and reset the system to |0⟩.
    let (a, b) = (psi[keep] * s, psi[keep + 1] * s);
    *psi = [a, b, ZERO, ZERO];
    bit
}

/// Shot-by-shot statevector simulation of the experiment.
pub fn pswap_extraction(exp: &PswapExperiment, shots: usize, rng: &mut RngStream) -> Result<PswapResult> {
    if shots == 0 {
        return Err(Error::InvalidArgument("need shots >= 1".into()));
    }
    let u = pswap_gate(exp.theta);
    let env = exp.env_state.amplitudes();
    let mut env_bits = Vec::with_capacity(shots);
    for _ in 0..shots {
        let mut psi = [env[0], env[1], ZERO, ZERO];
        for _ in 0..exp.k {
            let next = u.apply(&psi)?;
            psi.copy_from_slice(&next);
            measure_system(&mut psi, rng);
        }
        let p1 = psi[1].norm_sqr() / (psi[0].norm_sqr() + psi[1].norm_sqr());
        env_bits.push(u8::from(rng.uniform() < p1));
    }
    let zeros = env_bits.iter().filter(|&&b| b == 0).count() as f64;
    let p = zeros / shots as f64;
    Ok(PswapResult {
        closed_form: exp.closed_form(),
        exact: exp.exact_probability(),
        empirical: p,
        standard_error: (p * (1.0 - p) / shots as f64).sqrt(),
        env_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_form_of_gate() {
        // XX + YY + ZZ = 2 SWAP − I.
        for theta in [0.0, 0.3, 1.1, PI / 2.0] {
            let expected = (&ComplexMatrix::identity(4).scale_real(theta.cos()) - &gates::swap().scale(C64::new(0.0, theta.sin())))
                .scale(C64::from_polar(1.0, theta / 2.0));
            assert!(pswap_gate(theta).max_abs_diff(&expected) < 1e-12);
        }
    }

    #[test]
    fn three_rotations_on_system() {
        let c = pswap_decompose(0.4);
        let rz: Vec<_> = c.iter().filter(|g| !g.is_clifford()).collect();
        assert_eq!(rz.len(), 3);
        assert!(rz.iter().all(|g| matches!(g, Gate::Rz { qubit: 0, .. })));
    }

    #[test]
    fn reversed_cnot_matrix() {
        let g = Gate::Cnot { control: 1, target: 0 };
        assert!(g.matrix().max_abs_diff(&gates::cnot_reversed()) < 1e-15);
    }

    #[test]
    fn invalid_experiments() {
        assert!(PswapExperiment::with_excited_population(0.0, 1, 1.0).is_err());
        assert!(PswapExperiment::with_excited_population(4.0, 1, 1.0).is_err());
        assert!(PswapExperiment::with_excited_population(1.0, 0, 1.0).is_err());
        assert!(PswapExperiment::from_prep(1.0, 1, &gates::cnot()).is_err());
    }

    #[test]
    fn prep_unitary_sets_population() {
        let e = PswapExperiment::from_prep(PI / 4.0, 2, &gates::pauli_x()).unwrap();
        assert!((e.closed_form() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rounds_bound() {
        assert_eq!(rounds_for_precision(PI / 2.0, 1e-3), 1);
        let k = rounds_for_precision(PI / 4.0, 1e-3);
        assert!(0.5f64.powi(k as i32) <= 1e-3 && 0.5f64.powi(k as i32 - 1) > 1e-3);
    }
}
