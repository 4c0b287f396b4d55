//! IQP dynamics: Hadamard-conjugated Z-diagonal layers, with the system on
//! qubit 0. The environment only ever sees diagonal gates between the two
//! Hadamard walls, so it acts as a classical random control on the system.

use std::f64::consts::PI;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::gates;
use crate::instruments::InstrumentSchedule;
use crate::linalg::{kron, qubit_bit, ComplexMatrix, StateVector, C64, ONE, ZERO};
use crate::process::{ChoiState, InitialState, LegLayout, ProcessSpec, SeUnitary, MAX_CHOI_QUBITS, MAX_DENSE_QUBITS};
use crate::rng::RngStream;

/// Two-qubit gate `diag(e^{iφ00}, e^{iφ01}, e^{iφ10}, e^{iφ11})` on `(a, b)`;
/// `phases[2 * bit_a + bit_b]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IqpGate {
    pub qubits: (usize, usize),
    pub phases: [f64; 4],
}

impl IqpGate {
    pub fn new(a: usize, b: usize, phases: [f64; 4]) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidQubits(format!("gate on ({a}, {b})")));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { qubits: (a, b), phases })
    }

    pub fn cz(a: usize, b: usize) -> Result<Self> {
        Self::new(a, b, [0.0, 0.0, 0.0, PI])
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let d: Vec<C64> = self.phases.iter().map(|&p| C64::from_polar(1.0, p)).collect();
        ComplexMatrix::from_diagonal(&d)
    }

    fn touches(&self, q: usize) -> bool {
        self.qubits.0 == q || self.qubits.1 == q
    }

    /// Phases reordered so that qubit `first` is the leading index.
    fn phases_with_first(&self, first: usize) -> [f64; 4] {
        if self.qubits.0 == first {
            self.phases
        } else {
            let p = self.phases;
            [p[0], p[2], p[1], p[3]]
        }
    }

    fn phase_on(&self, z: usize, n: usize) -> f64 {
        let a = qubit_bit(z, self.qubits.0, n);
        let b = qubit_bit(z, self.qubits.1, n);
        self.phases[2 * a + b]
    }
}

/// Commuting diagonal circuit `C` on `num_qubits` qubits; the full circuit is
/// `H^{⊗n} C H^{⊗n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct IqpCircuit {
    num_qubits: usize,
    gates: Vec<IqpGate>,
}

impl IqpCircuit {
    /// Upper bound on the gate count, `8 n^2`.
    pub fn max_gates(num_qubits: usize) -> usize {
        8 * num_qubits * num_qubits
    }

    pub fn new(num_qubits: usize, gates: Vec<IqpGate>) -> Result<Self> {
        if num_qubits < 2 {
            return Err(Error::InvalidArgument("IQP circuit needs at least 2 qubits".into()));
        }
        if gates.len() > Self::max_gates(num_qubits) {
            return Err(Error::InvalidArgument(format!(
                "{} gates exceeds the bound {} for {num_qubits} qubits",
                gates.len(),
                Self::max_gates(num_qubits)
            )));
        }
        if let Some(g) = gates.iter().find(|g| g.qubits.0 >= num_qubits || g.qubits.1 >= num_qubits) {
            return Err(Error::InvalidQubits(format!("gate on {:?} in a {num_qubits}-qubit circuit", g.qubits)));
        }
        Ok(Self { num_qubits, gates })
    }

    /// Random pairs with every phase a uniform multiple of π/8.
    pub fn random(num_qubits: usize, num_gates: usize, rng: &mut RngStream) -> Result<Self> {
        if num_qubits < 2 {
            return Err(Error::InvalidArgument("IQP circuit needs at least 2 qubits".into()));
        }
        let mut gates = Vec::with_capacity(num_gates);
        for _ in 0..num_gates {
            let a = (rng.uniform() * num_qubits as f64) as usize % num_qubits;
            let mut b = (rng.uniform() * (num_qubits - 1) as f64) as usize % (num_qubits - 1);
            if b >= a {
                b += 1;
            }
            let mut phases = [0.0; 4];
            for p in &mut phases {
                *p = ((rng.uniform() * 16.0) as usize % 16) as f64 * PI / 8.0;
            }
            gates.push(IqpGate::new(a, b, phases)?);
        }
        Self::new(num_qubits, gates)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[IqpGate] {
        &self.gates
    }

    /// Gate index ranges of the `k` steps, split evenly by position.
    pub fn partition(&self, k: usize) -> Vec<Range<usize>> {
        let g = self.gates.len();
        (0..k).map(|j| j * g / k..(j + 1) * g / k).collect()
    }

    fn diagonal(&self, range: Range<usize>) -> Vec<C64> {
        let n = self.num_qubits;
        (0..1usize << n)
            .map(|z| {
                let phi: f64 = self.gates[range.clone()].iter().map(|g| g.phase_on(z, n)).sum();
                C64::from_polar(1.0, phi)
            })
            .collect()
    }
}

fn walsh_hadamard(v: &mut [C64]) {
    let mut h = 1;
    while h < v.len() {
        for chunk in v.chunks_mut(2 * h) {
            let (lo, hi) = chunk.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (a, b) = (*x, *y);
                *x = a + b;
                *y = a - b;
            }
        }
        h *= 2;
    }
}

/// `H^{⊗n} diag(d) H^{⊗n}` as a dense matrix.
fn hadamard_conjugate(d: &[C64]) -> ComplexMatrix {
    let dim = d.len();
    let scale = 1.0 / dim as f64;
    let mut m = ComplexMatrix::zeros(dim, dim);
    let mut col = vec![ZERO; dim];
    for y in 0..dim {
        for (z, c) in col.iter_mut().enumerate() {
            let sign = if (y & z).count_ones() % 2 == 0 { scale } else { -scale };
            *c = d[z] * sign;
        }
        walsh_hadamard(&mut col);
        for (x, c) in col.iter().enumerate() {
            m[(x, y)] = *c;
        }
    }
    m
}

/// `k`-step process with `U_j = H^{⊗n} C_j H^{⊗n}`, where `C_j` is the `j`-th
/// chunk of the gate list. Starts in `|0…0⟩`; the system is qubit 0.
pub fn iqp_process(circuit: &IqpCircuit, k: usize) -> Result<ProcessSpec> {
    if k == 0 {
        return Err(Error::InvalidArgument("need k >= 1".into()));
    }
    let n = circuit.num_qubits;
    if n > MAX_DENSE_QUBITS {
        return Err(Error::DimensionCap { qubits: n, limit: MAX_DENSE_QUBITS });
    }
    let unitaries = circuit
        .partition(k)
        .into_iter()
        .map(|r| SeUnitary::Dense(hadamard_conjugate(&circuit.diagonal(r))))
        .collect();
    ProcessSpec::new(vec![0], InitialState::Pure(StateVector::zero(n)), unitaries, None)
}

/// A system/environment diagonal gate written as
/// `e^{i global} · (Rz(system_rz) ⊗ I) · CRz(controlled_rz) · (I ⊗ Rz(env_rz))`,
/// the controlled rotation acting on the system when the environment is 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IqpDecomposition {
    pub system_rz: f64,
    pub controlled_rz: f64,
    pub env_rz: f64,
    pub global_phase: f64,
}

impl IqpDecomposition {
    fn from_phases(p: [f64; 4]) -> Self {
        let lambda = [p[2] - p[0], p[3] - p[1]];
        let gamma = [(p[0] + p[2]) / 2.0, (p[1] + p[3]) / 2.0];
        Self {
            system_rz: lambda[0],
            controlled_rz: lambda[1] - lambda[0],
            env_rz: gamma[1] - gamma[0],
            global_phase: (gamma[0] + gamma[1]) / 2.0,
        }
    }

    /// System rotation angle when the environment qubit reads `bit`.
    pub fn system_angle(&self, bit: u8) -> f64 {
        self.system_rz + if bit == 1 { self.controlled_rz } else { 0.0 }
    }

    /// Product of the factors, system qubit first.
    pub fn recompose(&self) -> ComplexMatrix {
        let sys = kron(&gates::rz(self.system_rz), &gates::identity());
        let env = kron(&gates::identity(), &gates::rz(self.env_rz));
        // Controlled on the environment (second qubit), target the system.
        let rz = gates::rz(self.controlled_rz);
        let crz = ComplexMatrix::from_diagonal(&[ONE, rz[(0, 0)], ONE, rz[(1, 1)]]);
        (&(&sys * &crz) * &env).scale(C64::from_polar(1.0, self.global_phase))
    }
}

/// Splits a diagonal two-qubit gate (system first) into a controlled-Rz on the
/// system and an Rz on the environment.
pub fn iqp_decompose(gate: &ComplexMatrix) -> Result<IqpDecomposition> {
    if gate.rows() != 4 || gate.cols() != 4 {
        return Err(Error::DimensionMismatch("expected a 4x4 gate".into()));
    }
    let mut phases = [0.0; 4];
    for r in 0..4 {
        for c in 0..4 {
            if r != c && gate[(r, c)].norm() > 1e-12 {
                return Err(Error::InvalidArgument("gate is not diagonal".into()));
            }
        }
        let z = gate[(r, r)];
        if (z.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument("diagonal entries must have unit modulus".into()));
        }
        phases[r] = z.arg().rem_euclid(std::f64::consts::TAU);
    }
    Ok(IqpDecomposition::from_phases(phases))
}

/// Per-step system rotation as `base + Σ coeff · e_q`.
struct StepAngles {
    base: f64,
    terms: Vec<(usize, f64)>,
}

fn compile(circuit: &IqpCircuit, k: usize) -> Vec<StepAngles> {
    circuit
        .partition(k)
        .into_iter()
        .map(|r| {
            let mut base = 0.0;
            let mut terms = Vec::new();
            for g in circuit.gates[r].iter().filter(|g| g.touches(0)) {
                let env = if g.qubits.0 == 0 { g.qubits.1 } else { g.qubits.0 };
                let dec = IqpDecomposition::from_phases(g.phases_with_first(0));
                base += dec.system_rz;
                terms.push((env, dec.controlled_rz));
            }
            StepAngles { base, terms }
        })
        .collect()
}

/// `H Rz(θ) H`.
fn system_unitary(theta: f64) -> ComplexMatrix {
    let h = gates::hadamard();
    &(&h * &gates::rz(theta)) * &h
}

/// Weak simulation of the system outcomes of `iqp_process(circuit, k)` under
/// computational-basis measurements at all `k + 1` times.
pub fn iqp_classical_sample(circuit: &IqpCircuit, k: usize, rng: &mut RngStream) -> Result<Vec<u8>> {
    let schedule = crate::process::comp_basis_schedule(k + 1);
    iqp_classical_sample_with(circuit, k, &schedule, rng)
}

/// As [`iqp_classical_sample`] with arbitrary single-qubit instruments.
///
/// Draws the environment string uniformly, turns every coupling into a fixed
/// system rotation for that string, then samples the lone system qubit by
/// strong simulation. Cost per shot is linear in the gate count and `k`.
pub fn iqp_classical_sample_with<S: InstrumentSchedule + ?Sized>(
    circuit: &IqpCircuit,
    k: usize,
    schedule: &S,
    rng: &mut RngStream,
) -> Result<Vec<u8>> {
    if k == 0 {
        return Err(Error::InvalidArgument("need k >= 1".into()));
    }
    if schedule.num_slots() != k + 1 {
        return Err(Error::DimensionMismatch(format!("{} slots for {k} steps", schedule.num_slots())));
    }
    let steps = compile(circuit, k);
    let env: Vec<u8> = (0..circuit.num_qubits).map(|q| if q > 0 && rng.uniform() < 0.5 { 1 } else { 0 }).collect();
    let mut rho = ComplexMatrix::from_diagonal(&[ONE, ZERO]);
    let mut outcomes = Vec::with_capacity(k + 1);
    for slot in 0..=k {
        if slot > 0 {
            let s = &steps[slot - 1];
            let theta = s.base + s.terms.iter().filter(|(q, _)| env[*q] == 1).map(|(_, c)| c).sum::<f64>();
            rho = system_unitary(theta).conjugate(&rho)?;
        }
        let inst = schedule.instrument(slot, &outcomes);
        let mut branches = Vec::with_capacity(inst.num_outcomes());
        for map in inst.outcomes() {
            branches.push(map.apply_matrix(&rho)?);
        }
        let weights: Vec<f64> = branches.iter().map(|(_, w)| w.max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        let x = rng.categorical(&weights, total);
        let (out, w) = branches.swap_remove(x);
        rho = out.scale_real(1.0 / w);
        outcomes.push(x as u8);
    }
    Ok(outcomes)
}

/// `Υ_{k:0}` assembled as the uniform mixture over environment strings of
/// product Choi states `ρ_0 ⊗ ⊗_j (I ⊗ V_j(e))|Φ⁺⟩⟨Φ⁺|(I ⊗ V_j(e))†`.
pub fn iqp_mixture_choi(circuit: &IqpCircuit, k: usize) -> Result<ChoiState> {
    let qubits = 2 * k + 1;
    if qubits > MAX_CHOI_QUBITS {
        return Err(Error::ChoiTooLarge { qubits, limit: MAX_CHOI_QUBITS });
    }
    let n = circuit.num_qubits;
    let steps = compile(circuit, k);
    let dim = 1usize << qubits;
    let mut total = ComplexMatrix::zeros(dim, dim);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for e_index in 0..1usize << (n - 1) {
        let env: Vec<u8> = (0..n).map(|q| if q == 0 { 0 } else { qubit_bit(e_index, q - 1, n - 1) as u8 }).collect();
        let mut v = vec![ONE, ZERO];
        for s in &steps {
            let theta = s.base + s.terms.iter().filter(|(q, _)| env[*q] == 1).map(|(_, c)| c).sum::<f64>();
            let u = system_unitary(theta);
            // (I ⊗ V)|Φ⁺⟩ with the input leg first.
            let pair: Vec<C64> = (0..4).map(|idx| u[(idx & 1, idx >> 1)] * r).collect();
            v = crate::linalg::kron_vec(&v, &pair);
        }
        total = &total + &ComplexMatrix::outer(&v, &v);
    }
    let total = total.scale_real(1.0 / (1usize << (n - 1)) as f64);
    ChoiState::from_matrix(k, 1, LegLayout::TimeOrdered, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::comp_basis;
    use crate::process::{comp_basis_schedule, outcome_distribution};

    #[test]
    fn hadamard_conjugate_matches_dense_product() {
        let mut rng = RngStream::new(1, 0);
        let c = IqpCircuit::random(3, 6, &mut rng).unwrap();
        let d = c.diagonal(0..6);
        let h = gates::tensor_power(&gates::hadamard(), 3);
        let direct = &(&h * &ComplexMatrix::from_diagonal(&d)) * &h;
        assert!(hadamard_conjugate(&d).max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn empty_circuit_is_identity() {
        let c = IqpCircuit::new(3, vec![]).unwrap();
        let spec = iqp_process(&c, 2).unwrap();
        let dist = outcome_distribution(&spec, &comp_basis_schedule(3)).unwrap();
        let zero = dist.iter().find(|(x, _)| x.iter().all(|&b| b == 0)).unwrap().1;
        assert!((zero - 1.0).abs() < 1e-12);
        let mut rng = RngStream::new(2, 0);
        assert_eq!(iqp_classical_sample(&c, 2, &mut rng).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn partition_covers_gates_in_order() {
        let mut rng = RngStream::new(3, 0);
        let c = IqpCircuit::random(4, 10, &mut rng).unwrap();
        let parts = c.partition(3);
        assert_eq!(parts.first().unwrap().start, 0);
        assert_eq!(parts.last().unwrap().end, 10);
        assert!(parts.windows(2).all(|w| w[0].end == w[1].start));
    }

    #[test]
    fn decomposition_of_reversed_gate() {
        let g = IqpGate::new(2, 0, [0.1, 0.7, -0.4, 1.3]).unwrap();
        let p = g.phases_with_first(0);
        let m = ComplexMatrix::from_diagonal(&p.map(|x| C64::from_polar(1.0, x)));
        let dec = iqp_decompose(&m).unwrap();
        assert!(dec.recompose().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn non_diagonal_rejected() {
        assert!(iqp_decompose(&gates::cnot()).is_err());
        assert!(IqpGate::new(1, 1, [0.0; 4]).is_err());
    }

    #[test]
    fn too_many_gates_rejected() {
        let gates = vec![IqpGate::cz(0, 1).unwrap(); IqpCircuit::max_gates(2) + 1];
        assert!(IqpCircuit::new(2, gates).is_err());
    }

    #[test]
    fn schedule_slot_count_checked() {
        let c = IqpCircuit::new(2, vec![]).unwrap();
        let mut rng = RngStream::new(4, 0);
        assert!(iqp_classical_sample_with(&c, 2, &vec![comp_basis(); 2], &mut rng).is_err());
    }
}
