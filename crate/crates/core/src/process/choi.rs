//! Choi state `Υ_{k:0}` of a process, its Born-rule contraction and the
//! stochastic maps it contains.
//!
//! Each leg carries the system dimension `d_s`. In the time-ordered layout the
//! legs are `[o_0, i_1, o_1, …, i_k, o_k]`; the reversed layout is the same list
//! backwards, `[o_k, i_k, …, i_1, o_0]`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::instruments::{apply_choi, choi_of, InstrumentSchedule};
use crate::linalg::{eigh, eigvalsh, kron, partial_trace, permute_qubits, ComplexMatrix, DensityOperator, C64, ONE, ZERO};

use super::{InitialState, ProcessSpec};

/// Largest number of qubits a dense Choi state may span.
pub const MAX_CHOI_QUBITS: usize = 13;

const MAGIC: &[u8; 8] = b"PTCHOI01";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LegLayout {
    /// `[o_0, i_1, o_1, …, i_k, o_k]`.
    TimeOrdered,
    /// `[o_k, i_k, …, i_1, o_0]`.
    Reversed,
}

impl LegLayout {
    fn tag(self) -> u8 {
        match self {
            LegLayout::TimeOrdered => 0,
            LegLayout::Reversed => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(LegLayout::TimeOrdered),
            1 => Ok(LegLayout::Reversed),
            t => Err(Error::Format(format!("unknown layout tag {t}"))),
        }
    }
}

/// Dense Choi state of a `k`-step process.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiState {
    num_steps: usize,
    leg_qubits: usize,
    layout: LegLayout,
    matrix: ComplexMatrix,
}

fn leg_label(pos: usize) -> String {
    if pos % 2 == 0 {
        format!("o_{}", pos / 2)
    } else {
        format!("i_{}", pos / 2 + 1)
    }
}

impl ChoiState {
    pub fn from_matrix(num_steps: usize, leg_qubits: usize, layout: LegLayout, matrix: ComplexMatrix) -> Result<Self> {
        let qubits = (2 * num_steps + 1) * leg_qubits;
        if leg_qubits == 0 || matrix.num_qubits()? != qubits {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for {} legs of {leg_qubits} qubit(s)",
                matrix.rows(),
                matrix.cols(),
                2 * num_steps + 1
            )));
        }
        Ok(Self { num_steps, leg_qubits, layout, matrix })
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn layout(&self) -> LegLayout {
        self.layout
    }

    pub fn leg_dim(&self) -> usize {
        1 << self.leg_qubits
    }

    pub fn num_legs(&self) -> usize {
        2 * self.num_steps + 1
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn as_density(&self) -> Result<DensityOperator> {
        DensityOperator::new(self.matrix.clone())
    }

    pub fn leg_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = (0..self.num_legs()).map(leg_label).collect();
        if self.layout == LegLayout::Reversed {
            labels.reverse();
        }
        labels
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eigvalsh(&self.matrix)?[0])
    }

    /// Same state in another leg layout.
    pub fn to_layout(&self, layout: LegLayout) -> Result<ChoiState> {
        if layout == self.layout {
            return Ok(self.clone());
        }
        // The two layouts are mirror images of each other.
        let legs = self.num_legs();
        let lq = self.leg_qubits;
        let perm: Vec<usize> = (0..legs)
            .flat_map(|p| (0..lq).map(move |q| (legs - 1 - p) * lq + q))
            .collect();
        Ok(ChoiState {
            num_steps: self.num_steps,
            leg_qubits: lq,
            layout,
            matrix: permute_qubits(&self.matrix, &perm)?,
        })
    }

    /// `Υ_{j:0}`: the legs up to and including `o_j`, time ordered.
    pub fn reduce(&self, j: usize) -> Result<ChoiState> {
        if j > self.num_steps {
            return Err(Error::TimeOrder { i: 0, j, k: self.num_steps });
        }
        let t = self.to_layout(LegLayout::TimeOrdered)?;
        if j == self.num_steps {
            return Ok(t);
        }
        let keep: Vec<usize> = (0..(2 * j + 1) * self.leg_qubits).collect();
        Ok(ChoiState {
            num_steps: j,
            leg_qubits: self.leg_qubits,
            layout: LegLayout::TimeOrdered,
            matrix: partial_trace(&t.matrix, &keep)?,
        })
    }

    /// Largest deviation from `Tr_{o_j} Υ_{j:0} = I_{i_j}/d ⊗ Υ_{j-1:0}` over
    /// all `j`, together with `|Tr Υ_{0:0} − 1|`.
    pub fn causality_error(&self) -> Result<f64> {
        let d = self.leg_dim();
        let mut worst = 0.0f64;
        let mut upper = self.reduce(self.num_steps)?;
        for j in (1..=self.num_steps).rev() {
            let lower = self.reduce(j - 1)?;
            let keep: Vec<usize> = (0..2 * j * self.leg_qubits).collect();
            let traced = partial_trace(&upper.matrix, &keep)?;
            let expected = kron(&lower.matrix, &ComplexMatrix::identity(d).scale_real(1.0 / d as f64));
            worst = worst.max(traced.max_abs_diff(&expected));
            upper = lower;
        }
        worst = worst.max((upper.trace() - 1.0).abs());
        Ok(worst)
    }

    /// Quantum mutual information between the first `legs` legs (in the
    /// current layout) and the rest.
    pub fn mutual_information(&self, legs: usize) -> Result<f64> {
        if legs == 0 || legs >= self.num_legs() {
            return Err(Error::InvalidArgument(format!("cut after {legs} of {} legs", self.num_legs())));
        }
        let nq = self.num_legs() * self.leg_qubits;
        let split = legs * self.leg_qubits;
        let a: Vec<usize> = (0..split).collect();
        let b: Vec<usize> = (split..nq).collect();
        let sa = von_neumann_entropy(&partial_trace(&self.matrix, &a)?)?;
        let sb = von_neumann_entropy(&partial_trace(&self.matrix, &b)?)?;
        let sab = von_neumann_entropy(&self.matrix)?;
        Ok(sa + sb - sab)
    }

    /// Flat binary record: magic `PTCHOI01`, `u32` k, `u8` layout tag
    /// (0 time ordered, 1 reversed), `u64` dimension, then the matrix in
    /// row-major order as little-endian `f64` pairs `(re, im)`.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.num_steps as u32).to_le_bytes())?;
        w.write_all(&[self.layout.tag()])?;
        w.write_all(&(self.matrix.rows() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.matrix.as_slice().len() * 16);
        for z in self.matrix.as_slice() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<ChoiState> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let k = u32::from_le_bytes(b4) as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let layout = LegLayout::from_tag(tag[0])?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let dim = u64::from_le_bytes(b8) as usize;
        let legs = 2 * k + 1;
        if dim == 0 || !dim.is_power_of_two() || (dim.trailing_zeros() as usize) % legs != 0 {
            return Err(Error::Format(format!("dimension {dim} does not fit {legs} legs")));
        }
        if dim.trailing_zeros() as usize > MAX_CHOI_QUBITS {
            return Err(Error::ChoiTooLarge { qubits: dim.trailing_zeros() as usize, limit: MAX_CHOI_QUBITS });
        }
        let mut raw = vec![0u8; dim * dim * 16];
        r.read_exact(&mut raw)?;
        let data: Vec<C64> = raw
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                    f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                )
            })
            .collect();
        let matrix = ComplexMatrix::new(dim, dim, data)?;
        ChoiState::from_matrix(k, dim.trailing_zeros() as usize / legs, layout, matrix)
    }
}

fn von_neumann_entropy(rho: &ComplexMatrix) -> Result<f64> {
    Ok(eigvalsh(rho)?
        .into_iter()
        .filter(|&l| l > 1e-14)
        .map(|l| -l * l.ln())
        .sum())
}

/// Builds `Υ_{k:0}` in the time-ordered layout.
///
/// At every time `t_j < t_k` the system is moved out onto leg `o_j` and one
/// half of a fresh normalized Bell pair enters in its place, the other half
/// becoming leg `i_{j+1}`. After the last step the system is leg `o_k` and the
/// environment is traced out. Mixed initial states are handled per eigenvector.
pub fn build_choi(spec: &ProcessSpec) -> Result<ChoiState> {
    let k = spec.num_steps();
    let s_q = spec.system_qubits().len();
    let qubits = (2 * k + 1) * s_q;
    if qubits > MAX_CHOI_QUBITS {
        return Err(Error::ChoiTooLarge { qubits, limit: MAX_CHOI_QUBITS });
    }
    let components: Vec<(f64, Vec<C64>)> = match spec.initial_system_first() {
        InitialState::Pure(s) => vec![(1.0, s.amplitudes().to_vec())],
        InitialState::Mixed(r) => {
            let (vals, vecs) = eigh(r.matrix())?;
            vals.iter()
                .enumerate()
                .filter(|(_, &l)| l > 1e-14)
                .map(|(j, &l)| (l, vecs.column(j)))
                .collect()
        }
    };
    let dim = 1usize << qubits;
    let mut choi = ComplexMatrix::zeros(dim, dim);
    for (w, v) in components {
        let m = dilated_choi_vector(spec, v);
        accumulate_gram(&mut choi, &m, spec.env_dim(), w);
    }
    ChoiState::from_matrix(k, s_q, LegLayout::TimeOrdered, choi)
}

/// Pure vector over `(legs, o_k, e)` for one pure initial component.
fn dilated_choi_vector(spec: &ProcessSpec, mut v: Vec<C64>) -> Vec<C64> {
    let d_s = spec.system_dim();
    let d_e = spec.env_dim();
    let block = d_s * d_e;
    let amp = C64::new(1.0 / (d_s as f64).sqrt(), 0.0);
    for j in 0..spec.num_steps() {
        let legs = v.len() / block;
        let mut next = vec![ZERO; legs * d_s * d_s * block];
        for l in 0..legs {
            for o in 0..d_s {
                for i in 0..d_s {
                    let dst = ((l * d_s + o) * d_s + i) * block + i * d_e;
                    let src = l * block + o * d_e;
                    for e in 0..d_e {
                        next[dst + e] = v[src + e] * amp;
                    }
                }
            }
        }
        let kernel = &spec.kernels[j];
        for chunk in next.chunks_mut(block) {
            if chunk.iter().all(|z| *z == ZERO) {
                continue;
            }
            let out = kernel.apply_vec(chunk);
            chunk.copy_from_slice(&out);
        }
        v = next;
    }
    v
}

/// `acc += w · Tr_E |v⟩⟨v|` with `v` indexed `(row, e)`.
fn accumulate_gram(acc: &mut ComplexMatrix, v: &[C64], d_e: usize, w: f64) {
    let rows = v.len() / d_e;
    for r in 0..rows {
        let a = &v[r * d_e..(r + 1) * d_e];
        if a.iter().all(|z| *z == ZERO) {
            continue;
        }
        for c in r..rows {
            let b = &v[c * d_e..(c + 1) * d_e];
            let s: C64 = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<C64>() * w;
            acc[(r, c)] += s;
            if c != r {
                acc[(c, r)] += s.conj();
            }
        }
    }
}

/// `Tr_lead[m (f ⊗ I)]`: contracts the leading factor of `m` against `f`.
fn contract_leading(m: &ComplexMatrix, f: &ComplexMatrix) -> ComplexMatrix {
    let df = f.rows();
    let r = m.rows() / df;
    let mut out = ComplexMatrix::zeros(r, r);
    for l in 0..df {
        for lp in 0..df {
            let c = f[(lp, l)];
            if c == ZERO {
                continue;
            }
            for a in 0..r {
                let src = &m.row(l * r + a)[lp * r..(lp + 1) * r];
                let dst = &mut out.as_mut_slice()[a * r..(a + 1) * r];
                for (o, &x) in dst.iter_mut().zip(src) {
                    *o += c * x;
                }
            }
        }
    }
    out
}

/// Spatiotemporal Born rule:
/// `P = d_s^k Tr[Υ (Π_k ⊗ Â_{k−1}^T ⊗ … ⊗ Â_0^T)]` in the reversed layout,
/// where each `Â_j` is an instrument Choi on `(i_{j+1}, o_j)`.
pub fn born_rule_contract(choi: &ChoiState, final_effect: &ComplexMatrix, instrument_chois: &[ComplexMatrix]) -> Result<f64> {
    let k = choi.num_steps();
    let d = choi.leg_dim();
    if instrument_chois.len() != k {
        return Err(Error::LayoutMismatch(format!("{} instrument Chois for {k} earlier times", instrument_chois.len())));
    }
    if final_effect.rows() != d || !final_effect.is_square() {
        return Err(Error::LayoutMismatch(format!("final effect is {}x{}, leg dimension {d}", final_effect.rows(), final_effect.cols())));
    }
    if instrument_chois.iter().any(|a| a.rows() != d * d || !a.is_square()) {
        return Err(Error::LayoutMismatch(format!("instrument Chois must be {0}x{0}", d * d)));
    }
    let rev = choi.to_layout(LegLayout::Reversed)?;
    let mut m = contract_leading(&rev.matrix, final_effect);
    for a in instrument_chois.iter().rev() {
        m = contract_leading(&m, &a.transpose());
    }
    Ok(m[(0, 0)].re * (d as f64).powi(k as i32))
}

/// Born-rule probability of an outcome string under an instrument schedule.
pub fn born_probability<S: InstrumentSchedule + ?Sized>(choi: &ChoiState, schedule: &S, outcomes: &[u8]) -> Result<f64> {
    let k = choi.num_steps();
    if outcomes.len() != k + 1 || schedule.num_slots() != k + 1 {
        return Err(Error::LayoutMismatch(format!("need {} slots and outcomes", k + 1)));
    }
    let map_for = |slot: usize| {
        let inst = schedule.instrument(slot, &outcomes[..slot]);
        inst.outcomes()
            .get(outcomes[slot] as usize)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("outcome {} out of range at slot {slot}", outcomes[slot])))
    };
    let chois = (0..k).map(|slot| map_for(slot).map(|m| choi_of(&m))).collect::<Result<Vec<_>>>()?;
    let effect = map_for(k)?.kraus_sum();
    born_rule_contract(choi, &effect, &chois)
}

/// `Λ_{j:i}` as a Choi matrix on `(o_j, i_{i+1})` (output leg first).
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMap {
    pub i: usize,
    pub j: usize,
    pub choi: ComplexMatrix,
    pub d: usize,
    /// Smallest eigenvalue of the Choi matrix.
    pub min_eigenvalue: f64,
    /// `max |Tr_out Λ − I|`.
    pub trace_preservation_error: f64,
    /// Completely positive within −1e-8 and trace preserving within 1e-8.
    pub is_cptp: bool,
}

impl StochasticMap {
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        apply_choi(&self.choi, self.d, self.d, rho)
    }
}

/// Projects `Υ` onto identity instruments at every time except `t_i`, where the
/// system is discarded and a fresh state enters on `i_{i+1}`; what is left is
/// the map from that state to the system at `t_j`.
pub fn extract_stochastic_map(choi: &ChoiState, i: usize, j: usize) -> Result<StochasticMap> {
    let k = choi.num_steps();
    if !(i < j && j <= k) {
        return Err(Error::TimeOrder { i, j, k });
    }
    let reduced = choi.reduce(j)?;
    let d = choi.leg_dim();
    let lq = choi.leg_qubits;
    // Time-ordered positions: o_t at 2t, i_t at 2t - 1.
    let open_in = 2 * i + 1;
    let open_out = 2 * j;
    let mut legs: Vec<usize> = (0..=2 * j).filter(|&p| p != open_in && p != open_out).collect();
    legs.push(open_out);
    legs.push(open_in);
    let perm: Vec<usize> = legs.iter().flat_map(|&p| (0..lq).map(move |q| p * lq + q)).collect();
    let mut m = permute_qubits(&reduced.matrix, &perm)?;

    let mut bell = vec![ZERO; d * d];
    for a in 0..d {
        bell[a * d + a] = ONE;
    }
    let bell = ComplexMatrix::outer(&bell, &bell);
    let id = ComplexMatrix::identity(d);
    for t in 0..j {
        m = contract_leading(&m, if t == i { &id } else { &bell });
    }
    let x = m.scale_real((d as f64).powi(j as i32));

    let min_eigenvalue = eigvalsh(&x)?[0];
    let tp = partial_trace_out(&x, d);
    let trace_preservation_error = tp.max_abs_diff(&ComplexMatrix::identity(d));
    let is_cptp = min_eigenvalue >= -1e-8 && trace_preservation_error <= 1e-8;
    Ok(StochasticMap { i, j, choi: x, d, min_eigenvalue, trace_preservation_error, is_cptp })
}

/// Trace over the leading (output) factor of a `d x d` bipartite operator.
fn partial_trace_out(x: &ComplexMatrix, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |b, bp| (0..d).map(|a| x[(a * d + b, a * d + bp)]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::haar_unitary;
    use crate::instruments;
    use crate::linalg::StateVector;
    use crate::process::{random_spec, trajectory_probability, SeUnitary};
    use crate::rng::RngStream;

    #[test]
    fn identity_process_is_bell_times_initial() {
        let mut rng = RngStream::new(1, 0);
        let a = ComplexMatrix::from_fn(2, 2, |_, _| rng.complex_normal());
        let rho_s = (&a * &a.adjoint()).scale_real(1.0);
        let rho_s = rho_s.scale_real(1.0 / rho_s.trace().re);
        let rho_e = ComplexMatrix::from_diagonal(&[C64::new(0.3, 0.0), C64::new(0.7, 0.0)]);
        let init = InitialState::Mixed(DensityOperator::new(kron(&rho_s, &rho_e)).unwrap());
        let spec = ProcessSpec::new(vec![0], init, vec![SeUnitary::Dense(ComplexMatrix::identity(4))], None).unwrap();
        let choi = build_choi(&spec).unwrap();
        // legs o_0, i_1, o_1: the system at t_0 leaves on o_0, and i_1 is
        // perfectly correlated with o_1.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi = [C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)];
        let expected = kron(&rho_s, &ComplexMatrix::outer(&phi, &phi));
        assert!(choi.matrix().max_abs_diff(&expected) < 1e-12);
        assert!(choi.mutual_information(1).unwrap().abs() < 1e-8);
    }

    #[test]
    fn random_choi_properties() {
        let mut rng = RngStream::new(2, 0);
        for mixed in [false, true] {
            let spec = random_spec(2, 2, mixed, &mut rng).unwrap();
            let choi = build_choi(&spec).unwrap();
            assert!((choi.trace() - 1.0).abs() < 1e-10);
            assert!(choi.min_eigenvalue().unwrap() > -1e-8);
            assert!(choi.causality_error().unwrap() < 1e-8);
        }
    }

    #[test]
    fn born_rule_matches_trajectories() {
        let mut rng = RngStream::new(3, 0);
        for k in 1..=3 {
            let spec = random_spec(1, k, k == 2, &mut rng).unwrap();
            let sched: Vec<_> = (0..=k).map(|_| instruments::random_instrument(2, 2, 2, &mut rng).unwrap()).collect();
            let choi = build_choi(&spec).unwrap();
            for x in 0..(1u32 << (k + 1)) {
                let outcomes: Vec<u8> = (0..=k).map(|t| ((x >> t) & 1) as u8).collect();
                let p = trajectory_probability(&spec, &sched, &outcomes).unwrap();
                let q = born_probability(&choi, &sched, &outcomes).unwrap();
                assert!((p - q).abs() < 1e-10, "k={k} {outcomes:?}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn identity_instruments_give_final_measurement() {
        let mut rng = RngStream::new(4, 0);
        let spec = random_spec(1, 2, false, &mut rng).unwrap();
        let choi = build_choi(&spec).unwrap();
        let id = instruments::identity_instrument(2);
        let sched = vec![id.clone(), id, instruments::comp_basis()];
        // dense evolution of the initial state
        let mut psi = spec.initial_system_first().density_matrix();
        for j in 0..2 {
            psi = spec.unitary_system_first(j).to_dense().conjugate(&psi).unwrap();
        }
        let rho_s = partial_trace(&psi, &[0]).unwrap();
        for x in 0..2u8 {
            let p = born_probability(&choi, &sched, &[0, 0, x]).unwrap();
            assert!((p - rho_s[(x as usize, x as usize)].re).abs() < 1e-10);
        }
    }

    #[test]
    fn layouts_round_trip_and_labels() {
        let mut rng = RngStream::new(5, 0);
        let spec = random_spec(1, 2, false, &mut rng).unwrap();
        let choi = build_choi(&spec).unwrap();
        assert_eq!(choi.leg_labels(), vec!["o_0", "i_1", "o_1", "i_2", "o_2"]);
        let rev = choi.to_layout(LegLayout::Reversed).unwrap();
        assert_eq!(rev.leg_labels(), vec!["o_2", "i_2", "o_1", "i_1", "o_0"]);
        let back = rev.to_layout(LegLayout::TimeOrdered).unwrap();
        assert!(back.matrix().max_abs_diff(choi.matrix()) < 1e-15);
    }

    #[test]
    fn binary_round_trip() {
        let mut rng = RngStream::new(6, 0);
        let spec = random_spec(1, 1, true, &mut rng).unwrap();
        let choi = build_choi(&spec).unwrap().to_layout(LegLayout::Reversed).unwrap();
        let mut buf = Vec::new();
        choi.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"PTCHOI01");
        assert_eq!(buf.len(), 8 + 4 + 1 + 8 + 64 * 16);
        let back = ChoiState::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, choi);
        buf[0] = b'X';
        assert!(ChoiState::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn closed_system_map_is_unitary_channel() {
        let mut rng = RngStream::new(7, 0);
        let v1 = haar_unitary(2, &mut rng).unwrap();
        let v2 = haar_unitary(2, &mut rng).unwrap();
        let w = haar_unitary(2, &mut rng).unwrap();
        let init = InitialState::Pure(StateVector::normalized((0..4).map(|_| rng.complex_normal()).collect()).unwrap());
        let spec = ProcessSpec::new(
            vec![0],
            init,
            vec![SeUnitary::Dense(kron(&v1, &w)), SeUnitary::Dense(kron(&v2, &w))],
            None,
        )
        .unwrap();
        let choi = build_choi(&spec).unwrap();
        let map = extract_stochastic_map(&choi, 0, 2).unwrap();
        assert!(map.is_cptp);
        let v = &v2 * &v1;
        let psi: Vec<C64> = v.as_slice().to_vec();
        assert!(map.choi.max_abs_diff(&ComplexMatrix::outer(&psi, &psi)) < 1e-10);
        assert!(matches!(extract_stochastic_map(&choi, 2, 1), Err(Error::TimeOrder { .. })));
        assert!(extract_stochastic_map(&choi, 0, 3).is_err());
    }

    #[test]
    fn choi_cap_enforced() {
        let mut rng = RngStream::new(8, 0);
        let spec = random_spec(1, 7, false, &mut rng).unwrap();
        assert!(matches!(build_choi(&spec), Err(Error::ChoiTooLarge { .. })));
    }
}
