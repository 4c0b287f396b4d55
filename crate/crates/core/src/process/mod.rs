//! Process tensors: trajectory sampling, exact outcome probabilities and the
//! Choi state.
//!
//! Internally every register is reordered so that the system qubits lead;
//! a basis index is then `s * d_e + e`.

mod choi;

pub use choi::{
    born_probability, born_rule_contract, build_choi, extract_stochastic_map, ChoiState, LegLayout, StochasticMap,
    MAX_CHOI_QUBITS,
};

use crate::error::{Error, Result};
use crate::instruments::{self, Instrument, InstrumentSchedule};
use crate::linalg::{
    eigh, permutation_table, permute_qubits, permute_qubits_vec, ComplexMatrix, DensityOperator, StateVector, C64,
    VALIDATION_TOL, ZERO,
};
use crate::rng::RngStream;

/// Largest register accepted for dense system-environment unitaries.
pub const MAX_DENSE_QUBITS: usize = 12;
/// Largest register accepted for permutation or diagonal unitaries.
pub const MAX_STRUCTURED_QUBITS: usize = 24;
/// Trajectories whose probability drops below this are aborted.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// A unitary on the full system-environment register.
#[derive(Clone, Debug, PartialEq)]
pub enum SeUnitary {
    Dense(ComplexMatrix),
    /// Basis permutation `|y⟩ ↦ |perm[y]⟩`.
    Permutation(Vec<usize>),
    /// Diagonal phases.
    Diagonal(Vec<C64>),
}

impl SeUnitary {
    pub fn dim(&self) -> usize {
        match self {
            SeUnitary::Dense(m) => m.rows(),
            SeUnitary::Permutation(p) => p.len(),
            SeUnitary::Diagonal(d) => d.len(),
        }
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        match self {
            SeUnitary::Dense(m) => m.clone(),
            SeUnitary::Permutation(p) => {
                let mut m = ComplexMatrix::zeros(p.len(), p.len());
                for (y, &py) in p.iter().enumerate() {
                    m[(py, y)] = C64::new(1.0, 0.0);
                }
                m
            }
            SeUnitary::Diagonal(d) => ComplexMatrix::from_diagonal(d),
        }
    }

    fn validate(&self, dim: usize, rng_seed: u64) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch(format!("unitary of dimension {} on a {dim}-dim register", self.dim())));
        }
        match self {
            SeUnitary::Dense(m) => {
                if !m.is_square() {
                    return Err(Error::DimensionMismatch("unitary must be square".into()));
                }
                let err = if dim <= 256 {
                    m.unitarity_error()
                } else {
                    // Norm-preservation probe; O(d^2) instead of O(d^3).
                    let mut rng = RngStream::new(rng_seed, 0x5EED);
                    let v: Vec<C64> = (0..dim).map(|_| rng.complex_normal()).collect();
                    let n0: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                    let n1: f64 = m.apply(&v)?.iter().map(|z| z.norm_sqr()).sum();
                    (n1 / n0 - 1.0).abs()
                };
                if err > VALIDATION_TOL * 10.0 {
                    return Err(Error::InvalidArgument(format!("unitary deviates from unitarity by {err:e}")));
                }
            }
            SeUnitary::Permutation(p) => {
                let mut seen = vec![false; p.len()];
                for &y in p {
                    if y >= p.len() || std::mem::replace(&mut seen[y], true) {
                        return Err(Error::InvalidArgument("permutation is not a bijection".into()));
                    }
                }
            }
            SeUnitary::Diagonal(d) => {
                if d.iter().any(|z| (z.norm() - 1.0).abs() > VALIDATION_TOL) {
                    return Err(Error::InvalidArgument("diagonal entries must have unit modulus".into()));
                }
            }
        }
        Ok(())
    }

    /// Same operator with register qubits reordered (output qubit `q` is input qubit `perm[q]`).
    fn permuted(&self, qubit_perm: &[usize]) -> Result<SeUnitary> {
        if qubit_perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let t = permutation_table(qubit_perm)?;
        Ok(match self {
            SeUnitary::Dense(m) => SeUnitary::Dense(permute_qubits(m, qubit_perm)?),
            SeUnitary::Permutation(p) => {
                let mut inv = vec![0; t.len()];
                for (i, &ti) in t.iter().enumerate() {
                    inv[ti] = i;
                }
                SeUnitary::Permutation((0..t.len()).map(|j| inv[p[t[j]]]).collect())
            }
            SeUnitary::Diagonal(d) => SeUnitary::Diagonal(t.iter().map(|&i| d[i]).collect()),
        })
    }
}

/// Initial system-environment state.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Pure(StateVector),
    Mixed(DensityOperator),
}

impl InitialState {
    pub fn num_qubits(&self) -> usize {
        match self {
            InitialState::Pure(s) => s.num_qubits(),
            InitialState::Mixed(r) => r.num_qubits(),
        }
    }

    pub fn density_matrix(&self) -> ComplexMatrix {
        match self {
            InitialState::Pure(s) => s.to_density().into_matrix(),
            InitialState::Mixed(r) => r.matrix().clone(),
        }
    }

    fn permuted(&self, qubit_perm: &[usize]) -> Result<InitialState> {
        Ok(match self {
            InitialState::Pure(s) => InitialState::Pure(StateVector::new(permute_qubits_vec(s.amplitudes(), qubit_perm)?)?),
            InitialState::Mixed(r) => InitialState::Mixed(DensityOperator::new(permute_qubits(r.matrix(), qubit_perm)?)?),
        })
    }
}

/// Dense unitary in split real/imaginary column-major storage.
#[derive(Clone, Debug)]
struct DenseKernel {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl DenseKernel {
    fn new(m: &ComplexMatrix) -> Self {
        let dim = m.rows();
        let mut re = vec![0.0; dim * dim];
        let mut im = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let z = m[(i, j)];
                re[j * dim + i] = z.re;
                im[j * dim + i] = z.im;
            }
        }
        Self { dim, re, im }
    }

    fn to_matrix(&self) -> ComplexMatrix {
        let d = self.dim;
        ComplexMatrix::from_fn(d, d, |i, j| C64::new(self.re[j * d + i], self.im[j * d + i]))
    }

    /// `out = U psi`, skipping zero amplitudes of `psi`.
    fn apply(&self, pre: &[f64], pim: &[f64], ore: &mut [f64], oim: &mut [f64]) {
        let d = self.dim;
        ore.fill(0.0);
        oim.fill(0.0);
        for j in 0..d {
            let (xr, xi) = (pre[j], pim[j]);
            if xr == 0.0 && xi == 0.0 {
                continue;
            }
            let cr = &self.re[j * d..(j + 1) * d];
            let ci = &self.im[j * d..(j + 1) * d];
            for (((or, oi), &ur), &ui) in ore.iter_mut().zip(oim.iter_mut()).zip(cr).zip(ci) {
                *or += ur * xr - ui * xi;
                *oi += ur * xi + ui * xr;
            }
        }
    }
}

/// System-first form of one step's unitary.
#[derive(Clone, Debug)]
enum Kernel {
    Dense(DenseKernel),
    Permutation(Vec<usize>),
    Diagonal(Vec<C64>),
}

impl Kernel {
    fn from_unitary(u: SeUnitary) -> Self {
        match u {
            SeUnitary::Dense(m) => Kernel::Dense(DenseKernel::new(&m)),
            SeUnitary::Permutation(p) => Kernel::Permutation(p),
            SeUnitary::Diagonal(d) => Kernel::Diagonal(d),
        }
    }

    fn to_unitary(&self) -> SeUnitary {
        match self {
            Kernel::Dense(k) => SeUnitary::Dense(k.to_matrix()),
            Kernel::Permutation(p) => SeUnitary::Permutation(p.clone()),
            Kernel::Diagonal(d) => SeUnitary::Diagonal(d.clone()),
        }
    }

    fn apply_soa(&self, re: &mut Vec<f64>, im: &mut Vec<f64>, tre: &mut Vec<f64>, tim: &mut Vec<f64>) {
        match self {
            Kernel::Dense(k) => {
                k.apply(re, im, tre, tim);
                std::mem::swap(re, tre);
                std::mem::swap(im, tim);
            }
            Kernel::Permutation(p) => {
                for (y, &py) in p.iter().enumerate() {
                    tre[py] = re[y];
                    tim[py] = im[y];
                }
                std::mem::swap(re, tre);
                std::mem::swap(im, tim);
            }
            Kernel::Diagonal(d) => {
                for ((r, i), z) in re.iter_mut().zip(im.iter_mut()).zip(d) {
                    let (a, b) = (*r, *i);
                    *r = a * z.re - b * z.im;
                    *i = a * z.im + b * z.re;
                }
            }
        }
    }

    fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        match self {
            Kernel::Dense(k) => {
                let re: Vec<f64> = v.iter().map(|z| z.re).collect();
                let im: Vec<f64> = v.iter().map(|z| z.im).collect();
                let mut ore = vec![0.0; v.len()];
                let mut oim = vec![0.0; v.len()];
                k.apply(&re, &im, &mut ore, &mut oim);
                ore.into_iter().zip(oim).map(|(r, i)| C64::new(r, i)).collect()
            }
            Kernel::Permutation(p) => {
                let mut out = vec![ZERO; v.len()];
                for (y, &py) in p.iter().enumerate() {
                    out[py] = v[y];
                }
                out
            }
            Kernel::Diagonal(d) => v.iter().zip(d).map(|(a, b)| a * b).collect(),
        }
    }

    fn apply_density(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        match self {
            Kernel::Dense(k) => k.to_matrix().conjugate(rho).expect("dimensions checked at construction"),
            Kernel::Permutation(p) => {
                let d = p.len();
                let mut out = ComplexMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        out[(p[i], p[j])] = rho[(i, j)];
                    }
                }
                out
            }
            Kernel::Diagonal(dg) => {
                ComplexMatrix::from_fn(rho.rows(), rho.cols(), |i, j| dg[i] * rho[(i, j)] * dg[j].conj())
            }
        }
    }
}

/// Operational description of a process: initial state, dilated unitaries and
/// which qubits form the system.
#[derive(Clone, Debug)]
pub struct ProcessSpec {
    num_qubits: usize,
    system_qubits: Vec<usize>,
    env_qubits: Vec<usize>,
    times: Vec<f64>,
    /// Register order used internally: system qubits first.
    order: Vec<usize>,
    initial: InitialState,
    kernels: Vec<Kernel>,
}

impl ProcessSpec {
    /// `unitaries[j]` is `U_{j+1:j}`; `times` defaults to `0, 1, …, k`.
    pub fn new(
        system_qubits: Vec<usize>,
        initial: InitialState,
        unitaries: Vec<SeUnitary>,
        times: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = initial.num_qubits();
        if unitaries.is_empty() {
            return Err(Error::InvalidArgument("a process needs at least one step".into()));
        }
        if system_qubits.is_empty() || system_qubits.len() >= n + 1 {
            return Err(Error::InvalidQubits(format!("system {system_qubits:?} in a {n}-qubit register")));
        }
        let mut sorted = system_qubits.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != system_qubits.len() || sorted.iter().any(|&q| q >= n) {
            return Err(Error::InvalidQubits(format!("system {system_qubits:?} in a {n}-qubit register")));
        }
        let all_structured = unitaries.iter().all(|u| !matches!(u, SeUnitary::Dense(_)));
        let cap = if all_structured { MAX_STRUCTURED_QUBITS } else { MAX_DENSE_QUBITS };
        if n > cap {
            return Err(Error::DimensionCap { qubits: n, limit: cap });
        }
        let dim = 1usize << n;
        for (j, u) in unitaries.iter().enumerate() {
            u.validate(dim, j as u64)?;
        }
        let k = unitaries.len();
        let times = times.unwrap_or_else(|| (0..=k).map(|t| t as f64).collect());
        if times.len() != k + 1 || times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("need {} increasing time labels", k + 1)));
        }
        let env_qubits: Vec<usize> = (0..n).filter(|q| !system_qubits.contains(q)).collect();
        let order: Vec<usize> = system_qubits.iter().chain(&env_qubits).copied().collect();
        let initial = initial.permuted(&order)?;
        let kernels = unitaries
            .into_iter()
            .map(|u| u.permuted(&order).map(Kernel::from_unitary))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { num_qubits: n, system_qubits, env_qubits, times, order, initial, kernels })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_steps(&self) -> usize {
        self.kernels.len()
    }

    pub fn system_qubits(&self) -> &[usize] {
        &self.system_qubits
    }

    pub fn env_qubits(&self) -> &[usize] {
        &self.env_qubits
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn system_dim(&self) -> usize {
        1 << self.system_qubits.len()
    }

    pub fn env_dim(&self) -> usize {
        1 << self.env_qubits.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    /// Initial state with system qubits leading.
    pub fn initial_system_first(&self) -> &InitialState {
        &self.initial
    }

    /// Step unitary `U_{j+1:j}` with system qubits leading.
    pub fn unitary_system_first(&self, j: usize) -> SeUnitary {
        self.kernels[j].to_unitary()
    }

    /// Step unitary in the register's own qubit order.
    pub fn unitary(&self, j: usize) -> Result<SeUnitary> {
        let mut inv = vec![0; self.order.len()];
        for (pos, &q) in self.order.iter().enumerate() {
            inv[q] = pos;
        }
        self.kernels[j].to_unitary().permuted(&inv)
    }

    /// Initial state in the register's own qubit order.
    pub fn initial_state(&self) -> Result<InitialState> {
        let mut inv = vec![0; self.order.len()];
        for (pos, &q) in self.order.iter().enumerate() {
            inv[q] = pos;
        }
        self.initial.permuted(&inv)
    }

    fn check_schedule<S: InstrumentSchedule + ?Sized>(&self, schedule: &S) -> Result<()> {
        if schedule.num_slots() != self.num_steps() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} instrument slots for a {}-step process (need k + 1)",
                schedule.num_slots(),
                self.num_steps()
            )));
        }
        let inst = schedule.instrument(0, &[]);
        if inst.d_in() != self.system_dim() || inst.d_out() != self.system_dim() {
            return Err(Error::DimensionMismatch(format!(
                "instrument on dimension {} for a {}-dim system",
                inst.d_in(),
                self.system_dim()
            )));
        }
        Ok(())
    }
}

/// One sampled trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub outcomes: Vec<u8>,
    pub probability: f64,
    pub instrument_names: Vec<String>,
}

// ---------------------------------------------------------------------------
// Exact evaluation on pure or mixed states
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum State {
    Pure(Vec<C64>),
    Mixed(ComplexMatrix),
}

impl State {
    fn initial(spec: &ProcessSpec) -> Self {
        match &spec.initial {
            InitialState::Pure(s) => State::Pure(s.amplitudes().to_vec()),
            InitialState::Mixed(r) => State::Mixed(r.matrix().clone()),
        }
    }

    fn evolve(&self, kernel: &Kernel) -> Self {
        match self {
            State::Pure(v) => State::Pure(kernel.apply_vec(v)),
            State::Mixed(r) => State::Mixed(kernel.apply_density(r)),
        }
    }

    fn weight(&self) -> f64 {
        match self {
            State::Pure(v) => v.iter().map(|z| z.norm_sqr()).sum(),
            State::Mixed(r) => r.trace().re,
        }
    }

    /// Applies the outcome's Kraus operators on the system; unnormalized.
    fn apply_outcome(&self, kraus: &[ComplexMatrix], d_s: usize, d_e: usize) -> Self {
        match self {
            State::Pure(v) => {
                assert_eq!(kraus.len(), 1, "pure evaluation needs single-Kraus outcomes");
                State::Pure(apply_system_op_vec(&kraus[0], v, d_s, d_e))
            }
            State::Mixed(r) => {
                let d = d_s * d_e;
                let mut out = ComplexMatrix::zeros(d, d);
                for k in kraus {
                    out = &out + &apply_system_op_density(k, r, d_s, d_e);
                }
                State::Mixed(out)
            }
        }
    }

    fn to_mixed(&self) -> Self {
        match self {
            State::Pure(v) => State::Mixed(ComplexMatrix::outer(v, v)),
            State::Mixed(_) => self.clone(),
        }
    }
}

fn apply_system_op_vec(k: &ComplexMatrix, v: &[C64], d_s: usize, d_e: usize) -> Vec<C64> {
    let mut out = vec![ZERO; d_s * d_e];
    for a in 0..d_s {
        for b in 0..d_s {
            let c = k[(a, b)];
            if c == ZERO {
                continue;
            }
            for e in 0..d_e {
                out[a * d_e + e] += c * v[b * d_e + e];
            }
        }
    }
    out
}

/// `(K ⊗ I) rho (K ⊗ I)^dagger` using the block structure.
fn apply_system_op_density(k: &ComplexMatrix, rho: &ComplexMatrix, d_s: usize, d_e: usize) -> ComplexMatrix {
    let d = d_s * d_e;
    // left multiply
    let mut tmp = ComplexMatrix::zeros(d, d);
    for a in 0..d_s {
        for b in 0..d_s {
            let c = k[(a, b)];
            if c == ZERO {
                continue;
            }
            for e in 0..d_e {
                let src = rho.row(b * d_e + e).to_vec();
                let dst = &mut tmp.as_mut_slice()[(a * d_e + e) * d..][..d];
                for (o, x) in dst.iter_mut().zip(src) {
                    *o += c * x;
                }
            }
        }
    }
    // right multiply by K^dagger
    let mut out = ComplexMatrix::zeros(d, d);
    for row in 0..d {
        let src = tmp.row(row).to_vec();
        let dst = &mut out.as_mut_slice()[row * d..][..d];
        for c in 0..d_s {
            for b in 0..d_s {
                let kc = k[(c, b)].conj();
                if kc == ZERO {
                    continue;
                }
                for e in 0..d_e {
                    dst[c * d_e + e] += src[b * d_e + e] * kc;
                }
            }
        }
    }
    out
}

fn use_pure_path<S: InstrumentSchedule + ?Sized>(spec: &ProcessSpec, schedule: &S) -> bool {
    matches!(spec.initial, InitialState::Pure(_)) && schedule.is_pure()
}

/// Exact probability of an outcome string (evaluated branch by branch).
pub fn trajectory_probability<S: InstrumentSchedule + ?Sized>(spec: &ProcessSpec, schedule: &S, outcomes: &[u8]) -> Result<f64> {
    spec.check_schedule(schedule)?;
    let k = spec.num_steps();
    if outcomes.len() != k + 1 {
        return Err(Error::DimensionMismatch(format!("{} outcomes for {} slots", outcomes.len(), k + 1)));
    }
    let (d_s, d_e) = (spec.system_dim(), spec.env_dim());
    let mut state = State::initial(spec);
    if !use_pure_path(spec, schedule) {
        state = state.to_mixed();
    }
    for slot in 0..=k {
        if slot > 0 {
            state = state.evolve(&spec.kernels[slot - 1]);
        }
        let inst = schedule.instrument(slot, &outcomes[..slot]);
        let x = outcomes[slot] as usize;
        let map = inst.outcomes().get(x).ok_or_else(|| {
            Error::InvalidArgument(format!("outcome {x} out of range for instrument {:?}", inst.name()))
        })?;
        state = state.apply_outcome(map.kraus(), d_s, d_e);
    }
    Ok(state.weight().max(0.0))
}

/// Probabilities of every outcome string, by exhaustive branching.
pub fn outcome_distribution<S: InstrumentSchedule + ?Sized>(spec: &ProcessSpec, schedule: &S) -> Result<Vec<(Vec<u8>, f64)>> {
    spec.check_schedule(schedule)?;
    let (d_s, d_e) = (spec.system_dim(), spec.env_dim());
    let mut state = State::initial(spec);
    if !use_pure_path(spec, schedule) {
        state = state.to_mixed();
    }
    let mut out = Vec::new();
    let mut history = Vec::new();
    branch(spec, schedule, 0, &state, &mut history, d_s, d_e, &mut out);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn branch<S: InstrumentSchedule + ?Sized>(
    spec: &ProcessSpec,
    schedule: &S,
    slot: usize,
    state: &State,
    history: &mut Vec<u8>,
    d_s: usize,
    d_e: usize,
    out: &mut Vec<(Vec<u8>, f64)>,
) {
    let evolved = if slot > 0 { state.evolve(&spec.kernels[slot - 1]) } else { state.clone() };
    let inst = schedule.instrument(slot, history);
    for (x, map) in inst.outcomes().iter().enumerate() {
        let next = evolved.apply_outcome(map.kraus(), d_s, d_e);
        history.push(x as u8);
        if slot == spec.num_steps() {
            out.push((history.clone(), next.weight().max(0.0)));
        } else {
            branch(spec, schedule, slot + 1, &next, history, d_s, d_e, out);
        }
        history.pop();
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Reusable trajectory sampler; one per thread.
pub struct TrajectorySampler<'a, S: InstrumentSchedule + ?Sized> {
    spec: &'a ProcessSpec,
    schedule: &'a S,
    pure: bool,
    re: Vec<f64>,
    im: Vec<f64>,
    tre: Vec<f64>,
    tim: Vec<f64>,
    init_re: Vec<f64>,
    init_im: Vec<f64>,
    /// Eigen-decomposition of a mixed initial state, used when the schedule is pure.
    mixture: Option<(Vec<f64>, Vec<Vec<C64>>)>,
}

impl<'a, S: InstrumentSchedule + ?Sized> TrajectorySampler<'a, S> {
    pub fn new(spec: &'a ProcessSpec, schedule: &'a S) -> Result<Self> {
        spec.check_schedule(schedule)?;
        let d = spec.dim();
        let (init_re, init_im, mixture) = match &spec.initial {
            InitialState::Pure(s) => (
                s.amplitudes().iter().map(|z| z.re).collect(),
                s.amplitudes().iter().map(|z| z.im).collect(),
                None,
            ),
            InitialState::Mixed(r) if schedule.is_pure() && d <= 1024 => {
                let (vals, vecs) = eigh(r.matrix())?;
                let weights: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
                let cols = (0..d).map(|j| vecs.column(j)).collect();
                (vec![0.0; d], vec![0.0; d], Some((weights, cols)))
            }
            InitialState::Mixed(_) => (vec![], vec![], None),
        };
        let pure = schedule.is_pure() && (matches!(spec.initial, InitialState::Pure(_)) || mixture.is_some());
        Ok(Self {
            spec,
            schedule,
            pure,
            re: vec![0.0; d],
            im: vec![0.0; d],
            tre: vec![0.0; d],
            tim: vec![0.0; d],
            init_re,
            init_im,
            mixture,
        })
    }

    /// Samples one outcome string and returns it with its exact probability.
    pub fn sample(&mut self, rng: &mut RngStream) -> Result<(Vec<u8>, f64)> {
        if !self.pure {
            return self.sample_mixed(rng);
        }
        let (outcomes, prob) = self.sample_pure(rng)?;
        if self.mixture.is_some() {
            // Sampling went through one eigenvector of the initial state; the
            // reported probability must average over the whole mixture.
            let p = trajectory_probability(self.spec, self.schedule, &outcomes)?;
            return Ok((outcomes, p));
        }
        Ok((outcomes, prob))
    }

    fn sample_pure(&mut self, rng: &mut RngStream) -> Result<(Vec<u8>, f64)> {
        let spec = self.spec;
        let (d_s, d_e) = (spec.system_dim(), spec.env_dim());
        let k = spec.num_steps();
        if let Some((weights, vecs)) = &self.mixture {
            let i = rng.categorical(weights, weights.iter().sum());
            for (j, z) in vecs[i].iter().enumerate() {
                self.re[j] = z.re;
                self.im[j] = z.im;
            }
        } else {
            self.re.copy_from_slice(&self.init_re);
            self.im.copy_from_slice(&self.init_im);
        }
        let mut outcomes = Vec::with_capacity(k + 1);
        let mut prob = 1.0f64;
        for slot in 0..=k {
            if slot > 0 {
                spec.kernels[slot - 1].apply_soa(&mut self.re, &mut self.im, &mut self.tre, &mut self.tim);
            }
            let inst = self.schedule.instrument(slot, &outcomes);
            let x = self.measure_pure(&inst, d_s, d_e, rng, &mut prob);
            if prob < WEIGHT_FLOOR {
                return Err(Error::WeightUnderflow { slot, weight: prob });
            }
            outcomes.push(x);
        }
        Ok((outcomes, prob))
    }

    /// Samples an outcome of `inst` on the current pure state, collapses it
    /// and multiplies `prob` by the outcome probability.
    fn measure_pure(&mut self, inst: &Instrument, d_s: usize, d_e: usize, rng: &mut RngStream, prob: &mut f64) -> u8 {
        let n_out = inst.num_outcomes();
        let x = if n_out == 1 {
            0
        } else {
            // reduced system operator r[b][d] = Σ_e ψ[b,e] ψ*[d,e]
            let mut red = vec![ZERO; d_s * d_s];
            for b in 0..d_s {
                for d in b..d_s {
                    let mut s = ZERO;
                    for e in 0..d_e {
                        let (i, j) = (b * d_e + e, d * d_e + e);
                        s += C64::new(self.re[i], self.im[i]) * C64::new(self.re[j], -self.im[j]);
                    }
                    red[b * d_s + d] = s;
                    red[d * d_s + b] = s.conj();
                }
            }
            let weights: Vec<f64> = inst
                .outcomes()
                .iter()
                .map(|m| {
                    let k = &m.kraus()[0];
                    // Tr(K r K†)
                    let mut w = 0.0;
                    for a in 0..d_s {
                        for b in 0..d_s {
                            for d in 0..d_s {
                                w += (k[(a, b)] * red[b * d_s + d] * k[(a, d)].conj()).re;
                            }
                        }
                    }
                    w.max(0.0)
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let x = rng.categorical(&weights, total);
            *prob *= weights[x] / total;
            x
        };
        let k = &inst.outcomes()[x].kraus()[0];
        self.tre.fill(0.0);
        self.tim.fill(0.0);
        for a in 0..d_s {
            for b in 0..d_s {
                let c = k[(a, b)];
                if c == ZERO {
                    continue;
                }
                for e in 0..d_e {
                    let (src, dst) = (b * d_e + e, a * d_e + e);
                    let (r, i) = (self.re[src], self.im[src]);
                    self.tre[dst] += c.re * r - c.im * i;
                    self.tim[dst] += c.re * i + c.im * r;
                }
            }
        }
        std::mem::swap(&mut self.re, &mut self.tre);
        std::mem::swap(&mut self.im, &mut self.tim);
        let norm: f64 = self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).sum::<f64>().sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            self.re.iter_mut().for_each(|v| *v *= inv);
            self.im.iter_mut().for_each(|v| *v *= inv);
        }
        x as u8
    }

    fn sample_mixed(&mut self, rng: &mut RngStream) -> Result<(Vec<u8>, f64)> {
        let spec = self.spec;
        let (d_s, d_e) = (spec.system_dim(), spec.env_dim());
        let k = spec.num_steps();
        let mut state = State::initial(spec).to_mixed();
        let mut outcomes = Vec::with_capacity(k + 1);
        let mut prob = 1.0f64;
        for slot in 0..=k {
            if slot > 0 {
                state = state.evolve(&spec.kernels[slot - 1]);
            }
            let inst = self.schedule.instrument(slot, &outcomes);
            let branches: Vec<State> = inst
                .outcomes()
                .iter()
                .map(|m| state.apply_outcome(m.kraus(), d_s, d_e))
                .collect();
            let weights: Vec<f64> = branches.iter().map(|b| b.weight().max(0.0)).collect();
            let total: f64 = weights.iter().sum();
            let x = rng.categorical(&weights, total);
            prob *= weights[x] / total;
            if prob < WEIGHT_FLOOR {
                return Err(Error::WeightUnderflow { slot, weight: prob });
            }
            state = match branches.into_iter().nth(x).expect("sampled index in range") {
                State::Mixed(r) => State::Mixed(r.scale_real(1.0 / weights[x])),
                State::Pure(_) => unreachable!("mixed path"),
            };
            outcomes.push(x as u8);
        }
        Ok((outcomes, prob))
    }
}

/// Samples one trajectory, recording instrument names.
pub fn sample_trajectory<S: InstrumentSchedule + ?Sized>(
    spec: &ProcessSpec,
    schedule: &S,
    rng: &mut RngStream,
) -> Result<TrajectoryRecord> {
    let mut sampler = TrajectorySampler::new(spec, schedule)?;
    let (outcomes, probability) = sampler.sample(rng)?;
    let instrument_names = (0..outcomes.len())
        .map(|slot| schedule.instrument(slot, &outcomes[..slot]).name().to_string())
        .collect();
    Ok(TrajectoryRecord { outcomes, probability, instrument_names })
}

/// Process whose multi-time statistics reproduce the measurement statistics
/// of `state_prep |0…0⟩`: qubit 0 is the system and step `j` swaps it with
/// register qubit `j`. Measure every slot in the computational basis.
pub fn embed_state_sampling(state_prep: &ComplexMatrix) -> Result<ProcessSpec> {
    let n = state_prep.num_qubits()?;
    if n < 2 {
        return Err(Error::InvalidArgument("state embedding needs at least 2 qubits".into()));
    }
    let psi = state_prep.column(0);
    let initial = InitialState::Pure(StateVector::new(psi)?);
    let unitaries = (1..n)
        .map(|j| {
            let perm: Vec<usize> = (0..1usize << n)
                .map(|y| {
                    let b0 = (y >> (n - 1)) & 1;
                    let bj = (y >> (n - 1 - j)) & 1;
                    if b0 == bj {
                        y
                    } else {
                        y ^ (1 << (n - 1)) ^ (1 << (n - 1 - j))
                    }
                })
                .collect();
            SeUnitary::Permutation(perm)
        })
        .collect();
    ProcessSpec::new(vec![0], initial, unitaries, None)
}

/// Computational-basis measurement in all `slots` slots.
pub fn comp_basis_schedule(slots: usize) -> Vec<Instrument> {
    vec![instruments::comp_basis(); slots]
}

// ---------------------------------------------------------------------------
// Random instances for the trajectory / Choi cross-check
// ---------------------------------------------------------------------------

/// Outcome of comparing branch-wise trajectory probabilities with Choi contraction.
#[derive(Clone, Debug, PartialEq)]
pub struct BornCheckReport {
    pub instances: usize,
    pub max_abs_diff: f64,
    pub worst_instance: usize,
}

/// Random process with a single system qubit, `env` environment qubits and `k` steps.
pub fn random_spec(env: usize, k: usize, mixed: bool, rng: &mut RngStream) -> Result<ProcessSpec> {
    let n = env + 1;
    let d = 1usize << n;
    let initial = if mixed {
        let a = ComplexMatrix::from_fn(d, d, |_, _| rng.complex_normal());
        let rho = &a * &a.adjoint();
        let t = rho.trace().re;
        let rho = rho.scale_real(1.0 / t);
        let rho = (&rho + &rho.adjoint()).scale_real(0.5);
        InitialState::Mixed(DensityOperator::new(rho)?)
    } else {
        InitialState::Pure(StateVector::normalized((0..d).map(|_| rng.complex_normal()).collect())?)
    };
    let unitaries = (0..k)
        .map(|_| crate::ensembles::haar_unitary(d, rng).map(SeUnitary::Dense))
        .collect::<Result<Vec<_>>>()?;
    let system = (rng.uniform() * n as f64) as usize;
    ProcessSpec::new(vec![system.min(n - 1)], initial, unitaries, None)
}

/// Compares trajectory and Choi probabilities on `instances` random processes with
/// `env ≤ 2`, `k ≤ 3` and random instruments.
pub fn born_check(instances: usize, seed: u64) -> Result<BornCheckReport> {
    let root = RngStream::new(seed, 0);
    let mut report = BornCheckReport { instances, max_abs_diff: 0.0, worst_instance: 0 };
    for inst in 0..instances {
        let mut rng = root.substream(inst as u64);
        let env = 1 + (rng.uniform() * 2.0) as usize;
        let k = 1 + (rng.uniform() * 3.0) as usize;
        let mixed = rng.uniform() < 0.5;
        let spec = random_spec(env.min(2), k.min(3), mixed, &mut rng)?;
        let k = spec.num_steps();
        let schedule = (0..=k)
            .map(|_| {
                let outcomes = 1 + (rng.uniform() * 3.0) as usize;
                let rank = 1 + (rng.uniform() * 2.0) as usize;
                instruments::random_instrument(2, outcomes.min(3), rank.min(2), &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let choi = build_choi(&spec)?;
        let outcomes: Vec<u8> = schedule
            .iter()
            .map(|i| ((rng.uniform() * i.num_outcomes() as f64) as usize).min(i.num_outcomes() - 1) as u8)
            .collect();
        let p_traj = trajectory_probability(&spec, &schedule, &outcomes)?;
        let p_choi = born_probability(&choi, &schedule, &outcomes)?;
        let diff = (p_traj - p_choi).abs();
        if diff > report.max_abs_diff || !diff.is_finite() {
            report.max_abs_diff = if diff.is_finite() { diff } else { f64::INFINITY };
            report.worst_instance = inst;
        }
    }
    Ok(report)
}

/// Single-qubit unitary acting on the system with the environment untouched,
/// as a full-register unitary on a system-first layout.
pub fn system_only_unitary(u: &ComplexMatrix, env_qubits: usize) -> ComplexMatrix {
    crate::linalg::kron(u, &ComplexMatrix::identity(1 << env_qubits))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;
    use crate::linalg::kron;

    fn identity_spec(n: usize, k: usize) -> ProcessSpec {
        let d = 1 << n;
        ProcessSpec::new(
            vec![0],
            InitialState::Pure(StateVector::zero(n)),
            vec![SeUnitary::Dense(ComplexMatrix::identity(d)); k],
            None,
        )
        .unwrap()
    }

    #[test]
    fn identity_dynamics_all_zeros() {
        let spec = identity_spec(3, 3);
        let sched = comp_basis_schedule(4);
        let mut rng = RngStream::new(1, 0);
        for _ in 0..50 {
            let rec = sample_trajectory(&spec, &sched, &mut rng).unwrap();
            assert_eq!(rec.outcomes, vec![0; 4]);
            assert!((rec.probability - 1.0).abs() < 1e-15);
            assert_eq!(rec.instrument_names[0], "comp_basis");
        }
        assert!((trajectory_probability(&spec, &sched, &[0, 0, 0, 0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn probabilities_normalize() {
        let mut rng = RngStream::new(2, 0);
        for mixed in [false, true] {
            let spec = random_spec(2, 3, mixed, &mut rng).unwrap();
            let sched: Vec<Instrument> =
                (0..4).map(|_| instruments::random_instrument(2, 2, 2, &mut rng).unwrap()).collect();
            let dist = outcome_distribution(&spec, &sched).unwrap();
            assert_eq!(dist.len(), 16);
            let total: f64 = dist.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-10);
            for (x, p) in &dist {
                assert!((trajectory_probability(&spec, &sched, x).unwrap() - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_probability_matches_exact() {
        let mut rng = RngStream::new(3, 0);
        let spec = random_spec(2, 3, true, &mut rng).unwrap();
        let sched = comp_basis_schedule(4);
        let mut sampler = TrajectorySampler::new(&spec, &sched).unwrap();
        for _ in 0..20 {
            let (x, p) = sampler.sample(&mut rng).unwrap();
            assert!((trajectory_probability(&spec, &sched, &x).unwrap() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn system_position_is_respected() {
        // Only the last qubit flips; it is the system.
        let x_last = kron(&ComplexMatrix::identity(4), &gates::pauli_x());
        let spec = ProcessSpec::new(
            vec![2],
            InitialState::Pure(StateVector::zero(3)),
            vec![SeUnitary::Dense(x_last)],
            None,
        )
        .unwrap();
        let sched = comp_basis_schedule(2);
        assert!((trajectory_probability(&spec, &sched, &[0, 1]).unwrap() - 1.0).abs() < 1e-15);
        let back = spec.unitary(0).unwrap().to_dense();
        assert!(back.max_abs_diff(&kron(&ComplexMatrix::identity(4), &gates::pauli_x())) < 1e-15);
    }

    #[test]
    fn structured_unitaries_match_dense() {
        let mut rng = RngStream::new(4, 0);
        let perm: Vec<usize> = vec![3, 0, 2, 7, 5, 1, 4, 6];
        let diag: Vec<C64> = (0..8).map(|_| C64::from_polar(1.0, rng.uniform() * 6.0)).collect();
        let h = crate::ensembles::haar_unitary(8, &mut rng).unwrap();
        let structured = vec![
            SeUnitary::Dense(h.clone()),
            SeUnitary::Permutation(perm.clone()),
            SeUnitary::Diagonal(diag.clone()),
            SeUnitary::Dense(h.clone()),
        ];
        let dense: Vec<SeUnitary> = structured.iter().map(|u| SeUnitary::Dense(u.to_dense())).collect();
        let init = InitialState::Pure(StateVector::zero(3));
        for sys in 0..3 {
            let a = ProcessSpec::new(vec![sys], init.clone(), structured.clone(), None).unwrap();
            let b = ProcessSpec::new(vec![sys], init.clone(), dense.clone(), None).unwrap();
            let sched = vec![instruments::x_basis_prepare_plus(); 5];
            let da = outcome_distribution(&a, &sched).unwrap();
            let db = outcome_distribution(&b, &sched).unwrap();
            for ((_, p), (_, q)) in da.iter().zip(&db) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let init = InitialState::Pure(StateVector::zero(2));
        assert!(ProcessSpec::new(vec![0], init.clone(), vec![], None).is_err());
        assert!(ProcessSpec::new(vec![2], init.clone(), vec![SeUnitary::Dense(ComplexMatrix::identity(4))], None).is_err());
        let bad = ComplexMatrix::identity(4).scale_real(2.0);
        assert!(ProcessSpec::new(vec![0], init.clone(), vec![SeUnitary::Dense(bad)], None).is_err());
        assert!(ProcessSpec::new(vec![0], init.clone(), vec![SeUnitary::Permutation(vec![0, 0, 1, 2])], None).is_err());
        let spec = identity_spec(2, 2);
        assert!(trajectory_probability(&spec, &comp_basis_schedule(2), &[0, 0]).is_err());
        assert!(trajectory_probability(&spec, &comp_basis_schedule(3), &[0, 0]).is_err());
    }

    #[test]
    fn embedding_identity_gives_zeros() {
        let spec = embed_state_sampling(&ComplexMatrix::identity(8)).unwrap();
        assert_eq!(spec.num_steps(), 2);
        let sched = comp_basis_schedule(3);
        assert!((trajectory_probability(&spec, &sched, &[0, 0, 0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn embedding_matches_statevector() {
        let mut rng = RngStream::new(5, 0);
        let u = crate::ensembles::haar_unitary(8, &mut rng).unwrap();
        let spec = embed_state_sampling(&u).unwrap();
        let sched = comp_basis_schedule(3);
        for (x, p) in outcome_distribution(&spec, &sched).unwrap() {
            let idx = crate::linalg::bits_to_index(&x);
            assert!((p - u[(idx, 0)].norm_sqr()).abs() < 1e-10);
        }
    }
}
