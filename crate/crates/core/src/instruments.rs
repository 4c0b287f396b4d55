//! Completely positive maps, instruments and their Choi matrices.
//!
//! Choi matrices use the unnormalized convention
//! `Â = Σ_K (K ⊗ I) |ψ⁺⟩⟨ψ⁺| (K† ⊗ I)` with `|ψ⁺⟩ = Σ_i |ii⟩`, so the
//! output leg is the leading factor and entry `((a, i), (c, j))` sits at row
//! `a * d_in + i`, column `c * d_in + j`.

use std::borrow::Cow;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::ensembles::haar_isometry_columns;
use crate::error::{Error, Result};
use crate::gates;
use crate::linalg::{eigh, eigvalsh, expm_hermitian, ComplexMatrix, DensityOperator, C64, ONE, VALIDATION_TOL, ZERO};
use crate::rng::RngStream;

/// Kraus-form CP map with an outcome label.
#[derive(Clone, Debug, PartialEq)]
pub struct CpMap {
    kraus: Vec<ComplexMatrix>,
    label: String,
}

impl CpMap {
    /// Validates shapes and trace non-increase (`Σ K†K ≤ I`).
    pub fn new(kraus: Vec<ComplexMatrix>, label: impl Into<String>) -> Result<Self> {
        let map = Self::new_unchecked(kraus, label)?;
        let slack = &ComplexMatrix::identity(map.d_in()) - &map.kraus_sum();
        let min = eigvalsh(&slack)?[0];
        if min < -VALIDATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "map {:?} increases trace (min eigenvalue of I - ΣK†K = {min:e})",
                map.label
            )));
        }
        Ok(map)
    }

    fn new_unchecked(kraus: Vec<ComplexMatrix>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("map {label:?} has no Kraus operators")))?;
        let shape = (first.rows(), first.cols());
        if kraus.iter().any(|k| (k.rows(), k.cols()) != shape) {
            return Err(Error::DimensionMismatch(format!("Kraus operators of map {label:?} differ in shape")));
        }
        Ok(Self { kraus, label })
    }

    pub fn unitary(u: ComplexMatrix, label: impl Into<String>) -> Result<Self> {
        if u.unitarity_error() > VALIDATION_TOL {
            return Err(Error::InvalidArgument("matrix is not unitary".into()));
        }
        Self::new_unchecked(vec![u], label)
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn d_in(&self) -> usize {
        self.kraus[0].cols()
    }

    pub fn d_out(&self) -> usize {
        self.kraus[0].rows()
    }

    /// `Σ K†K`.
    pub fn kraus_sum(&self) -> ComplexMatrix {
        let d = self.d_in();
        self.kraus
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, k| &acc + &(&k.adjoint() * k))
    }

    /// `(Σ K ρ K†, Tr[Σ K ρ K†])` on a raw matrix.
    pub fn apply_matrix(&self, rho: &ComplexMatrix) -> Result<(ComplexMatrix, f64)> {
        if rho.rows() != self.d_in() || rho.cols() != self.d_in() {
            return Err(Error::DimensionMismatch(format!(
                "map on dimension {} applied to {}x{} operator",
                self.d_in(),
                rho.rows(),
                rho.cols()
            )));
        }
        let d = self.d_out();
        let mut out = ComplexMatrix::zeros(d, d);
        for k in &self.kraus {
            out = &out + &k.conjugate(rho)?;
        }
        let w = out.trace().re;
        Ok((out, w))
    }
}

/// Applies `map` to a state; returns the unnormalized output and its weight.
pub fn apply(map: &CpMap, rho: &DensityOperator) -> Result<(ComplexMatrix, f64)> {
    map.apply_matrix(rho.matrix())
}

/// Choi matrix of one CP map (unnormalized convention).
pub fn choi_of(map: &CpMap) -> ComplexMatrix {
    let (d_out, d_in) = (map.d_out(), map.d_in());
    let dim = d_out * d_in;
    let mut choi = ComplexMatrix::zeros(dim, dim);
    for k in &map.kraus {
        // vec(K)[(a, i)] = K[a, i]; row-major storage already is this vector.
        let v = k.as_slice();
        for r in 0..dim {
            if v[r] == ZERO {
                continue;
            }
            for c in 0..dim {
                choi[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    choi
}

/// Applies a map given by its Choi matrix: `ρ'[a,c] = Σ_{b,d} Â[(a,b),(c,d)] ρ[b,d]`.
pub fn apply_choi(choi: &ComplexMatrix, d_out: usize, d_in: usize, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if choi.rows() != d_out * d_in || rho.rows() != d_in {
        return Err(Error::DimensionMismatch("Choi/state dimensions disagree".into()));
    }
    Ok(ComplexMatrix::from_fn(d_out, d_out, |a, c| {
        let mut s = ZERO;
        for b in 0..d_in {
            for d in 0..d_in {
                s += choi[(a * d_in + b, c * d_in + d)] * rho[(b, d)];
            }
        }
        s
    }))
}

/// Kraus operators recovered from a PSD Choi matrix.
pub fn kraus_from_choi(choi: &ComplexMatrix, d_out: usize, d_in: usize, label: &str) -> Result<CpMap> {
    if choi.rows() != d_out * d_in || !choi.is_square() {
        return Err(Error::DimensionMismatch("Choi dimension is not d_out * d_in".into()));
    }
    let (vals, vecs) = eigh(choi)?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut kraus = Vec::new();
    for (idx, &lam) in vals.iter().enumerate() {
        if lam < -1e-8 * scale {
            return Err(Error::InvalidArgument(format!("Choi matrix has negative eigenvalue {lam:e}")));
        }
        if lam <= 1e-12 * scale {
            continue;
        }
        let s = lam.sqrt();
        kraus.push(ComplexMatrix::from_fn(d_out, d_in, |a, i| vecs[(a * d_in + i, idx)] * s));
    }
    if kraus.is_empty() {
        kraus.push(ComplexMatrix::zeros(d_out, d_in));
    }
    CpMap::new_unchecked(kraus, label)
}

/// Choi matrices of every outcome of an instrument.
#[derive(Clone, Debug, PartialEq)]
pub struct InstrumentChoi {
    pub d_in: usize,
    pub d_out: usize,
    pub outcomes: Vec<ComplexMatrix>,
}

impl InstrumentChoi {
    pub fn total(&self) -> ComplexMatrix {
        let dim = self.d_in * self.d_out;
        self.outcomes.iter().fold(ComplexMatrix::zeros(dim, dim), |acc, m| &acc + m)
    }
}

/// A trace-preserving collection of CP maps; outcome `x` is map `outcomes[x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Instrument {
    name: String,
    outcomes: Vec<CpMap>,
}

impl Instrument {
    pub fn new(name: impl Into<String>, outcomes: Vec<CpMap>) -> Result<Self> {
        let name = name.into();
        let first = outcomes
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("instrument {name:?} has no outcomes")))?;
        if outcomes.len() > 256 {
            return Err(Error::InvalidArgument("at most 256 outcomes are supported".into()));
        }
        let (d_in, d_out) = (first.d_in(), first.d_out());
        if outcomes.iter().any(|m| m.d_in() != d_in || m.d_out() != d_out) {
            return Err(Error::DimensionMismatch(format!("outcomes of {name:?} differ in dimension")));
        }
        let total = outcomes
            .iter()
            .fold(ComplexMatrix::zeros(d_in, d_in), |acc, m| &acc + &m.kraus_sum());
        let err = total.max_abs_diff(&ComplexMatrix::identity(d_in));
        if err > VALIDATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "instrument {name:?} is not trace preserving (deviation {err:e})"
            )));
        }
        Ok(Self { name, outcomes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn outcomes(&self) -> &[CpMap] {
        &self.outcomes
    }

    pub fn num_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn d_in(&self) -> usize {
        self.outcomes[0].d_in()
    }

    pub fn d_out(&self) -> usize {
        self.outcomes[0].d_out()
    }

    pub fn choi(&self) -> InstrumentChoi {
        InstrumentChoi {
            d_in: self.d_in(),
            d_out: self.d_out(),
            outcomes: self.outcomes.iter().map(choi_of).collect(),
        }
    }

    /// Whether every outcome has exactly one Kraus operator (keeps pure states pure).
    pub fn is_pure(&self) -> bool {
        self.outcomes.iter().all(|m| m.kraus.len() == 1)
    }
}

/// Instruments per intervention slot, possibly depending on earlier outcomes.
pub trait InstrumentSchedule: Sync {
    fn num_slots(&self) -> usize;

    /// Instrument applied at `slot` given the outcomes of slots `0..slot`.
    fn instrument(&self, slot: usize, history: &[u8]) -> Cow<'_, Instrument>;

    /// True when every instrument that can occur has one Kraus operator per outcome.
    fn is_pure(&self) -> bool;
}

impl InstrumentSchedule for [Instrument] {
    fn num_slots(&self) -> usize {
        self.len()
    }

    fn instrument(&self, slot: usize, _history: &[u8]) -> Cow<'_, Instrument> {
        Cow::Borrowed(&self[slot])
    }

    fn is_pure(&self) -> bool {
        self.iter().all(Instrument::is_pure)
    }
}

impl InstrumentSchedule for Vec<Instrument> {
    fn num_slots(&self) -> usize {
        self.len()
    }

    fn instrument(&self, slot: usize, _history: &[u8]) -> Cow<'_, Instrument> {
        Cow::Borrowed(&self[slot])
    }

    fn is_pure(&self) -> bool {
        self.iter().all(Instrument::is_pure)
    }
}

// ---------------------------------------------------------------------------
// Library
// ---------------------------------------------------------------------------

fn ket(v: [f64; 2]) -> [C64; 2] {
    [C64::new(v[0], 0.0), C64::new(v[1], 0.0)]
}

fn plus() -> [C64; 2] {
    ket([FRAC_1_SQRT_2, FRAC_1_SQRT_2])
}

fn minus() -> [C64; 2] {
    ket([FRAC_1_SQRT_2, -FRAC_1_SQRT_2])
}

fn basis(i: usize) -> [C64; 2] {
    if i == 0 { ket([1.0, 0.0]) } else { ket([0.0, 1.0]) }
}

fn op(out: [C64; 2], inp: [C64; 2]) -> ComplexMatrix {
    ComplexMatrix::outer(&out, &inp)
}

fn build(name: &str, kraus: Vec<ComplexMatrix>) -> Instrument {
    let outcomes = kraus
        .into_iter()
        .enumerate()
        .map(|(x, k)| CpMap { kraus: vec![k], label: x.to_string() })
        .collect();
    Instrument::new(name, outcomes).expect("library instrument is valid")
}

/// Projective measurement in the computational basis.
pub fn comp_basis() -> Instrument {
    build("comp_basis", vec![op(basis(0), basis(0)), op(basis(1), basis(1))])
}

/// X-basis measurement (outcome 0 is `+`) followed by preparing `|+⟩`.
pub fn x_basis_prepare_plus() -> Instrument {
    build("x_basis_prepare_plus", vec![op(plus(), plus()), op(plus(), minus())])
}

/// Computational-basis measurement followed by preparing `|+⟩`.
pub fn comp_basis_prepare_plus() -> Instrument {
    build("comp_basis_prepare_plus", vec![op(plus(), basis(0)), op(plus(), basis(1))])
}

/// Computational-basis measurement followed by reset to `|0⟩`.
pub fn measure_and_reset() -> Instrument {
    build("measure_and_reset", vec![op(basis(0), basis(0)), op(basis(0), basis(1))])
}

/// The do-nothing intervention on a `d`-dimensional system.
pub fn identity_instrument(d: usize) -> Instrument {
    Instrument::new("identity", vec![CpMap { kraus: vec![ComplexMatrix::identity(d)], label: "0".into() }])
        .expect("identity is valid")
}

/// Deterministic unitary intervention.
pub fn unitary_instrument(u: ComplexMatrix, name: impl Into<String>) -> Result<Instrument> {
    let name = name.into();
    Instrument::new(name.clone(), vec![CpMap::unitary(u, "0")?])
}

/// Sign convention for the feed-forward phase `φ_j` of the semiclassical
/// inverse Fourier transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ShorPhaseConvention {
    /// `φ_j = exp(-2πi Σ_{l=1}^{j-1} m_{j-l} / 2^{l+1})`: removes the
    /// already-measured lower bits so that each step reads one bit exactly.
    #[default]
    Semiclassical,
    /// `φ_j = exp(-2πi Σ_{l=1}^{j-1} m_{j-l} / 2^l)`, the formula as usually
    /// quoted. Kept for comparison; it does not reproduce phase estimation.
    Literal,
}

/// Feed-forward phase for the next step given the outcome history `m_1..m_{j-1}`.
pub fn shor_phase(history: &[u8], convention: ShorPhaseConvention) -> C64 {
    let j = history.len() + 1;
    let offset = match convention {
        ShorPhaseConvention::Semiclassical => 1,
        ShorPhaseConvention::Literal => 0,
    };
    let mut angle = 0.0;
    for l in 1..j {
        let m = history[j - l - 1] as f64;
        angle += m / 2f64.powi((l + offset) as i32);
    }
    C64::from_polar(1.0, -2.0 * PI * angle)
}

/// Rotation `R = diag(1, φ_j)`, then X-basis measurement, then `|+⟩` preparation.
pub fn shor_rotation(history: &[u8], convention: ShorPhaseConvention) -> Instrument {
    let r = ComplexMatrix::from_diagonal(&[ONE, shor_phase(history, convention)]);
    build(
        "shor_feedforward",
        vec![&op(plus(), plus()) * &r, &op(plus(), minus()) * &r],
    )
}

/// Unitary intervention `exp(-iH)`.
pub fn driven_identity(h: &ComplexMatrix) -> Result<CpMap> {
    let u = expm_hermitian(h, 1.0)?;
    CpMap::unitary(u, "0")
}

/// Random instrument with `num_outcomes` outcomes of `kraus_rank` Kraus
/// operators each, cut from a Haar isometry so the total is trace preserving.
pub fn random_instrument(d: usize, num_outcomes: usize, kraus_rank: usize, rng: &mut RngStream) -> Result<Instrument> {
    if d == 0 || num_outcomes == 0 || kraus_rank == 0 {
        return Err(Error::InvalidArgument("random instrument needs positive sizes".into()));
    }
    let blocks = num_outcomes * kraus_rank;
    let big = d * blocks;
    let iso = haar_isometry_columns(big.max(2), d, rng);
    let mut outcomes = Vec::with_capacity(num_outcomes);
    for x in 0..num_outcomes {
        let kraus = (0..kraus_rank)
            .map(|r| {
                let b = x * kraus_rank + r;
                ComplexMatrix::from_fn(d, d, |i, j| iso[(b * d + i, j)])
            })
            .collect();
        outcomes.push(CpMap { kraus, label: x.to_string() });
    }
    Instrument::new("random", outcomes)
}

/// Looks up a single-qubit library instrument by its configuration name.
pub fn by_name(name: &str) -> Result<Instrument> {
    if let Some(gate) = name.strip_prefix("unitary:") {
        return unitary_instrument(gates::by_name(gate)?, name);
    }
    match name {
        "comp_basis" => Ok(comp_basis()),
        "x_basis_prepare_plus" => Ok(x_basis_prepare_plus()),
        "comp_basis_prepare_plus" => Ok(comp_basis_prepare_plus()),
        "measure_and_reset" => Ok(measure_and_reset()),
        "identity" => Ok(identity_instrument(2)),
        "shor_feedforward" => Err(Error::InvalidArgument(
            "shor_feedforward depends on earlier outcomes; use the Shor schedule".into(),
        )),
        _ => Err(Error::InvalidArgument(format!("unknown instrument {name:?}"))),
    }
}
