//! Order finding as a single-qubit process: a control qubit repeatedly
//! drives modular multiplications on an `n`-qubit work register.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::instruments::{comp_basis_prepare_plus, identity_instrument, shor_rotation, Instrument, InstrumentSchedule, ShorPhaseConvention};
use crate::linalg::{kron_vec, StateVector, C64};
use crate::process::{InitialState, ProcessSpec, SeUnitary, TrajectorySampler};
use crate::rng::RngStream;

/// Largest modulus handled.
pub const MAX_MODULUS: u64 = 1 << 10;

/// Retry bound for [`shor_factor`].
pub const MAX_ATTEMPTS: usize = 40;

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn mod_pow(base: u64, mut exp: u64, m: u64) -> u64 {
    let mut result = 1 % m;
    let mut b = base % m;
    while exp > 0 {
        if exp & 1 == 1 {
            result = result * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    result
}

/// Smallest `r ≥ 1` with `a^r ≡ 1 (mod m)`.
pub fn multiplicative_order(a: u64, m: u64) -> Option<u64> {
    if gcd(a, m) != 1 {
        return None;
    }
    let mut x = a % m;
    for r in 1..=m {
        if x == 1 {
            return Some(r);
        }
        x = x * a % m;
    }
    None
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

fn is_prime_power(n: u64) -> bool {
    (2..).take_while(|b| b * b <= n).any(|b| {
        let mut x = b;
        while x < n {
            x *= b;
        }
        x == n && is_prime(b)
    })
}

/// Modulus `N`, base `a`, register width `n` and step count `k = 2n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShorSpec {
    modulus: u64,
    base: u64,
    n: usize,
    k: usize,
}

impl ShorSpec {
    /// Checks the order-finding preconditions: `N` odd, composite, not a prime
    /// power, at most 2^10, and `1 < a < N` coprime to `N`.
    pub fn new(modulus: u64, base: u64) -> Result<Self> {
        if modulus % 2 == 0 || modulus < 9 || is_prime(modulus) {
            return Err(Error::Precondition(format!("N must be odd composite, got {modulus}")));
        }
        if is_prime_power(modulus) {
            return Err(Error::Precondition(format!("N must not be a prime power, got {modulus}")));
        }
        Self::unchecked(modulus, base)
    }

    /// Only requires an odd modulus and a valid base; for small registers whose
    /// process tensor is small enough to build densely.
    pub fn unchecked(modulus: u64, base: u64) -> Result<Self> {
        if modulus < 3 || modulus % 2 == 0 || modulus > MAX_MODULUS {
            return Err(Error::Precondition(format!("N must be odd with 3 <= N <= {MAX_MODULUS}, got {modulus}")));
        }
        if base <= 1 || base >= modulus {
            return Err(Error::Precondition(format!("a must satisfy 1 < a < N, got {base}")));
        }
        if gcd(base, modulus) != 1 {
            return Err(Error::Precondition(format!("a = {base} shares a factor with N = {modulus}")));
        }
        let n = (u64::BITS - modulus.leading_zeros()) as usize;
        Ok(Self { modulus, base, n, k: 2 * n })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn register_qubits(&self) -> usize {
        self.n
    }

    pub fn num_steps(&self) -> usize {
        self.k
    }

    /// The `2n`-bit estimate encoded by a trajectory; slot 0 carries no bit and
    /// slot `j` holds bit `j - 1`.
    pub fn phase_register(&self, outcomes: &[u8]) -> u64 {
        outcomes.iter().skip(1).enumerate().map(|(j, &b)| (b as u64) << j).sum()
    }
}

/// Which intervention follows each controlled multiplication.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShorMode {
    /// Phase correction, X-basis measurement, `|+⟩` preparation.
    FeedForward,
    /// Computational-basis measurement, `|+⟩` preparation.
    CompBasis,
}

/// Identity at `t_0`, then the mode's instrument at every later time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShorSchedule {
    pub k: usize,
    pub mode: ShorMode,
    pub convention: ShorPhaseConvention,
}

impl InstrumentSchedule for ShorSchedule {
    fn num_slots(&self) -> usize {
        self.k + 1
    }

    fn instrument(&self, slot: usize, history: &[u8]) -> Cow<'_, Instrument> {
        if slot == 0 {
            return Cow::Owned(identity_instrument(2));
        }
        Cow::Owned(match self.mode {
            ShorMode::FeedForward => shor_rotation(&history[1..], self.convention),
            ShorMode::CompBasis => comp_basis_prepare_plus(),
        })
    }

    fn is_pure(&self) -> bool {
        true
    }
}

/// Control qubit 0 starts in `|+⟩`, the register in `|1⟩`. Step `j` applies
/// `|1⟩⟨1| ⊗ U_a^{2^{k-j}}` with `U_a|y⟩ = |a y mod N⟩` for `y < N`.
pub fn shor_process(spec: &ShorSpec, mode: ShorMode) -> Result<(ProcessSpec, ShorSchedule)> {
    let (n, k, m) = (spec.n, spec.k, spec.modulus);
    let reg = 1usize << n;
    let unitaries = (1..=k)
        .map(|j| {
            let mult = mod_pow(spec.base, 1u64 << (k - j), m);
            let perm = (0..2 * reg)
                .map(|idx| {
                    let y = (idx % reg) as u64;
                    if idx >= reg && y < m {
                        reg + (mult * y % m) as usize
                    } else {
                        idx
                    }
                })
                .collect();
            SeUnitary::Permutation(perm)
        })
        .collect();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let control = [C64::new(h, 0.0), C64::new(h, 0.0)];
    let mut one = vec![C64::new(0.0, 0.0); reg];
    one[1] = C64::new(1.0, 0.0);
    let initial = StateVector::new(kron_vec(&control, &one))?;
    let process = ProcessSpec::new(vec![0], InitialState::Pure(initial), unitaries, None)?;
    let schedule = ShorSchedule { k, mode, convention: ShorPhaseConvention::default() };
    Ok((process, schedule))
}

/// Convergent denominators of `num / den`.
pub fn convergent_denominators(num: u64, den: u64) -> Vec<u64> {
    let (mut a, mut b) = (num, den);
    let (mut q2, mut q1) = (1u64, 0u64);
    let mut out = Vec::new();
    while b != 0 {
        let t = a / b;
        (a, b) = (b, a % b);
        let q = t.saturating_mul(q1).saturating_add(q2);
        (q2, q1) = (q1, q);
        out.push(q);
    }
    out.dedup();
    out
}

/// Recovers the order of `a` from one measured phase register value `y`.
/// Each convergent denominator `q < N` is tried together with its multiples
/// up to `n q`, `n` being the bit length of `N`.
pub fn order_from_measurement(y: u64, k: usize, a: u64, modulus: u64) -> Option<u64> {
    if y == 0 {
        return None;
    }
    let n = (u64::BITS - modulus.leading_zeros()) as u64;
    for q in convergent_denominators(y, 1u64 << k) {
        if q >= modulus {
            break;
        }
        for r in (1..=n).map(|m| m * q).take_while(|&r| r < modulus) {
            if mod_pow(a, r, modulus) == 1 {
                return Some(r);
            }
        }
    }
    None
}

/// Nontrivial factors from an even order, if it yields any.
pub fn factors_from_order(a: u64, r: u64, modulus: u64) -> Option<(u64, u64)> {
    if r % 2 == 1 {
        return None;
    }
    let half = mod_pow(a, r / 2, modulus);
    if half == modulus - 1 {
        return None;
    }
    for c in [gcd(half + modulus - 1, modulus), gcd(half + 1, modulus)] {
        if c > 1 && c < modulus {
            let (p, q) = (c, modulus / c);
            return Some((p.min(q), p.max(q)));
        }
    }
    None
}

/// Outcome of one order-finding run.
#[derive(Clone, Debug, PartialEq)]
pub struct ShorAttempt {
    pub base: u64,
    pub outcomes: Vec<u8>,
    pub measured: u64,
    pub order: Option<u64>,
    pub factors: Option<(u64, u64)>,
}

/// One quantum run with a fixed base followed by classical post-processing.
pub fn shor_attempt(spec: &ShorSpec, rng: &mut RngStream) -> Result<ShorAttempt> {
    let (process, schedule) = shor_process(spec, ShorMode::FeedForward)?;
    let mut sampler = TrajectorySampler::new(&process, &schedule)?;
    let (outcomes, _) = sampler.sample(rng)?;
    let measured = spec.phase_register(&outcomes);
    let order = order_from_measurement(measured, spec.k, spec.base, spec.modulus);
    let factors = order.and_then(|r| factors_from_order(spec.base, r, spec.modulus));
    Ok(ShorAttempt { base: spec.base, outcomes, measured, order, factors })
}

/// Result of [`shor_factor`].
#[derive(Clone, Debug, PartialEq)]
pub struct FactorReport {
    pub modulus: u64,
    pub factors: Option<(u64, u64)>,
    pub attempts: Vec<ShorAttempt>,
}

/// Factors `N` with random bases, giving up after [`MAX_ATTEMPTS`] tries.
/// A base sharing a factor with `N` ends the search classically.
pub fn shor_factor(modulus: u64, rng: &mut RngStream) -> Result<FactorReport> {
    shor_factor_with(modulus, MAX_ATTEMPTS, rng)
}

pub fn shor_factor_with(modulus: u64, max_attempts: usize, rng: &mut RngStream) -> Result<FactorReport> {
    // Validate N once with a base that always exists for N >= 9.
    ShorSpec::new(modulus, 2)?;
    let mut attempts = Vec::new();
    for _ in 0..max_attempts {
        let base = 2 + (rng.uniform() * (modulus - 3) as f64) as u64;
        let base = base.min(modulus - 2);
        let g = gcd(base, modulus);
        if g > 1 {
            let f = (g.min(modulus / g), g.max(modulus / g));
            attempts.push(ShorAttempt { base, outcomes: vec![], measured: 0, order: None, factors: Some(f) });
            return Ok(FactorReport { modulus, factors: Some(f), attempts });
        }
        let attempt = shor_attempt(&ShorSpec::new(modulus, base)?, rng)?;
        let done = attempt.factors;
        attempts.push(attempt);
        if done.is_some() {
            return Ok(FactorReport { modulus, factors: done, attempts });
        }
    }
    Ok(FactorReport { modulus, factors: None, attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::outcome_distribution;

    #[test]
    fn arithmetic_helpers() {
        assert_eq!(gcd(48, 15), 3);
        assert_eq!(mod_pow(7, 4, 15), 1);
        assert_eq!(multiplicative_order(7, 15), Some(4));
        assert_eq!(multiplicative_order(2, 21), Some(6));
        assert_eq!(multiplicative_order(3, 15), None);
        assert!(is_prime_power(27) && is_prime_power(25) && !is_prime_power(15));
        assert_eq!(convergent_denominators(3, 8), vec![1, 2, 3, 8]);
    }

    #[test]
    fn preconditions() {
        assert!(ShorSpec::new(15, 7).is_ok());
        assert!(ShorSpec::new(16, 3).is_err());
        assert!(ShorSpec::new(13, 3).is_err());
        assert!(ShorSpec::new(27, 2).is_err());
        assert!(ShorSpec::new(15, 1).is_err());
        assert!(ShorSpec::new(15, 5).is_err());
        let s = ShorSpec::new(15, 7).unwrap();
        assert_eq!((s.register_qubits(), s.num_steps()), (4, 8));
    }

    #[test]
    fn feedforward_outcomes_are_multiples_of_period() {
        let spec = ShorSpec::new(15, 7).unwrap();
        let (p, s) = shor_process(&spec, ShorMode::FeedForward).unwrap();
        let dist = outcome_distribution(&p, &s).unwrap();
        let mut by_y = std::collections::BTreeMap::new();
        for (x, q) in dist {
            *by_y.entry(spec.phase_register(&x)).or_insert(0.0) += q;
        }
        for (y, q) in by_y {
            if q > 1e-12 {
                assert_eq!(y % 64, 0, "y = {y}");
                assert!((q - 0.25).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn order_recovery() {
        assert_eq!(order_from_measurement(64, 8, 7, 15), Some(4));
        assert_eq!(order_from_measurement(128, 8, 7, 15), Some(4));
        assert_eq!(order_from_measurement(0, 8, 7, 15), None);
        assert_eq!(factors_from_order(7, 4, 15), Some((3, 5)));
    }
}
