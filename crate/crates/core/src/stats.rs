//! Output statistics: rescaled-probability histograms, the Porter-Thomas
//! reference, divergences and simple hypothesis tests.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::models::{gue_process_with, haar_process, GueOptions};
use crate::process::{comp_basis_schedule, outcome_distribution, TrajectorySampler};
use crate::rng::RngStream;

pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_NP_MAX: f64 = 10.0;

/// Largest `k` for which the enumerated estimator is allowed.
pub const MAX_ENUMERATED_STEPS: usize = 16;

/// Porter-Thomas mass `e^{-a} − e^{-b}` of the bin `[a, b]`; `b` may be infinite.
pub fn porter_thomas_mass(a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && b > a) || a.is_nan() || b.is_nan() {
        return Err(Error::InvalidArgument(format!("need 0 <= a < b, got [{a}, {b}]")));
    }
    Ok((-a).exp() - (-b).exp())
}

/// Linear bins on `[0, np_max)` plus one overflow bin `[np_max, ∞)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Binning {
    edges: Vec<f64>,
}

impl Default for Binning {
    fn default() -> Self {
        Self::linear(DEFAULT_BINS, DEFAULT_NP_MAX).expect("default binning is valid")
    }
}

impl Binning {
    pub fn linear(bins: usize, np_max: f64) -> Result<Self> {
        if bins == 0 || !(np_max > 0.0) || !np_max.is_finite() {
            return Err(Error::InvalidArgument("need bins >= 1 and a positive finite np_max".into()));
        }
        Ok(Self { edges: (0..=bins).map(|i| np_max * i as f64 / bins as f64).collect() })
    }

    /// Edges of the regular bins, excluding the overflow bin.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn np_max(&self) -> f64 {
        *self.edges.last().expect("nonempty")
    }

    /// Number of bins including the overflow bin.
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, np: f64) -> usize {
        if np >= self.np_max() {
            return self.edges.len() - 1;
        }
        self.edges.partition_point(|&e| e <= np).saturating_sub(1)
    }

    /// Porter-Thomas masses per bin, overflow last; they sum to 1.
    pub fn porter_thomas(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.edges.windows(2).map(|w| (-w[0]).exp() - (-w[1]).exp()).collect();
        m.push((-self.np_max()).exp());
        m
    }
}

/// How bit-string samples turn into a density over `Np`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Estimator {
    /// Each sample weighted by `1/(N p)`: unbiased for the density over strings.
    #[default]
    Weighted,
    /// Plain histogram of sampled `Np`, biased toward likely strings.
    Sampled,
    /// Every string given once with its exact probability.
    Enumerated,
}

impl Estimator {
    pub fn tag(&self) -> &'static str {
        match self {
            Estimator::Weighted => "weighted",
            Estimator::Sampled => "sampled",
            Estimator::Enumerated => "enumerated",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Estimator::Weighted),
            "sampled" => Ok(Estimator::Sampled),
            "enumerated" => Ok(Estimator::Enumerated),
            _ => Err(Error::InvalidArgument(format!("unknown estimator {s:?}"))),
        }
    }
}

/// Binned density of rescaled probabilities `Np`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    binning: Binning,
    masses: Vec<f64>,
    shots: usize,
    estimator: Estimator,
    max_np: f64,
}

impl EmpiricalDistribution {
    pub fn binning(&self) -> &Binning {
        &self.binning
    }

    /// Bin masses, overflow last.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    /// Largest `Np` seen.
    pub fn max_np(&self) -> f64 {
        self.max_np
    }

    /// `(low, high)` of bin `i`; the overflow bin ends at the largest `Np` seen.
    pub fn bin_bounds(&self, i: usize) -> (f64, f64) {
        let e = self.binning.edges();
        if i + 1 < e.len() {
            (e[i], e[i + 1])
        } else {
            let lo = self.binning.np_max();
            (lo, self.max_np.max(lo))
        }
    }
}

/// Histogram of `Np` with `N = 2^k` from `(bit-string, exact probability)` pairs.
pub fn build_distribution(
    samples: &[(Vec<u8>, f64)],
    k: usize,
    binning: &Binning,
    estimator: Estimator,
) -> Result<EmpiricalDistribution> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if k >= 1023 {
        return Err(Error::InvalidArgument(format!("k = {k} overflows N = 2^k")));
    }
    let n = 2f64.powi(k as i32);
    let mut masses = vec![0.0; binning.len()];
    let mut max_np: f64 = 0.0;
    for (_, p) in samples {
        if !p.is_finite() || *p < 0.0 || (*p == 0.0 && estimator != Estimator::Enumerated) {
            return Err(Error::InvalidArgument(format!("sample probability {p} must be positive")));
        }
        let np = n * p;
        max_np = max_np.max(np);
        let w = match estimator {
            Estimator::Weighted => 1.0 / np,
            Estimator::Sampled => 1.0,
            Estimator::Enumerated => 1.0 / n,
        };
        masses[binning.index(np)] += w;
    }
    if estimator == Estimator::Enumerated {
        // Strings left out have p = 0.
        let seen = samples.len() as f64 / n;
        if seen > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument("more strings than 2^k".into()));
        }
        masses[0] += (1.0 - seen).max(0.0);
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::NonFinite);
    }
    for m in &mut masses {
        *m /= total;
    }
    Ok(EmpiricalDistribution { binning: binning.clone(), masses, shots: samples.len(), estimator, max_np })
}

/// `Σ_{p_i > 0} p_i ln(p_i / q_i)`.
pub fn kl_masses(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} bins", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if !(qi > 0.0) {
                return Err(Error::InvalidArgument("reference has zero mass where the distribution does not".into()));
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl.max(0.0))
}

pub fn kl_divergence(p: &EmpiricalDistribution, q: &[f64]) -> Result<f64> {
    kl_masses(p.masses(), q)
}

/// KL divergence to the Porter-Thomas masses of the same bins.
pub fn kl_to_porter_thomas(p: &EmpiricalDistribution) -> Result<f64> {
    kl_divergence(p, &p.binning().porter_thomas())
}

/// Total variation distance, half the L1 distance.
pub fn tvd(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Pearson chi-square goodness of fit; returns `(statistic, p-value)`.
pub fn chi_square_test(observed: &[u64], expected: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::DimensionMismatch("need matching categories, at least two".into()));
    }
    let n: u64 = observed.iter().sum();
    let total: f64 = expected.iter().sum();
    let mut stat = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        let e = e / total * n as f64;
        if !(e > 0.0) {
            return Err(Error::InvalidArgument("expected counts must be positive".into()));
        }
        stat += (o as f64 - e).powi(2) / e;
    }
    let dist = ChiSquared::new((observed.len() - 1) as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((stat, 1.0 - dist.cdf(stat)))
}

/// One-sample Kolmogorov-Smirnov test; returns `(D, asymptotic p-value)`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * (j as f64 * lambda).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Sample skewness `m3 / m2^{3/2}`.
pub fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// KL summary for one `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct KlReport {
    pub k: usize,
    pub mean_kl: f64,
    pub std_kl: f64,
    pub repeats: usize,
    pub shots: usize,
    pub seed: u64,
}

/// Process family swept over `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepModel {
    Haar { env_qubits: usize },
    Gue { env_qubits: usize, options: GueOptions },
    /// Every string equally likely, `p = 2^{-k}`.
    Uniform,
}

/// `shots` strings of the `k`-step model with computational-basis
/// measurements at every time, each with its exact probability. Slot 0 is
/// dropped since it always reads 0 from the `|0…0⟩` start.
pub fn sample_model(model: SweepModel, k: usize, shots: usize, rng: &mut RngStream) -> Result<Vec<(Vec<u8>, f64)>> {
    let spec = match model {
        SweepModel::Haar { env_qubits } => haar_process(env_qubits, k, rng)?,
        SweepModel::Gue { env_qubits, options } => gue_process_with(env_qubits, k, options, rng)?,
        SweepModel::Uniform => {
            let p = 2f64.powi(-(k as i32));
            return Ok((0..shots)
                .map(|_| ((0..k).map(|_| u8::from(rng.uniform() < 0.5)).collect(), p))
                .collect());
        }
    };
    let schedule = comp_basis_schedule(k + 1);
    let mut sampler = TrajectorySampler::new(&spec, &schedule)?;
    (0..shots)
        .map(|_| sampler.sample(rng).map(|(mut x, p)| (x.split_off(1), p)))
        .collect()
}

/// Exact distribution of the same strings, for small `k`.
pub fn enumerate_model(model: SweepModel, k: usize, rng: &mut RngStream) -> Result<Vec<(Vec<u8>, f64)>> {
    if k > MAX_ENUMERATED_STEPS {
        return Err(Error::InvalidArgument(format!("enumeration limited to k <= {MAX_ENUMERATED_STEPS}")));
    }
    let spec = match model {
        SweepModel::Haar { env_qubits } => haar_process(env_qubits, k, rng)?,
        SweepModel::Gue { env_qubits, options } => gue_process_with(env_qubits, k, options, rng)?,
        SweepModel::Uniform => {
            let p = 2f64.powi(-(k as i32));
            return Ok((0..1usize << k).map(|x| (crate::linalg::index_to_bits(x, k), p)).collect());
        }
    };
    let schedule = comp_basis_schedule(k + 1);
    Ok(outcome_distribution(&spec, &schedule)?
        .into_iter()
        .filter(|(x, _)| x[0] == 0)
        .map(|(mut x, p)| (x.split_off(1), p))
        .collect())
}

/// KL to Porter-Thomas for one fresh process instance.
pub fn single_kl(
    model: SweepModel,
    k: usize,
    shots: usize,
    binning: &Binning,
    estimator: Estimator,
    rng: &mut RngStream,
) -> Result<(f64, EmpiricalDistribution)> {
    let samples = match estimator {
        Estimator::Enumerated => enumerate_model(model, k, rng)?,
        _ => sample_model(model, k, shots, rng)?,
    };
    let dist = build_distribution(&samples, k, binning, estimator)?;
    Ok((kl_to_porter_thomas(&dist)?, dist))
}

/// Per `k`, `repeats` independent processes of `shots` samples each; the
/// `(k, repeat)` items run in parallel on independent streams.
pub fn k_sweep(
    model: SweepModel,
    k_values: &[usize],
    repeats: usize,
    shots: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<Vec<KlReport>> {
    if repeats == 0 || shots == 0 || k_values.is_empty() {
        return Err(Error::InvalidArgument("need repeats >= 1, shots >= 1 and at least one k".into()));
    }
    let binning = Binning::default();
    let root = RngStream::new(seed, 0);
    let items: Vec<(usize, usize)> = k_values.iter().flat_map(|&k| (0..repeats).map(move |r| (k, r))).collect();
    let kls = items
        .par_iter()
        .map(|&(k, r)| {
            let mut rng = root.substream2(k as u64, r as u64);
            single_kl(model, k, shots, &binning, estimator, &mut rng).map(|(kl, _)| kl)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(k_values
        .iter()
        .zip(kls.chunks(repeats))
        .map(|(&k, chunk)| {
            let (mean_kl, std_kl) = mean_std(chunk);
            KlReport { k, mean_kl, std_kl, repeats, shots, seed }
        })
        .collect())
}

/// Per-bin CSV with columns `np_low,np_high,mass,pt_mass`.
pub fn write_histogram_csv(w: &mut impl Write, dist: &EmpiricalDistribution) -> Result<()> {
    writeln!(w, "np_low,np_high,mass,pt_mass")?;
    let pt = dist.binning().porter_thomas();
    for (i, (m, q)) in dist.masses().iter().zip(&pt).enumerate() {
        let (lo, hi) = dist.bin_bounds(i);
        writeln!(w, "{lo},{hi},{m},{q}")?;
    }
    Ok(())
}

/// Sweep CSV with columns `k,mean_kl,std_kl,repeats,shots,seed`.
pub fn write_sweep_csv(w: &mut impl Write, reports: &[KlReport]) -> Result<()> {
    writeln!(w, "k,mean_kl,std_kl,repeats,shots,seed")?;
    for r in reports {
        writeln!(w, "{},{},{},{},{},{}", r.k, r.mean_kl, r.std_kl, r.repeats, r.shots, r.seed)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn porter_thomas_closed_forms() {
        assert!((porter_thomas_mass(0.0, f64::INFINITY).unwrap() - 1.0).abs() < 1e-15);
        assert!((porter_thomas_mass(0.0, 2f64.ln()).unwrap() - 0.5).abs() < 1e-15);
        assert!(porter_thomas_mass(1.0, 1.0).is_err());
        let b = Binning::default();
        let regular: f64 = b.porter_thomas()[..50].iter().sum();
        assert!((regular - (1.0 - (-10f64).exp())).abs() < 1e-12);
        assert!((b.porter_thomas().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bin_lookup() {
        let b = Binning::default();
        assert_eq!(b.len(), 51);
        assert_eq!(b.index(0.0), 0);
        assert_eq!(b.index(0.19), 0);
        assert_eq!(b.index(1.0), 5);
        assert_eq!(b.index(9.99), 49);
        assert_eq!(b.index(10.0), 50);
        assert_eq!(b.index(1e6), 50);
    }

    #[test]
    fn kl_hand_value() {
        let kl = kl_masses(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!((kl - (0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln())).abs() < 1e-15);
        assert!((kl - 0.14384).abs() < 1e-5);
        assert_eq!(kl_masses(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!(kl_masses(&[0.5, 0.5], &[1.0, 0.0]).is_err());
        assert!(kl_masses(&[0.0, 1.0], &[0.0, 1.0]).is_ok());
    }

    #[test]
    fn uniform_process_lands_in_one_bin() {
        let samples = vec![(vec![0u8; 6], 1.0 / 64.0); 10];
        let d = build_distribution(&samples, 6, &Binning::default(), Estimator::Weighted).unwrap();
        assert_eq!(d.masses()[5], 1.0);
        let pt = Binning::default().porter_thomas();
        let kl = kl_to_porter_thomas(&d).unwrap();
        assert!((kl - (1f64.ln() - pt[5].ln())).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_rejected() {
        let samples = vec![(vec![0u8], 0.0)];
        assert!(build_distribution(&samples, 1, &Binning::default(), Estimator::Weighted).is_err());
    }

    #[test]
    fn chi_square_and_ks() {
        let (s, p) = chi_square_test(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(s, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        let (_, p) = chi_square_test(&[90, 10], &[0.5, 0.5]).unwrap();
        assert!(p < 1e-10);
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d < 1e-3 && p > 0.99);
    }

    #[test]
    fn skewness_of_exponential_is_two() {
        let mut rng = RngStream::new(1, 0);
        let xs: Vec<f64> = (0..200_000).map(|_| -(1.0 - rng.uniform()).ln()).collect();
        assert!((skewness(&xs) - 2.0).abs() < 0.1);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn csv_headers() {
        let samples = vec![(vec![0u8; 2], 0.25); 4];
        let d = build_distribution(&samples, 2, &Binning::default(), Estimator::Weighted).unwrap();
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &d).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("np_low,np_high,mass,pt_mass\n"));
        assert_eq!(text.lines().count(), 52);
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[KlReport { k: 5, mean_kl: 0.1, std_kl: 0.0, repeats: 1, shots: 2, seed: 3 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,mean_kl,std_kl,repeats,shots,seed\n5,0.1,0,1,2,3\n");
    }
}
