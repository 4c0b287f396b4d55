//! Flat `key = value` experiment configs and their validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ptsampler_core::models::{GueOptions, ShorMode, SystemPosition, MAX_RANDOM_MODEL_QUBITS};
use ptsampler_core::stats::{Estimator, SweepModel};

use crate::error::CliError;

/// Upper bound on `Σ k · shots · repeats` style work units for one run.
pub const MAX_WORK: f64 = 5e9;
/// Largest modulus the order-finding process is built for.
pub const MAX_MODULUS: u64 = 1024;
const MAX_MPS_SITES: usize = 64;
const MAX_MPS_CHI: usize = 256;
const MAX_IQP_QUBITS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Haar,
    Gue,
    Iqp,
    IqpClassical,
    Shor,
    Pswap,
    Mps,
    Dephasing,
    BornCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Haar,
        Experiment::Gue,
        Experiment::Iqp,
        Experiment::IqpClassical,
        Experiment::Shor,
        Experiment::Pswap,
        Experiment::Mps,
        Experiment::Dephasing,
        Experiment::BornCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Haar => "haar",
            Experiment::Gue => "gue",
            Experiment::Iqp => "iqp",
            Experiment::IqpClassical => "iqp-classical",
            Experiment::Shor => "shor",
            Experiment::Pswap => "pswap",
            Experiment::Mps => "mps",
            Experiment::Dephasing => "dephasing",
            Experiment::BornCheck => "born-check",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment '{s}'")))
    }
}

/// One experiment with its raw parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub params: BTreeMap<String, String>,
}

fn canonical_key(key: &str) -> &str {
    match key {
        "env" => "env_qubits",
        "n" => "N",
        other => other,
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut pairs = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(None, pairs)
    }

    /// Inline form: an experiment name followed by `key=value` arguments.
    pub fn from_args(experiment: &str, args: &[String]) -> Result<Self, CliError> {
        let pairs = args
            .iter()
            .map(|a| {
                a.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| CliError::Config(format!("expected key=value, got '{a}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_pairs(Some(experiment.parse()?), pairs)
    }

    fn from_pairs(experiment: Option<Experiment>, pairs: Vec<(String, String)>) -> Result<Self, CliError> {
        let mut experiment = experiment;
        let mut seed = 0;
        let mut output_dir = None;
        let mut params = BTreeMap::new();
        for (k, v) in pairs {
            match k.as_str() {
                "experiment" => experiment = Some(v.parse()?),
                "seed" => seed = v.parse().map_err(|_| CliError::Config(format!("seed must be an integer, got '{v}'")))?,
                "output_dir" => output_dir = Some(PathBuf::from(v)),
                _ => {
                    let key = canonical_key(&k).to_string();
                    if params.insert(key.clone(), v).is_some() {
                        return Err(CliError::Config(format!("parameter '{key}' given twice")));
                    }
                }
            }
        }
        let experiment = experiment.ok_or_else(|| CliError::Config("missing 'experiment'".into()))?;
        let output_dir = output_dir.unwrap_or_else(|| PathBuf::from("results").join(experiment.name()));
        Ok(Self { experiment, seed, output_dir, params })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Invalid,
    Budget,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Invalid => "invalid",
            Severity::Budget => "budget",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Fully typed run description.
#[derive(Clone, Debug, PartialEq)]
pub enum Plan {
    Sweep {
        model: SweepModel,
        ks: Vec<usize>,
        repeats: usize,
        shots: usize,
        estimator: Estimator,
        emit_samples: bool,
    },
    Iqp {
        qubits: usize,
        gates: usize,
        k: usize,
        shots: usize,
        classical: bool,
        emit_samples: bool,
    },
    Shor {
        modulus: u64,
        base: Option<u64>,
        mode: ShorMode,
        shots: usize,
        attempts: usize,
        emit_samples: bool,
    },
    Pswap {
        thetas: Vec<f64>,
        ks: Vec<usize>,
        beta_sq: Vec<f64>,
        shots: usize,
    },
    Mps {
        sites: usize,
        chis: Vec<usize>,
        draws: usize,
        shots: usize,
        sample_sites: usize,
        emit_samples: bool,
    },
    Dephasing {
        env_qubits: usize,
        t_samples: usize,
        cutoff: bool,
    },
    BornCheck {
        instances: usize,
    },
}

struct Reader<'a> {
    params: &'a BTreeMap<String, String>,
    used: BTreeSet<&'static str>,
    diags: Vec<Diagnostic>,
}

impl<'a> Reader<'a> {
    fn invalid(&mut self, message: String) {
        self.diags.push(Diagnostic { severity: Severity::Invalid, message });
    }

    fn budget(&mut self, message: String) {
        self.diags.push(Diagnostic { severity: Severity::Budget, message });
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a str> {
        self.used.insert(key);
        self.params.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&mut self, key: &'static str, what: &str) -> Option<T> {
        let v = self.raw(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.invalid(format!("{key} must be {what}, got '{v}'"));
                None
            }
        }
    }

    fn required<T: FromStr>(&mut self, key: &'static str, what: &str) -> Option<T> {
        if !self.params.contains_key(key) {
            self.used.insert(key);
            self.invalid(format!("missing required parameter '{key}'"));
            return None;
        }
        self.parsed(key, what)
    }

    fn count(&mut self, key: &'static str, default: usize) -> usize {
        let v = self.parsed(key, "a positive integer").unwrap_or(default);
        if v == 0 {
            self.invalid(format!("{key} must be at least 1"));
        }
        v.max(1)
    }

    fn flag(&mut self, key: &'static str, default: bool) -> bool {
        self.parsed(key, "true or false").unwrap_or(default)
    }

    fn list<T: FromStr>(&mut self, key: &'static str, what: &str) -> Option<Vec<T>> {
        let v = self.raw(key)?;
        let items: Result<Vec<T>, _> = v.split(',').map(|s| s.trim().parse()).collect();
        match items {
            Ok(xs) if !xs.is_empty() => Some(xs),
            _ => {
                self.invalid(format!("{key} must be a comma-separated list of {what}, got '{v}'"));
                None
            }
        }
    }

    /// `k=10` or `k=10,50,105`, or `k_range=start:end[:step]` (inclusive).
    fn k_values(&mut self) -> Vec<usize> {
        let has_k = self.params.contains_key("k");
        let range = self.raw("k_range");
        let mut ks = match (has_k, range) {
            (true, Some(_)) => {
                self.invalid("give either k or k_range, not both".into());
                return vec![];
            }
            (false, None) => {
                self.used.insert("k");
                self.invalid("missing required parameter 'k' (or 'k_range')".into());
                return vec![];
            }
            (true, None) => self.list("k", "integers").unwrap_or_default(),
            (false, Some(r)) => {
                let parts: Vec<Option<usize>> = r.split(':').map(|s| s.trim().parse().ok()).collect();
                match parts.as_slice() {
                    [Some(a), Some(b)] if a <= b => (*a..=*b).collect(),
                    [Some(a), Some(b), Some(s)] if a <= b && *s > 0 => (*a..=*b).step_by(*s).collect(),
                    _ => {
                        self.invalid(format!("k_range must be start:end[:step] with start <= end, got '{r}'"));
                        vec![]
                    }
                }
            }
        };
        if ks.contains(&0) {
            self.invalid("k values must be at least 1".into());
            ks.retain(|&k| k > 0);
        }
        ks
    }

    fn estimator(&mut self) -> Estimator {
        self.parsed("estimator", "weighted, sampled or enumerated").unwrap_or_default()
    }

    fn finish(mut self, experiment: Experiment) -> Vec<Diagnostic> {
        for key in self.params.keys() {
            if !self.used.contains(key.as_str()) {
                self.diags.push(Diagnostic {
                    severity: Severity::Invalid,
                    message: format!("unknown parameter '{key}' for {experiment}"),
                });
            }
        }
        self.diags
    }
}

fn work_check(r: &mut Reader, work: f64) {
    if work > MAX_WORK {
        r.budget(format!("estimated work {work:.3e} exceeds the budget of {MAX_WORK:.0e}"));
    }
}

fn qubit_check(r: &mut Reader, env_qubits: usize) {
    if env_qubits == 0 {
        r.invalid("env_qubits must be at least 1".into());
    } else if env_qubits + 1 > MAX_RANDOM_MODEL_QUBITS {
        r.budget(format!(
            "env_qubits = {env_qubits} needs {} dense qubits; the budget allows {MAX_RANDOM_MODEL_QUBITS}",
            env_qubits + 1
        ));
    }
}

fn odd_composite(n: u64) -> bool {
    let prime = n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0);
    n % 2 == 1 && n >= 9 && !prime
}

/// Checks `config` without running anything. Returns the plan when there are
/// no diagnostics.
pub fn validate(config: &ExperimentConfig) -> (Option<Plan>, Vec<Diagnostic>) {
    let mut r = Reader { params: &config.params, used: BTreeSet::new(), diags: Vec::new() };
    let plan = match config.experiment {
        Experiment::Haar | Experiment::Gue => {
            let env_qubits = r.required("env_qubits", "a positive integer").unwrap_or(1);
            qubit_check(&mut r, env_qubits);
            let ks = r.k_values();
            let shots = r.count("shots", 10_000);
            let repeats = r.count("repeats", 30);
            let estimator = r.estimator();
            let emit_samples = r.flag("emit_samples", false);
            let model = if config.experiment == Experiment::Haar {
                SweepModel::Haar { env_qubits }
            } else {
                let locality_cutoff = r.flag("cutoff", true);
                let system = match r.raw("system") {
                    None | Some("last") => SystemPosition::Last,
                    Some("first") => SystemPosition::First,
                    Some(other) => {
                        r.invalid(format!("system must be first or last, got '{other}'"));
                        SystemPosition::Last
                    }
                };
                SweepModel::Gue { env_qubits, options: GueOptions { locality_cutoff, system } }
            };
            let work: f64 = ks.iter().map(|&k| (k * shots * repeats) as f64).sum();
            work_check(&mut r, work * (1u64 << (2 * env_qubits.min(20))) as f64 / 4096.0);
            if estimator == Estimator::Enumerated {
                if let Some(&k) = ks.iter().find(|&&k| k > ptsampler_core::stats::MAX_ENUMERATED_STEPS) {
                    r.budget(format!("enumerated estimator needs k <= 16, got {k}"));
                }
            }
            Plan::Sweep { model, ks, repeats, shots, estimator, emit_samples }
        }
        Experiment::Iqp | Experiment::IqpClassical => {
            let classical = config.experiment == Experiment::IqpClassical;
            let qubits: usize = r.required("qubits", "an integer >= 2").unwrap_or(2);
            if qubits < 2 {
                r.invalid(format!("qubits must be at least 2, got {qubits}"));
            }
            let max_gates = 8 * qubits * qubits;
            let gates = r.parsed("gates", "an integer").unwrap_or(2 * qubits * qubits);
            if gates > max_gates {
                r.invalid(format!("gates must be at most 8 n^2 = {max_gates}, got {gates}"));
            }
            let k = r.required("k", "a positive integer").unwrap_or(1);
            if k == 0 {
                r.invalid("k must be at least 1".into());
            }
            let shots = r.count("shots", 10_000);
            let emit_samples = r.flag("emit_samples", false);
            let cap = if classical { MAX_IQP_QUBITS } else { MAX_RANDOM_MODEL_QUBITS };
            if qubits > cap {
                r.budget(format!("qubits = {qubits} exceeds the {} limit of {cap}", config.experiment));
            }
            let per_shot = if classical { gates as f64 } else { (k as f64) * 4f64.powi(qubits.min(30) as i32) };
            work_check(&mut r, per_shot * shots as f64);
            Plan::Iqp { qubits: qubits.max(2), gates, k: k.max(1), shots, classical, emit_samples }
        }
        Experiment::Shor => {
            let modulus: u64 = r.required("N", "an integer").unwrap_or(15);
            if modulus > MAX_MODULUS {
                r.budget(format!("N = {modulus} exceeds the largest supported modulus {MAX_MODULUS}"));
            } else if !odd_composite(modulus) {
                r.invalid(format!("N must be odd composite, got {modulus}"));
            }
            let base: Option<u64> = r.parsed("a", "an integer");
            if let Some(a) = base {
                if a <= 1 || a >= modulus {
                    r.invalid(format!("a must satisfy 1 < a < N, got {a}"));
                } else if ptsampler_core::models::shor::gcd(a, modulus) != 1 {
                    r.invalid(format!("a = {a} shares a factor with N = {modulus}"));
                }
            }
            let mode = match r.raw("mode") {
                None | Some("feedforward") => ShorMode::FeedForward,
                Some("compbasis") => ShorMode::CompBasis,
                Some(other) => {
                    r.invalid(format!("mode must be feedforward or compbasis, got '{other}'"));
                    ShorMode::FeedForward
                }
            };
            if mode == ShorMode::CompBasis && base.is_none() {
                r.invalid("mode=compbasis needs the base 'a'".into());
            }
            let shots = r.count("shots", 10_000);
            let attempts = r.count("attempts", ptsampler_core::models::shor::MAX_ATTEMPTS);
            let emit_samples = r.flag("emit_samples", false);
            Plan::Shor { modulus, base, mode, shots, attempts, emit_samples }
        }
        Experiment::Pswap => {
            let thetas: Vec<f64> = r.list("theta", "angles").unwrap_or_else(|| vec![std::f64::consts::FRAC_PI_4]);
            let ks: Vec<usize> = r.list("k", "integers").unwrap_or_else(|| vec![1]);
            let beta_sq: Vec<f64> = r.list("beta_sq", "numbers in [0, 1]").unwrap_or_else(|| vec![1.0]);
            if thetas.iter().any(|t| !t.is_finite()) {
                r.invalid("theta must be finite".into());
            }
            if ks.contains(&0) {
                r.invalid("k values must be at least 1".into());
            }
            if beta_sq.iter().any(|b| !(0.0..=1.0).contains(b)) {
                r.invalid("beta_sq must lie in [0, 1]".into());
            }
            let shots = r.count("shots", 10_000);
            let work: f64 = (thetas.len() * beta_sq.len()) as f64 * ks.iter().sum::<usize>() as f64 * shots as f64;
            work_check(&mut r, work);
            Plan::Pswap { thetas, ks, beta_sq, shots }
        }
        Experiment::Mps => {
            let sites = r.count("sites", 12);
            let chis: Vec<usize> = r
                .list("chi", "integers")
                .or_else(|| {
                    r.invalid("missing required parameter 'chi'".into());
                    None
                })
                .unwrap_or_default();
            if chis.contains(&0) {
                r.invalid("chi must be at least 1".into());
            }
            let draws = r.count("draws", 10);
            let shots = r.count("shots", 10_000);
            let sample_sites = r.count("sample_sites", sites);
            if sample_sites > sites {
                r.invalid(format!("sample_sites must be at most sites = {sites}, got {sample_sites}"));
            }
            let emit_samples = r.flag("emit_samples", false);
            if sites > MAX_MPS_SITES {
                r.budget(format!("sites = {sites} exceeds the limit of {MAX_MPS_SITES}"));
            }
            if let Some(&c) = chis.iter().find(|&&c| c > MAX_MPS_CHI) {
                r.budget(format!("chi = {c} exceeds the limit of {MAX_MPS_CHI}"));
            }
            let work: f64 = chis.iter().map(|&c| (c * c) as f64).sum::<f64>() * (sites * draws * shots) as f64;
            work_check(&mut r, work);
            Plan::Mps { sites, chis, draws, shots, sample_sites: sample_sites.min(sites), emit_samples }
        }
        Experiment::Dephasing => {
            let env_qubits = r.required("env_qubits", "a positive integer").unwrap_or(1);
            qubit_check(&mut r, env_qubits);
            let t_samples = r.count("t_samples", 1000);
            let cutoff = r.flag("cutoff", false);
            work_check(&mut r, t_samples as f64 * 4f64.powi(env_qubits.min(30) as i32));
            Plan::Dephasing { env_qubits, t_samples, cutoff }
        }
        Experiment::BornCheck => {
            let instances = r.count("instances", 100);
            work_check(&mut r, instances as f64 * 1e5);
            Plan::BornCheck { instances }
        }
    };
    let diags = r.finish(config.experiment);
    (diags.is_empty().then_some(plan), diags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inline(exp: &str, args: &[&str]) -> ExperimentConfig {
        ExperimentConfig::from_args(exp, &args.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn file_and_inline_forms_agree() {
        let text = "# sweep\nexperiment = haar\nenv = 5\nk = 50 \nshots=10000\nrepeats = 30\nseed = 7\n";
        let a = ExperimentConfig::parse(text).unwrap();
        let b = inline("haar", &["env=5", "k=50", "shots=10000", "repeats=30", "seed=7"]);
        assert_eq!(a, b);
        assert_eq!(a.output_dir, PathBuf::from("results/haar"));
    }

    #[test]
    fn complete_haar_config_has_no_diagnostics() {
        let (plan, diags) = validate(&inline("haar", &["env=5", "k=10,50,105", "seed=1"]));
        assert!(diags.is_empty(), "{diags:?}");
        match plan.unwrap() {
            Plan::Sweep { ks, shots, repeats, .. } => {
                assert_eq!(ks, vec![10, 50, 105]);
                assert_eq!((shots, repeats), (10_000, 30));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn k_range_is_inclusive() {
        let (plan, _) = validate(&inline("gue", &["env=5", "k_range=5:35:5"]));
        let Some(Plan::Sweep { ks, .. }) = plan else { panic!() };
        assert_eq!(ks, vec![5, 10, 15, 20, 25, 30, 35]);
    }

    #[test]
    fn diagnostics_name_the_problem() {
        let (_, d) = validate(&inline("shor", &["N=14", "a=3"]));
        assert!(d.iter().any(|x| x.message.contains("N must be odd composite")));
        let (_, d) = validate(&inline("haar", &["env=20", "k=5"]));
        assert!(d.iter().any(|x| x.severity == Severity::Budget));
        let (_, d) = validate(&inline("haar", &["env=3"]));
        assert!(d.iter().any(|x| x.message.contains("'k'")));
        let (_, d) = validate(&inline("pswap", &["thetaa=1"]));
        assert!(d.iter().any(|x| x.message.contains("unknown parameter 'thetaa'")));
        let (_, d) = validate(&inline("shor", &["N=15", "a=5"]));
        assert!(d.iter().any(|x| x.message.contains("shares a factor")));
    }

    #[test]
    fn parse_errors() {
        assert!(ExperimentConfig::parse("experiment = nope").is_err());
        assert!(ExperimentConfig::parse("env = 3").is_err());
        assert!(ExperimentConfig::parse("experiment = haar\njunk").is_err());
        assert!(ExperimentConfig::parse("experiment = haar\nk = 1\nk = 2").is_err());
    }
}
