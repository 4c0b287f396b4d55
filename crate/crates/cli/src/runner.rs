//! Executes a validated plan and collects its output files.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use ptsampler_core::ensembles::{random_mps, MpsSampler};
use ptsampler_core::models::{
    dephasing_demo_with, iqp_classical_sample, iqp_process, pswap_extraction, shor_attempt, shor_factor_with,
    shor_process, FactorReport, IqpCircuit, PswapExperiment, ShorAttempt, ShorMode, ShorSpec,
};
use ptsampler_core::process::{born_check, comp_basis_schedule, TrajectorySampler};
use ptsampler_core::stats::{
    build_distribution, chi_square_test, enumerate_model, k_sweep, kl_to_porter_thomas, mean_std, sample_model,
    single_kl, skewness, write_histogram_csv, write_sweep_csv, Binning, Estimator, SweepModel,
};
use ptsampler_core::RngStream;

use crate::config::{validate, ExperimentConfig, Plan, Severity};
use crate::error::CliError;
use crate::output::{persist, Outputs, RunManifest};

/// Largest acceptable `|p_traj - p_choi|` for the born-check experiment.
pub const BORN_TOLERANCE: f64 = 1e-10;

fn bits(x: &[u8]) -> String {
    x.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

fn samples_csv(out: &mut Outputs, name: &str, samples: &[(Vec<u8>, f64)]) {
    out.csv(name, "bits,probability", samples.iter().map(|(x, p)| vec![bits(x), p.to_string()]));
}

/// Validates, runs and persists. The manifest is written last.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest, CliError> {
    let (plan, diags) = validate(config);
    let Some(plan) = plan else {
        let text = diags.iter().map(|d| d.message.clone()).collect::<Vec<_>>().join("; ");
        return Err(if diags.iter().any(|d| d.severity == Severity::Invalid) {
            CliError::Config(text)
        } else {
            CliError::Budget(text)
        });
    };
    let start = Instant::now();
    let mut out = Outputs::default();
    let check = execute(&plan, config.seed, &mut out)?;
    let manifest = persist(config, &out, start.elapsed().as_secs_f64())?;
    check.map(|_| manifest)
}

/// Fills `out`. The inner result carries a failed self-check whose outputs
/// should still be persisted.
fn execute(plan: &Plan, seed: u64, out: &mut Outputs) -> Result<Result<(), CliError>, CliError> {
    let root = RngStream::new(seed, 0);
    match plan {
        Plan::Sweep { model, ks, repeats, shots, estimator, emit_samples } => {
            sweep(*model, ks, *repeats, *shots, *estimator, *emit_samples, seed, out)?
        }
        Plan::Iqp { qubits, gates, k, shots, classical, emit_samples } => {
            let circuit = IqpCircuit::random(*qubits, *gates, &mut root.substream(0))?;
            out.csv(
                "circuit.csv",
                "gate,qubit_a,qubit_b,phi00,phi01,phi10,phi11",
                circuit.gates().iter().enumerate().map(|(i, g)| {
                    let mut row = vec![i.to_string(), g.qubits.0.to_string(), g.qubits.1.to_string()];
                    row.extend(g.phases.iter().map(f64::to_string));
                    row
                }),
            );
            out.csv(
                "partition.csv",
                "step,first_gate,end_gate",
                circuit
                    .partition(*k)
                    .iter()
                    .enumerate()
                    .map(|(j, r)| vec![(j + 1).to_string(), r.start.to_string(), r.end.to_string()]),
            );
            let mut rng = root.substream(1);
            let mut counts: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
            if *classical {
                let mut samples = Vec::with_capacity(if *emit_samples { *shots } else { 0 });
                for _ in 0..*shots {
                    let x = iqp_classical_sample(&circuit, *k, &mut rng)?;
                    *counts.entry(x.clone()).or_default() += 1;
                    if *emit_samples {
                        samples.push(bits(&x));
                    }
                }
                out.csv(
                    "counts.csv",
                    "bits,count,frequency",
                    counts.iter().map(|(x, &c)| vec![bits(x), c.to_string(), (c as f64 / *shots as f64).to_string()]),
                );
                if *emit_samples {
                    out.csv("samples.csv", "bits", samples.into_iter().map(|b| vec![b]));
                }
            } else {
                let spec = iqp_process(&circuit, *k)?;
                let schedule = comp_basis_schedule(k + 1);
                let mut sampler = TrajectorySampler::new(&spec, &schedule)?;
                let mut probs = BTreeMap::new();
                let mut samples = Vec::new();
                for _ in 0..*shots {
                    let (x, p) = sampler.sample(&mut rng)?;
                    *counts.entry(x.clone()).or_default() += 1;
                    probs.insert(x.clone(), p);
                    if *emit_samples {
                        samples.push((x, p));
                    }
                }
                out.csv(
                    "counts.csv",
                    "bits,count,frequency,probability",
                    counts.iter().map(|(x, &c)| {
                        vec![bits(x), c.to_string(), (c as f64 / *shots as f64).to_string(), probs[x].to_string()]
                    }),
                );
                if *emit_samples {
                    samples_csv(out, "samples.csv", &samples);
                }
            }
        }
        Plan::Shor { modulus, base, mode, shots, attempts, emit_samples } => {
            let mut rng = root.substream(0);
            match mode {
                ShorMode::FeedForward => {
                    let report = match base {
                        Some(a) => {
                            let spec = ShorSpec::new(*modulus, *a)?;
                            let mut tries = Vec::new();
                            let mut factors = None;
                            for _ in 0..*attempts {
                                let t = shor_attempt(&spec, &mut rng)?;
                                factors = t.factors;
                                tries.push(t);
                                if factors.is_some() {
                                    break;
                                }
                            }
                            FactorReport { modulus: *modulus, factors, attempts: tries }
                        }
                        None => shor_factor_with(*modulus, *attempts, &mut rng)?,
                    };
                    shor_outputs(&report, out);
                }
                ShorMode::CompBasis => {
                    let a = base.ok_or_else(|| CliError::Config("mode=compbasis needs a".into()))?;
                    let spec = ShorSpec::new(*modulus, a)?;
                    let (process, schedule) = shor_process(&spec, ShorMode::CompBasis)?;
                    let mut sampler = TrajectorySampler::new(&process, &schedule)?;
                    let k = spec.num_steps();
                    let mut ones = vec![0u64; k];
                    let mut samples = Vec::new();
                    for _ in 0..*shots {
                        let (x, p) = sampler.sample(&mut rng)?;
                        for (j, o) in ones.iter_mut().enumerate() {
                            *o += u64::from(x[j + 1]);
                        }
                        if *emit_samples {
                            samples.push((x, p));
                        }
                    }
                    let rows = ones
                        .iter()
                        .enumerate()
                        .map(|(j, &o)| {
                            let zeros = *shots as u64 - o;
                            let (stat, p) = chi_square_test(&[zeros, o], &[0.5, 0.5])?;
                            Ok(vec![
                                (j + 1).to_string(),
                                zeros.to_string(),
                                o.to_string(),
                                stat.to_string(),
                                p.to_string(),
                            ])
                        })
                        .collect::<Result<Vec<_>, CliError>>()?;
                    out.csv("step_counts.csv", "step,zeros,ones,chi_square,p_value", rows);
                    if *emit_samples {
                        samples_csv(out, "samples.csv", &samples);
                    }
                }
            }
        }
        Plan::Pswap { thetas, ks, beta_sq, shots } => {
            let mut rows = Vec::new();
            let mut idx = 0;
            for &theta in thetas {
                for &k in ks {
                    for &b in beta_sq {
                        let e = PswapExperiment::with_excited_population(theta, k, b)?;
                        let r = pswap_extraction(&e, *shots, &mut root.substream(idx))?;
                        idx += 1;
                        rows.push(vec![
                            theta.to_string(),
                            k.to_string(),
                            b.to_string(),
                            shots.to_string(),
                            r.closed_form.to_string(),
                            r.exact.to_string(),
                            r.empirical.to_string(),
                            r.standard_error.to_string(),
                        ]);
                    }
                }
            }
            out.csv("pswap.csv", "theta,k,beta_sq,shots,closed_form,exact,empirical,standard_error", rows);
        }
        Plan::Mps { sites, chis, draws, shots, sample_sites, emit_samples } => {
            mps(*sites, chis, *draws, *shots, *sample_sites, *emit_samples, &root, out)?
        }
        Plan::Dephasing { env_qubits, t_samples, cutoff } => {
            let demo = dephasing_demo_with(*env_qubits, *t_samples, *cutoff, &mut root.substream(0))?;
            out.csv(
                "dephasing.csv",
                "t,x,y,coherence,overlap",
                demo.iter().map(|s| {
                    [s.t, s.x, s.y, s.coherence, s.overlap].iter().map(f64::to_string).collect()
                }),
            );
            let values: Vec<f64> = demo.iter().map(|s| s.coherence).collect();
            let err = demo.iter().map(|s| (s.coherence - s.overlap).abs()).fold(0.0, f64::max);
            let (mean, _) = mean_std(&values);
            let skew = if values.len() > 2 { skewness(&values) } else { 0.0 };
            out.csv(
                "summary.csv",
                "samples,mean_coherence,skewness,max_identity_error",
                [vec![values.len().to_string(), mean.to_string(), skew.to_string(), err.to_string()]],
            );
        }
        Plan::BornCheck { instances } => {
            let r = born_check(*instances, seed)?;
            out.csv(
                "born_check.csv",
                "instances,max_abs_diff,worst_instance",
                [vec![r.instances.to_string(), r.max_abs_diff.to_string(), r.worst_instance.to_string()]],
            );
            if !(r.max_abs_diff < BORN_TOLERANCE) {
                return Ok(Err(CliError::Check(format!(
                    "max |p_traj - p_choi| = {:e} at instance {}",
                    r.max_abs_diff, r.worst_instance
                ))));
            }
        }
    }
    Ok(Ok(()))
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    model: SweepModel,
    ks: &[usize],
    repeats: usize,
    shots: usize,
    estimator: Estimator,
    emit_samples: bool,
    seed: u64,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let reports = k_sweep(model, ks, repeats, shots, seed, estimator)?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &reports)?;
    out.add("kl_sweep.csv", buf);
    // Histogram (and samples) of the first repeat at each k, on the stream
    // the sweep used for it.
    let root = RngStream::new(seed, 0);
    let binning = Binning::default();
    let per_k = ks
        .par_iter()
        .map(|&k| {
            let stream = root.substream2(k as u64, 0);
            let (_, dist) = single_kl(model, k, shots, &binning, estimator, &mut stream.clone())?;
            let mut hist = Vec::new();
            write_histogram_csv(&mut hist, &dist)?;
            let samples = if emit_samples {
                let mut rng = stream;
                Some(match estimator {
                    Estimator::Enumerated => enumerate_model(model, k, &mut rng)?,
                    _ => sample_model(model, k, shots, &mut rng)?,
                })
            } else {
                None
            };
            Ok((k, hist, samples))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    for (k, hist, samples) in per_k {
        out.add(format!("histogram_k{k}.csv"), hist);
        if let Some(s) = samples {
            samples_csv(out, &format!("samples_k{k}.csv"), &s);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn mps(
    sites: usize,
    chis: &[usize],
    draws: usize,
    shots: usize,
    sample_sites: usize,
    emit_samples: bool,
    root: &RngStream,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let binning = Binning::default();
    let items: Vec<(usize, usize)> = chis.iter().flat_map(|&c| (0..draws).map(move |d| (c, d))).collect();
    let results = items
        .par_iter()
        .map(|&(chi, d)| {
            let mut rng = root.substream2(chi as u64, d as u64);
            let psi = random_mps(sites, chi, &mut rng)?;
            let sampler = MpsSampler::new(&psi);
            let samples: Vec<(Vec<u8>, f64)> = (0..shots).map(|_| sampler.sample_prefix(sample_sites, &mut rng)).collect();
            let dist = build_distribution(&samples, sample_sites, &binning, Estimator::Weighted)?;
            let kl = kl_to_porter_thomas(&dist)?;
            let keep = (d == 0).then(|| (dist, if emit_samples { samples } else { Vec::new() }));
            Ok((chi, d, psi.max_bond(), kl, keep))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut rows = Vec::new();
    let mut by_chi: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (chi, d, bond, kl, keep) in results {
        rows.push(vec![chi.to_string(), d.to_string(), bond.to_string(), kl.to_string()]);
        by_chi.entry(chi).or_default().push(kl);
        if let Some((dist, samples)) = keep {
            let mut hist = Vec::new();
            write_histogram_csv(&mut hist, &dist)?;
            out.add(format!("histogram_chi{chi}.csv"), hist);
            if emit_samples {
                samples_csv(out, &format!("samples_chi{chi}.csv"), &samples);
            }
        }
    }
    out.csv("mps_kl.csv", "chi,draw,max_bond,kl", rows);
    out.csv(
        "mps_summary.csv",
        "chi,mean_kl,std_kl,draws,shots,sample_sites",
        by_chi.iter().map(|(chi, kls)| {
            let (m, s) = mean_std(kls);
            vec![chi.to_string(), m.to_string(), s.to_string(), draws.to_string(), shots.to_string(), sample_sites.to_string()]
        }),
    );
    Ok(())
}

fn shor_outputs(report: &FactorReport, out: &mut Outputs) {
    let opt = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
    out.csv(
        "attempts.csv",
        "attempt,base,outcomes,measured,order,factor_p,factor_q",
        report.attempts.iter().enumerate().map(|(i, t): (usize, &ShorAttempt)| {
            vec![
                (i + 1).to_string(),
                t.base.to_string(),
                bits(&t.outcomes),
                t.measured.to_string(),
                opt(t.order),
                opt(t.factors.map(|f| f.0)),
                opt(t.factors.map(|f| f.1)),
            ]
        }),
    );
    let found = match report.factors {
        Some((p, q)) => format!("{p} {q}"),
        None => "none".to_string(),
    };
    let text = format!("N = {}\nfactors = {found}\nattempts = {}\n", report.modulus, report.attempts.len());
    out.add("factors.txt", text.into_bytes());
}
