use ptsampler_core::ensembles::{haar_unitary, random_mps, MpsSampler};
use ptsampler_core::instruments::{comp_basis, random_instrument, Instrument};
use ptsampler_core::linalg::{kron, ComplexMatrix, StateVector, C64, ONE, ZERO};
use ptsampler_core::process::{
    born_probability, build_choi, embed_state_sampling, extract_stochastic_map, outcome_distribution, random_spec,
    trajectory_probability, ChoiState, InitialState, ProcessSpec, SeUnitary, TrajectorySampler,
};
use ptsampler_core::stats::{chi_square_test, ks_test, tvd};
use ptsampler_core::RngStream;

/// Unitary `v` on (system = qubit 0, qubit `e`) of an `n`-qubit register.
fn pair_unitary(v: &ComplexMatrix, e: usize, n: usize) -> ComplexMatrix {
    let d = 1usize << n;
    let sbit = n - 1;
    let ebit = n - 1 - e;
    let mask = (1 << sbit) | (1 << ebit);
    ComplexMatrix::from_fn(d, d, |r, c| {
        if r & !mask != c & !mask {
            return ZERO;
        }
        let local = |x: usize| (((x >> sbit) & 1) << 1) | ((x >> ebit) & 1);
        v[(local(r), local(c))]
    })
}

/// `ρ ↦ Tr_e[V (ρ ⊗ |0⟩⟨0|) V†]`.
fn collision_channel(v: &ComplexMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(2, 2);
    for b in 0..2 {
        let k = ComplexMatrix::from_fn(2, 2, |s, t| v[(2 * s + b, 2 * t)]);
        out = &out + &k.conjugate(rho).unwrap();
    }
    out
}

fn unit(a: usize, b: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2, 2);
    m[(a, b)] = ONE;
    m
}

#[test]
fn stochastic_maps_of_collision_model_compose() {
    // A fresh environment qubit per step makes the process Markovian.
    let mut rng = RngStream::new(11, 0);
    let k = 3;
    let n = k + 1;
    let vs: Vec<ComplexMatrix> = (0..k).map(|_| haar_unitary(4, &mut rng).unwrap()).collect();
    let us = vs.iter().enumerate().map(|(j, v)| SeUnitary::Dense(pair_unitary(v, j + 1, n))).collect();
    let psi0 = StateVector::normalized(vec![C64::new(0.6, 0.1), C64::new(0.3, -0.7)]).unwrap();
    let initial = psi0.tensor(&StateVector::zero(k));
    let spec = ProcessSpec::new(vec![0], InitialState::Pure(initial), us, None).unwrap();
    let choi = build_choi(&spec).unwrap();
    for i in 0..k {
        for j in i + 1..=k {
            let map = extract_stochastic_map(&choi, i, j).unwrap();
            assert!(map.is_cptp, "Λ_{j}:{i}");
            assert!(map.min_eigenvalue > -1e-8);
            assert!(map.trace_preservation_error < 1e-8);
            for a in 0..2 {
                for b in 0..2 {
                    let mut expected = unit(a, b);
                    for v in &vs[i..j] {
                        expected = collision_channel(v, &expected);
                    }
                    assert!(map.apply(&unit(a, b)).unwrap().max_abs_diff(&expected) < 1e-10);
                }
            }
        }
    }
}

#[test]
fn choi_trajectory_agreement_with_mixed_initial_state() {
    let mut rng = RngStream::new(12, 0);
    for _ in 0..5 {
        let spec = random_spec(2, 2, true, &mut rng).unwrap();
        let sched: Vec<Instrument> = (0..3).map(|_| random_instrument(2, 2, 2, &mut rng).unwrap()).collect();
        let choi = build_choi(&spec).unwrap();
        assert!(choi.causality_error().unwrap() < 1e-10);
        assert!(choi.min_eigenvalue().unwrap() > -1e-10);
        let mut total = 0.0;
        for x in 0..8u8 {
            let outcomes = [x >> 2 & 1, x >> 1 & 1, x & 1];
            let a = trajectory_probability(&spec, &sched, &outcomes).unwrap();
            let b = born_probability(&choi, &sched, &outcomes).unwrap();
            assert!((a - b).abs() < 1e-10);
            total += a;
        }
        assert!((total - 1.0).abs() < 1e-10);
    }
}

#[test]
fn choi_file_round_trip_is_bitwise() {
    let mut rng = RngStream::new(13, 0);
    let choi = build_choi(&random_spec(1, 2, false, &mut rng).unwrap()).unwrap();
    let mut buf = Vec::new();
    choi.write_to(&mut buf).unwrap();
    let back = ChoiState::read_from(&mut buf.as_slice()).unwrap();
    assert_eq!(back, choi);
}

#[test]
fn sampler_frequencies_pass_chi_square() {
    let mut rng = RngStream::new(14, 0);
    let spec = random_spec(1, 2, false, &mut rng).unwrap();
    let sched: Vec<Instrument> = (0..3).map(|_| random_instrument(2, 2, 1, &mut rng).unwrap()).collect();
    let exact = outcome_distribution(&spec, &sched).unwrap();
    let mut sampler = TrajectorySampler::new(&spec, &sched).unwrap();
    let shots = 20_000;
    let mut counts = vec![0u64; exact.len()];
    for _ in 0..shots {
        let (x, p) = sampler.sample(&mut rng).unwrap();
        let idx = exact.iter().position(|(y, _)| *y == x).unwrap();
        assert!((exact[idx].1 - p).abs() < 1e-12);
        counts[idx] += 1;
    }
    let probs: Vec<f64> = exact.iter().map(|(_, p)| *p).collect();
    let (_, pval) = chi_square_test(&counts, &probs).unwrap();
    assert!(pval > 0.001, "p = {pval}");
}

#[test]
fn mixed_sampler_with_mixed_instruments() {
    let mut rng = RngStream::new(15, 0);
    let spec = random_spec(1, 2, true, &mut rng).unwrap();
    let sched: Vec<Instrument> = (0..3).map(|_| random_instrument(2, 2, 2, &mut rng).unwrap()).collect();
    let exact = outcome_distribution(&spec, &sched).unwrap();
    let mut sampler = TrajectorySampler::new(&spec, &sched).unwrap();
    let shots = 20_000;
    let mut counts = vec![0.0; exact.len()];
    for _ in 0..shots {
        let (x, _) = sampler.sample(&mut rng).unwrap();
        counts[exact.iter().position(|(y, _)| *y == x).unwrap()] += 1.0 / shots as f64;
    }
    let probs: Vec<f64> = exact.iter().map(|(_, p)| *p).collect();
    assert!(tvd(&counts, &probs) < 0.02);
}

#[test]
fn state_embedding_reproduces_born_probabilities() {
    let mut rng = RngStream::new(16, 0);
    let u = haar_unitary(8, &mut rng).unwrap();
    let spec = embed_state_sampling(&u).unwrap();
    let sched = vec![comp_basis(); 3];
    let psi = StateVector::zero(3).evolve(&u).unwrap();
    for (x, p) in outcome_distribution(&spec, &sched).unwrap() {
        let idx = (x[0] as usize) << 2 | (x[1] as usize) << 1 | x[2] as usize;
        assert!((psi.probabilities()[idx] - p).abs() < 1e-10);
    }
}

#[test]
fn haar_entry_modulus_follows_beta_law() {
    // |U_00|^2 ~ Beta(1, d-1), CDF 1 - (1-x)^{d-1}.
    let mut rng = RngStream::new(17, 0);
    let d = 8;
    let xs: Vec<f64> = (0..4000).map(|_| haar_unitary(d, &mut rng).unwrap()[(0, 0)].norm_sqr()).collect();
    let (dstat, p) = ks_test(&xs, |x| 1.0 - (1.0 - x.clamp(0.0, 1.0)).powi(d as i32 - 1));
    assert!(p > 0.001, "D = {dstat}, p = {p}");
}

#[test]
fn mps_sampler_matches_dense_state() {
    let mut rng = RngStream::new(18, 0);
    let psi = random_mps(8, 4, &mut rng).unwrap();
    let dense = psi.to_dense().unwrap();
    let sampler = MpsSampler::new(&psi);
    let probs = sampler.prefix_distribution(8);
    for (a, z) in probs.iter().zip(&dense) {
        assert!((a - z.norm_sqr()).abs() < 1e-12);
    }
    let marg = sampler.prefix_distribution(3);
    for (m, chunk) in marg.iter().zip(probs.chunks(32)) {
        assert!((m - chunk.iter().sum::<f64>()).abs() < 1e-12);
    }
    let shots = 20_000;
    let mut freq = vec![0.0; 256];
    for _ in 0..shots {
        let (bits, p) = sampler.sample_prefix(8, &mut rng);
        let idx = bits.iter().fold(0, |acc, &b| acc << 1 | b as usize);
        assert!((p - probs[idx]).abs() < 1e-12);
        freq[idx] += 1.0 / shots as f64;
    }
    assert!(tvd(&freq, &probs) < 0.05);
}

#[test]
fn product_unitaries_leave_system_closed() {
    // U = V ⊗ W with a product start: outcomes follow the system alone.
    let mut rng = RngStream::new(19, 0);
    let v = haar_unitary(2, &mut rng).unwrap();
    let w = haar_unitary(2, &mut rng).unwrap();
    let spec = ProcessSpec::new(
        vec![0],
        InitialState::Pure(StateVector::zero(2)),
        vec![SeUnitary::Dense(kron(&v, &w))],
        None,
    )
    .unwrap();
    let p = trajectory_probability(&spec, &vec![comp_basis(); 2], &[0, 1]).unwrap();
    assert!((p - v[(1, 0)].norm_sqr()).abs() < 1e-12);
}
