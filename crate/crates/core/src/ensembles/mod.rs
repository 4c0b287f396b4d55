//! Random unitaries, Hamiltonians, time steps and matrix product states.

mod mps;

pub use mps::{mps_sample, random_mps, MatrixProductState, MpsSampler};

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::linalg::{qr, ComplexMatrix, C64};
use crate::rng::RngStream;

/// Haar-distributed unitary on `dim` dimensions.
///
/// A complex Ginibre matrix is QR-factorized and the columns of `Q` are
/// rephased by `r_ii / |r_ii|`; without that correction the result is not Haar.
pub fn haar_unitary(dim: usize, rng: &mut RngStream) -> Result<ComplexMatrix> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("Haar unitary needs dim >= 2, got {dim}")));
    }
    Ok(haar_isometry_columns(dim, dim, rng))
}

/// First `cols` columns of a Haar unitary of size `dim` (an isometry).
pub(crate) fn haar_isometry_columns(dim: usize, cols: usize, rng: &mut RngStream) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| rng.complex_normal() * std::f64::consts::FRAC_1_SQRT_2);
    let (q, r) = qr(&g);
    ComplexMatrix::from_fn(dim, cols, |i, j| {
        let d = r[(j, j)];
        let n = d.norm();
        let ph = if n > 0.0 { d / n } else { C64::new(1.0, 0.0) };
        q[(i, j)] * ph
    })
}

/// GUE Hamiltonian `(A + A^dagger)/2` with `A` having standard complex
/// Gaussian entries. The diagonal is real N(0,1) and each off-diagonal real
/// component has variance 1/2. With `locality_cutoff`, `h_ij` is scaled by
/// `exp(-|i-j|)`.
pub fn gue_hamiltonian(dim: usize, locality_cutoff: bool, rng: &mut RngStream) -> Result<ComplexMatrix> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("GUE needs dim >= 2, got {dim}")));
    }
    let a = ComplexMatrix::from_fn(dim, dim, |_, _| rng.complex_normal());
    let mut h = ComplexMatrix::from_fn(dim, dim, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
    if locality_cutoff {
        apply_locality_cutoff(&mut h);
    }
    Ok(h)
}

/// Scale every entry by `exp(-|i-j|)`.
pub fn apply_locality_cutoff(h: &mut ComplexMatrix) {
    let n = h.rows();
    for i in 0..n {
        for j in 0..n {
            let dist = i.abs_diff(j) as f64;
            h[(i, j)] *= (-dist).exp();
        }
    }
}

/// Time step drawn uniformly from the open interval `(0, 2π)`.
pub fn random_timestep(rng: &mut RngStream) -> f64 {
    loop {
        let t = rng.uniform() * TAU;
        if t > 0.0 {
            return t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigvalsh;

    #[test]
    fn haar_is_unitary() {
        let mut rng = RngStream::new(1, 0);
        for d in [2, 4, 8, 64] {
            assert!(haar_unitary(d, &mut rng).unwrap().unitarity_error() < 1e-10);
        }
        assert!(haar_unitary(1, &mut rng).is_err());
    }

    #[test]
    fn haar_first_moment() {
        // E|U_00|^2 = 1/d
        let mut rng = RngStream::new(2, 0);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| haar_unitary(4, &mut rng).unwrap()[(0, 0)].norm_sqr()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn haar_left_invariance_first_moment() {
        let mut rng = RngStream::new(3, 0);
        let v = haar_unitary(4, &mut rng).unwrap();
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| (&v * &haar_unitary(4, &mut rng).unwrap())[(1, 2)].norm_sqr())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.25).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn gue_is_hermitian_with_real_spectrum() {
        let mut rng = RngStream::new(4, 0);
        let h = gue_hamiltonian(16, true, &mut rng).unwrap();
        assert_eq!(h.hermiticity_error(), 0.0);
        let (vals, vecs) = crate::linalg::eigh(&h).unwrap();
        // Reconstruct to confirm the spectrum is real and complete.
        let d = ComplexMatrix::from_diagonal(&vals.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>());
        let back = &(&vecs * &d) * &vecs.adjoint();
        assert!(back.max_abs_diff(&h) < 1e-10);
    }

    #[test]
    fn gue_cutoff_scale() {
        let mut a = RngStream::new(5, 0);
        let mut b = RngStream::new(5, 0);
        let cut = gue_hamiltonian(8, true, &mut a).unwrap();
        let raw = gue_hamiltonian(8, false, &mut b).unwrap();
        let ratio = cut[(0, 3)].norm() / raw[(0, 3)].norm();
        assert!((ratio - (-3.0f64).exp()).abs() < 1e-12);
        assert!(((-3.0f64).exp() - 0.0498).abs() < 1e-4);
    }

    #[test]
    fn timestep_mean_and_range() {
        let mut rng = RngStream::new(6, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| random_timestep(&mut rng)).collect();
        assert!(xs.iter().all(|&t| t > 0.0 && t < TAU));
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = TAU / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - std::f64::consts::PI).abs() < 3.0 * se);
        let mut again = RngStream::new(6, 0);
        assert_eq!(random_timestep(&mut again), xs[0]);
    }

    #[test]
    fn gue_spectrum_is_semicircle() {
        // Eigenvalues of H / sqrt(d) follow the semicircle of radius 2 for this
        // normalization (off-diagonal E|h_ij|^2 = 1).
        let mut rng = RngStream::new(7, 0);
        let d = 64;
        let bins = 20;
        let (lo, hi) = (-2.2, 2.2);
        let width = (hi - lo) / bins as f64;
        let mut hist = vec![0.0; bins];
        let mut total = 0.0;
        for _ in 0..200 {
            let h = gue_hamiltonian(d, false, &mut rng).unwrap();
            for l in eigvalsh(&h).unwrap() {
                let x = l / (d as f64).sqrt();
                let b = ((x - lo) / width).floor();
                if b >= 0.0 && (b as usize) < bins {
                    hist[b as usize] += 1.0;
                }
                total += 1.0;
            }
        }
        let semicircle_cdf = |x: f64| {
            let x = x.clamp(-2.0, 2.0);
            0.5 + (x * (4.0 - x * x).sqrt() / 2.0 + 2.0 * (x / 2.0).asin()) / (2.0 * std::f64::consts::PI)
        };
        let tvd: f64 = (0..bins)
            .map(|b| {
                let a = lo + b as f64 * width;
                let expected = semicircle_cdf(a + width) - semicircle_cdf(a);
                (hist[b] / total - expected).abs()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tvd < 0.1, "tvd {tvd}");
    }
}
