use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64, ONE, ZERO};
use crate::rng::RngStream;

use super::haar_isometry_columns;

/// Open-boundary matrix product state of qubits in left-canonical form.
///
/// Site `i` holds a tensor of shape `(bond_dims[i], 2, bond_dims[i + 1])`
/// stored as `data[(a * 2 + s) * right + b]`.
#[derive(Clone, Debug)]
pub struct MatrixProductState {
    num_sites: usize,
    site_tensors: Vec<Vec<C64>>,
    bond_dims: Vec<usize>,
    chi: usize,
}

impl MatrixProductState {
    /// Builds from explicit tensors; checks shapes only.
    pub fn from_tensors(site_tensors: Vec<Vec<C64>>, bond_dims: Vec<usize>, chi: usize) -> Result<Self> {
        let n = site_tensors.len();
        if n == 0 || bond_dims.len() != n + 1 || bond_dims[0] != 1 || bond_dims[n] != 1 {
            return Err(Error::DimensionMismatch("bond profile must start and end at 1".into()));
        }
        for (i, t) in site_tensors.iter().enumerate() {
            if t.len() != bond_dims[i] * 2 * bond_dims[i + 1] {
                return Err(Error::DimensionMismatch(format!("site {i} tensor has {} entries", t.len())));
            }
        }
        if bond_dims.iter().any(|&b| b > chi) {
            return Err(Error::InvalidArgument(format!("bond exceeds chi = {chi}")));
        }
        Ok(Self { num_sites: n, site_tensors, bond_dims, chi })
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn bond_dims(&self) -> &[usize] {
        &self.bond_dims
    }

    pub fn chi(&self) -> usize {
        self.chi
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims.iter().copied().max().unwrap_or(1)
    }

    pub fn site_tensor(&self, i: usize) -> &[C64] {
        &self.site_tensors[i]
    }

    /// Matrix `A^s` of site `i` (left bond x right bond).
    fn site_matrix(&self, i: usize, s: usize) -> ComplexMatrix {
        let (l, r) = (self.bond_dims[i], self.bond_dims[i + 1]);
        let t = &self.site_tensors[i];
        ComplexMatrix::from_fn(l, r, |a, b| t[(a * 2 + s) * r + b])
    }

    /// Dense state vector; site 0 is the most significant bit.
    pub fn to_dense(&self) -> Result<Vec<C64>> {
        if self.num_sites > 24 {
            return Err(Error::DimensionCap { qubits: self.num_sites, limit: 24 });
        }
        // rows: basis strings of sites so far; cols: current right bond
        let mut acc = vec![ONE];
        let mut width = 1;
        for i in 0..self.num_sites {
            let r = self.bond_dims[i + 1];
            let t = &self.site_tensors[i];
            let rows = acc.len() / width;
            let mut next = vec![ZERO; rows * 2 * r];
            for row in 0..rows {
                for s in 0..2 {
                    let out = &mut next[(row * 2 + s) * r..][..r];
                    for a in 0..width {
                        let c = acc[row * width + a];
                        if c == ZERO {
                            continue;
                        }
                        for (o, &x) in out.iter_mut().zip(&t[(a * 2 + s) * r..][..r]) {
                            *o += c * x;
                        }
                    }
                }
            }
            acc = next;
            width = r;
        }
        Ok(acc)
    }
}

/// Bond profile `min(2^i, 2^(n-i), chi)` for bonds `0..=n`.
pub fn bond_profile(num_sites: usize, chi: usize) -> Vec<usize> {
    (0..=num_sites)
        .map(|i| {
            let left = 1usize.checked_shl(i as u32).unwrap_or(usize::MAX);
            let right = 1usize.checked_shl((num_sites - i) as u32).unwrap_or(usize::MAX);
            left.min(right).min(chi)
        })
        .collect()
}

/// Haar-random MPS: each site is an isometry formed from the leading columns
/// of a Haar unitary on `2 * left_bond` dimensions.
pub fn random_mps(num_sites: usize, chi: usize, rng: &mut RngStream) -> Result<MatrixProductState> {
    if num_sites == 0 || chi == 0 {
        return Err(Error::InvalidArgument("random MPS needs num_sites >= 1 and chi >= 1".into()));
    }
    let bonds = bond_profile(num_sites, chi);
    let mut tensors = Vec::with_capacity(num_sites);
    for i in 0..num_sites {
        let (l, r) = (bonds[i], bonds[i + 1]);
        let iso = haar_isometry_columns(2 * l, r, rng);
        tensors.push(iso.into_vec());
    }
    MatrixProductState::from_tensors(tensors, bonds, chi)
}

/// Sequential sampler with cached right environments.
#[derive(Clone, Debug)]
pub struct MpsSampler<'a> {
    psi: &'a MatrixProductState,
    sites: Vec<[ComplexMatrix; 2]>,
    right_env: Vec<ComplexMatrix>,
}

impl<'a> MpsSampler<'a> {
    pub fn new(psi: &'a MatrixProductState) -> Self {
        let n = psi.num_sites;
        let sites: Vec<[ComplexMatrix; 2]> = (0..n).map(|i| [psi.site_matrix(i, 0), psi.site_matrix(i, 1)]).collect();
        let mut right_env = vec![ComplexMatrix::identity(1); n + 1];
        for i in (0..n).rev() {
            let mut env = ComplexMatrix::zeros(psi.bond_dims[i], psi.bond_dims[i]);
            for a in &sites[i] {
                env = &env + &(&(a * &right_env[i + 1]) * &a.adjoint());
            }
            right_env[i] = env;
        }
        Self { psi, sites, right_env }
    }

    pub fn num_sites(&self) -> usize {
        self.psi.num_sites
    }

    /// Samples the first `m` sites (the rest are marginalized). Returns the bits
    /// and their exact marginal probability.
    pub fn sample_prefix(&self, m: usize, rng: &mut RngStream) -> (Vec<u8>, f64) {
        assert!(m <= self.psi.num_sites, "prefix longer than the chain");
        let mut left = vec![ONE];
        let mut bits = Vec::with_capacity(m);
        let mut prob = 1.0;
        for i in 0..m {
            let cands: Vec<Vec<C64>> = (0..2).map(|s| row_times(&left, &self.sites[i][s])).collect();
            let weights: Vec<f64> = cands.iter().map(|v| quad_form(v, &self.right_env[i + 1])).collect();
            let total = weights[0] + weights[1];
            let s = rng.categorical(&weights, total);
            prob *= weights[s] / total;
            // Renormalize the left vector to keep it O(1).
            let norm = weights[s].sqrt();
            left = cands[s].iter().map(|z| z / norm).collect();
            bits.push(s as u8);
        }
        (bits, prob)
    }

    /// Exact marginal probability of a prefix bit string.
    pub fn prefix_probability(&self, bits: &[u8]) -> f64 {
        let mut left = vec![ONE];
        for (i, &s) in bits.iter().enumerate() {
            left = row_times(&left, &self.sites[i][s as usize]);
        }
        quad_form(&left, &self.right_env[bits.len()])
    }

    /// Marginal probabilities of every prefix string of length `m`.
    pub fn prefix_distribution(&self, m: usize) -> Vec<f64> {
        let mut lefts = vec![vec![ONE]];
        for i in 0..m {
            lefts = lefts
                .iter()
                .flat_map(|l| (0..2).map(move |s| row_times(l, &self.sites[i][s])))
                .collect();
        }
        lefts.iter().map(|l| quad_form(l, &self.right_env[m])).collect()
    }
}

fn row_times(v: &[C64], m: &ComplexMatrix) -> Vec<C64> {
    (0..m.cols()).map(|b| (0..m.rows()).map(|a| v[a] * m[(a, b)]).sum()).collect()
}

/// `v E v^dagger` for a row vector `v`.
fn quad_form(v: &[C64], e: &ComplexMatrix) -> f64 {
    let mut s = ZERO;
    for a in 0..v.len() {
        for b in 0..v.len() {
            s += v[a] * e[(a, b)] * v[b].conj();
        }
    }
    s.re.max(0.0)
}

/// Draw one full bit string from `|<x|psi>|^2`, with its probability.
pub fn mps_sample(psi: &MatrixProductState, rng: &mut RngStream) -> (Vec<u8>, f64) {
    MpsSampler::new(psi).sample_prefix(psi.num_sites, rng)
}
