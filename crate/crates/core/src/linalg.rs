//! Dense complex linear algebra shared by every other module.
//!
//! Qubit 0 is the most significant bit of a computational-basis label: for an
//! `n`-qubit register, qubit `q` occupies bit `n - 1 - q` of the basis index.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tolerance used when validating Hermiticity, unitarity and normalization.
pub const VALIDATION_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted for a positive semidefinite operator.
pub const PSD_FLOOR: f64 = -1e-8;

// ---------------------------------------------------------------------------
// ComplexMatrix
// ---------------------------------------------------------------------------

/// Dense complex matrix stored in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch("matrix dimensions must be positive".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Build from real/imaginary pairs, row by row. Intended for literals.
    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.iter().flat_map(|row| row.iter().copied()).collect() }
    }

    /// Outer product `|a><b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.data[j * self.cols + i].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.data[j * self.cols + i])
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self.data[i * self.cols + i]).collect()
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = vec![ZERO; self.rows * rhs.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self { rows: self.rows, cols: rhs.cols, data: out })
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `self * rho * self^dagger`.
    pub fn conjugate(&self, rho: &Self) -> Result<Self> {
        self.matmul(rho)?.matmul(&self.adjoint())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Max-entry deviation of `U^dagger U` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let g = self.adjoint().matmul(self).expect("square");
        g.max_abs_diff(&Self::identity(self.rows))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() < tol
    }

    /// Largest-magnitude-entry comparison modulo a global phase.
    pub fn max_abs_diff_up_to_phase(&self, other: &Self) -> f64 {
        let (idx, _) = other
            .data
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .expect("nonempty");
        if self.data[idx].norm() == 0.0 {
            return self.max_abs_diff(other);
        }
        let phase = other.data[idx] / self.data[idx];
        let phase = phase / phase.norm();
        self.scale(phase).max_abs_diff(other)
    }

    /// Number of qubits when the matrix is a square power of two.
    pub fn num_qubits(&self) -> Result<usize> {
        if !self.is_square() || !self.rows.is_power_of_two() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} is not a square power-of-two operator",
                self.rows, self.cols
            )));
        }
        Ok(self.rows.trailing_zeros() as usize)
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }

    fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("conformable matrices")
    }
}

// ---------------------------------------------------------------------------
// Free functions
// ---------------------------------------------------------------------------

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut data = vec![ZERO; rows * cols];
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a.data[i * a.cols + j];
            if s == ZERO {
                continue;
            }
            for k in 0..b.rows {
                let out = &mut data[(i * b.rows + k) * cols + j * b.cols..][..b.cols];
                for (o, &x) in out.iter_mut().zip(&b.data[k * b.cols..(k + 1) * b.cols]) {
                    *o = s * x;
                }
            }
        }
    }
    ComplexMatrix { rows, cols, data }
}

/// Kronecker product of a sequence; the first factor is the most significant.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors
        .into_iter()
        .fold(ComplexMatrix::identity(1), |acc, f| kron(&acc, f))
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

fn validate_qubit_set(num_qubits: usize, qubits: &[usize]) -> Result<Vec<usize>> {
    let mut sorted = qubits.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != qubits.len() {
        return Err(Error::InvalidQubits(format!("duplicate indices in {qubits:?}")));
    }
    if let Some(&q) = sorted.iter().find(|&&q| q >= num_qubits) {
        return Err(Error::InvalidQubits(format!("qubit {q} out of range for {num_qubits} qubits")));
    }
    Ok(sorted)
}

/// Basis-index contribution of each value of a sub-register embedded at `qubits`.
fn scatter_table(num_qubits: usize, qubits: &[usize]) -> Vec<usize> {
    let m = qubits.len();
    (0..1usize << m)
        .map(|a| {
            qubits.iter().enumerate().fold(0usize, |acc, (t, &q)| {
                let bit = (a >> (m - 1 - t)) & 1;
                acc | (bit << (num_qubits - 1 - q))
            })
        })
        .collect()
}

/// Partial trace of an `n`-qubit operator, keeping `keep` in ascending qubit order.
pub fn partial_trace(m: &ComplexMatrix, keep: &[usize]) -> Result<ComplexMatrix> {
    let n = m.num_qubits()?;
    if keep.is_empty() {
        return Err(Error::InvalidQubits("keep set must be nonempty".into()));
    }
    let keep = validate_qubit_set(n, keep)?;
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let kt = scatter_table(n, &keep);
    let tt = scatter_table(n, &traced);
    let dk = kt.len();
    let dim = m.rows;
    Ok(ComplexMatrix::from_fn(dk, dk, |a, b| {
        tt.iter().map(|&r| m.data[(kt[a] | r) * dim + (kt[b] | r)]).sum()
    }))
}

/// Map from output basis index to input basis index when output qubit `q` is
/// input qubit `perm[q]`.
pub fn permutation_table(perm: &[usize]) -> Result<Vec<usize>> {
    let n = perm.len();
    let sorted = validate_qubit_set(n, perm)?;
    debug_assert_eq!(sorted.len(), n);
    Ok((0..1usize << n)
        .map(|out| {
            (0..n).fold(0usize, |acc, q| {
                let bit = (out >> (n - 1 - q)) & 1;
                acc | (bit << (n - 1 - perm[q]))
            })
        })
        .collect())
}

/// Reorder the qubits of a square operator: output qubit `q` is input qubit `perm[q]`.
pub fn permute_qubits(m: &ComplexMatrix, perm: &[usize]) -> Result<ComplexMatrix> {
    let n = m.num_qubits()?;
    if perm.len() != n {
        return Err(Error::InvalidQubits(format!("permutation of length {} for {n} qubits", perm.len())));
    }
    let table = permutation_table(perm)?;
    let d = m.rows;
    Ok(ComplexMatrix::from_fn(d, d, |i, j| m.data[table[i] * d + table[j]]))
}

/// Vector counterpart of [`permute_qubits`].
pub fn permute_qubits_vec(v: &[C64], perm: &[usize]) -> Result<Vec<C64>> {
    if v.len() != 1usize << perm.len() {
        return Err(Error::InvalidQubits(format!("permutation of length {} for vector of length {}", perm.len(), v.len())));
    }
    let table = permutation_table(perm)?;
    Ok(table.iter().map(|&src| v[src]).collect())
}

/// Spectral decomposition of a Hermitian matrix: eigenvalues (ascending) and
/// eigenvectors as the columns of the returned matrix.
pub fn eigh(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch("eigendecomposition needs a square matrix".into()));
    }
    let herm = (h + &h.adjoint()).scale_real(0.5);
    let eig = herm.to_nalgebra().symmetric_eigen();
    let mut order: Vec<usize> = (0..h.rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(h.rows, h.rows, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn eigvalsh(h: &ComplexMatrix) -> Result<Vec<f64>> {
    Ok(eigh(h)?.0)
}

/// QR factorization of a square matrix.
pub fn qr(m: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let qr = m.to_nalgebra().qr();
    (ComplexMatrix::from_nalgebra(&qr.q()), ComplexMatrix::from_nalgebra(&qr.r()))
}

/// `exp(-i h t)` for Hermitian `h`, evaluated on the spectrum.
pub fn expm_hermitian(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch("matrix exponential needs a square matrix".into()));
    }
    let err = h.hermiticity_error();
    if err > VALIDATION_TOL * h.max_abs().max(1.0) {
        return Err(Error::NotHermitian(err));
    }
    let (values, vecs) = eigh(h)?;
    Ok(spectral_unitary(&values, &vecs, t))
}

/// `V diag(exp(-i λ t)) V^dagger` from a precomputed decomposition.
pub fn spectral_unitary(values: &[f64], vecs: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let d = values.len();
    let phases: Vec<C64> = values.iter().map(|&l| C64::from_polar(1.0, -l * t)).collect();
    let mut scaled = vecs.clone();
    for i in 0..d {
        for j in 0..d {
            scaled.data[i * d + j] *= phases[j];
        }
    }
    scaled.matmul(&vecs.adjoint()).expect("square")
}

/// Bit `q` (qubit 0 = most significant) of `index` in an `n`-qubit register.
pub fn qubit_bit(index: usize, q: usize, num_qubits: usize) -> usize {
    (index >> (num_qubits - 1 - q)) & 1
}

/// Big-endian bit list of `index` over `n` bits.
pub fn index_to_bits(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|q| ((index >> (n - 1 - q)) & 1) as u8).collect()
}

pub fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// Normalized pure state of a qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::InvalidState(format!("{len} amplitudes is not a qubit register")));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n2 = norm_sqr(&amplitudes);
        if (n2 - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::InvalidState(format!("squared norm {n2} is not 1")));
        }
        Ok(Self { num_qubits: len.trailing_zeros() as usize, amplitudes })
    }

    /// Normalizes the given amplitudes first.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        let n = norm_sqr(&amplitudes).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        amplitudes.iter_mut().for_each(|z| *z /= n);
        Self::new(amplitudes)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[index] = ONE;
        Self { num_qubits, amplitudes }
    }

    pub fn zero(num_qubits: usize) -> Self {
        Self::basis(num_qubits, 0)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn evolve(&self, u: &ComplexMatrix) -> Result<Self> {
        Ok(Self { num_qubits: self.num_qubits, amplitudes: u.apply(&self.amplitudes)? })
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self {
            num_qubits: self.num_qubits + other.num_qubits,
            amplitudes: kron_vec(&self.amplitudes, &other.amplitudes),
        }
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator {
            num_qubits: self.num_qubits,
            matrix: ComplexMatrix::outer(&self.amplitudes, &self.amplitudes),
        }
    }
}

/// Mixed state of a qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    num_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let num_qubits = matrix.num_qubits()?;
        if num_qubits == 0 {
            return Err(Error::InvalidState("density operator needs at least one qubit".into()));
        }
        let herm = matrix.hermiticity_error();
        if herm > VALIDATION_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > VALIDATION_TOL || tr.im.abs() > VALIDATION_TOL {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let min = eigvalsh(&matrix)?[0];
        if min < PSD_FLOOR {
            return Err(Error::InvalidState(format!("minimum eigenvalue {min:e} below {PSD_FLOOR:e}")));
        }
        Ok(Self { num_qubits, matrix })
    }

    pub fn maximally_mixed(num_qubits: usize) -> Self {
        let d = 1usize << num_qubits;
        Self { num_qubits, matrix: ComplexMatrix::identity(d).scale_real(1.0 / d as f64) }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self { num_qubits: self.num_qubits + other.num_qubits, matrix: kron(&self.matrix, &other.matrix) }
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let matrix = partial_trace(&self.matrix, keep)?;
        Ok(Self { num_qubits: keep.len(), matrix })
    }

    /// Probabilities of computational-basis outcomes.
    pub fn diagonal_probabilities(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;
    use crate::rng::RngStream;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn random_density(n: usize, rng: &mut RngStream) -> ComplexMatrix {
        let a = random_matrix(1 << n, 1 << n, rng);
        let rho = &a * &a.adjoint();
        let tr = rho.trace().re;
        rho.scale_real(1.0 / tr)
    }

    #[test]
    fn kron_identities() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_x_z_block_structure() {
        let m = kron(&gates::pauli_x(), &gates::pauli_z());
        // X ⊗ Z = [[0, Z], [Z, 0]]
        let expected = ComplexMatrix::from_fn(4, 4, |i, j| match (i, j) {
            (0, 2) | (2, 0) => ONE,
            (1, 3) | (3, 1) => -ONE,
            _ => ZERO,
        });
        assert_eq!(m, expected);
    }

    #[test]
    fn kron_matches_four_index_loop() {
        let mut rng = RngStream::new(11, 0);
        let a = random_matrix(2, 2, &mut rng);
        let b = random_matrix(3, 3, &mut rng);
        let m = kron(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..3 {
                    for l in 0..3 {
                        assert_eq!(m[(i * 3 + k, j * 3 + l)], a[(i, j)] * b[(k, l)]);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = RngStream::new(2, 0);
        let rs = random_density(1, &mut rng);
        let re = random_density(2, &mut rng);
        let out = partial_trace(&kron(&rs, &re), &[0]).unwrap();
        assert!(out.max_abs_diff(&rs) < 1e-14);
        let out = partial_trace(&kron(&rs, &re), &[1, 2]).unwrap();
        assert!(out.max_abs_diff(&re) < 1e-14);
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = StateVector::new(vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]).unwrap();
        let rho = bell.to_density();
        for q in 0..2 {
            let red = rho.partial_trace(&[q]).unwrap();
            assert!(red.matrix().max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);
        }
    }

    #[test]
    fn partial_trace_matches_index_summation() {
        let mut rng = RngStream::new(3, 0);
        let rho = random_density(3, &mut rng);
        let out = partial_trace(&rho, &[0, 2]).unwrap();
        // rho[(a b c), (a' b' c')] summed over b = b'.
        let mut oracle = ComplexMatrix::zeros(4, 4);
        for a in 0..2 {
            for c in 0..2 {
                for a2 in 0..2 {
                    for c2 in 0..2 {
                        let mut s = ZERO;
                        for b in 0..2 {
                            s += rho[(a * 4 + b * 2 + c, a2 * 4 + b * 2 + c2)];
                        }
                        oracle[(a * 2 + c, a2 * 2 + c2)] = s;
                    }
                }
            }
        }
        assert!(out.max_abs_diff(&oracle) < 1e-12);
        assert!((out.trace() - rho.trace()).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_sets() {
        let rho = ComplexMatrix::identity(4);
        assert!(partial_trace(&rho, &[]).is_err());
        assert!(partial_trace(&rho, &[2]).is_err());
        assert!(partial_trace(&rho, &[0, 0]).is_err());
    }

    #[test]
    fn expm_zero_time_is_identity() {
        let mut rng = RngStream::new(5, 0);
        let a = random_matrix(4, 4, &mut rng);
        let h = (&a + &a.adjoint()).scale_real(0.5);
        assert!(expm_hermitian(&h, 0.0).unwrap().max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
    }

    #[test]
    fn expm_pauli_z_quarter_turn() {
        let u = expm_hermitian(&gates::pauli_z(), std::f64::consts::FRAC_PI_2).unwrap();
        let expected = ComplexMatrix::from_diagonal(&[C64::new(0.0, -1.0), C64::new(0.0, 1.0)]);
        assert!(u.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn expm_matches_taylor_series() {
        let mut rng = RngStream::new(8, 1);
        let h = crate::ensembles::gue_hamiltonian(8, false, &mut rng).unwrap();
        let t = 0.3;
        // exp(-iht) = sum_n (-iht)^n / n!
        let x = h.scale(C64::new(0.0, -t));
        let mut term = ComplexMatrix::identity(8);
        let mut sum = term.clone();
        for n in 1..40 {
            term = (&term * &x).scale_real(1.0 / n as f64);
            sum = &sum + &term;
        }
        assert!(expm_hermitian(&h, t).unwrap().max_abs_diff(&sum) < 1e-9);
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let m = ComplexMatrix::from_rows(&[&[ZERO, ONE], &[ZERO, ZERO]]);
        assert!(matches!(expm_hermitian(&m, 1.0), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn permute_qubits_swaps_operands() {
        let mut rng = RngStream::new(9, 0);
        let a = random_matrix(2, 2, &mut rng);
        let b = random_matrix(4, 4, &mut rng);
        let ab = kron(&a, &b);
        // output qubits (0,1,2) <- input qubits (1,2,0) gives b ⊗ a.
        let ba = permute_qubits(&ab, &[1, 2, 0]).unwrap();
        assert!(ba.max_abs_diff(&kron(&b, &a)) < 1e-15);
    }

    #[test]
    fn state_validation() {
        assert!(StateVector::new(vec![ONE, ONE]).is_err());
        assert!(StateVector::new(vec![ONE]).is_err());
        assert!(StateVector::normalized(vec![ONE, ONE]).is_ok());
        let bad = ComplexMatrix::from_rows(&[&[ONE, ZERO], &[ZERO, ONE]]);
        assert!(DensityOperator::new(bad).is_err());
        let neg = ComplexMatrix::from_diagonal(&[C64::new(1.5, 0.0), C64::new(-0.5, 0.0)]);
        assert!(DensityOperator::new(neg).is_err());
        assert!(DensityOperator::new(ComplexMatrix::identity(2).scale_real(0.5)).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn kron_mixed_product(seed in any::<u64>()) {
                let mut rng = RngStream::new(seed, 0);
                let a = random_matrix(2, 3, &mut rng);
                let c = random_matrix(3, 2, &mut rng);
                let b = random_matrix(2, 2, &mut rng);
                let d = random_matrix(2, 3, &mut rng);
                let lhs = &kron(&a, &b) * &kron(&c, &d);
                let rhs = kron(&(&a * &c), &(&b * &d));
                prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
            }

            #[test]
            fn partial_trace_preserves_trace(seed in any::<u64>(), mask in 1u8..15) {
                let mut rng = RngStream::new(seed, 1);
                let rho = random_density(4, &mut rng);
                let keep: Vec<usize> = (0..4).filter(|q| mask >> q & 1 == 1).collect();
                let red = partial_trace(&rho, &keep).unwrap();
                prop_assert!((red.trace() - rho.trace()).norm() < 1e-12);
            }

            #[test]
            fn expm_group_property(seed in any::<u64>(), s in -3.0f64..3.0, t in -3.0f64..3.0) {
                let mut rng = RngStream::new(seed, 2);
                let h = crate::ensembles::gue_hamiltonian(6, seed % 2 == 0, &mut rng).unwrap();
                let us = expm_hermitian(&h, s).unwrap();
                let ut = expm_hermitian(&h, t).unwrap();
                let ust = expm_hermitian(&h, s + t).unwrap();
                prop_assert!((&us * &ut).max_abs_diff(&ust) < 1e-9);
                prop_assert!(ust.unitarity_error() < 1e-10);
            }
        }
    }
}
