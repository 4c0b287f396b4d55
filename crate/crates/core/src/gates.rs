//! Standard gate matrices.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use crate::error::{Error, Result};
use crate::linalg::{kron, ComplexMatrix, C64, I, ONE, ZERO};

pub fn identity() -> ComplexMatrix {
    ComplexMatrix::identity(2)
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[&[ZERO, ONE], &[ONE, ZERO]])
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[&[ZERO, -I], &[I, ZERO]])
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[ONE, -ONE])
}

pub fn hadamard() -> ComplexMatrix {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    ComplexMatrix::from_rows(&[&[s, s], &[s, -s]])
}

pub fn s_gate() -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[ONE, I])
}

pub fn t_gate() -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[ONE, C64::from_polar(1.0, FRAC_PI_4)])
}

/// `Rz(θ) = diag(e^{-iθ/2}, e^{iθ/2})`.
pub fn rz(theta: f64) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[C64::from_polar(1.0, -theta / 2.0), C64::from_polar(1.0, theta / 2.0)])
}

/// Phase gate `diag(1, e^{iφ})`.
pub fn phase(phi: f64) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[ONE, C64::from_polar(1.0, phi)])
}

/// CNOT with qubit 0 as control.
pub fn cnot() -> ComplexMatrix {
    controlled(&pauli_x())
}

/// CNOT with qubit 1 as control and qubit 0 as target.
pub fn cnot_reversed() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(4, 4);
    for (i, j) in [(0, 0), (1, 3), (2, 2), (3, 1)] {
        m[(i, j)] = ONE;
    }
    m
}

pub fn cz() -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[ONE, ONE, ONE, -ONE])
}

pub fn swap() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(4, 4);
    for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        m[(i, j)] = ONE;
    }
    m
}

/// `|0><0| ⊗ I + |1><1| ⊗ u` with the control as the leading qubit.
pub fn controlled(u: &ComplexMatrix) -> ComplexMatrix {
    let d = u.rows();
    let mut m = ComplexMatrix::identity(2 * d);
    for i in 0..d {
        for j in 0..d {
            m[(d + i, d + j)] = u[(i, j)];
        }
    }
    m
}

/// Single-qubit gate acting on qubit `q` of an `n`-qubit register.
pub fn on_qubit(u: &ComplexMatrix, q: usize, n: usize) -> ComplexMatrix {
    let left = ComplexMatrix::identity(1 << q);
    let right = ComplexMatrix::identity(1 << (n - 1 - q));
    kron(&kron(&left, u), &right)
}

/// `u` applied to every one of `n` qubits.
pub fn tensor_power(u: &ComplexMatrix, n: usize) -> ComplexMatrix {
    (0..n).fold(ComplexMatrix::identity(1), |acc, _| kron(&acc, u))
}

/// Look up a single-qubit gate by name (`x`, `y`, `z`, `h`, `s`, `t`, `i`,
/// `sdg`, `tdg`, `rz(<angle>)`).
pub fn by_name(name: &str) -> Result<ComplexMatrix> {
    let lower = name.trim().to_ascii_lowercase();
    if let Some(arg) = lower.strip_prefix("rz(").and_then(|s| s.strip_suffix(')')) {
        let theta: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad rz angle {arg:?}")))?;
        return Ok(rz(theta));
    }
    Ok(match lower.as_str() {
        "i" | "id" | "identity" => identity(),
        "x" => pauli_x(),
        "y" => pauli_y(),
        "z" => pauli_z(),
        "h" | "hadamard" => hadamard(),
        "s" => s_gate(),
        "sdg" => s_gate().adjoint(),
        "t" => t_gate(),
        "tdg" => t_gate().adjoint(),
        _ => return Err(Error::InvalidArgument(format!("unknown gate {name:?}"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_gates_are_unitary() {
        for g in [pauli_x(), pauli_y(), pauli_z(), hadamard(), s_gate(), t_gate(), rz(0.7), cnot(), cnot_reversed(), cz(), swap()] {
            assert!(g.unitarity_error() < 1e-14);
        }
    }

    #[test]
    fn pauli_algebra() {
        let xy = &pauli_x() * &pauli_y();
        assert!(xy.max_abs_diff(&pauli_z().scale(I)) < 1e-15);
        let hzh = &(&hadamard() * &pauli_z()) * &hadamard();
        assert!(hzh.max_abs_diff(&pauli_x()) < 1e-15);
    }

    #[test]
    fn rz_quarter_is_t_up_to_phase() {
        assert!(rz(FRAC_PI_4).max_abs_diff_up_to_phase(&t_gate()) < 1e-15);
    }

    #[test]
    fn reversed_cnot_is_conjugated_by_swap() {
        let c = &(&swap() * &cnot()) * &swap();
        assert!(c.max_abs_diff(&cnot_reversed()) < 1e-15);
    }

    #[test]
    fn on_qubit_places_gate() {
        let m = on_qubit(&pauli_x(), 0, 2);
        assert_eq!(m, kron(&pauli_x(), &identity()));
        let m = on_qubit(&pauli_x(), 1, 2);
        assert_eq!(m, kron(&identity(), &pauli_x()));
    }

    #[test]
    fn gate_lookup() {
        assert_eq!(by_name("H").unwrap(), hadamard());
        assert!(by_name("rz(0.5)").unwrap().max_abs_diff(&rz(0.5)) < 1e-15);
        assert!(by_name("foo").is_err());
    }
}
