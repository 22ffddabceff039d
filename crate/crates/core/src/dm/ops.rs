//! Single-qubit operators and their embedding in the joint space.

use alloc::vec::Vec;

use libm::{cos, sin};
use nalgebra::DMatrix;

use crate::C64;

/// Rotation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseAxis {
    X,
    Y,
    Z,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Pauli matrix.
pub(crate) fn pauli(axis: PulseAxis) -> DMatrix<C64> {
    let z = c(0.0, 0.0);
    let v = match axis {
        PulseAxis::X => [z, c(1.0, 0.0), c(1.0, 0.0), z],
        PulseAxis::Y => [z, c(0.0, -1.0), c(0.0, 1.0), z],
        PulseAxis::Z => [c(1.0, 0.0), z, z, c(-1.0, 0.0)],
    };
    DMatrix::from_row_slice(2, 2, &v)
}

/// Spin-1/2 operator `sigma_axis / 2`.
pub fn spin_op(axis: PulseAxis) -> DMatrix<C64> {
    pauli(axis) * c(0.5, 0.0)
}

/// `exp(-i angle sigma_axis / 2)`.
pub fn rotation(axis: PulseAxis, angle: f64) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    id * c(cos(0.5 * angle), 0.0) + pauli(axis) * c(0.0, -sin(0.5 * angle))
}

/// Rotation about an in-plane axis at angle `phi` from x.
pub(crate) fn rotation_xy(phi: f64, angle: f64) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    let n = pauli(PulseAxis::X) * c(cos(phi), 0.0) + pauli(PulseAxis::Y) * c(sin(phi), 0.0);
    id * c(cos(0.5 * angle), 0.0) + n * c(0.0, -sin(0.5 * angle))
}

/// Places the 2x2 `op` on qubit `q` of `n_qubits` (qubit 0 most significant).
pub fn embed(op: &DMatrix<C64>, q: usize, n_qubits: usize) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    let mut m = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for k in 0..n_qubits {
        m = m.kronecker(if k == q { op } else { &id });
    }
    m
}

/// `I_axis` of nucleus `j` on the `2^n` nuclear space.
pub fn nuclear_spin(n: usize, j: usize, axis: PulseAxis) -> DMatrix<C64> {
    embed(&spin_op(axis), j, n)
}

/// Tensor product of the given 2x2 factors.
pub(crate) fn kron_all(factors: &[DMatrix<C64>]) -> DMatrix<C64> {
    factors
        .iter()
        .fold(DMatrix::from_element(1, 1, c(1.0, 0.0)), |m, f| m.kronecker(f))
}

/// Meter-conditioned nuclear X rotation
/// `|0><0| (x) prod_j R_x(-beta_j) + |1><1| (x) prod_j R_x(beta_j)`,
/// the effective action of a resonant decoupling train.
pub fn conditional_rotation(betas: &[f64]) -> DMatrix<C64> {
    let r0: Vec<_> = betas.iter().map(|&b| rotation(PulseAxis::X, -b)).collect();
    let r1: Vec<_> = betas.iter().map(|&b| rotation(PulseAxis::X, b)).collect();
    let (u0, u1) = (kron_all(&r0), kron_all(&r1));
    let d = u0.nrows();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&u0);
    m.view_mut((d, d), (d, d)).copy_from(&u1);
    m
}

/// `m_j` (+-1/2) of every nucleus for every nuclear basis index.
pub(crate) fn magnetic_numbers(n: usize) -> Vec<Vec<f64>> {
    (0..1usize << n)
        .map(|i| {
            (0..n)
                .map(|j| if (i >> (n - 1 - j)) & 1 == 0 { 0.5 } else { -0.5 })
                .collect()
        })
        .collect()
}

/// Applies `prod_j exp(-i theta_j I_z^j)` to a nuclear state in place.
pub(crate) fn rotate_z(rho: &mut DMatrix<C64>, m: &[Vec<f64>], theta: &[f64]) {
    let phase: Vec<f64> = m
        .iter()
        .map(|mi| mi.iter().zip(theta).map(|(a, t)| a * t).sum())
        .collect();
    let d = rho.nrows();
    for i in 0..d {
        for k in 0..d {
            if i != k {
                rho[(i, k)] *= C64::from_polar(1.0, -(phase[i] - phase[k]));
            }
        }
    }
}
