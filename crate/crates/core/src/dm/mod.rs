//! Density-matrix engine: an electron-spin meter (levels `m_S = 0, -1`)
//! coupled to up to three nuclear spins.
//!
//! Basis ordering: the meter is the most significant qubit, nucleus `j` the
//! next ones in order, so a joint index is `meter * 2^N + nuclear`. Qubit
//! state `|0>` is spin up (`I_z = +1/2`); for the meter it is `m_S = 0`.

mod engine;
mod ops;

use alloc::vec::Vec;

use libm::exp;
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};

pub use engine::{
    block_unitary, polarize_repetitive, run_protocol, Coupling, EngineConfig, KickMode, MeasurementRecord,
    PulseCycle, ReadoutMode, RecordMeta, ReinitKicks, Sample, Simulator,
};
pub use ops::{conditional_rotation, embed, nuclear_spin, rotation, spin_op, PulseAxis};

/// Largest number of nuclei held in the dense engine.
pub const MAX_NUCLEI: usize = 3;

/// Hyperfine couplings of one nucleus to the meter (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nucleus {
    pub a_par: f64,
    pub a_perp: f64,
}

impl Nucleus {
    /// Effective coupling under a resonant decoupling train, `a_perp / pi`.
    pub fn coupling(&self) -> f64 {
        self.a_perp / core::f64::consts::PI
    }
}

/// Meter plus nuclei in a bias field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    /// Bias field (T).
    pub b0: f64,
    /// Nuclear gyromagnetic ratio (rad/s/T).
    pub gamma_n: f64,
    pub nuclei: Vec<Nucleus>,
}

impl SpinSystem {
    pub fn new(b0: f64, gamma_n: f64, nuclei: Vec<Nucleus>) -> Result<Self> {
        let s = Self { b0, gamma_n, nuclei };
        s.validate()?;
        Ok(s)
    }

    /// Single nucleus with bare Larmor frequency `omega_l` (rad/s), using the 13C ratio.
    pub fn single(omega_l: f64, a_par: f64, a_perp: f64) -> Result<Self> {
        let g = crate::units::GAMMA_13C;
        Self::new(omega_l / g, g, alloc::vec![Nucleus { a_par, a_perp }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.nuclei.len() > MAX_NUCLEI {
            return Err(Error::Dimension(self.nuclei.len()));
        }
        if !(self.b0.is_finite() && self.gamma_n.is_finite()) {
            return Err(Error::domain("b0 and gamma_n must be finite"));
        }
        for (j, n) in self.nuclei.iter().enumerate() {
            if !(n.a_perp >= 0.0 && n.a_perp.is_finite() && n.a_par.is_finite()) {
                return Err(Error::domain(alloc::format!(
                    "nucleus {j}: a_perp must be finite and >= 0, a_par finite"
                )));
            }
        }
        Ok(())
    }

    /// Bare Larmor frequency `gamma_n b0` (rad/s).
    pub fn omega_l(&self) -> f64 {
        self.gamma_n * self.b0
    }

    pub fn n_nuclei(&self) -> usize {
        self.nuclei.len()
    }

    /// Nuclear Hilbert dimension `2^N`.
    pub fn nuclear_dim(&self) -> usize {
        1 << self.nuclei.len()
    }
}

/// Meter level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeterLevel {
    /// `m_S = 0`, no hyperfine field.
    Zero,
    /// `m_S = -1`, hyperfine field on.
    MinusOne,
}

#[derive(Debug, Clone)]
struct Branch {
    h: DMatrix<C64>,
    vals: DVector<f64>,
    vecs: DMatrix<C64>,
}

impl Branch {
    fn new(h: DMatrix<C64>) -> Self {
        let e = h.clone().symmetric_eigen();
        Self {
            h,
            vals: e.eigenvalues,
            vecs: e.eigenvectors,
        }
    }

    fn propagator(&self, t: f64) -> DMatrix<C64> {
        let d = self.vals.len();
        let mut scaled = self.vecs.clone();
        for c in 0..d {
            let ph = C64::from_polar(1.0, -self.vals[c] * t);
            for r in 0..d {
                scaled[(r, c)] *= ph;
            }
        }
        scaled * self.vecs.adjoint()
    }
}

/// Rotating-frame Hamiltonian, held as its two meter branches
/// `H = |0><0| (x) H_0 + |1><1| (x) H_1`.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    n_nuclei: usize,
    branches: [Branch; 2],
}

impl Hamiltonian {
    pub fn n_nuclei(&self) -> usize {
        self.n_nuclei
    }

    pub fn branch(&self, level: MeterLevel) -> &DMatrix<C64> {
        &self.branches[level as usize].h
    }

    /// Eigenvalues of one branch (rad/s), ascending order not guaranteed.
    pub fn branch_eigenvalues(&self, level: MeterLevel) -> &DVector<f64> {
        &self.branches[level as usize].vals
    }

    /// Nuclear propagator `exp(-i H_level t)`.
    pub fn branch_propagator(&self, level: MeterLevel, t: f64) -> DMatrix<C64> {
        self.branches[level as usize].propagator(t)
    }

    /// Joint Hamiltonian on meter and nuclei.
    pub fn joint(&self) -> DMatrix<C64> {
        block_diag(&self.branches[0].h, &self.branches[1].h)
    }

    /// Joint propagator `exp(-i H t)`.
    pub fn propagator(&self, t: f64) -> DMatrix<C64> {
        block_diag(&self.branches[0].propagator(t), &self.branches[1].propagator(t))
    }
}

fn block_diag(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let d = a.nrows();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(a);
    m.view_mut((d, d), (d, d)).copy_from(b);
    m
}

/// Nuclear Hamiltonian seen while the meter sits in `level`:
/// `sum_j omega_l I_z^j`, plus `a_par I_z^j + a_perp I_x^j` in `m_S = -1`.
pub fn branch_hamiltonian(system: &SpinSystem, level: MeterLevel) -> Result<DMatrix<C64>> {
    system.validate()?;
    let n = system.n_nuclei();
    let d = system.nuclear_dim();
    let mut h = DMatrix::zeros(d, d);
    let w = system.omega_l();
    for (j, nuc) in system.nuclei.iter().enumerate() {
        let (wz, wx) = match level {
            MeterLevel::Zero => (w, 0.0),
            MeterLevel::MinusOne => (w + nuc.a_par, nuc.a_perp),
        };
        h += nuclear_spin(n, j, PulseAxis::Z) * C64::from(wz);
        if wx != 0.0 {
            h += nuclear_spin(n, j, PulseAxis::X) * C64::from(wx);
        }
    }
    Ok(h)
}

/// Builds and diagonalises both meter branches of the Hamiltonian.
pub fn build_hamiltonian(system: &SpinSystem) -> Result<Hamiltonian> {
    Ok(Hamiltonian {
        n_nuclei: system.n_nuclei(),
        branches: [
            Branch::new(branch_hamiltonian(system, MeterLevel::Zero)?),
            Branch::new(branch_hamiltonian(system, MeterLevel::MinusOne)?),
        ],
    })
}

/// Product state of the nuclei with `<I_z^j> = z[j]`, each factor `1/2 + 2 z I_z`.
pub fn nuclear_product_state(z: &[f64]) -> DMatrix<C64> {
    let mut m = DMatrix::from_element(1, 1, C64::from(1.0));
    for &s in z {
        let f = DMatrix::from_row_slice(2, 2, &[C64::from(0.5 + s), C64::from(0.0), C64::from(0.0), C64::from(0.5 - s)]);
        m = m.kronecker(&f);
    }
    m
}

/// Joint meter-nuclear state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_nuclei: usize,
    m: DMatrix<C64>,
}

impl DensityMatrix {
    /// Wraps a joint `2^(N+1)` square matrix.
    pub fn new(n_nuclei: usize, m: DMatrix<C64>) -> Result<Self> {
        if n_nuclei > MAX_NUCLEI {
            return Err(Error::Dimension(n_nuclei));
        }
        let d = 2 << n_nuclei;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::domain(alloc::format!(
                "expected a {d}x{d} matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { n_nuclei, m })
    }

    /// `|0><0| (x) rho_n` with the meter in `m_S = 0`.
    pub fn with_meter_reset(rho_n: &DMatrix<C64>) -> Self {
        let d = rho_n.nrows();
        let n_nuclei = d.trailing_zeros() as usize;
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(rho_n);
        Self { n_nuclei, m }
    }

    /// Meter in `m_S = 0`, nuclei in a product state with `<I_z^j> = z[j]`.
    pub fn polarized(z: &[f64]) -> Self {
        Self::with_meter_reset(&nuclear_product_state(z))
    }

    /// Meter in `m_S = 0`, nuclei fully mixed.
    pub fn thermal(n_nuclei: usize) -> Self {
        Self::polarized(&alloc::vec![0.0; n_nuclei])
    }

    pub fn n_nuclei(&self) -> usize {
        self.n_nuclei
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    /// Reduced nuclear state, tracing out the meter.
    pub fn nuclear(&self) -> DMatrix<C64> {
        let d = self.dim() / 2;
        self.m.view((0, 0), (d, d)) + self.m.view((d, d), (d, d))
    }

    /// Traces out the meter and resets it to `m_S = 0`.
    pub fn reinit_meter(&self) -> Self {
        Self::with_meter_reset(&self.nuclear())
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }

    /// `Tr(rho op)` (real part).
    pub fn expect(&self, op: &DMatrix<C64>) -> f64 {
        expect(&self.m, op)
    }

    /// Meter `<S_z>` with `m_S = 0` at `+1/2`.
    pub fn meter_sz(&self) -> f64 {
        let d = self.dim() / 2;
        let mut s = 0.0;
        for i in 0..d {
            s += 0.5 * (self.m[(i, i)].re - self.m[(i + d, i + d)].re);
        }
        s
    }

    /// `<I_axis^j>` of nucleus `j`.
    pub fn nuclear_expect(&self, j: usize, axis: PulseAxis) -> f64 {
        expect(&self.nuclear(), &nuclear_spin(self.n_nuclei, j, axis))
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.m)
    }

    /// Checks unit trace and Hermiticity to `tol` and eigenvalues to `-1e-9`.
    pub fn check(&self, tol: f64) -> Result<()> {
        check_state(&self.m, tol, true)
    }
}

pub(crate) fn expect(rho: &DMatrix<C64>, op: &DMatrix<C64>) -> f64 {
    // Tr(rho op) without forming the product
    let d = rho.nrows();
    let mut s = 0.0;
    for i in 0..d {
        for k in 0..d {
            s += (rho[(i, k)] * op[(k, i)]).re;
        }
    }
    s
}

pub(crate) fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn check_state(m: &DMatrix<C64>, tol: f64, positivity: bool) -> Result<()> {
    let tr = m.trace();
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        return Err(Error::domain(alloc::format!("trace drifted to {tr}")));
    }
    let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if herm > tol {
        return Err(Error::domain(alloc::format!("hermiticity error {herm:e}")));
    }
    if positivity {
        let e = min_eigenvalue(m);
        if e < -1e-9 {
            return Err(Error::domain(alloc::format!("negative eigenvalue {e:e}")));
        }
    }
    Ok(())
}

/// `rho -> U rho U^dagger`.
pub(crate) fn conjugate(u: &DMatrix<C64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    u * rho * u.adjoint()
}

/// Free evolution `rho -> exp(-iHt) rho exp(iHt)`.
pub fn evolve_free(rho: &DensityMatrix, h: &Hamiltonian, t: f64) -> Result<DensityMatrix> {
    if !(t >= 0.0) {
        return Err(Error::domain("evolution time must be >= 0"));
    }
    same_size(rho, h)?;
    Ok(DensityMatrix {
        n_nuclei: rho.n_nuclei,
        m: conjugate(&h.propagator(t), &rho.m),
    })
}

fn same_size(rho: &DensityMatrix, h: &Hamiltonian) -> Result<()> {
    if rho.n_nuclei != h.n_nuclei {
        return Err(Error::domain(alloc::format!(
            "state holds {} nuclei, hamiltonian {}",
            rho.n_nuclei, h.n_nuclei
        )));
    }
    Ok(())
}

/// Subsystem addressed by a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Meter,
    Nucleus(usize),
}

/// Instantaneous rotation `exp(-i angle sigma_axis / 2)` of one subsystem.
pub fn apply_pulse(rho: &DensityMatrix, target: Target, axis: PulseAxis, angle: f64) -> Result<DensityMatrix> {
    let q = match target {
        Target::Meter => 0,
        Target::Nucleus(j) if j < rho.n_nuclei => j + 1,
        Target::Nucleus(j) => {
            return Err(Error::domain(alloc::format!("no nucleus {j} in a {}-nucleus state", rho.n_nuclei)))
        }
    };
    let u = embed(&rotation(axis, angle), q, rho.n_nuclei + 1);
    Ok(DensityMatrix {
        n_nuclei: rho.n_nuclei,
        m: conjugate(&u, &rho.m),
    })
}

/// Decoupling train `pi/2 - [tau - pi - 2tau - ... - pi - tau] - pi/2` on the meter.
pub fn run_cpmg_block(
    rho: &DensityMatrix,
    h: &Hamiltonian,
    tau: f64,
    n_pulses: usize,
    phases: (crate::protocol::Axis, crate::protocol::Axis),
    cycle: PulseCycle,
) -> Result<DensityMatrix> {
    same_size(rho, h)?;
    if !(tau > 0.0) || n_pulses == 0 {
        return Err(Error::domain("decoupling needs tau > 0 and at least one pulse"));
    }
    let u = engine::cpmg_unitary(h, tau, n_pulses, phases, cycle);
    Ok(DensityMatrix {
        n_nuclei: rho.n_nuclei,
        m: conjugate(&u, &rho.m),
    })
}

/// Applies one weak measurement block `block` (a joint unitary, see
/// [`block_unitary`]) to a state whose meter sits in `m_S = 0`, reads
/// `<S_z>`, traces out the meter and re-initialises it.
pub fn weak_measurement_step(rho: &DensityMatrix, block: &DMatrix<C64>) -> Result<(DensityMatrix, f64)> {
    if block.nrows() != rho.dim() {
        return Err(Error::domain("block unitary does not match the state"));
    }
    let after = DensityMatrix {
        n_nuclei: rho.n_nuclei,
        m: conjugate(block, &rho.m),
    };
    let signal = after.meter_sz();
    Ok((after.reinit_meter(), signal))
}

/// Multiplies `rho[i][k]` by `exp(-rate t)` per nucleus whose level differs
/// between basis states `i` and `k`.
pub(crate) fn dephase(rho: &mut DMatrix<C64>, rate_t: f64) {
    if rate_t == 0.0 {
        return;
    }
    let d = rho.nrows();
    for i in 0..d {
        for k in 0..d {
            let n = (i ^ k).count_ones();
            if n > 0 {
                rho[(i, k)] *= exp(-rate_t * n as f64);
            }
        }
    }
}
