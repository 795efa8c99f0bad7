//! Time evolution engines and polarization observables.
//!
//! Two engines share the same state representation:
//!
//! - [`exact_propagate`] diagonalizes the dense Hamiltonian once and reuses the
//!   eigendecomposition across the whole time grid (small systems);
//! - [`ts4_propagate`] applies a symmetric fourth-order Suzuki product formula
//!   built from closed-form one- and two-site kernels, never forming the full
//!   matrix (large systems). Every kernel is exactly unitary.
//!
//! Diagonal terms are merged into a single phase kernel placed at the centre
//! of the second-order sweep, so mutually commuting contributions (for example
//! the large electron Zeeman terms) are factored exactly and do not constrain
//! the step size.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spin_model::{site_bit, site_mz, to_matrix, HamiltonianTerm, SpinSystem};

/// Exact (eigendecomposition) engine cap: 14 spins.
pub const EXACT_SITE_LIMIT: usize = 14;

/// Norm tolerance accepted on input states.
pub const NORM_TOL: f64 = 1e-8;

/// Parallel kernels kick in above this dimension.
const PAR_DIM_THRESHOLD: usize = 1 << 16;

/// Complex amplitudes over the 2^N product basis (big-endian site order,
/// ↑ = bit 0; see [`crate::spin_model`]).
#[derive(Debug, Clone)]
pub struct StateVector {
    amps: Vec<Complex64>,
    n_sites: usize,
}

impl StateVector {
    pub fn new(amps: Vec<Complex64>, n_sites: usize) -> Result<Self> {
        if amps.len() != 1 << n_sites {
            return Err(Error::InvalidParameter(format!(
                "state length {} does not match 2^{n_sites}",
                amps.len()
            )));
        }
        Ok(Self { amps, n_sites })
    }

    /// Product basis state |b⟩.
    pub fn basis_state(n_sites: usize, basis: usize) -> Self {
        let mut amps = vec![Complex64::ZERO; 1 << n_sites];
        amps[basis] = Complex64::ONE;
        Self { amps, n_sites }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in &mut self.amps {
                *a *= inv;
            }
        }
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn check_normalized(&self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm: n });
        }
        Ok(())
    }
}

/// p_i(t) = 2⟨I_iᶻ⟩ for the requested sites.
pub fn measure_polarization(psi: &StateVector, sites: &[usize]) -> Result<Vec<f64>> {
    let n = psi.n_sites;
    for &s in sites {
        if s >= n {
            return Err(Error::InvalidParameter(format!("site {s} out of range (n = {n})")));
        }
    }
    let mut acc = vec![0.0f64; sites.len()];
    for (b, a) in psi.amps.iter().enumerate() {
        let pr = a.norm_sqr();
        if pr == 0.0 {
            continue;
        }
        for (k, &s) in sites.iter().enumerate() {
            acc[k] += pr * (1.0 - 2.0 * site_bit(b, s, n) as f64);
        }
    }
    Ok(acc)
}

/// Summed polarization per site group (for example, Cayley-tree rings).
pub fn measure_group_polarization(psi: &StateVector, groups: &[Vec<usize>]) -> Result<Vec<f64>> {
    groups
        .iter()
        .map(|g| measure_polarization(psi, g).map(|v| v.iter().sum()))
        .collect()
}

/// ⟨ψ|H|ψ⟩ for a dense Hamiltonian.
pub fn energy_expectation(h: &DMatrix<Complex64>, psi: &StateVector) -> f64 {
    let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
    let hv = h * &v;
    v.dotc(&hv).re
}

/// Product of |↑⟩ on `polarized_site` with a normalized complex-Gaussian
/// random vector on the remaining sites; deterministic per seed. Emulates the
/// maximally mixed bath via random-state averaging.
pub fn random_bath_state(n_sites: usize, polarized_site: usize, seed: u64) -> Result<StateVector> {
    if polarized_site >= n_sites {
        return Err(Error::InvalidParameter(format!(
            "polarized site {polarized_site} out of range (n = {n_sites})"
        )));
    }
    let dim = 1usize << n_sites;
    let mut amps = vec![Complex64::ZERO; dim];
    if n_sites == 1 {
        amps[0] = Complex64::ONE;
        return StateVector::new(amps, n_sites);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut norm_sqr = 0.0;
    for (b, amp) in amps.iter_mut().enumerate() {
        if site_bit(b, polarized_site, n_sites) == 0 {
            let re: f64 = normal.sample(&mut rng);
            let im: f64 = normal.sample(&mut rng);
            *amp = Complex64::new(re, im);
            norm_sqr += amp.norm_sqr();
        }
    }
    let inv = 1.0 / norm_sqr.sqrt();
    for a in &mut amps {
        *a *= inv;
    }
    StateVector::new(amps, n_sites)
}

/// Eigendecomposition of a Hermitian system matrix, eigenvalues ascending.
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// Diagonalize the system Hamiltonian (dense path).
pub fn eigensystem(s: &SpinSystem) -> Result<EigenSystem> {
    if s.n_sites() > EXACT_SITE_LIMIT {
        return Err(Error::DimensionOverLimit { dim: s.dim(), limit: 1 << EXACT_SITE_LIMIT });
    }
    let h = to_matrix(s)?;
    Ok(eigensystem_of(&h))
}

/// Eigendecomposition of an explicit Hermitian matrix, eigenvalues ascending.
pub fn eigensystem_of(h: &DMatrix<Complex64>) -> EigenSystem {
    let se = h.clone().symmetric_eigen();
    let dim = h.nrows();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<Complex64>::zeros(dim, dim);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &se.eigenvectors.column(i));
    }
    EigenSystem { values, vectors }
}

impl EigenSystem {
    /// ψ(t) = V · e^{−iEt} · V† ψ0, evaluated per grid time.
    pub fn propagate(&self, psi0: &StateVector, t_grid: &[f64]) -> Vec<StateVector> {
        let v = nalgebra::DVector::from_column_slice(psi0.amplitudes());
        let coeff = self.vectors.adjoint() * &v;
        t_grid
            .iter()
            .map(|&t| {
                let phased = nalgebra::DVector::from_iterator(
                    coeff.len(),
                    coeff
                        .iter()
                        .zip(&self.values)
                        .map(|(c, &e)| c * Complex64::from_polar(1.0, -e * t)),
                );
                let out = &self.vectors * phased;
                StateVector { amps: out.as_slice().to_vec(), n_sites: psi0.n_sites }
            })
            .collect()
    }
}

/// Evolve ψ0 on the given time grid by exact eigendecomposition, reusing one
/// factorization across the grid.
pub fn exact_propagate(
    s: &SpinSystem,
    psi0: &StateVector,
    t_grid: &[f64],
) -> Result<Vec<StateVector>> {
    psi0.check_normalized()?;
    if psi0.dim() != s.dim() {
        return Err(Error::InvalidParameter("state dimension mismatch".into()));
    }
    let eig = eigensystem(s)?;
    Ok(eig.propagate(psi0, t_grid))
}

// ---------------------------------------------------------------------------
// Trotter-Suzuki kernels
// ---------------------------------------------------------------------------

/// Off-diagonal kernel shapes. Rotation angles are filled in per application.
#[derive(Debug, Clone)]
enum Kernel {
    /// coeff·Iˣ on one site: 2×2 rotation on bit-flip pairs.
    SingleX { mask: usize, coeff: f64 },
    /// coeff·SᶻIˣ: conditional rotation, sign from the control site.
    ConditionalX { control_mask: usize, target_mask: usize, coeff: f64 },
    /// coeff·(XX+YY): rotation on the {↑↓, ↓↑} pair of two sites.
    FlipFlop { mask_a: usize, mask_b: usize, coeff: f64 },
}

/// Precomputed product-formula plan for one system and step size.
///
/// The second-order sweep applies each off-diagonal kernel for τ/2, the merged
/// diagonal phase for τ, then the off-diagonal kernels in reverse; the
/// fourth-order step is the standard five-stage Suzuki composition of the
/// second-order sweep with p = 1/(4 − 4^{1/3}).
pub struct TrotterPlan {
    dim: usize,
    diagonal: Vec<f64>,
    kernels: Vec<Kernel>,
    dt: f64,
    /// Phase tables e^{−i·g·θ} for the distinct diagonal angles of one step.
    diag_tables: Vec<(f64, Vec<Complex64>)>,
}

/// Suzuki fractal coefficient p = 1/(4 − 4^{1/3}) ≈ 0.4144907717943757.
pub const SUZUKI_P: f64 = 0.4144907717943757;

fn suzuki_stages() -> [f64; 5] {
    let p = SUZUKI_P;
    [p, p, 1.0 - 4.0 * p, p, p]
}

impl TrotterPlan {
    /// Build a plan. Fails if `dt` is not below the shortest local timescale
    /// 1/max|coefficient| unless `allow_large_dt` is set.
    pub fn new(s: &SpinSystem, dt: f64, allow_large_dt: bool) -> Result<Self> {
        if dt <= 0.0 {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        let max_coeff = s.max_coefficient();
        if max_coeff > 0.0 && dt >= 1.0 / max_coeff && !allow_large_dt {
            return Err(Error::TimeStepTooLarge { dt, limit: 1.0 / max_coeff });
        }
        let n = s.n_sites();
        let dim = s.dim();
        let mut diagonal = vec![0.0f64; dim];
        let mut kernels = Vec::new();
        for term in s.terms() {
            use HamiltonianTerm::*;
            match *term {
                Zeeman { site, omega, sign } => {
                    let c = sign.factor() * omega;
                    for (b, g) in diagonal.iter_mut().enumerate() {
                        *g += c * site_mz(b, site, n);
                    }
                }
                LocalLongitudinal { site, coeff } => {
                    for (b, g) in diagonal.iter_mut().enumerate() {
                        *g += coeff * site_mz(b, site, n);
                    }
                }
                HyperfineSecular { electron, nucleus, a_zz } => {
                    for (b, g) in diagonal.iter_mut().enumerate() {
                        *g += a_zz * site_mz(b, electron, n) * site_mz(b, nucleus, n);
                    }
                }
                NuclearIsing { n1, n2, j_zz } => {
                    for (b, g) in diagonal.iter_mut().enumerate() {
                        *g += j_zz * site_mz(b, n1, n) * site_mz(b, n2, n);
                    }
                }
                LocalTransverse { site, coeff } => {
                    if coeff != 0.0 {
                        kernels.push(Kernel::SingleX { mask: 1 << (n - 1 - site), coeff });
                    }
                }
                HyperfinePseudosecular { electron, nucleus, a_zx } => {
                    if a_zx != 0.0 {
                        kernels.push(Kernel::ConditionalX {
                            control_mask: 1 << (n - 1 - electron),
                            target_mask: 1 << (n - 1 - nucleus),
                            coeff: a_zx,
                        });
                    }
                }
                ElectronFlipFlop { e1, e2, j_d } => {
                    if j_d != 0.0 {
                        kernels.push(Kernel::FlipFlop {
                            mask_a: 1 << (n - 1 - e1),
                            mask_b: 1 << (n - 1 - e2),
                            coeff: j_d,
                        });
                    }
                }
                NuclearXy { n1, n2, j_xy } => {
                    if j_xy != 0.0 {
                        kernels.push(Kernel::FlipFlop {
                            mask_a: 1 << (n - 1 - n1),
                            mask_b: 1 << (n - 1 - n2),
                            coeff: j_xy,
                        });
                    }
                }
            }
        }
        let mut plan = Self { dim, diagonal, kernels, dt, diag_tables: Vec::new() };
        plan.build_diag_tables();
        Ok(plan)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn build_diag_tables(&mut self) {
        let stages = suzuki_stages();
        let mut angles: Vec<f64> = Vec::new();
        for &c in &stages {
            let theta = c * self.dt;
            if !angles.iter().any(|&a| a == theta) {
                angles.push(theta);
            }
        }
        self.diag_tables = angles
            .into_iter()
            .map(|theta| {
                let table: Vec<Complex64> = self
                    .diagonal
                    .iter()
                    .map(|&g| Complex64::from_polar(1.0, -g * theta))
                    .collect();
                (theta, table)
            })
            .collect();
    }

    fn apply_diag(&self, amps: &mut [Complex64], theta: f64) {
        // exact table when available, otherwise compute phases on the fly
        if let Some((_, table)) = self.diag_tables.iter().find(|(a, _)| *a == theta) {
            if amps.len() >= PAR_DIM_THRESHOLD {
                amps.par_iter_mut().zip(table.par_iter()).for_each(|(a, ph)| *a *= ph);
            } else {
                for (a, ph) in amps.iter_mut().zip(table) {
                    *a *= ph;
                }
            }
        } else {
            for (a, &g) in amps.iter_mut().zip(&self.diagonal) {
                *a *= Complex64::from_polar(1.0, -g * theta);
            }
        }
    }

    fn apply_kernel(&self, kernel: &Kernel, amps: &mut [Complex64], tau: f64) {
        match *kernel {
            Kernel::SingleX { mask, coeff } => {
                let half = coeff * tau * 0.5;
                let (c, s) = (half.cos(), half.sin());
                pair_rotate(amps, mask, c, s, self.dim);
            }
            Kernel::ConditionalX { control_mask, target_mask, coeff } => {
                // rotation angle ±coeff/2 by control bit (m_c = ±1/2)
                let half_up = coeff * 0.5 * tau * 0.5;
                let (cu, su) = (half_up.cos(), half_up.sin());
                conditional_rotate(amps, control_mask, target_mask, cu, su, self.dim);
            }
            Kernel::FlipFlop { mask_a, mask_b, coeff } => {
                let half = coeff * tau * 0.5;
                let (c, s) = (half.cos(), half.sin());
                flip_flop_rotate(amps, mask_a, mask_b, c, s, self.dim);
            }
        }
    }

    /// One second-order (Strang) sweep of length tau.
    fn strang(&self, amps: &mut [Complex64], tau: f64) {
        for k in &self.kernels {
            self.apply_kernel(k, amps, tau * 0.5);
        }
        self.apply_diag(amps, tau);
        for k in self.kernels.iter().rev() {
            self.apply_kernel(k, amps, tau * 0.5);
        }
    }

    /// One fourth-order step of length `self.dt`.
    pub fn step(&self, amps: &mut [Complex64]) {
        for &c in &suzuki_stages() {
            self.strang(amps, c * self.dt);
        }
    }
}

/// exp(−iθ·X/…): rotate amplitude pairs (b, b|mask) by the 2×2 kernel
/// [[cos, −i·sin], [−i·sin, cos]].
fn pair_rotate(amps: &mut [Complex64], mask: usize, c: f64, s: f64, dim: usize) {
    let run = |chunk: &mut [Complex64]| {
        for b in 0..chunk.len() {
            if b & mask == 0 {
                let b2 = b | mask;
                let (x, y) = (chunk[b], chunk[b2]);
                chunk[b] = c * x - Complex64::i() * s * y;
                chunk[b2] = c * y - Complex64::i() * s * x;
            }
        }
    };
    if dim >= PAR_DIM_THRESHOLD {
        par_blocks(amps, mask, run);
    } else {
        run(amps);
    }
}

fn conditional_rotate(
    amps: &mut [Complex64],
    control_mask: usize,
    target_mask: usize,
    cu: f64,
    su: f64,
    dim: usize,
) {
    let run = |chunk: &mut [Complex64]| {
        for b in 0..chunk.len() {
            if b & target_mask == 0 {
                let b2 = b | target_mask;
                // m_control = +1/2 rotates by +θ, −1/2 by −θ
                let sgn = if b & control_mask == 0 { su } else { -su };
                let (x, y) = (chunk[b], chunk[b2]);
                chunk[b] = cu * x - Complex64::i() * sgn * y;
                chunk[b2] = cu * y - Complex64::i() * sgn * x;
            }
        }
    };
    if dim >= PAR_DIM_THRESHOLD {
        par_blocks(amps, control_mask.max(target_mask), run);
    } else {
        run(amps);
    }
}

fn flip_flop_rotate(
    amps: &mut [Complex64],
    mask_a: usize,
    mask_b: usize,
    c: f64,
    s: f64,
    dim: usize,
) {
    let both = mask_a | mask_b;
    let run = |chunk: &mut [Complex64]| {
        for b in 0..chunk.len() {
            if b & both == mask_b {
                // b has site a = ↑ and site b = ↓; the partner swaps them
                let b2 = b ^ both;
                let (x, y) = (chunk[b], chunk[b2]);
                chunk[b] = c * x - Complex64::i() * s * y;
                chunk[b2] = c * y - Complex64::i() * s * x;
            }
        }
    };
    if dim >= PAR_DIM_THRESHOLD {
        par_blocks(amps, mask_a.max(mask_b), run);
    } else {
        run(amps);
    }
}

/// Split `amps` into chunks whose boundaries never separate a rotation pair:
/// the chunk size is a multiple of twice the highest touched bit mask, so
/// chunk-relative indices preserve every touched bit and partners stay within
/// one chunk. Work inside a chunk is bitwise identical regardless of the
/// worker count.
fn par_blocks<F>(amps: &mut [Complex64], max_mask: usize, f: F)
where
    F: Fn(&mut [Complex64]) + Sync,
{
    let unit = (max_mask << 1).max(1 << 12);
    amps.par_chunks_mut(unit).for_each(|chunk| f(chunk));
}

/// Propagate with the fourth-order Trotter–Suzuki product formula.
///
/// `t_grid` must be non-negative and ascending; each interval is subdivided
/// into steps of at most `dt` (the actual substep is Δt/⌈Δt/dt⌉ so grid times
/// are hit exactly). Set `allow_large_dt` to bypass the local-timescale guard,
/// e.g. when a large commuting term (electron Zeeman) dominates the
/// coefficient scale.
pub fn ts4_propagate(
    s: &SpinSystem,
    psi0: &StateVector,
    t_grid: &[f64],
    dt: f64,
    allow_large_dt: bool,
) -> Result<Vec<StateVector>> {
    psi0.check_normalized()?;
    if psi0.dim() != s.dim() {
        return Err(Error::InvalidParameter("state dimension mismatch".into()));
    }
    for w in t_grid.windows(2) {
        if w[1] < w[0] {
            return Err(Error::InvalidParameter("time grid must be ascending".into()));
        }
    }
    if t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("time grid must be non-negative".into()));
    }

    let mut out = Vec::with_capacity(t_grid.len());
    let mut amps = psi0.amps.clone();
    let mut t_now = 0.0f64;
    let mut plan_cache: Vec<(f64, TrotterPlan)> = Vec::new();
    for &t in t_grid {
        let span = t - t_now;
        if span > 0.0 {
            let n_steps = (span / dt).ceil().max(1.0) as usize;
            let sub = span / n_steps as f64;
            let plan = match plan_cache.iter().position(|(s0, _)| *s0 == sub) {
                Some(i) => &plan_cache[i].1,
                None => {
                    let p = TrotterPlan::new(s, sub, allow_large_dt)?;
                    plan_cache.push((sub, p));
                    &plan_cache.last().unwrap().1
                }
            };
            for _ in 0..n_steps {
                plan.step(&mut amps);
            }
            t_now = t;
        }
        out.push(StateVector { amps: amps.clone(), n_sites: psi0.n_sites });
    }
    Ok(out)
}

/// Automatic step selection by step-doubling: runs at `dt` and `dt/2` and
/// accepts once the maximum per-site polarization deviation over the grid is
/// within `tol` (the finer result is returned).
pub struct ConvergedRun {
    pub dt: f64,
    pub states: Vec<StateVector>,
    pub deviation: f64,
}

pub fn ts4_propagate_auto(
    s: &SpinSystem,
    psi0: &StateVector,
    t_grid: &[f64],
    start_dt: f64,
    tol: f64,
    allow_large_dt: bool,
) -> Result<ConvergedRun> {
    let sites: Vec<usize> = (0..s.n_sites()).collect();
    let mut dt = start_dt;
    let mut coarse = ts4_propagate(s, psi0, t_grid, dt, allow_large_dt)?;
    for _ in 0..16 {
        let fine = ts4_propagate(s, psi0, t_grid, dt / 2.0, allow_large_dt)?;
        let mut dev = 0.0f64;
        for (a, b) in coarse.iter().zip(&fine) {
            let pa = measure_polarization(a, &sites)?;
            let pb = measure_polarization(b, &sites)?;
            for (x, y) in pa.iter().zip(&pb) {
                dev = dev.max((x - y).abs());
            }
        }
        if dev <= tol {
            return Ok(ConvergedRun { dt: dt / 2.0, states: fine, deviation: dev });
        }
        dt /= 2.0;
        coarse = fine;
    }
    Err(Error::InvalidParameter(format!(
        "step-doubling did not converge to tol {tol} from start_dt {start_dt}"
    )))
}

/// Polarization time series for sites or site groups.
#[derive(Debug, Clone)]
pub struct PolarizationSeries {
    pub times: Vec<f64>,
    /// One row per time, one column per group.
    pub values: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    /// Standard error per entry when averaged over random bath states.
    pub std_err: Option<Vec<Vec<f64>>>,
}

impl PolarizationSeries {
    pub fn from_states(
        states: &[StateVector],
        times: &[f64],
        groups: &[Vec<usize>],
        labels: Vec<String>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(states.len());
        for st in states {
            values.push(measure_group_polarization(st, groups)?);
        }
        Ok(Self { times: times.to_vec(), values, labels, std_err: None })
    }
}
