//! Spin systems, Hamiltonian terms, and dense matrix construction.
//!
//! Conventions, fixed across the crate:
//!
//! - every site is spin-1/2 with operator eigenvalues ±1/2;
//! - basis states are product states indexed big-endian over site ids: site 0
//!   is the most significant bit, and ↑ is bit value 0 (so basis index 0 is
//!   the all-up state);
//! - all term coefficients are angular frequencies (rad/s) and enter the
//!   Hamiltonian exactly as stated on each [`HamiltonianTerm`] variant.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense assembly is refused above this dimension (2^14).
pub const DENSE_DIM_LIMIT: usize = 1 << 14;

/// Spin species of a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Nuclear,
    Electron,
}

/// A single spin-1/2 site.
#[derive(Debug, Clone)]
pub struct SpinSite {
    pub id: usize,
    pub species: Species,
    pub label: String,
}

impl SpinSite {
    pub fn new(id: usize, species: Species, label: impl Into<String>) -> Self {
        Self { id, species, label: label.into() }
    }
}

/// Sign carried by a Zeeman term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// One- or two-site Hamiltonian term. The listed expression is the exact
/// operator contributed to H; coefficients are signed rad/s.
#[derive(Debug, Clone)]
pub enum HamiltonianTerm {
    /// sign · ω · I_site^z with ω ≥ 0.
    Zeeman { site: usize, omega: f64, sign: Sign },
    /// a_zz · S_e^z I_n^z.
    HyperfineSecular { electron: usize, nucleus: usize, a_zz: f64 },
    /// a_zx · S_e^z I_n^x.
    HyperfinePseudosecular { electron: usize, nucleus: usize, a_zx: f64 },
    /// j_d · (S_1^x S_2^x + S_1^y S_2^y) between two electrons.
    ElectronFlipFlop { e1: usize, e2: usize, j_d: f64 },
    /// j_xy · (I_1^x I_2^x + I_1^y I_2^y) between two nuclei.
    NuclearXy { n1: usize, n2: usize, j_xy: f64 },
    /// j_zz · I_1^z I_2^z between two nuclei.
    NuclearIsing { n1: usize, n2: usize, j_zz: f64 },
    /// coeff · I_site^x.
    LocalTransverse { site: usize, coeff: f64 },
    /// coeff · I_site^z.
    LocalLongitudinal { site: usize, coeff: f64 },
}

impl HamiltonianTerm {
    /// Sites the term acts on (one or two entries).
    pub fn sites(&self) -> Vec<usize> {
        use HamiltonianTerm::*;
        match *self {
            Zeeman { site, .. } | LocalTransverse { site, .. } | LocalLongitudinal { site, .. } => {
                vec![site]
            }
            HyperfineSecular { electron, nucleus, .. }
            | HyperfinePseudosecular { electron, nucleus, .. } => vec![electron, nucleus],
            ElectronFlipFlop { e1, e2, .. } => vec![e1, e2],
            NuclearXy { n1, n2, .. } => vec![n1, n2],
            NuclearIsing { n1, n2, .. } => vec![n1, n2],
        }
    }

    /// Magnitude of the term coefficient (sets the shortest local timescale).
    pub fn coefficient(&self) -> f64 {
        use HamiltonianTerm::*;
        match *self {
            Zeeman { omega, .. } => omega.abs(),
            HyperfineSecular { a_zz, .. } => a_zz.abs(),
            HyperfinePseudosecular { a_zx, .. } => a_zx.abs(),
            ElectronFlipFlop { j_d, .. } => j_d.abs(),
            NuclearXy { j_xy, .. } => j_xy.abs(),
            NuclearIsing { j_zz, .. } => j_zz.abs(),
            LocalTransverse { coeff, .. } => coeff.abs(),
            LocalLongitudinal { coeff, .. } => coeff.abs(),
        }
    }

    /// True when the term is diagonal in the product basis.
    pub fn is_diagonal(&self) -> bool {
        use HamiltonianTerm::*;
        matches!(
            self,
            Zeeman { .. } | HyperfineSecular { .. } | NuclearIsing { .. } | LocalLongitudinal { .. }
        )
    }
}

/// A set of spin-1/2 sites plus Hamiltonian terms; the single source of truth
/// for every Hamiltonian assembled in this crate.
#[derive(Debug, Clone)]
pub struct SpinSystem {
    sites: Vec<SpinSite>,
    terms: Vec<HamiltonianTerm>,
}

impl SpinSystem {
    pub fn new(sites: Vec<SpinSite>, terms: Vec<HamiltonianTerm>) -> Result<Self> {
        for (i, s) in sites.iter().enumerate() {
            if s.id != i {
                return Err(Error::InvalidSystem(format!(
                    "site ids must be consecutive from 0; found id {} at position {}",
                    s.id, i
                )));
            }
        }
        let sys = Self { sites, terms };
        for term in &sys.terms {
            sys.validate_term(term)?;
        }
        Ok(sys)
    }

    fn validate_term(&self, term: &HamiltonianTerm) -> Result<()> {
        use HamiltonianTerm::*;
        let n = self.sites.len();
        let sites = term.sites();
        for &s in &sites {
            if s >= n {
                return Err(Error::InvalidSystem(format!("term references site {s} of {n}")));
            }
        }
        if sites.len() == 2 && sites[0] == sites[1] {
            return Err(Error::InvalidSystem("two-site term with identical sites".into()));
        }
        let species = |s: usize| self.sites[s].species;
        match *term {
            Zeeman { omega, .. } => {
                if omega < 0.0 {
                    return Err(Error::InvalidParameter(
                        "Zeeman omega must be non-negative; use the sign field".into(),
                    ));
                }
            }
            HyperfineSecular { electron, nucleus, .. }
            | HyperfinePseudosecular { electron, nucleus, .. } => {
                if species(electron) != Species::Electron || species(nucleus) != Species::Nuclear {
                    return Err(Error::InvalidSystem(
                        "hyperfine term must connect one electron and one nucleus".into(),
                    ));
                }
            }
            ElectronFlipFlop { e1, e2, .. } => {
                if species(e1) != Species::Electron || species(e2) != Species::Electron {
                    return Err(Error::InvalidSystem(
                        "electron flip-flop must connect two electrons".into(),
                    ));
                }
            }
            NuclearXy { n1, n2, .. } | NuclearIsing { n1, n2, .. } => {
                if species(n1) != Species::Nuclear || species(n2) != Species::Nuclear {
                    return Err(Error::InvalidSystem(
                        "nuclear two-site term must connect two nuclei".into(),
                    ));
                }
            }
            LocalTransverse { .. } | LocalLongitudinal { .. } => {}
        }
        Ok(())
    }

    pub fn sites(&self) -> &[SpinSite] {
        &self.sites
    }

    pub fn terms(&self) -> &[HamiltonianTerm] {
        &self.terms
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Hilbert-space dimension, 2^N.
    pub fn dim(&self) -> usize {
        1usize << self.sites.len()
    }

    pub fn electron_sites(&self) -> Vec<usize> {
        self.sites.iter().filter(|s| s.species == Species::Electron).map(|s| s.id).collect()
    }

    pub fn nuclear_sites(&self) -> Vec<usize> {
        self.sites.iter().filter(|s| s.species == Species::Nuclear).map(|s| s.id).collect()
    }

    /// Largest term coefficient magnitude (rad/s).
    pub fn max_coefficient(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient()).fold(0.0, f64::max)
    }
}

/// Bit of `basis` at `site` under the big-endian convention (↑ = 0).
#[inline]
pub fn site_bit(basis: usize, site: usize, n_sites: usize) -> usize {
    (basis >> (n_sites - 1 - site)) & 1
}

/// z-projection (±1/2) of `site` within `basis`.
#[inline]
pub fn site_mz(basis: usize, site: usize, n_sites: usize) -> f64 {
    0.5 - site_bit(basis, site, n_sites) as f64
}

/// Basis-state label such as "udud" (u = ↑, d = ↓), site 0 first.
pub fn basis_label(basis: usize, n_sites: usize) -> String {
    (0..n_sites).map(|s| if site_bit(basis, s, n_sites) == 0 { 'u' } else { 'd' }).collect()
}

/// Parameter block for the two-carbon/two-electron model: a nucleus (site 0)
/// coupled to electron site 1, a nucleus (site 3) coupled to electron site 2,
/// and a dipolar flip-flop between the electrons. All values rad/s.
#[derive(Debug, Clone, Copy)]
pub struct FourSpinParams {
    pub omega_i: f64,
    pub omega_s: f64,
    pub a_zz12: f64,
    pub a_zx12: f64,
    pub a_zz34: f64,
    pub a_zx34: f64,
    pub j_d: f64,
}

impl FourSpinParams {
    /// Construct from a magnetic field (tesla) and hyperfine/dipolar couplings
    /// (rad/s); the Zeeman frequencies come from the standard gyromagnetic
    /// ratios.
    pub fn at_field(
        b_tesla: f64,
        a_zz12: f64,
        a_zx12: f64,
        a_zz34: f64,
        a_zx34: f64,
        j_d: f64,
    ) -> Self {
        Self {
            omega_i: crate::TWO_PI * crate::GAMMA_C13_HZ_PER_T * b_tesla,
            omega_s: crate::TWO_PI * crate::GAMMA_E_HZ_PER_T * b_tesla,
            a_zz12,
            a_zx12,
            a_zz34,
            a_zx34,
            j_d,
        }
    }

    /// Hyperfine norm Δ₁₂ = √(a_zz² + a_zx²) for the first pair.
    pub fn delta12(&self) -> f64 {
        self.a_zz12.hypot(self.a_zx12)
    }

    /// Hyperfine norm Δ₃₄ for the second pair.
    pub fn delta34(&self) -> f64 {
        self.a_zz34.hypot(self.a_zx34)
    }

    fn validate(&self) -> Result<()> {
        if !(self.omega_i > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nuclear Zeeman frequency must be positive, got {}",
                self.omega_i
            )));
        }
        if !(self.omega_s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "electron Zeeman frequency must be positive, got {}",
                self.omega_s
            )));
        }
        Ok(())
    }
}

/// Site indices of the four-spin model, in construction order.
pub const FOUR_SPIN_NUCLEUS_1: usize = 0;
pub const FOUR_SPIN_ELECTRON_2: usize = 1;
pub const FOUR_SPIN_ELECTRON_3: usize = 2;
pub const FOUR_SPIN_NUCLEUS_4: usize = 3;

/// Build the four-spin system
/// H = −ω_I I₁ᶻ − ω_I I₄ᶻ + ω_S S₂ᶻ + ω_S S₃ᶻ
///   + a_zz12 S₂ᶻI₁ᶻ + a_zx12 S₂ᶻI₁ˣ + a_zz34 S₃ᶻI₄ᶻ + a_zx34 S₃ᶻI₄ˣ
///   + j_d (S₂ˣS₃ˣ + S₂ʸS₃ʸ).
pub fn build_four_spin(p: &FourSpinParams) -> Result<SpinSystem> {
    p.validate()?;
    let sites = vec![
        SpinSite::new(0, Species::Nuclear, "13C-1"),
        SpinSite::new(1, Species::Electron, "P1-2"),
        SpinSite::new(2, Species::Electron, "P1-3"),
        SpinSite::new(3, Species::Nuclear, "13C-4"),
    ];
    let terms = vec![
        HamiltonianTerm::Zeeman { site: 0, omega: p.omega_i, sign: Sign::Minus },
        HamiltonianTerm::Zeeman { site: 3, omega: p.omega_i, sign: Sign::Minus },
        HamiltonianTerm::Zeeman { site: 1, omega: p.omega_s, sign: Sign::Plus },
        HamiltonianTerm::Zeeman { site: 2, omega: p.omega_s, sign: Sign::Plus },
        HamiltonianTerm::HyperfineSecular { electron: 1, nucleus: 0, a_zz: p.a_zz12 },
        HamiltonianTerm::HyperfinePseudosecular { electron: 1, nucleus: 0, a_zx: p.a_zx12 },
        HamiltonianTerm::HyperfineSecular { electron: 2, nucleus: 3, a_zz: p.a_zz34 },
        HamiltonianTerm::HyperfinePseudosecular { electron: 2, nucleus: 3, a_zx: p.a_zx34 },
        HamiltonianTerm::ElectronFlipFlop { e1: 1, e2: 2, j_d: p.j_d },
    ];
    SpinSystem::new(sites, terms)
}

/// Dense Hermitian matrix of the system Hamiltonian in the product basis.
pub fn to_matrix(s: &SpinSystem) -> Result<DMatrix<Complex64>> {
    let dim = s.dim();
    if dim > DENSE_DIM_LIMIT {
        return Err(Error::DimensionOverLimit { dim, limit: DENSE_DIM_LIMIT });
    }
    let n = s.n_sites();
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    fn add(h: &mut DMatrix<Complex64>, r: usize, c: usize, v: f64) {
        h[(r, c)] += Complex64::new(v, 0.0);
    }
    for term in s.terms() {
        use HamiltonianTerm::*;
        match *term {
            Zeeman { site, omega, sign } => {
                for b in 0..dim {
                    add(&mut h, b, b, sign.factor() * omega * site_mz(b, site, n));
                }
            }
            LocalLongitudinal { site, coeff } => {
                for b in 0..dim {
                    add(&mut h, b, b, coeff * site_mz(b, site, n));
                }
            }
            HyperfineSecular { electron, nucleus, a_zz } => {
                for b in 0..dim {
                    add(&mut h, b, b, a_zz * site_mz(b, electron, n) * site_mz(b, nucleus, n));
                }
            }
            NuclearIsing { n1, n2, j_zz } => {
                for b in 0..dim {
                    add(&mut h, b, b, j_zz * site_mz(b, n1, n) * site_mz(b, n2, n));
                }
            }
            LocalTransverse { site, coeff } => {
                let mask = 1usize << (n - 1 - site);
                for b in 0..dim {
                    if b & mask == 0 {
                        add(&mut h, b, b | mask, coeff * 0.5);
                        add(&mut h, b | mask, b, coeff * 0.5);
                    }
                }
            }
            HyperfinePseudosecular { electron, nucleus, a_zx } => {
                let mask = 1usize << (n - 1 - nucleus);
                for b in 0..dim {
                    if b & mask == 0 {
                        let v = a_zx * site_mz(b, electron, n) * 0.5;
                        add(&mut h, b, b | mask, v);
                        add(&mut h, b | mask, b, v);
                    }
                }
            }
            ElectronFlipFlop { e1, e2, j_d } => {
                flip_flop_elements(&mut h, n, e1, e2, j_d);
            }
            NuclearXy { n1, n2, j_xy } => {
                flip_flop_elements(&mut h, n, n1, n2, j_xy);
            }
        }
    }
    Ok(h)
}

fn flip_flop_elements(h: &mut DMatrix<Complex64>, n: usize, s1: usize, s2: usize, j: f64) {
    let m1 = 1usize << (n - 1 - s1);
    let m2 = 1usize << (n - 1 - s2);
    let dim = 1usize << n;
    for b in 0..dim {
        // act on |↑↓⟩ of (s1, s2): matrix element j/2 to the swapped state
        if b & m1 == 0 && b & m2 != 0 {
            let b2 = b ^ m1 ^ m2;
            h[(b, b2)] += Complex64::new(j * 0.5, 0.0);
            h[(b2, b)] += Complex64::new(j * 0.5, 0.0);
        }
    }
}

/// Per-nucleus rotation produced by [`rotate_hyperfine_frame`].
#[derive(Debug, Clone, Copy)]
pub struct HyperfineRotation {
    pub nucleus: usize,
    pub electron: usize,
    /// Hyperfine norm Δ = √(a_zz² + a_zx²).
    pub delta: f64,
    /// Longitudinal nuclear frequency ω_z = ω_I·a_zz/Δ (rad/s).
    pub omega_z: f64,
    /// Transverse nuclear frequency ω_x = ω_I·a_zx/Δ (rad/s).
    pub omega_x: f64,
    /// cos θ = a_zz/Δ of the local rotation.
    pub cos_theta: f64,
    /// sin θ = a_zx/Δ of the local rotation.
    pub sin_theta: f64,
}

/// A spin system rewritten in the per-nucleus hyperfine frame, together with
/// the rotations that produced it.
#[derive(Debug, Clone)]
pub struct HyperfineFrame {
    pub system: SpinSystem,
    pub rotations: Vec<HyperfineRotation>,
}

/// Rotate the local basis of every hyperfine-coupled nucleus so its hyperfine
/// interaction becomes Δ·SᶻĨᶻ. Single-site nuclear terms transform along
/// (−ω_I Iᶻ → −ω_z Ĩᶻ + ω_x Ĩˣ); the spectrum is preserved exactly.
///
/// Rejected: a nucleus hyperfine-coupled to more than one electron, and
/// nuclear–nuclear couplings involving a rotated nucleus (they would leave
/// the supported term set).
pub fn rotate_hyperfine_frame(s: &SpinSystem) -> Result<HyperfineFrame> {
    use HamiltonianTerm::*;
    let n = s.n_sites();
    // collect per-nucleus hyperfine components
    let mut azz = vec![0.0f64; n];
    let mut azx = vec![0.0f64; n];
    let mut partner: Vec<Option<usize>> = vec![None; n];
    for term in s.terms() {
        let (e, nu, zz, zx) = match *term {
            HyperfineSecular { electron, nucleus, a_zz } => (electron, nucleus, a_zz, 0.0),
            HyperfinePseudosecular { electron, nucleus, a_zx } => (electron, nucleus, 0.0, a_zx),
            _ => continue,
        };
        match partner[nu] {
            None => partner[nu] = Some(e),
            Some(prev) if prev == e => {}
            Some(prev) => {
                return Err(Error::FrameRotation(format!(
                    "nucleus {nu} is hyperfine-coupled to electrons {prev} and {e}"
                )))
            }
        }
        azz[nu] += zz;
        azx[nu] += zx;
    }

    let mut rotations = Vec::new();
    let mut rotated = vec![false; n];
    for site in s.nuclear_sites() {
        if let Some(e) = partner[site] {
            let delta = azz[site].hypot(azx[site]);
            if delta == 0.0 {
                continue;
            }
            let cos_theta = azz[site] / delta;
            let sin_theta = azx[site] / delta;
            rotated[site] = true;
            rotations.push(HyperfineRotation {
                nucleus: site,
                electron: e,
                delta,
                // filled below once the nuclear Zeeman term is known
                omega_z: 0.0,
                omega_x: 0.0,
                cos_theta,
                sin_theta,
            });
        }
    }

    let mut terms = Vec::new();
    for term in s.terms() {
        match *term {
            HyperfineSecular { nucleus, .. } | HyperfinePseudosecular { nucleus, .. } => {
                // replaced by the merged Δ SᶻĨᶻ term, emitted once per rotation
                let _ = nucleus;
            }
            Zeeman { site, omega, sign } if rotated[site] => {
                let rot = rotations.iter().find(|r| r.nucleus == site).unwrap();
                let c = sign.factor() * omega;
                // c·Iᶻ = c·cosθ·Ĩᶻ − c·sinθ·Ĩˣ
                terms.push(LocalLongitudinal { site, coeff: c * rot.cos_theta });
                terms.push(LocalTransverse { site, coeff: -c * rot.sin_theta });
            }
            LocalLongitudinal { site, coeff } if rotated[site] => {
                let rot = rotations.iter().find(|r| r.nucleus == site).unwrap();
                terms.push(LocalLongitudinal { site, coeff: coeff * rot.cos_theta });
                terms.push(LocalTransverse { site, coeff: -coeff * rot.sin_theta });
            }
            LocalTransverse { site, coeff } if rotated[site] => {
                let rot = rotations.iter().find(|r| r.nucleus == site).unwrap();
                // c·Iˣ = c·cosθ·Ĩˣ + c·sinθ·Ĩᶻ
                terms.push(LocalTransverse { site, coeff: coeff * rot.cos_theta });
                terms.push(LocalLongitudinal { site, coeff: coeff * rot.sin_theta });
            }
            NuclearXy { n1, n2, .. } | NuclearIsing { n1, n2, .. }
                if rotated[n1] || rotated[n2] =>
            {
                return Err(Error::FrameRotation(format!(
                    "nuclear-nuclear coupling between sites {n1} and {n2} cannot be rotated"
                )));
            }
            ref other => terms.push(other.clone()),
        }
    }
    for rot in &rotations {
        terms.push(HyperfineSecular {
            electron: rot.electron,
            nucleus: rot.nucleus,
            a_zz: rot.delta,
        });
    }

    // record ω_z/ω_x per rotation, reading ω_I off the original Zeeman term
    let mut rotations = rotations;
    for rot in &mut rotations {
        let omega_i = s
            .terms()
            .iter()
            .filter_map(|t| match *t {
                Zeeman { site, omega, sign } if site == rot.nucleus => {
                    Some(-sign.factor() * omega)
                }
                LocalLongitudinal { site, coeff } if site == rot.nucleus => Some(-coeff),
                _ => None,
            })
            .sum::<f64>();
        rot.omega_z = omega_i * rot.cos_theta;
        rot.omega_x = omega_i * rot.sin_theta;
    }

    let system = SpinSystem::new(s.sites().to_vec(), terms)?;
    Ok(HyperfineFrame { system, rotations })
}

/// Electron-subspace selector: total electron z-projection, stored in units of
/// 1/2 (`twice_sz` = number of up electrons minus number of down electrons).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubspaceSelector {
    pub twice_sz: i32,
}

impl SubspaceSelector {
    pub const ZERO: Self = Self { twice_sz: 0 };

    pub fn new(twice_sz: i32) -> Self {
        Self { twice_sz }
    }
}

/// Block of a Hamiltonian on a fixed electron-projection subspace.
#[derive(Debug, Clone)]
pub struct ProjectedBlock {
    pub matrix: DMatrix<Complex64>,
    /// Full-space basis indices spanning the block, ascending.
    pub basis: Vec<usize>,
    pub n_sites: usize,
}

impl ProjectedBlock {
    pub fn labels(&self) -> Vec<String> {
        self.basis.iter().map(|&b| basis_label(b, self.n_sites)).collect()
    }
}

/// Restrict `h` to the subspace where the electron z-projections sum to the
/// selector value. Basis states are kept in ascending index order.
pub fn project_subspace(
    h: &DMatrix<Complex64>,
    s: &SpinSystem,
    sel: SubspaceSelector,
) -> Result<ProjectedBlock> {
    let n = s.n_sites();
    let dim = s.dim();
    if h.nrows() != dim || h.ncols() != dim {
        return Err(Error::InvalidParameter(format!(
            "matrix is {}x{} but the system dimension is {dim}",
            h.nrows(),
            h.ncols()
        )));
    }
    let electrons = s.electron_sites();
    let basis: Vec<usize> = (0..dim)
        .filter(|&b| {
            let twice: i32 =
                electrons.iter().map(|&e| 1 - 2 * site_bit(b, e, n) as i32).sum();
            twice == sel.twice_sz
        })
        .collect();
    if basis.is_empty() {
        return Err(Error::EmptySubspace);
    }
    let k = basis.len();
    let mut block = DMatrix::<Complex64>::zeros(k, k);
    for (i, &bi) in basis.iter().enumerate() {
        for (j, &bj) in basis.iter().enumerate() {
            block[(i, j)] = h[(bi, bj)];
        }
    }
    Ok(ProjectedBlock { matrix: block, basis, n_sites: n })
}

/// Zero-projection block rewritten in the electron-pair Bell basis
/// |±⟩ = (|↑↓⟩ ± |↓↑⟩)/√2.
#[derive(Debug, Clone)]
pub struct BellBlock {
    pub matrix: DMatrix<Complex64>,
    /// Labels such as "u-u" / "u+u": nucleus 1 state, Bell state, nucleus 4 state.
    pub labels: Vec<String>,
}

/// Rewrite the zero-projection block of a two-electron system in the electron
/// Bell basis. Output ordering: nuclear configurations ascending (as in the
/// input block), |−⟩ before |+⟩ within each configuration.
pub fn bell_transform_electrons(block: &ProjectedBlock, s: &SpinSystem) -> Result<BellBlock> {
    let electrons = s.electron_sites();
    if electrons.len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "Bell transform needs exactly 2 electron sites, found {}",
            electrons.len()
        )));
    }
    let n = s.n_sites();
    let (e1, e2) = (electrons[0], electrons[1]);
    let expected = 1usize << (n - 1);
    if block.basis.len() != expected {
        return Err(Error::InvalidParameter(format!(
            "expected the zero-projection block of dimension {expected}, got {}",
            block.basis.len()
        )));
    }
    let me1 = 1usize << (n - 1 - e1);
    let me2 = 1usize << (n - 1 - e2);
    // positions of the e1=↑,e2=↓ states; their partners are the bit-swapped ones
    let pos: std::collections::HashMap<usize, usize> =
        block.basis.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut ud_states: Vec<usize> = block
        .basis
        .iter()
        .copied()
        .filter(|&b| b & me1 == 0 && b & me2 != 0)
        .collect();
    ud_states.sort_unstable();
    let half = ud_states.len();
    if half * 2 != block.basis.len() {
        return Err(Error::InvalidParameter(
            "block is not a zero-projection block of the electron pair".into(),
        ));
    }

    let k = block.basis.len();
    let mut u = DMatrix::<Complex64>::zeros(k, k);
    let mut labels = Vec::with_capacity(k);
    let inv_sqrt2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    for (cfg, &b_ud) in ud_states.iter().enumerate() {
        let b_du = b_ud ^ me1 ^ me2;
        let i_ud = pos[&b_ud];
        let i_du = pos[&b_du];
        let nuc_label: String = (0..n)
            .filter(|&site| site != e1 && site != e2)
            .map(|site| if site_bit(b_ud, site, n) == 0 { 'u' } else { 'd' })
            .collect();
        // |−⟩ column, then |+⟩ column
        let col_minus = 2 * cfg;
        u[(i_ud, col_minus)] = inv_sqrt2;
        u[(i_du, col_minus)] = -inv_sqrt2;
        u[(i_ud, col_minus + 1)] = inv_sqrt2;
        u[(i_du, col_minus + 1)] = inv_sqrt2;
        let (first, second) = nuc_label.split_at(nuc_label.len().min(1));
        labels.push(format!("{first}-{second}"));
        labels.push(format!("{first}+{second}"));
    }
    let matrix = u.adjoint() * &block.matrix * &u;
    Ok(BellBlock { matrix, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn fig_s3_params(j_d_hz: f64) -> FourSpinParams {
        FourSpinParams::at_field(
            51e-3,
            crate::TWO_PI * 40e6,
            crate::TWO_PI * 40e6,
            crate::TWO_PI * 9e6,
            crate::TWO_PI * 9e6,
            crate::TWO_PI * j_d_hz,
        )
    }

    #[test]
    fn single_spin_zeeman_matrix() {
        let s = SpinSystem::new(
            vec![SpinSite::new(0, Species::Nuclear, "n")],
            vec![HamiltonianTerm::Zeeman { site: 0, omega: 2.0, sign: Sign::Plus }],
        )
        .unwrap();
        let h = to_matrix(&s).unwrap();
        assert_relative_eq!(h[(0, 0)].re, 1.0);
        assert_relative_eq!(h[(1, 1)].re, -1.0);
        assert_eq!(h[(0, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn noninteracting_four_spin_is_diagonal_with_zeeman_sums() {
        let p = FourSpinParams {
            omega_i: 1.0,
            omega_s: 10.0,
            a_zz12: 0.0,
            a_zx12: 0.0,
            a_zz34: 0.0,
            a_zx34: 0.0,
            j_d: 0.0,
        };
        let h = to_matrix(&build_four_spin(&p).unwrap()).unwrap();
        for b in 0..16usize {
            for c in 0..16usize {
                if b != c {
                    assert_eq!(h[(b, c)], Complex64::new(0.0, 0.0));
                }
            }
            let expect = -1.0 * site_mz(b, 0, 4) - site_mz(b, 3, 4)
                + 10.0 * (site_mz(b, 1, 4) + site_mz(b, 2, 4));
            assert_relative_eq!(h[(b, b)].re, expect, max_relative = 1e-14);
        }
    }

    #[test]
    fn four_spin_rejects_negative_frequencies() {
        let mut p = fig_s3_params(1e6);
        p.omega_i = -p.omega_i;
        assert!(build_four_spin(&p).is_err());
    }

    #[test]
    fn hermiticity_and_electron_projection_conserved() {
        let p = fig_s3_params(1e6);
        let s = build_four_spin(&p).unwrap();
        let h = to_matrix(&s).unwrap();
        let herm_err = max_abs(&(h.clone() - h.adjoint()));
        assert!(herm_err <= 1e-12 * max_abs(&h));

        // [S2z + S3z, H] = 0
        let mut sz = DMatrix::<Complex64>::zeros(16, 16);
        for b in 0..16 {
            sz[(b, b)] = Complex64::new(site_mz(b, 1, 4) + site_mz(b, 2, 4), 0.0);
        }
        let comm = &sz * &h - &h * &sz;
        assert!(max_abs(&comm) <= 1e-12 * max_abs(&h));
    }

    #[test]
    fn hyperfine_frame_preserves_spectrum() {
        let p = fig_s3_params(1e6);
        let s = build_four_spin(&p).unwrap();
        let frame = rotate_hyperfine_frame(&s).unwrap();
        let e_lab = to_matrix(&s).unwrap().symmetric_eigen().eigenvalues;
        let e_rot = to_matrix(&frame.system).unwrap().symmetric_eigen().eigenvalues;
        let mut a: Vec<f64> = e_lab.iter().copied().collect();
        let mut b: Vec<f64> = e_rot.iter().copied().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn hyperfine_frame_rotation_values() {
        // a_zz = a_zx ⇒ ω_x = ω_I/√2
        let p = fig_s3_params(1e6);
        let frame = rotate_hyperfine_frame(&build_four_spin(&p).unwrap()).unwrap();
        let r1 = frame.rotations.iter().find(|r| r.nucleus == 0).unwrap();
        assert_relative_eq!(r1.omega_x, p.omega_i / 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(r1.delta, p.delta12(), max_relative = 1e-12);

        // a_zx = 0 ⇒ identity rotation
        let mut p2 = p;
        p2.a_zx12 = 0.0;
        let frame2 = rotate_hyperfine_frame(&build_four_spin(&p2).unwrap()).unwrap();
        let r = frame2.rotations.iter().find(|r| r.nucleus == 0).unwrap();
        assert_relative_eq!(r.omega_z, p2.omega_i, max_relative = 1e-12);
        assert_relative_eq!(r.omega_x, 0.0);
    }

    #[test]
    fn rejects_nucleus_coupled_to_two_electrons() {
        let sites = vec![
            SpinSite::new(0, Species::Nuclear, "n"),
            SpinSite::new(1, Species::Electron, "e1"),
            SpinSite::new(2, Species::Electron, "e2"),
        ];
        let terms = vec![
            HamiltonianTerm::HyperfinePseudosecular { electron: 1, nucleus: 0, a_zx: 1.0 },
            HamiltonianTerm::HyperfinePseudosecular { electron: 2, nucleus: 0, a_zx: 1.0 },
        ];
        let s = SpinSystem::new(sites, terms).unwrap();
        assert!(matches!(rotate_hyperfine_frame(&s), Err(Error::FrameRotation(_))));
    }

    #[test]
    fn zero_projection_block_is_8x8_with_expected_elements() {
        let p = fig_s3_params(1e6);
        let s = build_four_spin(&p).unwrap();
        let frame = rotate_hyperfine_frame(&s).unwrap();
        let h = to_matrix(&frame.system).unwrap();
        let block = project_subspace(&h, &frame.system, SubspaceSelector::ZERO).unwrap();
        assert_eq!(block.basis.len(), 8);
        let labels = block.labels();

        // ⟨u'udu'|H|u'duu'⟩ = j_d/2 (electron flip-flop)
        let i = labels.iter().position(|l| l == "uudu").unwrap();
        let j = labels.iter().position(|l| l == "uduu").unwrap();
        assert_relative_eq!(block.matrix[(i, j)].re, p.j_d / 2.0, max_relative = 1e-12);

        // diagonal of |u'udd'⟩ = (Δ12 + Δ34)/4 (equal ω_z on both nuclei cancels)
        let k = labels.iter().position(|l| l == "uudd").unwrap();
        assert_relative_eq!(
            block.matrix[(k, k)].re,
            (p.delta12() + p.delta34()) / 4.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn plus_one_projection_block_has_no_flip_flop_mixing() {
        let p = fig_s3_params(5e6);
        let s = build_four_spin(&p).unwrap();
        let h = to_matrix(&s).unwrap();
        let block = project_subspace(&h, &s, SubspaceSelector::new(2)).unwrap();
        assert_eq!(block.basis.len(), 4);
        // the electron pair stays |↑↑⟩: dynamics depends only on per-nucleus terms;
        // check no element couples different electron configurations (all kept
        // states share one configuration, so the block must be dense-allowed but
        // j_d must not appear anywhere: all elements are independent of j_d)
        let mut p2 = p;
        p2.j_d = crate::TWO_PI * 1e6;
        let h2 = to_matrix(&build_four_spin(&p2).unwrap()).unwrap();
        let block2 = project_subspace(&h2, &s, SubspaceSelector::new(2)).unwrap();
        let diff = max_abs(&(block2.matrix.clone() - block.matrix.clone()));
        assert!(diff <= 1e-12 * max_abs(&block.matrix));
    }

    #[test]
    fn empty_subspace_is_rejected() {
        let p = fig_s3_params(1e6);
        let s = build_four_spin(&p).unwrap();
        let h = to_matrix(&s).unwrap();
        assert!(matches!(
            project_subspace(&h, &s, SubspaceSelector::new(3)),
            Err(Error::EmptySubspace)
        ));
    }

    #[test]
    fn bell_block_matches_quasi_degenerate_structure() {
        // lab frame, a_zz = 0: ⟨u−u|H|u−u⟩ = −ω_I − j_d/2
        let p = FourSpinParams {
            omega_i: crate::TWO_PI * 0.546e6,
            omega_s: crate::TWO_PI * 1.43e9,
            a_zz12: 0.0,
            a_zx12: crate::TWO_PI * 1e6,
            a_zz34: 0.0,
            a_zx34: crate::TWO_PI * 0.75e6,
            j_d: crate::TWO_PI * 5e6,
        };
        let s = build_four_spin(&p).unwrap();
        let h = to_matrix(&s).unwrap();
        let block = project_subspace(&h, &s, SubspaceSelector::ZERO).unwrap();
        let bell = bell_transform_electrons(&block, &s).unwrap();
        let i = bell.labels.iter().position(|l| l == "u-u").unwrap();
        assert_relative_eq!(
            bell.matrix[(i, i)].re,
            -p.omega_i - p.j_d / 2.0,
            max_relative = 1e-12
        );

        // j_d = 0 ⇒ |±⟩ degenerate pairwise
        let mut p0 = p;
        p0.j_d = 0.0;
        let s0 = build_four_spin(&p0).unwrap();
        let h0 = to_matrix(&s0).unwrap();
        let b0 = project_subspace(&h0, &s0, SubspaceSelector::ZERO).unwrap();
        let bell0 = bell_transform_electrons(&b0, &s0).unwrap();
        for cfg in 0..4 {
            let d_minus = bell0.matrix[(2 * cfg, 2 * cfg)].re;
            let d_plus = bell0.matrix[(2 * cfg + 1, 2 * cfg + 1)].re;
            assert_relative_eq!(d_minus, d_plus, epsilon = 1e-9);
        }

        // a_zx12 = a_zx34 = 0 ⇒ block diagonal in nuclear projections
        let mut pz = p;
        pz.a_zx12 = 0.0;
        pz.a_zx34 = 0.0;
        let sz = build_four_spin(&pz).unwrap();
        let hz = to_matrix(&sz).unwrap();
        let bz = project_subspace(&hz, &sz, SubspaceSelector::ZERO).unwrap();
        let bellz = bell_transform_electrons(&bz, &sz).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let same_nuclei = (bellz.labels[i].as_bytes()[0], bellz.labels[i].as_bytes()[2])
                    == (bellz.labels[j].as_bytes()[0], bellz.labels[j].as_bytes()[2]);
                if !same_nuclei {
                    assert!(bellz.matrix[(i, j)].norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn bell_transform_rejects_wrong_block() {
        let p = fig_s3_params(1e6);
        let s = build_four_spin(&p).unwrap();
        let h = to_matrix(&s).unwrap();
        let block = project_subspace(&h, &s, SubspaceSelector::new(2)).unwrap();
        assert!(bell_transform_electrons(&block, &s).is_err());
    }
}
