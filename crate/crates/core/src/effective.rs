//! Perturbative effective nuclear–nuclear couplings and network Hamiltonians.
//!
//! Two parameter hierarchies give closed-form effective couplings for a
//! carbon pair bridged by an electron pair:
//!
//! - Regime 1 (hyperfine-dominated, Δ₁₂ ≳ Δ₃₄ > J_d > ω_I): a second-order
//!   field mismatch δ and a third-order flip-flop J_eff;
//! - Regime 2 (dipolar-dominated, J_d > Δ₁₂ ∼ Δ₃₄, ω_I): both arise at second
//!   order in the electron Bell basis.
//!
//! [`build_network`] assembles the nuclear-only Hamiltonian
//! H = Σ ω⁽ⁱ⁾Iᵢᶻ + Σ_{i>j} [J_zz Iᵢᶻ Iⱼᶻ + J_xy (Iᵢ⁺Iⱼ⁻ + Iᵢ⁻Iⱼ⁺)], and
//! [`cayley_tree`] produces the branching-tree geometry used for diffusion
//! runs. Note the operator identity I⁺I⁻ + I⁻I⁺ = 2(IˣIˣ + IʸIʸ): network
//! couplings are stored as coefficients of (I⁺I⁻ + I⁻I⁺) and mapped with the
//! fixed factor 2 onto XY terms.

use crate::error::{Error, Result};
use crate::spin_model::{
    FourSpinParams, HamiltonianTerm, SpinSite, SpinSystem, Species,
};

/// Default validity margin for the hierarchy checks ("a > b" is accepted when
/// a ≥ margin·b).
pub const DEFAULT_MARGIN: f64 = 2.0;

/// Mismatch ratio beyond which the regime-1 expansion is considered broken
/// (Δ₁₂ ≫ Δ₃₄ with Δ₃₄ comparable to the nuclear scale).
const LARGE_MISMATCH_RATIO: f64 = 10.0;

/// Derived single-nucleus frequencies of a four-spin parameter set.
#[derive(Debug, Clone, Copy)]
pub struct TiltedFrequencies {
    pub delta12: f64,
    pub delta34: f64,
    pub omega_z1: f64,
    pub omega_x1: f64,
    pub omega_z4: f64,
    pub omega_x4: f64,
}

impl TiltedFrequencies {
    pub fn of(p: &FourSpinParams) -> Result<Self> {
        let delta12 = p.delta12();
        let delta34 = p.delta34();
        if delta12 == 0.0 || delta34 == 0.0 {
            return Err(Error::InvalidParameter(
                "hyperfine norms must be nonzero for effective couplings".into(),
            ));
        }
        Ok(Self {
            delta12,
            delta34,
            omega_z1: p.omega_i * p.a_zz12 / delta12,
            omega_x1: p.omega_i * p.a_zx12 / delta12,
            omega_z4: p.omega_i * p.a_zz34 / delta34,
            omega_x4: p.omega_i * p.a_zx34 / delta34,
        })
    }

    /// Geometric mean of the two longitudinal frequencies, standing in for the
    /// single symbol ω of the matched-frequency simplification.
    pub fn omega_bar(&self) -> f64 {
        (self.omega_z1.abs() * self.omega_z4.abs()).sqrt()
    }
}

/// Regime 1 (hyperfine-dominated) effective parameters, rad/s.
#[derive(Debug, Clone, Copy)]
pub struct Regime1Result {
    /// Second-order field mismatch δ.
    pub delta1: f64,
    /// Third-order flip-flop coupling J_eff.
    pub j_eff1: f64,
    /// Critical electron dipolar coupling where δ = J_eff.
    pub j_dc: f64,
    /// ω used in the formulas (geometric mean of the ω_z's).
    pub omega_bar: f64,
    /// Hierarchy Δ₁₂ ≳ Δ₃₄ > J_d > ω_I holds at the requested margin.
    pub hierarchy_ok: bool,
    /// Strong hyperfine mismatch: the expansion fails (single-spin flips only).
    pub large_mismatch: bool,
}

/// Effective couplings in the hyperfine-dominated hierarchy:
/// δ = 2ω_x⁽¹⁾ω_x⁽⁴⁾ω·|Δ₁₂² − Δ₃₄²|/(Δ₁₂²Δ₃₄²),
/// J_eff = 4ω_x⁽¹⁾ω_x⁽⁴⁾J_d/(Δ₁₂Δ₃₄),
/// J_d^c = ω·|Δ₁₂² − Δ₃₄²|/(2Δ₁₂Δ₃₄).
pub fn regime1(p: &FourSpinParams, margin: f64) -> Result<Regime1Result> {
    let f = TiltedFrequencies::of(p)?;
    let omega_bar = f.omega_bar();
    let d12sq = f.delta12 * f.delta12;
    let d34sq = f.delta34 * f.delta34;
    let mismatch = (d12sq - d34sq).abs();
    let delta1 = 2.0 * f.omega_x1.abs() * f.omega_x4.abs() * omega_bar * mismatch / (d12sq * d34sq);
    let j_eff1 = 4.0 * f.omega_x1.abs() * f.omega_x4.abs() * p.j_d.abs() / (f.delta12 * f.delta34);
    let j_dc = omega_bar * mismatch / (2.0 * f.delta12 * f.delta34);
    let hierarchy_ok = f.delta12 >= f.delta34
        && f.delta34 >= margin * p.j_d.abs()
        && p.j_d.abs() >= margin * p.omega_i;
    let large_mismatch = f.delta12 >= LARGE_MISMATCH_RATIO * f.delta34
        && f.delta34 <= LARGE_MISMATCH_RATIO * omega_bar;
    Ok(Regime1Result { delta1, j_eff1, j_dc, omega_bar, hierarchy_ok, large_mismatch })
}

/// Regime 2 (dipolar-dominated) effective parameters, rad/s.
#[derive(Debug, Clone, Copy)]
pub struct Regime2Result {
    /// Second-order field mismatch δ.
    pub delta2: f64,
    /// Second-order flip-flop coupling J_eff.
    pub j_eff2: f64,
    /// Hierarchy J_d > Δ₁₂ ∼ Δ₃₄ holds at the requested margin.
    pub hierarchy_ok: bool,
}

/// Effective couplings in the dipolar-dominated hierarchy:
/// δ = ω_I·|a_zx34² − a_zx12²|/(8J_d²), J_eff = a_zx34·a_zx12/(4J_d).
/// δ ≤ (ω_I/J_d)·J_eff < J_eff always holds, so this regime is delocalized.
pub fn regime2(p: &FourSpinParams, margin: f64) -> Result<Regime2Result> {
    if p.j_d == 0.0 {
        return Err(Error::InvalidParameter("regime 2 requires a nonzero J_d".into()));
    }
    let jd = p.j_d.abs();
    let delta2 = p.omega_i * (p.a_zx34 * p.a_zx34 - p.a_zx12 * p.a_zx12).abs() / (8.0 * jd * jd);
    let j_eff2 = (p.a_zx34 * p.a_zx12).abs() / (4.0 * jd);
    let hierarchy_ok = jd >= margin * p.delta12() && jd >= margin * p.delta34();
    debug_assert!(delta2 <= j_eff2 * (p.omega_i / jd) * (1.0 + 1e-12) || j_eff2 == 0.0);
    Ok(Regime2Result { delta2, j_eff2, hierarchy_ok })
}

/// Order-of-magnitude flip-flop estimate J_eff ≈ ω₁²·J_d/(2Ā²) for an average
/// hyperfine coupling Ā.
pub fn coupling_estimate(a_bar: f64, j_d: f64, omega_1: f64) -> f64 {
    omega_1 * omega_1 * j_d / (2.0 * a_bar * a_bar)
}

/// The two published forms of the delocalization threshold on J_d.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdComparison {
    /// ω₁·Ā·δA/(Ā² − δA²).
    pub main_form: f64,
    /// ω·Ā·δA/(Ā² − δA²/4), the second-order form expressed in (Ā, δA).
    pub second_order_form: f64,
    /// main/second-order ratio = (Ā² − δA²/4)/(Ā² − δA²) ≥ 1.
    pub ratio: f64,
}

/// Evaluate both threshold expressions for mean coupling Ā and mismatch δA.
/// Rejects Ā ≤ δA (the first form diverges there).
pub fn delocalization_threshold(a_bar: f64, delta_a: f64, omega_1: f64) -> Result<ThresholdComparison> {
    if delta_a < 0.0 {
        return Err(Error::InvalidParameter("mismatch δA must be non-negative".into()));
    }
    if a_bar <= delta_a {
        return Err(Error::InvalidParameter(format!(
            "mean coupling Ā = {a_bar} must exceed the mismatch δA = {delta_a}"
        )));
    }
    let main_form = omega_1 * a_bar * delta_a / (a_bar * a_bar - delta_a * delta_a);
    // Δ₁₂ = Ā + δA/2, Δ₃₄ = Ā − δA/2 ⇒ ω|Δ₁₂²−Δ₃₄²|/(2Δ₁₂Δ₃₄) = ωĀδA/(Ā²−δA²/4)
    let second_order_form = omega_1 * a_bar * delta_a / (a_bar * a_bar - delta_a * delta_a / 4.0);
    let ratio = if delta_a == 0.0 { 1.0 } else { main_form / second_order_form };
    Ok(ThresholdComparison { main_form, second_order_form, ratio })
}

/// Two-nucleus effective system H = −(δ/2)I₁ᶻ + (δ/2)I₂ᶻ + J_eff(XX + YY).
pub fn build_effective_pair(delta: f64, j_eff: f64) -> SpinSystem {
    SpinSystem::new(
        vec![
            SpinSite::new(0, Species::Nuclear, "13C-1"),
            SpinSite::new(1, Species::Nuclear, "13C-4"),
        ],
        vec![
            HamiltonianTerm::LocalLongitudinal { site: 0, coeff: -delta / 2.0 },
            HamiltonianTerm::LocalLongitudinal { site: 1, coeff: delta / 2.0 },
            HamiltonianTerm::NuclearXy { n1: 0, n2: 1, j_xy: j_eff },
        ],
    )
    .expect("two-site pair system is always valid")
}

impl Regime1Result {
    pub fn effective_pair(&self) -> SpinSystem {
        build_effective_pair(self.delta1, self.j_eff1)
    }
}

impl Regime2Result {
    pub fn effective_pair(&self) -> SpinSystem {
        build_effective_pair(self.delta2, self.j_eff2)
    }
}

/// Maximum polarization transfer fraction of the two-level effective model,
/// J²/(J² + δ²).
pub fn max_transfer_fraction(delta: f64, j_eff: f64) -> f64 {
    if j_eff == 0.0 && delta == 0.0 {
        return 0.0;
    }
    j_eff * j_eff / (j_eff * j_eff + delta * delta)
}

/// A nuclear-network specification: local fields plus a symmetric coupling
/// table. `j_xy` entries are coefficients of (I⁺I⁻ + I⁻I⁺).
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub n_sites: usize,
    pub local_fields: Vec<f64>,
    /// (i, j, j_zz, j_xy) with i < j, no duplicates.
    pub couplings: Vec<(usize, usize, f64, f64)>,
}

impl NetworkSpec {
    /// Normalize and validate a coupling table. Entries may come in either
    /// orientation; a pair listed twice must carry identical values, otherwise
    /// the table is rejected as asymmetric.
    pub fn new(
        n_sites: usize,
        local_fields: Vec<f64>,
        couplings: Vec<(usize, usize, f64, f64)>,
    ) -> Result<Self> {
        if local_fields.len() != n_sites {
            return Err(Error::InvalidParameter(format!(
                "{} local fields for {} sites",
                local_fields.len(),
                n_sites
            )));
        }
        let mut normalized: Vec<(usize, usize, f64, f64)> = Vec::new();
        for &(i, j, zz, xy) in &couplings {
            if i >= n_sites || j >= n_sites {
                return Err(Error::InvalidParameter(format!("coupling ({i},{j}) out of range")));
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-coupling on site {i}")));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if let Some(existing) = normalized.iter().find(|&&(x, y, _, _)| (x, y) == (a, b)) {
                if existing.2 != zz || existing.3 != xy {
                    return Err(Error::InvalidParameter(format!(
                        "asymmetric coupling table for pair ({a},{b})"
                    )));
                }
            } else {
                normalized.push((a, b, zz, xy));
            }
        }
        Ok(Self { n_sites, local_fields, couplings: normalized })
    }
}

/// Assemble the nuclear-network Hamiltonian from a spec. The (I⁺I⁻ + I⁻I⁺)
/// coefficient maps onto an XY term with the fixed factor 2.
pub fn build_network(spec: &NetworkSpec) -> Result<SpinSystem> {
    let sites = (0..spec.n_sites)
        .map(|i| SpinSite::new(i, Species::Nuclear, format!("13C-{i}")))
        .collect();
    let mut terms = Vec::new();
    for (i, &w) in spec.local_fields.iter().enumerate() {
        if w != 0.0 {
            terms.push(HamiltonianTerm::LocalLongitudinal { site: i, coeff: w });
        }
    }
    for &(i, j, zz, xy) in &spec.couplings {
        if zz != 0.0 {
            terms.push(HamiltonianTerm::NuclearIsing { n1: i, n2: j, j_zz: zz });
        }
        if xy != 0.0 {
            terms.push(HamiltonianTerm::NuclearXy { n1: i, n2: j, j_xy: 2.0 * xy });
        }
    }
    SpinSystem::new(sites, terms)
}

/// A Cayley-tree network: ring sizes, site-id rings, and the underlying spec.
#[derive(Debug, Clone)]
pub struct CayleyTree {
    pub spec: NetworkSpec,
    /// Site ids per ring, ring 0 being the central spin.
    pub rings: Vec<Vec<usize>>,
    pub edges: Vec<(usize, usize)>,
}

/// Default ring sizes (branching 3, 22 sites).
pub const DEFAULT_RINGS: [usize; 4] = [1, 3, 6, 12];

/// Default per-boundary flip-flop couplings, rad/s, growing outward:
/// 2π·{1, 10, 100} kHz as coefficients of (XX + YY).
pub fn default_boundary_couplings() -> Vec<f64> {
    vec![crate::TWO_PI * 1e3, crate::TWO_PI * 1e4, crate::TWO_PI * 1e5]
}

/// Build a Cayley tree from ring sizes (1, b, b(b−1), b(b−1)², …) and one
/// flip-flop coupling per ring boundary, given as the coefficient J of
/// J·(XX + YY) (it is stored in the spec as J/2 on (I⁺I⁻ + I⁻I⁺)).
/// Local fields are zero: flip-flop terms only.
pub fn cayley_tree(ring_sizes: &[usize], boundary_xy: &[f64]) -> Result<CayleyTree> {
    if ring_sizes.is_empty() || ring_sizes[0] != 1 {
        return Err(Error::InvalidParameter("ring sizes must start with the single center".into()));
    }
    if boundary_xy.len() != ring_sizes.len() - 1 {
        return Err(Error::InvalidParameter(format!(
            "{} boundary couplings for {} ring boundaries",
            boundary_xy.len(),
            ring_sizes.len() - 1
        )));
    }
    if ring_sizes.len() > 1 {
        let b = ring_sizes[1];
        if b == 0 {
            return Err(Error::InvalidParameter("first ring must be non-empty".into()));
        }
        let mut expect = b;
        for (k, &r) in ring_sizes.iter().enumerate().skip(1) {
            if r != expect {
                return Err(Error::InvalidParameter(format!(
                    "ring {k} has {r} sites, expected {expect} for branching {b}"
                )));
            }
            expect = r * (b - 1).max(1);
        }
    }

    let n_sites: usize = ring_sizes.iter().sum();
    let mut rings: Vec<Vec<usize>> = Vec::with_capacity(ring_sizes.len());
    let mut next = 0usize;
    for &r in ring_sizes {
        rings.push((next..next + r).collect());
        next += r;
    }
    let mut edges = Vec::new();
    let mut couplings = Vec::new();
    for k in 1..rings.len() {
        let parents = &rings[k - 1];
        let children = &rings[k];
        let per = children.len() / parents.len();
        let j_pm = boundary_xy[k - 1] / 2.0;
        for (pi, &p) in parents.iter().enumerate() {
            for c in 0..per {
                let child = children[pi * per + c];
                edges.push((p, child));
                couplings.push((p, child, 0.0, j_pm));
            }
        }
    }
    let spec = NetworkSpec::new(n_sites, vec![0.0; n_sites], couplings)?;
    Ok(CayleyTree { spec, rings, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{exact_propagate, measure_polarization, StateVector};
    use crate::spin_model::to_matrix;
    use approx::assert_relative_eq;

    const TWO_PI: f64 = crate::TWO_PI;

    fn fig_params(a12_mhz: f64, a34_mhz: f64, j_d_mhz: f64) -> FourSpinParams {
        FourSpinParams::at_field(
            51e-3,
            TWO_PI * a12_mhz * 1e6,
            TWO_PI * a12_mhz * 1e6,
            TWO_PI * a34_mhz * 1e6,
            TWO_PI * a34_mhz * 1e6,
            TWO_PI * j_d_mhz * 1e6,
        )
    }

    #[test]
    fn matched_deltas_have_zero_mismatch() {
        let p = fig_params(10.0, 10.0, 1.0);
        let r = regime1(&p, DEFAULT_MARGIN).unwrap();
        assert_relative_eq!(r.delta1, 0.0);
        assert_relative_eq!(r.j_dc, 0.0);
        assert!(r.j_eff1 > 0.0);
    }

    #[test]
    fn zero_hyperfine_rejected() {
        let mut p = fig_params(10.0, 10.0, 1.0);
        p.a_zz34 = 0.0;
        p.a_zx34 = 0.0;
        assert!(regime1(&p, DEFAULT_MARGIN).is_err());
    }

    #[test]
    fn main_text_coupling_estimate_is_of_order_1_khz() {
        let j = coupling_estimate(TWO_PI * 10e6, TWO_PI * 1e6, TWO_PI * 0.56e6);
        let j_khz = j / TWO_PI / 1e3;
        assert!((0.5..=3.0).contains(&j_khz), "J_eff = {j_khz} kHz");
    }

    #[test]
    fn regime2_fig_s4_value() {
        let p = FourSpinParams::at_field(
            51e-3,
            0.0,
            TWO_PI * 1e6,
            0.0,
            TWO_PI * 0.75e6,
            TWO_PI * 1e6,
        );
        let r = regime2(&p, DEFAULT_MARGIN).unwrap();
        assert_relative_eq!(r.j_eff2 / TWO_PI, 187.5e3, max_relative = 1e-12);

        // a_zx12 = a_zx34 ⇒ δ2 = 0
        let p2 = FourSpinParams::at_field(51e-3, 0.0, TWO_PI * 1e6, 0.0, TWO_PI * 1e6, TWO_PI * 1e6);
        let r2 = regime2(&p2, DEFAULT_MARGIN).unwrap();
        assert_relative_eq!(r2.delta2, 0.0);

        // J_d = 0 rejected
        let mut p3 = p;
        p3.j_d = 0.0;
        assert!(regime2(&p3, DEFAULT_MARGIN).is_err());
    }

    #[test]
    fn threshold_forms_and_ratio() {
        // δA = 0 ⇒ both thresholds 0
        let t0 = delocalization_threshold(1.0, 0.0, 0.5).unwrap();
        assert_relative_eq!(t0.main_form, 0.0);

        // Ā = 2δ̄, δA = δ̄ ⇒ main form = (2/3)ω₁
        let t = delocalization_threshold(2.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(t.main_form, 2.0 / 3.0, max_relative = 1e-12);

        // ratio ≥ 1 and → 1 as δA → 0
        for &da in &[0.9, 0.5, 0.1, 1e-3] {
            let t = delocalization_threshold(1.0, da, 1.0).unwrap();
            let expect = (1.0 - da * da / 4.0) / (1.0 - da * da);
            assert_relative_eq!(t.ratio, expect, max_relative = 1e-9);
            assert!(t.ratio >= 1.0);
        }
        assert!(delocalization_threshold(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn effective_pair_resonant_flip_flop() {
        // δ = 0 ⇒ full-contrast flip-flop with period 2π/J_eff
        let j = TWO_PI * 1e3;
        let s = build_effective_pair(0.0, j);
        let psi0 = StateVector::basis_state(2, 0b01);
        let period = 2.0 * std::f64::consts::PI / j;
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * period / 100.0).collect();
        let states = exact_propagate(&s, &psi0, &grid).unwrap();
        let mut max_transfer: f64 = 0.0;
        for st in &states {
            let p = measure_polarization(&st, &[1]).unwrap();
            max_transfer = max_transfer.max((p[0] + 1.0) / 2.0);
        }
        assert_relative_eq!(max_transfer, 1.0, epsilon = 1e-3);
        // at half period the transfer is complete
        let mid = exact_propagate(&s, &psi0, &[period / 2.0]).unwrap();
        let p = measure_polarization(&mid[0], &[0, 1]).unwrap();
        assert_relative_eq!(p[0], -1.0, epsilon = 1e-9);
        assert_relative_eq!(p[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn two_level_transfer_formula() {
        // max transfer = J²/(J²+δ²) for the detuned pair
        let (delta, j) = (TWO_PI * 700.0, TWO_PI * 900.0);
        let s = build_effective_pair(delta, j);
        let psi0 = StateVector::basis_state(2, 0b01);
        let rabi = delta.hypot(j);
        let grid: Vec<f64> = (0..=400).map(|k| k as f64 * 2.0 * std::f64::consts::PI / rabi / 400.0 * 1.05).collect();
        let states = exact_propagate(&s, &psi0, &grid).unwrap();
        let mut max_transfer: f64 = 0.0;
        for st in &states {
            let p = measure_polarization(&st, &[1]).unwrap();
            max_transfer = max_transfer.max((p[0] + 1.0) / 2.0);
        }
        assert_relative_eq!(max_transfer, max_transfer_fraction(delta, j), epsilon = 2e-3);
    }

    #[test]
    fn network_conventions() {
        // two spins, J_xy only, equal fields: flip-flop period 2π/(2 J_xy)
        let jxy = TWO_PI * 500.0;
        let spec = NetworkSpec::new(2, vec![TWO_PI * 100.0; 2], vec![(0, 1, 0.0, jxy)]).unwrap();
        let s = build_network(&spec).unwrap();
        let psi0 = StateVector::basis_state(2, 0b01);
        let period = 2.0 * std::f64::consts::PI / (2.0 * jxy);
        let states = exact_propagate(&s, &psi0, &[period / 2.0, period]).unwrap();
        let p_half = measure_polarization(&states[0], &[0, 1]).unwrap();
        assert_relative_eq!(p_half[1], 1.0, epsilon = 1e-9);
        let p_full = measure_polarization(&states[1], &[0, 1]).unwrap();
        assert_relative_eq!(p_full[0], 1.0, epsilon = 1e-9);

        // J_zz only ⇒ diagonal Hamiltonian
        let spec_zz = NetworkSpec::new(2, vec![0.0; 2], vec![(0, 1, TWO_PI * 1e3, 0.0)]).unwrap();
        let h = to_matrix(&build_network(&spec_zz).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(h[(i, j)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn network_rejects_asymmetric_table() {
        let r = NetworkSpec::new(
            2,
            vec![0.0; 2],
            vec![(0, 1, 0.0, 1.0), (1, 0, 0.0, 2.0)],
        );
        assert!(r.is_err());
        assert!(NetworkSpec::new(2, vec![0.0; 2], vec![(0, 0, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn network_conserves_total_iz() {
        let spec = NetworkSpec::new(
            3,
            vec![TWO_PI * 50.0, 0.0, TWO_PI * 10.0],
            vec![(0, 1, TWO_PI * 20.0, TWO_PI * 100.0), (1, 2, 0.0, TWO_PI * 70.0)],
        )
        .unwrap();
        let s = build_network(&spec).unwrap();
        let h = to_matrix(&s).unwrap();
        let n = 3;
        let dim = 8;
        let mut iz = nalgebra::DMatrix::<num_complex::Complex64>::zeros(dim, dim);
        for b in 0..dim {
            let tot: f64 = (0..n).map(|s| crate::spin_model::site_mz(b, s, n)).sum();
            iz[(b, b)] = num_complex::Complex64::new(tot, 0.0);
        }
        let comm = &iz * &h - &h * &iz;
        let max = comm.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(max <= 1e-12 * h.iter().map(|c| c.norm()).fold(0.0, f64::max));
    }

    #[test]
    fn cayley_tree_shapes() {
        let t = cayley_tree(&DEFAULT_RINGS, &default_boundary_couplings()).unwrap();
        assert_eq!(t.spec.n_sites, 22);
        assert_eq!(t.edges.len(), 21);
        assert_eq!(t.rings.len(), 4);

        let t10 = cayley_tree(&[1, 3, 6], &default_boundary_couplings()[..2]).unwrap();
        assert_eq!(t10.spec.n_sites, 10);
        assert_eq!(t10.edges.len(), 9);

        assert!(cayley_tree(&[1, 3, 7], &default_boundary_couplings()[..2]).is_err());
        assert!(cayley_tree(&[1, 3, 6], &default_boundary_couplings()).is_err());
    }
}
