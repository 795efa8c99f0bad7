//! Curve analysis: stretched-exponential fits, inverse Laplace rate
//! densities, medians, and the effective diffusion constant.
//!
//! The stretched-exponential kernel exp(−(τ/τ_d)^ε) with ε ∈ (0, 1) is the
//! Laplace transform of a one-sided stable density. Densities are evaluated
//! with the real-axis Zolotarev integral representation, which is smooth and
//! non-negative by construction:
//!
//!   g_ε(u) = ε/((1−ε)·π·u) · ∫₀^π y·e^{−y} dφ,   y = u^{−ε/(1−ε)}·A(φ),
//!   A(φ) = sin(εφ)^{ε/(1−ε)} · sin((1−ε)φ) / sin(φ)^{1/(1−ε)},
//!
//! and L(μ; τ_d, ε) = τ_d·g_ε(μ·τ_d).

use crate::error::{Error, Result};

const PI: f64 = std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Stretched-exponential fitting
// ---------------------------------------------------------------------------

/// Fit result for S(τ) = S0 − S1·exp(−(τ/τ_d)^ε).
#[derive(Debug, Clone, Copy)]
pub struct StretchedFit {
    pub s0: f64,
    pub s1: f64,
    pub tau_d: f64,
    pub epsilon: f64,
    /// RMS of the fit residuals.
    pub residual_rms: f64,
    /// 1σ uncertainty of ln τ_d from the residual covariance.
    pub sigma_ln_tau_d: f64,
    /// 1σ uncertainty of ε from the residual covariance.
    pub sigma_epsilon: f64,
    /// ε ended on a bound of the allowed interval.
    pub epsilon_saturated: bool,
}

const EPS_LO: f64 = 0.05;
const EPS_HI: f64 = 1.5;

/// Residuals for fixed (ln τ_d, ε) with (S0, S1) eliminated by linear least
/// squares; returns (residuals, s0, s1).
fn varpro_residuals(taus: &[f64], values: &[f64], ln_tau_d: f64, eps: f64) -> (Vec<f64>, f64, f64) {
    let tau_d = ln_tau_d.exp();
    let n = taus.len();
    let e: Vec<f64> = taus.iter().map(|&t| (-(t / tau_d).powf(eps)).exp()).collect();
    // normal equations for [s0, s1] against design [1, -E]
    let (s11, mut s1e, mut see) = (n as f64, 0.0, 0.0);
    let (mut b1, mut be) = (0.0, 0.0);
    for (ei, &vi) in e.iter().zip(values) {
        s1e -= ei;
        see += ei * ei;
        b1 += vi;
        be -= ei * vi;
    }
    let det = s11 * see - s1e * s1e;
    let (s0, s1) = if det.abs() > 1e-300 {
        ((b1 * see - be * s1e) / det, (s11 * be - s1e * b1) / det)
    } else {
        (b1 / n as f64, 0.0)
    };
    let res: Vec<f64> =
        e.iter().zip(values).map(|(ei, &vi)| (s0 - s1 * ei) - vi).collect();
    (res, s0, s1)
}

fn cost(taus: &[f64], values: &[f64], p: [f64; 2]) -> f64 {
    let eps = p[1];
    if !(EPS_LO..=EPS_HI).contains(&eps) || !p[0].is_finite() {
        return f64::INFINITY;
    }
    let (res, _, _) = varpro_residuals(taus, values, p[0], eps);
    res.iter().map(|r| r * r).sum()
}

/// Deterministic Nelder–Mead on (ln τ_d, ε).
fn nelder_mead(taus: &[f64], values: &[f64], start: [f64; 2]) -> [f64; 2] {
    let f = |p: [f64; 2]| cost(taus, values, p);
    let mut simplex = [
        start,
        [start[0] + 0.4, start[1]],
        [start[0], (start[1] + 0.08).min(EPS_HI)],
    ];
    let mut fv = simplex.map(f);
    for _ in 0..600 {
        // order ascending by cost
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        let (best, mid, worst) = (idx[0], idx[1], idx[2]);
        if (fv[worst] - fv[best]).abs() <= 1e-15 * (1.0 + fv[best].abs()) {
            break;
        }
        let centroid = [
            (simplex[best][0] + simplex[mid][0]) / 2.0,
            (simplex[best][1] + simplex[mid][1]) / 2.0,
        ];
        let reflect = |alpha: f64| {
            [
                centroid[0] + alpha * (centroid[0] - simplex[worst][0]),
                centroid[1] + alpha * (centroid[1] - simplex[worst][1]),
            ]
        };
        let xr = reflect(1.0);
        let fr = f(xr);
        if fr < fv[best] {
            let xe = reflect(2.0);
            let fe = f(xe);
            if fe < fr {
                simplex[worst] = xe;
                fv[worst] = fe;
            } else {
                simplex[worst] = xr;
                fv[worst] = fr;
            }
        } else if fr < fv[mid] {
            simplex[worst] = xr;
            fv[worst] = fr;
        } else {
            let xc = reflect(-0.5);
            let fc = f(xc);
            if fc < fv[worst] {
                simplex[worst] = xc;
                fv[worst] = fc;
            } else {
                for &i in &[mid, worst] {
                    simplex[i] = [
                        (simplex[i][0] + simplex[best][0]) / 2.0,
                        (simplex[i][1] + simplex[best][1]) / 2.0,
                    ];
                    fv[i] = f(simplex[i]);
                }
            }
        }
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
    simplex[idx[0]]
}

/// Gauss–Newton polish with central-difference Jacobian and step damping.
fn polish(taus: &[f64], values: &[f64], mut p: [f64; 2]) -> [f64; 2] {
    let h = [1e-7, 1e-8];
    for _ in 0..30 {
        let (r0, _, _) = varpro_residuals(taus, values, p[0], p[1]);
        let c0: f64 = r0.iter().map(|r| r * r).sum();
        let n = taus.len();
        let mut jt_j = [[0.0f64; 2]; 2];
        let mut jt_r = [0.0f64; 2];
        let mut cols = Vec::with_capacity(2);
        for k in 0..2 {
            let mut pp = p;
            pp[k] += h[k];
            let mut pm = p;
            pm[k] -= h[k];
            let (rp, _, _) = varpro_residuals(taus, values, pp[0], pp[1].clamp(EPS_LO, EPS_HI));
            let (rm, _, _) = varpro_residuals(taus, values, pm[0], pm[1].clamp(EPS_LO, EPS_HI));
            let col: Vec<f64> =
                (0..n).map(|i| (rp[i] - rm[i]) / (2.0 * h[k])).collect();
            cols.push(col);
        }
        for i in 0..n {
            for a in 0..2 {
                jt_r[a] += cols[a][i] * r0[i];
                for b in 0..2 {
                    jt_j[a][b] += cols[a][i] * cols[b][i];
                }
            }
        }
        let mut lambda = 1e-12 * (jt_j[0][0] + jt_j[1][1]);
        let mut improved = false;
        for _ in 0..8 {
            let a00 = jt_j[0][0] + lambda;
            let a11 = jt_j[1][1] + lambda;
            let det = a00 * a11 - jt_j[0][1] * jt_j[1][0];
            if det.abs() < 1e-300 {
                break;
            }
            let dx = [
                -(a11 * jt_r[0] - jt_j[0][1] * jt_r[1]) / det,
                -(a00 * jt_r[1] - jt_j[1][0] * jt_r[0]) / det,
            ];
            let cand = [p[0] + dx[0], (p[1] + dx[1]).clamp(EPS_LO, EPS_HI)];
            let c1 = cost(taus, values, cand);
            if c1 < c0 {
                p = cand;
                improved = true;
                break;
            }
            lambda = (lambda * 10.0).max(1e-10);
        }
        if !improved {
            break;
        }
    }
    p
}

/// Least-squares fit of S(τ) = S0 − S1·exp(−(τ/τ_d)^ε) with multi-start over
/// ε ∈ {0.5, 0.75, 1.0} and bound constraints ε ∈ [0.05, 1.5]. Deterministic
/// given the data.
pub fn fit_stretched(taus: &[f64], values: &[f64]) -> Result<StretchedFit> {
    if taus.len() != values.len() {
        return Err(Error::InvalidParameter("tau/value length mismatch".into()));
    }
    if taus.len() < 8 {
        return Err(Error::FitFailed(format!("need at least 8 points, got {}", taus.len())));
    }
    let t_min = taus.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = taus.iter().copied().fold(0.0f64, f64::max);
    if !(t_min > 0.0) || t_max / t_min < 10f64.powf(1.5) {
        return Err(Error::FitFailed("tau grid must span at least 1.5 decades".into()));
    }
    let v_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let v_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v_scale = v_max.abs().max(v_min.abs()).max(1e-300);
    if (v_max - v_min) <= 1e-12 * v_scale {
        return Err(Error::FitFailed("degenerate data: constant signal".into()));
    }

    let gm = (t_min * t_max).sqrt();
    let mut best: Option<([f64; 2], f64)> = None;
    for &eps0 in &[0.5, 0.75, 1.0] {
        for &td0 in &[gm * 0.1, gm, gm * 10.0] {
            let p = nelder_mead(taus, values, [td0.ln(), eps0]);
            let p = polish(taus, values, p);
            let c = cost(taus, values, p);
            if best.is_none() || c < best.unwrap().1 {
                best = Some((p, c));
            }
        }
    }
    let (p, c) = best.unwrap();
    let (_, s0, s1) = varpro_residuals(taus, values, p[0], p[1]);
    let n = taus.len();
    let rms = (c / n as f64).sqrt();

    // parameter covariance from the full 4-parameter Jacobian
    let tau_d = p[0].exp();
    let eps = p[1];
    let dof = (n as f64 - 4.0).max(1.0);
    let s2 = c / dof;
    let mut jt_j = [[0.0f64; 4]; 4];
    for &t in taus {
        let x = (t / tau_d).powf(eps);
        let e = (-x).exp();
        // model m = s0 - s1*e; derivatives wrt (s0, s1, ln tau_d, eps)
        let row = [
            1.0,
            -e,
            -s1 * e * x * eps, // d/d ln tau_d: de/dlntd = e * x * eps
            s1 * e * x * (t / tau_d).ln(), // d/d eps with sign: m = s0 - s1 e; dm/deps = -s1 * de/deps; de/deps = -e x ln(t/td)
        ];
        for a in 0..4 {
            for b in 0..4 {
                jt_j[a][b] += row[a] * row[b];
            }
        }
    }
    let (sig_ln_td, sig_eps) = invert_4x4_diag(&jt_j)
        .map(|d| ((s2 * d[2]).sqrt(), (s2 * d[3]).sqrt()))
        .unwrap_or((f64::NAN, f64::NAN));

    Ok(StretchedFit {
        s0,
        s1,
        tau_d,
        epsilon: eps,
        residual_rms: rms,
        sigma_ln_tau_d: sig_ln_td,
        sigma_epsilon: sig_eps,
        epsilon_saturated: (eps - EPS_LO).abs() < 1e-6 || (eps - EPS_HI).abs() < 1e-6,
    })
}

/// Diagonal of the inverse of a symmetric 4×4 via Gauss–Jordan.
fn invert_4x4_diag(m: &[[f64; 4]; 4]) -> Option<[f64; 4]> {
    let mut a = *m;
    let mut inv = [[0.0f64; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let mut piv = col;
        for r in col + 1..4 {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..4 {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..4 {
            if r != col {
                let f = a[r][col];
                for j in 0..4 {
                    a[r][j] -= f * a[col][j];
                    inv[r][j] -= f * inv[col][j];
                }
            }
        }
    }
    Some([inv[0][0], inv[1][1], inv[2][2], inv[3][3]])
}

/// Evaluate the fitted model at τ.
impl StretchedFit {
    pub fn eval(&self, tau: f64) -> f64 {
        self.s0 - self.s1 * (-(tau / self.tau_d).powf(self.epsilon)).exp()
    }
}

// ---------------------------------------------------------------------------
// One-sided stable density and inverse Laplace transform
// ---------------------------------------------------------------------------

/// ln A(φ) of the Zolotarev representation.
fn ln_a(phi: f64, eps: f64) -> f64 {
    let om = 1.0 - eps;
    (eps / om) * (eps * phi).sin().ln() + (om * phi).sin().ln() - (1.0 / om) * phi.sin().ln()
}

/// φ-integrand y·e^{−y} with y = exp(ln c + ln A(φ)), c = u^{−ε/(1−ε)}.
fn stable_integrand(phi: f64, ln_c: f64, eps: f64) -> f64 {
    if phi <= 0.0 {
        let om = 1.0 - eps;
        let ln_a0 = (eps / om) * eps.ln() + om.ln();
        let t = ln_c + ln_a0;
        if t > 700.0 {
            return 0.0;
        }
        let y = t.exp();
        return y * (-y).exp();
    }
    if phi >= PI {
        return 0.0;
    }
    let t = ln_c + ln_a(phi, eps);
    if t > 700.0 {
        return 0.0;
    }
    let y = t.exp();
    y * (-y).exp()
}

fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        left + right + err / 15.0
    } else {
        adaptive_simpson(f, a, m, fa, flm, fm, tol / 2.0, depth - 1)
            + adaptive_simpson(f, m, b, fm, frm, fb, tol / 2.0, depth - 1)
    }
}

/// One-sided stable density g_ε(u) whose Laplace transform is exp(−s^ε),
/// for ε ∈ (0, 1), u > 0.
pub fn stable_density(u: f64, eps: f64) -> Result<f64> {
    if !(0.0 < eps && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "stable density needs ε in (0, 1), got {eps}"
        )));
    }
    if u <= 0.0 {
        return Ok(0.0);
    }
    let om = 1.0 - eps;
    let ln_c = -(eps / om) * u.ln();
    let f = |phi: f64| stable_integrand(phi, ln_c, eps);
    // split [0, π] into seed panels; the integrand is smooth and bounded by 1/e
    let mut total = 0.0;
    let n_seed = 8;
    for k in 0..n_seed {
        let a = PI * k as f64 / n_seed as f64;
        let b = PI * (k + 1) as f64 / n_seed as f64;
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        total += adaptive_simpson(&f, a, b, fa, fm, fb, 1e-13, 45);
    }
    if !total.is_finite() {
        return Err(Error::QuadratureFailed(format!(
            "stable density quadrature diverged at u = {u}, ε = {eps}"
        )));
    }
    Ok(eps / (om * PI * u) * total)
}

/// Closed-form Lévy–Smirnov density at ε = 1/2 (oracle for tests):
/// g(u) = u^{−3/2}·exp(−1/(4u))/(2√π).
pub fn levy_smirnov_density(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    u.powf(-1.5) * (-1.0 / (4.0 * u)).exp() / (2.0 * PI.sqrt())
}

/// Rate density L(μ; τ_d, ε) on a grid, with its normalization, CDF, and
/// median. For self-computed densities the CDF comes from panel quadrature of
/// the continuous density; sampled (externally supplied) densities fall back
/// to trapezoid integration.
#[derive(Debug, Clone)]
pub struct RateDensity {
    pub mu: Vec<f64>,
    pub density: Vec<f64>,
    pub tau_d: f64,
    pub epsilon: f64,
    /// ∫ L dμ over the grid span.
    pub normalization: f64,
    /// CDF at the grid nodes (same normalization as `normalization`).
    pub cdf: Vec<f64>,
    pub median: f64,
}

/// Log-spaced default grid covering [1e-4, 1e8]/τ_d; wide enough that the
/// power-law tail truncation stays below 1e-4 for ε ≥ 0.5.
pub fn default_mu_grid(tau_d: f64, points_per_decade: usize) -> Vec<f64> {
    let decades = 12.0;
    let n = (decades * points_per_decade as f64) as usize + 1;
    (0..n)
        .map(|k| 10f64.powf(-4.0 + decades * k as f64 / (n - 1) as f64) / tau_d)
        .collect()
}

/// 8-node Gauss–Legendre quadrature on [a, b].
fn gauss8<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    const X: [f64; 4] = [
        0.1834346424956498,
        0.5255324099163290,
        0.7966664774136267,
        0.9602898564975363,
    ];
    const W: [f64; 4] = [
        0.3626837833783620,
        0.3137066458778873,
        0.2223810344533745,
        0.1012285362903763,
    ];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for i in 0..4 {
        s += W[i] * (f(c + h * X[i]) + f(c - h * X[i]));
    }
    s * h
}

/// Invert the stretched-exponential kernel into its rate density on `mu_grid`.
///
/// ε must lie in (0, 1]; for ε = 1 the density is a point mass at μ = 1/τ_d,
/// represented by loading the nearest grid cell. The grid must be positive,
/// ascending, and cover at least [1e-3, 1e3]/τ_d.
pub fn inverse_laplace_stretched(tau_d: f64, eps: f64, mu_grid: &[f64]) -> Result<RateDensity> {
    if !(tau_d > 0.0) {
        return Err(Error::InvalidParameter("tau_d must be positive".into()));
    }
    if !(0.0 < eps && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "no non-negative rate density exists for ε = {eps}; need ε in (0, 1]"
        )));
    }
    if mu_grid.len() < 16 {
        return Err(Error::InvalidParameter("mu grid too coarse".into()));
    }
    for w in mu_grid.windows(2) {
        if !(w[0] > 0.0 && w[1] > w[0]) {
            return Err(Error::InvalidParameter("mu grid must be positive ascending".into()));
        }
    }
    let (lo, hi) = (mu_grid[0], *mu_grid.last().unwrap());
    if lo > 1.001e-3 / tau_d || hi < 0.999e3 / tau_d {
        return Err(Error::InvalidParameter(
            "mu grid must cover at least [1e-3, 1e3]/tau_d".into(),
        ));
    }

    if eps == 1.0 {
        // point mass at 1/τ_d in the nearest grid cell
        let target = 1.0 / tau_d;
        let j = mu_grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .map(|(j, _)| j)
            .unwrap();
        let cell = if j == 0 {
            mu_grid[1] - mu_grid[0]
        } else if j + 1 == mu_grid.len() {
            mu_grid[j] - mu_grid[j - 1]
        } else {
            0.5 * (mu_grid[j + 1] - mu_grid[j - 1])
        };
        let mut density = vec![0.0; mu_grid.len()];
        density[j] = 1.0 / cell;
        let mut cdf = vec![0.0; mu_grid.len()];
        for (k, c) in cdf.iter_mut().enumerate() {
            *c = if k < j { 0.0 } else { 1.0 };
        }
        return Ok(RateDensity {
            mu: mu_grid.to_vec(),
            density,
            tau_d,
            epsilon: eps,
            normalization: 1.0,
            cdf,
            median: target,
        });
    }

    let density: Vec<f64> = mu_grid
        .iter()
        .map(|&mu| stable_density(mu * tau_d, eps).map(|g| tau_d * g))
        .collect::<Result<_>>()?;

    // CDF via panel quadrature of the continuous density in ln μ
    let g_of_ln = |lmu: f64| {
        let mu = lmu.exp();
        tau_d * stable_density(mu * tau_d, eps).unwrap_or(0.0) * mu
    };
    let mut cdf = vec![0.0; mu_grid.len()];
    let mut acc = 0.0;
    for i in 1..mu_grid.len() {
        acc += gauss8(&g_of_ln, mu_grid[i - 1].ln(), mu_grid[i].ln());
        cdf[i] = acc;
    }
    let normalization = acc;

    // median: bracket on the grid, refine by bisection on the continuous CDF
    let half = 0.5;
    let j = cdf.iter().position(|&c| c >= half).ok_or_else(|| {
        Error::QuadratureFailed("median outside the mu grid".into())
    })?;
    let (mut a, mut b) = (mu_grid[j.saturating_sub(1)], mu_grid[j]);
    let cdf_at = |mu: f64| {
        let base = cdf[j - 1];
        base + gauss8(&g_of_ln, mu_grid[j - 1].ln(), mu.ln())
    };
    for _ in 0..80 {
        let m = (a * b).sqrt();
        if cdf_at(m) < half {
            a = m;
        } else {
            b = m;
        }
        if (b - a) <= 1e-12 * b {
            break;
        }
    }
    let median = (a * b).sqrt();

    Ok(RateDensity {
        mu: mu_grid.to_vec(),
        density,
        tau_d,
        epsilon: eps,
        normalization,
        cdf,
        median,
    })
}

impl RateDensity {
    /// Wrap externally produced samples (mock or measured densities).
    pub fn from_samples(mu: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if mu.len() != density.len() || mu.len() < 3 {
            return Err(Error::InvalidParameter("density samples malformed".into()));
        }
        let mut cdf = vec![0.0; mu.len()];
        for i in 1..mu.len() {
            cdf[i] = cdf[i - 1]
                + 0.5 * (density[i] + density[i - 1]) * (mu[i] - mu[i - 1]);
        }
        let normalization = *cdf.last().unwrap();
        let median = median_from_cdf(&mu, &cdf, normalization)?;
        Ok(Self {
            mu,
            density,
            tau_d: f64::NAN,
            epsilon: f64::NAN,
            normalization,
            cdf,
            median,
        })
    }

    /// Mass above `threshold` (trapezoid over the stored samples).
    pub fn tail_mass(&self, threshold: f64) -> f64 {
        let mut mass = 0.0;
        for i in 1..self.mu.len() {
            let (a, b) = (self.mu[i - 1], self.mu[i]);
            if b <= threshold {
                continue;
            }
            let (da, db) = (self.density[i - 1], self.density[i]);
            if a >= threshold {
                mass += 0.5 * (da + db) * (b - a);
            } else {
                // partial cell
                let f = (threshold - a) / (b - a);
                let dt = da + f * (db - da);
                mass += 0.5 * (dt + db) * (b - threshold);
            }
        }
        mass
    }
}

fn median_from_cdf(mu: &[f64], cdf: &[f64], normalization: f64) -> Result<f64> {
    if !(normalization > 0.0) {
        return Err(Error::InvalidParameter("density has no mass".into()));
    }
    let half = 0.5 * normalization;
    let j = cdf
        .iter()
        .position(|&c| c >= half)
        .ok_or_else(|| Error::InvalidParameter("median outside grid".into()))?;
    if j == 0 {
        return Ok(mu[0]);
    }
    let (c0, c1) = (cdf[j - 1], cdf[j]);
    if c1 == c0 {
        return Ok(mu[j]);
    }
    let f = (half - c0) / (c1 - c0);
    Ok(mu[j - 1] + f * (mu[j] - mu[j - 1]))
}

/// Median of a rate density: μ̄ with ∫₀^μ̄ L dμ = 1/2. The density must be
/// normalized to 1 within 1e-3 over its grid.
pub fn density_median(d: &RateDensity) -> Result<f64> {
    if (d.normalization - 1.0).abs() > 1e-3 {
        return Err(Error::InvalidParameter(format!(
            "density is not normalized: ∫L dμ = {}",
            d.normalization
        )));
    }
    Ok(d.median)
}

/// Forward Laplace transform of the continuous density: ∫ L(μ)e^{−μτ} dμ,
/// for reconstruction checks against exp(−(τ/τ_d)^ε).
pub fn laplace_reconstruct(tau_d: f64, eps: f64, tau: f64) -> Result<f64> {
    if !(0.0 < eps && eps < 1.0) {
        return Err(Error::InvalidParameter("reconstruction needs ε in (0, 1)".into()));
    }
    let s = tau / tau_d;
    // integrate g(u)·e^{−us} over ln u; the exponential cuts the tail
    let u_hi: f64 = if s > 0.0 { (200.0 / s).max(1e4) } else { 1e14 };
    let u_lo = 1e-8;
    let f = |lu: f64| {
        let u = lu.exp();
        stable_density(u, eps).unwrap_or(0.0) * (-u * s).exp() * u
    };
    let panels = ((u_hi / u_lo).log10() * 2.0).ceil() as usize;
    let (la, lb) = (u_lo.ln(), u_hi.ln());
    let mut total = 0.0;
    for k in 0..panels {
        let a = la + (lb - la) * k as f64 / panels as f64;
        let b = la + (lb - la) * (k + 1) as f64 / panels as f64;
        total += gauss8(&f, a, b);
    }
    Ok(total)
}

/// Effective diffusion constant D = r_C²/τ_d for a mean inter-site distance
/// r_C in nanometers and τ_d in seconds; returns nm²/s.
pub fn effective_diffusion(tau_d: f64, r_c_nm: f64) -> f64 {
    r_c_nm * r_c_nm / tau_d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn sample_model(s0: f64, s1: f64, tau_d: f64, eps: f64, taus: &[f64]) -> Vec<f64> {
        taus.iter().map(|&t| s0 - s1 * (-(t / tau_d).powf(eps)).exp()).collect()
    }

    fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
            .collect()
    }

    #[test]
    fn exact_recovery_of_pure_exponential() {
        let taus = log_grid(1e-4, 1e-1, 24);
        let vals = sample_model(1.0, 0.8, 2e-3, 1.0, &taus);
        let fit = fit_stretched(&taus, &vals).unwrap();
        assert_relative_eq!(fit.tau_d, 2e-3, max_relative = 1e-6);
        assert!((fit.epsilon - 1.0).abs() <= 1e-4);
        assert_relative_eq!(fit.s0, 1.0, max_relative = 1e-6);
        assert_relative_eq!(fit.s1, 0.8, max_relative = 1e-6);
    }

    #[test]
    fn fit_idempotence() {
        let taus = log_grid(3e-4, 0.3, 30);
        let vals = sample_model(0.9, 0.7, 3e-3, 0.7, &taus);
        let f1 = fit_stretched(&taus, &vals).unwrap();
        let resampled: Vec<f64> = taus.iter().map(|&t| f1.eval(t)).collect();
        let f2 = fit_stretched(&taus, &resampled).unwrap();
        assert_relative_eq!(f1.tau_d, f2.tau_d, max_relative = 1e-8);
        assert!((f1.epsilon - f2.epsilon).abs() <= 1e-8);
    }

    #[test]
    fn noisy_recovery_within_tolerance() {
        // 1% additive noise: median over 100 seeds recovers tau_d within 5%
        // and epsilon within 0.05
        let taus = log_grid(1e-4, 0.2, 28);
        let clean = sample_model(1.0, 1.0, 3e-3, 0.7, &taus);
        let mut td_err = Vec::new();
        let mut eps_err = Vec::new();
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let normal = StandardNormal;
            let noisy: Vec<f64> = clean
                .iter()
                .map(|&v| v + 0.01 * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng))
                .collect();
            let fit = fit_stretched(&taus, &noisy).unwrap();
            td_err.push((fit.tau_d / 3e-3 - 1.0).abs());
            eps_err.push((fit.epsilon - 0.7).abs());
        }
        td_err.sort_by(f64::total_cmp);
        eps_err.sort_by(f64::total_cmp);
        assert!(td_err[50] <= 0.05, "median tau_d error {}", td_err[50]);
        assert!(eps_err[50] <= 0.05, "median epsilon error {}", eps_err[50]);
    }

    #[test]
    fn degenerate_data_rejected() {
        let taus = log_grid(1e-4, 1e-1, 12);
        let vals = vec![0.5; 12];
        assert!(fit_stretched(&taus, &vals).is_err());
        // too few points
        assert!(fit_stretched(&taus[..6], &vals[..6]).is_err());
        // too narrow
        let narrow: Vec<f64> = (0..12).map(|k| 1e-3 * (1.0 + k as f64 * 0.4)).collect();
        let nv = sample_model(1.0, 0.5, 2e-3, 1.0, &narrow);
        assert!(fit_stretched(&narrow, &nv).is_err());
    }

    #[test]
    fn stable_density_matches_levy_smirnov() {
        for &u in &[0.05, 0.2, 0.7, 1.0, 3.0, 20.0, 500.0] {
            let g = stable_density(u, 0.5).unwrap();
            let want = levy_smirnov_density(u);
            if want > 1e-300 {
                assert!(
                    (g - want).abs() <= 1e-4 * want.max(1e-12),
                    "u = {u}: {g} vs {want}"
                );
            }
        }
    }

    #[test]
    fn density_normalization_and_median_ranges() {
        for &eps in &[0.6, 0.75, 0.9, 0.95] {
            let tau_d = 2.5e-3;
            let grid = default_mu_grid(tau_d, 24);
            let d = inverse_laplace_stretched(tau_d, eps, &grid).unwrap();
            assert!(
                (d.normalization - 1.0).abs() <= 1e-4,
                "eps {eps}: norm {}",
                d.normalization
            );
            assert!(d.density.iter().all(|&v| v >= 0.0));
            let m = density_median(&d).unwrap();
            let scaled = m * tau_d;
            assert!((0.5..=2.0).contains(&scaled), "eps {eps}: median*tau_d = {scaled}");
        }
    }

    #[test]
    fn median_continuity_and_endpoint() {
        // the scaled median varies continuously in ε and equals 1 at ε = 1
        // (it is not monotone: it dips below 1 near ε ≈ 0.85)
        let tau_d = 1.0;
        let grid = default_mu_grid(tau_d, 24);
        let mut prev: Option<f64> = None;
        for k in 0..=9 {
            let eps = 0.5 + 0.05 * k as f64;
            let d = inverse_laplace_stretched(tau_d, eps, &grid).unwrap();
            if let Some(p) = prev {
                assert!((d.median - p).abs() <= 0.08, "jump at eps {eps}");
            }
            prev = Some(d.median);
        }
        let d1 = inverse_laplace_stretched(tau_d, 1.0, &grid).unwrap();
        assert_relative_eq!(density_median(&d1).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn frozen_median_value_eps_07() {
        // high-resolution quadrature oracle value for ε = 0.7, τ_d = 1
        let grid = default_mu_grid(1.0, 32);
        let d = inverse_laplace_stretched(1.0, 0.7, &grid).unwrap();
        assert!((d.median - 0.911341).abs() <= 5e-4, "median {}", d.median);
    }

    #[test]
    fn delta_limit_at_eps_one() {
        let tau_d = 4e-3;
        let grid = default_mu_grid(tau_d, 40);
        let d = inverse_laplace_stretched(tau_d, 1.0, &grid).unwrap();
        // ≥ 99% of the mass within one grid cell of 1/τ_d
        let target = 1.0 / tau_d;
        let mut mass_near = 0.0;
        for i in 1..d.mu.len() {
            let mid = 0.5 * (d.mu[i] + d.mu[i - 1]);
            let w = d.mu[i] - d.mu[i - 1];
            let ratio = mid / target;
            if ratio > 0.8 && ratio < 1.25 {
                mass_near += 0.5 * (d.density[i] + d.density[i - 1]) * w;
            }
        }
        assert!(mass_near >= 0.99, "mass near 1/tau_d: {mass_near}");
        assert_relative_eq!(d.median, target, max_relative = 1e-12);
    }

    #[test]
    fn eps_above_one_rejected() {
        let grid = default_mu_grid(1.0, 24);
        assert!(inverse_laplace_stretched(1.0, 1.2, &grid).is_err());
    }

    #[test]
    fn unnormalized_density_rejected_for_median() {
        let mu: Vec<f64> = (1..=64).map(|k| k as f64).collect();
        let density = vec![0.3; 64];
        let d = RateDensity::from_samples(mu, density).unwrap();
        assert!(density_median(&d).is_err());
    }

    #[test]
    fn mock_two_spike_median_lies_between() {
        // symmetric two-spike density: median between the spikes
        let mu: Vec<f64> = (0..=400).map(|k| 0.5 + k as f64 * 0.01).collect();
        let mut density = vec![0.0; mu.len()];
        for (i, &m) in mu.iter().enumerate() {
            density[i] = (-(m - 1.0f64).powi(2) / 2e-4).exp() + (-(m - 3.0f64).powi(2) / 2e-4).exp();
        }
        let norm: f64 = {
            let mut s = 0.0;
            for i in 1..mu.len() {
                s += 0.5 * (density[i] + density[i - 1]) * (mu[i] - mu[i - 1]);
            }
            s
        };
        for v in &mut density {
            *v /= norm;
        }
        let d = RateDensity::from_samples(mu, density).unwrap();
        let med = density_median(&d).unwrap();
        assert!(med > 1.2 && med < 2.8, "median {med}");
    }

    #[test]
    fn laplace_duality() {
        for &(tau_d, eps) in &[(1.0, 0.6), (2e-3, 0.75), (1.0, 0.9)] {
            for k in 0..=20 {
                let tau = tau_d * 10f64.powf(-2.0 + 3.0 * k as f64 / 20.0);
                let got = laplace_reconstruct(tau_d, eps, tau).unwrap();
                let want = (-(tau / tau_d).powf(eps)).exp();
                assert!(
                    (got - want).abs() <= 1e-6,
                    "tau_d {tau_d} eps {eps} tau {tau}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn diffusion_constant_values() {
        assert_relative_eq!(effective_diffusion(1.0 / 600.0, 0.5), 150.0, max_relative = 1e-12);
        assert_relative_eq!(effective_diffusion(1.0 / 300.0, 0.5), 75.0, max_relative = 1e-12);
        assert!(effective_diffusion(1e12, 0.5) < 1e-9);
    }

    #[test]
    fn tail_mass_reporting() {
        let grid = default_mu_grid(1e-3, 24);
        let d = inverse_laplace_stretched(1e-3, 0.7, &grid).unwrap();
        let above = d.tail_mass(1000.0); // rates beyond 1 ms⁻¹
        assert!(above > 0.0 && above < 1.0);
        let all = d.tail_mass(0.0);
        assert_relative_eq!(all, d.normalization, max_relative = 1e-6);
    }
}
