//! Classical master-equation transport along a spectral chain of spin boxes.
//!
//! Magnetization charges q_i flow between neighboring boxes at rates γ_ij,
//! leak at rates β_i, and drain at a_RF inside the RF-saturated box while a
//! pulse is on. The last box is absorbing (no backflow). A pulse train
//! alternates an RF interval τ_RF with a free interval τ; the final charge is
//!
//!   Q(T) = exp(A₀·t_rem) · [exp(A₀τ)·exp(A₁τ_RF)]^{n_p} · Q₀,
//!
//! with n_p = ⌊T/(τ+τ_RF)⌋ and the remainder evolved RF-free.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::analysis::{fit_stretched, StretchedFit};
use crate::error::{Error, Result};

/// An m-box transport chain with an RF sink.
#[derive(Debug, Clone)]
pub struct RateChain {
    /// Forward rates γ_{i,i+1}, one per bond (length m−1).
    pub gamma_fwd: Vec<f64>,
    /// Backward rates γ_{i+1,i}, one per bond (length m−1).
    pub gamma_bwd: Vec<f64>,
    /// Loss rates β_i (length m).
    pub beta: Vec<f64>,
    /// RF-saturated box, 1-based (1 ≤ k ≤ m).
    pub rf_box: usize,
    /// Sink amplitude a_RF (1/s) while a pulse is on.
    pub a_rf: f64,
    /// Initial charges (length m).
    pub q0: Vec<f64>,
}

impl RateChain {
    /// Uniform symmetric chain with q₀ = e₁.
    pub fn uniform(m: usize, gamma0: f64, rf_box: usize, a_rf: f64) -> Result<Self> {
        Self::from_bond_rates(vec![gamma0; m - 1], rf_box, a_rf)
    }

    /// Symmetric chain from per-bond rates, q₀ = e₁.
    pub fn from_bond_rates(bonds: Vec<f64>, rf_box: usize, a_rf: f64) -> Result<Self> {
        let m = bonds.len() + 1;
        let mut q0 = vec![0.0; m];
        q0[0] = 1.0;
        let chain = Self {
            gamma_fwd: bonds.clone(),
            gamma_bwd: bonds,
            beta: vec![0.0; m],
            rf_box,
            a_rf,
            q0,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.len();
        if m < 2 {
            return Err(Error::InvalidParameter("chain needs at least 2 boxes".into()));
        }
        if self.gamma_fwd.len() != m - 1 || self.gamma_bwd.len() != m - 1 {
            return Err(Error::InvalidParameter("bond rate vectors must have length m-1".into()));
        }
        if self.q0.len() != m {
            return Err(Error::InvalidParameter("q0 must have length m".into()));
        }
        let nonneg = |v: &[f64]| v.iter().all(|&x| x >= 0.0 && x.is_finite());
        if !nonneg(&self.gamma_fwd) || !nonneg(&self.gamma_bwd) || !nonneg(&self.beta) {
            return Err(Error::InvalidParameter("rates must be finite and non-negative".into()));
        }
        if !(self.a_rf >= 0.0) || !self.a_rf.is_finite() {
            return Err(Error::InvalidParameter("a_RF must be finite and non-negative".into()));
        }
        if self.rf_box < 1 || self.rf_box > m {
            return Err(Error::InvalidParameter(format!(
                "RF box {} outside 1..={m}",
                self.rf_box
            )));
        }
        if !self.q0.iter().all(|&x| x.is_finite()) {
            return Err(Error::InvalidParameter("q0 must be finite".into()));
        }
        Ok(())
    }
}

/// Equidistant RF pulse train.
#[derive(Debug, Clone, Copy)]
pub struct PulseTrain {
    /// Inter-pulse delay τ (s).
    pub tau: f64,
    /// Pulse length τ_RF (s).
    pub tau_rf: f64,
    /// Total evolution time T (s).
    pub total: f64,
}

impl PulseTrain {
    pub fn new(tau: f64, tau_rf: f64, total: f64) -> Result<Self> {
        let p = Self { tau, tau_rf, total };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.tau_rf > 0.0) || !(self.total > 0.0) {
            return Err(Error::InvalidParameter("pulse-train times must be positive".into()));
        }
        if self.n_pulses() < 1 {
            return Err(Error::InvalidParameter(format!(
                "pulse train fits no composite interval: T = {} < τ + τ_RF = {}",
                self.total,
                self.tau + self.tau_rf
            )));
        }
        Ok(())
    }

    /// Number of composite intervals, ⌊T/(τ+τ_RF)⌋.
    pub fn n_pulses(&self) -> usize {
        (self.total / (self.tau + self.tau_rf)).floor() as usize
    }

    /// RF-free remainder evolved after the last composite interval.
    pub fn remainder(&self) -> f64 {
        self.total - self.n_pulses() as f64 * (self.tau + self.tau_rf)
    }
}

/// Rate matrix A with the RF gate on (`rf_on = true`, A₁) or off (A₀):
/// off-diagonals γ_ij, diagonals −(outflow + β_i + a_RF·[i = k]); the last box
/// keeps no outflow back into the chain.
pub fn rate_matrix(chain: &RateChain, rf_on: bool) -> DMatrix<f64> {
    let m = chain.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let mut out = 0.0;
        if i < m - 1 {
            out += chain.gamma_fwd[i];
            a[(i + 1, i)] += chain.gamma_fwd[i];
        }
        if i > 0 && i < m - 1 {
            out += chain.gamma_bwd[i - 1];
            a[(i - 1, i)] += chain.gamma_bwd[i - 1];
        }
        let sink = if rf_on && i + 1 == chain.rf_box { chain.a_rf } else { 0.0 };
        a[(i, i)] = -(out + chain.beta[i] + sink);
    }
    a
}

/// Result of a pulse-train evolution.
#[derive(Debug, Clone)]
pub struct ChainEvolution {
    pub final_charges: Vec<f64>,
    /// Charges after each composite interval when recorded.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

impl ChainEvolution {
    pub fn end_box(&self) -> f64 {
        *self.final_charges.last().unwrap()
    }
}

fn matrix_power_apply(m: &DMatrix<f64>, n: usize, q: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
    // binary exponentiation on the matrix, then one apply
    let dim = m.nrows();
    let mut result = DMatrix::<f64>::identity(dim, dim);
    let mut base = m.clone();
    let mut n = n;
    while n > 0 {
        if n & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        n >>= 1;
    }
    result * q
}

/// Evolve the chain under a pulse train: each composite interval applies the
/// RF generator for τ_RF, then the free generator for τ.
pub fn evolve_pulse_train(
    chain: &RateChain,
    train: &PulseTrain,
    record_trajectory: bool,
) -> Result<ChainEvolution> {
    chain.validate()?;
    train.validate()?;
    let a0 = rate_matrix(chain, false);
    let a1 = rate_matrix(chain, true);
    let e0 = (a0.clone() * train.tau).exp();
    let e1 = (a1 * train.tau_rf).exp();
    let composite = &e0 * &e1;
    let q0 = nalgebra::DVector::from_column_slice(&chain.q0);
    let n = train.n_pulses();

    let (q_before_rem, trajectory) = if record_trajectory {
        let mut traj = Vec::with_capacity(n);
        let mut q = q0;
        for _ in 0..n {
            q = &composite * q;
            traj.push(q.as_slice().to_vec());
        }
        (q, Some(traj))
    } else {
        (matrix_power_apply(&composite, n, &q0), None)
    };
    let q_final = (a0 * train.remainder()).exp() * q_before_rem;
    Ok(ChainEvolution { final_charges: q_final.as_slice().to_vec(), trajectory })
}

/// Free evolution (no pulses) of the chain for time `t`.
pub fn evolve_free(chain: &RateChain, t: f64) -> Result<Vec<f64>> {
    chain.validate()?;
    let a0 = rate_matrix(chain, false);
    let q0 = nalgebra::DVector::from_column_slice(&chain.q0);
    let q = (a0 * t).exp() * q0;
    Ok(q.as_slice().to_vec())
}

/// Bell-shaped bond-rate profile γ_i = γ₀·(1 + factor·exp(−((k₀−i)/K₀)²)) for
/// 1-based bond index i (bond i connects boxes i and i+1).
pub fn gaussian_profile(m: usize, gamma0: f64, k0: usize, k_width: f64, factor: f64) -> Vec<f64> {
    (1..m)
        .map(|i| {
            let d = (k0 as f64 - i as f64) / k_width;
            gamma0 + factor * gamma0 * (-d * d).exp()
        })
        .collect()
}

/// Default bell-profile parameters.
pub const GAUSSIAN_K0: usize = 15;
pub const GAUSSIAN_WIDTH: f64 = 2.0;
pub const GAUSSIAN_FACTOR: f64 = 100.0;

/// τ-sweep output: end-box charges with and without RF, the contrast, and a
/// stretched-exponential fit of the normalized response.
#[derive(Debug, Clone)]
pub struct TauSweep {
    pub taus: Vec<f64>,
    pub q_rf: Vec<f64>,
    pub q_no_rf: f64,
    /// δM_m(τ) = q_m^{noRF} − q_m^{RF}(τ).
    pub delta_m: Vec<f64>,
    /// q_m^{RF}(τ)/q_m^{noRF}, the curve that is fitted.
    pub normalized: Vec<f64>,
    pub fit: Option<StretchedFit>,
    pub fit_error: Option<String>,
}

/// Sweep the inter-pulse delay and fit the sigmoidal end-box response.
/// Sweep points are evaluated in parallel and assembled in input order.
pub fn tau_sweep(chain: &RateChain, taus: &[f64], tau_rf: f64, total: f64) -> Result<TauSweep> {
    if taus.len() < 2 {
        return Err(Error::InvalidParameter("tau grid needs at least 2 points".into()));
    }
    let lo = taus.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = taus.iter().copied().fold(0.0f64, f64::max);
    if !(lo > 0.0) || hi / lo < 100.0 {
        return Err(Error::InvalidParameter(
            "tau grid must span at least two decades around the inflection".into(),
        ));
    }
    chain.validate()?;
    let q_no_rf = *evolve_free(chain, total)?.last().unwrap();
    let q_rf: Vec<f64> = taus
        .par_iter()
        .map(|&tau| {
            let train = PulseTrain::new(tau, tau_rf, total)?;
            Ok(evolve_pulse_train(chain, &train, false)?.end_box())
        })
        .collect::<Result<_>>()?;
    let delta_m: Vec<f64> = q_rf.iter().map(|q| q_no_rf - q).collect();
    let normalized: Vec<f64> = q_rf.iter().map(|q| q / q_no_rf).collect();
    let (fit, fit_error) = match fit_stretched(taus, &normalized) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(TauSweep { taus: taus.to_vec(), q_rf, q_no_rf, delta_m, normalized, fit, fit_error })
}
