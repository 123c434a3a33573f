//! Intervention rules and recovery diagnostics.
//!
//! * [`robust_spectral_intervention`]: project the observed quantities onto
//!   the observed strong eigenspace and scale so predicted expenditure is 1.
//! * [`first_eigenvector_intervention`]: subsidize along the top observed
//!   eigenvector.
//! * [`complete_info_intervention`]: with the true state in hand, hit any
//!   feasible `(C_dot, S_dot)` pair using two eigen-directions.
//! * [`davis_kahan_diagnostics`]: how far the observed strong eigenspace sits
//!   from the true one, next to the perturbation bound `2 ||E|| / gap`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::market::{Intervention, MarketState, SurplusReport};
use crate::signal::{spectral_norm, Signal};
use crate::spectral::{decompose, eigenspace_at, passthrough_spectral, project, SpectralDecomposition};

pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Exponents of `n` for the default thresholds.
pub const M_HAT_EXPONENT: f64 = 2.0 / 3.0;
pub const M_UNDER_EXPONENT: f64 = 7.0 / 12.0;
pub const M_EXPONENT: f64 = 3.0 / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPlan {
    /// Cutoff applied to the observed matrix.
    pub m_hat: f64,
    /// Cutoff for the true matrix in diagnostics.
    pub m_under: f64,
    /// Reference cutoff for the recoverable-structure margin.
    pub m: f64,
}

impl ThresholdPlan {
    pub fn for_n(n: usize) -> Self {
        let n = n as f64;
        Self {
            m_hat: n.powf(M_HAT_EXPONENT),
            m_under: n.powf(M_UNDER_EXPONENT),
            m: n.powf(M_EXPONENT),
        }
    }

    /// Defaults with `M_hat = n^exponent`. The other two cutoffs keep their
    /// default exponents shifted by the same amount.
    pub fn with_exponent(n: usize, exponent: f64) -> Self {
        let shift = exponent - M_HAT_EXPONENT;
        let nf = n as f64;
        Self {
            m_hat: nf.powf(exponent),
            m_under: nf.powf(M_UNDER_EXPONENT + shift),
            m: nf.powf(M_EXPONENT + shift),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m_under > 0.0 && self.m_under < self.m_hat && self.m_hat < self.m)
            || !self.m.is_finite()
        {
            return Err(Error::InvalidConfig(format!(
                "thresholds must satisfy 0 < M_under < M_hat < M, got {} / {} / {}",
                self.m_under, self.m_hat, self.m
            )));
        }
        Ok(())
    }
}

/// `target * P q0_hat / ||P q0_hat||^2` with `P` the projector onto the
/// eigenvectors of `dec` with `|lambda| >= m_hat`.
pub fn robust_from_decomposition(
    dec: &SpectralDecomposition,
    q0_hat: &DVector<f64>,
    m_hat: f64,
    floor: f64,
    target_expenditure: f64,
) -> Result<Intervention> {
    check_dim(dec.n(), q0_hat.len())?;
    let space = eigenspace_at(dec, m_hat);
    if space.is_empty() {
        return Err(Error::NoRecoverableStructure { threshold: m_hat });
    }
    let proj = project(&space, q0_hat)?;
    let norm = proj.norm();
    if !(norm > floor) {
        return Err(Error::DegenerateProjection { magnitude: norm, floor });
    }
    Intervention::new(proj * (target_expenditure / (norm * norm)))
}

pub fn robust_spectral_intervention(signal: &Signal, plan: &ThresholdPlan) -> Result<Intervention> {
    let dec = decompose(&signal.d_hat)?;
    robust_from_decomposition(&dec, &signal.q0_hat, plan.m_hat, DEFAULT_FLOOR, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstEigenvectorOutcome {
    pub sigma: Intervention,
    /// Top two observed magnitudes tied; the first column was used anyway.
    pub degenerate_top: bool,
}

pub fn first_eigenvector_from_decomposition(
    dec: &SpectralDecomposition,
    q0_hat: &DVector<f64>,
    target_expenditure: f64,
    floor: f64,
) -> Result<FirstEigenvectorOutcome> {
    check_dim(dec.n(), q0_hat.len())?;
    if dec.n() == 0 {
        return Err(Error::DegenerateProjection { magnitude: 0.0, floor });
    }
    let u1 = dec.vector(0);
    let proj = u1.dot(q0_hat);
    if !(proj.abs() > floor) {
        return Err(Error::DegenerateProjection { magnitude: proj.abs(), floor });
    }
    let top = dec.eigenvalues[0].abs();
    Ok(FirstEigenvectorOutcome {
        sigma: Intervention::new(u1 * (target_expenditure / proj))?,
        degenerate_top: dec.top_is_degenerate(1e-9 * top.max(1.0)),
    })
}

pub fn first_eigenvector_intervention(
    signal: &Signal,
    target_expenditure: f64,
) -> Result<Intervention> {
    let dec = decompose(&signal.d_hat)?;
    Ok(first_eigenvector_from_decomposition(&dec, &signal.q0_hat, target_expenditure, DEFAULT_FLOOR)?
        .sigma)
}

const EIGEN_DISTINCT: f64 = 1e-6;
const PROJECTION_NONZERO: f64 = 1e-8;

/// Intervention hitting `C_dot = target_c` and `S_dot = target_s` on the true
/// state.
///
/// Uses the lowest-index pair of eigen-directions `(i, j)` with distinct
/// eigenvalues and nonzero `q0` projections `a_i`, `a_j`, and sets
/// `sigma = beta a_i u_i + g u_j`. Expenditure pins `g a_j = S - beta a_i^2`,
/// and consumer surplus is then linear in `beta` with slope
/// `a_i^2 (w_i - w_j)`, `w = 1/(1+|lambda|)`.
pub fn complete_info_intervention(
    state: &MarketState,
    target_c: f64,
    target_s: f64,
) -> Result<Intervention> {
    let dec = decompose(&state.d)?;
    complete_info_from_decomposition(state, &dec, target_c, target_s)
}

pub fn complete_info_from_decomposition(
    state: &MarketState,
    dec: &SpectralDecomposition,
    target_c: f64,
    target_s: f64,
) -> Result<Intervention> {
    check_dim(dec.n(), state.n())?;
    if !(target_c.is_finite() && target_s.is_finite()) {
        return Err(Error::NonFinite("targets"));
    }
    let n = state.n();
    if dec.eigenvalues.iter().all(|l| (l + 1.0).abs() <= 1e-9) {
        // Every direction splits expenditure evenly between consumers and
        // producers, so only C_dot = S_dot / 2 is reachable.
        if (target_c - target_s / 2.0).abs() > 1e-9 * target_s.abs().max(1.0) {
            return Err(Error::InfeasibleTargets { c_dot: target_c, s_dot: target_s });
        }
        let qq = state.q0.norm_squared();
        if !(qq > 0.0) {
            return Err(Error::DegenerateProjections);
        }
        return Intervention::new(&state.q0 * (target_s / qq));
    }

    let a = dec.eigenvectors.tr_mul(&state.q0);
    let w = |l: usize| 1.0 / (1.0 + dec.eigenvalues[l].abs());
    for i in 0..n {
        if a[i].abs() <= PROJECTION_NONZERO {
            continue;
        }
        for j in (i + 1)..n {
            if a[j].abs() <= PROJECTION_NONZERO
                || (dec.eigenvalues[i] - dec.eigenvalues[j]).abs() <= EIGEN_DISTINCT
            {
                continue;
            }
            let (wi, wj) = (w(i), w(j));
            let beta = (target_c - target_s * wj) / (a[i] * a[i] * (wi - wj));
            let g = (target_s - beta * a[i] * a[i]) / a[j];
            let sigma = dec.vector(i) * (beta * a[i]) + dec.vector(j) * g;
            return Intervention::new(sigma);
        }
    }
    Err(Error::DegenerateProjections)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryDiagnostics {
    pub e_norm: f64,
    /// Smallest `|lambda_hat - lambda|` over retained observed eigenvalues and
    /// excluded true eigenvalues. `NaN` when either set is empty.
    pub gap: f64,
    pub dk_bound: f64,
    /// `||P_perp(true, M_under) P(observed, M_hat)||`. `NaN` when the observed
    /// space is empty.
    pub subspace_misalignment: f64,
    pub top_vector_overlap: f64,
    pub retained_dim: usize,
    pub true_dim: usize,
}

/// Diagnostics from precomputed decompositions. Undefined entries are `NaN`.
pub fn recovery_diagnostics_with(
    dec: &SpectralDecomposition,
    dec_hat: &SpectralDecomposition,
    e_norm: f64,
    plan: &ThresholdPlan,
) -> Result<RecoveryDiagnostics> {
    check_dim(dec.n(), dec_hat.n())?;
    let n = dec.n();
    let k_hat = dec_hat.count_at_least(plan.m_hat);
    let k_u = dec.count_at_least(plan.m_under);

    let mut gap = f64::INFINITY;
    for lh in dec_hat.eigenvalues.iter().take(k_hat) {
        for l in dec.eigenvalues.iter().skip(k_u) {
            gap = gap.min((lh - l).abs());
        }
    }
    if k_hat == 0 || k_u == n {
        gap = f64::NAN;
    }

    let subspace_misalignment = if k_hat == 0 {
        f64::NAN
    } else {
        // ||(I - B B^T) B_hat||^2 = lambda_max(I - M^T M), M = B^T B_hat.
        let b = dec.eigenvectors.columns(0, k_u);
        let b_hat = dec_hat.eigenvectors.columns(0, k_hat);
        let m = b.tr_mul(&b_hat);
        let g = DMatrix::<f64>::identity(k_hat, k_hat) - m.tr_mul(&m);
        let g = (&g + g.transpose()) * 0.5;
        g.symmetric_eigenvalues().max().clamp(0.0, 1.0).sqrt()
    };

    let top_vector_overlap = if n == 0 {
        f64::NAN
    } else {
        dec.eigenvectors.column(0).dot(&dec_hat.eigenvectors.column(0)).abs()
    };

    Ok(RecoveryDiagnostics {
        e_norm,
        gap,
        dk_bound: 2.0 * e_norm / gap,
        subspace_misalignment,
        top_vector_overlap,
        retained_dim: k_hat,
        true_dim: k_u,
    })
}

pub fn davis_kahan_diagnostics(
    state: &MarketState,
    signal: &Signal,
    plan: &ThresholdPlan,
) -> Result<RecoveryDiagnostics> {
    check_dim(state.n(), signal.n())?;
    let dec = decompose(&state.d)?;
    let dec_hat = decompose(&signal.d_hat)?;
    let e_norm = spectral_norm(&(&signal.d_hat - &state.d));
    let diag = recovery_diagnostics_with(&dec, &dec_hat, e_norm, plan)?;
    if diag.retained_dim == 0 {
        return Err(Error::EmptySubspace(format!(
            "no observed eigenvalue reaches M_hat = {}",
            plan.m_hat
        )));
    }
    if diag.true_dim == 0 {
        return Err(Error::EmptySubspace(format!(
            "no true eigenvalue reaches M_under = {}",
            plan.m_under
        )));
    }
    Ok(diag)
}

/// Surplus derivatives of a (typically signal-derived) intervention under the
/// true state.
pub fn surplus_under_truth(state: &MarketState, sigma: &Intervention) -> Result<SurplusReport> {
    let dec = decompose(&state.d)?;
    passthrough_spectral(state, &dec, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{equilibrium_response, random_valid_state, surplus_from_response};
    use crate::rng::{stream, Stream};
    use nalgebra::{dmatrix, dvector};

    fn oracle(state: &MarketState, sigma: &Intervention) -> SurplusReport {
        let resp = equilibrium_response(state, sigma).unwrap();
        surplus_from_response(state, sigma, &resp)
    }

    #[test]
    fn plan_defaults_ordered() {
        for n in [64, 300, 1024] {
            ThresholdPlan::for_n(n).validate().unwrap();
        }
        let p = ThresholdPlan::for_n(300);
        assert!((p.m_hat - 44.81).abs() < 0.01);
        assert!(ThresholdPlan { m_hat: 1.0, m_under: 2.0, m: 3.0 }.validate().is_err());
    }

    #[test]
    fn robust_single_axis() {
        let sig = Signal {
            d_hat: DMatrix::from_diagonal(&dvector![-100.0, -1.0, -1.0]),
            q0_hat: dvector![0.5, 0.1, 0.1],
        };
        let plan = ThresholdPlan { m_under: 5.0, m_hat: 10.0, m: 50.0 };
        let s = robust_spectral_intervention(&sig, &plan).unwrap();
        assert!((s.sigma - dvector![2.0, 0.0, 0.0]).amax() < 1e-14);
    }

    #[test]
    fn robust_empty_and_degenerate() {
        let sig = Signal {
            d_hat: -DMatrix::<f64>::identity(3, 3),
            q0_hat: dvector![0.5, 0.1, 0.1],
        };
        let plan = ThresholdPlan { m_under: 5.0, m_hat: 10.0, m: 50.0 };
        assert!(matches!(
            robust_spectral_intervention(&sig, &plan),
            Err(Error::NoRecoverableStructure { .. })
        ));
        let sig = Signal {
            d_hat: DMatrix::from_diagonal(&dvector![-100.0, -1.0, -1.0]),
            q0_hat: dvector![0.0, 0.1, 0.1],
        };
        assert!(matches!(
            robust_spectral_intervention(&sig, &plan),
            Err(Error::DegenerateProjection { .. })
        ));
    }

    #[test]
    fn first_eigenvector_identity() {
        let sig = Signal { d_hat: -DMatrix::<f64>::identity(2, 2), q0_hat: dvector![0.5, 0.5] };
        let s = first_eigenvector_intervention(&sig, 1.0).unwrap();
        assert_eq!(s.sigma, dvector![2.0, 0.0]);
        let z = first_eigenvector_intervention(&sig, 0.0).unwrap();
        assert_eq!(z.sigma, dvector![0.0, 0.0]);
        let dec = decompose(&sig.d_hat).unwrap();
        assert!(first_eigenvector_from_decomposition(&dec, &sig.q0_hat, 1.0, 1e-6)
            .unwrap()
            .degenerate_top);
    }

    #[test]
    fn first_eigenvector_homogeneous() {
        let st = random_valid_state(10, &mut stream(3, Stream::Generator));
        let sig = Signal::exact(&st);
        let a = first_eigenvector_intervention(&sig, 1.0).unwrap();
        let b = first_eigenvector_intervention(&sig, 2.5).unwrap();
        assert!((a.sigma * 2.5 - b.sigma).amax() <= 1e-15);
    }

    #[test]
    fn complete_info_identity_case() {
        let st = MarketState::new(-DMatrix::identity(3, 3), dvector![1.0, 0.0, 0.0]).unwrap();
        let s = complete_info_intervention(&st, 0.5, 1.0).unwrap();
        let r = oracle(&st, &s);
        assert!((r.c_dot - 0.5).abs() < 1e-12 && (r.p_dot_surplus - 1.0).abs() < 1e-12);
        assert!(matches!(
            complete_info_intervention(&st, 0.2, 1.0),
            Err(Error::InfeasibleTargets { .. })
        ));
    }

    #[test]
    fn complete_info_two_by_two() {
        let st = MarketState::new(dmatrix![-1.0, 0.5; 0.5, -1.0], dvector![0.6, 0.3]).unwrap();
        for (c, s) in [(0.2, 1.0), (0.0, 1.0)] {
            let sigma = complete_info_intervention(&st, c, s).unwrap();
            let r = oracle(&st, &sigma);
            assert!((r.c_dot - c).abs() < 1e-8, "{r:?}");
            assert!((r.s_dot - s).abs() < 1e-8);
            assert!((r.p_dot_surplus - 2.0 * (s - c)).abs() < 1e-8);
        }
    }

    #[test]
    fn complete_info_single_mode_is_degenerate() {
        // q0 along one eigenvector: no second direction to trade off against.
        let st = MarketState::new(dmatrix![-1.0, 0.5; 0.5, -1.0], dvector![0.5, 0.5]).unwrap();
        assert!(matches!(
            complete_info_intervention(&st, 0.2, 1.0),
            Err(Error::DegenerateProjections)
        ));
    }

    #[test]
    fn diagnostics_noiseless() {
        let d = DMatrix::from_diagonal(&dvector![-100.0, -40.0, -1.0, -1.0]);
        let st = MarketState::new(d.clone(), dvector![0.5, 0.5, 0.1, 0.1]).unwrap();
        let plan = ThresholdPlan { m_under: 5.0, m_hat: 10.0, m: 200.0 };
        let diag = davis_kahan_diagnostics(&st, &Signal::exact(&st), &plan).unwrap();
        assert_eq!(diag.e_norm, 0.0);
        assert!(diag.subspace_misalignment < 1e-12);
        assert!((diag.top_vector_overlap - 1.0).abs() < 1e-12);
        assert_eq!(diag.gap, 39.0);
        assert_eq!((diag.retained_dim, diag.true_dim), (2, 2));
    }

    #[test]
    fn diagnostics_rotation_oracle() {
        // Observed top eigenvector rotated by theta inside the (e1, e3) plane:
        // misalignment is |sin theta|.
        let theta: f64 = 0.3;
        let (c, s) = (theta.cos(), theta.sin());
        let d = DMatrix::from_diagonal(&dvector![-50.0, -1.0, -1.0]);
        let r = dmatrix![c, 0.0, -s; 0.0, 1.0, 0.0; s, 0.0, c];
        let d_hat = &r * &d * r.transpose();
        let st = MarketState::new(d, dvector![0.5, 0.1, 0.1]).unwrap();
        let sig = Signal { d_hat, q0_hat: st.q0.clone() };
        let plan = ThresholdPlan { m_under: 5.0, m_hat: 10.0, m: 60.0 };
        let diag = davis_kahan_diagnostics(&st, &sig, &plan).unwrap();
        assert!((diag.subspace_misalignment - s).abs() < 1e-10);
        assert!((diag.top_vector_overlap - c).abs() < 1e-10);
        assert!(diag.subspace_misalignment <= diag.dk_bound + 1e-9);
    }

    #[test]
    fn diagnostics_empty_spaces() {
        let st = MarketState::new(-DMatrix::identity(3, 3), dvector![0.5, 0.1, 0.1]).unwrap();
        let plan = ThresholdPlan { m_under: 5.0, m_hat: 10.0, m: 50.0 };
        assert!(matches!(
            davis_kahan_diagnostics(&st, &Signal::exact(&st), &plan),
            Err(Error::EmptySubspace(_))
        ));
    }

    #[test]
    fn surplus_under_truth_matches_oracle() {
        let st = random_valid_state(8, &mut stream(9, Stream::Generator));
        let sigma = Intervention::new(DVector::from_fn(8, |i, _| (i as f64 * 0.7).sin())).unwrap();
        let a = surplus_under_truth(&st, &sigma).unwrap();
        let b = oracle(&st, &sigma);
        assert!((a.w_dot - b.w_dot).abs() < 1e-10);
        assert!((a.c_dot - b.c_dot).abs() < 1e-10);
    }
}
