//! Market states, interventions, and the direct equilibrium solver.
//!
//! A market state is the normalized Slutsky matrix `D` (symmetric, negative
//! semidefinite, unit negative diagonal) together with the status-quo
//! quantity vector `q0`. A per-unit subsidy vector `sigma` moves prices by the
//! solution of `(I - D) p_dot = -sigma`, and quantities by `q_dot = D p_dot`.
//!
//! The solver here works directly on the linear system and is the reference
//! every spectral computation in [`crate::spectral`] is checked against.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub d: DMatrix<f64>,
    pub q0: DVector<f64>,
}

impl MarketState {
    /// Builds a state after checking shapes and finiteness only. Use
    /// [`validate_market_state`] for the structural invariants.
    pub fn new(d: DMatrix<f64>, q0: DVector<f64>) -> Result<Self> {
        check_dim(d.nrows(), d.ncols())?;
        check_dim(d.nrows(), q0.len())?;
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("D"));
        }
        if q0.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("q0"));
        }
        Ok(Self { d, q0 })
    }

    pub fn n(&self) -> usize {
        self.q0.len()
    }
}

/// Per-unit subsidy (positive) or tax (negative) for each firm.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub sigma: DVector<f64>,
}

impl Intervention {
    pub fn new(sigma: DVector<f64>) -> Result<Self> {
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("sigma"));
        }
        Ok(Self { sigma })
    }

    pub fn zeros(n: usize) -> Self {
        Self { sigma: DVector::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Expenditure `sigma . q` against a quantity vector.
    pub fn expenditure(&self, q: &DVector<f64>) -> f64 {
        self.sigma.dot(q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResponse {
    pub p_dot: DVector<f64>,
    pub q_dot: DVector<f64>,
}

/// One eigenmode's share of the surplus derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeContribution {
    pub index: usize,
    pub eigenvalue: f64,
    pub q0_projection: f64,
    pub sigma_projection: f64,
    pub w_contribution: f64,
}

/// First-order surplus derivatives along an intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusReport {
    pub c_dot: f64,
    pub p_dot_surplus: f64,
    pub w_dot: f64,
    pub s_dot: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mode_contributions: Vec<ModeContribution>,
}

impl SurplusReport {
    pub fn zero() -> Self {
        Self {
            c_dot: 0.0,
            p_dot_surplus: 0.0,
            w_dot: 0.0,
            s_dot: 0.0,
            mode_contributions: Vec::new(),
        }
    }

    /// `0.5 P_dot + C_dot - S_dot`, which vanishes for every intervention.
    pub fn identity_residual(&self) -> f64 {
        0.5 * self.p_dot_surplus + self.c_dot - self.s_dot
    }
}

/// Rescales a raw demand-derivative matrix to unit negative diagonal.
///
/// Returns `(Gamma D_raw Gamma, gamma)` with `gamma_i = 1/sqrt(|D_raw_ii|)`.
pub fn normalize_slutsky(d_raw: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_dim(d_raw.nrows(), d_raw.ncols())?;
    let n = d_raw.nrows();
    let scale = d_raw.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let dev = (d_raw[(i, j)] - d_raw[(j, i)]).abs();
            if dev > 1e-12 * scale {
                return Err(Error::AsymmetricInput { i, j, deviation: dev });
            }
        }
    }
    let mut gamma = DVector::zeros(n);
    for i in 0..n {
        let v = d_raw[(i, i)];
        if !(v < 0.0) {
            return Err(Error::NonNegativeDiagonal { index: i, value: v });
        }
        gamma[i] = 1.0 / (-v).sqrt();
    }
    let d = DMatrix::from_fn(n, n, |i, j| {
        let (lo, hi) = (i.min(j), i.max(j));
        if lo == hi {
            -1.0
        } else {
            gamma[lo] * d_raw[(lo, hi)] * gamma[hi]
        }
    });
    Ok((d, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Asymmetric,
    NotNegativeSemidefinite,
    DiagonalNotMinusOne,
    QuantityNormAboveOne,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Size of the violation beyond the tolerance-free bound.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn find(&self, kind: ViolationKind) -> Option<&Violation> {
        self.violations.iter().find(|v| v.kind == kind)
    }
}

/// Checks every market-state invariant at tolerance `tol` and lists the
/// violations. Reports the worst offender per invariant.
pub fn validate_market_state(state: &MarketState, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let d = &state.d;
    let n = state.n();
    if d.iter().chain(state.q0.iter()).any(|x| !x.is_finite()) {
        report.violations.push(Violation {
            kind: ViolationKind::NonFinite,
            magnitude: f64::INFINITY,
        });
        return report;
    }

    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((d[(i, j)] - d[(j, i)]).abs());
        }
    }
    if asym > tol {
        report.violations.push(Violation {
            kind: ViolationKind::Asymmetric,
            magnitude: asym,
        });
    }

    let diag = (0..n).map(|i| (d[(i, i)] + 1.0).abs()).fold(0.0, f64::max);
    if diag > tol {
        report.violations.push(Violation {
            kind: ViolationKind::DiagonalNotMinusOne,
            magnitude: diag,
        });
    }

    if n > 0 {
        let sym = (d + d.transpose()) * 0.5;
        let max_eig = sym.symmetric_eigenvalues().max();
        if max_eig > tol {
            report.violations.push(Violation {
                kind: ViolationKind::NotNegativeSemidefinite,
                magnitude: max_eig,
            });
        }
    }

    let norm = state.q0.norm();
    if norm > 1.0 + tol {
        report.violations.push(Violation {
            kind: ViolationKind::QuantityNormAboveOne,
            magnitude: norm - 1.0,
        });
    }
    report
}

/// Solves `(I - D) p_dot = -sigma` by Cholesky and sets `q_dot = D p_dot`.
pub fn equilibrium_response(
    state: &MarketState,
    sigma: &Intervention,
) -> Result<EquilibriumResponse> {
    check_dim(state.n(), sigma.len())?;
    let n = state.n();
    let system = DMatrix::<f64>::identity(n, n) - &state.d;
    let chol = Cholesky::new(system).ok_or(Error::SingularSystem)?;
    let p_dot = chol.solve(&(-&sigma.sigma));
    let q_dot = &state.d * &p_dot;
    Ok(EquilibriumResponse { p_dot, q_dot })
}

/// Surplus derivatives from an already-computed response:
/// `C_dot = -q0.p_dot`, `P_dot = 2 q0.q_dot`, `S_dot = sigma.q0`,
/// `W_dot = C_dot + P_dot - S_dot`.
pub fn surplus_from_response(
    state: &MarketState,
    sigma: &Intervention,
    resp: &EquilibriumResponse,
) -> SurplusReport {
    let c_dot = -state.q0.dot(&resp.p_dot);
    let p_dot_surplus = 2.0 * state.q0.dot(&resp.q_dot);
    let s_dot = sigma.sigma.dot(&state.q0);
    SurplusReport {
        c_dot,
        p_dot_surplus,
        w_dot: c_dot + p_dot_surplus - s_dot,
        s_dot,
        mode_contributions: Vec::new(),
    }
}

/// Consumer-surplus derivative of a single household with consumption `q_h`.
pub fn household_surplus(q_h: &DVector<f64>, p_dot: &DVector<f64>) -> Result<f64> {
    check_dim(p_dot.len(), q_h.len())?;
    Ok(-q_h.dot(p_dot))
}

/// A random valid state: `D_raw = -A A^T - eps I` with Gaussian `A`,
/// normalized, and `q0` uniform in direction with norm in `[0, 1)`.
pub fn random_valid_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> MarketState {
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let d_raw = -(&a * a.transpose()) - DMatrix::<f64>::identity(n, n) * 1e-6;
    let d_raw = (&d_raw + d_raw.transpose()) * 0.5;
    let (d, _) = normalize_slutsky(&d_raw).expect("negative definite by construction");
    let dir = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
    let radius: f64 = rng.random();
    let q0 = dir.normalize() * radius;
    MarketState { d, q0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use nalgebra::{dmatrix, dvector};

    fn two_by_two() -> MarketState {
        MarketState::new(dmatrix![-1.0, 0.5; 0.5, -1.0], dvector![0.6, 0.3]).unwrap()
    }

    // Independent oracle: plain elementwise triple loop.
    fn naive_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(a.nrows(), b.ncols());
        for i in 0..a.nrows() {
            for j in 0..b.ncols() {
                let mut s = 0.0;
                for k in 0..a.ncols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    #[test]
    fn normalize_identity() {
        let (d, g) = normalize_slutsky(&dmatrix![-1.0]).unwrap();
        assert_eq!(d, dmatrix![-1.0]);
        assert_eq!(g, dvector![1.0]);
    }

    #[test]
    fn normalize_two_by_two_matches_product_oracle() {
        let raw = dmatrix![-4.0, 1.0; 1.0, -1.0];
        let (d, g) = normalize_slutsky(&raw).unwrap();
        assert_eq!(g, dvector![0.5, 1.0]);
        let gam = DMatrix::from_diagonal(&g);
        let oracle = naive_product(&naive_product(&gam, &raw), &gam);
        assert_eq!(oracle, dmatrix![-1.0, 0.5; 0.5, -1.0]);
        assert!((d - oracle).amax() < 1e-15);
    }

    #[test]
    fn normalize_scaled_identity() {
        let (d, g) = normalize_slutsky(&(DMatrix::<f64>::identity(3, 3) * -2.0)).unwrap();
        assert_eq!(d, -DMatrix::<f64>::identity(3, 3));
        for x in g.iter() {
            assert!((x - 0.5_f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert!(matches!(
            normalize_slutsky(&dmatrix![-1.0, 0.0; 0.0, 0.0]),
            Err(Error::NonNegativeDiagonal { index: 1, .. })
        ));
        assert!(matches!(
            normalize_slutsky(&dmatrix![-1.0, 0.2; 0.1, -1.0]),
            Err(Error::AsymmetricInput { .. })
        ));
    }

    #[test]
    fn validation_cases() {
        let ok = MarketState::new(-DMatrix::identity(2, 2), dvector![0.5, 0.5]).unwrap();
        assert!(validate_market_state(&ok, 1e-12).is_valid());

        let bad = MarketState::new(dmatrix![-1.0, 2.0; 2.0, -1.0], dvector![0.1, 0.1]).unwrap();
        let r = validate_market_state(&bad, 1e-12);
        let v = r.find(ViolationKind::NotNegativeSemidefinite).unwrap();
        assert!((v.magnitude - 1.0).abs() < 1e-12);

        let big = MarketState::new(-DMatrix::identity(2, 2), dvector![1.0, 1.0]).unwrap();
        let r = validate_market_state(&big, 1e-12);
        assert!(r.find(ViolationKind::QuantityNormAboveOne).is_some());
    }

    #[test]
    fn response_independent_products() {
        let st = MarketState::new(-DMatrix::identity(2, 2), dvector![1.0, 0.0]).unwrap();
        let sigma = Intervention::new(dvector![1.0, 0.0]).unwrap();
        let r = equilibrium_response(&st, &sigma).unwrap();
        assert!((&r.p_dot - dvector![-0.5, 0.0]).amax() < 1e-15);
        assert!((&r.q_dot - dvector![0.5, 0.0]).amax() < 1e-15);

        let s = surplus_from_response(&st, &sigma, &r);
        let got = [s.s_dot, s.c_dot, s.p_dot_surplus, s.w_dot];
        for (g, w) in got.iter().zip([1.0, 0.5, 1.0, 0.5]) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn response_two_by_two_matches_cramer() {
        let st = two_by_two();
        let sigma = Intervention::new(dvector![1.0, 0.0]).unwrap();
        let r = equilibrium_response(&st, &sigma).unwrap();
        // (I - D) = [[2, -0.5], [-0.5, 2]], det = 3.75, rhs = (-1, 0).
        let det = 2.0 * 2.0 - 0.25;
        let p0 = (-1.0 * 2.0) / det;
        let p1 = (-0.5 * 1.0) / det;
        assert!((r.p_dot[0] - p0).abs() < 1e-14);
        assert!((r.p_dot[1] - p1).abs() < 1e-14);
        assert!((r.p_dot[0] + 0.533_333_333_333).abs() < 1e-9);
        assert!((r.q_dot[0] - 0.466_666_666_667).abs() < 1e-9);
        assert!((r.q_dot[1] + 0.133_333_333_333).abs() < 1e-9);
    }

    #[test]
    fn response_along_eigenvector() {
        let st = two_by_two();
        let u = dvector![1.0, -1.0] / 2f64.sqrt();
        let lam = 1.5;
        let r = equilibrium_response(&st, &Intervention::new(u.clone()).unwrap()).unwrap();
        assert!((&r.p_dot + &u / (1.0 + lam)).amax() < 1e-14);
        assert!((&r.q_dot - &u * (lam / (1.0 + lam))).amax() < 1e-14);
    }

    #[test]
    fn zero_intervention_is_inert() {
        let st = two_by_two();
        let z = Intervention::zeros(2);
        let s = surplus_from_response(&st, &z, &equilibrium_response(&st, &z).unwrap());
        assert_eq!((s.c_dot, s.p_dot_surplus, s.w_dot, s.s_dot), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn household_cases() {
        let p = dvector![-0.5, 0.0];
        assert_eq!(household_surplus(&dvector![0.0, 0.0], &p).unwrap(), 0.0);
        assert_eq!(household_surplus(&dvector![1.0, 0.0], &p).unwrap(), 0.5);
        assert!(matches!(
            household_surplus(&dvector![1.0], &p),
            Err(Error::DimensionMismatch { .. })
        ));

        let st = two_by_two();
        let sigma = Intervention::new(dvector![0.3, -0.7]).unwrap();
        let r = equilibrium_response(&st, &sigma).unwrap();
        let agg = surplus_from_response(&st, &sigma, &r).c_dot;
        assert_eq!(household_surplus(&st.q0, &r.p_dot).unwrap(), agg);
    }

    #[test]
    fn random_states_are_valid() {
        let mut rng = stream(3, Stream::Auxiliary);
        for n in [2, 5, 17] {
            let st = random_valid_state(n, &mut rng);
            let rep = validate_market_state(&st, 1e-10);
            assert!(rep.is_valid(), "{rep:?}");
        }
    }
}
