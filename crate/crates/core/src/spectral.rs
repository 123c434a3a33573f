//! Eigendecomposition of the Slutsky matrix and the per-mode pass-through
//! formulas.
//!
//! Writing `D = U Lambda U^T` with eigenvalues sorted by magnitude, an
//! intervention acts on each eigenmode independently:
//!
//! ```text
//! p_dot = -sum_l u_l (u_l.sigma) / (1 + |lambda_l|)
//! q_dot =  sum_l u_l (u_l.sigma) |lambda_l| / (1 + |lambda_l|)
//! ```
//!
//! and the surplus derivatives are weighted sums of `(u_l.q0)(u_l.sigma)`.
//! High-magnitude modes pass subsidies almost entirely to producers; the
//! `lambda = -1` modes split them evenly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::market::{EquilibriumResponse, Intervention, MarketState, ModeContribution, SurplusReport};

/// Relative width within which two eigenvalue magnitudes count as tied for
/// ordering purposes.
const TIE_TOL: f64 = 1e-9;

/// Eigenpairs sorted by `|lambda|` descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Column `l` is the unit eigenvector for `eigenvalues[l]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, l: usize) -> DVector<f64> {
        self.eigenvectors.column(l).into_owned()
    }

    /// Number of eigenvalues with `|lambda| >= threshold`.
    pub fn count_at_least(&self, threshold: f64) -> usize {
        self.eigenvalues.iter().take_while(|l| l.abs() >= threshold).count()
    }

    /// Whether the top two magnitudes are tied within `tol`.
    pub fn top_is_degenerate(&self, tol: f64) -> bool {
        self.n() >= 2 && (self.eigenvalues[0].abs() - self.eigenvalues[1].abs()).abs() <= tol
    }

    pub fn to_export(&self) -> DecompositionExport {
        let n = self.n();
        let mut row_major = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                row_major.push(self.eigenvectors[(i, j)]);
            }
        }
        DecompositionExport {
            eigenvalues: self.eigenvalues.iter().copied().collect(),
            eigenvectors_row_major: row_major,
        }
    }
}

/// Debug dump of a decomposition. Not a stable format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionExport {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors_row_major: Vec<f64>,
}

fn dominant_index(v: &[f64]) -> usize {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    // First entry within rounding of the maximum, so that vectors such as
    // (1, -1)/sqrt(2) resolve to the leading coordinate on every platform.
    v.iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-12))
        .unwrap_or(0)
}

/// Symmetric eigendecomposition with a deterministic layout.
///
/// Eigenpairs are sorted by `|lambda|` descending. Runs of magnitudes tied
/// within a relative `1e-9` are ordered by the position of each vector's
/// dominant coordinate, and every vector is signed so that its dominant
/// coordinate is positive.
pub fn decompose(d: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    check_dim(d.nrows(), d.ncols())?;
    let n = d.nrows();
    let scale = d.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let dev = (d[(i, j)] - d[(j, i)]).abs();
            if dev > 1e-10 * scale {
                return Err(Error::AsymmetricInput { i, j, deviation: dev });
            }
        }
    }
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(d.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or(Error::ConvergenceFailure)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(a.cmp(&b))
    });

    let mut columns: Vec<(f64, Vec<f64>)> = order
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            if v[dominant_index(&v)] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (eig.eigenvalues[k], v)
        })
        .collect();

    let mut start = 0;
    while start < n {
        let head = columns[start].0.abs();
        let mut end = start + 1;
        while end < n && (head - columns[end].0.abs()) <= TIE_TOL * head.max(1.0) {
            end += 1;
        }
        columns[start..end].sort_by_key(|(_, v)| dominant_index(v));
        start = end;
    }

    let eigenvalues = DVector::from_iterator(n, columns.iter().map(|(l, _)| *l));
    let eigenvectors = DMatrix::from_fn(n, n, |i, j| columns[j].1[i]);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// Span of the eigenvectors whose eigenvalues have magnitude at least
/// `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenspace {
    /// `n x k`, orthonormal columns. `k` may be zero.
    pub basis: DMatrix<f64>,
    pub threshold: f64,
    pub indices: Vec<usize>,
}

impl Eigenspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }
}

pub fn eigenspace_at(dec: &SpectralDecomposition, threshold: f64) -> Eigenspace {
    let threshold = threshold.max(0.0);
    let k = dec.count_at_least(threshold);
    Eigenspace {
        basis: dec.eigenvectors.columns(0, k).into_owned(),
        threshold,
        indices: (0..k).collect(),
    }
}

/// Orthogonal projection `B B^T v`.
pub fn project(space: &Eigenspace, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(space.basis.nrows(), v.len())?;
    if space.is_empty() {
        return Ok(DVector::zeros(v.len()));
    }
    let coords = space.basis.tr_mul(v);
    Ok(&space.basis * coords)
}

/// Price and quantity derivatives assembled mode by mode.
pub fn price_quantity_spectral(
    dec: &SpectralDecomposition,
    sigma: &Intervention,
) -> Result<EquilibriumResponse> {
    check_dim(dec.n(), sigma.len())?;
    let coords = dec.eigenvectors.tr_mul(&sigma.sigma);
    let p_coef = DVector::from_fn(dec.n(), |l, _| {
        -coords[l] / (1.0 + dec.eigenvalues[l].abs())
    });
    let q_coef = DVector::from_fn(dec.n(), |l, _| {
        let mag = dec.eigenvalues[l].abs();
        coords[l] * mag / (1.0 + mag)
    });
    Ok(EquilibriumResponse {
        p_dot: &dec.eigenvectors * p_coef,
        q_dot: &dec.eigenvectors * q_coef,
    })
}

/// Surplus derivatives with per-mode bookkeeping.
///
/// With `a_l = (u_l.q0)(u_l.sigma)` and `w_l = |lambda_l| / (1 + |lambda_l|)`:
/// `C_dot = sum a_l (1 - w_l)`, `P_dot = 2 sum a_l w_l`, `W_dot = sum a_l w_l`,
/// `S_dot = sum a_l`.
pub fn passthrough_spectral(
    state: &MarketState,
    dec: &SpectralDecomposition,
    sigma: &Intervention,
) -> Result<SurplusReport> {
    check_dim(dec.n(), state.n())?;
    check_dim(dec.n(), sigma.len())?;
    let q_coords = dec.eigenvectors.tr_mul(&state.q0);
    let s_coords = dec.eigenvectors.tr_mul(&sigma.sigma);

    let mut report = SurplusReport::zero();
    report.mode_contributions.reserve(dec.n());
    for l in 0..dec.n() {
        let mag = dec.eigenvalues[l].abs();
        let a = q_coords[l] * s_coords[l];
        let w = a * mag / (1.0 + mag);
        report.c_dot += a / (1.0 + mag);
        report.w_dot += w;
        report.s_dot += a;
        report.mode_contributions.push(ModeContribution {
            index: l,
            eigenvalue: dec.eigenvalues[l],
            q0_projection: q_coords[l],
            sigma_projection: s_coords[l],
            w_contribution: w,
        });
    }
    report.p_dot_surplus = 2.0 * report.w_dot;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{equilibrium_response, random_valid_state, surplus_from_response};
    use crate::rng::{stream, Stream};
    use nalgebra::{dmatrix, dvector};
    use rand::Rng;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn minus_identity_layout() {
        let dec = decompose(&-DMatrix::<f64>::identity(3, 3)).unwrap();
        assert_eq!(dec.eigenvalues, dvector![-1.0, -1.0, -1.0]);
        assert_eq!(dec.eigenvectors, DMatrix::identity(3, 3));
    }

    #[test]
    fn equicorrelated_three() {
        let d = dmatrix![-1.0, 0.5, 0.5; 0.5, -1.0, 0.5; 0.5, 0.5, -1.0];
        let dec = decompose(&d).unwrap();
        assert!((dec.eigenvalues[0] + 1.5).abs() < 1e-12);
        assert!((dec.eigenvalues[1] + 1.5).abs() < 1e-12);
        assert!(dec.eigenvalues[2].abs() < 1e-12);
        let ones = DVector::from_element(3, 1.0 / 3f64.sqrt());
        assert!((dec.vector(2) - ones).amax() < 1e-12);
    }

    #[test]
    fn two_by_two_analytic() {
        // Eigenvalues of [[a, b], [b, a]] are a +/- b with vectors (1, +/-1)/sqrt 2.
        let dec = decompose(&dmatrix![-1.0, 0.5; 0.5, -1.0]).unwrap();
        assert!((dec.eigenvalues[0] + 1.5).abs() < 1e-14);
        assert!((dec.eigenvalues[1] + 0.5).abs() < 1e-14);
        let h = 0.5f64.sqrt();
        assert!((dec.vector(0) - dvector![h, -h]).amax() < 1e-14);
        assert!((dec.vector(1) - dvector![h, h]).amax() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(matches!(
            decompose(&dmatrix![-1.0, 0.3; 0.0, -1.0]),
            Err(Error::AsymmetricInput { .. })
        ));
    }

    #[test]
    fn eigenspace_thresholds() {
        let dec = decompose(&-DMatrix::<f64>::identity(3, 3)).unwrap();
        assert_eq!(eigenspace_at(&dec, 0.5).dim(), 3);
        let empty = eigenspace_at(&dec, 2.0);
        assert!(empty.is_empty());
        assert_eq!(project(&empty, &dvector![1.0, 2.0, 3.0]).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn coordinate_projection() {
        let space = Eigenspace {
            basis: dmatrix![1.0; 0.0],
            threshold: 0.0,
            indices: vec![0],
        };
        assert_eq!(project(&space, &dvector![3.0, 4.0]).unwrap(), dvector![3.0, 0.0]);
        assert!(matches!(
            project(&space, &dvector![1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = stream(11, Stream::Auxiliary);
        let st = random_valid_state(9, &mut rng);
        let dec = decompose(&st.d).unwrap();
        let space = eigenspace_at(&dec, dec.eigenvalues[3].abs());
        let v = DVector::from_fn(9, |_, _| rng.random::<f64>() - 0.5);
        let once = project(&space, &v).unwrap();
        let twice = project(&space, &once).unwrap();
        assert!((once - twice).amax() < 1e-10);
    }

    #[test]
    fn single_mode_surplus() {
        let st = MarketState::new(-DMatrix::identity(2, 2), dvector![1.0, 0.0]).unwrap();
        let dec = decompose(&st.d).unwrap();
        let s = passthrough_spectral(&st, &dec, &Intervention::new(dvector![1.0, 0.0]).unwrap())
            .unwrap();
        assert_eq!((s.c_dot, s.p_dot_surplus, s.w_dot, s.s_dot), (0.5, 1.0, 0.5, 1.0));
        let r = price_quantity_spectral(&dec, &Intervention::new(dvector![1.0, 0.0]).unwrap())
            .unwrap();
        assert_eq!(r.p_dot, dvector![-0.5, 0.0]);
        assert_eq!(r.q_dot, dvector![0.5, 0.0]);
    }

    #[test]
    fn strong_mode_goes_to_producers() {
        // D = -(n/2) u u^T - I/2 style: one very strong mode.
        let n = 4;
        let u = DVector::from_element(n, 0.5);
        let strength = 1e6;
        let d = -(&u * u.transpose()) * strength - DMatrix::identity(n, n) * 0.5;
        let q0 = &u * 0.5;
        let st = MarketState { d, q0 };
        let dec = decompose(&st.d).unwrap();
        let s = passthrough_spectral(&st, &dec, &Intervention::new(u.clone()).unwrap()).unwrap();
        assert!(s.c_dot.abs() < 1e-6);
        assert!((s.p_dot_surplus - 2.0 * s.s_dot).abs() < 1e-6);
    }

    #[test]
    fn random_state_matches_direct_solve() {
        let mut rng = stream(5, Stream::Auxiliary);
        let st = random_valid_state(8, &mut rng);
        let sigma = Intervention::new(DVector::from_fn(8, |_, _| rng.random::<f64>() - 0.5)).unwrap();
        let dec = decompose(&st.d).unwrap();
        let spec = passthrough_spectral(&st, &dec, &sigma).unwrap();
        let resp = equilibrium_response(&st, &sigma).unwrap();
        let direct = surplus_from_response(&st, &sigma, &resp);
        assert!(rel_close(spec.c_dot, direct.c_dot, 1e-8));
        assert!(rel_close(spec.p_dot_surplus, direct.p_dot_surplus, 1e-8));
        assert!(rel_close(spec.w_dot, direct.w_dot, 1e-8));
        assert!(rel_close(spec.s_dot, direct.s_dot, 1e-8));
        let pq = price_quantity_spectral(&dec, &sigma).unwrap();
        assert!((pq.p_dot - resp.p_dot).amax() < 1e-8);
        assert!((pq.q_dot - resp.q_dot).amax() < 1e-8);
        let summed: f64 = spec.mode_contributions.iter().map(|m| m.w_contribution).sum();
        assert_eq!(summed, spec.w_dot);
    }

    #[test]
    fn decomposition_invariants_and_trace_bound() {
        let mut rng = stream(9, Stream::Auxiliary);
        for n in [3, 12, 30] {
            let st = random_valid_state(n, &mut rng);
            let dec = decompose(&st.d).unwrap();
            let u = &dec.eigenvectors;
            let gram = u.transpose() * u - DMatrix::<f64>::identity(n, n);
            assert!(gram.amax() < 1e-9);
            for l in 0..n {
                let lam = dec.eigenvalues[l];
                let r = &st.d * dec.vector(l) - dec.vector(l) * lam;
                assert!(r.norm() <= 1e-8 * lam.abs().max(1.0));
                if l > 0 {
                    assert!(dec.eigenvalues[l - 1].abs() >= lam.abs());
                }
            }
            for m in [0.5, 1.0, 2.0, 5.0] {
                assert!(dec.count_at_least(m) as f64 <= n as f64 / m + 1e-9);
            }
        }
    }
}
