//! Families of market states.
//!
//! * [`gen_block_example`]: three product categories with complementarity
//!   inside a category and substitution across, blended with an unstructured
//!   `-Z Z^T` term by the weight `gamma`.
//! * [`gen_prop2_part1`] / [`adversarial_q0_for_sigma`]: an equicorrelated
//!   market with no strong structure in which any fixed intervention can be
//!   paired with a status quo that makes it lower total surplus.
//! * [`gen_prop2_part2`]: one very strong mode along the all-ones direction
//!   plus Hadamard-basis quantity perturbations with random signs.
//! * [`gen_hedonic`]: characteristics-based demand whose eigenvalues stay
//!   bounded as `n` grows.
//! * [`gen_planted`]: a rank-2 strong component of size `n/4` on top of a
//!   weak residual, used for the large-`n` trend study.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::market::{normalize_slutsky, validate_market_state, Intervention, MarketState};
use crate::spectral::{decompose, eigenspace_at, project, SpectralDecomposition};

/// Rows drawn uniformly from the unit sphere in `R^cols`.
fn unit_rows<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut z = DMatrix::<f64>::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    for mut row in z.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
    z
}

/// `Z Z^T` with the lower triangle copied from the upper one.
fn gram_rows(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = z * z.transpose();
    let n = g.nrows();
    for j in 0..n {
        for i in 0..j {
            g[(j, i)] = g[(i, j)];
        }
    }
    g
}

fn lognormal<R: Rng + ?Sized>(log_mean: f64, log_var: f64, rng: &mut R) -> Result<f64> {
    let normal =
        Normal::new(log_mean, log_var.sqrt()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(normal.sample(rng).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockExampleConfig {
    pub n: usize,
    /// Block interaction matrix, `k x k`, symmetric with `-1` diagonal.
    pub c: Vec<Vec<f64>>,
    pub gamma: f64,
    /// Columns of `Z`; `None` means `n`.
    pub z_cols: Option<usize>,
    pub q_block_base: Vec<f64>,
    pub log_mean: f64,
    pub log_var: f64,
}

impl Default for BlockExampleConfig {
    fn default() -> Self {
        Self {
            n: 300,
            c: vec![
                vec![-1.0, 0.15, 0.7],
                vec![0.15, -1.0, 0.6],
                vec![0.7, 0.6, -1.0],
            ],
            gamma: 0.3,
            z_cols: None,
            q_block_base: vec![0.1, 0.1, 3.0],
            log_mean: 1.0,
            log_var: 0.1,
        }
    }
}

impl BlockExampleConfig {
    pub fn k(&self) -> usize {
        self.c.len()
    }

    pub fn block_of(&self, i: usize) -> usize {
        i / (self.n / self.k())
    }

    fn c_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_fn(k, k, |i, j| self.c[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if k == 0 || self.c.iter().any(|r| r.len() != k) {
            return fail("C must be a non-empty square matrix".into());
        }
        if self.n == 0 || self.n % k != 0 {
            return fail(format!("n = {} is not a positive multiple of {k} blocks", self.n));
        }
        for i in 0..k {
            if self.c[i][i] != -1.0 {
                return fail(format!("C[{i}][{i}] must be -1"));
            }
            for j in 0..k {
                if self.c[i][j] != self.c[j][i] {
                    return fail("C must be symmetric".into());
                }
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma = {} outside [0, 1]", self.gamma));
        }
        if self.q_block_base.len() != k || self.q_block_base.iter().any(|&q| !(q > 0.0)) {
            return fail("q_block_base needs k positive entries".into());
        }
        if self.z_cols == Some(0) {
            return fail("z_cols must be positive".into());
        }
        if !(self.log_var >= 0.0) || !self.log_mean.is_finite() {
            return fail("log_var must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BlockExample {
    pub state: MarketState,
    /// Factor applied to the raw quantities to reach unit norm.
    pub q0_scale: f64,
    /// Draws needed before the state passed validation.
    pub attempts: usize,
}

const MAX_BLOCK_ATTEMPTS: usize = 100;

/// `D = (1 - gamma) C (x) J + gamma (-Z Z^T)`, `q0_i = base(block i) X_i`,
/// with `q0` rescaled to unit norm.
pub fn gen_block_example<R: Rng + ?Sized>(
    cfg: &BlockExampleConfig,
    rng: &mut R,
) -> Result<BlockExample> {
    cfg.validate()?;
    let n = cfg.n;
    let c = cfg.c_matrix();
    // With C negative semidefinite every draw is; otherwise validate each one.
    let c_nsd = c.clone().symmetric_eigenvalues().max() <= 1e-12;
    let z_cols = cfg.z_cols.unwrap_or(n);

    for attempt in 1..=MAX_BLOCK_ATTEMPTS {
        let z = unit_rows(n, z_cols, rng);
        let zz = gram_rows(&z);
        let d = DMatrix::from_fn(n, n, |i, j| {
            (1.0 - cfg.gamma) * c[(cfg.block_of(i), cfg.block_of(j))] - cfg.gamma * zz[(i, j)]
        });
        let mut raw_q = DVector::zeros(n);
        for i in 0..n {
            raw_q[i] = cfg.q_block_base[cfg.block_of(i)] * lognormal(cfg.log_mean, cfg.log_var, rng)?;
        }
        let q0_scale = 1.0 / raw_q.norm();
        let state = MarketState::new(d, raw_q * q0_scale)?;
        if c_nsd || validate_market_state(&state, 1e-9).is_valid() {
            return Ok(BlockExample { state, q0_scale, attempts: attempt });
        }
    }
    Err(Error::InvalidConfig(format!(
        "no negative semidefinite draw in {MAX_BLOCK_ATTEMPTS} attempts"
    )))
}

/// Sylvester-Hadamard matrix of order `2^m`, built by doubling from `[1]`.
pub fn sylvester_hadamard(m: u32) -> DMatrix<i32> {
    let mut h = DMatrix::from_element(1, 1, 1i32);
    for _ in 0..m {
        let s = h.nrows();
        h = DMatrix::from_fn(2 * s, 2 * s, |i, j| {
            let v = h[(i % s, j % s)];
            if i >= s && j >= s {
                -v
            } else {
                v
            }
        });
    }
    h
}

/// Columns are `r_l / sqrt(n)` where `r_l` is row `l` of the Hadamard matrix.
pub fn hadamard_basis(m: u32) -> DMatrix<f64> {
    let h = sylvester_hadamard(m);
    let n = h.nrows();
    let s = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |i, l| h[(l, i)] as f64 * s)
}

/// `D* = -(n/(n-1)) I + (1/(n-1)) 1 1^T`.
#[derive(Debug, Clone)]
pub struct Prop2Part1 {
    pub d_star: DMatrix<f64>,
}

impl Prop2Part1 {
    pub fn n(&self) -> usize {
        self.d_star.nrows()
    }

    /// `(1/n)(1 + r/2)` for a unit `r` orthogonal to the all-ones vector.
    pub fn make_q0(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        check_dim(n, r.len())?;
        if (r.norm() - 1.0).abs() > 1e-9 || r.sum().abs() > 1e-9 * (n as f64).sqrt() {
            return Err(Error::InvalidConfig("r must be a unit vector orthogonal to 1".into()));
        }
        Ok((DVector::from_element(n, 1.0) + r * 0.5) / n as f64)
    }

    pub fn state(&self, r: &DVector<f64>) -> Result<MarketState> {
        MarketState::new(self.d_star.clone(), self.make_q0(r)?)
    }
}

pub fn gen_prop2_part1(n: usize) -> Result<Prop2Part1> {
    if n < 2 {
        return Err(Error::InvalidConfig("n must be at least 2".into()));
    }
    let off = 1.0 / (n - 1) as f64;
    let d_star = DMatrix::from_fn(n, n, |i, j| if i == j { -1.0 } else { off });
    Ok(Prop2Part1 { d_star })
}

/// Status quo that makes `sigma` weakly lower total surplus under `D*`.
#[derive(Debug, Clone)]
pub struct AdversarialPairing {
    pub q0: DVector<f64>,
    /// Unit direction orthogonal to `1` carrying the quantity tilt.
    pub u2: DVector<f64>,
    /// `u2 . sigma`, always `<= 0`.
    pub a2: f64,
    /// `sigma` was parallel to `1`; `u2` was picked deterministically.
    pub sigma_parallel_to_ones: bool,
}

/// Splits `sigma` into its all-ones component and the orthogonal rest, points
/// `u2` against the rest, and returns `q0 = (1/n)(1 + u2/2)`.
pub fn adversarial_q0_for_sigma(
    d_star: &DMatrix<f64>,
    sigma: &Intervention,
) -> Result<AdversarialPairing> {
    let n = d_star.nrows();
    check_dim(n, sigma.len())?;
    if n < 2 {
        return Err(Error::InvalidConfig("n must be at least 2".into()));
    }
    let scale = sigma.sigma.amax();
    if scale == 0.0 {
        return Err(Error::DegenerateSigma);
    }
    let mean = sigma.sigma.mean();
    let perp = sigma.sigma.add_scalar(-mean);
    let perp_norm = perp.norm();
    let parallel = perp_norm <= 1e-12 * scale * (n as f64).sqrt();
    let u2 = if parallel {
        let mut r = DVector::zeros(n);
        r[0] = 1.0;
        r[1] = -1.0;
        r / 2f64.sqrt()
    } else {
        -perp / perp_norm
    };
    let a2 = if parallel { 0.0 } else { u2.dot(&sigma.sigma) };
    let q0 = (DVector::from_element(n, 1.0) + &u2 * 0.5) / n as f64;
    Ok(AdversarialPairing {
        q0,
        u2,
        a2,
        sigma_parallel_to_ones: parallel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop2P2Config {
    /// `n = 2^m`.
    pub m: u32,
    /// Magnitude of the perturbation along each non-leading basis vector.
    pub f: f64,
}

impl Prop2P2Config {
    pub fn n(&self) -> usize {
        1usize << self.m
    }

    /// `f = sqrt(1/n)`.
    pub fn with_default_f(m: u32) -> Self {
        Self { m, f: (1.0 / (1usize << m) as f64).sqrt() }
    }

    pub fn f_limit(&self) -> f64 {
        (3.0 / (self.n() - 1) as f64).sqrt()
    }
}

/// `D = -(n/2) u1 u1^T - I/2`, `q0 = (1/2)(u1 + f sum_{l>=2} s_l u_l)` with
/// fair random signs `s_l`.
pub fn gen_prop2_part2<R: Rng + ?Sized>(cfg: &Prop2P2Config, rng: &mut R) -> Result<MarketState> {
    if cfg.m == 0 || cfg.m > 16 {
        return Err(Error::InvalidConfig(format!("m = {} outside 1..=16", cfg.m)));
    }
    if !(cfg.f >= 0.0) {
        return Err(Error::InvalidConfig("f must be >= 0".into()));
    }
    let limit = cfg.f_limit();
    if cfg.f > limit {
        return Err(Error::FTooLarge { f: cfg.f, limit });
    }
    let n = cfg.n();
    let basis = hadamard_basis(cfg.m);
    let half_n = n as f64 / 2.0;
    let d = DMatrix::from_fn(n, n, |i, j| {
        let v = -half_n * basis[(i, 0)] * basis[(j, 0)];
        if i == j {
            v - 0.5
        } else {
            v
        }
    });
    let mut q0 = basis.column(0).into_owned();
    for l in 1..n {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        q0.axpy(cfg.f * s, &basis.column(l), 1.0);
    }
    MarketState::new(d, q0 * 0.5)
}

#[derive(Debug, Clone)]
pub struct HedonicExample {
    pub state: MarketState,
    /// Largest `|eigenvalue|` of the raw (un-normalized) Slutsky matrix.
    pub raw_spectral_radius: f64,
}

/// Characteristics-based demand: `V` is `k x n` with unit columns,
/// `B = I + alpha (V^T V - I)`, raw Slutsky `-B^{-1}`, then normalized.
pub fn gen_hedonic<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<HedonicExample> {
    if !(alpha > 0.0 && alpha < 1.0) || k == 0 || n == 0 {
        return Err(Error::InvalidConfig("need 0 < alpha < 1, k >= 1, n >= 1".into()));
    }
    // Columns of V are rows of this matrix.
    let vt = unit_rows(n, k, rng);
    let sigma = gram_rows(&vt);
    let b = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id + alpha * (sigma[(i, j)] - id)
    });
    let b_inv = Cholesky::new(b).ok_or(Error::SingularB)?.inverse();
    let raw = -(&b_inv + b_inv.transpose()) * 0.5;
    let raw_spectral_radius = raw.clone().symmetric_eigenvalues().amax();
    let (d, _) = normalize_slutsky(&raw)?;
    let q = DVector::<f64>::from_fn(n, |_, _| rng.random::<f64>());
    let q0 = &q / q.norm();
    Ok(HedonicExample {
        state: MarketState::new(d, q0)?,
        raw_spectral_radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub n: usize,
    /// Strong eigenvalues have magnitude about `strength * n`; at most 1/2.
    pub strength: f64,
    /// Base quantity of the first half of products relative to the second.
    pub high_base: f64,
    pub low_base: f64,
    pub log_var: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self::new(256)
    }
}

impl PlantedConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            strength: 0.25,
            high_base: 1.0,
            low_base: 0.2,
            log_var: 0.1,
        }
    }
}

/// `D = -(s n)(u1 u1^T + u2 u2^T) - (1 - 2s) Z Z^T` with `u1` the normalized
/// all-ones vector, `u2` the normalized half/half sign vector and `Z` square
/// with unit rows. The diagonal is exactly `-1` up to rounding.
pub fn gen_planted<R: Rng + ?Sized>(cfg: &PlantedConfig, rng: &mut R) -> Result<MarketState> {
    let n = cfg.n;
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidConfig("planted family needs even n >= 2".into()));
    }
    if !(cfg.strength > 0.0 && cfg.strength <= 0.5) {
        return Err(Error::InvalidConfig("strength must lie in (0, 1/2]".into()));
    }
    if !(cfg.high_base > 0.0 && cfg.low_base > 0.0 && cfg.log_var >= 0.0) {
        return Err(Error::InvalidConfig("quantity bases must be positive".into()));
    }
    let half = n / 2;
    let strong = cfg.strength * n as f64;
    let residual = 1.0 - 2.0 * cfg.strength;
    let zz = gram_rows(&unit_rows(n, n, rng));
    let inv_n = 1.0 / n as f64;
    let d = DMatrix::from_fn(n, n, |i, j| {
        let same_half = (i < half) == (j < half);
        let outer = inv_n + if same_half { inv_n } else { -inv_n };
        -strong * outer - residual * zz[(i, j)]
    });
    let mut q = DVector::zeros(n);
    for i in 0..n {
        let base = if i < half { cfg.high_base } else { cfg.low_base };
        q[i] = base * lognormal(0.0, cfg.log_var, rng)?;
    }
    let q0 = &q / q.norm();
    MarketState::new(d, q0)
}

/// `||P_{L(D, M)} q0||`, zero when no eigenvalue reaches `M`.
pub fn recoverable_structure_margin(state: &MarketState, threshold: f64) -> Result<f64> {
    let dec = decompose(&state.d)?;
    recoverable_structure_margin_with(state, &dec, threshold)
}

pub fn recoverable_structure_margin_with(
    state: &MarketState,
    dec: &SpectralDecomposition,
    threshold: f64,
) -> Result<f64> {
    let space = eigenspace_at(dec, threshold);
    Ok(project(&space, &state.q0)?.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::ViolationKind;
    use crate::rng::{stream, Stream};
    use crate::spectral::passthrough_spectral;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn hadamard_small_cases() {
        assert_eq!(sylvester_hadamard(1), dmatrix![1, 1; 1, -1]);
        let h = sylvester_hadamard(2);
        assert_eq!(&h * h.transpose(), DMatrix::identity(4, 4) * 4);
    }

    #[test]
    fn hadamard_orthogonal_exactly() {
        for m in 1..=8 {
            let h = sylvester_hadamard(m);
            let n = h.nrows() as i32;
            assert_eq!(&h * h.transpose(), DMatrix::identity(h.nrows(), h.nrows()) * n);
            assert!(h.row(0).iter().all(|&v| v == 1));
        }
    }

    #[test]
    fn hadamard_matches_bit_parity_formula_at_m12() {
        // Sylvester entries are (-1)^{popcount(i & j)}; rows of that matrix are
        // the characters of (Z/2)^m, hence exactly orthogonal.
        let h = sylvester_hadamard(12);
        for i in (0..4096usize).step_by(37) {
            for j in 0..4096 {
                let want = if (i & j).count_ones() % 2 == 0 { 1 } else { -1 };
                assert_eq!(h[(i, j)], want);
            }
        }
    }

    #[test]
    fn prop2_part1_three() {
        let p = gen_prop2_part1(3).unwrap();
        assert_eq!(p.d_star, dmatrix![-1.0, 0.5, 0.5; 0.5, -1.0, 0.5; 0.5, 0.5, -1.0]);
        for n in [2, 5, 16] {
            let p = gen_prop2_part1(n).unwrap();
            let row_sums = &p.d_star * DVector::from_element(n, 1.0);
            assert!(row_sums.amax() < 1e-15);
        }
    }

    #[test]
    fn prop2_part1_q0_norm() {
        let n = 6;
        let p = gen_prop2_part1(n).unwrap();
        let r = dvector![1.0, -1.0, 0.0, 0.0, 0.0, 0.0] / 2f64.sqrt();
        let q0 = p.make_q0(&r).unwrap();
        let want = (n as f64 + 0.25) / (n * n) as f64;
        assert!((q0.norm_squared() - want).abs() < 1e-15);
        assert!(p.make_q0(&DVector::from_element(n, 1.0 / (n as f64).sqrt())).is_err());
    }

    #[test]
    fn adversarial_ones_is_neutral() {
        let p = gen_prop2_part1(4).unwrap();
        let sigma = Intervention::new(DVector::from_element(4, 1.0)).unwrap();
        let pair = adversarial_q0_for_sigma(&p.d_star, &sigma).unwrap();
        assert!(pair.sigma_parallel_to_ones);
        let st = MarketState::new(p.d_star.clone(), pair.q0).unwrap();
        let w = passthrough_spectral(&st, &decompose(&st.d).unwrap(), &sigma).unwrap().w_dot;
        assert!(w.abs() < 1e-14);
        assert!(matches!(
            adversarial_q0_for_sigma(&p.d_star, &Intervention::zeros(4)),
            Err(Error::DegenerateSigma)
        ));
    }

    #[test]
    fn adversarial_two_coordinate_closed_form() {
        let n = 4;
        let p = gen_prop2_part1(n).unwrap();
        let sigma = Intervention::new(dvector![1.0, -1.0, 0.0, 0.0]).unwrap();
        let pair = adversarial_q0_for_sigma(&p.d_star, &sigma).unwrap();
        let st = MarketState::new(p.d_star.clone(), pair.q0).unwrap();
        let resp = crate::market::equilibrium_response(&st, &sigma).unwrap();
        let w = crate::market::surplus_from_response(&st, &sigma, &resp).w_dot;
        let lam = n as f64 / (n - 1) as f64;
        let want = -(lam / (1.0 + lam)) / (2.0 * n as f64) * 2f64.sqrt();
        assert!((w - want).abs() < 1e-14, "{w} vs {want}");
        assert!(w < 0.0);
    }

    #[test]
    fn prop2_part2_small() {
        let cfg = Prop2P2Config { m: 2, f: 0.0 };
        let st = gen_prop2_part2(&cfg, &mut stream(1, Stream::Signs)).unwrap();
        let u1 = DVector::from_element(4, 0.5);
        assert_eq!(st.q0, &u1 * 0.5);
        let dec = decompose(&st.d).unwrap();
        let want = [-2.5, -0.5, -0.5, -0.5];
        for (got, w) in dec.eigenvalues.iter().zip(want) {
            assert!((got - w).abs() < 1e-12);
        }
        let du = &st.d * &u1;
        assert!((du + &u1 * 2.5).amax() < 1e-15);
        assert!(validate_market_state(&st, 1e-12).is_valid());
    }

    #[test]
    fn prop2_part2_margin_and_limits() {
        let cfg = Prop2P2Config::with_default_f(5);
        let n = cfg.n();
        let st = gen_prop2_part2(&cfg, &mut stream(2, Stream::Signs)).unwrap();
        assert!(validate_market_state(&st, 1e-9).is_valid());
        let margin = recoverable_structure_margin(&st, n as f64 / 4.0).unwrap();
        assert!((margin - 0.5).abs() < 1e-12);
        assert!(margin >= 0.49);
        let too_big = Prop2P2Config { m: 5, f: 1.0 };
        assert!(matches!(
            gen_prop2_part2(&too_big, &mut stream(2, Stream::Signs)),
            Err(Error::FTooLarge { .. })
        ));
    }

    #[test]
    fn block_example_defaults() {
        let ex = gen_block_example(&BlockExampleConfig::default(), &mut stream(3, Stream::Generator))
            .unwrap();
        let st = &ex.state;
        for i in 0..st.n() {
            assert!((st.d[(i, i)] + 1.0).abs() < 1e-14);
        }
        let rep = validate_market_state(st, 1e-9);
        assert!(rep.is_valid(), "{rep:?}");
        assert!((st.q0.norm() - 1.0).abs() < 1e-12);
        assert_eq!(ex.attempts, 1);
    }

    #[test]
    fn block_example_rejects_bad_config() {
        let cfg = BlockExampleConfig { n: 301, ..Default::default() };
        assert!(gen_block_example(&cfg, &mut stream(3, Stream::Generator)).is_err());
        let cfg = BlockExampleConfig { gamma: 1.5, ..Default::default() };
        assert!(gen_block_example(&cfg, &mut stream(3, Stream::Generator)).is_err());
    }

    #[test]
    fn block_example_resamples_when_c_indefinite() {
        // C with a positive eigenvalue: only draws where the Z term dominates
        // can pass, and the generator must never return an invalid state.
        let cfg = BlockExampleConfig {
            n: 6,
            c: vec![vec![-1.0, 0.9, 0.9], vec![0.9, -1.0, 0.9], vec![0.9, 0.9, -1.0]],
            gamma: 0.99,
            z_cols: Some(6),
            ..Default::default()
        };
        match gen_block_example(&cfg, &mut stream(5, Stream::Generator)) {
            Ok(ex) => assert!(validate_market_state(&ex.state, 1e-9).is_valid()),
            Err(e) => assert!(matches!(e, Error::InvalidConfig(_))),
        }
    }

    #[test]
    fn hedonic_bounds() {
        let ex = gen_hedonic(60, 5, 0.12, &mut stream(4, Stream::Generator)).unwrap();
        assert!(ex.raw_spectral_radius <= 1.0 / 0.88 + 1e-9);
        let rep = validate_market_state(&ex.state, 1e-9);
        assert!(rep.is_valid(), "{rep:?}");
        assert_eq!(recoverable_structure_margin(&ex.state, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn hedonic_small_alpha_is_near_independent() {
        let ex = gen_hedonic(20, 3, 1e-9, &mut stream(4, Stream::Generator)).unwrap();
        assert!((ex.state.d.clone() + DMatrix::<f64>::identity(20, 20)).amax() < 1e-8);
    }

    #[test]
    fn planted_is_valid() {
        let st = gen_planted(&PlantedConfig::new(64), &mut stream(6, Stream::Generator)).unwrap();
        let rep = validate_market_state(&st, 1e-9);
        assert!(rep.is_valid(), "{rep:?}");
        let dec = decompose(&st.d).unwrap();
        assert!(dec.eigenvalues[1].abs() >= 16.0);
        assert!(dec.eigenvalues[2].abs() < 5.0);
        assert!(rep.find(ViolationKind::DiagonalNotMinusOne).is_none());
    }
}
