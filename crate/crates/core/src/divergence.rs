//! Quantum relative entropy, Petz and sandwiched Renyi divergences,
//! max-relative entropy and its classical smooth variant.
//!
//! All logarithms are binary. `f64::INFINITY` is the support-violation
//! sentinel and flows through downstream arithmetic (`2^{-a*inf} = 0`).

use crate::error::{QbcError, Result};
use crate::hermitian::{DensityMatrix, HermitianOperator};

/// A Renyi order in (0,1) or (1,inf). `additivity_regime` marks orders in
/// (1/2,1) or (1,inf) where the sandwiched mutual informations are additive
/// on tensor products.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenyiOrder {
    pub alpha: f64,
    pub additivity_regime: bool,
}

impl RenyiOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha != 1.0 && alpha.is_finite()) {
            return Err(QbcError::BadOrder(alpha));
        }
        Ok(Self {
            alpha,
            additivity_regime: alpha > 0.5,
        })
    }
}

/// Threshold below which the Renyi formulas switch to the relative-entropy
/// limit plus a first-order correction (the defining formulas lose precision
/// directly at alpha ~ 1).
const ALPHA_SWITCH: f64 = 1e-4;
/// Offset used for the central-difference slope estimate near alpha = 1.
const ALPHA_STEP: f64 = 1e-3;

fn support_violation(rho: &DensityMatrix, sigma: &DensityMatrix, tol: f64) -> bool {
    let p_sigma = sigma.op.support_projector(tol);
    let leak = rho.op.trace() - p_sigma.trace_product(&rho.op);
    leak > tol.max(1e-12) * 10.0
}

/// `tr[rho^a sigma^{1-a}]`, powers on the support (0^t := 0). This quantity
/// is `2^{-(1-a) D_a}` up to sign bookkeeping and is exactly what the
/// hypothesis-testing bounds consume.
///
/// Evaluated as `sum_ij r_i^a s_j^{1-a} |<u_i|v_j>|^2`; every term is
/// nonnegative, so no cancellation occurs even across widely spread spectra.
pub fn q_petz(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64, tol: f64) -> f64 {
    let _ = tol;
    let (r_vals, r_vecs) = rho.op.eigen_pairs();
    let (s_vals, s_vecs) = sigma.op.eigen_pairs();
    let overlap = r_vecs.adjoint() * s_vecs;
    let dim = rho.dim();
    let mut q = 0.0;
    for i in 0..dim {
        if r_vals[i] <= 0.0 {
            continue;
        }
        for j in 0..dim {
            if s_vals[j] <= 0.0 {
                continue;
            }
            q += r_vals[i].powf(alpha)
                * s_vals[j].powf(1.0 - alpha)
                * overlap[(i, j)].norm_sqr();
        }
    }
    q
}

/// `tr[(sigma^e rho sigma^e)^a]` with `e = (1-a)/(2a)`, powers on support.
///
/// The eigenvalues of `sigma^e rho sigma^e` are the squared singular values
/// of `rho^{1/2} U_sigma diag(s^e)`, a column-scaled matrix whose singular
/// values one-sided Jacobi computes to high relative accuracy; a dense
/// eigensolver on the assembled product would lose the tiny ones entirely
/// once `e` is large.
pub fn q_sandwiched(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64, tol: f64) -> f64 {
    let e = (1.0 - alpha) / (2.0 * alpha);
    let (s_vals, s_vecs) = sigma.op.eigen_pairs();
    let sqrt_rho = rho.op.matrix_power(0.5, tol).op;
    let mut a = sqrt_rho.matrix() * s_vecs;
    for j in 0..a.ncols() {
        // powers act on the support; only exactly nonpositive eigenvalues are
        // treated as kernel, so the map stays continuous in sigma
        let scale = if s_vals[j] <= 0.0 { 0.0 } else { s_vals[j].powf(e) };
        for i in 0..a.nrows() {
            a[(i, j)] *= scale;
        }
    }
    let sv2 = jacobi_singular_values_sq(&mut a).unwrap_or_else(|| {
        // fallback: assembled Gram eigenvalues (loses graded accuracy but is
        // unconditionally convergent)
        HermitianOperator::new_unchecked(a.adjoint() * a.clone()).eigenvalues_raw()
    });
    sv2.into_iter()
        .map(|x| if x > 0.0 { x.powf(alpha) } else { 0.0 })
        .sum()
}

/// Squared singular values by one-sided Jacobi: rotate column pairs until
/// mutually orthogonal; the squared column norms are then the eigenvalues of
/// `A^dag A`. Each rotation picks the diagonalizing basis closest to the
/// identity (never swapping dominant columns), which is what makes the cyclic
/// sweep converge.
fn jacobi_singular_values_sq(a: &mut crate::hermitian::CMat) -> Option<Vec<f64>> {
    let n = a.ncols();
    let mut converged = false;
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut aii = 0.0;
                let mut ajj = 0.0;
                let mut aij = num_complex::Complex64::new(0.0, 0.0);
                for k in 0..a.nrows() {
                    aii += a[(k, i)].norm_sqr();
                    ajj += a[(k, j)].norm_sqr();
                    aij += a[(k, i)].conj() * a[(k, j)];
                }
                if aij.norm() <= 1e-15 * (aii * ajj).sqrt() + f64::MIN_POSITIVE {
                    continue;
                }
                rotated = true;
                // eigenvectors of the 2x2 Gram [[aii, aij], [conj aij, ajj]]
                let half = (aii - ajj) / 2.0;
                let disc = (half * half + aij.norm_sqr()).sqrt();
                let lam = (aii + ajj) / 2.0 + disc;
                let x = aij;
                let y = num_complex::Complex64::new(lam - aii, 0.0);
                let nrm = (x.norm_sqr() + y.norm_sqr()).sqrt();
                let (mut c1, mut s1) = (x / nrm, y / nrm);
                if s1.norm() > c1.norm() {
                    // use the companion eigenvector for column i instead
                    let (c2, s2) = (-s1.conj(), c1.conj());
                    c1 = c2;
                    s1 = s2;
                }
                for k in 0..a.nrows() {
                    let vi = a[(k, i)];
                    let vj = a[(k, j)];
                    a[(k, i)] = vi * c1 + vj * s1;
                    a[(k, j)] = vi * (-s1.conj()) + vj * c1.conj();
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    Some(
        (0..n)
            .map(|j| (0..a.nrows()).map(|k| a[(k, j)].norm_sqr()).sum())
            .collect(),
    )
}

/// Quantum relative entropy `D(rho||sigma) = tr rho (log rho - log sigma)`,
/// `+inf` when the support of rho is not contained in that of sigma.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix, tol: f64) -> f64 {
    if support_violation(rho, sigma, tol) {
        return f64::INFINITY;
    }
    let log_rho = rho.op.log2_on_support(tol);
    let log_sigma = sigma.op.log2_on_support(tol);
    rho.op.trace_product(&log_rho) - rho.op.trace_product(&log_sigma)
}

fn petz_raw(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64, tol: f64) -> f64 {
    let q = q_petz(rho, sigma, alpha, tol);
    if q <= 0.0 {
        return f64::INFINITY;
    }
    q.log2() / (alpha - 1.0)
}

fn sandwiched_raw(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64, tol: f64) -> f64 {
    let q = q_sandwiched(rho, sigma, alpha, tol);
    if q <= 0.0 {
        return f64::INFINITY;
    }
    q.log2() / (alpha - 1.0)
}

fn near_one(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    alpha: f64,
    tol: f64,
    raw: impl Fn(&DensityMatrix, &DensityMatrix, f64, f64) -> f64,
) -> f64 {
    let d = relative_entropy(rho, sigma, tol);
    if !d.is_finite() {
        return f64::INFINITY;
    }
    let hi = raw(rho, sigma, 1.0 + ALPHA_STEP, tol);
    let lo = raw(rho, sigma, 1.0 - ALPHA_STEP, tol);
    if !hi.is_finite() || !lo.is_finite() {
        return d;
    }
    let slope = (hi - lo) / (2.0 * ALPHA_STEP);
    d + slope * (alpha - 1.0)
}

/// Petz Renyi relative entropy `D_a(rho||sigma)`.
pub fn petz_renyi(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64, tol: f64) -> f64 {
    if support_violation(rho, sigma, tol) {
        return f64::INFINITY;
    }
    if (alpha - 1.0).abs() < ALPHA_SWITCH {
        return near_one(rho, sigma, alpha, tol, petz_raw);
    }
    petz_raw(rho, sigma, alpha, tol)
}

/// Sandwiched Renyi relative entropy `D~_a(rho||sigma)`.
pub fn sandwiched_renyi(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64, tol: f64) -> f64 {
    if support_violation(rho, sigma, tol) {
        return f64::INFINITY;
    }
    if (alpha - 1.0).abs() < ALPHA_SWITCH {
        return near_one(rho, sigma, alpha, tol, sandwiched_raw);
    }
    sandwiched_raw(rho, sigma, alpha, tol)
}

/// Max-relative entropy: `log` of the least `lambda` with `rho <= lambda sigma`.
pub fn dmax(rho: &DensityMatrix, sigma: &DensityMatrix, tol: f64) -> f64 {
    if support_violation(rho, sigma, tol) {
        return f64::INFINITY;
    }
    let s_inv_half = sigma.op.matrix_power(-0.5, tol).op;
    let inner = HermitianOperator::new_unchecked(
        s_inv_half.matrix() * rho.op.matrix() * s_inv_half.matrix(),
    );
    let lmax = inner
        .eigenvalues_raw()
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0);
    if lmax <= 0.0 {
        f64::NEG_INFINITY
    } else {
        lmax.log2()
    }
}

/// Upper bound on the classical smooth max-relative entropy
/// `D_max^eps(p||q)` by greedy clipping of the largest likelihood ratios.
///
/// The purified-distance ball of radius `eps` contains every distribution
/// within total-variation distance `eps^2 / 2` (since `P <= sqrt(2 TV)`), so
/// clipping mass `eps^2 / 2` from the top ratios and redistributing it below
/// the resulting level stays inside the ball. The result is the exact optimum
/// over that total-variation ball, hence an upper bound on the smooth
/// quantity; it equals `dmax` at `eps = 0` and never goes below zero (the
/// level is clamped at 1, where redistribution capacity is exhausted).
pub fn smooth_dmax_classical(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(QbcError::DimMismatch(p.len(), q.len()));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(QbcError::BadRequest(format!(
            "smoothing parameter {eps} outside [0, 1)"
        )));
    }
    let mut budget = eps * eps / 2.0;

    // mass on symbols outside supp(q) must be removed entirely
    let mut off_support = 0.0;
    for (&pi, &qi) in p.iter().zip(q.iter()) {
        if qi <= 0.0 {
            off_support += pi;
        }
    }
    if off_support > budget + 1e-15 {
        return Ok(f64::INFINITY);
    }
    budget -= off_support;

    // waterfill the level lambda downward over ratio breakpoints
    let mut pairs: Vec<(f64, f64, f64)> = p
        .iter()
        .zip(q.iter())
        .filter(|(_, &qi)| qi > 0.0)
        .map(|(&pi, &qi)| (pi / qi, pi, qi))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut lambda = pairs.first().map(|x| x.0).unwrap_or(0.0);
    let mut p_above = 0.0;
    let mut q_above = 0.0;
    for k in 0..pairs.len() {
        let (r_k, pi, qi) = pairs[k];
        // removed mass at level r_k using symbols strictly above it
        let removed_here = p_above - r_k * q_above;
        if removed_here > budget {
            // solve p_above - lambda q_above = budget within this segment
            lambda = (p_above - budget) / q_above;
            break;
        }
        p_above += pi;
        q_above += qi;
        lambda = r_k;
        if k + 1 == pairs.len() || {
            let next = pairs[k + 1].0;
            p_above - next * q_above > budget
        } {
            let candidate = (p_above - budget) / q_above;
            let floor = if k + 1 == pairs.len() { 0.0 } else { pairs[k + 1].0 };
            if candidate >= floor {
                lambda = candidate;
                break;
            }
        }
    }
    Ok(lambda.max(1.0).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinching::PinchingMap;
    use crate::sampling::Sampler;

    const TOL: f64 = 1e-9;

    fn diag(d: &[f64]) -> DensityMatrix {
        DensityMatrix::new(HermitianOperator::from_real_diag(d)).unwrap()
    }

    #[test]
    fn order_validation() {
        assert!(RenyiOrder::new(1.0).is_err());
        assert!(RenyiOrder::new(0.0).is_err());
        assert!(RenyiOrder::new(-0.3).is_err());
        assert!(!RenyiOrder::new(0.4).unwrap().additivity_regime);
        assert!(RenyiOrder::new(0.7).unwrap().additivity_regime);
        assert!(RenyiOrder::new(1.5).unwrap().additivity_regime);
    }

    #[test]
    fn relative_entropy_basics() {
        let mut s = Sampler::new(1);
        let rho = s.random_density(3);
        assert!(relative_entropy(&rho, &rho, TOL).abs() < 1e-9);

        let p = diag(&[0.5, 0.5]);
        let q = diag(&[0.9, 0.1]);
        let kl = 0.5 * (0.5f64 / 0.9).log2() + 0.5 * (0.5f64 / 0.1).log2();
        assert!((relative_entropy(&p, &q, TOL) - kl).abs() < 1e-10);

        let pure = diag(&[1.0, 0.0]);
        let orth = diag(&[0.0, 1.0]);
        assert!(relative_entropy(&pure, &orth, TOL).is_infinite());
    }

    #[test]
    fn petz_matches_classical_on_commuting_pairs() {
        let p = diag(&[0.3, 0.7]);
        let q = diag(&[0.6, 0.4]);
        for &alpha in &[0.3, 0.7, 1.5, 2.5] {
            let classical = (0.3f64.powf(alpha) * 0.6f64.powf(1.0 - alpha)
                + 0.7f64.powf(alpha) * 0.4f64.powf(1.0 - alpha))
            .log2()
                / (alpha - 1.0);
            assert!((petz_renyi(&p, &q, alpha, TOL) - classical).abs() < 1e-10);
            // sandwiched collapses to Petz on commuting pairs
            assert!(
                (sandwiched_renyi(&p, &q, alpha, TOL) - classical).abs() < 1e-10,
                "alpha {alpha}"
            );
        }
    }

    #[test]
    fn renyi_zero_on_equal_states() {
        let mut s = Sampler::new(2);
        let rho = s.random_density(3);
        for &alpha in &[0.2, 0.8, 1.7] {
            assert!(petz_renyi(&rho, &rho, alpha, TOL).abs() < 1e-9);
            assert!(sandwiched_renyi(&rho, &rho, alpha, TOL).abs() < 1e-9);
        }
    }

    #[test]
    fn alpha_to_one_limits() {
        let mut s = Sampler::new(3);
        for _ in 0..100 {
            let rho = s.random_density_floored(3, 0.1);
            let sigma = s.random_density_floored(3, 0.1);
            let d = relative_entropy(&rho, &sigma, TOL);
            for &alpha in &[1.0 - 1e-4, 1.0 + 1e-4] {
                assert!((petz_renyi(&rho, &sigma, alpha, TOL) - d).abs() <= 1e-3);
                assert!((sandwiched_renyi(&rho, &sigma, alpha, TOL) - d).abs() <= 1e-3);
            }
        }
    }

    // Numeric sweep fixes the ordering between the two families at
    // alpha in (0,1): the sandwiched value never exceeds the Petz value.
    #[test]
    fn sandwiched_below_petz_for_alpha_below_one() {
        let mut s = Sampler::new(4);
        for _ in 0..300 {
            let rho = s.random_density(2);
            let sigma = s.random_density(2);
            let alpha = s.uniform(0.05, 0.95);
            let dp = petz_renyi(&rho, &sigma, alpha, TOL);
            let ds = sandwiched_renyi(&rho, &sigma, alpha, TOL);
            assert!(ds <= dp + 1e-9, "alpha {alpha}: {ds} > {dp}");
        }
    }

    #[test]
    fn monotone_in_alpha() {
        let mut s = Sampler::new(5);
        let grid = [0.2, 0.4, 0.6, 0.8, 1.2, 1.5, 2.0, 3.0];
        for _ in 0..20 {
            let rho = s.random_density(3);
            let sigma = s.random_density(3);
            let petz: Vec<f64> = grid.iter().map(|&a| petz_renyi(&rho, &sigma, a, TOL)).collect();
            let sand: Vec<f64> = grid
                .iter()
                .map(|&a| sandwiched_renyi(&rho, &sigma, a, TOL))
                .collect();
            for w in petz.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
            for w in sand.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
        }
    }

    #[test]
    fn data_processing_under_pinching() {
        let mut s = Sampler::new(6);
        for _ in 0..50 {
            let rho = s.random_density(3);
            let sigma = s.random_density(3);
            let pin_src = s.random_density(3);
            let map = PinchingMap::from_operator(&pin_src.op, TOL, "random");
            let erho = DensityMatrix::new_unchecked(map.pinch(&rho.op).unwrap());
            let esig = DensityMatrix::new_unchecked(map.pinch(&sigma.op).unwrap());
            for &alpha in &[0.3, 0.7, 1.5, 2.0] {
                let before = petz_renyi(&rho, &sigma, alpha, TOL);
                let after = petz_renyi(&erho, &esig, alpha, TOL);
                assert!(after <= before + 1e-9, "petz alpha {alpha}");
            }
            for &alpha in &[0.6, 0.8, 1.5, 3.0] {
                let before = sandwiched_renyi(&rho, &sigma, alpha, TOL);
                let after = sandwiched_renyi(&erho, &esig, alpha, TOL);
                assert!(after <= before + 1e-9, "sandwiched alpha {alpha}");
            }
        }
    }

    #[test]
    fn nonnegative_and_faithful() {
        let mut s = Sampler::new(7);
        for _ in 0..30 {
            let rho = s.random_density(2);
            let sigma = s.random_density(2);
            let d = petz_renyi(&rho, &sigma, 0.5, TOL);
            assert!(d >= -1e-10);
            if d < 1e-10 {
                assert!(rho.op.sub(&sigma.op).operator_norm() < 1e-4);
            }
        }
    }

    #[test]
    fn dmax_examples() {
        let mut s = Sampler::new(8);
        let rho = s.random_density(3);
        assert!(dmax(&rho, &rho, TOL).abs() < 1e-9);

        let p = diag(&[1.0, 0.0]);
        let q = diag(&[0.5, 0.5]);
        assert!((dmax(&p, &q, TOL) - 1.0).abs() < 1e-10);

        // defining property: rho <= 2^dmax sigma
        for _ in 0..20 {
            let rho = s.random_density(3);
            let sigma = s.random_density(3);
            let d = dmax(&rho, &sigma, TOL);
            if d.is_finite() {
                let gap = sigma.op.scale(2f64.powf(d)).sub(&rho.op);
                assert!(gap.min_eigenvalue() >= -1e-9);
            }
        }
    }

    #[test]
    fn smooth_dmax_trivial_cases() {
        let p = [0.5, 0.3, 0.2];
        let q = [0.25, 0.5, 0.25];
        let exact = smooth_dmax_classical(&p, &q, 0.0).unwrap();
        let want = p
            .iter()
            .zip(q.iter())
            .map(|(&a, &b)| a / b)
            .fold(0.0_f64, f64::max)
            .log2();
        assert!((exact - want).abs() < 1e-12);

        // p = q gives 0 for any eps
        for &e in &[0.0, 0.1, 0.5, 0.9] {
            assert!(smooth_dmax_classical(&q, &q, e).unwrap().abs() < 1e-12);
        }

        // non-increasing in eps
        let mut last = f64::INFINITY;
        for &e in &[0.0, 0.05, 0.1, 0.2, 0.4, 0.8] {
            let v = smooth_dmax_classical(&p, &q, e).unwrap();
            assert!(v <= last + 1e-12);
            last = v;
        }
        assert!(smooth_dmax_classical(&p, &q, 1.0).is_err());
    }

    #[test]
    fn smooth_dmax_against_grid_oracle() {
        // 3-symbol hand instance; oracle greedily searches the 0.001-step
        // simplex grid for normalized states inside the purified-distance ball
        let p = [0.6, 0.3, 0.1];
        let q = [0.2, 0.5, 0.3];
        let eps = 0.1;
        let ours = smooth_dmax_classical(&p, &q, eps).unwrap();
        let d = dmax(&diag(&p.to_vec()), &diag(&q.to_vec()), TOL);
        assert!(ours <= d + 1e-12);

        let step = 0.001;
        let n = (1.0 / step) as usize;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let a = i as f64 * step;
                let b = j as f64 * step;
                let c = 1.0 - a - b;
                if c < -1e-12 {
                    continue;
                }
                let c = c.max(0.0);
                let f = (a * p[0]).sqrt() + (b * p[1]).sqrt() + (c * p[2]).sqrt();
                let pd = (1.0 - (f * f).min(1.0)).max(0.0).sqrt();
                if pd <= eps {
                    let m = (a / q[0]).max(b / q[1]).max(c / q[2]);
                    best = best.min(m.log2());
                }
            }
        }
        assert!(
            ours >= best - 1e-6,
            "greedy {ours} fell below grid optimum {best}"
        );
    }

    #[test]
    fn smooth_dmax_repairs_small_support_violations() {
        let p = [0.98, 0.02];
        let q = [1.0, 0.0];
        assert!(smooth_dmax_classical(&p, &q, 0.0).unwrap().is_infinite());
        // eps^2/2 = 0.045 > 0.02: the offending mass can be clipped
        let v = smooth_dmax_classical(&p, &q, 0.3).unwrap();
        assert!(v.is_finite());
        assert!(v >= 0.0);
    }
}
