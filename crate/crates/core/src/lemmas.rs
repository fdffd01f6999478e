//! Numerical certification of the operator inequalities and bound lemmas the
//! coding theorems rest on: the Hayashi-Nagaoka inequality, the traced
//! operator union bound, the pinched hypothesis-testing bound, the
//! Petz-to-sandwiched conversion, and its nested-pinching extension.

use serde::Serialize;

use crate::cqstate::CqState;
use crate::divergence::{q_petz, q_sandwiched};
use crate::error::{QbcError, Result};
use crate::hermitian::{positive_part_projector, DensityMatrix, HermitianOperator};
use crate::pinching::{NestedPinchingFamily, PinchScenario, PinchingMap};

/// Outcome of one certified inequality: `passed` iff `margin >= -tolerance`.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub lemma_id: String,
    pub instance_digest: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub passed: bool,
    pub tolerance: f64,
}

impl Certificate {
    fn new(lemma_id: &str, digest: String, lhs: f64, rhs: f64, margin: f64, tol: f64) -> Self {
        Self {
            lemma_id: lemma_id.to_string(),
            instance_digest: digest,
            lhs,
            rhs,
            margin,
            passed: margin >= -tol,
            tolerance: tol,
        }
    }
}

/// Certify `I - (S+T)^{-1/2} S (S+T)^{-1/2} <= 2(I-S) + 4T` for
/// `0 <= S <= I`, `T >= 0`.
///
/// The inverse square root is taken on the support of `S + T`. On its kernel
/// `S` vanishes, so the left side contributes the identity and the right side
/// twice the identity there; certifying on the full space with pseudo-inverse
/// semantics therefore remains valid.
pub fn certify_hayashi_nagaoka(
    s: &HermitianOperator,
    t: &HermitianOperator,
    tol: f64,
    digest: &str,
) -> Result<Certificate> {
    if s.dim() != t.dim() {
        return Err(QbcError::DimMismatch(s.dim(), t.dim()));
    }
    let smin = s.min_eigenvalue();
    let smax = s.eigenvalues_raw().last().copied().unwrap_or(0.0);
    if smin < -1e-10 || smax > 1.0 + 1e-10 {
        return Err(QbcError::BadRequest(format!(
            "S must satisfy 0 <= S <= I (spectrum [{smin}, {smax}])"
        )));
    }
    if t.min_eigenvalue() < -1e-10 {
        return Err(QbcError::NotPsd(t.min_eigenvalue()));
    }
    let dim = s.dim();
    let id = HermitianOperator::identity(dim);
    let inv_sqrt = s.add(t).matrix_power(-0.5, 1e-12).op;
    let lhs = id.sub(&HermitianOperator::new_unchecked(
        inv_sqrt.matrix() * s.matrix() * inv_sqrt.matrix(),
    ));
    let rhs = id.sub(s).scale(2.0).add(&t.scale(4.0));
    let margin = rhs.sub(&lhs).min_eigenvalue();
    Ok(Certificate::new(
        "hayashi-nagaoka",
        digest.to_string(),
        lhs.operator_norm(),
        rhs.operator_norm(),
        margin,
        tol,
    ))
}

/// Certify the pinched hypothesis-testing bound: with
/// `Pi = {E_sigma(rho) >= M sigma}`,
/// `tr(I-Pi) rho + M tr Pi sigma <= M^alpha 2^{-alpha D_{1-alpha}(E_sigma(rho)||sigma)}`.
pub fn certify_hypothesis_testing(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    m: f64,
    alpha: f64,
    tol: f64,
    digest: &str,
) -> Result<Certificate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(QbcError::BadOrder(alpha));
    }
    if m <= 0.0 {
        return Err(QbcError::BadRequest(format!("threshold M = {m} must be positive")));
    }
    let map = PinchingMap::from_operator(&sigma.op, tol, "sigma");
    let pinched = map.pinch(&rho.op)?;
    let pi = positive_part_projector(&pinched, &sigma.op.scale(m), tol)?;
    let id = HermitianOperator::identity(rho.dim());
    let lhs = id.sub(&pi).trace_product(&rho.op) + m * pi.trace_product(&sigma.op);
    // 2^{-alpha D_{1-alpha}(E(rho)||sigma)} = tr[E(rho)^{1-alpha} sigma^alpha]
    let q = q_petz(&DensityMatrix::new_unchecked(pinched), sigma, 1.0 - alpha, tol);
    let rhs = m.powf(alpha) * q;
    Ok(Certificate::new(
        "hypothesis-testing",
        digest.to_string(),
        lhs,
        rhs,
        rhs - lhs,
        tol,
    ))
}

/// Certify the Petz-to-sandwiched conversion:
/// `2^{-alpha D_{1-alpha}(E_sigma(rho)||sigma)} <= nu^alpha 2^{-alpha D~_{1-alpha}(rho||sigma)}`
/// with `nu` the number of distinct eigenvalues of `sigma`.
pub fn certify_petz_to_sandwich(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    alpha: f64,
    tol: f64,
    digest: &str,
) -> Result<Certificate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(QbcError::BadOrder(alpha));
    }
    let map = PinchingMap::from_operator(&sigma.op, tol, "sigma");
    let nu = map.count() as f64;
    let pinched = DensityMatrix::new_unchecked(map.pinch(&rho.op)?);
    let lhs = q_petz(&pinched, sigma, 1.0 - alpha, tol);
    let rhs = nu.powf(alpha) * q_sandwiched(rho, sigma, 1.0 - alpha, tol);
    Ok(Certificate::new(
        "petz-sandwich",
        digest.to_string(),
        lhs,
        rhs,
        rhs - lhs,
        tol,
    ))
}

/// Certify the union bound in the traced, state-averaged form the error
/// chains use: `tr[(I - T_0 T_1 ... T_k) rho] <= sum_i tr[(I - T_i) rho]`.
///
/// The ordered product is not Hermitian for non-commuting operators; the
/// certificate records the real part of the left side together with the
/// magnitude of its imaginary part.
pub fn certify_union_bound(
    ops: &[HermitianOperator],
    rho: &DensityMatrix,
    tol: f64,
    digest: &str,
) -> Result<Certificate> {
    if ops.is_empty() {
        return Err(QbcError::BadRequest("need at least one operator".into()));
    }
    for (i, t) in ops.iter().enumerate() {
        let lo = t.min_eigenvalue();
        let hi = t.eigenvalues_raw().last().copied().unwrap_or(0.0);
        if lo < -1e-10 || hi > 1.0 + 1e-10 {
            return Err(QbcError::BadRequest(format!(
                "operator {i} violates 0 <= T <= I (spectrum [{lo}, {hi}])"
            )));
        }
    }
    let dim = rho.dim();
    let mut prod = HermitianOperator::identity(dim).matrix().clone();
    for t in ops {
        prod = prod * t.matrix();
    }
    let traced = (rho.op.matrix() * &prod).trace();
    let lhs = 1.0 - traced.re;
    let id = HermitianOperator::identity(dim);
    let rhs: f64 = ops
        .iter()
        .map(|t| id.sub(t).trace_product(&rho.op))
        .sum();
    Ok(Certificate::new(
        "union-bound-traced",
        format!("{digest} im={:.3e}", traced.im.abs()),
        lhs,
        rhs,
        rhs - lhs,
        tol,
    ))
}

/// Certify both displayed inequalities of the nested-pinching proposition on
/// a cq-state with registers `u`, `v`, `x` and quantum side `B`.
///
/// With the chain of pinchings E0 (from rho^B), E1|u (from E0(rho_u)),
/// E2|u,v (from E1|u(rho_v)), E3|u,v,x (from E2|u,v(rho_x)):
///   q_petz(E2(rho) || E1(rho^{UX-V-B}))  <= nu2^a q_sand(rho || E1(rho^{UX-V-B}))
///   q_petz(E3(rho) || E2(rho^{UV-X-B}))  <= nu3^a q_sand(rho || E2(rho^{UV-X-B}))
/// where nu2, nu3 are the largest per-block distinct-eigenvalue counts of the
/// defining operators E1|u(rho_v) and E2|u,v(rho_x).
pub fn certify_nested_pinching_proposition(
    state: &CqState,
    alpha: f64,
    tol: f64,
    digest: &str,
) -> Result<Vec<Certificate>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(QbcError::BadOrder(alpha));
    }
    let fam = NestedPinchingFamily::build(state, PinchScenario::Multilevel, tol)?;
    let joint = &state.joint;
    let broken_v = state.markov_break(&["v"])?; // rho^{UX - V - B}
    let broken_x = state.markov_break(&["x"])?; // rho^{UV - X - B}

    let d_u = state.registers()[0].alphabet_size;
    let d_v = state.registers()[1].alphabet_size;
    let d_x = state.registers()[2].alphabet_size;

    let mut nu2 = 1usize;
    let mut nu3 = 1usize;
    for u in 0..d_u {
        for v in 0..d_v {
            nu2 = nu2.max(fam.level2(u, v).count());
            for x in 0..d_x {
                nu3 = nu3.max(fam.level3(u, v, x).count());
            }
        }
    }

    // Blockwise evaluation: all operators are block diagonal over (u,v,x)
    // with a shared pmf, so the trace quantities decompose per block.
    let mut lhs2 = 0.0;
    let mut rhs2 = 0.0;
    let mut lhs3 = 0.0;
    let mut rhs3 = 0.0;
    for idx in 0..joint.total() {
        let p = joint.pmf[idx];
        if p <= 0.0 {
            continue;
        }
        let t = joint.tuple_of(idx);
        let (u, v, x) = (t[0], t[1], t[2]);
        let rho_block = state.conditional_by_index(idx);
        let sig2_block = DensityMatrix::new_unchecked(
            fam.level1(u).pinch(&broken_v.conditional_by_index(idx).op)?,
        );
        let sig3_block = DensityMatrix::new_unchecked(
            fam.level2(u, v).pinch(&broken_x.conditional_by_index(idx).op)?,
        );
        let e2_rho = DensityMatrix::new_unchecked(fam.level2(u, v).pinch(&rho_block.op)?);
        let e3_rho = DensityMatrix::new_unchecked(fam.level3(u, v, x).pinch(&rho_block.op)?);

        lhs2 += p * q_petz(&e2_rho, &sig2_block, 1.0 - alpha, tol);
        rhs2 += p * q_sandwiched(rho_block, &sig2_block, 1.0 - alpha, tol);
        lhs3 += p * q_petz(&e3_rho, &sig3_block, 1.0 - alpha, tol);
        rhs3 += p * q_sandwiched(rho_block, &sig3_block, 1.0 - alpha, tol);
    }
    rhs2 *= (nu2 as f64).powf(alpha);
    rhs3 *= (nu3 as f64).powf(alpha);

    Ok(vec![
        Certificate::new(
            "nested-pinching-level2",
            format!("{digest} nu2={nu2}"),
            lhs2,
            rhs2,
            rhs2 - lhs2,
            tol,
        ),
        Certificate::new(
            "nested-pinching-level3",
            format!("{digest} nu3={nu3}"),
            lhs3,
            rhs3,
            rhs3 - lhs3,
            tol,
        ),
    ])
}
