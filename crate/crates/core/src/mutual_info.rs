//! Mutual-information functionals consumed by the coding theorems:
//! Shannon/von Neumann quantities, the Renyi mutual informations against the
//! product of marginals (up-arrow), the minimized variants (down-arrow,
//! unconditional and conditional), and the classical smooth conditional
//! max-mutual-information.

use crate::cqstate::{ClassicalJoint, CqState};
use crate::divergence::{q_petz, q_sandwiched, relative_entropy, smooth_dmax_classical};
use crate::error::{QbcError, Result};
use crate::hermitian::{C64, CMat, DensityMatrix, HermitianOperator};
use crate::sampling::Sampler;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RightSide {
    /// The quantum system of the cq-state.
    Quantum,
    /// A set of classical registers.
    Registers(Vec<String>),
}

/// A mutual-information query `I(left ; right | conditioning)` on a cq-state.
#[derive(Clone, Debug)]
pub struct MutualInfoRequest<'a> {
    pub state: &'a CqState,
    pub left: Vec<String>,
    pub right: RightSide,
    pub conditioning: Vec<String>,
}

impl<'a> MutualInfoRequest<'a> {
    pub fn new(state: &'a CqState, left: &[&str], right: RightSide, cond: &[&str]) -> Self {
        Self {
            state,
            left: left.iter().map(|s| s.to_string()).collect(),
            right,
            conditioning: cond.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let mut seen: Vec<String> = Vec::new();
        let mut groups: Vec<&[String]> = vec![&self.left];
        if let RightSide::Registers(rs) = &self.right {
            groups.push(rs);
        }
        groups.push(&self.conditioning);
        for names in groups {
            for n in names {
                self.state.joint.register_pos(n)?;
                if seen.iter().any(|s| s == n) {
                    return Err(QbcError::BadRequest(format!(
                        "register `{n}` appears on both sides"
                    )));
                }
                seen.push(n.clone());
            }
        }
        Ok(())
    }
}

/// Von Neumann entropy of a cq marginal: `H(pmf) + sum_t p_t S(rho_t)`.
fn cq_entropy(state: &CqState, registers: &[&str], with_quantum: bool) -> Result<f64> {
    let m = state.marginal(registers, with_quantum)?;
    let mut h = 0.0;
    for idx in 0..m.joint.total() {
        let p = m.joint.pmf[idx];
        if p <= 0.0 {
            continue;
        }
        h -= p * p.log2();
        if with_quantum {
            for ev in m.conditional_by_index(idx).op.eigenvalues_raw() {
                if ev > 0.0 {
                    h -= p * ev * ev.log2();
                }
            }
        }
    }
    Ok(h)
}

/// Shannon / von Neumann mutual information `I(L ; R | C)`.
pub fn shannon_mi(req: &MutualInfoRequest) -> Result<f64> {
    req.validate()?;
    let cond: Vec<&str> = req.conditioning.iter().map(|s| s.as_str()).collect();
    let left: Vec<&str> = req.left.iter().map(|s| s.as_str()).collect();
    let mut lc: Vec<&str> = left.clone();
    lc.extend_from_slice(&cond);
    match &req.right {
        RightSide::Quantum => {
            // I(L;B|C) = S(LC) + S(BC) - S(LBC) - S(C)
            let s_lc = cq_entropy(req.state, &lc, false)?;
            let s_bc = cq_entropy(req.state, &cond, true)?;
            let s_lbc = cq_entropy(req.state, &lc, true)?;
            let s_c = cq_entropy(req.state, &cond, false)?;
            Ok(s_lc + s_bc - s_lbc - s_c)
        }
        RightSide::Registers(rs) => {
            let right: Vec<&str> = rs.iter().map(|s| s.as_str()).collect();
            let mut rc: Vec<&str> = right.clone();
            rc.extend_from_slice(&cond);
            let mut lrc: Vec<&str> = lc.clone();
            lrc.extend_from_slice(&right);
            let s_lc = cq_entropy(req.state, &lc, false)?;
            let s_rc = cq_entropy(req.state, &rc, false)?;
            let s_lrc = cq_entropy(req.state, &lrc, false)?;
            let s_c = cq_entropy(req.state, &cond, false)?;
            Ok(s_lc + s_rc - s_lrc - s_c)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenyiKind {
    Petz,
    Sandwiched,
}

/// Blockwise `2^{(alpha-1) D_alpha}` between two cq-states with identical
/// classical structure:
/// `q = sum_t p_t^alpha q_t^{1-alpha} q_block(rho_t, sigma_t)`.
/// Returns `(q, leak)` where `leak` is the weight of joint mass escaping the
/// second state's support. Working per block keeps full relative accuracy;
/// an eigensolve of the whole embedding would blur small blocks together.
fn cq_q(joint: &CqState, sigma: &CqState, alpha: f64, kind: RenyiKind, tol: f64) -> (f64, f64) {
    let mut q = 0.0;
    let mut leak = 0.0;
    for idx in 0..joint.joint.total() {
        let p_t = joint.joint.pmf[idx];
        if p_t <= 0.0 {
            continue;
        }
        let q_t = sigma.joint.pmf[idx];
        let rho_t = joint.conditional_by_index(idx);
        let sigma_t = sigma.conditional_by_index(idx);
        if q_t <= 0.0 {
            leak += p_t;
            continue;
        }
        let supp = sigma_t.op.support_projector(tol);
        leak += p_t * (1.0 - supp.trace_product(&rho_t.op)).max(0.0);
        let block = match kind {
            RenyiKind::Petz => q_petz(rho_t, sigma_t, alpha, tol),
            RenyiKind::Sandwiched => q_sandwiched(rho_t, sigma_t, alpha, tol),
        };
        q += p_t.powf(alpha) * q_t.powf(1.0 - alpha) * block;
    }
    (q, leak)
}

fn cq_relative_entropy(joint: &CqState, sigma: &CqState, tol: f64) -> f64 {
    let mut d = 0.0;
    for idx in 0..joint.joint.total() {
        let p_t = joint.joint.pmf[idx];
        if p_t <= 0.0 {
            continue;
        }
        let q_t = sigma.joint.pmf[idx];
        if q_t <= 0.0 {
            return f64::INFINITY;
        }
        let block = relative_entropy(
            joint.conditional_by_index(idx),
            sigma.conditional_by_index(idx),
            tol,
        );
        if !block.is_finite() {
            return f64::INFINITY;
        }
        d += p_t * ((p_t / q_t).log2() + block);
    }
    d
}

/// Blockwise Renyi divergence between cq-states sharing classical structure,
/// with the support sentinel and the near-one linearization.
fn cq_renyi_divergence(
    joint: &CqState,
    sigma: &CqState,
    alpha: f64,
    kind: RenyiKind,
    tol: f64,
) -> f64 {
    let raw = |a: f64| -> f64 {
        let (q, _) = cq_q(joint, sigma, a, kind, tol);
        if q <= 0.0 {
            f64::INFINITY
        } else {
            q.log2() / (a - 1.0)
        }
    };
    let (_, leak) = cq_q(joint, sigma, alpha, kind, tol);
    if leak > tol.max(1e-12) * 10.0 {
        return f64::INFINITY;
    }
    if (alpha - 1.0).abs() < 1e-4 {
        let d = cq_relative_entropy(joint, sigma, tol);
        if !d.is_finite() {
            return f64::INFINITY;
        }
        let hi = raw(1.0 + 1e-3);
        let lo = raw(1.0 - 1e-3);
        if !hi.is_finite() || !lo.is_finite() {
            return d;
        }
        return d + (hi - lo) / 2e-3 * (alpha - 1.0);
    }
    raw(alpha)
}

/// Up-arrow Renyi mutual information: divergence of the joint against the
/// product of its marginals. Conditioning is not part of this quantity.
pub fn renyi_mi_up(req: &MutualInfoRequest, alpha: f64, kind: RenyiKind, tol: f64) -> Result<f64> {
    req.validate()?;
    if !req.conditioning.is_empty() {
        return Err(QbcError::BadRequest(
            "up-arrow Renyi mutual information takes no conditioning".into(),
        ));
    }
    let left: Vec<&str> = req.left.iter().map(|s| s.as_str()).collect();
    let (joint_state, product_state) = match &req.right {
        RightSide::Quantum => {
            let joint = req.state.marginal(&left, true)?;
            let product = joint.markov_break(&[])?;
            (joint, product)
        }
        RightSide::Registers(rs) => {
            let mut all: Vec<&str> = left.clone();
            let right: Vec<&str> = rs.iter().map(|s| s.as_str()).collect();
            all.extend_from_slice(&right);
            let joint = req.state.marginal(&all, false)?;
            let p_l = req.state.joint.marginal(&left)?;
            let p_r = req.state.joint.marginal(&right)?;
            let mut pmf = Vec::with_capacity(joint.joint.total());
            for il in 0..p_l.total() {
                for ir in 0..p_r.total() {
                    pmf.push(p_l.pmf[il] * p_r.pmf[ir]);
                }
            }
            let product = CqState::classical(ClassicalJoint::new(
                joint.registers().to_vec(),
                pmf,
            )?);
            (joint, product)
        }
    };
    Ok(cq_renyi_divergence(
        &joint_state,
        &product_state,
        alpha,
        kind,
        tol,
    ))
}

/// Options for the down-arrow minimization.
#[derive(Clone, Debug)]
pub struct MiDownOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub objective_tol: f64,
    pub seed: u64,
    /// Extra starting points per conditioning class (e.g. product warm
    /// starts when minimizing on a tensor power).
    pub warm_starts: Vec<DensityMatrix>,
}

impl Default for MiDownOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 2000,
            objective_tol: 1e-9,
            seed: 0,
            warm_starts: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MiDownResult {
    pub value: f64,
    /// Optimizing state per conditioning tuple (single entry when
    /// unconditional), with the conditioning tuple as key.
    pub optimizers: Vec<(Vec<usize>, DensityMatrix)>,
    pub converged: bool,
    pub max_grad_norm: f64,
    pub max_objective_delta: f64,
}

/// Down-arrow sandwiched Renyi mutual information
/// `min_sigma D~_a(rho^{LB} || rho^L (x) sigma^B)`; the conditional version
/// constrains the minimizer to depend only on the conditioning registers and
/// decomposes into independent per-class minimizations.
pub fn renyi_mi_down(
    req: &MutualInfoRequest,
    alpha: f64,
    tol: f64,
    opts: &MiDownOptions,
) -> Result<MiDownResult> {
    req.validate()?;
    if req.right != RightSide::Quantum {
        return Err(QbcError::BadRequest(
            "down-arrow mutual information needs the quantum system on the right".into(),
        ));
    }
    if !(alpha > 0.0 && alpha != 1.0) {
        return Err(QbcError::BadOrder(alpha));
    }
    let cond: Vec<&str> = req.conditioning.iter().map(|s| s.as_str()).collect();
    let mut regs: Vec<&str> = cond.clone();
    let left: Vec<&str> = req.left.iter().map(|s| s.as_str()).collect();
    regs.extend_from_slice(&left);
    let work = req.state.marginal(&regs, true)?;

    // classes keyed by the conditioning tuple (one class when unconditional)
    let class_sizes: Vec<usize> = cond
        .iter()
        .map(|n| {
            let p = work.joint.register_pos(n).expect("validated");
            work.registers()[p].alphabet_size
        })
        .collect();
    let nclasses: usize = class_sizes.iter().product::<usize>().max(1);
    let cond_pos: Vec<usize> = cond
        .iter()
        .map(|n| work.joint.register_pos(n).expect("validated"))
        .collect();

    let mut class_members: Vec<Vec<(f64, usize)>> = vec![Vec::new(); nclasses];
    let mut class_weight = vec![0.0; nclasses];
    for idx in 0..work.joint.total() {
        let t = work.joint.tuple_of(idx);
        let mut k = 0;
        for (&p, &s) in cond_pos.iter().zip(class_sizes.iter()) {
            k = k * s + t[p];
        }
        class_members[k].push((work.joint.pmf[idx], idx));
        class_weight[k] += work.joint.pmf[idx];
    }

    let mut total_q = 0.0;
    let mut optimizers = Vec::new();
    let mut converged = true;
    let mut max_grad = 0.0_f64;
    let mut max_delta = 0.0_f64;
    for k in 0..nclasses {
        if class_weight[k] <= 0.0 {
            continue;
        }
        let members: Vec<(f64, DensityMatrix)> = class_members[k]
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|&(w, idx)| {
                (
                    w / class_weight[k],
                    work.conditional_by_index(idx).clone(),
                )
            })
            .collect();
        let mut avg = HermitianOperator::zeros(work.d_b);
        for (w, rho) in &members {
            avg = avg.add(&rho.op.scale(*w));
        }
        let mut starts: Vec<DensityMatrix> =
            vec![DensityMatrix::new_unchecked(avg)];
        starts.extend(opts.warm_starts.iter().cloned());
        let mut s = Sampler::child(opts.seed, k as u64);
        while starts.len() < opts.restarts.max(1) + opts.warm_starts.len() {
            starts.push(s.random_density(work.d_b));
        }
        let block = optimize_block(&members, alpha, tol, opts, &starts);
        total_q += class_weight[k] * block.q;
        converged &= block.converged;
        max_grad = max_grad.max(block.grad_norm);
        max_delta = max_delta.max(block.objective_delta);
        let class_tuple: Vec<usize> = {
            let mut t = vec![0; class_sizes.len()];
            let mut rem = k;
            for i in (0..class_sizes.len()).rev() {
                t[i] = rem % class_sizes[i];
                rem /= class_sizes[i];
            }
            t
        };
        optimizers.push((class_tuple, block.sigma));
    }
    let value = if total_q > 0.0 {
        total_q.log2() / (alpha - 1.0)
    } else {
        f64::INFINITY
    };
    Ok(MiDownResult {
        value,
        optimizers,
        converged,
        max_grad_norm: max_grad,
        max_objective_delta: max_delta,
    })
}

struct BlockResult {
    sigma: DensityMatrix,
    q: f64,
    converged: bool,
    grad_norm: f64,
    objective_delta: f64,
}

/// Optimize `Q(sigma) = sum w_i q_sandwiched(rho_i, sigma)` over density
/// matrices: minimize for alpha > 1, maximize for alpha < 1 (both minimize
/// the divergence). Parameterization is `sigma = L L^dag / tr`, with L lower
/// triangular (real diagonal); the solver is gradient descent with
/// Barzilai-Borwein steps, backtracking, and multiple restarts.
fn optimize_block(
    members: &[(f64, DensityMatrix)],
    alpha: f64,
    tol: f64,
    opts: &MiDownOptions,
    starts: &[DensityMatrix],
) -> BlockResult {
    let d = members[0].1.dim();
    let sign = if alpha > 1.0 { 1.0 } else { -1.0 };
    let objective = |params: &[f64]| -> f64 {
        let sigma = sigma_from_params(params, d);
        let q: f64 = members
            .iter()
            .map(|(w, rho)| w * q_sandwiched(rho, &sigma, alpha, tol))
            .sum();
        sign * q
    };

    let nparams = d * d;
    let mut best: Option<(Vec<f64>, f64, bool, f64, f64)> = None;
    for start in starts {
        let mut x = params_from_sigma(&start.op, d);
        let mut f = objective(&x);
        let mut g = fd_gradient(&objective, &x, f);
        let mut step = 1e-2 / (1.0 + norm(&g));
        let mut prev_x: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut stall = 0usize;
        let mut last_delta = f64::INFINITY;
        let mut iters = 0usize;
        let mut ok = false;
        while iters < opts.max_iters {
            iters += 1;
            // Barzilai-Borwein step from the previous iterate when available
            if let Some((px, pg)) = &prev_x {
                let mut sy = 0.0;
                let mut ss = 0.0;
                for i in 0..nparams {
                    let si = x[i] - px[i];
                    let yi = g[i] - pg[i];
                    sy += si * yi;
                    ss += si * si;
                }
                if sy.abs() > 1e-18 {
                    step = (ss / sy).abs().clamp(1e-9, 1e3);
                }
            }
            // backtracking line search
            let gn2: f64 = g.iter().map(|v| v * v).sum();
            let mut t = step;
            let mut accepted = false;
            for _ in 0..40 {
                let cand: Vec<f64> = x.iter().zip(g.iter()).map(|(xi, gi)| xi - t * gi).collect();
                let fc = objective(&cand);
                if fc <= f - 1e-4 * t * gn2 {
                    prev_x = Some((x.clone(), g.clone()));
                    last_delta = (f - fc).abs();
                    x = cand;
                    f = fc;
                    g = fd_gradient(&objective, &x, f);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // flat to line-search resolution
                ok = true;
                break;
            }
            if last_delta <= opts.objective_tol * f.abs().max(1.0) {
                stall += 1;
                if stall >= 3 {
                    ok = true;
                    break;
                }
            } else {
                stall = 0;
            }
        }
        let gn = norm(&g);
        let better = match &best {
            None => true,
            Some((_, bf, _, _, _)) => f < *bf,
        };
        if better {
            best = Some((x, f, ok, gn, last_delta));
        }
    }
    let (x, f, ok, gn, delta) = best.expect("at least one start");
    BlockResult {
        sigma: sigma_from_params(&x, d),
        q: sign * f,
        converged: ok,
        grad_norm: gn,
        objective_delta: if delta.is_finite() { delta } else { 0.0 },
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn fd_gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], _fx: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Pack a PSD matrix into lower-triangular parameters via Cholesky (with a
/// small diagonal shift for rank-deficient inputs).
fn params_from_sigma(sigma: &HermitianOperator, d: usize) -> Vec<f64> {
    let shifted = sigma.add(&HermitianOperator::identity(d).scale(1e-8));
    let mut params = match shifted.matrix().clone().cholesky() {
        Some(chol) => {
            let l = chol.l();
            let mut params = Vec::with_capacity(d * d);
            for i in 0..d {
                params.push(l[(i, i)].re.max(1e-8));
                for j in 0..i {
                    params.push(l[(i, j)].re);
                    params.push(l[(i, j)].im);
                }
            }
            params
        }
        None => Vec::new(),
    };
    if params.is_empty() {
        // fallback: start from the maximally mixed state
        params = vec![0.0; d * d];
        for i in 0..d {
            params[param_diag_index(i)] = (1.0 / d as f64).sqrt();
        }
    }
    params
}

fn param_diag_index(i: usize) -> usize {
    // diagonal entry i sits after i full rows of (1 + 2j) parameters
    let mut k = 0;
    for row in 0..i {
        k += 1 + 2 * row;
    }
    k
}

fn sigma_from_params(params: &[f64], d: usize) -> DensityMatrix {
    let mut l = CMat::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        l[(i, i)] = C64::new(params[k], 0.0);
        k += 1;
        for j in 0..i {
            l[(i, j)] = C64::new(params[k], params[k + 1]);
            k += 2;
        }
    }
    let m = &l * l.adjoint();
    let tr = m.trace().re.max(1e-300);
    DensityMatrix::new_unchecked(HermitianOperator::new_unchecked(
        m.unscale(tr),
    ))
}

/// Classical conditional smooth max-mutual-information
/// `I_max^eps(L ; R | C)`: the smooth max-relative entropy between the joint
/// pmf and its Markov-broken version `p(l, c) p(r | c)`.
pub fn imax_conditional_classical(
    state: &CqState,
    left: &[&str],
    right: &[&str],
    cond: &[&str],
    eps: f64,
) -> Result<f64> {
    if state.d_b != 1 {
        return Err(QbcError::BadRequest(
            "smooth max-mutual-information is classical; quantum side must be trivial".into(),
        ));
    }
    let mut order: Vec<&str> = Vec::new();
    order.extend_from_slice(left);
    order.extend_from_slice(cond);
    order.extend_from_slice(right);
    let joint = state.joint.marginal(&order)?;
    let lc = joint.marginal(
        &left
            .iter()
            .chain(cond.iter())
            .copied()
            .collect::<Vec<_>>(),
    )?;
    let rc = joint.marginal(
        &right
            .iter()
            .chain(cond.iter())
            .copied()
            .collect::<Vec<_>>(),
    )?;
    let c_only = joint.marginal(cond)?;

    let nl: usize = left.len();
    let nc: usize = cond.len();
    let total = joint.total();
    let mut q = vec![0.0; total];
    for idx in 0..total {
        let t = joint.tuple_of(idx);
        let lc_tuple: Vec<usize> = t[..nl + nc].to_vec();
        let c_tuple: Vec<usize> = t[nl..nl + nc].to_vec();
        let rc_tuple: Vec<usize> = t[nl + nc..]
            .iter()
            .chain(t[nl..nl + nc].iter())
            .copied()
            .collect();
        let p_lc = lc.pmf[lc.index_of(&lc_tuple)];
        let p_rc = rc.pmf[rc.index_of(&rc_tuple)];
        let p_c = if nc == 0 { 1.0 } else { c_only.pmf[c_only.index_of(&c_tuple)] };
        q[idx] = if p_c > 0.0 { p_lc * p_rc / p_c } else { 0.0 };
    }
    smooth_dmax_classical(&joint.pmf, &q, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqstate::ClassicalRegister;
    use crate::divergence::relative_entropy;

    const TOL: f64 = 1e-9;

    fn cq(seed: u64, sizes: &[(&str, usize)], d_b: usize) -> CqState {
        let mut s = Sampler::new(seed);
        let joint = s.random_joint(sizes);
        let n = joint.total();
        let conds = (0..n).map(|_| s.random_density(d_b)).collect();
        CqState::new(joint, d_b, conds).unwrap()
    }

    #[test]
    fn shannon_product_state_is_zero() {
        let mut s = Sampler::new(1);
        let joint = s.random_joint(&[("x", 3)]);
        let rho = s.random_density(2);
        let conds = vec![rho; 3];
        let st = CqState::new(joint, 2, conds).unwrap();
        let req = MutualInfoRequest::new(&st, &["x"], RightSide::Quantum, &[]);
        assert!(shannon_mi(&req).unwrap().abs() < 1e-10);
    }

    #[test]
    fn shannon_correlated_bits() {
        let joint = ClassicalJoint::new(
            vec![
                ClassicalRegister::new("a", 2),
                ClassicalRegister::new("b", 2),
            ],
            vec![0.5, 0.0, 0.0, 0.5],
        )
        .unwrap();
        let st = CqState::classical(joint);
        let req = MutualInfoRequest::new(
            &st,
            &["a"],
            RightSide::Registers(vec!["b".into()]),
            &[],
        );
        assert!((shannon_mi(&req).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shannon_matches_holevo_form() {
        let st = cq(2, &[("x", 3)], 2);
        let req = MutualInfoRequest::new(&st, &["x"], RightSide::Quantum, &[]);
        let mi = shannon_mi(&req).unwrap();
        let avg = st.quantum_marginal();
        let mut holevo = 0.0;
        for x in 0..3 {
            holevo += st.prob(&[x]) * relative_entropy(st.conditional(&[x]), &avg, TOL);
        }
        assert!((mi - holevo).abs() < 1e-10, "{mi} vs {holevo}");
    }

    #[test]
    fn shannon_monotone_under_discarding_left_register() {
        let st = cq(3, &[("u", 2), ("v", 2)], 2);
        let uv = MutualInfoRequest::new(&st, &["u", "v"], RightSide::Quantum, &[]);
        let u = MutualInfoRequest::new(&st, &["u"], RightSide::Quantum, &[]);
        assert!(shannon_mi(&uv).unwrap() >= shannon_mi(&u).unwrap() - 1e-10);
    }

    #[test]
    fn renyi_up_product_state_zero() {
        let mut s = Sampler::new(4);
        let joint = s.random_joint(&[("x", 2)]);
        let rho = s.random_density(2);
        let st = CqState::new(joint, 2, vec![rho.clone(), rho]).unwrap();
        let req = MutualInfoRequest::new(&st, &["x"], RightSide::Quantum, &[]);
        for &a in &[0.6, 1.5] {
            assert!(renyi_mi_up(&req, a, RenyiKind::Sandwiched, TOL).unwrap().abs() < 1e-9);
            assert!(renyi_mi_up(&req, a, RenyiKind::Petz, TOL).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn renyi_up_additive_on_tensor_square() {
        let st = cq(5, &[("x", 2)], 2);
        let sq = st.tensor_power(2).unwrap();
        for &a in &[0.6, 0.8, 1.5] {
            let one = renyi_mi_up(
                &MutualInfoRequest::new(&st, &["x"], RightSide::Quantum, &[]),
                a,
                RenyiKind::Sandwiched,
                TOL,
            )
            .unwrap();
            let two = renyi_mi_up(
                &MutualInfoRequest::new(&sq, &["x", "x#1"], RightSide::Quantum, &[]),
                a,
                RenyiKind::Sandwiched,
                TOL,
            )
            .unwrap();
            assert!((two - 2.0 * one).abs() <= 1e-7, "alpha {a}: {two} vs 2*{one}");
        }
    }

    #[test]
    fn renyi_up_classical_matches_formula() {
        let mut s = Sampler::new(6);
        let joint = s.random_joint(&[("a", 2), ("b", 3)]);
        let st = CqState::classical(joint.clone());
        let alpha = 0.7;
        let req = MutualInfoRequest::new(
            &st,
            &["a"],
            RightSide::Registers(vec!["b".into()]),
            &[],
        );
        let got = renyi_mi_up(&req, alpha, RenyiKind::Petz, TOL).unwrap();
        // classical Renyi divergence of the joint against the product
        let pa = joint.marginal(&["a"]).unwrap();
        let pb = joint.marginal(&["b"]).unwrap();
        let mut q = 0.0;
        for a in 0..2 {
            for b in 0..3 {
                let pj = joint.pmf[a * 3 + b];
                let pp = pa.pmf[a] * pb.pmf[b];
                if pj > 0.0 && pp > 0.0 {
                    q += pj.powf(alpha) * pp.powf(1.0 - alpha);
                }
            }
        }
        let expect = q.log2() / (alpha - 1.0);
        assert!((got - expect).abs() < 1e-10);
    }

    #[test]
    fn renyi_mi_tends_to_shannon_at_order_one() {
        for seed in 0..10u64 {
            let st = cq(60 + seed, &[("x", 2)], 2);
            let req = MutualInfoRequest::new(&st, &["x"], RightSide::Quantum, &[]);
            let shannon = shannon_mi(&req).unwrap();
            for &alpha in &[1.0 - 1e-4, 1.0 + 1e-4] {
                let petz = renyi_mi_up(&req, alpha, RenyiKind::Petz, TOL).unwrap();
                let sand = renyi_mi_up(&req, alpha, RenyiKind::Sandwiched, TOL).unwrap();
                assert!((petz - shannon).abs() <= 1e-3, "petz {petz} vs {shannon}");
                assert!((sand - shannon).abs() <= 1e-3, "sandwiched {sand} vs {shannon}");
            }
        }
    }

    #[test]
    fn down_product_state_zero_with_marginal_optimizer() {
        let mut s = Sampler::new(7);
        let joint = s.random_joint(&[("x", 2)]);
        let rho = s.random_density(2);
        let st = CqState::new(joint, 2, vec![rho.clone(), rho.clone()]).unwrap();
        let req = MutualInfoRequest::new(&st, &["x"], RightSide::Quantum, &[]);
        let r = renyi_mi_down(&req, 1.5, TOL, &MiDownOptions::default()).unwrap();
        assert!(r.value.abs() < 1e-7, "{}", r.value);
        assert!(r.optimizers[0].1.op.sub(&rho.op).operator_norm() < 1e-3);
    }

    #[test]
    fn down_below_up() {
        for seed in 0..5 {
            let st = cq(8 + seed, &[("x", 2)], 2);
            let req = MutualInfoRequest::new(&st, &["x"], RightSide::Quantum, &[]);
            for &a in &[0.7, 1.5] {
                let up = renyi_mi_up(&req, a, RenyiKind::Sandwiched, TOL).unwrap();
                let down = renyi_mi_down(&req, a, TOL, &MiDownOptions::default()).unwrap();
                assert!(down.value <= up + 1e-9, "alpha {a}: {} vs {up}", down.value);
            }
        }
    }

    #[test]
    fn down_conditional_single_class_equals_unconditional() {
        let mut s = Sampler::new(20);
        let joint = s.random_joint(&[("u", 1), ("x", 2)]);
        let conds = (0..2).map(|_| s.random_density(2)).collect();
        let st = CqState::new(joint, 2, conds).unwrap();
        let uncond = renyi_mi_down(
            &MutualInfoRequest::new(&st, &["x"], RightSide::Quantum, &[]),
            0.8,
            TOL,
            &MiDownOptions::default(),
        )
        .unwrap();
        let cond = renyi_mi_down(
            &MutualInfoRequest::new(&st, &["x"], RightSide::Quantum, &["u"]),
            0.8,
            TOL,
            &MiDownOptions::default(),
        )
        .unwrap();
        assert!((uncond.value - cond.value).abs() <= 1e-8);
    }

    #[test]
    fn down_matches_bloch_grid_oracle() {
        // oracle: brute-force sigma over the Bloch ball at step 0.02, using an
        // independent closed-form 2x2 evaluation of the objective
        let alpha = 0.7;
        for seed in 0..3 {
            let st = cq(30 + seed, &[("x", 2)], 2);
            let req = MutualInfoRequest::new(&st, &["x"], RightSide::Quantum, &[]);
            let ours = renyi_mi_down(&req, alpha, TOL, &MiDownOptions::default()).unwrap();
            let members: Vec<(f64, DensityMatrix)> = (0..2)
                .map(|x| (st.prob(&[x]), st.conditional(&[x]).clone()))
                .collect();
            let oracle = bloch_grid_min(&members, alpha, 0.02);
            assert!(
                (ours.value - oracle).abs() < 1e-3,
                "seed {seed}: {} vs oracle {oracle}",
                ours.value
            );
        }
    }

    // independent 2x2 closed-form objective used by the oracle
    fn bloch_grid_min(members: &[(f64, DensityMatrix)], alpha: f64, step: f64) -> f64 {
        let e = (1.0 - alpha) / (2.0 * alpha);
        let mut best_q = if alpha > 1.0 { f64::INFINITY } else { 0.0 };
        let n = (2.0 / step) as i32 / 2;
        for ix in -n..=n {
            for iy in -n..=n {
                for iz in -n..=n {
                    let (rx, ry, rz) = (
                        ix as f64 * step,
                        iy as f64 * step,
                        iz as f64 * step,
                    );
                    let r2 = rx * rx + ry * ry + rz * rz;
                    if r2 > 1.0 {
                        continue;
                    }
                    // sigma eigenvalues (1 +- r)/2 with eigenvectors along n
                    let r = r2.sqrt();
                    let (s0, s1) = ((1.0 + r) / 2.0, (1.0 - r) / 2.0);
                    if s0 <= 0.0 {
                        continue;
                    }
                    // build sigma^e
                    let (p0, p1) = (s0.powf(e), if s1 > 0.0 { s1.powf(e) } else { 0.0 });
                    // eigenvector for s0 along (rx,ry,rz); handle r ~ 0
                    let se = if r < 1e-14 {
                        [[C64::new(p0, 0.0), C64::new(0.0, 0.0)],
                         [C64::new(0.0, 0.0), C64::new(p0, 0.0)]]
                    } else {
                        let (nx, ny, nz) = (rx / r, ry / r, rz / r);
                        // sigma^e = a I + b n.vec(sigma), a=(p0+p1)/2, b=(p0-p1)/2
                        let a = (p0 + p1) / 2.0;
                        let b = (p0 - p1) / 2.0;
                        [
                            [C64::new(a + b * nz, 0.0), C64::new(b * nx, -b * ny)],
                            [C64::new(b * nx, b * ny), C64::new(a - b * nz, 0.0)],
                        ]
                    };
                    let mut q = 0.0;
                    for (w, rho) in members {
                        // m = sigma^e rho sigma^e, eigenvalues by trace/det
                        let r00 = rho.op.entry(0, 0);
                        let r01 = rho.op.entry(0, 1);
                        let r10 = rho.op.entry(1, 0);
                        let r11 = rho.op.entry(1, 1);
                        let a00 = se[0][0] * r00 + se[0][1] * r10;
                        let a01 = se[0][0] * r01 + se[0][1] * r11;
                        let a10 = se[1][0] * r00 + se[1][1] * r10;
                        let a11 = se[1][0] * r01 + se[1][1] * r11;
                        let m00 = a00 * se[0][0] + a01 * se[1][0];
                        let m01 = a00 * se[0][1] + a01 * se[1][1];
                        let m10 = a10 * se[0][0] + a11 * se[1][0];
                        let m11 = a10 * se[0][1] + a11 * se[1][1];
                        let tr = (m00 + m11).re;
                        let det = (m00 * m11 - m01 * m10).re;
                        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
                        let (l0, l1) = (tr / 2.0 + disc, tr / 2.0 - disc);
                        let mut qq = 0.0;
                        if l0 > 0.0 {
                            qq += l0.powf(alpha);
                        }
                        if l1 > 0.0 {
                            qq += l1.powf(alpha);
                        }
                        q += w * qq;
                    }
                    if (alpha > 1.0 && q < best_q) || (alpha < 1.0 && q > best_q) {
                        best_q = q;
                    }
                }
            }
        }
        best_q.log2() / (alpha - 1.0)
    }

    #[test]
    fn imax_markov_input_is_zero() {
        let mut s = Sampler::new(40);
        let m = s.random_markov_uvx(2, 2, 2);
        let st = CqState::classical(m);
        for &e in &[0.0, 0.1] {
            let v = imax_conditional_classical(&st, &["u"], &["x"], &["v"], e).unwrap();
            assert!(v.abs() < 1e-9, "eps {e}: {v}");
        }
    }

    #[test]
    fn imax_eps_zero_is_exact_dmax_of_broken_pair() {
        let mut s = Sampler::new(41);
        let joint = s.random_joint(&[("u", 2), ("v", 2), ("x", 2)]);
        let st = CqState::classical(joint.clone());
        let v = imax_conditional_classical(&st, &["u"], &["x"], &["v"], 0.0).unwrap();
        // direct dmax: max log p(u,v,x) / (p(u,v) p(x|v))
        let puv = joint.marginal(&["u", "v"]).unwrap();
        let pvx = joint.marginal(&["v", "x"]).unwrap();
        let pv = joint.marginal(&["v"]).unwrap();
        let mut best: f64 = 0.0;
        for u in 0..2 {
            for vv in 0..2 {
                for x in 0..2 {
                    let p = joint.pmf[(u * 2 + vv) * 2 + x];
                    let q = puv.pmf[u * 2 + vv] * pvx.pmf[vv * 2 + x] / pv.pmf[vv];
                    if p > 0.0 {
                        best = best.max((p / q).log2());
                    }
                }
            }
        }
        assert!((v - best).abs() < 1e-9);
    }

    #[test]
    fn imax_two_copy_corridor() {
        let mut s = Sampler::new(42);
        let joint = s.random_joint(&[("u", 2), ("v", 2), ("x", 2)]);
        let st = CqState::classical(joint);
        let req = MutualInfoRequest::new(
            &st,
            &["u"],
            RightSide::Registers(vec!["x".into()]),
            &["v"],
        );
        let shannon = shannon_mi(&req).unwrap();
        let single = imax_conditional_classical(&st, &["u"], &["x"], &["v"], 0.0).unwrap();
        let squared = st.tensor_power(2).unwrap();
        let v2 = imax_conditional_classical(
            &squared,
            &["u", "u#1"],
            &["x", "x#1"],
            &["v", "v#1"],
            0.05,
        )
        .unwrap();
        let per_copy = v2 / 2.0;
        assert!(per_copy >= shannon - 0.5, "{per_copy} vs {shannon}");
        assert!(per_copy <= single + 1.0, "{per_copy} vs {single}");
    }
}
