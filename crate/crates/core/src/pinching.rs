//! Pinching maps from spectral decompositions, the nested pinching families
//! the decoders are built from, distinct-eigenvalue counting, and numerical
//! verification of the pinching inequality and the polynomial count bounds.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::cqstate::CqState;
use crate::error::{QbcError, Result};
use crate::hermitian::{
    same_cluster, CMat, DensityMatrix, HermitianOperator, DEFAULT_DIM_CAP,
};

/// A complete family of orthogonal projectors: the dephasing channel that
/// kills cross-eigenspace blocks of its source operator.
#[derive(Clone, Debug)]
pub struct PinchingMap {
    pub projectors: Vec<HermitianOperator>,
    pub source_description: String,
}

impl PinchingMap {
    /// Pinching with respect to the spectral decomposition of `source`.
    pub fn from_operator(source: &HermitianOperator, cluster_tol: f64, desc: &str) -> Self {
        let sd = source.spectral(cluster_tol);
        Self {
            projectors: sd.eigenspaces.into_iter().map(|e| e.projector).collect(),
            source_description: desc.to_string(),
        }
    }

    pub fn dim(&self) -> usize {
        self.projectors.first().map(|p| p.dim()).unwrap_or(0)
    }

    /// Number of projectors = distinct eigenvalues of the source.
    pub fn count(&self) -> usize {
        self.projectors.len()
    }

    /// `E(X) = sum_i P_i X P_i`.
    pub fn pinch(&self, x: &HermitianOperator) -> Result<HermitianOperator> {
        if x.dim() != self.dim() {
            return Err(QbcError::DimMismatch(x.dim(), self.dim()));
        }
        let mut acc = CMat::zeros(x.dim(), x.dim());
        for p in &self.projectors {
            acc += p.matrix() * x.matrix() * p.matrix();
        }
        Ok(HermitianOperator::new_unchecked(acc))
    }
}

pub fn distinct_eigenvalue_count(op: &HermitianOperator, cluster_tol: f64) -> usize {
    op.spectral(cluster_tol).distinct_count()
}

/// Minimum eigenvalue of `nu * E_sigma(rho) - rho`; nonnegative (up to
/// round-off) certifies the pinching inequality `rho <= nu E_sigma(rho)`.
pub fn verify_pinching_inequality(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    cluster_tol: f64,
) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(QbcError::DimMismatch(rho.dim(), sigma.dim()));
    }
    let map = PinchingMap::from_operator(&sigma.op, cluster_tol, "sigma");
    let nu = map.count() as f64;
    let pinched = map.pinch(&rho.op)?;
    Ok(pinched.scale(nu).sub(&rho.op).min_eigenvalue())
}

/// Which nested family a coding scenario needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PinchScenario {
    /// Two levels keyed by the first register (cloud center).
    Marton,
    /// Chain keyed (u), (u,v), (u,v,x) over registers `u`, `v`, `x`.
    Multilevel,
    /// Fork keyed (u), (u,v2), (u,v3), (u,v2,v3) over `u`, `v2`, `v3`, `x`.
    GeneralTwo,
    /// Same fork structure as `GeneralTwo`.
    ThreeDegraded,
}

impl PinchScenario {
    fn required_registers(self) -> &'static [&'static str] {
        match self {
            PinchScenario::Marton => &[],
            PinchScenario::Multilevel => &["u", "v", "x"],
            PinchScenario::GeneralTwo | PinchScenario::ThreeDegraded => &["u", "v2", "v3", "x"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Level {
    L1,
    L2Chain,
    L3Chain,
    ForkV2,
    ForkV3,
    ForkV23,
}

/// The nested pinching family of a cq-state: level 0 pinches with the average
/// output state, level 1 with the level-0 image of each u-conditional, and
/// deeper levels with the previous level's image of the relevant conditional.
/// Maps are materialized lazily per classical key and memoized.
pub struct NestedPinchingFamily {
    state: CqState,
    scenario: PinchScenario,
    cluster_tol: f64,
    level0: Arc<PinchingMap>,
    memo: Mutex<HashMap<(Level, Vec<usize>), Arc<PinchingMap>>>,
}

impl NestedPinchingFamily {
    pub fn build(state: &CqState, scenario: PinchScenario, cluster_tol: f64) -> Result<Self> {
        for name in scenario.required_registers() {
            state.joint.register_pos(name)?;
        }
        if matches!(scenario, PinchScenario::Marton) && state.registers().is_empty() {
            return Err(QbcError::BadRequest(
                "marton family needs at least one register".into(),
            ));
        }
        let avg = state.quantum_marginal();
        let level0 = Arc::new(PinchingMap::from_operator(
            &avg.op,
            cluster_tol,
            "rho^B",
        ));
        Ok(Self {
            state: state.clone(),
            scenario,
            cluster_tol,
            level0,
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn scenario(&self) -> PinchScenario {
        self.scenario
    }

    pub fn cluster_tol(&self) -> f64 {
        self.cluster_tol
    }

    pub fn state(&self) -> &CqState {
        &self.state
    }

    /// Average conditional given the named registers at the given values.
    fn averaged(&self, names: &[&str], vals: &[usize]) -> DensityMatrix {
        let joint = &self.state.joint;
        let pos: Vec<usize> = names
            .iter()
            .map(|n| joint.register_pos(n).expect("register checked at build"))
            .collect();
        let mut w = 0.0;
        let mut acc = HermitianOperator::zeros(self.state.d_b);
        for idx in 0..joint.total() {
            let t = joint.tuple_of(idx);
            if pos.iter().zip(vals.iter()).all(|(&p, &v)| t[p] == v) {
                w += joint.pmf[idx];
                acc = acc.add(&self.state.conditional_by_index(idx).op.scale(joint.pmf[idx]));
            }
        }
        if w > 0.0 {
            DensityMatrix::new_unchecked(acc.scale(1.0 / w))
        } else {
            DensityMatrix::maximally_mixed(self.state.d_b)
        }
    }

    fn first_register(&self) -> String {
        self.state.registers()[0].name.clone()
    }

    fn get_or_build(
        &self,
        level: Level,
        key: &[usize],
        build: impl FnOnce() -> PinchingMap,
    ) -> Arc<PinchingMap> {
        // the build closure may recurse into shallower levels, so the lock
        // must not be held across it
        if let Some(m) = self
            .memo
            .lock()
            .expect("pinching memo lock")
            .get(&(level, key.to_vec()))
        {
            return Arc::clone(m);
        }
        let m = Arc::new(build());
        let mut memo = self.memo.lock().expect("pinching memo lock");
        Arc::clone(memo.entry((level, key.to_vec())).or_insert(m))
    }

    pub fn level0(&self) -> Arc<PinchingMap> {
        Arc::clone(&self.level0)
    }

    /// `E_{1|u}`: pinching with respect to `E0(rho_u)`.
    pub fn level1(&self, u: usize) -> Arc<PinchingMap> {
        let first = self.first_register();
        self.get_or_build(Level::L1, &[u], || {
            let rho_u = self.averaged(&[first.as_str()], &[u]);
            let pinched = self.level0.pinch(&rho_u.op).expect("dims match");
            PinchingMap::from_operator(&pinched, self.cluster_tol, &format!("E0(rho_u={u})"))
        })
    }

    /// Chain level 2, `E_{2|u,v}`: pinching with respect to `E_{1|u}(rho_v)`.
    pub fn level2(&self, u: usize, v: usize) -> Arc<PinchingMap> {
        assert!(matches!(self.scenario, PinchScenario::Multilevel));
        self.get_or_build(Level::L2Chain, &[u, v], || {
            let rho_v = self.averaged(&["v"], &[v]);
            let pinched = self.level1(u).pinch(&rho_v.op).expect("dims match");
            PinchingMap::from_operator(
                &pinched,
                self.cluster_tol,
                &format!("E1|u={u}(rho_v={v})"),
            )
        })
    }

    /// Chain level 3, `E_{3|u,v,x}`: pinching with respect to `E_{2|u,v}(rho_x)`.
    pub fn level3(&self, u: usize, v: usize, x: usize) -> Arc<PinchingMap> {
        assert!(matches!(self.scenario, PinchScenario::Multilevel));
        self.get_or_build(Level::L3Chain, &[u, v, x], || {
            let rho_x = self.averaged(&["x"], &[x]);
            let pinched = self.level2(u, v).pinch(&rho_x.op).expect("dims match");
            PinchingMap::from_operator(
                &pinched,
                self.cluster_tol,
                &format!("E2|u={u},v={v}(rho_x={x})"),
            )
        })
    }

    /// Fork level, `E_{2|u,v2}`: pinching with respect to `E_{1|u}(rho_{v2})`.
    pub fn fork_v2(&self, u: usize, v2: usize) -> Arc<PinchingMap> {
        self.fork(Level::ForkV2, u, &["v2"], &[v2])
    }

    /// Fork level, `E_{3|u,v3}`: pinching with respect to `E_{1|u}(rho_{v3})`.
    pub fn fork_v3(&self, u: usize, v3: usize) -> Arc<PinchingMap> {
        self.fork(Level::ForkV3, u, &["v3"], &[v3])
    }

    /// Fork level, `E_{4|u,v2,v3}`: with respect to `E_{1|u}(rho_{v2,v3})`.
    pub fn fork_v23(&self, u: usize, v2: usize, v3: usize) -> Arc<PinchingMap> {
        self.fork(Level::ForkV23, u, &["v2", "v3"], &[v2, v3])
    }

    fn fork(&self, level: Level, u: usize, names: &[&str], vals: &[usize]) -> Arc<PinchingMap> {
        assert!(matches!(
            self.scenario,
            PinchScenario::GeneralTwo | PinchScenario::ThreeDegraded
        ));
        let mut key = vec![u];
        key.extend_from_slice(vals);
        self.get_or_build(level, &key, || {
            let rho = self.averaged(names, vals);
            let pinched = self.level1(u).pinch(&rho.op).expect("dims match");
            PinchingMap::from_operator(
                &pinched,
                self.cluster_tol,
                &format!("E1|u={u}(rho_{names:?}={vals:?})"),
            )
        })
    }

    /// Max distinct-eigenvalue count of the level-1 defining operators.
    pub fn nu1(&self) -> usize {
        let d_u = self.state.registers()[0].alphabet_size;
        (0..d_u).map(|u| self.level1(u).count()).max().unwrap_or(1)
    }
}

/// Distinct values among all n-fold products of the given eigenvalues,
/// clustered at `tol`. This is the spectrum size of a tensor power without
/// building the tensor-power matrix.
pub fn distinct_product_count(eigs: &[f64], n: usize, tol: f64) -> usize {
    let d = eigs.len();
    let mut products: Vec<f64> = Vec::new();
    // iterate over type vectors (k_1, ..., k_d) with sum n
    fn rec(eigs: &[f64], slot: usize, left: usize, acc: f64, out: &mut Vec<f64>) {
        if slot == eigs.len() - 1 {
            out.push(acc * eigs[slot].powi(left as i32));
            return;
        }
        for k in 0..=left {
            rec(eigs, slot + 1, left - k, acc * eigs[slot].powi(k as i32), out);
        }
    }
    if d == 0 {
        return 0;
    }
    rec(eigs, 0, n, 1.0, &mut products);
    products.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut count = 0;
    let mut i = 0;
    while i < products.len() {
        let mut j = i + 1;
        while j < products.len() && same_cluster(products[j], products[j - 1], tol) {
            j += 1;
        }
        count += 1;
        i = j;
    }
    count
}

#[derive(Clone, Debug, Serialize)]
pub struct CountSample {
    pub kind: String,
    pub sequence: Vec<usize>,
    pub count: usize,
    pub bound: f64,
    pub within: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountReport {
    pub n: usize,
    pub cluster_tol: f64,
    pub d_b: usize,
    pub nu: usize,
    pub nu_bound: f64,
    pub samples: Vec<CountSample>,
    pub all_within: bool,
}

/// Check the polynomial bounds on distinct eigenvalue counts of pinched
/// tensor-power states, for the given cq-state family (register 0 plays u,
/// register 1, when present, plays v).
///
/// `u_sequences` selects which u^n sequences to test (`None` = exhaustive).
pub fn check_count_bounds(
    state: &CqState,
    n: usize,
    cluster_tol: f64,
    u_sequences: Option<&[Vec<usize>]>,
    dim_cap: usize,
) -> Result<CountReport> {
    let d_b = state.d_b;
    let full_dim = d_b.pow(n as u32);
    if full_dim > dim_cap.max(DEFAULT_DIM_CAP) {
        return Err(QbcError::DimCapExceeded(full_dim, dim_cap.max(DEFAULT_DIM_CAP)));
    }
    let rho_b = state.quantum_marginal();
    // nu from the eigenvalue-product multiset: no tensor-power matrix needed
    let nu = distinct_product_count(&rho_b.op.eigenvalues_raw(), n, cluster_tol);
    let nu_bound = ((n + 1) as f64).powi(d_b as i32 - 1);

    let d_u = state.registers()[0].alphabet_size;
    let u_name = state.registers()[0].name.clone();
    let has_v = state.registers().len() > 1;

    // tensor-power pinching maps, built once
    let mut big = rho_b.op.clone();
    for _ in 1..n {
        big = big.kron(&rho_b.op);
    }
    let e0 = PinchingMap::from_operator(&big, cluster_tol, "rho^B tensor n");

    let nu1_exp = d_u as f64 * ((d_b + 2) * (d_b - 1)) as f64 / 2.0;
    let nu1_bound = ((n + 1) as f64).powf(nu1_exp);

    let all_u: Vec<Vec<usize>> = match u_sequences {
        Some(seqs) => seqs.to_vec(),
        None => {
            let mut seqs = vec![vec![]];
            for _ in 0..n {
                seqs = seqs
                    .into_iter()
                    .flat_map(|s: Vec<usize>| {
                        (0..d_u).map(move |u| {
                            let mut t = s.clone();
                            t.push(u);
                            t
                        })
                    })
                    .collect();
            }
            seqs
        }
    };

    let avg_given = |name: &str, val: usize| -> DensityMatrix {
        let pos = state.joint.register_pos(name).expect("register exists");
        let mut w = 0.0;
        let mut acc = HermitianOperator::zeros(d_b);
        for idx in 0..state.joint.total() {
            if state.joint.tuple_of(idx)[pos] == val {
                w += state.joint.pmf[idx];
                acc = acc.add(&state.conditional_by_index(idx).op.scale(state.joint.pmf[idx]));
            }
        }
        if w > 0.0 {
            DensityMatrix::new_unchecked(acc.scale(1.0 / w))
        } else {
            DensityMatrix::maximally_mixed(d_b)
        }
    };

    let mut samples = Vec::new();
    for useq in &all_u {
        // E^{B^n}(rho_{u^n})
        let mut rho_un = avg_given(&u_name, useq[0]).op.clone();
        for &u in &useq[1..] {
            rho_un = rho_un.kron(&avg_given(&u_name, u).op);
        }
        let pinched = e0.pinch(&rho_un)?;
        let count = distinct_eigenvalue_count(&pinched, cluster_tol);
        samples.push(CountSample {
            kind: "nu1".into(),
            sequence: useq.clone(),
            count,
            bound: nu1_bound,
            within: (count as f64) <= nu1_bound,
        });

        if has_v {
            let v_name = state.registers()[1].name.clone();
            let d_v = state.registers()[1].alphabet_size;
            let nu2_exp = (d_v * d_u) as f64 * ((d_b + 2) * (d_b - 1)) as f64 / 2.0;
            let nu2_bound = ((n + 1) as f64).powf(nu2_exp);
            let e1 = PinchingMap::from_operator(&pinched, cluster_tol, "E0(rho_un)");
            // one representative v^n per u^n: the all-v sequences v in 0..d_v
            for v in 0..d_v {
                let mut rho_vn = avg_given(&v_name, v).op.clone();
                for _ in 1..n {
                    rho_vn = rho_vn.kron(&avg_given(&v_name, v).op);
                }
                let pinched2 = e1.pinch(&rho_vn)?;
                let count2 = distinct_eigenvalue_count(&pinched2, cluster_tol);
                samples.push(CountSample {
                    kind: "nu2".into(),
                    sequence: vec![v; n],
                    count: count2,
                    bound: nu2_bound,
                    within: (count2 as f64) <= nu2_bound,
                });
            }
        }
    }

    let all_within = (nu as f64) <= nu_bound && samples.iter().all(|s| s.within);
    Ok(CountReport {
        n,
        cluster_tol,
        d_b,
        nu,
        nu_bound,
        samples,
        all_within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqstate::ClassicalJoint;
    use crate::cqstate::ClassicalRegister;
    use crate::sampling::Sampler;

    #[test]
    fn pinching_with_flat_source_is_identity() {
        let mut s = Sampler::new(1);
        let x = s.random_hermitian(3);
        let flat = DensityMatrix::maximally_mixed(3);
        let map = PinchingMap::from_operator(&flat.op, 1e-9, "I/3");
        assert_eq!(map.count(), 1);
        let px = map.pinch(&x).unwrap();
        assert!(px.sub(&x).operator_norm() < 1e-12);
    }

    #[test]
    fn pinching_nondegenerate_dephases() {
        let sigma = HermitianOperator::from_real_diag(&[0.7, 0.3]);
        let map = PinchingMap::from_operator(&sigma, 1e-9, "sigma");
        let x = HermitianOperator::new(CMat::from_row_slice(
            2,
            2,
            &[
                num_complex::Complex64::new(0.5, 0.0),
                num_complex::Complex64::new(0.5, 0.0),
                num_complex::Complex64::new(0.5, 0.0),
                num_complex::Complex64::new(0.5, 0.0),
            ],
        ))
        .unwrap();
        let px = map.pinch(&x).unwrap();
        let expect = HermitianOperator::from_real_diag(&[0.5, 0.5]);
        assert!(px.sub(&expect).operator_norm() < 1e-12);
    }

    #[test]
    fn pinching_restricts_block_by_block() {
        // source with one doubly degenerate eigenvalue
        let mut s = Sampler::new(2);
        let sigma = HermitianOperator::from_real_diag(&[0.4, 0.4, 0.2]);
        let map = PinchingMap::from_operator(&sigma, 1e-9, "sigma");
        assert_eq!(map.count(), 2);
        let x = s.random_hermitian(3);
        let px = map.pinch(&x).unwrap();
        // block-diagonal restriction: top-left 2x2 block kept, cross terms zeroed
        for i in 0..2 {
            for j in 0..2 {
                assert!((px.entry(i, j) - x.entry(i, j)).norm() < 1e-12);
            }
            assert!(px.entry(i, 2).norm() < 1e-12);
        }
        assert!((px.entry(2, 2) - x.entry(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn pinch_is_trace_preserving_unital_idempotent() {
        let mut s = Sampler::new(3);
        for _ in 0..20 {
            let sigma = s.random_density(4);
            let map = PinchingMap::from_operator(&sigma.op, 1e-9, "sigma");
            let x = s.random_hermitian(4);
            let px = map.pinch(&x).unwrap();
            assert!((px.trace() - x.trace()).abs() <= 1e-10);
            let ppx = map.pinch(&px).unwrap();
            assert!(ppx.sub(&px).operator_norm() <= 1e-10);
            let id = map.pinch(&HermitianOperator::identity(4)).unwrap();
            assert!(id.sub(&HermitianOperator::identity(4)).operator_norm() <= 1e-10);
            // commutes with the source
            let comm = px.matrix() * sigma.op.matrix() - sigma.op.matrix() * px.matrix();
            assert!(comm.norm() <= 1e-9);
        }
    }

    #[test]
    fn pinching_inequality_margins() {
        let mut s = Sampler::new(4);
        let rho = s.random_density(3);
        assert!(verify_pinching_inequality(&rho, &rho, 1e-9).unwrap() >= -1e-9);
        // flat sigma: pinching is the identity and nu = 1, margin exactly 0
        let flat = DensityMatrix::maximally_mixed(3);
        let m = verify_pinching_inequality(&rho, &flat, 1e-9).unwrap();
        assert!(m.abs() < 1e-12);
        for _ in 0..200 {
            let rho = s.random_density(2);
            let sigma = s.random_density(2);
            assert!(verify_pinching_inequality(&rho, &sigma, 1e-9).unwrap() >= -1e-9);
        }
    }

    #[test]
    fn distinct_products_of_tensor_powers() {
        // diag(p, 1-p), n = 3 -> 4 distinct products; bound (n+1)^(d_B - 1) = 4
        let count = distinct_product_count(&[0.3, 0.7], 3, 1e-9);
        assert_eq!(count, 4);
        // flat spectrum stays a single value for all n
        assert_eq!(distinct_product_count(&[0.5, 0.5], 6, 1e-9), 1);
        assert_eq!(distinct_eigenvalue_count(&DensityMatrix::maximally_mixed(2).op, 1e-9), 1);
    }

    fn family_state(seed: u64) -> CqState {
        let mut s = Sampler::new(seed);
        let joint = s.random_joint(&[("u", 2), ("v", 2), ("x", 2)]);
        let conds = (0..8).map(|_| s.random_density(2)).collect();
        CqState::new(joint, 2, conds).unwrap()
    }

    #[test]
    fn nested_family_commutation() {
        let st = family_state(5);
        let fam = NestedPinchingFamily::build(&st, PinchScenario::Multilevel, 1e-9).unwrap();
        let avg = st.quantum_marginal();
        for u in 0..2 {
            let map = fam.level1(u);
            // level-1 projectors commute with the pinched conditional that defined them
            let pos = st.joint.register_pos("u").unwrap();
            let mut w = 0.0;
            let mut acc = HermitianOperator::zeros(2);
            for idx in 0..st.joint.total() {
                if st.joint.tuple_of(idx)[pos] == u {
                    w += st.joint.pmf[idx];
                    acc = acc.add(&st.conditional_by_index(idx).op.scale(st.joint.pmf[idx]));
                }
            }
            let rho_u = acc.scale(1.0 / w);
            let defining = fam.level0().pinch(&rho_u).unwrap();
            for p in &map.projectors {
                let comm = p.matrix() * defining.matrix() - defining.matrix() * p.matrix();
                assert!(comm.norm() <= 1e-9);
            }
            // and the level-0 maps commute with the average state
            for p in &fam.level0().projectors {
                let comm = p.matrix() * avg.op.matrix() - avg.op.matrix() * p.matrix();
                assert!(comm.norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn nested_family_single_u_matches_plain_pinch() {
        let mut s = Sampler::new(6);
        let joint = s.random_joint(&[("u", 1), ("v", 2), ("x", 2)]);
        let conds = (0..4).map(|_| s.random_density(2)).collect();
        let st = CqState::new(joint, 2, conds).unwrap();
        let fam = NestedPinchingFamily::build(&st, PinchScenario::Multilevel, 1e-9).unwrap();
        // with |U| = 1 the level-1 map is the pinching of E0(rho^B)
        let avg = st.quantum_marginal();
        let e0_avg = fam.level0().pinch(&avg.op).unwrap();
        let expect = PinchingMap::from_operator(&e0_avg, 1e-9, "");
        assert_eq!(fam.level1(0).count(), expect.count());
    }

    #[test]
    fn classical_diagonal_channel_fully_dephases() {
        // all conditionals diagonal with generic entries: every level is the
        // computational-basis dephasing
        let joint = ClassicalJoint::new(
            vec![
                ClassicalRegister::new("u", 2),
                ClassicalRegister::new("v", 1),
                ClassicalRegister::new("x", 1),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        let conds = vec![
            DensityMatrix::new(HermitianOperator::from_real_diag(&[0.9, 0.1])).unwrap(),
            DensityMatrix::new(HermitianOperator::from_real_diag(&[0.2, 0.8])).unwrap(),
        ];
        let st = CqState::new(joint, 2, conds).unwrap();
        let fam = NestedPinchingFamily::build(&st, PinchScenario::Multilevel, 1e-9).unwrap();
        assert_eq!(fam.level0().count(), 2);
        for u in 0..2 {
            assert_eq!(fam.level1(u).count(), 2);
            for p in &fam.level1(u).projectors {
                // projectors are diagonal in the computational basis
                assert!(p.entry(0, 1).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pinched_counts_respect_block_dimensions() {
        // within each eigenspace of the source, the pinched operator has at
        // most block-dimension many distinct eigenvalues
        let mut s = Sampler::new(77);
        for _ in 0..10 {
            let sigma = HermitianOperator::from_real_diag(&[0.4, 0.4, 0.15, 0.05]);
            let map = PinchingMap::from_operator(&sigma, 1e-9, "sigma");
            let x = s.random_hermitian(4);
            let px = map.pinch(&x).unwrap();
            let mut total_allowed = 0;
            for p in &map.projectors {
                let mult = p.trace().round() as usize;
                total_allowed += mult;
                // restrict to the block and count its distinct eigenvalues
                let restricted = HermitianOperator::new_unchecked(
                    p.matrix() * px.matrix() * p.matrix(),
                );
                let nonzero: Vec<f64> = restricted
                    .eigenvalues_raw()
                    .into_iter()
                    .filter(|v| v.abs() > 1e-9)
                    .collect();
                let mut count = 0;
                let mut i = 0;
                while i < nonzero.len() {
                    let mut j = i + 1;
                    while j < nonzero.len() && same_cluster(nonzero[j], nonzero[j - 1], 1e-9) {
                        j += 1;
                    }
                    count += 1;
                    i = j;
                }
                assert!(count <= mult, "block count {count} exceeds dimension {mult}");
            }
            assert!(distinct_eigenvalue_count(&px, 1e-9) <= total_allowed);
        }
    }

    #[test]
    fn count_bounds_small_instances() {
        let st = family_state(7);
        let r = check_count_bounds(&st, 1, 1e-9, None, 256).unwrap();
        assert!(r.all_within);
        assert!(r.nu <= st.d_b);
        let r3 = check_count_bounds(&st, 3, 1e-9, None, 256).unwrap();
        assert!(r3.all_within, "counts {:?}", r3.samples);
    }

    #[test]
    fn count_bound_qubit_base() {
        // nu <= n + 1 for a qubit base state
        let mut s = Sampler::new(8);
        let rho = s.random_density(2);
        for n in 1..=12 {
            let nu = distinct_product_count(&rho.op.eigenvalues_raw(), n, 1e-9);
            assert!(nu <= n + 1, "n={n} nu={nu}");
        }
    }
}
