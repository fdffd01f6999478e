//! Classical-quantum states over named classical registers and one quantum
//! register, Markov-broken variants, marginals, tensor powers, and the
//! three-receiver broadcast channel with its file format.

use serde::{Deserialize, Serialize};

use crate::error::{QbcError, Result};
use crate::hermitian::{
    C64, CMat, DensityMatrix, HermitianOperator, DEFAULT_DIM_CAP,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalRegister {
    pub name: String,
    pub alphabet_size: usize,
}

impl ClassicalRegister {
    pub fn new(name: &str, alphabet_size: usize) -> Self {
        assert!(alphabet_size >= 1);
        Self {
            name: name.to_string(),
            alphabet_size,
        }
    }
}

/// A joint pmf over named registers (no quantum part). Register order is
/// canonical: tuples index row-major in the declared order.
#[derive(Clone, Debug)]
pub struct ClassicalJoint {
    pub registers: Vec<ClassicalRegister>,
    pub pmf: Vec<f64>,
}

impl ClassicalJoint {
    pub fn new(registers: Vec<ClassicalRegister>, pmf: Vec<f64>) -> Result<Self> {
        let total: usize = registers.iter().map(|r| r.alphabet_size).product();
        if pmf.len() != total {
            return Err(QbcError::BadInput {
                path: "pmf".into(),
                message: format!("expected {total} entries, got {}", pmf.len()),
            });
        }
        for (i, &p) in pmf.iter().enumerate() {
            if p < 0.0 {
                return Err(QbcError::BadInput {
                    path: format!("pmf[{i}]"),
                    message: format!("negative probability {p}"),
                });
            }
        }
        let s: f64 = pmf.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(QbcError::BadTrace(s, 1.0));
        }
        Ok(Self { registers, pmf })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.registers.iter().map(|r| r.alphabet_size).collect()
    }

    pub fn total(&self) -> usize {
        self.sizes().iter().product()
    }

    pub fn index_of(&self, tuple: &[usize]) -> usize {
        let sizes = self.sizes();
        let mut idx = 0;
        for (c, s) in tuple.iter().zip(sizes.iter()) {
            debug_assert!(c < s);
            idx = idx * s + c;
        }
        idx
    }

    pub fn tuple_of(&self, mut idx: usize) -> Vec<usize> {
        let sizes = self.sizes();
        let mut t = vec![0; sizes.len()];
        for i in (0..sizes.len()).rev() {
            t[i] = idx % sizes[i];
            idx /= sizes[i];
        }
        t
    }

    pub fn register_pos(&self, name: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| QbcError::UnknownRegister(name.to_string()))
    }

    /// Marginal pmf over a subset of registers (in their canonical order).
    pub fn marginal(&self, keep: &[&str]) -> Result<ClassicalJoint> {
        let keep_pos: Vec<usize> = keep
            .iter()
            .map(|n| self.register_pos(n))
            .collect::<Result<_>>()?;
        let regs: Vec<ClassicalRegister> =
            keep_pos.iter().map(|&p| self.registers[p].clone()).collect();
        let total: usize = regs.iter().map(|r| r.alphabet_size).product();
        let mut pmf = vec![0.0; total.max(1)];
        for idx in 0..self.total() {
            let t = self.tuple_of(idx);
            let mut out = 0;
            for (&p, r) in keep_pos.iter().zip(regs.iter()) {
                out = out * r.alphabet_size + t[p];
            }
            pmf[out] += self.pmf[idx];
        }
        ClassicalJoint::new(regs, pmf)
    }
}

/// A cq-state: joint pmf over classical registers plus one conditional
/// density matrix per classical tuple on a quantum system of dimension `d_b`.
#[derive(Clone, Debug)]
pub struct CqState {
    pub joint: ClassicalJoint,
    pub d_b: usize,
    conditionals: Vec<DensityMatrix>,
}

impl CqState {
    pub fn new(
        joint: ClassicalJoint,
        d_b: usize,
        conditionals: Vec<DensityMatrix>,
    ) -> Result<Self> {
        if conditionals.len() != joint.total() {
            return Err(QbcError::BadInput {
                path: "conditionals".into(),
                message: format!(
                    "expected {} conditional states, got {}",
                    joint.total(),
                    conditionals.len()
                ),
            });
        }
        for (i, c) in conditionals.iter().enumerate() {
            if c.dim() != d_b {
                return Err(QbcError::BadInput {
                    path: format!("conditionals[{i}]"),
                    message: format!("dimension {} != d_b {}", c.dim(), d_b),
                });
            }
        }
        Ok(Self {
            joint,
            d_b,
            conditionals,
        })
    }

    /// Classical-only state (trivial quantum side).
    pub fn classical(joint: ClassicalJoint) -> Self {
        let n = joint.total();
        Self {
            joint,
            d_b: 1,
            conditionals: vec![DensityMatrix::maximally_mixed(1); n],
        }
    }

    pub fn registers(&self) -> &[ClassicalRegister] {
        &self.joint.registers
    }

    pub fn conditional(&self, tuple: &[usize]) -> &DensityMatrix {
        &self.conditionals[self.joint.index_of(tuple)]
    }

    pub fn conditional_by_index(&self, idx: usize) -> &DensityMatrix {
        &self.conditionals[idx]
    }

    pub fn prob(&self, tuple: &[usize]) -> f64 {
        self.joint.pmf[self.joint.index_of(tuple)]
    }

    pub fn total_dim(&self) -> usize {
        self.joint.total() * self.d_b
    }

    /// Average quantum state `sum_t p(t) rho_t`.
    pub fn quantum_marginal(&self) -> DensityMatrix {
        let mut acc = HermitianOperator::zeros(self.d_b);
        for (idx, c) in self.conditionals.iter().enumerate() {
            acc = acc.add(&c.op.scale(self.joint.pmf[idx]));
        }
        DensityMatrix::new_unchecked(acc)
    }

    /// Block-diagonal embedding `sum_t p(t) |t><t| (x) rho_t`.
    pub fn embed(&self) -> Result<HermitianOperator> {
        self.embed_capped(DEFAULT_DIM_CAP)
    }

    pub fn embed_capped(&self, cap: usize) -> Result<HermitianOperator> {
        let total = self.total_dim();
        if total > cap {
            return Err(QbcError::DimCapExceeded(total, cap));
        }
        let mut m = CMat::zeros(total, total);
        for idx in 0..self.joint.total() {
            let p = self.joint.pmf[idx];
            let block = self.conditionals[idx].op.matrix();
            for i in 0..self.d_b {
                for j in 0..self.d_b {
                    m[(idx * self.d_b + i, idx * self.d_b + j)] =
                        block[(i, j)] * C64::new(p, 0.0);
                }
            }
        }
        Ok(HermitianOperator::new_unchecked(m))
    }

    /// Replace each conditional by its average given only the listed
    /// registers: the Markov-broken state. The pmf is unchanged; a tuple's
    /// conditional becomes `sum_{t' ~ t} p(t') rho_{t'} / p(class)` over
    /// tuples agreeing on the conditioning set. Zero-probability classes get
    /// the maximally mixed placeholder.
    pub fn markov_break(&self, conditioning: &[&str]) -> Result<CqState> {
        let cond_pos: Vec<usize> = conditioning
            .iter()
            .map(|n| self.joint.register_pos(n))
            .collect::<Result<_>>()?;
        let sizes = self.joint.sizes();
        let class_of = |t: &[usize]| -> usize {
            let mut k = 0;
            for &p in &cond_pos {
                k = k * sizes[p] + t[p];
            }
            k
        };
        let nclasses: usize = cond_pos.iter().map(|&p| sizes[p]).product::<usize>().max(1);
        let mut class_weight = vec![0.0; nclasses];
        let mut class_avg = vec![HermitianOperator::zeros(self.d_b); nclasses];
        for idx in 0..self.joint.total() {
            let t = self.joint.tuple_of(idx);
            let k = class_of(&t);
            class_weight[k] += self.joint.pmf[idx];
            class_avg[k] = class_avg[k].add(&self.conditionals[idx].op.scale(self.joint.pmf[idx]));
        }
        let class_states: Vec<DensityMatrix> = class_avg
            .into_iter()
            .zip(class_weight.iter())
            .map(|(acc, &w)| {
                if w > 0.0 {
                    DensityMatrix::new_unchecked(acc.scale(1.0 / w))
                } else {
                    DensityMatrix::maximally_mixed(self.d_b)
                }
            })
            .collect();
        let conditionals: Vec<DensityMatrix> = (0..self.joint.total())
            .map(|idx| {
                let t = self.joint.tuple_of(idx);
                class_states[class_of(&t)].clone()
            })
            .collect();
        CqState::new(self.joint.clone(), self.d_b, conditionals)
    }

    /// Marginal cq-state over a register subset; optionally drops the quantum
    /// side (yielding a classical-only state with d_b = 1).
    pub fn marginal(&self, keep: &[&str], keep_quantum: bool) -> Result<CqState> {
        let keep_pos: Vec<usize> = keep
            .iter()
            .map(|n| self.joint.register_pos(n))
            .collect::<Result<_>>()?;
        let regs: Vec<ClassicalRegister> =
            keep_pos.iter().map(|&p| self.registers()[p].clone()).collect();
        let out_sizes: Vec<usize> = regs.iter().map(|r| r.alphabet_size).collect();
        let out_total: usize = out_sizes.iter().product::<usize>().max(1);
        let mut pmf = vec![0.0; out_total];
        let d_out = if keep_quantum { self.d_b } else { 1 };
        let mut acc = vec![HermitianOperator::zeros(d_out); out_total];
        for idx in 0..self.joint.total() {
            let t = self.joint.tuple_of(idx);
            let mut out = 0;
            for (&p, s) in keep_pos.iter().zip(out_sizes.iter()) {
                out = out * s + t[p];
            }
            pmf[out] += self.joint.pmf[idx];
            if keep_quantum {
                acc[out] = acc[out].add(&self.conditionals[idx].op.scale(self.joint.pmf[idx]));
            }
        }
        let conditionals: Vec<DensityMatrix> = acc
            .into_iter()
            .zip(pmf.iter())
            .map(|(a, &w)| {
                if keep_quantum && w > 0.0 {
                    DensityMatrix::new_unchecked(a.scale(1.0 / w))
                } else {
                    DensityMatrix::maximally_mixed(d_out)
                }
            })
            .collect();
        CqState::new(ClassicalJoint::new(regs, pmf)?, d_out, conditionals)
    }

    /// n-fold tensor power. Register names get copy suffixes `#k` for k > 0.
    pub fn tensor_power(&self, n: usize) -> Result<CqState> {
        assert!(n >= 1);
        if n == 1 {
            return Ok(self.clone());
        }
        let mut regs = Vec::new();
        for k in 0..n {
            for r in self.registers() {
                let name = if k == 0 {
                    r.name.clone()
                } else {
                    format!("{}#{k}", r.name)
                };
                regs.push(ClassicalRegister::new(&name, r.alphabet_size));
            }
        }
        let base_total = self.joint.total();
        let total = base_total.pow(n as u32);
        let mut pmf = vec![0.0; total];
        let mut conditionals = Vec::with_capacity(total);
        for idx in 0..total {
            // decompose idx into n base indices, most significant first
            let mut parts = vec![0usize; n];
            let mut rem = idx;
            for i in (0..n).rev() {
                parts[i] = rem % base_total;
                rem /= base_total;
            }
            let mut p = 1.0;
            let mut op = HermitianOperator::identity(1);
            for &b in &parts {
                p *= self.joint.pmf[b];
                op = op.kron(&self.conditionals[b].op);
            }
            pmf[idx] = p;
            conditionals.push(DensityMatrix::new_unchecked(op));
        }
        CqState::new(ClassicalJoint::new(regs, pmf)?, self.d_b.pow(n as u32), conditionals)
    }
}

/// Receiver selector for the three-receiver channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Receiver {
    B1,
    B2,
    B3,
}

impl Receiver {
    pub fn index(self) -> usize {
        match self {
            Receiver::B1 => 0,
            Receiver::B2 => 1,
            Receiver::B3 => 2,
        }
    }

    pub const ALL: [Receiver; 3] = [Receiver::B1, Receiver::B2, Receiver::B3];
}

/// A three-receiver cq broadcast channel `x -> rho_x^{B1 B2 B3}`.
#[derive(Clone, Debug)]
pub struct BroadcastChannel {
    pub input_size: usize,
    pub dims: [usize; 3],
    outputs: Vec<DensityMatrix>,
    marginals: Vec<[DensityMatrix; 3]>,
}

impl BroadcastChannel {
    pub fn new(input_size: usize, dims: [usize; 3], outputs: Vec<DensityMatrix>) -> Result<Self> {
        let d: usize = dims.iter().product();
        if outputs.len() != input_size {
            return Err(QbcError::BadInput {
                path: "outputs".into(),
                message: format!("expected {input_size} outputs, got {}", outputs.len()),
            });
        }
        let mut marginals = Vec::with_capacity(input_size);
        for (x, out) in outputs.iter().enumerate() {
            if out.dim() != d {
                return Err(QbcError::BadInput {
                    path: format!("outputs[{x}]"),
                    message: format!("dimension {} != {d}", out.dim()),
                });
            }
            let m1 = out.op.partial_trace(&dims, &[0])?;
            let m2 = out.op.partial_trace(&dims, &[1])?;
            let m3 = out.op.partial_trace(&dims, &[2])?;
            marginals.push([
                DensityMatrix::new_unchecked(m1),
                DensityMatrix::new_unchecked(m2),
                DensityMatrix::new_unchecked(m3),
            ]);
        }
        Ok(Self {
            input_size,
            dims,
            outputs,
            marginals,
        })
    }

    pub fn output(&self, x: usize) -> &DensityMatrix {
        &self.outputs[x]
    }

    pub fn output_marginal(&self, x: usize, receiver: Receiver) -> &DensityMatrix {
        &self.marginals[x][receiver.index()]
    }

    pub fn receiver_dim(&self, receiver: Receiver) -> usize {
        self.dims[receiver.index()]
    }

    /// Evaluation state for a theorem: classical registers from `dist`, the
    /// deterministic map `x_of` onto channel inputs, and the chosen
    /// receiver's output as the quantum side.
    pub fn cq_state(
        &self,
        dist: &ClassicalJoint,
        x_of: &[usize],
        receiver: Receiver,
    ) -> Result<CqState> {
        if x_of.len() != dist.total() {
            return Err(QbcError::BadInput {
                path: "x_of".into(),
                message: format!("expected {} entries, got {}", dist.total(), x_of.len()),
            });
        }
        for (i, &x) in x_of.iter().enumerate() {
            if x >= self.input_size {
                return Err(QbcError::BadInput {
                    path: format!("x_of[{i}]"),
                    message: format!("input symbol {x} out of range {}", self.input_size),
                });
            }
        }
        let conditionals: Vec<DensityMatrix> = x_of
            .iter()
            .map(|&x| self.output_marginal(x, receiver).clone())
            .collect();
        CqState::new(dist.clone(), self.receiver_dim(receiver), conditionals)
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

type ComplexPair = [f64; 2];

#[derive(Serialize, Deserialize)]
struct ChannelFile {
    input_size: usize,
    dims: [usize; 3],
    /// Per input symbol, a dense complex matrix as rows of [re, im] pairs.
    outputs: Vec<Vec<Vec<ComplexPair>>>,
}

#[derive(Serialize, Deserialize)]
struct DistFile {
    registers: Vec<RegFile>,
    pmf: Vec<f64>,
    /// Optional deterministic map from register tuples to channel inputs.
    #[serde(default)]
    x_of: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RegFile {
    name: String,
    size: usize,
}

/// Parse a broadcast channel from its JSON representation, validating PSD
/// and unit trace per output and reporting the offending entry path.
pub fn channel_from_json(text: &str) -> Result<BroadcastChannel> {
    let file: ChannelFile =
        serde_json::from_str(text).map_err(|e| QbcError::Parse(e.to_string()))?;
    let d: usize = file.dims.iter().product();
    let mut outputs = Vec::with_capacity(file.outputs.len());
    for (x, rows) in file.outputs.iter().enumerate() {
        if rows.len() != d {
            return Err(QbcError::BadInput {
                path: format!("outputs[{x}]"),
                message: format!("expected {d} rows, got {}", rows.len()),
            });
        }
        let mut m = CMat::zeros(d, d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(QbcError::BadInput {
                    path: format!("outputs[{x}][{i}]"),
                    message: format!("expected {d} entries, got {}", row.len()),
                });
            }
            for (j, &[re, im]) in row.iter().enumerate() {
                m[(i, j)] = C64::new(re, im);
            }
        }
        let op = HermitianOperator::new(m).map_err(|e| QbcError::BadInput {
            path: format!("outputs[{x}]"),
            message: e.to_string(),
        })?;
        let rho = DensityMatrix::new(op).map_err(|e| QbcError::BadInput {
            path: format!("outputs[{x}]"),
            message: e.to_string(),
        })?;
        outputs.push(rho);
    }
    BroadcastChannel::new(file.input_size, file.dims, outputs)
}

pub fn channel_to_json(channel: &BroadcastChannel) -> String {
    let outputs = (0..channel.input_size)
        .map(|x| {
            let m = channel.output(x).op.matrix();
            (0..m.nrows())
                .map(|i| {
                    (0..m.ncols())
                        .map(|j| [m[(i, j)].re, m[(i, j)].im])
                        .collect()
                })
                .collect()
        })
        .collect();
    serde_json::to_string_pretty(&ChannelFile {
        input_size: channel.input_size,
        dims: channel.dims,
        outputs,
    })
    .expect("serializable")
}

/// Parse a distribution (+ optional deterministic map) from JSON.
pub fn dist_from_json(text: &str) -> Result<(ClassicalJoint, Option<Vec<usize>>)> {
    let file: DistFile = serde_json::from_str(text).map_err(|e| QbcError::Parse(e.to_string()))?;
    let regs = file
        .registers
        .iter()
        .map(|r| ClassicalRegister::new(&r.name, r.size))
        .collect();
    let joint = ClassicalJoint::new(regs, file.pmf)?;
    if let Some(map) = &file.x_of {
        if map.len() != joint.total() {
            return Err(QbcError::BadInput {
                path: "x_of".into(),
                message: format!("expected {} entries, got {}", joint.total(), map.len()),
            });
        }
    }
    Ok((joint, file.x_of))
}

pub fn dist_to_json(joint: &ClassicalJoint, x_of: Option<&[usize]>) -> String {
    serde_json::to_string_pretty(&DistFile {
        registers: joint
            .registers
            .iter()
            .map(|r| RegFile {
                name: r.name.clone(),
                size: r.alphabet_size,
            })
            .collect(),
        pmf: joint.pmf.clone(),
        x_of: x_of.map(|m| m.to_vec()),
    })
    .expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Sampler;

    fn toy_state(seed: u64) -> CqState {
        let mut s = Sampler::new(seed);
        let joint = s.random_joint(&[("u", 2), ("v", 2)]);
        let conds = (0..4).map(|_| s.random_density(2)).collect();
        CqState::new(joint, 2, conds).unwrap()
    }

    #[test]
    fn embed_single_register_size_one() {
        let joint = ClassicalJoint::new(vec![ClassicalRegister::new("u", 1)], vec![1.0]).unwrap();
        let mut s = Sampler::new(4);
        let rho = s.random_density(3);
        let st = CqState::new(joint, 3, vec![rho.clone()]).unwrap();
        let emb = st.embed().unwrap();
        assert!(emb.sub(&rho.op).operator_norm() < 1e-12);
    }

    #[test]
    fn embed_classical_only_is_diagonal_pmf() {
        let mut s = Sampler::new(5);
        let joint = s.random_joint(&[("u", 3)]);
        let st = CqState::classical(joint.clone());
        let emb = st.embed().unwrap();
        for i in 0..3 {
            assert!((emb.entry(i, i).re - joint.pmf[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_spectrum_is_weighted_union() {
        let st = toy_state(6);
        let emb = st.embed().unwrap();
        let mut expected: Vec<f64> = Vec::new();
        for idx in 0..st.joint.total() {
            let p = st.joint.pmf[idx];
            for ev in st.conditional_by_index(idx).op.eigenvalues_raw() {
                expected.push(p * ev);
            }
        }
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let got = emb.eigenvalues_raw();
        for (g, e) in got.iter().zip(expected.iter()) {
            assert!((g - e).abs() < 1e-10);
        }
    }

    #[test]
    fn markov_break_all_registers_is_identity() {
        let st = toy_state(7);
        let broken = st.markov_break(&["u", "v"]).unwrap();
        for idx in 0..st.joint.total() {
            let d = broken
                .conditional_by_index(idx)
                .op
                .sub(&st.conditional_by_index(idx).op);
            assert!(d.operator_norm() < 1e-12);
        }
    }

    #[test]
    fn markov_break_none_gives_full_average() {
        let st = toy_state(8);
        let broken = st.markov_break(&[]).unwrap();
        let avg = st.quantum_marginal();
        for idx in 0..st.joint.total() {
            let d = broken.conditional_by_index(idx).op.sub(&avg.op);
            assert!(d.operator_norm() < 1e-12);
        }
    }

    #[test]
    fn markov_break_matches_brute_force_average() {
        let st = toy_state(9);
        let broken = st.markov_break(&["u"]).unwrap();
        for u in 0..2 {
            let pu: f64 = (0..2).map(|v| st.prob(&[u, v])).sum();
            let mut avg = HermitianOperator::zeros(2);
            for v in 0..2 {
                avg = avg.add(&st.conditional(&[u, v]).op.scale(st.prob(&[u, v]) / pu));
            }
            for v in 0..2 {
                let d = broken.conditional(&[u, v]).op.sub(&avg);
                assert!(d.operator_norm() < 1e-12);
            }
        }
    }

    #[test]
    fn markov_break_idempotent_and_class_constant() {
        let st = toy_state(10);
        let b1 = st.markov_break(&["v"]).unwrap();
        let b2 = b1.markov_break(&["v"]).unwrap();
        for idx in 0..st.joint.total() {
            assert!(
                b1.conditional_by_index(idx)
                    .op
                    .sub(&b2.conditional_by_index(idx).op)
                    .operator_norm()
                    < 1e-12
            );
        }
        // conditional depends only on the conditioning register
        for v in 0..2 {
            let d = b1.conditional(&[0, v]).op.sub(&b1.conditional(&[1, v]).op);
            assert!(d.operator_norm() < 1e-12);
        }
    }

    #[test]
    fn marginal_keeping_everything_is_identity() {
        let st = toy_state(11);
        let m = st.marginal(&["u", "v"], true).unwrap();
        for idx in 0..st.joint.total() {
            assert!((m.joint.pmf[idx] - st.joint.pmf[idx]).abs() < 1e-12);
            assert!(
                m.conditional_by_index(idx)
                    .op
                    .sub(&st.conditional_by_index(idx).op)
                    .operator_norm()
                    < 1e-12
            );
        }
    }

    #[test]
    fn tensor_power_one_is_identity() {
        let st = toy_state(12);
        let t = st.tensor_power(1).unwrap();
        assert_eq!(t.joint.total(), st.joint.total());
    }

    #[test]
    fn tensor_power_pmf_is_product() {
        let st = toy_state(13);
        let t = st.tensor_power(2).unwrap();
        for a in 0..st.joint.total() {
            for b in 0..st.joint.total() {
                let p = t.joint.pmf[a * st.joint.total() + b];
                assert!((p - st.joint.pmf[a] * st.joint.pmf[b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_square_embed_spectra_match() {
        let st = toy_state(14);
        let e1 = st.embed().unwrap();
        let e2 = st.tensor_power(2).unwrap().embed().unwrap();
        let kron = e1.kron(&e1);
        let mut a = e2.eigenvalues_raw();
        let mut b = kron.eigenvalues_raw();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn channel_json_round_trip_and_validation() {
        let mut s = Sampler::new(15);
        let ch = s.random_channel(2, [2, 2, 2]);
        let text = channel_to_json(&ch);
        let back = channel_from_json(&text).unwrap();
        assert_eq!(back.input_size, 2);
        for x in 0..2 {
            let d = back.output(x).op.sub(&ch.output(x).op);
            assert!(d.operator_norm() < 1e-9);
        }
        // corrupt the trace and expect a path-carrying error
        let bad = text.replace("\"input_size\": 2", "\"input_size\": 2").replacen("1.0", "1.5", 0);
        let _ = bad;
        let mut bad_file: serde_json::Value = serde_json::from_str(&text).unwrap();
        bad_file["outputs"][0][0][0] = serde_json::json!([5.0, 0.0]);
        let err = channel_from_json(&bad_file.to_string()).unwrap_err();
        assert!(err.to_string().contains("outputs[0]"), "{err}");
    }

    #[test]
    fn channel_cq_state_uses_receiver_marginal() {
        let mut s = Sampler::new(16);
        let ch = s.random_channel(2, [2, 2, 2]);
        let dist = s.random_joint(&[("u", 2)]);
        let x_of = vec![0, 1];
        let st = ch.cq_state(&dist, &x_of, Receiver::B2).unwrap();
        for u in 0..2 {
            let d = st
                .conditional(&[u])
                .op
                .sub(&ch.output_marginal(x_of[u], Receiver::B2).op);
            assert!(d.operator_norm() < 1e-12);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CqStateFile {
    registers: Vec<RegFile>,
    pmf: Vec<f64>,
    d_b: usize,
    /// One dense complex matrix per classical tuple, rows of [re, im] pairs.
    conditionals: Vec<Vec<Vec<ComplexPair>>>,
}

/// Parse a cq-state from JSON, validating each conditional density matrix.
pub fn cq_from_json(text: &str) -> Result<CqState> {
    let file: CqStateFile =
        serde_json::from_str(text).map_err(|e| QbcError::Parse(e.to_string()))?;
    let regs = file
        .registers
        .iter()
        .map(|r| ClassicalRegister::new(&r.name, r.size))
        .collect();
    let joint = ClassicalJoint::new(regs, file.pmf)?;
    let mut conds = Vec::with_capacity(file.conditionals.len());
    for (t, rows) in file.conditionals.iter().enumerate() {
        let d = file.d_b;
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(QbcError::BadInput {
                path: format!("conditionals[{t}]"),
                message: format!("expected a {d}x{d} matrix"),
            });
        }
        let mut m = CMat::zeros(d, d);
        for (i, row) in rows.iter().enumerate() {
            for (j, &[re, im]) in row.iter().enumerate() {
                m[(i, j)] = C64::new(re, im);
            }
        }
        let op = HermitianOperator::new(m).map_err(|e| QbcError::BadInput {
            path: format!("conditionals[{t}]"),
            message: e.to_string(),
        })?;
        conds.push(DensityMatrix::new(op).map_err(|e| QbcError::BadInput {
            path: format!("conditionals[{t}]"),
            message: e.to_string(),
        })?);
    }
    CqState::new(joint, file.d_b, conds)
}

pub fn cq_to_json(state: &CqState) -> String {
    let conditionals = (0..state.joint.total())
        .map(|idx| {
            let m = state.conditional_by_index(idx).op.matrix();
            (0..m.nrows())
                .map(|i| {
                    (0..m.ncols())
                        .map(|j| [m[(i, j)].re, m[(i, j)].im])
                        .collect()
                })
                .collect()
        })
        .collect();
    serde_json::to_string_pretty(&CqStateFile {
        registers: state
            .registers()
            .iter()
            .map(|r| RegFile {
                name: r.name.clone(),
                size: r.alphabet_size,
            })
            .collect(),
        pmf: state.joint.pmf.clone(),
        d_b: state.d_b,
        conditionals,
    })
    .expect("serializable")
}
