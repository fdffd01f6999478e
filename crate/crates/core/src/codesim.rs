//! One-shot random-coding simulator: superposition/binning codebooks, the
//! square-root-measurement decoders built from nested pinched threshold
//! projectors (with non-unique decoding), exact average error, and the
//! analytic error-exponent bounds they are compared against.
//!
//! All operators are defined with respect to the code-sampling distribution
//! (conditionally independent satellite layers); binning scenarios emulate
//! the target coupling through the encoder's in-bin pair selection, whose
//! failure rate is reported separately.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cqstate::{BroadcastChannel, ClassicalJoint, CqState, Receiver};
use crate::divergence::{q_petz, q_sandwiched};
use crate::error::{QbcError, Result};
use crate::hermitian::{positive_part_projector, DensityMatrix, HermitianOperator};
use crate::pinching::{NestedPinchingFamily, PinchScenario};
use crate::sampling::Sampler;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    MartonCommon,
    Multilevel2Deg,
    General2Deg,
    General3Deg,
}

impl Scenario {
    pub fn rate_names(self) -> &'static [&'static str] {
        match self {
            Scenario::MartonCommon => &["R0", "S11", "S12", "S21", "S22", "r1", "r2"],
            Scenario::Multilevel2Deg => &["R0", "S1", "S2"],
            Scenario::General2Deg => &["R0", "S0", "S1", "S2", "S3", "r1", "r2"],
            Scenario::General3Deg => {
                &["R0", "R10", "R11", "S0", "S1", "S2", "S3", "r1", "r2"]
            }
        }
    }

    pub fn registers(self) -> &'static [&'static str] {
        match self {
            Scenario::MartonCommon => &["u0", "u1", "u2"],
            Scenario::Multilevel2Deg => &["u", "v", "x"],
            Scenario::General2Deg | Scenario::General3Deg => &["u", "v2", "v3", "x"],
        }
    }
}

/// Requested rates (log2 codebook sizes); realized sizes round up.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodebookSpec {
    pub scenario: Scenario,
    pub rates: BTreeMap<String, f64>,
    /// Encoder selection threshold on the likelihood-ratio score.
    pub theta: f64,
    pub seed: u64,
}

impl CodebookSpec {
    pub fn realized_size(&self, name: &str) -> usize {
        let r = self.rates.get(name).copied().unwrap_or(0.0);
        (2f64.powf(r).ceil() as usize).max(1)
    }

    pub fn realized_log2(&self, name: &str) -> f64 {
        (self.realized_size(name) as f64).log2()
    }

    fn validate(&self) -> Result<()> {
        for name in self.scenario.rate_names() {
            let r = self.rates.get(*name).copied().unwrap_or(0.0);
            if r < 0.0 {
                return Err(QbcError::BadRequest(format!("rate {name} is negative")));
            }
        }
        Ok(())
    }
}

/// A channel + target distribution instance a code is built against.
#[derive(Clone)]
pub struct SimInstance {
    pub scenario: Scenario,
    pub channel: BroadcastChannel,
    /// Target joint over the scenario's registers.
    pub dist: ClassicalJoint,
    /// Deterministic map from register tuples to channel inputs.
    pub x_of: Vec<usize>,
}

impl SimInstance {
    pub fn new(
        scenario: Scenario,
        channel: BroadcastChannel,
        dist: ClassicalJoint,
        x_of: Vec<usize>,
    ) -> Result<Self> {
        for r in scenario.registers() {
            dist.register_pos(r)?;
        }
        if x_of.len() != dist.total() {
            return Err(QbcError::BadRequest(format!(
                "x map has {} entries for {} tuples",
                x_of.len(),
                dist.total()
            )));
        }
        Ok(Self {
            scenario,
            channel,
            dist,
            x_of,
        })
    }

    fn reg_size(&self, name: &str) -> usize {
        self.dist.registers[self.dist.register_pos(name).unwrap()].alphabet_size
    }

    /// The code-sampling joint: satellite layers conditionally independent
    /// given their parent, with the x layer following the target conditional.
    pub fn code_dist(&self) -> Result<ClassicalJoint> {
        match self.scenario {
            Scenario::Multilevel2Deg => Ok(self.dist.clone()),
            Scenario::MartonCommon => {
                let p_u0 = self.dist.marginal(&["u0"])?;
                let p_01 = self.dist.marginal(&["u0", "u1"])?;
                let p_02 = self.dist.marginal(&["u0", "u2"])?;
                let (d0, d1, d2) = (
                    self.reg_size("u0"),
                    self.reg_size("u1"),
                    self.reg_size("u2"),
                );
                let mut pmf = vec![0.0; d0 * d1 * d2];
                for a in 0..d0 {
                    for b in 0..d1 {
                        for c in 0..d2 {
                            if p_u0.pmf[a] > 0.0 {
                                pmf[(a * d1 + b) * d2 + c] = p_01.pmf[p_01.index_of(&[a, b])]
                                    * p_02.pmf[p_02.index_of(&[a, c])]
                                    / p_u0.pmf[a];
                            }
                        }
                    }
                }
                ClassicalJoint::new(self.dist.registers.clone(), pmf)
            }
            Scenario::General2Deg | Scenario::General3Deg => {
                let p_u = self.dist.marginal(&["u"])?;
                let p_u2 = self.dist.marginal(&["u", "v2"])?;
                let p_u3 = self.dist.marginal(&["u", "v3"])?;
                let p_23x = self.dist.marginal(&["v2", "v3", "x"])?;
                let p_23 = self.dist.marginal(&["v2", "v3"])?;
                let (du, d2, d3, dx) = (
                    self.reg_size("u"),
                    self.reg_size("v2"),
                    self.reg_size("v3"),
                    self.reg_size("x"),
                );
                let mut pmf = vec![0.0; du * d2 * d3 * dx];
                for u in 0..du {
                    for a in 0..d2 {
                        for b in 0..d3 {
                            for x in 0..dx {
                                let p23 = p_23.pmf[p_23.index_of(&[a, b])];
                                // x | (v2, v3): uniform fallback on pairs the
                                // target never produces
                                let px = if p23 > 0.0 {
                                    p_23x.pmf[p_23x.index_of(&[a, b, x])] / p23
                                } else {
                                    1.0 / dx as f64
                                };
                                if p_u.pmf[u] > 0.0 {
                                    pmf[((u * d2 + a) * d3 + b) * dx + x] = p_u2.pmf
                                        [p_u2.index_of(&[u, a])]
                                        * p_u3.pmf[p_u3.index_of(&[u, b])]
                                        / p_u.pmf[u]
                                        * px;
                                }
                            }
                        }
                    }
                }
                ClassicalJoint::new(self.dist.registers.clone(), pmf)
            }
        }
    }

    fn x_of_tuple(&self, tuple: &[usize]) -> usize {
        self.x_of[self.dist.index_of(tuple)]
    }
}

/// Realized random codewords with superposition/binning index structure and
/// the encoder's in-bin pair selection.
#[derive(Clone, Debug)]
pub struct Codebook {
    pub scenario: Scenario,
    pub sizes: BTreeMap<String, usize>,
    /// Layer symbol tables keyed by layer name; indices are row-major over
    /// the layer's index structure.
    pub layers: BTreeMap<String, Vec<usize>>,
    /// Selected (k1, k2) per product bin, row-major over bin indices.
    pub selection: Vec<(usize, usize)>,
    /// Bins whose best pair scored below the threshold.
    pub encoder_failures: Vec<bool>,
    pub theta: f64,
}

impl Codebook {
    pub fn failure_fraction(&self) -> f64 {
        if self.encoder_failures.is_empty() {
            0.0
        } else {
            self.encoder_failures.iter().filter(|f| **f).count() as f64
                / self.encoder_failures.len() as f64
        }
    }
}

fn sample_from(pmf: &[f64], s: &mut Sampler) -> usize {
    let u = s.uniform(0.0, 1.0);
    let mut acc = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pmf.len() - 1
}

/// Sample the codebook layers for the scenario; bins are equal-sized by
/// construction and everything is deterministic given the seed.
pub fn generate_codebook(instance: &SimInstance, spec: &CodebookSpec) -> Result<Codebook> {
    spec.validate()?;
    let mut s = Sampler::new(spec.seed);
    let code = instance.code_dist()?;
    let mut sizes = BTreeMap::new();
    for name in spec.scenario.rate_names() {
        sizes.insert(name.to_string(), spec.realized_size(name));
    }
    let szs = sizes.clone();
    let n = move |k: &str| szs[k];
    let mut layers: BTreeMap<String, Vec<usize>> = BTreeMap::new();

    match spec.scenario {
        Scenario::Multilevel2Deg => {
            let p_u = code.marginal(&["u"])?;
            let p_uv = code.marginal(&["u", "v"])?;
            let p_vx = code.marginal(&["v", "x"])?;
            let p_v = code.marginal(&["v"])?;
            let (du, dv, dx) = (
                instance.reg_size("u"),
                instance.reg_size("v"),
                instance.reg_size("x"),
            );
            let cond = |joint: &ClassicalJoint, marg: &[f64], a: usize, db: usize| -> Vec<f64> {
                (0..db)
                    .map(|b| {
                        if marg[a] > 0.0 {
                            joint.pmf[joint.index_of(&[a, b])] / marg[a]
                        } else {
                            1.0 / db as f64
                        }
                    })
                    .collect()
            };
            let mut u_layer = Vec::new();
            let mut v_layer = Vec::new();
            let mut x_layer = Vec::new();
            for _m0 in 0..n("R0") {
                let u = sample_from(&p_u.pmf, &mut s);
                u_layer.push(u);
                for _s1 in 0..n("S1") {
                    let v = sample_from(&cond(&p_uv, &p_u.pmf, u, dv), &mut s);
                    v_layer.push(v);
                    for _s2 in 0..n("S2") {
                        let x = sample_from(&cond(&p_vx, &p_v.pmf, v, dx), &mut s);
                        x_layer.push(x);
                    }
                }
            }
            let _ = (du, dx);
            layers.insert("u".into(), u_layer);
            layers.insert("v".into(), v_layer);
            layers.insert("x".into(), x_layer);
            Ok(Codebook {
                scenario: spec.scenario,
                sizes,
                layers,
                selection: Vec::new(),
                encoder_failures: Vec::new(),
                theta: spec.theta,
            })
        }
        Scenario::MartonCommon => {
            let p_u0 = code.marginal(&["u0"])?;
            let p_01 = code.marginal(&["u0", "u1"])?;
            let p_02 = code.marginal(&["u0", "u2"])?;
            let (d1, d2) = (instance.reg_size("u1"), instance.reg_size("u2"));
            let n_u0 = n("R0") * n("S11") * n("S21");
            let mut u0_layer = Vec::with_capacity(n_u0);
            let mut u1_layer = Vec::new();
            let mut u2_layer = Vec::new();
            for _ in 0..n_u0 {
                let a = sample_from(&p_u0.pmf, &mut s);
                u0_layer.push(a);
                let c1: Vec<f64> = (0..d1)
                    .map(|b| {
                        if p_u0.pmf[a] > 0.0 {
                            p_01.pmf[p_01.index_of(&[a, b])] / p_u0.pmf[a]
                        } else {
                            1.0 / d1 as f64
                        }
                    })
                    .collect();
                let c2: Vec<f64> = (0..d2)
                    .map(|b| {
                        if p_u0.pmf[a] > 0.0 {
                            p_02.pmf[p_02.index_of(&[a, b])] / p_u0.pmf[a]
                        } else {
                            1.0 / d2 as f64
                        }
                    })
                    .collect();
                for _ in 0..n("S12") * n("r1") {
                    u1_layer.push(sample_from(&c1, &mut s));
                }
                for _ in 0..n("S22") * n("r2") {
                    u2_layer.push(sample_from(&c2, &mut s));
                }
            }
            layers.insert("u0".into(), u0_layer);
            layers.insert("u1".into(), u1_layer);
            layers.insert("u2".into(), u2_layer);
            let mut cb = Codebook {
                scenario: spec.scenario,
                sizes,
                layers,
                selection: Vec::new(),
                encoder_failures: Vec::new(),
                theta: spec.theta,
            };
            encoder_select(instance, &mut cb)?;
            Ok(cb)
        }
        Scenario::General2Deg | Scenario::General3Deg => {
            let p_u = code.marginal(&["u"])?;
            let p_u2 = code.marginal(&["u", "v2"])?;
            let p_u3 = code.marginal(&["u", "v3"])?;
            let p_23x = code.marginal(&["v2", "v3", "x"])?;
            let p_23 = code.marginal(&["v2", "v3"])?;
            let (d2, d3, dx) = (
                instance.reg_size("v2"),
                instance.reg_size("v3"),
                instance.reg_size("x"),
            );
            let n_u = if spec.scenario == Scenario::General2Deg {
                n("R0") * n("S0")
            } else {
                n("R0") * n("R10") * n("S0")
            };
            let v2_per_u = if spec.scenario == Scenario::General2Deg {
                n("S2") * n("r1")
            } else {
                n("R11") * n("S2") * n("r1")
            };
            let v3_per_u = n("S3") * n("r2");
            let mut u_layer = Vec::with_capacity(n_u);
            let mut v2_layer = Vec::new();
            let mut v3_layer = Vec::new();
            for _ in 0..n_u {
                let u = sample_from(&p_u.pmf, &mut s);
                u_layer.push(u);
                let c2: Vec<f64> = (0..d2)
                    .map(|b| {
                        if p_u.pmf[u] > 0.0 {
                            p_u2.pmf[p_u2.index_of(&[u, b])] / p_u.pmf[u]
                        } else {
                            1.0 / d2 as f64
                        }
                    })
                    .collect();
                let c3: Vec<f64> = (0..d3)
                    .map(|b| {
                        if p_u.pmf[u] > 0.0 {
                            p_u3.pmf[p_u3.index_of(&[u, b])] / p_u.pmf[u]
                        } else {
                            1.0 / d3 as f64
                        }
                    })
                    .collect();
                for _ in 0..v2_per_u {
                    v2_layer.push(sample_from(&c2, &mut s));
                }
                for _ in 0..v3_per_u {
                    v3_layer.push(sample_from(&c3, &mut s));
                }
            }
            layers.insert("u".into(), u_layer);
            layers.insert("v2".into(), v2_layer);
            layers.insert("v3".into(), v3_layer);
            let mut cb = Codebook {
                scenario: spec.scenario,
                sizes,
                layers,
                selection: Vec::new(),
                encoder_failures: Vec::new(),
                theta: spec.theta,
            };
            encoder_select(instance, &mut cb)?;
            // x layer: one codeword per (bin x s1), sampled conditionally on
            // the selected pair
            let mut x_layer = Vec::new();
            let nbins = cb.selection.len();
            let bins_per_u = nbins / n_u;
            for bin in 0..nbins {
                let ui = bin / bins_per_u;
                let (k1, k2) = cb.selection[bin];
                let within_u = bin % bins_per_u;
                // bins are (v2-bin, v3-bin) pairs row-major
                let v3_bins = n("S3");
                let b2 = within_u / v3_bins;
                let b3 = within_u % v3_bins;
                let v2 = cb.layers["v2"][ui * v2_per_u + b2 * n("r1") + k1];
                let v3 = cb.layers["v3"][ui * v3_per_u + b3 * n("r2") + k2];
                let cx: Vec<f64> = (0..dx)
                    .map(|x| {
                        let pj = p_23.pmf[p_23.index_of(&[v2, v3])];
                        if pj > 0.0 {
                            p_23x.pmf[p_23x.index_of(&[v2, v3, x])] / pj
                        } else {
                            1.0 / dx as f64
                        }
                    })
                    .collect();
                for _s1 in 0..n("S1") {
                    x_layer.push(sample_from(&cx, &mut s));
                }
            }
            cb.layers.insert("x".into(), x_layer);
            Ok(cb)
        }
    }
}

/// Select, per product bin, the in-bin pair maximizing the likelihood ratio
/// `p(a, b | u) / (p(a | u) p(b | u))`; bins whose best score falls below
/// `theta` are flagged as encoder failures.
pub fn encoder_select(instance: &SimInstance, cb: &mut Codebook) -> Result<()> {
    let target = &instance.dist;
    let (pair_names, parent): (&[&str; 2], &str) = match instance.scenario {
        Scenario::MartonCommon => (&["u1", "u2"], "u0"),
        Scenario::General2Deg | Scenario::General3Deg => (&["v2", "v3"], "u"),
        Scenario::Multilevel2Deg => return Ok(()),
    };
    let p_parent = target.marginal(&[parent])?;
    let p_a = target.marginal(&[parent, pair_names[0]])?;
    let p_b = target.marginal(&[parent, pair_names[1]])?;
    let p_ab = target.marginal(&[parent, pair_names[0], pair_names[1]])?;
    let score = |u: usize, a: usize, b: usize| -> f64 {
        let pu = p_parent.pmf[u];
        if pu <= 0.0 {
            return 1.0;
        }
        let pa = p_a.pmf[p_a.index_of(&[u, a])] / pu;
        let pb = p_b.pmf[p_b.index_of(&[u, b])] / pu;
        let pab = p_ab.pmf[p_ab.index_of(&[u, a, b])] / pu;
        if pa > 0.0 && pb > 0.0 {
            pab / (pa * pb)
        } else {
            0.0
        }
    };

    let n = |k: &str| cb.sizes[k];
    let (n_u, a_bins, b_bins, ka, kb, a_layer, b_layer) = match instance.scenario {
        Scenario::MartonCommon => (
            n("R0") * n("S11") * n("S21"),
            n("S12"),
            n("S22"),
            n("r1"),
            n("r2"),
            "u1",
            "u2",
        ),
        Scenario::General2Deg => (
            n("R0") * n("S0"),
            n("S2"),
            n("S3"),
            n("r1"),
            n("r2"),
            "v2",
            "v3",
        ),
        Scenario::General3Deg => (
            n("R0") * n("R10") * n("S0"),
            n("R11") * n("S2"),
            n("S3"),
            n("r1"),
            n("r2"),
            "v2",
            "v3",
        ),
        Scenario::Multilevel2Deg => unreachable!(),
    };
    let parent_layer = match instance.scenario {
        Scenario::MartonCommon => "u0",
        _ => "u",
    };
    let a_per_u = a_bins * ka;
    let b_per_u = b_bins * kb;
    let mut selection = Vec::with_capacity(n_u * a_bins * b_bins);
    let mut failures = Vec::with_capacity(n_u * a_bins * b_bins);
    for ui in 0..n_u {
        let u = cb.layers[parent_layer][ui];
        for ba in 0..a_bins {
            for bb in 0..b_bins {
                let mut best = (0usize, 0usize);
                let mut best_score = f64::NEG_INFINITY;
                for k1 in 0..ka {
                    let a = cb.layers[a_layer][ui * a_per_u + ba * ka + k1];
                    for k2 in 0..kb {
                        let b = cb.layers[b_layer][ui * b_per_u + bb * kb + k2];
                        let sc = score(u, a, b);
                        if sc > best_score {
                            best_score = sc;
                            best = (k1, k2);
                        }
                    }
                }
                selection.push(best);
                failures.push(best_score < cb.theta);
            }
        }
    }
    cb.selection = selection;
    cb.encoder_failures = failures;
    Ok(())
}

// ---------------------------------------------------------------------------
// Decoder POVMs
// ---------------------------------------------------------------------------

/// A receiver's square-root-measurement POVM: one positive operator per
/// decodable message tuple plus the residual off the measurement's support.
#[derive(Clone, Debug)]
pub struct DecoderPOVM {
    pub receiver: Receiver,
    pub message_keys: Vec<Vec<usize>>,
    pub operators: Vec<HermitianOperator>,
    pub residual: HermitianOperator,
    /// The pre-measurement positive operators (non-unique sums of projector
    /// products), for the error-chain checks.
    pub raw_ops: Vec<HermitianOperator>,
}

impl DecoderPOVM {
    /// Minimum eigenvalue of the residual; `>= -1e-9` certifies
    /// sub-completeness of the square-root measurement.
    pub fn completeness_margin(&self) -> f64 {
        self.residual.min_eigenvalue()
    }
}

fn square_root_measurement(
    receiver: Receiver,
    keys: Vec<Vec<usize>>,
    raw_ops: Vec<HermitianOperator>,
    tol: f64,
) -> DecoderPOVM {
    let dim = raw_ops[0].dim();
    let mut total = HermitianOperator::zeros(dim);
    for op in &raw_ops {
        total = total.add(op);
    }
    let inv_sqrt = total.matrix_power(-0.5, tol).op;
    let operators: Vec<HermitianOperator> = raw_ops
        .iter()
        .map(|op| {
            HermitianOperator::new_unchecked(
                inv_sqrt.matrix() * op.matrix() * inv_sqrt.matrix(),
            )
        })
        .collect();
    let mut sum = HermitianOperator::zeros(dim);
    for op in &operators {
        sum = sum.add(op);
    }
    let residual = HermitianOperator::identity(dim).sub(&sum);
    DecoderPOVM {
        receiver,
        message_keys: keys,
        operators,
        residual,
        raw_ops,
    }
}

/// Shared per-instance operator context: nested pinching families per
/// receiver and memoized threshold-projector slices.
pub struct SimContext {
    pub instance: SimInstance,
    code_dist: ClassicalJoint,
    tol: f64,
    families: [NestedPinchingFamily; 3],
    slices: Mutex<HashMap<(u8, Vec<usize>, u64), HermitianOperator>>,
}

impl SimContext {
    pub fn new(instance: SimInstance, tol: f64) -> Result<Self> {
        let code_dist = instance.code_dist()?;
        let scenario = instance.scenario;
        let make_state = |receiver: Receiver, regs: &[&str]| -> Result<CqState> {
            let full = instance
                .channel
                .cq_state(&code_dist, &instance.x_of, receiver)?;
            full.marginal(regs, true)
        };
        let families = match scenario {
            Scenario::Multilevel2Deg => [
                NestedPinchingFamily::build(
                    &make_state(Receiver::B1, &["u", "v", "x"])?,
                    PinchScenario::Multilevel,
                    tol,
                )?,
                NestedPinchingFamily::build(
                    &make_state(Receiver::B2, &["u"])?,
                    PinchScenario::Marton,
                    tol,
                )?,
                NestedPinchingFamily::build(
                    &make_state(Receiver::B3, &["v"])?,
                    PinchScenario::Marton,
                    tol,
                )?,
            ],
            Scenario::MartonCommon => [
                NestedPinchingFamily::build(
                    &make_state(Receiver::B1, &["u0", "u1"])?,
                    PinchScenario::Marton,
                    tol,
                )?,
                NestedPinchingFamily::build(
                    &make_state(Receiver::B2, &["u0", "u2"])?,
                    PinchScenario::Marton,
                    tol,
                )?,
                NestedPinchingFamily::build(
                    &make_state(Receiver::B3, &["u0"])?,
                    PinchScenario::Marton,
                    tol,
                )?,
            ],
            Scenario::General2Deg | Scenario::General3Deg => [
                NestedPinchingFamily::build(
                    &make_state(Receiver::B1, &["u", "v2", "v3", "x"])?,
                    PinchScenario::GeneralTwo,
                    tol,
                )?,
                NestedPinchingFamily::build(
                    &make_state(Receiver::B2, &["u", "v2"])?,
                    PinchScenario::Marton,
                    tol,
                )?,
                NestedPinchingFamily::build(
                    &make_state(Receiver::B3, &["u", "v3"])?,
                    PinchScenario::Marton,
                    tol,
                )?,
            ],
        };
        Ok(Self {
            instance,
            code_dist,
            tol,
            families,
            slices: Mutex::new(HashMap::new()),
        })
    }

    pub fn family(&self, receiver: Receiver) -> &NestedPinchingFamily {
        &self.families[receiver.index()]
    }

    /// Average receiver state over the code distribution given fixed values
    /// of the named registers.
    fn averaged(&self, receiver: Receiver, names: &[&str], vals: &[usize]) -> DensityMatrix {
        let joint = &self.code_dist;
        let pos: Vec<usize> = names
            .iter()
            .map(|n| joint.register_pos(n).expect("register"))
            .collect();
        let d = self.instance.channel.receiver_dim(receiver);
        let mut w = 0.0;
        let mut acc = HermitianOperator::zeros(d);
        for idx in 0..joint.total() {
            let t = joint.tuple_of(idx);
            if pos.iter().zip(vals.iter()).all(|(&p, &v)| t[p] == v) {
                let x = self.instance.x_of[idx];
                w += joint.pmf[idx];
                acc = acc.add(
                    &self
                        .instance
                        .channel
                        .output_marginal(x, receiver)
                        .op
                        .scale(joint.pmf[idx]),
                );
            }
        }
        if w > 0.0 {
            DensityMatrix::new_unchecked(acc.scale(1.0 / w))
        } else {
            DensityMatrix::maximally_mixed(d)
        }
    }

    fn memo_slice(
        &self,
        kind: u8,
        key: &[usize],
        threshold_bits: u64,
        build: impl FnOnce() -> HermitianOperator,
    ) -> HermitianOperator {
        if let Some(m) = self
            .slices
            .lock()
            .expect("slice memo")
            .get(&(kind, key.to_vec(), threshold_bits))
        {
            return m.clone();
        }
        let op = build();
        self.slices
            .lock()
            .expect("slice memo")
            .entry((kind, key.to_vec(), threshold_bits))
            .or_insert(op)
            .clone()
    }

    /// `{ E_map(lhs_state) >= m * rhs }` computed inside one classical block.
    fn threshold_slice(
        &self,
        kind: u8,
        key: &[usize],
        m: f64,
        lhs: &HermitianOperator,
        rhs: &HermitianOperator,
        pinch_with: &crate::pinching::PinchingMap,
    ) -> HermitianOperator {
        self.memo_slice(kind, key, m.to_bits(), || {
            let pinched = pinch_with.pinch(lhs).expect("dims");
            positive_part_projector(&pinched, &rhs.scale(m), self.tol).expect("dims")
        })
    }
}

/// Identification of the POVM builder's per-scenario slice kinds.
mod slice_kind {
    pub const LEVEL0: u8 = 0;
    pub const LEVEL1: u8 = 1;
    pub const LEVEL2: u8 = 2;
    pub const FORK2: u8 = 3;
    pub const FORK3: u8 = 4;
    pub const FORK23: u8 = 5;
}

/// Build the receiver's POVM for a realized codebook. Non-unique sums are
/// accumulated in canonical symbol order so that relabeling in-bin indices
/// reproduces bit-identical operators.
pub fn build_receiver_povm(
    ctx: &SimContext,
    cb: &Codebook,
    receiver: Receiver,
) -> Result<DecoderPOVM> {
    let n = |k: &str| cb.sizes[k];
    let tol = ctx.tol;
    match (ctx.instance.scenario, receiver) {
        (Scenario::Multilevel2Deg, Receiver::B1) => {
            let fam = ctx.family(Receiver::B1);
            let mut keys = Vec::new();
            let mut ops = Vec::new();
            let m2 = n("S2") as f64;
            let m1 = (n("S1") * n("S2")) as f64;
            let m0 = (n("R0") * n("S1") * n("S2")) as f64;
            let rho_b = ctx.averaged(Receiver::B1, &[], &[]);
            for m0i in 0..n("R0") {
                let u = cb.layers["u"][m0i];
                for s1 in 0..n("S1") {
                    let v = cb.layers["v"][m0i * n("S1") + s1];
                    for s2 in 0..n("S2") {
                        let x = cb.layers["x"][(m0i * n("S1") + s1) * n("S2") + s2];
                        let rho_x = ctx.averaged(Receiver::B1, &["x"], &[x]);
                        let rho_v = ctx.averaged(Receiver::B1, &["v"], &[v]);
                        let rho_u = ctx.averaged(Receiver::B1, &["u"], &[u]);
                        let e1 = fam.level1(u);
                        let e2 = fam.level2(u, v);
                        let t2 = ctx.threshold_slice(
                            slice_kind::LEVEL2,
                            &[u, v, x],
                            m2,
                            &rho_x.op,
                            &e1.pinch(&rho_v.op)?,
                            &e2,
                        );
                        let t1 = ctx.threshold_slice(
                            slice_kind::LEVEL1,
                            &[u, x],
                            m1,
                            &rho_x.op,
                            &fam.level0().pinch(&rho_u.op)?,
                            &e1,
                        );
                        let t0 = ctx.threshold_slice(
                            slice_kind::LEVEL0,
                            &[x],
                            m0,
                            &rho_x.op,
                            &rho_b.op,
                            &fam.level0(),
                        );
                        let g = t0.matrix() * t1.matrix() * t2.matrix();
                        ops.push(HermitianOperator::new_unchecked(&g * g.adjoint()));
                        keys.push(vec![m0i, s1, s2]);
                    }
                }
            }
            Ok(square_root_measurement(receiver, keys, ops, tol))
        }
        (Scenario::Multilevel2Deg, Receiver::B2) => {
            let fam = ctx.family(Receiver::B2);
            let m = n("R0") as f64;
            let rho_b = ctx.averaged(Receiver::B2, &[], &[]);
            let mut keys = Vec::new();
            let mut ops = Vec::new();
            for m0i in 0..n("R0") {
                let u = cb.layers["u"][m0i];
                let rho_u = ctx.averaged(Receiver::B2, &["u"], &[u]);
                let o = ctx.threshold_slice(
                    slice_kind::LEVEL0,
                    &[u],
                    m,
                    &rho_u.op,
                    &rho_b.op,
                    &fam.level0(),
                );
                keys.push(vec![m0i]);
                ops.push(o);
            }
            Ok(square_root_measurement(receiver, keys, ops, tol))
        }
        (Scenario::Multilevel2Deg, Receiver::B3) => {
            let fam = ctx.family(Receiver::B3);
            let m = (n("R0") * n("S1")) as f64;
            let rho_b = ctx.averaged(Receiver::B3, &[], &[]);
            let mut keys = Vec::new();
            let mut ops = Vec::new();
            for m0i in 0..n("R0") {
                // non-unique over s1: sum the slices in canonical symbol order
                let mut vs: Vec<usize> =
                    (0..n("S1")).map(|s1| cb.layers["v"][m0i * n("S1") + s1]).collect();
                vs.sort_unstable();
                let mut acc = HermitianOperator::zeros(ctx.instance.channel.receiver_dim(receiver));
                for v in vs {
                    let rho_v = ctx.averaged(Receiver::B3, &["v"], &[v]);
                    let upsilon = ctx.threshold_slice(
                        slice_kind::LEVEL0,
                        &[v],
                        m,
                        &rho_v.op,
                        &rho_b.op,
                        &fam.level0(),
                    );
                    acc = acc.add(&upsilon);
                }
                keys.push(vec![m0i]);
                ops.push(acc);
            }
            Ok(square_root_measurement(receiver, keys, ops, tol))
        }
        (Scenario::MartonCommon, r @ (Receiver::B1 | Receiver::B2)) => {
            let fam = ctx.family(r);
            let (sat, bins, k_name, sat_rate, bin_excess) = if r == Receiver::B1 {
                ("u1", n("S12"), n("r1"), "S12", "r1")
            } else {
                ("u2", n("S22"), n("r2"), "S22", "r2")
            };
            let _ = (sat_rate, bin_excess);
            let n_u0 = n("R0") * n("S11") * n("S21");
            let m1 = (bins * k_name) as f64;
            let m0 = (n_u0 * bins * k_name) as f64;
            let rho_b = ctx.averaged(r, &[], &[]);
            let mut keys = Vec::new();
            let mut ops = Vec::new();
            for u0i in 0..n_u0 {
                let u0 = cb.layers["u0"][u0i];
                let e1 = fam.level1(u0);
                let rho_u0 = ctx.averaged(r, &[if r == Receiver::B1 { "u0" } else { "u0" }], &[u0]);
                let e0_rho_u0 = fam.level0().pinch(&rho_u0.op)?;
                for b in 0..bins {
                    // non-unique over the in-bin index: canonical symbol order
                    let mut syms: Vec<usize> = (0..k_name)
                        .map(|k| cb.layers[sat][u0i * bins * k_name + b * k_name + k])
                        .collect();
                    syms.sort_unstable();
                    let mut acc =
                        HermitianOperator::zeros(ctx.instance.channel.receiver_dim(r));
                    for sym in syms {
                        let rho_pair = ctx.averaged(r, &["u0", sat], &[u0, sym]);
                        let pi1 = ctx.threshold_slice(
                            slice_kind::LEVEL1,
                            &[u0, sym],
                            m1,
                            &rho_pair.op,
                            &e0_rho_u0,
                            &e1,
                        );
                        let pi0 = ctx.threshold_slice(
                            slice_kind::LEVEL0,
                            &[u0, sym],
                            m0,
                            &rho_pair.op,
                            &rho_b.op,
                            &fam.level0(),
                        );
                        let g = pi1.matrix() * pi0.matrix();
                        acc = acc.add(&HermitianOperator::new_unchecked(&g * g.adjoint()));
                    }
                    keys.push(vec![u0i, b]);
                    ops.push(acc);
                }
            }
            Ok(square_root_measurement(r, keys, ops, tol))
        }
        (Scenario::MartonCommon, Receiver::B3) => Err(QbcError::BadRequest(
            "the two-receiver scenario has no third receiver".into(),
        )),
        (Scenario::General2Deg | Scenario::General3Deg, Receiver::B1) => {
            let fam = ctx.family(Receiver::B1);
            let g3 = ctx.instance.scenario == Scenario::General3Deg;
            let n_u = if g3 {
                n("R0") * n("R10") * n("S0")
            } else {
                n("R0") * n("S0")
            };
            let a_bins = if g3 { n("R11") * n("S2") } else { n("S2") };
            let b_bins = n("S3");
            let m4 = n("S1") as f64;
            let m3 = if g3 {
                (n("R11") * n("S2") * n("S1")) as f64
            } else {
                (n("S2") * n("S1")) as f64
            };
            let m2 = (n("S3") * n("S1")) as f64;
            let m1 = if g3 {
                (n("R11") * n("S1") * n("S2") * n("S3")) as f64
            } else {
                (n("S1") * n("S2") * n("S3")) as f64
            };
            let m0 = (n_u * a_bins * b_bins * n("S1")) as f64;
            let rho_b = ctx.averaged(Receiver::B1, &[], &[]);
            let mut keys = Vec::new();
            let mut ops = Vec::new();
            for ui in 0..n_u {
                let u = cb.layers["u"][ui];
                let e1 = fam.level1(u);
                let rho_u = ctx.averaged(Receiver::B1, &["u"], &[u]);
                let e0_rho_u = fam.level0().pinch(&rho_u.op)?;
                for ba in 0..a_bins {
                    for bb in 0..b_bins {
                        let bin = (ui * a_bins + ba) * b_bins + bb;
                        let (k1, k2) = cb.selection[bin];
                        let v2 =
                            cb.layers["v2"][ui * a_bins * n("r1") + ba * n("r1") + k1];
                        let v3 =
                            cb.layers["v3"][ui * b_bins * n("r2") + bb * n("r2") + k2];
                        let rho_v2 = ctx.averaged(Receiver::B1, &["v2"], &[v2]);
                        let rho_v3 = ctx.averaged(Receiver::B1, &["v3"], &[v3]);
                        let rho_v23 =
                            ctx.averaged(Receiver::B1, &["v2", "v3"], &[v2, v3]);
                        let e2 = fam.fork_v2(u, v2);
                        let e3 = fam.fork_v3(u, v3);
                        let e4 = fam.fork_v23(u, v2, v3);
                        for s1 in 0..n("S1") {
                            let x = cb.layers["x"][bin * n("S1") + s1];
                            let rho_x = ctx.averaged(Receiver::B1, &["x"], &[x]);
                            let th4 = ctx.threshold_slice(
                                slice_kind::FORK23,
                                &[u, v2, v3, x],
                                m4,
                                &rho_x.op,
                                &e1.pinch(&rho_v23.op)?,
                                &e4,
                            );
                            let th3 = ctx.threshold_slice(
                                slice_kind::FORK3,
                                &[u, v3, x],
                                m3,
                                &rho_x.op,
                                &e1.pinch(&rho_v3.op)?,
                                &e3,
                            );
                            let th2 = ctx.threshold_slice(
                                slice_kind::FORK2,
                                &[u, v2, x],
                                m2,
                                &rho_x.op,
                                &e1.pinch(&rho_v2.op)?,
                                &e2,
                            );
                            let th1 = ctx.threshold_slice(
                                slice_kind::LEVEL1,
                                &[u, x],
                                m1,
                                &rho_x.op,
                                &e0_rho_u,
                                &e1,
                            );
                            let th0 = ctx.threshold_slice(
                                slice_kind::LEVEL0,
                                &[x],
                                m0,
                                &rho_x.op,
                                &rho_b.op,
                                &fam.level0(),
                            );
                            let g = th0.matrix()
                                * th1.matrix()
                                * th2.matrix()
                                * th3.matrix()
                                * th4.matrix();
                            keys.push(vec![ui, ba, bb, s1]);
                            ops.push(HermitianOperator::new_unchecked(&g * g.adjoint()));
                        }
                    }
                }
            }
            Ok(square_root_measurement(receiver, keys, ops, tol))
        }
        (Scenario::General2Deg, r @ (Receiver::B2 | Receiver::B3)) => {
            // fully non-unique decoding of the cloud center through the
            // receiver's satellite layer: sum over all of its codewords
            let fam = ctx.family(r);
            let (layer, bins, k) = if r == Receiver::B2 {
                ("v2", n("S2"), n("r1"))
            } else {
                ("v3", n("S3"), n("r2"))
            };
            let n_u = n("R0") * n("S0");
            let m = (n_u * bins * k) as f64;
            let rho_b = ctx.averaged(r, &[], &[]);
            let mut keys = Vec::new();
            let mut ops = Vec::new();
            for ui in 0..n_u {
                let mut syms: Vec<usize> = (0..bins * k)
                    .map(|j| cb.layers[layer][ui * bins * k + j])
                    .collect();
                syms.sort_unstable();
                let mut acc = HermitianOperator::zeros(ctx.instance.channel.receiver_dim(r));
                for sym in syms {
                    let rho_s = ctx.averaged(r, &[layer], &[sym]);
                    let q = ctx.threshold_slice(
                        slice_kind::LEVEL0,
                        &[sym],
                        m,
                        &rho_s.op,
                        &rho_b.op,
                        &fam.level0(),
                    );
                    acc = acc.add(&q);
                }
                keys.push(vec![ui]);
                ops.push(acc);
            }
            Ok(square_root_measurement(r, keys, ops, tol))
        }
        (Scenario::General3Deg, Receiver::B2) => {
            // unique decoding of (u, v2-bin); non-unique only over the in-bin
            // index k1
            let fam = ctx.family(Receiver::B2);
            let n_u = n("R0") * n("R10") * n("S0");
            let a_bins = n("R11") * n("S2");
            let m1 = (n("R11") * n("S2") * n("r1")) as f64;
            let m0 = (n_u * a_bins * n("r1")) as f64;
            let rho_b = ctx.averaged(Receiver::B2, &[], &[]);
            let mut keys = Vec::new();
            let mut ops = Vec::new();
            for ui in 0..n_u {
                let u = cb.layers["u"][ui];
                let e1 = fam.level1(u);
                let rho_u = ctx.averaged(Receiver::B2, &["u"], &[u]);
                let e0_rho_u = fam.level0().pinch(&rho_u.op)?;
                for ba in 0..a_bins {
                    let mut syms: Vec<usize> = (0..n("r1"))
                        .map(|k1| cb.layers["v2"][ui * a_bins * n("r1") + ba * n("r1") + k1])
                        .collect();
                    syms.sort_unstable();
                    let mut acc =
                        HermitianOperator::zeros(ctx.instance.channel.receiver_dim(Receiver::B2));
                    for sym in syms {
                        let rho_pair = ctx.averaged(Receiver::B2, &["u", "v2"], &[u, sym]);
                        let phi1 = ctx.threshold_slice(
                            slice_kind::LEVEL1,
                            &[u, sym],
                            m1,
                            &rho_pair.op,
                            &e0_rho_u,
                            &e1,
                        );
                        let phi0 = ctx.threshold_slice(
                            slice_kind::LEVEL0,
                            &[u, sym],
                            m0,
                            &rho_pair.op,
                            &rho_b.op,
                            &fam.level0(),
                        );
                        let g = phi0.matrix() * phi1.matrix();
                        acc = acc.add(&HermitianOperator::new_unchecked(&g * g.adjoint()));
                    }
                    keys.push(vec![ui, ba]);
                    ops.push(acc);
                }
            }
            Ok(square_root_measurement(Receiver::B2, keys, ops, tol))
        }
        (Scenario::General3Deg, Receiver::B3) => {
            // non-unique over the whole v3 layer, slices on (u, v3) blocks
            let fam = ctx.family(Receiver::B3);
            let n_u = n("R0") * n("R10") * n("S0");
            let per_u = n("S3") * n("r2");
            let m = (n_u * per_u) as f64;
            let rho_b = ctx.averaged(Receiver::B3, &[], &[]);
            let mut keys = Vec::new();
            let mut ops = Vec::new();
            for ui in 0..n_u {
                let u = cb.layers["u"][ui];
                let mut syms: Vec<usize> = (0..per_u)
                    .map(|j| cb.layers["v3"][ui * per_u + j])
                    .collect();
                syms.sort_unstable();
                let mut acc =
                    HermitianOperator::zeros(ctx.instance.channel.receiver_dim(Receiver::B3));
                for sym in syms {
                    let rho_pair = ctx.averaged(Receiver::B3, &["u", "v3"], &[u, sym]);
                    let w = ctx.threshold_slice(
                        slice_kind::LEVEL0,
                        &[u, sym],
                        m,
                        &rho_pair.op,
                        &rho_b.op,
                        &fam.level0(),
                    );
                    acc = acc.add(&w);
                }
                keys.push(vec![ui]);
                ops.push(acc);
            }
            Ok(square_root_measurement(Receiver::B3, keys, ops, tol))
        }
    }
}

// ---------------------------------------------------------------------------
// Exact error and the error chain
// ---------------------------------------------------------------------------

/// One transmitted message: its channel input symbol and, per receiver, the
/// decodable tuple that counts as success.
#[derive(Clone, Debug)]
pub struct FullMessage {
    pub x_symbol: usize,
    pub keys: [Vec<usize>; 3],
}

/// Enumerate the full message space of a realized codebook, resolving bins
/// through the encoder's selection.
pub fn enumerate_messages(ctx: &SimContext, cb: &Codebook) -> Vec<FullMessage> {
    let n = |k: &str| cb.sizes[k];
    let mut out = Vec::new();
    match ctx.instance.scenario {
        Scenario::Multilevel2Deg => {
            for m0 in 0..n("R0") {
                for s1 in 0..n("S1") {
                    for s2 in 0..n("S2") {
                        let x = cb.layers["x"][(m0 * n("S1") + s1) * n("S2") + s2];
                        out.push(FullMessage {
                            x_symbol: x,
                            keys: [vec![m0, s1, s2], vec![m0], vec![m0]],
                        });
                    }
                }
            }
        }
        Scenario::MartonCommon => {
            let n_u0 = n("R0") * n("S11") * n("S21");
            for u0i in 0..n_u0 {
                let u0 = cb.layers["u0"][u0i];
                for m12 in 0..n("S12") {
                    for m22 in 0..n("S22") {
                        let bin = (u0i * n("S12") + m12) * n("S22") + m22;
                        let (k1, k2) = cb.selection[bin];
                        let u1 =
                            cb.layers["u1"][u0i * n("S12") * n("r1") + m12 * n("r1") + k1];
                        let u2 =
                            cb.layers["u2"][u0i * n("S22") * n("r2") + m22 * n("r2") + k2];
                        let x = ctx.instance.x_of_tuple(&[u0, u1, u2]);
                        out.push(FullMessage {
                            x_symbol: x,
                            // the third slot is unused for two receivers
                            keys: [vec![u0i, m12], vec![u0i, m22], vec![]],
                        });
                    }
                }
            }
        }
        Scenario::General2Deg | Scenario::General3Deg => {
            let g3 = ctx.instance.scenario == Scenario::General3Deg;
            let n_u = if g3 {
                n("R0") * n("R10") * n("S0")
            } else {
                n("R0") * n("S0")
            };
            let a_bins = if g3 { n("R11") * n("S2") } else { n("S2") };
            let b_bins = n("S3");
            for ui in 0..n_u {
                for ba in 0..a_bins {
                    for bb in 0..b_bins {
                        let bin = (ui * a_bins + ba) * b_bins + bb;
                        for s1 in 0..n("S1") {
                            let x = cb.layers["x"][bin * n("S1") + s1];
                            let b1_key = vec![ui, ba, bb, s1];
                            let b2_key = if g3 { vec![ui, ba] } else { vec![ui] };
                            out.push(FullMessage {
                                x_symbol: x,
                                keys: [b1_key, b2_key, vec![ui]],
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ReceiverError {
    pub receiver: usize,
    pub exact: f64,
    /// Average of the per-message Hayashi-Nagaoka decomposition
    /// `2 tr[(I-S)rho] + 4 sum tr[T rho]`; an upper bound on `exact`.
    pub hn_bound: f64,
    pub completeness_margin: f64,
}

/// Exact uniform-message average error per receiver, with the per-message
/// Hayashi-Nagaoka chain recorded. Sums run in sorted order so the result is
/// invariant under in-bin relabelings of the codebook.
pub fn average_error_exact(
    ctx: &SimContext,
    cb: &Codebook,
    povms: &[DecoderPOVM],
) -> Result<Vec<ReceiverError>> {
    let messages = enumerate_messages(ctx, cb);
    let mut out = Vec::new();
    for povm in povms {
        let r = povm.receiver;
        let mut terms: Vec<f64> = Vec::with_capacity(messages.len());
        let mut hn_terms: Vec<f64> = Vec::with_capacity(messages.len());
        for msg in &messages {
            let key = &msg.keys[r.index()];
            let idx = povm
                .message_keys
                .iter()
                .position(|k| k == key)
                .ok_or_else(|| {
                    QbcError::BadRequest(format!("message key {key:?} missing from POVM"))
                })?;
            let rho = ctx.instance.channel.output_marginal(msg.x_symbol, r);
            let p_ok = povm.operators[idx].trace_product(&rho.op);
            terms.push((1.0 - p_ok).max(0.0));
            let first = 1.0 - povm.raw_ops[idx].trace_product(&rho.op);
            let mut second = 0.0;
            for (j, op) in povm.raw_ops.iter().enumerate() {
                if j != idx {
                    second += op.trace_product(&rho.op);
                }
            }
            hn_terms.push(2.0 * first.max(0.0) + 4.0 * second.max(0.0));
        }
        terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        hn_terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let exact = terms.iter().sum::<f64>() / messages.len() as f64;
        let hn = hn_terms.iter().sum::<f64>() / messages.len() as f64;
        out.push(ReceiverError {
            receiver: r.index(),
            exact,
            hn_bound: hn,
            completeness_margin: povm.completeness_margin(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Analytic error-exponent bounds
// ---------------------------------------------------------------------------

/// One term of a receiver's bound: coefficient `2^{alpha * rate + 2}`, a
/// distinct-eigenvalue count, and the two trace quantities
/// `2^{-alpha D_{1-alpha}(pinched || sigma)}` (Petz-pinched form) and
/// `2^{-alpha D~_{1-alpha}(rho || sigma)}` (sandwiched form).
#[derive(Clone, Debug, Serialize)]
pub struct BoundTerm {
    pub label: String,
    pub rate_log2: f64,
    pub count: usize,
    pub q_petz: f64,
    pub q_sandwiched: f64,
}

impl BoundTerm {
    pub fn petz_term(&self, alpha: f64) -> f64 {
        2f64.powf(alpha * self.rate_log2 + 2.0) * self.q_petz
    }

    pub fn sandwiched_term(&self, alpha: f64) -> f64 {
        2f64.powf(alpha * self.rate_log2 + 2.0)
            * (self.count as f64).powf(alpha)
            * self.q_sandwiched
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReceiverBound {
    pub receiver: usize,
    pub alpha: f64,
    pub terms: Vec<BoundTerm>,
    pub petz_total: f64,
    pub sandwiched_total: f64,
    /// A bound above 1 certifies nothing at these sizes.
    pub vacuous: bool,
}

struct TermSpec<'a> {
    label: &'a str,
    rate_names: &'a [&'a str],
    /// block registers the state is conditioned on
    block_regs: &'a [&'a str],
    kind: TermKind,
}

#[derive(Clone, Copy)]
enum TermKind {
    /// level-0 pinching against the average state
    Level0,
    /// level-1 pinching against E0(rho_u); u is the first block register
    Level1,
    /// chain level 2 (multilevel): E2|u,v against E1|u(rho_v)
    Level2Chain,
    ForkV2,
    ForkV3,
    ForkV23,
}

fn bound_terms_for(
    ctx: &SimContext,
    receiver: Receiver,
    spec: &CodebookSpec,
    specs: &[TermSpec],
    alpha: f64,
) -> Result<Vec<BoundTerm>> {
    let fam = ctx.family(receiver);
    let code = &ctx.code_dist;
    let order = 1.0 - alpha;
    let tol = ctx.tol;
    let mut out = Vec::new();
    for ts in specs {
        let rate: f64 = ts.rate_names.iter().map(|r| spec.realized_log2(r)).sum();
        // iterate over the block-register marginal of the code distribution
        let marg = code.marginal(ts.block_regs)?;
        let mut qp = 0.0;
        let mut qs = 0.0;
        let mut count = 1usize;
        for idx in 0..marg.total() {
            let p = marg.pmf[idx];
            if p <= 0.0 {
                continue;
            }
            let vals = marg.tuple_of(idx);
            let rho = ctx.averaged(receiver, ts.block_regs, &vals);
            let (map, sigma) = match ts.kind {
                TermKind::Level0 => (fam.level0(), ctx.averaged(receiver, &[], &[]).op),
                TermKind::Level1 => {
                    let u = vals[0];
                    let rho_u = ctx.averaged(receiver, &[ts.block_regs[0]], &[u]);
                    (fam.level1(u), fam.level0().pinch(&rho_u.op)?)
                }
                TermKind::Level2Chain => {
                    let (u, v) = (vals[0], vals[1]);
                    let rho_v = ctx.averaged(receiver, &["v"], &[v]);
                    (fam.level2(u, v), fam.level1(u).pinch(&rho_v.op)?)
                }
                TermKind::ForkV2 => {
                    let (u, v2) = (vals[0], vals[1]);
                    let rho_v = ctx.averaged(receiver, &["v2"], &[v2]);
                    (fam.fork_v2(u, v2), fam.level1(u).pinch(&rho_v.op)?)
                }
                TermKind::ForkV3 => {
                    let (u, v3) = (vals[0], vals[1]);
                    let rho_v = ctx.averaged(receiver, &["v3"], &[v3]);
                    (fam.fork_v3(u, v3), fam.level1(u).pinch(&rho_v.op)?)
                }
                TermKind::ForkV23 => {
                    let (u, v2, v3) = (vals[0], vals[1], vals[2]);
                    let rho_v = ctx.averaged(receiver, &["v2", "v3"], &[v2, v3]);
                    (fam.fork_v23(u, v2, v3), fam.level1(u).pinch(&rho_v.op)?)
                }
            };
            count = count.max(map.count());
            let sigma = DensityMatrix::new_unchecked(sigma);
            let pinched = DensityMatrix::new_unchecked(map.pinch(&rho.op)?);
            qp += p * q_petz(&pinched, &sigma, order, tol);
            qs += p * q_sandwiched(&rho, &sigma, order, tol);
        }
        out.push(BoundTerm {
            label: ts.label.to_string(),
            rate_log2: rate,
            count,
            q_petz: qp,
            q_sandwiched: qs,
        });
    }
    Ok(out)
}

/// Both closing-bound forms per receiver, at the realized codebook sizes.
pub fn analytic_bound(
    ctx: &SimContext,
    spec: &CodebookSpec,
    alpha: f64,
) -> Result<Vec<ReceiverBound>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(QbcError::BadOrder(alpha));
    }
    let g3 = ctx.instance.scenario == Scenario::General3Deg;
    let receiver_specs: Vec<(Receiver, Vec<TermSpec>)> = match ctx.instance.scenario {
        Scenario::Multilevel2Deg => vec![
            (
                Receiver::B1,
                vec![
                    TermSpec {
                        label: "cloud",
                        rate_names: &["R0", "S1", "S2"],
                        block_regs: &["u", "v", "x"],
                        kind: TermKind::Level0,
                    },
                    TermSpec {
                        label: "above-u",
                        rate_names: &["S1", "S2"],
                        block_regs: &["u", "v", "x"],
                        kind: TermKind::Level1,
                    },
                    TermSpec {
                        label: "above-v",
                        rate_names: &["S2"],
                        block_regs: &["u", "v", "x"],
                        kind: TermKind::Level2Chain,
                    },
                ],
            ),
            (
                Receiver::B2,
                vec![TermSpec {
                    label: "common",
                    rate_names: &["R0"],
                    block_regs: &["u"],
                    kind: TermKind::Level0,
                }],
            ),
            (
                Receiver::B3,
                vec![TermSpec {
                    label: "non-unique",
                    rate_names: &["R0", "S1"],
                    block_regs: &["v"],
                    kind: TermKind::Level0,
                }],
            ),
        ],
        Scenario::MartonCommon => vec![
            (
                Receiver::B1,
                vec![
                    TermSpec {
                        label: "satellite",
                        rate_names: &["S12", "r1"],
                        block_regs: &["u0", "u1"],
                        kind: TermKind::Level1,
                    },
                    TermSpec {
                        label: "cloud",
                        rate_names: &["R0", "S11", "S21", "S12", "r1"],
                        block_regs: &["u0", "u1"],
                        kind: TermKind::Level0,
                    },
                ],
            ),
            (
                Receiver::B2,
                vec![
                    TermSpec {
                        label: "satellite",
                        rate_names: &["S22", "r2"],
                        block_regs: &["u0", "u2"],
                        kind: TermKind::Level1,
                    },
                    TermSpec {
                        label: "cloud",
                        rate_names: &["R0", "S11", "S21", "S22", "r2"],
                        block_regs: &["u0", "u2"],
                        kind: TermKind::Level0,
                    },
                ],
            ),
        ],
        Scenario::General2Deg | Scenario::General3Deg => {
            let b1_specs = vec![
                TermSpec {
                    label: "cloud",
                    rate_names: if g3 {
                        &["R0", "R10", "R11", "S0", "S1", "S2", "S3"]
                    } else {
                        &["R0", "S0", "S1", "S2", "S3"]
                    },
                    block_regs: &["u", "v2", "v3", "x"],
                    kind: TermKind::Level0,
                },
                TermSpec {
                    label: "above-u",
                    rate_names: if g3 {
                        &["R11", "S2", "S3", "S1"]
                    } else {
                        &["S2", "S3", "S1"]
                    },
                    block_regs: &["u", "v2", "v3", "x"],
                    kind: TermKind::Level1,
                },
                TermSpec {
                    label: "above-v2",
                    rate_names: &["S3", "S1"],
                    block_regs: &["u", "v2", "v3", "x"],
                    kind: TermKind::ForkV2,
                },
                TermSpec {
                    label: "above-v3",
                    rate_names: if g3 { &["R11", "S2", "S1"] } else { &["S2", "S1"] },
                    block_regs: &["u", "v2", "v3", "x"],
                    kind: TermKind::ForkV3,
                },
                TermSpec {
                    label: "above-v2v3",
                    rate_names: &["S1"],
                    block_regs: &["u", "v2", "v3", "x"],
                    kind: TermKind::ForkV23,
                },
            ];
            let mut v = vec![(Receiver::B1, b1_specs)];
            if g3 {
                v.push((
                    Receiver::B2,
                    vec![
                        TermSpec {
                            label: "above-u",
                            rate_names: &["R11", "S2", "r1"],
                            block_regs: &["u", "v2"],
                            kind: TermKind::Level1,
                        },
                        TermSpec {
                            label: "cloud",
                            rate_names: &["R0", "R10", "S0", "R11", "S2", "r1"],
                            block_regs: &["u", "v2"],
                            kind: TermKind::Level0,
                        },
                    ],
                ));
                v.push((
                    Receiver::B3,
                    vec![TermSpec {
                        label: "non-unique",
                        rate_names: &["R0", "R10", "S0", "S3", "r2"],
                        block_regs: &["u", "v3"],
                        kind: TermKind::Level0,
                    }],
                ));
            } else {
                v.push((
                    Receiver::B2,
                    vec![TermSpec {
                        label: "non-unique",
                        rate_names: &["R0", "S0", "S2", "r1"],
                        block_regs: &["v2"],
                        kind: TermKind::Level0,
                    }],
                ));
                v.push((
                    Receiver::B3,
                    vec![TermSpec {
                        label: "non-unique",
                        rate_names: &["R0", "S0", "S3", "r2"],
                        block_regs: &["v3"],
                        kind: TermKind::Level0,
                    }],
                ));
            }
            v
        }
    };

    let mut out = Vec::new();
    for (receiver, specs) in receiver_specs {
        let terms = bound_terms_for(ctx, receiver, spec, &specs, alpha)?;
        let petz_total: f64 = terms.iter().map(|t| t.petz_term(alpha)).sum();
        let sandwiched_total: f64 = terms.iter().map(|t| t.sandwiched_term(alpha)).sum();
        out.push(ReceiverBound {
            receiver: receiver.index(),
            alpha,
            terms,
            petz_total,
            sandwiched_total,
            vacuous: petz_total >= 1.0,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct McStats {
    pub trials: usize,
    pub receivers: Vec<McReceiver>,
    pub encoder_failure_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct McReceiver {
    pub receiver: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub min_completeness_margin: f64,
}

/// Independently seeded codebooks; the mean, standard error and encoder
/// failure fraction over trials. Trials run in parallel with per-trial seeds
/// derived from the master seed, so results are order-independent.
pub fn monte_carlo(
    ctx: &SimContext,
    spec: &CodebookSpec,
    trials: usize,
    master_seed: u64,
) -> Result<McStats> {
    assert!(trials >= 1);
    let receivers: Vec<Receiver> = match ctx.instance.scenario {
        Scenario::MartonCommon => vec![Receiver::B1, Receiver::B2],
        _ => vec![Receiver::B1, Receiver::B2, Receiver::B3],
    };
    let results: Vec<Result<(Vec<ReceiverError>, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut trial_spec = spec.clone();
            trial_spec.seed = Sampler::child(master_seed, t as u64).below(u32::MAX as usize) as u64;
            let cb = generate_codebook(&ctx.instance, &trial_spec)?;
            let povms: Vec<DecoderPOVM> = receivers
                .iter()
                .map(|&r| build_receiver_povm(ctx, &cb, r))
                .collect::<Result<_>>()?;
            let errs = average_error_exact(ctx, &cb, &povms)?;
            Ok((errs, cb.failure_fraction()))
        })
        .collect();

    let mut per_receiver: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); receivers.len()];
    let mut margins: Vec<f64> = vec![f64::INFINITY; receivers.len()];
    let mut failures = 0.0;
    for r in results {
        let (errs, fail) = r?;
        failures += fail;
        for (i, e) in errs.iter().enumerate() {
            per_receiver[i].push(e.exact);
            margins[i] = margins[i].min(e.completeness_margin);
        }
    }
    let stats = per_receiver
        .iter()
        .zip(receivers.iter())
        .zip(margins.iter())
        .map(|((errs, &r), &margin)| {
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            let var = if errs.len() > 1 {
                errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
                    / (errs.len() - 1) as f64
            } else {
                0.0
            };
            McReceiver {
                receiver: r.index(),
                mean_error: mean,
                std_error: (var / errs.len() as f64).sqrt(),
                min_completeness_margin: margin,
            }
        })
        .collect();
    Ok(McStats {
        trials,
        receivers: stats,
        encoder_failure_fraction: failures / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{sample_input, TheoremId};

    const TOL: f64 = 1e-9;

    fn multilevel_instance(seed: u64) -> SimInstance {
        let mut s = Sampler::new(seed);
        let channel = s.random_degraded_channel(2, [2, 2, 2]);
        let input = sample_input(TheoremId::MultilevelFinal, &channel, &mut s, 2).unwrap();
        SimInstance::new(Scenario::Multilevel2Deg, channel, input.dist, input.x_of).unwrap()
    }

    fn rates(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn all_rates_zero_gives_single_codeword_and_support_projector() {
        // deterministic distribution: the decoder's reference states all
        // coincide with the sent state, thresholds sit at 1, and the
        // measurement accepts the support of the sent state
        let mut s = Sampler::new(1);
        let channel = s.random_degraded_channel(2, [2, 2, 2]);
        let dist = ClassicalJoint::new(
            vec![
                crate::cqstate::ClassicalRegister::new("u", 2),
                crate::cqstate::ClassicalRegister::new("v", 2),
                crate::cqstate::ClassicalRegister::new("x", 2),
            ],
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let input = crate::region::RegionInput::from_dist_with_x(dist).unwrap();
        let instance =
            SimInstance::new(Scenario::Multilevel2Deg, channel, input.dist, input.x_of)
                .unwrap();
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 0.0), ("S1", 0.0), ("S2", 0.0)]),
            theta: 0.0,
            seed: 3,
        };
        let cb = generate_codebook(&ctx.instance, &spec).unwrap();
        assert_eq!(cb.layers["u"].len(), 1);
        assert_eq!(cb.layers["x"].len(), 1);
        let povm = build_receiver_povm(&ctx, &cb, Receiver::B1).unwrap();
        assert_eq!(povm.operators.len(), 1);
        let errs = average_error_exact(&ctx, &cb, &[povm]).unwrap();
        assert!(errs[0].exact <= 1e-9, "error {}", errs[0].exact);
    }

    #[test]
    fn codeword_frequencies_match_sampling_distribution() {
        let instance = multilevel_instance(2);
        let p_u = instance.dist.marginal(&["u"]).unwrap();
        let mut counts = vec![0usize; 2];
        let trials = 10_000;
        for seed in 0..trials {
            let spec = CodebookSpec {
                scenario: Scenario::Multilevel2Deg,
                rates: rates(&[("R0", 1.0), ("S1", 0.0), ("S2", 0.0)]),
                theta: 0.0,
                seed,
            };
            let cb = generate_codebook(&instance, &spec).unwrap();
            counts[cb.layers["u"][0]] += 1;
        }
        // 3-sigma multinomial band
        let n = trials as f64;
        for u in 0..2 {
            let expect = n * p_u.pmf[u];
            let sigma = (n * p_u.pmf[u] * (1.0 - p_u.pmf[u])).sqrt();
            let got = counts[u] as f64;
            assert!(
                (got - expect).abs() <= 3.0 * sigma + 1.0,
                "u={u}: {got} vs {expect} +- {sigma}"
            );
        }
    }

    #[test]
    fn povm_subcompleteness_and_psd() {
        let instance = multilevel_instance(3);
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 1.0), ("S1", 1.0), ("S2", 1.0)]),
            theta: 0.0,
            seed: 5,
        };
        let cb = generate_codebook(&ctx.instance, &spec).unwrap();
        for r in [Receiver::B1, Receiver::B2, Receiver::B3] {
            let povm = build_receiver_povm(&ctx, &cb, r).unwrap();
            assert!(povm.completeness_margin() >= -1e-9);
            for op in &povm.operators {
                assert!(op.min_eigenvalue() >= -1e-9);
            }
            // sum + residual = identity
            let mut sum = povm.residual.clone();
            for op in &povm.operators {
                sum = sum.add(op);
            }
            let dim = sum.dim();
            assert!(
                sum.sub(&HermitianOperator::identity(dim)).operator_norm() <= 1e-9
            );
        }
    }

    #[test]
    fn error_chain_hn_dominates_exact() {
        let instance = multilevel_instance(4);
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 1.0), ("S1", 1.0), ("S2", 0.0)]),
            theta: 0.0,
            seed: 7,
        };
        let cb = generate_codebook(&ctx.instance, &spec).unwrap();
        for r in [Receiver::B1, Receiver::B2, Receiver::B3] {
            let povm = build_receiver_povm(&ctx, &cb, r).unwrap();
            let errs = average_error_exact(&ctx, &cb, &[povm]).unwrap();
            assert!(
                errs[0].exact <= errs[0].hn_bound + 1e-9,
                "receiver {r:?}: {} vs HN {}",
                errs[0].exact,
                errs[0].hn_bound
            );
        }
    }

    #[test]
    fn classical_diagonal_channel_matches_classical_decoder() {
        // diagonal outputs: the POVM is diagonal and the exact error equals a
        // classical threshold-decoder computation done independently
        let mut s = Sampler::new(8);
        let mut outputs = Vec::new();
        let mut b1_diag = Vec::new();
        for _ in 0..2 {
            let p = s.uniform(0.1, 0.9);
            let d1 = crate::hermitian::HermitianOperator::from_real_diag(&[p, 1.0 - p]);
            b1_diag.push([p, 1.0 - p]);
            let d2 = crate::hermitian::HermitianOperator::from_real_diag(&[0.5, 0.5]);
            outputs.push(DensityMatrix::new_unchecked(
                d1.kron(&d2).kron(&d2),
            ));
        }
        let channel = BroadcastChannel::new(2, [2, 2, 2], outputs).unwrap();
        let mut s2 = Sampler::new(9);
        let input = sample_input(TheoremId::MultilevelFinal, &channel, &mut s2, 2).unwrap();
        let instance =
            SimInstance::new(Scenario::Multilevel2Deg, channel, input.dist, input.x_of)
                .unwrap();
        let ctx = SimContext::new(instance.clone(), TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 1.0), ("S1", 0.0), ("S2", 0.0)]),
            theta: 0.0,
            seed: 11,
        };
        let cb = generate_codebook(&ctx.instance, &spec).unwrap();
        let povm = build_receiver_povm(&ctx, &cb, Receiver::B1).unwrap();
        for op in &povm.operators {
            assert!(op.entry(0, 1).norm() < 1e-10, "POVM is not diagonal");
        }
        let errs = average_error_exact(&ctx, &cb, &[povm.clone()]).unwrap();
        // classical oracle: the same POVM diagonal entries applied to the
        // diagonal output distributions
        let messages = enumerate_messages(&ctx, &cb);
        let mut classical = 0.0;
        for msg in &messages {
            let idx = povm
                .message_keys
                .iter()
                .position(|k| k == &msg.keys[0])
                .unwrap();
            let x = msg.x_symbol;
            let p_ok: f64 = (0..2)
                .map(|j| povm.operators[idx].entry(j, j).re * b1_diag[x][j])
                .sum();
            classical += (1.0 - p_ok) / messages.len() as f64;
        }
        assert!((errs[0].exact - classical).abs() < 1e-10);
    }

    #[test]
    fn relabeling_nonunique_indices_is_exactly_invariant() {
        let instance = multilevel_instance(5);
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 1.0), ("S1", 1.0), ("S2", 0.0)]),
            theta: 0.0,
            seed: 13,
        };
        let cb = generate_codebook(&ctx.instance, &spec).unwrap();
        let povm = build_receiver_povm(&ctx, &cb, Receiver::B3).unwrap();
        let err = average_error_exact(&ctx, &cb, &[povm]).unwrap()[0].exact;

        // swap the two s1 labels inside each m0 branch (v and its x children)
        let mut relabeled = cb.clone();
        let n_s1 = cb.sizes["S1"];
        let n_s2 = cb.sizes["S2"];
        for m0 in 0..cb.sizes["R0"] {
            relabeled.layers.get_mut("v").unwrap().swap(m0 * n_s1, m0 * n_s1 + 1);
            for s2 in 0..n_s2 {
                let a = (m0 * n_s1) * n_s2 + s2;
                let b = (m0 * n_s1 + 1) * n_s2 + s2;
                relabeled.layers.get_mut("x").unwrap().swap(a, b);
            }
        }
        let povm2 = build_receiver_povm(&ctx, &relabeled, Receiver::B3).unwrap();
        let err2 = average_error_exact(&ctx, &relabeled, &[povm2]).unwrap()[0].exact;
        assert_eq!(err, err2, "exact invariance under in-branch relabeling");
    }

    #[test]
    fn noiseless_orthogonal_channel_decodes_perfectly() {
        // orthogonal outputs at B1 and tiny rates: error ~ 0
        let d1 = crate::hermitian::HermitianOperator::from_real_diag(&[1.0, 0.0]);
        let d2 = crate::hermitian::HermitianOperator::from_real_diag(&[0.0, 1.0]);
        let flat = crate::hermitian::HermitianOperator::from_real_diag(&[0.5, 0.5]);
        let outputs = vec![
            DensityMatrix::new_unchecked(d1.kron(&d1).kron(&flat)),
            DensityMatrix::new_unchecked(d2.kron(&d2).kron(&flat)),
        ];
        let channel = BroadcastChannel::new(2, [2, 2, 2], outputs).unwrap();
        // u = v = x chain with distinct symbols
        let dist = ClassicalJoint::new(
            vec![
                crate::cqstate::ClassicalRegister::new("u", 2),
                crate::cqstate::ClassicalRegister::new("v", 2),
                crate::cqstate::ClassicalRegister::new("x", 2),
            ],
            vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5],
        )
        .unwrap();
        let input = crate::region::RegionInput::from_dist_with_x(dist).unwrap();
        let instance =
            SimInstance::new(Scenario::Multilevel2Deg, channel, input.dist, input.x_of)
                .unwrap();
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 1.0), ("S1", 0.0), ("S2", 0.0)]),
            theta: 0.0,
            seed: 40,
        };
        // find a seed whose two cloud codewords are distinct
        for seed in 0..50u64 {
            let mut sp = spec.clone();
            sp.seed = seed;
            let cb = generate_codebook(&ctx.instance, &sp).unwrap();
            if cb.layers["u"][0] != cb.layers["u"][1] {
                let povm = build_receiver_povm(&ctx, &cb, Receiver::B1).unwrap();
                let errs = average_error_exact(&ctx, &cb, &[povm]).unwrap();
                assert!(errs[0].exact <= 1e-9, "error {}", errs[0].exact);
                return;
            }
        }
        panic!("no distinct-codeword seed found");
    }

    #[test]
    fn depolarized_channel_error_is_at_least_guessing() {
        // all outputs maximally mixed: any decoder is blind guessing, so the
        // error is at least 1 - 1/(number of cloud messages)
        let flat = DensityMatrix::maximally_mixed(8);
        let channel =
            BroadcastChannel::new(2, [2, 2, 2], vec![flat.clone(), flat]).unwrap();
        let mut s = Sampler::new(10);
        let input = sample_input(TheoremId::MultilevelFinal, &channel, &mut s, 2).unwrap();
        let instance =
            SimInstance::new(Scenario::Multilevel2Deg, channel, input.dist, input.x_of)
                .unwrap();
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 1.0), ("S1", 0.0), ("S2", 0.0)]),
            theta: 0.0,
            seed: 17,
        };
        let cb = generate_codebook(&ctx.instance, &spec).unwrap();
        let povm = build_receiver_povm(&ctx, &cb, Receiver::B2).unwrap();
        let errs = average_error_exact(&ctx, &cb, &[povm]).unwrap();
        assert!(errs[0].exact >= 0.5 - 1e-9, "error {}", errs[0].exact);
    }

    #[test]
    fn encoder_select_trivial_and_forced_cases() {
        let mut s = Sampler::new(11);
        let channel = s.random_channel(2, [2, 2, 2]);
        // conditionally independent target: every pair scores exactly 1
        let dist = s.random_double_markov_coupled(2, 2, 2);
        // make (v2, v3) independent: q(v2, v3) = q(v2) q(v3)
        let p2 = dist.marginal(&["v2"]).unwrap();
        let p3 = dist.marginal(&["v3"]).unwrap();
        let p23x = dist.marginal(&["v2", "v3", "x"]).unwrap();
        let p23 = dist.marginal(&["v2", "v3"]).unwrap();
        let mut pmf = vec![0.0; dist.total()];
        let pu = dist.marginal(&["u"]).unwrap();
        for idx in 0..dist.total() {
            let t = dist.tuple_of(idx);
            let frac = {
                let pj = p23.pmf[p23.index_of(&[t[1], t[2]])];
                if pj > 0.0 {
                    p23x.pmf[p23x.index_of(&[t[1], t[2], t[3]])] / pj
                } else {
                    0.5
                }
            };
            pmf[idx] = pu.pmf[t[0]] * p2.pmf[t[1]] * p3.pmf[t[2]] * frac;
        }
        let indep = ClassicalJoint::new(dist.registers.clone(), pmf).unwrap();
        let input = crate::region::RegionInput::from_dist_with_x(indep).unwrap();
        let instance =
            SimInstance::new(Scenario::General2Deg, channel, input.dist, input.x_of).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::General2Deg,
            rates: rates(&[
                ("R0", 1.0),
                ("S0", 0.0),
                ("S1", 0.0),
                ("S2", 1.0),
                ("S3", 1.0),
                ("r1", 0.0),
                ("r2", 0.0),
            ]),
            theta: 1.0,
            seed: 21,
        };
        let cb = generate_codebook(&instance, &spec).unwrap();
        assert!(
            cb.encoder_failures.iter().all(|f| !f),
            "independent target must never fail at theta <= 1"
        );
        // forced failure: threshold above the best possible score
        let spec2 = CodebookSpec {
            theta: 1e9,
            ..spec
        };
        let cb2 = generate_codebook(&instance, &spec2).unwrap();
        assert!(cb2.encoder_failures.iter().all(|f| *f));
    }

    #[test]
    fn encoder_failure_rate_decreases_with_bin_size() {
        let mut s = Sampler::new(12);
        let channel = s.random_channel(2, [2, 2, 2]);
        let dist = s.random_double_markov(2, 2, 2); // strongly correlated pair
        let input = crate::region::RegionInput::from_dist_with_x(dist).unwrap();
        let instance =
            SimInstance::new(Scenario::General2Deg, channel, input.dist, input.x_of).unwrap();
        let fail_rate = |r_bits: f64| -> f64 {
            let mut total = 0.0;
            for seed in 0..60u64 {
                let spec = CodebookSpec {
                    scenario: Scenario::General2Deg,
                    rates: rates(&[
                        ("R0", 0.0),
                        ("S0", 0.0),
                        ("S1", 0.0),
                        ("S2", 1.0),
                        ("S3", 1.0),
                        ("r1", r_bits),
                        ("r2", r_bits),
                    ]),
                    theta: 1.5,
                    seed,
                };
                total += generate_codebook(&instance, &spec).unwrap().failure_fraction();
            }
            total / 60.0
        };
        let f0 = fail_rate(0.0);
        let f2 = fail_rate(2.0);
        assert!(
            f2 <= f0 + 0.05,
            "failure rate should not grow with bin size: {f0} -> {f2}"
        );
    }

    #[test]
    fn analytic_bound_terms_and_monotonicity() {
        let instance = multilevel_instance(6);
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec_small = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 0.0), ("S1", 0.0), ("S2", 0.0)]),
            theta: 0.0,
            seed: 1,
        };
        let spec_big = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 2.0), ("S1", 1.0), ("S2", 1.0)]),
            theta: 0.0,
            seed: 1,
        };
        for alpha in [0.2, 0.5] {
            let small = analytic_bound(&ctx, &spec_small, alpha).unwrap();
            let big = analytic_bound(&ctx, &spec_big, alpha).unwrap();
            for (s, b) in small.iter().zip(big.iter()) {
                assert!(b.petz_total >= s.petz_total - 1e-12, "monotone in rates");
                // the sandwiched form dominates the Petz-pinched form per term
                for (ts, tb) in s.terms.iter().zip(b.terms.iter()) {
                    assert!(ts.petz_term(alpha) <= ts.sandwiched_term(alpha) + 1e-9);
                    assert!(tb.petz_term(alpha) <= tb.sandwiched_term(alpha) + 1e-9);
                }
            }
        }
        // alpha -> 0: every term tends to 4, bounds become the vacuous
        // constant (4 per term)
        let tiny = analytic_bound(&ctx, &spec_small, 1e-6).unwrap();
        for rb in &tiny {
            assert!(rb.vacuous);
            for t in &rb.terms {
                assert!((t.petz_term(1e-6) - 4.0).abs() < 0.01);
            }
        }
    }

    #[test]
    fn bound_below_one_for_distinguishable_channel_at_high_alpha() {
        // the Hayashi-Nagaoka constant costs two bits per term, so a term
        // only certifies once alpha times the divergence exceeds 2; eight
        // orthogonal outputs give 3 bits, enough at alpha = 0.8
        let d = 8;
        let mut outputs = Vec::new();
        for x in 0..d {
            let mut diag = vec![0.0; d];
            diag[x] = 1.0;
            let b2 = crate::hermitian::HermitianOperator::from_real_diag(&diag);
            let flat = DensityMatrix::maximally_mixed(2);
            outputs.push(DensityMatrix::new_unchecked(
                flat.op.kron(&b2).kron(&flat.op),
            ));
        }
        let channel = BroadcastChannel::new(d, [2, d, 2], outputs).unwrap();
        // u = v = x uniform over the eight symbols
        let mut pmf = vec![0.0; d * d * d];
        for x in 0..d {
            pmf[(x * d + x) * d + x] = 1.0 / d as f64;
        }
        let dist = ClassicalJoint::new(
            vec![
                crate::cqstate::ClassicalRegister::new("u", d),
                crate::cqstate::ClassicalRegister::new("v", d),
                crate::cqstate::ClassicalRegister::new("x", d),
            ],
            pmf,
        )
        .unwrap();
        let input = crate::region::RegionInput::from_dist_with_x(dist).unwrap();
        let instance =
            SimInstance::new(Scenario::Multilevel2Deg, channel, input.dist, input.x_of)
                .unwrap();
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 0.0), ("S1", 0.0), ("S2", 0.0)]),
            theta: 0.0,
            seed: 1,
        };
        let bounds = analytic_bound(&ctx, &spec, 0.8).unwrap();
        let b2 = bounds.iter().find(|b| b.receiver == 1).unwrap();
        assert!(
            b2.petz_total < 1.0,
            "B2 bound should certify: {}",
            b2.petz_total
        );
        assert!(!b2.vacuous);
    }

    #[test]
    fn monte_carlo_mean_matches_single_trial_and_shrinks() {
        let instance = multilevel_instance(7);
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::Multilevel2Deg,
            rates: rates(&[("R0", 1.0), ("S1", 0.0), ("S2", 0.0)]),
            theta: 0.0,
            seed: 0,
        };
        let one = monte_carlo(&ctx, &spec, 1, 99).unwrap();
        assert_eq!(one.trials, 1);
        assert_eq!(one.receivers[0].std_error, 0.0);
        let m40 = monte_carlo(&ctx, &spec, 40, 99).unwrap();
        let m160 = monte_carlo(&ctx, &spec, 160, 99).unwrap();
        // doubling trials shrinks the standard error roughly as 1/sqrt(n)
        assert!(
            m160.receivers[0].std_error <= m40.receivers[0].std_error * 0.8 + 1e-6,
            "{} vs {}",
            m160.receivers[0].std_error,
            m40.receivers[0].std_error
        );
    }

    #[test]
    fn marton_scenario_runs_end_to_end() {
        let mut s = Sampler::new(13);
        let channel = s.random_channel(2, [2, 2, 2]);
        let dist = s.random_joint(&[("u0", 2), ("u1", 2), ("u2", 2)]);
        let x_of = s.random_map(8, 2);
        let instance =
            SimInstance::new(Scenario::MartonCommon, channel, dist, x_of).unwrap();
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::MartonCommon,
            rates: rates(&[
                ("R0", 1.0),
                ("S11", 0.0),
                ("S12", 1.0),
                ("S21", 0.0),
                ("S22", 1.0),
                ("r1", 1.0),
                ("r2", 0.0),
            ]),
            theta: 0.5,
            seed: 23,
        };
        let cb = generate_codebook(&ctx.instance, &spec).unwrap();
        assert_eq!(cb.selection.len(), 2 * 2 * 2);
        for r in [Receiver::B1, Receiver::B2] {
            let povm = build_receiver_povm(&ctx, &cb, r).unwrap();
            assert!(povm.completeness_margin() >= -1e-9);
            let errs = average_error_exact(&ctx, &cb, &[povm]).unwrap();
            assert!(errs[0].exact <= errs[0].hn_bound + 1e-9);
        }
        let bounds = analytic_bound(&ctx, &spec, 0.3).unwrap();
        assert_eq!(bounds.len(), 2);
        for rb in &bounds {
            for t in &rb.terms {
                assert!(t.petz_term(0.3) <= t.sandwiched_term(0.3) + 1e-9);
            }
        }
    }

    #[test]
    fn general3_scenario_runs_end_to_end() {
        let mut s = Sampler::new(14);
        let channel = s.random_channel(2, [2, 2, 2]);
        let dist = s.random_double_markov(2, 2, 2);
        let input = crate::region::RegionInput::from_dist_with_x(dist).unwrap();
        let instance =
            SimInstance::new(Scenario::General3Deg, channel, input.dist, input.x_of).unwrap();
        let ctx = SimContext::new(instance, TOL).unwrap();
        let spec = CodebookSpec {
            scenario: Scenario::General3Deg,
            rates: rates(&[
                ("R0", 1.0),
                ("R10", 0.0),
                ("R11", 1.0),
                ("S0", 0.0),
                ("S1", 0.0),
                ("S2", 0.0),
                ("S3", 1.0),
                ("r1", 1.0),
                ("r2", 0.0),
            ]),
            theta: 0.5,
            seed: 29,
        };
        let cb = generate_codebook(&ctx.instance, &spec).unwrap();
        for r in [Receiver::B1, Receiver::B2, Receiver::B3] {
            let povm = build_receiver_povm(&ctx, &cb, r).unwrap();
            assert!(povm.completeness_margin() >= -1e-9, "{r:?}");
            let errs = average_error_exact(&ctx, &cb, &[povm]).unwrap();
            assert!(errs[0].exact <= errs[0].hn_bound + 1e-9, "{r:?}");
        }
        let bounds = analytic_bound(&ctx, &spec, 0.25).unwrap();
        assert_eq!(bounds.len(), 3);
    }

    #[test]
    fn general2_nonunique_semantics_differ_from_general3() {
        // same underlying distribution: the two-degraded receiver B2 sums
        // over its whole satellite layer, the three-degraded one only over
        // the in-bin index; the decodable message sets differ accordingly
        let mut s = Sampler::new(15);
        let channel = s.random_channel(2, [2, 2, 2]);
        let dist = s.random_double_markov(2, 2, 2);
        let input = crate::region::RegionInput::from_dist_with_x(dist).unwrap();
        let i2 = SimInstance::new(
            Scenario::General2Deg,
            channel.clone(),
            input.dist.clone(),
            input.x_of.clone(),
        )
        .unwrap();
        let i3 =
            SimInstance::new(Scenario::General3Deg, channel, input.dist, input.x_of).unwrap();
        let ctx2 = SimContext::new(i2, TOL).unwrap();
        let ctx3 = SimContext::new(i3, TOL).unwrap();
        let spec2 = CodebookSpec {
            scenario: Scenario::General2Deg,
            rates: rates(&[
                ("R0", 1.0),
                ("S0", 0.0),
                ("S1", 0.0),
                ("S2", 1.0),
                ("S3", 0.0),
                ("r1", 0.0),
                ("r2", 0.0),
            ]),
            theta: 0.0,
            seed: 31,
        };
        let spec3 = CodebookSpec {
            scenario: Scenario::General3Deg,
            rates: rates(&[
                ("R0", 1.0),
                ("R10", 0.0),
                ("R11", 0.0),
                ("S0", 0.0),
                ("S1", 0.0),
                ("S2", 1.0),
                ("S3", 0.0),
                ("r1", 0.0),
                ("r2", 0.0),
            ]),
            theta: 0.0,
            seed: 31,
        };
        let cb2 = generate_codebook(&ctx2.instance, &spec2).unwrap();
        let cb3 = generate_codebook(&ctx3.instance, &spec3).unwrap();
        let p2 = build_receiver_povm(&ctx2, &cb2, Receiver::B2).unwrap();
        let p3 = build_receiver_povm(&ctx3, &cb3, Receiver::B2).unwrap();
        // two-degraded: one operator per u codeword; three-degraded: one per
        // (u, v2-bin) pair
        assert_eq!(p2.operators.len(), 2);
        assert_eq!(p3.operators.len(), 4);
    }
}
