//! Catalog of the theorem rate regions: preliminary systems (with covering
//! and decoding constraints), final regions, and converse regions; their
//! evaluation on a channel + distribution instance; Fourier-Motzkin
//! reproduction checks; special-case collapses; and a Pareto frontier search.

use std::collections::BTreeMap;


use num_traits::Zero;
use serde::Serialize;

use crate::cqstate::{BroadcastChannel, ClassicalJoint, ClassicalRegister, CqState, Receiver};
use crate::error::{QbcError, Result};
use crate::mutual_info::{shannon_mi, MutualInfoRequest, RightSide};
use crate::polyhedra::{
    rational_q40, rational_to_f64, InequalitySystem, LinearInequality, Rational,
};
use crate::sampling::Sampler;

/// One mutual-information constant appearing in a rate inequality.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct AtomExpr {
    pub left: Vec<String>,
    pub right: AtomRight,
    pub cond: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum AtomRight {
    Receiver(usize),
    Registers(Vec<String>),
}

impl AtomExpr {
    fn rx(left: &[&str], receiver: Receiver, cond: &[&str]) -> Self {
        Self {
            left: left.iter().map(|s| s.to_string()).collect(),
            right: AtomRight::Receiver(receiver.index()),
            cond: cond.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn classical(left: &[&str], right: &[&str], cond: &[&str]) -> Self {
        Self {
            left: left.iter().map(|s| s.to_string()).collect(),
            right: AtomRight::Registers(right.iter().map(|s| s.to_string()).collect()),
            cond: cond.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn key(&self) -> String {
        let right = match &self.right {
            AtomRight::Receiver(i) => format!("B{}", i + 1),
            AtomRight::Registers(rs) => rs.join(","),
        };
        if self.cond.is_empty() {
            format!("I({};{})", self.left.join(","), right)
        } else {
            format!("I({};{}|{})", self.left.join(","), right, self.cond.join(","))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    /// rate combination <= atom combination
    Le,
    /// rate combination >= atom combination (covering conditions)
    Ge,
}

#[derive(Clone, Debug)]
pub struct TemplateIneq {
    pub rate_coeffs: Vec<(String, i64)>,
    pub atom_terms: Vec<(i64, AtomExpr)>,
    pub sense: Sense,
    pub tag: String,
}

fn t(rates: &[(&str, i64)], atoms: &[(i64, AtomExpr)], sense: Sense, tag: &str) -> TemplateIneq {
    TemplateIneq {
        rate_coeffs: rates.iter().map(|(v, c)| (v.to_string(), *c)).collect(),
        atom_terms: atoms.to_vec(),
        sense,
        tag: tag.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TheoremId {
    MartonPrelim,
    MartonFinal,
    MultilevelPrelim,
    MultilevelFinal,
    Superposition,
    ConverseMultilevel,
    General2Prelim,
    General2Final,
    ConverseGeneral2,
    General3Prelim,
    General3Final,
}

impl TheoremId {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "marton-prelim" => Self::MartonPrelim,
            "marton" | "marton-final" => Self::MartonFinal,
            "multilevel-prelim" => Self::MultilevelPrelim,
            "multilevel" | "multilevel-final" => Self::MultilevelFinal,
            "superposition" => Self::Superposition,
            "converse-multilevel" => Self::ConverseMultilevel,
            "general2-prelim" => Self::General2Prelim,
            "general2" | "general2-final" => Self::General2Final,
            "converse-general2" => Self::ConverseGeneral2,
            "general3-prelim" => Self::General3Prelim,
            "general3" | "general3-final" => Self::General3Final,
            other => return Err(QbcError::BadRequest(format!("unknown theorem `{other}`"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MartonPrelim => "marton-prelim",
            Self::MartonFinal => "marton-final",
            Self::MultilevelPrelim => "multilevel-prelim",
            Self::MultilevelFinal => "multilevel-final",
            Self::Superposition => "superposition",
            Self::ConverseMultilevel => "converse-multilevel",
            Self::General2Prelim => "general2-prelim",
            Self::General2Final => "general2-final",
            Self::ConverseGeneral2 => "converse-general2",
            Self::General3Prelim => "general3-prelim",
            Self::General3Final => "general3-final",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarkovKind {
    /// No factorization constraint on the distribution.
    None,
    /// p(u, v, x) = p(u) p(v|u) p(x|v).
    ChainUvx,
    /// U - V2 - (V3, X) and U - V3 - (V2, X) simultaneously.
    DoubleVee,
}

#[derive(Clone, Debug)]
pub struct RegionSpec {
    pub id: TheoremId,
    pub registers: Vec<&'static str>,
    pub rate_vars: Vec<&'static str>,
    pub aux_vars: Vec<&'static str>,
    pub markov: MarkovKind,
    pub ineqs: Vec<TemplateIneq>,
    /// `var = sum(parts)` substitutions tying rates to their splits.
    pub substitutions: Vec<(&'static str, Vec<&'static str>)>,
    /// Converse regions evaluated with classical auxiliaries only are an
    /// inner approximation of the no-go region; the banner records this.
    pub banner: Option<&'static str>,
}

pub fn region_spec(id: TheoremId) -> RegionSpec {
    use Receiver::{B1, B2, B3};
    match id {
        TheoremId::MartonPrelim => {
            let i_b1 = AtomExpr::rx(&["u0", "u1"], B1, &[]);
            let i_b1c = AtomExpr::rx(&["u1"], B1, &["u0"]);
            let i_b2 = AtomExpr::rx(&["u0", "u2"], B2, &[]);
            let i_b2c = AtomExpr::rx(&["u2"], B2, &["u0"]);
            let cov = AtomExpr::classical(&["u1"], &["u2"], &["u0"]);
            RegionSpec {
                id,
                registers: vec!["u0", "u1", "u2"],
                rate_vars: vec!["R0", "R1", "R2"],
                aux_vars: vec!["S11", "S12", "S21", "S22", "r1", "r2"],
                markov: MarkovKind::None,
                ineqs: vec![
                    t(&[("r1", 1), ("r2", 1)], &[(1, cov)], Sense::Ge, "covering"),
                    t(&[("S12", 1), ("r1", 1)], &[(1, i_b1c)], Sense::Le, "b1 satellite"),
                    t(
                        &[("R0", 1), ("S11", 1), ("S21", 1), ("S12", 1), ("r1", 1)],
                        &[(1, i_b1)],
                        Sense::Le,
                        "b1 total",
                    ),
                    t(&[("S22", 1), ("r2", 1)], &[(1, i_b2c)], Sense::Le, "b2 satellite"),
                    t(
                        &[("R0", 1), ("S11", 1), ("S21", 1), ("S22", 1), ("r2", 1)],
                        &[(1, i_b2)],
                        Sense::Le,
                        "b2 total",
                    ),
                ],
                substitutions: vec![("R1", vec!["S11", "S12"]), ("R2", vec!["S21", "S22"])],
                banner: None,
            }
        }
        TheoremId::MartonFinal => {
            let i_b1 = AtomExpr::rx(&["u0", "u1"], B1, &[]);
            let i_b1c = AtomExpr::rx(&["u1"], B1, &["u0"]);
            let i_b2 = AtomExpr::rx(&["u0", "u2"], B2, &[]);
            let i_b2c = AtomExpr::rx(&["u2"], B2, &["u0"]);
            let cov = AtomExpr::classical(&["u1"], &["u2"], &["u0"]);
            RegionSpec {
                id,
                registers: vec!["u0", "u1", "u2"],
                rate_vars: vec!["R0", "R1", "R2"],
                aux_vars: vec![],
                markov: MarkovKind::None,
                ineqs: vec![
                    t(&[("R0", 1), ("R1", 1)], &[(1, i_b1.clone())], Sense::Le, "r0+r1"),
                    t(&[("R0", 1), ("R2", 1)], &[(1, i_b2.clone())], Sense::Le, "r0+r2"),
                    t(
                        &[("R0", 1), ("R1", 1), ("R2", 1)],
                        &[(1, i_b1.clone()), (1, i_b2c), (-1, cov.clone())],
                        Sense::Le,
                        "sum via b1",
                    ),
                    t(
                        &[("R0", 1), ("R1", 1), ("R2", 1)],
                        &[(1, i_b2.clone()), (1, i_b1c), (-1, cov.clone())],
                        Sense::Le,
                        "sum via b2",
                    ),
                    t(
                        &[("R0", 2), ("R1", 1), ("R2", 1)],
                        &[(1, i_b1), (1, i_b2), (-1, cov)],
                        Sense::Le,
                        "double common",
                    ),
                ],
                substitutions: vec![],
                banner: None,
            }
        }
        TheoremId::MultilevelPrelim => {
            let a = AtomExpr::rx(&["x"], B1, &[]);
            let au = AtomExpr::rx(&["x"], B1, &["u"]);
            let av = AtomExpr::rx(&["x"], B1, &["v"]);
            let b2 = AtomExpr::rx(&["u"], B2, &[]);
            let b3 = AtomExpr::rx(&["v"], B3, &[]);
            RegionSpec {
                id,
                registers: vec!["u", "v", "x"],
                rate_vars: vec!["R0", "R1"],
                aux_vars: vec!["S1", "S2"],
                markov: MarkovKind::ChainUvx,
                ineqs: vec![
                    t(&[("R0", 1), ("S1", 1), ("S2", 1)], &[(1, a)], Sense::Le, "b1 total"),
                    t(&[("S1", 1), ("S2", 1)], &[(1, au)], Sense::Le, "b1 above u"),
                    t(&[("S2", 1)], &[(1, av)], Sense::Le, "b1 above v"),
                    t(&[("R0", 1)], &[(1, b2)], Sense::Le, "b2"),
                    t(&[("R0", 1), ("S1", 1)], &[(1, b3)], Sense::Le, "b3 non-unique"),
                ],
                substitutions: vec![("R1", vec!["S1", "S2"])],
                banner: None,
            }
        }
        TheoremId::MultilevelFinal | TheoremId::ConverseMultilevel => {
            let au = AtomExpr::rx(&["x"], B1, &["u"]);
            let av = AtomExpr::rx(&["x"], B1, &["v"]);
            let b2 = AtomExpr::rx(&["u"], B2, &[]);
            let b3 = AtomExpr::rx(&["v"], B3, &[]);
            RegionSpec {
                id,
                registers: vec!["u", "v", "x"],
                rate_vars: vec!["R0", "R1"],
                aux_vars: vec![],
                markov: if id == TheoremId::MultilevelFinal {
                    MarkovKind::ChainUvx
                } else {
                    MarkovKind::None
                },
                ineqs: vec![
                    t(&[("R0", 1)], &[(1, b2)], Sense::Le, "r0 via b2"),
                    t(&[("R0", 1)], &[(1, b3.clone())], Sense::Le, "r0 via b3"),
                    t(&[("R1", 1)], &[(1, au)], Sense::Le, "r1"),
                    t(
                        &[("R0", 1), ("R1", 1)],
                        &[(1, b3), (1, av)],
                        Sense::Le,
                        "sum",
                    ),
                ],
                substitutions: vec![],
                banner: if id == TheoremId::ConverseMultilevel {
                    Some(
                        "no-go region evaluated with classical auxiliaries; the converse \
                         permits quantum U, V, so this is an inner approximation",
                    )
                } else {
                    None
                },
            }
        }
        TheoremId::Superposition => {
            let au = AtomExpr::rx(&["x"], B1, &["u"]);
            let b2 = AtomExpr::rx(&["u"], B2, &[]);
            let b3 = AtomExpr::rx(&["u"], B3, &[]);
            RegionSpec {
                id,
                registers: vec!["u", "x"],
                rate_vars: vec!["R0", "R1"],
                aux_vars: vec![],
                markov: MarkovKind::None,
                ineqs: vec![
                    t(&[("R0", 1)], &[(1, b2)], Sense::Le, "r0 via b2"),
                    t(&[("R0", 1)], &[(1, b3)], Sense::Le, "r0 via b3"),
                    t(&[("R1", 1)], &[(1, au)], Sense::Le, "r1"),
                ],
                substitutions: vec![],
                banner: None,
            }
        }
        TheoremId::General2Prelim => {
            let a = AtomExpr::rx(&["x"], B1, &[]);
            let au = AtomExpr::rx(&["x"], B1, &["u"]);
            let a2 = AtomExpr::rx(&["x"], B1, &["v2"]);
            let a3 = AtomExpr::rx(&["x"], B1, &["v3"]);
            let a23 = AtomExpr::rx(&["x"], B1, &["v2", "v3"]);
            let b2 = AtomExpr::rx(&["v2"], B2, &[]);
            let b3 = AtomExpr::rx(&["v3"], B3, &[]);
            let cov = AtomExpr::classical(&["v2"], &["v3"], &["u"]);
            RegionSpec {
                id,
                registers: vec!["u", "v2", "v3", "x"],
                rate_vars: vec!["R0", "R1"],
                aux_vars: vec!["S0", "S1", "S2", "S3", "r1", "r2"],
                markov: MarkovKind::DoubleVee,
                ineqs: vec![
                    t(&[("r1", 1), ("r2", 1)], &[(1, cov)], Sense::Ge, "covering"),
                    t(&[("R0", 1), ("R1", 1)], &[(1, a)], Sense::Le, "b1 total"),
                    t(
                        &[("S3", 1), ("S2", 1), ("S1", 1)],
                        &[(1, au)],
                        Sense::Le,
                        "b1 above u",
                    ),
                    t(&[("S3", 1), ("S1", 1)], &[(1, a2)], Sense::Le, "b1 above v2"),
                    t(&[("S2", 1), ("S1", 1)], &[(1, a3)], Sense::Le, "b1 above v3"),
                    t(&[("S1", 1)], &[(1, a23)], Sense::Le, "b1 above v2 v3"),
                    t(
                        &[("R0", 1), ("S0", 1), ("S2", 1), ("r1", 1)],
                        &[(1, b2)],
                        Sense::Le,
                        "b2 non-unique",
                    ),
                    t(
                        &[("R0", 1), ("S0", 1), ("S3", 1), ("r2", 1)],
                        &[(1, b3)],
                        Sense::Le,
                        "b3 non-unique",
                    ),
                ],
                substitutions: vec![("R1", vec!["S0", "S1", "S2", "S3"])],
                banner: None,
            }
        }
        TheoremId::General2Final => {
            let a = AtomExpr::rx(&["x"], B1, &[]);
            let au = AtomExpr::rx(&["x"], B1, &["u"]);
            let a2 = AtomExpr::rx(&["x"], B1, &["v2"]);
            let a3 = AtomExpr::rx(&["x"], B1, &["v3"]);
            let a23 = AtomExpr::rx(&["x"], B1, &["v2", "v3"]);
            let b2 = AtomExpr::rx(&["v2"], B2, &[]);
            let b3 = AtomExpr::rx(&["v3"], B3, &[]);
            let cov = AtomExpr::classical(&["v2"], &["v3"], &["u"]);
            RegionSpec {
                id,
                registers: vec!["u", "v2", "v3", "x"],
                rate_vars: vec!["R0", "R1"],
                aux_vars: vec![],
                markov: MarkovKind::DoubleVee,
                ineqs: vec![
                    t(&[("R0", 1)], &[(1, b2.clone())], Sense::Le, "r0 via b2"),
                    t(&[("R0", 1)], &[(1, b3.clone())], Sense::Le, "r0 via b3"),
                    t(
                        &[("R0", 2)],
                        &[(1, b2.clone()), (1, b3.clone()), (-1, cov.clone())],
                        Sense::Le,
                        "2r0",
                    ),
                    t(&[("R0", 1), ("R1", 1)], &[(1, a)], Sense::Le, "sum via b1"),
                    t(
                        &[("R0", 1), ("R1", 1)],
                        &[(1, b2.clone()), (1, a2.clone())],
                        Sense::Le,
                        "sum via b2",
                    ),
                    t(
                        &[("R0", 1), ("R1", 1)],
                        &[(1, b3.clone()), (1, a3.clone())],
                        Sense::Le,
                        "sum via b3",
                    ),
                    // the displayed statement drops a "+" between its first
                    // two atoms; implemented as their sum, matching the
                    // preliminary system's image
                    t(
                        &[("R0", 2), ("R1", 1)],
                        &[(1, b2.clone()), (1, b3.clone()), (1, a23.clone()), (-1, cov.clone())],
                        Sense::Le,
                        "2r0+r1",
                    ),
                    t(
                        &[("R0", 2), ("R1", 2)],
                        &[
                            (1, b2.clone()),
                            (1, a2),
                            (1, b3.clone()),
                            (1, a3),
                            (-1, cov.clone()),
                        ],
                        Sense::Le,
                        "2r0+2r1 via satellites",
                    ),
                    t(
                        &[("R0", 2), ("R1", 2)],
                        &[(1, b2), (1, b3), (1, au), (1, a23), (-1, cov)],
                        Sense::Le,
                        "2r0+2r1 via cloud",
                    ),
                ],
                substitutions: vec![],
                banner: None,
            }
        }
        TheoremId::ConverseGeneral2 => {
            let i_ub1 = AtomExpr::rx(&["u"], B1, &[]);
            let au = AtomExpr::rx(&["x"], B1, &["u"]);
            let b2 = AtomExpr::rx(&["v2"], B2, &[]);
            let b3 = AtomExpr::rx(&["v3"], B3, &[]);
            let v2b1 = AtomExpr::rx(&["v2"], B1, &["u"]);
            let v3b1 = AtomExpr::rx(&["v3"], B1, &["u"]);
            RegionSpec {
                id,
                registers: vec!["u", "v2", "v3", "x"],
                rate_vars: vec!["R0", "R1"],
                aux_vars: vec![],
                markov: MarkovKind::None,
                ineqs: vec![
                    t(&[("R0", 1)], &[(1, i_ub1)], Sense::Le, "r0 via b1"),
                    t(&[("R0", 1)], &[(1, b2), (-1, v2b1)], Sense::Le, "r0 via b2"),
                    t(&[("R0", 1)], &[(1, b3), (-1, v3b1)], Sense::Le, "r0 via b3"),
                    t(&[("R1", 1)], &[(1, au)], Sense::Le, "r1"),
                ],
                substitutions: vec![],
                banner: Some(
                    "no-go region evaluated with classical auxiliaries; the converse \
                     permits quantum U, V2, V3, so this is an inner approximation",
                ),
            }
        }
        TheoremId::General3Prelim => {
            let a = AtomExpr::rx(&["x"], B1, &[]);
            let au = AtomExpr::rx(&["x"], B1, &["u"]);
            let a2 = AtomExpr::rx(&["x"], B1, &["v2"]);
            let a3 = AtomExpr::rx(&["x"], B1, &["v3"]);
            let a23 = AtomExpr::rx(&["x"], B1, &["v2", "v3"]);
            let b2 = AtomExpr::rx(&["v2"], B2, &[]);
            let b2u = AtomExpr::rx(&["v2"], B2, &["u"]);
            let b3 = AtomExpr::rx(&["v3"], B3, &[]);
            let cov = AtomExpr::classical(&["v2"], &["v3"], &["u"]);
            RegionSpec {
                id,
                registers: vec!["u", "v2", "v3", "x"],
                rate_vars: vec!["R0", "R1", "R2"],
                aux_vars: vec!["R10", "R11", "S0", "S1", "S2", "S3", "r1", "r2"],
                markov: MarkovKind::DoubleVee,
                ineqs: vec![
                    t(&[("r1", 1), ("r2", 1)], &[(1, cov)], Sense::Ge, "covering"),
                    t(
                        &[("R0", 1), ("R1", 1), ("R2", 1)],
                        &[(1, a)],
                        Sense::Le,
                        "b1 total",
                    ),
                    t(
                        &[("R11", 1), ("S3", 1), ("S2", 1), ("S1", 1)],
                        &[(1, au)],
                        Sense::Le,
                        "b1 above u",
                    ),
                    t(&[("S3", 1), ("S1", 1)], &[(1, a2)], Sense::Le, "b1 above v2"),
                    t(
                        &[("R11", 1), ("S2", 1), ("S1", 1)],
                        &[(1, a3)],
                        Sense::Le,
                        "b1 above v3",
                    ),
                    t(&[("S1", 1)], &[(1, a23)], Sense::Le, "b1 above v2 v3"),
                    // the displayed system omits R11 here, but the receiver-B2
                    // error bound carries exponent R0+R10+S0+R11+S2+r1, so the
                    // rate is included
                    t(
                        &[
                            ("R0", 1),
                            ("S0", 1),
                            ("R10", 1),
                            ("R11", 1),
                            ("S2", 1),
                            ("r1", 1),
                        ],
                        &[(1, b2)],
                        Sense::Le,
                        "b2 total",
                    ),
                    t(
                        &[("R11", 1), ("S2", 1), ("r1", 1)],
                        &[(1, b2u)],
                        Sense::Le,
                        "b2 above u",
                    ),
                    t(
                        &[("R0", 1), ("S0", 1), ("R10", 1), ("S3", 1), ("r2", 1)],
                        &[(1, b3)],
                        Sense::Le,
                        "b3 non-unique",
                    ),
                ],
                substitutions: vec![
                    ("R1", vec!["R10", "R11"]),
                    ("R2", vec!["S0", "S1", "S2", "S3"]),
                ],
                banner: None,
            }
        }
        TheoremId::General3Final => {
            let a = AtomExpr::rx(&["x"], B1, &[]);
            let au = AtomExpr::rx(&["x"], B1, &["u"]);
            let a2 = AtomExpr::rx(&["x"], B1, &["v2"]);
            let a3 = AtomExpr::rx(&["x"], B1, &["v3"]);
            let a23 = AtomExpr::rx(&["x"], B1, &["v2", "v3"]);
            let b2 = AtomExpr::rx(&["v2"], B2, &[]);
            let b2u = AtomExpr::rx(&["v2"], B2, &["u"]);
            let b3 = AtomExpr::rx(&["v3"], B3, &[]);
            let cov = AtomExpr::classical(&["v2"], &["v3"], &["u"]);
            RegionSpec {
                id,
                registers: vec!["u", "v2", "v3", "x"],
                rate_vars: vec!["R0", "R1", "R2"],
                aux_vars: vec![],
                markov: MarkovKind::DoubleVee,
                ineqs: vec![
                    t(&[("R0", 1)], &[(1, b3.clone())], Sense::Le, "r0"),
                    t(&[("R0", 1), ("R1", 1)], &[(1, b2.clone())], Sense::Le, "r0+r1 via b2"),
                    t(
                        &[("R0", 1), ("R1", 1)],
                        &[(1, b2u.clone()), (1, b3.clone()), (-1, cov.clone())],
                        Sense::Le,
                        "r0+r1 via b2|u",
                    ),
                    t(
                        &[("R0", 2), ("R1", 1)],
                        &[(1, b2.clone()), (1, b3.clone()), (-1, cov.clone())],
                        Sense::Le,
                        "2r0+r1",
                    ),
                    t(&[("R0", 1), ("R1", 1), ("R2", 1)], &[(1, a)], Sense::Le, "sum via b1"),
                    t(
                        &[("R0", 1), ("R1", 1), ("R2", 1)],
                        &[(1, b2.clone()), (1, a2.clone())],
                        Sense::Le,
                        "sum via b2",
                    ),
                    t(
                        &[("R0", 1), ("R1", 1), ("R2", 1)],
                        &[(1, b3.clone()), (1, a3.clone())],
                        Sense::Le,
                        "sum via b3",
                    ),
                    t(
                        &[("R0", 1), ("R1", 1), ("R2", 1)],
                        &[
                            (1, b2u.clone()),
                            (1, b3.clone()),
                            (1, a23.clone()),
                            (-1, cov.clone()),
                        ],
                        Sense::Le,
                        "sum via b2|u",
                    ),
                    t(
                        &[("R0", 2), ("R1", 1), ("R2", 1)],
                        &[(1, b2.clone()), (1, b3.clone()), (1, a23.clone()), (-1, cov.clone())],
                        Sense::Le,
                        "2r0+r1+r2",
                    ),
                    t(
                        &[("R0", 2), ("R1", 2), ("R2", 1)],
                        &[(1, b2.clone()), (1, b3.clone()), (1, a3.clone()), (-1, cov.clone())],
                        Sense::Le,
                        "2r0+2r1+r2",
                    ),
                    t(
                        &[("R0", 2), ("R1", 2), ("R2", 2)],
                        &[
                            (1, b2.clone()),
                            (1, b3.clone()),
                            (1, a2),
                            (1, a3),
                            (-1, cov.clone()),
                        ],
                        Sense::Le,
                        "2r0+2r1+2r2 via satellites",
                    ),
                    t(
                        &[("R0", 2), ("R1", 2), ("R2", 2)],
                        &[(1, b2u), (1, b3), (1, au), (1, a23), (-1, cov)],
                        Sense::Le,
                        "2r0+2r1+2r2 via cloud",
                    ),
                ],
                substitutions: vec![],
                banner: None,
            }
        }
    }
}

/// The classical input to a theorem evaluation: a joint pmf over the
/// catalog entry's registers and a deterministic map from register tuples to
/// channel inputs.
#[derive(Clone, Debug)]
pub struct RegionInput {
    pub dist: ClassicalJoint,
    pub x_of: Vec<usize>,
}

impl RegionInput {
    /// For specs whose registers contain `x` explicitly, the deterministic
    /// map is the x-component of the tuple.
    pub fn from_dist_with_x(dist: ClassicalJoint) -> Result<Self> {
        let pos = dist.register_pos("x")?;
        let x_of = (0..dist.total())
            .map(|idx| dist.tuple_of(idx)[pos])
            .collect();
        Ok(Self { dist, x_of })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropicAtom {
    pub expression: String,
    pub value: f64,
    #[serde(serialize_with = "ser_rational")]
    pub rational_value: Rational,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

#[derive(Clone, Debug)]
pub struct RegionInstance {
    pub id: TheoremId,
    pub atoms: BTreeMap<String, EntropicAtom>,
    pub system: InequalitySystem,
    pub banner: Option<&'static str>,
}

fn check_markov(kind: MarkovKind, dist: &ClassicalJoint, tol: f64) -> Result<()> {
    match kind {
        MarkovKind::None => Ok(()),
        MarkovKind::ChainUvx => {
            // p(u, v, x) = p(u, v) p(x | v)
            let pu_v = dist.marginal(&["u", "v"])?;
            let pvx = dist.marginal(&["v", "x"])?;
            let pv = dist.marginal(&["v"])?;
            let du = dist.registers[dist.register_pos("u")?].alphabet_size;
            let dv = dist.registers[dist.register_pos("v")?].alphabet_size;
            let dx = dist.registers[dist.register_pos("x")?].alphabet_size;
            for u in 0..du {
                for v in 0..dv {
                    for x in 0..dx {
                        let p = dist.pmf[dist.index_of(&[u, v, x])];
                        let expect = if pv.pmf[v] > 0.0 {
                            pu_v.pmf[pu_v.index_of(&[u, v])] * pvx.pmf[pvx.index_of(&[v, x])]
                                / pv.pmf[v]
                        } else {
                            0.0
                        };
                        if (p - expect).abs() > tol {
                            return Err(QbcError::MarkovViolation(format!(
                                "p(u={u},v={v},x={x}) = {p} but p(u,v)p(x|v) = {expect}"
                            )));
                        }
                    }
                }
            }
            Ok(())
        }
        MarkovKind::DoubleVee => {
            // both p(u,v2,v3,x) = p(u,v2) p(v3,x|v2)
            //  and p(u,v2,v3,x) = p(u,v3) p(v2,x|v3)
            for (mid, other) in [("v2", "v3"), ("v3", "v2")] {
                let p_um = dist.marginal(&["u", mid])?;
                let p_mrest = dist.marginal(&[mid, other, "x"])?;
                let p_m = dist.marginal(&[mid])?;
                let du = dist.registers[dist.register_pos("u")?].alphabet_size;
                let dm = dist.registers[dist.register_pos(mid)?].alphabet_size;
                let dd = dist.registers[dist.register_pos(other)?].alphabet_size;
                let dx = dist.registers[dist.register_pos("x")?].alphabet_size;
                for u in 0..du {
                    for m in 0..dm {
                        for o in 0..dd {
                            for x in 0..dx {
                                let tuple = if mid == "v2" {
                                    [u, m, o, x]
                                } else {
                                    [u, o, m, x]
                                };
                                let p = dist.pmf[dist.index_of(&tuple)];
                                let expect = if p_m.pmf[m] > 0.0 {
                                    p_um.pmf[p_um.index_of(&[u, m])]
                                        * p_mrest.pmf[p_mrest.index_of(&[m, o, x])]
                                        / p_m.pmf[m]
                                } else {
                                    0.0
                                };
                                if (p - expect).abs() > tol {
                                    return Err(QbcError::MarkovViolation(format!(
                                        "factorization through {mid} fails at \
                                         (u={u},{mid}={m},{other}={o},x={x}): \
                                         {p} vs {expect}"
                                    )));
                                }
                            }
                        }
                    }
                }
            }
            Ok(())
        }
    }
}

/// Evaluate every atom of the catalog entry's templates on the instance (at Shannon
/// order) and materialize the rational inequality system, with nonnegativity
/// of all rate and auxiliary variables.
pub fn evaluate_region(
    id: TheoremId,
    channel: &BroadcastChannel,
    input: &RegionInput,
    tol: f64,
) -> Result<RegionInstance> {
    let spec = region_spec(id);
    for r in &spec.registers {
        input.dist.register_pos(r)?;
    }
    check_markov(spec.markov, &input.dist, 1e-9)?;
    let _ = tol;

    // receiver states are shared across atoms
    let mut receiver_states: [Option<CqState>; 3] = [None, None, None];
    let classical_state = CqState::classical(input.dist.clone());
    let mut atoms: BTreeMap<String, EntropicAtom> = BTreeMap::new();
    for ineq in &spec.ineqs {
        for (_, expr) in &ineq.atom_terms {
            if atoms.contains_key(&expr.key()) {
                continue;
            }
            let left: Vec<&str> = expr.left.iter().map(|s| s.as_str()).collect();
            let cond: Vec<&str> = expr.cond.iter().map(|s| s.as_str()).collect();
            let value = match &expr.right {
                AtomRight::Receiver(i) => {
                    let receiver = Receiver::ALL[*i];
                    if receiver_states[*i].is_none() {
                        receiver_states[*i] =
                            Some(channel.cq_state(&input.dist, &input.x_of, receiver)?);
                    }
                    let state = receiver_states[*i].as_ref().unwrap();
                    shannon_mi(&MutualInfoRequest::new(
                        state,
                        &left,
                        RightSide::Quantum,
                        &cond,
                    ))?
                }
                AtomRight::Registers(rs) => shannon_mi(&MutualInfoRequest::new(
                    &classical_state,
                    &left,
                    RightSide::Registers(rs.clone()),
                    &cond,
                ))?,
            };
            atoms.insert(
                expr.key(),
                EntropicAtom {
                    expression: expr.key(),
                    value,
                    rational_value: rational_q40(value),
                },
            );
        }
    }

    let mut vars: Vec<&str> = spec.rate_vars.clone();
    vars.extend(spec.aux_vars.iter());
    let mut system = InequalitySystem::new(&vars);
    for ineq in &spec.ineqs {
        let mut rhs = Rational::zero();
        for (c, expr) in &ineq.atom_terms {
            rhs += Rational::from_integer((*c).into()) * atoms[&expr.key()].rational_value.clone();
        }
        let terms: Vec<(&str, Rational)> = ineq
            .rate_coeffs
            .iter()
            .map(|(v, c)| (v.as_str(), Rational::from_integer((*c).into())))
            .collect();
        match ineq.sense {
            Sense::Le => system.push(LinearInequality::new(&terms, rhs, &ineq.tag)),
            Sense::Ge => {
                let neg: Vec<(&str, Rational)> =
                    terms.into_iter().map(|(v, c)| (v, -c)).collect();
                system.push(LinearInequality::new(&neg, -rhs, &ineq.tag));
            }
        }
    }
    for (var, parts) in &spec.substitutions {
        system.push_equality(var, parts, &format!("{var} split"));
    }
    for v in &vars {
        system.push_nonneg(v);
    }
    Ok(RegionInstance {
        id,
        atoms,
        system,
        banner: spec.banner,
    })
}

/// Eliminate the preliminary system's auxiliary variables and compare with
/// the final region, exactly.
pub fn reproduce_final_region(
    channel: &BroadcastChannel,
    input: &RegionInput,
    prelim_id: TheoremId,
    final_id: TheoremId,
    tol: f64,
) -> Result<bool> {
    let prelim = evaluate_region(prelim_id, channel, input, tol)?;
    let fin = evaluate_region(final_id, channel, input, tol)?;
    let spec = region_spec(prelim_id);
    let projected = prelim.system.fm_eliminate(&spec.aux_vars)?;
    projected.polytope_equal(&fin.system)
}

// ---------------------------------------------------------------------------
// Special-case checks
// ---------------------------------------------------------------------------

/// Theorem-2 instance with U = V equals the superposition instance.
pub fn check_superposition_collapse(
    channel: &BroadcastChannel,
    p_ux: &ClassicalJoint,
    x_of: &[usize],
    tol: f64,
) -> Result<bool> {
    let d_u = p_ux.registers[p_ux.register_pos("u")?].alphabet_size;
    let d_x = p_ux.registers[p_ux.register_pos("x")?].alphabet_size;
    // lift p(u, x) to p(u, v, x) with v = u
    let regs = vec![
        ClassicalRegister::new("u", d_u),
        ClassicalRegister::new("v", d_u),
        ClassicalRegister::new("x", d_x),
    ];
    let mut pmf = vec![0.0; d_u * d_u * d_x];
    let mut lifted_x = vec![0usize; d_u * d_u * d_x];
    for u in 0..d_u {
        for x in 0..d_x {
            let idx = (u * d_u + u) * d_x + x;
            pmf[idx] = p_ux.pmf[p_ux.index_of(&[u, x])];
        }
    }
    for u in 0..d_u {
        for v in 0..d_u {
            for x in 0..d_x {
                lifted_x[(u * d_u + v) * d_x + x] = x_of[p_ux.index_of(&[u, x])];
            }
        }
    }
    let lifted = RegionInput {
        dist: ClassicalJoint::new(regs, pmf)?,
        x_of: lifted_x,
    };
    let two = evaluate_region(TheoremId::MultilevelFinal, channel, &lifted, tol)?;
    let sup = evaluate_region(
        TheoremId::Superposition,
        channel,
        &RegionInput {
            dist: p_ux.clone(),
            x_of: x_of.to_vec(),
        },
        tol,
    )?;
    two.system.polytope_equal(&sup.system)
}

/// Data-processing chain of the post-converse remark on degraded channels:
/// `I(V2;B2) - I(V2;B1|U) <= I(U;B2)`. Returns the margin (rhs - lhs).
pub fn dp_chain_margin(
    channel: &BroadcastChannel,
    dist: &ClassicalJoint,
    x_of: &[usize],
) -> Result<f64> {
    let b2 = channel.cq_state(dist, x_of, Receiver::B2)?;
    let b1 = channel.cq_state(dist, x_of, Receiver::B1)?;
    let i_v2b2 = shannon_mi(&MutualInfoRequest::new(&b2, &["v2"], RightSide::Quantum, &[]))?;
    let i_v2b1u = shannon_mi(&MutualInfoRequest::new(
        &b1,
        &["v2"],
        RightSide::Quantum,
        &["u"],
    ))?;
    let i_ub2 = shannon_mi(&MutualInfoRequest::new(&b2, &["u"], RightSide::Quantum, &[]))?;
    Ok(i_ub2 - (i_v2b2 - i_v2b1u))
}

/// On a degraded channel, the general-channel no-go region instance is
/// contained in the multilevel outer-bound form evaluated with V = V3
/// (the reduction stated after the converse theorem).
pub fn check_converse_reduction(
    channel: &BroadcastChannel,
    input: &RegionInput,
    tol: f64,
) -> Result<bool> {
    let thm6 = evaluate_region(TheoremId::ConverseGeneral2, channel, input, tol)?;
    // reduced region: multilevel converse with v := v3
    let dist = &input.dist;
    let pos_u = dist.register_pos("u")?;
    let pos_v3 = dist.register_pos("v3")?;
    let pos_x = dist.register_pos("x")?;
    let regs = vec![
        ClassicalRegister::new("u", dist.registers[pos_u].alphabet_size),
        ClassicalRegister::new("v", dist.registers[pos_v3].alphabet_size),
        ClassicalRegister::new("x", dist.registers[pos_x].alphabet_size),
    ];
    let total = regs.iter().map(|r| r.alphabet_size).product::<usize>();
    let mut pmf = vec![0.0; total];
    let mut x_of = vec![0usize; total];
    for idx in 0..dist.total() {
        let tpl = dist.tuple_of(idx);
        let out = (tpl[pos_u] * regs[1].alphabet_size + tpl[pos_v3]) * regs[2].alphabet_size
            + tpl[pos_x];
        pmf[out] += dist.pmf[idx];
        x_of[out] = input.x_of[idx];
    }
    let reduced_input = RegionInput {
        dist: ClassicalJoint::new(regs, pmf)?,
        x_of,
    };
    let reduced = evaluate_region(
        TheoremId::ConverseMultilevel,
        channel,
        &reduced_input,
        tol,
    )?;
    thm6.system.contains(&reduced.system)
}

/// On a degraded channel, the superposition achievable instance (evaluated
/// at U) is contained in the general-channel no-go instance evaluated at
/// V2 = V3 = U: achievable-inside-converse coherence.
pub fn check_superposition_inside_converse(
    channel: &BroadcastChannel,
    p_ux: &ClassicalJoint,
    x_of: &[usize],
    tol: f64,
) -> Result<bool> {
    let sup = evaluate_region(
        TheoremId::Superposition,
        channel,
        &RegionInput {
            dist: p_ux.clone(),
            x_of: x_of.to_vec(),
        },
        tol,
    )?;
    // lift p(u, x) to registers (u, v2, v3, x) with v2 = v3 = u
    let d_u = p_ux.registers[p_ux.register_pos("u")?].alphabet_size;
    let d_x = p_ux.registers[p_ux.register_pos("x")?].alphabet_size;
    let regs = vec![
        ClassicalRegister::new("u", d_u),
        ClassicalRegister::new("v2", d_u),
        ClassicalRegister::new("v3", d_u),
        ClassicalRegister::new("x", d_x),
    ];
    let total = d_u * d_u * d_u * d_x;
    let mut pmf = vec![0.0; total];
    let mut lifted_x = vec![0usize; total];
    for u in 0..d_u {
        for x in 0..d_x {
            let idx = ((u * d_u + u) * d_u + u) * d_x + x;
            pmf[idx] = p_ux.pmf[p_ux.index_of(&[u, x])];
        }
    }
    for idx in 0..total {
        let mut rem = idx;
        let x = rem % d_x;
        rem /= d_x;
        rem /= d_u;
        rem /= d_u;
        let u = rem;
        lifted_x[idx] = x_of[p_ux.index_of(&[u, x])];
    }
    let conv = evaluate_region(
        TheoremId::ConverseGeneral2,
        channel,
        &RegionInput {
            dist: ClassicalJoint::new(regs, pmf)?,
            x_of: lifted_x,
        },
        tol,
    )?;
    sup.system.contains(&conv.system)
}

// ---------------------------------------------------------------------------
// Pareto frontier search
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ParetoPoint {
    pub rates: Vec<f64>,
    pub direction: Vec<f64>,
    pub pmf: Vec<f64>,
    pub x_of: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ParetoConfig {
    pub samples: usize,
    pub refinements: usize,
    pub directions: usize,
    pub seed: u64,
    pub aux_size: usize,
}

impl Default for ParetoConfig {
    fn default() -> Self {
        Self {
            samples: 40,
            refinements: 3,
            directions: 9,
            seed: 0,
            aux_size: 2,
        }
    }
}

/// Sample an admissible distribution for the given theorem.
pub fn sample_input(
    id: TheoremId,
    channel: &BroadcastChannel,
    s: &mut Sampler,
    aux: usize,
) -> Result<RegionInput> {
    let d_x = channel.input_size;
    match region_spec(id).markov {
        MarkovKind::None => {
            let spec = region_spec(id);
            let regs: Vec<(&str, usize)> = spec
                .registers
                .iter()
                .map(|r| (*r, if *r == "x" { d_x } else { aux }))
                .collect();
            let dist = s.random_joint(&regs);
            if spec.registers.contains(&"x") {
                RegionInput::from_dist_with_x(dist)
            } else {
                let total = dist.total();
                let x_of = s.random_map(total, d_x);
                Ok(RegionInput { dist, x_of })
            }
        }
        MarkovKind::ChainUvx => RegionInput::from_dist_with_x(s.random_markov_uvx(aux, aux, d_x)),
        MarkovKind::DoubleVee => {
            let dist = if s.below(2) == 0 {
                s.random_double_markov(aux, aux, d_x)
            } else {
                s.random_double_markov_coupled(aux, aux, d_x)
            };
            RegionInput::from_dist_with_x(dist)
        }
    }
}

/// Random plus coordinate-refined search over admissible distributions,
/// maximizing swept direction weights over each instance's polytope; returns
/// the nondominated corner points with their witnessing distributions.
pub fn pareto_search(
    id: TheoremId,
    channel: &BroadcastChannel,
    cfg: &ParetoConfig,
    tol: f64,
) -> Result<Vec<ParetoPoint>> {
    let spec = region_spec(id);
    let nrates = spec.rate_vars.len();
    let mut points: Vec<ParetoPoint> = Vec::new();

    let directions: Vec<Vec<f64>> = if nrates == 2 {
        (0..cfg.directions)
            .map(|k| {
                let th = std::f64::consts::FRAC_PI_2 * (k as f64 + 0.5) / cfg.directions as f64;
                vec![th.cos(), th.sin()]
            })
            .collect()
    } else {
        let mut dirs = vec![vec![1.0; nrates]];
        for i in 0..nrates {
            let mut d = vec![0.2; nrates];
            d[i] = 1.0;
            dirs.push(d);
        }
        dirs
    };

    let evaluate_candidate = |input: &RegionInput,
                              points: &mut Vec<ParetoPoint>|
     -> Result<f64> {
        let inst = evaluate_region(id, channel, input, tol)?;
        let mut best_score = 0.0_f64;
        for dir in &directions {
            let mut obj = BTreeMap::new();
            for (v, w) in spec.rate_vars.iter().zip(dir.iter()) {
                obj.insert(v.to_string(), rational_q40(*w));
            }
            if let crate::polyhedra::LpOutcome::Optimal(val) = inst.system.lp_max(&obj) {
                let score = rational_to_f64(&val);
                best_score = best_score.max(score);
                // read off a maximizing corner: pin the direction value, then
                // maximize the rates lexicographically
                let mut sub = inst.system.clone();
                let terms: Vec<(&str, Rational)> = spec
                    .rate_vars
                    .iter()
                    .zip(dir.iter())
                    .map(|(v, w)| (*v, -rational_q40(*w)))
                    .collect();
                sub.push(LinearInequality::new(&terms, -val.clone(), "pin"));
                let mut rates = Vec::with_capacity(nrates);
                for v in &spec.rate_vars {
                    let mut one = BTreeMap::new();
                    one.insert(v.to_string(), rational_q40(1.0));
                    let r = match sub.lp_max(&one) {
                        crate::polyhedra::LpOutcome::Optimal(r) => {
                            let rf = rational_to_f64(&r);
                            sub.push(LinearInequality::new(
                                &[(*v, -Rational::from_integer(1.into()))],
                                -r,
                                "fix",
                            ));
                            rf
                        }
                        _ => 0.0,
                    };
                    rates.push(r);
                }
                points.push(ParetoPoint {
                    rates,
                    direction: dir.clone(),
                    pmf: input.dist.pmf.clone(),
                    x_of: input.x_of.clone(),
                });
            }
        }
        Ok(best_score)
    };

    let mut best: Option<(f64, RegionInput)> = None;
    for k in 0..cfg.samples {
        let mut s = Sampler::child(cfg.seed, k as u64);
        let input = sample_input(id, channel, &mut s, cfg.aux_size)?;
        let score = evaluate_candidate(&input, &mut points)?;
        if best.as_ref().map(|(b, _)| score > *b).unwrap_or(true) {
            best = Some((score, input));
        }
    }
    // coordinate refinement around the best distribution found
    if let Some((mut best_score, mut best_input)) = best {
        for r in 0..cfg.refinements {
            let mut s = Sampler::child(cfg.seed.wrapping_add(1), r as u64);
            for _ in 0..8 {
                let jitter = sample_input(id, channel, &mut s, cfg.aux_size)?;
                if jitter.dist.pmf.len() != best_input.dist.pmf.len() {
                    continue;
                }
                let lam = 0.2 / (r + 1) as f64;
                let mut pmf = best_input.dist.pmf.clone();
                for (p, q) in pmf.iter_mut().zip(jitter.dist.pmf.iter()) {
                    *p = (1.0 - lam) * *p + lam * q;
                }
                let total: f64 = pmf.iter().sum();
                for p in pmf.iter_mut() {
                    *p /= total;
                }
                let cand = RegionInput {
                    dist: ClassicalJoint::new(best_input.dist.registers.clone(), pmf)?,
                    x_of: best_input.x_of.clone(),
                };
                if check_markov(spec.markov, &cand.dist, 1e-9).is_err() {
                    continue;
                }
                let score = evaluate_candidate(&cand, &mut points)?;
                if score > best_score {
                    best_score = score;
                    best_input = cand;
                }
            }
        }
    }

    // keep nondominated points
    let dominated = |a: &ParetoPoint, b: &ParetoPoint| {
        a.rates
            .iter()
            .zip(b.rates.iter())
            .all(|(x, y)| x <= &(y + 1e-12))
            && a.rates
                .iter()
                .zip(b.rates.iter())
                .any(|(x, y)| x + 1e-9 < *y)
    };
    let mut frontier: Vec<ParetoPoint> = Vec::new();
    for p in points {
        if frontier.iter().any(|q| dominated(&p, q)) {
            continue;
        }
        let duplicate = frontier.iter().any(|q| {
            q.rates
                .iter()
                .zip(p.rates.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-9)
        });
        if duplicate {
            continue;
        }
        frontier.retain(|q| !dominated(q, &p));
        frontier.push(p);
    }
    frontier.sort_by(|a, b| a.rates[0].partial_cmp(&b.rates[0]).unwrap());
    Ok(frontier)
}
