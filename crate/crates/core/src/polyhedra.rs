//! Exact-rational linear inequality systems, Fourier-Motzkin variable
//! elimination with LP-based redundancy pruning, and polytope containment
//! and equality through an exact rational simplex.
//!
//! No floating-point value enters this module's types: callers quantize
//! entropic constants once (see `rational_q40`) and build every system in a
//! comparison from the same quantized atoms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{QbcError, Result};

pub type Rational = BigRational;

/// Shared quantization for entropic constants: round to nearest multiple of
/// 2^-40. Applied identically to every atom before any system is built, so
/// polytope comparisons are never broken by independent roundings.
pub fn rational_q40(x: f64) -> Rational {
    let denom: i64 = 1 << 40;
    let scaled = (x * denom as f64).round();
    Rational::new(BigInt::from(scaled as i64), BigInt::from(denom))
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    let n = r.numer().to_string().parse::<f64>().unwrap_or(f64::NAN);
    let d = r.denom().to_string().parse::<f64>().unwrap_or(f64::NAN);
    n / d
}

/// `sum coeffs[v] * v <= rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearInequality {
    pub coeffs: BTreeMap<String, Rational>,
    pub rhs: Rational,
    pub provenance: String,
}

impl LinearInequality {
    pub fn new(terms: &[(&str, Rational)], rhs: Rational, provenance: &str) -> Self {
        let mut coeffs = BTreeMap::new();
        for (v, c) in terms {
            if !c.is_zero() {
                let e = coeffs.entry(v.to_string()).or_insert_with(Rational::zero);
                *e += c.clone();
            }
        }
        coeffs.retain(|_, c| !c.is_zero());
        Self {
            coeffs,
            rhs,
            provenance: provenance.to_string(),
        }
    }

    pub fn is_tautology(&self) -> bool {
        self.coeffs.is_empty() && !self.rhs.is_negative()
    }

    pub fn is_contradiction(&self) -> bool {
        self.coeffs.is_empty() && self.rhs.is_negative()
    }

    /// Canonical form: integer coefficients with content 1 and deterministic
    /// key order; used for exact deduplication.
    fn canonical_key(&self) -> String {
        let mut lcm = BigInt::one();
        for c in self.coeffs.values().chain(std::iter::once(&self.rhs)) {
            lcm = num_integer::lcm(lcm, c.denom().clone());
        }
        let mut ints: Vec<(String, BigInt)> = self
            .coeffs
            .iter()
            .map(|(v, c)| (v.clone(), c.numer() * (&lcm / c.denom())))
            .collect();
        let rhs_int = self.rhs.numer() * (&lcm / self.rhs.denom());
        let mut gcd = rhs_int.abs();
        for (_, c) in &ints {
            gcd = num_integer::gcd(gcd, c.abs());
        }
        if gcd.is_zero() {
            gcd = BigInt::one();
        }
        let mut s = String::new();
        for (v, c) in ints.iter_mut() {
            let _ = write!(s, "{}*{} ", c.clone() / &gcd, v);
        }
        let _ = write!(s, "<= {}", rhs_int / &gcd);
        s
    }

    fn eval_lhs(&self, point: &BTreeMap<String, Rational>) -> Rational {
        let mut acc = Rational::zero();
        for (v, c) in &self.coeffs {
            if let Some(x) = point.get(v) {
                acc += c * x;
            }
        }
        acc
    }

    pub fn satisfied_by(&self, point: &BTreeMap<String, Rational>) -> bool {
        self.eval_lhs(point) <= self.rhs
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal(Rational),
    Unbounded,
    Infeasible,
}

/// A conjunction of `<=` inequalities over named variables.
#[derive(Clone, Debug)]
pub struct InequalitySystem {
    pub variables: Vec<String>,
    pub inequalities: Vec<LinearInequality>,
}

impl InequalitySystem {
    pub fn new(variables: &[&str]) -> Self {
        Self {
            variables: variables.iter().map(|v| v.to_string()).collect(),
            inequalities: Vec::new(),
        }
    }

    pub fn push(&mut self, ineq: LinearInequality) {
        for v in ineq.coeffs.keys() {
            assert!(
                self.variables.iter().any(|w| w == v),
                "unknown variable {v}"
            );
        }
        self.inequalities.push(ineq);
    }

    /// Add `var >= 0`.
    pub fn push_nonneg(&mut self, var: &str) {
        self.push(LinearInequality::new(
            &[(var, -Rational::one())],
            Rational::zero(),
            &format!("nonneg {var}"),
        ));
    }

    /// Add the equality `var = sum(parts)` as two inequalities.
    pub fn push_equality(&mut self, var: &str, parts: &[&str], provenance: &str) {
        let mut terms: Vec<(&str, Rational)> = vec![(var, Rational::one())];
        for p in parts {
            terms.push((p, -Rational::one()));
        }
        self.push(LinearInequality::new(
            &terms,
            Rational::zero(),
            provenance,
        ));
        let neg: Vec<(&str, Rational)> =
            terms.into_iter().map(|(v, c)| (v, -c)).collect();
        self.push(LinearInequality::new(&neg, Rational::zero(), provenance));
    }

    pub fn is_feasible(&self) -> bool {
        if self.inequalities.iter().any(|i| i.is_contradiction()) {
            return false;
        }
        !matches!(
            self.lp_max(&BTreeMap::new()),
            LpOutcome::Infeasible
        )
    }

    /// Exact maximum of `sum objective[v] * v` over the system.
    pub fn lp_max(&self, objective: &BTreeMap<String, Rational>) -> LpOutcome {
        if self.inequalities.iter().any(|i| i.is_contradiction()) {
            return LpOutcome::Infeasible;
        }
        let rows: Vec<&LinearInequality> = self
            .inequalities
            .iter()
            .filter(|i| !i.coeffs.is_empty())
            .collect();
        let n = self.variables.len();
        let mut a = vec![vec![Rational::zero(); n]; rows.len()];
        let mut b = vec![Rational::zero(); rows.len()];
        for (r, ineq) in rows.iter().enumerate() {
            for (v, c) in &ineq.coeffs {
                let j = self.variables.iter().position(|w| w == v).unwrap();
                a[r][j] = c.clone();
            }
            b[r] = ineq.rhs.clone();
        }
        let mut c = vec![Rational::zero(); n];
        for (v, coef) in objective {
            if let Some(j) = self.variables.iter().position(|w| w == v) {
                c[j] = coef.clone();
            }
        }
        simplex_max_free(&a, &b, &c)
    }

    /// Exact Fourier-Motzkin projection: drop the listed variables so that a
    /// point over the remaining variables satisfies the output iff it extends
    /// to a point satisfying the input. Redundant rows are pruned by exact-LP
    /// dominance after every elimination step.
    pub fn fm_eliminate(&self, drop_vars: &[&str]) -> Result<InequalitySystem> {
        for v in drop_vars {
            if !self.variables.iter().any(|w| w == v) {
                return Err(QbcError::UnknownRegister(v.to_string()));
            }
        }
        let mut sys = self.clone();
        let mut remaining: Vec<String> = drop_vars.iter().map(|v| v.to_string()).collect();
        while !remaining.is_empty() {
            // heuristic: eliminate the variable minimizing pos*neg products
            let (best_idx, _) = remaining
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let pos = sys
                        .inequalities
                        .iter()
                        .filter(|q| q.coeffs.get(v).map(|c| c.is_positive()).unwrap_or(false))
                        .count();
                    let neg = sys
                        .inequalities
                        .iter()
                        .filter(|q| q.coeffs.get(v).map(|c| c.is_negative()).unwrap_or(false))
                        .count();
                    (i, pos * neg)
                })
                .min_by_key(|&(_, cost)| cost)
                .unwrap();
            let var = remaining.remove(best_idx);
            sys = sys.eliminate_one(&var);
            sys.prune_redundant();
        }
        Ok(sys)
    }

    fn eliminate_one(&self, var: &str) -> InequalitySystem {
        let mut out = InequalitySystem::new(
            &self
                .variables
                .iter()
                .filter(|v| v.as_str() != var)
                .map(|v| v.as_str())
                .collect::<Vec<_>>(),
        );
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for ineq in &self.inequalities {
            match ineq.coeffs.get(var) {
                None => out.inequalities.push(ineq.clone()),
                Some(c) if c.is_positive() => pos.push(ineq),
                Some(_) => neg.push(ineq),
            }
        }
        for p in &pos {
            let cp = p.coeffs.get(var).unwrap().clone();
            for q in &neg {
                let cq = q.coeffs.get(var).unwrap().clone();
                // cp > 0, cq < 0: scale p by -cq and q by cp, then add
                let mut coeffs: BTreeMap<String, Rational> = BTreeMap::new();
                for (v, c) in &p.coeffs {
                    if v != var {
                        *coeffs.entry(v.clone()).or_insert_with(Rational::zero) +=
                            c * (-cq.clone());
                    }
                }
                for (v, c) in &q.coeffs {
                    if v != var {
                        *coeffs.entry(v.clone()).or_insert_with(Rational::zero) +=
                            c * cp.clone();
                    }
                }
                coeffs.retain(|_, c| !c.is_zero());
                let rhs = &p.rhs * (-cq.clone()) + &q.rhs * cp.clone();
                out.inequalities.push(LinearInequality {
                    coeffs,
                    rhs,
                    provenance: "fm".into(),
                });
            }
        }
        out
    }

    /// Remove tautologies, exact duplicates, and LP-dominated rows.
    pub fn prune_redundant(&mut self) {
        if self.inequalities.iter().any(|i| i.is_contradiction()) {
            // infeasible: keep a single contradiction marker
            self.inequalities = vec![LinearInequality {
                coeffs: BTreeMap::new(),
                rhs: -Rational::one(),
                provenance: "infeasible".into(),
            }];
            return;
        }
        self.inequalities.retain(|i| !i.is_tautology());
        let mut seen = std::collections::HashSet::new();
        self.inequalities
            .retain(|i| seen.insert(i.canonical_key()));

        let mut k = 0;
        while k < self.inequalities.len() {
            let candidate = self.inequalities[k].clone();
            let mut rest = self.clone();
            rest.inequalities.remove(k);
            let redundant = match rest.lp_max(&candidate.coeffs) {
                LpOutcome::Optimal(v) => v <= candidate.rhs,
                LpOutcome::Unbounded => false,
                LpOutcome::Infeasible => true,
            };
            if redundant {
                self.inequalities.remove(k);
            } else {
                k += 1;
            }
        }
    }

    fn check_bounded(&self) -> Result<()> {
        for v in &self.variables {
            for sign in [Rational::one(), -Rational::one()] {
                let mut obj = BTreeMap::new();
                obj.insert(v.clone(), sign);
                if matches!(self.lp_max(&obj), LpOutcome::Unbounded) {
                    return Err(QbcError::Unbounded);
                }
            }
        }
        Ok(())
    }

    /// `self` is contained in `other` iff every inequality of `other` is
    /// dominated over `self`.
    pub fn contains(&self, other: &InequalitySystem) -> Result<bool> {
        if !other.is_feasible() {
            return Ok(!self.is_feasible());
        }
        if !self.is_feasible() {
            return Ok(true);
        }
        self.check_bounded()?;
        other.check_bounded()?;
        for ineq in &other.inequalities {
            if ineq.coeffs.is_empty() {
                continue;
            }
            match self.lp_max(&ineq.coeffs) {
                LpOutcome::Optimal(v) => {
                    if v > ineq.rhs {
                        return Ok(false);
                    }
                }
                LpOutcome::Unbounded => return Ok(false),
                LpOutcome::Infeasible => return Ok(true),
            }
        }
        Ok(true)
    }

    pub fn polytope_equal(&self, other: &InequalitySystem) -> Result<bool> {
        Ok(other.contains(self)? && self.contains(other)?)
    }

    /// One inequality per line, exact fractions.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vars: {}", self.variables.join(" "));
        for ineq in &self.inequalities {
            let mut first = true;
            for (v, c) in &ineq.coeffs {
                if !first {
                    let _ = write!(s, " + ");
                }
                let _ = write!(s, "{c} {v}");
                first = false;
            }
            if first {
                let _ = write!(s, "0");
            }
            let _ = writeln!(s, " <= {}   # {}", ineq.rhs, ineq.provenance);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<InequalitySystem> {
        let mut lines = text.lines();
        let head = lines
            .next()
            .ok_or_else(|| QbcError::Parse("empty system".into()))?;
        let vars: Vec<&str> = head
            .strip_prefix("vars:")
            .ok_or_else(|| QbcError::Parse("missing vars header".into()))?
            .split_whitespace()
            .collect();
        let mut sys = InequalitySystem::new(&vars);
        for line in lines {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (lhs, rhs) = line
                .split_once("<=")
                .ok_or_else(|| QbcError::Parse(format!("no <= in `{line}`")))?;
            let rhs: Rational = rhs
                .trim()
                .parse()
                .map_err(|e| QbcError::Parse(format!("rhs `{rhs}`: {e}")))?;
            let mut terms = Vec::new();
            for term in lhs.split('+') {
                let term = term.trim();
                if term == "0" || term.is_empty() {
                    continue;
                }
                let mut it = term.split_whitespace();
                let c: Rational = it
                    .next()
                    .ok_or_else(|| QbcError::Parse(format!("bad term `{term}`")))?
                    .parse()
                    .map_err(|e| QbcError::Parse(format!("coeff in `{term}`: {e}")))?;
                let v = it
                    .next()
                    .ok_or_else(|| QbcError::Parse(format!("bad term `{term}`")))?;
                terms.push((v, c));
            }
            let terms_ref: Vec<(&str, Rational)> = terms.iter().map(|(v, c)| (*v, c.clone())).collect();
            sys.push(LinearInequality::new(&terms_ref, rhs, "parsed"));
        }
        Ok(sys)
    }
}

// ---------------------------------------------------------------------------
// Exact rational simplex (two-phase, Bland's rule) for free variables.
// ---------------------------------------------------------------------------

/// Maximize `c . x` subject to `A x <= b` with `x` free, by splitting
/// `x = u - v` with `u, v >= 0` and running a two-phase tableau simplex.
fn simplex_max_free(a: &[Vec<Rational>], b: &[Rational], c: &[Rational]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    if m == 0 {
        let zero_obj = c.iter().all(|x| x.is_zero());
        return if zero_obj {
            LpOutcome::Optimal(Rational::zero())
        } else {
            LpOutcomeUnboundedOrZero(c)
        };
    }
    // columns: 2n split vars, m slacks, then artificials as needed
    let base_cols = 2 * n + m;
    let mut rows: Vec<Vec<Rational>> = Vec::with_capacity(m);
    let mut rhs: Vec<Rational> = Vec::with_capacity(m);
    let mut flip: Vec<bool> = Vec::with_capacity(m);
    for i in 0..m {
        let neg = b[i].is_negative();
        flip.push(neg);
        let sgn = if neg { -Rational::one() } else { Rational::one() };
        let mut row = vec![Rational::zero(); base_cols];
        for j in 0..n {
            row[2 * j] = &a[i][j] * &sgn;
            row[2 * j + 1] = -(&a[i][j] * &sgn);
        }
        row[2 * n + i] = sgn.clone();
        rows.push(row);
        rhs.push(if neg { -b[i].clone() } else { b[i].clone() });
    }
    // artificial columns for flipped rows (slack coefficient became -1)
    let art_rows: Vec<usize> = (0..m).filter(|&i| flip[i]).collect();
    let total_cols = base_cols + art_rows.len();
    for (k, &i) in art_rows.iter().enumerate() {
        for (r, row) in rows.iter_mut().enumerate() {
            row.push(if r == i { Rational::one() } else { Rational::zero() });
            let _ = k;
        }
    }
    let mut basis: Vec<usize> = (0..m)
        .map(|i| {
            if flip[i] {
                base_cols + art_rows.iter().position(|&r| r == i).unwrap()
            } else {
                2 * n + i
            }
        })
        .collect();

    // phase 1: maximize -(sum of artificials)
    if !art_rows.is_empty() {
        let mut obj = vec![Rational::zero(); total_cols];
        for k in 0..art_rows.len() {
            obj[base_cols + k] = -Rational::one();
        }
        let opt = run_simplex(&mut rows, &mut rhs, &mut basis, &obj, total_cols);
        match opt {
            SimplexEnd::Optimal(v) => {
                if v.is_negative() {
                    return LpOutcome::Infeasible;
                }
            }
            SimplexEnd::Unbounded => unreachable!("phase-1 objective bounded above by 0"),
        }
        // pivot remaining artificials out of the basis where possible
        for r in 0..m {
            if basis[r] >= base_cols {
                if let Some(j) = (0..base_cols).find(|&j| !rows[r][j].is_zero()) {
                    pivot(&mut rows, &mut rhs, &mut basis, r, j);
                }
            }
        }
    }

    // phase 2: the real objective over split variables (artificials pinned)
    let mut obj = vec![Rational::zero(); total_cols];
    for j in 0..n {
        obj[2 * j] = c[j].clone();
        obj[2 * j + 1] = -c[j].clone();
    }
    match run_simplex(&mut rows, &mut rhs, &mut basis, &obj, base_cols) {
        SimplexEnd::Optimal(v) => LpOutcome::Optimal(v),
        SimplexEnd::Unbounded => LpOutcome::Unbounded,
    }
}

#[allow(non_snake_case)]
fn LpOutcomeUnboundedOrZero(c: &[Rational]) -> LpOutcome {
    if c.iter().all(|x| x.is_zero()) {
        LpOutcome::Optimal(Rational::zero())
    } else {
        LpOutcome::Unbounded
    }
}

enum SimplexEnd {
    Optimal(Rational),
    Unbounded,
}

/// Tableau simplex with Bland's rule. `active_cols` restricts entering
/// columns (phase 2 pins artificial columns).
fn run_simplex(
    rows: &mut [Vec<Rational>],
    rhs: &mut [Rational],
    basis: &mut [usize],
    obj: &[Rational],
    active_cols: usize,
) -> SimplexEnd {
    let m = rows.len();
    loop {
        // reduced costs: obj_j - sum_i y_i rows[i][j] with y from basis costs
        let mut entering = None;
        for j in 0..active_cols {
            if basis.contains(&j) {
                continue;
            }
            let mut red = obj[j].clone();
            for i in 0..m {
                if !rows[i][j].is_zero() {
                    red -= &obj[basis[i]] * &rows[i][j];
                }
            }
            if red.is_positive() {
                entering = Some(j);
                break; // Bland: smallest index
            }
        }
        let Some(j) = entering else {
            let mut val = Rational::zero();
            for i in 0..m {
                val += &obj[basis[i]] * &rhs[i];
            }
            return SimplexEnd::Optimal(val);
        };
        // ratio test, Bland tie-break on smallest basis index
        let mut leave: Option<(usize, Rational)> = None;
        for i in 0..m {
            if rows[i][j].is_positive() {
                let ratio = &rhs[i] / &rows[i][j];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < *lr || (ratio == *lr && basis[i] < basis[*li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else {
            return SimplexEnd::Unbounded;
        };
        pivot_full(rows, rhs, basis, r, j);
    }
}

fn pivot(rows: &mut [Vec<Rational>], rhs: &mut [Rational], basis: &mut [usize], r: usize, j: usize) {
    pivot_full(rows, rhs, basis, r, j);
}

fn pivot_full(
    rows: &mut [Vec<Rational>],
    rhs: &mut [Rational],
    basis: &mut [usize],
    r: usize,
    j: usize,
) {
    let piv = rows[r][j].clone();
    for x in rows[r].iter_mut() {
        *x /= &piv;
    }
    rhs[r] /= &piv;
    for i in 0..rows.len() {
        if i == r || rows[i][j].is_zero() {
            continue;
        }
        let f = rows[i][j].clone();
        let pivot_row = rows[r].clone();
        for (x, p) in rows[i].iter_mut().zip(pivot_row.iter()) {
            *x -= &f * p;
        }
        let pr = rhs[r].clone();
        rhs[i] -= &f * &pr;
    }
    basis[r] = j;
}
