//! Dense complex linear algebra for Hermitian operators at small dimension.
//!
//! Everything downstream (pinching maps, divergences, decoder POVMs) is built
//! from the spectral decompositions produced here. Eigenvalues are merged into
//! eigenspaces with an explicit relative clustering rule so that "number of
//! distinct eigenvalues" is a reproducible quantity.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{QbcError, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;

/// Default relative tolerance for merging eigenvalues into one eigenspace.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-9;
/// Absolute tolerance for accepting a matrix as Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Total dimension cap for dense operators.
pub const DEFAULT_DIM_CAP: usize = 256;

/// Two eigenvalues `a`, `b` belong to the same cluster when
/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn same_cluster(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

/// A dense Hermitian matrix. Construction symmetrizes the entries after
/// validating that the input is Hermitian within `HERMITICITY_TOL`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    dim: usize,
    entries: CMat,
}

impl HermitianOperator {
    pub fn new(entries: CMat) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(QbcError::NotSquare(entries.nrows(), entries.ncols()));
        }
        let diff = &entries - entries.adjoint();
        let asym = diff.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        if asym > HERMITICITY_TOL {
            return Err(QbcError::NotHermitian(asym));
        }
        Ok(Self::new_unchecked(entries))
    }

    /// Symmetrizes without the Hermiticity check. Used internally where the
    /// input is Hermitian by construction up to round-off.
    pub fn new_unchecked(entries: CMat) -> Self {
        let dim = entries.nrows();
        let sym = (&entries + entries.adjoint()).scale(0.5);
        Self { dim, entries: sym }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: CMat::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: CMat::identity(dim, dim),
        }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = CMat::zeros(dim, dim);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        Self { dim, entries: m }
    }

    /// Rank-one projector |v><v| / <v|v>.
    pub fn projector_onto(v: &nalgebra::DVector<C64>) -> Self {
        let n = v.norm();
        let v = v.unscale(n);
        Self::new_unchecked(&v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new_unchecked(&self.entries + &other.entries)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new_unchecked(&self.entries - &other.entries)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new_unchecked(self.entries.scale(s))
    }

    /// Hermitian part of the product `A * B` (exact when A and B commute).
    pub fn sym_product(&self, other: &Self) -> Self {
        Self::new_unchecked(&self.entries * &other.entries)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    /// Largest singular value, via the spectrum (operator is Hermitian).
    pub fn operator_norm(&self) -> f64 {
        self.eigenvalues_raw()
            .iter()
            .fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Raw eigenvalues, ascending, without clustering.
    pub fn eigenvalues_raw(&self) -> Vec<f64> {
        let se = self.entries.clone().symmetric_eigen();
        let mut v: Vec<f64> = se.eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// Eigenvalues (ascending) with matching eigenvector columns.
    pub fn eigen_pairs(&self) -> (Vec<f64>, CMat) {
        let se = self.entries.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
        let vals: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
        let mut vecs = CMat::zeros(self.dim, self.dim);
        for (col, &k) in order.iter().enumerate() {
            vecs.set_column(col, &se.eigenvectors.column(k));
        }
        (vals, vecs)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues_raw()
            .first()
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    /// Spectral decomposition with eigenvalue clustering at relative
    /// tolerance `cluster_tol`.
    pub fn spectral(&self, cluster_tol: f64) -> SpectralDecomposition {
        assert!(cluster_tol > 0.0, "cluster_tol must be positive");
        let se = self.entries.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());

        let mut eigenspaces = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let mut j = i + 1;
            // chain clustering on the sorted spectrum
            while j < order.len()
                && same_cluster(
                    se.eigenvalues[order[j]],
                    se.eigenvalues[order[j - 1]],
                    cluster_tol,
                )
            {
                j += 1;
            }
            let members = &order[i..j];
            let value =
                members.iter().map(|&k| se.eigenvalues[k]).sum::<f64>() / members.len() as f64;
            let mut proj = CMat::zeros(self.dim, self.dim);
            for &k in members {
                let col = se.eigenvectors.column(k);
                proj += &col * col.adjoint();
            }
            eigenspaces.push(Eigenspace {
                value,
                multiplicity: members.len(),
                projector: HermitianOperator::new_unchecked(proj),
            });
            i = j;
        }
        SpectralDecomposition {
            dim: self.dim,
            eigenspaces,
            cluster_tol,
        }
    }

    /// `self^t` on the support (zero eigenvalues map to zero). Negative powers
    /// of a rank-deficient operator take pseudo-inverse semantics on the
    /// support; this is flagged in the result.
    pub fn matrix_power(&self, t: f64, cluster_tol: f64) -> PowerResult {
        let sd = self.spectral(cluster_tol);
        let mut rank_deficient = false;
        let mut m = CMat::zeros(self.dim, self.dim);
        for es in &sd.eigenspaces {
            if same_cluster(es.value, 0.0, cluster_tol) {
                rank_deficient = true;
                continue; // zero eigenvalues map to zero
            }
            // clamp tiny negative round-off on nominally PSD inputs
            let base = es.value.max(0.0);
            if base == 0.0 {
                rank_deficient = true;
                continue;
            }
            m += es.projector.matrix().scale(base.powf(t));
        }
        PowerResult {
            op: HermitianOperator::new_unchecked(m),
            pseudo_inverse: t < 0.0 && rank_deficient,
        }
    }

    /// Projector onto the support (eigenvalues that do not cluster with zero).
    pub fn support_projector(&self, cluster_tol: f64) -> HermitianOperator {
        let sd = self.spectral(cluster_tol);
        let mut m = CMat::zeros(self.dim, self.dim);
        for es in &sd.eigenspaces {
            if !same_cluster(es.value, 0.0, cluster_tol) && es.value > 0.0 {
                m += es.projector.matrix();
            }
        }
        HermitianOperator::new_unchecked(m)
    }

    /// `log2` of the operator on its support (zero eigenvalues are skipped).
    pub fn log2_on_support(&self, cluster_tol: f64) -> HermitianOperator {
        let sd = self.spectral(cluster_tol);
        let mut m = CMat::zeros(self.dim, self.dim);
        for es in &sd.eigenspaces {
            if same_cluster(es.value, 0.0, cluster_tol) || es.value <= 0.0 {
                continue;
            }
            m += es.projector.matrix().scale(es.value.log2());
        }
        HermitianOperator::new_unchecked(m)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self::new_unchecked(self.entries.kronecker(&other.entries))
    }

    /// Partial trace over the subsystems not listed in `keep`.
    ///
    /// `dims` factorizes the total dimension as a tensor product (leftmost
    /// factor is the most significant index); `keep` lists, in increasing
    /// order, the factors retained.
    pub fn partial_trace(&self, dims: &[usize], keep: &[usize]) -> Result<Self> {
        let total: usize = dims.iter().product();
        if total != self.dim {
            return Err(QbcError::BadFactorization(dims.to_vec(), self.dim));
        }
        for &k in keep {
            if k >= dims.len() {
                return Err(QbcError::BadFactorization(dims.to_vec(), self.dim));
            }
        }
        let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
        let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
        let out_dim: usize = kept_dims.iter().product::<usize>().max(1);
        let tr_dim: usize = traced_dims.iter().product::<usize>().max(1);

        let index_of = |kept_idx: usize, traced_idx: usize| -> usize {
            // unpack multi-indices, then repack into the full index
            let mut kcomp = vec![0usize; keep.len()];
            let mut rem = kept_idx;
            for i in (0..keep.len()).rev() {
                kcomp[i] = rem % kept_dims[i];
                rem /= kept_dims[i];
            }
            let mut tcomp = vec![0usize; traced.len()];
            let mut rem = traced_idx;
            for i in (0..traced.len()).rev() {
                tcomp[i] = rem % traced_dims[i];
                rem /= traced_dims[i];
            }
            let mut full = 0usize;
            for (pos, &d) in dims.iter().enumerate() {
                let c = if let Some(ki) = keep.iter().position(|&k| k == pos) {
                    kcomp[ki]
                } else {
                    let ti = traced.iter().position(|&k| k == pos).unwrap();
                    tcomp[ti]
                };
                full = full * d + c;
            }
            full
        };

        let mut out = CMat::zeros(out_dim, out_dim);
        for a in 0..out_dim {
            for b in 0..out_dim {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..tr_dim {
                    acc += self.entries[(index_of(a, t), index_of(b, t))];
                }
                out[(a, b)] = acc;
            }
        }
        Ok(Self::new_unchecked(out))
    }

    /// Trace of `self * other` (real for Hermitian pairs).
    pub fn trace_product(&self, other: &Self) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.entries[(i, j)] * other.entries[(j, i)];
            }
        }
        acc.re
    }
}

/// Result of a fractional matrix power; `pseudo_inverse` marks negative
/// powers taken on a rank-deficient support.
#[derive(Clone, Debug)]
pub struct PowerResult {
    pub op: HermitianOperator,
    pub pseudo_inverse: bool,
}

#[derive(Clone, Debug)]
pub struct Eigenspace {
    pub value: f64,
    pub projector: HermitianOperator,
    pub multiplicity: usize,
}

/// A clustered spectral decomposition: orthogonal, complete projectors with
/// pairwise separated eigenvalues.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub dim: usize,
    pub eigenspaces: Vec<Eigenspace>,
    pub cluster_tol: f64,
}

impl SpectralDecomposition {
    pub fn distinct_count(&self) -> usize {
        self.eigenspaces.len()
    }

    /// Reassemble `sum_i h_i P_i`.
    pub fn reconstruct(&self) -> HermitianOperator {
        let mut m = CMat::zeros(self.dim, self.dim);
        for es in &self.eigenspaces {
            m += es.projector.matrix().scale(es.value);
        }
        HermitianOperator::new_unchecked(m)
    }

    /// Apply `f` to each eigenvalue, keeping the eigenspaces.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let mut m = CMat::zeros(self.dim, self.dim);
        for es in &self.eigenspaces {
            m += es.projector.matrix().scale(f(es.value));
        }
        HermitianOperator::new_unchecked(m)
    }
}

/// A unit-trace PSD operator.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub op: HermitianOperator,
}

impl DensityMatrix {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let min = op.min_eigenvalue();
        if min < -1e-10 {
            return Err(QbcError::NotPsd(min));
        }
        let tr = op.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(QbcError::BadTrace(tr, 1.0));
        }
        Ok(Self { op })
    }

    pub fn new_unchecked(op: HermitianOperator) -> Self {
        Self { op }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            op: HermitianOperator::identity(dim).scale(1.0 / dim as f64),
        }
    }

    pub fn pure(v: &nalgebra::DVector<C64>) -> Self {
        Self {
            op: HermitianOperator::projector_onto(v),
        }
    }
}

/// Projector `{T >= O}` onto the nonnegative eigenspace of `T - O`.
pub fn positive_part_projector(
    t: &HermitianOperator,
    o: &HermitianOperator,
    cluster_tol: f64,
) -> Result<HermitianOperator> {
    if t.dim() != o.dim() {
        return Err(QbcError::DimMismatch(t.dim(), o.dim()));
    }
    let diff = t.sub(o);
    let sd = diff.spectral(cluster_tol);
    let mut m = CMat::zeros(t.dim(), t.dim());
    for es in &sd.eigenspaces {
        if es.value >= 0.0 || same_cluster(es.value, 0.0, cluster_tol) {
            m += es.projector.matrix();
        }
    }
    Ok(HermitianOperator::new_unchecked(m))
}

/// Trace norm `|| . ||_1` of a Hermitian operator.
pub fn trace_norm(omega: &HermitianOperator) -> f64 {
    omega.eigenvalues_raw().iter().map(|x| x.abs()).sum()
}

/// Uhlmann fidelity `F(rho, sigma) = || sqrt(rho) sqrt(sigma) ||_1`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(QbcError::DimMismatch(rho.dim(), sigma.dim()));
    }
    let sqrt_rho = rho.op.matrix_power(0.5, DEFAULT_CLUSTER_TOL).op;
    let inner = sqrt_rho.matrix() * sigma.op.matrix() * sqrt_rho.matrix();
    let inner = HermitianOperator::new_unchecked(inner);
    let f: f64 = inner
        .eigenvalues_raw()
        .iter()
        .map(|&x| x.max(0.0).sqrt())
        .sum();
    Ok(f.min(1.0))
}

/// Purified distance `P = sqrt(1 - F^2)`.
pub fn purified_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let f = fidelity(rho, sigma)?;
    Ok((1.0 - f * f).max(0.0).sqrt())
}

/// Kronecker product of a list of operators.
pub fn kron_all(ops: &[&HermitianOperator]) -> HermitianOperator {
    assert!(!ops.is_empty());
    let mut acc = ops[0].clone();
    for op in &ops[1..] {
        acc = acc.kron(op);
    }
    acc
}
