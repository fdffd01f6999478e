//! Seeded random instances: Hermitian operators, density matrices, pmfs,
//! broadcast channels (including degraded constructions) and the admissible
//! distributions each coding scenario requires.
//!
//! All randomness flows from a caller-supplied seed; no ambient entropy.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::cqstate::{BroadcastChannel, ClassicalJoint, ClassicalRegister};
use crate::hermitian::{C64, CMat, DensityMatrix, HermitianOperator};

pub struct Sampler {
    rng: ChaCha12Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Deterministic child sampler; used to fan out independent streams from
    /// one master seed (order-independent across parallel workers).
    pub fn child(master: u64, index: u64) -> Self {
        Self::new(master.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index))
    }

    pub fn gaussian(&mut self) -> f64 {
        // Box-Muller
        let u1: f64 = self.rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn complex_gaussian(&mut self) -> C64 {
        C64::new(self.gaussian(), self.gaussian())
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn random_hermitian(&mut self, dim: usize) -> HermitianOperator {
        let g = CMat::from_fn(dim, dim, |_, _| self.complex_gaussian());
        HermitianOperator::new_unchecked((&g + g.adjoint()).scale(0.5))
    }

    /// Ginibre-induced density matrix `G G^dag / tr`.
    pub fn random_density(&mut self, dim: usize) -> DensityMatrix {
        let g = CMat::from_fn(dim, dim, |_, _| self.complex_gaussian());
        let m = &g * g.adjoint();
        let tr = m.trace().re;
        DensityMatrix::new_unchecked(HermitianOperator::new_unchecked(m.unscale(tr)))
    }

    /// Density matrix mixed with the maximally mixed state; keeps eigenvalues
    /// away from zero, which tames log-ratio variances in continuity tests.
    pub fn random_density_floored(&mut self, dim: usize, floor: f64) -> DensityMatrix {
        let rho = self.random_density(dim);
        let mixed = DensityMatrix::maximally_mixed(dim);
        DensityMatrix::new_unchecked(rho.op.scale(1.0 - floor).add(&mixed.op.scale(floor)))
    }

    pub fn random_pure(&mut self, dim: usize) -> DensityMatrix {
        let v = DVector::from_fn(dim, |_, _| self.complex_gaussian());
        DensityMatrix::pure(&v)
    }

    /// Random projector of the requested rank, from a Haar-ish unitary.
    pub fn random_projector(&mut self, dim: usize, rank: usize) -> HermitianOperator {
        let g = CMat::from_fn(dim, dim, |_, _| self.complex_gaussian());
        let qr = g.qr();
        let q = qr.q();
        let mut m = CMat::zeros(dim, dim);
        for k in 0..rank.min(dim) {
            let col = q.column(k);
            m += &col * col.adjoint();
        }
        HermitianOperator::new_unchecked(m)
    }

    /// Random operator with `0 <= S <= I`.
    pub fn random_contraction(&mut self, dim: usize) -> HermitianOperator {
        let h = self.random_hermitian(dim);
        let sd = h.spectral(1e-12);
        sd.map_eigenvalues(|x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn random_pmf(&mut self, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| -self.uniform(f64::EPSILON, 1.0).ln()).collect();
        let s: f64 = v.iter().sum();
        for x in v.iter_mut() {
            *x /= s;
        }
        v
    }

    /// Random stochastic matrix as rows of conditionals `p(col | row)`.
    pub fn random_conditional(&mut self, rows: usize, cols: usize) -> Vec<Vec<f64>> {
        (0..rows).map(|_| self.random_pmf(cols)).collect()
    }

    /// Random Kraus channel of given input/output dimension via a random
    /// isometry into an environment of dimension `env`.
    pub fn random_cptp(&mut self, din: usize, dout: usize, env: usize) -> CptpMap {
        // isometry V: din -> dout*env from QR of a Gaussian matrix
        let g = CMat::from_fn(dout * env, dout * env, |_, _| self.complex_gaussian());
        let q = g.qr().q();
        let v = q.columns(0, din).into_owned();
        let mut kraus = Vec::with_capacity(env);
        for e in 0..env {
            let mut k = CMat::zeros(dout, din);
            for o in 0..dout {
                for i in 0..din {
                    k[(o, i)] = v[(o * env + e, i)];
                }
            }
            kraus.push(k);
        }
        CptpMap { kraus }
    }

    /// Random three-receiver channel: independent random outputs per input.
    pub fn random_channel(&mut self, d_x: usize, dims: [usize; 3]) -> BroadcastChannel {
        let outputs = (0..d_x)
            .map(|_| {
                let b1 = self.random_density(dims[0]);
                let b2 = self.random_density(dims[1]);
                let b3 = self.random_density(dims[2]);
                // product outputs keep per-receiver marginals generic
                DensityMatrix::new_unchecked(b1.op.kron(&b2.op).kron(&b3.op))
            })
            .collect();
        BroadcastChannel::new(d_x, dims, outputs).expect("sampled channel is valid")
    }

    /// Random multilevel channel: B2 is a fixed random degrading map applied
    /// to B1, so `rho_x^{B2} = M(rho_x^{B1})` for every input x.
    pub fn random_degraded_channel(&mut self, d_x: usize, dims: [usize; 3]) -> BroadcastChannel {
        let m = self.random_cptp(dims[0], dims[1], 2);
        let outputs = (0..d_x)
            .map(|_| {
                let b1 = self.random_density(dims[0]);
                let b2 = DensityMatrix::new_unchecked(m.apply(&b1.op));
                let b3 = self.random_density(dims[2]);
                DensityMatrix::new_unchecked(b1.op.kron(&b2.op).kron(&b3.op))
            })
            .collect();
        BroadcastChannel::new(d_x, dims, outputs).expect("sampled channel is valid")
    }

    /// Joint pmf over named registers.
    pub fn random_joint(&mut self, regs: &[(&str, usize)]) -> ClassicalJoint {
        let registers: Vec<ClassicalRegister> = regs
            .iter()
            .map(|(n, s)| ClassicalRegister::new(n, *s))
            .collect();
        let total: usize = regs.iter().map(|(_, s)| *s).product();
        ClassicalJoint::new(registers, self.random_pmf(total)).expect("valid joint")
    }

    /// Distribution p(u, v, x) with the chain U - V - X.
    pub fn random_markov_uvx(&mut self, d_u: usize, d_v: usize, d_x: usize) -> ClassicalJoint {
        let pu = self.random_pmf(d_u);
        let pv = self.random_conditional(d_u, d_v);
        let px = self.random_conditional(d_v, d_x);
        let registers = vec![
            ClassicalRegister::new("u", d_u),
            ClassicalRegister::new("v", d_v),
            ClassicalRegister::new("x", d_x),
        ];
        let mut pmf = vec![0.0; d_u * d_v * d_x];
        for u in 0..d_u {
            for v in 0..d_v {
                for x in 0..d_x {
                    pmf[(u * d_v + v) * d_x + x] = pu[u] * pv[u][v] * px[v][x];
                }
            }
        }
        ClassicalJoint::new(registers, pmf).expect("valid joint")
    }

    /// Distribution p(u, v2, v3, x) satisfying both chains
    /// U - V2 - (V3, X) and U - V3 - (V2, X).
    ///
    /// Such distributions carry a common part: a variable W that is a
    /// function of V2 and of V3 alike, with U - W - (V2, V3, X). Here the
    /// common part is taken to be V2 = V3 = W itself (alphabet `d_w`), which
    /// is the general shape at binary alphabets; X then depends on W alone.
    pub fn random_double_markov(&mut self, d_u: usize, d_w: usize, d_x: usize) -> ClassicalJoint {
        let pu = self.random_pmf(d_u);
        let pw = self.random_conditional(d_u, d_w);
        let px = self.random_conditional(d_w, d_x);
        let registers = vec![
            ClassicalRegister::new("u", d_u),
            ClassicalRegister::new("v2", d_w),
            ClassicalRegister::new("v3", d_w),
            ClassicalRegister::new("x", d_x),
        ];
        let mut pmf = vec![0.0; d_u * d_w * d_w * d_x];
        for u in 0..d_u {
            for w in 0..d_w {
                for x in 0..d_x {
                    pmf[((u * d_w + w) * d_w + w) * d_x + x] = pu[u] * pw[u][w] * px[w][x];
                }
            }
        }
        ClassicalJoint::new(registers, pmf).expect("valid joint")
    }

    /// Double-Markov variant where (V2, V3) are correlated with each other
    /// but independent of U; exercises a nontrivial I(V2;V3|U).
    pub fn random_double_markov_coupled(
        &mut self,
        d_u: usize,
        d_v: usize,
        d_x: usize,
    ) -> ClassicalJoint {
        let pu = self.random_pmf(d_u);
        let q = self.random_pmf(d_v * d_v);
        let px = self.random_conditional(d_v * d_v, d_x);
        let registers = vec![
            ClassicalRegister::new("u", d_u),
            ClassicalRegister::new("v2", d_v),
            ClassicalRegister::new("v3", d_v),
            ClassicalRegister::new("x", d_x),
        ];
        let mut pmf = vec![0.0; d_u * d_v * d_v * d_x];
        for u in 0..d_u {
            for v2 in 0..d_v {
                for v3 in 0..d_v {
                    for x in 0..d_x {
                        pmf[((u * d_v + v2) * d_v + v3) * d_x + x] =
                            pu[u] * q[v2 * d_v + v3] * px[v2 * d_v + v3][x];
                    }
                }
            }
        }
        ClassicalJoint::new(registers, pmf).expect("valid joint")
    }

    /// Deterministic map from register tuples to channel inputs.
    pub fn random_map(&mut self, tuples: usize, d_x: usize) -> Vec<usize> {
        (0..tuples).map(|_| self.below(d_x)).collect()
    }
}

/// A CPTP map in Kraus form.
#[derive(Clone, Debug)]
pub struct CptpMap {
    pub kraus: Vec<CMat>,
}

impl CptpMap {
    pub fn apply(&self, rho: &HermitianOperator) -> HermitianOperator {
        let dout = self.kraus[0].nrows();
        let mut acc = CMat::zeros(dout, dout);
        for k in &self.kraus {
            acc += k * rho.matrix() * k.adjoint();
        }
        HermitianOperator::new_unchecked(acc)
    }
}
