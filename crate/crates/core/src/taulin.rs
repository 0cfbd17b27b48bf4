//! Simultaneous linearization of an involution pair `(tau1, tau2)` on a
//! monomial ideal, equivalence with the quadric, and cutting varieties.
//!
//! Everything here works in spectral coordinates: the linear parts must be
//! in swap form, `T1: (zeta, eta) -> (mu eta, zeta / mu)`,
//! `T2: (zeta, eta) -> (eta, zeta)` on each pair, identity on the fixed
//! coordinates `upsilon`. [`crate::crsing::to_spectral_coordinates`]
//! produces such pairs.

use std::collections::BTreeSet;

use num_traits::One;
use serde::Serialize;

use crate::coeff::{Backend, Coeff};
use crate::crsing::InvolutionPair;
use crate::error::{GermError, Result};
use crate::linalg::Mat;
use crate::linearize::{linearize_on_ideal, rho_conjugate, verify_tol, CommutingFamily};
use crate::resonance::{DiagonalFamily, MonomialIdeal, OmegaSequence, OracleMode, ResonanceOracle};
use crate::series::{compose_series, Germ, MultiIndex, Series};

/// Role of each coordinate in swap form.
#[derive(Clone, Debug)]
pub struct TauLayout<K: Coeff> {
    /// `(zeta_i, eta_i)` coordinate indices, by increasing `zeta_i`.
    pub pairs: Vec<(usize, usize)>,
    /// `lambda_{1,i} = mu_i`; `lambda_{2,i} = 1`.
    pub lambda: Vec<K>,
    pub upsilon: Vec<usize>,
    nv: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairClass {
    Hyperbolic,
    Elliptic,
    Complex,
}

impl<K: Coeff> TauLayout<K> {
    /// Reads the layout off `T1, T2`; fails unless both are in swap form.
    pub fn from_matrices(t1: &Mat<K>, t2: &Mat<K>, tol: f64) -> Result<Self> {
        let nv = t1.rows();
        let nz = |m: &Mat<K>, r: usize| -> Vec<usize> {
            (0..nv)
                .filter(|&c| !m.get(r, c).is_negligible(tol))
                .collect()
        };
        let is_one = |x: &K| x.sub(&K::one()).is_negligible(tol);
        let bad = |a: usize| {
            GermError::HypothesisViolated(format!(
                "linear parts are not in swap form at coordinate {}",
                a + 1
            ))
        };
        let mut seen = vec![false; nv];
        let (mut pairs, mut lambda, mut upsilon) = (Vec::new(), Vec::new(), Vec::new());
        for a in 0..nv {
            if seen[a] {
                continue;
            }
            let r2 = nz(t2, a);
            if r2 == [a] {
                if !is_one(t2.get(a, a)) || nz(t1, a) != [a] || !is_one(t1.get(a, a)) {
                    return Err(bad(a));
                }
                seen[a] = true;
                upsilon.push(a);
                continue;
            }
            if r2.len() != 1 || r2[0] < a || seen[r2[0]] {
                return Err(bad(a));
            }
            let b = r2[0];
            if !is_one(t2.get(a, b))
                || nz(t2, b) != [a]
                || !is_one(t2.get(b, a))
                || nz(t1, a) != [b]
                || nz(t1, b) != [a]
            {
                return Err(bad(a));
            }
            let lam = t1.get(a, b).clone();
            if !lam.mul(t1.get(b, a)).sub(&K::one()).is_negligible(tol) {
                return Err(bad(b));
            }
            seen[a] = true;
            seen[b] = true;
            pairs.push((a, b));
            lambda.push(lam);
        }
        Ok(TauLayout {
            pairs,
            lambda,
            upsilon,
            nv,
        })
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    /// `zeta1, eta1, ..., upsilon1, ...` placed at their coordinates.
    pub fn names(&self) -> Vec<String> {
        let mut out = vec![String::new(); self.nv];
        for (k, &(z, e)) in self.pairs.iter().enumerate() {
            out[z] = format!("ζ{}", k + 1);
            out[e] = format!("η{}", k + 1);
        }
        for (k, &u) in self.upsilon.iter().enumerate() {
            out[u] = format!("υ{}", k + 1);
        }
        out
    }

    /// Eigenvalue of `D Phi(0)` on each coordinate.
    pub fn coordinate_spectrum(&self) -> Vec<K> {
        let mut out = vec![K::one(); self.nv];
        for (&(z, e), lam) in self.pairs.iter().zip(&self.lambda) {
            out[z] = lam.clone();
            out[e] = lam.inv().expect("swap form has invertible lambda");
        }
        out
    }

    /// The swap-form matrices `T1, T2`.
    pub fn swap_matrices(&self) -> (Mat<K>, Mat<K>) {
        let mut t1 = Mat::zeros(self.nv, self.nv);
        let mut t2 = Mat::zeros(self.nv, self.nv);
        for (&(z, e), lam) in self.pairs.iter().zip(&self.lambda) {
            t1.set(z, e, lam.clone());
            t1.set(e, z, lam.inv().expect("invertible"));
            t2.set(z, e, K::one());
            t2.set(e, z, K::one());
        }
        for &u in &self.upsilon {
            t1.set(u, u, K::one());
            t2.set(u, u, K::one());
        }
        (t1, t2)
    }

    pub fn class(&self, i: usize) -> PairClass {
        let lam = &self.lambda[i];
        match K::BACKEND {
            Backend::Exact => {
                if lam.norm_sqr_exact().map(|r| r.is_one()).unwrap_or(false) {
                    PairClass::Hyperbolic
                } else if lam.is_real() {
                    PairClass::Elliptic
                } else {
                    PairClass::Complex
                }
            }
            Backend::Float => {
                let z = lam.to_c64();
                if (z.norm() - 1.0).abs() <= 1e-7 {
                    PairClass::Hyperbolic
                } else if z.im.abs() <= 1e-7 {
                    PairClass::Elliptic
                } else {
                    PairClass::Complex
                }
            }
        }
    }

    /// The eigenvalues `mu_i, 1/mu_i` are pairwise distinct and differ
    /// from 1.
    pub fn distinct_eigenvalues(&self, tol: f64) -> bool {
        let mut vals: Vec<K> = Vec::new();
        for lam in &self.lambda {
            vals.push(lam.clone());
            vals.push(lam.inv().expect("invertible"));
        }
        let t = tol.max(if K::BACKEND == Backend::Float {
            1e-9
        } else {
            0.0
        });
        for (a, x) in vals.iter().enumerate() {
            if x.sub(&K::one()).is_negligible(t) {
                return false;
            }
            if vals[a + 1..].iter().any(|y| x.sub(y).is_negligible(t)) {
                return false;
            }
        }
        true
    }
}

// ---------------------------------------------------------------------------
// Ideal compatibility

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompatibilityWitness {
    /// `T1`, `T2` or `rho`.
    pub map: String,
    pub monomial: Vec<u32>,
    pub image: Vec<u32>,
    /// Whether `monomial` lies in the ideal.
    pub source_in_ideal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub compatible: bool,
    pub checked_degree: u32,
    pub witnesses: Vec<CompatibilityWitness>,
}

/// Checks monomial by monomial up to degree `trunc` that composing with
/// `T1`, `T2` and `t -> P t̄` keeps ideal monomials in the ideal and the
/// complement in the complement.
pub fn check_ideal_compatibility<K: Coeff>(
    ideal: &MonomialIdeal,
    t1: &Mat<K>,
    t2: &Mat<K>,
    rho: &Mat<K>,
    trunc: u32,
) -> Result<CompatibilityReport> {
    let nv = ideal.nvars();
    for (name, m) in [("T1", t1), ("T2", t2), ("rho", rho)] {
        if m.rows() != nv || m.cols() != nv {
            return Err(GermError::ArityMismatch {
                what: format!("{name} vs ideal"),
                left: nv,
                right: m.rows(),
            });
        }
    }
    let vt = verify_tol::<K>(1e-12);
    let mut witnesses = Vec::new();
    if !ideal.is_zero() {
        for (name, m) in [("T1", t1), ("T2", t2), ("rho", rho)] {
            let lin = Germ::from_linear(m, trunc);
            for q in MultiIndex::up_to_degree(nv, 1, trunc) {
                let inside = ideal.contains(&q);
                let image =
                    compose_series(&Series::monomial(nv, trunc, q.clone(), K::one()), &lin)?;
                let bad = image
                    .terms()
                    .find(|(r, c)| !c.is_negligible(vt) && ideal.contains(r) != inside);
                if let Some((r, _)) = bad {
                    witnesses.push(CompatibilityWitness {
                        map: name.into(),
                        monomial: q.exps().to_vec(),
                        image: r.exps().to_vec(),
                        source_in_ideal: inside,
                    });
                }
            }
        }
    }
    Ok(CompatibilityReport {
        compatible: witnesses.is_empty(),
        checked_degree: trunc,
        witnesses,
    })
}

// ---------------------------------------------------------------------------
// Working context

/// First coefficient that blocks linearization on the ideal.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauWitness {
    /// `Phi`, `tau1` or `tau2`.
    pub source: String,
    /// 0-based component.
    pub component: usize,
    pub q: Vec<u32>,
    pub value: String,
}

struct Ctx<K: Coeff> {
    layout: TauLayout<K>,
    tau: [Germ<K>; 2],
    phi: Germ<K>,
    t: [Mat<K>; 2],
    rho: Mat<K>,
    oracle: ResonanceOracle<K>,
    ideal: MonomialIdeal,
    /// Monomials outside the ideal with weight `mu_i`, `1/mu_i`, `1`.
    plus: Vec<BTreeSet<MultiIndex>>,
    minus: Vec<BTreeSet<MultiIndex>>,
    zero: BTreeSet<MultiIndex>,
    nv: usize,
    trunc: u32,
    vt: f64,
    cleanup: f64,
}

impl<K: Coeff> Ctx<K> {
    fn new(ip: &InvolutionPair<K>, ideal: &MonomialIdeal, mode: &OracleMode) -> Result<Self> {
        let nv = ip.nv();
        if ideal.nvars() != nv {
            return Err(GermError::ArityMismatch {
                what: "ideal variables".into(),
                left: nv,
                right: ideal.nvars(),
            });
        }
        let tol = ip.tau1.tol();
        let vt = verify_tol::<K>(tol);
        let layout = TauLayout::from_matrices(
            &ip.t1,
            &ip.t2,
            vt.max(if K::BACKEND == Backend::Float {
                1e-8
            } else {
                0.0
            }),
        )?;
        // Snap the linear parts to exact swap form; float noise is recorded.
        let (t1, t2) = layout.swap_matrices();
        let cleanup = ip
            .t1
            .sub(&t1)
            .max_modulus()
            .max(ip.t2.sub(&t2).max_modulus());
        let trunc = ip.trunc();
        let tau1 = Germ::from_linear(&t1, trunc)
            .with_tol(tol)
            .try_add(&ip.tau1.nonlinear_part())?;
        let tau2 = Germ::from_linear(&t2, trunc)
            .with_tol(tol)
            .try_add(&ip.tau2.nonlinear_part())?;
        let phi = tau1.compose(&tau2)?;
        let oracle = ResonanceOracle::new(
            DiagonalFamily::new(vec![layout.coordinate_spectrum()])?,
            mode.clone(),
        )?;
        let mut plus = vec![BTreeSet::new(); layout.pairs.len()];
        let mut minus = vec![BTreeSet::new(); layout.pairs.len()];
        let mut zero = BTreeSet::new();
        for q in MultiIndex::up_to_degree(nv, 2, trunc) {
            if ideal.contains(&q) {
                continue;
            }
            for (i, &(z, e)) in layout.pairs.iter().enumerate() {
                if oracle.is_resonant(&q, z)?.resonant {
                    plus[i].insert(q.clone());
                }
                if oracle.is_resonant(&q, e)?.resonant {
                    minus[i].insert(q.clone());
                }
            }
            if oracle.is_invariant(&q) {
                zero.insert(q);
            }
        }
        Ok(Ctx {
            layout,
            tau: [tau1, tau2],
            phi,
            t: [t1, t2],
            rho: ip.rho.clone(),
            oracle,
            ideal: ideal.clone(),
            plus,
            minus,
            zero,
            nv,
            trunc,
            vt,
            cleanup,
        })
    }

    fn mu(&self, i: usize) -> &K {
        &self.layout.lambda[i]
    }
    fn mu_inv(&self, i: usize) -> K {
        self.layout.lambda[i].inv().expect("invertible")
    }

    /// Nonlinear part of component `k` of `tau_j`.
    fn nl(&self, j: usize, k: usize) -> Series<K> {
        let c = self.tau[j].comp(k);
        c.project(|q| q.degree() >= 2)
    }

    fn first_in(&self, s: &Series<K>, set: &BTreeSet<MultiIndex>) -> Option<(MultiIndex, K)> {
        s.terms()
            .find(|(q, c)| set.contains(*q) && !c.is_negligible(self.vt))
            .map(|(q, c)| (q.clone(), c.clone()))
    }

    fn centralizer_in_ideal(&self) -> Result<Option<(MultiIndex, usize)>> {
        self.oracle.centralizer_condition(&self.ideal, self.trunc)
    }

    /// Drops terms in the ideal from every component.
    fn strip_ideal(&self, g: &Germ<K>) -> Result<Germ<K>> {
        Germ::new(
            g.comps()
                .iter()
                .map(|c| c.project(|q| q.degree() < 2 || !self.ideal.contains(q)))
                .collect(),
        )
    }

    /// `Psi'` from `Phi`, then `Psi = Psi' ∘ (Id + C)` with `C` in the
    /// centralizer of `D Phi(0)` outside the ideal, fixed degree by degree
    /// by `P_i(pr U_i) = -mu_i P_i(pr(g_{1,i} ∘ Psi))`,
    /// `P_{-i}(pr V_i) = 0` and `P_0(pr W) = 0`.
    /// Returns `(Psi', C, Psi)`.
    fn build(&self) -> Result<(Germ<K>, Germ<K>, Germ<K>)> {
        let fam = CommutingFamily::with_oracle(vec![self.phi.clone()], self.oracle.clone())?;
        let lin = linearize_on_ideal(&fam, &self.ideal)?;
        let psi_prime = lin.phi;
        let tol = psi_prime.tol();
        let id = Germ::identity(self.nv, self.trunc).with_tol(tol);
        let mut c: Vec<Series<K>> = vec![Series::zero(self.nv, self.trunc).with_tol(tol); self.nv];
        let g1: Vec<Series<K>> = self
            .layout
            .pairs
            .iter()
            .map(|&(_, e)| self.nl(0, e))
            .collect();
        let empty = self.plus.iter().chain(&self.minus).all(|s| s.is_empty())
            && (self.layout.upsilon.is_empty() || self.zero.is_empty());
        let compose = |c: &[Series<K>]| -> Result<Germ<K>> {
            let inner = id.try_add(&Germ::new(c.to_vec())?)?;
            self.strip_ideal(&psi_prime.compose(&inner)?)
        };
        if !empty {
            for d in 2..=self.trunc {
                let cur = compose(&c)?;
                let in_deg = |set: &BTreeSet<MultiIndex>, s: &Series<K>| -> Vec<(MultiIndex, K)> {
                    s.homogeneous(d)
                        .terms()
                        .filter(|(q, _)| set.contains(*q))
                        .map(|(q, v)| (q.clone(), v.clone()))
                        .collect()
                };
                for (i, &(z, e)) in self.layout.pairs.iter().enumerate() {
                    let target = compose_series(&g1[i], &cur)?.scale(&self.mu(i).neg());
                    let have = cur.comp(z);
                    for (q, v) in in_deg(&self.plus[i], &target) {
                        c[z].add_term(q, v);
                    }
                    for (q, v) in in_deg(&self.plus[i], have) {
                        c[z].add_term(q, v.neg());
                    }
                    for (q, v) in in_deg(&self.minus[i], cur.comp(e)) {
                        c[e].add_term(q, v.neg());
                    }
                }
                for &k in &self.layout.upsilon {
                    for (q, v) in in_deg(&self.zero, cur.comp(k)) {
                        c[k].add_term(q, v.neg());
                    }
                }
            }
        }
        let psi = compose(&c)?;
        Ok((psi_prime, Germ::new(c)?, psi))
    }

    /// Conjugated pair and the first residual term outside the ideal.
    fn conjugate(&self, psi: &Germ<K>) -> Result<([Germ<K>; 2], Option<TauWitness>)> {
        let inv = psi.invert()?;
        let mut out = Vec::new();
        let mut best: Option<(u32, usize, usize, MultiIndex, K)> = None;
        for j in 0..2 {
            let tt = inv.compose(&self.tau[j].compose(psi)?)?;
            for k in 0..self.nv {
                let lin_ok = (0..self.nv).all(|c| {
                    let q = MultiIndex::unit(self.nv, c);
                    tt.comp(k)
                        .coeff(&q)
                        .sub(self.t[j].get(k, c))
                        .is_negligible(self.vt)
                });
                if !lin_ok {
                    return Err(GermError::LinearPartMismatch { i: j });
                }
                for (q, c) in tt.comp(k).terms() {
                    if q.degree() < 2 || self.ideal.contains(q) || c.is_negligible(self.vt) {
                        continue;
                    }
                    let key = (q.degree(), j, k);
                    if best.as_ref().map(|b| key < (b.0, b.1, b.2)).unwrap_or(true) {
                        best = Some((key.0, j, k, q.clone(), c.clone()));
                    }
                    break;
                }
            }
            out.push(tt);
        }
        let witness = best.map(|(_, j, k, q, c)| TauWitness {
            source: format!("tau{}", j + 1),
            component: k,
            q: q.exps().to_vec(),
            value: c.to_string(),
        });
        let [a, b]: [Germ<K>; 2] = out
            .try_into()
            .map_err(|_| GermError::InvalidInput("pair".into()))?;
        Ok(([a, b], witness))
    }
}

// ---------------------------------------------------------------------------
// Formal linearizability

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauLinearizability {
    pub linearizable: bool,
    pub witness: Option<TauWitness>,
    /// First centralizer monomial `(Q, j)` outside the ideal, if any.
    pub centralizer_violation: Option<(Vec<u32>, usize)>,
    pub distinct_eigenvalues: bool,
    pub hyperbolic_only: bool,
    /// Largest deviation in the identities `f2 = f1∘Phi + mu psi` and
    /// `f1/mu - f1∘Phi = mu psi + (phi∘tau2)/mu`.
    pub relation_residual: f64,
}

/// Checks the `tau`-relations of the pair in swap form, returning the
/// largest residual, or `CompatibilityResidual` in exact arithmetic.
fn check_relations<K: Coeff>(ctx: &Ctx<K>) -> Result<f64> {
    let mut worst = 0.0f64;
    let phi_nl: Vec<Series<K>> = (0..ctx.nv)
        .map(|k| ctx.phi.comp(k).project(|q| q.degree() >= 2))
        .collect();
    for (i, &(z, e)) in ctx.layout.pairs.iter().enumerate() {
        let mu = ctx.mu(i);
        let mu_inv = ctx.mu_inv(i);
        let f1 = ctx.nl(0, z);
        let f2 = ctx.nl(1, z);
        let f1_phi = compose_series(&f1, &ctx.phi)?;
        let second = f2.sub(&f1_phi).sub(&phi_nl[e].scale(mu));
        let phi_tau2 = compose_series(&phi_nl[z], &ctx.tau[1])?;
        let first = f1
            .scale(&mu_inv)
            .sub(&f1_phi)
            .sub(&phi_nl[e].scale(mu))
            .sub(&phi_tau2.scale(&mu_inv));
        for s in [&first, &second] {
            let m = s.max_modulus();
            worst = worst.max(m);
            if m > ctx.vt {
                let q = s
                    .terms()
                    .find(|(_, c)| !c.is_negligible(ctx.vt))
                    .map(|(q, _)| q.exps().to_vec())
                    .unwrap_or_default();
                return Err(GermError::CompatibilityResidual { i, q });
            }
        }
    }
    Ok(worst)
}

/// Linearizes `Phi` on the ideal, propagates to `tau1, tau2` and reports the
/// first coefficient outside the ideal that survives.
pub fn formal_tau_linearizability<K: Coeff>(
    ip: &InvolutionPair<K>,
    ideal: &MonomialIdeal,
    mode: &OracleMode,
) -> Result<TauLinearizability> {
    let ctx = Ctx::new(ip, ideal, mode)?;
    let relation_residual = check_relations(&ctx)?;
    let centralizer_violation = ctx
        .centralizer_in_ideal()?
        .map(|(q, j)| (q.exps().to_vec(), j));
    let distinct_eigenvalues = ctx.layout.distinct_eigenvalues(ctx.vt);
    let hyperbolic_only =
        (0..ctx.layout.pairs.len()).all(|i| ctx.layout.class(i) == PairClass::Hyperbolic);
    let witness = match ctx.build() {
        Ok((_, _, psi)) => ctx.conjugate(&psi)?.1,
        Err(GermError::FormalObstruction { q, j, value }) => Some(TauWitness {
            source: "Phi".into(),
            component: j,
            q,
            value,
        }),
        Err(e) => return Err(e),
    };
    Ok(TauLinearizability {
        linearizable: witness.is_none(),
        witness,
        centralizer_violation,
        distinct_eigenvalues,
        hyperbolic_only,
        relation_residual,
    })
}

// ---------------------------------------------------------------------------
// Linearization on an ideal

#[derive(Clone, Debug)]
pub struct TauVerification<K: Coeff> {
    /// `Psi^{-1} tau_j Psi - T_j` lies in the ideal (always true on success).
    pub residual_in_ideal: bool,
    pub involutions_preserved: bool,
    /// `pr_I(Psi - Id) = 0`.
    pub ideal_part_zero: bool,
    /// `P_{-i}(pr V_i) = 0, P_0(pr W) = 0`: `holds`, `fails` or `vacuous`.
    pub pnormal: String,
    pub compat_identities: bool,
    pub rho_commutes: bool,
    /// Right sides of the conjugacy equations for `U_i`, `V_i`, `W_k`.
    pub alpha: Vec<Series<K>>,
    pub beta: Vec<Series<K>>,
    pub gamma: Vec<Series<K>>,
    /// Largest mismatch between those right sides computed from the
    /// `f, g, h` data and from `Psi` directly.
    pub uvw_residual: f64,
    /// Float noise removed from `T1, T2` before solving.
    pub linear_cleanup: f64,
}

#[derive(Clone, Debug)]
pub struct TauLinResult<K: Coeff> {
    pub layout: TauLayout<K>,
    /// Normalized linearizer of `Phi` on the ideal.
    pub psi_prime: Germ<K>,
    /// `C` with `Psi = Psi' ∘ (Id + C)`; supported on centralizer
    /// monomials outside the ideal.
    pub correction: Germ<K>,
    /// `Psi - Psi'`.
    pub u: Germ<K>,
    pub psi: Germ<K>,
    pub linearized_taus: (Germ<K>, Germ<K>),
    pub verification: TauVerification<K>,
}

/// Finds `Psi`, tangent to the identity and commuting with `rho`, with
/// `Psi^{-1} tau_j Psi = T_j` modulo the ideal.
pub fn linearize_taus_on_ideal<K: Coeff>(
    ip: &InvolutionPair<K>,
    ideal: &MonomialIdeal,
    mode: &OracleMode,
) -> Result<TauLinResult<K>> {
    let ctx = Ctx::new(ip, ideal, mode)?;
    let compat = check_ideal_compatibility(ideal, &ctx.t[0], &ctx.t[1], &ctx.rho, ctx.trunc)?;
    if let Some(w) = compat.witnesses.first() {
        return Err(GermError::IncompatibleIdeal(format!(
            "{} sends {:?} to {:?}",
            w.map, w.monomial, w.image
        )));
    }
    check_relations(&ctx)?;
    let (psi_prime, correction, psi) = ctx.build()?;
    let u = psi.try_sub(&psi_prime)?;
    let (tt, witness) = ctx.conjugate(&psi)?;
    if let Some(w) = witness {
        return Err(GermError::FormalObstruction {
            q: w.q,
            j: w.component,
            value: format!("{} residual {}", w.source, w.value),
        });
    }
    let (nv, trunc, vt) = (ctx.nv, ctx.trunc, ctx.vt);
    let id = Germ::identity(nv, trunc).with_tol(psi.tol());
    let involutions_preserved = tt.iter().all(|t| {
        t.compose(t)
            .map(|s| s.first_difference(&id, vt).is_none())
            .unwrap_or(false)
    });

    let diff: Vec<Series<K>> = (0..nv).map(|k| psi.comp(k).sub(id.comp(k))).collect();
    let ideal_part_zero = diff.iter().all(|s| {
        s.terms()
            .all(|(q, c)| !ideal.contains(q) || c.is_negligible(vt))
    });
    let pnormal = if ctx.centralizer_in_ideal()?.is_none() {
        "vacuous".to_string()
    } else {
        let ok = ctx
            .layout
            .pairs
            .iter()
            .enumerate()
            .all(|(i, &(_, e))| ctx.first_in(&diff[e], &ctx.minus[i]).is_none())
            && ctx
                .layout
                .upsilon
                .iter()
                .all(|&k| ctx.first_in(&diff[k], &ctx.zero).is_none());
        if ok { "holds" } else { "fails" }.to_string()
    };

    // Projected identities.
    let tau2_psi = ctx.tau[1].compose(&psi)?;
    for (i, &(z, e)) in ctx.layout.pairs.iter().enumerate() {
        let a = ctx.nl(0, z).sub(&ctx.nl(1, z).scale(ctx.mu(i)));
        let a = compose_series(&a, &tau2_psi)?;
        if let Some((q, _)) = ctx.first_in(&a, &ctx.plus[i]) {
            return Err(GermError::CompatibilityResidual {
                i,
                q: q.exps().to_vec(),
            });
        }
        let b = ctx.nl(0, e).sub(&ctx.nl(1, e).scale(&ctx.mu_inv(i)));
        let b = compose_series(&b, &tau2_psi)?;
        if let Some((q, _)) = ctx.first_in(&b, &ctx.minus[i]) {
            return Err(GermError::CompatibilityResidual {
                i,
                q: q.exps().to_vec(),
            });
        }
    }
    for &k in &ctx.layout.upsilon {
        let c = compose_series(
            &compose_series(&ctx.nl(0, k), &ctx.tau[1])?.add(&ctx.nl(1, k)),
            &psi,
        )?;
        if let Some((q, _)) = ctx.first_in(&c, &ctx.zero) {
            return Err(GermError::CompatibilityResidual {
                i: k,
                q: q.exps().to_vec(),
            });
        }
        for j in 0..2 {
            let h = compose_series(&ctx.nl(j, k), &psi)?;
            if let Some((q, _)) = ctx.first_in(&h, &ctx.zero) {
                return Err(GermError::CompatibilityResidual {
                    i: k,
                    q: q.exps().to_vec(),
                });
            }
        }
    }

    // alpha, beta, gamma from the data, checked against Psi.
    let phi_t = tt[0].compose(&tt[1])?;
    let nl_of = |g: &Germ<K>, k: usize| g.comp(k).project(|q| q.degree() >= 2);
    let mut uvw_residual = 0.0f64;
    let (mut alpha, mut beta, mut gamma) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &(z, e)) in ctx.layout.pairs.iter().enumerate() {
        let mu = ctx.mu(i);
        let mu_inv = ctx.mu_inv(i);
        let data = |k: usize, c: &K| -> Result<Series<K>> {
            let f1 = nl_of(&tt[0], k).sub(&nl_of(&tt[1], k).scale(c));
            let f = ctx.nl(0, k).sub(&ctx.nl(1, k).scale(c));
            Ok(compose_series(&f1, &tt[1])?.sub(&compose_series(&f, &tau2_psi)?))
        };
        let a = data(z, mu)?;
        let b = data(e, &mu_inv)?;
        let lhs_a = diff[z].scale(mu).sub(&compose_series(&diff[z], &phi_t)?);
        let lhs_b = diff[e]
            .scale(&mu_inv)
            .sub(&compose_series(&diff[e], &phi_t)?);
        uvw_residual = uvw_residual.max(lhs_a.max_diff(&a)).max(lhs_b.max_diff(&b));
        alpha.push(a);
        beta.push(b);
    }
    for &k in &ctx.layout.upsilon {
        let g1 = compose_series(&nl_of(&tt[0], k), &tt[1])?.add(&nl_of(&tt[1], k));
        let g0 = compose_series(
            &compose_series(&ctx.nl(0, k), &ctx.tau[1])?.add(&ctx.nl(1, k)),
            &psi,
        )?;
        let g = g1.sub(&g0);
        let lhs = diff[k].sub(&compose_series(&diff[k], &phi_t)?);
        uvw_residual = uvw_residual.max(lhs.max_diff(&g));
        gamma.push(g);
    }

    let rho_commutes = rho_conjugate(&psi, &ctx.rho)?
        .first_difference(&psi, vt)
        .is_none();
    let [t1, t2] = tt;
    Ok(TauLinResult {
        layout: ctx.layout.clone(),
        psi_prime,
        correction,
        u,
        psi,
        linearized_taus: (t1, t2),
        verification: TauVerification {
            residual_in_ideal: true,
            involutions_preserved,
            ideal_part_zero,
            pnormal,
            compat_identities: true,
            rho_commutes,
            alpha,
            beta,
            gamma,
            uvw_residual,
            linear_cleanup: ctx.cleanup,
        },
    })
}

// ---------------------------------------------------------------------------
// Equivalence with the quadric

#[derive(Clone, Debug)]
pub enum QuadricEquivalence<K: Coeff> {
    /// Formal equivalence found; the small-divisor diagnostics did not
    /// trend towards divergence (or the pair is already linear).
    Biholomorphic {
        psi: Germ<K>,
        omega: Option<OmegaSequence>,
        note: String,
    },
    NotFormallyEquivalent {
        witness: TauWitness,
    },
    /// Formal equivalence found but the diagnostics cannot support
    /// convergence.
    DiophantineUnverified {
        psi: Germ<K>,
        omega: Option<OmegaSequence>,
        reason: String,
    },
}

/// Linearizes the pair with the zero ideal and attaches `omega_k`
/// diagnostics for `k <= k_max`.
pub fn quadric_equivalence<K: Coeff>(
    ip: &InvolutionPair<K>,
    mode: &OracleMode,
    k_max: u32,
    budget: u32,
) -> Result<QuadricEquivalence<K>> {
    let ideal = MonomialIdeal::zero(ip.nv());
    let res = match linearize_taus_on_ideal(ip, &ideal, mode) {
        Ok(r) => r,
        Err(GermError::FormalObstruction { q, j, value }) => {
            let source = if value.starts_with("tau") {
                value.split(' ').next().unwrap_or("tau").to_string()
            } else {
                "Phi".into()
            };
            return Ok(QuadricEquivalence::NotFormallyEquivalent {
                witness: TauWitness {
                    source,
                    component: j,
                    q,
                    value,
                },
            });
        }
        Err(e) => return Err(e),
    };
    let vt = verify_tol::<K>(ip.tau1.tol());
    let linear = [&ip.tau1, &ip.tau2].iter().all(|t| {
        t.nonlinear_part()
            .comps()
            .iter()
            .all(|c| c.terms().all(|(_, v)| v.is_negligible(vt)))
    });
    let oracle = ResonanceOracle::new(
        DiagonalFamily::new(vec![res.layout.coordinate_spectrum()])?,
        mode.clone(),
    )?;
    let omega = oracle.omega_sequence(None, k_max, budget);
    if linear {
        return Ok(QuadricEquivalence::Biholomorphic {
            psi: res.psi,
            omega: omega.ok(),
            note: "pair is already linear".into(),
        });
    }
    match omega {
        Ok(om) if om.verdict != "diverging-trend" => {
            let note = format!("omega trend: {}", om.verdict);
            Ok(QuadricEquivalence::Biholomorphic {
                psi: res.psi,
                omega: Some(om),
                note,
            })
        }
        Ok(om) => Ok(QuadricEquivalence::DiophantineUnverified {
            psi: res.psi,
            reason: format!("omega trend: {}", om.verdict),
            omega: Some(om),
        }),
        Err(e) => Ok(QuadricEquivalence::DiophantineUnverified {
            psi: res.psi,
            omega: None,
            reason: e.to_string(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Cutting variety

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutComponent {
    /// 0-based coordinates vanishing on the component.
    pub vanishing: Vec<usize>,
    /// 0/1 exponent pattern of the vanishing coordinates.
    pub pattern: Vec<u32>,
    pub equations: String,
    pub t1_invariant: bool,
    pub t2_invariant: bool,
    pub rho_invariant: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CuttingVariety {
    pub names: Vec<String>,
    #[serde(skip)]
    pub res_ideal: MonomialIdeal,
    pub generators: Vec<Vec<u32>>,
    pub generator_text: Vec<String>,
    pub res_ideal_complete: bool,
    pub res_ideal_stable: bool,
    pub components: Vec<CutComponent>,
    /// `zeta_i = eta_i = 0` sets of the non-hyperbolic pairs.
    pub adjustments: Vec<String>,
    pub adjusted_components: Vec<CutComponent>,
    pub real_trace: String,
    pub pair_classes: Vec<PairClass>,
    pub distinct_eigenvalues: bool,
    pub centralizer_in_ideal: bool,
    /// `ok` or the reason the pair could not be linearized on the ideal.
    pub linearization: String,
}

fn superscript(n: usize) -> String {
    const D: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    n.to_string()
        .chars()
        .map(|c| D[c.to_digit(10).unwrap() as usize])
        .collect()
}

fn monomial_text(q: &MultiIndex, names: &[String]) -> String {
    q.monomial(Some(names)).replace('*', "")
}

fn subspace_invariant<K: Coeff>(m: &Mat<K>, vanishing: &[usize], tol: f64) -> bool {
    let n = m.rows();
    vanishing.iter().all(|&s| {
        (0..n)
            .filter(|c| !vanishing.contains(c))
            .all(|c| m.get(s, c).is_negligible(tol))
    })
}

fn component<K: Coeff>(
    vanishing: Vec<usize>,
    names: &[String],
    t: &[Mat<K>; 2],
    rho: &Mat<K>,
    tol: f64,
) -> CutComponent {
    let nv = names.len();
    let equations = if vanishing.is_empty() {
        format!("ℂ{}", superscript(nv))
    } else {
        format!(
            "{{{} = 0}}",
            vanishing
                .iter()
                .map(|&k| names[k].clone())
                .collect::<Vec<_>>()
                .join(" = ")
        )
    };
    CutComponent {
        pattern: (0..nv).map(|k| vanishing.contains(&k) as u32).collect(),
        t1_invariant: subspace_invariant(&t[0], &vanishing, tol),
        t2_invariant: subspace_invariant(&t[1], &vanishing, tol),
        rho_invariant: subspace_invariant(rho, &vanishing, tol),
        equations,
        vanishing,
    }
}

/// `V(ResIdeal)` with its components, the intersection with `zeta_i =
/// eta_i = 0` over non-hyperbolic pairs, and the real trace on `Fix(rho)`.
pub fn cutting_variety<K: Coeff>(
    ip: &InvolutionPair<K>,
    mode: &OracleMode,
    degree_bound: u32,
) -> Result<CuttingVariety> {
    let nv = ip.nv();
    let probe = Ctx::new(ip, &MonomialIdeal::zero(nv), mode)?;
    let res = probe.oracle.res_ideal(degree_bound)?;
    let ctx = Ctx::new(ip, &res.ideal, mode)?;
    let names = ctx.layout.names();
    let tol = ctx.vt.max(if K::BACKEND == Backend::Float {
        1e-9
    } else {
        0.0
    });
    let linearization = match linearize_taus_on_ideal(ip, &res.ideal, mode) {
        Ok(_) => "ok".to_string(),
        Err(e) => e.to_string(),
    };
    let components: Vec<CutComponent> = res
        .ideal
        .components()
        .into_iter()
        .map(|v| component(v, &names, &ctx.t, &ctx.rho, tol))
        .collect();
    let pair_classes: Vec<PairClass> = (0..ctx.layout.pairs.len())
        .map(|i| ctx.layout.class(i))
        .collect();
    let mut extra: Vec<usize> = Vec::new();
    let mut adjustments = Vec::new();
    for (i, &(z, e)) in ctx.layout.pairs.iter().enumerate() {
        if pair_classes[i] != PairClass::Hyperbolic {
            extra.push(z);
            extra.push(e);
            adjustments.push(format!("{} = {} = 0", names[z], names[e]));
        }
    }
    let mut adjusted: Vec<Vec<usize>> = components
        .iter()
        .map(|c| {
            let mut v: Vec<usize> = c.vanishing.iter().chain(&extra).copied().collect();
            v.sort();
            v.dedup();
            v
        })
        .collect();
    adjusted.sort();
    adjusted.dedup();
    let all = adjusted.clone();
    adjusted.retain(|c| {
        !all.iter()
            .any(|d| d != c && d.iter().all(|v| c.contains(v)))
    });
    adjusted.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let adjusted_components = adjusted
        .into_iter()
        .map(|v| component(v, &names, &ctx.t, &ctx.rho, tol))
        .collect();

    let mut eqs: Vec<String> = res
        .ideal
        .gens()
        .iter()
        .map(|g| monomial_text(g, &names))
        .collect();
    eqs.extend(
        adjustments
            .iter()
            .cloned()
            .map(|a| a.trim_end_matches(" = 0").to_string()),
    );
    let real_trace = format!(
        "{{({}) ∈ ℝ{} : {}}}",
        names.join(", "),
        superscript(nv),
        if eqs.is_empty() {
            "no equations".to_string()
        } else {
            format!("{} = 0", eqs.join(" = "))
        }
    );
    Ok(CuttingVariety {
        generators: res.ideal.gens().iter().map(|g| g.exps().to_vec()).collect(),
        generator_text: res
            .ideal
            .gens()
            .iter()
            .map(|g| monomial_text(g, &names))
            .collect(),
        res_ideal_complete: res.complete,
        res_ideal_stable: res.stable,
        res_ideal: res.ideal,
        components,
        adjustments,
        adjusted_components,
        real_trace,
        distinct_eigenvalues: ctx.layout.distinct_eigenvalues(ctx.vt),
        centralizer_in_ideal: ctx.centralizer_in_ideal()?.is_none(),
        pair_classes,
        names,
        linearization,
    })
}
