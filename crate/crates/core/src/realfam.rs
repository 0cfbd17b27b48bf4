//! Families of totally real submanifolds given as fixed sets of
//! anti-holomorphic involutions `rho_i(z) = B_i z̄ + R_i(z̄)`.
//!
//! An involution is stored through its holomorphic germ `H(w) = B w + R(w)`,
//! so `rho(z) = H(z̄)`. Then `rho_i ∘ rho_j = H_i ∘ H̄_j`, where `H̄` has
//! conjugated coefficients, and `rho ∘ rho = Id` reads `H ∘ H̄ = Id`.

use crate::coeff::{Coeff, CF64};
use crate::error::{GermError, Result};
use crate::linalg::Mat;
use crate::linearize::{linearize_on_ideal, verify_tol, CommutingFamily, LinearizationResult};
use crate::resonance::{MonomialIdeal, OracleMode, ResonanceOracle};
use crate::series::{Germ, MultiIndex, Series};

/// `rho(z) = B z̄ + R(z̄)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AntiInvolution<K: Coeff> {
    h: Germ<K>,
}

impl<K: Coeff> AntiInvolution<K> {
    /// Builds from `B` and the nonlinear part `R` (order >= 2), checking
    /// `B B̄ = Id` and `rho ∘ rho = Id` up to the truncation.
    pub fn new(b: &Mat<K>, r: &Germ<K>, index: usize) -> Result<Self> {
        let n = b.rows();
        if !b.is_square() || r.nin() != n || r.nout() != n {
            return Err(GermError::ArityMismatch {
                what: format!("involution {index}"),
                left: n,
                right: r.nout(),
            });
        }
        if !r.linear_part().is_zero_tol(0.0) {
            return Err(GermError::InvalidInput(format!(
                "R of involution {} has a linear part",
                index + 1
            )));
        }
        let h = Germ::from_linear(b, r.trunc())
            .with_tol(r.tol())
            .try_add(r)?;
        Self::from_germ(h, index)
    }

    /// Builds from the holomorphic germ `H`.
    pub fn from_germ(h: Germ<K>, index: usize) -> Result<Self> {
        let tol = verify_tol::<K>(h.tol());
        let b = h.linear_part();
        let n = h.nin();
        if !b.mul(&b.conj()).approx_eq(&Mat::identity(n), tol) {
            return Err(GermError::NotInvolution(index));
        }
        let sq = h.compose(&h.conj())?;
        if sq
            .first_difference(&Germ::identity(n, h.trunc()).with_tol(h.tol()), tol)
            .is_some()
        {
            return Err(GermError::NotInvolution(index));
        }
        Ok(AntiInvolution { h })
    }

    /// Linear involution `z -> B z̄`.
    pub fn linear(b: &Mat<K>, trunc: u32) -> Result<Self> {
        Self::from_germ(Germ::from_linear(b, trunc), 0)
    }

    pub fn germ(&self) -> &Germ<K> {
        &self.h
    }
    pub fn b(&self) -> Mat<K> {
        self.h.linear_part()
    }
    pub fn r(&self) -> Germ<K> {
        self.h.nonlinear_part()
    }
    pub fn n(&self) -> usize {
        self.h.nin()
    }

    /// `rho ∘ rho'` as a holomorphic germ.
    pub fn then_after(&self, other: &AntiInvolution<K>) -> Result<Germ<K>> {
        self.h.compose(&other.h.conj())
    }

    /// `Psi^{-1} ∘ rho ∘ Psi`, again an anti-holomorphic involution.
    pub fn conjugate_by(&self, psi: &Germ<K>, index: usize) -> Result<AntiInvolution<K>> {
        let h = psi.invert()?.compose(&self.h.compose(&psi.conj())?)?;
        AntiInvolution::from_germ(h, index)
    }

    /// Real dimension of the fixed set of `z -> B z̄`.
    pub fn fixed_dimension(&self) -> usize {
        let b = self.b();
        let n = b.rows();
        // Real matrix of z -> B z̄ - z on (Re z, Im z).
        let mut m = Mat::<CF64>::zeros(2 * n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                let v = b.get(r, c).to_c64();
                let e = if r == c { 1.0 } else { 0.0 };
                m.set(r, c, CF64::new(v.re - e, 0.0));
                m.set(r, n + c, CF64::new(v.im, 0.0));
                m.set(n + r, c, CF64::new(v.im, 0.0));
                m.set(n + r, n + c, CF64::new(-v.re - e, 0.0));
            }
        }
        2 * n - m.rank(1e-9)
    }
}

/// A family of involutions with pairwise distinct tangent planes.
#[derive(Clone, Debug)]
pub struct RealFamily<K: Coeff> {
    rhos: Vec<AntiInvolution<K>>,
}

impl<K: Coeff> RealFamily<K> {
    pub fn new(rhos: Vec<AntiInvolution<K>>) -> Result<Self> {
        let first = rhos
            .first()
            .ok_or_else(|| GermError::InvalidInput("empty family".into()))?;
        let (n, trunc) = (first.n(), first.germ().trunc());
        for (i, r) in rhos.iter().enumerate() {
            if r.n() != n || r.germ().trunc() != trunc {
                return Err(GermError::ArityMismatch {
                    what: format!("involution {i}"),
                    left: n,
                    right: r.n(),
                });
            }
        }
        let tol = verify_tol::<K>(first.germ().tol());
        for i in 0..rhos.len() {
            for j in (i + 1)..rhos.len() {
                if rhos[i].b().approx_eq(&rhos[j].b(), tol) {
                    return Err(GermError::TangentPlanes { i, j });
                }
            }
        }
        Ok(RealFamily { rhos })
    }

    pub fn rhos(&self) -> &[AntiInvolution<K>] {
        &self.rhos
    }
    pub fn m(&self) -> usize {
        self.rhos.len()
    }
    pub fn n(&self) -> usize {
        self.rhos[0].n()
    }
    pub fn trunc(&self) -> u32 {
        self.rhos[0].germ().trunc()
    }

    /// Ordered pairs `(i, j)`, `i != j`, indexing the generators `F_{i,j}`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let m = self.m();
        (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect()
    }

    /// `F_{i,j} = rho_i ∘ rho_j`.
    pub fn group_element(&self, i: usize, j: usize) -> Result<Germ<K>> {
        self.rhos[i].then_after(&self.rhos[j])
    }

    /// `mu_{i,j,k}`: diagonal of `D_{i,j} = B_i B̄_j`.
    pub fn mu(&self, i: usize, j: usize) -> Result<Vec<K>> {
        let d = self.rhos[i].b().mul(&self.rhos[j].b().conj());
        if !d.is_diagonal(verify_tol::<K>(self.rhos[0].germ().tol())) {
            return Err(GermError::NonDiagonalLinearParts);
        }
        Ok(d.diagonal())
    }
}

/// The generators `F_{i,j}` (ordered pairs `i != j`) as a commuting family.
/// Lattice relations refer to the rows in [`RealFamily::pairs`] order.
pub fn build_reflection_group<K: Coeff>(
    fam: &RealFamily<K>,
    mode: OracleMode,
) -> Result<CommutingFamily<K>> {
    let mut maps = Vec::new();
    for (i, j) in fam.pairs() {
        fam.mu(i, j)?;
        maps.push(fam.group_element(i, j)?);
    }
    if maps.is_empty() {
        return Err(GermError::InvalidInput(
            "a single involution generates a trivial group".into(),
        ));
    }
    CommutingFamily::new(maps, mode)
}

/// Witness of resonance: `conj(mu_{i,j})^Q = mu_{i,j,k}^{-1}` for every `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealResonance {
    pub i: usize,
    pub k: usize,
    pub q: MultiIndex,
}

/// Scans `2 <= |Q| <= N`, `Q` outside the ideal, for resonant `(i, k, Q)`.
/// In lattice mode the eigenvalues must lie on the unit circle, where the
/// condition becomes `mu_{i,j}^Q = mu_{i,j,k}`.
pub fn check_nonresonance<K: Coeff>(
    fam: &RealFamily<K>,
    ideal: &MonomialIdeal,
    mode: &OracleMode,
) -> Result<Option<RealResonance>> {
    let n = fam.n();
    let m = fam.m();
    let pairs = fam.pairs();
    let mut mus: Vec<Vec<Vec<K>>> = vec![vec![Vec::new(); m]; m];
    for i in 0..m {
        for j in 0..m {
            mus[i][j] = fam.mu(i, j)?;
        }
    }
    let oracle = match mode {
        OracleMode::Lattice { .. } => {
            for &(i, j) in &pairs {
                for v in &mus[i][j] {
                    if (v.modulus_f64() - 1.0).abs() > 1e-9 {
                        return Err(GermError::InvalidInput(
                            "lattice mode for involution families needs unit-circle eigenvalues"
                                .into(),
                        ));
                    }
                }
            }
            let rows = pairs.iter().map(|&(i, j)| mus[i][j].clone()).collect();
            Some(ResonanceOracle::new(
                crate::resonance::DiagonalFamily::new(rows)?,
                mode.clone(),
            )?)
        }
        OracleMode::Exact => {
            if K::BACKEND != crate::coeff::Backend::Exact {
                return Err(GermError::ExactModeNeedsExactBackend);
            }
            None
        }
        OracleMode::Numeric { .. } => None,
    };
    let eps = match mode {
        OracleMode::Numeric { epsilon } => *epsilon,
        _ => 0.0,
    };
    for q in MultiIndex::up_to_degree(n, 2, fam.trunc()) {
        if ideal.contains(&q) {
            continue;
        }
        for i in 0..m {
            for k in 0..n {
                let resonant = (0..m).all(|j| {
                    if j == i {
                        return true;
                    }
                    match &oracle {
                        Some(o) => {
                            let row = pairs.iter().position(|&p| p == (i, j)).unwrap();
                            let mut e: Vec<i64> = q.exps().iter().map(|&x| x as i64).collect();
                            e[k] -= 1;
                            o.is_unit_row(row, &e)
                        }
                        None => {
                            let mut v = mus[i][j][k].clone();
                            for (t, &x) in q.exps().iter().enumerate() {
                                if x > 0 {
                                    v = v.mul(&mus[i][j][t].conj().powi(x as i64).unwrap());
                                }
                            }
                            v.sub(&K::one()).modulus_f64() <= eps && (eps > 0.0 || v == K::one())
                        }
                    }
                });
                if resonant {
                    return Ok(Some(RealResonance { i, k, q }));
                }
            }
        }
    }
    Ok(None)
}

/// Terms of `R_i` violating the support condition
/// `conj(mu_{i,j})^Q = mu_{i,j,k}^{-1}` for all `j`, as `(i, k, Q)`.
pub fn normalizable_support_violations<K: Coeff>(
    fam: &RealFamily<K>,
) -> Result<Vec<(usize, usize, MultiIndex)>> {
    let m = fam.m();
    let tol = verify_tol::<K>(fam.rhos[0].germ().tol()).max(
        if K::BACKEND == crate::coeff::Backend::Float {
            1e-9
        } else {
            0.0
        },
    );
    let mut out = Vec::new();
    for i in 0..m {
        let r = fam.rhos[i].r();
        for k in 0..fam.n() {
            for (q, _) in r.comp(k).terms() {
                let ok = (0..m).all(|j| {
                    let mu = fam.mu(i, j).unwrap();
                    let mut v = mu[k].clone();
                    for (t, &x) in q.exps().iter().enumerate() {
                        if x > 0 {
                            v = v.mul(&mu[t].conj().powi(x as i64).unwrap());
                        }
                    }
                    v.sub(&K::one()).is_negligible(tol)
                });
                if !ok {
                    out.push((i, k, q.clone()));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct StraightenResult<K: Coeff> {
    pub phi: Germ<K>,
    pub involutions: Vec<AntiInvolution<K>>,
    pub linearization: LinearizationResult<K>,
    /// `(i, k, Q)` of nonlinear terms remaining outside the ideal; empty on
    /// success.
    pub remaining_outside: Vec<(usize, usize, MultiIndex)>,
    /// Support-condition violations of the straightened involutions.
    pub normalizable_violations: Vec<(usize, usize, MultiIndex)>,
}

/// Linearizes the reflection group on the ideal and conjugates the
/// involutions by the result; they must become `z -> B_i z̄` modulo the
/// conjugated ideal.
pub fn straighten<K: Coeff>(
    fam: &RealFamily<K>,
    ideal: &MonomialIdeal,
    mode: OracleMode,
) -> Result<StraightenResult<K>> {
    if let Some(w) = check_nonresonance(fam, ideal, &mode)? {
        return Err(GermError::HypothesisViolated(format!(
            "family is resonant on the ideal: i={}, k={}, Q={:?}",
            w.i + 1,
            w.k + 1,
            w.q
        )));
    }
    let n = fam.n();
    let trunc = fam.trunc();
    for (idx, r) in fam.rhos.iter().enumerate() {
        let lin = Germ::from_linear(&r.b(), trunc);
        for g in ideal.gens() {
            if g.degree() > trunc {
                continue;
            }
            let img = crate::series::compose_series(
                &Series::monomial(n, trunc, g.clone(), K::one()),
                &lin,
            )?;
            if img.terms().any(|(m, _)| !ideal.contains(m)) {
                return Err(GermError::HypothesisViolated(format!(
                    "B_{} does not preserve the ideal",
                    idx + 1
                )));
            }
        }
    }
    let group = build_reflection_group(fam, mode)?;
    let lin = linearize_on_ideal(&group, ideal)?;
    let mut involutions = Vec::new();
    let mut remaining_outside = Vec::new();
    for (i, r) in fam.rhos.iter().enumerate() {
        let c = r.conjugate_by(&lin.phi, i)?;
        let tol = verify_tol::<K>(c.germ().tol());
        let nl = c.r();
        for k in 0..n {
            for (q, v) in nl.comp(k).terms() {
                if !ideal.contains(q) && !v.is_negligible(tol) {
                    remaining_outside.push((i, k, q.clone()));
                }
            }
        }
        involutions.push(c);
    }
    if let Some((i, k, q)) = remaining_outside.first() {
        return Err(GermError::AntiLinearizationFailed {
            i: *i,
            q: q.exps().to_vec(),
            k: *k,
        });
    }
    let straight = RealFamily {
        rhos: involutions.clone(),
    };
    let normalizable_violations = normalizable_support_violations(&straight)?;
    Ok(StraightenResult {
        phi: lin.phi.clone(),
        involutions,
        linearization: lin,
        remaining_outside,
        normalizable_violations,
    })
}

/// Coordinate description of `V(I)` and of each linear manifold on it.
#[derive(Clone, Debug, PartialEq)]
pub struct IntersectionReport {
    /// Each component as the set of vanishing coordinates.
    pub components: Vec<Vec<usize>>,
    /// `equations[k][c]`: equations of `{B_k z̄ = z}` on component `c`.
    pub equations: Vec<Vec<Vec<String>>>,
}

/// `V(I) = ∩ ∪ {z_s = 0}` and the real-linear equations `B_k z̄ = z` on
/// each component.
pub fn intersection_report<K: Coeff>(
    fam: &RealFamily<K>,
    ideal: &MonomialIdeal,
) -> IntersectionReport {
    let n = fam.n();
    let components = ideal.components();
    let mut equations = Vec::new();
    for r in &fam.rhos {
        let b = r.b();
        let mut per = Vec::new();
        for comp in &components {
            let mut eqs: Vec<String> = comp.iter().map(|&s| format!("z{} = 0", s + 1)).collect();
            for row in 0..n {
                if comp.contains(&row) {
                    continue;
                }
                let mut terms = Vec::new();
                for c in 0..n {
                    if comp.contains(&c) || b.get(row, c).is_zero() {
                        continue;
                    }
                    let v = b.get(row, c);
                    if *v == K::one() {
                        terms.push(format!("conj(z{})", c + 1));
                    } else {
                        terms.push(format!("{v}*conj(z{})", c + 1));
                    }
                }
                let rhs = if terms.is_empty() {
                    "0".to_string()
                } else {
                    terms.join(" + ")
                };
                eqs.push(format!("z{} = {rhs}", row + 1));
            }
            per.push(eqs);
        }
        equations.push(per);
    }
    IntersectionReport {
        components,
        equations,
    }
}
