//! Real submanifolds of `C^n` with a CR singularity at the origin.
//!
//! A manifold of real dimension `n+p-1` is the graph
//! `y'' = F(z', z̄', x'')`, `z_n = G(z', z̄', x'')`. After complexification
//! `z̄'` becomes an independent variable `w'`, and the parameters of the
//! complex manifold are `t = (z', w', x'')`, `p + p + q` variables with
//! `q = n - p - 1`. Coordinates of `C^n` are ordered `(z', z'', z_n)`.
//!
//! Inputs are read as polynomials: coefficients above the truncation are
//! zero.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coeff::{Backend, Coeff, CF64};
use crate::error::{GermError, Result};
use crate::linalg::Mat;
use crate::linearize::{rho_conjugate, verify_tol};
use crate::resonance::{DiagonalFamily, Magnitude, OracleMode};
use crate::series::{compose_series, solve_implicit, Germ, MultiIndex, Series};

fn half<K: Coeff>() -> K {
    K::from_ratio(1, 2)
}

fn i_unit<K: Coeff>() -> K {
    K::from_c64(Complex64::new(0.0, 1.0))
}

fn re_part<K: Coeff>(z: &K) -> K {
    z.add(&z.conj()).mul(&half())
}

fn im_part<K: Coeff>(z: &K) -> K {
    z.sub(&z.conj()).mul(&i_unit::<K>().neg()).mul(&half())
}

fn quad_index(nv: usize, i: usize, j: usize) -> MultiIndex {
    let mut e = vec![0u32; nv];
    e[i] += 1;
    e[j] += 1;
    MultiIndex::new(e)
}

/// Coefficients of `t_r t_c` for `r` in `rows`, `c` in `cols` (disjoint).
fn mixed<K: Coeff>(s: &Series<K>, rows: &[usize], cols: &[usize]) -> Mat<K> {
    let mut m = Mat::zeros(rows.len(), cols.len());
    for (a, &r) in rows.iter().enumerate() {
        for (b, &c) in cols.iter().enumerate() {
            m.set(a, b, s.coeff(&quad_index(s.nvars(), r, c)));
        }
    }
    m
}

/// Symmetric matrix `M` with `t^T M t` equal to the quadratic part in `idx`.
fn sym<K: Coeff>(s: &Series<K>, idx: &[usize]) -> Mat<K> {
    let mut m = Mat::zeros(idx.len(), idx.len());
    for (a, &r) in idx.iter().enumerate() {
        for (b, &c) in idx.iter().enumerate() {
            let v = s.coeff(&quad_index(s.nvars(), r, c));
            m.set(a, b, if a == b { v } else { v.mul(&half()) });
        }
    }
    m
}

/// `t^T M t` over the variables `idx`.
fn quad_form<K: Coeff>(nv: usize, trunc: u32, m: &Mat<K>, idx: &[usize]) -> Series<K> {
    bilinear(nv, trunc, m, idx, idx)
}

/// `sum M[r][c] t_{rows[r]} t_{cols[c]}`.
fn bilinear<K: Coeff>(
    nv: usize,
    trunc: u32,
    m: &Mat<K>,
    rows: &[usize],
    cols: &[usize],
) -> Series<K> {
    let mut s = Series::zero(nv, trunc);
    if trunc < 2 {
        return s;
    }
    for (a, &r) in rows.iter().enumerate() {
        for (b, &c) in cols.iter().enumerate() {
            let v = m.get(a, b);
            if !v.is_zero() {
                s.add_term(quad_index(nv, r, c), v.clone());
            }
        }
    }
    s
}

/// Largest modulus of a matrix, used in error messages.
fn mat_residual<K: Coeff>(m: &Mat<K>) -> String {
    format!("{:e}", m.max_modulus())
}

// ---------------------------------------------------------------------------

/// The defining series of a manifold, in the parameters `(z', w', x'')`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldData<K: Coeff> {
    p: usize,
    q: usize,
    f: Vec<Series<K>>,
    g: Series<K>,
}

impl<K: Coeff> ManifoldData<K> {
    /// Checks arities, the absence of constant and linear terms, and the
    /// reality of each `F_alpha`.
    pub fn new(p: usize, f: Vec<Series<K>>, g: Series<K>) -> Result<Self> {
        if p == 0 {
            return Err(GermError::InvalidInput("p must be at least 1".into()));
        }
        let q = f.len();
        let nv = 2 * p + q;
        let trunc = g.trunc();
        for (name, s) in std::iter::once(("G".to_string(), &g)).chain(
            f.iter()
                .enumerate()
                .map(|(a, s)| (format!("F{}", p + a + 1), s)),
        ) {
            if s.nvars() != nv {
                return Err(GermError::ArityMismatch {
                    what: name,
                    left: nv,
                    right: s.nvars(),
                });
            }
            if s.trunc() != trunc {
                return Err(GermError::TruncationMismatch {
                    left: trunc,
                    right: s.trunc(),
                });
            }
            if let Some(o) = s.order() {
                if o < 2 {
                    return Err(GermError::InvalidInput(format!(
                        "{name} has terms of degree {o}; order 2 is required"
                    )));
                }
            }
        }
        let m = ManifoldData { p, q, f, g };
        let tol = verify_tol::<K>(m.g.tol());
        for (a, s) in m.f.iter().enumerate() {
            for (e, c) in s.terms() {
                let sw = m.swap_index(e);
                if !c.sub(&s.coeff(&sw).conj()).is_negligible(tol) {
                    return Err(GermError::RealityViolated {
                        series: format!("F{}", p + a + 1),
                        q: e.exps().to_vec(),
                    });
                }
            }
        }
        Ok(m)
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn n(&self) -> usize {
        self.p + self.q + 1
    }
    /// Number of parameters `2p + q`.
    pub fn nv(&self) -> usize {
        2 * self.p + self.q
    }
    pub fn trunc(&self) -> u32 {
        self.g.trunc()
    }
    pub fn tol(&self) -> f64 {
        self.g.tol()
    }
    pub fn f(&self) -> &[Series<K>] {
        &self.f
    }
    pub fn g(&self) -> &Series<K> {
        &self.g
    }

    pub fn z_idx(&self) -> Vec<usize> {
        (0..self.p).collect()
    }
    pub fn w_idx(&self) -> Vec<usize> {
        (self.p..2 * self.p).collect()
    }
    pub fn x_idx(&self) -> Vec<usize> {
        (2 * self.p..self.nv()).collect()
    }

    fn swap_index(&self, e: &MultiIndex) -> MultiIndex {
        let mut v = e.exps().to_vec();
        for i in 0..self.p {
            v.swap(i, self.p + i);
        }
        MultiIndex::new(v)
    }

    /// The matrix exchanging `z'` and `w'`.
    pub fn swap_matrix(&self) -> Mat<K> {
        swap_matrix(self.p, self.q)
    }

    /// `t -> (z', x'' + iF, G)`, the holomorphic side.
    pub fn point_map(&self) -> Germ<K> {
        let nv = self.nv();
        let n = self.trunc();
        let mut comps = Vec::new();
        for i in 0..self.p {
            comps.push(Series::var(nv, n, i).with_tol(self.tol()));
        }
        for a in 0..self.q {
            comps.push(
                Series::var(nv, n, 2 * self.p + a)
                    .with_tol(self.tol())
                    .add(&self.f[a].scale(&i_unit())),
            );
        }
        comps.push(self.g.clone());
        Germ::new(comps).expect("constant-free by construction")
    }

    /// `t -> (w', x'' - iF, Ḡ(w', z', x''))`, the antiholomorphic side.
    pub fn conj_point_map(&self) -> Germ<K> {
        let swap = Germ::from_linear(&self.swap_matrix(), self.trunc()).with_tol(self.tol());
        self.point_map().conj().compose(&swap).expect("arity")
    }

    /// `w_n = Ḡ(w', z', x'')` as a function of the parameters.
    pub fn wn(&self) -> Series<K> {
        self.conj_point_map().comp(self.n() - 1).clone()
    }

    pub fn retruncate(&self, n: u32) -> Self {
        ManifoldData {
            p: self.p,
            q: self.q,
            f: self.f.iter().map(|s| s.retruncate(n)).collect(),
            g: self.g.retruncate(n),
        }
    }

    /// Whether the manifold is its quadric: `G` quadratic, `F = 0`.
    pub fn is_quadric(&self) -> bool {
        self.f.iter().all(|s| s.is_zero()) && self.g.degree_range(3, self.trunc()).is_zero()
    }
}

/// `(z', w', x'') -> (w', z', x'')`.
pub fn swap_matrix<K: Coeff>(p: usize, q: usize) -> Mat<K> {
    let nv = 2 * p + q;
    let mut m = Mat::zeros(nv, nv);
    for i in 0..p {
        m.set(i, p + i, K::one());
        m.set(p + i, i, K::one());
    }
    for a in 0..q {
        m.set(2 * p + a, 2 * p + a, K::one());
    }
    m
}

/// Expresses the manifold in the coordinates `Psi(z)` of `C^n`.
pub fn apply_change<K: Coeff>(m: &ManifoldData<K>, psi: &Germ<K>) -> Result<ManifoldData<K>> {
    let (p, q) = (m.p, m.q);
    if psi.nin() != m.n() || psi.nout() != m.n() {
        return Err(GermError::ArityMismatch {
            what: "coordinate change".into(),
            left: m.n(),
            right: psi.nout(),
        });
    }
    let z = psi.compose(&m.point_map())?;
    let w = psi.conj().compose(&m.conj_point_map())?;
    let mut theta = Vec::new();
    for i in 0..p {
        theta.push(z.comp(i).clone());
    }
    for i in 0..p {
        theta.push(w.comp(i).clone());
    }
    for a in 0..q {
        theta.push(z.comp(p + a).add(w.comp(p + a)).scale(&half()));
    }
    let inv = Germ::new(theta)?.with_tol(m.tol()).invert()?;
    let c = i_unit::<K>().neg().mul(&half());
    let mut f = Vec::new();
    for a in 0..q {
        let im = z.comp(p + a).sub(w.comp(p + a)).scale(&c);
        f.push(compose_series(&im, &inv)?);
    }
    let g = compose_series(z.comp(p + q), &inv)?;
    ManifoldData::new(p, f, g)
}

// ---------------------------------------------------------------------------

/// Quadratic part of one defining series, split by variable blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticJet<K: Coeff> {
    /// `d[i][l]`: coefficient of `z_i w_l`.
    pub d: Mat<K>,
    /// Symmetric, `z^T e z`.
    pub e: Mat<K>,
    /// Symmetric, `w^T f w`.
    pub f: Mat<K>,
    /// Symmetric, `x^T a x`.
    pub a: Mat<K>,
    /// `b[alpha][i]`: coefficient of `x_alpha z_i`.
    pub b: Mat<K>,
    /// `c[alpha][i]`: coefficient of `x_alpha w_i`.
    pub c: Mat<K>,
}

impl<K: Coeff> QuadraticJet<K> {
    fn read(s: &Series<K>, zi: &[usize], wi: &[usize], xi: &[usize]) -> Self {
        QuadraticJet {
            d: mixed(s, zi, wi),
            e: sym(s, zi),
            f: sym(s, wi),
            a: sym(s, xi),
            b: mixed(s, xi, zi),
            c: mixed(s, xi, wi),
        }
    }

    /// Reassembles the quadratic polynomial.
    pub fn to_series(&self, p: usize, q: usize, trunc: u32) -> Series<K> {
        let nv = 2 * p + q;
        let zi: Vec<usize> = (0..p).collect();
        let wi: Vec<usize> = (p..2 * p).collect();
        let xi: Vec<usize> = (2 * p..nv).collect();
        bilinear(nv, trunc, &self.d, &zi, &wi)
            .add(&quad_form(nv, trunc, &self.e, &zi))
            .add(&quad_form(nv, trunc, &self.f, &wi))
            .add(&quad_form(nv, trunc, &self.a, &xi))
            .add(&bilinear(nv, trunc, &self.b, &xi, &zi))
            .add(&bilinear(nv, trunc, &self.c, &xi, &wi))
    }

    /// The Bishop matrix `(F + F^T)/2`; `f` is stored symmetric already.
    pub fn bishop_matrix(&self) -> Mat<K> {
        self.f.clone()
    }

    /// Whether everything except the `z w`, `z z`, `w w` blocks vanishes.
    fn sigma_is_zero(&self, tol: f64) -> bool {
        self.a.is_zero_tol(tol) && self.b.is_zero_tol(tol) && self.c.is_zero_tol(tol)
    }
}

/// 2-jets of `G` and of every `F_alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadricJetData<K: Coeff> {
    pub g: QuadraticJet<K>,
    pub alpha: Vec<QuadraticJet<K>>,
}

/// Splits the 2-jets into sesquilinear, pure and `x''`-mixed parts.
pub fn extract_jets<K: Coeff>(m: &ManifoldData<K>) -> QuadricJetData<K> {
    let (zi, wi, xi) = (m.z_idx(), m.w_idx(), m.x_idx());
    QuadricJetData {
        g: QuadraticJet::read(&m.g, &zi, &wi, &xi),
        alpha: m
            .f
            .iter()
            .map(|s| QuadraticJet::read(s, &zi, &wi, &xi))
            .collect(),
    }
}

// ---------------------------------------------------------------------------

fn to_na<K: Coeff>(m: &Mat<K>) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j).to_c64())
}

fn from_na<K: Coeff>(m: &DMatrix<Complex64>) -> Mat<K> {
    let mut r = Mat::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            r.set(i, j, K::from_c64(m[(i, j)]));
        }
    }
    r
}

/// Takagi factorization `S = U diag(sigma) U^T`, `U` unitary, `sigma >= 0`,
/// through the real symmetric matrix `[[A, B], [B, -A]]`, `S = A + iB`.
pub fn takagi(s: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let p = s.nrows();
    let big = DMatrix::from_fn(2 * p, 2 * p, |i, j| {
        let (bi, bj) = (i / p, j / p);
        let v = s[(i % p, j % p)];
        match (bi, bj) {
            (0, 0) => v.re,
            (1, 1) => -v.re,
            _ => v.im,
        }
    });
    let eig = nalgebra::SymmetricEigen::new(big);
    let mut order: Vec<usize> = (0..2 * p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut cols: Vec<nalgebra::DVector<Complex64>> = Vec::new();
    let mut sigma = Vec::new();
    for &k in &order {
        if cols.len() == p {
            break;
        }
        let v = eig.eigenvectors.column(k);
        let mut u = nalgebra::DVector::from_fn(p, |i, _| Complex64::new(v[i], v[p + i]));
        for c in &cols {
            let proj = c.dotc(&u);
            u -= c * proj;
        }
        let nrm = u.norm();
        if nrm < 1e-8 {
            continue;
        }
        cols.push(u / Complex64::new(nrm, 0.0));
        sigma.push(eig.eigenvalues[k].max(0.0));
    }
    let u = DMatrix::from_columns(&cols);
    (sigma, u)
}

/// Largest singular value.
pub fn operator_norm<K: Coeff>(d: &Mat<K>) -> Result<K> {
    match K::BACKEND {
        Backend::Float => {
            let svd = to_na(d).svd(false, false);
            Ok(K::from_c64(Complex64::new(svd.singular_values.max(), 0.0)))
        }
        Backend::Exact => {
            if !d.is_diagonal(0.0) {
                return Err(GermError::Unsupported(
                    "exact operator norm of a non-diagonal sesquilinear matrix".into(),
                ));
            }
            let mut best: Option<K> = None;
            for v in d.diagonal() {
                let a = v
                    .abs_exact()
                    .ok_or_else(|| GermError::Unsupported(format!("|{v}| is irrational")))?;
                let k = K::from_rationals(&a, &num_rational::BigRational::from_integer(0.into()));
                if best
                    .as_ref()
                    .is_none_or(|b| Magnitude::of(&k).cmp(&Magnitude::of(b)).is_gt())
                {
                    best = Some(k);
                }
            }
            Ok(best.unwrap_or_else(K::zero))
        }
    }
}

/// Result of bringing the 2-jet into normal form.
#[derive(Clone, Debug)]
pub struct PreparedQuadric<K: Coeff> {
    /// Generalized Bishop invariants in coordinate order.
    pub gamma: Vec<K>,
    pub d_normalized: Mat<K>,
    /// `Z = Psi(z)`, new coordinates of `C^n` in terms of the old ones.
    pub coordinate_change: Germ<K>,
    pub prepared: ManifoldData<K>,
    /// `det(S^{-1} D^T S̄^{-1} D^H / 4 - I)`; `None` when `S` is singular.
    pub cond1_det: Option<K>,
    /// Whether the Bishop matrix was diagonalized by a Takagi factorization.
    pub takagi: bool,
    /// Names of the changes actually applied, in order.
    pub steps: Vec<String>,
}

fn replace_comp<K: Coeff>(n: usize, trunc: u32, tol: f64, k: usize, s: Series<K>) -> Germ<K> {
    let mut comps: Vec<Series<K>> = (0..n)
        .map(|i| Series::var(n, trunc, i).with_tol(tol))
        .collect();
    comps[k] = s;
    Germ::new(comps).expect("constant-free")
}

fn cond1_det<K: Coeff>(s: &Mat<K>, d: &Mat<K>) -> Option<K> {
    let sinv = s.inverse()?;
    let dt = d.transpose();
    let quarter = K::from_ratio(1, 4);
    let m = sinv
        .mul(&dt)
        .mul(&sinv.conj())
        .mul(&dt.conj())
        .scale(&quarter)
        .sub(&Mat::identity(s.rows()));
    Some(m.det())
}

/// Solves `-C = M A + N Ā` for complex `A` as a real system.
fn solve_semilinear<K: Coeff>(m: &Mat<K>, nmat: &Mat<K>, c: &[K]) -> Option<Vec<K>> {
    let p = m.rows();
    let mut big = Mat::zeros(2 * p, 2 * p);
    let mut rhs = Mat::zeros(2 * p, 1);
    for r in 0..p {
        for s in 0..p {
            let (mr, mi) = (re_part(m.get(r, s)), im_part(m.get(r, s)));
            let (nr, ni) = (re_part(nmat.get(r, s)), im_part(nmat.get(r, s)));
            big.set(r, s, mr.add(&nr));
            big.set(r, p + s, ni.sub(&mi));
            big.set(p + r, s, mi.add(&ni));
            big.set(p + r, p + s, mr.sub(&nr));
        }
        rhs.set(r, 0, re_part(&c[r]).neg());
        rhs.set(p + r, 0, im_part(&c[r]).neg());
    }
    let x = big.solve(&rhs)?;
    Some(
        (0..p)
            .map(|r| x.get(r, 0).add(&x.get(p + r, 0).mul(&i_unit())))
            .collect(),
    )
}

/// Complex `b` with `(b D + b̄ D^H)/2 = target`, if any.
fn solve_proportional<K: Coeff>(d: &Mat<K>, target: &Mat<K>, tol: f64) -> Option<K> {
    let p = d.rows();
    let dh = d.conj().transpose();
    // Real equations br*u + bi*v = t.
    let mut rows: Vec<(K, K, K)> = Vec::new();
    for k in 0..p {
        for l in 0..p {
            let u = d.get(k, l).add(dh.get(k, l)).mul(&half());
            let v = d.get(k, l).sub(dh.get(k, l)).mul(&i_unit()).mul(&half());
            let t = target.get(k, l);
            rows.push((re_part(&u), re_part(&v), re_part(t)));
            rows.push((im_part(&u), im_part(&v), im_part(t)));
        }
    }
    let piv = rows
        .iter()
        .position(|(a, b, _)| !a.is_negligible(tol) || !b.is_negligible(tol))?;
    let (a1, b1, t1) = rows[piv].clone();
    let mut sol: Option<(K, K)> = None;
    for (a2, b2, t2) in &rows {
        let det = a1.mul(b2).sub(&b1.mul(a2));
        if !det.is_negligible(tol) {
            let br = t1.mul(b2).sub(&b1.mul(t2)).div(&det)?;
            let bi = a1.mul(t2).sub(&t1.mul(a2)).div(&det)?;
            sol = Some((br, bi));
            break;
        }
    }
    let (br, bi) = match sol {
        Some(s) => s,
        None if !a1.is_negligible(tol) => (t1.div(&a1)?, K::zero()),
        None => (K::zero(), t1.div(&b1)?),
    };
    Some(br.add(&bi.mul(&i_unit())))
}

/// Brings the 2-jet into normal form: `G = Q + O(3)` with
/// `Q = z^T D w + sum gamma_i (z_i^2 + w_i^2)`, `|D| = 1`, and `F = O(3)`.
pub fn prepare_quadric<K: Coeff>(m: &ManifoldData<K>) -> Result<PreparedQuadric<K>> {
    let (p, q, n, nv) = (m.p, m.q, m.n(), m.nv());
    let trunc = m.trunc();
    let tol = m.tol();
    let vt = verify_tol::<K>(tol);
    let zi: Vec<usize> = (0..p).collect();
    let zpp: Vec<usize> = (p..p + q).collect();
    let mut cur = m.clone();
    let mut total = Germ::identity(n, trunc).with_tol(tol);
    let mut steps = Vec::new();
    let mut apply = |cur: &mut ManifoldData<K>,
                     psi: Germ<K>,
                     name: &str,
                     steps: &mut Vec<String>|
     -> Result<()> {
        *cur = apply_change(cur, &psi)?;
        total = psi.compose(&total)?;
        steps.push(name.to_string());
        Ok(())
    };

    let jets = extract_jets(&cur);
    if jets.g.d.is_zero_tol(vt) {
        return Err(GermError::DegenerateSesquilinear);
    }

    // Diagonalize the Bishop matrix: z' = V ζ' with V̄^T S V̄ diagonal >= 0.
    let s = jets.g.bishop_matrix();
    let mut takagi_used = false;
    let v: Option<Mat<K>> = match K::BACKEND {
        Backend::Float => {
            let (_, u) = takagi(&to_na(&s));
            takagi_used = true;
            let um: Mat<K> = from_na(&u);
            if um.approx_eq(&Mat::identity(p), 1e-14) {
                None
            } else {
                Some(um)
            }
        }
        Backend::Exact => {
            if !s.is_diagonal(0.0) || s.diagonal().iter().any(|x| !x.is_real()) {
                return Err(GermError::Unsupported(
                    "exact backend needs a real diagonal Bishop matrix".into(),
                ));
            }
            let diag: Vec<K> = s
                .diagonal()
                .iter()
                .map(|x| {
                    if re_part(x).to_c64().re < 0.0 {
                        i_unit()
                    } else {
                        K::one()
                    }
                })
                .collect();
            if diag.iter().all(|x| *x == K::one()) {
                None
            } else {
                Some(Mat::diag(&diag))
            }
        }
    };
    if let Some(v) = v {
        let vinv = v.inverse().ok_or(GermError::NonInvertibleLinearPart)?;
        let mut lin = Mat::identity(n);
        lin.put_block(0, 0, &vinv);
        apply(
            &mut cur,
            Germ::from_linear(&lin, trunc).with_tol(tol),
            "diagonalize-bishop",
            &mut steps,
        )?;
    }

    // Unit operator norm of the sesquilinear part.
    let jets = extract_jets(&cur);
    let norm = operator_norm(&jets.g.d)?;
    if norm.is_negligible(vt) {
        return Err(GermError::DegenerateSesquilinear);
    }
    if norm.sub(&K::one()).modulus_f64() > 1e-15
        || (K::BACKEND == Backend::Exact && norm != K::one())
    {
        let s = Series::var(n, trunc, n - 1)
            .with_tol(tol)
            .scale(&norm.inv().unwrap());
        apply(
            &mut cur,
            replace_comp(n, trunc, tol, n - 1, s),
            "normalize-sesquilinear",
            &mut steps,
        )?;
    }

    // Symmetrize the pure parts: Z_n = z_n + z'^T (F - E) z'.
    let jets = extract_jets(&cur);
    let fe = jets.g.f.sub(&jets.g.e);
    if !fe.is_zero_tol(0.0) {
        let s = Series::var(n, trunc, n - 1)
            .with_tol(tol)
            .add(&quad_form(n, trunc, &fe, &zi));
        apply(
            &mut cur,
            replace_comp(n, trunc, tol, n - 1, s),
            "symmetrize-pure-terms",
            &mut steps,
        )?;
    }

    let jets = extract_jets(&cur);
    let s = jets.g.bishop_matrix();
    let d = jets.g.d.clone();
    let c1 = cond1_det(&s, &d);
    if let Some(det) = &c1 {
        if det.is_negligible(vt.max(if K::BACKEND == Backend::Float {
            1e-10
        } else {
            0.0
        })) {
            return Err(GermError::Cond1Violated {
                det: det.to_string(),
            });
        }
    }

    // Remove x'' w' terms: z' = ζ' + A z''.
    if q > 0 && !jets.g.c.is_zero_tol(0.0) {
        let mt = d.transpose();
        let nm = s.scale(&K::from_i64(2));
        let mut amat = Mat::zeros(p, q);
        for a in 0..q {
            let col = solve_semilinear(&mt, &nm, jets.g.c.row(a)).ok_or_else(|| {
                GermError::Cond1Violated {
                    det: c1
                        .as_ref()
                        .map_or("singular Bishop matrix".to_string(), |x| x.to_string()),
                }
            })?;
            for (i, v) in col.into_iter().enumerate() {
                amat.set(i, a, v);
            }
        }
        let mut lin = Mat::identity(n);
        for i in 0..p {
            for a in 0..q {
                lin.set(i, p + a, amat.get(i, a).neg());
            }
        }
        apply(
            &mut cur,
            Germ::from_linear(&lin, trunc).with_tol(tol),
            "remove-x-conj-terms",
            &mut steps,
        )?;
    }

    // Remove x'' x'' and x'' z' terms of G.
    let jets = extract_jets(&cur);
    if q > 0 && (!jets.g.a.is_zero_tol(0.0) || !jets.g.b.is_zero_tol(0.0)) {
        let corr =
            quad_form(n, trunc, &jets.g.a, &zpp).add(&bilinear(n, trunc, &jets.g.b, &zpp, &zi));
        let s = Series::var(n, trunc, n - 1).with_tol(tol).sub(&corr);
        apply(
            &mut cur,
            replace_comp(n, trunc, tol, n - 1, s),
            "remove-x-terms",
            &mut steps,
        )?;
    }

    // Second condition: each sesquilinear part of F_alpha proportional to D.
    let jets = extract_jets(&cur);
    for a in 0..q {
        let da = &jets.alpha[a].d;
        if da.is_zero_tol(0.0) {
            continue;
        }
        let target = da.neg_mat();
        let dh = jets.g.d.conj().transpose();
        let b = solve_proportional(&jets.g.d, &target, vt.max(1e-300)).filter(|b| {
            let got = jets.g.d.scale(b).add(&dh.scale(&b.conj())).scale(&half());
            got.approx_eq(
                &target,
                vt.max(if K::BACKEND == Backend::Float {
                    1e-10
                } else {
                    0.0
                }),
            )
        });
        let Some(b) = b else {
            let lam = if jets.g.d.get(0, 0).is_zero() {
                K::zero()
            } else {
                da.get(0, 0).div(jets.g.d.get(0, 0)).unwrap()
            };
            return Err(GermError::Cond2Violated {
                alpha: p + a + 1,
                residual: mat_residual(&da.sub(&jets.g.d.scale(&lam))),
            });
        };
        let s = Series::var(n, trunc, p + a)
            .with_tol(tol)
            .add(&Series::var(n, trunc, n - 1).scale(&b.mul(&i_unit())));
        apply(
            &mut cur,
            replace_comp(n, trunc, tol, p + a, s),
            &format!("proportional-sesquilinear-{}", p + a + 1),
            &mut steps,
        )?;
    }

    // Remove the remaining quadratic part of each F_alpha.
    let jets = extract_jets(&cur);
    for a in 0..q {
        let ja = &jets.alpha[a];
        if ja.a.is_zero_tol(0.0) && ja.b.is_zero_tol(0.0) && ja.e.is_zero_tol(0.0) {
            continue;
        }
        let two = K::from_i64(2);
        let poly = quad_form(n, trunc, &ja.a, &zpp)
            .add(&bilinear(n, trunc, &ja.b.scale(&two), &zpp, &zi))
            .add(&quad_form(n, trunc, &ja.e.scale(&two), &zi));
        let s = Series::var(n, trunc, p + a)
            .with_tol(tol)
            .sub(&poly.scale(&i_unit()));
        apply(
            &mut cur,
            replace_comp(n, trunc, tol, p + a, s),
            &format!("remove-quadratic-{}", p + a + 1),
            &mut steps,
        )?;
    }

    let jets = extract_jets(&cur);
    let ok_tol = vt.max(if K::BACKEND == Backend::Float {
        1e-9
    } else {
        0.0
    });
    let s = jets.g.bishop_matrix();
    if !jets.g.sigma_is_zero(ok_tol)
        || !jets.g.e.approx_eq(&s, ok_tol)
        || !s.is_diagonal(ok_tol)
        || jets.alpha.iter().any(|j| {
            !j.to_series(p, q, trunc.min(2)).truncate(2).is_zero()
                && j.to_series(p, q, 2).max_modulus() > ok_tol
        })
    {
        return Err(GermError::InvalidInput(
            "preparation left quadratic terms behind".into(),
        ));
    }
    let _ = nv;
    Ok(PreparedQuadric {
        gamma: s.diagonal(),
        d_normalized: jets.g.d.clone(),
        coordinate_change: total,
        prepared: cur,
        cond1_det: c1,
        takagi: takagi_used,
        steps,
    })
}

/// The generalized Bishop invariants, ascending.
pub fn bishop_invariants<K: Coeff>(pq: &PreparedQuadric<K>) -> Vec<K> {
    let mut g = pq.gamma.clone();
    g.sort_by(|a, b| a.to_c64().re.partial_cmp(&b.to_c64().re).unwrap());
    g
}

// ---------------------------------------------------------------------------

/// Worst ratio of `|(t∘t - Id)_Q|` to the rounding scale of `(|t|∘|t|)_Q`.
pub fn involution_defect<K: Coeff>(t: &Germ<K>) -> Result<f64> {
    let id = Germ::identity(t.nin(), t.trunc()).with_tol(0.0);
    let d = t.compose(t)?;
    let a = t
        .map_coeffs(|c| CF64::new(c.modulus_f64(), 0.0))
        .with_tol(0.0);
    let scale = a.compose(&a)?;
    let mut worst = 0f64;
    for j in 0..t.nout() {
        let r = d.comp(j).sub(id.comp(j));
        for (q, c) in r.terms() {
            let s = scale.comp(j).coeff(q).0.re.max(1.0);
            worst = worst.max(c.modulus_f64() / (s * f64::EPSILON));
        }
    }
    Ok(worst)
}

/// `t∘t = Id`: exactly on the exact backend; on floats up to `vt` plus the
/// rounding error of the composition itself.
fn is_involution<K: Coeff>(t: &Germ<K>, vt: f64) -> Result<bool> {
    composes_to(
        t,
        t,
        &Germ::identity(t.nin(), t.trunc()).with_tol(t.tol()),
        vt,
    )
}

/// `f∘g = target`, with the same tolerance rule as [`is_involution`].
fn composes_to<K: Coeff>(f: &Germ<K>, g: &Germ<K>, target: &Germ<K>, vt: f64) -> Result<bool> {
    let d = f.compose(g)?;
    if d.first_difference(target, vt).is_none() {
        return Ok(true);
    }
    if K::BACKEND == Backend::Exact {
        return Ok(false);
    }
    let abs = |h: &Germ<K>| {
        h.map_coeffs(|c| CF64::new(c.modulus_f64(), 0.0))
            .with_tol(0.0)
    };
    let scale = abs(f).compose(&abs(g))?;
    for j in 0..f.nout() {
        for (q, c) in d.comp(j).sub(target.comp(j)).terms() {
            if c.modulus_f64() > vt + ROUNDING_ULPS * f64::EPSILON * scale.comp(j).coeff(q).0.re {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

const ROUNDING_ULPS: f64 = 1e3;

/// Two holomorphic involutions exchanged by an antiholomorphic involution
/// `rho(t) = P t̄`, with `Phi = tau1 ∘ tau2`.
#[derive(Clone, Debug)]
pub struct InvolutionPair<K: Coeff> {
    pub p: usize,
    pub q: usize,
    pub tau1: Germ<K>,
    pub tau2: Germ<K>,
    pub phi: Germ<K>,
    pub t1: Mat<K>,
    pub t2: Mat<K>,
    pub phi_lin: Mat<K>,
    /// `P` with `rho(t) = P t̄` and `P P̄ = I`.
    pub rho: Mat<K>,
    /// The `x''`-components of `tau1` (empty outside the manifold pipeline).
    pub gamma: Vec<Series<K>>,
}

impl<K: Coeff> InvolutionPair<K> {
    /// Builds `tau2 = rho ∘ tau1 ∘ rho` and `Phi`, checking both involution
    /// laws.
    pub fn from_taus(tau1: Germ<K>, rho: Mat<K>, p: usize, q: usize) -> Result<Self> {
        let nv = tau1.nin();
        if nv != 2 * p + q || tau1.nout() != nv || rho.rows() != nv || !rho.is_square() {
            return Err(GermError::ArityMismatch {
                what: "involution pair".into(),
                left: 2 * p + q,
                right: nv,
            });
        }
        let vt = verify_tol::<K>(tau1.tol());
        if !rho.mul(&rho.conj()).approx_eq(&Mat::identity(nv), vt) {
            return Err(GermError::InvalidInput(
                "rho matrix P must satisfy P P̄ = I".into(),
            ));
        }
        if !is_involution(&tau1, vt)? {
            return Err(GermError::NotInvolution(0));
        }
        let tau2 = rho_conjugate(&tau1, &rho)?;
        if !is_involution(&tau2, vt)? {
            return Err(GermError::NotInvolution(1));
        }
        let phi = tau1.compose(&tau2)?;
        let t1 = tau1.linear_part();
        let t2 = tau2.linear_part();
        let phi_lin = t1.mul(&t2);
        Ok(InvolutionPair {
            p,
            q,
            tau1,
            tau2,
            phi,
            t1,
            t2,
            phi_lin,
            rho,
            gamma: Vec::new(),
        })
    }

    pub fn nv(&self) -> usize {
        self.tau1.nin()
    }
    pub fn trunc(&self) -> u32 {
        self.tau1.trunc()
    }

    /// `rho ∘ Phi ∘ rho = Phi^{-1}` up to the truncation.
    pub fn check_rho_reverses_phi(&self) -> Result<bool> {
        let lhs = rho_conjugate(&self.phi, &self.rho)?;
        let rhs = self.phi.invert()?;
        Ok(lhs
            .first_difference(&rhs, verify_tol::<K>(self.phi.tol()))
            .is_none())
    }

    /// Conjugates by the linear change `t = C s`: `tau' = C^{-1} tau(C s)`,
    /// `P' = C^{-1} P C̄`.
    pub fn conjugate_linear(&self, c: &Mat<K>) -> Result<InvolutionPair<K>> {
        let cinv = c.inverse().ok_or(GermError::NonInvertibleLinearPart)?;
        let cg = Germ::from_linear(c, self.trunc()).with_tol(self.tau1.tol());
        let tau1 = self.tau1.compose(&cg)?.left_mul(&cinv);
        let rho = cinv.mul(&self.rho).mul(&c.conj());
        InvolutionPair::from_taus(tau1, rho, self.p, self.q)
    }
}

/// The expected `D tau1(0)` of the prepared quadric,
/// `[[-I, -S^{-1} D^H, 0], [0, I, 0], [0, 0, I]]`.
pub fn expected_t1<K: Coeff>(pq: &PreparedQuadric<K>) -> Result<Mat<K>> {
    let p = pq.prepared.p();
    let q = pq.prepared.q();
    let nv = 2 * p + q;
    for (i, g) in pq.gamma.iter().enumerate() {
        if g.is_negligible(verify_tol::<K>(pq.prepared.tol())) {
            return Err(GermError::ZeroBishopInvariant(i));
        }
    }
    let sinv = Mat::diag(
        &pq.gamma
            .iter()
            .map(|g| g.inv().unwrap())
            .collect::<Vec<_>>(),
    );
    let k = sinv.mul(&pq.d_normalized.conj().transpose());
    let mut t = Mat::identity(nv);
    for i in 0..p {
        t.set(i, i, K::one().neg());
    }
    t.put_block(0, p, &k.neg_mat());
    Ok(t)
}

/// Complexifies the prepared manifold and builds `tau1` (deck transformation
/// of `t -> w`), `tau2 = rho tau1 rho` and `Phi = tau1 ∘ tau2`.
pub fn complexify_and_build_involutions<K: Coeff>(
    pq: &PreparedQuadric<K>,
) -> Result<InvolutionPair<K>> {
    let m = &pq.prepared;
    let (p, q, nv) = (m.p(), m.q(), m.nv());
    let trunc = m.trunc();
    let tol = m.tol();
    let vt = verify_tol::<K>(tol);
    let t1 = expected_t1(pq)?;
    let rho = m.swap_matrix();

    let (tau1, gamma) = if m.is_quadric() {
        let tau1 = Germ::from_linear(&t1, trunc).with_tol(tol);
        let gamma = (0..q).map(|a| tau1.comp(2 * p + a).clone()).collect();
        (tau1, gamma)
    } else if p > 1 {
        return Err(GermError::Unsupported(
            "the deck transformation is only determined for p = 1 beyond the quadric".into(),
        ));
    } else {
        build_tau1_p1(m)?
    };
    if !tau1.linear_part().approx_eq(
        &t1,
        vt.max(if K::BACKEND == Backend::Float {
            1e-10
        } else {
            0.0
        }),
    ) {
        return Err(GermError::HypothesisViolated(
            "linear part of tau1 differs from the block form".into(),
        ));
    }
    // tau1 preserves the antiholomorphic point.
    let wmap = m.conj_point_map();
    if !composes_to(&wmap, &tau1, &wmap, vt)? {
        return Err(GermError::HypothesisViolated(
            "tau1 does not preserve the projection to w".into(),
        ));
    }
    let mut ip = InvolutionPair::from_taus(tau1, rho, p, q)?;
    ip.gamma = gamma;
    let _ = nv;
    Ok(ip)
}

/// `p = 1`: solve for `x̃''`, divide the `w_n` equation by `z̃ - z`, solve
/// the quotient for the nontrivial branch.
fn build_tau1_p1<K: Coeff>(m: &ManifoldData<K>) -> Result<(Germ<K>, Vec<Series<K>>)> {
    let q = m.q();
    let nv = m.nv();
    let trunc = m.trunc();
    let tol = m.tol();
    let vt = verify_tol::<K>(tol);
    let big = m.retruncate(trunc + 1);
    let n1 = trunc + 1;
    // Variables (z, w, x, zt, xt).
    let tot = nv + 1 + q;
    let zt = nv;
    let xt: Vec<usize> = (nv + 1..tot).collect();
    let orig: Vec<usize> = (0..nv).collect();
    let mut tilde: Vec<usize> = vec![zt, 1];
    tilde.extend(xt.iter().copied());

    // Γ: x̃ - iF(z̃, w, x̃) = x - iF(z, w, x).
    let known_n = nv + 1;
    let gamma_known: Vec<Series<K>> = if q > 0 {
        let mut eqs = Vec::new();
        for a in 0..q {
            let f = &big.f()[a];
            let e = Series::var(tot, n1, xt[a])
                .with_tol(tol)
                .sub(&f.embed(tot, &tilde).scale(&i_unit()))
                .sub(&Series::var(tot, n1, 2 + a))
                .add(&f.embed(tot, &orig).scale(&i_unit()));
            eqs.push(e);
        }
        let mut branch = Mat::zeros(q, known_n);
        for a in 0..q {
            branch.set(a, 2 + a, K::one());
        }
        solve_implicit(&Germ::new(eqs)?.with_tol(tol), &xt, &branch)?.into_comps()
    } else {
        Vec::new()
    };

    // h(z, w, x, zt) = wn(zt, w, Γ) - wn(z, w, x).
    let wn = big.wn();
    let mut inner = vec![
        Series::var(known_n, n1, zt).with_tol(tol),
        Series::var(known_n, n1, 1).with_tol(tol),
    ];
    inner.extend(gamma_known.iter().cloned());
    let h = compose_series(&wn, &Germ::new(inner)?)?.sub(&wn.embed(known_n, &orig));

    // zt = z + u.
    let mut sub = Vec::new();
    for k in 0..nv {
        sub.push(Series::var(known_n, n1, k).with_tol(tol));
    }
    sub.push(
        Series::var(known_n, n1, 0)
            .with_tol(tol)
            .add(&Series::var(known_n, n1, zt)),
    );
    let sub = Germ::new(sub)?;
    let h2 = compose_series(&h, &sub)?;
    let rest = h2.project(|e| e.get(zt) == 0);
    if rest.max_modulus()
        > vt.max(if K::BACKEND == Backend::Float {
            1e-9
        } else {
            0.0
        })
    {
        return Err(GermError::NotDivisible { var: zt });
    }
    let k = h2
        .project(|e| e.get(zt) > 0)
        .divide_by_var(zt)?
        .retruncate(trunc);

    let jac = k.coeff(&MultiIndex::unit(known_n, zt));
    let jinv = jac.inv().ok_or(GermError::ImplicitSolveSingular)?;
    let mut branch = Mat::zeros(1, nv);
    for v in 0..nv {
        branch.set(
            0,
            v,
            k.coeff(&MultiIndex::unit(known_n, v)).mul(&jinv).neg(),
        );
    }
    let u = solve_implicit(&Germ::new(vec![k])?.with_tol(tol), &[zt], &branch)?
        .into_comps()
        .remove(0);

    let mut comps = Vec::new();
    comps.push(Series::var(nv, trunc, 0).with_tol(tol).add(&u));
    comps.push(Series::var(nv, trunc, 1).with_tol(tol));
    let mut inner = Vec::new();
    for v in 0..nv {
        inner.push(Series::var(nv, trunc, v).with_tol(tol));
    }
    inner.push(comps[0].clone());
    let inner = Germ::new(inner)?;
    let mut gamma = Vec::new();
    for g in &gamma_known {
        let s = compose_series(&g.retruncate(trunc), &inner)?;
        gamma.push(s.clone());
        comps.push(s);
    }
    Ok((Germ::new(comps)?.with_tol(tol), gamma))
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockClass {
    /// `|mu| = 1`.
    Hyperbolic,
    /// `mu` real.
    Elliptic,
    Complex,
}

#[derive(Clone, Debug)]
pub struct SpectralBlock {
    pub class: BlockClass,
    pub mu: Complex64,
    pub multiplicity: usize,
    /// Columns of the change of basis spanned by this block.
    pub columns: Vec<usize>,
    /// The matrix `A` read from `rho` (empty for complex blocks).
    pub a: Mat<CF64>,
    /// `|A Ā - I|` (hyperbolic) or `|mu A Ā - I|` (elliptic).
    pub a_residual: f64,
}

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub blocks: Vec<SpectralBlock>,
    pub fixed_dim: usize,
    /// Columns: block bases in order, then a real basis of the fixed space.
    pub change_of_basis: Mat<CF64>,
    /// Largest deviation of the conjugated `Phi, T1, T2, rho` from the block
    /// forms.
    pub residual: f64,
    pub verified: bool,
    /// Exact `mu + 1/mu` when the classification was decided exactly.
    pub exact_trace: Option<String>,
}

impl SpectralDecomposition {
    /// Eigenvalues of `D Phi(0)` in the new coordinates.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let n = self.change_of_basis.rows();
        let mut out = vec![Complex64::new(1.0, 0.0); n];
        for b in &self.blocks {
            let m = b.multiplicity;
            let vals: Vec<Complex64> = match b.class {
                BlockClass::Complex => vec![b.mu, 1.0 / b.mu, 1.0 / b.mu.conj(), b.mu.conj()],
                _ => vec![b.mu, 1.0 / b.mu],
            };
            for (k, v) in vals.iter().enumerate() {
                for r in 0..m {
                    out[b.columns[k * m + r]] = *v;
                }
            }
        }
        out
    }

    /// The one-row diagonal family of `D Phi(0)` in the new coordinates.
    pub fn diagonal_family(&self) -> Result<DiagonalFamily<CF64>> {
        DiagonalFamily::new(vec![self.spectrum().into_iter().map(CF64).collect()])
    }

    /// Indices `(zeta, eta)` of each eigen-pair in the new coordinates, in
    /// block order; complex blocks contribute two pairs.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for b in &self.blocks {
            let m = b.multiplicity;
            let npairs = if b.class == BlockClass::Complex { 2 } else { 1 };
            for k in 0..npairs {
                for r in 0..m {
                    out.push((b.columns[2 * k * m + r], b.columns[(2 * k + 1) * m + r]));
                }
            }
        }
        out
    }
}

fn kernel(m: &DMatrix<Complex64>, tol: f64) -> Vec<nalgebra::DVector<Complex64>> {
    let (r, c) = m.shape();
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let scale = padded.iter().map(|x| x.norm()).fold(1.0, f64::max);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v requested");
    let mut out = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol * scale {
            out.push(vt.row(k).adjoint());
        }
    }
    out
}

fn col_rank(cols: &[nalgebra::DVector<Complex64>], n: usize, tol: f64) -> usize {
    if cols.is_empty() {
        return 0;
    }
    let m = DMatrix::from_columns(cols);
    let m = if m.ncols() > n { m.transpose() } else { m };
    m.svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > tol)
        .count()
}

fn classify_numeric(mu: Complex64, eps: f64) -> Result<BlockClass> {
    let hyp = (mu.norm() - 1.0).abs();
    let ell = mu.im.abs();
    if hyp <= eps && ell > 10.0 * eps {
        Ok(BlockClass::Hyperbolic)
    } else if ell <= eps && hyp > 10.0 * eps {
        Ok(BlockClass::Elliptic)
    } else if hyp > 10.0 * eps && ell > 10.0 * eps {
        Ok(BlockClass::Complex)
    } else {
        Err(GermError::ClassificationAmbiguous(format!(
            "mu = {mu}: ||mu|-1| = {hyp:e}, |Im mu| = {ell:e}"
        )))
    }
}

/// Splits `C^{2p+q}` into the eigen-blocks of `D Phi(0)` with bases
/// `{f, T2 f}` (and `{rho f, T2 rho f}` for complex quadruples) plus the
/// common fixed space of `T1, T2`, and reads off `rho` on each block.
pub fn decompose_spectrum<K: Coeff>(
    ip: &InvolutionPair<K>,
    mode: &OracleMode,
) -> Result<SpectralDecomposition> {
    let nv = ip.nv();
    let t1 = to_na(&ip.t1);
    let t2 = to_na(&ip.t2);
    let pm = to_na(&ip.rho);
    let phi = &t1 * &t2;
    let id = DMatrix::<Complex64>::identity(nv, nv);
    let ktol = 1e-9;
    let rho_of = |v: &nalgebra::DVector<Complex64>| &pm * v.map(|x| x.conj());

    let mut stacked = DMatrix::zeros(2 * nv, nv);
    stacked.view_mut((0, 0), (nv, nv)).copy_from(&(&t1 - &id));
    stacked.view_mut((nv, 0), (nv, nv)).copy_from(&(&t2 - &id));
    let e_raw = kernel(&stacked, ktol);
    let v1 = kernel(&(&t1 + &id), ktol);
    let v2 = kernel(&(&t2 + &id), ktol);
    let mut all = v1.clone();
    all.extend(v2.iter().cloned());
    all.extend(e_raw.iter().cloned());
    let found = col_rank(&all, nv, 1e-8);
    if found < nv {
        return Err(GermError::SpanDeficient {
            found,
            expected: nv,
        });
    }

    // Real basis of E.
    let mut e_basis: Vec<nalgebra::DVector<Complex64>> = Vec::new();
    for e in &e_raw {
        let re = rho_of(e);
        for cand in [e + &re, (e - &re) * Complex64::new(0.0, 1.0)] {
            if e_basis.len() == e_raw.len() {
                break;
            }
            let mut trial = e_basis.clone();
            trial.push(cand.clone());
            if col_rank(&trial, nv, 1e-8) == trial.len() {
                let nrm = cand.norm();
                e_basis.push(cand / Complex64::new(nrm, 0.0));
            }
        }
    }

    let eigs = nalgebra::linalg::Schur::new(phi.clone())
        .eigenvalues()
        .ok_or_else(|| GermError::InvalidInput("eigenvalue computation failed".into()))?;
    // Cluster.
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    for &e in eigs.iter() {
        match clusters
            .iter_mut()
            .find(|(c, _)| (c - e).norm() <= 1e-6 * (1.0 + e.norm()))
        {
            Some(c) => c.1 += 1,
            None => clusters.push((e, 1)),
        }
    }
    let eps = match mode {
        OracleMode::Numeric { epsilon } => *epsilon,
        _ => 1e-7,
    };
    let one = Complex64::new(1.0, 0.0);
    let mut reps: Vec<(Complex64, usize)> = Vec::new();
    for &(mu, m) in &clusters {
        if (mu - one).norm() <= 1e-6 {
            continue;
        }
        if (mu + one).norm() <= 1e-6 {
            return Err(GermError::ClassificationAmbiguous(
                "eigenvalue -1 of D Phi(0)".into(),
            ));
        }
        let r = mu.norm();
        let inside = r < 1.0 - 1e-6;
        let on = (r - 1.0).abs() <= 1e-6;
        if (inside && mu.im >= -1e-6) || (on && mu.im > 0.0) {
            reps.push((mu, m));
        }
    }

    let exact_class = if K::BACKEND == Backend::Exact && ip.p == 1 {
        let tr = ip.phi_lin.trace().sub(&K::from_i64((nv - 2) as i64));
        let class = if !tr.is_real() {
            BlockClass::Complex
        } else {
            match Magnitude::of(&tr).cmp(&Magnitude::of(&K::from_i64(2))) {
                std::cmp::Ordering::Less => BlockClass::Hyperbolic,
                std::cmp::Ordering::Greater => BlockClass::Elliptic,
                std::cmp::Ordering::Equal => {
                    return Err(GermError::ClassificationAmbiguous("mu = ±1".into()))
                }
            }
        };
        Some((class, tr.to_string()))
    } else {
        None
    };

    let mut blocks_raw: Vec<(BlockClass, Complex64, Vec<nalgebra::DVector<Complex64>>)> =
        Vec::new();
    for &(mu, m) in &reps {
        let class = match &exact_class {
            Some((c, _)) => *c,
            None => classify_numeric(mu, eps)?,
        };
        let mut fs = kernel(&(&phi - &id * mu), 1e-7);
        if fs.len() != m {
            return Err(GermError::InvalidInput(format!(
                "D Phi(0) is not diagonalizable at mu = {mu}"
            )));
        }
        if m == 1 {
            let f = fs[0].clone() / Complex64::new(fs[0].norm(), 0.0);
            let rf = rho_of(&f);
            let c = match class {
                BlockClass::Hyperbolic => {
                    let a = f.dotc(&rf) / f.dotc(&f);
                    a.sqrt()
                }
                BlockClass::Elliptic => {
                    let tf = &t2 * &f;
                    let a = tf.dotc(&rf) / tf.dotc(&tf);
                    (a / a.norm()).sqrt()
                }
                BlockClass::Complex => one,
            };
            fs[0] = f * c;
        }
        blocks_raw.push((class, mu, fs));
    }
    let rank = |c: &BlockClass| match c {
        BlockClass::Hyperbolic => 0,
        BlockClass::Elliptic => 1,
        BlockClass::Complex => 2,
    };
    blocks_raw.sort_by(|a, b| {
        rank(&a.0)
            .cmp(&rank(&b.0))
            .then(a.1.arg().partial_cmp(&b.1.arg()).unwrap())
            .then(a.1.norm().partial_cmp(&b.1.norm()).unwrap())
    });

    let mut cols: Vec<nalgebra::DVector<Complex64>> = Vec::new();
    let mut blocks = Vec::new();
    for (class, mu, fs) in &blocks_raw {
        let m = fs.len();
        let start = cols.len();
        let t2f: Vec<_> = fs.iter().map(|f| &t2 * f).collect();
        cols.extend(fs.iter().cloned());
        cols.extend(t2f.iter().cloned());
        if *class == BlockClass::Complex {
            let rf: Vec<_> = fs.iter().map(&rho_of).collect();
            let t2rf: Vec<_> = rf.iter().map(|g| &t2 * g).collect();
            cols.extend(rf);
            cols.extend(t2rf);
        }
        blocks.push(SpectralBlock {
            class: *class,
            mu: *mu,
            multiplicity: m,
            columns: (start..cols.len()).collect(),
            a: Mat::zeros(0, 0),
            a_residual: 0.0,
        });
    }
    let fixed_start = cols.len();
    cols.extend(e_basis.iter().cloned());
    if cols.len() != nv {
        return Err(GermError::SpanDeficient {
            found: cols.len(),
            expected: nv,
        });
    }
    let c = DMatrix::from_columns(&cols);
    let cinv = c.clone().try_inverse().ok_or(GermError::SpanDeficient {
        found: col_rank(&cols, nv, 1e-8),
        expected: nv,
    })?;
    let phi_n = &cinv * &phi * &c;
    let t1_n = &cinv * &t1 * &c;
    let t2_n = &cinv * &t2 * &c;
    let rho_n = &cinv * &pm * c.map(|x| x.conj());

    let mut e_phi = DMatrix::<Complex64>::identity(nv, nv);
    let mut e_t1 = DMatrix::<Complex64>::zeros(nv, nv);
    let mut e_t2 = DMatrix::<Complex64>::zeros(nv, nv);
    let mut e_rho = DMatrix::<Complex64>::zeros(nv, nv);
    for k in fixed_start..nv {
        e_t1[(k, k)] = one;
        e_t2[(k, k)] = one;
        e_rho[(k, k)] = one;
    }
    for b in blocks.iter_mut() {
        let m = b.multiplicity;
        let mu = b.mu;
        let col = |k: usize, r: usize| b.columns[k * m + r];
        let lams: Vec<Complex64> = if b.class == BlockClass::Complex {
            vec![mu, 1.0 / mu.conj()]
        } else {
            vec![mu]
        };
        for (pi, &lam) in lams.iter().enumerate() {
            for r in 0..m {
                let (z, e) = (col(2 * pi, r), col(2 * pi + 1, r));
                e_phi[(z, z)] = lam;
                e_phi[(e, e)] = 1.0 / lam;
                e_t1[(z, e)] = lam;
                e_t1[(e, z)] = 1.0 / lam;
                e_t2[(z, e)] = one;
                e_t2[(e, z)] = one;
            }
        }
        match b.class {
            BlockClass::Hyperbolic | BlockClass::Elliptic => {
                let mut a = DMatrix::<Complex64>::zeros(m, m);
                for r in 0..m {
                    for s in 0..m {
                        a[(r, s)] = if b.class == BlockClass::Hyperbolic {
                            rho_n[(col(0, r), col(0, s))]
                        } else {
                            rho_n[(col(1, r), col(0, s))]
                        };
                    }
                }
                for r in 0..m {
                    for s in 0..m {
                        if b.class == BlockClass::Hyperbolic {
                            e_rho[(col(0, r), col(0, s))] = a[(r, s)];
                            e_rho[(col(1, r), col(1, s))] = mu.conj() * a[(r, s)];
                        } else {
                            e_rho[(col(1, r), col(0, s))] = a[(r, s)];
                            e_rho[(col(0, r), col(1, s))] = mu * a[(r, s)];
                        }
                    }
                }
                let aab = &a * a.map(|x| x.conj());
                let target = if b.class == BlockClass::Hyperbolic {
                    aab
                } else {
                    aab * mu
                };
                b.a_residual = (target - DMatrix::<Complex64>::identity(m, m))
                    .iter()
                    .map(|x| x.norm())
                    .fold(0.0, f64::max);
                b.a = from_na(&a);
            }
            BlockClass::Complex => {
                for r in 0..m {
                    e_rho[(col(2, r), col(0, r))] = one;
                    e_rho[(col(0, r), col(2, r))] = one;
                    e_rho[(col(3, r), col(1, r))] = mu.conj();
                    e_rho[(col(1, r), col(3, r))] = 1.0 / mu;
                }
            }
        }
    }
    let dev = |a: &DMatrix<Complex64>, b: &DMatrix<Complex64>| {
        (a - b).iter().map(|x| x.norm()).fold(0.0, f64::max)
    };
    let residual = [
        dev(&phi_n, &e_phi),
        dev(&t1_n, &e_t1),
        dev(&t2_n, &e_t2),
        dev(&rho_n, &e_rho),
    ]
    .into_iter()
    .chain(blocks.iter().map(|b| b.a_residual))
    .fold(0.0, f64::max);
    let scale = 1.0 + phi.iter().map(|x| x.norm()).fold(0.0, f64::max);
    Ok(SpectralDecomposition {
        blocks,
        fixed_dim: nv - fixed_start,
        change_of_basis: from_na(&c),
        residual,
        verified: residual <= 1e-7 * scale,
        exact_trace: exact_class.map(|(_, t)| t),
    })
}

/// The pair in the coordinates of the spectral decomposition (float).
pub fn to_spectral_coordinates<K: Coeff>(
    ip: &InvolutionPair<K>,
    dec: &SpectralDecomposition,
) -> Result<InvolutionPair<CF64>> {
    let tau1 = ip
        .tau1
        .map_coeffs(|c| CF64(c.to_c64()))
        .with_tol(ip.tau1.tol().max(1e-12));
    let rho = ip.rho.map(|c| CF64(c.to_c64()));
    let base = InvolutionPair::from_taus(tau1, rho, ip.p, ip.q)?;
    base.conjugate_linear(&dec.change_of_basis)
}

trait NegMat {
    fn neg_mat(&self) -> Self;
}

impl<K: Coeff> NegMat for Mat<K> {
    fn neg_mat(&self) -> Self {
        self.scale(&K::one().neg())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::GaussQ;

    fn bishop(gamma: GaussQ, trunc: u32) -> ManifoldData<GaussQ> {
        let g = Series::from_terms(
            2,
            trunc,
            vec![
                (MultiIndex::new(vec![1, 1]), GaussQ::one()),
                (MultiIndex::new(vec![2, 0]), gamma.clone()),
                (MultiIndex::new(vec![0, 2]), gamma),
            ],
        )
        .unwrap();
        ManifoldData::new(1, vec![], g).unwrap()
    }

    #[test]
    fn bishop_quarter() {
        let m = bishop(GaussQ::from_ratio(1, 4), 4);
        let pq = prepare_quadric(&m).unwrap();
        assert!(pq.steps.is_empty());
        let ip = complexify_and_build_involutions(&pq).unwrap();
        assert_eq!(
            ip.t1,
            Mat::from_rows(vec![
                vec![GaussQ::from_i64(-1), GaussQ::from_i64(-4)],
                vec![GaussQ::zero(), GaussQ::one()]
            ])
        );
        assert_eq!(ip.phi_lin.trace(), GaussQ::from_i64(14));
        let dec = decompose_spectrum(&ip, &OracleMode::Exact).unwrap();
        assert_eq!(dec.blocks[0].class, BlockClass::Elliptic);
        assert!((dec.blocks[0].mu.re - (7.0 - 4.0 * 3f64.sqrt())).abs() < 1e-12);
        assert!(dec.verified, "{}", dec.residual);
    }

    #[test]
    fn bishop_half_violates_cond1() {
        let m = bishop(GaussQ::from_ratio(1, 2), 4);
        assert!(matches!(
            prepare_quadric(&m),
            Err(GermError::Cond1Violated { .. })
        ));
    }
}
