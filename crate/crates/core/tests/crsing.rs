use germlab::crsing::*;
use germlab::linearize::rho_conjugate;
use germlab::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn q(a: i64, b: i64) -> GaussQ {
    GaussQ::from_ratio(a, b)
}

fn mi(e: &[u32]) -> MultiIndex {
    MultiIndex::new(e.to_vec())
}

/// Real series in `(z', w', x'')`: each term is added with its mirror
/// `z <-> w` and conjugated coefficient; self-mirrored terms keep their real part.
fn real_series<K: Coeff>(p: usize, nv: usize, trunc: u32, terms: &[(Vec<u32>, K)]) -> Series<K> {
    let mut s = Series::zero(nv, trunc);
    for (e, c) in terms {
        let mut sw = e.clone();
        for i in 0..p {
            sw.swap(i, p + i);
        }
        let t = Series::monomial(nv, trunc, MultiIndex::new(e.clone()), c.clone());
        if sw == *e {
            s = s.add(&t.add(&t.conj()).scale(&K::from_ratio(1, 2)));
        } else {
            s = s
                .add(&t)
                .add(&Series::monomial(nv, trunc, MultiIndex::new(sw), c.conj()));
        }
    }
    s
}

fn bishop(gamma: GaussQ, trunc: u32) -> ManifoldData<GaussQ> {
    let g = real_series(1, 2, trunc, &[(vec![1, 1], q(1, 1)), (vec![2, 0], gamma)]);
    ManifoldData::new(1, vec![], g).unwrap()
}

#[test]
fn quarter_bishop_checkpoints() {
    let m = bishop(q(1, 4), 4);
    let jets = extract_jets(&m);
    assert_eq!(
        (
            jets.g.d.get(0, 0).clone(),
            jets.g.e.get(0, 0).clone(),
            jets.g.f.get(0, 0).clone()
        ),
        (q(1, 1), q(1, 4), q(1, 4))
    );

    let pq = prepare_quadric(&m).unwrap();
    assert!(pq.coordinate_change.is_identity());
    assert_eq!(bishop_invariants(&pq), vec![q(1, 4)]);
    // 4 gamma^2 = 1/4: det(1/(4 gamma^2) - 1) = 3.
    assert_eq!(pq.cond1_det, Some(q(3, 1)));

    let ip = complexify_and_build_involutions(&pq).unwrap();
    assert_eq!(
        ip.t1,
        Mat::from_rows(vec![vec![q(-1, 1), q(-4, 1)], vec![q(0, 1), q(1, 1)]])
    );
    assert_eq!(ip.t1, expected_t1(&pq).unwrap());
    assert_eq!(ip.phi_lin, ip.t1.mul(&ip.t2));
    assert_eq!(ip.phi_lin.trace(), q(14, 1));

    let dec = decompose_spectrum(&ip, &OracleMode::Exact).unwrap();
    assert_eq!(dec.blocks.len(), 1);
    assert_eq!(dec.blocks[0].class, BlockClass::Elliptic);
    // lambda solves gamma l^2 + l + gamma = 0 and mu = lambda^2.
    let lambda = (-1.0 + (1.0f64 - 4.0 / 16.0).sqrt()) / (2.0 * 0.25);
    let mu = dec.blocks[0].mu.re.min(1.0 / dec.blocks[0].mu.re);
    assert!((mu - lambda * lambda).abs() < 1e-12);
    assert!((mu - (7.0 - 4.0 * 3f64.sqrt())).abs() < 1e-12);
    assert!(dec.verified);
}

#[test]
fn cond1_and_degeneracy() {
    assert!(matches!(
        prepare_quadric(&bishop(q(1, 2), 4)),
        Err(GermError::Cond1Violated { .. })
    ));
    let pure = real_series(1, 2, 4, &[(vec![2, 0], q(1, 4))]);
    assert!(matches!(
        prepare_quadric(&ManifoldData::new(1, vec![], pure).unwrap()),
        Err(GermError::DegenerateSesquilinear)
    ));
    let flat = prepare_quadric(&bishop(q(0, 1), 4)).unwrap();
    assert!(matches!(
        complexify_and_build_involutions(&flat),
        Err(GermError::ZeroBishopInvariant(0))
    ));
}

#[test]
fn gamma_one_is_hyperbolic_with_cube_roots() {
    let ip =
        complexify_and_build_involutions(&prepare_quadric(&bishop(q(1, 1), 4)).unwrap()).unwrap();
    assert_eq!(ip.phi_lin.trace(), q(-1, 1));
    let dec = decompose_spectrum(&ip, &OracleMode::Exact).unwrap();
    assert_eq!(dec.blocks[0].class, BlockClass::Hyperbolic);
    assert_eq!(dec.exact_trace.as_deref(), Some("-1"));
    let mu = dec.blocks[0].mu;
    assert!((mu.norm() - 1.0).abs() < 1e-12);
    assert!((mu.powu(3) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    let o = ResonanceOracle::new(
        dec.diagonal_family().unwrap(),
        OracleMode::Lattice {
            relations: vec![vec![3, 0], vec![1, 1]],
        },
    )
    .unwrap();
    assert!(o.is_invariant(&mi(&[3, 0])));
    assert!(o.res_ideal(4).unwrap().ideal.contains(&mi(&[0, 3])));
}

#[test]
fn two_dimensional_invariants() {
    // S = diag(1/4, 3/4), D = Id.
    let g = real_series(
        2,
        4,
        4,
        &[
            (vec![1, 0, 1, 0], q(1, 1)),
            (vec![0, 1, 0, 1], q(1, 1)),
            (vec![2, 0, 0, 0], q(1, 4)),
            (vec![0, 2, 0, 0], q(3, 4)),
        ],
    );
    let pq = prepare_quadric(&ManifoldData::new(2, vec![], g).unwrap()).unwrap();
    assert_eq!(bishop_invariants(&pq), vec![q(1, 4), q(3, 4)]);

    // A complex symmetric S: the invariants are its singular values.
    let s = [
        [Complex64::new(0.3, 0.1), Complex64::new(0.05, -0.2)],
        [Complex64::new(0.05, -0.2), Complex64::new(0.1, 0.4)],
    ];
    let g = real_series(
        2,
        4,
        4,
        &[
            (vec![1, 0, 1, 0], CF64::new(1.0, 0.0)),
            (vec![0, 1, 0, 1], CF64::new(1.0, 0.0)),
            (vec![2, 0, 0, 0], CF64(s[0][0])),
            (vec![0, 2, 0, 0], CF64(s[1][1])),
            (vec![1, 1, 0, 0], CF64(s[0][1] * 2.0)),
        ],
    );
    let pq = prepare_quadric(&ManifoldData::new(2, vec![], g).unwrap()).unwrap();
    assert!(pq.takagi);
    let mut got: Vec<f64> = bishop_invariants(&pq)
        .iter()
        .map(|c| c.to_c64().re)
        .collect();
    got.sort_by(f64::total_cmp);
    let mut want: Vec<f64> = DMatrix::from_fn(2, 2, |i, j| s[i][j])
        .singular_values()
        .iter()
        .copied()
        .collect();
    want.sort_by(f64::total_cmp);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-9, "{got:?} vs {want:?}");
    }
    let ip = complexify_and_build_involutions(&pq).unwrap();
    let dec = decompose_spectrum(&ip, &OracleMode::Numeric { epsilon: 1e-9 }).unwrap();
    assert!(dec.verified, "{}", dec.residual);
    // Eigenvalues pair up as mu, 1/mu.
    let spec = dec.spectrum();
    for m in &spec {
        assert!(spec
            .iter()
            .any(|o| (o * m - Complex64::new(1.0, 0.0)).norm() < 1e-8));
    }
}

#[test]
fn x_cross_terms_are_removed() {
    // p = 1, q = 1, G = z w + (z^2 + w^2)/4 + x (z + w), F = 0.
    let g = real_series(
        1,
        3,
        4,
        &[
            (vec![1, 1, 0], q(1, 1)),
            (vec![2, 0, 0], q(1, 4)),
            (vec![1, 0, 1], q(1, 1)),
        ],
    );
    let m = ManifoldData::new(1, vec![Series::zero(3, 4)], g).unwrap();
    let pq = prepare_quadric(&m).unwrap();
    let jets = extract_jets(&pq.prepared);
    assert!(jets.g.b.is_zero_tol(0.0) && jets.g.c.is_zero_tol(0.0) && jets.g.a.is_zero_tol(0.0));
    assert_eq!(jets.g.e.get(0, 0), &q(1, 4));
}

fn check_involution_laws<K: Coeff>(ip: &InvolutionPair<K>, tol: f64) {
    let id = Germ::<K>::identity(ip.nv(), ip.trunc());
    for t in [&ip.tau1, &ip.tau2] {
        assert!(t.compose(t).unwrap().max_diff(&id) <= tol);
    }
    assert!(rho_conjugate(&ip.tau1, &ip.rho).unwrap().max_diff(&ip.tau2) <= tol);
    assert!(
        rho_conjugate(&ip.phi, &ip.rho)
            .unwrap()
            .max_diff(&ip.phi.invert().unwrap())
            <= tol
    );
    assert!(ip.check_rho_reverses_phi().unwrap());
}

#[test]
fn cubic_perturbation_keeps_involutions() {
    let g = real_series(
        1,
        2,
        6,
        &[
            (vec![1, 1], q(1, 1)),
            (vec![2, 0], q(1, 4)),
            (vec![3, 0], q(1, 1)),
        ],
    );
    let ip = complexify_and_build_involutions(
        &prepare_quadric(&ManifoldData::new(1, vec![], g).unwrap()).unwrap(),
    )
    .unwrap();
    assert!(ip
        .tau1
        .nonlinear_part()
        .comps()
        .iter()
        .any(|s| s.terms().any(|(m, _)| m.degree() == 2)));
    check_involution_laws(&ip, 0.0);
}

fn small() -> impl Strategy<Value = GaussQ> {
    (-3i64..=3, 1i64..=3, -2i64..=2, 1i64..=2)
        .prop_map(|(a, b, c, d)| GaussQ::from_parts(a, b, c, d))
}

fn real() -> impl Strategy<Value = GaussQ> {
    (-3i64..=3, 1i64..=3).prop_map(|(a, b)| q(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn preparation_is_sound(
        gd in prop::sample::select(vec![(q(1, 4), q(1, 1)), (q(3, 5), q(1, 1)), (q(1, 3), q(2, 1)), (q(2, 1), q(1, 1)), (q(3, 2), q(2, 1))]),
        r in real(),
        ax in real(),
        bx in small(),
        fx in small(),
        cubic in prop::collection::vec(small(), 4),
    ) {
        let (gamma, d) = gd;
        let t = 4;
        let g = real_series(1, 3, t, &[
            (vec![1, 1, 0], d.clone()),
            (vec![2, 0, 0], gamma.clone()),
            (vec![0, 0, 2], ax),
            (vec![1, 0, 1], bx),
            (vec![3, 0, 0], cubic[0].clone()),
            (vec![2, 1, 0], cubic[1].clone()),
            (vec![1, 0, 2], cubic[2].clone()),
        ]);
        // F's sesquilinear and pure parts are proportional to G's.
        let f = real_series(1, 3, t, &[
            (vec![1, 1, 0], r.mul(&d)),
            (vec![2, 0, 0], r.mul(&gamma)),
            (vec![1, 0, 1], fx),
            (vec![2, 1, 0], cubic[3].clone()),
        ]);
        let m = ManifoldData::new(1, vec![f], g).unwrap();
        let pq = prepare_quadric(&m).unwrap();
        let jets = extract_jets(&pq.prepared);
        prop_assert!(jets.g.a.is_zero_tol(0.0) && jets.g.b.is_zero_tol(0.0) && jets.g.c.is_zero_tol(0.0));
        prop_assert_eq!(jets.g.d.get(0, 0), &q(1, 1));
        prop_assert_eq!(jets.g.e.get(0, 0), &gamma.div(&d).unwrap());
        for a in &jets.alpha {
            prop_assert!(a.d.is_zero_tol(0.0) && a.e.is_zero_tol(0.0) && a.f.is_zero_tol(0.0));
            prop_assert!(a.a.is_zero_tol(0.0) && a.b.is_zero_tol(0.0) && a.c.is_zero_tol(0.0));
        }
        let ip = complexify_and_build_involutions(&pq).unwrap();
        check_involution_laws(&ip, 0.0);
        prop_assert_eq!(ip.t1, expected_t1(&pq).unwrap());
    }
}
