use std::collections::BTreeMap;

use germlab::*;
use proptest::prelude::*;

fn q(a: i64, b: i64) -> GaussQ {
    GaussQ::from_ratio(a, b)
}

fn mi(e: &[u32]) -> MultiIndex {
    MultiIndex::new(e.to_vec())
}

fn germ(n: usize, trunc: u32, comps: &[&[(&[u32], GaussQ)]]) -> Germ<GaussQ> {
    Germ::new(
        comps
            .iter()
            .map(|ts| {
                Series::from_terms(n, trunc, ts.iter().map(|(e, c)| (mi(e), c.clone()))).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

fn diag(mu: &[GaussQ], trunc: u32) -> Germ<GaussQ> {
    let rows = (0..mu.len())
        .map(|i| {
            (0..mu.len())
                .map(|j| {
                    if i == j {
                        mu[i].clone()
                    } else {
                        GaussQ::zero()
                    }
                })
                .collect()
        })
        .collect();
    Germ::from_linear(&Mat::from_rows(rows), trunc)
}

fn round_trip_map(trunc: u32) -> Germ<GaussQ> {
    germ(
        2,
        trunc,
        &[
            &[(&[1, 0], q(2, 1)), (&[0, 2], q(-7, 4))],
            &[(&[0, 1], q(1, 2))],
        ],
    )
}

fn xy() -> MonomialIdeal {
    MonomialIdeal::new(2, vec![mi(&[1, 1])]).unwrap()
}

#[test]
fn commutativity_violation() {
    let f = germ(
        2,
        4,
        &[
            &[(&[1, 0], q(2, 1)), (&[0, 2], q(1, 1))],
            &[(&[0, 1], q(1, 2))],
        ],
    );
    let g = diag(&[q(2, 1), q(1, 2)], 4);
    let v = check_commutativity(&[f.clone(), g.clone()])
        .unwrap()
        .expect("violation");
    assert_eq!((v.i, v.j, v.component, v.q.degree()), (0, 1, 0, 2));
    assert!(matches!(
        CommutingFamily::new(vec![f, g], OracleMode::Exact),
        Err(GermError::NotAbelian { .. })
    ));

    // Two linear maps conjugated by one shared germ still commute.
    let psi = germ(
        2,
        4,
        &[
            &[(&[1, 0], q(1, 1)), (&[1, 1], q(3, 1))],
            &[(&[0, 1], q(1, 1)), (&[2, 0], q(-1, 2))],
        ],
    );
    let inv = psi.invert().unwrap();
    let a = psi
        .compose(&diag(&[q(2, 1), q(3, 1)], 4).compose(&inv).unwrap())
        .unwrap();
    let b = psi
        .compose(&diag(&[q(5, 1), q(1, 7)], 4).compose(&inv).unwrap())
        .unwrap();
    assert_eq!(check_commutativity(&[a, b]).unwrap(), None);
}

#[test]
fn linear_family_gives_identity() {
    let fam = CommutingFamily::new(
        vec![diag(&[q(2, 1), q(1, 2)], 5), diag(&[q(3, 1), q(1, 3)], 5)],
        OracleMode::Exact,
    )
    .unwrap();
    for ideal in [MonomialIdeal::zero(2), xy()] {
        let res = linearize_on_ideal(&fam, &ideal).unwrap();
        assert!(res.phi.is_identity());
        assert!(res
            .residuals
            .iter()
            .all(|g| g.comps().iter().all(|s| s.is_zero())));
        assert!(verify_conjugacy(&fam, &res, &ideal).unwrap().passed);
    }
}

#[test]
fn planted_conjugacy_is_recovered() {
    let fam = CommutingFamily::new(vec![round_trip_map(4)], OracleMode::Exact).unwrap();
    let res = linearize_on_ideal(&fam, &MonomialIdeal::zero(2)).unwrap();
    assert_eq!(
        res.phi,
        germ(
            2,
            4,
            &[
                &[(&[1, 0], q(1, 1)), (&[0, 2], q(1, 1))],
                &[(&[0, 1], q(1, 1))]
            ]
        )
    );
    // F ∘ Phi = Phi ∘ D, checked by plain composition.
    let d = diag(&[q(2, 1), q(1, 2)], 4);
    assert_eq!(
        round_trip_map(4).compose(&res.phi).unwrap(),
        res.phi.compose(&d).unwrap()
    );
}

#[test]
fn planted_obstruction_and_ideal_rescue() {
    let f = germ(
        2,
        4,
        &[
            &[(&[1, 0], q(2, 1)), (&[2, 1], q(1, 1))],
            &[(&[0, 1], q(1, 2))],
        ],
    );
    let fam = CommutingFamily::new(vec![f], OracleMode::Exact).unwrap();
    match linearize_on_ideal(&fam, &MonomialIdeal::zero(2)).unwrap_err() {
        GermError::FormalObstruction { q, j, value } => {
            assert_eq!((q, j, value.as_str()), (vec![2, 1], 0, "1"))
        }
        e => panic!("{e:?}"),
    }
    let res = linearize_on_ideal(&fam, &xy()).unwrap();
    assert_eq!(res.residuals[0], germ(2, 4, &[&[(&[2, 1], q(1, 1))], &[]]));
    assert!(verify_conjugacy(&fam, &res, &xy()).unwrap().passed);
}

#[test]
fn corrupted_phi_fails_verification() {
    let fam = CommutingFamily::new(vec![round_trip_map(4)], OracleMode::Exact).unwrap();
    let mut res = linearize_on_ideal(&fam, &MonomialIdeal::zero(2)).unwrap();
    let mut comps = res.phi.clone().into_comps();
    comps[0].set(mi(&[0, 2]), q(2, 1));
    res.phi = Germ::new(comps).unwrap();
    let rep = verify_conjugacy(&fam, &res, &MonomialIdeal::zero(2)).unwrap();
    assert!(!rep.passed);
    let lowest = rep.failures.iter().min_by_key(|f| f.q.degree()).unwrap();
    assert_eq!((lowest.i, lowest.j, lowest.q.clone()), (0, 0, mi(&[0, 2])));
    assert!(rep.failures.iter().all(|f| f.q.degree() >= 2));

    let id = CommutingFamily::new(vec![Germ::<GaussQ>::identity(2, 4)], OracleMode::Exact).unwrap();
    let r = linearize_on_ideal(&id, &MonomialIdeal::zero(2)).unwrap();
    assert!(
        verify_conjugacy(&id, &r, &MonomialIdeal::zero(2))
            .unwrap()
            .passed
    );
}

#[test]
fn rho_equivariance() {
    let fam = CommutingFamily::new(vec![round_trip_map(5)], OracleMode::Exact).unwrap();
    let res = linearize_on_ideal(&fam, &MonomialIdeal::zero(2)).unwrap();
    let rep = check_rho_equivariance(
        &fam,
        &res,
        &MonomialIdeal::zero(2),
        &Mat::identity(2),
        Some(&[vec![1]]),
    )
    .unwrap();
    assert!(rep.commutes && rep.words_checked);

    // rho(z) = (z̄2, z̄1) and F = (2i x1 + x2^2, -2i x2 + x1^2) satisfy rho F rho = F.
    let two_i = GaussQ::from_parts(0, 1, 2, 1);
    let f = germ(
        2,
        5,
        &[
            &[(&[1, 0], two_i.clone()), (&[0, 2], q(1, 1))],
            &[(&[0, 1], two_i.conj()), (&[2, 0], q(1, 1))],
        ],
    );
    let fam = CommutingFamily::new(vec![f], OracleMode::Exact).unwrap();
    let res = linearize_on_ideal(&fam, &MonomialIdeal::zero(2)).unwrap();
    let swap = Mat::from_rows(vec![vec![q(0, 1), q(1, 1)], vec![q(1, 1), q(0, 1)]]);
    let rep = check_rho_equivariance(&fam, &res, &MonomialIdeal::zero(2), &swap, Some(&[vec![1]]))
        .unwrap();
    assert!(rep.commutes, "{:?}", rep.first_difference);

    let bad = Mat::from_rows(vec![vec![q(2, 1), q(0, 1)], vec![q(0, 1), q(1, 1)]]);
    assert!(matches!(
        check_rho_equivariance(&fam, &res, &MonomialIdeal::zero(2), &bad, None),
        Err(GermError::HypothesisViolated(_))
    ));
}

#[test]
fn majorant_checks() {
    let fam = CommutingFamily::new(vec![round_trip_map(8)], OracleMode::Exact).unwrap();
    let res = linearize_on_ideal(&fam, &MonomialIdeal::zero(2)).unwrap();
    let m = majorant_diagnostics(&fam, &MonomialIdeal::zero(2), &res, 8).unwrap();
    assert!(m.violations.is_empty(), "{:?}", m.violations);
    for (qq, v) in &m.phi_tilde {
        assert!(*v <= &m.sigma[qq] * &m.eta[qq]);
    }
    for ((k, qq), c) in &m.phi_counts {
        if (1u32 << k) >= qq.degree() {
            assert_eq!(*c, 0);
        }
    }

    let lin = CommutingFamily::new(vec![diag(&[q(2, 1), q(1, 2)], 8)], OracleMode::Exact).unwrap();
    let res = linearize_on_ideal(&lin, &MonomialIdeal::zero(2)).unwrap();
    let m = majorant_diagnostics(&lin, &MonomialIdeal::zero(2), &res, 8).unwrap();
    assert!(m.violations.is_empty());
    assert!(m.phi_tilde.values().all(|v| *v == num_rational_zero()));
    assert!(matches!(
        majorant_diagnostics(&lin, &MonomialIdeal::zero(2), &res, 9),
        Err(GermError::DiagnosticsBudgetExceeded { .. })
    ));
}

fn num_rational_zero() -> num_rational::BigRational {
    num_rational::BigRational::from_integer(0.into())
}

/// Small Gaussian rationals, zero allowed.
fn coeff() -> impl Strategy<Value = GaussQ> {
    (-3i64..=3, 1i64..=3, -2i64..=2, 1i64..=2)
        .prop_map(|(a, b, c, d)| GaussQ::from_parts(a, b, c, d))
}

/// Germ tangent to the identity with random terms of degree `2..=hi`.
fn tangent(n: usize, trunc: u32, hi: u32) -> impl Strategy<Value = Germ<GaussQ>> {
    let idx = MultiIndex::up_to_degree(n, 2, hi);
    prop::collection::vec(prop::collection::vec((0..idx.len(), coeff()), 0..4), n).prop_map(
        move |cs| {
            let comps = cs
                .into_iter()
                .enumerate()
                .map(|(k, ts)| {
                    let mut s = Series::from_terms(
                        n,
                        trunc,
                        ts.into_iter().map(|(t, c)| (idx[t].clone(), c)),
                    )
                    .unwrap();
                    s.set(MultiIndex::unit(n, k), GaussQ::one());
                    s
                })
                .collect();
            Germ::new(comps).unwrap()
        },
    )
}

fn nonlinear(n: usize, trunc: u32) -> impl Strategy<Value = Vec<BTreeMap<MultiIndex, GaussQ>>> {
    let idx = MultiIndex::up_to_degree(n, 2, trunc);
    prop::collection::vec(prop::collection::vec((0..idx.len(), coeff()), 0..6), n).prop_map(
        move |cs| {
            cs.into_iter()
                .map(|ts| ts.into_iter().map(|(t, c)| (idx[t].clone(), c)).collect())
                .collect()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_is_exact(psi in tangent(2, 6, 3)) {
        let d = diag(&[q(2, 1), q(1, 3)], 6);
        let f = psi.compose(&d.compose(&psi.invert().unwrap()).unwrap()).unwrap();
        let fam = CommutingFamily::new(vec![f.clone()], OracleMode::Exact).unwrap();
        let res = linearize_on_ideal(&fam, &MonomialIdeal::zero(2)).unwrap();
        prop_assert_eq!(&res.phi, &psi);
        prop_assert_eq!(res.phi.invert().unwrap().compose(&f.compose(&res.phi).unwrap()).unwrap(), d);
        prop_assert!(verify_conjugacy(&fam, &res, &MonomialIdeal::zero(2)).unwrap().passed);
    }

    #[test]
    fn every_pair_gets_one_rule(terms in nonlinear(2, 5)) {
        let base = diag(&[q(2, 1), q(1, 2)], 5);
        let comps = base.comps().iter().zip(&terms).map(|(s, ts)| {
            let mut s = s.clone();
            for (k, c) in ts {
                s.set(k.clone(), c.clone());
            }
            s
        }).collect();
        let fam = CommutingFamily::new(vec![Germ::new(comps).unwrap()], OracleMode::Exact).unwrap();
        let res = linearize_on_ideal(&fam, &xy()).unwrap();
        let mut seen: BTreeMap<(MultiIndex, usize), usize> = BTreeMap::new();
        for ev in &res.trace {
            *seen.entry((ev.q.clone(), ev.j)).or_default() += 1;
            prop_assert_eq!(ev.rule == germlab::linearize::Rule::InIdeal, xy().contains(&ev.q));
        }
        let want: Vec<(MultiIndex, usize)> = MultiIndex::up_to_degree(2, 2, 5).into_iter().flat_map(|m| (0..2).map(move |j| (m.clone(), j))).collect();
        prop_assert_eq!(seen.len(), want.len());
        prop_assert!(want.iter().all(|k| seen.get(k) == Some(&1)));
        for g in &res.residuals {
            for s in g.comps() {
                prop_assert!(s.terms().all(|(m, _)| xy().contains(m)));
            }
        }
        prop_assert!(verify_conjugacy(&fam, &res, &xy()).unwrap().passed);
        let m = majorant_diagnostics(&fam, &xy(), &res, 5).unwrap();
        prop_assert!(m.violations.is_empty(), "{:?}", m.violations);
    }
}
