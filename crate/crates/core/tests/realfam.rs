use germlab::*;
use proptest::prelude::*;

fn q(a: i64, b: i64) -> GaussQ {
    GaussQ::from_ratio(a, b)
}

fn mi(e: &[u32]) -> MultiIndex {
    MultiIndex::new(e.to_vec())
}

fn rot() -> GaussQ {
    GaussQ::from_parts(3, 5, 4, 5)
}

/// `z -> B z̄` conjugated by `psi`.
fn bent(b: &Mat<GaussQ>, psi: &Germ<GaussQ>, index: usize) -> AntiInvolution<GaussQ> {
    AntiInvolution::linear(b, psi.trunc())
        .unwrap()
        .conjugate_by(psi, index)
        .unwrap()
}

fn psi1(trunc: u32, a: GaussQ, c: GaussQ) -> Germ<GaussQ> {
    Germ::new(vec![Series::from_terms(
        1,
        trunc,
        [(mi(&[1]), q(1, 1)), (mi(&[2]), a), (mi(&[3]), c)],
    )
    .unwrap()])
    .unwrap()
}

#[test]
fn rotation_group_elements() {
    let b = rot();
    let fam = RealFamily::new(vec![
        AntiInvolution::linear(&Mat::identity(1), 4).unwrap(),
        AntiInvolution::linear(&Mat::diag(std::slice::from_ref(&b)), 4).unwrap(),
    ])
    .unwrap();
    let f12 = fam.group_element(0, 1).unwrap();
    assert_eq!(f12, Germ::from_linear(&Mat::diag(&[b.conj()]), 4));
    assert!(fam
        .group_element(0, 1)
        .unwrap()
        .compose(&fam.group_element(1, 0).unwrap())
        .unwrap()
        .is_identity());
    assert!(fam.group_element(1, 1).unwrap().is_identity());

    // rho2 = B z̄ + c z̄^2 + ..., built by conjugation so it is an involution.
    let a = GaussQ::from_parts(1, 2, 1, 1);
    let rho2 = bent(
        &Mat::diag(std::slice::from_ref(&b)),
        &psi1(4, a.clone(), q(0, 1)),
        1,
    );
    let c = rho2.r().comp(0).coeff(&mi(&[2]));
    assert_eq!(c, b.mul(&a.conj()).sub(&a.mul(&b).mul(&b)));
    let fam = RealFamily::new(vec![
        AntiInvolution::linear(&Mat::identity(1), 4).unwrap(),
        rho2,
    ])
    .unwrap();
    let f12 = fam.group_element(0, 1).unwrap();
    assert_eq!(f12.linear_part(), Mat::diag(&[b.conj()]));
    assert_eq!(f12.comp(0).coeff(&mi(&[2])), c.conj());
}

#[test]
fn family_rejects_bad_input() {
    let not_inv = Germ::new(vec![
        Series::from_terms(1, 4, [(mi(&[1]), q(2, 1))]).unwrap()
    ])
    .unwrap();
    assert!(matches!(
        AntiInvolution::from_germ(not_inv, 0),
        Err(GermError::NotInvolution(0))
    ));
    let r = AntiInvolution::linear(&Mat::diag(&[rot()]), 4).unwrap();
    assert!(RealFamily::new(vec![r.clone(), r]).is_err());
}

#[test]
fn nonresonance_scans() {
    let lin = |b: GaussQ| AntiInvolution::linear(&Mat::diag(&[b]), 8).unwrap();
    let fam = RealFamily::new(vec![lin(q(1, 1)), lin(rot())]).unwrap();
    assert_eq!(
        check_nonresonance(&fam, &MonomialIdeal::zero(1), &OracleMode::Exact).unwrap(),
        None
    );
    assert_eq!(
        check_nonresonance(
            &fam,
            &MonomialIdeal::zero(1),
            &OracleMode::Lattice { relations: vec![] }
        )
        .unwrap(),
        None
    );

    let (c, s) = (0.5f64, 3f64.sqrt() / 2.0);
    let one = AntiInvolution::linear(&Mat::identity(1), 8).unwrap();
    let six = AntiInvolution::linear(&Mat::diag(&[CF64::new(-c, s)]), 8).unwrap();
    let fam = RealFamily::new(vec![one, six]).unwrap();
    let w = check_nonresonance(
        &fam,
        &MonomialIdeal::zero(1),
        &OracleMode::Numeric { epsilon: 1e-9 },
    )
    .unwrap()
    .unwrap();
    assert_eq!(w.q, mi(&[4]));
    // Direct check of the witness: conj(mu)^Q mu = 1.
    let mu = fam
        .group_element(w.i, 1 - w.i)
        .unwrap()
        .linear_part()
        .get(0, 0)
        .to_c64();
    assert!((mu.conj().powu(4) * mu - num_complex::Complex64::new(1.0, 0.0)).norm() < 1e-12);

    let two = |b: GaussQ| AntiInvolution::linear(&Mat::diag(&[b.clone(), b]), 4).unwrap();
    let fam = RealFamily::new(vec![two(q(1, 1)), two(rot())]).unwrap();
    assert_eq!(
        check_nonresonance(&fam, &MonomialIdeal::max_power(2, 2), &OracleMode::Exact).unwrap(),
        None
    );
}

#[test]
fn straighten_linear_family_is_trivial() {
    let lin = |b: GaussQ| AntiInvolution::linear(&Mat::diag(&[b]), 6).unwrap();
    let fam = RealFamily::new(vec![lin(q(1, 1)), lin(rot())]).unwrap();
    let s = straighten(&fam, &MonomialIdeal::zero(1), OracleMode::Exact).unwrap();
    assert!(s.phi.is_identity());
    assert!(s
        .involutions
        .iter()
        .all(|r| r.r().comps().iter().all(|c| c.is_zero())));
}

#[test]
fn straighten_resonant_pair_on_its_ideal() {
    let b = rot();
    let b2 = Mat::diag(&[b.clone(), b.conj()]);
    let n = 2;
    let t = 5;
    let psi = Germ::new(vec![
        Series::from_terms(
            n,
            t,
            [
                (mi(&[1, 0]), q(1, 1)),
                (mi(&[0, 2]), q(1, 2)),
                (mi(&[2, 0]), q(1, 3)),
            ],
        )
        .unwrap(),
        Series::from_terms(n, t, [(mi(&[0, 1]), q(1, 1)), (mi(&[2, 0]), GaussQ::i())]).unwrap(),
    ])
    .unwrap();
    let fam = RealFamily::new(vec![bent(&Mat::identity(2), &psi, 0), bent(&b2, &psi, 1)]).unwrap();
    let g = build_reflection_group(&fam, OracleMode::Exact).unwrap();
    let res = g.oracle().res_ideal(t).unwrap();
    assert_eq!(res.ideal.gens(), &[mi(&[1, 1])]);
    let s = straighten(&fam, &res.ideal, OracleMode::Exact).unwrap();
    assert!(s.remaining_outside.is_empty());
    for (r, want) in s.involutions.iter().zip([Mat::identity(2), b2]) {
        assert_eq!(r.b(), want);
        assert!(r
            .r()
            .comps()
            .iter()
            .all(|c| c.terms().all(|(m, _)| res.ideal.contains(m))));
    }
}

#[test]
fn intersection_reports() {
    let lin = |b: Mat<GaussQ>| AntiInvolution::linear(&b, 4).unwrap();
    let fam = RealFamily::new(vec![
        lin(Mat::identity(2)),
        lin(Mat::diag(&[rot(), rot().conj()])),
    ])
    .unwrap();
    let xy = MonomialIdeal::new(2, vec![mi(&[1, 1])]).unwrap();
    let r = intersection_report(&fam, &xy);
    assert_eq!(r.components, vec![vec![0], vec![1]]);
    assert_eq!(
        r.equations[0][0],
        vec!["z1 = 0".to_string(), "z2 = conj(z2)".to_string()]
    );
    assert_eq!(
        r.equations[1][1],
        vec!["z2 = 0".to_string(), "z1 = (3/5+4/5i)*conj(z1)".to_string()]
    );

    let r = intersection_report(&fam, &MonomialIdeal::zero(2));
    assert_eq!(r.components, vec![Vec::<usize>::new()]);
    assert_eq!(
        r.equations[0][0],
        vec!["z1 = conj(z1)".to_string(), "z2 = conj(z2)".to_string()]
    );

    let fam3 = RealFamily::new(vec![
        lin(Mat::identity(3)),
        lin(Mat::diag(&[rot(), rot(), rot().conj()])),
    ])
    .unwrap();
    let i = MonomialIdeal::new(3, vec![mi(&[1, 0, 0]), mi(&[0, 1, 1])]).unwrap();
    assert_eq!(
        intersection_report(&fam3, &i).components,
        vec![vec![0, 1], vec![0, 2]]
    );
}

fn small() -> impl Strategy<Value = GaussQ> {
    (-3i64..=3, 1i64..=3, -2i64..=2, 1i64..=2)
        .prop_map(|(a, b, c, d)| GaussQ::from_parts(a, b, c, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn straighten_round_trip(a in small(), c in small()) {
        let t = 6;
        let psi = psi1(t, a, c);
        let r1 = bent(&Mat::identity(1), &psi, 0);
        let r2 = bent(&Mat::diag(&[rot()]), &psi, 1);
        for r in [&r1, &r2] {
            prop_assert!(r.germ().compose(&r.germ().conj()).unwrap().is_identity());
            prop_assert_eq!(r.fixed_dimension(), 1);
        }
        let fam = RealFamily::new(vec![r1, r2]).unwrap();
        prop_assert!(fam.group_element(0, 1).unwrap().compose(&fam.group_element(1, 0).unwrap()).unwrap().is_identity());
        let s = straighten(&fam, &MonomialIdeal::zero(1), OracleMode::Exact).unwrap();
        for r in &s.involutions {
            prop_assert!(r.r().comps().iter().all(|x| x.is_zero()));
            prop_assert!(r.germ().compose(&r.germ().conj()).unwrap().is_identity());
        }
    }
}
