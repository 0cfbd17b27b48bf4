use germlab::*;
use proptest::prelude::*;

fn q(a: i64, b: i64) -> GaussQ {
    GaussQ::from_ratio(a, b)
}

fn mi(e: &[u32]) -> MultiIndex {
    MultiIndex::new(e.to_vec())
}

fn exact(mu: Vec<GaussQ>) -> ResonanceOracle<GaussQ> {
    ResonanceOracle::new(DiagonalFamily::new(vec![mu]).unwrap(), OracleMode::Exact).unwrap()
}

fn cube_roots() -> ResonanceOracle<CF64> {
    let w = std::f64::consts::TAU / 3.0;
    let mu = vec![CF64::new(w.cos(), w.sin()), CF64::new(w.cos(), -w.sin())];
    ResonanceOracle::new(
        DiagonalFamily::new(vec![mu]).unwrap(),
        OracleMode::Lattice {
            relations: vec![vec![3, 0], vec![1, 1]],
        },
    )
    .unwrap()
}

fn gens(i: &MonomialIdeal) -> Vec<Vec<u32>> {
    i.gens().iter().map(|g| g.exps().to_vec()).collect()
}

#[test]
fn single_queries() {
    let o = exact(vec![q(2, 1), q(1, 2)]);
    assert!(o.is_resonant(&mi(&[2, 1]), 0).unwrap().resonant);
    let a = o.is_resonant(&mi(&[0, 2]), 0).unwrap();
    assert!(!a.resonant);
    assert_eq!(a.divisors, vec![q(-7, 4)]);

    let c = cube_roots();
    for j in 0..2 {
        assert!(!c.is_resonant(&mi(&[3, 0]), j).unwrap().resonant);
    }
    // mu1^3 = 1 = mu1 * mu2, so x1^3 * x_j / x_j is invariant: Q = (3,0) + e_j.
    assert!(c.is_resonant(&mi(&[4, 0]), 0).unwrap().resonant);
    assert!(c.is_resonant(&mi(&[3, 1]), 1).unwrap().resonant);
    assert!(c.is_invariant(&mi(&[3, 0])));
}

#[test]
fn invariants_and_centralizer() {
    let o = exact(vec![q(2, 1), q(1, 2)]);
    let inv = o.invariant_monomials(6);
    assert_eq!(inv, vec![mi(&[1, 1]), mi(&[2, 2]), mi(&[3, 3])]);
    let cent = o.centralizer_monomials(6).unwrap();
    let mut want = Vec::new();
    for k in 1..=2u32 {
        want.push((mi(&[k + 1, k]), 0));
        want.push((mi(&[k, k + 1]), 1));
    }
    let mut got = cent.clone();
    got.sort();
    want.sort();
    assert_eq!(got, want);

    let o = exact(vec![q(2, 1), q(3, 1)]);
    assert!(o.invariant_monomials(6).is_empty());
    assert!(o.centralizer_monomials(6).unwrap().is_empty());
}

#[test]
fn resonant_ideals() {
    let o = exact(vec![q(2, 1), q(1, 2)]);
    assert_eq!(gens(&o.res_ideal(6).unwrap().ideal), vec![vec![1, 1]]);

    let r = cube_roots().res_ideal(6).unwrap();
    assert_eq!(gens(&r.ideal), vec![vec![1, 1], vec![0, 3], vec![3, 0]]);
    assert!(r.complete);

    let mu = GaussQ::from_parts(3, 5, 4, 5);
    let o = ResonanceOracle::new(
        DiagonalFamily::new(vec![vec![mu.clone(), mu.conj()]]).unwrap(),
        OracleMode::Lattice {
            relations: vec![vec![1, 1]],
        },
    )
    .unwrap();
    assert_eq!(gens(&o.res_ideal(8).unwrap().ideal), vec![vec![1, 1]]);
}

#[test]
fn omega_examples() {
    let o = exact(vec![q(2, 1), q(1, 2)]);
    let om = o.omega_sequence(None, 4, 16).unwrap();
    for (k, e) in om.entries.iter().enumerate() {
        assert_eq!(e.k, k as u32 + 1);
        assert_eq!(e.omega.render(), "1/4");
        assert_eq!((e.witness.q.exps().to_vec(), e.witness.j), (vec![0, 2], 1));
    }
    assert!((om.partial_sums[3] - 4f64.ln() * (1.0 - 1.0 / 16.0)).abs() < 1e-12);

    let om = exact(vec![q(2, 1), q(3, 1)])
        .omega_sequence(None, 1, 16)
        .unwrap();
    assert_eq!(om.entries[0].omega.render(), "1");
    assert_eq!(
        (
            om.entries[0].witness.q.exps().to_vec(),
            om.entries[0].witness.j
        ),
        (vec![2, 0], 1)
    );

    let full = MonomialIdeal::max_power(2, 2);
    assert_eq!(
        exact(vec![q(2, 1), q(3, 1)])
            .omega_sequence(Some(&full), 1, 16)
            .unwrap_err(),
        GermError::VacuousInf
    );
    assert!(matches!(
        o.omega_sequence(None, 5, 16),
        Err(GermError::BudgetExceeded {
            largest_completed: 4
        })
    ));
}

#[test]
fn embedded_ideals() {
    let i = MonomialIdeal::new(3, vec![mi(&[1, 1, 0])]).unwrap();
    assert_eq!(i.properly_embedded(), Some(vec![2]));
    let i = MonomialIdeal::new(2, vec![mi(&[1, 0]), mi(&[0, 1])]).unwrap();
    assert_eq!(i.properly_embedded(), None);
    let i = MonomialIdeal::new(4, vec![mi(&[1, 1, 0, 0]), mi(&[3, 0, 0, 0])]).unwrap();
    assert_eq!(i.properly_embedded(), Some(vec![2, 3]));
}

#[test]
fn centralizer_condition_examples() {
    let o = exact(vec![q(2, 1), q(1, 2)]);
    let xy = MonomialIdeal::new(2, vec![mi(&[1, 1])]).unwrap();
    assert_eq!(o.centralizer_condition(&xy, 8).unwrap(), None);
    let o = exact(vec![q(2, 1), q(4, 1)]);
    assert_eq!(
        o.centralizer_condition(&MonomialIdeal::zero(2), 8).unwrap(),
        Some((mi(&[2, 0]), 1))
    );
    let o = exact(vec![q(2, 1), q(3, 1)]);
    assert_eq!(
        o.centralizer_condition(&MonomialIdeal::zero(2), 8).unwrap(),
        None
    );
}

/// Exponent pairs over the primes 2 and 3.
fn spectrum() -> impl Strategy<Value = Vec<(i32, i32)>> {
    prop::collection::vec((-2i32..=2, -1i32..=1), 2)
        .prop_filter("nonzero", |v| v.iter().all(|&(a, b)| a != 0 || b != 0))
}

fn value((a, b): (i32, i32)) -> GaussQ {
    let p = |base: i64, e: i32| {
        if e >= 0 {
            q(base.pow(e as u32), 1)
        } else {
            q(1, base.pow((-e) as u32))
        }
    };
    p(2, a).mul(&p(3, b))
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// The full multiplicative relation lattice of two numbers `2^a 3^b`.
fn full_lattice(v: &[(i32, i32)]) -> Vec<Vec<i64>> {
    let (a1, b1, a2, b2) = (v[0].0 as i64, v[0].1 as i64, v[1].0 as i64, v[1].1 as i64);
    if a1 * b2 - a2 * b1 != 0 {
        return Vec::new();
    }
    let (x, y) = if a1 != 0 || a2 != 0 {
        (a2, -a1)
    } else {
        (b2, -b1)
    };
    let g = gcd(x, y);
    vec![vec![x / g, y / g]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_and_full_lattice_agree(v in spectrum()) {
        let mu: Vec<GaussQ> = v.iter().map(|&e| value(e)).collect();
        let fam = DiagonalFamily::new(vec![mu]).unwrap();
        let ex = ResonanceOracle::new(fam.clone(), OracleMode::Exact).unwrap();
        let la = ResonanceOracle::new(fam, OracleMode::Lattice { relations: full_lattice(&v) }).unwrap();
        for d in 2..=5 {
            for qq in MultiIndex::of_degree(2, d) {
                for j in 0..2 {
                    prop_assert_eq!(ex.is_resonant(&qq, j).unwrap().resonant, la.is_resonant(&qq, j).unwrap().resonant);
                }
            }
        }
    }

    #[test]
    fn omega_is_monotone_and_witnessed(v in spectrum()) {
        let mu: Vec<GaussQ> = v.iter().map(|&e| value(e)).collect();
        let o = ResonanceOracle::new(DiagonalFamily::new(vec![mu]).unwrap(), OracleMode::Exact).unwrap();
        let om = o.omega_sequence(None, 3, 8).unwrap();
        for w in om.entries.windows(2) {
            prop_assert!(w[1].omega.cmp(&w[0].omega) != std::cmp::Ordering::Greater);
        }
        for e in &om.entries {
            let d = e.witness.q.degree();
            prop_assert!(d >= 2 && d <= 1 << e.k);
            let a = o.is_resonant(&e.witness.q, e.witness.j).unwrap();
            prop_assert!(!a.resonant);
            prop_assert_eq!(a.margin.norm_sqr.clone(), e.omega.norm_sqr.clone());
        }
    }

    #[test]
    fn resonant_ideal_generators_are_invariant(v in spectrum()) {
        let mu: Vec<GaussQ> = v.iter().map(|&e| value(e)).collect();
        let fam = DiagonalFamily::new(vec![mu]).unwrap();
        let o = ResonanceOracle::new(fam.clone(), OracleMode::Exact).unwrap();
        let r = o.res_ideal(8).unwrap();
        for g in r.ideal.gens() {
            prop_assert_eq!(fam.monomial(0, g), GaussQ::one());
        }
    }

    #[test]
    fn ideal_generators_are_minimal(raw in prop::collection::vec(prop::collection::vec(0u32..4, 3), 1..6)) {
        let gs: Vec<MultiIndex> = raw.into_iter().map(MultiIndex::new).filter(|m| m.degree() > 0).collect();
        let i = MonomialIdeal::new(3, gs.clone()).unwrap();
        for a in i.gens() {
            for b in i.gens() {
                prop_assert!(a == b || !a.divides(b));
            }
        }
        for g in &gs {
            prop_assert!(i.contains(g));
        }
    }
}
