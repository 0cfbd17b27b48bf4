use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use germlab::{
    complexify_and_build_involutions, linearize_on_ideal, prepare_quadric, Coeff, CommutingFamily,
    DiagonalFamily, GaussQ, Germ, ManifoldData, Mat, MonomialIdeal, MultiIndex, OracleMode,
    ResonanceOracle, Series,
};

fn q(a: i64, b: i64) -> GaussQ {
    GaussQ::from_ratio(a, b)
}

fn mi(e: &[u32]) -> MultiIndex {
    MultiIndex::new(e.to_vec())
}

/// Fixed tangent-to-identity germ in three variables.
fn psi(trunc: u32) -> Germ<GaussQ> {
    let c = [
        (mi(&[2, 0, 0]), q(1, 2)),
        (mi(&[0, 1, 1]), GaussQ::from_parts(-1, 3, 1, 2)),
        (mi(&[1, 1, 1]), q(2, 3)),
        (mi(&[0, 0, 4]), q(-1, 4)),
    ];
    let comps = (0..3)
        .map(|k| {
            let mut s = Series::var(3, trunc, k);
            for (m, v) in c.iter().skip(k) {
                s.add_term(m.clone(), v.clone());
            }
            s
        })
        .collect();
    Germ::new(comps).unwrap()
}

fn series_kernels(c: &mut Criterion) {
    let p = psi(8);
    c.bench_function("compose n=3 N=8", |b| {
        b.iter(|| black_box(&p).compose(black_box(&p)).unwrap())
    });
    c.bench_function("invert n=3 N=8", |b| {
        b.iter(|| black_box(&p).invert().unwrap())
    });
}

fn linearize_kernel(c: &mut Criterion) {
    let trunc = 8;
    let p = psi(trunc);
    let d = Germ::from_linear(&Mat::diag(&[q(2, 1), q(3, 1), q(1, 5)]), trunc);
    let f = p
        .compose(&d.compose(&p.invert().unwrap()).unwrap())
        .unwrap();
    let fam = CommutingFamily::new(vec![f], OracleMode::Exact).unwrap();
    let zero = MonomialIdeal::zero(3);
    c.bench_function("linearize n=3 N=8", |b| {
        b.iter(|| linearize_on_ideal(black_box(&fam), &zero).unwrap())
    });
}

fn resonance_kernel(c: &mut Criterion) {
    let mu = vec![
        GaussQ::from_parts(3, 5, 4, 5),
        GaussQ::from_parts(3, 5, -4, 5),
        q(2, 1),
    ];
    let oracle =
        ResonanceOracle::new(DiagonalFamily::new(vec![mu]).unwrap(), OracleMode::Exact).unwrap();
    c.bench_function("res_ideal n=3 |Q|<=10", |b| {
        b.iter(|| oracle.res_ideal(black_box(10)).unwrap())
    });
}

fn bishop_kernel(c: &mut Criterion) {
    let trunc = 6;
    let mut g = Series::zero(2, trunc);
    for (e, v) in [
        ([1, 1], q(1, 1)),
        ([2, 0], q(1, 4)),
        ([0, 2], q(1, 4)),
        ([2, 1], GaussQ::from_parts(1, 3, 1, 2)),
        ([1, 2], GaussQ::from_parts(1, 3, -1, 2)),
    ] {
        g.add_term(mi(&e), v);
    }
    let m = ManifoldData::new(1, vec![], g).unwrap();
    c.bench_function("tau pair p=1 N=6", |b| {
        b.iter(|| {
            complexify_and_build_involutions(&prepare_quadric(black_box(&m)).unwrap()).unwrap()
        })
    });
}

criterion_group!(
    benches,
    series_kernels,
    linearize_kernel,
    resonance_kernel,
    bishop_kernel
);
criterion_main!(benches);
