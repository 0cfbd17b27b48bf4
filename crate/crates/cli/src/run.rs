//! Pipeline dispatch, witness re-verification and report assembly.

use crate::manifest::{IdealSpec, Input, Manifest, PairSource, Payload, Task};
use germlab::coeff::render_rational;
use germlab::json::*;
use germlab::linearize::{verify_tol, MAX_DIAGNOSTICS_DEGREE};
use germlab::realfam::RealResonance;
use germlab::resonance::Magnitude;
use germlab::taulin::{TauLinearizability, TauWitness};
use germlab::*;
use serde_json::{json, Value};

/// Result of running one manifest, before serialization.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub status: String,
    pub exit_code: i32,
    pub results: Value,
    pub error: Option<Value>,
    /// `None` unless a witness was reported and `--verify-witness` was given.
    pub witness_verified: Option<bool>,
    /// Lines of the text summary.
    pub summary: Vec<String>,
}

impl Outcome {
    fn ok(status: &str, results: Value, summary: Vec<String>) -> Self {
        Outcome {
            status: status.into(),
            exit_code: 0,
            results,
            error: None,
            witness_verified: None,
            summary,
        }
    }

    fn negative(status: &str, results: Value, summary: Vec<String>) -> Self {
        Outcome {
            exit_code: 3,
            ..Outcome::ok(status, results, summary)
        }
    }

    fn failed(e: &GermError) -> Self {
        let (exit_code, status) = classify(e);
        Outcome {
            status: status.into(),
            exit_code,
            results: Value::Null,
            error: Some(json!({ "kind": error_kind(e), "message": e.to_string() })),
            witness_verified: None,
            summary: vec![format!("error: {e}")],
        }
    }

    fn budget(message: String) -> Self {
        Outcome {
            status: "budget-exceeded".into(),
            exit_code: 4,
            results: Value::Null,
            error: Some(json!({ "kind": "Budget", "message": message.clone() })),
            witness_verified: None,
            summary: vec![format!("error: {message}")],
        }
    }
}

/// Exit code and status for a library error.
pub fn classify(e: &GermError) -> (i32, &'static str) {
    use GermError::*;
    match e {
        BudgetExceeded { .. } | DiagnosticsBudgetExceeded { .. } => (4, "budget-exceeded"),
        FormalObstruction { .. } => (3, "obstructed"),
        NotAbelian { .. }
        | HypothesisViolated(_)
        | TangentPlanes { .. }
        | AntiLinearizationFailed { .. }
        | DegenerateSesquilinear
        | Cond1Violated { .. }
        | Cond2Violated { .. }
        | ZeroBishopInvariant(_)
        | SpanDeficient { .. }
        | CompatibilityResidual { .. }
        | IncompatibleIdeal(_) => (3, "negative"),
        _ => (2, "error"),
    }
}

fn error_kind(e: &GermError) -> String {
    let dbg = format!("{e:?}");
    dbg.split(['{', '(', ' ']).next().unwrap_or("").to_string()
}

/// Runs the manifest; `verify` re-checks every reported witness.
pub fn run(m: &Manifest, verify: bool) -> Outcome {
    if m.truncation > m.budgets.degree {
        return Outcome::budget(format!(
            "truncation {} exceeds the degree budget {}",
            m.truncation, m.budgets.degree
        ));
    }
    let res = match &m.input {
        Input::Exact(p) => run_payload(m, p, verify),
        Input::Float(p) => run_payload(m, p, verify),
    };
    res.unwrap_or_else(|e| Outcome::failed(&e))
}

fn run_payload<K: Coeff>(m: &Manifest, p: &Payload<K>, verify: bool) -> Result<Outcome> {
    match p {
        Payload::Resonance {
            family,
            mode,
            bound,
            ideal,
        } => {
            if *bound > m.budgets.degree {
                return Ok(Outcome::budget(format!(
                    "bound {bound} exceeds the degree budget {}",
                    m.budgets.degree
                )));
            }
            resonance(family, mode, *bound, ideal.as_ref())
        }
        Payload::Diagnose {
            family,
            mode,
            ideal,
            maps,
        } => diagnose(m, family, mode, ideal.as_ref(), maps.as_deref()),
        Payload::Linearize { maps, mode, ideal } => linearize(maps, mode, ideal, verify),
        Payload::Straighten {
            family,
            mode,
            ideal,
        } => straighten_task(family, mode, ideal, verify),
        Payload::Prepare { manifold } => prepare(manifold),
        Payload::Involutions { manifold, mode } => involutions(manifold, mode),
        Payload::Tau {
            source,
            mode,
            ideal,
            degree_bound,
        } => {
            if *degree_bound > m.budgets.degree {
                return Ok(Outcome::budget(format!(
                    "degree bound {degree_bound} exceeds the degree budget {}",
                    m.budgets.degree
                )));
            }
            match source {
                PairSource::Pair(ip) => tau_task(m, ip, mode, ideal, *degree_bound, verify),
                PairSource::Manifold(man) => {
                    let pq = prepare_quadric(man)?;
                    let ip = complexify_and_build_involutions(&pq)?;
                    let dec = decompose_spectrum(&ip, mode)?;
                    let sp = to_spectral_coordinates(&ip, &dec)?;
                    // Spectral coordinates are floating point.
                    let fmode = match mode {
                        OracleMode::Exact => OracleMode::Numeric { epsilon: 1e-8 },
                        other => other.clone(),
                    };
                    let mut out = tau_task(m, &sp, &fmode, ideal, *degree_bound, verify)?;
                    if let Value::Object(map) = &mut out.results {
                        map.insert("spectral".into(), spectral_json(&dec));
                        map.insert(
                            "bishop_invariants".into(),
                            Value::Array(
                                bishop_invariants(&pq).iter().map(coeff_to_json).collect(),
                            ),
                        );
                    }
                    Ok(out)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// JSON pieces

fn monomial(q: &MultiIndex, names: Option<&[String]>) -> String {
    q.monomial(names)
}

fn var_name(j: usize, names: Option<&[String]>) -> String {
    names
        .map(|n| n[j].clone())
        .unwrap_or_else(|| format!("x{}", j + 1))
}

fn magnitude_json(m: &Magnitude) -> Value {
    json!({ "value": m.render(), "exact": m.exact.is_some(), "approx": m.approx })
}

fn omega_json(om: &OmegaSequence, names: Option<&[String]>) -> Value {
    let entries: Vec<Value> = om
        .entries
        .iter()
        .map(|e| {
            json!({
                "k": e.k,
                "omega": magnitude_json(&e.omega),
                "witness": { "Q": e.witness.q.exps(), "j": e.witness.j + 1, "i": e.witness.i + 1, "monomial": monomial(&e.witness.q, names) },
            })
        })
        .collect();
    json!({ "entries": entries, "partial_sums": om.partial_sums, "verdict": om.verdict })
}

fn omega_lines(om: &OmegaSequence, names: Option<&[String]>) -> Vec<String> {
    let mut out: Vec<String> = om
        .entries
        .iter()
        .zip(&om.partial_sums)
        .map(|(e, s)| {
            format!(
                "omega_{} = {}  (Q = {}, j = {}, i = {})  partial sum {:.6}",
                e.k,
                e.omega.render(),
                monomial(&e.witness.q, names),
                e.witness.j + 1,
                e.witness.i + 1,
                s
            )
        })
        .collect();
    out.push(format!("trend: {}", om.verdict));
    out
}

fn manifold_json<K: Coeff>(m: &ManifoldData<K>) -> Value {
    json!({ "p": m.p(), "n": m.n(), "F": m.f().iter().map(series_to_json).collect::<Vec<_>>(), "G": series_to_json(m.g()) })
}

fn spectral_json(dec: &SpectralDecomposition) -> Value {
    let blocks: Vec<Value> = dec
        .blocks
        .iter()
        .map(|b| {
            json!({
                "class": b.class,
                "mu": { "re": b.mu.re, "im": b.mu.im },
                "multiplicity": b.multiplicity,
                "columns": b.columns.iter().map(|c| c + 1).collect::<Vec<_>>(),
                "A": matrix_to_json(&b.a),
                "A_residual": b.a_residual,
            })
        })
        .collect();
    json!({
        "blocks": blocks,
        "fixed_dim": dec.fixed_dim,
        "change_of_basis": matrix_to_json(&dec.change_of_basis),
        "residual": dec.residual,
        "verified": dec.verified,
        "exact_trace": dec.exact_trace,
    })
}

fn rat_map_json<V>(
    m: &std::collections::BTreeMap<MultiIndex, V>,
    render: impl Fn(&V) -> String,
) -> Value {
    Value::Array(
        m.iter()
            .map(|(q, v)| json!({ "Q": q.exps(), "value": render(v) }))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// resonance / diagnose

fn resonance<K: Coeff>(
    family: &DiagonalFamily<K>,
    mode: &OracleMode,
    bound: u32,
    ideal: Option<&MonomialIdeal>,
) -> Result<Outcome> {
    let oracle = ResonanceOracle::new(family.clone(), mode.clone())?;
    let res = oracle.res_ideal(bound)?;
    let cent = oracle.centralizer_monomials(bound)?;
    let mut results = json!({
        "spectrum": { "l": family.l(), "n": family.n(), "mu": matrix_to_json(&Mat::from_rows(family.rows().to_vec())) },
        "oracle": oracle_to_json(mode),
        "bound": bound,
        "invariants": res.invariants.iter().map(|q| q.exps().to_vec()).collect::<Vec<_>>(),
        "res_ideal": {
            "ideal": ideal_to_json(&res.ideal),
            "monoid_generators": res.monoid_generators.iter().map(|q| q.exps().to_vec()).collect::<Vec<_>>(),
            "complete": res.complete,
            "stable": res.stable,
        },
        "centralizer": cent.iter().map(|(q, j)| json!({ "Q": q.exps(), "j": j + 1, "monomial": monomial(q, None) })).collect::<Vec<_>>(),
    });
    let gens: Vec<String> = res.ideal.gens().iter().map(|q| monomial(q, None)).collect();
    let mut summary = vec![
        format!(
            "invariant monomials up to degree {bound}: {}",
            res.invariants.len()
        ),
        format!("resonant ideal: ({})", gens.join(", ")),
        format!("centralizer monomials: {}", cent.len()),
    ];
    let mut negative = false;
    if let Some(ideal) = ideal {
        let v = oracle.centralizer_condition(ideal, bound)?;
        results["centralizer_condition"] = json!({
            "ideal": ideal_to_json(ideal),
            "holds": v.is_none(),
            "violation": v.as_ref().map(|(q, j)| json!({ "Q": q.exps(), "j": j + 1, "monomial": monomial(q, None) })),
        });
        match v {
            None => summary.push("centralizer condition holds".into()),
            Some((q, j)) => {
                negative = true;
                summary.push(format!(
                    "centralizer condition fails: {} e_{} lies outside the ideal",
                    monomial(&q, None),
                    j + 1
                ));
            }
        }
    }
    Ok(if negative {
        Outcome::negative("violation", results, summary)
    } else {
        Outcome::ok("ok", results, summary)
    })
}

fn diagnose<K: Coeff>(
    m: &Manifest,
    family: &DiagonalFamily<K>,
    mode: &OracleMode,
    ideal: Option<&MonomialIdeal>,
    maps: Option<&[Germ<K>]>,
) -> Result<Outcome> {
    let oracle = ResonanceOracle::new(family.clone(), mode.clone())?;
    let om = match oracle.omega_sequence(ideal, m.budgets.k_max, m.budgets.degree) {
        Ok(om) => om,
        Err(e @ GermError::BudgetExceeded { .. }) => return Ok(Outcome::failed(&e)),
        Err(e) => return Err(e),
    };
    let mut results = json!({ "omega": omega_json(&om, None), "k_max": m.budgets.k_max });
    let mut summary = omega_lines(&om, None);
    let mut negative = false;
    if let Some(maps) = maps {
        let zero = MonomialIdeal::zero(family.n());
        let ideal = ideal.unwrap_or(&zero);
        let fam = CommutingFamily::with_oracle(maps.to_vec(), oracle)?;
        let res = linearize_on_ideal(&fam, ideal)?;
        let cap = m.truncation.min(m.budgets.diagnostics_degree);
        if cap > MAX_DIAGNOSTICS_DEGREE {
            return Ok(Outcome::failed(&GermError::DiagnosticsBudgetExceeded {
                requested: cap,
                cap: MAX_DIAGNOSTICS_DEGREE,
            }));
        }
        let d = majorant_diagnostics(&fam, ideal, &res, cap)?;
        results["majorant"] = json!({
            "degree": d.degree,
            "a": render_rational(&d.a),
            "b": render_rational(&d.b),
            "theta": render_rational(&d.theta),
            "omega": d.omega.iter().map(|(k, w)| json!({ "k": k, "omega": w.as_ref().map(render_rational) })).collect::<Vec<_>>(),
            "delta": rat_map_json(&d.delta, render_rational),
            "eta": rat_map_json(&d.eta, render_rational),
            "sigma": rat_map_json(&d.sigma, render_rational),
            "phi_tilde": rat_map_json(&d.phi_tilde, render_rational),
            "phi_counts": d.phi_counts.iter().map(|((k, q), c)| json!({ "k": k, "Q": q.exps(), "count": c })).collect::<Vec<_>>(),
            "violations": d.violations,
        });
        summary.push(format!(
            "majorant checks to degree {}: {} violation(s)",
            d.degree,
            d.violations.len()
        ));
        summary.extend(d.violations.iter().map(|v| format!("  {v}")));
        negative = !d.violations.is_empty();
    }
    Ok(if negative {
        Outcome::negative("violation", results, summary)
    } else {
        Outcome::ok("ok", results, summary)
    })
}

// ---------------------------------------------------------------------------
// linearize

/// Re-derives an obstruction from the input maps alone: conjugate by the
/// normalized linearizer one degree below and read the coefficient.
fn verify_obstruction<K: Coeff>(
    maps: &[Germ<K>],
    oracle: &ResonanceOracle<K>,
    ideal: &MonomialIdeal,
    q: &MultiIndex,
    j: usize,
    value: &str,
) -> Result<bool> {
    let d = q.degree();
    if ideal.contains(q) || !oracle.is_resonant(q, j)?.resonant {
        return Ok(false);
    }
    let low: Vec<Germ<K>> = maps
        .iter()
        .map(|g| g.truncate(d - 1).retruncate(d - 1))
        .collect();
    let phi = if d >= 3 {
        let fam = CommutingFamily::with_oracle(low, oracle.clone())?;
        linearize_on_ideal(&fam, ideal)?.phi.retruncate(d)
    } else {
        Germ::identity(maps[0].nin(), d).with_tol(maps[0].tol())
    };
    let inv = phi.invert()?;
    let tol = verify_tol::<K>(maps[0].tol());
    for f in maps {
        let g = inv.compose(&f.retruncate(d).compose(&phi)?)?;
        let c = g.comp(j).coeff(q);
        if !c.is_negligible(tol) {
            return Ok(K::BACKEND == Backend::Float || c.to_string() == value);
        }
    }
    Ok(false)
}

fn linearize<K: Coeff>(
    maps: &[Germ<K>],
    mode: &OracleMode,
    ideal: &MonomialIdeal,
    verify: bool,
) -> Result<Outcome> {
    let fam = CommutingFamily::new(maps.to_vec(), mode.clone())?;
    match linearize_on_ideal(&fam, ideal) {
        Ok(res) => {
            let report = verify_conjugacy(&fam, &res, ideal)?;
            let mut counts = [0usize; 3];
            for ev in &res.trace {
                counts[match ev.rule {
                    germlab::linearize::Rule::Divide { .. } => 0,
                    germlab::linearize::Rule::Resonant => 1,
                    germlab::linearize::Rule::InIdeal => 2,
                }] += 1;
            }
            let results = json!({
                "ideal": ideal_to_json(ideal),
                "phi": germ_to_json(&res.phi),
                "residuals": res.residuals.iter().map(germ_to_json).collect::<Vec<_>>(),
                "normalized": res.normalized,
                "obstruction": null,
                "diagnostics": {
                "rules": { "divide": counts[0], "resonant": counts[1], "in_ideal": counts[2] },
                "conjugacy": {
                    "passed": report.passed,
                    "failures": report.failures.iter().map(|f| json!({ "i": f.i + 1, "j": f.j + 1, "Q": f.q.exps() })).collect::<Vec<_>>(),
                    "normalization_failures": report.normalization_failures.iter().map(|(j, q)| json!({ "j": j + 1, "Q": q.exps() })).collect::<Vec<_>>(),
                    "residuals_outside_ideal": report.residuals_outside_ideal.iter().map(|(i, j, q)| json!({ "i": i + 1, "j": j + 1, "Q": q.exps() })).collect::<Vec<_>>(),
                },
                },
            });
            let summary = vec![
                format!(
                    "linearized to degree {} on the ideal ({})",
                    fam.trunc(),
                    ideal
                        .gens()
                        .iter()
                        .map(|q| monomial(q, None))
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
                format!(
                    "conjugacy check: {}",
                    if report.passed { "passed" } else { "FAILED" }
                ),
            ];
            Ok(if report.passed {
                Outcome::ok("linearized", results, summary)
            } else {
                Outcome::negative("verification-failed", results, summary)
            })
        }
        Err(GermError::FormalObstruction { q, j, value }) => {
            let q = MultiIndex::new(q);
            let results = json!({
                "ideal": ideal_to_json(ideal),
                "phi": null,
                "residuals": null,
                "obstruction": { "Q": q.exps(), "j": j + 1, "monomial": monomial(&q, None), "component": var_name(j, None), "value": value },
            });
            let summary = vec![format!(
                "formal obstruction: Q = {}, j = {} (coefficient of {} e_{}), value {}",
                monomial(&q, None),
                j + 1,
                monomial(&q, None),
                j + 1,
                value
            )];
            let mut out = Outcome::negative("obstructed", results, summary);
            if verify {
                out.witness_verified = Some(verify_obstruction(
                    maps,
                    fam.oracle(),
                    ideal,
                    &q,
                    j,
                    &value,
                )?);
            }
            Ok(out)
        }
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------------------
// straighten

/// Reads the eigenvalues off the composed germs rather than `B_i conj(B_j)`.
fn verify_real_resonance<K: Coeff>(
    fam: &RealFamily<K>,
    mode: &OracleMode,
    w: &RealResonance,
) -> Result<bool> {
    let tol = match mode {
        OracleMode::Numeric { epsilon } => epsilon * 10.0,
        _ => verify_tol::<K>(fam.rhos()[0].germ().tol()).max(if K::BACKEND == Backend::Float {
            1e-8
        } else {
            0.0
        }),
    };
    for j in 0..fam.m() {
        if j == w.i {
            continue;
        }
        let lin = fam.group_element(w.i, j)?.linear_part();
        let mut v = lin.get(w.k, w.k).clone();
        for (t, &x) in w.q.exps().iter().enumerate() {
            v = v.mul(
                &lin.get(t, t)
                    .conj()
                    .powi(x as i64)
                    .expect("nonzero eigenvalue"),
            );
        }
        if !v.sub(&K::one()).is_negligible(tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn straighten_task<K: Coeff>(
    family: &RealFamily<K>,
    mode: &OracleMode,
    ideal: &MonomialIdeal,
    verify: bool,
) -> Result<Outcome> {
    if let Some(w) = check_nonresonance(family, ideal, mode)? {
        let results = json!({
            "ideal": ideal_to_json(ideal),
            "resonance": { "i": w.i + 1, "k": w.k + 1, "Q": w.q.exps(), "monomial": monomial(&w.q, None) },
        });
        let summary = vec![format!(
            "real resonance: conj(mu_{{{},j}})^Q = 1 / mu_{{{},j,{}}} for every j, Q = {}",
            w.i + 1,
            w.i + 1,
            w.k + 1,
            monomial(&w.q, None)
        )];
        let mut out = Outcome::negative("resonant", results, summary);
        if verify {
            out.witness_verified = Some(verify_real_resonance(family, mode, &w)?);
        }
        return Ok(out);
    }
    let res = straighten(family, ideal, mode.clone())?;
    let inter = intersection_report(family, ideal);
    let triple = |v: &[(usize, usize, MultiIndex)]| -> Vec<Value> {
        v.iter()
            .map(|(i, k, q)| json!({ "i": i + 1, "k": k + 1, "Q": q.exps() }))
            .collect()
    };
    let results = json!({
        "ideal": ideal_to_json(ideal),
        "phi": germ_to_json(&res.phi),
        "involutions": res.involutions.iter().map(|r| json!({ "B": matrix_to_json(&r.b()), "R": germ_to_json(&r.r()) })).collect::<Vec<_>>(),
        "remaining_outside": triple(&res.remaining_outside),
        "normalizable_violations": triple(&res.normalizable_violations),
        "anti_linearized": res.remaining_outside.is_empty(),
        "intersection": {
            "components": inter.components.iter().map(|c| c.iter().map(|s| s + 1).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "equations": inter.equations,
        },
    });
    let mut summary = vec![format!(
        "straightened {} involutions; terms outside the ideal: {}",
        family.m(),
        res.remaining_outside.len()
    )];
    for (k, per) in inter.equations.iter().enumerate() {
        for (c, eqs) in per.iter().enumerate() {
            summary.push(format!(
                "rho_{} on component {}: {}",
                k + 1,
                c + 1,
                eqs.join(", ")
            ));
        }
    }
    Ok(if res.remaining_outside.is_empty() {
        Outcome::ok("straightened", results, summary)
    } else {
        Outcome::negative("violation", results, summary)
    })
}

// ---------------------------------------------------------------------------
// prepare / involutions

fn prepare<K: Coeff>(manifold: &ManifoldData<K>) -> Result<Outcome> {
    let pq = prepare_quadric(manifold)?;
    let inv = bishop_invariants(&pq);
    let results = json!({
        "gamma": pq.gamma.iter().map(coeff_to_json).collect::<Vec<_>>(),
        "bishop_invariants": inv.iter().map(coeff_to_json).collect::<Vec<_>>(),
        "cond1_det": pq.cond1_det.as_ref().map(coeff_to_json),
        "takagi": pq.takagi,
        "steps": pq.steps,
        "D_normalized": matrix_to_json(&pq.d_normalized),
        "coordinate_change": germ_to_json(&pq.coordinate_change),
        "prepared": manifold_json(&pq.prepared),
    });
    let summary = vec![
        format!(
            "Bishop invariants: {}",
            inv.iter()
                .map(|g| g.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
        format!("steps: {}", pq.steps.join(", ")),
    ];
    Ok(Outcome::ok("prepared", results, summary))
}

fn involutions<K: Coeff>(manifold: &ManifoldData<K>, mode: &OracleMode) -> Result<Outcome> {
    let pq = prepare_quadric(manifold)?;
    let ip = complexify_and_build_involutions(&pq)?;
    let dec = decompose_spectrum(&ip, mode)?;
    let reverses = ip.check_rho_reverses_phi()?;
    let results = json!({
        "bishop_invariants": bishop_invariants(&pq).iter().map(coeff_to_json).collect::<Vec<_>>(),
        "T1": matrix_to_json(&ip.t1),
        "T2": matrix_to_json(&ip.t2),
        "DPhi": matrix_to_json(&ip.phi_lin),
        "rho": matrix_to_json(&ip.rho),
        "tau1": germ_to_json(&ip.tau1),
        "tau2": germ_to_json(&ip.tau2),
        "rho_reverses_phi": reverses,
        "spectral": spectral_json(&dec),
    });
    let mut summary: Vec<String> = dec
        .blocks
        .iter()
        .map(|b| {
            format!(
                "block {:?}: mu = {:.12} {:+.12}i, multiplicity {}",
                b.class, b.mu.re, b.mu.im, b.multiplicity
            )
            .to_lowercase()
        })
        .collect();
    summary.push(format!(
        "fixed space dimension {}; decomposition verified: {}",
        dec.fixed_dim, dec.verified
    ));
    Ok(if reverses && dec.verified {
        Outcome::ok("ok", results, summary)
    } else {
        Outcome::negative("violation", results, summary)
    })
}

// ---------------------------------------------------------------------------
// involution pairs

fn layout_names<K: Coeff>(ip: &InvolutionPair<K>) -> Option<Vec<String>> {
    let tol = verify_tol::<K>(ip.tau1.tol()).max(if K::BACKEND == Backend::Float {
        1e-8
    } else {
        0.0
    });
    TauLayout::from_matrices(&ip.t1, &ip.t2, tol)
        .ok()
        .map(|l| l.names())
}

/// Re-checks a witness on the input pair: a `Phi` witness through the plain
/// linearization of `Phi`, a `tau` witness by rerunning at its degree.
fn verify_tau_witness<K: Coeff>(
    ip: &InvolutionPair<K>,
    ideal: &MonomialIdeal,
    mode: &OracleMode,
    w: &TauWitness,
) -> Result<bool> {
    let q = MultiIndex::new(w.q.clone());
    let d = q.degree();
    if w.source == "Phi" {
        let tol = verify_tol::<K>(ip.tau1.tol()).max(if K::BACKEND == Backend::Float {
            1e-8
        } else {
            0.0
        });
        let fam = DiagonalFamily::from_matrices(std::slice::from_ref(&ip.phi_lin), tol)?;
        let oracle = ResonanceOracle::new(fam, mode.clone())?;
        return verify_obstruction(
            std::slice::from_ref(&ip.phi),
            &oracle,
            ideal,
            &q,
            w.component,
            &w.value,
        );
    }
    let low = InvolutionPair::from_taus(
        ip.tau1.truncate(d).retruncate(d),
        ip.rho.clone(),
        ip.p,
        ip.q,
    )?;
    let again = formal_tau_linearizability(&low, ideal, mode)?;
    Ok(again
        .witness
        .as_ref()
        .is_some_and(|x| x.q == w.q && x.component == w.component && x.source == w.source))
}

fn witness_json(w: &TauWitness, names: Option<&[String]>) -> Value {
    let q = MultiIndex::new(w.q.clone());
    json!({
        "source": w.source,
        "Q": w.q,
        "j": w.component + 1,
        "monomial": monomial(&q, names),
        "component": var_name(w.component, names),
        "value": w.value,
    })
}

fn witness_line(w: &TauWitness, names: Option<&[String]>) -> String {
    let q = MultiIndex::new(w.q.clone());
    format!(
        "formal obstruction in {}: Q = {}, j = {} (component {}), value {}",
        w.source,
        monomial(&q, names),
        w.component + 1,
        var_name(w.component, names),
        w.value
    )
}

fn formal_json(f: &TauLinearizability, names: Option<&[String]>) -> Value {
    json!({
        "linearizable": f.linearizable,
        "witness": f.witness.as_ref().map(|w| witness_json(w, names)),
        "centralizer_violation": f.centralizer_violation.as_ref().map(|(q, j)| json!({ "Q": q, "j": j + 1, "monomial": monomial(&MultiIndex::new(q.clone()), names) })),
        "distinct_eigenvalues": f.distinct_eigenvalues,
        "hyperbolic_only": f.hyperbolic_only,
        "relation_residual": f.relation_residual,
    })
}

fn tau_task<K: Coeff>(
    m: &Manifest,
    ip: &InvolutionPair<K>,
    mode: &OracleMode,
    spec: &IdealSpec,
    degree_bound: u32,
    verify: bool,
) -> Result<Outcome> {
    let names = layout_names(ip);
    let nm = names.as_deref();
    match m.task {
        Task::TauLinearize => {
            let ideal = match spec {
                IdealSpec::Explicit(i) => i.clone(),
                IdealSpec::Resonant => cutting_variety(ip, mode, degree_bound)?.res_ideal,
            };
            let gens: Vec<String> = ideal.gens().iter().map(|q| monomial(q, nm)).collect();
            let formal = formal_tau_linearizability(ip, &ideal, mode)?;
            let mut results = json!({ "names": names, "ideal": ideal_to_json(&ideal), "formal": formal_json(&formal, nm) });
            if let Some(w) = &formal.witness {
                let mut out = Outcome::negative("obstructed", results, vec![witness_line(w, nm)]);
                if verify {
                    out.witness_verified = Some(verify_tau_witness(ip, &ideal, mode, w)?);
                }
                return Ok(out);
            }
            let r = match linearize_taus_on_ideal(ip, &ideal, mode) {
                Ok(r) => r,
                Err(e @ GermError::IncompatibleIdeal(_)) => {
                    let mut out = Outcome::failed(&e);
                    out.results = results;
                    return Ok(out);
                }
                Err(e) => return Err(e),
            };
            let v = &r.verification;
            results["psi_prime"] = germ_to_json(&r.psi_prime);
            results["correction"] = germ_to_json(&r.correction);
            results["u"] = germ_to_json(&r.u);
            results["psi"] = germ_to_json(&r.psi);
            results["linearized_taus"] = json!([
                germ_to_json(&r.linearized_taus.0),
                germ_to_json(&r.linearized_taus.1)
            ]);
            results["verification"] = json!({
                "residual_in_ideal": v.residual_in_ideal,
                "involutions_preserved": v.involutions_preserved,
                "ideal_part_zero": v.ideal_part_zero,
                "pnormal": v.pnormal,
                "compat_identities": v.compat_identities,
                "rho_commutes": v.rho_commutes,
                "alpha": v.alpha.iter().map(series_to_json).collect::<Vec<_>>(),
                "beta": v.beta.iter().map(series_to_json).collect::<Vec<_>>(),
                "gamma": v.gamma.iter().map(series_to_json).collect::<Vec<_>>(),
                "uvw_residual": v.uvw_residual,
                "linear_cleanup": v.linear_cleanup,
            });
            let passed = v.residual_in_ideal
                && v.involutions_preserved
                && v.ideal_part_zero
                && v.compat_identities
                && v.rho_commutes;
            let summary = vec![
                format!(
                    "tau1, tau2 linearized to degree {} on the ideal ({})",
                    ip.trunc(),
                    gens.join(", ")
                ),
                format!("verification: {}", if passed { "passed" } else { "FAILED" }),
                format!("normalization: {}", v.pnormal),
            ];
            Ok(if passed {
                Outcome::ok("linearized", results, summary)
            } else {
                Outcome::negative("verification-failed", results, summary)
            })
        }
        Task::QuadricEquivalence => {
            match quadric_equivalence(ip, mode, m.budgets.k_max, m.budgets.degree)? {
                QuadricEquivalence::Biholomorphic { psi, omega, note } => {
                    let mut summary = vec![format!("formally equivalent to the quadric: {note}")];
                    if let Some(om) = &omega {
                        summary.extend(omega_lines(om, nm));
                    }
                    let results = json!({ "names": names, "outcome": "biholomorphic", "psi": germ_to_json(&psi), "omega": omega.as_ref().map(|o| omega_json(o, nm)), "note": note });
                    Ok(Outcome::ok("biholomorphic", results, summary))
                }
                QuadricEquivalence::DiophantineUnverified { psi, omega, reason } => {
                    let mut summary = vec![format!(
                        "formally equivalent; convergence not established: {reason}"
                    )];
                    if let Some(om) = &omega {
                        summary.extend(omega_lines(om, nm));
                    }
                    let results = json!({ "names": names, "outcome": "diophantine_unverified", "psi": germ_to_json(&psi), "omega": omega.as_ref().map(|o| omega_json(o, nm)), "reason": reason });
                    Ok(Outcome::ok("diophantine-unverified", results, summary))
                }
                QuadricEquivalence::NotFormallyEquivalent { witness } => {
                    let results = json!({ "names": names, "outcome": "not_formally_equivalent", "witness": witness_json(&witness, nm) });
                    let mut out = Outcome::negative(
                        "not-formally-equivalent",
                        results,
                        vec![witness_line(&witness, nm)],
                    );
                    if verify {
                        out.witness_verified = Some(verify_tau_witness(
                            ip,
                            &MonomialIdeal::zero(ip.nv()),
                            mode,
                            &witness,
                        )?);
                    }
                    Ok(out)
                }
            }
        }
        Task::CuttingVariety => {
            let cv = cutting_variety(ip, mode, degree_bound)?;
            let mut summary = vec![format!(
                "resonant ideal: ({})",
                cv.generator_text.join(", ")
            )];
            for c in &cv.components {
                summary.push(format!("component: {}", c.equations));
            }
            for a in &cv.adjustments {
                summary.push(format!("adjustment: {a}"));
            }
            summary.push(format!("real trace: {}", cv.real_trace));
            summary.push(format!("linearization: {}", cv.linearization));
            let mut results = serde_json::to_value(&cv).expect("serializable");
            for key in ["components", "adjusted_components"] {
                for c in results[key].as_array_mut().into_iter().flatten() {
                    c["vanishing"] = json!(c["vanishing"]
                        .as_array()
                        .into_iter()
                        .flatten()
                        .map(|v| v.as_u64().unwrap_or(0) + 1)
                        .collect::<Vec<_>>());
                }
            }
            Ok(Outcome::ok("ok", results, summary))
        }
        _ => unreachable!("not an involution-pair task"),
    }
}

// ---------------------------------------------------------------------------
// emit

/// Assembles the full report; `elapsed_ms` goes under `timing`.
pub fn report_json(m: &Manifest, o: &Outcome, elapsed_ms: Option<f64>) -> Value {
    let mut v = json!({
        "status": o.status,
        "exit_code": o.exit_code,
        "task": m.task.name(),
        "backend": m.backend,
        "truncation": m.truncation,
        "budgets": { "degree": m.budgets.degree, "k_max": m.budgets.k_max, "diagnostics_degree": m.budgets.diagnostics_degree },
        "results": o.results,
        "error": o.error,
        "witness_verified": o.witness_verified,
        "tool": { "name": "germlab", "version": env!("CARGO_PKG_VERSION") },
        "input_digest": m.digest,
    });
    if let Some(t) = elapsed_ms {
        v["timing"] = json!({ "elapsed_ms": t });
    }
    v
}

/// Report for a manifest that failed validation.
pub fn schema_report(errors: &[SchemaError], digest: &str) -> Value {
    json!({
        "status": "schema-error",
        "exit_code": 2,
        "errors": errors.iter().map(|e| json!({ "pointer": e.pointer, "message": e.message })).collect::<Vec<_>>(),
        "tool": { "name": "germlab", "version": env!("CARGO_PKG_VERSION") },
        "input_digest": digest,
    })
}

pub fn render_text(m: &Manifest, o: &Outcome) -> String {
    let mut s = format!(
        "task: {}\nbackend: {}\ntruncation: {}\nstatus: {} (exit {})\n",
        m.task.name(),
        m.backend,
        m.truncation,
        o.status,
        o.exit_code
    );
    for line in &o.summary {
        s.push_str(line);
        s.push('\n');
    }
    if let Some(v) = o.witness_verified {
        s.push_str(&format!("witness verified: {v}\n"));
    }
    s
}

pub fn render_schema_text(errors: &[SchemaError]) -> String {
    let mut s = String::from("status: schema-error (exit 2)\n");
    for e in errors {
        s.push_str(&format!("{e}\n"));
    }
    s
}
