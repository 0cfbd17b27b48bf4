//! Manifest parsing and validation.

use germlab::json::*;
use germlab::resonance::DEFAULT_DEGREE_BUDGET;
use germlab::*;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Resonance,
    Linearize,
    Straighten,
    Prepare,
    Involutions,
    TauLinearize,
    QuadricEquivalence,
    CuttingVariety,
    Diagnose,
}

impl Task {
    pub const ALL: [Task; 9] = [
        Task::Resonance,
        Task::Linearize,
        Task::Straighten,
        Task::Prepare,
        Task::Involutions,
        Task::TauLinearize,
        Task::QuadricEquivalence,
        Task::CuttingVariety,
        Task::Diagnose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Resonance => "resonance",
            Task::Linearize => "linearize",
            Task::Straighten => "straighten",
            Task::Prepare => "prepare",
            Task::Involutions => "involutions",
            Task::TauLinearize => "tau-linearize",
            Task::QuadricEquivalence => "quadric-equivalence",
            Task::CuttingVariety => "cutting-variety",
            Task::Diagnose => "diagnose",
        }
    }

    pub fn from_name(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Budgets {
    /// Largest truncation (and enumeration degree) the run may use.
    pub degree: u32,
    /// Number of `omega_k` terms reported.
    pub k_max: u32,
    /// Degree cap for majorant diagnostics.
    pub diagnostics_degree: u32,
}

/// Where an involution pair comes from.
#[derive(Clone, Debug)]
pub enum PairSource<K: Coeff> {
    /// Run the manifold through preparation and spectral decomposition.
    Manifold(ManifoldData<K>),
    /// A pair already in spectral coordinates.
    Pair(InvolutionPair<K>),
}

#[derive(Clone, Debug)]
pub enum IdealSpec {
    Explicit(MonomialIdeal),
    /// The resonant ideal of `D Phi(0)`.
    Resonant,
}

#[derive(Clone, Debug)]
pub enum Payload<K: Coeff> {
    Resonance {
        family: DiagonalFamily<K>,
        mode: OracleMode,
        bound: u32,
        ideal: Option<MonomialIdeal>,
    },
    Diagnose {
        family: DiagonalFamily<K>,
        mode: OracleMode,
        ideal: Option<MonomialIdeal>,
        maps: Option<Vec<Germ<K>>>,
    },
    Linearize {
        maps: Vec<Germ<K>>,
        mode: OracleMode,
        ideal: MonomialIdeal,
    },
    Straighten {
        family: RealFamily<K>,
        mode: OracleMode,
        ideal: MonomialIdeal,
    },
    Prepare {
        manifold: ManifoldData<K>,
    },
    Involutions {
        manifold: ManifoldData<K>,
        mode: OracleMode,
    },
    Tau {
        source: PairSource<K>,
        mode: OracleMode,
        ideal: IdealSpec,
        degree_bound: u32,
    },
}

#[derive(Clone, Debug)]
pub enum Input {
    Exact(Payload<GaussQ>),
    Float(Payload<CF64>),
}

#[derive(Clone, Debug)]
pub struct Manifest {
    pub task: Task,
    pub backend: &'static str,
    pub truncation: u32,
    pub budgets: Budgets,
    pub input: Input,
    /// `sha256:<hex>` of the manifest bytes.
    pub digest: String,
}

pub fn digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

fn u32_field(v: &Value, key: &str, default: Option<u32>) -> SchemaResult<u32> {
    match get_opt(v, key) {
        Some(x) => x
            .as_u64()
            .filter(|&y| y <= u32::MAX as u64)
            .map(|y| y as u32)
            .ok_or_else(|| schema_err(&child("", key), "expected a non-negative integer")),
        None => default.ok_or_else(|| schema_err(&child("", key), "missing field")),
    }
}

/// Parses and validates a manifest; all problems found are returned.
pub fn parse_manifest(bytes: &[u8]) -> std::result::Result<Manifest, Vec<SchemaError>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| vec![schema_err("", format!("manifest is not UTF-8: {e}"))])?;
    let root: Value = serde_json::from_str(text)
        .map_err(|e| vec![schema_err("", format!("invalid JSON: {e}"))])?;
    if !root.is_object() {
        return Err(vec![schema_err("", "manifest must be a JSON object")]);
    }
    let mut errors = Vec::new();
    let task = match get(&root, "", "task").map(|t| t.as_str().and_then(Task::from_name)) {
        Ok(Some(t)) => Some(t),
        Ok(None) => {
            let names: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
            errors.push(schema_err(
                "/task",
                format!("expected one of {}", names.join(", ")),
            ));
            None
        }
        Err(e) => {
            errors.push(e);
            None
        }
    };
    let backend = match get_opt(&root, "backend").map(|b| b.as_str()) {
        None | Some(Some("exact")) => Some("exact"),
        Some(Some("float")) => Some("float"),
        _ => {
            errors.push(schema_err("/backend", "expected \"exact\" or \"float\""));
            None
        }
    };
    let truncation = u32_field(&root, "truncation", None)
        .map_err(|e| errors.push(e))
        .ok();
    if truncation.is_some_and(|t| t < 1) {
        errors.push(schema_err("/truncation", "truncation must be at least 1"));
    }
    let budgets = match get_opt(&root, "budgets") {
        None => Some(Budgets {
            degree: DEFAULT_DEGREE_BUDGET,
            k_max: 4,
            diagnostics_degree: 8,
        }),
        Some(b) => {
            let read = |key: &str, default: u32| -> SchemaResult<u32> {
                match get_opt(b, key) {
                    None => Ok(default),
                    Some(x) => x.as_u64().map(|y| y as u32).ok_or_else(|| {
                        schema_err(&child("/budgets", key), "expected a non-negative integer")
                    }),
                }
            };
            match (
                read("degree", DEFAULT_DEGREE_BUDGET),
                read("k_max", 4),
                read("diagnostics_degree", 8),
            ) {
                (Ok(degree), Ok(k_max), Ok(diagnostics_degree)) => Some(Budgets {
                    degree,
                    k_max,
                    diagnostics_degree,
                }),
                (a, b, c) => {
                    errors.extend([a.err(), b.err(), c.err()].into_iter().flatten());
                    None
                }
            }
        }
    };
    let (Some(task), Some(backend), Some(truncation), Some(budgets)) =
        (task, backend, truncation, budgets)
    else {
        return Err(errors);
    };
    if !errors.is_empty() {
        return Err(errors);
    }
    let input = if backend == "exact" {
        parse_payload::<GaussQ>(task, &root, truncation).map(Input::Exact)
    } else {
        parse_payload::<CF64>(task, &root, truncation).map(Input::Float)
    };
    match input {
        Ok(input) => Ok(Manifest {
            task,
            backend,
            truncation,
            budgets,
            input,
            digest: digest(bytes),
        }),
        Err(e) => Err(vec![e]),
    }
}

/// Looks up the first present key among `keys`; returns the value and its pointer.
fn field<'a>(v: &'a Value, pointer: &str, keys: &[&str]) -> SchemaResult<(&'a Value, String)> {
    keys.iter()
        .find_map(|k| get_opt(v, k).map(|x| (x, child(pointer, k))))
        .ok_or_else(|| schema_err(&child(pointer, keys[0]), "missing field"))
}

/// The declared oracle, or exact (exact backend) / numeric `1e-9` (float backend).
fn oracle_or_default<K: Coeff>(
    v: &Value,
    pointer: &str,
    rel_len: usize,
) -> SchemaResult<OracleMode> {
    match get_opt(v, "oracle") {
        Some(o) => oracle_from_json(o, &child(pointer, "oracle"), rel_len),
        None => Ok(match K::BACKEND {
            Backend::Exact => OracleMode::Exact,
            Backend::Float => OracleMode::Numeric { epsilon: 1e-9 },
        }),
    }
}

fn spectrum<K: Coeff>(root: &Value) -> SchemaResult<(DiagonalFamily<K>, OracleMode)> {
    let sp = get(root, "", "spectrum")?;
    let rows = as_array(get(sp, "/spectrum", "mu")?, "/spectrum/mu")?;
    let l = rows.len();
    if l == 0 {
        return Err(schema_err("/spectrum/mu", "at least one row is required"));
    }
    let n = as_array(&rows[0], "/spectrum/mu/0")?.len();
    for (key, want) in [("l", l), ("n", n)] {
        if let Some(x) = get_opt(sp, key) {
            if as_usize(x, &child("/spectrum", key))? != want {
                return Err(schema_err(
                    &child("/spectrum", key),
                    format!("declared {key} differs from /spectrum/mu ({want})"),
                ));
            }
        }
    }
    let mu: Mat<K> = matrix_from_json(&Value::Array(rows.clone()), "/spectrum/mu", l, n)?;
    let family =
        DiagonalFamily::new(mu.to_rows()).map_err(|e| schema_err("/spectrum/mu", e.to_string()))?;
    // The oracle may sit inside the spectrum object or at the top level.
    let mode = if get_opt(sp, "oracle").is_some() {
        oracle_or_default::<K>(sp, "/spectrum", l * n)?
    } else {
        oracle_or_default::<K>(root, "", l * n)?
    };
    Ok((family, mode))
}

fn ideal_opt(root: &Value, nvars: usize, owner: &str) -> SchemaResult<Option<MonomialIdeal>> {
    match get_opt(root, "ideal") {
        None => Ok(None),
        Some(v) => {
            if let Some(n) = get_opt(v, "nvars").and_then(|x| x.as_u64()) {
                if n as usize != nvars {
                    return Err(schema_err(
                        "/ideal/nvars",
                        format!("ideal has {n} variables but {owner} has {nvars}"),
                    ));
                }
            }
            if let Some(g) = v
                .as_array()
                .or_else(|| get_opt(v, "generators").and_then(|g| g.as_array()))
            {
                let base = if v.is_array() {
                    "/ideal".to_string()
                } else {
                    "/ideal/generators".to_string()
                };
                for (k, e) in g.iter().enumerate() {
                    if let Some(a) = e.as_array() {
                        if a.len() != nvars {
                            return Err(schema_err(
                                &child(&base, k),
                                format!(
                                    "ideal generator has {} variables but {owner} has {nvars}",
                                    a.len()
                                ),
                            ));
                        }
                    }
                }
            }
            ideal_from_json(v, "/ideal", nvars).map(Some)
        }
    }
}

fn maps<K: Coeff>(root: &Value, trunc: u32) -> SchemaResult<Vec<Germ<K>>> {
    let arr = as_array(get(root, "", "maps")?, "/maps")?;
    if arr.is_empty() {
        return Err(schema_err("/maps", "at least one map is required"));
    }
    let n = as_array(&arr[0], "/maps/0")?.len();
    arr.iter()
        .enumerate()
        .map(|(i, g)| germ_from_json(g, &child("/maps", i), n, trunc))
        .collect()
}

fn manifold<K: Coeff>(root: &Value, trunc: u32) -> SchemaResult<ManifoldData<K>> {
    let m = get(root, "", "manifold")?;
    let p = as_usize(get(m, "/manifold", "p")?, "/manifold/p")?;
    let f_raw = match field(m, "/manifold", &["F", "f"]) {
        Ok((f, ptr)) => as_array(f, &ptr)?
            .iter()
            .cloned()
            .map(|x| (x, ptr.clone()))
            .collect::<Vec<_>>(),
        Err(_) => Vec::new(),
    };
    let nv = 2 * p + f_raw.len();
    if let Some(n) = get_opt(m, "n") {
        let n = as_usize(n, "/manifold/n")?;
        if n != p + f_raw.len() {
            return Err(schema_err(
                "/manifold/n",
                format!("n = {n} but p + len(F) = {}", p + f_raw.len()),
            ));
        }
    }
    let f = f_raw
        .iter()
        .enumerate()
        .map(|(k, (s, ptr))| series_from_json(s, &child(ptr, k), nv, trunc))
        .collect::<SchemaResult<Vec<_>>>()?;
    let (g, gptr) = field(m, "/manifold", &["G", "g"])?;
    let g = series_from_json(g, &gptr, nv, trunc)?;
    ManifoldData::new(p, f, g).map_err(|e| schema_err("/manifold", e.to_string()))
}

fn pair_source<K: Coeff>(root: &Value, trunc: u32) -> SchemaResult<(PairSource<K>, usize)> {
    if get_opt(root, "manifold").is_some() {
        let m = manifold::<K>(root, trunc)?;
        let nv = m.nv();
        return Ok((PairSource::Manifold(m), nv));
    }
    let pr = get(root, "", "pair")
        .map_err(|_| schema_err("/pair", "either \"manifold\" or \"pair\" is required"))?;
    let p = as_usize(get(pr, "/pair", "p")?, "/pair/p")?;
    let q = match get_opt(pr, "q") {
        Some(x) => as_usize(x, "/pair/q")?,
        None => 0,
    };
    let nv = 2 * p + q;
    let tau1 = germ_from_json(get(pr, "/pair", "tau1")?, "/pair/tau1", nv, trunc)?;
    let rho = matrix_from_json(get(pr, "/pair", "rho")?, "/pair/rho", nv, nv)?;
    let ip = InvolutionPair::from_taus(tau1, rho, p, q)
        .map_err(|e| schema_err("/pair", e.to_string()))?;
    Ok((PairSource::Pair(ip), nv))
}

fn parse_payload<K: Coeff>(task: Task, root: &Value, trunc: u32) -> SchemaResult<Payload<K>> {
    match task {
        Task::Resonance => {
            let (family, mode) = spectrum::<K>(root)?;
            let bound = u32_field(root, "bound", Some(trunc))?;
            let ideal = ideal_opt(root, family.n(), "/spectrum/mu")?;
            Ok(Payload::Resonance {
                family,
                mode,
                bound,
                ideal,
            })
        }
        Task::Diagnose => {
            let (family, mode) = spectrum::<K>(root)?;
            let ideal = ideal_opt(root, family.n(), "/spectrum/mu")?;
            let maps = if get_opt(root, "maps").is_some() {
                let m = maps::<K>(root, trunc)?;
                if m[0].nin() != family.n() {
                    return Err(schema_err(
                        "/maps/0",
                        format!(
                            "map has {} variables but /spectrum/mu has {}",
                            m[0].nin(),
                            family.n()
                        ),
                    ));
                }
                Some(m)
            } else {
                None
            };
            Ok(Payload::Diagnose {
                family,
                mode,
                ideal,
                maps,
            })
        }
        Task::Linearize => {
            let maps = maps::<K>(root, trunc)?;
            let n = maps[0].nin();
            let mode = oracle_or_default::<K>(root, "", maps.len() * n)?;
            let ideal = ideal_opt(root, n, "/maps/0")?.unwrap_or_else(|| MonomialIdeal::zero(n));
            Ok(Payload::Linearize { maps, mode, ideal })
        }
        Task::Straighten => {
            let inv = as_array(get(root, "", "involutions")?, "/involutions")?;
            if inv.len() < 2 {
                return Err(schema_err(
                    "/involutions",
                    "at least two involutions are required",
                ));
            }
            let (b0, b0ptr) = field(&inv[0], "/involutions/0", &["B", "b"])?;
            let n = as_array(b0, &b0ptr)?.len();
            let mut rhos = Vec::new();
            for (i, r) in inv.iter().enumerate() {
                let p = child("/involutions", i);
                let (b, bptr) = field(r, &p, &["B", "b"])?;
                let b = matrix_from_json(b, &bptr, n, n)?;
                let rr = match field(r, &p, &["R", "r"]) {
                    Ok((g, gptr)) => germ_from_json(g, &gptr, n, trunc)?,
                    Err(_) => Germ::new(vec![Series::zero(n, trunc); n])
                        .map_err(|e| schema_err(&p, e.to_string()))?,
                };
                rhos.push(
                    AntiInvolution::new(&b, &rr, i).map_err(|e| schema_err(&p, e.to_string()))?,
                );
            }
            let family =
                RealFamily::new(rhos).map_err(|e| schema_err("/involutions", e.to_string()))?;
            let m = family.m();
            let mode = oracle_or_default::<K>(root, "", m * (m - 1) * n)?;
            let ideal =
                ideal_opt(root, n, "/involutions/0/B")?.unwrap_or_else(|| MonomialIdeal::zero(n));
            Ok(Payload::Straighten {
                family,
                mode,
                ideal,
            })
        }
        Task::Prepare => Ok(Payload::Prepare {
            manifold: manifold(root, trunc)?,
        }),
        Task::Involutions => {
            let manifold = manifold::<K>(root, trunc)?;
            let mode = oracle_or_default::<K>(root, "", manifold.nv())?;
            Ok(Payload::Involutions { manifold, mode })
        }
        Task::TauLinearize | Task::QuadricEquivalence | Task::CuttingVariety => {
            let (source, nv) = pair_source::<K>(root, trunc)?;
            let mode = oracle_or_default::<K>(root, "", nv)?;
            let ideal = match get_opt(root, "ideal") {
                Some(Value::String(s)) if s == "resonant" => IdealSpec::Resonant,
                Some(_) => IdealSpec::Explicit(
                    ideal_opt(
                        root,
                        nv,
                        if get_opt(root, "manifold").is_some() {
                            "/manifold"
                        } else {
                            "/pair"
                        },
                    )?
                    .expect("present"),
                ),
                None if task == Task::TauLinearize => IdealSpec::Resonant,
                None => IdealSpec::Explicit(MonomialIdeal::zero(nv)),
            };
            let degree_bound = u32_field(root, "degree_bound", Some(trunc.max(2)))?;
            Ok(Payload::Tau {
                source,
                mode,
                ideal,
                degree_bound,
            })
        }
    }
}
