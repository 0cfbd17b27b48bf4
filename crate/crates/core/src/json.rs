//! JSON forms of coefficients, series, germs, matrices, ideals and oracle
//! settings. Objects use `serde_json`'s sorted maps, so output is canonical.
//!
//! A series is
//! `{"nvars": n, "truncation": N, "backend": "exact"|"float",
//!   "terms": [{"exp": [..], "re": .., "im": ..}, ..]}`
//! with terms in canonical order and exact parts as `"p/q"` strings.

use serde_json::{json, Map, Value};

use crate::coeff::{Backend, Coeff};
use crate::linalg::Mat;
use crate::resonance::{MonomialIdeal, OracleMode};
use crate::series::{Germ, MultiIndex, Series};

/// Input error located by a JSON pointer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaError {
    pub pointer: String,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {}",
            if self.pointer.is_empty() {
                "/"
            } else {
                &self.pointer
            },
            self.message
        )
    }
}

pub type SchemaResult<T> = std::result::Result<T, SchemaError>;

pub fn schema_err(pointer: &str, message: impl Into<String>) -> SchemaError {
    SchemaError {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

/// `pointer/key` with `~` and `/` escaped.
pub fn child(pointer: &str, key: impl std::fmt::Display) -> String {
    format!(
        "{pointer}/{}",
        key.to_string().replace('~', "~0").replace('/', "~1")
    )
}

pub fn backend_name<K: Coeff>() -> &'static str {
    match K::BACKEND {
        Backend::Exact => "exact",
        Backend::Float => "float",
    }
}

// ---------------------------------------------------------------------------
// Output

pub fn coeff_to_json<K: Coeff>(c: &K) -> Value {
    let (re, im) = c.to_json_parts();
    json!({ "re": re, "im": im })
}

pub fn exps_to_json(q: &MultiIndex) -> Value {
    json!(q.exps())
}

pub fn series_to_json<K: Coeff>(s: &Series<K>) -> Value {
    let terms: Vec<Value> = s
        .terms()
        .map(|(q, c)| {
            let (re, im) = c.to_json_parts();
            json!({ "exp": q.exps(), "re": re, "im": im })
        })
        .collect();
    json!({ "nvars": s.nvars(), "truncation": s.trunc(), "backend": backend_name::<K>(), "terms": terms })
}

pub fn germ_to_json<K: Coeff>(g: &Germ<K>) -> Value {
    Value::Array(g.comps().iter().map(series_to_json).collect())
}

pub fn matrix_to_json<K: Coeff>(m: &Mat<K>) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|i| Value::Array(m.row(i).iter().map(coeff_to_json).collect()))
            .collect(),
    )
}

pub fn ideal_to_json(ideal: &MonomialIdeal) -> Value {
    json!({ "nvars": ideal.nvars(), "generators": ideal.gens().iter().map(|g| g.exps().to_vec()).collect::<Vec<_>>() })
}

pub fn oracle_to_json(mode: &OracleMode) -> Value {
    match mode {
        OracleMode::Exact => json!({ "mode": "exact" }),
        OracleMode::Lattice { relations } => json!({ "mode": "lattice", "relations": relations }),
        OracleMode::Numeric { epsilon } => json!({ "mode": "numeric", "epsilon": epsilon }),
    }
}

/// Canonical text: sorted keys, two-space indent, trailing newline.
pub fn canonical_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable value");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Input

pub fn get<'a>(obj: &'a Value, pointer: &str, key: &str) -> SchemaResult<&'a Value> {
    obj.as_object()
        .ok_or_else(|| schema_err(pointer, "expected an object"))?
        .get(key)
        .ok_or_else(|| schema_err(&child(pointer, key), "missing field"))
}

pub fn get_opt<'a>(obj: &'a Value, key: &str) -> Option<&'a Value> {
    obj.as_object()
        .and_then(|m| m.get(key))
        .filter(|v| !v.is_null())
}

pub fn as_usize(v: &Value, pointer: &str) -> SchemaResult<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| schema_err(pointer, "expected a non-negative integer"))
}

pub fn as_array<'a>(v: &'a Value, pointer: &str) -> SchemaResult<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| schema_err(pointer, "expected an array"))
}

/// Accepts `{"re": .., "im": ..}`, a bare real (`"p/q"` or number), or a
/// `[re, im]` pair.
pub fn coeff_from_json<K: Coeff>(v: &Value, pointer: &str) -> SchemaResult<K> {
    let zero = Value::Null;
    let (re, im) = match v {
        Value::Object(m) => (m.get("re").unwrap_or(&zero), m.get("im").unwrap_or(&zero)),
        Value::Array(a) if a.len() == 2 => (&a[0], &a[1]),
        Value::String(_) | Value::Number(_) => (v, &zero),
        _ => return Err(schema_err(pointer, "expected a coefficient")),
    };
    K::from_json_parts(re, im).map_err(|e| schema_err(pointer, e))
}

pub fn exps_from_json(v: &Value, pointer: &str, nvars: usize) -> SchemaResult<MultiIndex> {
    let a = as_array(v, pointer)?;
    if a.len() != nvars {
        return Err(schema_err(
            pointer,
            format!("exponent vector has length {}, expected {nvars}", a.len()),
        ));
    }
    let mut e = Vec::with_capacity(nvars);
    for (k, x) in a.iter().enumerate() {
        e.push(
            x.as_u64()
                .filter(|&y| y <= u32::MAX as u64)
                .ok_or_else(|| schema_err(&child(pointer, k), "expected a non-negative exponent"))?
                as u32,
        );
    }
    Ok(MultiIndex::new(e))
}

/// Reads a series; `nvars` and `trunc` default to the given values and must
/// agree with them when present.
pub fn series_from_json<K: Coeff>(
    v: &Value,
    pointer: &str,
    nvars: usize,
    trunc: u32,
) -> SchemaResult<Series<K>> {
    if let Some(n) = get_opt(v, "nvars") {
        let n = as_usize(n, &child(pointer, "nvars"))?;
        if n != nvars {
            return Err(schema_err(
                &child(pointer, "nvars"),
                format!("series has {n} variables, expected {nvars}"),
            ));
        }
    }
    if let Some(t) = get_opt(v, "truncation") {
        let t = as_usize(t, &child(pointer, "truncation"))?;
        if t as u32 != trunc {
            return Err(schema_err(
                &child(pointer, "truncation"),
                format!("series truncation {t} differs from manifest truncation {trunc}"),
            ));
        }
    }
    let tp = child(pointer, "terms");
    let terms = as_array(get(v, pointer, "terms")?, &tp)?;
    let mut s = Series::zero(nvars, trunc);
    for (k, t) in terms.iter().enumerate() {
        let p = child(&tp, k);
        let q = exps_from_json(get(t, &p, "exp")?, &child(&p, "exp"), nvars)?;
        if q.degree() > trunc {
            return Err(schema_err(
                &child(&p, "exp"),
                format!("degree {} exceeds truncation {trunc}", q.degree()),
            ));
        }
        let c: K = coeff_from_json(t, &p)?;
        s.add_term(q, c);
    }
    Ok(s)
}

/// A germ is an array of component series.
pub fn germ_from_json<K: Coeff>(
    v: &Value,
    pointer: &str,
    nvars: usize,
    trunc: u32,
) -> SchemaResult<Germ<K>> {
    let a = as_array(v, pointer)?;
    if a.len() != nvars {
        return Err(schema_err(
            pointer,
            format!("germ has {} components, expected {nvars}", a.len()),
        ));
    }
    let comps = a
        .iter()
        .enumerate()
        .map(|(k, s)| series_from_json(s, &child(pointer, k), nvars, trunc))
        .collect::<SchemaResult<Vec<_>>>()?;
    Germ::new(comps).map_err(|e| schema_err(pointer, e.to_string()))
}

pub fn matrix_from_json<K: Coeff>(
    v: &Value,
    pointer: &str,
    rows: usize,
    cols: usize,
) -> SchemaResult<Mat<K>> {
    let a = as_array(v, pointer)?;
    if a.len() != rows {
        return Err(schema_err(
            pointer,
            format!("matrix has {} rows, expected {rows}", a.len()),
        ));
    }
    let mut out = Vec::with_capacity(rows);
    for (i, r) in a.iter().enumerate() {
        let p = child(pointer, i);
        let r = as_array(r, &p)?;
        if r.len() != cols {
            return Err(schema_err(
                &p,
                format!("row has {} entries, expected {cols}", r.len()),
            ));
        }
        out.push(
            r.iter()
                .enumerate()
                .map(|(j, x)| coeff_from_json(x, &child(&p, j)))
                .collect::<SchemaResult<Vec<K>>>()?,
        );
    }
    Ok(Mat::from_rows(out))
}

/// `{"generators": [[..], ..]}` or a bare array of exponent vectors.
pub fn ideal_from_json(v: &Value, pointer: &str, nvars: usize) -> SchemaResult<MonomialIdeal> {
    let (gens, gp) = match v {
        Value::Array(_) => (v, pointer.to_string()),
        _ => {
            if let Some(n) = get_opt(v, "nvars") {
                let n = as_usize(n, &child(pointer, "nvars"))?;
                if n != nvars {
                    return Err(schema_err(
                        &child(pointer, "nvars"),
                        format!("ideal has {n} variables, expected {nvars}"),
                    ));
                }
            }
            (get(v, pointer, "generators")?, child(pointer, "generators"))
        }
    };
    let gens = as_array(gens, &gp)?
        .iter()
        .enumerate()
        .map(|(k, g)| exps_from_json(g, &child(&gp, k), nvars))
        .collect::<SchemaResult<Vec<_>>>()?;
    MonomialIdeal::new(nvars, gens).map_err(|e| schema_err(pointer, e.to_string()))
}

/// `{"mode": "exact"|"lattice"|"numeric", "relations": .., "epsilon": ..}`;
/// `rel_len` is the required length of each relation.
pub fn oracle_from_json(v: &Value, pointer: &str, rel_len: usize) -> SchemaResult<OracleMode> {
    let mp = child(pointer, "mode");
    match get(v, pointer, "mode")?.as_str() {
        Some("exact") => Ok(OracleMode::Exact),
        Some("numeric") => {
            let ep = child(pointer, "epsilon");
            let e = get(v, pointer, "epsilon")?
                .as_f64()
                .filter(|e| *e > 0.0)
                .ok_or_else(|| schema_err(&ep, "expected a positive number"))?;
            Ok(OracleMode::Numeric { epsilon: e })
        }
        Some("lattice") => {
            let rp = child(pointer, "relations");
            let rels = match get_opt(v, "relations") {
                None => Vec::new(),
                Some(r) => as_array(r, &rp)?
                    .iter()
                    .enumerate()
                    .map(|(k, r)| {
                        let p = child(&rp, k);
                        let a = as_array(r, &p)?;
                        if a.len() != rel_len {
                            return Err(schema_err(
                                &p,
                                format!("relation has length {}, expected {rel_len}", a.len()),
                            ));
                        }
                        a.iter()
                            .enumerate()
                            .map(|(j, x)| {
                                x.as_i64()
                                    .ok_or_else(|| schema_err(&child(&p, j), "expected an integer"))
                            })
                            .collect()
                    })
                    .collect::<SchemaResult<Vec<Vec<i64>>>>()?,
            };
            Ok(OracleMode::Lattice { relations: rels })
        }
        _ => Err(schema_err(
            &mp,
            "expected \"exact\", \"lattice\" or \"numeric\"",
        )),
    }
}

/// Builds an object from key/value pairs (keys end up sorted).
pub fn object(pairs: Vec<(&str, Value)>) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        m.insert(k.to_string(), v);
    }
    Value::Object(m)
}
