//! File formats: CSV data with a schema sidecar, selection bundles as
//! structured text, and small CSV renderers for audit artifacts.
//!
//! The schema sidecar maps each CSV column name to one of
//! `continuous | ordered:<c> | unordered:<c> | treatment | outcome`,
//! one `name = role` line per column. `#` starts a comment.

use crate::data::{
    AlgorithmChoice, BackendKind, Column, Dataset, IndexSet, Provenance, SelectionBundle,
    VariableKind,
};
use crate::error::{Error, Result};
use ndarray::Array2;
use std::collections::BTreeMap;
use std::path::Path;

/// Role a CSV column plays according to the schema sidecar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRole {
    Covariate(VariableKind),
    Treatment,
    Outcome,
    /// Simulation-mode potential outcomes.
    PotentialY0,
    PotentialY1,
}

/// Parsed schema sidecar: column name -> role, in file order.
#[derive(Debug, Clone)]
pub struct Schema {
    pub roles: Vec<(String, ColumnRole)>,
}

fn parse_role(value: &str) -> Result<ColumnRole> {
    let v = value.trim();
    if let Some(rest) = v.strip_prefix("ordered:") {
        let c: u32 = rest
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("bad category count '{rest}'")))?;
        return Ok(ColumnRole::Covariate(VariableKind::OrderedDiscrete { categories: c }));
    }
    if let Some(rest) = v.strip_prefix("unordered:") {
        let c: u32 = rest
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("bad category count '{rest}'")))?;
        return Ok(ColumnRole::Covariate(VariableKind::UnorderedDiscrete { categories: c }));
    }
    match v {
        "continuous" => Ok(ColumnRole::Covariate(VariableKind::Continuous)),
        "treatment" => Ok(ColumnRole::Treatment),
        "outcome" => Ok(ColumnRole::Outcome),
        "potential0" => Ok(ColumnRole::PotentialY0),
        "potential1" => Ok(ColumnRole::PotentialY1),
        other => Err(Error::Schema(format!(
            "unknown role '{other}' (expected continuous, ordered:<c>, unordered:<c>, \
             treatment, outcome, potential0, potential1)"
        ))),
    }
}

/// Parse `key = value` lines, ignoring blanks and `#` comments.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Schema(format!("line {}: expected 'name = value', got '{line}'", lineno + 1))
        })?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut roles = Vec::new();
        let mut seen = BTreeMap::new();
        for (name, value) in parse_kv_lines(text)? {
            if seen.insert(name.clone(), ()).is_some() {
                return Err(Error::Schema(format!("column '{name}' declared twice")));
            }
            roles.push((name, parse_role(&value)?));
        }
        let n_t = roles.iter().filter(|(_, r)| *r == ColumnRole::Treatment).count();
        let n_y = roles.iter().filter(|(_, r)| *r == ColumnRole::Outcome).count();
        if n_t != 1 {
            return Err(Error::Schema(format!("expected exactly one treatment column, got {n_t}")));
        }
        if n_y != 1 {
            return Err(Error::Schema(format!("expected exactly one outcome column, got {n_y}")));
        }
        Ok(Schema { roles })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    fn role_of(&self, name: &str) -> Option<&ColumnRole> {
        self.roles.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }
}

fn parse_field(path: &str, row: usize, col: &str, raw: &str) -> Result<f64> {
    let v = raw.trim();
    if v.is_empty() || v.eq_ignore_ascii_case("na") || v.eq_ignore_ascii_case("nan") {
        return Err(Error::MissingValue { column: col.to_string(), row });
    }
    v.parse::<f64>().map_err(|_| Error::Csv {
        path: path.to_string(),
        message: format!("row {row}, column '{col}': cannot parse '{v}' as a number"),
    })
}

/// Read a headered CSV and its schema sidecar into a validated dataset.
pub fn read_dataset(data_path: &Path, schema: &Schema) -> Result<Dataset> {
    let path_str = data_path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(data_path)
        .map_err(|e| Error::Csv { path: path_str.clone(), message: e.to_string() })?;

    let headers: Vec<String> =
        reader
            .headers()
            .map_err(|e| Error::Csv { path: path_str.clone(), message: e.to_string() })?
            .iter()
            .map(|s| s.to_string())
            .collect();

    // Every header must be covered by the schema; covariate order follows the CSV.
    let mut cov_cols: Vec<(usize, Column)> = Vec::new();
    let mut t_col = None;
    let mut y_col = None;
    let mut y0_col = None;
    let mut y1_col = None;
    for (j, name) in headers.iter().enumerate() {
        match schema.role_of(name) {
            Some(ColumnRole::Covariate(kind)) => cov_cols.push((j, Column::new(name, *kind))),
            Some(ColumnRole::Treatment) => t_col = Some(j),
            Some(ColumnRole::Outcome) => y_col = Some(j),
            Some(ColumnRole::PotentialY0) => y0_col = Some(j),
            Some(ColumnRole::PotentialY1) => y1_col = Some(j),
            None => {
                return Err(Error::Schema(format!(
                    "data column '{name}' is not described by the schema"
                )))
            }
        }
    }
    let t_col = t_col.ok_or_else(|| Error::Schema("treatment column missing from data".into()))?;
    let y_col = y_col.ok_or_else(|| Error::Schema("outcome column missing from data".into()))?;

    let expected = headers.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::Csv { path: path_str.clone(), message: e.to_string() })?;
        if record.len() != expected {
            return Err(Error::NotRectangular {
                row: row_idx,
                got: record.len(),
                expected,
            });
        }
        let mut vals = Vec::with_capacity(expected);
        for (j, raw) in record.iter().enumerate() {
            vals.push(parse_field(&path_str, row_idx, &headers[j], raw)?);
        }
        rows.push(vals);
    }

    let n = rows.len();
    let p = cov_cols.len();
    let mut x = Array2::zeros((n, p));
    for (i, row) in rows.iter().enumerate() {
        for (k, (j, _)) in cov_cols.iter().enumerate() {
            x[(i, k)] = row[*j];
        }
    }
    let treatment: Vec<f64> = rows.iter().map(|r| r[t_col]).collect();
    let outcome: Vec<f64> = rows.iter().map(|r| r[y_col]).collect();
    let potential = match (y0_col, y1_col) {
        (Some(j0), Some(j1)) => Some((
            rows.iter().map(|r| r[j0]).collect(),
            rows.iter().map(|r| r[j1]).collect(),
        )),
        (None, None) => None,
        _ => {
            return Err(Error::Schema(
                "potential outcomes need both potential0 and potential1 columns".into(),
            ))
        }
    };

    let columns = cov_cols.into_iter().map(|(_, c)| c).collect();
    Dataset::new(columns, x, treatment, outcome, potential)
}

fn set_line(name: &str, set: &Option<IndexSet>, columns: &[Column]) -> String {
    match set {
        Some(s) => format!("{name} = {}\n", s.display_named(columns)),
        None => String::new(),
    }
}

/// Serialize a bundle as structured text, one named set per line.
pub fn bundle_to_text(bundle: &SelectionBundle, columns: &[Column]) -> String {
    let mut out = String::new();
    out.push_str("# selected covariate subsets\n");
    out.push_str(&format!("algorithm = {}\n", bundle.provenance.algorithm));
    out.push_str(&format!("backend = {}\n", bundle.provenance.backend));
    out.push_str(&format!("seed = {}\n", bundle.provenance.master_seed));
    for (k, v) in &bundle.provenance.settings {
        out.push_str(&format!("setting.{k} = {v}\n"));
    }
    for w in &bundle.warnings {
        out.push_str(&format!("# warning: {w}\n"));
    }
    out.push_str(&set_line("x_t", &bundle.x_t, columns));
    out.push_str(&set_line("q0", &bundle.q0, columns));
    out.push_str(&set_line("q1", &bundle.q1, columns));
    out.push_str(&set_line("x0", &bundle.x0, columns));
    out.push_str(&set_line("x1", &bundle.x1, columns));
    out.push_str(&set_line("z0", &bundle.z0, columns));
    out.push_str(&set_line("z1", &bundle.z1, columns));
    if let Ok(q) = bundle.union_q() {
        out.push_str(&format!("q = {}\n", q.display_named(columns)));
    }
    if let Ok(xy) = bundle.union_x_y() {
        out.push_str(&format!("x_y = {}\n", xy.display_named(columns)));
    }
    if let Ok(z) = bundle.union_z() {
        out.push_str(&format!("z = {}\n", z.display_named(columns)));
    }
    out
}

fn parse_set(value: &str, columns: &[Column]) -> Result<IndexSet> {
    let inner = value
        .trim()
        .strip_prefix('{')
        .and_then(|v| v.strip_suffix('}'))
        .ok_or_else(|| Error::Schema(format!("expected '{{a, b}}' set syntax, got '{value}'")))?;
    let mut members = Vec::new();
    for name in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let idx = columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))?;
        members.push(idx);
    }
    IndexSet::new(members)
}

/// Parse a bundle text file back into named sets resolved against `columns`.
pub fn bundle_from_text(text: &str, columns: &[Column]) -> Result<SelectionBundle> {
    let mut provenance = Provenance {
        algorithm: AlgorithmChoice::Both,
        backend: BackendKind::Kernel,
        settings: Vec::new(),
        master_seed: 0,
    };
    let mut bundle_sets: BTreeMap<String, IndexSet> = BTreeMap::new();
    for (key, value) in parse_kv_lines(text)? {
        match key.as_str() {
            "algorithm" => {
                provenance.algorithm = match value.as_str() {
                    "a" => AlgorithmChoice::A,
                    "b" => AlgorithmChoice::B,
                    "both" => AlgorithmChoice::Both,
                    other => return Err(Error::Schema(format!("unknown algorithm '{other}'"))),
                }
            }
            "backend" => {
                provenance.backend = match value.as_str() {
                    "sdr" => BackendKind::Sdr,
                    "kernel" => BackendKind::Kernel,
                    other => return Err(Error::Schema(format!("unknown backend '{other}'"))),
                }
            }
            "seed" => {
                provenance.master_seed = value
                    .parse()
                    .map_err(|_| Error::Schema(format!("bad seed '{value}'")))?
            }
            k if k.starts_with("setting.") => {
                provenance.settings.push((k["setting.".len()..].to_string(), value));
            }
            "x_t" | "q0" | "q1" | "x0" | "x1" | "z0" | "z1" | "q" | "x_y" | "z" => {
                bundle_sets.insert(key, parse_set(&value, columns)?);
            }
            other => return Err(Error::Schema(format!("unknown bundle key '{other}'"))),
        }
    }
    let mut bundle = SelectionBundle::empty(provenance);
    bundle.x_t = bundle_sets.remove("x_t");
    bundle.q0 = bundle_sets.remove("q0");
    bundle.q1 = bundle_sets.remove("q1");
    bundle.x0 = bundle_sets.remove("x0");
    bundle.x1 = bundle_sets.remove("x1");
    bundle.z0 = bundle_sets.remove("z0");
    bundle.z1 = bundle_sets.remove("z1");
    Ok(bundle)
}

/// Look up a named set (component or union) in a parsed bundle.
pub fn bundle_set(bundle: &SelectionBundle, name: &str) -> Result<IndexSet> {
    let lower = name.to_ascii_lowercase();
    match lower.as_str() {
        "x_t" | "xt" => bundle
            .x_t
            .clone()
            .ok_or_else(|| Error::MissingBundleSet { missing: "X_T".into(), algorithm: 'A' }),
        "q0" => bundle
            .q0
            .clone()
            .ok_or_else(|| Error::MissingBundleSet { missing: "Q_0".into(), algorithm: 'A' }),
        "q1" => bundle
            .q1
            .clone()
            .ok_or_else(|| Error::MissingBundleSet { missing: "Q_1".into(), algorithm: 'A' }),
        "x0" => bundle
            .x0
            .clone()
            .ok_or_else(|| Error::MissingBundleSet { missing: "X_0".into(), algorithm: 'B' }),
        "x1" => bundle
            .x1
            .clone()
            .ok_or_else(|| Error::MissingBundleSet { missing: "X_1".into(), algorithm: 'B' }),
        "z0" => bundle
            .z0
            .clone()
            .ok_or_else(|| Error::MissingBundleSet { missing: "Z_0".into(), algorithm: 'B' }),
        "z1" => bundle
            .z1
            .clone()
            .ok_or_else(|| Error::MissingBundleSet { missing: "Z_1".into(), algorithm: 'B' }),
        "q" => bundle.union_q(),
        "x_y" | "xy" => bundle.union_x_y(),
        "z" => bundle.union_z(),
        other => Err(Error::InvalidArgument(format!(
            "unknown set name '{other}' (expected x_t, q0, q1, x0, x1, z0, z1, q, x_y, z)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_roundtrip() {
        let text = "# demo\nage = continuous\nedu = ordered:3\nsoc = unordered:2\n\
                    treat = treatment\nhosp = outcome\n";
        let schema = Schema::parse(text).unwrap();
        assert_eq!(schema.roles.len(), 5);
        assert_eq!(
            schema.role_of("edu"),
            Some(&ColumnRole::Covariate(VariableKind::OrderedDiscrete { categories: 3 }))
        );
    }

    #[test]
    fn schema_requires_one_treatment() {
        let text = "age = continuous\nhosp = outcome\n";
        assert!(Schema::parse(text).is_err());
    }

    #[test]
    fn csv_roundtrip_revalidates_identically() {
        let dir = std::env::temp_dir().join(format!("covsel-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let data = dir.join("d.csv");
        let schema_path = dir.join("d.schema");
        std::fs::write(&data, "x1,x2,treat,y\n0.5,1,1,2.0\n-0.25,0,0,1.5\n1.5,1,1,0.0\n2.5,0,0,1.0\n")
            .unwrap();
        std::fs::write(
            &schema_path,
            "x1 = continuous\nx2 = unordered:2\ntreat = treatment\ny = outcome\n",
        )
        .unwrap();
        let schema = Schema::load(&schema_path).unwrap();
        let ds = read_dataset(&data, &schema).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.treated(), &[true, false, true, false]);

        // Serialize back out and re-validate: identical content.
        let mut text = String::from("x1,x2,treat,y\n");
        for i in 0..ds.n() {
            text.push_str(&format!(
                "{},{},{},{}\n",
                ds.x()[(i, 0)],
                ds.x()[(i, 1)],
                if ds.treated()[i] { 1 } else { 0 },
                ds.y()[i]
            ));
        }
        let data2 = dir.join("d2.csv");
        std::fs::write(&data2, text).unwrap();
        let ds2 = read_dataset(&data2, &schema).unwrap();
        assert_eq!(ds.x(), ds2.x());
        assert_eq!(ds.y(), ds2.y());
        assert_eq!(ds.treated(), ds2.treated());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn missing_values_rejected() {
        let dir = std::env::temp_dir().join(format!("covsel-io-na-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let data = dir.join("d.csv");
        std::fs::write(&data, "x1,treat,y\n0.5,1,2.0\nNA,0,1.5\n").unwrap();
        let schema =
            Schema::parse("x1 = continuous\ntreat = treatment\ny = outcome\n").unwrap();
        let err = read_dataset(&data, &schema).unwrap_err();
        assert!(matches!(err, Error::MissingValue { row: 1, .. }));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bundle_text_roundtrip() {
        let columns = vec![
            Column::new("a", VariableKind::Continuous),
            Column::new("b", VariableKind::binary()),
            Column::new("c", VariableKind::Continuous),
        ];
        let prov = Provenance {
            algorithm: AlgorithmChoice::Both,
            backend: BackendKind::Kernel,
            settings: vec![("alpha".into(), "0.1".into())],
            master_seed: 99,
        };
        let mut b = SelectionBundle::empty(prov);
        b.x_t = Some(IndexSet::new(vec![0, 2]).unwrap());
        b.q0 = Some(IndexSet::new(vec![0]).unwrap());
        b.q1 = Some(IndexSet::empty());
        let text = bundle_to_text(&b, &columns);
        assert!(text.contains("x_t = {a, c}"));
        assert!(text.contains("q = {a}"));
        let parsed = bundle_from_text(&text, &columns).unwrap();
        assert_eq!(parsed.x_t.unwrap().members(), &[0, 2]);
        assert_eq!(parsed.provenance.master_seed, 99);
        assert_eq!(bundle_set(&parsed, "q").unwrap().members(), &[0]);
        assert!(bundle_set(&parsed, "z").is_err());
    }
}
