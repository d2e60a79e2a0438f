//! Benchmark datasets: exhaustive lookup tables from assignments to measurements.
//!
//! On disk a dataset is a single JSON manifest:
//!
//! ```json
//! {
//!   "name": "toy",
//!   "provenance": "synthetic",
//!   "parameters": [{"name": "base", "options": ["K2CO3", "Cs2CO3"]}],
//!   "objectives": [{"name": "yield", "goal": "maximize"}],
//!   "rows": [{"assignment": {"base": "K2CO3"}, "values": {"yield": 12.5}}]
//! }
//! ```
//!
//! Rows sharing an assignment form a replicate group.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::aggregate::{aggregate_group, AggregateError, AggregationPolicy, Measurement};
use crate::space::{Assignment, Goal, ObjectiveSpec, Parameter, ParameterSpace, SpaceError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

fn invalid(line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Invalid {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkDataset {
    pub name: String,
    pub provenance: String,
    space: ParameterSpace,
    objectives: Vec<ObjectiveSpec>,
    /// Keyed by the assignment's lexicographic rank in the space.
    table: BTreeMap<usize, Vec<Measurement>>,
}

impl BenchmarkDataset {
    pub fn new(
        name: impl Into<String>,
        space: ParameterSpace,
        objectives: Vec<ObjectiveSpec>,
    ) -> Result<Self, DatasetError> {
        validate_objectives(&objectives).map_err(|m| invalid(0, m))?;
        Ok(Self {
            name: name.into(),
            provenance: String::new(),
            space,
            objectives,
            table: BTreeMap::new(),
        })
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    /// Appends one measurement to the group for `assignment`.
    pub fn insert(&mut self, assignment: &Assignment, measurement: Measurement) -> Result<(), DatasetError> {
        let idx = self
            .space
            .indices_of(assignment)
            .map_err(|e| invalid(0, e.to_string()))?;
        if measurement.len() != self.objectives.len() || measurement.iter().any(|v| !v.is_finite()) {
            return Err(invalid(
                0,
                format!("measurement must hold {} finite values", self.objectives.len()),
            ));
        }
        self.table.entry(self.space.rank(&idx)).or_default().push(measurement);
        Ok(())
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn objectives(&self) -> &[ObjectiveSpec] {
        &self.objectives
    }

    /// Number of assignments with at least one measurement.
    pub fn measured_keys(&self) -> usize {
        self.table.len()
    }

    pub fn measurement_count(&self) -> usize {
        self.table.values().map(Vec::len).sum()
    }

    /// All measurements for `assignment`; `Ok(None)` is the missing-marker.
    pub fn lookup(&self, assignment: &Assignment) -> Result<Option<&[Measurement]>, SpaceError> {
        let idx = self.space.indices_of(assignment)?;
        Ok(self.lookup_rank(self.space.rank(&idx)))
    }

    pub fn lookup_rank(&self, rank: usize) -> Option<&[Measurement]> {
        self.table.get(&rank).map(Vec::as_slice)
    }

    /// Measured groups in rank order.
    pub fn groups(&self) -> impl Iterator<Item = (usize, &[Measurement])> {
        self.table.iter().map(|(&r, m)| (r, m.as_slice()))
    }

    /// One aggregated scalar per measured assignment, in rank order.
    pub fn aggregated(&self, policy: &AggregationPolicy) -> Result<Vec<(usize, f64)>, AggregateError> {
        self.groups()
            .map(|(r, m)| aggregate_group(m, policy, 0).map(|v| (r, v)))
            .collect()
    }

    /// Best aggregated scalar over the whole table under the reporting goal.
    pub fn true_best(&self, policy: &AggregationPolicy) -> Result<Option<(usize, f64)>, AggregateError> {
        let goal = policy.reporting_goal(&self.objectives);
        Ok(self
            .aggregated(policy)?
            .into_iter()
            .fold(None, |best: Option<(usize, f64)>, (r, v)| match best {
                Some((_, b)) if !goal.better(v, b) => best,
                _ => Some((r, v)),
            }))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Parses and validates a manifest; errors carry the 1-based line of the
    /// first violation.
    pub fn from_json_str(text: &str) -> Result<Self, DatasetError> {
        let raw: RawManifest =
            serde_json::from_str(text).map_err(|e| invalid(e.line(), format!("malformed manifest: {e}")))?;
        let lines = ManifestLines::scan(text);

        let space = ParameterSpace::new(raw.parameters)
            .map_err(|e| invalid(lines.key("parameters"), e.to_string()))?;
        validate_objectives(&raw.objectives).map_err(|m| invalid(lines.key("objectives"), m))?;
        if raw.rows.is_empty() {
            return Err(invalid(lines.key("rows"), "dataset has no rows"));
        }

        let mut table: BTreeMap<usize, Vec<Measurement>> = BTreeMap::new();
        for (i, row) in raw.rows.iter().enumerate() {
            let line = lines.row(i);
            let mut pairs = Vec::with_capacity(row.assignment.len());
            for (k, v) in &row.assignment {
                let label = v
                    .as_str()
                    .ok_or_else(|| invalid(line, format!("row {}: option for `{k}` must be a string", i + 1)))?;
                pairs.push((k.as_str(), label));
            }
            let assignment = space
                .assignment_from_pairs(pairs)
                .map_err(|e| invalid(line, format!("row {}: {e}", i + 1)))?;
            if row.assignment.len() != space.len() {
                return Err(invalid(line, format!("row {}: assignment repeats a parameter", i + 1)));
            }
            let idx = space
                .indices_of(&assignment)
                .map_err(|e| invalid(line, format!("row {}: {e}", i + 1)))?;
            let mut measurement = Vec::with_capacity(raw.objectives.len());
            for obj in &raw.objectives {
                let v = row
                    .values
                    .get(&obj.name)
                    .ok_or_else(|| invalid(line, format!("row {}: missing value for objective `{}`", i + 1, obj.name)))?;
                let v = v
                    .as_f64()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| invalid(line, format!("row {}: objective `{}` is not a finite number", i + 1, obj.name)))?;
                measurement.push(v);
            }
            if let Some(extra) = row.values.keys().find(|k| !raw.objectives.iter().any(|o| &o.name == *k)) {
                return Err(invalid(line, format!("row {}: unknown objective `{extra}`", i + 1)));
            }
            table.entry(space.rank(&idx)).or_default().push(measurement);
        }

        Ok(Self {
            name: raw.name,
            provenance: raw.provenance.unwrap_or_default(),
            space,
            objectives: raw.objectives,
            table,
        })
    }

    /// Serializes to the manifest format; rows are emitted in rank order.
    pub fn to_json_value(&self) -> Value {
        let rows: Vec<Value> = self
            .table
            .iter()
            .flat_map(|(&rank, group)| {
                let labels = self.space.assignment_at(rank);
                group.iter().map(move |m| {
                    let assignment: Map<String, Value> = self
                        .space
                        .parameters()
                        .iter()
                        .zip(labels.labels())
                        .map(|(p, l)| (p.name.clone(), Value::String(l.clone())))
                        .collect();
                    let values: Map<String, Value> = self
                        .objectives
                        .iter()
                        .zip(m)
                        .map(|(o, v)| (o.name.clone(), Value::from(*v)))
                        .collect();
                    serde_json::json!({ "assignment": assignment, "values": values })
                })
            })
            .collect();
        serde_json::json!({
            "name": self.name,
            "provenance": self.provenance,
            "parameters": self.space.parameters(),
            "objectives": self.objectives,
            "rows": rows,
        })
    }

    pub fn to_json_string(&self) -> String {
        // one row per line keeps diagnostics line-addressable
        let v = self.to_json_value();
        let mut out = String::from("{\n");
        let head = ["name", "provenance", "parameters", "objectives"];
        for key in head {
            out.push_str(&format!("  \"{key}\": {},\n", v[key]));
        }
        out.push_str("  \"rows\": [\n");
        let rows = v["rows"].as_array().map(Vec::as_slice).unwrap_or_default();
        for (i, row) in rows.iter().enumerate() {
            out.push_str("    ");
            out.push_str(&row.to_string());
            out.push_str(if i + 1 < rows.len() { ",\n" } else { "\n" });
        }
        out.push_str("  ]\n}\n");
        out
    }
}

fn validate_objectives(objectives: &[ObjectiveSpec]) -> Result<(), String> {
    if objectives.is_empty() {
        return Err("at least one objective is required".into());
    }
    let mut seen = HashSet::new();
    for o in objectives {
        if !seen.insert(o.name.as_str()) {
            return Err(format!("duplicate objective `{}`", o.name));
        }
        if let Some(t) = o.tolerance {
            if !(0.0..=1.0).contains(&t) {
                return Err(format!("objective `{}` tolerance {t} outside [0, 1]", o.name));
            }
        }
    }
    Ok(())
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    name: String,
    #[serde(default)]
    provenance: Option<String>,
    parameters: Vec<Parameter>,
    objectives: Vec<ObjectiveSpec>,
    rows: Vec<RawRow>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    assignment: Map<String, Value>,
    values: Map<String, Value>,
}

/// Line positions of top-level keys and of each element of the `rows` array.
struct ManifestLines {
    keys: HashMap<String, usize>,
    rows: Vec<usize>,
}

impl ManifestLines {
    fn scan(text: &str) -> Self {
        let mut keys = HashMap::new();
        let mut rows = Vec::new();
        let mut depth = 0usize;
        let mut line = 1usize;
        let mut in_string = false;
        let mut escaped = false;
        let mut buf = String::new();
        let mut last_string: Option<(String, usize)> = None;
        let mut pending_key: Option<String> = None;
        let mut rows_depth: Option<usize> = None;

        for c in text.chars() {
            if c == '\n' {
                line += 1;
            }
            if in_string {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == '"' {
                    in_string = false;
                    last_string = Some((std::mem::take(&mut buf), line));
                    continue;
                }
                if depth == 1 {
                    buf.push(c);
                }
                continue;
            }
            match c {
                '"' => {
                    in_string = true;
                    buf.clear();
                }
                ':' if depth == 1 => {
                    if let Some((k, l)) = last_string.take() {
                        keys.entry(k.clone()).or_insert(l);
                        pending_key = Some(k);
                    }
                }
                ',' if depth == 1 => pending_key = None,
                '{' | '[' => {
                    if c == '{' && rows_depth == Some(depth) {
                        rows.push(line);
                    }
                    depth += 1;
                    if c == '[' && depth == 2 && pending_key.as_deref() == Some("rows") {
                        rows_depth = Some(2);
                    }
                }
                '}' | ']' => {
                    depth = depth.saturating_sub(1);
                    if matches!(rows_depth, Some(d) if depth < d) {
                        rows_depth = None;
                    }
                }
                _ => {}
            }
        }
        Self { keys, rows }
    }

    fn key(&self, key: &str) -> usize {
        self.keys.get(key).copied().unwrap_or(1)
    }

    fn row(&self, i: usize) -> usize {
        self.rows.get(i).copied().unwrap_or_else(|| self.key("rows"))
    }
}

/// Convenience builder used by tests and fixtures.
pub fn dataset_from_fn(
    name: &str,
    space: ParameterSpace,
    objectives: Vec<ObjectiveSpec>,
    mut f: impl FnMut(&[usize]) -> Vec<Measurement>,
) -> BenchmarkDataset {
    let mut ds = BenchmarkDataset::new(name, space, objectives).expect("valid objectives");
    for rank in 0..ds.space.size() {
        let idx = ds.space.unrank(rank);
        let group = f(&idx);
        if !group.is_empty() {
            ds.table.insert(rank, group);
        }
    }
    ds
}

/// Single maximize objective named `yield`.
pub fn single_objective() -> Vec<ObjectiveSpec> {
    vec![ObjectiveSpec::new("yield", Goal::Maximize)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOY: &str = r#"{
  "name": "toy",
  "parameters": [
    {"name": "base", "options": ["a", "b"]},
    {"name": "solvent", "options": ["x", "y", "z"]}
  ],
  "objectives": [{"name": "yield", "goal": "maximize"}],
  "rows": [
    {"assignment": {"base": "a", "solvent": "x"}, "values": {"yield": 1.5}},
    {"assignment": {"base": "a", "solvent": "x"}, "values": {"yield": 2.5}},
    {"assignment": {"base": "a", "solvent": "x"}, "values": {"yield": 3.5}},
    {"assignment": {"base": "b", "solvent": "z"}, "values": {"yield": 10}}
  ]
}"#;

    fn a(labels: &[&str]) -> Assignment {
        Assignment::new(labels.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn lookup_returns_replicates_or_missing() {
        let ds = BenchmarkDataset::from_json_str(TOY).unwrap();
        assert_eq!(ds.lookup(&a(&["a", "x"])).unwrap().unwrap().len(), 3);
        assert_eq!(ds.lookup(&a(&["b", "y"])).unwrap(), None);
        assert!(ds.lookup(&a(&["a", "w"])).is_err());
        assert_eq!(ds.measured_keys(), 2);
        assert_eq!(ds.measurement_count(), 4);
    }

    #[test]
    fn diagnostics_are_line_numbered() {
        let bad = TOY.replace(r#""solvent": "z"}, "values": {"yield": 10}"#, r#""solvent": "q"}, "values": {"yield": 10}"#);
        match BenchmarkDataset::from_json_str(&bad) {
            Err(DatasetError::Invalid { line, message }) => {
                assert_eq!(line, 12, "{message}");
                assert!(message.contains("row 4"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = TOY.replace(r#""yield": 2.5"#, r#""yield": "high""#);
        assert!(matches!(BenchmarkDataset::from_json_str(&bad), Err(DatasetError::Invalid { line: 10, .. })));
        let bad = TOY.replace(r#"["a", "b"]"#, r#"["a"]"#);
        assert!(matches!(BenchmarkDataset::from_json_str(&bad), Err(DatasetError::Invalid { line: 3, .. })));
        assert!(matches!(
            BenchmarkDataset::from_json_str("{\n\"name\": 3"),
            Err(DatasetError::Invalid { line: 2, .. })
        ));
    }

    #[test]
    fn true_best_respects_goal() {
        let ds = BenchmarkDataset::from_json_str(TOY).unwrap();
        let p = AggregationPolicy::default();
        assert_eq!(ds.true_best(&p).unwrap().unwrap().1, 10.0);
        let min = TOY.replace("maximize", "minimize");
        let ds = BenchmarkDataset::from_json_str(&min).unwrap();
        assert_eq!(ds.true_best(&p).unwrap().unwrap().1, 1.5);
    }

    proptest! {
        #[test]
        fn manifest_roundtrip(values in proptest::collection::vec(proptest::option::of(proptest::collection::vec(-1e6f64..1e6, 1..4)), 6)) {
            let space = ParameterSpace::new(vec![
                Parameter::new("p", ["a", "b"]),
                Parameter::new("q", ["x", "y", "z"]),
            ]).unwrap();
            let ds = dataset_from_fn("rt", space, single_objective(), |idx| {
                values[idx[0] * 3 + idx[1]].clone().unwrap_or_default().into_iter().map(|v| vec![v]).collect()
            });
            prop_assume!(ds.measured_keys() > 0);
            let back = BenchmarkDataset::from_json_str(&ds.to_json_string()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
