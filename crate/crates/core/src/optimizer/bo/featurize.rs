//! Encodings of categorical assignments for the surrogate model.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::optimizer::OptimizerError;
use crate::space::ParameterSpace;

/// Upper bound on retained descriptor features per parameter.
pub const MAX_FEATURES_PER_PARAMETER: usize = 10;
/// Pairwise |correlation| above which the lower-variance feature is dropped.
pub const CORRELATION_CUTOFF: f64 = 0.95;
/// Parameters with fewer options skip the correlation filter.
pub const FEW_OPTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturizationMode {
    #[default]
    OneHot,
    Descriptors,
}

impl std::str::FromStr for FeaturizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one_hot" | "ohe" | "onehot" => Ok(Self::OneHot),
            "descriptors" | "desc" => Ok(Self::Descriptors),
            other => Err(format!("unknown featurization `{other}` (one_hot|descriptors)")),
        }
    }
}

impl std::fmt::Display for FeaturizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::OneHot => "one_hot",
            Self::Descriptors => "descriptors",
        })
    }
}

/// Per-option numeric features for one categorical parameter.
/// `None` marks a non-numeric or missing cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorTable {
    pub features: Vec<String>,
    pub rows: HashMap<String, Vec<Option<f64>>>,
}

impl DescriptorTable {
    /// Reads a CSV whose first column is the option label and whose remaining
    /// columns are named features.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, OptimizerError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| OptimizerError::Config(format!("descriptor header: {e}")))?
            .clone();
        if headers.len() < 2 {
            return Err(OptimizerError::Config("descriptor table needs a label and at least one feature column".into()));
        }
        let features = headers.iter().skip(1).map(str::to_string).collect();
        let mut rows = HashMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| OptimizerError::Config(format!("descriptor row: {e}")))?;
            let label = rec.get(0).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .skip(1)
                .map(|c| c.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect();
            rows.insert(label, values);
        }
        Ok(Self { features, rows })
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, OptimizerError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| OptimizerError::Config(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    /// Encoded row per option, in option order.
    pub rows: Vec<Vec<f64>>,
    /// Retained descriptor column indices (empty for one-hot).
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    /// (mean, stddev) per retained feature, across this parameter's options.
    pub standardization: Vec<(f64, f64)>,
}

impl FeatureBlock {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Featurization {
    pub mode: FeaturizationMode,
    pub blocks: Vec<FeatureBlock>,
}

impl Featurization {
    pub fn one_hot(space: &ParameterSpace) -> Self {
        let blocks = space
            .option_counts()
            .into_iter()
            .map(|n| FeatureBlock {
                rows: (0..n)
                    .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect(),
                selected: Vec::new(),
                selected_names: Vec::new(),
                standardization: Vec::new(),
            })
            .collect();
        Self {
            mode: FeaturizationMode::OneHot,
            blocks,
        }
    }

    /// Filters and standardizes descriptor tables, one per parameter in space
    /// order. Only the descriptors are consulted, never objective data.
    pub fn descriptors(space: &ParameterSpace, tables: &[DescriptorTable]) -> Result<Self, OptimizerError> {
        if tables.len() != space.len() {
            return Err(OptimizerError::Config(format!(
                "expected {} descriptor tables, got {}",
                space.len(),
                tables.len()
            )));
        }
        let blocks = space
            .parameters()
            .iter()
            .zip(tables)
            .map(|(p, table)| {
                let raw = p
                    .options
                    .iter()
                    .map(|o| {
                        table.rows.get(o).cloned().ok_or_else(|| {
                            OptimizerError::Config(format!("option `{o}` of `{}` missing from descriptor table", p.name))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let selected = select_features(&raw);
                if selected.is_empty() {
                    return Err(OptimizerError::Config(format!(
                        "no informative descriptor for parameter `{}`",
                        p.name
                    )));
                }
                let columns: Vec<Vec<f64>> = selected
                    .iter()
                    .map(|&f| raw.iter().map(|r| r[f].unwrap_or(f64::NAN)).collect())
                    .collect();
                let standardization: Vec<(f64, f64)> = columns.iter().map(|c| mean_std(c)).collect();
                let rows = (0..p.options.len())
                    .map(|o| {
                        columns
                            .iter()
                            .zip(&standardization)
                            .map(|(c, (m, s))| (c[o] - m) / s)
                            .collect()
                    })
                    .collect();
                Ok(FeatureBlock {
                    rows,
                    selected_names: selected.iter().map(|&f| table.features.get(f).cloned().unwrap_or_default()).collect(),
                    selected,
                    standardization,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            mode: FeaturizationMode::Descriptors,
            blocks,
        })
    }

    pub fn build(
        space: &ParameterSpace,
        mode: FeaturizationMode,
        tables: Option<&[DescriptorTable]>,
    ) -> Result<Self, OptimizerError> {
        match (mode, tables) {
            (FeaturizationMode::OneHot, _) => Ok(Self::one_hot(space)),
            (FeaturizationMode::Descriptors, Some(t)) => Self::descriptors(space, t),
            (FeaturizationMode::Descriptors, None) => {
                Err(OptimizerError::Config("descriptor featurization needs descriptor tables".into()))
            }
        }
    }

    pub fn width(&self) -> usize {
        self.blocks.iter().map(FeatureBlock::width).sum()
    }

    /// Column range of each parameter's block in an encoded vector.
    pub fn block_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.blocks
            .iter()
            .map(|b| {
                let r = start..start + b.width();
                start = r.end;
                r
            })
            .collect()
    }

    pub fn encode(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for (b, &i) in self.blocks.iter().zip(indices) {
            out.extend_from_slice(&b.rows[i]);
        }
        out
    }
}

fn mean_std(column: &[f64]) -> (f64, f64) {
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let n = a.len() as f64;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    cov / (sa * sb)
}

/// Indices of retained descriptor columns, highest variance first.
fn select_features(raw: &[Vec<Option<f64>>]) -> Vec<usize> {
    let n_features = raw.first().map_or(0, Vec::len);
    // numeric, finite and non-constant columns with their variance
    let mut candidates: Vec<(usize, f64, Vec<f64>)> = (0..n_features)
        .filter_map(|f| {
            let col: Option<Vec<f64>> = raw.iter().map(|r| r.get(f).copied().flatten()).collect();
            let col = col?;
            let (_, sd) = mean_std(&col);
            (sd > 1e-12 * col.iter().fold(1.0f64, |m, v| m.max(v.abs()))).then(|| (f, sd * sd, col))
        })
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    if raw.len() < FEW_OPTIONS {
        return candidates
            .into_iter()
            .take(MAX_FEATURES_PER_PARAMETER)
            .map(|c| c.0)
            .collect();
    }

    let mut kept: Vec<(usize, Vec<f64>)> = Vec::new();
    for (f, _, col) in candidates {
        if kept.iter().all(|(_, k)| correlation(&col, k).abs() <= CORRELATION_CUTOFF) {
            kept.push((f, col));
        }
    }
    kept.into_iter().take(MAX_FEATURES_PER_PARAMETER).map(|k| k.0).collect()
}
