use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::CohortError;

/// Maximum number of columns in one (site scope, aggregation, region) group.
pub const MAX_GROUP_COLUMNS: usize = 102;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!(concat!("unknown ", stringify!($name), " '{}'"), s)),
                }
            }
        }
    };
}

string_enum!(SiteScope { All => "all", Omentum => "omentum", Pelvis => "pelvis" });
string_enum!(Aggregation { Largest => "largest", Merged => "merged" });
string_enum!(Region { Full => "full", Rim => "rim" });

/// Provenance of a feature column, encoded in its name as
/// `<site_scope>.<aggregation>.<region>.<family>.<feature>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnMeta {
    pub site_scope: SiteScope,
    pub aggregation: Aggregation,
    pub region: Region,
    pub family: String,
    pub feature: String,
}

impl ColumnMeta {
    pub fn parse(name: &str) -> Option<ColumnMeta> {
        let parts: Vec<&str> = name.splitn(5, '.').collect();
        if parts.len() != 5 {
            return None;
        }
        Some(ColumnMeta {
            site_scope: parts[0].parse().ok()?,
            aggregation: parts[1].parse().ok()?,
            region: parts[2].parse().ok()?,
            family: parts[3].to_string(),
            feature: parts[4].to_string(),
        })
    }

    pub fn group(&self) -> (SiteScope, Aggregation, Region) {
        (self.site_scope, self.aggregation, self.region)
    }

    /// `family.feature`, the catalog key of the column.
    pub fn catalog_name(&self) -> String {
        format!("{}.{}", self.family, self.feature)
    }
}

impl fmt::Display for ColumnMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}.{}.{}.{}",
            self.site_scope, self.aggregation, self.region, self.family, self.feature
        )
    }
}

/// Patients × features value table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    feature_names: Vec<String>,
    patient_ids: Vec<String>,
    values: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(
        patient_ids: Vec<String>,
        feature_names: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self, CohortError> {
        if values.nrows() != patient_ids.len() || values.ncols() != feature_names.len() {
            return Err(CohortError::Schema(format!(
                "value shape {}x{} does not match {} patients x {} features",
                values.nrows(),
                values.ncols(),
                patient_ids.len(),
                feature_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &feature_names {
            if !seen.insert(n.as_str()) {
                return Err(CohortError::Schema(format!("duplicate feature name '{n}'")));
            }
            if n.contains(',') || n.contains('"') || n.contains('\n') {
                return Err(CohortError::Schema(format!("illegal character in feature name '{n}'")));
            }
        }
        let mut groups: HashMap<_, usize> = HashMap::new();
        for meta in feature_names.iter().filter_map(|n| ColumnMeta::parse(n)) {
            let c = groups.entry(meta.group()).or_default();
            *c += 1;
            if *c > MAX_GROUP_COLUMNS {
                return Err(CohortError::Schema(format!(
                    "more than {MAX_GROUP_COLUMNS} columns in group {:?}",
                    meta.group()
                )));
            }
        }
        let mut pseen = HashSet::new();
        for p in &patient_ids {
            if !pseen.insert(p.as_str()) {
                return Err(CohortError::Schema(format!("duplicate patient id '{p}'")));
            }
        }
        Ok(FeatureMatrix {
            feature_names,
            patient_ids,
            values,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column_meta(&self, j: usize) -> Option<ColumnMeta> {
        ColumnMeta::parse(&self.feature_names[j])
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// Column indices belonging to one provenance group, in column order.
    pub fn group_columns(&self, scope: SiteScope, agg: Aggregation, region: Region) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&j| {
                self.column_meta(j)
                    .map(|m| m.group() == (scope, agg, region))
                    .unwrap_or(false)
            })
            .collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let values = self.values.select_columns(cols);
        FeatureMatrix {
            feature_names: cols.iter().map(|&j| self.feature_names[j].clone()).collect(),
            patient_ids: self.patient_ids.clone(),
            values,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            patient_ids: rows.iter().map(|&i| self.patient_ids[i].clone()).collect(),
            values: self.values.select_rows(rows),
        }
    }

    pub fn has_nan(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Same names and patient order (required before comparing replicates).
    pub fn aligned_with(&self, other: &FeatureMatrix) -> bool {
        self.feature_names == other.feature_names && self.patient_ids == other.patient_ids
    }
}

/// Encodes the matrix as CSV. Values use the shortest representation that
/// parses back to the identical `f64`.
pub fn encode_feature_matrix(m: &FeatureMatrix) -> Result<Vec<u8>, CohortError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["patient_id".to_string()];
    header.extend(m.feature_names.iter().cloned());
    w.write_record(&header)?;
    for (i, p) in m.patient_ids.iter().enumerate() {
        let mut rec = vec![p.clone()];
        rec.extend(m.values.row(i).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| CohortError::Invalid(e.to_string()))
}

pub fn decode_feature_matrix(bytes: &[u8]) -> Result<FeatureMatrix, CohortError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers()?.clone();
    if header.get(0) != Some("patient_id") {
        return Err(CohortError::Schema("first column must be patient_id".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut patients = Vec::new();
    let mut flat = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        patients.push(rec[0].to_string());
        for cell in rec.iter().skip(1) {
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| {
                    CohortError::Schema(format!("row {}: bad value '{cell}'", i + 1))
                })?
            };
            flat.push(v);
        }
    }
    let values = DMatrix::from_row_slice(patients.len(), names.len(), &flat);
    FeatureMatrix::new(patients, names, values)
}

pub fn write_feature_matrix(m: &FeatureMatrix, path: &Path) -> Result<(), CohortError> {
    std::fs::write(path, encode_feature_matrix(m)?).map_err(|e| CohortError::io(path, e))
}

pub fn read_feature_matrix(path: &Path) -> Result<FeatureMatrix, CohortError> {
    let bytes = std::fs::read(path).map_err(|e| CohortError::io(path, e))?;
    decode_feature_matrix(&bytes).map_err(|e| e.in_file(path))
}
