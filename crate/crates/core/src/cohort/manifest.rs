use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CohortError;

pub const MANIFEST_HEADER: [&str; 7] = [
    "patient_id",
    "timepoint",
    "volume_path",
    "mask_path",
    "crs",
    "recist",
    "sld_mm",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timepoint {
    Pre,
    Post,
}

impl fmt::Display for Timepoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Timepoint::Pre => "pre",
            Timepoint::Post => "post",
        })
    }
}

impl FromStr for Timepoint {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pre" => Ok(Timepoint::Pre),
            "post" => Ok(Timepoint::Post),
            _ => Err(format!("unknown timepoint '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Recist {
    CR,
    PR,
    SD,
    PD,
}

impl fmt::Display for Recist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recist::CR => "CR",
            Recist::PR => "PR",
            Recist::SD => "SD",
            Recist::PD => "PD",
        })
    }
}

impl FromStr for Recist {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "CR" => Ok(Recist::CR),
            "PR" => Ok(Recist::PR),
            "SD" => Ok(Recist::SD),
            "PD" => Ok(Recist::PD),
            _ => Err(format!("unknown RECIST category '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub patient_id: String,
    pub timepoint: Timepoint,
    /// Resolved path (relative entries are resolved against the manifest directory).
    pub volume_path: PathBuf,
    pub mask_path: PathBuf,
    pub crs: Option<u8>,
    pub recist: Option<Recist>,
    pub sld_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub rows: Vec<ManifestRow>,
}

/// Patient-level clinical labels collected from all of a patient's rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatientLabels {
    pub crs: Option<u8>,
    pub recist: Option<Recist>,
    pub sld_pre: Option<f64>,
    pub sld_post: Option<f64>,
}

impl CohortManifest {
    /// Patient ids in order of first appearance.
    pub fn patients(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.patient_id.clone()))
            .map(|r| r.patient_id.clone())
            .collect()
    }

    pub fn row(&self, patient: &str, tp: Timepoint) -> Option<&ManifestRow> {
        self.rows
            .iter()
            .find(|r| r.patient_id == patient && r.timepoint == tp)
    }

    pub fn labels(&self, patient: &str) -> PatientLabels {
        let mut out = PatientLabels::default();
        for r in self.rows.iter().filter(|r| r.patient_id == patient) {
            out.crs = out.crs.or(r.crs);
            out.recist = out.recist.or(r.recist);
            match r.timepoint {
                Timepoint::Pre => out.sld_pre = r.sld_mm,
                Timepoint::Post => out.sld_post = r.sld_mm,
            }
        }
        out
    }
}

fn optional<T: FromStr>(cell: &str) -> Result<Option<T>, T::Err> {
    if cell.is_empty() {
        Ok(None)
    } else {
        cell.parse().map(Some)
    }
}

fn row_err(row: usize, message: impl Into<String>) -> CohortError {
    CohortError::Manifest {
        row,
        message: message.into(),
    }
}

/// Parses manifest text; relative paths are resolved against `base`.
/// When `check_paths` is set every referenced file must exist.
pub fn parse_manifest(
    text: &str,
    base: &Path,
    check_paths: bool,
) -> Result<CohortManifest, CohortError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(row_err(
            0,
            format!("header must be exactly '{}'", MANIFEST_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    let mut keys = HashSet::new();
    let mut patient_labels: BTreeMap<String, (Option<u8>, Option<Recist>)> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row_no = i + 1;
        let patient_id = rec[0].to_string();
        if patient_id.is_empty() {
            return Err(row_err(row_no, "empty patient_id"));
        }
        let timepoint: Timepoint = rec[1].parse().map_err(|e: String| row_err(row_no, e))?;
        if !keys.insert((patient_id.clone(), timepoint)) {
            return Err(CohortError::DuplicateKey {
                patient: patient_id,
                timepoint: timepoint.to_string(),
            });
        }
        let crs: Option<i64> =
            optional(&rec[4]).map_err(|_| row_err(row_no, format!("bad crs '{}'", &rec[4])))?;
        if let Some(v) = crs {
            if !(1..=3).contains(&v) {
                return Err(CohortError::CrsRange { row: row_no, value: v });
            }
        }
        let crs = crs.map(|v| v as u8);
        let recist: Option<Recist> = optional(&rec[5]).map_err(|e: String| row_err(row_no, e))?;
        let sld_mm: Option<f64> =
            optional(&rec[6]).map_err(|_| row_err(row_no, format!("bad sld_mm '{}'", &rec[6])))?;
        if let Some(s) = sld_mm {
            if !(s > 0.0 && s.is_finite()) {
                return Err(row_err(row_no, format!("sld_mm must be positive, got {s}")));
            }
        }
        let entry = patient_labels.entry(patient_id.clone()).or_default();
        if let (Some(a), Some(b)) = (entry.0, crs) {
            if a != b {
                return Err(row_err(row_no, format!("conflicting crs for patient {patient_id}")));
            }
        }
        if let (Some(a), Some(b)) = (entry.1, recist) {
            if a != b {
                return Err(row_err(row_no, format!("conflicting recist for patient {patient_id}")));
            }
        }
        entry.0 = entry.0.or(crs);
        entry.1 = entry.1.or(recist);

        let volume_path = base.join(&rec[2]);
        let mask_path = base.join(&rec[3]);
        if check_paths {
            for p in [&volume_path, &mask_path] {
                if !p.exists() {
                    return Err(row_err(row_no, format!("missing file {}", p.display())));
                }
            }
        }
        rows.push(ManifestRow {
            patient_id,
            timepoint,
            volume_path,
            mask_path,
            crs,
            recist,
            sld_mm,
        });
    }
    Ok(CohortManifest { rows })
}

pub fn load_manifest(path: &Path) -> Result<CohortManifest, CohortError> {
    let text = std::fs::read_to_string(path).map_err(|e| CohortError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base, true)
}

/// Writes a manifest; paths are stored relative to the manifest directory when possible.
pub fn write_manifest(manifest: &CohortManifest, path: &Path) -> Result<(), CohortError> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER)?;
    for r in &manifest.rows {
        let rel = |p: &Path| {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        w.write_record([
            r.patient_id.clone(),
            r.timepoint.to_string(),
            rel(&r.volume_path),
            rel(&r.mask_path),
            r.crs.map(|c| c.to_string()).unwrap_or_default(),
            r.recist.map(|c| c.to_string()).unwrap_or_default(),
            r.sld_mm.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CohortError::Invalid(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| CohortError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "patient_id,timepoint,volume_path,mask_path,crs,recist,sld_mm\n";

    #[test]
    fn parses_full_row() {
        let text = format!("{HEADER}P1,pre,v.mvol,m.mmask,3,PR,120.0\n");
        let m = parse_manifest(&text, Path::new("/data"), false).unwrap();
        let r = &m.rows[0];
        assert_eq!(r.crs, Some(3));
        assert_eq!(r.recist, Some(Recist::PR));
        assert_eq!(r.sld_mm, Some(120.0));
        assert_eq!(r.volume_path, Path::new("/data/v.mvol"));
    }

    #[test]
    fn empty_cells_are_absent() {
        let text = format!("{HEADER}P1,post,v.mvol,m.mmask,,,\n");
        let r = &parse_manifest(&text, Path::new("."), false).unwrap().rows[0];
        assert_eq!((r.crs, r.recist, r.sld_mm), (None, None, None));
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = format!("{HEADER}P1,pre,a,b,,,\nP1,pre,c,d,,,\n");
        assert!(matches!(
            parse_manifest(&text, Path::new("."), false),
            Err(CohortError::DuplicateKey { .. })
        ));
    }

    #[test]
    fn crs_out_of_range() {
        let text = format!("{HEADER}P1,pre,a,b,4,,\n");
        assert!(matches!(
            parse_manifest(&text, Path::new("."), false),
            Err(CohortError::CrsRange { row: 1, value: 4 })
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        let text = "patient,timepoint,volume_path,mask_path,crs,recist,sld_mm\n";
        assert!(parse_manifest(text, Path::new("."), false).is_err());
    }

    #[test]
    fn five_patients_two_timepoints() {
        let mut text = HEADER.to_string();
        for p in 0..5 {
            for tp in ["pre", "post"] {
                text.push_str(&format!("P{p},{tp},v{p}{tp}.mvol,m{p}{tp}.mmask,2,SD,{}\n", 50 + p));
            }
        }
        let m = parse_manifest(&text, Path::new("."), false).unwrap();
        assert_eq!(m.rows.len(), 10);
        assert_eq!(m.patients().len(), 5);
        let l = m.labels("P3");
        assert_eq!((l.crs, l.sld_pre, l.sld_post), (Some(2), Some(53.0), Some(53.0)));
    }

    #[test]
    fn missing_file_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        std::fs::write(&path, format!("{HEADER}P1,pre,nope.mvol,nope.mmask,,,\n")).unwrap();
        assert!(matches!(load_manifest(&path), Err(CohortError::Manifest { row: 1, .. })));
    }
}
