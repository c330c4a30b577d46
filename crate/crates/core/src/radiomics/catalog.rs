use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::OnceLock;

use super::{FIRST_ORDER_NAMES, GLCM_NAMES, GLDM_NAMES, GLRLM_NAMES, GLSZM_NAMES, SHAPE_NAMES};

pub const N_FEATURES: usize = 102;

const CATALOG_TSV: &str = include_str!("../../resources/feature_catalog.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Shape,
    FirstOrder,
    Glcm,
    Glrlm,
    Glszm,
    Gldm,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Shape,
        Family::FirstOrder,
        Family::Glcm,
        Family::Glrlm,
        Family::Glszm,
        Family::Gldm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Shape => "shape",
            Family::FirstOrder => "firstorder",
            Family::Glcm => "glcm",
            Family::Glrlm => "glrlm",
            Family::Glszm => "glszm",
            Family::Gldm => "gldm",
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        match self {
            Family::Shape => &SHAPE_NAMES,
            Family::FirstOrder => &FIRST_ORDER_NAMES,
            Family::Glcm => &GLCM_NAMES,
            Family::Glrlm => &GLRLM_NAMES,
            Family::Glszm => &GLSZM_NAMES,
            Family::Gldm => &GLDM_NAMES,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Family::ALL
            .iter()
            .find(|f| f.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown feature family '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDef {
    pub family: Family,
    pub name: &'static str,
}

impl FeatureDef {
    /// `family.name`
    pub fn qualified(&self) -> String {
        format!("{}.{}", self.family, self.name)
    }
}

/// The fixed feature catalog in canonical order.
pub fn catalog() -> &'static [FeatureDef] {
    static CATALOG: OnceLock<Vec<FeatureDef>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        Family::ALL
            .iter()
            .flat_map(|&family| family.names().iter().map(move |&name| FeatureDef { family, name }))
            .collect()
    })
}

/// Catalog positions of one family.
pub fn family_range(family: Family) -> Range<usize> {
    let start: usize = Family::ALL
        .iter()
        .take_while(|&&f| f != family)
        .map(|f| f.names().len())
        .sum();
    start..start + family.names().len()
}

/// The versioned catalog file shipped with the crate
/// (`name`, `family`, `reference` columns).
pub fn catalog_tsv() -> &'static str {
    CATALOG_TSV
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_sizes() {
        let sizes: Vec<usize> = Family::ALL.iter().map(|f| f.names().len()).collect();
        assert_eq!(sizes, vec![14, 18, 24, 16, 16, 14]);
        assert_eq!(catalog().len(), N_FEATURES);
        assert_eq!(family_range(Family::Glcm), 32..56);
    }

    #[test]
    fn shipped_file_matches_code() {
        let mut lines = CATALOG_TSV.lines().filter(|l| !l.starts_with('#'));
        assert_eq!(lines.next(), Some("name\tfamily\treference"));
        let rows: Vec<(String, String)> = lines
            .map(|l| {
                let cols: Vec<&str> = l.split('\t').collect();
                assert_eq!(cols.len(), 3, "bad row {l}");
                assert!(!cols[2].is_empty());
                (cols[0].to_string(), cols[1].to_string())
            })
            .collect();
        let code: Vec<(String, String)> = catalog()
            .iter()
            .map(|d| (d.name.to_string(), d.family.to_string()))
            .collect();
        assert_eq!(rows, code);
    }

    #[test]
    fn names_unique() {
        let mut q: Vec<String> = catalog().iter().map(|d| d.qualified()).collect();
        q.sort();
        q.dedup();
        assert_eq!(q.len(), N_FEATURES);
    }
}
