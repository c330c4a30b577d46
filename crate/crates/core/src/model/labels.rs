use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::cohort::Recist;

/// Volume reductions up to and including this percentage are non-response.
pub const VOLR_THRESHOLD_PCT: f64 = 65.0;
/// Diameter (SLD) reductions up to and including this percentage are
/// non-response.
pub const DIAR_THRESHOLD_PCT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResponseMetric {
    #[serde(rename = "CRS")]
    Crs,
    #[serde(rename = "RECIST")]
    Recist,
    #[serde(rename = "VolR")]
    VolR,
    #[serde(rename = "DiaR")]
    DiaR,
}

impl ResponseMetric {
    pub const ALL: [ResponseMetric; 4] = [
        ResponseMetric::Crs,
        ResponseMetric::Recist,
        ResponseMetric::VolR,
        ResponseMetric::DiaR,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ResponseMetric::Crs => "CRS",
            ResponseMetric::Recist => "RECIST",
            ResponseMetric::VolR => "VolR",
            ResponseMetric::DiaR => "DiaR",
        }
    }
}

impl fmt::Display for ResponseMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResponseMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ResponseMetric::ALL
            .iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| format!("unknown response metric '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseLabel {
    pub metric: ResponseMetric,
    pub response: bool,
    pub trace: String,
}

fn reduction_pct(pre: f64, post: f64) -> f64 {
    100.0 * (pre - post) / pre
}

pub fn derive_volr(pre_vol_mm3: f64, post_vol_mm3: f64) -> Result<ResponseLabel, ModelError> {
    if !(pre_vol_mm3 > 0.0) {
        return Err(ModelError::LabelUnavailable(format!("pre-treatment volume {pre_vol_mm3} is not positive")));
    }
    if !(post_vol_mm3 >= 0.0) {
        return Err(ModelError::Range(format!("post-treatment volume {post_vol_mm3}")));
    }
    let r = reduction_pct(pre_vol_mm3, post_vol_mm3);
    Ok(ResponseLabel {
        metric: ResponseMetric::VolR,
        response: r > VOLR_THRESHOLD_PCT,
        trace: format!("volume {pre_vol_mm3} -> {post_vol_mm3} mm3, reduction {r:.3}%"),
    })
}

pub fn derive_diar(sld_pre_mm: Option<f64>, sld_post_mm: Option<f64>) -> Result<ResponseLabel, ModelError> {
    let (pre, post) = match (sld_pre_mm, sld_post_mm) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(ModelError::LabelUnavailable("missing SLD".into())),
    };
    if !(pre > 0.0) || !(post >= 0.0) {
        return Err(ModelError::Range(format!("SLD {pre} -> {post}")));
    }
    let r = reduction_pct(pre, post);
    Ok(ResponseLabel {
        metric: ResponseMetric::DiaR,
        response: r > DIAR_THRESHOLD_PCT,
        trace: format!("SLD {pre} -> {post} mm, reduction {r:.3}%"),
    })
}

pub fn derive_crs(crs: i64) -> Result<ResponseLabel, ModelError> {
    if !(1..=3).contains(&crs) {
        return Err(ModelError::Range(format!("CRS {crs} outside 1..3")));
    }
    Ok(ResponseLabel {
        metric: ResponseMetric::Crs,
        response: crs == 3,
        trace: format!("CRS {crs}"),
    })
}

pub fn derive_recist(cat: Recist) -> ResponseLabel {
    ResponseLabel {
        metric: ResponseMetric::Recist,
        response: matches!(cat, Recist::CR | Recist::PR),
        trace: format!("RECIST {cat}"),
    }
}

/// Everything a patient may contribute to label derivation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelInputs {
    pub crs: Option<i64>,
    pub recist: Option<Recist>,
    pub sld_pre: Option<f64>,
    pub sld_post: Option<f64>,
    pub vol_pre: Option<f64>,
    pub vol_post: Option<f64>,
}

pub fn derive_label(metric: ResponseMetric, inp: &LabelInputs) -> Result<ResponseLabel, ModelError> {
    match metric {
        ResponseMetric::Crs => derive_crs(inp.crs.ok_or_else(|| ModelError::LabelUnavailable("missing CRS".into()))?),
        ResponseMetric::Recist => Ok(derive_recist(
            inp.recist.ok_or_else(|| ModelError::LabelUnavailable("missing RECIST".into()))?,
        )),
        ResponseMetric::DiaR => derive_diar(inp.sld_pre, inp.sld_post),
        ResponseMetric::VolR => match (inp.vol_pre, inp.vol_post) {
            (Some(a), Some(b)) => derive_volr(a, b),
            _ => Err(ModelError::LabelUnavailable("missing pre or post volume".into())),
        },
    }
}
