//! Intensity histogram statistics over the VOI.

use super::{level_of, neg_plogp, voi_intensities, DiscretizationConfig, RadiomicsError};
use crate::cohort::VoxelVolume;
use crate::roi::Voi;

pub const FIRST_ORDER_NAMES: [&str; 18] = [
    "Energy",
    "TotalEnergy",
    "Entropy",
    "Minimum",
    "10Percentile",
    "90Percentile",
    "Maximum",
    "Mean",
    "Median",
    "InterquartileRange",
    "Range",
    "MeanAbsoluteDeviation",
    "RobustMeanAbsoluteDeviation",
    "RootMeanSquared",
    "Skewness",
    "Kurtosis",
    "Variance",
    "Uniformity",
];

/// Linear-interpolation percentile of sorted data, `q` in [0, 100].
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn extract_first_order(
    volume: &VoxelVolume,
    voi: &Voi,
    cfg: &DiscretizationConfig,
) -> Result<[f64; 18], RadiomicsError> {
    cfg.validate()?;
    let x = voi_intensities(volume, voi)?;
    if x.is_empty() {
        return Err(RadiomicsError::EmptyVoi);
    }
    let n = x.len() as f64;
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];

    let energy: f64 = x.iter().map(|v| v * v).sum();
    let total_energy = energy * voi.grid.voxel_volume();
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4, mut mad) = (0.0, 0.0, 0.0, 0.0);
    for &v in &x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        mad += d.abs();
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    mad /= n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };

    let p10 = percentile(&sorted, 10.0);
    let p90 = percentile(&sorted, 90.0);
    let robust: Vec<f64> = x.iter().cloned().filter(|&v| v >= p10 && v <= p90).collect();
    let rmean = robust.iter().sum::<f64>() / robust.len() as f64;
    let rmad = robust.iter().map(|v| (v - rmean).abs()).sum::<f64>() / robust.len() as f64;

    let top = level_of(max, min, cfg);
    let mut hist = vec![0usize; top + 1];
    for &v in &x {
        hist[level_of(v, min, cfg)] += 1;
    }
    let (mut entropy, mut uniformity) = (0.0, 0.0);
    for &c in &hist[1..] {
        let p = c as f64 / n;
        entropy += neg_plogp(p);
        uniformity += p * p;
    }

    Ok([
        energy,
        total_energy,
        entropy,
        min,
        p10,
        p90,
        max,
        mean,
        percentile(&sorted, 50.0),
        percentile(&sorted, 75.0) - percentile(&sorted, 25.0),
        max - min,
        mad,
        rmad,
        (energy / n).sqrt(),
        skewness,
        kurtosis,
        m2,
        uniformity,
    ])
}
