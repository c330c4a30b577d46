//! Gray-level dependence matrix features (26-neighbourhood, exact level
//! match).

use super::glrlm::size_matrix_features;
use super::Discretized;

pub const GLDM_NAMES: [&str; 14] = [
    "SmallDependenceEmphasis",
    "LargeDependenceEmphasis",
    "GrayLevelNonUniformity",
    "DependenceNonUniformity",
    "DependenceNonUniformityNormalized",
    "GrayLevelVariance",
    "DependenceVariance",
    "DependenceEntropy",
    "LowGrayLevelEmphasis",
    "HighGrayLevelEmphasis",
    "SmallDependenceLowGrayLevelEmphasis",
    "SmallDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis",
    "LargeDependenceHighGrayLevelEmphasis",
];

/// Dependence counts: `n_levels` rows, 27 columns for dependence `1..=27`
/// (the voxel itself plus matching neighbours).
pub fn gldm_matrix(d: &Discretized) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; 27]; d.n_levels];
    let [nx, ny, nz] = d.dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let l = d.levels[d.index(x, y, z)];
                if l == 0 {
                    continue;
                }
                let mut dep = 0usize;
                for dz in -1..=1i64 {
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            if d.at(x as i64 + dx, y as i64 + dy, z as i64 + dz) == l {
                                dep += 1;
                            }
                        }
                    }
                }
                // dep already counts the centre voxel
                m[l as usize - 1][dep - 1] += 1.0;
            }
        }
    }
    m
}

pub fn gldm_features(d: &Discretized) -> [f64; 14] {
    let f = size_matrix_features(&gldm_matrix(d), d.n_voxels);
    [
        f[0], f[1], f[2], f[4], f[5], f[7], f[8], f[9], f[10], f[11], f[12], f[13], f[14], f[15],
    ]
}
