//! Gray-level run-length matrix features, averaged over the 13 directions.

use super::{neg_plogp, Discretized, DIRECTIONS};

pub const GLRLM_NAMES: [&str; 16] = [
    "ShortRunEmphasis",
    "LongRunEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized",
    "RunPercentage",
    "GrayLevelVariance",
    "RunVariance",
    "RunEntropy",
    "LowGrayLevelRunEmphasis",
    "HighGrayLevelRunEmphasis",
    "ShortRunLowGrayLevelEmphasis",
    "ShortRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis",
    "LongRunHighGrayLevelEmphasis",
];

/// Run counts for one direction: `n_levels` rows, one column per run
/// length `1..=max(dims)`.
pub fn glrlm_direction_matrix(d: &Discretized, dir: [i64; 3]) -> Vec<Vec<f64>> {
    let lmax = *d.dims.iter().max().unwrap();
    let mut r = vec![vec![0.0; lmax]; d.n_levels];
    let [nx, ny, nz] = d.dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let l = d.levels[d.index(x, y, z)];
                if l == 0 {
                    continue;
                }
                let (x, y, z) = (x as i64, y as i64, z as i64);
                if d.at(x - dir[0], y - dir[1], z - dir[2]) == l {
                    continue;
                }
                let mut len = 1;
                while d.at(x + len * dir[0], y + len * dir[1], z + len * dir[2]) == l {
                    len += 1;
                }
                r[l as usize - 1][len as usize - 1] += 1.0;
            }
        }
    }
    r
}

/// Emphasis/variance/entropy statistics shared by the run, zone and
/// dependence matrices. `m[i][j]` counts level `i + 1` with size `j + 1`;
/// `n_voxels` normalises the percentage term.
pub(crate) fn size_matrix_features(m: &[Vec<f64>], n_voxels: usize) -> [f64; 16] {
    let total: f64 = m.iter().flatten().sum();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut row_sum = vec![0.0; m.len()];
    let mut col_sum = vec![0.0; ncols];
    let mut f = [0.0f64; 16];
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    for (i, row) in m.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            row_sum[i] += c;
            col_sum[j] += c;
            let (a, b) = ((i + 1) as f64, (j + 1) as f64);
            let p = c / total;
            mu_i += a * p;
            mu_j += b * p;
            f[0] += p / (b * b);
            f[1] += p * b * b;
            f[9] += neg_plogp(p);
            f[10] += p / (a * a);
            f[11] += p * a * a;
            f[12] += p / (a * a * b * b);
            f[13] += p * a * a / (b * b);
            f[14] += p * b * b / (a * a);
            f[15] += p * a * a * b * b;
        }
    }
    let gln: f64 = row_sum.iter().map(|v| v * v).sum::<f64>();
    let rln: f64 = col_sum.iter().map(|v| v * v).sum::<f64>();
    f[2] = gln / total;
    f[3] = gln / (total * total);
    f[4] = rln / total;
    f[5] = rln / (total * total);
    f[6] = total / n_voxels as f64;
    for (i, row) in m.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let p = c / total;
            f[7] += p * ((i + 1) as f64 - mu_i).powi(2);
            f[8] += p * ((j + 1) as f64 - mu_j).powi(2);
        }
    }
    f
}

pub fn glrlm_features(d: &Discretized) -> [f64; 16] {
    let mut sum = [0.0f64; 16];
    for dir in DIRECTIONS {
        let f = size_matrix_features(&glrlm_direction_matrix(d, dir), d.n_voxels);
        for (s, v) in sum.iter_mut().zip(f) {
            *s += v;
        }
    }
    sum.map(|s| s / DIRECTIONS.len() as f64)
}
