//! Gray-level size-zone matrix features over 26-connected zones.

use super::glrlm::size_matrix_features;
use super::Discretized;

pub const GLSZM_NAMES: [&str; 16] = [
    "SmallAreaEmphasis",
    "LargeAreaEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized",
    "ZonePercentage",
    "GrayLevelVariance",
    "ZoneVariance",
    "ZoneEntropy",
    "LowGrayLevelZoneEmphasis",
    "HighGrayLevelZoneEmphasis",
    "SmallAreaLowGrayLevelEmphasis",
    "SmallAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis",
    "LargeAreaHighGrayLevelEmphasis",
];

/// Zone counts: `n_levels` rows, one column per zone size `1..=n_voxels`.
pub fn glszm_matrix(d: &Discretized) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; d.n_voxels.max(1)]; d.n_levels];
    let mut seen = vec![false; d.levels.len()];
    let mut stack = Vec::new();
    let [nx, ny, _] = d.dims;
    for start in 0..d.levels.len() {
        let l = d.levels[start];
        if l == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0usize;
        while let Some(v) = stack.pop() {
            size += 1;
            let (x, y, z) = ((v % nx) as i64, ((v / nx) % ny) as i64, (v / (nx * ny)) as i64);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if d.at(x + dx, y + dy, z + dz) != l {
                            continue;
                        }
                        let w = d.index((x + dx) as usize, (y + dy) as usize, (z + dz) as usize);
                        if !seen[w] {
                            seen[w] = true;
                            stack.push(w);
                        }
                    }
                }
            }
        }
        m[l as usize - 1][size - 1] += 1.0;
    }
    m
}

pub fn glszm_features(d: &Discretized) -> [f64; 16] {
    size_matrix_features(&glszm_matrix(d), d.n_voxels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_blobs_of_one_level() {
        // a 3-voxel bar and a 5-voxel plus sign, separated by background
        let mut levels = vec![0u16; 9 * 5];
        for x in 0..3 {
            levels[x] = 1;
        }
        for (x, y) in [(6, 2), (5, 2), (7, 2), (6, 1), (6, 3)] {
            levels[x + 9 * y] = 1;
        }
        let d = Discretized { dims: [9, 5, 1], levels, n_levels: 1, n_voxels: 8 };
        let m = glszm_matrix(&d);
        let zones: Vec<(usize, usize, f64)> = m
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, &c)| c > 0.0).map(move |(j, &c)| (i + 1, j + 1, c)))
            .collect();
        assert_eq!(zones, vec![(1, 3, 1.0), (1, 5, 1.0)]);
    }

    #[test]
    fn diagonal_neighbours_join() {
        let d = Discretized { dims: [2, 2, 2], levels: vec![1, 0, 0, 0, 0, 0, 0, 1], n_levels: 1, n_voxels: 2 };
        assert_eq!(glszm_matrix(&d)[0][1], 1.0);
    }
}
