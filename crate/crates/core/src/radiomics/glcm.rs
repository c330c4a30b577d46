//! Gray-level co-occurrence matrix features.
//!
//! One symmetric matrix per direction at distance 1; features are computed
//! on each normalised matrix and averaged over the directions that contain
//! at least one voxel pair.

use nalgebra::DMatrix;

use super::{neg_plogp, Discretized, DIRECTIONS};

pub const GLCM_NAMES: [&str; 24] = [
    "Autocorrelation",
    "JointAverage",
    "ClusterProminence",
    "ClusterShade",
    "ClusterTendency",
    "Contrast",
    "Correlation",
    "DifferenceAverage",
    "DifferenceEntropy",
    "DifferenceVariance",
    "JointEnergy",
    "JointEntropy",
    "Imc1",
    "Imc2",
    "Idm",
    "MCC",
    "Idmn",
    "Id",
    "Idn",
    "InverseVariance",
    "MaximumProbability",
    "SumAverage",
    "SumEntropy",
    "SumSquares",
];

/// Symmetric co-occurrence counts for one offset, `n_levels²` row-major with
/// level `l` at index `l - 1`.
pub fn glcm_direction_matrix(d: &Discretized, dir: [i64; 3]) -> Vec<f64> {
    let ng = d.n_levels;
    let mut m = vec![0.0; ng * ng];
    let [nx, ny, nz] = d.dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let a = d.levels[d.index(x, y, z)];
                if a == 0 {
                    continue;
                }
                let b = d.at(x as i64 + dir[0], y as i64 + dir[1], z as i64 + dir[2]);
                if b == 0 {
                    continue;
                }
                let (i, j) = (a as usize - 1, b as usize - 1);
                m[i * ng + j] += 1.0;
                m[j * ng + i] += 1.0;
            }
        }
    }
    m
}

fn mcc(p: &[f64], px: &[f64], ng: usize) -> f64 {
    let occ: Vec<usize> = (0..ng).filter(|&i| px[i] > 0.0).collect();
    let k = occ.len();
    if k < 2 {
        return 1.0;
    }
    let m = DMatrix::from_fn(k, k, |r, c| {
        let (i, j) = (occ[r], occ[c]);
        p[i * ng + j] / (px[i] * px[j]).sqrt()
    });
    // m is symmetric, so the eigenvalues of m m^T are the squared eigenvalues of m
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().map(|l| l * l).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    // a rank-one matrix has a zero second eigenvalue up to solver round-off
    if ev[1] <= 1e-12 * ev[0] {
        return 0.0;
    }
    ev[1].sqrt()
}

/// Features of one normalised symmetric matrix.
fn matrix_features(p: &[f64], ng: usize) -> [f64; 24] {
    let mut px = vec![0.0; ng];
    for i in 0..ng {
        px[i] = p[i * ng..(i + 1) * ng].iter().sum();
    }
    let lv = |i: usize| (i + 1) as f64;
    let ux: f64 = (0..ng).map(|i| lv(i) * px[i]).sum();
    let var_x: f64 = (0..ng).map(|i| (lv(i) - ux).powi(2) * px[i]).sum();

    let mut p_sum = vec![0.0; 2 * ng + 1];
    let mut p_diff = vec![0.0; ng];
    let mut acc = [0.0f64; 24];
    let (mut autocorr, mut prom, mut shade, mut tend, mut contrast) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut energy, mut hxy, mut hxy1, mut hxy2) = (0.0, 0.0, 0.0, 0.0);
    let (mut idm, mut idmn, mut id, mut idn, mut maxp) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    let ngf = ng as f64;
    for i in 0..ng {
        for j in 0..ng {
            let pij = p[i * ng + j];
            let (a, b) = (lv(i), lv(j));
            let pxy = px[i] * px[j];
            if pxy > 0.0 {
                hxy2 -= pxy * pxy.log2();
                if pij > 0.0 {
                    hxy1 -= pij * pxy.log2();
                }
            }
            if pij == 0.0 {
                continue;
            }
            let s = a + b - 2.0 * ux;
            let k = (a - b).abs();
            autocorr += a * b * pij;
            prom += s.powi(4) * pij;
            shade += s.powi(3) * pij;
            tend += s * s * pij;
            contrast += k * k * pij;
            energy += pij * pij;
            hxy += neg_plogp(pij);
            idm += pij / (1.0 + k * k);
            idmn += pij / (1.0 + k * k / (ngf * ngf));
            id += pij / (1.0 + k);
            idn += pij / (1.0 + k / ngf);
            maxp = maxp.max(pij);
            p_sum[i + j + 2] += pij;
            p_diff[i.abs_diff(j)] += pij;
        }
    }
    let hx: f64 = px.iter().map(|&v| neg_plogp(v)).sum();
    let correlation = if var_x > 0.0 {
        (autocorr - ux * ux) / var_x
    } else {
        1.0
    };
    let diff_avg: f64 = (0..ng).map(|k| k as f64 * p_diff[k]).sum();
    let diff_ent: f64 = p_diff.iter().map(|&v| neg_plogp(v)).sum();
    let diff_var: f64 = (0..ng).map(|k| (k as f64 - diff_avg).powi(2) * p_diff[k]).sum();
    let inv_var: f64 = (1..ng).map(|k| p_diff[k] / (k * k) as f64).sum();
    let sum_avg: f64 = (2..=2 * ng).map(|k| k as f64 * p_sum[k]).sum();
    let sum_ent: f64 = p_sum.iter().map(|&v| neg_plogp(v)).sum();
    let imc1 = if hx > 0.0 { (hxy - hxy1) / hx } else { 0.0 };
    let imc2 = if hxy2 > hxy {
        (1.0 - (-2.0 * (hxy2 - hxy)).exp()).sqrt()
    } else {
        0.0
    };

    acc[0] = autocorr;
    acc[1] = ux;
    acc[2] = prom;
    acc[3] = shade;
    acc[4] = tend;
    acc[5] = contrast;
    acc[6] = correlation;
    acc[7] = diff_avg;
    acc[8] = diff_ent;
    acc[9] = diff_var;
    acc[10] = energy;
    acc[11] = hxy;
    acc[12] = imc1;
    acc[13] = imc2;
    acc[14] = idm;
    acc[15] = mcc(p, &px, ng);
    acc[16] = idmn;
    acc[17] = id;
    acc[18] = idn;
    acc[19] = inv_var;
    acc[20] = maxp;
    acc[21] = sum_avg;
    acc[22] = sum_ent;
    acc[23] = var_x;
    acc
}

/// Direction-averaged GLCM features; all NaN when no direction has a pair.
pub fn glcm_features(d: &Discretized) -> [f64; 24] {
    let ng = d.n_levels;
    let mut sum = [0.0f64; 24];
    let mut used = 0usize;
    for dir in DIRECTIONS {
        let mut m = glcm_direction_matrix(d, dir);
        let total: f64 = m.iter().sum();
        if total == 0.0 {
            continue;
        }
        m.iter_mut().for_each(|v| *v /= total);
        let f = matrix_features(&m, ng);
        for (s, v) in sum.iter_mut().zip(f) {
            *s += v;
        }
        used += 1;
    }
    if used == 0 {
        return [f64::NAN; 24];
    }
    sum.map(|s| s / used as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(dims: [usize; 3], levels: Vec<u16>) -> Discretized {
        let n_levels = *levels.iter().max().unwrap() as usize;
        let n_voxels = levels.iter().filter(|&&l| l > 0).count();
        Discretized { dims, levels, n_levels, n_voxels }
    }

    fn get(v: &[f64; 24], name: &str) -> f64 {
        v[GLCM_NAMES.iter().position(|&n| n == name).unwrap()]
    }

    #[test]
    fn constant_voi_limits() {
        let f = glcm_features(&disc([3, 3, 2], vec![1; 18]));
        assert_eq!(get(&f, "Contrast"), 0.0);
        assert_eq!(get(&f, "JointEnergy"), 1.0);
        assert_eq!(get(&f, "Correlation"), 1.0);
        assert_eq!(get(&f, "MCC"), 1.0);
        assert_eq!(get(&f, "Imc1"), 0.0);
    }

    #[test]
    fn checkerboard_horizontal() {
        let levels: Vec<u16> = (0..16).map(|i| if (i % 4 + i / 4) % 2 == 0 { 1 } else { 2 }).collect();
        let d = disc([4, 4, 1], levels);
        let m = glcm_direction_matrix(&d, [1, 0, 0]);
        assert_eq!(m, vec![0.0, 12.0, 12.0, 0.0]);
        let total: f64 = m.iter().sum();
        let p: Vec<f64> = m.iter().map(|v| v / total).collect();
        let f = matrix_features(&p, 2);
        assert_eq!(get(&f, "Contrast"), 1.0);
        assert_eq!(get(&f, "Correlation"), -1.0);
    }

    #[test]
    fn single_voxel_has_no_pairs() {
        let f = glcm_features(&disc([1, 1, 1], vec![1]));
        assert!(f.iter().all(|v| v.is_nan()));
    }

    #[test]
    fn probabilities_normalise() {
        let levels: Vec<u16> = (0..60).map(|i| ((i * 7 + i / 3) % 5) as u16).collect();
        let d = disc([5, 4, 3], levels);
        for dir in DIRECTIONS {
            let m = glcm_direction_matrix(&d, dir);
            let total: f64 = m.iter().sum();
            if total > 0.0 {
                let s: f64 = m.iter().map(|v| v / total).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
