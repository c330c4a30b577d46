//! Brute-force reference implementation of the 102 features, written from
//! the textbook definitions over coordinate sets rather than cropped
//! arrays. Only used by tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radrobust::cohort::{Grid, VoxelVolume};
use radrobust::radiomics::{BinAnchor, DiscretizationConfig};
use radrobust::roi::{Provenance, Voi};

type P = [i64; 3];

/// A small volume with a mask and discretization settings.
#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub data: Vec<f32>,
    pub mask: Vec<bool>,
    pub bin_width: f64,
    pub grid_anchor: bool,
}

impl Case {
    fn new(name: &str, dims: [usize; 3], spacing: [f64; 3]) -> Case {
        let n = dims.iter().product();
        Case {
            name: name.to_string(),
            dims,
            spacing,
            data: vec![0.0; n],
            mask: vec![false; n],
            bin_width: 4.0,
            grid_anchor: false,
        }
    }

    fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.idx(x, y, z);
        self.mask[i] = true;
        self.data[i] = v;
    }

    pub fn inputs(&self) -> (VoxelVolume, Voi, DiscretizationConfig) {
        let g = Grid::new(self.dims, self.spacing, [0.0; 3]);
        let vol = VoxelVolume::new(g, self.data.clone()).unwrap();
        let voi = Voi::new(g, self.mask.clone(), Provenance::Original).unwrap();
        let anchor = if self.grid_anchor { BinAnchor::Grid } else { BinAnchor::Minimum };
        (vol, voi, DiscretizationConfig { bin_width: self.bin_width, anchor })
    }

    fn voxels(&self) -> BTreeMap<P, f64> {
        let mut out = BTreeMap::new();
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    let i = self.idx(x, y, z);
                    if self.mask[i] {
                        out.insert([x as i64, y as i64, z as i64], self.data[i] as f64);
                    }
                }
            }
        }
        out
    }
}

/// Hand-built shapes plus seeded random masks, all within 5x5x5.
pub fn micro_cases() -> Vec<Case> {
    let mut cases = Vec::new();

    let mut c = Case::new("single voxel", [3, 3, 3], [1.0; 3]);
    c.set(1, 1, 1, 7.0);
    cases.push(c);

    let mut c = Case::new("full cube gradient", [5, 5, 5], [1.0; 3]);
    for z in 0..5 {
        for y in 0..5 {
            for x in 0..5 {
                c.set(x, y, z, (x + 2 * y + 3 * z) as f32);
            }
        }
    }
    cases.push(c);

    let mut c = Case::new("line along x", [5, 1, 1], [0.7, 1.0, 1.0]);
    for x in 0..5 {
        c.set(x, 0, 0, [1.0, 9.0, 9.0, 2.0, 17.0][x]);
    }
    cases.push(c);

    let mut c = Case::new("body diagonal", [5, 5, 5], [1.0; 3]);
    for i in 0..5 {
        c.set(i, i, i, (3 * i) as f32);
    }
    cases.push(c);

    let mut c = Case::new("axial plane", [5, 5, 5], [1.0, 1.0, 2.5]);
    for y in 1..4 {
        for x in 1..4 {
            c.set(x, y, 2, ((x * y) % 5) as f32 * 3.0);
        }
    }
    cases.push(c);

    let mut c = Case::new("oblique plane", [5, 5, 5], [1.0; 3]);
    for z in 0..5 {
        for x in 0..5 {
            c.set(x, 4 - x, z, (z * 4 + x) as f32);
        }
    }
    cases.push(c);

    let mut c = Case::new("two blobs", [5, 5, 5], [1.0; 3]);
    for z in 0..2 {
        for y in 0..2 {
            for x in 0..2 {
                c.set(x, y, z, 1.0);
                c.set(x + 3, y + 3, z + 3, 13.0);
            }
        }
    }
    cases.push(c);

    let mut c = Case::new("checkerboard", [4, 4, 4], [1.0; 3]);
    for z in 0..4 {
        for y in 0..4 {
            for x in 0..4 {
                c.set(x, y, z, if (x + y + z) % 2 == 0 { 0.0 } else { 8.5 });
            }
        }
    }
    cases.push(c);

    let mut c = Case::new("constant cube", [5, 5, 5], [1.0; 3]);
    for z in 1..4 {
        for y in 1..4 {
            for x in 1..4 {
                c.set(x, y, z, 42.0);
            }
        }
    }
    cases.push(c);

    let mut c = Case::new("anisotropic L", [5, 5, 3], [0.8, 1.3, 2.0]);
    for x in 0..5 {
        c.set(x, 0, 1, x as f32 * 2.5);
    }
    for y in 1..5 {
        c.set(0, y, 1, 20.0 - y as f32);
    }
    c.set(0, 0, 0, 3.0);
    cases.push(c);

    let mut c = Case::new("hollow shell", [5, 5, 5], [1.0; 3]);
    for z in 0..5 {
        for y in 0..5 {
            for x in 0..5 {
                let inner = (1..4).contains(&x) && (1..4).contains(&y) && (1..4).contains(&z);
                if !inner {
                    c.set(x, y, z, ((x * 7 + y * 3 + z) % 11) as f32);
                }
            }
        }
    }
    cases.push(c);

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let spacings = [[1.0, 1.0, 1.0], [0.8, 1.0, 2.5], [1.5, 0.7, 1.2]];
    for k in 0..20 {
        let dims = [rng.random_range(2..=5), rng.random_range(2..=5), rng.random_range(1..=5)];
        let mut c = Case::new(&format!("random {k}"), dims, spacings[k % 3]);
        let fill = rng.random_range(0.3..0.95);
        let n: usize = dims.iter().product();
        for i in 0..n {
            c.data[i] = if k % 2 == 0 {
                rng.random_range(0..30) as f32
            } else {
                rng.random_range(-20.0f32..40.0)
            };
            c.mask[i] = rng.random_bool(fill);
        }
        if !c.mask.iter().any(|&m| m) {
            c.mask[0] = true;
        }
        c.bin_width = [4.0, 2.5, 4.0, 7.0][k % 4];
        c.grid_anchor = k % 5 == 3;
        cases.push(c);
    }
    cases
}

/// True when `a` and `b` agree to `rel` relative, with a 1e-12 absolute
/// floor for quantities that are exactly zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-12
}

fn h(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

fn level(i: f64, min: f64, c: &Case) -> usize {
    let w = c.bin_width;
    if c.grid_anchor {
        ((i / w).floor() - (min / w).floor()) as usize + 1
    } else {
        ((i - min) / w).floor() as usize + 1
    }
}

const OFFSETS: [P; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

fn plus(p: P, d: P, k: i64) -> P {
    [p[0] + k * d[0], p[1] + k * d[1], p[2] + k * d[2]]
}

/// All 102 features by brute force, in catalog order.
pub fn brute_force(c: &Case) -> Vec<f64> {
    let vox = c.voxels();
    let min = vox.values().cloned().fold(f64::INFINITY, f64::min);
    let lv: BTreeMap<P, usize> = vox.iter().map(|(p, &i)| (*p, level(i, min, c))).collect();
    let mut out = shape(&vox, c.spacing);
    out.extend(first_order(&vox, &lv, c.spacing));
    out.extend(glcm(&lv));
    out.extend(glrlm(&lv));
    out.extend(glszm(&lv));
    out.extend(gldm(&lv));
    out
}

fn neighbours26() -> Vec<P> {
    let mut v = Vec::new();
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    v.push([dx, dy, dz]);
                }
            }
        }
    }
    v
}

// ---- shape ----

fn unit(axis: usize, k: i64) -> P {
    let mut d = [0; 3];
    d[axis] = k;
    d
}

fn face_height(set: &BTreeSet<P>, q: P, axis: usize, sign: i64) -> Option<i64> {
    let is_face = |r: P| set.contains(&r) && !set.contains(&plus(r, unit(axis, sign), 1));
    [0, -1, 1, -2, 2, -3, 3].into_iter().find(|&h| is_face(plus(q, unit(axis, 1), h)))
}

fn surface(set: &BTreeSet<P>, sp: [f64; 3]) -> f64 {
    let mut total = 0.0;
    for &p in set {
        for axis in 0..3 {
            for sign in [-1, 1] {
                if set.contains(&plus(p, unit(axis, sign), 1)) {
                    continue;
                }
                let (mut l1, mut l2) = (1.0, 1.0);
                let mut face = 1.0;
                for b in (0..3).filter(|&b| b != axis) {
                    face *= sp[b];
                    let fwd = face_height(set, plus(p, unit(b, 1), 1), axis, sign);
                    let back = face_height(set, plus(p, unit(b, -1), 1), axis, sign);
                    let slope = match (back, fwd) {
                        (Some(hb), Some(hf)) => (hf - hb) as f64 / 2.0,
                        (None, Some(hf)) => hf as f64,
                        (Some(hb), None) => -(hb as f64),
                        (None, None) => 0.0,
                    };
                    let g = slope * sp[axis] / sp[b];
                    l1 += g.abs();
                    l2 += g * g;
                }
                total += face * l2.sqrt() / l1;
            }
        }
    }
    total
}

/// Eigenvalues of a symmetric 3x3 matrix, descending, by the closed-form
/// trigonometric solution.
fn sym3_eigenvalues(a: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    if p1 == 0.0 {
        let mut d = [a[0][0], a[1][1], a[2][2]];
        d.sort_by(|x, y| y.total_cmp(x));
        return d;
    }
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = a;
    for (i, row) in b.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [e1, 3.0 * q - e1 - e3, e3]
}

/// Rank of the scatter matrix of integer points, computed exactly.
fn scatter_rank(pts: &[P]) -> usize {
    let n = pts.len() as i128;
    let mut s = [0i128; 3];
    let mut ss = [[0i128; 3]; 3];
    for p in pts {
        for a in 0..3 {
            s[a] += p[a] as i128;
            for b in 0..3 {
                ss[a][b] += (p[a] * p[b]) as i128;
            }
        }
    }
    let m: Vec<Vec<i128>> = (0..3).map(|a| (0..3).map(|b| n * ss[a][b] - s[a] * s[b]).collect()).collect();
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det != 0 {
        return 3;
    }
    let mut any_minor = false;
    for (r1, r2) in [(0, 1), (0, 2), (1, 2)] {
        for (c1, c2) in [(0, 1), (0, 2), (1, 2)] {
            any_minor |= m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1] != 0;
        }
    }
    if any_minor {
        2
    } else if m.iter().flatten().any(|&v| v != 0) {
        1
    } else {
        0
    }
}

fn shape(vox: &BTreeMap<P, f64>, sp: [f64; 3]) -> Vec<f64> {
    let pts: Vec<P> = vox.keys().cloned().collect();
    let set: BTreeSet<P> = pts.iter().cloned().collect();
    let n = pts.len() as f64;
    let v = n * sp[0] * sp[1] * sp[2];
    let a = surface(&set, sp);
    let pi = std::f64::consts::PI;
    let dist = |p: &P, q: &P| (0..3).map(|k| ((p[k] - q[k]) as f64 * sp[k]).powi(2)).sum::<f64>().sqrt();
    let (mut d3, mut d2) = (0.0f64, 0.0f64);
    for p in &pts {
        for q in &pts {
            d3 = d3.max(dist(p, q));
            if p[2] == q[2] {
                d2 = d2.max(dist(p, q));
            }
        }
    }
    let phys: Vec<[f64; 3]> = pts.iter().map(|p| [0, 1, 2].map(|k| p[k] as f64 * sp[k])).collect();
    let mean = [0, 1, 2].map(|k| phys.iter().map(|x| x[k]).sum::<f64>() / n);
    let mut cov = [[0.0; 3]; 3];
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = phys.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / n;
        }
    }
    let mut ev = sym3_eigenvalues(cov);
    for e in ev.iter_mut().skip(scatter_rank(&pts)) {
        *e = 0.0;
    }
    let (major, minor, least) = (ev[0], ev[1], ev[2]);
    let (elong, flat) = if major > 0.0 {
        ((minor / major).sqrt(), (least / major).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    let sphere = (36.0 * pi * v * v).powf(1.0 / 3.0);
    vec![
        v,
        a,
        a / v,
        sphere / a,
        v / (pi.sqrt() * a.powf(1.5)),
        36.0 * pi * v * v / a.powi(3),
        a / sphere,
        d3,
        d2,
        4.0 * major.sqrt(),
        4.0 * minor.sqrt(),
        4.0 * least.sqrt(),
        elong,
        flat,
    ]
}

// ---- first order ----

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = (sorted.len() - 1) as f64 * q;
    let lo = rank.floor();
    if lo as usize + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let (a, b) = (sorted[lo as usize], sorted[lo as usize + 1]);
    a + (rank - lo) * (b - a)
}

fn first_order(vox: &BTreeMap<P, f64>, lv: &BTreeMap<P, usize>, sp: [f64; 3]) -> Vec<f64> {
    let x: Vec<f64> = vox.values().cloned().collect();
    let n = x.len() as f64;
    let mut s = x.clone();
    s.sort_by(f64::total_cmp);
    let mean = x.iter().sum::<f64>() / n;
    let moment = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let var = moment(2);
    let (skew, kurt) = if var > 0.0 {
        (moment(3) / var.powf(1.5), moment(4) / var.powi(2))
    } else {
        (0.0, 0.0)
    };
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let (p10, p90) = (quantile(&s, 0.1), quantile(&s, 0.9));
    let inner: Vec<f64> = x.iter().cloned().filter(|v| (p10..=p90).contains(v)).collect();
    let imean = inner.iter().sum::<f64>() / inner.len() as f64;
    let mut hist: HashMap<usize, f64> = HashMap::new();
    for l in lv.values() {
        *hist.entry(*l).or_default() += 1.0;
    }
    vec![
        energy,
        energy * sp[0] * sp[1] * sp[2],
        hist.values().map(|c| h(c / n)).sum(),
        s[0],
        p10,
        p90,
        s[s.len() - 1],
        mean,
        quantile(&s, 0.5),
        quantile(&s, 0.75) - quantile(&s, 0.25),
        s[s.len() - 1] - s[0],
        x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n,
        inner.iter().map(|v| (v - imean).abs()).sum::<f64>() / inner.len() as f64,
        (energy / n).sqrt(),
        skew,
        kurt,
        var,
        hist.values().map(|c| (c / n).powi(2)).sum(),
    ]
}

// ---- co-occurrence ----

fn glcm(lv: &BTreeMap<P, usize>) -> Vec<f64> {
    let ng = *lv.values().max().unwrap();
    let mut acc = vec![0.0; 24];
    let mut used = 0.0;
    for d in OFFSETS {
        let mut counts = vec![vec![0.0; ng + 1]; ng + 1];
        for (p, &a) in lv {
            if let Some(&b) = lv.get(&plus(*p, d, 1)) {
                counts[a][b] += 1.0;
                counts[b][a] += 1.0;
            }
        }
        let total: f64 = counts.iter().flatten().sum();
        if total == 0.0 {
            continue;
        }
        let p: Vec<Vec<f64>> = counts.iter().map(|r| r.iter().map(|c| c / total).collect()).collect();
        for (s, v) in acc.iter_mut().zip(glcm_one(&p, ng)) {
            *s += v;
        }
        used += 1.0;
    }
    if used == 0.0 {
        return vec![f64::NAN; 24];
    }
    acc.iter().map(|s| s / used).collect()
}

/// Features of a normalised symmetric matrix indexed `1..=ng`.
fn glcm_one(p: &[Vec<f64>], ng: usize) -> Vec<f64> {
    let r = 1..=ng;
    let px: Vec<f64> = (0..=ng).map(|i| if i == 0 { 0.0 } else { r.clone().map(|j| p[i][j]).sum() }).collect();
    let sum2 = |f: &dyn Fn(f64, f64, f64) -> f64| -> f64 {
        let mut s = 0.0;
        for i in r.clone() {
            for j in r.clone() {
                s += f(i as f64, j as f64, p[i][j]);
            }
        }
        s
    };
    let ux = sum2(&|i, _, q| i * q);
    let var = sum2(&|i, _, q| (i - ux).powi(2) * q);
    let auto = sum2(&|i, j, q| i * j * q);
    let ngf = ng as f64;

    let mut pdiff = vec![0.0; ng];
    let mut psum = vec![0.0; 2 * ng + 1];
    for i in r.clone() {
        for j in r.clone() {
            pdiff[i.abs_diff(j)] += p[i][j];
            psum[i + j] += p[i][j];
        }
    }
    let da: f64 = pdiff.iter().enumerate().map(|(k, q)| k as f64 * q).sum();
    let hxy = sum2(&|_, _, q| h(q));
    let hx: f64 = px.iter().map(|&q| h(q)).sum();
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in r.clone() {
        for j in r.clone() {
            let m = px[i] * px[j];
            if m > 0.0 {
                hxy1 -= p[i][j] * m.log2();
                hxy2 -= m * m.log2();
            }
        }
    }
    let imc1 = if hx > 0.0 { (hxy - hxy1) / hx } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy).max(0.0)).exp()).sqrt();

    vec![
        auto,
        ux,
        sum2(&|i, j, q| (i + j - 2.0 * ux).powi(4) * q),
        sum2(&|i, j, q| (i + j - 2.0 * ux).powi(3) * q),
        sum2(&|i, j, q| (i + j - 2.0 * ux).powi(2) * q),
        sum2(&|i, j, q| (i - j).powi(2) * q),
        if var > 0.0 { (auto - ux * ux) / var } else { 1.0 },
        da,
        pdiff.iter().map(|&q| h(q)).sum(),
        pdiff.iter().enumerate().map(|(k, q)| (k as f64 - da).powi(2) * q).sum(),
        sum2(&|_, _, q| q * q),
        hxy,
        imc1,
        imc2,
        sum2(&|i, j, q| q / (1.0 + (i - j).powi(2))),
        mcc(p, &px, ng),
        sum2(&|i, j, q| q / (1.0 + (i - j).powi(2) / (ngf * ngf))),
        sum2(&|i, j, q| q / (1.0 + (i - j).abs())),
        sum2(&|i, j, q| q / (1.0 + (i - j).abs() / ngf)),
        sum2(&|i, j, q| if i != j { q / (i - j).powi(2) } else { 0.0 }),
        p.iter().flatten().cloned().fold(0.0, f64::max),
        psum.iter().enumerate().map(|(k, q)| k as f64 * q).sum(),
        psum.iter().map(|&q| h(q)).sum(),
        var,
    ]
}

/// Square root of the second largest eigenvalue of
/// `Q(i,j) = sum_k p(i,k) p(j,k) / (px(i) px(k))` over occupied levels.
/// `Q` is similar to `S = M M^T` with `M(i,k) = p(i,k) / sqrt(px(i) px(k))`,
/// whose eigenvalues come from cyclic Jacobi rotations.
fn mcc(p: &[Vec<f64>], px: &[f64], ng: usize) -> f64 {
    let occ: Vec<usize> = (1..=ng).filter(|&i| px[i] > 0.0).collect();
    if occ.len() < 2 {
        return 1.0;
    }
    let k = occ.len();
    let m = |a: usize, b: usize| p[occ[a]][occ[b]] / (px[occ[a]] * px[occ[b]]).sqrt();
    let mut s: Vec<Vec<f64>> = (0..k).map(|a| (0..k).map(|b| (0..k).map(|c| m(a, c) * m(b, c)).sum()).collect()).collect();
    let mut ev = jacobi_eigenvalues(&mut s);
    ev.sort_by(|a, b| b.total_cmp(a));
    let second = if ev[1] <= 1e-12 * ev[0] { 0.0 } else { ev[1] };
    second.sqrt()
}

fn jacobi_eigenvalues(a: &mut [Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (arp, arq) = (a[r][p], a[r][q]);
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[p][r], a[q][r]);
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

// ---- size-zone style matrices ----

/// Emphasis statistics of a `(level, size) -> count` table.
fn size_stats(m: &BTreeMap<(usize, usize), f64>, np: usize) -> Vec<f64> {
    let total: f64 = m.values().sum();
    let each = |f: &dyn Fn(f64, f64) -> f64| -> f64 { m.iter().map(|(&(i, j), c)| f(i as f64, j as f64) * c / total).sum() };
    let mut by_level: BTreeMap<usize, f64> = BTreeMap::new();
    let mut by_size: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(i, j), &c) in m {
        *by_level.entry(i).or_default() += c;
        *by_size.entry(j).or_default() += c;
    }
    let gln: f64 = by_level.values().map(|v| v * v).sum();
    let sn: f64 = by_size.values().map(|v| v * v).sum();
    let mi = each(&|i, _| i);
    let mj = each(&|_, j| j);
    vec![
        each(&|_, j| 1.0 / (j * j)),
        each(&|_, j| j * j),
        gln / total,
        gln / (total * total),
        sn / total,
        sn / (total * total),
        total / np as f64,
        each(&|i, _| (i - mi).powi(2)),
        each(&|_, j| (j - mj).powi(2)),
        m.values().map(|c| h(c / total)).sum(),
        each(&|i, _| 1.0 / (i * i)),
        each(&|i, _| i * i),
        each(&|i, j| 1.0 / (i * i * j * j)),
        each(&|i, j| i * i / (j * j)),
        each(&|i, j| j * j / (i * i)),
        each(&|i, j| i * i * j * j),
    ]
}

fn glrlm(lv: &BTreeMap<P, usize>) -> Vec<f64> {
    let mut acc = vec![0.0; 16];
    for d in OFFSETS {
        let mut seen: BTreeSet<P> = BTreeSet::new();
        let mut m: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&p, &l) in lv {
            if seen.contains(&p) {
                continue;
            }
            let same = |k: i64| lv.get(&plus(p, d, k)) == Some(&l);
            let mut lo = 0;
            while same(lo - 1) {
                lo -= 1;
            }
            let mut hi = 0;
            while same(hi + 1) {
                hi += 1;
            }
            for k in lo..=hi {
                seen.insert(plus(p, d, k));
            }
            *m.entry((l, (hi - lo + 1) as usize)).or_default() += 1.0;
        }
        for (s, v) in acc.iter_mut().zip(size_stats(&m, lv.len())) {
            *s += v;
        }
    }
    acc.iter().map(|s| s / OFFSETS.len() as f64).collect()
}

fn find(parent: &mut Vec<usize>, i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut i = i;
    while parent[i] != r {
        let next = parent[i];
        parent[i] = r;
        i = next;
    }
    r
}

fn glszm(lv: &BTreeMap<P, usize>) -> Vec<f64> {
    let pts: Vec<(P, usize)> = lv.iter().map(|(p, l)| (*p, *l)).collect();
    let index: HashMap<P, usize> = pts.iter().enumerate().map(|(k, (p, _))| (*p, k)).collect();
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    for (k, &(p, l)) in pts.iter().enumerate() {
        for d in neighbours26() {
            if let Some(&o) = index.get(&plus(p, d, 1)) {
                if pts[o].1 == l {
                    let (a, b) = (find(&mut parent, k), find(&mut parent, o));
                    parent[a] = b;
                }
            }
        }
    }
    let mut zones: HashMap<usize, (usize, usize)> = HashMap::new();
    for (k, &(_, l)) in pts.iter().enumerate() {
        let r = find(&mut parent, k);
        zones.entry(r).or_insert((l, 0)).1 += 1;
    }
    let mut m: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (l, size) in zones.into_values() {
        *m.entry((l, size)).or_default() += 1.0;
    }
    size_stats(&m, pts.len())
}

fn gldm(lv: &BTreeMap<P, usize>) -> Vec<f64> {
    let mut m: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&p, &l) in lv {
        let dep = 1 + neighbours26().into_iter().filter(|&d| lv.get(&plus(p, d, 1)) == Some(&l)).count();
        *m.entry((l, dep)).or_default() += 1.0;
    }
    let f = size_stats(&m, lv.len());
    [0, 1, 2, 4, 5, 7, 8, 9, 10, 11, 12, 13, 14, 15].iter().map(|&k| f[k]).collect()
}
