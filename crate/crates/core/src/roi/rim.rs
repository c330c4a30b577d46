use super::edt::signed_distance_in_box;
use super::{Provenance, RoiError, Voi};
use crate::cohort::VoxelBox;

/// Total width of the peritumoral rim band in mm.
pub const RIM_WIDTH_MM: f64 = 6.0;

/// Symmetric rim: `{x : |sdf(x)| <= total_width_mm / 2}`.
pub fn make_rim(voi: &Voi, total_width_mm: f64) -> Result<Voi, RoiError> {
    make_rim_split(voi, total_width_mm / 2.0, total_width_mm / 2.0)
}

/// Rim band reaching `inner_mm` into the lesion and `outer_mm` out of it,
/// clipped to the image bounds.
pub fn make_rim_split(voi: &Voi, inner_mm: f64, outer_mm: f64) -> Result<Voi, RoiError> {
    if !(inner_mm >= 0.0 && outer_mm >= 0.0 && inner_mm + outer_mm > 0.0) {
        return Err(RoiError::DegenerateRim);
    }
    let grid = &voi.grid;
    let bbox = VoxelBox::of_mask(grid, &voi.mask).ok_or(RoiError::Empty)?;
    let mut margin = [0usize; 3];
    for a in 0..3 {
        margin[a] = (outer_mm / grid.spacing[a]).ceil() as usize + 1;
    }
    let bx = bbox.expand(margin, grid);
    let sdf = signed_distance_in_box(grid, &voi.mask, &bx);
    let mut mask = vec![false; grid.len()];
    let mut k = 0;
    let mut any = false;
    for z in bx.lo[2]..bx.hi[2] {
        for y in bx.lo[1]..bx.hi[1] {
            for x in bx.lo[0]..bx.hi[0] {
                let d = sdf[k];
                k += 1;
                if d >= -inner_mm && d <= outer_mm {
                    mask[grid.index(x, y, z)] = true;
                    any = true;
                }
            }
        }
    }
    if !any {
        return Err(RoiError::DegenerateRim);
    }
    Ok(Voi {
        grid: *grid,
        mask,
        provenance: Provenance::Rim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Grid;

    fn ball(n: usize, r: f64) -> (Voi, [f64; 3]) {
        let g = Grid::isotropic([n, n, n], 1.0);
        let c = [(n / 2) as f64; 3];
        let mask = (0..g.len())
            .map(|i| {
                let p = g.coords(i);
                let d2: f64 = (0..3).map(|a| (p[a] as f64 - c[a]).powi(2)).sum();
                d2.sqrt() <= r
            })
            .collect();
        (Voi::new(g, mask, Provenance::Original).unwrap(), c)
    }

    fn is_surface(voi: &Voi, i: usize) -> bool {
        let g = &voi.grid;
        let c = g.coords(i);
        voi.mask[i]
            && [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
                .iter()
                .any(|d| g.offset(c, *d).map(|j| !voi.mask[j]).unwrap_or(true))
    }

    #[test]
    fn ball_rim_is_six_mm_shell() {
        let (voi, c) = ball(36, 10.0);
        let rim = make_rim(&voi, RIM_WIDTH_MM).unwrap();
        for i in 0..voi.grid.len() {
            let p = voi.grid.coords(i);
            let r: f64 = (0..3).map(|a| (p[a] as f64 - c[a]).powi(2)).sum::<f64>().sqrt();
            if (8.0..=12.0).contains(&r) {
                assert!(rim.mask[i], "r={r} missing from rim");
            }
            if !(6.0..=14.0).contains(&r) {
                assert!(!rim.mask[i], "r={r} should not be in rim");
            }
        }
    }

    #[test]
    fn deep_interior_excluded_and_surface_covered() {
        let (voi, _) = ball(30, 9.0);
        let rim = make_rim(&voi, 6.0).unwrap();
        let sdf = crate::roi::edt::signed_distance(&voi.grid, &voi.mask);
        for i in 0..voi.grid.len() {
            if sdf[i] < -3.0 {
                assert!(!rim.mask[i]);
            }
            if is_surface(&voi, i) {
                assert!(rim.mask[i]);
            }
        }
    }

    #[test]
    fn rim_of_rim_contains_first_rim_surface() {
        let (voi, _) = ball(34, 8.0);
        let rim = make_rim(&voi, 6.0).unwrap();
        let rim2 = make_rim(&rim, 6.0).unwrap();
        for i in 0..rim.grid.len() {
            if is_surface(&rim, i) {
                assert!(rim2.mask[i]);
            }
        }
    }
}
