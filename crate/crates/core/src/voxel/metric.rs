use super::grid::{GridKind, VoxelGrid};
use crate::error::{Error, Result};

/// Threshold used for both binarization and IOU unless stated otherwise.
pub const DEFAULT_THRESHOLD: f64 = 0.8;

fn check_threshold(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("threshold {p} outside (0, 1)")))
    }
}

/// Cell is 1 iff its value is strictly greater than `p`.
///
/// Cells are stored as `f32`, so the comparison is made against `p` rounded
/// to `f32`; a stored 0.8 is then not above a threshold of 0.8.
pub fn binarize(g: &VoxelGrid, p: f64) -> Result<VoxelGrid> {
    check_threshold(p)?;
    let p = p as f32;
    let values = g.values().iter().map(|&v| if v > p { 1.0 } else { 0.0 }).collect();
    VoxelGrid::new(g.resolution(), g.spacing(), values, GridKind::Binary)
}

/// Voxel intersection-over-union of `{prediction > p}` against the binary
/// ground truth. Two empty sets score 1.
pub fn iou(prediction: &VoxelGrid, truth: &VoxelGrid, p: f64) -> Result<f64> {
    check_threshold(p)?;
    if prediction.resolution() != truth.resolution() {
        return Err(Error::Dimension(format!(
            "iou of {}³ and {}³ grids",
            prediction.resolution(),
            truth.resolution()
        )));
    }
    if truth.kind() != GridKind::Binary {
        return Err(Error::Parameter("iou ground truth must be a binary grid".into()));
    }
    let p = p as f32;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in prediction.values().iter().zip(truth.values()) {
        let pa = a > p;
        let pb = b == 1.0;
        inter += (pa && pb) as usize;
        union += (pa || pb) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent triple-loop oracle over (x, y, z) coordinates.
    fn brute_force_iou(a: &VoxelGrid, b: &VoxelGrid, p: f64) -> f64 {
        let n = a.resolution();
        let (mut i, mut u) = (0u32, 0u32);
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let ya = a.get(x, y, z) > p as f32;
                    let xb = b.get(x, y, z) == 1.0;
                    if ya && xb {
                        i += 1;
                    }
                    if ya || xb {
                        u += 1;
                    }
                }
            }
        }
        if u == 0 {
            1.0
        } else {
            i as f64 / u as f64
        }
    }

    #[test]
    fn identity_and_disjoint() {
        let a = VoxelGrid::from_fn(4, 1.0, |x, y, _| x == y).unwrap();
        assert_eq!(iou(&a, &a, 0.8).unwrap(), 1.0);
        let p = VoxelGrid::from_fn(4, 1.0, |x, y, z| (x, y, z) == (0, 0, 0) || (x, y, z) == (1, 0, 0)).unwrap();
        let q = VoxelGrid::from_fn(4, 1.0, |x, y, z| (x, y, z) == (3, 3, 3) || (x, y, z) == (2, 3, 3)).unwrap();
        assert_eq!(iou(&p, &q, 0.8).unwrap(), 0.0);
    }

    #[test]
    fn partial_overlap_on_two_cubed_grid() {
        // 0.9 at cells 0..4, truth at cells 2..6 -> intersection 2, union 6.
        let mut av = vec![0.0f32; 8];
        av[..4].fill(0.9);
        let a = VoxelGrid::new(2, 1.0, av, GridKind::Probabilistic).unwrap();
        let mut bv = vec![0.0f32; 8];
        bv[2..6].fill(1.0);
        let b = VoxelGrid::new(2, 1.0, bv, GridKind::Binary).unwrap();
        let expected = brute_force_iou(&a, &b, 0.8);
        assert_eq!(expected, 2.0 / 6.0);
        assert_eq!(iou(&a, &b, 0.8).unwrap(), expected);
    }

    #[test]
    fn empty_pair_is_perfect_agreement() {
        let e = VoxelGrid::empty(4, 1.0).unwrap();
        assert_eq!(iou(&e, &e, 0.8).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        let a = VoxelGrid::empty(4, 1.0).unwrap();
        let b = VoxelGrid::empty(8, 1.0).unwrap();
        assert!(matches!(iou(&a, &b, 0.8), Err(Error::Dimension(_))));
        assert!(matches!(iou(&a, &a, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(binarize(&a, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn binarize_is_strict() {
        let g = VoxelGrid::new(1, 1.0, vec![0.8], GridKind::Probabilistic).unwrap();
        assert_eq!(binarize(&g, 0.8).unwrap().values(), &[0.0]);
        let mut v = vec![0.0f32; 8];
        v[0] = 0.79;
        v[1] = 0.81;
        let g = VoxelGrid::new(2, 1.0, v, GridKind::Probabilistic).unwrap();
        let b = binarize(&g, 0.8).unwrap();
        assert_eq!(&b.values()[..2], &[0.0, 1.0]);
        assert_eq!(b.kind(), GridKind::Binary);
        assert_eq!(binarize(&VoxelGrid::empty(4, 1.0).unwrap(), 0.8).unwrap().occupied_count(), 0);
    }

    proptest! {
        #[test]
        fn matches_oracle_and_is_symmetric(a in proptest::collection::vec(any::<bool>(), 512), b in proptest::collection::vec(any::<bool>(), 512)) {
            let ga = VoxelGrid::new(8, 1.0, a.iter().map(|&v| v as u8 as f32).collect(), GridKind::Binary).unwrap();
            let gb = VoxelGrid::new(8, 1.0, b.iter().map(|&v| v as u8 as f32).collect(), GridKind::Binary).unwrap();
            let v = iou(&ga, &gb, 0.8).unwrap();
            prop_assert_eq!(v, brute_force_iou(&ga, &gb, 0.8));
            prop_assert_eq!(v, iou(&gb, &ga, 0.8).unwrap());
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
