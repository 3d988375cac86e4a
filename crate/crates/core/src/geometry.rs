//! Distances, radial basis features, RMSD and rigid motions.

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chem::Molecule;
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

pub fn pairwise_distance(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).norm()
}

/// Gaussian radial basis functions with a shared width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfBank {
    centers: Vec<f64>,
    width: f64,
}

impl Default for RbfBank {
    /// 16 centers on [0, 8] Å, width equal to the spacing.
    fn default() -> Self {
        Self::evenly_spaced(16, 0.0, 8.0, None).expect("default bank is valid")
    }
}

impl RbfBank {
    pub fn new(centers: Vec<f64>, width: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Input("RBF bank needs at least one center".into()));
        }
        if !centers.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Input(
                "RBF centers must be strictly increasing".into(),
            ));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Input(format!(
                "RBF width must be positive, got {width}"
            )));
        }
        Ok(Self { centers, width })
    }

    /// `count` centers from `start` to `end` inclusive; the width defaults
    /// to the center spacing.
    pub fn evenly_spaced(count: usize, start: f64, end: f64, width: Option<f64>) -> Result<Self> {
        if count == 0 {
            return Err(Error::Input("RBF bank needs at least one center".into()));
        }
        if count == 1 {
            return Self::new(vec![start], width.unwrap_or(1.0));
        }
        let step = (end - start) / (count - 1) as f64;
        let centers = (0..count).map(|i| start + step * i as f64).collect();
        Self::new(centers, width.unwrap_or(step))
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// `exp(-(d - c_i)^2 / (2 w^2))` for each center `c_i`.
pub fn rbf_expand(d: f64, bank: &RbfBank) -> Vec<f64> {
    let denom = 2.0 * bank.width * bank.width;
    bank.centers
        .iter()
        .map(|c| (-(d - c) * (d - c) / denom).exp())
        .collect()
}

/// Root-mean-square deviation with positional correspondence and no
/// superposition.
pub fn rmsd(a: &Molecule, b: &Molecule) -> Result<f64> {
    let pa: Vec<Vec3> = a.positions().copied().collect();
    let pb: Vec<Vec3> = b.positions().copied().collect();
    rmsd_coords(&pa, &pb)
}

pub fn rmsd_coords(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    check_sizes(a, b)?;
    let sum: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Mean of the per-atom distances. Reported alongside [`rmsd`]; it is
/// never larger than the RMSD.
pub fn mean_deviation(a: &Molecule, b: &Molecule) -> Result<f64> {
    let pa: Vec<Vec3> = a.positions().copied().collect();
    let pb: Vec<Vec3> = b.positions().copied().collect();
    check_sizes(&pa, &pb)?;
    let sum: f64 = pa.iter().zip(&pb).map(|(p, q)| (p - q).norm()).sum();
    Ok(sum / pa.len() as f64)
}

/// RMSD after optimal superposition of `a` onto `b` (Kabsch).
pub fn rmsd_aligned(a: &Molecule, b: &Molecule) -> Result<f64> {
    let pa: Vec<Vec3> = a.positions().copied().collect();
    let pb: Vec<Vec3> = b.positions().copied().collect();
    check_sizes(&pa, &pb)?;
    let t = kabsch(&pa, &pb)?;
    rmsd_coords(&t.apply(&pa), &pb)
}

fn check_sizes(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Size {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Input("RMSD of empty coordinate sets".into()));
    }
    Ok(())
}

/// Proper rotation minimizing the RMSD between `mobile` and `target`
/// after centering both.
pub fn kabsch(mobile: &[Vec3], target: &[Vec3]) -> Result<RigidTransform> {
    check_sizes(mobile, target)?;
    let n = mobile.len() as f64;
    let cm = mobile.iter().sum::<Vec3>() / n;
    let ct = target.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (p, q) in mobile.iter().zip(target) {
        h += (p - cm) * (q - ct).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numeric("SVD failed in Kabsch alignment".into())),
    };
    let d = (vt.transpose() * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let rotation = vt.transpose() * fix * u.transpose();
    let translation = ct - rotation * cm;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl RigidTransform {
    /// Rejects rotations that are not orthogonal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if err > 1e-12 {
            return Err(Error::Transform(format!(
                "rotation is not orthogonal (max deviation {err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-12 {
            return Err(Error::Transform(format!("rotation determinant {det} != 1")));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::Transform("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn translation(offset: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: offset,
        }
    }

    /// Uniformly random rotation and a translation with components drawn
    /// from N(0, `spread`^2).
    pub fn random<R: Rng + ?Sized>(rng: &mut R, spread: f64) -> Self {
        let q = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let rotation = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q))
            .to_rotation_matrix()
            .into_inner();
        let translation = Vec3::from_fn(|_, _| spread * rng.sample::<f64, _>(StandardNormal));
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn offset(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|p| self.apply_point(p)).collect()
    }
}

pub fn apply_rigid(t: &RigidTransform, points: &[Vec3]) -> Vec<Vec3> {
    t.apply(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::Atom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mol(points: &[[f64; 3]]) -> Molecule {
        Molecule::new(points.iter().map(|p| Atom::new(1, *p)).collect(), vec![]).unwrap()
    }

    #[test]
    fn distances() {
        let d = |a: [f64; 3], b: [f64; 3]| pairwise_distance(&a.into(), &b.into());
        assert_eq!(d([0.0; 3], [3.0, 4.0, 0.0]), 5.0);
        assert_eq!(d([1.0; 3], [1.0; 3]), 0.0);
        assert!((d([1.0; 3], [2.0; 3]) - 1.7320508075688772).abs() < 1e-15);
    }

    #[test]
    fn rbf_values() {
        let bank = RbfBank::new(vec![1.0, 2.0, 3.0], 0.25).unwrap();
        assert_eq!(rbf_expand(2.0, &bank)[1], 1.0);
        assert!((rbf_expand(2.25, &bank)[1] - 0.6065306597126334).abs() < 1e-15);
        assert!((rbf_expand(2.75, &bank)[1] - 0.011108996538242306).abs() < 1e-15);
        assert!(rbf_expand(7.3, &bank).iter().all(|&g| g > 0.0 && g <= 1.0));
    }

    #[test]
    fn default_bank() {
        let b = RbfBank::default();
        assert_eq!(b.len(), 16);
        assert_eq!(b.centers()[15], 8.0);
        assert!((b.width() - 8.0 / 15.0).abs() < 1e-15);
        assert!(RbfBank::new(vec![1.0, 1.0], 1.0).is_err());
        assert!(RbfBank::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn rmsd_hand_cases() {
        let a = mol(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert_eq!(rmsd(&a, &a).unwrap(), 0.0);
        let p = mol(&[[0.0; 3]]);
        let q = mol(&[[3.0, 4.0, 0.0]]);
        assert_eq!(rmsd(&p, &q).unwrap(), 5.0);
        let b = mol(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!((rmsd(&a, &b).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((mean_deviation(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(rmsd(&a, &p), Err(Error::Size { .. })));
    }

    #[test]
    fn kabsch_recovers_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = mol(&[[0.0; 3], [1.5, 0.0, 0.0], [2.0, 1.3, 0.0], [0.2, -0.4, 1.1]]);
        let t = RigidTransform::random(&mut rng, 5.0);
        let pts: Vec<Vec3> = a.positions().copied().collect();
        let moved = t.apply(&pts);
        let b = mol(&moved.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>());
        assert!(rmsd(&a, &b).unwrap() > 0.1);
        assert!(rmsd_aligned(&a, &b).unwrap() < 1e-10);
    }

    #[test]
    fn rigid_examples() {
        let p = [Vec3::new(1.0, 0.0, 0.0)];
        assert_eq!(apply_rigid(&RigidTransform::identity(), &p), p.to_vec());
        let t = RigidTransform::translation(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(t.apply(&[Vec3::zeros()])[0], Vec3::new(1.0, 2.0, 3.0));
        let rz = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let t = RigidTransform::new(rz, Vec3::zeros()).unwrap();
        assert!((t.apply(&p)[0] - Vec3::new(0.0, 1.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_rotation() {
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(skew, Vec3::zeros()).is_err());
        let mirror = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(mirror, Vec3::zeros()).is_err());
    }

    #[test]
    fn random_rotation_is_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let t = RigidTransform::random(&mut rng, 1.0);
            assert!(RigidTransform::new(*t.rotation(), *t.offset()).is_ok());
        }
    }
}
