use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{DgnError, Result};
use crate::rng::{substream, Stream};

/// Draws used to pin the perturbation scale for a target non-orthogonality.
pub const CALIBRATION_DRAWS: usize = 100_000;
const CALIBRATION_SEED: u64 = 0x5eed_ca1b;
/// Dilations closer to zero than this are redrawn.
pub const MIN_ABS_GAMMA: f64 = 0.1;

/// `x ↦ γ·A·x + q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub gamma: f64,
    pub a: Matrix3<f64>,
    pub q: Vector3<f64>,
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform {
            gamma: 1.0,
            a: Matrix3::identity(),
            q: Vector3::zeros(),
        }
    }

    pub fn apply_point(&self, x: &Point) -> Point {
        let y = self.gamma * (self.a * Vector3::from(*x)) + self.q;
        [y[0], y[1], y[2]]
    }

    /// Frobenius norm of `AᵀA − I`.
    pub fn orthogonality_defect(&self) -> f64 {
        (self.a.transpose() * self.a - Matrix3::identity()).norm()
    }
}

pub fn apply_transform(t: &AffineTransform, coords: &[Point]) -> Vec<Point> {
    coords.iter().map(|x| t.apply_point(x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformFamily {
    Orthogonal,
    OrthogonalDilation,
    NonOrthogonal,
}

impl TransformFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformFamily::Orthogonal => "orthogonal",
            TransformFamily::OrthogonalDilation => "orthogonal_dilation",
            TransformFamily::NonOrthogonal => "non_orthogonal",
        }
    }
}

impl fmt::Display for TransformFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformFamily {
    type Err = DgnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" => Ok(TransformFamily::Orthogonal),
            "orthogonal_dilation" => Ok(TransformFamily::OrthogonalDilation),
            "non_orthogonal" => Ok(TransformFamily::NonOrthogonal),
            other => Err(DgnError::Invalid(format!("unknown transform family '{other}'"))),
        }
    }
}

/// A transform family plus, for the non-orthogonal family, its target `E‖AᵀA − I‖_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformClass {
    pub family: TransformFamily,
    pub mu: f64,
}

impl TransformClass {
    pub fn orthogonal() -> Self {
        TransformClass {
            family: TransformFamily::Orthogonal,
            mu: 0.0,
        }
    }

    pub fn orthogonal_dilation() -> Self {
        TransformClass {
            family: TransformFamily::OrthogonalDilation,
            mu: 0.0,
        }
    }

    pub fn non_orthogonal(mu: f64) -> Result<Self> {
        Self::new(TransformFamily::NonOrthogonal, mu)
    }

    pub fn new(family: TransformFamily, mu: f64) -> Result<Self> {
        let c = TransformClass { family, mu };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let non_orth = self.family == TransformFamily::NonOrthogonal;
        if !(self.mu.is_finite() && self.mu >= 0.0) || (self.mu > 0.0) != non_orth {
            return Err(DgnError::Invalid(format!(
                "mu = {} is invalid for family {}",
                self.mu, self.family
            )));
        }
        Ok(())
    }

    /// Short stable label, e.g. `orthogonal` or `non_orthogonal_mu1.5`.
    pub fn tag(&self) -> String {
        match self.family {
            TransformFamily::NonOrthogonal => format!("{}_mu{}", self.family, self.mu),
            _ => self.family.to_string(),
        }
    }

    /// The five test-set columns, in reporting order.
    pub fn table_columns() -> [TransformClass; 5] {
        let non = |mu| TransformClass {
            family: TransformFamily::NonOrthogonal,
            mu,
        };
        [
            TransformClass::orthogonal(),
            TransformClass::orthogonal_dilation(),
            non(0.5),
            non(1.5),
            non(3.0),
        ]
    }
}

pub fn rotation_from_angles(t1: f64, t2: f64, t3: f64) -> Matrix3<f64> {
    let (s1, c1) = t1.sin_cos();
    let (s2, c2) = t2.sin_cos();
    let (s3, c3) = t3.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, c1, -s1, 0.0, s1, c1);
    let ry = Matrix3::new(c2, 0.0, s2, 0.0, 1.0, 0.0, -s2, 0.0, c2);
    let rz = Matrix3::new(c3, -s3, 0.0, s3, c3, 0.0, 0.0, 0.0, 1.0);
    rx * ry * rz
}

/// `R_x(θ₁)·R_y(θ₂)·R_z(θ₃)` with standard-normal angles.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    let t1: f64 = rng.sample(StandardNormal);
    let t2: f64 = rng.sample(StandardNormal);
    let t3: f64 = rng.sample(StandardNormal);
    rotation_from_angles(t1, t2, t3)
}

fn normal_matrix<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    Matrix3::from_fn(|_, _| rng.sample(StandardNormal))
}

fn perturbation_defect(n: &Matrix3<f64>, eps: f64) -> f64 {
    let p = Matrix3::identity() + n * eps;
    (p.transpose() * p - Matrix3::identity()).norm()
}

/// Perturbation scale `ε` such that `A = Q(I + εN)` has `E‖AᵀA − I‖_F ≈ mu_target`.
///
/// The expectation is estimated on `draws` fixed samples of `N` (the rotation
/// cancels in `AᵀA`) and `ε` is found by bisection on a doubling bracket.
pub fn calibrate_epsilon<R: Rng + ?Sized>(mu_target: f64, rng: &mut R, draws: usize) -> Result<f64> {
    if !(mu_target > 0.0 && mu_target.is_finite()) {
        return Err(DgnError::Invalid(format!(
            "calibration target must be positive, got {mu_target}"
        )));
    }
    if draws == 0 {
        return Err(DgnError::Invalid("calibration needs at least one draw".into()));
    }
    let samples: Vec<Matrix3<f64>> = (0..draws).map(|_| normal_matrix(rng)).collect();
    let mean_defect =
        |eps: f64| samples.iter().map(|n| perturbation_defect(n, eps)).sum::<f64>() / draws as f64;

    let (mut lo, mut hi) = (0.0, 0.5);
    while mean_defect(hi) < mu_target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(DgnError::Invalid(format!("cannot bracket mu = {mu_target}")));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_defect(mid) < mu_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Calibrated `ε` for `mu`, computed once per process from a fixed stream.
pub fn calibrated_epsilon(mu: f64) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&eps) = cache.lock().expect("calibration cache").get(&mu.to_bits()) {
        return Ok(eps);
    }
    let mut rng = substream(CALIBRATION_SEED, Stream::Calibration, 0);
    let eps = calibrate_epsilon(mu, &mut rng, CALIBRATION_DRAWS)?;
    cache
        .lock()
        .expect("calibration cache")
        .insert(mu.to_bits(), eps);
    Ok(eps)
}

/// Draws one transform from `class`.
///
/// Draw order is fixed: rotation angles, translation, then (when used) the
/// dilation and the perturbation matrix.
pub fn sample_transform<R: Rng + ?Sized>(class: &TransformClass, rng: &mut R) -> Result<AffineTransform> {
    class.validate()?;
    let eps = match class.family {
        TransformFamily::NonOrthogonal => Some(calibrated_epsilon(class.mu)?),
        _ => None,
    };
    let q_rot = random_orthogonal(rng);
    let q = Vector3::from_fn(|_, _| rng.sample(StandardNormal));
    let gamma = match class.family {
        TransformFamily::Orthogonal => 1.0,
        _ => loop {
            let g: f64 = 1.0 + rng.sample::<f64, _>(StandardNormal);
            if g.abs() >= MIN_ABS_GAMMA {
                break g;
            }
        },
    };
    let a = match eps {
        Some(eps) => q_rot * (Matrix3::identity() + normal_matrix(rng) * eps),
        None => q_rot,
    };
    Ok(AffineTransform { gamma, a, q })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{make_polytope, squared_distance, PolytopeKind};

    #[test]
    fn zero_angles_give_identity() {
        assert_eq!(rotation_from_angles(0.0, 0.0, 0.0), Matrix3::identity());
    }

    #[test]
    fn random_orthogonal_is_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let q = random_orthogonal(&mut rng);
            assert!((q.transpose() * q - Matrix3::identity()).norm() <= 1e-12);
            assert!((q.determinant() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn apply_examples() {
        let x = vec![[1.0, 1.0, 1.0], [-2.0, 0.5, 3.0]];
        assert_eq!(apply_transform(&AffineTransform::identity(), &x), x);
        let t = AffineTransform {
            gamma: 2.0,
            a: Matrix3::identity(),
            q: Vector3::new(1.0, 0.0, 0.0),
        };
        assert_eq!(t.apply_point(&[1.0, 1.0, 1.0]), [3.0, 2.0, 2.0]);
    }

    #[test]
    fn orthogonal_family_has_unit_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let t = sample_transform(&TransformClass::orthogonal(), &mut rng).unwrap();
            assert_eq!(t.gamma, 1.0);
            assert!(t.orthogonality_defect() < 1e-12);
        }
    }

    #[test]
    fn isometries_and_similarities_on_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = make_polytope(PolytopeKind::Dodecahedron);
        for class in [TransformClass::orthogonal(), TransformClass::orthogonal_dilation()] {
            for _ in 0..50 {
                let t = sample_transform(&class, &mut rng).unwrap();
                let y = apply_transform(&t, &p.vertices);
                for i in 0..y.len() {
                    for j in 0..y.len() {
                        let before = squared_distance(&p.vertices[i], &p.vertices[j]);
                        let after = squared_distance(&y[i], &y[j]);
                        let expect = t.gamma * t.gamma * before;
                        assert!((after - expect).abs() <= 1e-12 * expect.max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn dilation_mean_matches_truncated_normal() {
        // Oracle: mean of N(1,1) conditioned on |γ| ≥ 0.1, by Simpson quadrature.
        let pdf = |x: f64| (-(x - 1.0) * (x - 1.0) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
            let n = 20_000;
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for k in 1..n {
                s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let mass_cut = simpson(&pdf, -MIN_ABS_GAMMA, MIN_ABS_GAMMA);
        let moment_cut = simpson(&|x| x * pdf(x), -MIN_ABS_GAMMA, MIN_ABS_GAMMA);
        let oracle = (1.0 - moment_cut) / (1.0 - mass_cut);
        assert!((oracle - 1.0507).abs() < 1e-3, "oracle {oracle}");

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let t = sample_transform(&TransformClass::orthogonal_dilation(), &mut rng).unwrap();
            assert!(t.gamma.abs() >= MIN_ABS_GAMMA);
            sum += t.gamma;
        }
        let mean = sum / n as f64;
        assert!((mean - oracle).abs() <= 0.05, "mean {mean} oracle {oracle}");
    }

    #[test]
    fn zero_epsilon_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = normal_matrix(&mut rng);
        assert_eq!(perturbation_defect(&n, 0.0), 0.0);
    }

    #[test]
    fn calibration_hits_target_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let low = calibrate_epsilon(0.5, &mut rng, 20_000).unwrap();
        let high = calibrate_epsilon(3.0, &mut rng, 20_000).unwrap();
        assert!(high > low);

        // Independent Monte Carlo check on fresh draws.
        let mut check = ChaCha8Rng::seed_from_u64(60);
        for (mu, eps) in [(0.5, low), (3.0, high)] {
            let n = 100_000;
            let est: f64 = (0..n)
                .map(|_| perturbation_defect(&normal_matrix(&mut check), eps))
                .sum::<f64>()
                / n as f64;
            assert!((est - mu).abs() <= 0.01 * mu, "mu {mu}: estimate {est}");
        }
        assert!(calibrate_epsilon(0.0, &mut rng, 10).is_err());
        assert!(calibrate_epsilon(-1.0, &mut rng, 10).is_err());
    }

    #[test]
    fn non_orthogonal_sampler_mean_defect() {
        let class = TransformClass::non_orthogonal(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_transform(&class, &mut rng).unwrap().orthogonality_defect())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() <= 0.02, "mean defect {mean}");
    }

    #[test]
    fn class_validation() {
        assert!(TransformClass::non_orthogonal(0.0).is_err());
        assert!(TransformClass::new(TransformFamily::Orthogonal, 0.5).is_err());
        assert!("rotation".parse::<TransformFamily>().is_err());
        assert_eq!(
            "orthogonal_dilation".parse::<TransformFamily>().unwrap(),
            TransformFamily::OrthogonalDilation
        );
    }

    #[test]
    fn same_seed_same_stream() {
        let class = TransformClass::non_orthogonal(1.5).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| sample_transform(&class, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }
}
