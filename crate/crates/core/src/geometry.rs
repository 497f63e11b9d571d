//! Random frozen-gas configurations in a periodic cube and the anisotropic
//! dipolar pair coupling.
//!
//! Lengths are measured in units where the mean density is one, so a cube
//! holding `n` atoms has edge `n^(1/3)`. The quantization axis is `z`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::error::{Error, Result};
use crate::rng::member_rng;

pub type Vec3 = [f64; 3];

/// Coupling constant `c_d` of a dipolar process: the product of the two
/// transition dipole moments involved.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
pub struct DipoleCoupling(f64);

impl DipoleCoupling {
    pub fn new(c_d: f64) -> Result<Self> {
        if !c_d.is_finite() {
            return Err(Error::InvalidArgument(format!("coupling constant must be finite, got {c_d}")));
        }
        Ok(Self(c_d))
    }

    /// Coupling of a process whose two transition moments are `mu_a` and `mu_b`.
    pub fn from_moments(mu_a: f64, mu_b: f64) -> Result<Self> {
        Self::new(mu_a * mu_b)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomConfiguration {
    box_edge: f64,
    positions: Vec<Vec3>,
    velocities: Option<Vec<Vec3>>,
    seed: Option<u64>,
}

/// Cube edge holding `n_atoms` at unit density.
pub fn box_edge_for(n_atoms: usize) -> f64 {
    (n_atoms as f64).cbrt()
}

/// Wrap a coordinate into `[0, edge)`.
#[inline]
pub fn wrap_coordinate(x: f64, edge: f64) -> f64 {
    let w = x - edge * (x / edge).floor();
    // rounding in the subtraction can land exactly on the upper edge
    if w >= edge || w < 0.0 {
        0.0
    } else {
        w
    }
}

impl AtomConfiguration {
    /// Build a configuration from explicit positions, wrapping them into the cube.
    pub fn from_positions(positions: Vec<Vec3>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("a configuration needs at least one atom".into()));
        }
        let edge = box_edge_for(positions.len());
        let positions = positions
            .into_iter()
            .map(|p| {
                if p.iter().any(|c| !c.is_finite()) {
                    Err(Error::InvalidArgument("non-finite position".into()))
                } else {
                    Ok(p.map(|c| wrap_coordinate(c, edge)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { box_edge: edge, positions, velocities: None, seed: None })
    }

    /// Uniform i.i.d. positions drawn from `rng`.
    pub fn sample<R: Rng + ?Sized>(n_atoms: usize, rng: &mut R) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::InvalidArgument("n_atoms must be at least 1".into()));
        }
        let edge = box_edge_for(n_atoms);
        let positions = (0..n_atoms)
            .map(|_| {
                let p: Vec3 = [rng.gen(), rng.gen(), rng.gen()];
                p.map(|u: f64| wrap_coordinate(u * edge, edge))
            })
            .collect();
        Ok(Self { box_edge: edge, positions, velocities: None, seed: None })
    }

    /// Give every atom speed `speed` along an independent uniformly random direction.
    pub fn with_random_velocities<R: Rng + ?Sized>(mut self, speed: f64, rng: &mut R) -> Result<Self> {
        if !(speed.is_finite() && speed >= 0.0) {
            return Err(Error::InvalidArgument(format!("speed must be finite and non-negative, got {speed}")));
        }
        let velocities = (0..self.n_atoms())
            .map(|_| {
                let dir: [f64; 3] = UnitSphere.sample(rng);
                let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
                dir.map(|c| speed * c / norm)
            })
            .collect();
        self.velocities = Some(velocities);
        Ok(self)
    }

    pub fn with_velocities(mut self, velocities: Vec<Vec3>) -> Result<Self> {
        if velocities.len() != self.n_atoms() {
            return Err(Error::InvalidArgument(format!(
                "{} velocities for {} atoms",
                velocities.len(),
                self.n_atoms()
            )));
        }
        self.velocities = Some(velocities);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn box_edge(&self) -> f64 {
        self.box_edge
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn velocities(&self) -> Option<&[Vec3]> {
        self.velocities.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Relabel atoms: atom `i` of the result is atom `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let positions = order.iter().map(|&i| self.positions[i]).collect();
        let velocities = self.velocities.as_ref().map(|v| order.iter().map(|&i| v[i]).collect());
        Self { box_edge: self.box_edge, positions, velocities, seed: self.seed }
    }

    /// Minimum-image displacement from atom `j` to atom `k`.
    pub fn displacement(&self, j: usize, k: usize) -> Vec3 {
        min_image_displacement(self.positions[j], self.positions[k], self.box_edge)
    }

    /// Smallest minimum-image separation over all pairs, `None` for a single atom.
    pub fn min_pair_separation(&self) -> Option<f64> {
        let n = self.n_atoms();
        let mut best: Option<f64> = None;
        for j in 0..n {
            for k in (j + 1)..n {
                let r = norm(self.displacement(j, k));
                best = Some(best.map_or(r, |b: f64| b.min(r)));
            }
        }
        best
    }

    /// Minimum-image displacement from each atom to its nearest neighbour.
    pub fn nearest_neighbor_displacements(&self) -> Vec<Vec3> {
        let n = self.n_atoms();
        (0..n)
            .filter_map(|j| {
                (0..n)
                    .filter(|&k| k != j)
                    .map(|k| self.displacement(j, k))
                    .min_by(|a, b| norm2(*a).total_cmp(&norm2(*b)))
            })
            .collect()
    }

    /// Ballistic step of length `dt`; positions are wrapped back into the cube.
    pub fn advance(&self, dt: f64) -> Result<Self> {
        let velocities = self
            .velocities
            .as_ref()
            .ok_or_else(|| Error::InvalidState("cannot advance a configuration without velocities".into()))?;
        let edge = self.box_edge;
        let positions = self
            .positions
            .iter()
            .zip(velocities)
            .map(|(p, v)| [0, 1, 2].map(|c| wrap_coordinate(p[c] + v[c] * dt, edge)))
            .collect();
        Ok(Self { box_edge: edge, positions, velocities: self.velocities.clone(), seed: self.seed })
    }

    /// Plain-text form: a `#` header with `n_atoms`, `box_edge` and `seed`,
    /// then one `x y z` (or `x y z vx vy vz`) row per atom.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# n_atoms {}", self.n_atoms());
        let _ = writeln!(out, "# box_edge {:.17e}", self.box_edge);
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "# seed {s}");
            }
            None => out.push_str("# seed none\n"),
        }
        for (i, p) in self.positions.iter().enumerate() {
            let _ = write!(out, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2]);
            if let Some(v) = &self.velocities {
                let _ = write!(out, " {:.17e} {:.17e} {:.17e}", v[i][0], v[i][1], v[i][2]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n_atoms: Option<usize> = None;
        let mut seed = None;
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: lineno + 1, message };
            if let Some(header) = line.strip_prefix('#') {
                let mut parts = header.split_whitespace();
                match (parts.next(), parts.next()) {
                    (Some("n_atoms"), Some(v)) => {
                        n_atoms = Some(v.parse().map_err(|e| parse_err(format!("n_atoms: {e}")))?)
                    }
                    (Some("seed"), Some("none")) => seed = None,
                    (Some("seed"), Some(v)) => {
                        seed = Some(v.parse().map_err(|e| parse_err(format!("seed: {e}")))?)
                    }
                    _ => {}
                }
                continue;
            }
            let values = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| parse_err(format!("{t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            match values.len() {
                3 => positions.push([values[0], values[1], values[2]]),
                6 => {
                    positions.push([values[0], values[1], values[2]]);
                    velocities.push([values[3], values[4], values[5]]);
                }
                k => return Err(parse_err(format!("expected 3 or 6 columns, found {k}"))),
            }
        }
        if let Some(n) = n_atoms {
            if n != positions.len() {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("header declares {n} atoms but {} rows follow", positions.len()),
                });
            }
        }
        if !velocities.is_empty() && velocities.len() != positions.len() {
            return Err(Error::Parse { line: 0, message: "velocity columns must be present on every row".into() });
        }
        let mut config = Self::from_positions(positions)?;
        if !velocities.is_empty() {
            config = config.with_velocities(velocities)?;
        }
        config.seed = seed;
        Ok(config)
    }
}

/// Positions for `n_atoms` drawn deterministically from `seed`.
pub fn sample_configuration(n_atoms: usize, seed: u64) -> Result<AtomConfiguration> {
    let mut rng = member_rng(seed, 0);
    Ok(AtomConfiguration::sample(n_atoms, &mut rng)?.with_seed(seed))
}

/// Displacement `b - a` folded onto its nearest periodic image; every
/// component ends up in `[-edge/2, edge/2)`.
#[inline]
pub fn min_image_displacement(a: Vec3, b: Vec3, box_edge: f64) -> Vec3 {
    [0, 1, 2].map(|c| {
        let d = b[c] - a[c];
        d - box_edge * (d / box_edge + 0.5).floor()
    })
}

#[inline]
pub fn norm2(v: Vec3) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

#[inline]
pub fn norm(v: Vec3) -> f64 {
    norm2(v).sqrt()
}

/// `c_d (1 - 3 cos^2 theta) / r^3` with theta measured from the z axis.
#[inline]
pub fn dipolar_coupling(displacement: Vec3, coupling: DipoleCoupling) -> Result<f64> {
    let r2 = norm2(displacement);
    if r2 == 0.0 {
        return Err(Error::SingularGeometry(0, 0));
    }
    let z2 = displacement[2] * displacement[2];
    // (r^2 - 3 z^2) / r^5 keeps the r^-3 scaling exact under doubling
    Ok(coupling.value() * (r2 - 3.0 * z2) / (r2 * r2 * r2.sqrt()))
}

/// Isotropic `1 / r^3` reference interaction.
#[inline]
pub fn isotropic_coupling(displacement: Vec3) -> Result<f64> {
    let r2 = norm2(displacement);
    if r2 == 0.0 {
        return Err(Error::SingularGeometry(0, 0));
    }
    Ok(1.0 / (r2 * r2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn unit_density_box_edges() {
        let one = sample_configuration(1, 7).unwrap();
        assert_eq!(one.box_edge(), 1.0);
        assert!(one.positions()[0].iter().all(|&c| (0.0..1.0).contains(&c)));
        let eight = sample_configuration(8, 123).unwrap();
        assert_eq!(eight.box_edge(), 2.0);
        assert!(sample_configuration(0, 1).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_configuration(10, 99).unwrap(), sample_configuration(10, 99).unwrap());
        assert_ne!(sample_configuration(10, 99).unwrap(), sample_configuration(10, 100).unwrap());
    }

    #[test]
    fn min_image_examples() {
        assert_eq!(min_image_displacement([0.0; 3], [0.0, 0.0, 1.5], 2.0), [0.0, 0.0, -0.5]);
        assert_eq!(min_image_displacement([0.3, 0.2, 0.1], [0.3, 0.2, 0.1], 2.0), [0.0; 3]);
        let d = min_image_displacement([0.1, 0.0, 0.0], [1.9, 0.0, 0.0], 2.0);
        assert_abs_diff_eq!(d[0], -0.2, epsilon = 1e-15);
        assert_eq!(&d[1..], &[0.0, 0.0]);
    }

    #[test]
    fn dipolar_examples() {
        let c = DipoleCoupling::new(1.0).unwrap();
        assert_eq!(dipolar_coupling([0.0, 0.0, 1.0], c).unwrap(), -2.0);
        assert_eq!(dipolar_coupling([1.0, 0.0, 0.0], c).unwrap(), 1.0);
        // cos^2 = 1/3 at unit length
        let s = (1.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(dipolar_coupling([s, s, s], c).unwrap(), 0.0, epsilon = 1e-15);
        assert!(matches!(dipolar_coupling([0.0; 3], c), Err(Error::SingularGeometry(..))));
        assert!(DipoleCoupling::new(f64::NAN).is_err());
    }

    #[test]
    fn advance_wraps_and_requires_velocities() {
        let cfg = AtomConfiguration::from_positions(vec![[0.5, 0.5, 0.9]]).unwrap();
        assert!(matches!(cfg.advance(1.0), Err(Error::InvalidState(_))));
        let cfg = cfg.with_velocities(vec![[0.0, 0.0, 0.05]]).unwrap();
        let moved = cfg.advance(2.0).unwrap();
        assert_abs_diff_eq!(moved.positions()[0][2], 0.0, epsilon = 1e-12);
        assert_eq!(cfg.advance(0.0).unwrap(), cfg);
    }

    #[test]
    fn ballistic_arc_length() {
        let mut rng = member_rng(4, 0);
        let cfg = AtomConfiguration::sample(5, &mut rng).unwrap().with_random_velocities(0.05, &mut rng).unwrap();
        for v in cfg.velocities().unwrap() {
            assert!((norm(*v) - 0.05).abs() <= 0.05 * 1e-12);
        }
        // many short steps accumulate v_s * T of path per atom
        let (steps, t_final) = (200, 3.4);
        let mut path = vec![0.0; cfg.n_atoms()];
        let mut cur = cfg.clone();
        for _ in 0..steps {
            let next = cur.advance(t_final / steps as f64).unwrap();
            for (i, acc) in path.iter_mut().enumerate() {
                *acc += norm(min_image_displacement(cur.positions()[i], next.positions()[i], cur.box_edge()));
            }
            cur = next;
        }
        for p in path {
            assert_abs_diff_eq!(p, 0.17, epsilon = 1e-9);
        }
    }

    #[test]
    fn text_round_trip_with_velocities() {
        let mut rng = member_rng(9, 2);
        let cfg = AtomConfiguration::sample(6, &mut rng)
            .unwrap()
            .with_random_velocities(0.1, &mut rng)
            .unwrap()
            .with_seed(9);
        let text = cfg.to_text();
        assert!(text.starts_with("# n_atoms 6\n"));
        assert_eq!(AtomConfiguration::from_text(&text).unwrap(), cfg);
        assert!(AtomConfiguration::from_text("# n_atoms 2\n0 0 0\n").is_err());
        assert!(AtomConfiguration::from_text("0 0\n").is_err());
    }

    #[test]
    fn angular_average_vanishes() {
        let mut rng = member_rng(1, 1);
        let c = DipoleCoupling::new(1.0).unwrap();
        let n = 200_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let d: [f64; 3] = UnitSphere.sample(&mut rng);
            let v = dipolar_coupling(d, c).unwrap();
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let stderr = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * stderr, "mean {mean} stderr {stderr}");
    }

    /// Mean nearest-neighbour distance at unit density is Gamma(4/3) (3/4pi)^(1/3).
    #[test]
    fn mean_nearest_neighbor_distance() {
        let expected = 0.892_979_511_569_249_2 * (3.0 / (4.0 * std::f64::consts::PI)).cbrt();
        assert_abs_diff_eq!(expected, 0.55396, epsilon = 1e-5);
        let mut total = 0.0;
        let mut count = 0usize;
        for i in 0..400 {
            let cfg = AtomConfiguration::sample(256, &mut member_rng(2024, i)).unwrap();
            for d in cfg.nearest_neighbor_displacements() {
                total += norm(d);
                count += 1;
            }
        }
        let mean = total / count as f64;
        assert!((mean - expected).abs() / expected < 0.02, "mean {mean}");
    }

    fn point(edge: f64) -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(0.0..edge)
    }

    proptest! {
        #[test]
        fn min_image_is_antisymmetric_and_in_range(a in point(2.0), b in point(2.0)) {
            let ab = min_image_displacement(a, b, 2.0);
            let ba = min_image_displacement(b, a, 2.0);
            for c in 0..3 {
                prop_assume!(((b[c] - a[c]).abs() - 1.0).abs() > 1e-12);
                prop_assert_eq!(ab[c], -ba[c]);
                prop_assert!((-1.0..1.0).contains(&ab[c]));
                let k = ((b[c] - a[c]) - ab[c]) / 2.0;
                prop_assert!((k - k.round()).abs() < 1e-12);
            }
        }

        #[test]
        fn coupling_scales_as_inverse_cube(d in prop::array::uniform3(-3.0f64..3.0)) {
            prop_assume!(norm(d) > 1e-3);
            let c = DipoleCoupling::new(1.3).unwrap();
            let v1 = dipolar_coupling(d, c).unwrap();
            let v2 = dipolar_coupling(d.map(|x| 2.0 * x), c).unwrap();
            prop_assert_eq!(v2, v1 / 8.0);
        }

        #[test]
        fn positions_stay_in_cube(seed in 0u64..1000, steps in 1usize..20, dt in -5.0f64..5.0) {
            let mut rng = member_rng(seed, 0);
            let mut cfg = AtomConfiguration::sample(7, &mut rng).unwrap().with_random_velocities(0.7, &mut rng).unwrap();
            for _ in 0..steps {
                cfg = cfg.advance(dt).unwrap();
                let edge = cfg.box_edge();
                prop_assert!(cfg.positions().iter().flatten().all(|&c| (0.0..edge).contains(&c)));
            }
        }
    }
}
