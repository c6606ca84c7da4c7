//! Constellation kinematics in a local Cartesian frame centered on the UE area.
//!
//! Satellites move on straight lines at orbital speed for the duration of an
//! episode; the ground plane is `z = 0` and satellites sit at `z = altitude`.

use crate::error::{Error, Result};

/// Standard gravitational parameter of the Earth, m³/s².
pub const GM_EARTH: f64 = 3.986004418e14;
/// Mean Earth radius, m.
pub const R_EARTH: f64 = 6.371e6;
/// Propagation speed used for delay computations, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997e8;

pub type Vec3 = [f64; 3];

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn add_scaled(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// Circular orbital speed at `altitude_m` above the mean Earth radius.
pub fn orbital_speed(altitude_m: f64) -> Result<f64> {
    if !(altitude_m >= 0.0) || !altitude_m.is_finite() {
        return Err(Error::Domain(format!(
            "altitude must be a finite non-negative number of meters, got {altitude_m}"
        )));
    }
    Ok((GM_EARTH / (R_EARTH + altitude_m)).sqrt())
}

pub fn slant_distance(sat_pos: Vec3, ue_pos: Vec3) -> f64 {
    norm(sub(sat_pos, ue_pos))
}

/// One-way propagation delay in seconds over `distance_m`.
pub fn propagation_delay(distance_m: f64) -> f64 {
    distance_m / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalConfig {
    pub altitude_m: f64,
    pub num_planes: usize,
    pub sats_per_plane: usize,
    /// Unit direction of motion, one per plane. Plane 0 carries the serving SAT.
    pub plane_velocity_dirs: Vec<Vec3>,
    /// Position of the reference SAT (index 0) of each plane at slot 0.
    pub initial_positions: Vec<Vec3>,
    pub slot_duration_s: f64,
}

impl OrbitalConfig {
    /// Default geometry for an episode of `horizon` slots.
    ///
    /// The serving SAT starts half an episode's track length before the area
    /// center and passes overhead mid-episode. Target planes cross the track at
    /// ±45° (narrower for additional planes) and reach their closest approach
    /// three quarters into the episode, alternating sides of the area.
    pub fn desk(
        num_planes: usize,
        horizon: usize,
        slot_duration_s: f64,
        altitude_m: f64,
        sats_per_plane: usize,
    ) -> Result<Self> {
        let speed = orbital_speed(altitude_m)?;
        let track = horizon as f64 * slot_duration_s * speed;
        let mut dirs = Vec::with_capacity(num_planes);
        let mut starts = Vec::with_capacity(num_planes);
        for k in 0..num_planes {
            if k == 0 {
                let dir = [0.0, 1.0, 0.0];
                dirs.push(dir);
                starts.push(add_scaled([0.0, 0.0, altitude_m], dir, -0.5 * track));
                continue;
            }
            let side = if k % 2 == 1 { 1.0 } else { -1.0 };
            let rank = k.div_ceil(2) as f64;
            let angle = side * std::f64::consts::FRAC_PI_4 / rank;
            let dir = [angle.sin(), angle.cos(), 0.0];
            let pass_point = [side * 20e3 * rank, 0.0, altitude_m];
            dirs.push(dir);
            starts.push(add_scaled(pass_point, dir, -0.75 * track));
        }
        let cfg = OrbitalConfig {
            altitude_m,
            num_planes,
            sats_per_plane,
            plane_velocity_dirs: dirs,
            initial_positions: starts,
            slot_duration_s,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.altitude_m > 0.0) {
            return Err(Error::config("altitude_m", "must be positive"));
        }
        if self.num_planes < 2 {
            return Err(Error::config(
                "num_planes",
                "need one serving plane and at least one target plane",
            ));
        }
        if self.sats_per_plane < 1 {
            return Err(Error::config("sats_per_plane", "must be at least 1"));
        }
        if !(self.slot_duration_s > 0.0) {
            return Err(Error::config("slot_duration_s", "must be positive"));
        }
        if self.plane_velocity_dirs.len() != self.num_planes {
            return Err(Error::config(
                "plane_velocity_dirs",
                format!("expected {} directions", self.num_planes),
            ));
        }
        if self.initial_positions.len() != self.num_planes {
            return Err(Error::config(
                "initial_positions",
                format!("expected {} positions", self.num_planes),
            ));
        }
        for (k, d) in self.plane_velocity_dirs.iter().enumerate() {
            if (norm(*d) - 1.0).abs() > 1e-9 {
                return Err(Error::config(
                    "plane_velocity_dirs",
                    format!("direction of plane {k} is not a unit vector"),
                ));
            }
        }
        Ok(())
    }

    pub fn speed(&self) -> f64 {
        // altitude is validated positive, so this cannot fail
        orbital_speed(self.altitude_m).unwrap_or(f64::NAN)
    }

    pub fn orbital_period_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * (R_EARTH + self.altitude_m) / self.speed()
    }

    /// Along-track spacing between neighbouring SATs of one plane.
    pub fn arc_spacing_m(&self) -> f64 {
        2.0 * std::f64::consts::PI * (R_EARTH + self.altitude_m) / self.sats_per_plane as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationState {
    /// `positions[k][i]` is SAT `i` of plane `k`.
    pub positions: Vec<Vec<Vec3>>,
    pub velocities: Vec<Vec<Vec3>>,
    pub slot_index: u64,
}

impl ConstellationState {
    pub fn initial(cfg: &OrbitalConfig) -> Self {
        let speed = cfg.speed();
        let spacing = cfg.arc_spacing_m();
        let circumference = spacing * cfg.sats_per_plane as f64;
        let mut positions = Vec::with_capacity(cfg.num_planes);
        let mut velocities = Vec::with_capacity(cfg.num_planes);
        for k in 0..cfg.num_planes {
            let dir = cfg.plane_velocity_dirs[k];
            let v = [dir[0] * speed, dir[1] * speed, dir[2] * speed];
            let mut plane_pos = Vec::with_capacity(cfg.sats_per_plane);
            for i in 0..cfg.sats_per_plane {
                let mut offset = i as f64 * spacing;
                if offset > circumference / 2.0 {
                    offset -= circumference;
                }
                plane_pos.push(add_scaled(cfg.initial_positions[k], dir, offset));
            }
            positions.push(plane_pos);
            velocities.push(vec![v; cfg.sats_per_plane]);
        }
        ConstellationState {
            positions,
            velocities,
            slot_index: 0,
        }
    }

    /// Advances every SAT by `steps` slots along its (constant) velocity.
    pub fn propagate(&self, cfg: &OrbitalConfig, steps: u64) -> Self {
        let dt = steps as f64 * cfg.slot_duration_s;
        let positions = self
            .positions
            .iter()
            .zip(&self.velocities)
            .map(|(plane, vels)| {
                plane
                    .iter()
                    .zip(vels)
                    .map(|(&q, &v)| add_scaled(q, v, dt))
                    .collect()
            })
            .collect();
        ConstellationState {
            positions,
            velocities: self.velocities.clone(),
            slot_index: self.slot_index + steps,
        }
    }

    /// Nearest SAT of `plane` to `ue_pos`: `(sat index, slant distance in m)`.
    /// Ties resolve to the lowest index.
    pub fn nearest_in_plane(&self, plane: usize, ue_pos: Vec3) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, &q) in self.positions[plane].iter().enumerate() {
            let d = slant_distance(q, ue_pos);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn orbital_speed_reference_altitudes() {
        assert_relative_eq!(orbital_speed(550e3).unwrap(), 7.59e3, max_relative = 1e-3);
        // sqrt(3.986004418e14 / 6.371e6)
        assert_relative_eq!(orbital_speed(0.0).unwrap(), 7909.8, max_relative = 1e-4);
        // sqrt(3.986004418e14 / 42.157e6)
        assert_relative_eq!(orbital_speed(35786e3).unwrap(), 3074.9, max_relative = 1e-4);
        assert!(orbital_speed(-1.0).is_err());
        assert!(orbital_speed(f64::NAN).is_err());
    }

    #[test]
    fn speed_decreases_with_altitude() {
        let mut prev = orbital_speed(0.0).unwrap();
        for h in (1..200).map(|i| i as f64 * 10e3) {
            let s = orbital_speed(h).unwrap();
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn slant_distance_cases() {
        assert_eq!(slant_distance([0.0, 0.0, 550e3], [0.0; 3]), 550e3);
        assert_eq!(slant_distance([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]), 0.0);
        assert_relative_eq!(slant_distance([3e5, 4e5, 0.0], [0.0; 3]), 5e5);
        let a = [12.0, -4.0, 9.0];
        let b = [-3.0, 7.5, 1.0];
        assert_eq!(slant_distance(a, b), slant_distance(b, a));
    }

    #[test]
    fn propagation_delay_band() {
        assert_relative_eq!(propagation_delay(550e3), 550e3 / 2.997e8);
        assert_relative_eq!(propagation_delay(550e3), 1.835e-3, max_relative = 1e-3);
        assert_eq!(propagation_delay(0.0), 0.0);
        for h in [500e3, 1000e3, 1500e3] {
            let d = propagation_delay(h);
            assert!((1.6e-3..=6e-3).contains(&d), "{h} -> {d}");
        }
        // nadir delay at 2000 km is 6.67 ms, above the commonly quoted 6 ms
        assert_relative_eq!(propagation_delay(2000e3), 6.673340006673e-3, max_relative = 1e-9);
    }

    fn desk() -> OrbitalConfig {
        OrbitalConfig::desk(3, 20, 0.3, 550e3, 1).unwrap()
    }

    #[test]
    fn desk_geometry_is_valid() {
        let cfg = desk();
        cfg.validate().unwrap();
        let st = ConstellationState::initial(&cfg);
        let speed = cfg.speed();
        for plane in &st.velocities {
            for v in plane {
                assert_relative_eq!(norm(*v), speed, max_relative = 1e-12);
            }
        }
        // serving passes overhead after half of the 20 slots
        let mid = st.propagate(&cfg, 10);
        assert_relative_eq!(mid.positions[0][0][1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn propagate_identity_and_single_step() {
        let cfg = desk();
        let st = ConstellationState::initial(&cfg);
        assert_eq!(st.propagate(&cfg, 0), st);
        let one = st.propagate(&cfg, 1);
        let disp = norm(sub(one.positions[0][0], st.positions[0][0]));
        assert_relative_eq!(disp, 0.3 * cfg.speed(), max_relative = 1e-12);
        assert_relative_eq!(0.3 * 7.59e3, 2277.0, max_relative = 1e-12);
        assert_eq!(one.slot_index, 1);
    }

    #[test]
    fn propagate_composes() {
        let cfg = desk();
        let st = ConstellationState::initial(&cfg);
        let twice = st.propagate(&cfg, 1).propagate(&cfg, 1);
        let direct = st.propagate(&cfg, 2);
        assert_eq!(twice.slot_index, direct.slot_index);
        for (pa, pb) in twice.positions.iter().zip(&direct.positions) {
            for (a, b) in pa.iter().zip(pb) {
                for c in 0..3 {
                    assert_relative_eq!(a[c], b[c], max_relative = 1e-12, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn iterated_steps_match_closed_form() {
        let cfg = desk();
        let st0 = ConstellationState::initial(&cfg);
        let mut st = st0.clone();
        for _ in 0..10_000 {
            st = st.propagate(&cfg, 1);
        }
        let m = 10_000.0 * cfg.slot_duration_s;
        for k in 0..cfg.num_planes {
            let expect = add_scaled(st0.positions[k][0], st0.velocities[k][0], m);
            let got = st.positions[k][0];
            let err = norm(sub(got, expect));
            assert!(err / norm(expect) < 1e-6, "plane {k}: {err}");
        }
    }

    #[test]
    fn nearest_sat_selection() {
        let cfg = OrbitalConfig::desk(3, 20, 0.3, 550e3, 22).unwrap();
        let st = ConstellationState::initial(&cfg);
        for k in 0..3 {
            let (i, d) = st.nearest_in_plane(k, [0.0; 3]);
            assert_eq!(i, 0, "reference SAT is the one near the area");
            assert!(d < 700e3);
            for q in &st.positions[k] {
                assert!(slant_distance(*q, [0.0; 3]) >= d);
            }
        }
    }

    #[test]
    fn slant_distance_at_least_altitude_over_ground() {
        let cfg = desk();
        let st = ConstellationState::initial(&cfg);
        for plane in &st.positions {
            for q in plane {
                for ue in [[0.0, 0.0, 0.0], [500.0, -500.0, 0.0], [-480.0, 20.0, 0.0]] {
                    assert!(slant_distance(*q, ue) >= q[2] - ue[2]);
                }
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = desk();
        cfg.plane_velocity_dirs[1] = [1.0, 1.0, 0.0];
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        assert!(OrbitalConfig::desk(1, 20, 0.3, 550e3, 1).is_err());
        assert!(OrbitalConfig::desk(3, 20, 0.3, 550e3, 0).is_err());
        let mut cfg = desk();
        cfg.altitude_m = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn orbital_period_is_about_95_minutes() {
        let t = desk().orbital_period_s();
        assert!((5600.0..5800.0).contains(&t), "{t}");
    }
}
