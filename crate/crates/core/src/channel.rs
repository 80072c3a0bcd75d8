//! Line-of-sight optical channel between a downward-facing UAV LED and an
//! upward-facing photodetector on the ground.

use serde::{Deserialize, Serialize};

use crate::error::{ChannelError, ConfigError};
use crate::kinematics::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalParams {
    /// Photodetector active area, m².
    pub pd_area: f64,
    /// Field-of-view semi-angle ψ_c, rad.
    pub fov: f64,
    /// LED semi-angle at half power, rad.
    pub half_power_angle: f64,
    pub filter_gain: f64,
    pub refractive_index: f64,
    pub lambertian_order: f64,
}

impl OpticalParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(self.pd_area > 0.0) {
            return Err(ConfigError::invalid("optical.pd_area_m2", "must be > 0"));
        }
        if !(self.fov > 0.0 && self.fov < half_pi) {
            return Err(ConfigError::invalid("optical.fov_deg", "must lie in (0, 90)"));
        }
        if !(self.half_power_angle > 0.0 && self.half_power_angle < half_pi) {
            return Err(ConfigError::invalid("optical.half_power_angle_deg", "must lie in (0, 90)"));
        }
        if !(self.filter_gain > 0.0) {
            return Err(ConfigError::invalid("optical.filter_gain", "must be > 0"));
        }
        if !(self.refractive_index >= 1.0) {
            return Err(ConfigError::invalid("optical.refractive_index", "must be >= 1"));
        }
        if !(self.lambertian_order >= 1.0) || !self.lambertian_order.is_finite() {
            return Err(ConfigError::invalid("optical.lambertian_order", "must be >= 1"));
        }
        Ok(())
    }
}

/// Distance and the two link angles, all in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub distance: f64,
    pub irradiance: f64,
    pub incidence: f64,
}

/// Lambertian emission order from the half-power semi-angle.
pub fn lambertian_order(phi_half: f64) -> Result<f64, ChannelError> {
    let c = phi_half.cos();
    if !(phi_half > 0.0 && phi_half < std::f64::consts::FRAC_PI_2 && c < 1.0) {
        return Err(ChannelError::HalfPowerAngle(phi_half));
    }
    Ok(-std::f64::consts::LN_2 / c.ln())
}

/// `η / sin²ψ_c` inside the closed field of view, zero outside.
pub fn concentrator_gain(psi: f64, params: &OpticalParams) -> f64 {
    if (0.0..=params.fov).contains(&psi) {
        params.refractive_index / params.fov.sin().powi(2)
    } else {
        0.0
    }
}

/// LoS DC gain `h`; zero when the incidence angle exceeds the field of view.
pub fn channel_gain(geom: &LinkGeometry, params: &OpticalParams) -> f64 {
    let g = concentrator_gain(geom.incidence, params);
    if g == 0.0 {
        return 0.0;
    }
    let m = params.lambertian_order;
    let spread = (m + 1.0) * params.pd_area / (2.0 * std::f64::consts::PI * geom.distance * geom.distance);
    spread * geom.irradiance.cos().powf(m) * params.filter_gain * geom.incidence.cos() * g
}

/// Geometry for a nadir-pointing LED and zenith-pointing PD, where both
/// angles equal the angle off vertical. A UAV at or below the user gets
/// angles of π/2, which falls outside any valid field of view.
pub fn geometry_from_positions(uav: Vec3, user: Vec3) -> Result<LinkGeometry, ChannelError> {
    let distance = (uav - user).norm();
    if !(distance > 0.0) {
        return Err(ChannelError::Degenerate);
    }
    let cos = ((uav.z - user.z) / distance).clamp(0.0, 1.0);
    let angle = cos.acos();
    Ok(LinkGeometry { distance, irradiance: angle, incidence: angle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    fn params() -> OpticalParams {
        OpticalParams {
            pd_area: 1e-4,
            fov: deg(60.0),
            half_power_angle: deg(60.0),
            filter_gain: 1.0,
            refractive_index: 1.5,
            lambertian_order: 1.0,
        }
    }

    #[test]
    fn lambertian_order_examples() {
        assert_relative_eq!(lambertian_order(deg(60.0)).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(lambertian_order(deg(45.0)).unwrap(), 2.0, max_relative = 1e-12);
        // -ln 2 / ln cos 30°
        assert_relative_eq!(lambertian_order(deg(30.0)).unwrap(), 4.81884167930642, max_relative = 1e-12);
        assert!(lambertian_order(deg(90.0)).is_err());
        assert!(lambertian_order(0.0).is_err());
    }

    #[test]
    fn concentrator_examples() {
        let p = params();
        assert_eq!(concentrator_gain(deg(70.0), &p), 0.0);
        assert_relative_eq!(concentrator_gain(0.0, &p), 2.0, max_relative = 1e-12);
        assert_relative_eq!(concentrator_gain(p.fov, &p), 1.5 / p.fov.sin().powi(2), max_relative = 1e-15);
    }

    #[test]
    fn gain_examples() {
        let p = params();
        let outside = LinkGeometry { distance: 10.0, irradiance: deg(75.0), incidence: deg(75.0) };
        assert_eq!(channel_gain(&outside, &p), 0.0);

        let nadir = LinkGeometry { distance: 10.0, irradiance: 0.0, incidence: 0.0 };
        let h = channel_gain(&nadir, &p);
        // 2 * 1e-4 / (2π * 100) * 2
        assert_relative_eq!(h, 6.366197723675814e-7, max_relative = 1e-12);

        let far = LinkGeometry { distance: 20.0, ..nadir };
        assert_relative_eq!(channel_gain(&far, &p), h / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn geometry_examples() {
        let g = geometry_from_positions(Vec3::new(0.0, 0.0, 50.0), Vec3::ZERO).unwrap();
        assert_eq!(g.distance, 50.0);
        assert_eq!(g.irradiance, 0.0);
        assert_eq!(g.incidence, 0.0);

        let g = geometry_from_positions(Vec3::new(30.0, 0.0, 40.0), Vec3::ZERO).unwrap();
        assert_eq!(g.distance, 50.0);
        assert_relative_eq!(g.irradiance.cos(), 0.8, max_relative = 1e-12);

        for h in [5.0, 80.0] {
            let g = geometry_from_positions(Vec3::new(0.0, 0.0, h), Vec3::ZERO).unwrap();
            assert_eq!(g.incidence, 0.0);
        }
        assert_eq!(geometry_from_positions(Vec3::ZERO, Vec3::ZERO), Err(ChannelError::Degenerate));
    }

    proptest! {
        #[test]
        fn gain_decays_with_distance(d in 0.5f64..200.0, extra in 1e-3f64..50.0, angle in 0.0f64..1.0) {
            let p = params();
            let near = channel_gain(&LinkGeometry { distance: d, irradiance: angle, incidence: angle }, &p);
            let far = channel_gain(&LinkGeometry { distance: d + extra, irradiance: angle, incidence: angle }, &p);
            prop_assert!(near > far);
            prop_assert!(far >= 0.0);
        }

        #[test]
        fn half_power_property(phi in 0.05f64..1.5) {
            let m = lambertian_order(phi).unwrap();
            prop_assert!((phi.cos().powf(m) - 0.5).abs() < 1e-12);
        }

        #[test]
        fn azimuthal_symmetry(r in 0.0f64..60.0, theta in 0.0f64..std::f64::consts::TAU, z in 5.0f64..100.0) {
            let p = params();
            let uav = Vec3::new(25.0, 25.0, z);
            let base = geometry_from_positions(uav, Vec3::new(25.0 + r, 25.0, 0.0)).unwrap();
            let rotated = geometry_from_positions(
                uav, Vec3::new(25.0 + r * theta.cos(), 25.0 + r * theta.sin(), 0.0)).unwrap();
            let (a, b) = (channel_gain(&base, &p), channel_gain(&rotated, &p));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        }
    }
}
