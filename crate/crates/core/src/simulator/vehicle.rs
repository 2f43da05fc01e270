use super::{SimConfig, SimError};
use crate::datalog::MAX_WHEEL_DEG;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// Rear-axle position, meters.
    pub x: f64,
    pub y: f64,
    /// Radians, counter-clockwise from +x.
    pub heading: f64,
    /// Effective steering-wheel angle after the actuator, degrees, left positive.
    pub steering_wheel: f64,
    pub speed: f64,
    pub odometer: f64,
}

/// Road-wheel curvature produced by a steering-wheel angle.
pub fn wheel_to_curvature(wheel_deg: f64, cfg: &SimConfig) -> f64 {
    libm::tan((wheel_deg / cfg.steering_ratio).to_radians()) / cfg.wheelbase
}

/// Steering-wheel angle that holds a path of curvature `kappa`.
pub fn curvature_to_wheel(kappa: f64, cfg: &SimConfig) -> f64 {
    libm::atan(kappa * cfg.wheelbase).to_degrees() * cfg.steering_ratio
}

/// Advances the kinematic bicycle by `cfg.dt_sim`.
///
/// The wheel first slews toward the command at no more than the actuator
/// rate, then the vehicle moves along the exact arc for the resulting
/// road-wheel angle.
pub fn step(state: &VehicleState, wheel_cmd: f64, cfg: &SimConfig) -> Result<VehicleState, SimError> {
    if !wheel_cmd.is_finite() {
        return Err(SimError::NonFinite);
    }
    let cmd = wheel_cmd.clamp(-MAX_WHEEL_DEG, MAX_WHEEL_DEG);
    let max_move = cfg.actuator_rate_limit * cfg.dt_sim;
    let wheel = state.steering_wheel + (cmd - state.steering_wheel).clamp(-max_move, max_move);
    let kappa = wheel_to_curvature(wheel, cfg);
    let ds = state.speed * cfg.dt_sim;
    let h0 = state.heading;
    let (x, y, heading) = if (kappa * ds).abs() < 1e-12 {
        (state.x + ds * libm::cos(h0), state.y + ds * libm::sin(h0), h0)
    } else {
        let h1 = h0 + kappa * ds;
        (
            state.x + (libm::sin(h1) - libm::sin(h0)) / kappa,
            state.y + (libm::cos(h0) - libm::cos(h1)) / kappa,
            h1,
        )
    };
    Ok(VehicleState {
        x,
        y,
        heading: super::track::wrap_angle(heading),
        steering_wheel: wheel,
        speed: state.speed,
        odometer: state.odometer + ds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_rest(speed: f64, wheel: f64) -> VehicleState {
        VehicleState {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            steering_wheel: wheel,
            speed,
            odometer: 0.0,
        }
    }

    #[test]
    fn straight_motion() {
        let cfg = SimConfig {
            dt_sim: 0.1,
            dt_policy: 0.1,
            ..SimConfig::default()
        };
        let s = step(&at_rest(10.0, 0.0), 0.0, &cfg).unwrap();
        assert_eq!((s.x, s.y, s.heading), (1.0, 0.0, 0.0));
        assert_eq!(s.odometer, 1.0);
    }

    #[test]
    fn constant_wheel_traces_a_circle() {
        let cfg = SimConfig::default();
        let wheel = 200.0;
        let radius = cfg.wheelbase / libm::tan((wheel / cfg.steering_ratio).to_radians());
        let mut s = at_rest(8.0, wheel);
        let lap = 2.0 * core::f64::consts::PI * radius;
        let steps = libm::ceil(lap / (8.0 * cfg.dt_sim)) as usize;
        let mut worst = 0.0f64;
        for _ in 0..steps {
            s = step(&s, wheel, &cfg).unwrap();
            // circle centered at (0, radius)
            let r = libm::hypot(s.x, s.y - radius);
            worst = worst.max((r - radius).abs());
        }
        assert!(worst < 1e-3 * radius, "{worst}");
        assert!(libm::hypot(s.x, s.y) < 8.0 * cfg.dt_sim + 1e-6);
    }

    #[test]
    fn rate_limit_caps_wheel_motion() {
        let cfg = SimConfig::default();
        let s = step(&at_rest(5.0, 0.0), 90.0, &cfg).unwrap();
        assert!((s.steering_wheel - 4.0).abs() < 1e-12);
        let s = step(&at_rest(5.0, 0.0), -2.0, &cfg).unwrap();
        assert_eq!(s.steering_wheel, -2.0);
    }

    #[test]
    fn non_finite_command_faults() {
        let cfg = SimConfig::default();
        assert!(step(&at_rest(5.0, 0.0), f64::NAN, &cfg).is_err());
    }

    #[test]
    fn curvature_round_trip() {
        let cfg = SimConfig::default();
        for k in [-0.1, -0.01, 0.0, 0.05] {
            assert!((wheel_to_curvature(curvature_to_wheel(k, &cfg), &cfg) - k).abs() < 1e-12);
        }
    }
}
