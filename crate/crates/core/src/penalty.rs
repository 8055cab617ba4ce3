//! Penalty profile family.
//!
//! `beta` is a monotone ramp from `-N` (constraint fully violated) to `0`
//! (gap at least the penalty scale), realized as a polynomial smoothstep so
//! the endpoint values are attained exactly. The scaled variant
//! `beta_eps(t) = beta(t / epsilon)` shrinks the transition zone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness of the transition polynomial. Cubic is C1, quintic is C2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyProfile {
    Cubic,
    #[default]
    Quintic,
}

impl PenaltyProfile {
    fn smoothstep(&self, t: f64) -> f64 {
        match self {
            PenaltyProfile::Cubic => t * t * (3.0 - 2.0 * t),
            PenaltyProfile::Quintic => t * t * t * (10.0 + t * (-15.0 + 6.0 * t)),
        }
    }

    fn smoothstep_prime(&self, t: f64) -> f64 {
        match self {
            PenaltyProfile::Cubic => 6.0 * t * (1.0 - t),
            PenaltyProfile::Quintic => 30.0 * t * t * (t - 1.0) * (t - 1.0),
        }
    }
}

/// Penalty depth `N`, scale `epsilon` and transition profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub depth: f64,
    pub epsilon: f64,
    pub profile: PenaltyProfile,
}

impl PenaltyConfig {
    pub fn new(depth: f64, epsilon: f64, profile: PenaltyProfile) -> Result<Self> {
        if !(depth.is_finite() && depth >= 0.0) {
            return Err(Error::Config(format!("penalty depth must be >= 0, got {depth}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!("penalty scale must be > 0, got {epsilon}")));
        }
        Ok(Self { depth, epsilon, profile })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..*self }
    }
}

/// `beta(t)`: `-N` for `t <= 0`, `0` for `t >= 1`, smoothstep in between.
pub fn beta_eval(c: &PenaltyConfig, t: f64) -> f64 {
    let s = c.profile.smoothstep(t.clamp(0.0, 1.0));
    -c.depth * (1.0 - s)
}

/// `beta_eps(t) = beta(t / epsilon)`.
pub fn beta_eps_eval(c: &PenaltyConfig, t: f64) -> f64 {
    beta_eval(c, t / c.epsilon)
}

/// Derivative of `beta_eps`, needed by the coupled nodal solver.
pub fn beta_eps_prime(c: &PenaltyConfig, t: f64) -> f64 {
    let s = t / c.epsilon;
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    c.depth * c.profile.smoothstep_prime(s) / c.epsilon
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(depth: f64, eps: f64, profile: PenaltyProfile) -> PenaltyConfig {
        PenaltyConfig::new(depth, eps, profile).unwrap()
    }

    #[test]
    fn endpoints_exact() {
        for profile in [PenaltyProfile::Cubic, PenaltyProfile::Quintic] {
            let c = cfg(3.5, 1.0, profile);
            assert_eq!(beta_eval(&c, 0.0), -3.5);
            assert_eq!(beta_eval(&c, 1.0), 0.0);
            assert_eq!(beta_eval(&c, -7.0), -3.5);
            assert_eq!(beta_eval(&c, 42.0), 0.0);
        }
    }

    #[test]
    fn midpoint_cubic() {
        // smoothstep is symmetric about 1/2, so s(1/2) = 1/2 and beta = -N/2
        let c = cfg(2.0, 1.0, PenaltyProfile::Cubic);
        assert_eq!(beta_eval(&c, 0.5), -1.0);
    }

    #[test]
    fn scaled_variant() {
        let c = cfg(2.0, 0.25, PenaltyProfile::Cubic);
        assert_eq!(beta_eps_eval(&c, 0.25), 0.0);
        assert_eq!(beta_eps_eval(&c, 0.0), -2.0);
        assert_eq!(beta_eps_eval(&c, 0.125), -1.0);
    }

    #[test]
    fn scaling_identity_exact_for_pow2_eps() {
        // multiplication and division by powers of two are exact, so
        // beta_eps(eps * t) == beta(t) bitwise on these scales
        let unit = cfg(1.7, 1.0, PenaltyProfile::Quintic);
        for eps in [0.5, 0.25, 2.0, 1.0, 2f64.powi(-10)] {
            let c = cfg(1.7, eps, PenaltyProfile::Quintic);
            for k in 0..=1000 {
                let t = -0.2 + 1.4 * (k as f64) / 1000.0;
                assert_eq!(beta_eps_eval(&c, eps * t), beta_eval(&unit, t));
            }
        }
    }

    #[test]
    fn monotone_and_bounded() {
        for profile in [PenaltyProfile::Cubic, PenaltyProfile::Quintic] {
            let c = cfg(4.0, 1.0, profile);
            let mut prev = f64::NEG_INFINITY;
            for k in 0..10_000 {
                let t = -1.0 + 3.0 * (k as f64) / 9_999.0;
                let v = beta_eval(&c, t);
                assert!(v >= prev - 1e-15, "not monotone at t={t}");
                assert!((-4.0..=0.0).contains(&v));
                prev = v;
            }
        }
    }

    #[test]
    fn derivative_matches_difference_quotients() {
        for profile in [PenaltyProfile::Cubic, PenaltyProfile::Quintic] {
            let c = cfg(2.0, 0.5, profile);
            let dh = 1e-7;
            for k in 1..200 {
                let t = 0.5 * (k as f64) / 200.0;
                let quotient = (beta_eps_eval(&c, t + dh) - beta_eps_eval(&c, t - dh)) / (2.0 * dh);
                assert!(
                    (quotient - beta_eps_prime(&c, t)).abs() < 1e-6,
                    "profile {profile:?} at t={t}"
                );
            }
        }
    }

    #[test]
    fn config_guards() {
        assert!(PenaltyConfig::new(-1.0, 1.0, PenaltyProfile::Cubic).is_err());
        assert!(PenaltyConfig::new(1.0, 0.0, PenaltyProfile::Cubic).is_err());
    }
}
