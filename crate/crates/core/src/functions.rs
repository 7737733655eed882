//! The closed-form test functions the networks are asked to approximate.
//!
//! Three functions of two variables are registered, each with a default
//! rectangular domain:
//!
//! | name         | domain                             |
//! |--------------|------------------------------------|
//! | `ackley`     | `[-5, 5] x [-5, 5]`                |
//! | `rosenbrock` | `[-2, 2] x [-2, 2]`                |
//! | `borehole`   | `r in [100, 50000], L in [1120, 1680]` |
//!
//! Rosenbrock is the standard `100 (y - x^2)^2 + (1 - x)^2`. The expanded
//! form sometimes printed as `100 (x^4 - 2xy + y^2) + 1 - 2x + x^2` drops a
//! power of `x` in the cross term and has no valley structure; it is not
//! used here.
//!
//! Borehole is the two-input reduction of the classic borehole flow model:
//! only the radius of influence `r` and the borehole length `L` vary, every
//! other physical parameter is pinned to a constant.

use std::f64::consts::{E, PI};
use std::fmt;

use crate::error::{Error, Result};

/// A closed rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let d = Domain {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.x_min, self.x_max, self.y_min, self.y_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDomain(format!("non-finite bound in {self}")));
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::InvalidDomain(format!("empty rectangle {self}")));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}] x [{}, {}]",
            self.x_min, self.x_max, self.y_min, self.y_max
        )
    }
}

/// Fixed physical parameters of the borehole model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoreholeConstants {
    /// Borehole radius (m).
    pub r_w: f64,
    /// Transmissivity of the upper aquifer.
    pub t_u: f64,
    /// Potentiometric head of the upper aquifer.
    pub h_u: f64,
    /// Transmissivity of the lower aquifer.
    pub t_l: f64,
    /// Potentiometric head of the lower aquifer.
    pub h_l: f64,
    /// Hydraulic conductivity of the borehole.
    pub k_w: f64,
}

impl BoreholeConstants {
    pub const STANDARD: BoreholeConstants = BoreholeConstants {
        r_w: 0.1,
        t_u: 89335.0,
        h_u: 1050.0,
        t_l: 89.55,
        h_l: 760.0,
        k_w: 10950.0,
    };

    /// Water flow rate through the borehole for radius of influence `r` and
    /// borehole length `l`.
    pub fn eval(&self, r: f64, l: f64) -> Result<f64> {
        if !(r > self.r_w) {
            return Err(Error::Domain {
                function: "borehole",
                x: r,
                y: l,
                reason: "radius of influence must exceed r_w",
            });
        }
        if !(l > 0.0) {
            return Err(Error::Domain {
                function: "borehole",
                x: r,
                y: l,
                reason: "borehole length must be positive",
            });
        }
        let log_ratio = (r / self.r_w).ln();
        let numerator = 2.0 * PI * self.t_u * (self.h_u - self.h_l);
        let denominator = log_ratio
            * (1.0
                + 2.0 * l * self.t_u / (log_ratio * self.r_w * self.r_w * self.k_w)
                + self.t_u / self.t_l);
        Ok(numerator / denominator)
    }

    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("r_w", self.r_w),
            ("T_u", self.t_u),
            ("H_u", self.h_u),
            ("T_l", self.t_l),
            ("H_l", self.h_l),
            ("K_w", self.k_w),
        ]
    }
}

impl Default for BoreholeConstants {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Ackley function in two variables.
pub fn eval_ackley(x: f64, y: f64) -> f64 {
    let radial = (-0.2 * std::f64::consts::FRAC_1_SQRT_2 * (x * x + y * y).sqrt()).exp();
    let oscillation = (0.5 * ((2.0 * PI * x).cos() + (2.0 * PI * y).cos())).exp();
    // Grouped so the origin cancels to exactly zero.
    (20.0 - 20.0 * radial) + (E - oscillation)
}

/// Standard Rosenbrock function, global minimum 0 at `(1, 1)`.
pub fn eval_rosenbrock(x: f64, y: f64) -> f64 {
    let valley = y - x * x;
    100.0 * valley * valley + (1.0 - x) * (1.0 - x)
}

/// Borehole flow with the standard constants.
pub fn eval_borehole(r: f64, l: f64) -> Result<f64> {
    BoreholeConstants::STANDARD.eval(r, l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionKind {
    Ackley,
    Rosenbrock,
    Borehole(BoreholeConstants),
}

/// A named test function together with the domain it is sampled on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub name: &'static str,
    pub domain: Domain,
    pub kind: FunctionKind,
}

impl TestFunction {
    pub fn ackley() -> Self {
        TestFunction {
            name: "ackley",
            domain: Domain {
                x_min: -5.0,
                x_max: 5.0,
                y_min: -5.0,
                y_max: 5.0,
            },
            kind: FunctionKind::Ackley,
        }
    }

    pub fn rosenbrock() -> Self {
        TestFunction {
            name: "rosenbrock",
            domain: Domain {
                x_min: -2.0,
                x_max: 2.0,
                y_min: -2.0,
                y_max: 2.0,
            },
            kind: FunctionKind::Rosenbrock,
        }
    }

    pub fn borehole() -> Self {
        TestFunction {
            name: "borehole",
            domain: Domain {
                x_min: 100.0,
                x_max: 50000.0,
                y_min: 1120.0,
                y_max: 1680.0,
            },
            kind: FunctionKind::Borehole(BoreholeConstants::STANDARD),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        match &self.kind {
            FunctionKind::Ackley => Ok(eval_ackley(x, y)),
            FunctionKind::Rosenbrock => Ok(eval_rosenbrock(x, y)),
            FunctionKind::Borehole(c) => c.eval(x, y),
        }
    }

    /// Named constants baked into the function. Empty except for borehole.
    pub fn constants(&self) -> Vec<(&'static str, f64)> {
        match &self.kind {
            FunctionKind::Borehole(c) => c.named().to_vec(),
            _ => Vec::new(),
        }
    }
}

pub const FUNCTION_NAMES: [&str; 3] = ["ackley", "rosenbrock", "borehole"];

pub fn all() -> [TestFunction; 3] {
    [
        TestFunction::ackley(),
        TestFunction::rosenbrock(),
        TestFunction::borehole(),
    ]
}

/// Look up a registered function by its lowercase name.
pub fn lookup(name: &str) -> Result<TestFunction> {
    match name {
        "ackley" => Ok(TestFunction::ackley()),
        "rosenbrock" => Ok(TestFunction::rosenbrock()),
        "borehole" => Ok(TestFunction::borehole()),
        _ => Err(Error::UnknownFunction {
            name: name.to_string(),
            valid: FUNCTION_NAMES.join(", "),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // 50-digit evaluations of the closed forms, rounded to 15 significant digits.
    const ACKLEY_1_1: f64 = 3.62538493844036;
    const ACKLEY_M3_5_2_25: f64 = 11.0077872012507;
    const BOREHOLE_MIDPOINT: f64 = 70.8729126368190;
    const BOREHOLE_LOW_CORNER: f64 = 88.7376164376250;
    const BOREHOLE_HIGH_CORNER: f64 = 59.0991984087013;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn ackley_origin_is_zero() {
        assert_eq!(eval_ackley(0.0, 0.0), 0.0);
    }

    #[test]
    fn ackley_regression_values() {
        assert!(rel(eval_ackley(1.0, 1.0), ACKLEY_1_1) < 1e-13);
        assert!(rel(eval_ackley(-3.5, 2.25), ACKLEY_M3_5_2_25) < 1e-13);
    }

    #[test]
    fn rosenbrock_known_values() {
        assert_eq!(eval_rosenbrock(1.0, 1.0), 0.0);
        assert_eq!(eval_rosenbrock(0.0, 0.0), 1.0);
        assert_eq!(eval_rosenbrock(-1.0, 1.0), 4.0);
    }

    #[test]
    fn borehole_regression_values() {
        let (r, l) = TestFunction::borehole().domain.midpoint();
        assert_eq!((r, l), (25050.0, 1400.0));
        assert!(rel(eval_borehole(r, l).unwrap(), BOREHOLE_MIDPOINT) < 1e-13);
        assert!(rel(eval_borehole(100.0, 1120.0).unwrap(), BOREHOLE_LOW_CORNER) < 1e-13);
        assert!(rel(eval_borehole(50000.0, 1680.0).unwrap(), BOREHOLE_HIGH_CORNER) < 1e-13);
    }

    #[test]
    fn borehole_is_linear_in_head_difference() {
        let base = BoreholeConstants::STANDARD;
        let mut doubled = base;
        doubled.h_u = base.h_l + 2.0 * (base.h_u - base.h_l);
        for &(r, l) in &[(100.0, 1120.0), (25050.0, 1400.0), (50000.0, 1680.0)] {
            let a = base.eval(r, l).unwrap();
            let b = doubled.eval(r, l).unwrap();
            assert!(rel(b, 2.0 * a) < 1e-14);
        }
        assert_eq!(
            2.0 * PI * base.t_u * (base.h_u - base.h_l),
            2.0 * PI * 89335.0 * 290.0
        );
    }

    #[test]
    fn borehole_decreases_with_length() {
        for &r in &[100.0, 1000.0, 25050.0, 50000.0] {
            let mut prev = f64::INFINITY;
            for i in 0..=20 {
                let l = 1120.0 + 28.0 * i as f64;
                let v = eval_borehole(r, l).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn borehole_rejects_small_radius() {
        assert!(matches!(eval_borehole(0.1, 1200.0), Err(Error::Domain { .. })));
        assert!(matches!(eval_borehole(0.05, 1200.0), Err(Error::Domain { .. })));
        assert!(matches!(eval_borehole(f64::NAN, 1200.0), Err(Error::Domain { .. })));
        assert!(matches!(eval_borehole(100.0, 0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn lookup_registry() {
        let a = lookup("ackley").unwrap();
        assert_eq!(a.domain, Domain::new(-5.0, 5.0, -5.0, 5.0).unwrap());
        assert!(a.constants().is_empty());

        let b = lookup("borehole").unwrap();
        let c = b.constants();
        assert_eq!(
            c,
            vec![
                ("r_w", 0.1),
                ("T_u", 89335.0),
                ("H_u", 1050.0),
                ("T_l", 89.55),
                ("H_l", 760.0),
                ("K_w", 10950.0)
            ]
        );

        match lookup("sphere") {
            Err(Error::UnknownFunction { name, valid }) => {
                assert_eq!(name, "sphere");
                assert_eq!(valid, "ackley, rosenbrock, borehole");
            }
            other => panic!("expected unknown-function error, got {other:?}"),
        }
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Domain::new(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(Domain::new(0.0, f64::INFINITY, 0.0, 1.0).is_err());
        assert!(Domain::new(-1.0, 1.0, -1.0, 1.0).is_ok());
    }

    fn coarse_grid(d: &Domain, k: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..k).flat_map(move |i| {
            (0..k).map(move |j| {
                let tx = i as f64 / (k - 1) as f64;
                let ty = j as f64 / (k - 1) as f64;
                (
                    d.x_min + tx * (d.x_max - d.x_min),
                    d.y_min + ty * (d.y_max - d.y_min),
                )
            })
        })
    }

    #[test]
    fn ackley_positive_away_from_origin() {
        let d = TestFunction::ackley().domain;
        for (x, y) in coarse_grid(&d, 41) {
            let v = eval_ackley(x, y);
            if x == 0.0 && y == 0.0 {
                assert!(v.abs() < 1e-12);
            } else {
                assert!(v > 0.0, "ackley({x}, {y}) = {v}");
            }
        }
    }

    #[test]
    fn rosenbrock_minimum_only_at_one_one() {
        let d = TestFunction::rosenbrock().domain;
        for (x, y) in coarse_grid(&d, 41) {
            let v = eval_rosenbrock(x, y);
            assert!(v >= 0.0);
            if v == 0.0 {
                assert_eq!((x, y), (1.0, 1.0));
            }
        }
        assert_eq!(eval_rosenbrock(1.0, 1.0), 0.0);
    }

    #[test]
    fn borehole_finite_positive_on_domain() {
        let f = TestFunction::borehole();
        for (x, y) in coarse_grid(&f.domain, 41) {
            let v = f.eval(x, y).unwrap();
            assert!(v.is_finite() && v > 0.0);
        }
    }

    proptest! {
        #[test]
        fn ackley_symmetries(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let v = eval_ackley(x, y);
            prop_assert!((v - eval_ackley(y, x)).abs() < 1e-12);
            prop_assert!((v - eval_ackley(-x, y)).abs() < 1e-12);
            prop_assert!((v - eval_ackley(x, -y)).abs() < 1e-12);
        }
    }
}
