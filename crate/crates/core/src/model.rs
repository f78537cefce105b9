//! Closed-form physics of plane Poiseuille flow of an Oldroyd-B fluid with
//! nonmonotonic wall slip.
//!
//! Everything here is dimensionless. The wall shear stress `sigma_w` is taken
//! as the magnitude of the total shear stress at the wall, so that for forward
//! flow `sigma_w = -grad_p = F(vw) >= 0`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    InvalidParams(String),
    #[error("flow rate {0} is negative")]
    NegativeFlowRate(f64),
    #[error("steady flow rate is not monotone in the slip velocity on [0, {vw_max}] (min dQ/dvw = {min_slope})")]
    NonMonotoneFlowRateMap { vw_max: f64, min_slope: f64 },
    #[error("slip law is monotone: the flow curve has no extrema")]
    NoExtrema,
}

/// Physical and slip-law constants plus the imposed flow rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Reynolds number.
    pub re: f64,
    /// Weissenberg number.
    pub we: f64,
    /// Retardation (purely viscous) viscosity fraction; `eta1 = 1 - eta2`.
    pub eta2: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Imposed volumetric flow rate through the half channel.
    pub q: f64,
}

impl Default for ModelParams {
    /// Elasticity number `We/Re = 10` with `eta2 = 0.1` and the slip law
    /// `A1 = 1, A2 = 15, A3 = 100`. This is the parameter set whose linear
    /// stability boundary sits at `-F'(vw) = 0.384`.
    fn default() -> Self {
        Self {
            re: 0.01,
            we: 0.1,
            eta2: 0.1,
            a1: 1.0,
            a2: 15.0,
            a3: 100.0,
            q: 0.0,
        }
    }
}

impl ModelParams {
    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn eta1(&self) -> f64 {
        1.0 - self.eta2
    }

    /// Elasticity number `We / Re`.
    pub fn elasticity(&self) -> f64 {
        self.we / self.re
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            (self.re > 0.0, "re must be > 0"),
            (self.we >= 0.0, "we must be >= 0"),
            (self.eta2 > 0.0 && self.eta2 <= 1.0, "eta2 must lie in (0, 1]"),
            (self.a1 > 0.0, "a1 must be > 0"),
            (self.a2 >= 0.0, "a2 must be >= 0"),
            (self.a3 > 0.0, "a3 must be > 0"),
            (self.q >= 0.0, "q must be >= 0"),
        ];
        let all_finite = [self.re, self.we, self.eta2, self.a1, self.a2, self.a3, self.q]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(ModelError::InvalidParams("parameters must be finite".into()));
        }
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(ModelError::InvalidParams((*msg).to_string())),
            None => Ok(()),
        }
    }
}

/// Steady solution record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub vw: f64,
    pub grad_p: f64,
    pub q: f64,
    pub sigma_w: f64,
}

impl SteadyState {
    fn from_slip_velocity(vw: f64, p: &ModelParams) -> Self {
        let sigma_w = slip_stress(vw, p);
        Self {
            vw,
            grad_p: -sigma_w,
            q: vw + sigma_w / 3.0,
            sigma_w,
        }
    }

    /// Velocity and viscoelastic shear stress at `y`.
    pub fn profiles(&self, p: &ModelParams, y: f64) -> (f64, f64) {
        steady_profiles(self, p, y)
    }
}

/// Nonmonotonic slip law `F(vw) = A1 (1 + A2 / (1 + A3 vw^2)) vw`.
pub fn slip_stress(vw: f64, p: &ModelParams) -> f64 {
    p.a1 * (1.0 + p.a2 / (1.0 + p.a3 * vw * vw)) * vw
}

pub fn slip_stress_deriv(vw: f64, p: &ModelParams) -> f64 {
    let s = p.a3 * vw * vw;
    p.a1 * (1.0 + p.a2 * (1.0 - s) / ((1.0 + s) * (1.0 + s)))
}

/// Steady flow rate carried by a slip velocity: `Q = vw + F(vw)/3`.
pub fn steady_flow_rate(vw: f64, p: &ModelParams) -> f64 {
    vw + slip_stress(vw, p) / 3.0
}

/// Smallest `dQ/dvw` over `[0, vw_max]`. `F'` is decreasing in `s = A3 vw^2`
/// up to `s = 3` and increasing afterwards.
fn min_flow_rate_slope(vw_max: f64, p: &ModelParams) -> f64 {
    let s_max = p.a3 * vw_max * vw_max;
    let s = s_max.min(3.0);
    let vw = (s / p.a3).sqrt();
    1.0 + slip_stress_deriv(vw, p) / 3.0
}

/// Inverts the steady flow curve: the unique forward-flow steady state
/// carrying flow rate `q`.
pub fn solve_steady_for_q(q: f64, p: &ModelParams) -> Result<SteadyState, ModelError> {
    if !(q >= 0.0) {
        return Err(ModelError::NegativeFlowRate(q));
    }
    if q == 0.0 {
        return Ok(SteadyState::from_slip_velocity(0.0, p));
    }
    // Q >= vw for forward flow, so the root lies in [0, q].
    let min_slope = min_flow_rate_slope(q, p);
    if min_slope <= 0.0 {
        return Err(ModelError::NonMonotoneFlowRateMap { vw_max: q, min_slope });
    }

    let g = |vw: f64| steady_flow_rate(vw, p) - q;
    let (mut lo, mut hi) = (0.0, q);
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut vw = 0.5 * (lo + hi);
    for _ in 0..20 {
        let r = g(vw);
        if r.abs() < 1e-15 {
            break;
        }
        let step = r / (1.0 + slip_stress_deriv(vw, p) / 3.0);
        vw -= step;
        if step.abs() < 1e-16 * vw.abs().max(1.0) {
            break;
        }
    }
    Ok(SteadyState::from_slip_velocity(vw, p))
}

/// Steady profiles `vx(y) = vw - grad_p (1 - y^2)/2` and
/// `t1(y) = (1 - eta2) grad_p y`.
pub fn steady_profiles(s: &SteadyState, p: &ModelParams, y: f64) -> (f64, f64) {
    let vx = s.vw - 0.5 * s.grad_p * (1.0 - y * y);
    let t1 = p.eta1() * s.grad_p * y;
    (vx, t1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowCurveRow {
    pub vw: f64,
    pub q: f64,
    pub sigma_w: f64,
}

/// `n` equally spaced samples of the steady flow curve for `vw` in `[0, vw_max]`.
pub fn flow_curve(p: &ModelParams, vw_max: f64, n: usize) -> Vec<FlowCurveRow> {
    assert!(n >= 2, "flow curve needs at least two samples");
    assert!(vw_max > 0.0, "vw_max must be positive");
    (0..n)
        .map(|i| {
            let vw = vw_max * i as f64 / (n - 1) as f64;
            let s = SteadyState::from_slip_velocity(vw, p);
            FlowCurveRow {
                vw,
                q: s.q,
                sigma_w: s.sigma_w,
            }
        })
        .collect()
}

/// Local maximum and minimum of the flow curve, i.e. the two positive roots
/// of `F'(vw) = 0`.
///
/// With `s = A3 vw^2` the condition is the quadratic
/// `s^2 + (2 - A2) s + (1 + A2) = 0`, solved in closed form.
pub fn flow_curve_extrema(p: &ModelParams) -> Result<(SteadyState, SteadyState), ModelError> {
    let b = 2.0 - p.a2;
    let c = 1.0 + p.a2;
    let disc = b * b - 4.0 * c;
    if disc <= 0.0 || b >= 0.0 {
        return Err(ModelError::NoExtrema);
    }
    // b < 0 here; cancellation-free pair of roots
    let big = 0.5 * (-b + disc.sqrt());
    let small = c / big;
    let vw_max = (small / p.a3).sqrt();
    let vw_min = (big / p.a3).sqrt();
    Ok((
        SteadyState::from_slip_velocity(vw_max, p),
        SteadyState::from_slip_velocity(vw_min, p),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn defaults() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn slip_stress_examples() {
        let p = defaults();
        assert_eq!(slip_stress(0.0, &p), 0.0);
        assert_abs_diff_eq!(slip_stress(0.1, &p), 0.85, epsilon = 1e-14);
        assert_abs_diff_eq!(slip_stress(0.2, &p), 0.80, epsilon = 1e-14);
    }

    #[test]
    fn slip_stress_deriv_examples() {
        let p = defaults();
        assert_abs_diff_eq!(slip_stress_deriv(0.0, &p), 16.0, epsilon = 1e-14);
        assert_abs_diff_eq!(slip_stress_deriv(0.1, &p), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(slip_stress_deriv(0.2, &p), -0.8, epsilon = 1e-14);
    }

    #[test]
    fn steady_flow_rate_examples() {
        let p = defaults();
        assert_eq!(steady_flow_rate(0.0, &p), 0.0);
        assert_abs_diff_eq!(steady_flow_rate(0.1, &p), 0.1 + 0.85 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(steady_flow_rate(0.2, &p), 0.2 + 0.8 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn solve_steady_examples() {
        let p = defaults();
        let s0 = solve_steady_for_q(0.0, &p).unwrap();
        assert_eq!((s0.vw, s0.grad_p), (0.0, 0.0));

        let s = solve_steady_for_q(0.1 + 0.85 / 3.0, &p).unwrap();
        assert_abs_diff_eq!(s.vw, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sigma_w, 0.85, epsilon = 1e-12);
        assert_eq!(s.grad_p, -s.sigma_w);

        let s = solve_steady_for_q(0.2 + 0.8 / 3.0, &p).unwrap();
        assert_abs_diff_eq!(s.vw, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sigma_w, 0.80, epsilon = 1e-12);
    }

    #[test]
    fn solve_steady_residual_below_1e12() {
        let p = defaults();
        for q in [0.01, 0.3, 0.4135, 0.45, 0.53, 0.6, 2.0] {
            let s = solve_steady_for_q(q, &p).unwrap();
            assert!((steady_flow_rate(s.vw, &p) - q).abs() < 1e-12, "q = {q}");
            assert_eq!(s.sigma_w, slip_stress(s.vw, &p));
            assert_eq!(s.q, s.vw + s.sigma_w / 3.0);
        }
    }

    #[test]
    fn solve_steady_rejects_nonmonotone_law() {
        // min dQ/dvw = 1 + (1 - A2/8)/3 < 0 for A2 > 32
        let p = ModelParams { a2: 40.0, ..defaults() };
        assert!(matches!(
            solve_steady_for_q(0.5, &p),
            Err(ModelError::NonMonotoneFlowRateMap { .. })
        ));
        // bracket too short to reach the dip: still fine
        assert!(solve_steady_for_q(0.01, &p).is_ok());
        assert!(matches!(
            solve_steady_for_q(-0.1, &defaults()),
            Err(ModelError::NegativeFlowRate(_))
        ));
    }

    #[test]
    fn steady_profile_examples() {
        let p = defaults();
        let s = solve_steady_for_q(steady_flow_rate(0.1, &p), &p).unwrap();
        let (vx, t1) = steady_profiles(&s, &p, 1.0);
        assert_abs_diff_eq!(vx, s.vw, epsilon = 1e-15);
        assert_abs_diff_eq!(t1, 0.9 * s.grad_p, epsilon = 1e-15);
        let (vx, t1) = steady_profiles(&s, &p, 0.0);
        assert_abs_diff_eq!(vx, 0.525, epsilon = 1e-12);
        assert_eq!(t1, 0.0);
        let (_, t1) = steady_profiles(&s, &p, 0.5);
        assert_abs_diff_eq!(t1, -0.3825, epsilon = 1e-12);
    }

    #[test]
    fn steady_total_stress_is_linear() {
        let p = defaults();
        let s = solve_steady_for_q(0.45, &p).unwrap();
        for y in [0.0, 0.2, 0.7, 1.0] {
            let (_, t1) = steady_profiles(&s, &p, y);
            let dvx = s.grad_p * y;
            assert_abs_diff_eq!(t1 + p.eta2 * dvx, s.grad_p * y, epsilon = 1e-15);
        }
    }

    #[test]
    fn flow_curve_examples() {
        let p = defaults();
        let rows = flow_curve(&p, 0.1, 2);
        assert_eq!(
            rows[0],
            FlowCurveRow {
                vw: 0.0,
                q: 0.0,
                sigma_w: 0.0
            }
        );
        assert_abs_diff_eq!(rows[1].q, 0.383333333333333, epsilon = 1e-12);
        assert_abs_diff_eq!(rows[1].sigma_w, 0.85, epsilon = 1e-14);

        let rows = flow_curve(&p, 1.0, 2001);
        for r in &rows {
            assert_eq!(r.sigma_w, slip_stress(r.vw, &p));
        }
        // one interior maximum and one interior minimum of sigma_w
        let turns = rows
            .windows(3)
            .filter(|w| (w[1].sigma_w - w[0].sigma_w) * (w[2].sigma_w - w[1].sigma_w) < 0.0)
            .count();
        assert_eq!(turns, 2);
    }

    #[test]
    fn flow_curve_extrema_examples() {
        let p = defaults();
        let (mx, mn) = flow_curve_extrema(&p).unwrap();
        assert_abs_diff_eq!(mx.vw, 0.117326, epsilon = 1e-6);
        assert_abs_diff_eq!(mx.q, 0.40328, epsilon = 1e-5);
        assert_abs_diff_eq!(mx.sigma_w, 0.85785, epsilon = 1e-5);
        assert_abs_diff_eq!(mn.vw, 0.340933, epsilon = 1e-6);
        assert_abs_diff_eq!(mn.q, 0.58962, epsilon = 1e-5);
        // exact value 0.7460490..., the quoted 0.74606 is rounded
        assert_abs_diff_eq!(mn.sigma_w, 0.74606, epsilon = 2e-5);
        let s_min: f64 = (13.0 + 105f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(
            mn.sigma_w,
            0.1 * s_min.sqrt() * (1.0 + 15.0 / (1.0 + s_min)),
            epsilon = 1e-12
        );
        assert!(slip_stress_deriv(mx.vw, &p).abs() < 1e-10);
        assert!(slip_stress_deriv(mn.vw, &p).abs() < 1e-10);
        assert!(mx.sigma_w > mn.sigma_w);

        let mono = ModelParams { a2: 0.0, ..p };
        assert_eq!(flow_curve_extrema(&mono), Err(ModelError::NoExtrema));
    }

    #[test]
    fn extrema_match_hand_quadratic() {
        // s^2 - 13 s + 16 = 0
        let p = defaults();
        let (mx, mn) = flow_curve_extrema(&p).unwrap();
        let s_lo = (13.0 - 105f64.sqrt()) / 2.0;
        let s_hi = (13.0 + 105f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(mx.vw, (s_lo / 100.0).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(mn.vw, (s_hi / 100.0).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn default_flow_rate_map_is_monotone() {
        let p = defaults();
        // min F' = A1 (1 - A2/8) at A3 vw^2 = 3
        assert_abs_diff_eq!(min_flow_rate_slope(10.0, &p), 1.0 - 0.875 / 3.0, epsilon = 1e-14);
        let vw = (3.0f64 / 100.0).sqrt();
        assert_abs_diff_eq!(slip_stress_deriv(vw, &p), -0.875, epsilon = 1e-14);
    }

    #[test]
    fn critical_slope_maps_to_reported_hopf_flow_rates() {
        // -F'(vw) = 0.384 has two roots on the negative-slope branch
        let p = defaults();
        let (mx, mn) = flow_curve_extrema(&p).unwrap();
        let root = |mut lo: f64, mut hi: f64| {
            let g = |v: f64| -slip_stress_deriv(v, &p) - 0.384;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(lo) * g(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let v_left = root(mx.vw, (3.0f64 / 100.0).sqrt());
        let v_right = root((3.0f64 / 100.0).sqrt(), mn.vw);
        assert_abs_diff_eq!(v_left, 0.1283, epsilon = 1e-4);
        assert_abs_diff_eq!(v_right, 0.2682, epsilon = 1e-4);
        assert_abs_diff_eq!(steady_flow_rate(v_left, &p), 0.4135, epsilon = 5e-4);
        assert_abs_diff_eq!(steady_flow_rate(v_right, &p), 0.5213, epsilon = 5e-4);
    }

    #[test]
    fn params_validation() {
        assert!(defaults().validate().is_ok());
        assert!(ModelParams { re: 0.0, ..defaults() }.validate().is_err());
        assert!(ModelParams {
            eta2: 1.5,
            ..defaults()
        }
        .validate()
        .is_err());
        assert!(ModelParams {
            q: f64::NAN,
            ..defaults()
        }
        .validate()
        .is_err());
        assert_abs_diff_eq!(defaults().elasticity(), 10.0, epsilon = 1e-12);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn slip_stress_is_odd(v in -5.0f64..5.0, a1 in 0.1f64..5.0, a2 in 0.0f64..40.0, a3 in 0.1f64..500.0) {
                let p = ModelParams { a1, a2, a3, ..ModelParams::default() };
                prop_assert_eq!(slip_stress(-v, &p), -slip_stress(v, &p));
            }

            #[test]
            fn derivative_matches_central_difference(v in 0.01f64..1.0) {
                let p = ModelParams::default();
                let h = 1e-6;
                let fd = (slip_stress(v + h, &p) - slip_stress(v - h, &p)) / (2.0 * h);
                let exact = slip_stress_deriv(v, &p);
                prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0));
            }

            #[test]
            fn default_flow_rate_slope_bounded_below(v in 0.0f64..3.0) {
                let p = ModelParams::default();
                prop_assert!(1.0 + slip_stress_deriv(v, &p) / 3.0 >= 0.708);
            }
        }

        #[test]
        fn round_trip_listed_velocities() {
            let p = ModelParams::default();
            for vw in [0.05, 0.1283, 0.2682, 0.5] {
                let s = solve_steady_for_q(steady_flow_rate(vw, &p), &p).unwrap();
                assert!((s.vw - vw).abs() < 1e-10);
            }
        }
    }
}
