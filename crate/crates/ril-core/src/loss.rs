//! Margin losses and their symmetry properties.
//!
//! A loss `l` is *symmetric* when `l(z) + l(-z) = c` for a constant `c` at
//! every finite margin `z`. Symmetric losses are what makes balanced-risk
//! minimization immune to mixture noise in the demonstration data; the
//! non-symmetric logistic and hinge losses are kept in the catalog as
//! baselines and as inputs to [`normalize`], which renders any of them
//! symmetric with constant 1.

use crate::error::{Error, Result};

/// Loss families selectable at runtime. String tokens (for configs and the
/// CLI) are `logistic | hinge | sigmoid | unhinged | nlogistic | nhinge | ap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    Hinge,
    Sigmoid,
    Unhinged,
    NormalizedLogistic,
    NormalizedHinge,
    Ap,
}

impl LossKind {
    pub fn token(&self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::Hinge => "hinge",
            LossKind::Sigmoid => "sigmoid",
            LossKind::Unhinged => "unhinged",
            LossKind::NormalizedLogistic => "nlogistic",
            LossKind::NormalizedHinge => "nhinge",
            LossKind::Ap => "ap",
        }
    }

    pub fn from_token(token: &str) -> Result<LossKind> {
        match token {
            "logistic" => Ok(LossKind::Logistic),
            "hinge" => Ok(LossKind::Hinge),
            "sigmoid" => Ok(LossKind::Sigmoid),
            "unhinged" => Ok(LossKind::Unhinged),
            "nlogistic" => Ok(LossKind::NormalizedLogistic),
            "nhinge" => Ok(LossKind::NormalizedHinge),
            "ap" => Ok(LossKind::Ap),
            other => Err(Error::domain(format!("unknown loss kind `{other}`"))),
        }
    }

    /// All catalog entries, symmetric and not.
    pub fn all() -> [LossKind; 7] {
        [
            LossKind::Logistic,
            LossKind::Hinge,
            LossKind::Sigmoid,
            LossKind::Unhinged,
            LossKind::NormalizedLogistic,
            LossKind::NormalizedHinge,
            LossKind::Ap,
        ]
    }

    /// The symmetric subset of the catalog.
    pub fn symmetric() -> [LossKind; 5] {
        [
            LossKind::Sigmoid,
            LossKind::Unhinged,
            LossKind::NormalizedLogistic,
            LossKind::NormalizedHinge,
            LossKind::Ap,
        ]
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// A loss together with its symmetry constant, when one exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// `c` with `l(z) + l(-z) = c`; `None` for non-symmetric losses.
    pub symmetry_constant: Option<f64>,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> LossSpec {
        let symmetry_constant = match kind {
            LossKind::Logistic | LossKind::Hinge => None,
            LossKind::Sigmoid => Some(1.0),
            LossKind::Unhinged => Some(2.0),
            LossKind::NormalizedLogistic | LossKind::NormalizedHinge | LossKind::Ap => Some(1.0),
        };
        LossSpec { kind, symmetry_constant }
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetry_constant.is_some()
    }

    /// Loss value at margin `z`. Rejects non-finite margins.
    pub fn eval(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::domain(format!("loss evaluated at non-finite z={z}")));
        }
        Ok(self.eval_finite(z))
    }

    /// Loss value assuming `z` is finite (checked in debug builds only).
    #[inline]
    pub fn eval_finite(&self, z: f64) -> f64 {
        debug_assert!(z.is_finite());
        match self.kind {
            LossKind::Logistic => softplus(-z),
            LossKind::Hinge => (1.0 - z).max(0.0),
            LossKind::Sigmoid => sigmoid(-z),
            LossKind::Unhinged => 1.0 - z,
            LossKind::NormalizedLogistic => normalized(softplus(-z), softplus(z)),
            LossKind::NormalizedHinge => normalized((1.0 - z).max(0.0), (1.0 + z).max(0.0)),
            // Explicit active-passive form; equals
            // 0.5 * normalized-logistic + 0.5 * sigmoid pointwise.
            LossKind::Ap => {
                0.5 * normalized(softplus(-z), softplus(z)) + 0.5 * sigmoid(-z)
            }
        }
    }

    /// Derivative dl/dz. Hinge-family kinks use the convention that the
    /// derivative of `max(1-z, 0)` at `z = 1` is 0 (the right derivative).
    pub fn grad(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::domain(format!("loss gradient at non-finite z={z}")));
        }
        Ok(self.grad_finite(z))
    }

    /// Derivative assuming `z` is finite (checked in debug builds only).
    #[inline]
    pub fn grad_finite(&self, z: f64) -> f64 {
        debug_assert!(z.is_finite());
        match self.kind {
            LossKind::Logistic => -sigmoid(-z),
            LossKind::Hinge => hinge_grad(z),
            LossKind::Sigmoid => -sigmoid(z) * sigmoid(-z),
            LossKind::Unhinged => -1.0,
            LossKind::NormalizedLogistic => {
                normalized_grad(softplus(-z), softplus(z), -sigmoid(-z), -sigmoid(z))
            }
            LossKind::NormalizedHinge => normalized_grad(
                (1.0 - z).max(0.0),
                (1.0 + z).max(0.0),
                hinge_grad(z),
                hinge_grad(-z),
            ),
            LossKind::Ap => {
                0.5 * normalized_grad(softplus(-z), softplus(z), -sigmoid(-z), -sigmoid(z))
                    - 0.5 * sigmoid(z) * sigmoid(-z)
            }
        }
    }
}

/// Symmetric counterpart `l(z) / (l(z) + l(-z))` of a base loss.
/// Only defined for the non-symmetric catalog entries.
pub fn normalize(base: LossKind) -> Result<LossSpec> {
    match base {
        LossKind::Logistic => Ok(LossSpec::new(LossKind::NormalizedLogistic)),
        LossKind::Hinge => Ok(LossSpec::new(LossKind::NormalizedHinge)),
        other => Err(Error::domain(format!(
            "normalize expects logistic or hinge, got `{other}`"
        ))),
    }
}

/// Max over `zs` of `|l(z) + l(-z) - 2*l(0)|`; zero (to rounding) exactly
/// for symmetric losses.
pub fn symmetry_defect(spec: &LossSpec, zs: &[f64]) -> Result<f64> {
    if zs.is_empty() {
        return Err(Error::domain("symmetry_defect needs at least one margin"));
    }
    let c_bar = 2.0 * spec.eval(0.0)?;
    let mut worst = 0.0f64;
    for &z in zs {
        let defect = (spec.eval(z)? + spec.eval(-z)? - c_bar).abs();
        worst = worst.max(defect);
    }
    Ok(worst)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-x})` without overflow.
#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn hinge_grad(z: f64) -> f64 {
    if z < 1.0 {
        -1.0
    } else {
        0.0
    }
}

/// `num / (num + mirror)` with the 0/0 limit pinned at 1/2.
#[inline]
fn normalized(num: f64, mirror: f64) -> f64 {
    let denom = num + mirror;
    if denom == 0.0 {
        0.5
    } else {
        num / denom
    }
}

/// Quotient rule for `num(z) / (num(z) + mirror(z))` where `mirror(z) = num(-z)`,
/// given the base derivatives at `z` and `-z`.
#[inline]
fn normalized_grad(num: f64, mirror: f64, dnum: f64, dnum_neg: f64) -> f64 {
    let denom = num + mirror;
    if denom == 0.0 {
        return 0.0;
    }
    // d/dz mirror(z) = -num'(-z)
    let ddenom = dnum - dnum_neg;
    (dnum * denom - num * ddenom) / (denom * denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// e^x by direct Taylor summation; reciprocal form for negative x to
    /// avoid cancellation. Test-only oracle, independent of std exp.
    fn exp_series(x: f64) -> f64 {
        if x < 0.0 {
            return 1.0 / exp_series(-x);
        }
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        let mut k = 1.0f64;
        while term > 1e-300 * sum {
            term *= x / k;
            sum += term;
            k += 1.0;
            if k > 500.0 {
                break;
            }
        }
        sum
    }

    /// ln(1+x) for |x| < 1 by alternating series. Test-only oracle.
    fn ln1p_series(x: f64) -> f64 {
        assert!(x.abs() < 1.0);
        let mut sum = 0.0f64;
        let mut term = x;
        let mut k = 1.0f64;
        loop {
            sum += term / k;
            term *= -x;
            k += 1.0;
            if term.abs() / k < 1e-20 {
                break;
            }
        }
        sum
    }

    fn central_diff(spec: &LossSpec, z: f64, h: f64) -> f64 {
        (spec.eval_finite(z + h) - spec.eval_finite(z - h)) / (2.0 * h)
    }

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    #[test]
    fn trivial_values() {
        assert_eq!(LossSpec::new(LossKind::Ap).eval(0.0).unwrap(), 0.5);
        assert_eq!(LossSpec::new(LossKind::Unhinged).eval(1.0).unwrap(), 0.0);
        assert_eq!(LossSpec::new(LossKind::Sigmoid).eval(0.0).unwrap(), 0.5);
        assert_eq!(
            LossSpec::new(LossKind::NormalizedLogistic).eval(0.0).unwrap(),
            0.5
        );
        assert_eq!(LossSpec::new(LossKind::Sigmoid).grad(0.0).unwrap(), -0.25);
        for z in [-7.3, 0.0, 2.5, 100.0] {
            assert_eq!(LossSpec::new(LossKind::Unhinged).grad(z).unwrap(), -1.0);
        }
    }

    #[test]
    fn ap_is_symmetric_at_arbitrary_margin() {
        let ap = LossSpec::new(LossKind::Ap);
        let v = ap.eval(1.7).unwrap() + ap.eval(-1.7).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "ap symmetry violated: {v}");
    }

    #[test]
    fn logistic_matches_series_oracle() {
        let logistic = LossSpec::new(LossKind::Logistic);
        for z in [3.2, -2.1, 0.4, 8.0, -11.5] {
            let expected = if z >= 0.0 {
                ln1p_series(exp_series(-z))
            } else {
                // ln(1+e^{-z}) = -z + ln(1+e^{z}) keeps the series argument < 1
                -z + ln1p_series(exp_series(z))
            };
            let got = logistic.eval(z).unwrap();
            assert!(
                (got - expected).abs() < 1e-13,
                "logistic({z}) = {got}, oracle {expected}"
            );
        }
    }

    #[test]
    fn non_finite_margin_rejected() {
        let spec = LossSpec::new(LossKind::Sigmoid);
        assert!(spec.eval(f64::NAN).is_err());
        assert!(spec.eval(f64::INFINITY).is_err());
        assert!(spec.grad(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn normalize_constructs_symmetric_specs() {
        let nlog = normalize(LossKind::Logistic).unwrap();
        assert_eq!(nlog.symmetry_constant, Some(1.0));
        assert!((nlog.eval(0.0).unwrap() - 0.5).abs() < 1e-15);
        let w = nlog.eval(1.3).unwrap() + nlog.eval(-1.3).unwrap();
        assert!((w - 1.0).abs() < 1e-12);

        let nhinge = normalize(LossKind::Hinge).unwrap();
        assert_eq!(nhinge.eval(2.0).unwrap(), 0.0);
        assert_eq!(nhinge.eval(-2.0).unwrap(), 1.0);

        assert!(normalize(LossKind::Sigmoid).is_err());
        assert!(normalize(LossKind::Ap).is_err());
    }

    #[test]
    fn symmetry_defect_separates_the_catalog() {
        let zs = grid(-10.0, 10.0, 0.1);
        for kind in LossKind::symmetric() {
            let spec = LossSpec::new(kind);
            let defect = symmetry_defect(&spec, &zs).unwrap();
            assert!(defect < 1e-12, "{kind} defect {defect}");
        }
        let logistic = LossSpec::new(LossKind::Logistic);
        assert!(symmetry_defect(&logistic, &[2.0]).unwrap() > 0.1);
        let hinge = LossSpec::new(LossKind::Hinge);
        assert!(symmetry_defect(&hinge, &[2.0]).unwrap() > 0.1);
    }

    #[test]
    fn symmetry_defect_rejects_empty_grid() {
        let spec = LossSpec::new(LossKind::Sigmoid);
        assert!(symmetry_defect(&spec, &[]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        for kind in LossKind::all() {
            let spec = LossSpec::new(kind);
            for z in grid(-20.0, 20.0, 0.37) {
                // skip hinge-family kinks at +-1
                if (z.abs() - 1.0).abs() < 1e-3 {
                    continue;
                }
                let g = spec.grad(z).unwrap();
                let fd = central_diff(&spec, z, h);
                let tol = 1e-6 * g.abs().max(1.0);
                assert!(
                    (g - fd).abs() < tol,
                    "{kind} grad({z}) = {g}, fd {fd}"
                );
            }
        }
    }

    #[test]
    fn ap_gradient_matches_finite_difference_at_example_point() {
        let ap = LossSpec::new(LossKind::Ap);
        let g = ap.grad(0.7).unwrap();
        let fd = central_diff(&ap, 0.7, 1e-5);
        assert!((g - fd).abs() < 1e-6);
    }

    #[test]
    fn symmetric_gradients_are_even_under_negation() {
        // differentiating l(z) + l(-z) = c gives l'(z) = l'(-z) mirrored
        for kind in LossKind::symmetric() {
            let spec = LossSpec::new(kind);
            for z in grid(-12.0, 12.0, 0.53) {
                if (z.abs() - 1.0).abs() < 1e-3 {
                    continue;
                }
                let a = spec.grad(z).unwrap();
                let b = spec.grad(-z).unwrap();
                assert!((a - b).abs() < 1e-9, "{kind} at {z}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn ap_equals_mixture_of_normalized_logistic_and_sigmoid() {
        let ap = LossSpec::new(LossKind::Ap);
        let nlog = normalize(LossKind::Logistic).unwrap();
        let sig = LossSpec::new(LossKind::Sigmoid);
        for z in grid(-50.0, 50.0, 0.25) {
            let composed = 0.5 * nlog.eval(z).unwrap() + 0.5 * sig.eval(z).unwrap();
            let direct = ap.eval(z).unwrap();
            assert!(
                (composed - direct).abs() < 1e-12,
                "ap({z}): direct {direct}, composed {composed}"
            );
        }
    }

    #[test]
    fn listed_losses_are_non_increasing() {
        let kinds = [
            LossKind::Sigmoid,
            LossKind::Logistic,
            LossKind::Ap,
            LossKind::Unhinged,
            LossKind::NormalizedLogistic,
        ];
        for kind in kinds {
            let spec = LossSpec::new(kind);
            let zs = grid(-50.0, 50.0, 0.05);
            for w in zs.windows(2) {
                let a = spec.eval(w[0]).unwrap();
                let b = spec.eval(w[1]).unwrap();
                assert!(b <= a + 1e-12, "{kind} increases between {} and {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn stable_at_large_margins() {
        for kind in LossKind::all() {
            let spec = LossSpec::new(kind);
            for z in [-500.0, -123.4, 123.4, 500.0] {
                let v = spec.eval(z).unwrap();
                assert!(v.is_finite(), "{kind}({z}) = {v}");
                let g = spec.grad(z).unwrap();
                assert!(g.is_finite(), "{kind}'({z}) = {g}");
            }
        }
    }

    #[test]
    fn token_round_trip() {
        for kind in LossKind::all() {
            assert_eq!(LossKind::from_token(kind.token()).unwrap(), kind);
        }
        assert!(LossKind::from_token("ramp").is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn symmetric_defect_bounded(z in -50.0f64..50.0) {
                for kind in LossKind::symmetric() {
                    let spec = LossSpec::new(kind);
                    let c = spec.symmetry_constant.unwrap();
                    let d = (spec.eval(z).unwrap() + spec.eval(-z).unwrap() - c).abs();
                    prop_assert!(d <= 1e-9);
                }
            }

            #[test]
            fn grad_matches_fd_away_from_kinks(z in -20.0f64..20.0) {
                prop_assume!((z.abs() - 1.0).abs() >= 1e-3);
                for kind in LossKind::all() {
                    let spec = LossSpec::new(kind);
                    let g = spec.grad(z).unwrap();
                    let fd = central_diff(&spec, z, 1e-5);
                    prop_assert!((g - fd).abs() <= 1e-6 * g.abs().max(1.0));
                }
            }
        }
    }
}
