//! Local objective functions.
//!
//! Each node owns a scalar function `f` that is strictly convex and
//! continuously differentiable on a nonempty open interval, with a minimizer
//! strictly inside that interval. Five concrete families cover the landscape
//! the algorithms must survive: linear derivative dynamics (quadratic,
//! weighted quadratic), flat-bottomed curvature (quartic plus quadratic),
//! asymmetric curvature (exponential plus linear), and a genuinely
//! restricted open domain (quadratic with a logarithmic barrier).
//!
//! Evaluation strictly inside the open domain is exact per the family
//! formula; evaluation on or beyond a boundary is a [`DomainViolation`]
//! error, never a clamp.
//!
//! A spec serializes to the canonical text form
//! `family:param1,param2,...[@lo,hi]` (for example `quadratic:2,0` or
//! `log-barrier-quadratic:1,1,0@0,inf`). The `@lo,hi` suffix appears only
//! when the domain differs from the family default. Parsing the canonical
//! form reproduces the spec field-for-field, which is what lets gossiping
//! nodes ship their functions to each other as a single text payload.
//!
//! [`DomainViolation`]: ObjectiveError::DomainViolation

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Error raised by objective construction, parsing, or evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    /// `x` is outside or on the boundary of the open domain.
    #[error("domain violation: x = {x} not strictly inside ({lo}, {hi})")]
    DomainViolation { x: f64, lo: f64, hi: f64 },
    /// Parameters violate the family's structural requirements.
    #[error("invalid objective spec: {reason}")]
    InvalidSpec { reason: String },
    /// The canonical text form could not be parsed.
    #[error("cannot parse objective spec `{input}`: {reason}")]
    Parse { input: String, reason: String },
}

impl ObjectiveError {
    fn invalid(reason: impl Into<String>) -> Self {
        ObjectiveError::InvalidSpec {
            reason: reason.into(),
        }
    }

    fn parse(input: &str, reason: impl Into<String>) -> Self {
        ObjectiveError::Parse {
            input: input.to_owned(),
            reason: reason.into(),
        }
    }
}

/// An open interval `(lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// The whole real line.
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self, ObjectiveError> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(ObjectiveError::invalid(format!(
                "domain ({lo}, {hi}) is not a nonempty open interval"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Strict interior membership (boundaries excluded).
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// Family-specific parameters.
///
/// Convexity note: `WeightedQuadratic` only requires `w != 0` structurally.
/// A negative weight produces a concave function whose derivative decreases,
/// which downstream solvers detect and report as a broken spec
/// (`BracketInvalid`); the other families enforce the sign constraints that
/// guarantee a minimizer at construction time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    /// `f(x) = ½(x−y)² + c`
    Quadratic { y: f64, c: f64 },
    /// `f(x) = (w/2)(x−y)²`, `w ≠ 0`
    WeightedQuadratic { w: f64, y: f64 },
    /// `f(x) = a(x−y)⁴ + b(x−y)²`, `a > 0`, `b > 0`
    QuarticPlusQuadratic { a: f64, b: f64, y: f64 },
    /// `f(x) = e^{sx} − s·m·x`, `s > 0`, `m > 0`
    ExpPlusLinear { s: f64, m: f64 },
    /// `f(x) = ½(x−y)² − μ·ln(x−lo)`, `μ > 0`, default domain `(lo, ∞)`
    LogBarrierQuadratic { y: f64, mu: f64, lo: f64 },
}

impl ObjectiveKind {
    fn family_tag(&self) -> &'static str {
        match self {
            ObjectiveKind::Quadratic { .. } => "quadratic",
            ObjectiveKind::WeightedQuadratic { .. } => "weighted-quadratic",
            ObjectiveKind::QuarticPlusQuadratic { .. } => "quartic-plus-quadratic",
            ObjectiveKind::ExpPlusLinear { .. } => "exp-plus-linear",
            ObjectiveKind::LogBarrierQuadratic { .. } => "log-barrier-quadratic",
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            ObjectiveKind::Quadratic { y, c } => vec![y, c],
            ObjectiveKind::WeightedQuadratic { w, y } => vec![w, y],
            ObjectiveKind::QuarticPlusQuadratic { a, b, y } => vec![a, b, y],
            ObjectiveKind::ExpPlusLinear { s, m } => vec![s, m],
            ObjectiveKind::LogBarrierQuadratic { y, mu, lo } => vec![y, mu, lo],
        }
    }

    fn default_domain(&self) -> Interval {
        match *self {
            ObjectiveKind::LogBarrierQuadratic { lo, .. } => Interval {
                lo,
                hi: f64::INFINITY,
            },
            _ => Interval::REAL_LINE,
        }
    }

    fn validate(&self) -> Result<(), ObjectiveError> {
        if self.params().iter().any(|p| !p.is_finite()) {
            return Err(ObjectiveError::invalid(format!(
                "{}: parameters must be finite",
                self.family_tag()
            )));
        }
        match *self {
            ObjectiveKind::Quadratic { .. } => Ok(()),
            ObjectiveKind::WeightedQuadratic { w, .. } => {
                if w == 0.0 {
                    Err(ObjectiveError::invalid(
                        "weighted-quadratic: w must be nonzero",
                    ))
                } else {
                    Ok(())
                }
            }
            ObjectiveKind::QuarticPlusQuadratic { a, b, .. } => {
                if a > 0.0 && b > 0.0 {
                    Ok(())
                } else {
                    Err(ObjectiveError::invalid(
                        "quartic-plus-quadratic: requires a > 0 and b > 0",
                    ))
                }
            }
            ObjectiveKind::ExpPlusLinear { s, m } => {
                if s > 0.0 && m > 0.0 {
                    Ok(())
                } else {
                    Err(ObjectiveError::invalid(
                        "exp-plus-linear: requires s > 0 and m > 0",
                    ))
                }
            }
            ObjectiveKind::LogBarrierQuadratic { mu, .. } => {
                if mu > 0.0 {
                    Ok(())
                } else {
                    Err(ObjectiveError::invalid(
                        "log-barrier-quadratic: requires mu > 0",
                    ))
                }
            }
        }
    }
}

/// A node's local objective: family parameters plus an open domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    kind: ObjectiveKind,
    domain: Interval,
}

impl ObjectiveSpec {
    /// Builds a spec on the family's default domain.
    pub fn new(kind: ObjectiveKind) -> Result<Self, ObjectiveError> {
        Self::with_domain(kind, kind.default_domain())
    }

    /// Builds a spec on an explicit open domain.
    ///
    /// The domain must fit inside the family's default domain, and the
    /// stationary point must lie strictly inside it.
    pub fn with_domain(kind: ObjectiveKind, domain: Interval) -> Result<Self, ObjectiveError> {
        kind.validate()?;
        let default = kind.default_domain();
        if domain.lo.is_nan() || domain.hi.is_nan() || domain.lo >= domain.hi {
            return Err(ObjectiveError::invalid(format!(
                "domain ({}, {}) is not a nonempty open interval",
                domain.lo, domain.hi
            )));
        }
        if domain.lo < default.lo || domain.hi > default.hi {
            return Err(ObjectiveError::invalid(format!(
                "domain {domain} exceeds the family domain {default}"
            )));
        }
        let spec = Self { kind, domain };
        let stationary = spec.minimizer();
        if !domain.contains(stationary) {
            return Err(ObjectiveError::invalid(format!(
                "minimizer {stationary} is not strictly inside the domain {domain}"
            )));
        }
        Ok(spec)
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    fn check_domain(&self, x: f64) -> Result<(), ObjectiveError> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(ObjectiveError::DomainViolation {
                x,
                lo: self.domain.lo,
                hi: self.domain.hi,
            })
        }
    }

    /// `f(x)` for `x` strictly inside the domain.
    pub fn eval(&self, x: f64) -> Result<f64, ObjectiveError> {
        self.check_domain(x)?;
        Ok(self.eval_raw(x))
    }

    /// `f′(x)` for `x` strictly inside the domain; strictly increasing in `x`
    /// for a convex spec.
    pub fn deriv(&self, x: f64) -> Result<f64, ObjectiveError> {
        self.check_domain(x)?;
        Ok(self.deriv_raw(x))
    }

    /// `f(x)` without the domain check. Callers must have established that
    /// `x` is strictly inside the domain.
    pub(crate) fn eval_raw(&self, x: f64) -> f64 {
        match self.kind {
            ObjectiveKind::Quadratic { y, c } => 0.5 * (x - y) * (x - y) + c,
            ObjectiveKind::WeightedQuadratic { w, y } => 0.5 * w * (x - y) * (x - y),
            ObjectiveKind::QuarticPlusQuadratic { a, b, y } => {
                let d = x - y;
                let d2 = d * d;
                a * d2 * d2 + b * d2
            }
            ObjectiveKind::ExpPlusLinear { s, m } => (s * x).exp() - s * m * x,
            ObjectiveKind::LogBarrierQuadratic { y, mu, lo } => {
                0.5 * (x - y) * (x - y) - mu * (x - lo).ln()
            }
        }
    }

    /// `f′(x)` without the domain check.
    pub(crate) fn deriv_raw(&self, x: f64) -> f64 {
        match self.kind {
            ObjectiveKind::Quadratic { y, .. } => x - y,
            ObjectiveKind::WeightedQuadratic { w, y } => w * (x - y),
            ObjectiveKind::QuarticPlusQuadratic { a, b, y } => {
                let d = x - y;
                4.0 * a * d * d * d + 2.0 * b * d
            }
            ObjectiveKind::ExpPlusLinear { s, m } => s * (s * x).exp() - s * m,
            ObjectiveKind::LogBarrierQuadratic { y, mu, lo } => (x - y) - mu / (x - lo),
        }
    }

    /// The stationary point of `f`, in closed form per family. For a convex
    /// spec this is the unique minimizer `x*` with `f′(x*) = 0`.
    pub fn minimizer(&self) -> f64 {
        match self.kind {
            ObjectiveKind::Quadratic { y, .. } => y,
            ObjectiveKind::WeightedQuadratic { y, .. } => y,
            ObjectiveKind::QuarticPlusQuadratic { y, .. } => y,
            ObjectiveKind::ExpPlusLinear { s, m } => m.ln() / s,
            ObjectiveKind::LogBarrierQuadratic { y, mu, lo } => {
                // Positive root of (x−y)(x−lo) = μ, which lies strictly
                // right of both y and lo.
                let d = y - lo;
                0.5 * ((y + lo) + (d * d + 4.0 * mu).sqrt())
            }
        }
    }

    /// Canonical text form `family:params[@lo,hi]`.
    pub fn canonical(&self) -> String {
        let params = self
            .kind
            .params()
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut out = format!("{}:{}", self.kind.family_tag(), params);
        if self.domain != self.kind.default_domain() {
            out.push_str(&format!("@{},{}", self.domain.lo, self.domain.hi));
        }
        out
    }
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for ObjectiveSpec {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let (head, domain_part) = match trimmed.split_once('@') {
            Some((h, d)) => (h, Some(d)),
            None => (trimmed, None),
        };
        let (tag, params_part) = head
            .split_once(':')
            .ok_or_else(|| ObjectiveError::parse(s, "expected `family:params`"))?;
        let params = params_part
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| ObjectiveError::parse(s, format!("bad parameter `{p}`: {e}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;

        let expect = |n: usize| -> Result<(), ObjectiveError> {
            if params.len() == n {
                Ok(())
            } else {
                Err(ObjectiveError::parse(
                    s,
                    format!("{tag} takes {n} parameters, got {}", params.len()),
                ))
            }
        };
        let kind = match tag.trim() {
            "quadratic" => {
                expect(2)?;
                ObjectiveKind::Quadratic {
                    y: params[0],
                    c: params[1],
                }
            }
            "weighted-quadratic" => {
                expect(2)?;
                ObjectiveKind::WeightedQuadratic {
                    w: params[0],
                    y: params[1],
                }
            }
            "quartic-plus-quadratic" => {
                expect(3)?;
                ObjectiveKind::QuarticPlusQuadratic {
                    a: params[0],
                    b: params[1],
                    y: params[2],
                }
            }
            "exp-plus-linear" => {
                expect(2)?;
                ObjectiveKind::ExpPlusLinear {
                    s: params[0],
                    m: params[1],
                }
            }
            "log-barrier-quadratic" => {
                expect(3)?;
                ObjectiveKind::LogBarrierQuadratic {
                    y: params[0],
                    mu: params[1],
                    lo: params[2],
                }
            }
            other => {
                return Err(ObjectiveError::parse(
                    s,
                    format!("unknown family `{other}`"),
                ));
            }
        };

        match domain_part {
            None => ObjectiveSpec::new(kind),
            Some(d) => {
                let (lo, hi) = d
                    .split_once(',')
                    .ok_or_else(|| ObjectiveError::parse(s, "domain suffix must be `@lo,hi`"))?;
                let lo = lo
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| ObjectiveError::parse(s, format!("bad domain lo: {e}")))?;
                let hi = hi
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| ObjectiveError::parse(s, format!("bad domain hi: {e}")))?;
                ObjectiveSpec::with_domain(kind, Interval { lo, hi })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(y: f64, c: f64) -> ObjectiveSpec {
        ObjectiveSpec::new(ObjectiveKind::Quadratic { y, c }).unwrap()
    }

    fn all_families() -> Vec<ObjectiveSpec> {
        vec![
            quad(2.0, 0.5),
            ObjectiveSpec::new(ObjectiveKind::WeightedQuadratic { w: 3.0, y: 1.0 }).unwrap(),
            ObjectiveSpec::new(ObjectiveKind::QuarticPlusQuadratic {
                a: 1.0,
                b: 1.0,
                y: 0.5,
            })
            .unwrap(),
            ObjectiveSpec::new(ObjectiveKind::ExpPlusLinear { s: 1.0, m: 3.0 }).unwrap(),
            ObjectiveSpec::new(ObjectiveKind::LogBarrierQuadratic {
                y: 1.0,
                mu: 1.0,
                lo: 0.0,
            })
            .unwrap(),
        ]
    }

    /// A box of x-values safely inside the spec's domain, for sampling.
    fn sample_box(spec: &ObjectiveSpec) -> (f64, f64) {
        let m = spec.minimizer();
        let lo = if spec.domain().lo.is_finite() {
            0.5 * (spec.domain().lo + m)
        } else {
            m - 4.0
        };
        (lo, m + 4.0)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(quad(2.0, 0.0).eval(2.0).unwrap(), 0.0);
        assert_eq!(quad(2.0, 3.0).eval(4.0).unwrap(), 5.0);
        let quartic = ObjectiveSpec::new(ObjectiveKind::QuarticPlusQuadratic {
            a: 1.0,
            b: 1.0,
            y: 0.0,
        })
        .unwrap();
        // Direct formula oracle: 2^4 + 2^2 = 20.
        assert_eq!(quartic.eval(2.0).unwrap(), 20.0);
    }

    #[test]
    fn deriv_examples() {
        assert_eq!(quad(2.0, 0.0).deriv(2.0).unwrap(), 0.0);
        assert_eq!(quad(2.0, 0.0).deriv(5.0).unwrap(), 3.0);
        let exp = ObjectiveSpec::new(ObjectiveKind::ExpPlusLinear { s: 1.0, m: 3.0 }).unwrap();
        // e^0 − 3 = −2, cross-checked by the finite-difference property below.
        assert!((exp.deriv(0.0).unwrap() - (-2.0)).abs() <= 1e-12);
    }

    #[test]
    fn minimizer_examples() {
        assert_eq!(quad(7.0, 1.0).minimizer(), 7.0);
        let exp = ObjectiveSpec::new(ObjectiveKind::ExpPlusLinear { s: 1.0, m: 3.0 }).unwrap();
        // Bisection oracle for e^x = 3 froze 1.0986122886681098 (ln 3).
        assert!((exp.minimizer() - 1.098_612_288_668_109_8).abs() <= 1e-12);
        let barrier = ObjectiveSpec::new(ObjectiveKind::LogBarrierQuadratic {
            y: 0.0,
            mu: 1.0,
            lo: 0.0,
        })
        .unwrap();
        // Positive root of x² = 1.
        assert!((barrier.minimizer() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn minimizer_has_zero_derivative() {
        for spec in all_families() {
            let m = spec.minimizer();
            assert!(spec.domain().contains(m));
            assert!(
                spec.deriv(m).unwrap().abs() <= 1e-12,
                "{spec}: f'(x*) = {}",
                spec.deriv(m).unwrap()
            );
        }
    }

    #[test]
    fn boundary_evaluation_is_an_error() {
        let barrier = ObjectiveSpec::new(ObjectiveKind::LogBarrierQuadratic {
            y: 1.0,
            mu: 1.0,
            lo: 0.0,
        })
        .unwrap();
        assert!(matches!(
            barrier.eval(0.0),
            Err(ObjectiveError::DomainViolation { .. })
        ));
        assert!(matches!(
            barrier.deriv(-1.0),
            Err(ObjectiveError::DomainViolation { .. })
        ));
        let boxed = ObjectiveSpec::with_domain(
            ObjectiveKind::Quadratic { y: 0.0, c: 0.0 },
            Interval { lo: -1.0, hi: 1.0 },
        )
        .unwrap();
        assert!(boxed.eval(1.0).is_err());
        assert!(boxed.eval(0.999_999).is_ok());
    }

    #[test]
    fn structural_validation() {
        assert!(ObjectiveSpec::new(ObjectiveKind::ExpPlusLinear { s: 1.0, m: -1.0 }).is_err());
        assert!(ObjectiveSpec::new(ObjectiveKind::QuarticPlusQuadratic {
            a: -1.0,
            b: 1.0,
            y: 0.0
        })
        .is_err());
        assert!(ObjectiveSpec::new(ObjectiveKind::LogBarrierQuadratic {
            y: 0.0,
            mu: 0.0,
            lo: 0.0
        })
        .is_err());
        // Nonzero negative weight is structurally admitted (and breaks
        // convexity, which downstream solvers report).
        assert!(ObjectiveSpec::new(ObjectiveKind::WeightedQuadratic { w: -1.0, y: 0.0 }).is_ok());
        assert!(ObjectiveSpec::new(ObjectiveKind::WeightedQuadratic { w: 0.0, y: 0.0 }).is_err());
        // Domain that excludes the minimizer is rejected.
        assert!(ObjectiveSpec::with_domain(
            ObjectiveKind::Quadratic { y: 5.0, c: 0.0 },
            Interval { lo: -1.0, hi: 1.0 }
        )
        .is_err());
    }

    #[test]
    fn canonical_round_trip_named_cases() {
        let cases = [
            "quadratic:2,0",
            "weighted-quadratic:3,1",
            "quartic-plus-quadratic:1,1,0.5",
            "exp-plus-linear:1,3",
            "log-barrier-quadratic:1,1,0",
            "quadratic:0,0@-1,1",
            "log-barrier-quadratic:1,1,0@0.5,10",
        ];
        for case in cases {
            let spec: ObjectiveSpec = case.parse().unwrap();
            let round: ObjectiveSpec = spec.canonical().parse().unwrap();
            assert_eq!(spec, round, "round trip failed for {case}");
        }
        assert_eq!(
            "quadratic:2,0"
                .parse::<ObjectiveSpec>()
                .unwrap()
                .canonical(),
            "quadratic:2,0"
        );
    }

    #[test]
    fn parse_rejects_malformed_input() {
        for bad in [
            "quadratic",
            "quadratic:1",
            "quadratic:1,2,3",
            "mystery:1,2",
            "quadratic:1,x",
            "quadratic:1,2@3",
            "quadratic:1,2@5,1",
            "exp-plus-linear:nan,1",
        ] {
            assert!(bad.parse::<ObjectiveSpec>().is_err(), "accepted `{bad}`");
        }
    }

    #[test]
    fn deriv_matches_centered_finite_differences() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(2024);
        let h = 1e-6;
        for spec in all_families() {
            let (lo, hi) = sample_box(&spec);
            for _ in 0..100 {
                // Keep x ± h inside the sample box.
                let x = lo + h + (hi - lo - 2.0 * h) * rng.next_f64();
                let fd = (spec.eval(x + h).unwrap() - spec.eval(x - h).unwrap()) / (2.0 * h);
                let d = spec.deriv(x).unwrap();
                assert!(
                    (fd - d).abs() <= 1e-6 * (1.0 + d.abs()),
                    "{spec} at x={x}: fd={fd}, deriv={d}"
                );
            }
        }
    }

    #[test]
    fn deriv_strictly_increasing_and_first_order_convexity() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(99);
        for spec in all_families() {
            let (lo, hi) = sample_box(&spec);
            for _ in 0..200 {
                let mut x = lo + (hi - lo) * rng.next_f64();
                let mut y = lo + (hi - lo) * rng.next_f64();
                if x == y {
                    continue;
                }
                if x > y {
                    std::mem::swap(&mut x, &mut y);
                }
                assert!(
                    spec.deriv(x).unwrap() < spec.deriv(y).unwrap(),
                    "{spec}: derivative not strictly increasing at ({x}, {y})"
                );
                // f(y) ≥ f(x) + f′(x)(y−x), equality only on the diagonal.
                let gap = spec.eval(y).unwrap()
                    - spec.eval(x).unwrap()
                    - spec.deriv(x).unwrap() * (y - x);
                assert!(gap >= -1e-12, "{spec}: convexity gap {gap} at ({x}, {y})");
                if y - x > 1e-3 {
                    assert!(gap > 0.0, "{spec}: zero gap off the diagonal at ({x}, {y})");
                }
            }
            // Exactly on the diagonal the surplus vanishes.
            let m = spec.minimizer();
            let gap = spec.eval(m).unwrap() - spec.eval(m).unwrap();
            assert_eq!(gap, 0.0);
        }
    }
}
