//! Bracketed scalar root finding.
//!
//! Everything here is pure bisection: deterministic, bracket-safe, and never
//! evaluating outside the initial bracket. The three entry points are the
//! pair-equalizing solve used by the gossip engines, derivative inversion,
//! and the whole-network optimum used as the independent oracle in tests and
//! diagnostics.
//!
//! For the equalizing and global solves the target value provably lies
//! between the summed-derivative values at the bracket ends whenever every
//! derivative is increasing, so those routines clamp the target into the
//! sampled end range before bisecting; the clamp absorbs end-of-bracket
//! rounding only, and endpoint values in decreasing order are still reported
//! as [`BracketInvalid`] (the signature of a non-convex spec).
//!
//! [`BracketInvalid`]: RootfindError::BracketInvalid

use thiserror::Error;

use crate::objective::{ObjectiveError, ObjectiveSpec};

/// Default absolute width tolerance for the inner solves.
pub const DEFAULT_TOL_X: f64 = 1e-12;
/// Default halving budget; 2⁻²⁰⁰ underflows any realistic bracket.
pub const DEFAULT_MAX_ITER: u32 = 200;

/// Error raised by the bracketed solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootfindError {
    /// Residual signs at the bracket ends do not straddle zero. For the
    /// solves in this crate that indicates a non-monotone derivative, i.e. a
    /// broken objective spec.
    #[error("invalid bracket [{lo}, {hi}]: residuals ({r_lo}, {r_hi}) do not straddle zero")]
    BracketInvalid {
        lo: f64,
        hi: f64,
        r_lo: f64,
        r_hi: f64,
    },
    /// Width tolerance unmet after the halving budget.
    #[error("bracket width {width} still above tol {tol_x} after {max_iter} halvings")]
    MaxIterExceeded {
        width: f64,
        tol_x: f64,
        max_iter: u32,
    },
    /// No objectives were supplied.
    #[error("at least one objective spec is required")]
    EmptyInput,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// A bisection bracket with its stopping controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    /// Absolute width tolerance, must be positive.
    pub tol_x: f64,
    pub max_iter: u32,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64, tol_x: f64, max_iter: u32) -> Result<Self, RootfindError> {
        if lo.is_nan() || hi.is_nan() || lo > hi || tol_x.is_nan() || tol_x <= 0.0 || max_iter == 0
        {
            return Err(RootfindError::BracketInvalid {
                lo,
                hi,
                r_lo: f64::NAN,
                r_hi: f64::NAN,
            });
        }
        Ok(Self {
            lo,
            hi,
            tol_x,
            max_iter,
        })
    }

    /// Bracket with the default tolerance and halving budget.
    pub fn with_defaults(lo: f64, hi: f64) -> Result<Self, RootfindError> {
        Self::new(lo, hi, DEFAULT_TOL_X, DEFAULT_MAX_ITER)
    }
}

#[derive(Debug, Clone, Copy)]
struct BisectOutcome {
    root: f64,
    // Inspected by the width-halving tests.
    #[cfg_attr(not(test), allow(dead_code))]
    final_width: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    rounds: u32,
}

/// Core bisection. Requires residual signs at the ends to be opposite or
/// zero. A degenerate bracket returns `lo` without evaluating; an exact zero
/// residual at the midpoint returns immediately.
fn bisect_impl<F: FnMut(f64) -> f64>(
    mut f: F,
    bracket: &Bracket,
) -> Result<BisectOutcome, RootfindError> {
    let Bracket {
        mut lo,
        mut hi,
        tol_x,
        max_iter,
    } = *bracket;
    if lo == hi {
        return Ok(BisectOutcome {
            root: lo,
            final_width: 0.0,
            rounds: 0,
        });
    }
    let mut r_lo = f(lo);
    if r_lo == 0.0 {
        return Ok(BisectOutcome {
            root: lo,
            final_width: hi - lo,
            rounds: 0,
        });
    }
    let r_hi = f(hi);
    if r_hi == 0.0 {
        return Ok(BisectOutcome {
            root: hi,
            final_width: hi - lo,
            rounds: 0,
        });
    }
    if r_lo.is_nan() || r_hi.is_nan() || (r_lo > 0.0) == (r_hi > 0.0) {
        return Err(RootfindError::BracketInvalid { lo, hi, r_lo, r_hi });
    }

    for rounds in 0..max_iter {
        if hi - lo <= tol_x {
            return Ok(BisectOutcome {
                root: 0.5 * (lo + hi),
                final_width: hi - lo,
                rounds,
            });
        }
        let mid = 0.5 * (lo + hi);
        let r_mid = f(mid);
        if r_mid == 0.0 {
            return Ok(BisectOutcome {
                root: mid,
                final_width: hi - lo,
                rounds: rounds + 1,
            });
        }
        if (r_mid > 0.0) == (r_lo > 0.0) {
            lo = mid;
            r_lo = r_mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo <= tol_x {
        return Ok(BisectOutcome {
            root: 0.5 * (lo + hi),
            final_width: hi - lo,
            rounds: max_iter,
        });
    }
    Err(RootfindError::MaxIterExceeded {
        width: hi - lo,
        tol_x,
        max_iter,
    })
}

/// Bisection on an arbitrary residual over `bracket`.
pub fn bisect<F: FnMut(f64) -> f64>(f: F, bracket: &Bracket) -> Result<f64, RootfindError> {
    bisect_impl(f, bracket).map(|o| o.root)
}

/// Bisection for a residual `s(x) − target` where `s` is expected to be
/// increasing: samples `s` at the ends, rejects decreasing end values, and
/// clamps the target into the sampled range (in exact arithmetic the target
/// is always inside it for increasing `s`, so the clamp only absorbs
/// rounding at the ends).
pub(crate) fn bisect_increasing_on<S: FnMut(f64) -> f64>(
    mut s: S,
    target: f64,
    lo: f64,
    hi: f64,
    tol_x: f64,
    max_iter: u32,
) -> Result<f64, RootfindError> {
    if lo == hi {
        return Ok(lo);
    }
    let s_lo = s(lo);
    let s_hi = s(hi);
    if s_lo.is_nan() || s_hi.is_nan() || s_lo > s_hi {
        return Err(RootfindError::BracketInvalid {
            lo,
            hi,
            r_lo: s_lo - target,
            r_hi: s_hi - target,
        });
    }
    let t = target.clamp(s_lo, s_hi);
    let bracket = Bracket::new(lo, hi, tol_x, max_iter)?;
    bisect(|x| s(x) - t, &bracket)
}

/// Solves `f_i′(z) + f_j′(z) = f_i′(xi) + f_j′(xj)` for the unique `z`,
/// which lies in `[min(xi, xj), max(xi, xj)]`. Equal inputs return
/// immediately. Symmetric in its argument pairs bit-for-bit.
///
/// ```
/// use gossip_opt::objective::ObjectiveSpec;
/// use gossip_opt::rootfind::solve_equalized;
///
/// // Equal-weight quadratics equalize at the pair average.
/// let fi: ObjectiveSpec = "quadratic:1,0".parse().unwrap();
/// let fj: ObjectiveSpec = "quadratic:3,0".parse().unwrap();
/// let z = solve_equalized(&fi, &fj, 1.0, 3.0, 1e-12).unwrap();
/// assert!((z - 2.0).abs() <= 1e-12);
/// ```
pub fn solve_equalized(
    fi: &ObjectiveSpec,
    fj: &ObjectiveSpec,
    xi: f64,
    xj: f64,
    tol_x: f64,
) -> Result<f64, RootfindError> {
    // Both points must sit in both domains: the solve evaluates both
    // derivatives across the whole bracket.
    for spec in [fi, fj] {
        spec.deriv(xi)?;
        spec.deriv(xj)?;
    }
    if xi == xj {
        return Ok(xi);
    }
    let target = fi.deriv_raw(xi) + fj.deriv_raw(xj);
    let (lo, hi) = if xi < xj { (xi, xj) } else { (xj, xi) };
    bisect_increasing_on(
        |z| fi.deriv_raw(z) + fj.deriv_raw(z),
        target,
        lo,
        hi,
        tol_x,
        DEFAULT_MAX_ITER,
    )
}

/// Solves `f′(x) = target` over the given bracket. The bracket ends must
/// straddle the target; a degenerate bracket returns `lo` without
/// evaluating.
pub fn invert_derivative(
    f: &ObjectiveSpec,
    target: f64,
    bracket: &Bracket,
) -> Result<f64, RootfindError> {
    if bracket.lo == bracket.hi {
        return Ok(bracket.lo);
    }
    f.deriv(bracket.lo)?;
    f.deriv(bracket.hi)?;
    bisect(|x| f.deriv_raw(x) - target, bracket)
}

/// Solves `Σ f_i′(x) = 0` on the bracket spanned by the individual
/// minimizers. This is the independent oracle for the consensus optimum.
pub fn solve_global_optimum(specs: &[ObjectiveSpec], tol_x: f64) -> Result<f64, RootfindError> {
    if specs.is_empty() {
        return Err(RootfindError::EmptyInput);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for spec in specs {
        let m = spec.minimizer();
        lo = lo.min(m);
        hi = hi.max(m);
    }
    // Pairwise-compatible domains: every spec must contain the whole
    // minimizer envelope.
    for spec in specs {
        spec.deriv(lo)?;
        spec.deriv(hi)?;
    }
    bisect_increasing_on(
        |x| specs.iter().map(|s| s.deriv_raw(x)).sum::<f64>(),
        0.0,
        lo,
        hi,
        tol_x,
        DEFAULT_MAX_ITER,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::ObjectiveKind;

    fn quad(y: f64) -> ObjectiveSpec {
        ObjectiveSpec::new(ObjectiveKind::Quadratic { y, c: 0.0 }).unwrap()
    }

    fn wquad(w: f64, y: f64) -> ObjectiveSpec {
        ObjectiveSpec::new(ObjectiveKind::WeightedQuadratic { w, y }).unwrap()
    }

    fn exp1() -> ObjectiveSpec {
        ObjectiveSpec::new(ObjectiveKind::ExpPlusLinear { s: 1.0, m: 1.0 }).unwrap()
    }

    #[test]
    fn equalize_quadratics_is_averaging() {
        let z = solve_equalized(&quad(1.0), &quad(3.0), 1.0, 3.0, 1e-12).unwrap();
        assert!((z - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn equalize_degenerate_inputs() {
        let z = solve_equalized(&exp1(), &quad(2.0), 0.7, 0.7, 1e-12).unwrap();
        assert_eq!(z, 0.7);
    }

    #[test]
    fn equalize_exp_quadratic_against_frozen_oracle() {
        // Oracle: bisection on e^z + z = 3 to 1e-12 froze z = 0.792059968430677.
        let z = solve_equalized(&exp1(), &quad(2.0), 0.0, 2.0, 1e-12).unwrap();
        assert!((z - 0.792_059_968_430_677).abs() <= 1e-11, "z = {z}");
    }

    #[test]
    fn equalize_is_bitwise_symmetric() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(5);
        let fi = exp1();
        let fj = quad(2.0);
        for _ in 0..200 {
            let xi = -1.0 + 4.0 * rng.next_f64();
            let xj = -1.0 + 4.0 * rng.next_f64();
            let a = solve_equalized(&fi, &fj, xi, xj, 1e-12).unwrap();
            let b = solve_equalized(&fj, &fi, xj, xi, 1e-12).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn equalize_root_stays_in_bracket() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(11);
        let specs = [quad(0.0), exp1(), wquad(2.5, 1.0)];
        for _ in 0..300 {
            let fi = &specs[rng.next_index(specs.len())];
            let fj = &specs[rng.next_index(specs.len())];
            let xi = -2.0 + 5.0 * rng.next_f64();
            let xj = -2.0 + 5.0 * rng.next_f64();
            let z = solve_equalized(fi, fj, xi, xj, 1e-12).unwrap();
            assert!(z >= xi.min(xj) && z <= xi.max(xj));
        }
    }

    #[test]
    fn equalize_rejects_decreasing_derivative_sum() {
        // w = 1 and w = -2 sum to a strictly decreasing derivative.
        let err = solve_equalized(&wquad(1.0, 0.0), &wquad(-2.0, 4.0), 0.0, 4.0, 1e-12);
        assert!(matches!(err, Err(RootfindError::BracketInvalid { .. })));
    }

    #[test]
    fn invert_derivative_examples() {
        let b = Bracket::with_defaults(0.0, 4.0).unwrap();
        let x = invert_derivative(&quad(0.0), 2.0, &b).unwrap();
        assert!((x - 2.0).abs() <= 1e-12);

        let b = Bracket::with_defaults(0.0, 8.0).unwrap();
        let x = invert_derivative(&quad(4.0), 0.0, &b).unwrap();
        assert!((x - 4.0).abs() <= 1e-12);

        // Oracle: e^x − 1 = 2 has root ln 3 = 1.0986122886681098.
        let b = Bracket::with_defaults(0.0, 2.0).unwrap();
        let x = invert_derivative(&exp1(), 2.0, &b).unwrap();
        assert!((x - 1.098_612_288_668_109_8).abs() <= 1e-11);
    }

    #[test]
    fn invert_derivative_rejects_target_outside_range() {
        let b = Bracket::with_defaults(0.0, 1.0).unwrap();
        assert!(matches!(
            invert_derivative(&quad(0.0), 5.0, &b),
            Err(RootfindError::BracketInvalid { .. })
        ));
    }

    #[test]
    fn invert_derivative_degenerate_bracket_skips_evaluation() {
        // lo == hi returns lo even outside the domain: nothing is evaluated.
        let barrier = ObjectiveSpec::new(ObjectiveKind::LogBarrierQuadratic {
            y: 0.0,
            mu: 1.0,
            lo: 0.0,
        })
        .unwrap();
        let b = Bracket::with_defaults(-5.0, -5.0).unwrap();
        assert_eq!(invert_derivative(&barrier, 0.0, &b).unwrap(), -5.0);
    }

    #[test]
    fn global_optimum_examples() {
        let specs = [quad(1.0), quad(2.0), quad(3.0)];
        let x = solve_global_optimum(&specs, 1e-12).unwrap();
        assert!((x - 2.0).abs() <= 1e-12);

        let single = [exp1()];
        assert_eq!(
            solve_global_optimum(&single, 1e-12).unwrap(),
            exp1().minimizer()
        );

        // Weighted mean oracle: (1·0 + 3·4) / (1 + 3) = 3.
        let weighted = [wquad(1.0, 0.0), wquad(3.0, 4.0)];
        let x = solve_global_optimum(&weighted, 1e-12).unwrap();
        assert!((x - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn global_optimum_requires_specs() {
        assert!(matches!(
            solve_global_optimum(&[], 1e-12),
            Err(RootfindError::EmptyInput)
        ));
    }

    #[test]
    fn bracket_width_halves_each_round() {
        // Dyadic bracket [0, 1] keeps every width exactly representable.
        let residual = |x: f64| x - 0.3;
        for rounds in 1..20u32 {
            let bracket = Bracket::new(0.0, 1.0, (0.5f64).powi(rounds as i32), 64).unwrap();
            let out = bisect_impl(residual, &bracket).unwrap();
            // Stops as soon as the width reaches tol: width = 2^-rounds exactly.
            assert_eq!(out.final_width, (0.5f64).powi(rounds as i32));
            assert_eq!(out.rounds, rounds);
        }
    }

    #[test]
    fn bisect_tie_break_returns_exact_midpoint_root() {
        let bracket = Bracket::with_defaults(0.0, 4.0).unwrap();
        let root = bisect(|x| x - 2.0, &bracket).unwrap();
        assert_eq!(root, 2.0);
    }

    #[test]
    fn bisect_max_iter_exceeded() {
        let bracket = Bracket::new(0.0, 1.0, 1e-12, 3).unwrap();
        assert!(matches!(
            bisect(|x| x - 0.3, &bracket),
            Err(RootfindError::MaxIterExceeded { .. })
        ));
    }

    #[test]
    fn bisect_rejects_same_sign_bracket() {
        let bracket = Bracket::with_defaults(1.0, 2.0).unwrap();
        assert!(matches!(
            bisect(|x| x * x, &bracket),
            Err(RootfindError::BracketInvalid { .. })
        ));
    }
}
