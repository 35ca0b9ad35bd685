//! Unnormalized relative entropy and iterative Bregman projection.
//!
//! The divergence is `Delta(a||b) = sum_i a_i ln(a_i/b_i) + b_i - a_i` with
//! `0 ln 0 = 0`. Projecting a point onto a single equality facet
//! `a . w = a_0` has the multiplicative closed form `w*_i = w_i rho^{a_i}`
//! where `rho > 0` solves
//!
//! ```text
//! sum_i a_i w_i rho^{a_i} - a_0 = 0.
//! ```
//!
//! With integer coefficients `a_i >= -1` and `a_0 >= 0` this becomes, after
//! multiplying through by `rho`, a polynomial with positive leading
//! coefficients and a single positive root: degree one and two are solved in
//! closed form, anything higher by safeguarded Newton inside a sign-change
//! bracket. Cycling through all facets converges to the Bregman projection
//! onto their intersection, since every facet is an equality.

use crate::error::{Error, Result};
use crate::formulation::{max_abs_residual, AugmentedPoint, Constraint};

/// Nonnegative divergence value; infinite when the support condition
/// `a_i > 0 => b_i > 0` fails (or a coordinate leaves the domain).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Divergence {
    value: f64,
}

impl Divergence {
    fn infinite() -> Self {
        Self {
            value: f64::INFINITY,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// `Delta(a||b)` over equal-length slices.
pub fn divergence(a: &[f64], b: &[f64]) -> Divergence {
    assert_eq!(a.len(), b.len(), "divergence arguments must share a length");
    divergence_iter(a.iter().copied(), b.iter().copied())
}

/// `Delta(a||b)` over augmented points (flat `v || x || s` layout).
pub fn divergence_points(a: &AugmentedPoint, b: &AugmentedPoint) -> Divergence {
    assert_eq!(a.dim(), b.dim());
    divergence_iter(a.flat(), b.flat())
}

fn divergence_iter(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> Divergence {
    let mut total = 0.0;
    for (ai, bi) in a.zip(b) {
        if ai < 0.0 || bi < 0.0 {
            return Divergence::infinite();
        }
        if ai == 0.0 {
            total += bi;
            continue;
        }
        if bi == 0.0 {
            return Divergence::infinite();
        }
        total += ai * (ai / bi).ln() + bi - ai;
    }
    // rounding can push an exact zero a hair below it
    Divergence {
        value: total.max(0.0),
    }
}

/// Outcome of a cyclic projection run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionReport {
    pub cycles: usize,
    pub max_residual: f64,
    pub converged: bool,
}

const ROOT_TOL: f64 = 1e-12;
const BRACKET_MIN: f64 = 1e-30;
const BRACKET_MAX: f64 = 1e30;

/// The unique nonnegative root of `sum_i a_i w_i rho^{a_i} = rhs`.
///
/// `terms` are `(coefficient, weight)` pairs with integer coefficients
/// `>= -1` and positive weights; zero coefficients are inert and ignored.
/// The root is positive except in the degenerate `rhs = 0` case with no
/// negative coefficients, where the root is exactly zero. Terms that cannot
/// be satisfied (no positive coefficient mass against a positive right-hand
/// side) produce an error rather than a bogus root.
pub fn positive_root(terms: &[(i64, f64)], rhs: f64) -> Result<f64> {
    if rhs < 0.0 {
        return Err(Error::NoPositiveRoot(format!("negative rhs {rhs}")));
    }
    let mut neg_weight = 0.0f64;
    // grouped coefficients of rho^e in the residual sum, e >= 1
    let mut pos: Vec<(i64, f64)> = Vec::new();
    for &(a, w) in terms {
        if a == 0 || w == 0.0 {
            continue;
        }
        if a < -1 {
            return Err(Error::NoPositiveRoot(format!(
                "coefficient {a} < -1 violates the projection premise"
            )));
        }
        if w < 0.0 {
            return Err(Error::NoPositiveRoot(format!("negative weight {w}")));
        }
        if a == -1 {
            neg_weight += w;
        } else {
            match pos.iter_mut().find(|(e, _)| *e == a) {
                Some((_, phi)) => *phi += a as f64 * w,
                None => pos.push((a, a as f64 * w)),
            }
        }
    }
    pos.sort_by_key(|&(e, _)| e);

    if pos.is_empty() {
        if neg_weight == 0.0 && rhs == 0.0 {
            return Ok(1.0); // vacuous constraint, leave the point alone
        }
        return Err(Error::NoPositiveRoot(
            "no positive-coefficient mass to balance the right-hand side".into(),
        ));
    }

    let scale = rhs.abs().max(1.0);
    let residual = |rho: f64| -> f64 {
        let mut g = -rhs;
        for &(e, phi) in &pos {
            g += phi * rho.powi(e as i32);
        }
        if neg_weight > 0.0 {
            g -= neg_weight / rho;
        }
        g
    };

    // satisfied already: rho = 1 keeps the point fixed
    if residual(1.0).abs() <= ROOT_TOL * scale {
        return Ok(1.0);
    }

    // polynomial after multiplying by rho^shift
    let shift: i64 = if neg_weight > 0.0 { 1 } else { 0 };
    let degree = pos.last().map(|&(e, _)| e).unwrap() + shift;

    if degree == 1 {
        // phi_1 rho = rhs
        let phi = pos[0].1;
        return Ok(rhs / phi);
    }
    if degree == 2 {
        // alpha rho^2 + beta rho + gamma = 0 with alpha > 0, gamma <= 0
        let (alpha, beta, gamma) = if shift == 1 {
            (pos[0].1, -rhs, -neg_weight)
        } else {
            let lin = pos.iter().find(|&&(e, _)| e == 1).map_or(0.0, |&(_, p)| p);
            let quad = pos.iter().find(|&&(e, _)| e == 2).map_or(0.0, |&(_, p)| p);
            (quad, lin, -rhs)
        };
        let disc = beta * beta - 4.0 * alpha * gamma;
        debug_assert!(disc >= 0.0);
        let sq = disc.max(0.0).sqrt();
        let rho = if beta > 0.0 {
            -2.0 * gamma / (beta + sq)
        } else {
            (sq - beta) / (2.0 * alpha)
        };
        return Ok(rho);
    }

    // Higher degree: bracket a sign change around rho = 1 by doubling and
    // halving, then Newton from the upper end with bisection whenever a step
    // leaves the bracket. The multiplied polynomial is convex on the positive
    // reals, so Newton from the right converges monotonically.
    let poly = |rho: f64| -> (f64, f64) {
        let mut f = -neg_weight;
        let mut df = 0.0;
        let rsh = rho.powi(shift as i32);
        f -= rhs * rsh;
        if shift == 1 {
            df -= rhs;
        }
        for &(e, phi) in &pos {
            let ee = (e + shift) as i32;
            f += phi * rho.powi(ee);
            df += phi * ee as f64 * rho.powi(ee - 1);
        }
        (f, df)
    };

    let (mut lo, mut hi);
    let f1 = poly(1.0).0;
    if f1 > 0.0 {
        hi = 1.0;
        lo = 0.5;
        while poly(lo).0 > 0.0 {
            lo *= 0.5;
            if lo < BRACKET_MIN {
                return Err(Error::BracketExhausted { lo, hi });
            }
        }
    } else {
        lo = 1.0;
        hi = 2.0;
        while poly(hi).0 < 0.0 {
            hi *= 2.0;
            if hi > BRACKET_MAX {
                return Err(Error::BracketExhausted { lo, hi });
            }
        }
    }

    let mut rho = hi;
    for _ in 0..200 {
        if residual(rho).abs() <= ROOT_TOL * scale {
            return Ok(rho);
        }
        let (f, df) = poly(rho);
        let mut next = rho - f / df;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if poly(next).0 > 0.0 {
            hi = next;
        } else {
            lo = next;
        }
        if hi - lo <= f64::EPSILON * hi {
            let mid = 0.5 * (lo + hi);
            if residual(mid).abs() <= ROOT_TOL.sqrt() * scale {
                return Ok(mid);
            }
            break;
        }
        rho = next;
    }
    Err(Error::BracketExhausted { lo, hi })
}

/// Project onto one equality facet in place; returns the multiplier `rho`.
///
/// Coordinates with zero coefficient or zero weight are untouched, so zeros
/// stay zero and nonnegativity is preserved by construction.
pub fn project_onto_constraint_in_place(w: &mut AugmentedPoint, cst: &Constraint) -> Result<f64> {
    let mut terms: Vec<(i64, f64)> = Vec::with_capacity(cst.coeffs().len());
    let mut pos_mass = false;
    for &(idx, a) in cst.coeffs() {
        if a == 0 {
            continue;
        }
        let wi = w.get(idx);
        if wi > 0.0 {
            terms.push((a, wi));
            if a > 0 {
                pos_mass = true;
            }
        }
    }
    if !pos_mass && cst.rhs() > 0.0 {
        return Err(Error::InfeasibleConstraint {
            index: 0,
            label: cst.label().to_string(),
            rhs: cst.rhs(),
        });
    }
    if terms.is_empty() {
        return Ok(1.0);
    }
    let rho = positive_root(&terms, cst.rhs())?;
    if rho != 1.0 {
        for &(idx, a) in cst.coeffs() {
            if a == 0 {
                continue;
            }
            let wi = w.get(idx);
            if wi > 0.0 {
                w.set(idx, wi * rho.powi(a as i32));
            }
        }
    }
    Ok(rho)
}

/// Pure single-facet projection.
pub fn project_onto_constraint(w: &AugmentedPoint, cst: &Constraint) -> Result<AugmentedPoint> {
    let mut out = w.clone();
    project_onto_constraint_in_place(&mut out, cst)?;
    Ok(out)
}

/// Cyclic Bregman projection onto the intersection of equality facets.
///
/// Cycles through `csts` in order, checking the maximum absolute residual
/// once per full cycle. A point already inside (residual `<= tol`) is
/// returned unchanged with zero cycles. Hitting `max_cycles` returns the
/// best iterate with `converged = false`; the caller decides whether that is
/// fatal.
pub fn project(
    w: &AugmentedPoint,
    csts: &[Constraint],
    tol: f64,
    max_cycles: usize,
) -> Result<(AugmentedPoint, ProjectionReport)> {
    assert!(tol > 0.0, "projection tolerance must be positive");
    let mut cur = w.clone();
    let mut max_res = max_abs_residual(&cur, csts);
    if max_res <= tol {
        return Ok((
            cur,
            ProjectionReport {
                cycles: 0,
                max_residual: max_res,
                converged: true,
            },
        ));
    }
    for cycle in 1..=max_cycles {
        for cst in csts {
            project_onto_constraint_in_place(&mut cur, cst)?;
        }
        max_res = max_abs_residual(&cur, csts);
        if max_res <= tol {
            return Ok((
                cur,
                ProjectionReport {
                    cycles: cycle,
                    max_residual: max_res,
                    converged: true,
                },
            ));
        }
    }
    Ok((
        cur,
        ProjectionReport {
            cycles: max_cycles,
            max_residual: max_res,
            converged: false,
        },
    ))
}
