//! The augmented formulation compiled from a reflection sequence.
//!
//! Starting from a canonical ascending point `c`, each comparator `(i, j)`
//! contributes one reflection variable `x_k` with normal `e_i - e_j`, so the
//! original point is recovered as `v = M x + c`. The capacity constraints on
//! `x` take the lower-triangular form
//!
//! ```text
//! A = Tri(M^T M) + I,    b = -M^T c,    A x + s = b,
//! ```
//!
//! where `Tri` zeroes the upper triangle including the diagonal and `s` are
//! slacks. A learner's state lives in
//! `W = { (v, x, s) >= 0 : v = M x + c, A x + s = b }`, which this module
//! compiles into one sparse equality [`Constraint`] per row: the `n` rows of
//! `v - M x = c` first, then the `m` capacity rows.
//!
//! The pipeline is specific to permutations in their rank-vector encoding.
//! Other comparator-generated classes (Huffman trees, with canonical point
//! `[1, 2, ..., n-1, n-1]` and extra depth-fixing linear maps between
//! reflections) would need those maps threaded through both this compiler
//! and the sampler; the current interfaces deliberately do not model them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::sorting_networks::ReflectionSequence;

/// A point `w = (v, x, s)` in the augmented space, laid out flat as
/// `v (n) || x (m) || s (m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedPoint {
    pub v: Vec<f64>,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
}

impl AugmentedPoint {
    /// All `n + 2m` coordinates set to `value`.
    pub fn uniform(n: usize, m: usize, value: f64) -> Self {
        Self {
            v: vec![value; n],
            x: vec![value; m],
            s: vec![value; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.v.len() + self.x.len() + self.s.len()
    }

    /// Coordinate by flat index over the `v || x || s` layout.
    pub fn get(&self, idx: usize) -> f64 {
        let n = self.v.len();
        let m = self.x.len();
        if idx < n {
            self.v[idx]
        } else if idx < n + m {
            self.x[idx - n]
        } else {
            self.s[idx - n - m]
        }
    }

    pub fn set(&mut self, idx: usize, value: f64) {
        let n = self.v.len();
        let m = self.x.len();
        if idx < n {
            self.v[idx] = value;
        } else if idx < n + m {
            self.x[idx - n] = value;
        } else {
            self.s[idx - n - m] = value;
        }
    }

    /// Flat iteration over `v || x || s`.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.v
            .iter()
            .chain(self.x.iter())
            .chain(self.s.iter())
            .copied()
    }

    pub fn sum_v(&self) -> f64 {
        self.v.iter().sum()
    }

    pub fn inf_norm(&self) -> f64 {
        self.flat().fold(0.0, |acc, w| acc.max(w.abs()))
    }

    pub fn min_coordinate(&self) -> f64 {
        self.flat().fold(f64::INFINITY, f64::min)
    }
}

/// One equality facet of `W`: integer coefficients over the flat layout and a
/// nonnegative right-hand side. Coefficients are always `>= -1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    coeffs: Vec<(usize, i64)>,
    rhs: f64,
    label: String,
}

impl Constraint {
    pub fn coeffs(&self) -> &[(usize, i64)] {
        &self.coeffs
    }

    pub fn rhs(&self) -> f64 {
        self.rhs
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Signed violation `a . w - rhs`.
    pub fn residual(&self, w: &AugmentedPoint) -> f64 {
        let mut acc = 0.0;
        for &(idx, a) in &self.coeffs {
            acc += a as f64 * w.get(idx);
        }
        acc - self.rhs
    }
}

/// Largest absolute residual over a constraint set.
pub fn max_abs_residual(w: &AugmentedPoint, csts: &[Constraint]) -> f64 {
    csts.iter().fold(0.0, |acc, c| acc.max(c.residual(w).abs()))
}

/// The compiled formulation: reflection columns, canonical point, and the
/// capacity system `(A, b)`. `A` is stored sparse by rows; the Batcher
/// network makes dense `m x m` storage untenable for large `n`.
#[derive(Clone, Debug)]
pub struct ExtendedFormulation {
    n: usize,
    m: usize,
    c: Vec<f64>,
    columns: Vec<(usize, usize)>,
    a_rows: Vec<Vec<(usize, i64)>>,
    b: Vec<f64>,
}

/// Compile a reflection sequence and canonical point into `(M, c, A, b)`.
///
/// The canonical point must be strictly ascending positive integers (the
/// identity permutation `[1, ..., n]` in every shipped configuration), which
/// makes every `b_k = c_j - c_i` positive. Every off-diagonal entry of `A` is
/// checked against the `>= -1` premise the projection machinery relies on;
/// with the fixed top < bottom orientation this cannot fail, but the check
/// names the offending comparator pair if it ever does.
pub fn build(seq: &ReflectionSequence, c: &[f64]) -> Result<ExtendedFormulation> {
    let n = seq.n_wires();
    if c.len() != n {
        return Err(Error::InvalidCanonicalPoint(format!(
            "expected {} entries, got {}",
            n,
            c.len()
        )));
    }
    for (i, &ci) in c.iter().enumerate() {
        if ci <= 0.0 || ci.fract() != 0.0 {
            return Err(Error::InvalidCanonicalPoint(format!(
                "entry {} = {} is not a positive integer",
                i + 1,
                ci
            )));
        }
        if i > 0 && c[i - 1] >= ci {
            return Err(Error::InvalidCanonicalPoint(format!(
                "entries must be strictly ascending, got c[{}] = {} >= c[{}] = {}",
                i,
                c[i - 1],
                i + 1,
                ci
            )));
        }
    }

    let columns: Vec<(usize, usize)> = seq
        .comparators()
        .iter()
        .map(|cmp| (cmp.top(), cmp.bottom()))
        .collect();
    let m = columns.len();

    // M_k^T M_j for the columns e_i - e_j; nonzero only when the comparators
    // share a wire, so rows are gathered from per-wire occurrence lists.
    let mut on_wire: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    let mut a_rows: Vec<Vec<(usize, i64)>> = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    for (k, &(i_k, j_k)) in columns.iter().enumerate() {
        let mut row: Vec<(usize, i64)> = Vec::new();
        let push = |j: usize, delta: i64, row: &mut Vec<(usize, i64)>| match row
            .iter_mut()
            .find(|(idx, _)| *idx == j)
        {
            Some((_, v)) => *v += delta,
            None => row.push((j, delta)),
        };
        for &j in &on_wire[i_k] {
            let (i_j, _) = columns[j];
            // shared wire is i_k: +1 if it is also j's top, -1 if j's bottom
            push(j, if i_j == i_k { 1 } else { -1 }, &mut row);
        }
        for &j in &on_wire[j_k] {
            let (i_j, _) = columns[j];
            push(j, if i_j == j_k { -1 } else { 1 }, &mut row);
        }
        row.retain(|&(_, v)| v != 0);
        for &(j, v) in &row {
            if v < -1 {
                let (col_top, col_bottom) = columns[j];
                return Err(Error::CoefficientBelowMinusOne {
                    row: k + 1,
                    row_top: i_k,
                    row_bottom: j_k,
                    col: j + 1,
                    col_top,
                    col_bottom,
                    value: v,
                });
            }
        }
        row.push((k, 1)); // unit diagonal
        row.sort_by_key(|&(j, _)| j);
        a_rows.push(row);

        let b_k = c[j_k - 1] - c[i_k - 1];
        debug_assert!(b_k >= 0.0);
        b.push(b_k);

        on_wire[i_k].push(k);
        on_wire[j_k].push(k);
    }

    Ok(ExtendedFormulation {
        n,
        m,
        c: c.to_vec(),
        columns,
        a_rows,
        b,
    })
}

/// Convenience: build with the identity canonical point `[1, ..., n]`.
pub fn build_identity(seq: &ReflectionSequence) -> Result<ExtendedFormulation> {
    let c: Vec<f64> = (1..=seq.n_wires()).map(|i| i as f64).collect();
    build(seq, &c)
}

impl ExtendedFormulation {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn canonical(&self) -> &[f64] {
        &self.c
    }

    /// Reflection columns `(i_k, j_k)`, 1-based, in reflection order.
    pub fn columns(&self) -> &[(usize, usize)] {
        &self.columns
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Sparse row `k` of `A`, sorted by column, diagonal included.
    pub fn a_row(&self, k: usize) -> &[(usize, i64)] {
        &self.a_rows[k]
    }

    /// Entry `A[k][j]` (0-based).
    pub fn a_entry(&self, k: usize, j: usize) -> i64 {
        self.a_rows[k]
            .iter()
            .find(|&&(col, _)| col == j)
            .map_or(0, |&(_, v)| v)
    }

    /// Upper bound `U` on the infinity norm of every corner of `W`; equals
    /// `n` for the permutation instantiation.
    pub fn infinity_bound(&self) -> f64 {
        self.n as f64
    }

    /// The `n + m` equality facets of `W`, `v`-rows first.
    pub fn constraints(&self) -> Vec<Constraint> {
        let n = self.n;
        let m = self.m;
        let mut out = Vec::with_capacity(n + m);
        // v_i - (M x)_i = c_i : +1 on v_i, -M_{i,k} on each x_k touching wire i
        let mut per_wire: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
        for (k, &(i_k, j_k)) in self.columns.iter().enumerate() {
            per_wire[i_k - 1].push((n + k, -1)); // -(+1)
            per_wire[j_k - 1].push((n + k, 1)); // -(-1)
        }
        for (i, wire) in per_wire.iter().enumerate() {
            let mut coeffs = vec![(i, 1)];
            coeffs.extend(wire.iter().copied());
            coeffs.sort_by_key(|&(idx, _)| idx);
            out.push(Constraint {
                coeffs,
                rhs: self.c[i],
                label: format!("v[{}]", i + 1),
            });
        }
        // (A x)_k + s_k = b_k
        for k in 0..m {
            let mut coeffs: Vec<(usize, i64)> =
                self.a_rows[k].iter().map(|&(j, v)| (n + j, v)).collect();
            coeffs.push((n + m + k, 1));
            coeffs.sort_by_key(|&(idx, _)| idx);
            out.push(Constraint {
                coeffs,
                rhs: self.b[k],
                label: format!("capacity[{}]", k + 1),
            });
        }
        out
    }

    /// `v = M x + c`; no feasibility check.
    pub fn map_to_original(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.m);
        let mut v = self.c.clone();
        for (k, &(i_k, j_k)) in self.columns.iter().enumerate() {
            v[i_k - 1] += x[k];
            v[j_k - 1] -= x[k];
        }
        v
    }

    /// Simulate the reflection sequence from `c` with all-or-nothing swap
    /// decisions. At step `k` the capacity is `u_j - u_i`; a `true` bit takes
    /// the full capacity (`x_k = cap`, `s_k = 0`, wires swap), a `false` bit
    /// takes none (`x_k = 0`, `s_k = cap`).
    ///
    /// The result satisfies all `n + m` equality constraints exactly (the
    /// values stay small integers, so f64 arithmetic is exact) and `h` is
    /// always a permutation of `c`. Capacities can go negative on decision
    /// paths that no reversed sorting run produces, in which case the
    /// returned point has a negative `x` or `s` entry; use
    /// [`corner_for_object`](Self::corner_for_object) when a nonnegative
    /// point is required.
    pub fn corner_from_decisions(&self, bits: &[bool]) -> (Vec<f64>, AugmentedPoint) {
        assert_eq!(bits.len(), self.m);
        let mut u = self.c.clone();
        let mut x = vec![0.0; self.m];
        let mut s = vec![0.0; self.m];
        for (k, &(i_k, j_k)) in self.columns.iter().enumerate() {
            let cap = u[j_k - 1] - u[i_k - 1];
            if bits[k] {
                x[k] = cap;
                u.swap(i_k - 1, j_k - 1);
            } else {
                s[k] = cap;
            }
        }
        let w = AugmentedPoint { v: u.clone(), x, s };
        (u, w)
    }

    /// [`corner_from_decisions`](Self::corner_from_decisions) with fair-coin
    /// bits; deterministic given the rng state.
    pub fn random_corner<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, AugmentedPoint) {
        let bits: Vec<bool> = (0..self.m).map(|_| rng.gen::<bool>()).collect();
        self.corner_from_decisions(&bits)
    }

    /// The canonical nonnegative corner `w(h)` for an object `h`.
    ///
    /// Runs the sorting network forward on `h` (which ends at `c`), records
    /// the swap decisions, and replays them in reflection order. Along this
    /// replay every capacity equals a nonnegative wire difference of the
    /// forward run, so the corner is feasible: all coordinates lie in
    /// `[0, n]` and `w.v == h`.
    pub fn corner_for_object(&self, h: &[f64]) -> Result<AugmentedPoint> {
        if h.len() != self.n {
            return Err(Error::NotAnObject(format!(
                "expected {} entries, got {}",
                self.n,
                h.len()
            )));
        }
        let mut sorted = h.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted != self.c {
            return Err(Error::NotAnObject(format!(
                "{:?} is not a rearrangement of the canonical point {:?}",
                h, self.c
            )));
        }
        // network order is the reverse of reflection order
        let mut u = h.to_vec();
        let mut swapped = Vec::with_capacity(self.m);
        for &(i_k, j_k) in self.columns.iter().rev() {
            if u[i_k - 1] > u[j_k - 1] {
                u.swap(i_k - 1, j_k - 1);
                swapped.push(true);
            } else {
                swapped.push(false);
            }
        }
        debug_assert_eq!(u, self.c, "verified network failed to sort an object");
        swapped.reverse();
        let (v, w) = self.corner_from_decisions(&swapped);
        debug_assert_eq!(v, h);
        debug_assert!(w.min_coordinate() >= 0.0);
        Ok(w)
    }

    /// Inspection dump: `n`/`m` header, the comparator list in reflection
    /// order, then the nonzero `A` entries and `b` as `A k j val` / `b k val`
    /// lines (1-based).
    pub fn dump(&self) -> String {
        let mut out = format!("n {}\nm {}\n", self.n, self.m);
        for (k, &(i, j)) in self.columns.iter().enumerate() {
            out.push_str(&format!("{} {} {}\n", k + 1, i, j));
        }
        for (k, row) in self.a_rows.iter().enumerate() {
            for &(j, v) in row {
                out.push_str(&format!("A {} {} {}\n", k + 1, j + 1, v));
            }
        }
        for (k, &bk) in self.b.iter().enumerate() {
            out.push_str(&format!("b {} {}\n", k + 1, bk));
        }
        out
    }
}
