//! Comparator networks and their reflection order.
//!
//! A sorting network is a data-independent sequence of comparators; each
//! comparator places the smaller value on its top wire and the larger on its
//! bottom wire. Run in reverse order from the sorted point, the comparators
//! double as partial swaps that can generate every permutation, which is the
//! order the `formulation` module consumes them in.
//!
//! Two constructions are provided: bubble (n(n-1)/2 comparators, didactic)
//! and Batcher odd-even mergesort (O(n log^2 n), the default). Correctness is
//! checked with the 0-1 principle: a network sorts all inputs iff it sorts
//! all binary inputs.

use crate::error::{Error, Result};

/// A single compare-exchange between two wires, 1-based, `top < bottom`.
///
/// The orientation is fixed: the minimum lands on `top`, the maximum on
/// `bottom`, so swap values always propagate to lower wires.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Comparator {
    top: usize,
    bottom: usize,
}

impl Comparator {
    pub fn new(top: usize, bottom: usize, n_wires: usize) -> Result<Self> {
        if top == 0 || top >= bottom || bottom > n_wires {
            return Err(Error::InvalidComparator {
                top,
                bottom,
                n_wires,
            });
        }
        Ok(Self { top, bottom })
    }

    /// Construction-time path for builders that already guarantee the wire
    /// invariant. Not exposed outside the crate.
    pub(crate) fn raw(top: usize, bottom: usize) -> Self {
        Self { top, bottom }
    }

    pub fn top(&self) -> usize {
        self.top
    }

    pub fn bottom(&self) -> usize {
        self.bottom
    }
}

/// A comparator network over `n_wires` wires, in execution order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortingNetwork {
    n_wires: usize,
    comparators: Vec<Comparator>,
    verified: bool,
}

/// The same comparators in reverse order, ready to act as reflection
/// relations. Only obtainable from a verified [`SortingNetwork`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReflectionSequence {
    n_wires: usize,
    comparators: Vec<Comparator>,
}

/// Largest wire count for which the exhaustive 0-1 check is attempted.
pub const ZERO_ONE_EXHAUSTIVE_LIMIT: usize = 20;

/// Bubble-sort network: passes of adjacent comparators, n(n-1)/2 in total.
pub fn build_bubble(n: usize) -> SortingNetwork {
    assert!(n >= 1, "wire count must be at least 1");
    let mut comparators = Vec::with_capacity(n * (n - 1) / 2);
    for pass in (1..n).rev() {
        for i in 1..=pass {
            comparators.push(Comparator::raw(i, i + 1));
        }
    }
    SortingNetwork {
        n_wires: n,
        comparators,
        verified: true,
    }
}

/// Batcher odd-even mergesort network.
///
/// Non-powers-of-two are handled by enumerating the network for the next
/// power of two and dropping every comparator that touches a virtual wire
/// beyond `n` (a comparison against a wire pinned at +inf is a no-op).
pub fn build_odd_even_merge(n: usize) -> SortingNetwork {
    assert!(n >= 1, "wire count must be at least 1");
    let mut comparators = Vec::new();
    let mut p = 1;
    while p < n {
        let mut k = p;
        while k >= 1 {
            let mut j = k % p;
            while j + k < n {
                for i in 0..k {
                    let a = i + j;
                    let b = i + j + k;
                    if b < n && a / (2 * p) == b / (2 * p) {
                        comparators.push(Comparator::raw(a + 1, b + 1));
                    }
                }
                j += 2 * k;
            }
            k /= 2;
        }
        p *= 2;
    }
    SortingNetwork {
        n_wires: n,
        comparators,
        verified: true,
    }
}

impl SortingNetwork {
    /// Assemble a network from explicit comparators. The result is unverified
    /// until [`verify_zero_one`](Self::verify_zero_one) confirms it sorts.
    pub fn new(n_wires: usize, comparators: Vec<Comparator>) -> Result<Self> {
        for c in &comparators {
            if c.top == 0 || c.top >= c.bottom || c.bottom > n_wires {
                return Err(Error::InvalidComparator {
                    top: c.top,
                    bottom: c.bottom,
                    n_wires,
                });
            }
        }
        Ok(Self {
            n_wires,
            comparators,
            verified: false,
        })
    }

    pub fn n_wires(&self) -> usize {
        self.n_wires
    }

    pub fn comparators(&self) -> &[Comparator] {
        &self.comparators
    }

    pub fn len(&self) -> usize {
        self.comparators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparators.is_empty()
    }

    /// Run the network over a mutable slice (min to top, max to bottom).
    pub fn apply<T: PartialOrd>(&self, values: &mut [T]) {
        assert_eq!(values.len(), self.n_wires);
        for c in &self.comparators {
            if values[c.top - 1] > values[c.bottom - 1] {
                values.swap(c.top - 1, c.bottom - 1);
            }
        }
    }

    /// Exhaustive 0-1 principle check: true iff every binary input comes out
    /// ascending. Refuses wire counts above [`ZERO_ONE_EXHAUSTIVE_LIMIT`]
    /// rather than silently subsampling.
    pub fn verify_zero_one(&self) -> Result<bool> {
        if self.n_wires > ZERO_ONE_EXHAUSTIVE_LIMIT {
            return Err(Error::WireCountTooLarge {
                n_wires: self.n_wires,
            });
        }
        Ok(self.zero_one_witness().is_none())
    }

    /// First unsorted binary input, if any. Wire i holds bit i-1.
    fn zero_one_witness(&self) -> Option<u64> {
        let n = self.n_wires;
        let mut buf = vec![0u8; n];
        for input in 0..(1u64 << n) {
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = ((input >> i) & 1) as u8;
            }
            for c in &self.comparators {
                if buf[c.top - 1] > buf[c.bottom - 1] {
                    buf.swap(c.top - 1, c.bottom - 1);
                }
            }
            if buf.windows(2).any(|w| w[0] > w[1]) {
                return Some(input);
            }
        }
        None
    }

    /// Reverse the comparator order, yielding the reflection relations.
    ///
    /// Networks from the builders are correct by construction; a hand-built
    /// network must pass the exhaustive 0-1 check first (so its wire count
    /// must be within the exhaustive budget).
    pub fn to_reflection_order(&self) -> Result<ReflectionSequence> {
        if !self.verified {
            if self.n_wires > ZERO_ONE_EXHAUSTIVE_LIMIT {
                return Err(Error::UnverifiedNetwork {
                    n_wires: self.n_wires,
                });
            }
            if let Some(witness) = self.zero_one_witness() {
                return Err(Error::NotASortingNetwork {
                    n_wires: self.n_wires,
                    witness,
                });
            }
        }
        let mut comparators = self.comparators.clone();
        comparators.reverse();
        Ok(ReflectionSequence {
            n_wires: self.n_wires,
            comparators,
        })
    }

    /// Text dump: first line `n m`, then one `k i j` line per comparator in
    /// network order (all 1-based).
    pub fn dump(&self) -> String {
        let mut out = format!("{} {}\n", self.n_wires, self.comparators.len());
        for (k, c) in self.comparators.iter().enumerate() {
            out.push_str(&format!("{} {} {}\n", k + 1, c.top, c.bottom));
        }
        out
    }
}

/// Unchecked assembly used by in-crate tests to reach orientations the
/// public constructors refuse.
#[cfg(test)]
pub(crate) fn reflection_sequence_for_tests(
    n_wires: usize,
    comparators: Vec<Comparator>,
) -> ReflectionSequence {
    ReflectionSequence {
        n_wires,
        comparators,
    }
}

impl ReflectionSequence {
    pub fn n_wires(&self) -> usize {
        self.n_wires
    }

    pub fn comparators(&self) -> &[Comparator] {
        &self.comparators
    }

    pub fn len(&self) -> usize {
        self.comparators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparators.is_empty()
    }
}
