//! Comparison algorithms: the best-in-hindsight oracle, an exhaustive
//! brute-force twin for it, explicit Hedge over all n! permutations, and
//! Follow the Perturbed Leader.
//!
//! For losses linear in the first-order representation, the loss minimizer
//! against cumulative losses `L` is the rearrangement-inequality assignment:
//! value 1 to the coordinate with the largest `L_i`, value n to the smallest
//! (oppositely ordered products minimize the sum). Ties break toward the
//! lower coordinate index so runs are reproducible.

use rand::Rng;

use crate::dot;
use crate::error::{Error, Result};
use crate::learner::{eta_for, LossVector};

/// Per-coordinate loss sums `L_i = sum_t l_i^t` plus the trial count.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeLoss {
    sums: Vec<f64>,
    trials: usize,
}

impl CumulativeLoss {
    pub fn new(n: usize) -> Self {
        Self {
            sums: vec![0.0; n],
            trials: 0,
        }
    }

    pub fn from_sums(sums: Vec<f64>, trials: usize) -> Self {
        Self { sums, trials }
    }

    pub fn add(&mut self, loss: &LossVector) {
        assert_eq!(loss.len(), self.sums.len());
        for (acc, l) in self.sums.iter_mut().zip(loss.entries()) {
            *acc += l;
        }
        self.trials += 1;
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn n(&self) -> usize {
        self.sums.len()
    }

    pub fn trials(&self) -> usize {
        self.trials
    }
}

/// Rank assignment minimizing `h . sums`: largest sum gets value 1, ties to
/// the lower index. Returns the object and its loss.
fn rank_assignment(sums: &[f64]) -> (Vec<f64>, f64) {
    let n = sums.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sums[b]
            .partial_cmp(&sums[a])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    let mut h = vec![0.0; n];
    for (rank, &idx) in order.iter().enumerate() {
        h[idx] = (rank + 1) as f64;
    }
    let l = dot(&h, sums);
    (h, l)
}

/// Best fixed object in hindsight and its cumulative loss `L*`.
pub fn best_in_hindsight(l: &CumulativeLoss) -> (Vec<f64>, f64) {
    rank_assignment(l.sums())
}

/// All permutations of `(1, ..., n)` in lexicographic order.
pub fn all_objects(n: usize) -> Vec<Vec<f64>> {
    assert!(n <= 8, "refusing to enumerate {n}! objects");
    let mut p: Vec<usize> = (1..=n).collect();
    let mut out = Vec::new();
    loop {
        out.push(p.iter().map(|&v| v as f64).collect());
        if !next_permutation(&mut p) {
            break;
        }
    }
    out
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Exhaustive minimum over all n! value assignments; the test oracle for
/// [`best_in_hindsight`]. Ties resolve to the lexicographically smallest
/// object, which coincides with the rank-assignment tie-break.
pub fn brute_force_best(l: &CumulativeLoss) -> Result<(Vec<f64>, f64)> {
    let n = l.n();
    if n > 8 {
        return Err(Error::SizeLimit {
            what: "brute-force hindsight oracle",
            limit: 8,
            got: n,
        });
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for h in all_objects(n) {
        let v = dot(&h, l.sums());
        match &best {
            Some((_, cur)) if v >= *cur => {}
            _ => best = Some((h, v)),
        }
    }
    Ok(best.expect("n >= 1"))
}

/// Hedge with one explicit weight per permutation; only viable for n <= 7.
///
/// Per-trial object losses `h . l` live in `[0, n(n+1)/2]`, so they are
/// divided by that range to fit the standard unit-loss Hedge analysis. The
/// learning rate is usually tuned with divergence bound `ln(n!)`.
#[derive(Clone, Debug)]
pub struct ExplicitHedge {
    objects: Vec<Vec<f64>>,
    weights: Vec<f64>,
    eta: f64,
    loss_scale: f64,
}

impl ExplicitHedge {
    pub fn new(n: usize, eta: f64) -> Result<Self> {
        if n > 7 {
            return Err(Error::SizeLimit {
                what: "explicit Hedge",
                limit: 7,
                got: n,
            });
        }
        let objects = all_objects(n);
        let uniform = 1.0 / objects.len() as f64;
        Ok(Self {
            weights: vec![uniform; objects.len()],
            objects,
            eta,
            loss_scale: (n * (n + 1) / 2) as f64,
        })
    }

    /// The tuning constant `ln(n!)`.
    pub fn divergence_bound(n: usize) -> f64 {
        (1..=n).map(|k| (k as f64).ln()).sum()
    }

    /// Learning rate from the scaled loss guess (scaled into per-trial
    /// `[0, 1]` units like the update itself).
    pub fn tuned_eta(n: usize, scaled_loss_guess: f64) -> f64 {
        eta_for(Self::divergence_bound(n), scaled_loss_guess)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn objects(&self) -> &[Vec<f64>] {
        &self.objects
    }

    /// Draw an object proportionally to its weight.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        for (w, h) in self.weights.iter().zip(&self.objects) {
            acc += w;
            if r < acc {
                return h.clone();
            }
        }
        self.objects.last().expect("nonempty").clone()
    }

    /// Exact expected loss under the current weights.
    pub fn expected_loss(&self, loss: &LossVector) -> f64 {
        self.weights
            .iter()
            .zip(&self.objects)
            .map(|(w, h)| w * dot(h, loss.entries()))
            .sum()
    }

    /// Multiply every weight by its exponentiated scaled loss, renormalize.
    pub fn update(&mut self, loss: &LossVector) {
        for (w, h) in self.weights.iter_mut().zip(&self.objects) {
            *w *= (-self.eta * dot(h, loss.entries()) / self.loss_scale).exp();
        }
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
    }

    /// One trial: sample from the current weights, then update on the loss.
    pub fn step<R: Rng>(&mut self, loss: &LossVector, rng: &mut R) -> Vec<f64> {
        let h = self.sample(rng);
        self.update(loss);
        h
    }
}

/// Follow the Perturbed Leader: add i.i.d. uniform `[0, pert_scale]` noise
/// to the cumulative losses and play the leader under the perturbed totals
/// (the rearrangement rule is the linear-optimization oracle here).
pub fn fpl_predict<R: Rng>(l: &CumulativeLoss, pert_scale: f64, rng: &mut R) -> Vec<f64> {
    assert!(pert_scale > 0.0, "perturbation scale must be positive");
    let perturbed: Vec<f64> = l
        .sums()
        .iter()
        .map(|&s| s + rng.gen_range(0.0..=pert_scale))
        .collect();
    rank_assignment(&perturbed).0
}
