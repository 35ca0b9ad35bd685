//! The online learner over the augmented formulation.
//!
//! Each trial runs three steps: predict a random object whose expectation is
//! the current usage vector `v`, multiply the `v` components by their
//! exponentiated losses `v_i <- v_i e^(-eta l_i)`, and project the result
//! back into `W` under the unnormalized relative entropy.
//!
//! Initialization is implicit: project `U * 1` into `W`, where `U` bounds the
//! infinity norm of every corner. That start point satisfies
//! `Delta(w(h) || w0) <= (n + 2m) U` for every object `h`, which is the
//! divergence bound the regret guarantee
//!
//! ```text
//! regret <= sqrt(2 L* (n + 2m) U) + (n + 2m) U
//! ```
//!
//! is built from. Prediction walks the comparators once, swapping the wires
//! of comparator `k` with probability `x_k / (x_k + s_k)` — m Bernoulli
//! draws, no convex decomposition.

use rand::Rng;

use crate::bregman::{project, ProjectionReport};
use crate::dot;
use crate::error::{Error, Result};
use crate::formulation::{AugmentedPoint, Constraint, ExtendedFormulation};

/// Hard cap on cycles for any single projection.
pub const MAX_PROJECTION_CYCLES: usize = 100_000;

/// A loss vector with entries validated into `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossVector {
    entries: Vec<f64>,
}

impl LossVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        for (i, &l) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&l) || l.is_nan() {
                return Err(Error::InvalidLoss(format!(
                    "entry {} = {} outside [0, 1]",
                    i + 1,
                    l
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: vec![0.0; n],
        }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Multiplicative update: `v_i <- v_i e^(-eta l_i)`, `x` and `s` unchanged.
pub fn mult_update(w: &AugmentedPoint, loss: &LossVector, eta: f64) -> AugmentedPoint {
    assert_eq!(w.v.len(), loss.len());
    let mut out = w.clone();
    for (vi, li) in out.v.iter_mut().zip(loss.entries()) {
        *vi *= (-eta * li).exp();
    }
    out
}

/// Draw an object with expectation `w.v` in O(m) Bernoulli trials.
///
/// Starts from the canonical point and walks the comparators in reflection
/// order, swapping the two wires of comparator `k` with probability
/// `x_k / (x_k + s_k)`; comparators with `x_k = 0` are skipped outright.
pub fn sample_object<R: Rng>(
    ext: &ExtendedFormulation,
    w: &AugmentedPoint,
    rng: &mut R,
) -> Vec<f64> {
    let mut h = ext.canonical().to_vec();
    for (k, &(i, j)) in ext.columns().iter().enumerate() {
        let xk = w.x[k];
        if xk <= 0.0 {
            continue;
        }
        let p = xk / (xk + w.s[k]);
        if rng.gen::<f64>() < p {
            h.swap(i - 1, j - 1);
        }
    }
    h
}

/// Learning-rate tuning for a divergence bound `D` and a guess `L~` at the
/// comparator's total loss: `eta = ln(1 + sqrt(2 D / max(L~, D)))`. Clamping
/// the guess from below keeps `eta` finite when the guess is tiny.
pub fn eta_for(div_bound: f64, loss_guess: f64) -> f64 {
    assert!(div_bound > 0.0, "divergence bound must be positive");
    assert!(loss_guess >= 0.0);
    (1.0 + (2.0 * div_bound / loss_guess.max(div_bound)).sqrt()).ln()
}

/// Projection tolerance at which a horizon of `t` trials costs at most one
/// unit of extra cumulative loss:
/// `eps = 1 / (sqrt(2) n (1 + sqrt(m) (2n + sqrt(n) + 1)) t)`.
pub fn default_tolerance(n: usize, m: usize, t: usize) -> f64 {
    assert!(n >= 1 && t >= 1);
    let nf = n as f64;
    let mf = m as f64;
    1.0 / ((2.0f64.sqrt() * nf) * (1.0 + mf.sqrt() * (2.0 * nf + nf.sqrt() + 1.0)) * t as f64)
}

/// Flat tolerance used when no horizon is known.
pub const FLAT_TOLERANCE: f64 = 1e-9;

/// The regret guarantee `sqrt(2 L* (n + 2m) U) + (n + 2m) U`.
pub fn regret_bound(n: usize, m: usize, u: f64, l_star: f64) -> f64 {
    let d = (n + 2 * m) as f64 * u;
    (2.0 * l_star * d).sqrt() + d
}

/// Diagnostics from one trial.
#[derive(Clone, Debug)]
pub struct StepReport {
    /// The object predicted before the loss was applied.
    pub object: Vec<f64>,
    /// `h . l` for the sampled object.
    pub sampled_loss: f64,
    /// `v . l` under the pre-update usage vector.
    pub expected_loss: f64,
    pub projection: ProjectionReport,
}

/// Sequential learner state; one owner, fresh instances for restarts.
#[derive(Clone, Debug)]
pub struct Learner {
    ext: ExtendedFormulation,
    constraints: Vec<Constraint>,
    w: AugmentedPoint,
    eta: f64,
    tol: f64,
    trial: usize,
}

impl Learner {
    /// Implicit initialization: project `u * 1` over all `n + 2m` coordinates
    /// into `W`. Requires `u >= infinity_bound(ext)`; a non-convergent
    /// initialization projection is fatal.
    pub fn init(ext: ExtendedFormulation, u: f64, eta: f64, tol: f64) -> Result<Self> {
        if u < ext.infinity_bound() {
            return Err(Error::InvalidConfig(format!(
                "initialization center {} is below the corner bound {}",
                u,
                ext.infinity_bound()
            )));
        }
        if eta < 0.0 || eta.is_nan() {
            return Err(Error::InvalidConfig(format!("eta {eta} must be >= 0")));
        }
        if tol <= 0.0 || tol.is_nan() {
            return Err(Error::InvalidConfig(format!("tol {tol} must be > 0")));
        }
        let constraints = ext.constraints();
        let start = AugmentedPoint::uniform(ext.n(), ext.m(), u);
        let (w, report) = project(&start, &constraints, tol, MAX_PROJECTION_CYCLES)?;
        if !report.converged {
            return Err(Error::ProjectionDidNotConverge {
                cycles: report.cycles,
                max_residual: report.max_residual,
                tol,
                context: " during initialization".into(),
            });
        }
        Ok(Self {
            ext,
            constraints,
            w,
            eta,
            tol,
            trial: 0,
        })
    }

    pub fn ext(&self) -> &ExtendedFormulation {
        &self.ext
    }

    pub fn w(&self) -> &AugmentedPoint {
        &self.w
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn trial(&self) -> usize {
        self.trial
    }

    /// Predict from the current state.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        sample_object(&self.ext, &self.w, rng)
    }

    /// Absorb a revealed loss: record the expected loss under the pre-update
    /// state, apply the multiplicative update, and project back into `W`.
    /// A projection that exhausts its cycle budget is fatal here.
    pub fn observe(&mut self, loss: &LossVector) -> Result<(f64, ProjectionReport)> {
        assert_eq!(loss.len(), self.ext.n());
        let expected_loss = dot(&self.w.v, loss.entries());
        let updated = mult_update(&self.w, loss, self.eta);
        let (projected, projection) =
            project(&updated, &self.constraints, self.tol, MAX_PROJECTION_CYCLES)?;
        if !projection.converged {
            return Err(Error::ProjectionDidNotConverge {
                cycles: projection.cycles,
                max_residual: projection.max_residual,
                tol: self.tol,
                context: format!(" at trial {}", self.trial + 1),
            });
        }
        self.w = projected;
        self.trial += 1;
        Ok((expected_loss, projection))
    }

    /// One trial: predict, record both losses, update, project.
    ///
    /// The object is sampled from the pre-update state, so the prediction
    /// never sees the loss it is charged against; the harness additionally
    /// enforces the reveal ordering structurally.
    pub fn step<R: Rng>(&mut self, loss: &LossVector, rng: &mut R) -> Result<StepReport> {
        let object = self.sample(rng);
        let sampled_loss = dot(&object, loss.entries());
        let (expected_loss, projection) = self.observe(loss)?;
        Ok(StepReport {
            object,
            sampled_loss,
            expected_loss,
            projection,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bregman::divergence_points;
    use crate::formulation::{build_identity, max_abs_residual};
    use crate::sorting_networks::{build_bubble, build_odd_even_merge};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn formulation(n: usize) -> ExtendedFormulation {
        build_identity(&build_bubble(n).to_reflection_order().unwrap()).unwrap()
    }

    #[test]
    fn loss_vector_validation() {
        assert!(LossVector::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(LossVector::new(vec![1.0001]).is_err());
        assert!(LossVector::new(vec![-0.1]).is_err());
        assert!(LossVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn init_n2_satisfies_constraints_and_divergence_bound() {
        let ext = formulation(2);
        let csts = ext.constraints();
        let learner = Learner::init(ext.clone(), 2.0, 0.5, 1e-9).unwrap();
        assert!(max_abs_residual(learner.w(), &csts) <= 1e-9);
        assert!(learner.w().min_coordinate() > 0.0);
        assert!((learner.w().sum_v() - 3.0).abs() <= 1e-8);
        // divergence from both corners stays within (n + 2m) U = 8
        for h in crate::baselines::all_objects(2) {
            let corner = ext.corner_for_object(&h).unwrap();
            let d = divergence_points(&corner, learner.w());
            assert!(
                d.value() <= 8.0 + 1e-6,
                "corner {h:?} diverges by {}",
                d.value()
            );
        }
    }

    #[test]
    fn init_rejects_too_small_center() {
        let ext = formulation(3);
        assert!(Learner::init(ext, 2.0, 0.5, 1e-9).is_err());
    }

    #[test]
    fn init_divergence_bound_holds_for_all_corners_at_n3() {
        let ext = formulation(3);
        let u = ext.infinity_bound();
        let bound = (ext.n() + 2 * ext.m()) as f64 * u;
        let learner = Learner::init(ext.clone(), u, 0.5, 1e-9).unwrap();
        for h in crate::baselines::all_objects(3) {
            let corner = ext.corner_for_object(&h).unwrap();
            let d = divergence_points(&corner, learner.w());
            assert!(d.value() <= bound + 1e-6);
        }
    }

    #[test]
    fn init_divergence_bound_holds_for_random_corners_at_n8() {
        let ext = build_identity(&build_odd_even_merge(8).to_reflection_order().unwrap()).unwrap();
        let u = ext.infinity_bound();
        let bound = (ext.n() + 2 * ext.m()) as f64 * u;
        let learner = Learner::init(ext.clone(), u, 0.5, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..100 {
            let (h, _) = ext.random_corner(&mut rng);
            let corner = ext.corner_for_object(&h).unwrap();
            let d = divergence_points(&corner, learner.w());
            assert!(d.value() <= bound + 1e-6);
        }
    }

    #[test]
    fn mult_update_examples() {
        let w = AugmentedPoint {
            v: vec![1.0, 2.0],
            x: vec![0.3],
            s: vec![0.7],
        };
        let loss = LossVector::new(vec![1.0, 0.0]).unwrap();
        let out = mult_update(&w, &loss, 2.0f64.ln());
        assert!((out.v[0] - 0.5).abs() < 1e-15);
        assert_eq!(out.v[1], 2.0);
        assert_eq!(out.x, w.x);
        assert_eq!(out.s, w.s);

        assert_eq!(mult_update(&w, &LossVector::zeros(2), 0.9), w);
        assert_eq!(mult_update(&w, &loss, 0.0), w);
    }

    #[test]
    fn eta_tuning_examples() {
        assert!((eta_for(8.0, 8.0) - (1.0 + 2.0f64.sqrt()).ln()).abs() < 1e-12);
        // clamped below the divergence bound
        assert_eq!(eta_for(8.0, 1.0), eta_for(8.0, 8.0));
        // monotone toward zero as the loss guess grows
        let mut prev = eta_for(8.0, 8.0);
        for lt in [16.0, 64.0, 1e4, 1e8] {
            let eta = eta_for(8.0, lt);
            assert!(eta > 0.0 && eta < prev);
            prev = eta;
        }
    }

    #[test]
    fn default_tolerance_examples() {
        let t1 = default_tolerance(2, 1, 1);
        assert!((t1 - 0.04768589245763654).abs() < 1e-15);
        assert!((default_tolerance(2, 1, 2) - t1 / 2.0).abs() < 1e-18);
        let t8 = default_tolerance(8, 19, 2000);
        assert!(t8 < 1e-5);
        assert!((t8 - 5.054800205654748e-7).abs() < 1e-15);
    }

    #[test]
    fn regret_bound_examples() {
        assert_eq!(regret_bound(2, 1, 2.0, 0.0), 8.0);
        assert!((regret_bound(2, 1, 2.0, 8.0) - (128.0f64.sqrt() + 8.0)).abs() < 1e-12);
        let mut prev = 0.0;
        for l in [0.0, 1.0, 10.0, 100.0] {
            let b = regret_bound(2, 1, 2.0, l);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn sampling_degenerate_cases() {
        let ext = formulation(2);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        // x = 0 pins the canonical point
        let w = AugmentedPoint {
            v: vec![1.0, 2.0],
            x: vec![0.0],
            s: vec![1.0],
        };
        for _ in 0..100 {
            assert_eq!(sample_object(&ext, &w, &mut rng), vec![1.0, 2.0]);
        }
        // a corner (x at capacity, s = 0) is deterministic
        let (h, corner) = ext.corner_from_decisions(&[true]);
        for _ in 0..100 {
            assert_eq!(sample_object(&ext, &corner, &mut rng), h);
        }
    }

    #[test]
    fn sampling_mean_matches_usage_vector_n2() {
        let ext = formulation(2);
        let w = AugmentedPoint {
            v: vec![1.5, 1.5],
            x: vec![0.5],
            s: vec![0.5],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws = 100_000;
        let mut mean = vec![0.0; 2];
        for _ in 0..draws {
            let h = sample_object(&ext, &w, &mut rng);
            for (m, v) in mean.iter_mut().zip(&h) {
                *m += v / draws as f64;
            }
        }
        assert!((mean[0] - 1.5).abs() < 0.02, "mean {mean:?}");
        assert!((mean[1] - 1.5).abs() < 0.02);
    }

    #[test]
    fn every_sample_is_a_permutation() {
        let ext = build_identity(&build_odd_even_merge(5).to_reflection_order().unwrap()).unwrap();
        let learner = Learner::init(ext.clone(), 5.0, 0.3, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..2000 {
            let mut h = learner.sample(&mut rng);
            h.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(h, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        }
    }

    #[test]
    fn zero_loss_and_zero_eta_leave_the_state_fixed() {
        let ext = formulation(3);
        let mut learner = Learner::init(ext, 3.0, 0.8, 1e-9).unwrap();
        let w0 = learner.w().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let rep = learner.step(&LossVector::zeros(3), &mut rng).unwrap();
            assert_eq!(rep.projection.cycles, 0);
        }
        assert_eq!(learner.w(), &w0);

        let ext = formulation(3);
        let mut frozen = Learner::init(ext, 3.0, 0.0, 1e-9).unwrap();
        let w0 = frozen.w().clone();
        for i in 0..20 {
            let loss = LossVector::new(vec![0.9, 0.1 * (i % 10) as f64, 0.4]).unwrap();
            frozen.step(&loss, &mut rng).unwrap();
        }
        assert_eq!(frozen.w(), &w0);
    }

    #[test]
    fn state_stays_feasible_after_every_step() {
        let ext = formulation(4);
        let csts = ext.constraints();
        let tol = 1e-9;
        let mut learner = Learner::init(ext, 4.0, 0.4, tol).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let target = 10.0;
        for _ in 0..200 {
            let loss = LossVector::new((0..4).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            learner.step(&loss, &mut rng).unwrap();
            assert!(max_abs_residual(learner.w(), &csts) <= tol);
            assert!((learner.w().sum_v() - target).abs() <= 4.0 * tol);
            assert!(learner.w().min_coordinate() > 0.0);
        }
        assert_eq!(learner.trial(), 200);
    }

    #[test]
    fn alternating_adversary_drives_expected_loss_to_center() {
        let ext = formulation(2);
        let mut learner = Learner::init(ext, 2.0, 0.1, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let losses = [
            LossVector::new(vec![1.0, 0.0]).unwrap(),
            LossVector::new(vec![0.0, 1.0]).unwrap(),
        ];
        let mut tail = Vec::new();
        for t in 0..1000 {
            let rep = learner.step(&losses[t % 2], &mut rng).unwrap();
            if t >= 900 {
                tail.push(rep.expected_loss);
            }
        }
        let avg: f64 = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((avg - 1.5).abs() < 0.05, "tail average {avg}");
    }

    #[test]
    fn sampled_and_expected_losses_agree_on_average() {
        let ext = formulation(3);
        let mut learner = Learner::init(ext, 3.0, 0.2, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let trials = 10_000;
        let (mut sampled, mut expected) = (0.0, 0.0);
        for _ in 0..trials {
            let loss = LossVector::new((0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            let rep = learner.step(&loss, &mut rng).unwrap();
            sampled += rep.sampled_loss;
            expected += rep.expected_loss;
        }
        let gap = (sampled - expected).abs() / trials as f64;
        assert!(gap < 0.05, "per-trial gap {gap}");
    }
}
