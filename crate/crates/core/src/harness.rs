//! Experiment runner: adversarial loss streams, the trial loop, regret
//! accounting against the hindsight oracle, and CSV emission.
//!
//! The prediction game per trial is strictly predict, then reveal, then
//! update. [`LossStream::trial`] makes the ordering structural: the loss for
//! a trial is only handed to the observe callback after the predict callback
//! has returned.
//!
//! Seeding is split into independent ChaCha streams so the adversary's draws
//! never depend on how many random bits an algorithm consumes; re-running a
//! config byte-reproduces its CSV.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{best_in_hindsight, CumulativeLoss, ExplicitHedge};
use crate::bregman::project;
use crate::dot;
use crate::error::{Error, Result};
use crate::formulation::{build_identity, max_abs_residual, AugmentedPoint, ExtendedFormulation};
use crate::learner::{
    default_tolerance, eta_for, regret_bound, sample_object, Learner, LossVector,
    MAX_PROJECTION_CYCLES,
};
use crate::sorting_networks::{build_bubble, build_odd_even_merge, SortingNetwork};

const STREAM_ADVERSARY: u64 = 1;
const STREAM_ALGO: u64 = 2;

/// Exact CSV header emitted by [`run`].
pub const CSV_HEADER: &str =
    "trial,sampled_loss,expected_loss,cum_loss,lstar_running,regret,bound,proj_cycles,max_residual";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Bubble,
    #[default]
    Batcher,
}

impl NetworkKind {
    pub fn build(&self, n: usize) -> SortingNetwork {
        match self {
            NetworkKind::Bubble => build_bubble(n),
            NetworkKind::Batcher => build_odd_even_merge(n),
        }
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkKind::Bubble => write!(f, "bubble"),
            NetworkKind::Batcher => write!(f, "batcher"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Xf,
    Hedge,
    Fpl,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Xf => write!(f, "xf"),
            Algorithm::Hedge => write!(f, "hedge"),
            Algorithm::Fpl => write!(f, "fpl"),
        }
    }
}

/// How the learning rate is picked.
///
/// `WorstCase` guesses the comparator loss at its ceiling `T n(n+1)/2`,
/// `Oracle` runs best-in-hindsight on the materialized stream first and uses
/// the realized `L*`, `Doubling` restarts with a doubled guess whenever the
/// cumulative loss overtakes it, and `Fixed` bypasses tuning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    #[default]
    WorstCase,
    Oracle,
    Doubling,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TolMode {
    /// The horizon-aware formula from [`default_tolerance`].
    #[default]
    DefaultFormula,
    Fixed(f64),
}

/// Loss-stream families. All are fixtures, deterministic given the seed.
// Deserialize is hand-written below: internally tagged enums cannot reject
// unknown keys through serde attributes, and silent typos are an error here.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversarySpec {
    /// Every entry i.i.d. uniform on [0, 1].
    UniformIid,
    /// Coordinate means arranged so the `target` permutation is the best
    /// object: the coordinate holding rank r in `target` has mean
    /// `(n + 1 - r) / (n + 1)`, plus uniform noise of half-width `noise`.
    FixedFavorite {
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        target: Option<Vec<usize>>,
    },
    /// `fixed_favorite` whose target rotates one position every `period`
    /// trials.
    Switching {
        period: usize,
        #[serde(default)]
        noise: f64,
    },
    /// Rows of comma-separated values in [0, 1], one trial per line.
    FromFile { path: PathBuf },
}

impl<'de> Deserialize<'de> for AdversarySpec {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;

        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            kind: String,
            noise: Option<f64>,
            target: Option<Vec<usize>>,
            period: Option<usize>,
            path: Option<PathBuf>,
        }

        let raw = Raw::deserialize(deserializer)?;
        let reject = |field: &str, kind: &str| {
            DeError::custom(format!(
                "key {field:?} is not valid for adversary kind {kind:?}"
            ))
        };
        match raw.kind.as_str() {
            "uniform_iid" => {
                for (set, name) in [
                    (raw.noise.is_some(), "noise"),
                    (raw.target.is_some(), "target"),
                    (raw.period.is_some(), "period"),
                    (raw.path.is_some(), "path"),
                ] {
                    if set {
                        return Err(reject(name, "uniform_iid"));
                    }
                }
                Ok(AdversarySpec::UniformIid)
            }
            "fixed_favorite" => {
                if raw.period.is_some() {
                    return Err(reject("period", "fixed_favorite"));
                }
                if raw.path.is_some() {
                    return Err(reject("path", "fixed_favorite"));
                }
                Ok(AdversarySpec::FixedFavorite {
                    noise: raw.noise.unwrap_or(0.0),
                    target: raw.target,
                })
            }
            "switching" => {
                if raw.target.is_some() {
                    return Err(reject("target", "switching"));
                }
                if raw.path.is_some() {
                    return Err(reject("path", "switching"));
                }
                let period = raw
                    .period
                    .ok_or_else(|| DeError::custom("switching adversary needs a period"))?;
                Ok(AdversarySpec::Switching {
                    period,
                    noise: raw.noise.unwrap_or(0.0),
                })
            }
            "from_file" => {
                for (set, name) in [
                    (raw.noise.is_some(), "noise"),
                    (raw.target.is_some(), "target"),
                    (raw.period.is_some(), "period"),
                ] {
                    if set {
                        return Err(reject(name, "from_file"));
                    }
                }
                let path = raw
                    .path
                    .ok_or_else(|| DeError::custom("from_file adversary needs a path"))?;
                Ok(AdversarySpec::FromFile { path })
            }
            other => Err(DeError::custom(format!(
                "unknown adversary kind {other:?} (expected uniform_iid, fixed_favorite, switching, or from_file)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub t: usize,
    #[serde(default)]
    pub network: NetworkKind,
    #[serde(default)]
    pub algo: Algorithm,
    #[serde(default)]
    pub eta_mode: EtaMode,
    #[serde(default)]
    pub tol_mode: TolMode,
    pub adversary: AdversarySpec,
    pub seed: u64,
    /// FPL perturbation scale; defaults to `sqrt(ln(n!) T)`.
    #[serde(default)]
    pub fpl_scale: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!(
                "n must be >= 2, got {}",
                self.n
            )));
        }
        if self.t < 1 {
            return Err(Error::InvalidConfig("t must be >= 1".into()));
        }
        if let EtaMode::Fixed(eta) = self.eta_mode {
            if eta < 0.0 || !eta.is_finite() {
                return Err(Error::InvalidConfig(format!("fixed eta {eta} invalid")));
            }
        }
        if let TolMode::Fixed(tol) = self.tol_mode {
            if tol <= 0.0 || !tol.is_finite() {
                return Err(Error::InvalidConfig(format!("fixed tol {tol} invalid")));
            }
        }
        if let Some(scale) = self.fpl_scale {
            if scale <= 0.0 || !scale.is_finite() {
                return Err(Error::InvalidConfig(format!("fpl_scale {scale} invalid")));
            }
        }
        match &self.adversary {
            AdversarySpec::FixedFavorite { noise, target } => {
                if *noise < 0.0 {
                    return Err(Error::InvalidConfig("noise must be >= 0".into()));
                }
                if let Some(t) = target {
                    validate_target(t, self.n)?;
                }
            }
            AdversarySpec::Switching { period, noise } => {
                if *period == 0 {
                    return Err(Error::InvalidConfig("switching period must be >= 1".into()));
                }
                if *noise < 0.0 {
                    return Err(Error::InvalidConfig("noise must be >= 0".into()));
                }
            }
            _ => {}
        }
        if matches!(self.algo, Algorithm::Hedge) && self.n > 7 {
            return Err(Error::InvalidConfig(format!(
                "explicit hedge supports n <= 7, got {}",
                self.n
            )));
        }
        if matches!(self.algo, Algorithm::Hedge) && matches!(self.eta_mode, EtaMode::Doubling) {
            return Err(Error::InvalidConfig(
                "doubling eta mode is only wired up for the xf learner".into(),
            ));
        }
        Ok(())
    }
}

fn validate_target(target: &[usize], n: usize) -> Result<()> {
    let mut seen = target.to_vec();
    seen.sort_unstable();
    if target.len() != n || seen != (1..=n).collect::<Vec<_>>() {
        return Err(Error::InvalidConfig(format!(
            "target {target:?} is not a permutation of 1..={n}"
        )));
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: ExperimentConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

/// A list of member configs sharing one adversary, for `compare`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub configs: Vec<ExperimentConfig>,
}

pub fn load_compare_config(path: &Path) -> Result<CompareConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: CompareConfig = serde_json::from_str(&text)?;
    for member in &config.configs {
        member.validate()?;
    }
    Ok(config)
}

/// Materialize a loss stream of length `t`: each vector is validated into
/// `[0, 1]^n` and the generation is deterministic given the seed.
pub fn adversary(spec: &AdversarySpec, n: usize, t: usize, seed: u64) -> Result<Vec<LossVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_ADVERSARY);
    match spec {
        AdversarySpec::UniformIid => Ok((0..t)
            .map(|_| {
                LossVector::new((0..n).map(|_| rng.gen::<f64>()).collect())
                    .expect("uniform draws lie in [0, 1]")
            })
            .collect()),
        AdversarySpec::FixedFavorite { noise, target } => {
            let target = match target {
                Some(t) => {
                    validate_target(t, n)?;
                    t.clone()
                }
                None => (1..=n).collect(),
            };
            Ok((0..t)
                .map(|_| favorite_losses(&target, *noise, &mut rng))
                .collect())
        }
        AdversarySpec::Switching { period, noise } => {
            let mut target: Vec<usize> = (1..=n).collect();
            let mut out = Vec::with_capacity(t);
            for trial in 0..t {
                if trial > 0 && trial % period == 0 {
                    target.rotate_left(1);
                }
                out.push(favorite_losses(&target, *noise, &mut rng));
            }
            Ok(out)
        }
        AdversarySpec::FromFile { path } => read_loss_file(path, n, t),
    }
}

fn favorite_losses(target: &[usize], noise: f64, rng: &mut ChaCha8Rng) -> LossVector {
    let n = target.len();
    let entries = target
        .iter()
        .map(|&rank| {
            let mean = (n + 1 - rank) as f64 / (n + 1) as f64;
            let jitter = if noise > 0.0 {
                noise * (2.0 * rng.gen::<f64>() - 1.0)
            } else {
                0.0
            };
            (mean + jitter).clamp(0.0, 1.0)
        })
        .collect();
    LossVector::new(entries).expect("clamped entries lie in [0, 1]")
}

/// Read a loss stream from disk; errors carry the 1-based offending row.
pub fn read_loss_file(path: &Path, n: usize, t: usize) -> Result<Vec<LossVector>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::with_capacity(t);
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entries: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| Error::LossFile {
                    row,
                    reason: format!("unparsable value {tok:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if entries.len() != n {
            return Err(Error::LossFile {
                row,
                reason: format!("expected {} values, got {}", n, entries.len()),
            });
        }
        let loss = LossVector::new(entries).map_err(|e| Error::LossFile {
            row,
            reason: e.to_string(),
        })?;
        out.push(loss);
        if out.len() == t {
            break;
        }
    }
    if out.len() < t {
        return Err(Error::LossFile {
            row: out.len(),
            reason: format!("file ends after {} rows, need {}", out.len(), t),
        });
    }
    Ok(out)
}

/// Write a loss stream in the `from_file` format.
pub fn write_loss_file(path: &Path, losses: &[LossVector]) -> Result<()> {
    let mut text = String::new();
    for loss in losses {
        let row: Vec<String> = loss.entries().iter().map(|l| l.to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// A materialized loss stream that reveals each trial's loss only after the
/// prediction callback for that trial has returned.
pub struct LossStream {
    losses: Vec<LossVector>,
    cursor: usize,
}

impl LossStream {
    pub fn new(losses: Vec<LossVector>) -> Self {
        Self { losses, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// Run one trial, or `None` when the stream is exhausted. `predict` runs
    /// first and has no access to the loss; its output and the trial's loss
    /// are then handed to `observe`.
    pub fn trial<C, H, O>(
        &mut self,
        ctx: &mut C,
        predict: impl FnOnce(&mut C) -> H,
        observe: impl FnOnce(&mut C, H, &LossVector) -> O,
    ) -> Option<O> {
        if self.cursor >= self.losses.len() {
            return None;
        }
        let prediction = predict(ctx);
        let loss = &self.losses[self.cursor];
        self.cursor += 1;
        Some(observe(ctx, prediction, loss))
    }
}

/// One CSV row. The running bound column uses the running `L*`; the summary
/// reports the bound at the final horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub sampled_loss: f64,
    pub expected_loss: f64,
    pub cum_loss: f64,
    pub lstar_running: f64,
    pub regret: f64,
    pub bound: f64,
    pub proj_cycles: usize,
    pub max_residual: f64,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub algo: Algorithm,
    pub n: usize,
    pub t: usize,
    pub m: usize,
    pub eta: Option<f64>,
    pub tol: Option<f64>,
    pub final_cum_loss: f64,
    pub final_expected_cum_loss: f64,
    pub lstar: f64,
    pub final_regret: f64,
    pub final_expected_regret: f64,
    pub final_bound: f64,
    pub total_proj_cycles: usize,
    pub wall_secs: f64,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "algo={} n={} t={} m={} eta={} tol={}",
            self.algo,
            self.n,
            self.t,
            self.m,
            self.eta.map_or("-".into(), |e| format!("{e:.6}")),
            self.tol.map_or("-".into(), |t| format!("{t:.3e}")),
        )?;
        writeln!(
            f,
            "cum_loss={:.6} expected_cum_loss={:.6} lstar={:.6}",
            self.final_cum_loss, self.final_expected_cum_loss, self.lstar
        )?;
        writeln!(
            f,
            "regret={:.6} expected_regret={:.6} bound={:.6}",
            self.final_regret, self.final_expected_regret, self.final_bound
        )?;
        write!(
            f,
            "proj_cycles={} wall_secs={:.3}",
            self.total_proj_cycles, self.wall_secs
        )
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<TrialRecord>,
    pub summary: RunSummary,
}

struct ObserveOut {
    expected_loss: f64,
    proj_cycles: usize,
    max_residual: f64,
}

enum AlgoState {
    Xf {
        learner: Box<Learner>,
        doubling: Option<Box<DoublingState>>,
    },
    Hedge(ExplicitHedge),
    Fpl {
        cum: CumulativeLoss,
        scale: f64,
    },
}

struct DoublingState {
    ext: ExtendedFormulation,
    u: f64,
    tol: f64,
    div_bound: f64,
    loss_guess: f64,
    cum_sampled: f64,
}

impl AlgoState {
    fn predict(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            AlgoState::Xf { learner, .. } => learner.sample(rng),
            AlgoState::Hedge(h) => h.sample(rng),
            AlgoState::Fpl { cum, scale } => crate::baselines::fpl_predict(cum, *scale, rng),
        }
    }

    fn observe(&mut self, sampled_loss: f64, loss: &LossVector) -> Result<ObserveOut> {
        match self {
            AlgoState::Xf { learner, doubling } => {
                let (expected_loss, projection) = learner.observe(loss)?;
                if let Some(state) = doubling {
                    state.cum_sampled += sampled_loss;
                    if state.cum_sampled > state.loss_guess {
                        state.loss_guess *= 2.0;
                        let eta = eta_for(state.div_bound, state.loss_guess);
                        **learner = Learner::init(state.ext.clone(), state.u, eta, state.tol)?;
                    }
                }
                Ok(ObserveOut {
                    expected_loss,
                    proj_cycles: projection.cycles,
                    max_residual: projection.max_residual,
                })
            }
            AlgoState::Hedge(h) => {
                let expected_loss = h.expected_loss(loss);
                h.update(loss);
                Ok(ObserveOut {
                    expected_loss,
                    proj_cycles: 0,
                    max_residual: 0.0,
                })
            }
            AlgoState::Fpl { cum, .. } => {
                cum.add(loss);
                // no tractable prediction mean; the column mirrors the sample
                Ok(ObserveOut {
                    expected_loss: sampled_loss,
                    proj_cycles: 0,
                    max_residual: 0.0,
                })
            }
        }
    }

    fn eta(&self) -> Option<f64> {
        match self {
            AlgoState::Xf { learner, .. } => Some(learner.eta()),
            _ => None,
        }
    }

    fn tol(&self) -> Option<f64> {
        match self {
            AlgoState::Xf { learner, .. } => Some(learner.tol()),
            _ => None,
        }
    }
}

fn resolve_worst_case_guess(n: usize, t: usize) -> f64 {
    t as f64 * (n * (n + 1) / 2) as f64
}

fn build_algo(
    config: &ExperimentConfig,
    ext: &ExtendedFormulation,
    lstar_final: f64,
) -> Result<AlgoState> {
    let n = config.n;
    let t = config.t;
    match config.algo {
        Algorithm::Xf => {
            let u = ext.infinity_bound();
            let div_bound = (ext.n() + 2 * ext.m()) as f64 * u;
            let tol = match config.tol_mode {
                TolMode::DefaultFormula => default_tolerance(n, ext.m(), t),
                TolMode::Fixed(tol) => tol,
            };
            let (eta, doubling) = match config.eta_mode {
                EtaMode::WorstCase => (eta_for(div_bound, resolve_worst_case_guess(n, t)), None),
                EtaMode::Oracle => (eta_for(div_bound, lstar_final), None),
                EtaMode::Fixed(eta) => (eta, None),
                EtaMode::Doubling => {
                    let guess = div_bound;
                    (
                        eta_for(div_bound, guess),
                        Some(Box::new(DoublingState {
                            ext: ext.clone(),
                            u,
                            tol,
                            div_bound,
                            loss_guess: guess,
                            cum_sampled: 0.0,
                        })),
                    )
                }
            };
            let learner = Box::new(Learner::init(ext.clone(), u, eta, tol)?);
            Ok(AlgoState::Xf { learner, doubling })
        }
        Algorithm::Hedge => {
            let scale = (n * (n + 1) / 2) as f64;
            let eta = match config.eta_mode {
                EtaMode::WorstCase => ExplicitHedge::tuned_eta(n, t as f64),
                EtaMode::Oracle => ExplicitHedge::tuned_eta(n, lstar_final / scale),
                EtaMode::Fixed(eta) => eta,
                EtaMode::Doubling => unreachable!("rejected by validate"),
            };
            Ok(AlgoState::Hedge(ExplicitHedge::new(n, eta)?))
        }
        Algorithm::Fpl => {
            let scale = config
                .fpl_scale
                .unwrap_or_else(|| (ExplicitHedge::divergence_bound(n) * t as f64).sqrt());
            Ok(AlgoState::Fpl {
                cum: CumulativeLoss::new(n),
                scale,
            })
        }
    }
}

/// Run the trial loop over an already-materialized stream.
pub fn run_on_losses(config: &ExperimentConfig, losses: &[LossVector]) -> Result<RunOutput> {
    config.validate()?;
    assert_eq!(losses.len(), config.t);
    let started = Instant::now();

    let seq = config.network.build(config.n).to_reflection_order()?;
    let ext = build_identity(&seq)?;
    let u = ext.infinity_bound();

    // final-horizon oracle, needed for oracle eta tuning and the summary
    let mut full = CumulativeLoss::new(config.n);
    for loss in losses {
        full.add(loss);
    }
    let (_, lstar_final) = best_in_hindsight(&full);

    let mut algo = build_algo(config, &ext, lstar_final)?;
    let eta = algo.eta();
    let tol = algo.tol();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(STREAM_ALGO);

    let mut stream = LossStream::new(losses.to_vec());
    let mut records = Vec::with_capacity(config.t);
    let mut cum_sampled = 0.0;
    let mut cum_expected = 0.0;
    let mut running = CumulativeLoss::new(config.n);
    let mut total_cycles = 0usize;

    let mut ctx = (&mut algo, &mut rng);
    for trial in 1..=config.t {
        let outcome = stream
            .trial(
                &mut ctx,
                |c| c.0.predict(c.1),
                |c, h, loss| -> Result<(f64, ObserveOut, LossVector)> {
                    let sampled = dot(&h, loss.entries());
                    let out = c.0.observe(sampled, loss)?;
                    Ok((sampled, out, loss.clone()))
                },
            )
            .expect("stream length equals t");
        let (sampled, out, loss) = outcome.map_err(|e| annotate_trial(e, trial))?;

        cum_sampled += sampled;
        cum_expected += out.expected_loss;
        running.add(&loss);
        let (_, lstar_running) = best_in_hindsight(&running);
        total_cycles += out.proj_cycles;
        records.push(TrialRecord {
            trial,
            sampled_loss: sampled,
            expected_loss: out.expected_loss,
            cum_loss: cum_sampled,
            lstar_running,
            regret: cum_sampled - lstar_running,
            bound: regret_bound(config.n, ext.m(), u, lstar_running),
            proj_cycles: out.proj_cycles,
            max_residual: out.max_residual,
        });
    }

    let summary = RunSummary {
        algo: config.algo,
        n: config.n,
        t: config.t,
        m: ext.m(),
        eta,
        tol,
        final_cum_loss: cum_sampled,
        final_expected_cum_loss: cum_expected,
        lstar: lstar_final,
        final_regret: cum_sampled - lstar_final,
        final_expected_regret: cum_expected - lstar_final,
        final_bound: regret_bound(config.n, ext.m(), u, lstar_final),
        total_proj_cycles: total_cycles,
        wall_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { records, summary })
}

fn annotate_trial(e: Error, trial: usize) -> Error {
    match e {
        Error::ProjectionDidNotConverge {
            cycles,
            max_residual,
            tol,
            ..
        } => Error::ProjectionDidNotConverge {
            cycles,
            max_residual,
            tol,
            context: format!(" at trial {trial}"),
        },
        other => other,
    }
}

/// Run a config end to end: materialize the adversary, drive the trial loop,
/// and write the CSV when an output path is configured.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let losses = adversary(&config.adversary, config.n, config.t, config.seed)?;
    let output = run_on_losses(config, &losses)?;
    if let Some(path) = &config.out {
        write_csv(path, &output.records)?;
    }
    Ok(output)
}

/// Per-algorithm summaries over one shared loss stream.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<RunSummary>,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>14} {:>14} {:>14} {:>14}",
            "algo", "cum_loss", "lstar", "regret", "bound"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<8} {:>14.4} {:>14.4} {:>14.4} {:>14.4}",
                row.algo.to_string(),
                row.final_cum_loss,
                row.lstar,
                row.final_regret,
                row.final_bound
            )?;
        }
        Ok(())
    }
}

/// Run several configs against one materialized stream. All members must
/// agree on `n`, `t`, `seed`, and the adversary; anything else is refused.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Comparison> {
    let first = configs
        .first()
        .ok_or_else(|| Error::InvalidConfig("compare needs at least one config".into()))?;
    for member in configs {
        member.validate()?;
        if member.n != first.n
            || member.t != first.t
            || member.seed != first.seed
            || member.adversary != first.adversary
        {
            return Err(Error::InvalidConfig(
                "compare members must share n, t, seed, and adversary".into(),
            ));
        }
    }
    let losses = adversary(&first.adversary, first.n, first.t, first.seed)?;
    let mut rows = Vec::with_capacity(configs.len());
    for member in configs {
        let output = run_on_losses(member, &losses)?;
        if let Some(path) = &member.out {
            write_csv(path, &output.records)?;
        }
        rows.push(output.summary);
    }
    Ok(Comparison { rows })
}

/// Render records in the fixed CSV schema.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.trial,
            r.sampled_loss,
            r.expected_loss,
            r.cum_loss,
            r.lstar_running,
            r.regret,
            r.bound,
            r.proj_cycles,
            r.max_residual
        ));
    }
    out
}

/// Atomic CSV write: temp file in the destination directory, then rename.
pub fn write_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    atomic_write(path, records_to_csv(records).as_bytes())
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// One line of `xfhedge verify` output.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// The invariant suite behind `xfhedge verify --n N`: construction counts,
/// sorting checks, formulation structure, corner feasibility, projection
/// behavior, sampler fidelity, and the initialization divergence bound.
pub fn verify_suite(n: usize) -> Result<Vec<Check>> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "verify needs n >= 2, got {n}"
        )));
    }
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);

    let bubble = build_bubble(n);
    checks.push(check(
        "bubble comparator count",
        bubble.len() == n * (n - 1) / 2,
        format!("m = {}", bubble.len()),
    ));

    for (name, net) in [("bubble", &bubble), ("batcher", &build_odd_even_merge(n))] {
        let (passed, detail) = if n <= 16 {
            (
                net.verify_zero_one()?,
                format!("exhaustive over 2^{n} binary inputs"),
            )
        } else {
            let mut ok = true;
            for _ in 0..2000 {
                let mut values: Vec<u32> = (0..n).map(|_| rng.gen_range(0..100)).collect();
                let mut sorted = values.clone();
                sorted.sort_unstable();
                net.apply(&mut values);
                if values != sorted {
                    ok = false;
                    break;
                }
            }
            (ok, "2000 random inputs sorted".to_string())
        };
        checks.push(check(&format!("{name} network sorts"), passed, detail));
    }

    let ext = build_identity(&build_odd_even_merge(n).to_reflection_order()?)?;
    let csts = ext.constraints();
    let m = ext.m();
    let u = ext.infinity_bound();

    checks.push(check(
        "capacity rhs equals wire gap",
        ext.columns()
            .iter()
            .zip(ext.b())
            .all(|(&(i, j), &bk)| bk == (j - i) as f64),
        format!("{} capacity rows", m),
    ));

    let coeff_ok = (0..m).all(|k| ext.a_row(k).iter().all(|&(_, v)| (-1..=2).contains(&v)));
    checks.push(check(
        "A coefficients within premise",
        coeff_ok,
        "entries in {-1, 0, 1, 2}".to_string(),
    ));

    let mut corners_ok = true;
    for _ in 0..200 {
        let (h, w) = ext.random_corner(&mut rng);
        let resid = max_abs_residual(&w, &csts);
        let mut key: Vec<i64> = h.iter().map(|&v| v as i64).collect();
        key.sort_unstable();
        if resid != 0.0 || w.inf_norm() > u || key != (1..=n as i64).collect::<Vec<_>>() {
            corners_ok = false;
            break;
        }
    }
    checks.push(check(
        "decision corners satisfy equalities",
        corners_ok,
        "200 random decision vectors".to_string(),
    ));

    let mut encodings_ok = true;
    for _ in 0..50 {
        let mut h: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            h.swap(i, j);
        }
        let w = ext.corner_for_object(&h)?;
        if w.min_coordinate() < 0.0 || w.v != h || max_abs_residual(&w, &csts) != 0.0 {
            encodings_ok = false;
            break;
        }
    }
    checks.push(check(
        "object encodings feasible",
        encodings_ok,
        "50 random permutations re-encoded".to_string(),
    ));

    let start = AugmentedPoint {
        v: (0..n).map(|_| rng.gen_range(0.1..2.0 * n as f64)).collect(),
        x: (0..m).map(|_| rng.gen_range(0.1..2.0 * n as f64)).collect(),
        s: (0..m).map(|_| rng.gen_range(0.1..2.0 * n as f64)).collect(),
    };
    let (projected, report) = project(&start, &csts, 1e-9, MAX_PROJECTION_CYCLES)?;
    let sum_target = (n * (n + 1) / 2) as f64;
    checks.push(check(
        "projection reaches the polytope",
        report.converged
            && report.max_residual <= 1e-8
            && (projected.sum_v() - sum_target).abs() <= 1e-6,
        format!(
            "cycles = {}, residual = {:.2e}",
            report.cycles, report.max_residual
        ),
    ));

    let mut idempotent = true;
    for cst in &csts {
        let once = crate::bregman::project_onto_constraint(&projected, cst)?;
        let twice = crate::bregman::project_onto_constraint(&once, cst)?;
        for i in 0..once.dim() {
            if (once.get(i) - twice.get(i)).abs() > 1e-12 {
                idempotent = false;
            }
        }
    }
    checks.push(check(
        "single-facet projection idempotent",
        idempotent,
        "every facet, 1e-12".to_string(),
    ));

    if n <= 8 {
        let draws = 20_000;
        let mut mean = vec![0.0; n];
        for _ in 0..draws {
            let h = sample_object(&ext, &projected, &mut rng);
            for (acc, v) in mean.iter_mut().zip(&h) {
                *acc += v / draws as f64;
            }
        }
        let err = mean
            .iter()
            .zip(&projected.v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        checks.push(check(
            "sampler mean matches usage vector",
            err <= 0.1,
            format!("L-inf error {err:.4} over {draws} draws"),
        ));
    }

    let learner = Learner::init(ext.clone(), u, 0.5, 1e-9)?;
    let bound = (n + 2 * m) as f64 * u;
    let mut div_bound_ok = true;
    for _ in 0..20 {
        let (h, _) = ext.random_corner(&mut rng);
        let corner = ext.corner_for_object(&h)?;
        let d = crate::bregman::divergence_points(&corner, learner.w());
        if d.value() > bound + 1e-6 {
            div_bound_ok = false;
            break;
        }
    }
    checks.push(check(
        "initialization divergence bound",
        div_bound_ok,
        format!("(n + 2m) U = {bound}"),
    ));

    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn base_config(n: usize, t: usize) -> ExperimentConfig {
        ExperimentConfig {
            n,
            t,
            network: NetworkKind::Bubble,
            algo: Algorithm::Xf,
            eta_mode: EtaMode::WorstCase,
            tol_mode: TolMode::Fixed(1e-9),
            adversary: AdversarySpec::UniformIid,
            seed: 7,
            fpl_scale: None,
            out: None,
        }
    }

    #[test]
    fn adversary_streams_are_deterministic() {
        for spec in [
            AdversarySpec::UniformIid,
            AdversarySpec::FixedFavorite {
                noise: 0.2,
                target: None,
            },
            AdversarySpec::Switching {
                period: 3,
                noise: 0.1,
            },
        ] {
            let a = adversary(&spec, 4, 20, 99).unwrap();
            let b = adversary(&spec, 4, 20, 99).unwrap();
            assert_eq!(a, b);
            for loss in &a {
                assert!(loss.entries().iter().all(|&l| (0.0..=1.0).contains(&l)));
            }
        }
    }

    #[test]
    fn fixed_favorite_without_noise_selects_the_target() {
        let spec = AdversarySpec::FixedFavorite {
            noise: 0.0,
            target: Some(vec![2, 3, 1]),
        };
        let losses = adversary(&spec, 3, 50, 0).unwrap();
        let mut cum = CumulativeLoss::new(3);
        for loss in &losses {
            cum.add(loss);
        }
        let (h, _) = best_in_hindsight(&cum);
        assert_eq!(h, vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn switching_adversary_rotates_the_favorite() {
        let spec = AdversarySpec::Switching {
            period: 10,
            noise: 0.0,
        };
        let losses = adversary(&spec, 3, 20, 0).unwrap();
        assert_ne!(losses[0], losses[10]);
        assert_eq!(losses[0], losses[9]);
    }

    #[test]
    fn loss_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("losses.csv");
        let spec = AdversarySpec::UniformIid;
        let losses = adversary(&spec, 3, 10, 4).unwrap();
        write_loss_file(&path, &losses).unwrap();
        let back = read_loss_file(&path, 3, 10).unwrap();
        assert_eq!(losses, back);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "0.5,0.5,0.5\n0.1,2.0,0.1\n").unwrap();
        match read_loss_file(&bad, 3, 2) {
            Err(Error::LossFile { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected row error, got {other:?}"),
        }
        std::fs::write(&bad, "0.5,0.5\n").unwrap();
        match read_loss_file(&bad, 3, 1) {
            Err(Error::LossFile { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected width error, got {other:?}"),
        }
    }

    #[test]
    fn stream_reveals_losses_only_after_prediction() {
        let losses = vec![LossVector::zeros(2), LossVector::zeros(2)];
        let mut stream = LossStream::new(losses);
        let predicted = Cell::new(false);
        let mut ctx = ();
        while let Some(()) = stream.trial(
            &mut ctx,
            |_| predicted.set(true),
            |_, _, _loss| {
                assert!(predicted.get(), "loss revealed before prediction");
                predicted.set(false);
            },
        ) {}
    }

    #[test]
    fn zero_losses_give_zero_regret() {
        let mut config = base_config(3, 1);
        let losses = vec![LossVector::zeros(3)];
        config.adversary = AdversarySpec::FixedFavorite {
            noise: 0.0,
            target: None,
        };
        let out = run_on_losses(&config, &losses).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.summary.final_regret, 0.0);
        assert_eq!(out.records[0].regret, 0.0);
    }

    #[test]
    fn cumulative_columns_are_monotone_for_every_algorithm() {
        for algo in [Algorithm::Xf, Algorithm::Hedge, Algorithm::Fpl] {
            let mut config = base_config(4, 60);
            config.algo = algo;
            let out = run(&config).unwrap();
            assert_eq!(out.records.len(), 60);
            let mut prev_cum = 0.0;
            let mut prev_lstar = 0.0;
            for r in &out.records {
                assert!(r.cum_loss >= prev_cum);
                assert!(r.lstar_running >= prev_lstar - 1e-12);
                prev_cum = r.cum_loss;
                prev_lstar = r.lstar_running;
            }
        }
    }

    #[test]
    fn regret_decrements_are_bounded_by_one_object_loss() {
        // lstar_running grows by at most n(n+1)/2 per trial and cum_loss
        // never shrinks, so regret cannot drop faster than that floor
        let mut config = base_config(4, 80);
        config.adversary = AdversarySpec::Switching {
            period: 7,
            noise: 0.2,
        };
        let out = run(&config).unwrap();
        let floor = (4 * 5 / 2) as f64;
        let mut prev = 0.0;
        for r in &out.records {
            assert!(r.regret - prev >= -floor - 1e-9, "trial {}", r.trial);
            prev = r.regret;
        }
    }

    #[test]
    fn reruns_byte_reproduce_the_csv() {
        let config = base_config(3, 40);
        let a = records_to_csv(&run(&config).unwrap().records);
        let b = records_to_csv(&run(&config).unwrap().records);
        assert_eq!(a, b);
    }

    #[test]
    fn eta_modes_resolve() {
        for mode in [
            EtaMode::WorstCase,
            EtaMode::Oracle,
            EtaMode::Doubling,
            EtaMode::Fixed(0.25),
        ] {
            let mut config = base_config(3, 25);
            config.eta_mode = mode;
            let out = run(&config).unwrap();
            assert_eq!(out.records.len(), 25);
            if let EtaMode::Fixed(eta) = mode {
                assert_eq!(out.summary.eta, Some(eta));
            }
        }
    }

    #[test]
    fn compare_validates_and_aligns() {
        let shared = base_config(4, 30);
        let mut hedge = shared.clone();
        hedge.algo = Algorithm::Hedge;
        let mut fpl = shared.clone();
        fpl.algo = Algorithm::Fpl;

        let cmp = compare(&[shared.clone(), hedge, fpl]).unwrap();
        assert_eq!(cmp.rows.len(), 3);
        assert_eq!(cmp.rows[0].lstar, cmp.rows[1].lstar);
        assert_eq!(cmp.rows[0].lstar, cmp.rows[2].lstar);

        // identical members give identical rows
        let twice = compare(&[shared.clone(), shared.clone()]).unwrap();
        assert_eq!(twice.rows[0].final_cum_loss, twice.rows[1].final_cum_loss);
        assert_eq!(twice.rows[0].final_regret, twice.rows[1].final_regret);

        // degenerate single-member table equals the plain run summary
        let single = compare(std::slice::from_ref(&shared)).unwrap();
        let direct = run(&shared).unwrap();
        assert_eq!(single.rows[0].final_cum_loss, direct.summary.final_cum_loss);

        let mut mismatched = shared.clone();
        mismatched.t = 31;
        assert!(compare(&[shared, mismatched]).is_err());
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let text = r#"{
            "n": 8, "t": 2000,
            "network": "batcher", "algo": "xf",
            "eta_mode": "oracle",
            "tol_mode": "default_formula",
            "adversary": {"kind": "uniform_iid"},
            "seed": 42
        }"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.network, NetworkKind::Batcher);
        assert_eq!(config.eta_mode, EtaMode::Oracle);
        let round = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&round).unwrap();
        assert_eq!(back, config);

        let with_typo = r#"{"n": 4, "t": 10, "adversary": {"kind": "uniform_iid"}, "seed": 1, "nettwork": "bubble"}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(with_typo).is_err());

        let bad_adversary =
            r#"{"n": 4, "t": 10, "adversary": {"kind": "uniform_iid", "period": 3}, "seed": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad_adversary).is_err());

        let fixed_modes = r#"{
            "n": 4, "t": 10,
            "eta_mode": {"fixed": 0.25},
            "tol_mode": {"fixed": 1e-9},
            "adversary": {"kind": "switching", "period": 3, "noise": 0.1},
            "seed": 1
        }"#;
        let config: ExperimentConfig = serde_json::from_str(fixed_modes).unwrap();
        assert_eq!(config.eta_mode, EtaMode::Fixed(0.25));
        assert_eq!(config.tol_mode, TolMode::Fixed(1e-9));
        assert_eq!(
            config.adversary,
            AdversarySpec::Switching {
                period: 3,
                noise: 0.1
            }
        );
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut config = base_config(1, 10);
        assert!(config.validate().is_err());
        config.n = 4;
        config.t = 0;
        assert!(config.validate().is_err());
        config.t = 10;
        config.algo = Algorithm::Hedge;
        config.n = 8;
        assert!(config.validate().is_err());
        config.n = 4;
        config.eta_mode = EtaMode::Doubling;
        assert!(config.validate().is_err());
        config.eta_mode = EtaMode::WorstCase;
        config.adversary = AdversarySpec::Switching {
            period: 0,
            noise: 0.0,
        };
        assert!(config.validate().is_err());
        config.adversary = AdversarySpec::FixedFavorite {
            noise: 0.0,
            target: Some(vec![1, 1, 2, 3]),
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn verify_suite_passes_at_small_sizes() {
        for n in [3usize, 6] {
            let checks = verify_suite(n).unwrap();
            for c in &checks {
                assert!(c.passed, "n={n} check {} failed: {}", c.name, c.detail);
            }
        }
        assert!(verify_suite(1).is_err());
    }

    #[test]
    fn csv_header_and_shape() {
        let mut config = base_config(3, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        config.out = Some(path.clone());
        run(&config).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.count(), 5);
    }
}
