//! Budget-constrained stage-wise coordinate search.
//!
//! Each iteration re-optimizes the backbone, then the FPN, then the PAN,
//! holding the other two stages at their current choices. A stage step picks
//! the feasible candidate (estimated energy ≤ budget) with the highest proxy
//! score; ties go to lower energy, then to the lower canonical stage index.
//! When nothing is feasible the step falls back to the lowest-energy
//! candidate and the result is flagged infeasible.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{
    hot_indices, stage_space_size, BlockChoice, DetectorArchitecture, StageArchitecture, StageKind,
    ARCH_ENCODING_LEN, NUM_BLOCK_CHOICES, SLOTS_PER_BLOCK,
};
use crate::data::DeviceId;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::mlp::Network;
use crate::par::Execution;

/// An accuracy proxy over architecture encodings.
pub trait ArchScorer: Sync {
    fn input_dim(&self) -> usize;

    /// Score of the 0/1 encoding whose hot entries are `hot`.
    fn score_hot(&self, hot: &[usize]) -> Result<f64>;

    fn score(&self, a: &DetectorArchitecture) -> Result<f64> {
        self.score_hot(&hot_indices(a))
    }
}

impl ArchScorer for Network {
    fn input_dim(&self) -> usize {
        Network::input_dim(self)
    }

    fn score_hot(&self, hot: &[usize]) -> Result<f64> {
        self.forward_hot(hot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Normalized energy budget; `f64::INFINITY` disables the constraint.
    pub budget_tau: f64,
    pub max_iterations: usize,
    /// Stages at most this large are enumerated exhaustively.
    pub stage_enumeration_limit: u64,
    /// Uniform candidates drawn for stages above the limit.
    pub sample_fallback: usize,
    pub rng_seed: u64,
    pub device: DeviceId,
    #[serde(default)]
    pub execution: Execution,
}

impl SearchConfig {
    pub const DEFAULT_ITERATIONS: usize = 4;
    pub const DEFAULT_ENUMERATION_LIMIT: u64 = 1 << 20;

    pub fn new(device: DeviceId, budget_tau: f64) -> Self {
        SearchConfig {
            budget_tau,
            max_iterations: Self::DEFAULT_ITERATIONS,
            stage_enumeration_limit: Self::DEFAULT_ENUMERATION_LIMIT,
            sample_fallback: 4096,
            rng_seed: 0,
            device,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget_tau.is_nan() || self.budget_tau <= 0.0 {
            return Err(Error::Config("budget_tau must be positive or infinite".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.sample_fallback == 0 {
            return Err(Error::Config("sample_fallback must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_feasible(&self, energy: f64) -> bool {
        energy <= self.budget_tau
    }

    fn exhaustive(&self, kind: StageKind) -> bool {
        stage_space_size(kind) <= self.stage_enumeration_limit
    }
}

/// One stage update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub stage: StageKind,
    pub chosen: Vec<BlockChoice>,
    pub score: f64,
    pub energy: f64,
    pub feasible: bool,
    pub changed: bool,
    pub candidates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub current: DetectorArchitecture,
    pub iteration: usize,
    history: Vec<StepRecord>,
}

impl SearchState {
    pub fn new(init: DetectorArchitecture) -> Self {
        SearchState {
            current: init,
            iteration: 0,
            history: Vec::new(),
        }
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    /// The trace as JSON lines, one record per stage step.
    pub fn trace_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.history {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub architecture: DetectorArchitecture,
    pub proxy_map: f64,
    pub energy: f64,
    pub feasible: bool,
    pub converged_at: Option<usize>,
    pub iterations_run: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    index: u64,
    score: f64,
    energy: f64,
}

/// Whether `a` is strictly preferred over `b` under the selection order.
fn preferred(a: &Candidate, b: &Candidate, tau: f64) -> bool {
    let (fa, fb) = (a.energy <= tau, b.energy <= tau);
    let ord = match (fa, fb) {
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (true, true) => a
            .score
            .total_cmp(&b.score)
            .then(b.energy.total_cmp(&a.energy)),
        (false, false) => b
            .energy
            .total_cmp(&a.energy)
            .then(a.score.total_cmp(&b.score)),
    }
    .then(b.index.cmp(&a.index));
    ord == Ordering::Greater
}

/// Hot encoding indices for each of the 18 block choices within one block.
fn block_hot_table() -> [[usize; 3]; NUM_BLOCK_CHOICES] {
    let mut table = [[0usize; 3]; NUM_BLOCK_CHOICES];
    for (i, row) in table.iter_mut().enumerate() {
        let a = DetectorArchitecture::uniform(BlockChoice::from_index(i).expect("in range"));
        row.copy_from_slice(&hot_indices(&a)[..3]);
    }
    table
}

/// Evaluates stage configurations of `kind` spliced into `base`.
struct StageEvaluator<'a, P: ?Sized, E: ?Sized> {
    base_hot: [usize; 30],
    kind: StageKind,
    table: [[usize; 3]; NUM_BLOCK_CHOICES],
    proxy: &'a P,
    energy: &'a E,
    device: &'a DeviceId,
}

impl<'a, P: ArchScorer + ?Sized, E: EnergyModel + ?Sized> StageEvaluator<'a, P, E> {
    fn new(base: &DetectorArchitecture, kind: StageKind, proxy: &'a P, energy: &'a E, device: &'a DeviceId) -> Self {
        StageEvaluator {
            base_hot: hot_indices(base),
            kind,
            table: block_hot_table(),
            proxy,
            energy,
            device,
        }
    }

    fn eval(&self, index: u64) -> Result<Candidate> {
        let mut hot = self.base_hot;
        let n = self.kind.block_count();
        let mut rest = index;
        for b in (0..n).rev() {
            let choice = (rest % NUM_BLOCK_CHOICES as u64) as usize;
            rest /= NUM_BLOCK_CHOICES as u64;
            let slot = self.kind.slot_offset() + b;
            for (j, &h) in self.table[choice].iter().enumerate() {
                hot[slot * 3 + j] = slot * SLOTS_PER_BLOCK + h;
            }
        }
        let score = self.proxy.score_hot(&hot)?;
        let energy = self.energy.energy_hot(&hot, self.device)?;
        if !score.is_finite() || energy.is_nan() {
            return Err(Error::Config(format!(
                "non-finite estimate for {} candidate {index}: score {score}, energy {energy}",
                self.kind
            )));
        }
        Ok(Candidate { index, score, energy })
    }
}

fn check_dims<P: ArchScorer + ?Sized>(proxy: &P) -> Result<()> {
    if proxy.input_dim() != ARCH_ENCODING_LEN {
        return Err(Error::Dimension {
            expected: ARCH_ENCODING_LEN,
            got: proxy.input_dim(),
        });
    }
    Ok(())
}

fn stage_seed(root: u64, iteration: usize, kind: StageKind) -> u64 {
    let stage = StageKind::ALL.iter().position(|&k| k == kind).expect("stage") as u64;
    root.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((iteration as u64) << 8 | stage)
}

/// Candidate indices for one stage step: the whole stage, or a seeded
/// uniform sample plus the incumbent.
fn candidate_indices(cfg: &SearchConfig, kind: StageKind, incumbent: u64, iteration: usize) -> Vec<u64> {
    let size = stage_space_size(kind);
    if cfg.exhaustive(kind) {
        return (0..size).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.rng_seed, iteration, kind));
    let mut idx: Vec<u64> = (0..cfg.sample_fallback).map(|_| rng.random_range(0..size)).collect();
    idx.push(incumbent);
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Re-optimizes one stage of `state.current` and appends a history record.
pub fn stage_argmax<P, E>(
    state: &mut SearchState,
    stage: StageKind,
    proxy: &P,
    energy: &E,
    cfg: &SearchConfig,
) -> Result<()>
where
    P: ArchScorer + ?Sized,
    E: EnergyModel + ?Sized,
{
    cfg.validate()?;
    check_dims(proxy)?;
    let incumbent = state.current.stage(stage).canonical_index();
    let indices = candidate_indices(cfg, stage, incumbent, state.iteration);
    let eval = StageEvaluator::new(&state.current, stage, proxy, energy, &cfg.device);
    let scored = cfg.execution.map(&indices, |&i| eval.eval(i));
    let mut best: Option<Candidate> = None;
    for c in scored {
        let c = c?;
        if best.as_ref().is_none_or(|b| preferred(&c, b, cfg.budget_tau)) {
            best = Some(c);
        }
    }
    let best = best.expect("candidate set includes the incumbent");
    let chosen = StageArchitecture::from_canonical_index(stage, best.index)?;
    state.history.push(StepRecord {
        iteration: state.iteration,
        stage,
        chosen: chosen.blocks().to_vec(),
        score: best.score,
        energy: best.energy,
        feasible: cfg.is_feasible(best.energy),
        changed: best.index != incumbent,
        candidates: indices.len() as u64,
    });
    state.current = state.current.with_stage(chosen);
    Ok(())
}

/// Runs up to `max_iterations` backbone → FPN → PAN sweeps, stopping after
/// the first sweep that changes nothing.
pub fn search<P, E>(
    init: &DetectorArchitecture,
    proxy: &P,
    energy: &E,
    cfg: &SearchConfig,
) -> Result<(SearchResult, SearchState)>
where
    P: ArchScorer + ?Sized,
    E: EnergyModel + ?Sized,
{
    cfg.validate()?;
    check_dims(proxy)?;
    let mut state = SearchState::new(init.clone());
    let mut converged_at = None;
    for t in 1..=cfg.max_iterations {
        state.iteration = t;
        let before = state.history.len();
        for kind in StageKind::ALL {
            stage_argmax(&mut state, kind, proxy, energy, cfg)?;
        }
        if state.history[before..].iter().all(|r| !r.changed) {
            converged_at = Some(t);
            break;
        }
    }
    let a = state.current.clone();
    let score = proxy.score(&a)?;
    let e = energy.energy(&a, &cfg.device)?;
    let result = SearchResult {
        architecture: a,
        proxy_map: score,
        energy: e,
        feasible: cfg.is_feasible(e),
        converged_at,
        iterations_run: state.iteration,
    };
    Ok((result, state))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub stage: StageKind,
    pub candidate: Vec<BlockChoice>,
    pub score: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub candidates_checked: u64,
    pub violations: Vec<Violation>,
}

impl OptimalityReport {
    pub fn is_locally_optimal(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Ranking key; larger is better. Feasible candidates rank by score, then
/// lower energy; infeasible ones by lower energy, then score; canonical
/// index breaks remaining ties.
fn rank_key(score: f64, energy: f64, index: u64, tau: f64) -> (bool, f64, f64, i128) {
    if energy <= tau {
        (true, score, -energy, -(index as i128))
    } else {
        (false, -energy, score, -(index as i128))
    }
}

fn key_gt(a: (bool, f64, f64, i128), b: (bool, f64, f64, i128)) -> bool {
    a.0.cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.total_cmp(&b.2))
        .then(a.3.cmp(&b.3))
        == Ordering::Greater
}

/// Exhaustively checks every single-stage replacement of `a` and reports
/// those that would outrank it.
pub fn local_optimality_check<P, E>(
    a: &DetectorArchitecture,
    proxy: &P,
    energy: &E,
    cfg: &SearchConfig,
) -> Result<OptimalityReport>
where
    P: ArchScorer + ?Sized,
    E: EnergyModel + ?Sized,
{
    check_dims(proxy)?;
    let tau = cfg.budget_tau;
    let mut report = OptimalityReport {
        candidates_checked: 0,
        violations: Vec::new(),
    };
    for kind in StageKind::ALL {
        let current_idx = a.stage(kind).canonical_index();
        let current = rank_key(proxy.score(a)?, energy.energy(a, &cfg.device)?, current_idx, tau);
        let stages: Vec<StageArchitecture> = StageArchitecture::enumerate(kind).collect();
        let evaluated = cfg.execution.map(&stages, |s| -> Result<_> {
            let cand = a.with_stage(s.clone());
            let hot = hot_indices(&cand);
            Ok((proxy.score_hot(&hot)?, energy.energy_hot(&hot, &cfg.device)?))
        });
        for (s, r) in stages.iter().zip(evaluated) {
            let (score, e) = r?;
            report.candidates_checked += 1;
            if key_gt(rank_key(score, e, s.canonical_index(), tau), current) {
                report.violations.push(Violation {
                    stage: kind,
                    candidate: s.blocks().to_vec(),
                    score,
                    energy: e,
                });
            }
        }
    }
    Ok(report)
}
