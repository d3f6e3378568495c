//! Hill climbing with random restarts, and tabu search, over DAGs whose
//! edges lie in a fixed skeleton.

use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scorer;
use crate::error::{Error, Result};
use crate::graph::{BitMatrix, Dag, EdgeConstraints, Skeleton};

/// Score changes smaller than this count as ties.
const TIE_EPS: f64 = 1e-9;
/// Draws allowed per perturbation move before it is skipped.
const PERTURB_REDRAWS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchConfig {
    pub restarts: usize,
    pub tabu_len: usize,
    pub stall_limit: usize,
    pub perturb_edges: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            tabu_len: 100,
            stall_limit: 15,
            perturb_edges: 5,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tabu_len < 1 || self.stall_limit < 1 {
            return Err(Error::Precondition(
                "tabu_len and stall_limit must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnedBn {
    pub dag: Dag,
    pub score: f64,
    /// Distinct local scores computed during the search.
    pub local_scores_evaluated: usize,
    pub runtime: f64,
    /// Total score after each move of the first greedy ascent.
    pub trajectory: Vec<f64>,
}

/// Sum of local scores of `dag`.
pub fn total_score(scorer: &Scorer, dag: &Dag) -> Result<f64> {
    (0..dag.n_nodes())
        .map(|v| scorer.local_score(v, &dag.parents(v)))
        .sum()
}

/// Declared in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum MoveKind {
    Add,
    Delete,
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Move {
    kind: MoveKind,
    from: usize,
    to: usize,
}

struct State<'a> {
    scorer: &'a Scorer,
    arrows: BitMatrix,
    parents: Vec<Vec<usize>>,
    local: Vec<f64>,
}

impl<'a> State<'a> {
    fn new(scorer: &'a Scorer, arrows: BitMatrix) -> Result<Self> {
        let n = arrows.dim();
        let parents: Vec<Vec<usize>> = (0..n)
            .map(|v| (0..n).filter(|&u| arrows.get(u, v)).collect())
            .collect();
        let local = parents
            .iter()
            .enumerate()
            .map(|(v, pa)| scorer.local_score(v, pa))
            .collect::<Result<_>>()?;
        Ok(Self {
            scorer,
            arrows,
            parents,
            local,
        })
    }

    fn score(&self) -> f64 {
        self.local.iter().sum()
    }

    /// Whether `to` can be reached from `from` along arrows, ignoring the
    /// arrow `skip` if given.
    fn reaches(&self, from: usize, to: usize, skip: Option<(usize, usize)>) -> bool {
        let n = self.arrows.dim();
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            for w in 0..n {
                if !seen[w] && self.arrows.get(u, w) && skip != Some((u, w)) {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        false
    }

    fn with_parent(&self, v: usize, add: usize) -> Vec<usize> {
        let mut pa = self.parents[v].clone();
        pa.push(add);
        pa
    }

    fn without_parent(&self, v: usize, drop: usize) -> Vec<usize> {
        self.parents[v].iter().copied().filter(|&u| u != drop).collect()
    }

    /// Moves allowed by the skeleton and the constraints, in tie-break
    /// order, before the acyclicity check.
    fn candidate_moves(&self, skeleton: &Skeleton, cons: &EdgeConstraints) -> Vec<Move> {
        let mut adds = Vec::new();
        let mut dels = Vec::new();
        let mut revs = Vec::new();
        for (a, b) in skeleton.edges() {
            for (u, v) in [(a, b), (b, a)] {
                if self.arrows.get(u, v) {
                    if !cons.requires(u, v) {
                        dels.push(Move { kind: MoveKind::Delete, from: u, to: v });
                        if !cons.forbids(v, u) {
                            revs.push(Move { kind: MoveKind::Reverse, from: u, to: v });
                        }
                    }
                } else if !self.arrows.get(v, u) && !cons.forbids(u, v) {
                    adds.push(Move { kind: MoveKind::Add, from: u, to: v });
                }
            }
        }
        adds.sort();
        dels.sort();
        revs.sort();
        adds.into_iter().chain(dels).chain(revs).collect()
    }

    fn is_acyclic_after(&self, m: Move) -> bool {
        match m.kind {
            MoveKind::Add => !self.reaches(m.to, m.from, None),
            MoveKind::Delete => true,
            MoveKind::Reverse => !self.reaches(m.from, m.to, Some((m.from, m.to))),
        }
    }

    fn delta(&self, m: Move) -> Result<f64> {
        let (u, v) = (m.from, m.to);
        Ok(match m.kind {
            MoveKind::Add => self.scorer.local_score(v, &self.with_parent(v, u))? - self.local[v],
            MoveKind::Delete => self.scorer.local_score(v, &self.without_parent(v, u))? - self.local[v],
            MoveKind::Reverse => {
                self.scorer.local_score(v, &self.without_parent(v, u))?
                    + self.scorer.local_score(u, &self.with_parent(u, v))?
                    - self.local[v]
                    - self.local[u]
            }
        })
    }

    fn apply(&mut self, m: Move) -> Result<()> {
        let (u, v) = (m.from, m.to);
        match m.kind {
            MoveKind::Add => {
                self.arrows.set(u, v, true);
                self.parents[v].push(u);
                self.parents[v].sort_unstable();
            }
            MoveKind::Delete => {
                self.arrows.set(u, v, false);
                self.parents[v].retain(|&p| p != u);
            }
            MoveKind::Reverse => {
                self.arrows.set(u, v, false);
                self.arrows.set(v, u, true);
                self.parents[v].retain(|&p| p != u);
                self.parents[u].push(v);
                self.parents[u].sort_unstable();
            }
        }
        for w in [u, v] {
            self.local[w] = self.scorer.local_score(w, &self.parents[w])?;
        }
        Ok(())
    }

    fn words_after(&self, m: Move) -> Vec<u64> {
        let mut a = self.arrows.clone();
        match m.kind {
            MoveKind::Add => a.set(m.from, m.to, true),
            MoveKind::Delete => a.set(m.from, m.to, false),
            MoveKind::Reverse => {
                a.set(m.from, m.to, false);
                a.set(m.to, m.from, true);
            }
        }
        a.to_words()
    }

    /// Best legal move by score change, preferring the earliest on ties.
    /// `allowed` filters moves after the acyclicity check.
    fn best_move(
        &self,
        skeleton: &Skeleton,
        cons: &EdgeConstraints,
        mut allowed: impl FnMut(Move) -> bool,
    ) -> Result<Option<(Move, f64)>> {
        let mut best: Option<(Move, f64)> = None;
        for m in self.candidate_moves(skeleton, cons) {
            if !self.is_acyclic_after(m) || !allowed(m) {
                continue;
            }
            let d = self.delta(m)?;
            if best.is_none_or(|(_, bd)| d > bd + TIE_EPS) {
                best = Some((m, d));
            }
        }
        Ok(best)
    }

    fn into_dag(self) -> Dag {
        Dag::from_matrix(self.arrows).expect("search keeps the graph acyclic")
    }
}

fn check_inputs(skeleton: &Skeleton, scorer: &Scorer, cons: &EdgeConstraints, cfg: &SearchConfig) -> Result<BitMatrix> {
    cfg.validate()?;
    let n = skeleton.n_nodes();
    if scorer.n_vars() != n {
        return Err(Error::Precondition(format!(
            "skeleton has {n} nodes but the data has {} variables",
            scorer.n_vars()
        )));
    }
    cons.validate(n)?;
    let mut start = BitMatrix::new(n);
    for &(u, v) in &cons.whitelist {
        if !skeleton.has_edge(u, v) {
            return Err(Error::InconsistentConstraints(format!(
                "whitelisted arrow {u} -> {v} is not a skeleton edge"
            )));
        }
        start.set(u, v, true);
    }
    Ok(start)
}

/// Applies improving moves until none is left; returns the score after
/// each move.
fn ascend(state: &mut State, skeleton: &Skeleton, cons: &EdgeConstraints) -> Result<Vec<f64>> {
    let mut trace = Vec::new();
    while let Some((m, d)) = state.best_move(skeleton, cons, |_| true)? {
        if !(d > TIE_EPS) {
            break;
        }
        state.apply(m)?;
        trace.push(state.score());
    }
    Ok(trace)
}

fn perturb(state: &mut State, skeleton: &Skeleton, cons: &EdgeConstraints, moves: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    for _ in 0..moves {
        let candidates = state.candidate_moves(skeleton, cons);
        if candidates.is_empty() {
            return Ok(());
        }
        for _ in 0..PERTURB_REDRAWS {
            let m = candidates[rng.random_range(0..candidates.len())];
            if state.is_acyclic_after(m) {
                state.apply(m)?;
                break;
            }
        }
    }
    Ok(())
}

/// Greedy hill climbing from the empty graph (plus whitelisted arrows) with
/// moves restricted to `skeleton`, followed by `cfg.restarts` random
/// perturbations of the best graph, each climbed greedily again.
pub fn hc_search(
    skeleton: &Skeleton,
    scorer: &Scorer,
    cons: &EdgeConstraints,
    cfg: &SearchConfig,
) -> Result<LearnedBn> {
    let start_time = Instant::now();
    let start = check_inputs(skeleton, scorer, cons, cfg)?;
    let evaluated_before = scorer.evaluated();
    let mut state = State::new(scorer, start)?;
    let trajectory = ascend(&mut state, skeleton, cons)?;
    let mut best_arrows = state.arrows.clone();
    let mut best_score = state.score();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.restarts {
        let mut trial = State::new(scorer, best_arrows.clone())?;
        perturb(&mut trial, skeleton, cons, cfg.perturb_edges, &mut rng)?;
        ascend(&mut trial, skeleton, cons)?;
        let s = trial.score();
        if s > best_score + TIE_EPS {
            best_score = s;
            best_arrows = trial.arrows;
        }
    }
    let best = State::new(scorer, best_arrows)?;
    Ok(LearnedBn {
        score: best.score(),
        dag: best.into_dag(),
        local_scores_evaluated: scorer.evaluated() - evaluated_before,
        runtime: start_time.elapsed().as_secs_f64(),
        trajectory,
    })
}

/// Tabu search: always takes the best legal move whose result is not among
/// the last `cfg.tabu_len` visited graphs, even if the score drops, and
/// stops after `cfg.stall_limit` moves without a new best.
pub fn tabu_search(
    skeleton: &Skeleton,
    scorer: &Scorer,
    cons: &EdgeConstraints,
    cfg: &SearchConfig,
) -> Result<LearnedBn> {
    let start_time = Instant::now();
    let start = check_inputs(skeleton, scorer, cons, cfg)?;
    let evaluated_before = scorer.evaluated();
    let mut state = State::new(scorer, start)?;
    let mut tabu: VecDeque<Vec<u64>> = VecDeque::with_capacity(cfg.tabu_len);
    tabu.push_back(state.arrows.to_words());
    let mut best_arrows = state.arrows.clone();
    let mut best_score = state.score();
    let mut trajectory = Vec::new();
    let mut improving = true;
    let mut stall = 0;

    while stall < cfg.stall_limit {
        let Some((m, _)) = state.best_move(skeleton, cons, |m| !tabu.contains(&state.words_after(m)))? else {
            break;
        };
        state.apply(m)?;
        if tabu.len() == cfg.tabu_len {
            tabu.pop_front();
        }
        tabu.push_back(state.arrows.to_words());
        let s = state.score();
        if s > best_score + TIE_EPS {
            best_score = s;
            best_arrows = state.arrows.clone();
            stall = 0;
        } else {
            stall += 1;
            improving = false;
        }
        if improving {
            trajectory.push(s);
        }
    }
    let best = State::new(scorer, best_arrows)?;
    Ok(LearnedBn {
        score: best.score(),
        dag: best.into_dag(),
        local_scores_evaluated: scorer.evaluated() - evaluated_before,
        runtime: start_time.elapsed().as_secs_f64(),
        trajectory,
    })
}
