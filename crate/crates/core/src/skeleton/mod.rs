//! Phase one: edge discovery with conditional-independence tests.

mod fbed;
mod mmhc;
mod pchc;

use std::time::Instant;

use rayon::prelude::*;

pub use fbed::{fbed_backward, fbed_forward, FbedOutcome};
pub use mmhc::mmpc_forward;

use crate::ci::{CiTest, TestResult};
use crate::error::{Error, Result};
use crate::graph::Skeleton;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkeletonAlgorithm {
    Fedhc,
    Mmhc,
    Pchc,
}

impl SkeletonAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            SkeletonAlgorithm::Fedhc => "fedhc",
            SkeletonAlgorithm::Mmhc => "mmhc",
            SkeletonAlgorithm::Pchc => "pchc",
        }
    }
}

impl std::str::FromStr for SkeletonAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedhc" => Ok(Self::Fedhc),
            "mmhc" => Ok(Self::Mmhc),
            "pchc" => Ok(Self::Pchc),
            other => Err(Error::Precondition(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkeletonConfig {
    pub alpha: f64,
    /// Largest conditioning set tried by MMHC and PCHC.
    pub max_k: usize,
    /// Extra FBED sweeps over previously dropped variables.
    pub fbed_runs: usize,
    /// Run FBED's backward phase after the forward phase.
    pub with_backward: bool,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            max_k: 3,
            fbed_runs: 0,
            with_backward: false,
        }
    }
}

impl SkeletonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Precondition(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.max_k < 1 {
            return Err(Error::Precondition("max_k must be at least 1".into()));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn ln_alpha(&self) -> f64 {
        self.alpha.ln()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonResult {
    pub skeleton: Skeleton,
    pub n_tests: usize,
    /// Unconditional statistics, `D x D` row-major; zero on the diagonal.
    pub initial_stats: Vec<f64>,
    /// Unconditional log p-values, `D x D` row-major; zero on the diagonal.
    pub initial_logp: Vec<f64>,
    pub runtime: f64,
}

impl SkeletonResult {
    pub fn n_vars(&self) -> usize {
        self.skeleton.n_nodes()
    }

    pub fn initial_stat(&self, i: usize, j: usize) -> f64 {
        self.initial_stats[i * self.n_vars() + j]
    }

    pub fn initial_logp(&self, i: usize, j: usize) -> f64 {
        self.initial_logp[i * self.n_vars() + j]
    }
}

/// Runs one test, mapping numerically uninformative outcomes to "do not
/// reject independence", and bumps the caller's counter.
pub(crate) fn run_test<T: CiTest + ?Sized>(
    tester: &T,
    x: usize,
    y: usize,
    z: &[usize],
    counter: &mut usize,
) -> Result<TestResult> {
    *counter += 1;
    match tester.test(x, y, z) {
        Ok(t) => Ok(t),
        Err(Error::SingularConditioningSet)
        | Err(Error::InsufficientSample { .. })
        | Err(Error::DegenerateTable) => Ok(TestResult::UNINFORMATIVE),
        Err(e) => Err(e),
    }
}

/// Per-target neighbourhood search shared by FEDHC and MMHC.
struct TargetOutcome {
    selected: Vec<usize>,
    n_tests: usize,
    /// Unconditional test of the target against each variable.
    first: Vec<Option<TestResult>>,
}

/// Runs `search` for every target, keeps `i - j` only if each side selected
/// the other, and gathers the unconditional statistics.
fn and_rule_skeleton<T, F>(tester: &T, search: F) -> Result<SkeletonResult>
where
    T: CiTest + ?Sized,
    F: Fn(usize) -> Result<TargetOutcome> + Sync,
{
    let start = Instant::now();
    let d = tester.n_vars();
    let outcomes: Vec<TargetOutcome> = (0..d)
        .into_par_iter()
        .map(&search)
        .collect::<Result<_>>()?;
    let mut chosen = vec![false; d * d];
    for (i, o) in outcomes.iter().enumerate() {
        for &j in &o.selected {
            chosen[i * d + j] = true;
        }
    }
    let mut skeleton = Skeleton::empty(d);
    let mut initial_stats = vec![0.0; d * d];
    let mut initial_logp = vec![0.0; d * d];
    for i in 0..d {
        for j in i + 1..d {
            if chosen[i * d + j] && chosen[j * d + i] {
                skeleton.add_edge(i, j);
            }
            // Taken from the lower-indexed target so both triangles agree.
            if let Some(t) = outcomes[i].first[j] {
                initial_stats[i * d + j] = t.statistic;
                initial_stats[j * d + i] = t.statistic;
                initial_logp[i * d + j] = t.log_pvalue;
                initial_logp[j * d + i] = t.log_pvalue;
            }
        }
    }
    Ok(SkeletonResult {
        skeleton,
        n_tests: outcomes.iter().map(|o| o.n_tests).sum(),
        initial_stats,
        initial_logp,
        runtime: start.elapsed().as_secs_f64(),
    })
}

/// FEDHC skeleton: FBED forward selection for every variable followed by
/// the AND rule.
pub fn fedhc_skeleton<T: CiTest + ?Sized>(tester: &T, cfg: &SkeletonConfig) -> Result<SkeletonResult> {
    cfg.validate()?;
    and_rule_skeleton(tester, |target| {
        let fwd = fbed_forward(tester, target, cfg)?;
        let mut n_tests = fwd.n_tests;
        let selected = if cfg.with_backward {
            let (kept, used) = fbed_backward(tester, target, &fwd.selected, cfg)?;
            n_tests += used;
            kept
        } else {
            fwd.selected
        };
        Ok(TargetOutcome {
            selected,
            n_tests,
            first: fwd.first_round,
        })
    })
}

/// MMHC-2 skeleton: max-min forward selection per variable (no backward
/// phase) followed by the AND rule.
pub fn mmhc_skeleton<T: CiTest + ?Sized>(tester: &T, cfg: &SkeletonConfig) -> Result<SkeletonResult> {
    cfg.validate()?;
    and_rule_skeleton(tester, |target| mmhc::mmpc_target(tester, target, cfg))
}

pub use pchc::pchc_skeleton;

pub fn learn_skeleton<T: CiTest + ?Sized>(
    algorithm: SkeletonAlgorithm,
    tester: &T,
    cfg: &SkeletonConfig,
) -> Result<SkeletonResult> {
    match algorithm {
        SkeletonAlgorithm::Fedhc => fedhc_skeleton(tester, cfg),
        SkeletonAlgorithm::Mmhc => mmhc_skeleton(tester, cfg),
        SkeletonAlgorithm::Pchc => pchc_skeleton(tester, cfg),
    }
}

/// Lexicographic `k`-subsets of `items`, visited until `f` returns `false`.
/// Returns whether the enumeration ran to completion.
pub(crate) fn for_each_subset(items: &[usize], k: usize, mut f: impl FnMut(&[usize]) -> Result<bool>) -> Result<bool> {
    let m = items.len();
    if k > m {
        return Ok(true);
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut buf = vec![0usize; k];
    loop {
        for (b, &i) in buf.iter_mut().zip(&idx) {
            *b = items[i];
        }
        if !f(&buf)? {
            return Ok(false);
        }
        // Advance to the next combination.
        let mut p = k;
        loop {
            if p == 0 {
                return Ok(true);
            }
            p -= 1;
            if idx[p] != p + m - k {
                break;
            }
            if p == 0 {
                return Ok(true);
            }
        }
        idx[p] += 1;
        for q in p + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}
