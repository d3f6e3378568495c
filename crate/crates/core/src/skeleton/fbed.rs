//! Forward selection with early dropping.

use super::{run_test, SkeletonConfig};
use crate::ci::{CiTest, TestResult};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct FbedOutcome {
    /// Selected variables in order of admission.
    pub selected: Vec<usize>,
    pub n_tests: usize,
    /// Unconditional test of the target against each variable (first sweep,
    /// first round). `None` for the target itself.
    pub first_round: Vec<Option<TestResult>>,
}

/// `a` beats `b` when it has the larger statistic, then the smaller log
/// p-value, then the smaller index.
fn better(a: (usize, &TestResult), b: (usize, &TestResult)) -> bool {
    let (ia, ta) = a;
    let (ib, tb) = b;
    match ta.statistic.total_cmp(&tb.statistic) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => match ta.log_pvalue.total_cmp(&tb.log_pvalue) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => ia < ib,
        },
    }
}

/// Forward phase of FBED for one target.
///
/// Each round tests every surviving candidate given the current selection,
/// drops the non-significant ones for the rest of the sweep and admits the
/// strongest survivor. A sweep ends when no candidate survives. With
/// `cfg.fbed_runs > 0` further sweeps revisit every unselected variable,
/// stopping early once a sweep adds nothing.
pub fn fbed_forward<T: CiTest + ?Sized>(
    tester: &T,
    target: usize,
    cfg: &SkeletonConfig,
) -> Result<FbedOutcome> {
    let d = tester.n_vars();
    let ln_alpha = cfg.ln_alpha();
    let mut n_tests = 0;
    let mut selected: Vec<usize> = Vec::new();
    let mut in_selected = vec![false; d];
    let mut first_round: Vec<Option<TestResult>> = vec![None; d];

    for sweep in 0..=cfg.fbed_runs {
        let before = selected.len();
        let mut pool: Vec<usize> = (0..d).filter(|&v| v != target && !in_selected[v]).collect();
        let mut first = sweep == 0;
        while !pool.is_empty() {
            let mut survivors: Vec<(usize, TestResult)> = Vec::with_capacity(pool.len());
            for &v in &pool {
                let t = run_test(tester, target, v, &selected, &mut n_tests)?;
                if first {
                    first_round[v] = Some(t);
                }
                if t.rejects(ln_alpha) {
                    survivors.push((v, t));
                }
            }
            first = false;
            let Some(best) = survivors
                .iter()
                .enumerate()
                .fold(None::<usize>, |acc, (k, (v, t))| match acc {
                    Some(b) if !better((*v, t), (survivors[b].0, &survivors[b].1)) => Some(b),
                    _ => Some(k),
                })
            else {
                break;
            };
            let winner = survivors[best].0;
            selected.push(winner);
            in_selected[winner] = true;
            pool = survivors
                .into_iter()
                .map(|(v, _)| v)
                .filter(|&v| v != winner)
                .collect();
        }
        if selected.len() == before {
            break;
        }
    }
    Ok(FbedOutcome {
        selected,
        n_tests,
        first_round,
    })
}

/// Backward phase: repeatedly drops the least significant member whose
/// test given the rest of the set is not significant. Returns the pruned
/// set (admission order preserved) and the number of tests run.
pub fn fbed_backward<T: CiTest + ?Sized>(
    tester: &T,
    target: usize,
    selected: &[usize],
    cfg: &SkeletonConfig,
) -> Result<(Vec<usize>, usize)> {
    let ln_alpha = cfg.ln_alpha();
    let mut kept = selected.to_vec();
    let mut n_tests = 0;
    let mut rest = Vec::with_capacity(kept.len());
    loop {
        let mut worst: Option<(usize, f64)> = None;
        for (k, &v) in kept.iter().enumerate() {
            rest.clear();
            rest.extend(kept.iter().copied().filter(|&u| u != v));
            let t = run_test(tester, target, v, &rest, &mut n_tests)?;
            if !t.rejects(ln_alpha) && worst.is_none_or(|(_, lp)| t.log_pvalue > lp) {
                worst = Some((k, t.log_pvalue));
            }
        }
        match worst {
            Some((k, _)) => {
                kept.remove(k);
            }
            None => return Ok((kept, n_tests)),
        }
    }
}
