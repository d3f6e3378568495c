//! Max-min parents-and-children search without the backward phase.

use super::{for_each_subset, run_test, SkeletonConfig, TargetOutcome};
use crate::ci::{CiTest, TestResult};
use crate::error::Result;

/// Weakest association seen so far for a candidate: the largest log
/// p-value and the smallest statistic over all conditioning sets tried.
#[derive(Clone, Copy, Debug)]
struct MinAssoc {
    max_logp: f64,
    min_stat: f64,
}

impl MinAssoc {
    fn update(&mut self, t: &TestResult) {
        self.max_logp = self.max_logp.max(t.log_pvalue);
        self.min_stat = self.min_stat.min(t.statistic);
    }
}

pub(super) fn mmpc_target<T: CiTest + ?Sized>(
    tester: &T,
    target: usize,
    cfg: &SkeletonConfig,
) -> Result<TargetOutcome> {
    let d = tester.n_vars();
    let ln_alpha = cfg.ln_alpha();
    let mut n_tests = 0;
    let mut first = vec![None; d];
    let mut candidates: Vec<(usize, MinAssoc)> = Vec::new();
    for v in (0..d).filter(|&v| v != target) {
        let t = run_test(tester, target, v, &[], &mut n_tests)?;
        first[v] = Some(t);
        if t.rejects(ln_alpha) {
            candidates.push((
                v,
                MinAssoc {
                    max_logp: t.log_pvalue,
                    min_stat: t.statistic,
                },
            ));
        }
    }

    let mut selected: Vec<usize> = Vec::new();
    let mut z = Vec::with_capacity(cfg.max_k);
    while !candidates.is_empty() {
        // Max-min: the candidate whose weakest association is strongest.
        let best = (0..candidates.len())
            .min_by(|&a, &b| {
                let (va, sa) = candidates[a];
                let (vb, sb) = candidates[b];
                sa.max_logp
                    .total_cmp(&sb.max_logp)
                    .then(sb.min_stat.total_cmp(&sa.min_stat))
                    .then(va.cmp(&vb))
            })
            .expect("non-empty");
        let (newest, _) = candidates.swap_remove(best);
        candidates.sort_by_key(|&(v, _)| v);
        let older: Vec<usize> = selected.clone();
        selected.push(newest);

        // Only conditioning sets that contain the newest member are new.
        let mut kept = Vec::with_capacity(candidates.len());
        for (c, mut assoc) in candidates.drain(..) {
            let mut dependent = true;
            for size in 0..cfg.max_k.min(older.len() + 1) {
                let done = for_each_subset(&older, size, |sub| {
                    z.clear();
                    z.extend_from_slice(sub);
                    z.push(newest);
                    let t = run_test(tester, target, c, &z, &mut n_tests)?;
                    assoc.update(&t);
                    Ok(t.rejects(ln_alpha))
                })?;
                if !done {
                    dependent = false;
                    break;
                }
            }
            if dependent {
                kept.push((c, assoc));
            }
        }
        candidates = kept;
    }
    selected.sort_unstable();
    Ok(TargetOutcome {
        selected,
        n_tests,
        first,
    })
}

/// Selected neighbours of one target and the number of tests used.
pub fn mmpc_forward<T: CiTest + ?Sized>(
    tester: &T,
    target: usize,
    cfg: &SkeletonConfig,
) -> Result<(Vec<usize>, usize)> {
    let o = mmpc_target(tester, target, cfg)?;
    Ok((o.selected, o.n_tests))
}
