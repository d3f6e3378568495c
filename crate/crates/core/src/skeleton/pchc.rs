//! PC-style skeleton with heuristic pair ordering.

use std::time::Instant;

use super::{for_each_subset, run_test, SkeletonConfig, SkeletonResult};
use crate::ci::CiTest;
use crate::error::Result;
use crate::graph::Skeleton;

/// PC skeleton used by PCHC.
///
/// Level 0 removes every pair that is not unconditionally associated. At
/// level `k` each ordered adjacent pair `(i, j)` is tested given the
/// `k`-subsets of `adj(i) \ {j}`; the edge goes on the first non-rejection.
/// Pairs are visited weakest unconditional association first and
/// neighbours are enumerated strongest first. Adjacency sets are frozen at
/// the start of each level, so the result does not depend on column order.
pub fn pchc_skeleton<T: CiTest + ?Sized>(tester: &T, cfg: &SkeletonConfig) -> Result<SkeletonResult> {
    cfg.validate()?;
    let start = Instant::now();
    let d = tester.n_vars();
    let ln_alpha = cfg.ln_alpha();
    let mut n_tests = 0;
    let mut stats = vec![0.0; d * d];
    let mut logp = vec![0.0; d * d];
    let mut adj = Skeleton::empty(d);

    for i in 0..d {
        for j in i + 1..d {
            let t = run_test(tester, i, j, &[], &mut n_tests)?;
            stats[i * d + j] = t.statistic;
            stats[j * d + i] = t.statistic;
            logp[i * d + j] = t.log_pvalue;
            logp[j * d + i] = t.log_pvalue;
            if t.rejects(ln_alpha) {
                adj.add_edge(i, j);
            }
        }
    }

    for k in 1..=cfg.max_k {
        let frozen = adj.clone();
        let neighbours: Vec<Vec<usize>> = (0..d)
            .map(|i| {
                let mut nb = frozen.neighbors(i);
                nb.sort_by(|&a, &b| stats[i * d + b].total_cmp(&stats[i * d + a]).then(a.cmp(&b)));
                nb
            })
            .collect();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for i in 0..d {
            if neighbours[i].len() > k {
                pairs.extend(neighbours[i].iter().map(|&j| (i, j)));
            }
        }
        if pairs.is_empty() {
            break;
        }
        pairs.sort_by(|&(a, b), &(c, e)| {
            stats[a * d + b]
                .total_cmp(&stats[c * d + e])
                .then((a, b).cmp(&(c, e)))
        });
        for (i, j) in pairs {
            if !adj.has_edge(i, j) {
                continue;
            }
            let others: Vec<usize> = neighbours[i].iter().copied().filter(|&v| v != j).collect();
            let survived = for_each_subset(&others, k, |z| {
                let t = run_test(tester, i, j, z, &mut n_tests)?;
                Ok(t.rejects(ln_alpha))
            })?;
            if !survived {
                adj.remove_edge(i, j);
            }
        }
    }

    Ok(SkeletonResult {
        skeleton: adj,
        n_tests,
        initial_stats: stats,
        initial_logp: logp,
        runtime: start.elapsed().as_secs_f64(),
    })
}
