//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use fedhc_core::data::{CategoricalDataset, ContinuousDataset};
use fedhc_core::graph::{BitMatrix, Cpdag, Dag, PairState};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n x d` data with a random mixing matrix, so columns are correlated.
pub fn mixed_normal(n: usize, d: usize, rng: &mut ChaCha8Rng) -> ContinuousDataset {
    let mix: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let mut cols = vec![vec![0.0; n]; d];
    for (j, col) in cols.iter_mut().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v = (0..d).map(|k| noise[i * d + k] * mix[k * d + j]).sum::<f64>() + noise[i * d + j];
        }
    }
    ContinuousDataset::from_columns(ContinuousDataset::default_names(d), cols).unwrap()
}

/// Correlation of the least-squares residuals of `x_i` and `x_j` on `x_z`
/// with intercept, solved by SVD on the raw data.
pub fn residual_partial_correlation(data: &ContinuousDataset, i: usize, j: usize, z: &[usize]) -> f64 {
    let n = data.n_rows();
    let design = DMatrix::from_fn(n, z.len() + 1, |r, c| if c == 0 { 1.0 } else { data.get(r, z[c - 1]) });
    let svd = design.clone().svd(true, true);
    let resid = |col: usize| {
        let y = DVector::from_column_slice(data.column(col));
        let beta = svd.solve(&y, 1e-14).unwrap();
        y - &design * beta
    };
    let (ri, rj) = (resid(i), resid(j));
    ri.dot(&rj) / (ri.norm() * rj.norm())
}

/// Every DAG on `n` nodes.
pub fn all_dags(n: usize) -> Vec<Dag> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let total = 3usize.pow(pairs.len() as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let mut m = BitMatrix::new(n);
        for &(a, b) in &pairs {
            match c % 3 {
                1 => m.set(a, b, true),
                2 => m.set(b, a, true),
                _ => {}
            }
            c /= 3;
        }
        if let Ok(d) = Dag::from_matrix(m) {
            out.push(d);
        }
    }
    out
}

/// Equivalence-class key: skeleton plus v-structures.
pub fn class_key(d: &Dag) -> (Vec<(usize, usize)>, Vec<(usize, usize, usize)>) {
    (d.skeleton().edges(), d.v_structures())
}

/// CPDAG of every DAG on `n` nodes by grouping the whole space into
/// classes and keeping an edge directed only if all members agree.
pub fn enumerated_cpdags(n: usize) -> Vec<(Dag, Cpdag)> {
    let dags = all_dags(n);
    let mut classes: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (k, d) in dags.iter().enumerate() {
        classes.entry(class_key(d)).or_default().push(k);
    }
    let mut out = Vec::new();
    for members in classes.values() {
        let first = &dags[members[0]];
        let mut directed = BTreeSet::new();
        let mut undirected = BTreeSet::new();
        for (a, b) in first.skeleton().edges() {
            let forward = members.iter().all(|&k| dags[k].has_arrow(a, b));
            let backward = members.iter().all(|&k| dags[k].has_arrow(b, a));
            if forward {
                directed.insert((a, b));
            } else if backward {
                directed.insert((b, a));
            } else {
                undirected.insert((a, b));
            }
        }
        let cp = Cpdag::new(n, directed, undirected).unwrap();
        for &k in members {
            out.push((dags[k].clone(), cp.clone()));
        }
    }
    out
}

/// Encodes a partially directed graph as one base-4 digit per pair.
pub fn pair_code(g: &Cpdag) -> usize {
    let n = g.n_nodes();
    let mut code = 0;
    for a in 0..n {
        for b in a + 1..n {
            let s = match g.pair_state(a, b) {
                PairState::Absent => 0,
                PairState::Undirected => 1,
                PairState::Forward => 2,
                PairState::Backward => 3,
            };
            code = code * 4 + s;
        }
    }
    code
}

/// Minimal number of unit edits (insert, delete, re-orient one pair) from
/// `start` to every partially directed graph on `n` nodes, by BFS.
pub fn edit_distances(n: usize, start: usize) -> Vec<u32> {
    let pairs = n * (n - 1) / 2;
    let total = 4usize.pow(pairs as u32);
    let mut dist = vec![u32::MAX; total];
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(g) = queue.pop_front() {
        for p in 0..pairs {
            let place = 4usize.pow(p as u32);
            let cur = (g / place) % 4;
            for s in 0..4 {
                if s == cur {
                    continue;
                }
                // Any state change of one pair is a single edit: insertion,
                // deletion or orientation change.
                let h = g - cur * place + s * place;
                if dist[h] == u32::MAX {
                    dist[h] = dist[g] + 1;
                    queue.push_back(h);
                }
            }
        }
    }
    dist
}

/// Random categorical data on `d` columns with `levels[k]` levels each.
pub fn random_codes(n: usize, levels: &[u32], rng: &mut ChaCha8Rng) -> CategoricalDataset {
    loop {
        let cols: Vec<Vec<u32>> = levels
            .iter()
            .map(|&l| (0..n).map(|_| rng.random_range(0..l)).collect())
            .collect();
        let names = (0..levels.len()).map(|k| format!("C{k}")).collect();
        if let Ok(d) = CategoricalDataset::new(n, names, levels.to_vec(), cols.concat()) {
            return d;
        }
    }
}

/// Random DAG that is Markov equivalent to `dag`, by reversing random
/// covered arrows.
pub fn equivalent_dag(dag: &Dag, steps: usize, rng: &mut ChaCha8Rng) -> Dag {
    let mut cur = dag.clone();
    for _ in 0..steps {
        let covered: Vec<(usize, usize)> = cur
            .arrows()
            .into_iter()
            .filter(|&(x, y)| {
                let mut px = cur.parents(x);
                px.push(x);
                px.sort_unstable();
                px == cur.parents(y)
            })
            .collect();
        if covered.is_empty() {
            break;
        }
        let (x, y) = covered[rng.random_range(0..covered.len())];
        let mut arrows: Vec<(usize, usize)> = cur.arrows().into_iter().filter(|&a| a != (x, y)).collect();
        arrows.push((y, x));
        cur = Dag::from_arrows(cur.n_nodes(), &arrows).unwrap();
    }
    cur
}
