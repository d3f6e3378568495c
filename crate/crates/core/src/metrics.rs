//! Equivalence classes, structural Hamming distance, skeleton accuracy and
//! the simulation benchmark.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Cpdag, Dag, EdgeConstraints, Skeleton};
use crate::pipeline::{learn, LearnConfig};
use crate::simgen::{random_dag, sample_gaussian, GaussianBn};
use crate::skeleton::{SkeletonAlgorithm, SkeletonConfig};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Label {
    Unknown,
    Compelled,
    Reversible,
}

/// Essential graph of `dag`: compelled arrows stay directed, reversible
/// ones become undirected (Chickering's edge ordering and labelling).
pub fn dag_to_cpdag(dag: &Dag) -> Cpdag {
    let n = dag.n_nodes();
    let order = dag.topological_order();
    let mut pos = vec![0usize; n];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    // Edges into lower nodes first; within a node, highest parent first.
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(dag.n_arrows());
    for &y in &order {
        let mut pa = dag.parents(y);
        pa.sort_by_key(|&x| std::cmp::Reverse(pos[x]));
        edges.extend(pa.into_iter().map(|x| (x, y)));
    }
    let index: HashMap<(usize, usize), usize> = edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let mut label = vec![Label::Unknown; edges.len()];

    let label_into = |label: &mut [Label], y: usize, to: Label, only_unknown: bool| {
        for x in dag.parents(y) {
            let k = index[&(x, y)];
            if !only_unknown || label[k] == Label::Unknown {
                label[k] = to;
            }
        }
    };

    while let Some(k) = label.iter().position(|&l| l == Label::Unknown) {
        let (x, y) = edges[k];
        let mut done = false;
        for w in dag.parents(x) {
            if label[index[&(w, x)]] != Label::Compelled {
                continue;
            }
            if !dag.has_arrow(w, y) {
                label_into(&mut label, y, Label::Compelled, false);
                done = true;
                break;
            }
            label[index[&(w, y)]] = Label::Compelled;
        }
        if done {
            continue;
        }
        let other_parent = dag.parents(y).into_iter().any(|z| z != x && !dag.has_arrow(z, x));
        let to = if other_parent { Label::Compelled } else { Label::Reversible };
        label[k] = to;
        label_into(&mut label, y, to, true);
    }

    let mut directed = Vec::new();
    let mut undirected = Vec::new();
    for (&(x, y), l) in edges.iter().zip(&label) {
        if *l == Label::Compelled {
            directed.push((x, y));
        } else {
            undirected.push((x.min(y), x.max(y)));
        }
    }
    Cpdag::new(n, directed, undirected).expect("labelling yields a valid graph")
}

/// Number of node pairs whose state (absent, undirected, or directed either
/// way) differs; each differing pair needs exactly one edit.
pub fn shd(estimated: &Cpdag, truth: &Cpdag) -> Result<usize> {
    let n = truth.n_nodes();
    if estimated.n_nodes() != n {
        return Err(Error::Precondition(format!(
            "graphs have {} and {n} nodes",
            estimated.n_nodes()
        )));
    }
    let mut count = 0;
    for a in 0..n {
        for b in a + 1..n {
            if estimated.pair_state(a, b) != truth.pair_state(a, b) {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkeletonMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision and recall over undirected edges. An empty estimate has
/// precision 1 and an empty truth has recall 1.
pub fn skeleton_metrics(estimated: &Skeleton, truth: &Skeleton) -> Result<SkeletonMetrics> {
    if estimated.n_nodes() != truth.n_nodes() {
        return Err(Error::Precondition("skeletons have different node sets".into()));
    }
    let est = estimated.edges();
    let tp = est.iter().filter(|&&(a, b)| truth.has_edge(a, b)).count() as f64;
    let precision = if est.is_empty() { 1.0 } else { tp / est.len() as f64 };
    let recall = if truth.n_edges() == 0 { 1.0 } else { tp / truth.n_edges() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(SkeletonMetrics { precision, recall, f1 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub algorithm: String,
    #[serde(rename = "D")]
    pub d: usize,
    pub avg_neighbors: f64,
    pub n: usize,
    pub seed: u64,
    pub shd: usize,
    pub n_tests: usize,
    pub skeleton_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchScenario {
    pub d: usize,
    pub avg_neighbors: f64,
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub algorithms: Vec<SkeletonAlgorithm>,
    pub seed: u64,
    pub alpha: f64,
    pub restarts: usize,
}

impl Default for BenchScenario {
    fn default() -> Self {
        Self {
            d: 20,
            avg_neighbors: 3.0,
            ns: vec![1000],
            replicates: 1,
            algorithms: vec![SkeletonAlgorithm::Fedhc],
            seed: 0,
            alpha: 0.05,
            restarts: 10,
        }
    }
}

/// Independent seed for stream `k` of a replicate (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ground truth of replicate `seed`: a random DAG with random coefficients.
pub fn bench_network(scenario: &BenchScenario, seed: u64) -> Result<GaussianBn> {
    let dag = random_dag(scenario.d, scenario.avg_neighbors, derive_seed(seed, 0))?;
    Ok(GaussianBn::random(dag, derive_seed(seed, 1)))
}

/// Runs every algorithm on every sample size for each replicate; replicate
/// `r` uses seed `scenario.seed + r`. `on_record` sees records as they
/// finish; the returned list is sorted by algorithm, `n` and seed.
pub fn run_benchmark(
    scenario: &BenchScenario,
    on_record: impl Fn(&BenchRecord) + Sync,
) -> Result<Vec<BenchRecord>> {
    if scenario.replicates == 0 || scenario.ns.is_empty() || scenario.algorithms.is_empty() {
        return Err(Error::Precondition("empty benchmark scenario".into()));
    }
    let records: Vec<Vec<BenchRecord>> = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = scenario.seed.wrapping_add(r as u64);
            let bn = bench_network(scenario, seed)?;
            let truth = dag_to_cpdag(bn.dag());
            let mut out = Vec::new();
            for &n in &scenario.ns {
                let data = Dataset::Continuous(sample_gaussian(&bn, n, derive_seed(seed, 2 + n as u64))?);
                for &algorithm in &scenario.algorithms {
                    let cfg = LearnConfig {
                        algorithm,
                        skeleton: SkeletonConfig {
                            alpha: scenario.alpha,
                            ..SkeletonConfig::default()
                        },
                        search: crate::score::SearchConfig {
                            restarts: scenario.restarts,
                            seed,
                            ..Default::default()
                        },
                        ..LearnConfig::default()
                    };
                    let learned = learn(&data, &EdgeConstraints::default(), &cfg)?;
                    let rec = BenchRecord {
                        algorithm: algorithm.name().to_string(),
                        d: scenario.d,
                        avg_neighbors: scenario.avg_neighbors,
                        n,
                        seed,
                        shd: shd(&dag_to_cpdag(&learned.dag), &truth)?,
                        n_tests: learned.n_tests(),
                        skeleton_seconds: learned.skeleton_seconds,
                        total_seconds: learned.total_seconds.max(learned.skeleton_seconds),
                    };
                    on_record(&rec);
                    out.push(rec);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<BenchRecord> = records.into_iter().flatten().collect();
    all.sort_by(|a, b| (&a.algorithm, a.n, a.seed).cmp(&(&b.algorithm, b.n, b.seed)));
    Ok(all)
}

/// CSV writer for benchmark records; the header is written with the first
/// record.
pub struct BenchCsv<W: Write> {
    inner: Mutex<csv::Writer<W>>,
}

impl<W: Write> BenchCsv<W> {
    pub fn new(w: W) -> Self {
        Self {
            inner: Mutex::new(csv::Writer::from_writer(w)),
        }
    }

    pub fn write(&self, rec: &BenchRecord) -> Result<()> {
        let mut w = self.inner.lock().expect("csv writer poisoned");
        w.serialize(rec).map_err(|e| Error::Csv {
            path: "<benchmark output>".into(),
            message: e.to_string(),
        })?;
        w.flush().map_err(|source| Error::Io {
            path: "<benchmark output>".into(),
            source,
        })
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .expect("csv writer poisoned")
            .into_inner()
            .map_err(|e| Error::Csv {
                path: "<benchmark output>".into(),
                message: e.to_string(),
            })
    }
}
