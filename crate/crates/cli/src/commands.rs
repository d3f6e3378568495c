use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use fedhc_core::ci::{correlation_matrix, CorrelationKind, CorrelationMatrix, NullReference};
use fedhc_core::data::{load_csv, Dataset, LoadMode};
use fedhc_core::graph::{graph_to_dot, EdgeConstraints, GraphJson};
use fedhc_core::metrics::{bench_network, dag_to_cpdag, derive_seed, run_benchmark, BenchCsv, BenchScenario};
use fedhc_core::pipeline::{learn as run_learn, learn_with_correlation, LearnConfig, LearnOutput, SearchMethod, TestMethod};
use fedhc_core::robust::rmcd_outliers;
use fedhc_core::score::{ScoreSpec, SearchConfig};
use fedhc_core::simgen::{inject_outliers, load_categorical_bn, sample_categorical, sample_gaussian};
use fedhc_core::skeleton::{SkeletonAlgorithm, SkeletonConfig};
use fedhc_core::Error;
use serde_json::json;

use crate::{
    AlgorithmArg, BenchArgs, CategoricalTestArg, Failure, LearnArgs, MethodArg, NullArg, OutlierArgs, SearchArg,
    SimulateArgs,
};

/// Stream index of the outlier injection in `simulate`.
const OUTLIER_STREAM: u64 = u64::MAX;

impl From<AlgorithmArg> for SkeletonAlgorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Fedhc => SkeletonAlgorithm::Fedhc,
            AlgorithmArg::Pchc => SkeletonAlgorithm::Pchc,
            AlgorithmArg::Mmhc => SkeletonAlgorithm::Mmhc,
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::from(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

/// Standard output, or the file at `path` when given.
fn output(path: Option<&Path>) -> Result<Box<dyn Write + Send>, Failure> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout()),
    })
}

/// Reads a `from,to` CSV of variable names into index pairs.
pub fn read_arrow_file(path: &Path, data: &Dataset) -> Result<Vec<(usize, usize)>, Failure> {
    let shown = path.display();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::input(format!("{shown}: {e}")))?;
    let headers = rdr.headers().map_err(|e| Failure::input(format!("{shown}: {e}")))?;
    if headers.len() != 2 || &headers[0] != "from" || &headers[1] != "to" {
        return Err(Failure::input(format!("{shown}: expected the header `from,to`")));
    }
    let mut arrows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Failure::input(format!("{shown}: {e}")))?;
        let index = |col: usize| {
            data.index_of(&rec[col]).ok_or_else(|| {
                let column = if col == 0 { "from" } else { "to" };
                Failure::input(format!("{shown}: row {}, column `{column}`: unknown variable `{}`", row + 1, &rec[col]))
            })
        };
        arrows.push((index(0)?, index(1)?));
    }
    Ok(arrows)
}

fn learn_config(args: &LearnArgs) -> Result<LearnConfig, Failure> {
    let method = match (args.method, args.ci_test) {
        (MethodArg::Pearson, _) => TestMethod::Pearson,
        (MethodArg::Spearman, _) => TestMethod::Spearman,
        (MethodArg::Cat, CategoricalTestArg::G2) => TestMethod::G2,
        (MethodArg::Cat, CategoricalTestArg::X2) => TestMethod::X2,
    };
    let score = args.score.as_deref().map(str::parse::<ScoreSpec>).transpose()?;
    Ok(LearnConfig {
        algorithm: args.algorithm.into(),
        method,
        null_ref: match args.null_ref {
            NullArg::Normal => NullReference::Normal,
            NullArg::T => NullReference::StudentT,
        },
        skeleton: SkeletonConfig {
            alpha: args.alpha,
            max_k: args.max_k,
            fbed_runs: args.fbed_runs,
            with_backward: args.backward,
        },
        score,
        search_method: match args.search {
            SearchArg::Hc => SearchMethod::HillClimbing,
            SearchArg::Tabu => SearchMethod::Tabu,
        },
        search: SearchConfig {
            restarts: args.restart,
            seed: args.seed,
            ..SearchConfig::default()
        },
        robust: args.robust,
    })
}

fn correlation_kind(method: TestMethod) -> CorrelationKind {
    if method == TestMethod::Spearman {
        CorrelationKind::Spearman
    } else {
        CorrelationKind::Pearson
    }
}

pub fn learn(args: &LearnArgs) -> Result<(), Failure> {
    let cfg = learn_config(args)?;
    let mode = if args.method == MethodArg::Cat {
        LoadMode::Categorical
    } else {
        LoadMode::Continuous
    };
    let data = load_csv(&args.input, mode)?;
    let mut blacklist = Vec::new();
    let mut whitelist = Vec::new();
    if let Some(p) = &args.blacklist {
        blacklist = read_arrow_file(p, &data)?;
    }
    if let Some(p) = &args.whitelist {
        whitelist = read_arrow_file(p, &data)?;
    }
    let constraints = EdgeConstraints::new(blacklist, whitelist);

    let precomputed = match (&data, &args.corr, &args.save_corr) {
        (Dataset::Continuous(_), Some(path), _) => {
            Some(Arc::new(CorrelationMatrix::read_csv(path, correlation_kind(cfg.method))?))
        }
        (Dataset::Continuous(d), None, Some(path)) => {
            let corr = correlation_matrix(d, correlation_kind(cfg.method));
            corr.write_csv(path)?;
            // With outlier removal the matrix is recomputed on the kept rows.
            (!cfg.robust).then(|| Arc::new(corr))
        }
        (Dataset::Categorical(_), Some(_), _) | (Dataset::Categorical(_), _, Some(_)) => {
            return Err(Failure::input("correlation matrices need continuous data"));
        }
        _ => None,
    };
    let out = match (&data, precomputed) {
        (Dataset::Continuous(d), Some(corr)) => learn_with_correlation(d, corr, &constraints, &cfg)?,
        _ => run_learn(&data, &constraints, &cfg)?,
    };
    check_output(&out, &constraints)?;

    let names = data.names();
    if let Some(p) = &args.out_json {
        GraphJson::from_graph(&out.dag, names).write(p)?;
    }
    if let Some(p) = &args.out_dot {
        std::fs::write(p, graph_to_dot(&out.dag, names)).map_err(|e| io_failure(p, e))?;
    }
    if let Some(p) = &args.report {
        let report = learn_report(args, &data, &out);
        let text = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
        std::fs::write(p, text).map_err(|e| io_failure(p, e))?;
    }
    print_summary(&data, &out);
    Ok(())
}

/// Re-checks the returned graph against the constraints it was asked to honour.
fn check_output(out: &LearnOutput, constraints: &EdgeConstraints) -> Result<(), Failure> {
    let breach = |message: String| Failure { code: 4, message };
    for &(a, b) in &constraints.blacklist {
        if out.dag.has_arrow(a, b) {
            return Err(breach(format!("learned graph contains forbidden arrow ({a}, {b})")));
        }
    }
    for &(a, b) in &constraints.whitelist {
        if !out.dag.has_arrow(a, b) {
            return Err(breach(format!("learned graph lacks required arrow ({a}, {b})")));
        }
    }
    Ok(())
}

fn learn_report(args: &LearnArgs, data: &Dataset, out: &LearnOutput) -> serde_json::Value {
    let names = data.names();
    let arrows: Vec<[&str; 2]> = out
        .dag
        .arrows()
        .into_iter()
        .map(|(a, b)| [names[a].as_str(), names[b].as_str()])
        .collect();
    json!({
        "input": args.input.display().to_string(),
        "algorithm": SkeletonAlgorithm::from(args.algorithm).name(),
        "alpha": args.alpha,
        "seed": args.seed,
        "rows": data.n_rows(),
        "variables": data.n_vars(),
        "rows_used": out.rows_used,
        "removed_rows": out.removed_rows.len(),
        "removed_row_indices": out.removed_rows,
        "score_name": out.score_name,
        "score": out.score,
        "n_tests": out.n_tests(),
        "local_scores_evaluated": out.local_scores_evaluated,
        "skeleton_edges": out.skeleton.skeleton.n_edges(),
        "arrows": arrows,
        "runtime": {
            "outliers_seconds": out.outlier_seconds,
            "skeleton_seconds": out.skeleton_seconds,
            "search_seconds": out.search_seconds,
            "total_seconds": out.total_seconds,
        },
    })
}

fn print_summary(data: &Dataset, out: &LearnOutput) {
    let names = data.names();
    println!("variables: {}  rows used: {}/{}", data.n_vars(), out.rows_used, data.n_rows());
    if !out.removed_rows.is_empty() {
        println!("outliers removed: {}", out.removed_rows.len());
    }
    println!(
        "skeleton edges: {}  tests: {}  arrows: {}",
        out.skeleton.skeleton.n_edges(),
        out.n_tests(),
        out.dag.n_arrows()
    );
    println!("score ({}): {:.4}", out.score_name, out.score);
    println!(
        "runtime: outliers {:.3}s, skeleton {:.3}s, search {:.3}s, total {:.3}s",
        out.outlier_seconds, out.skeleton_seconds, out.search_seconds, out.total_seconds
    );
    for (a, b) in out.dag.arrows() {
        println!("  {} -> {}", names[a], names[b]);
    }
}

pub fn outliers(args: &OutlierArgs) -> Result<(), Failure> {
    let Dataset::Continuous(data) = load_csv(&args.input, LoadMode::Continuous)? else {
        return Err(Failure::input("outlier detection needs continuous data"));
    };
    let report = rmcd_outliers(&data, args.seed)?;
    let mut w = output(args.out.as_deref())?;
    let shown = args.out.as_deref().unwrap_or(Path::new("<stdout>"));
    let write_all = |w: &mut dyn Write| -> io::Result<()> {
        writeln!(w, "index,distance,weight,flagged")?;
        for i in 0..report.n_rows() {
            writeln!(w, "{i},{:?},{},{}", report.distances[i], report.weights[i], report.is_outlier(i))?;
        }
        w.flush()
    };
    write_all(&mut w).map_err(|e| io_failure(shown, e))?;
    if args.out.is_some() {
        println!("rows: {}  flagged: {}", report.n_rows(), report.outlier_indices.len());
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    if let Some(net) = &args.network {
        let bn = load_categorical_bn(net)?;
        let data = sample_categorical(&bn, args.n, args.seed)?;
        data.write_csv(&args.out_data)?;
        write_truth(args, bn.dag(), bn.names())?;
        println!("sampled {} rows of {} discrete variables", args.n, bn.names().len());
        return Ok(());
    }
    let scenario = BenchScenario {
        d: args.d,
        avg_neighbors: args.avg_neighbors,
        ..BenchScenario::default()
    };
    let bn = bench_network(&scenario, args.seed)?;
    // Same stream as the benchmark, so `bench` runs can be reproduced from files.
    let mut data = sample_gaussian(&bn, args.n, derive_seed(args.seed, 2 + args.n as u64))?;
    let mut flagged = 0;
    if let Some(fraction) = args.outliers {
        let (dirty, labels) = inject_outliers(&data, fraction, args.magnitude, derive_seed(args.seed, OUTLIER_STREAM))?;
        data = dirty;
        flagged = labels.iter().filter(|&&l| l).count();
        if let Some(p) = &args.out_labels {
            let mut w = create(p)?;
            let write_all = |w: &mut BufWriter<File>| -> io::Result<()> {
                writeln!(w, "index,outlier")?;
                for (i, l) in labels.iter().enumerate() {
                    writeln!(w, "{i},{l}")?;
                }
                w.flush()
            };
            write_all(&mut w).map_err(|e| io_failure(p, e))?;
        }
    }
    data.write_csv(&args.out_data)?;
    write_truth(args, bn.dag(), data.names())?;
    println!(
        "sampled {} rows of {} variables; true arrows: {}; outlier rows: {flagged}",
        args.n,
        args.d,
        bn.dag().n_arrows()
    );
    Ok(())
}

fn write_truth(args: &SimulateArgs, dag: &fedhc_core::graph::Dag, names: &[String]) -> Result<(), Failure> {
    if let Some(p) = &args.out_dag {
        GraphJson::from_graph(dag, names).write(p)?;
    }
    if let Some(p) = &args.out_cpdag {
        GraphJson::from_graph(&dag_to_cpdag(dag), names).write(p)?;
    }
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<(), Failure> {
    let scenario = BenchScenario {
        d: args.d,
        avg_neighbors: args.avg_neighbors,
        ns: args.n.clone(),
        replicates: args.replicates,
        algorithms: args.algorithms.iter().map(|&a| a.into()).collect(),
        seed: args.seed,
        alpha: args.alpha,
        restarts: args.restart,
    };
    let csv = BenchCsv::new(output(args.out.as_deref())?);
    let first_error = Mutex::new(None);
    run_benchmark(&scenario, |rec| {
        if let Err(e) = csv.write(rec) {
            first_error.lock().expect("error slot poisoned").get_or_insert(e);
        }
    })?;
    if let Some(e) = first_error.into_inner().expect("error slot poisoned") {
        return Err(e.into());
    }
    csv.into_inner()?;
    Ok(())
}
