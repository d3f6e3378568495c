//! End-to-end learning: optional outlier removal, skeleton, then score-based
//! search.

use std::sync::Arc;
use std::time::Instant;

use crate::ci::{
    correlation_matrix, CategoricalCi, CategoricalStatistic, CiTest, CorrelationKind, CorrelationMatrix,
    GaussianCi, NullReference,
};
use crate::data::{ContinuousDataset, Dataset};
use crate::error::{Error, Result};
use crate::graph::{Dag, EdgeConstraints};
use crate::robust::{remove_outliers, rmcd_outliers};
use crate::score::{hc_search, tabu_search, Covariance, ScoreKind, ScoreSpec, Scorer, SearchConfig};
use crate::skeleton::{learn_skeleton, SkeletonAlgorithm, SkeletonConfig, SkeletonResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestMethod {
    Pearson,
    Spearman,
    G2,
    X2,
}

impl TestMethod {
    pub fn is_continuous(self) -> bool {
        matches!(self, TestMethod::Pearson | TestMethod::Spearman)
    }

    fn correlation_kind(self) -> CorrelationKind {
        match self {
            TestMethod::Spearman => CorrelationKind::Spearman,
            _ => CorrelationKind::Pearson,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMethod {
    HillClimbing,
    Tabu,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    pub algorithm: SkeletonAlgorithm,
    pub method: TestMethod,
    pub null_ref: NullReference,
    pub skeleton: SkeletonConfig,
    /// Defaults to `bic-g` for continuous data and `bic` for categorical.
    pub score: Option<ScoreSpec>,
    pub search_method: SearchMethod,
    /// Its seed also drives the outlier detector.
    pub search: SearchConfig,
    pub robust: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            algorithm: SkeletonAlgorithm::Fedhc,
            method: TestMethod::Pearson,
            null_ref: NullReference::Normal,
            skeleton: SkeletonConfig::default(),
            score: None,
            search_method: SearchMethod::HillClimbing,
            search: SearchConfig::default(),
            robust: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnOutput {
    pub dag: Dag,
    pub score: f64,
    pub score_name: &'static str,
    pub skeleton: SkeletonResult,
    pub local_scores_evaluated: usize,
    /// Input rows dropped as outliers, ascending.
    pub removed_rows: Vec<usize>,
    pub rows_used: usize,
    pub outlier_seconds: f64,
    /// Includes computing the correlation matrix.
    pub skeleton_seconds: f64,
    pub search_seconds: f64,
    pub total_seconds: f64,
}

impl LearnOutput {
    pub fn n_tests(&self) -> usize {
        self.skeleton.n_tests
    }
}

fn check_method(data: &Dataset, cfg: &LearnConfig) -> Result<ScoreSpec> {
    let continuous = matches!(data, Dataset::Continuous(_));
    if continuous != cfg.method.is_continuous() {
        return Err(Error::Precondition(format!(
            "test {:?} does not match {} data",
            cfg.method,
            if continuous { "continuous" } else { "categorical" }
        )));
    }
    if cfg.robust && !continuous {
        return Err(Error::Precondition("outlier removal needs continuous data".into()));
    }
    let spec = cfg.score.unwrap_or_else(|| {
        ScoreSpec::new(if continuous { ScoreKind::BicG } else { ScoreKind::BicCat })
    });
    spec.validate()?;
    if spec.kind.is_gaussian() != continuous {
        return Err(Error::Precondition(format!(
            "score `{}` does not match the data type",
            spec.kind.name()
        )));
    }
    cfg.skeleton.validate()?;
    cfg.search.validate()?;
    Ok(spec)
}

/// Learns a DAG from `data`.
///
/// Whitelisted pairs are added to the skeleton before the search so that
/// the forced arrows are always reachable.
pub fn learn(data: &Dataset, constraints: &EdgeConstraints, cfg: &LearnConfig) -> Result<LearnOutput> {
    learn_inner(data, constraints, cfg, None)
}

/// Same as [`learn`] but reuses a correlation matrix computed earlier from
/// the same continuous data.
pub fn learn_with_correlation(
    data: &ContinuousDataset,
    corr: Arc<CorrelationMatrix>,
    constraints: &EdgeConstraints,
    cfg: &LearnConfig,
) -> Result<LearnOutput> {
    if cfg.robust {
        return Err(Error::Precondition(
            "a precomputed correlation matrix cannot be combined with outlier removal".into(),
        ));
    }
    if corr.dim() != data.n_vars() || corr.kind() != cfg.method.correlation_kind() {
        return Err(Error::Precondition("correlation matrix does not match the data or test".into()));
    }
    learn_inner(&Dataset::Continuous(data.clone()), constraints, cfg, Some(corr))
}

fn learn_inner(
    data: &Dataset,
    constraints: &EdgeConstraints,
    cfg: &LearnConfig,
    corr: Option<Arc<CorrelationMatrix>>,
) -> Result<LearnOutput> {
    let start = Instant::now();
    let spec = check_method(data, cfg)?;
    constraints.validate(data.n_vars())?;

    let mut removed_rows = Vec::new();
    let mut cleaned = None;
    if cfg.robust {
        if let Dataset::Continuous(d) = data {
            let report = rmcd_outliers(d, cfg.search.seed)?;
            let (kept, _) = remove_outliers(d, &report)?;
            removed_rows = report.outlier_indices;
            cleaned = Some(Dataset::Continuous(kept));
        }
    }
    let data = cleaned.as_ref().unwrap_or(data);
    let outlier_seconds = start.elapsed().as_secs_f64();

    let skeleton_start = Instant::now();
    let tester: Box<dyn CiTest> = match data {
        Dataset::Continuous(d) => {
            let corr = match corr {
                Some(c) => c,
                None => Arc::new(correlation_matrix(d, cfg.method.correlation_kind())),
            };
            Box::new(GaussianCi::new(corr, d.n_rows(), cfg.null_ref))
        }
        Dataset::Categorical(d) => {
            let stat = if cfg.method == TestMethod::X2 {
                CategoricalStatistic::X2
            } else {
                CategoricalStatistic::G2
            };
            Box::new(CategoricalCi::new(Arc::new(d.clone()), stat))
        }
    };
    let mut skeleton = learn_skeleton(cfg.algorithm, tester.as_ref(), &cfg.skeleton)?;
    let skeleton_seconds = skeleton_start.elapsed().as_secs_f64();

    let search_start = Instant::now();
    let mut search_skeleton = skeleton.skeleton.clone();
    for &(a, b) in &constraints.whitelist {
        search_skeleton.add_edge(a, b);
    }
    let scorer = match data {
        Dataset::Continuous(d) => Scorer::gaussian(Arc::new(Covariance::from_data(d)), spec)?,
        Dataset::Categorical(d) => Scorer::categorical(Arc::new(d.clone()), spec)?,
    };
    let learned = match cfg.search_method {
        SearchMethod::HillClimbing => hc_search(&search_skeleton, &scorer, constraints, &cfg.search)?,
        SearchMethod::Tabu => tabu_search(&search_skeleton, &scorer, constraints, &cfg.search)?,
    };
    let search_seconds = search_start.elapsed().as_secs_f64();
    skeleton.runtime = skeleton_seconds;

    Ok(LearnOutput {
        dag: learned.dag,
        score: learned.score,
        score_name: spec.kind.name(),
        skeleton,
        local_scores_evaluated: learned.local_scores_evaluated,
        removed_rows,
        rows_used: data.n_rows(),
        outlier_seconds,
        skeleton_seconds,
        search_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}
