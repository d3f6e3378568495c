//! Decomposable local scores and greedy structure search.

mod search;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

pub use search::{hc_search, tabu_search, total_score, LearnedBn, SearchConfig};

use crate::ci::stratum_ids;
use crate::data::{CategoricalDataset, ContinuousDataset, Dataset};
use crate::error::{Error, Result};

/// Relative pivot below which a parent design is treated as rank-deficient.
const SINGULAR_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    BicG,
    LoglikG,
    AicG,
    BicCat,
    LoglikCat,
    Bdeu,
}

impl ScoreKind {
    pub fn is_gaussian(self) -> bool {
        matches!(self, ScoreKind::BicG | ScoreKind::LoglikG | ScoreKind::AicG)
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::BicG => "bic-g",
            ScoreKind::LoglikG => "loglik-g",
            ScoreKind::AicG => "aic-g",
            ScoreKind::BicCat => "bic",
            ScoreKind::LoglikCat => "loglik",
            ScoreKind::Bdeu => "bdeu",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreSpec {
    pub kind: ScoreKind,
    /// Imaginary sample size, used by BDeu only.
    pub iss: f64,
}

impl ScoreSpec {
    pub fn new(kind: ScoreKind) -> Self {
        Self { kind, iss: 1.0 }
    }

    pub fn bdeu(iss: f64) -> Result<Self> {
        let spec = Self {
            kind: ScoreKind::Bdeu,
            iss,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ScoreKind::Bdeu && !(self.iss > 0.0 && self.iss.is_finite()) {
            return Err(Error::Precondition(format!(
                "BDeu needs a positive imaginary sample size, got {}",
                self.iss
            )));
        }
        Ok(())
    }
}

impl std::str::FromStr for ScoreSpec {
    type Err = Error;

    /// Accepts `bic-g`, `loglik-g`, `aic-g`, `bic`, `loglik`, `bdeu` and
    /// `bdeu:<iss>`; underscores work in place of dashes.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase().replace('_', "-");
        if let Some(iss) = lower.strip_prefix("bdeu:") {
            let iss: f64 = iss
                .parse()
                .map_err(|_| Error::Precondition(format!("bad BDeu sample size in `{s}`")))?;
            return Self::bdeu(iss);
        }
        let kind = match lower.as_str() {
            "bic-g" => ScoreKind::BicG,
            "loglik-g" => ScoreKind::LoglikG,
            "aic-g" => ScoreKind::AicG,
            "bic" | "bic-cat" => ScoreKind::BicCat,
            "loglik" | "loglik-cat" => ScoreKind::LoglikCat,
            "bdeu" => ScoreKind::Bdeu,
            _ => return Err(Error::Precondition(format!("unknown score `{s}`"))),
        };
        Ok(Self::new(kind))
    }
}

/// Sufficient statistics for the Gaussian scores: sample size and the
/// maximum-likelihood covariance matrix.
#[derive(Clone, Debug)]
pub struct Covariance {
    n: usize,
    cov: DMatrix<f64>,
}

impl Covariance {
    pub fn from_data(data: &ContinuousDataset) -> Self {
        let n = data.n_rows();
        let d = data.n_vars();
        let mut x = DMatrix::from_column_slice(n, d, data.values());
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let mut cov = x.tr_mul(&x);
        cov /= n as f64;
        Self { n, cov }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_vars(&self) -> usize {
        self.cov.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cov[(i, j)]
    }

    /// Residual variance of the least-squares regression of `node` on
    /// `parents` with intercept.
    pub fn residual_variance(&self, node: usize, parents: &[usize]) -> Result<f64> {
        let m = parents.len() + 1;
        let vars: Vec<usize> = parents.iter().copied().chain(std::iter::once(node)).collect();
        let sub = DMatrix::from_fn(m, m, |a, b| self.cov[(vars[a], vars[b])]);
        let chol = sub.clone().cholesky().ok_or(Error::SingularRegression)?;
        let l = chol.l_dirty();
        for k in 0..m {
            let pivot = l[(k, k)] * l[(k, k)];
            if !(pivot > SINGULAR_TOL * sub[(k, k)]) {
                return Err(Error::SingularRegression);
            }
        }
        Ok(l[(m - 1, m - 1)] * l[(m - 1, m - 1)])
    }
}

#[derive(Clone, Debug)]
enum Source {
    Gaussian(Arc<Covariance>),
    Categorical(Arc<CategoricalDataset>),
}

/// Cached local scores for one dataset and score choice.
#[derive(Debug)]
pub struct Scorer {
    source: Source,
    spec: ScoreSpec,
    cache: Mutex<HashMap<(usize, Vec<usize>), f64>>,
    evaluated: AtomicUsize,
    hits: AtomicUsize,
}

impl Scorer {
    pub fn gaussian(cov: Arc<Covariance>, spec: ScoreSpec) -> Result<Self> {
        if !spec.kind.is_gaussian() {
            return Err(Error::Precondition(format!(
                "score `{}` needs categorical data",
                spec.kind.name()
            )));
        }
        Ok(Self::build(Source::Gaussian(cov), spec))
    }

    pub fn categorical(data: Arc<CategoricalDataset>, spec: ScoreSpec) -> Result<Self> {
        spec.validate()?;
        if spec.kind.is_gaussian() {
            return Err(Error::Precondition(format!(
                "score `{}` needs continuous data",
                spec.kind.name()
            )));
        }
        Ok(Self::build(Source::Categorical(data), spec))
    }

    pub fn for_dataset(data: &Dataset, spec: ScoreSpec) -> Result<Self> {
        match data {
            Dataset::Continuous(d) => Self::gaussian(Arc::new(Covariance::from_data(d)), spec),
            Dataset::Categorical(d) => Self::categorical(Arc::new(d.clone()), spec),
        }
    }

    fn build(source: Source, spec: ScoreSpec) -> Self {
        Self {
            source,
            spec,
            cache: Mutex::new(HashMap::new()),
            evaluated: AtomicUsize::new(0),
            hits: AtomicUsize::new(0),
        }
    }

    pub fn spec(&self) -> ScoreSpec {
        self.spec
    }

    pub fn n_vars(&self) -> usize {
        match &self.source {
            Source::Gaussian(c) => c.n_vars(),
            Source::Categorical(d) => d.n_vars(),
        }
    }

    /// Number of distinct `(node, parents)` scores computed so far.
    pub fn evaluated(&self) -> usize {
        self.evaluated.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    /// Score of `node` given `parents` (any order). Rank-deficient parent
    /// designs score negative infinity.
    pub fn local_score(&self, node: usize, parents: &[usize]) -> Result<f64> {
        let d = self.n_vars();
        if node >= d || parents.iter().any(|&p| p >= d || p == node) {
            return Err(Error::Precondition(format!(
                "local score of {node} given {parents:?}"
            )));
        }
        let mut key = parents.to_vec();
        key.sort_unstable();
        key.dedup();
        if let Some(&s) = self.cache.lock().expect("score cache poisoned").get(&(node, key.clone())) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(s);
        }
        let s = match self.compute(node, &key) {
            Ok(s) => s,
            Err(Error::SingularRegression) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        self.evaluated.fetch_add(1, Ordering::Relaxed);
        self.cache.lock().expect("score cache poisoned").insert((node, key), s);
        Ok(s)
    }

    fn compute(&self, node: usize, parents: &[usize]) -> Result<f64> {
        match &self.source {
            Source::Gaussian(cov) => {
                let n = cov.n_rows() as f64;
                let var = cov.residual_variance(node, parents)?;
                let loglik = -0.5 * n * ((2.0 * std::f64::consts::PI * var).ln() + 1.0);
                let k = parents.len() as f64 + 2.0;
                Ok(match self.spec.kind {
                    ScoreKind::LoglikG => loglik,
                    ScoreKind::BicG => loglik - 0.5 * k * n.ln(),
                    ScoreKind::AicG => loglik - k,
                    _ => unreachable!("checked at construction"),
                })
            }
            Source::Categorical(data) => Ok(categorical_score(data, node, parents, self.spec)),
        }
    }
}

/// Counts `N_jk` of `node` level `k` under parent configuration `j`; only
/// observed configurations get a row.
fn family_counts(data: &CategoricalDataset, node: usize, parents: &[usize]) -> (Vec<u64>, usize) {
    let r = data.levels()[node] as usize;
    let (ids, q) = stratum_ids(data, parents);
    let mut counts = vec![0u64; q * r];
    for (&j, &k) in ids.iter().zip(data.column(node)) {
        counts[j as usize * r + k as usize] += 1;
    }
    (counts, q)
}

fn categorical_score(data: &CategoricalDataset, node: usize, parents: &[usize], spec: ScoreSpec) -> f64 {
    let r = data.levels()[node] as usize;
    let (counts, q_obs) = family_counts(data, node, parents);
    match spec.kind {
        ScoreKind::LoglikCat | ScoreKind::BicCat => {
            let mut ll = 0.0;
            for row in counts.chunks(r) {
                let total: u64 = row.iter().sum();
                for &c in row.iter().filter(|&&c| c > 0) {
                    ll += c as f64 * (c as f64 / total as f64).ln();
                }
            }
            if spec.kind == ScoreKind::LoglikCat {
                ll
            } else {
                let q: f64 = parents.iter().map(|&p| data.levels()[p] as f64).product();
                ll - 0.5 * (r as f64 - 1.0) * q * (data.n_rows() as f64).ln()
            }
        }
        ScoreKind::Bdeu => {
            // Unobserved configurations contribute zero, so only observed
            // rows are summed; the prior still spreads over all of them.
            let q: f64 = parents.iter().map(|&p| data.levels()[p] as f64).product();
            let a_j = spec.iss / q;
            let a_jk = a_j / r as f64;
            let mut s = 0.0;
            for row in counts.chunks(r).take(q_obs) {
                let total: u64 = row.iter().sum();
                s += ln_gamma(a_j) - ln_gamma(a_j + total as f64);
                for &c in row.iter().filter(|&&c| c > 0) {
                    s += ln_gamma(a_jk + c as f64) - ln_gamma(a_jk);
                }
            }
            s
        }
        _ => unreachable!("checked at construction"),
    }
}
