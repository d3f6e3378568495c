//! Synthetic networks and data: random linear-Gaussian DAGs, ancestral
//! sampling of categorical networks, and row contamination.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDataset, ContinuousDataset};
use crate::error::{Error, Result};
use crate::graph::{BitMatrix, Dag};

/// Tolerance on CPT row sums.
pub const CPT_TOL: f64 = 1e-9;

/// Random DAG on `d` nodes: a uniformly random topological order, then each
/// forward pair independently with probability `avg_neighbors / (d - 1)`.
pub fn random_dag(d: usize, avg_neighbors: f64, seed: u64) -> Result<Dag> {
    if d < 2 || !(avg_neighbors > 0.0 && avg_neighbors < (d - 1) as f64) {
        return Err(Error::Precondition(format!(
            "random_dag needs d >= 2 and 0 < avg_neighbors < d - 1, got d = {d}, avg = {avg_neighbors}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = avg_neighbors / (d - 1) as f64;
    let mut order: Vec<usize> = (0..d).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut arrows = BitMatrix::new(d);
    for a in 0..d {
        for b in a + 1..d {
            if rng.random_bool(p) {
                arrows.set(order[a], order[b], true);
            }
        }
    }
    Dag::from_matrix(arrows)
}

/// Linear structural equation model over a DAG.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBn {
    dag: Dag,
    beta: BTreeMap<(usize, usize), f64>,
    intercepts: Vec<f64>,
    noise_sd: Vec<f64>,
}

impl GaussianBn {
    pub fn new(
        dag: Dag,
        beta: BTreeMap<(usize, usize), f64>,
        intercepts: Vec<f64>,
        noise_sd: Vec<f64>,
    ) -> Result<Self> {
        let d = dag.n_nodes();
        if intercepts.len() != d || noise_sd.len() != d {
            return Err(Error::Precondition("intercepts and noise_sd need one entry per node".into()));
        }
        if noise_sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Precondition("noise standard deviations must be positive".into()));
        }
        let arrows = dag.arrows();
        if beta.len() != arrows.len() || arrows.iter().any(|a| !beta.contains_key(a)) {
            return Err(Error::Precondition("coefficients must match the arrows exactly".into()));
        }
        Ok(Self {
            dag,
            beta,
            intercepts,
            noise_sd,
        })
    }

    /// Coefficients uniform on `[-1, -0.1] U [0.1, 1]`, zero intercepts,
    /// unit noise.
    pub fn random(dag: Dag, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = dag
            .arrows()
            .into_iter()
            .map(|a| {
                let magnitude = rng.random_range(0.1..=1.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (a, sign * magnitude)
            })
            .collect();
        let d = dag.n_nodes();
        Self {
            dag,
            beta,
            intercepts: vec![0.0; d],
            noise_sd: vec![1.0; d],
        }
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn beta(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.beta
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn noise_sd(&self) -> &[f64] {
        &self.noise_sd
    }

    /// Population covariance `(I - B)^-T diag(sd^2) (I - B)^-1`, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dag.n_nodes();
        // Each node is a linear combination of noise terms: x = A e.
        let mut a = vec![0.0; d * d];
        for v in self.dag.topological_order() {
            a[v * d + v] = self.noise_sd[v];
            for p in self.dag.parents(v) {
                let b = self.beta[&(p, v)];
                for k in 0..d {
                    a[v * d + k] += b * a[p * d + k];
                }
            }
        }
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum();
            }
        }
        cov
    }
}

/// Draws `n` rows in topological order.
pub fn sample_gaussian(bn: &GaussianBn, n: usize, seed: u64) -> Result<ContinuousDataset> {
    let d = bn.dag.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n * d];
    for v in bn.dag.topological_order() {
        let parents: Vec<(usize, f64)> = bn
            .dag
            .parents(v)
            .into_iter()
            .map(|p| (p, bn.beta[&(p, v)]))
            .collect();
        let (sd, b0) = (bn.noise_sd[v], bn.intercepts[v]);
        for row in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            let mut x = b0 + sd * e;
            for &(p, b) in &parents {
                x += b * values[p * n + row];
            }
            values[v * n + row] = x;
        }
    }
    ContinuousDataset::new(n, ContinuousDataset::default_names(d), values)
}

/// Replaces `ceil(fraction * n)` random rows by themselves shifted
/// `magnitude` column standard deviations, with an independent random sign
/// per cell. Returns the new data and the per-row contamination labels.
pub fn inject_outliers(
    data: &ContinuousDataset,
    fraction: f64,
    magnitude: f64,
    seed: u64,
) -> Result<(ContinuousDataset, Vec<bool>)> {
    if !(fraction > 0.0 && fraction < 0.5) || !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(Error::Precondition(format!(
            "inject_outliers needs fraction in (0, 0.5) and magnitude > 0, got {fraction}, {magnitude}"
        )));
    }
    let n = data.n_rows();
    let d = data.n_vars();
    let count = (fraction * n as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = sample(&mut rng, n, count).into_vec();
    rows.sort_unstable();
    let sds: Vec<f64> = (0..d)
        .map(|j| {
            let col = data.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        })
        .collect();
    let mut values = data.values().to_vec();
    let mut labels = vec![false; n];
    for &row in &rows {
        labels[row] = true;
        for (j, sd) in sds.iter().enumerate() {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            values[j * n + row] += sign * magnitude * sd;
        }
    }
    Ok((ContinuousDataset::new(n, data.names().to_vec(), values)?, labels))
}

/// Discrete network with one conditional table per node.
///
/// Row `c` of node `v`'s table is the distribution of `v` when its parents,
/// in increasing index order, take the codes whose mixed-radix number (first
/// parent most significant) is `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalBn {
    names: Vec<String>,
    dag: Dag,
    levels: Vec<u32>,
    cpts: Vec<Vec<f64>>,
}

impl CategoricalBn {
    pub fn new(names: Vec<String>, dag: Dag, levels: Vec<u32>, cpts: Vec<Vec<f64>>) -> Result<Self> {
        let d = dag.n_nodes();
        if names.len() != d || levels.len() != d || cpts.len() != d {
            return Err(Error::Schema("names, levels and tables need one entry per node".into()));
        }
        if let Some(v) = levels.iter().position(|&l| l < 2) {
            return Err(Error::Schema(format!("node `{}` needs at least two levels", names[v])));
        }
        let bn = Self {
            names,
            dag,
            levels,
            cpts,
        };
        for v in 0..d {
            let r = bn.levels[v] as usize;
            let q = bn.n_configs(v);
            if bn.cpts[v].len() != q * r {
                return Err(Error::Schema(format!(
                    "table of `{}` has {} entries, expected {}",
                    bn.names[v],
                    bn.cpts[v].len(),
                    q * r
                )));
            }
            for (c, row) in bn.cpts[v].chunks(r).enumerate() {
                if row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(Error::Schema(format!("negative probability for `{}`", bn.names[v])));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > CPT_TOL {
                    return Err(Error::CptNotNormalized {
                        node: bn.names[v].clone(),
                        config: bn.config_key(v, c),
                        sum,
                    });
                }
            }
        }
        Ok(bn)
    }

    /// Tables whose rows are an even mix of the uniform distribution and a
    /// uniform draw from the simplex, so every level has probability at
    /// least `1 / (2 levels)`.
    pub fn random(dag: Dag, levels: Vec<u32>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dag.n_nodes();
        if levels.len() != d {
            return Err(Error::Schema("levels need one entry per node".into()));
        }
        let cpts = (0..d)
            .map(|v| {
                let r = levels[v] as usize;
                let q: usize = dag.parents(v).iter().map(|&p| levels[p] as usize).product();
                let mut table = Vec::with_capacity(q * r);
                for _ in 0..q {
                    let raw: Vec<f64> = (0..r).map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
                    let s: f64 = raw.iter().sum();
                    table.extend(raw.iter().map(|x| 0.5 * x / s + 0.5 / r as f64));
                }
                table
            })
            .collect();
        Self::new(ContinuousDataset::default_names(d), dag, levels, cpts)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn n_configs(&self, v: usize) -> usize {
        self.dag.parents(v).iter().map(|&p| self.levels[p] as usize).product()
    }

    /// Distribution of `v` given its parents' codes (parent-index order).
    pub fn cpt_row(&self, v: usize, parent_codes: &[u32]) -> &[f64] {
        let parents = self.dag.parents(v);
        let mut c = 0usize;
        for (&p, &code) in parents.iter().zip(parent_codes) {
            c = c * self.levels[p] as usize + code as usize;
        }
        let r = self.levels[v] as usize;
        &self.cpts[v][c * r..(c + 1) * r]
    }

    fn config_key(&self, v: usize, mut c: usize) -> String {
        let parents = self.dag.parents(v);
        let mut codes = vec![0usize; parents.len()];
        for (k, &p) in parents.iter().enumerate().rev() {
            let l = self.levels[p] as usize;
            codes[k] = c % l;
            c /= l;
        }
        codes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = BnFile {
            nodes: self
                .names
                .iter()
                .zip(&self.levels)
                .map(|(name, &levels)| BnNode {
                    name: name.clone(),
                    levels,
                })
                .collect(),
            arrows: self
                .dag
                .arrows()
                .into_iter()
                .map(|(a, b)| [NodeRef::Index(a), NodeRef::Index(b)])
                .collect(),
            cpts: (0..self.names.len())
                .map(|v| {
                    let r = self.levels[v] as usize;
                    let rows = self.cpts[v]
                        .chunks(r)
                        .enumerate()
                        .map(|(c, row)| (self.config_key(v, c), row.to_vec()))
                        .collect();
                    (self.names[v].clone(), rows)
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BnNode {
    name: String,
    levels: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRef {
    Index(usize),
    Name(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BnFile {
    nodes: Vec<BnNode>,
    arrows: Vec<[NodeRef; 2]>,
    cpts: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

/// Reads a network from the JSON table format. Arrow endpoints may be node
/// indices or names.
pub fn load_categorical_bn(path: &Path) -> Result<CategoricalBn> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_categorical_bn(&text)
}

pub fn parse_categorical_bn(text: &str) -> Result<CategoricalBn> {
    let file: BnFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let names: Vec<String> = file.nodes.iter().map(|n| n.name.clone()).collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    if index.len() != names.len() {
        return Err(Error::Schema("duplicate node names".into()));
    }
    let resolve = |r: &NodeRef| -> Result<usize> {
        match r {
            NodeRef::Index(i) if *i < names.len() => Ok(*i),
            NodeRef::Index(i) => Err(Error::Schema(format!("arrow endpoint {i} out of range"))),
            NodeRef::Name(s) => index.get(s.as_str()).copied().ok_or_else(|| Error::UnknownVariable(s.clone())),
        }
    };
    let d = names.len();
    let mut arrows = BitMatrix::new(d);
    for [a, b] in &file.arrows {
        let (a, b) = (resolve(a)?, resolve(b)?);
        if a == b {
            return Err(Error::Schema(format!("self-loop on `{}`", names[a])));
        }
        arrows.set(a, b, true);
    }
    let dag = Dag::from_matrix(arrows)?;
    let levels: Vec<u32> = file.nodes.iter().map(|n| n.levels).collect();
    if let Some(extra) = file.cpts.keys().find(|k| !index.contains_key(k.as_str())) {
        return Err(Error::UnknownVariable(extra.clone()));
    }
    let mut cpts = Vec::with_capacity(d);
    for v in 0..d {
        let rows = file
            .cpts
            .get(&names[v])
            .ok_or_else(|| Error::Schema(format!("no table for `{}`", names[v])))?;
        let parents = dag.parents(v);
        let q: usize = parents.iter().map(|&p| levels[p] as usize).product();
        if rows.len() != q {
            return Err(Error::Schema(format!(
                "table of `{}` has {} rows, expected {q}",
                names[v],
                rows.len()
            )));
        }
        let r = levels[v] as usize;
        let mut table = vec![0.0; q * r];
        for (key, probs) in rows {
            let codes: Vec<usize> = if key.is_empty() {
                Vec::new()
            } else {
                key.split(',')
                    .map(|c| c.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Schema(format!("bad configuration key `{key}` for `{}`", names[v])))?
            };
            if codes.len() != parents.len() || codes.iter().zip(&parents).any(|(&c, &p)| c >= levels[p] as usize) {
                return Err(Error::Schema(format!("bad configuration key `{key}` for `{}`", names[v])));
            }
            if probs.len() != r {
                return Err(Error::Schema(format!(
                    "row `{key}` of `{}` has {} entries, expected {r}",
                    names[v],
                    probs.len()
                )));
            }
            let c = codes
                .iter()
                .zip(&parents)
                .fold(0usize, |acc, (&code, &p)| acc * levels[p] as usize + code);
            table[c * r..(c + 1) * r].copy_from_slice(probs);
        }
        cpts.push(table);
    }
    CategoricalBn::new(names, dag, levels, cpts)
}

/// Ancestral sampling of `n` rows.
pub fn sample_categorical(bn: &CategoricalBn, n: usize, seed: u64) -> Result<CategoricalDataset> {
    let d = bn.dag.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codes = vec![0u32; n * d];
    let mut parent_codes = Vec::new();
    for v in bn.dag.topological_order() {
        let parents = bn.dag.parents(v);
        for row in 0..n {
            parent_codes.clear();
            parent_codes.extend(parents.iter().map(|&p| codes[p * n + row]));
            let probs = bn.cpt_row(v, &parent_codes);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut level = probs.len() - 1;
            for (k, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    level = k;
                    break;
                }
            }
            // Never land on a zero-probability trailing level through
            // rounding.
            while probs[level] == 0.0 && level > 0 {
                level -= 1;
            }
            codes[v * n + row] = level as u32;
        }
    }
    CategoricalDataset::new(n, bn.names.clone(), bn.levels.clone(), codes)
}
