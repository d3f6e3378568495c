//! Minimum covariance determinant estimation (FAST-MCD) and reweighted
//! MCD outlier flagging.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::data::ContinuousDataset;
use crate::error::{Error, Result};

const N_STARTS: usize = 500;
const WARM_STEPS: usize = 2;
const N_FINALISTS: usize = 10;
const MAX_STEPS: usize = 100;
const SUBSET_RETRIES: usize = 50;
/// Above this many rows the warm-up steps run on a random subsample.
const SUBSAMPLE_ROWS: usize = 1500;
const PIVOT_TOL: f64 = 1e-12;
/// Quantile used for both the reweighting and the final cutoffs.
pub const LEVEL: f64 = 0.975;

/// Rows stored contiguously for distance computations.
struct Rows<'a> {
    d: usize,
    x: &'a [f64],
}

impl Rows<'_> {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

fn row_major(data: &ContinuousDataset) -> Vec<f64> {
    let (n, d) = (data.n_rows(), data.n_vars());
    let mut x = vec![0.0; n * d];
    for j in 0..d {
        for (i, v) in data.column(j).iter().enumerate() {
            x[i * d + j] = *v;
        }
    }
    x
}

/// Mean and Cholesky factor of a covariance estimate.
#[derive(Clone, Debug)]
struct Fit {
    mean: Vec<f64>,
    /// Lower factor, row-major.
    chol: Vec<f64>,
    log_det: f64,
}

impl Fit {
    /// Mean and covariance (divisor `rows.len() - ddof`) of the given rows.
    fn from_rows(x: &Rows, rows: &[usize], ddof: usize) -> Option<Fit> {
        let d = x.d;
        let m = rows.len();
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (a, v) in mean.iter_mut().zip(x.row(i)) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= m as f64);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut centred = vec![0.0; d];
        for &i in rows {
            for ((c, v), mu) in centred.iter_mut().zip(x.row(i)).zip(&mean) {
                *c = v - mu;
            }
            for a in 0..d {
                let ca = centred[a];
                for b in 0..=a {
                    cov[(a, b)] += ca * centred[b];
                }
            }
        }
        let div = (m - ddof) as f64;
        for a in 0..d {
            for b in 0..=a {
                let v = cov[(a, b)] / div;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        Self::from_cov(mean, &cov)
    }

    fn from_cov(mean: Vec<f64>, cov: &DMatrix<f64>) -> Option<Fit> {
        let d = mean.len();
        let l = cov.clone().cholesky()?.unpack();
        let mut chol = vec![0.0; d * d];
        let mut log_det = 0.0;
        for a in 0..d {
            let pivot = l[(a, a)];
            if !(pivot * pivot > PIVOT_TOL * cov[(a, a)]) {
                return None;
            }
            log_det += 2.0 * pivot.ln();
            for b in 0..=a {
                chol[a * d + b] = l[(a, b)];
            }
        }
        Some(Fit { mean, chol, log_det })
    }

    fn scaled(&self, factor: f64) -> Fit {
        let s = factor.sqrt();
        Fit {
            mean: self.mean.clone(),
            chol: self.chol.iter().map(|v| v * s).collect(),
            log_det: self.log_det + self.mean.len() as f64 * factor.ln(),
        }
    }

    fn covariance(&self) -> Vec<f64> {
        let d = self.mean.len();
        let mut out = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..=a {
                let v: f64 = (0..=b).map(|k| self.chol[a * d + k] * self.chol[b * d + k]).sum();
                out[a * d + b] = v;
                out[b * d + a] = v;
            }
        }
        out
    }

    /// Squared Mahalanobis distance by forward substitution.
    fn distance(&self, row: &[f64], buf: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let mut s = 0.0;
        for a in 0..d {
            let mut v = row[a] - self.mean[a];
            let lrow = &self.chol[a * d..a * d + a];
            for (l, y) in lrow.iter().zip(buf.iter()) {
                v -= l * y;
            }
            let y = v / self.chol[a * d + a];
            buf[a] = y;
            s += y * y;
        }
        s
    }

    fn distances(&self, x: &Rows, rows: &[usize]) -> Vec<f64> {
        let mut buf = vec![0.0; x.d];
        rows.iter().map(|&i| self.distance(x.row(i), &mut buf)).collect()
    }
}

/// The `h` rows of `universe` closest to `fit`, sorted by index.
fn closest(x: &Rows, universe: &[usize], fit: &Fit, h: usize) -> Vec<usize> {
    let dist = fit.distances(x, universe);
    let mut order: Vec<usize> = (0..universe.len()).collect();
    order.select_nth_unstable_by(h - 1, |&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let mut support: Vec<usize> = order[..h].iter().map(|&k| universe[k]).collect();
    support.sort_unstable();
    support
}

/// Largest `h` giving the highest breakdown point.
pub fn default_h(n: usize, d: usize) -> usize {
    (n + d + 1) / 2
}

/// Consistency factor making the MCD scatter of `h` of `n` normal rows
/// unbiased for the covariance.
pub fn consistency_factor(d: usize, fraction: f64) -> f64 {
    if fraction >= 1.0 {
        return 1.0;
    }
    let q = ChiSquared::new(d as f64).expect("positive dof").inverse_cdf(fraction);
    fraction / ChiSquared::new(d as f64 + 2.0).expect("positive dof").cdf(q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct McdEstimate {
    pub location: Vec<f64>,
    /// Consistency-corrected scatter, row-major.
    pub scatter: Vec<f64>,
    /// Rows of the optimal subset, ascending.
    pub support: Vec<usize>,
    /// Determinant of the maximum-likelihood covariance of the support.
    pub determinant: f64,
    pub log_determinant: f64,
    pub consistency: f64,
}

/// One concentration step from the maximum-likelihood fit of `support`:
/// returns the `h` closest rows and the log determinants before and after.
pub fn concentration_step(data: &ContinuousDataset, support: &[usize], h: usize) -> Result<(Vec<usize>, f64, f64)> {
    let x = row_major(data);
    let rows = Rows { d: data.n_vars(), x: &x };
    let all: Vec<usize> = (0..data.n_rows()).collect();
    let fit = Fit::from_rows(&rows, support, 0).ok_or(Error::ExactFit)?;
    let next = closest(&rows, &all, &fit, h);
    let after = Fit::from_rows(&rows, &next, 0).ok_or(Error::ExactFit)?;
    Ok((next, fit.log_det, after.log_det))
}

/// FAST-MCD with `h` rows (default `floor((n + D + 1) / 2)`).
///
/// 500 random `(D+1)`-subsets are refined by two concentration steps, on a
/// 1500-row subsample when `n` is larger, and the ten best are iterated on
/// the full data until the determinant stops changing.
pub fn fast_mcd(data: &ContinuousDataset, h: Option<usize>, seed: u64) -> Result<McdEstimate> {
    let (n, d) = (data.n_rows(), data.n_vars());
    if n <= d + 1 {
        return Err(Error::Precondition(format!("MCD needs more than D + 1 = {} rows, got {n}", d + 1)));
    }
    let h = h.unwrap_or_else(|| default_h(n, d));
    if h < default_h(n, d) || h >= n {
        return Err(Error::Precondition(format!(
            "h = {h} outside [{}, {n})",
            default_h(n, d)
        )));
    }
    let x = row_major(data);
    let rows = Rows { d, x: &x };
    let all: Vec<usize> = (0..n).collect();

    let (universe, h_warm) = if n > SUBSAMPLE_ROWS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sub = sample(&mut rng, n, SUBSAMPLE_ROWS).into_vec();
        sub.sort_unstable();
        let h_sub = ((h as f64) * SUBSAMPLE_ROWS as f64 / n as f64).ceil() as usize;
        (sub, h_sub.clamp(d + 1, SUBSAMPLE_ROWS - 1))
    } else {
        (all.clone(), h)
    };

    let warm: Vec<Fit> = (0..N_STARTS)
        .into_par_iter()
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(start as u64 + 1);
            let mut fit = None;
            for _ in 0..=SUBSET_RETRIES {
                let picks: Vec<usize> = sample(&mut rng, universe.len(), d + 1)
                    .into_iter()
                    .map(|k| universe[k])
                    .collect();
                if let Some(f) = Fit::from_rows(&rows, &picks, 0) {
                    fit = Some(f);
                    break;
                }
            }
            let mut fit = fit.ok_or(Error::ExactFit)?;
            for _ in 0..WARM_STEPS {
                let support = closest(&rows, &universe, &fit, h_warm);
                fit = Fit::from_rows(&rows, &support, 0).ok_or(Error::ExactFit)?;
            }
            Ok(fit)
        })
        .collect::<Result<_>>()?;

    let mut ranked: Vec<usize> = (0..warm.len()).collect();
    ranked.sort_by(|&a, &b| warm[a].log_det.total_cmp(&warm[b].log_det).then(a.cmp(&b)));
    let mut best: Option<(Fit, Vec<usize>)> = None;
    for &k in ranked.iter().take(N_FINALISTS) {
        let mut fit = warm[k].clone();
        let mut support = Vec::new();
        for _ in 0..MAX_STEPS {
            let next = closest(&rows, &all, &fit, h);
            let refit = Fit::from_rows(&rows, &next, 0).ok_or(Error::ExactFit)?;
            let change = (fit.log_det - refit.log_det).abs();
            let same = next == support;
            fit = refit;
            support = next;
            if same || change < 1e-12 {
                break;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| fit.log_det < b.log_det) {
            best = Some((fit, support));
        }
    }
    let (fit, support) = best.expect("at least one finalist");
    let c = consistency_factor(d, h as f64 / n as f64);
    let corrected = fit.scaled(c);
    Ok(McdEstimate {
        location: fit.mean.clone(),
        scatter: corrected.covariance(),
        support,
        determinant: fit.log_det.exp(),
        log_determinant: fit.log_det,
        consistency: c,
    })
}

/// Squared Mahalanobis distances of every row from a location and scatter.
pub fn mahalanobis_sq(data: &ContinuousDataset, location: &[f64], scatter: &[f64]) -> Result<Vec<f64>> {
    let d = data.n_vars();
    if location.len() != d || scatter.len() != d * d {
        return Err(Error::Precondition("location or scatter has the wrong size".into()));
    }
    let cov = DMatrix::from_row_slice(d, d, scatter);
    let fit = Fit::from_cov(location.to_vec(), &cov).ok_or(Error::SingularRegression)?;
    let x = row_major(data);
    let rows = Rows { d, x: &x };
    Ok(fit.distances(&rows, &(0..data.n_rows()).collect::<Vec<_>>()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierReport {
    /// 1 for rows kept by the reweighting step, 0 otherwise.
    pub weights: Vec<u8>,
    /// Squared distances from the reweighted estimates.
    pub distances: Vec<f64>,
    /// Cutoff for rows with weight 1 (scaled Beta quantile).
    pub cutoff_w1: f64,
    /// Cutoff for rows with weight 0 (scaled F quantile).
    pub cutoff_w0: f64,
    pub outlier_indices: Vec<usize>,
    /// Number of rows with weight 1.
    pub w: usize,
}

impl OutlierReport {
    pub fn n_rows(&self) -> usize {
        self.weights.len()
    }

    pub fn is_outlier(&self, row: usize) -> bool {
        let cut = if self.weights[row] == 1 { self.cutoff_w1 } else { self.cutoff_w0 };
        self.distances[row] > cut
    }
}

/// Reference cutoffs for reweighted distances given `w` kept rows:
/// `(w-1)^2/w * Beta(D/2, (w-D-1)/2)` for kept rows and
/// `(w+1)/w * (w-1)D/(w-D) * F(D, w-D)` for the rest, at `LEVEL`.
pub fn reweighted_cutoffs(d: usize, w: usize) -> Result<(f64, f64)> {
    if w <= d + 1 {
        return Err(Error::DegenerateReweighting { kept: w, needed: d + 2 });
    }
    let (wf, df) = (w as f64, d as f64);
    let beta = Beta::new(df / 2.0, (wf - df - 1.0) / 2.0).expect("valid parameters");
    let f = FisherSnedecor::new(df, wf - df).expect("valid parameters");
    let c1 = (wf - 1.0).powi(2) / wf * beta.inverse_cdf(LEVEL);
    let c0 = (wf + 1.0) / wf * ((wf - 1.0) * df / (wf - df)) * f.inverse_cdf(LEVEL);
    Ok((c1, c0))
}

/// Reweighted MCD outlier detection.
///
/// Rows whose raw MCD distance exceeds the `LEVEL` chi-square quantile get
/// weight 0; the rest give a reweighted mean and scatter. Each row's final
/// distance is compared with the cutoff of its weight class.
pub fn rmcd_outliers(data: &ContinuousDataset, seed: u64) -> Result<OutlierReport> {
    let (n, d) = (data.n_rows(), data.n_vars());
    let mcd = fast_mcd(data, None, seed)?;
    let raw = mahalanobis_sq(data, &mcd.location, &mcd.scatter)?;
    let threshold = ChiSquared::new(d as f64).expect("positive dof").inverse_cdf(LEVEL);
    let weights: Vec<u8> = raw.iter().map(|&v| u8::from(v <= threshold)).collect();
    let kept: Vec<usize> = (0..n).filter(|&i| weights[i] == 1).collect();
    let w = kept.len();
    let (cutoff_w1, cutoff_w0) = reweighted_cutoffs(d, w)?;

    let x = row_major(data);
    let rows = Rows { d, x: &x };
    let fit = Fit::from_rows(&rows, &kept, 1).ok_or(Error::ExactFit)?;
    let fit = fit.scaled(consistency_factor(d, LEVEL));
    let distances = fit.distances(&rows, &(0..n).collect::<Vec<_>>());
    let mut report = OutlierReport {
        weights,
        distances,
        cutoff_w1,
        cutoff_w0,
        outlier_indices: Vec::new(),
        w,
    };
    report.outlier_indices = (0..n).filter(|&i| report.is_outlier(i)).collect();
    Ok(report)
}

/// Drops the flagged rows. Also returns, for each kept row, its index in
/// the input.
pub fn remove_outliers(data: &ContinuousDataset, report: &OutlierReport) -> Result<(ContinuousDataset, Vec<usize>)> {
    let n = data.n_rows();
    if report.n_rows() != n {
        return Err(Error::Precondition(format!(
            "report covers {} rows, data has {n}",
            report.n_rows()
        )));
    }
    let mut flagged = vec![false; n];
    for &i in &report.outlier_indices {
        flagged[i] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !flagged[i]).collect();
    if keep.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok((data.select_rows(&keep)?, keep))
}
