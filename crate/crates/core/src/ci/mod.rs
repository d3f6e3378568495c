//! Conditional-independence tests.
//!
//! Continuous data use the Fisher z transform of partial Pearson (or rank)
//! correlations, computed from a correlation matrix built once per dataset.
//! Categorical data use stratified G² or Pearson X² statistics. Every test
//! reports its p-value on the natural-log scale.

pub mod correlation;
pub mod dist;

use std::collections::HashMap;
use std::sync::Arc;

pub use correlation::{
    correlation_matrix, partial_correlation, partial_correlation_inverse, CorrelationKind,
    CorrelationMatrix,
};

use crate::data::CategoricalDataset;
use crate::error::{Error, Result};

/// Scale applied to the Fisher z statistic of a rank correlation.
pub const SPEARMAN_FACTOR: f64 = 1.029563;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    /// Chi-square degrees of freedom, or `n - |Z| - 3` for Fisher z.
    pub dof: usize,
    /// Natural log of the p-value; always `<= 0`.
    pub log_pvalue: f64,
}

impl TestResult {
    /// Result used when a test cannot be evaluated: independence is not
    /// rejected.
    pub const UNINFORMATIVE: TestResult = TestResult {
        statistic: 0.0,
        dof: 1,
        log_pvalue: 0.0,
    };

    #[inline]
    pub fn rejects(&self, ln_alpha: f64) -> bool {
        self.log_pvalue < ln_alpha
    }
}

/// Reference distribution for the Fisher z statistic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NullReference {
    #[default]
    Normal,
    StudentT,
}

pub fn fisher_z_test(r: f64, n: usize, nz: usize, null_ref: NullReference) -> Result<TestResult> {
    let residual_dof = n as i64 - nz as i64 - 3;
    if residual_dof < 1 {
        return Err(Error::InsufficientSample { residual_dof });
    }
    let r = r.clamp(-1.0 + correlation::CLAMP, 1.0 - correlation::CLAMP);
    let statistic = r.atanh().abs() * (residual_dof as f64).sqrt();
    Ok(TestResult {
        statistic,
        dof: residual_dof as usize,
        log_pvalue: z_tail(statistic, residual_dof as f64, null_ref),
    })
}

fn z_tail(statistic: f64, dof: f64, null_ref: NullReference) -> f64 {
    match null_ref {
        NullReference::Normal => dist::ln_normal_two_sided(statistic),
        NullReference::StudentT => dist::ln_student_t_two_sided(statistic, dof),
    }
}

/// Fisher z test on a rank correlation; the statistic is the Pearson one
/// times [`SPEARMAN_FACTOR`].
pub fn spearman_test(
    r_rank: f64,
    n: usize,
    nz: usize,
    null_ref: NullReference,
) -> Result<TestResult> {
    let base = fisher_z_test(r_rank, n, nz, null_ref)?;
    let statistic = base.statistic * SPEARMAN_FACTOR;
    Ok(TestResult {
        statistic,
        dof: base.dof,
        log_pvalue: z_tail(statistic, base.dof as f64, null_ref),
    })
}

/// Counts of `(x, y)` within each observed configuration of the
/// conditioning set.
struct StratifiedTable {
    rx: usize,
    ry: usize,
    strata: usize,
    counts: Vec<u64>,
}

impl StratifiedTable {
    fn build(data: &CategoricalDataset, x: usize, y: usize, z: &[usize]) -> Self {
        let n = data.n_rows();
        let (ids, strata) = stratum_ids(data, z);
        let rx = data.levels()[x] as usize;
        let ry = data.levels()[y] as usize;
        let mut counts = vec![0u64; strata * rx * ry];
        let (cx, cy) = (data.column(x), data.column(y));
        for row in 0..n {
            let k = (ids[row] as usize * rx + cx[row] as usize) * ry + cy[row] as usize;
            counts[k] += 1;
        }
        Self {
            rx,
            ry,
            strata,
            counts,
        }
    }

    fn stratum(&self, s: usize) -> &[u64] {
        let size = self.rx * self.ry;
        &self.counts[s * size..(s + 1) * size]
    }

    fn margins(&self, s: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let t = self.stratum(s);
        let mut row = vec![0.0; self.rx];
        let mut col = vec![0.0; self.ry];
        for a in 0..self.rx {
            for b in 0..self.ry {
                let o = t[a * self.ry + b] as f64;
                row[a] += o;
                col[b] += o;
            }
        }
        let total = row.iter().sum();
        (row, col, total)
    }
}

/// Dense ids `0..k` for the observed configurations of `z`, in order of
/// first appearance.
pub(crate) fn stratum_ids(data: &CategoricalDataset, z: &[usize]) -> (Vec<u32>, usize) {
    let n = data.n_rows();
    let mut ids = vec![0u32; n];
    let mut count = 1usize;
    for &v in z {
        let levels = data.levels()[v] as u64;
        let col = data.column(v);
        let mut remap: HashMap<u64, u32> = HashMap::new();
        for row in 0..n {
            let key = ids[row] as u64 * levels + col[row] as u64;
            let next = remap.len() as u32;
            ids[row] = *remap.entry(key).or_insert(next);
        }
        count = remap.len();
    }
    (ids, count)
}

fn check_categorical(data: &CategoricalDataset, x: usize, y: usize, z: &[usize]) -> Result<()> {
    let d = data.n_vars();
    if x == y || x >= d || y >= d || z.iter().any(|&k| k == x || k == y || k >= d) {
        return Err(Error::Precondition(format!(
            "categorical test of ({x}, {y}) given {z:?}"
        )));
    }
    Ok(())
}

/// Stratified likelihood-ratio test of `x ⊥ y | z`.
///
/// Degrees of freedom are `(|x|-1)(|y|-1)` per observed stratum of `z`.
pub fn g2_test(data: &CategoricalDataset, x: usize, y: usize, z: &[usize]) -> Result<TestResult> {
    check_categorical(data, x, y, z)?;
    // Fixed summation order keeps the result bitwise symmetric in (x, y).
    let t = StratifiedTable::build(data, x.min(y), x.max(y), z);
    let mut g2 = 0.0;
    for s in 0..t.strata {
        let (row, col, total) = t.margins(s);
        let cells = t.stratum(s);
        for a in 0..t.rx {
            for b in 0..t.ry {
                let o = cells[a * t.ry + b] as f64;
                if o > 0.0 {
                    let e = row[a] * col[b] / total;
                    g2 += o * (o / e).ln();
                }
            }
        }
    }
    let statistic = (2.0 * g2).max(0.0);
    let dof = ((t.rx - 1) * (t.ry - 1) * t.strata).max(1);
    Ok(TestResult {
        statistic,
        dof,
        log_pvalue: dist::ln_chi2_sf(statistic, dof as f64),
    })
}

/// Stratified Pearson X² test of `x ⊥ y | z`. Cells with zero expected
/// count are skipped and each one removes a degree of freedom.
pub fn x2_test(data: &CategoricalDataset, x: usize, y: usize, z: &[usize]) -> Result<TestResult> {
    check_categorical(data, x, y, z)?;
    // Fixed summation order keeps the result bitwise symmetric in (x, y).
    let t = StratifiedTable::build(data, x.min(y), x.max(y), z);
    let mut x2 = 0.0;
    let mut skipped = 0usize;
    let mut used = 0usize;
    for s in 0..t.strata {
        let (row, col, total) = t.margins(s);
        let cells = t.stratum(s);
        for a in 0..t.rx {
            for b in 0..t.ry {
                let e = if total > 0.0 { row[a] * col[b] / total } else { 0.0 };
                if e > 0.0 {
                    let o = cells[a * t.ry + b] as f64;
                    x2 += (o - e) * (o - e) / e;
                    used += 1;
                } else {
                    skipped += 1;
                }
            }
        }
    }
    if used == 0 {
        return Err(Error::DegenerateTable);
    }
    let full = (t.rx - 1) * (t.ry - 1) * t.strata;
    let dof = full.saturating_sub(skipped).max(1);
    Ok(TestResult {
        statistic: x2,
        dof,
        log_pvalue: dist::ln_chi2_sf(x2, dof as f64),
    })
}

/// A conditional-independence test over the variables of one dataset.
pub trait CiTest: Sync {
    fn n_vars(&self) -> usize;
    fn test(&self, x: usize, y: usize, z: &[usize]) -> Result<TestResult>;
}

/// Fisher z (or Spearman) test backed by a shared correlation matrix.
#[derive(Clone, Debug)]
pub struct GaussianCi {
    corr: Arc<CorrelationMatrix>,
    n: usize,
    null_ref: NullReference,
}

impl GaussianCi {
    /// The test flavour follows `corr.kind()`.
    pub fn new(corr: Arc<CorrelationMatrix>, n: usize, null_ref: NullReference) -> Self {
        Self { corr, n, null_ref }
    }

    pub fn correlation(&self) -> &Arc<CorrelationMatrix> {
        &self.corr
    }
}

impl CiTest for GaussianCi {
    fn n_vars(&self) -> usize {
        self.corr.dim()
    }

    fn test(&self, x: usize, y: usize, z: &[usize]) -> Result<TestResult> {
        let r = partial_correlation(&self.corr, x, y, z)?;
        match self.corr.kind() {
            CorrelationKind::Pearson => fisher_z_test(r, self.n, z.len(), self.null_ref),
            CorrelationKind::Spearman => spearman_test(r, self.n, z.len(), self.null_ref),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CategoricalStatistic {
    G2,
    X2,
}

#[derive(Clone, Debug)]
pub struct CategoricalCi {
    data: Arc<CategoricalDataset>,
    statistic: CategoricalStatistic,
}

impl CategoricalCi {
    pub fn new(data: Arc<CategoricalDataset>, statistic: CategoricalStatistic) -> Self {
        Self { data, statistic }
    }
}

impl CiTest for CategoricalCi {
    fn n_vars(&self) -> usize {
        self.data.n_vars()
    }

    fn test(&self, x: usize, y: usize, z: &[usize]) -> Result<TestResult> {
        match self.statistic {
            CategoricalStatistic::G2 => g2_test(&self.data, x, y, z),
            CategoricalStatistic::X2 => x2_test(&self.data, x, y, z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_2x2(cells: [[u32; 2]; 2]) -> CategoricalDataset {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for _ in 0..cells[a][b] {
                    x.push(a as u32);
                    y.push(b as u32);
                }
            }
        }
        CategoricalDataset::from_columns(vec!["x".into(), "y".into()], vec![x, y]).unwrap()
    }

    #[test]
    fn fisher_z_at_zero() {
        let t = fisher_z_test(0.0, 50, 0, NullReference::Normal).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.log_pvalue, 0.0);
    }

    #[test]
    fn fisher_z_statistic_value() {
        let t = fisher_z_test(0.5, 103, 0, NullReference::Normal).unwrap();
        assert!((t.statistic - 0.5 * 3f64.ln() * 10.0).abs() < 1e-12);
        assert!((t.statistic - 5.4931).abs() < 1e-4);
        let oracle = statrs::function::erf::erfc(t.statistic / std::f64::consts::SQRT_2).ln();
        assert!((t.log_pvalue - oracle).abs() < 1e-9);
    }

    #[test]
    fn fisher_z_normal_and_t_converge() {
        let a = fisher_z_test(0.02, 10_000, 0, NullReference::Normal).unwrap();
        let b = fisher_z_test(0.02, 10_000, 0, NullReference::StudentT).unwrap();
        assert_eq!(a.statistic, b.statistic);
        assert_ne!(a.log_pvalue, b.log_pvalue);
        assert!((a.log_pvalue - b.log_pvalue).abs() < 1e-3);
    }

    #[test]
    fn fisher_z_needs_residual_dof() {
        assert!(matches!(
            fisher_z_test(0.1, 5, 2, NullReference::Normal),
            Err(Error::InsufficientSample { residual_dof: 0 })
        ));
        assert!(fisher_z_test(0.1, 5, 1, NullReference::Normal).is_ok());
    }

    #[test]
    fn spearman_statistic_is_scaled_fisher() {
        assert_eq!(spearman_test(0.0, 30, 0, NullReference::Normal).unwrap().statistic, 0.0);
        let s = spearman_test(0.3, 200, 2, NullReference::Normal).unwrap();
        let want = 1.029563 * 0.5 * (1.3f64 / 0.7).ln() * 195f64.sqrt();
        assert!((s.statistic - want).abs() < 1e-12);
        let p = fisher_z_test(0.3, 200, 2, NullReference::Normal).unwrap();
        assert!((s.statistic / p.statistic - SPEARMAN_FACTOR).abs() < 1e-15);
        assert!(s.log_pvalue < p.log_pvalue);
    }

    #[test]
    fn clamping_keeps_perfect_correlation_finite() {
        let t = fisher_z_test(1.0, 1000, 0, NullReference::Normal).unwrap();
        assert!(t.statistic.is_finite());
        assert!(t.log_pvalue.is_finite());
        assert!(t.log_pvalue < -1e4);
    }

    #[test]
    fn g2_and_x2_on_textbook_table() {
        let ds = table_2x2([[10, 20], [30, 40]]);
        // Oracle: direct summation with E = (12, 18, 28, 42).
        let cells = [(10.0, 12.0), (20.0, 18.0), (30.0, 28.0), (40.0, 42.0)];
        let g2_want: f64 = 2.0 * cells.iter().map(|&(o, e): &(f64, f64)| o * (o / e).ln()).sum::<f64>();
        let x2_want: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
        let g = g2_test(&ds, 0, 1, &[]).unwrap();
        let x = x2_test(&ds, 0, 1, &[]).unwrap();
        assert!((g.statistic - g2_want).abs() < 1e-12);
        assert!((g.statistic - 0.8042).abs() < 5e-4);
        assert_eq!(g.dof, 1);
        assert!((x.statistic - x2_want).abs() < 1e-12);
        assert!((x.statistic - 0.7937).abs() < 1e-4);
    }

    #[test]
    fn proportional_table_has_zero_statistic() {
        let ds = table_2x2([[10, 20], [30, 60]]);
        let g = g2_test(&ds, 0, 1, &[]).unwrap();
        let x = x2_test(&ds, 0, 1, &[]).unwrap();
        assert!(g.statistic.abs() < 1e-12);
        assert!(x.statistic.abs() < 1e-12);
        assert!(g.log_pvalue.abs() < 1e-9);
    }

    #[test]
    fn x2_skips_empty_row() {
        // x has three levels but level 2 never co-occurs within z = 1.
        let x = vec![0, 1, 2, 0, 1, 0, 1, 1];
        let y = vec![0, 1, 0, 1, 0, 0, 1, 1];
        let z = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let ds = CategoricalDataset::from_columns(
            vec!["x".into(), "y".into(), "z".into()],
            vec![x, y, z],
        )
        .unwrap();
        let t = x2_test(&ds, 0, 1, &[2]).unwrap();
        assert!(t.statistic.is_finite());
        assert!(t.dof >= 1);
    }

    #[test]
    fn tests_are_symmetric() {
        let ds = CategoricalDataset::from_columns(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                vec![0, 1, 2, 0, 1, 2, 0, 0, 1, 2],
                vec![1, 1, 0, 0, 1, 0, 1, 0, 0, 1],
                vec![0, 0, 1, 1, 0, 1, 1, 0, 1, 0],
            ],
        )
        .unwrap();
        for f in [g2_test, x2_test] {
            let a = f(&ds, 0, 1, &[2]).unwrap();
            let b = f(&ds, 1, 0, &[2]).unwrap();
            assert!((a.statistic - b.statistic).abs() < 1e-12);
            assert!((a.log_pvalue - b.log_pvalue).abs() < 1e-12);
        }
    }
}
