use std::fs;
use std::path::Path;

use crate::data::ContinuousDataset;
use crate::error::{Error, Result};

/// Partial correlations are kept strictly inside (-1, 1) by this margin.
pub const CLAMP: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

/// Symmetric correlation matrix with unit diagonal, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    kind: CorrelationKind,
    d: usize,
    values: Vec<f64>,
}

impl CorrelationMatrix {
    /// Wraps a precomputed matrix after checking shape, symmetry, unit
    /// diagonal and range.
    pub fn from_values(kind: CorrelationKind, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != d * d {
            return Err(Error::InvalidDataset(format!(
                "correlation matrix needs {} entries, got {}",
                d * d,
                values.len()
            )));
        }
        for i in 0..d {
            if (values[i * d + i] - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDataset(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..d {
                let v = values[i * d + j];
                if !v.is_finite() || v.abs() > 1.0 + 1e-9 || v != values[j * d + i] {
                    return Err(Error::InvalidDataset(format!(
                        "entry ({i}, {j}) breaks symmetry or range"
                    )));
                }
            }
        }
        Ok(Self { kind, d, values })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> CorrelationKind {
        self.kind
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Writes the matrix as headerless CSV with round-trippable floats.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.d {
            let row: Vec<String> = (0..self.d).map(|j| format!("{:?}", self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: &Path, kind: CorrelationKind) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut values = Vec::new();
        let mut rows = 0;
        for (r, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            rows += 1;
            for (c, cell) in line.split(',').enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                    row: r,
                    column: c.to_string(),
                    value: cell.to_string(),
                })?;
                values.push(v);
            }
        }
        Self::from_values(kind, rows, values)
    }
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(col: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..col.len()).collect();
    idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut ranks = vec![0.0; col.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && col[idx[end]] == col[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Rows per block when accumulating cross-products; keeps the centred
/// block of every column in cache.
const BLOCK_ROWS: usize = 2048;

pub fn correlation_matrix(data: &ContinuousDataset, kind: CorrelationKind) -> CorrelationMatrix {
    let d = data.n_vars();
    let n = data.n_rows();
    let ranks: Vec<Vec<f64>>;
    let cols: Vec<&[f64]> = match kind {
        CorrelationKind::Pearson => (0..d).map(|j| data.column(j)).collect(),
        CorrelationKind::Spearman => {
            ranks = (0..d).map(|j| average_ranks(data.column(j))).collect();
            ranks.iter().map(Vec::as_slice).collect()
        }
    };
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut cross = vec![0.0; d * d];
    let mut block = vec![0.0; d * BLOCK_ROWS];
    for start in (0..n).step_by(BLOCK_ROWS) {
        let len = BLOCK_ROWS.min(n - start);
        for (j, col) in cols.iter().enumerate() {
            let dst = &mut block[j * BLOCK_ROWS..j * BLOCK_ROWS + len];
            for (b, v) in dst.iter_mut().zip(&col[start..start + len]) {
                *b = v - means[j];
            }
        }
        for i in 0..d {
            let bi = &block[i * BLOCK_ROWS..i * BLOCK_ROWS + len];
            for j in i..d {
                cross[i * d + j] += dot(bi, &block[j * BLOCK_ROWS..j * BLOCK_ROWS + len]);
            }
        }
    }
    let mut values = vec![0.0; d * d];
    for i in 0..d {
        values[i * d + i] = 1.0;
        for j in i + 1..d {
            let r = (cross[i * d + j] / (cross[i * d + i] * cross[j * d + j]).sqrt()).clamp(-1.0, 1.0);
            values[i * d + j] = r;
            values[j * d + i] = r;
        }
    }
    CorrelationMatrix { kind, d, values }
}

fn check_indices(r: &CorrelationMatrix, i: usize, j: usize, z: &[usize]) -> Result<()> {
    let d = r.dim();
    if i == j || i >= d || j >= d || z.iter().any(|&k| k == i || k == j || k >= d) {
        return Err(Error::Precondition(format!(
            "partial correlation of ({i}, {j}) given {z:?}"
        )));
    }
    Ok(())
}

#[inline]
fn clamp(r: f64) -> f64 {
    r.clamp(-1.0 + CLAMP, 1.0 - CLAMP)
}

/// Partial correlation of variables `i` and `j` given `z`, from the
/// correlation matrix alone.
///
/// Uses the direct entry for empty `z`, the first-order closed form for one
/// conditioner and the precision-matrix form otherwise.
pub fn partial_correlation(r: &CorrelationMatrix, i: usize, j: usize, z: &[usize]) -> Result<f64> {
    check_indices(r, i, j, z)?;
    match z {
        [] => Ok(clamp(r.get(i, j))),
        &[k] => {
            let (rij, rik, rjk) = (r.get(i, j), r.get(i, k), r.get(j, k));
            let denom = ((1.0 - rik * rik) * (1.0 - rjk * rjk)).sqrt();
            if !(denom > PIVOT_TOL) {
                return Err(Error::SingularConditioningSet);
            }
            Ok(clamp((rij - rik * rjk) / denom))
        }
        _ => partial_correlation_inverse(r, i, j, z),
    }
}

/// `-A12 / sqrt(A11 A22)` where `A` is the inverse of the correlation
/// submatrix ordered `(i, j, z...)`. Valid for any `z`, including the
/// sizes `partial_correlation` handles in closed form.
pub fn partial_correlation_inverse(
    r: &CorrelationMatrix,
    i: usize,
    j: usize,
    z: &[usize],
) -> Result<f64> {
    check_indices(r, i, j, z)?;
    let mut vars = Vec::with_capacity(z.len() + 2);
    vars.push(i);
    vars.push(j);
    vars.extend_from_slice(z);
    let m = vars.len();
    // Augmented system [S | e1 e2]; only the first two columns of the
    // inverse are needed.
    let w = m + 2;
    let mut a = vec![0.0; m * w];
    for (p, &vp) in vars.iter().enumerate() {
        for (q, &vq) in vars.iter().enumerate() {
            a[p * w + q] = r.get(vp, vq);
        }
    }
    a[m] = 1.0;
    a[w + m + 1] = 1.0;
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&x, &y| a[x * w + col].abs().total_cmp(&a[y * w + col].abs()))
            .unwrap();
        if a[piv * w + col].abs() < PIVOT_TOL {
            return Err(Error::SingularConditioningSet);
        }
        if piv != col {
            for c in 0..w {
                a.swap(piv * w + c, col * w + c);
            }
        }
        let p = a[col * w + col];
        for row in 0..m {
            if row == col {
                continue;
            }
            let f = a[row * w + col] / p;
            if f != 0.0 {
                for c in col..w {
                    a[row * w + c] -= f * a[col * w + c];
                }
            }
        }
    }
    // Row p of the inverse is a[p, m..] / a[p, p].
    let inv = |p: usize, q: usize| a[p * w + m + q] / a[p * w + p];
    let (a11, a22, a12) = (inv(0, 0), inv(1, 1), inv(0, 1));
    if !(a11 > 0.0 && a22 > 0.0) {
        return Err(Error::SingularConditioningSet);
    }
    Ok(clamp(-a12 / (a11 * a22).sqrt()))
}
