mod common;

use fedhc_core::data::ContinuousDataset;
use fedhc_core::robust::{
    concentration_step, consistency_factor, default_h, fast_mcd, mahalanobis_sq, reweighted_cutoffs, rmcd_outliers, remove_outliers,
    OutlierReport, LEVEL,
};
use fedhc_core::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn standard_normal(n: usize, d: usize, seed: u64) -> ContinuousDataset {
    let mut rng = common::rng(seed);
    let cols = (0..d).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
    ContinuousDataset::from_columns(ContinuousDataset::default_names(d), cols).unwrap()
}

/// Shifts the first `k` rows by `shift` in every coordinate.
fn shifted(data: &ContinuousDataset, k: usize, shift: f64) -> ContinuousDataset {
    let cols = (0..data.n_vars())
        .map(|j| {
            let mut c = data.column(j).to_vec();
            c[..k].iter_mut().for_each(|v| *v += shift);
            c
        })
        .collect();
    ContinuousDataset::from_columns(data.names().to_vec(), cols).unwrap()
}

#[test]
fn default_h_is_half_plus_dimension() {
    assert_eq!(default_h(100, 5), 53);
    assert_eq!(default_h(2000, 5), 1003);
}

fn max_abs_error(scatter: &[f64], d: usize) -> f64 {
    (0..d * d)
        .map(|k| (scatter[k] - if k % (d + 1) == 0 { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// Mean and unbiased covariance of the weight-1 rows, the covariance
/// scaled by the normal consistency factor for the 0.975 trimming level.
fn reweighted_fit(data: &ContinuousDataset, report: &OutlierReport) -> (Vec<f64>, Vec<f64>) {
    let d = data.n_vars();
    let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| report.weights[i] == 1).collect();
    let m = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|&i| data.get(i, j)).sum::<f64>() / m).collect();
    let c = consistency_factor(d, LEVEL);
    let mut scatter = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            let s: f64 = rows.iter().map(|&i| (data.get(i, a) - mean[a]) * (data.get(i, b) - mean[b])).sum();
            scatter[a * d + b] = c * s / (m - 1.0);
        }
    }
    (mean, scatter)
}

#[test]
fn clean_data_gives_accurate_location_and_scatter() {
    let seeds = 40u64;
    let mut location_sum = 0.0;
    let mut diag_sum = 0.0;
    let mut good = 0;
    for s in 0..seeds {
        let data = standard_normal(2000, 5, s);
        let est = fast_mcd(&data, None, s).unwrap();
        // The raw estimator is unbiased but inefficient; only its averages
        // are held to tight bounds.
        assert!(max_abs_error(&est.scatter, 5) < 0.5, "seed {s}");
        location_sum += est.location.iter().sum::<f64>();
        diag_sum += (0..5).map(|i| est.scatter[i * 6]).sum::<f64>();

        let (mean, scatter) = reweighted_fit(&data, &rmcd_outliers(&data, s).unwrap());
        if mean.iter().all(|m| m.abs() < 0.1) && max_abs_error(&scatter, 5) < 0.15 {
            good += 1;
        }
    }
    let cells = (5 * seeds) as f64;
    assert!((location_sum / cells).abs() < 0.02, "mean location {}", location_sum / cells);
    assert!((diag_sum / cells - 1.0).abs() < 0.05, "mean diagonal {}", diag_sum / cells);
    assert!(good as f64 >= 0.95 * seeds as f64, "{good}/{seeds}");
}

#[test]
fn support_excludes_shifted_rows() {
    let n = 1000;
    let k = n / 20;
    for s in 0..20 {
        let data = shifted(&standard_normal(n, 4, 50 + s), k, 10.0);
        let est = fast_mcd(&data, None, s).unwrap();
        assert!(est.support.iter().all(|&i| i >= k), "seed {s}");
    }
}

#[test]
fn clean_flag_rate_is_near_nominal() {
    let seeds = 20;
    let good = (0..seeds)
        .filter(|&s| {
            let report = rmcd_outliers(&standard_normal(5000, 10, 200 + s), s).unwrap();
            report.outlier_indices.len() as f64 / 5000.0 <= 0.05
        })
        .count();
    assert!(good as f64 >= 0.95 * seeds as f64, "{good}/{seeds}");
}

#[test]
fn contaminated_rows_are_flagged() {
    let n = 2000;
    let k = n / 20;
    for s in 0..10 {
        let data = shifted(&standard_normal(n, 5, 300 + s), k, 10.0);
        let report = rmcd_outliers(&data, s).unwrap();
        assert!((0..k).all(|i| report.is_outlier(i)), "seed {s}");
        let false_flags = (k..n).filter(|&i| report.is_outlier(i)).count();
        assert!(false_flags as f64 <= 0.05 * (n - k) as f64, "seed {s}: {false_flags}");
    }
}

#[test]
fn report_is_consistent_with_its_cutoffs() {
    let data = shifted(&standard_normal(800, 3, 9), 30, 6.0);
    let report = rmcd_outliers(&data, 9).unwrap();
    assert_eq!(report.w, report.weights.iter().map(|&w| usize::from(w)).sum::<usize>());
    assert!(report.w <= report.n_rows());
    let (c1, c0) = reweighted_cutoffs(3, report.w).unwrap();
    assert_eq!((c1, c0), (report.cutoff_w1, report.cutoff_w0));
    let expected: Vec<usize> = (0..800)
        .filter(|&i| {
            let cut = if report.weights[i] == 1 { c1 } else { c0 };
            report.distances[i] > cut
        })
        .collect();
    assert_eq!(report.outlier_indices, expected);
    assert!(report.distances.iter().all(|&d| d >= 0.0));
}

#[test]
fn mcd_is_affine_equivariant() {
    let data = standard_normal(300, 3, 77);
    let base = fast_mcd(&data, None, 5).unwrap();
    let mut rng = common::rng(78);
    for _ in 0..100 {
        let a = loop {
            let m = DMatrix::<f64>::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
            if m.determinant().abs() > 0.1 {
                break m;
            }
        };
        let b = DVector::<f64>::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
        let cols = (0..3)
            .map(|j| {
                (0..300)
                    .map(|i| (0..3).map(|k| a[(j, k)] * data.get(i, k)).sum::<f64>() + b[j])
                    .collect()
            })
            .collect();
        let moved = ContinuousDataset::from_columns(data.names().to_vec(), cols).unwrap();
        let est = fast_mcd(&moved, None, 5).unwrap();

        let mu = &a * DVector::from_column_slice(&base.location) + &b;
        let sigma = &a * DMatrix::from_row_slice(3, 3, &base.scatter) * a.transpose();
        let scale = sigma.amax();
        for j in 0..3 {
            assert!((est.location[j] - mu[j]).abs() <= 1e-6 * mu.amax().max(1.0));
            for k in 0..3 {
                assert!((est.scatter[j * 3 + k] - sigma[(j, k)]).abs() <= 1e-6 * scale);
            }
        }
    }
}

#[test]
fn support_holds_the_smallest_distances() {
    let data = shifted(&standard_normal(600, 4, 12), 20, 8.0);
    let est = fast_mcd(&data, None, 12).unwrap();
    let dist = mahalanobis_sq(&data, &est.location, &est.scatter).unwrap();
    let worst_inside = est.support.iter().map(|&i| dist[i]).fold(f64::MIN, f64::max);
    let inside: std::collections::BTreeSet<usize> = est.support.iter().copied().collect();
    let best_outside = (0..600).filter(|i| !inside.contains(i)).map(|i| dist[i]).fold(f64::MAX, f64::min);
    assert!(worst_inside <= best_outside * (1.0 + 1e-9));
    assert_eq!(est.support.len(), default_h(600, 4));
}

#[test]
fn concentration_steps_never_increase_the_determinant() {
    let data = shifted(&standard_normal(400, 3, 21), 40, 5.0);
    let h = default_h(400, 3);
    let mut rng = common::rng(22);
    for _ in 0..20 {
        let mut support: Vec<usize> = rand::seq::index::sample(&mut rng, 400, h).into_vec();
        for _ in 0..10 {
            let (next, before, after) = concentration_step(&data, &support, h).unwrap();
            assert!(after <= before + 1e-10, "{after} > {before}");
            support = next;
        }
    }
}

#[test]
fn too_few_rows_is_a_precondition_error() {
    let data = standard_normal(4, 3, 1);
    assert!(matches!(fast_mcd(&data, None, 0), Err(Error::Precondition(_))));
    assert!(matches!(rmcd_outliers(&data, 0), Err(Error::Precondition(_))));
}

fn report(flags: &[usize], n: usize) -> OutlierReport {
    OutlierReport {
        weights: vec![1; n],
        distances: vec![0.0; n],
        cutoff_w1: 1.0,
        cutoff_w0: 1.0,
        outlier_indices: flags.to_vec(),
        w: n,
    }
}

#[test]
fn removing_outliers() {
    let data = standard_normal(100, 2, 3);
    let (same, map) = remove_outliers(&data, &report(&[], 100)).unwrap();
    assert_eq!(same, data);
    assert_eq!(map, (0..100).collect::<Vec<_>>());

    let (kept, map) = remove_outliers(&data, &report(&[3, 50, 99], 100)).unwrap();
    assert_eq!(kept.n_rows(), 97);
    for (new, &old) in map.iter().enumerate() {
        assert_eq!(kept.row(new), data.row(old));
    }
    assert!(!map.contains(&50));

    let all: Vec<usize> = (0..100).collect();
    assert!(matches!(remove_outliers(&data, &report(&all, 100)), Err(Error::EmptyResult)));
}
