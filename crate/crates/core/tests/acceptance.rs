//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach the output.

mod common;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use common::*;
use lur_core::explain::{
    covers_from_rows, enumerate_shapley, ensemble_expected_value, ensemble_shap_row, model_function, tree_shap,
    Background,
};
use lur_core::features::{
    build_predictor_matrix, default_specs, length_within_buffer, Location, DEFAULT_DISTANCE_CEILING,
};
use lur_core::geodata::{ClassFilter, Geometry, LayerKind, Raster, VectorFeature, VectorLayer};
use lur_core::geometry::{Polygon, Pt};
use lur_core::mapping::{exposure_table, make_grid, ExposureTable, NoiseGrid, DEFAULT_THRESHOLDS};
use lur_core::matrix::Matrix;
use lur_core::models::{
    fit_enet, fit_gbt, fit_model, fit_rf, fit_svr, rbf, Family, GbtParams, GridSpec, Hyperparams, ModelSpec,
    Node, Pipeline, RfParams, SvrParams, TrainedModel, DEFAULT_SVR_CAP,
};
use lur_core::spatialstats::{inverse_distance_weights, morans_i, permutation_test};
use lur_core::synth;
use lur_core::validation::{benjamini_hochberg, make_fold_plan, make_fold_plan_with, nested_cv, wilcoxon_rank_sum, CvEntry};

// criterion 1
const MIN_GBT_R2: f64 = 0.60;
const MIN_RMSE_GAP: f64 = 0.3;
const MAX_RUNTIME_S: f64 = 600.0;
// criterion 2
const SHAP_ORACLE_TOL: f64 = 1e-8;
const LOCAL_ACCURACY_TOL: f64 = 1e-6;
const SHAP_FIXTURES: usize = 40;
// criterion 3
const GEOMETRY_REL_TOL: f64 = 1e-3;
const GEOMETRY_FIXTURES: usize = 1000;
const ORACLE_SAMPLES: usize = 200_000;
const CHORD_TOL: f64 = 1e-9;
// criterion 4
const WILCOXON_TOL: f64 = 1e-12;
const BH_VECTORS: usize = 1000;
const BH_TOL: f64 = 1e-12;
const MORAN_TOL: f64 = 1e-12;
const FPR_TRIALS: usize = 200;
const FPR_RANGE: (f64, f64) = (0.02, 0.09);
// criterion 5
const ENET_PROBLEMS: usize = 50;
const SUBGRADIENT_TOL: f64 = 1e-5;
const RIDGE_TOL: f64 = 1e-8;
const SVR_KKT_TOL: f64 = 1e-3;
const SVR_ORACLE_REL_TOL: f64 = 1e-3;
const INVARIANCE_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: Vec<String>, summary: String) -> Outcome {
    if failures.is_empty() {
        Outcome { pass: true, detail: summary }
    } else {
        let keep = if std::env::var_os("ACCEPTANCE_VERBOSE").is_some() { failures.len() } else { 5 };
        let shown: Vec<&str> = failures.iter().take(keep).map(String::as_str).collect();
        Outcome {
            pass: false,
            detail: format!("{summary}; {} failure(s): {}", failures.len(), shown.join(" | ")),
        }
    }
}

fn synthetic_recovery() -> Outcome {
    let t0 = Instant::now();
    let ds = synth::generate(7, 232, 5).expect("synth");
    let layers = ds.layer_set().expect("layers");
    let locations: Vec<Location> = ds.sites.iter().map(|s| Location::new(s.site_id.clone(), s.x, s.y)).collect();
    let pm = build_predictor_matrix(&locations, &default_specs(), &layers, DEFAULT_DISTANCE_CEILING).expect("features");
    let y: Vec<f64> = ds.sites.iter().map(|s| s.mean_laeq).collect();
    let cities: Vec<String> = ds.sites.iter().map(|s| s.city.clone()).collect();
    let d = pm.column_names.len();
    let lm = GridSpec::default();
    // reduced boosting grid, see README
    let gbt = GridSpec {
        gbt_eta: vec![0.05],
        gbt_max_depth: vec![2, 4],
        gbt_rounds: vec![300],
        gbt_subsample: vec![0.7],
        gbt_reg_lambda: vec![1.0],
        ..GridSpec::default()
    };
    let entries = vec![
        CvEntry::new("LM", lm.grid(Family::Lm, d)),
        CvEntry::new("GBT", gbt.grid(Family::Gbt, d)),
    ];
    let plan = make_fold_plan(y.len(), 7).expect("plan");
    let report = nested_cv(&pm.values, &pm.column_names, &y, &cities, &entries, &plan).expect("cv");
    let secs = t0.elapsed().as_secs_f64();
    let lm_s = report.summary("LM").unwrap();
    let gbt_s = report.summary("GBT").unwrap();
    let r2 = gbt_s.mean_r2.unwrap_or(f64::NAN);
    let gap = lm_s.mean_rmse - gbt_s.mean_rmse;
    let mut f = Vec::new();
    if !(r2 >= MIN_GBT_R2) {
        f.push(format!("GBT mean R2 {r2:.3} < {MIN_GBT_R2}"));
    }
    if !(gap >= MIN_RMSE_GAP) {
        f.push(format!("RMSE gap {gap:.3} < {MIN_RMSE_GAP}"));
    }
    if secs > MAX_RUNTIME_S {
        f.push(format!("runtime {secs:.0}s > {MAX_RUNTIME_S}s"));
    }
    outcome(
        f,
        format!(
            "GBT R2 {r2:.3} RMSE {:.3}, LM RMSE {:.3} (gap {gap:.3}), {} threads, {secs:.0}s",
            gbt_s.mean_rmse,
            lm_s.mean_rmse,
            rayon::current_num_threads()
        ),
    )
}

fn shapley_correctness() -> Outcome {
    let mut f = Vec::new();
    let mut worst = 0.0f64;
    let mut worst_acc = 0.0f64;
    let mut dummies = 0usize;
    for k in 0..SHAP_FIXTURES {
        let mut r = rng(1000 + k as u64);
        let d = r.random_range(2..=10);
        let n_used = r.random_range(1..=d.min(5));
        let mut used: Vec<usize> = rand::seq::index::sample(&mut r, d, n_used).into_vec();
        used.sort_unstable();
        let levels = product_levels(&mut r, n_used, 50);
        let bg = product_background(&mut r, d, &used, &levels);
        let ens = random_ensemble(&mut r, &used, &levels);
        let covers: Vec<Vec<f64>> = ens.trees.iter().map(|t| covers_from_rows(t, &bg)).collect();
        let base = ensemble_expected_value(&ens, &covers);
        let bg_mean = bg.rows().map(|row| ens.predict_row(row)).sum::<f64>() / bg.n_rows() as f64;
        worst = worst.max((base - bg_mean).abs());
        for e in 0..6 {
            // explained rows: split features on the level grid, the rest arbitrary
            let x: Vec<f64> = (0..d)
                .map(|j| match used.iter().position(|&u| u == j) {
                    Some(p) => levels[p][r.random_range(0..levels[p].len())],
                    None => r.random_range(-7.0..7.0),
                })
                .collect();
            let phi = ensemble_shap_row(&ens, &covers, &x, d);
            let oracle = enumerate_shapley(|z| ens.predict_row(z), &x, &bg, 12).unwrap();
            for j in 0..d {
                let err = (phi[j] - oracle[j]).abs();
                worst = worst.max(err);
                if err > SHAP_ORACLE_TOL {
                    f.push(format!("fixture {k} row {e} feature {j}: {} vs {}", phi[j], oracle[j]));
                }
                if !used.contains(&j) {
                    dummies += 1;
                    if phi[j] != 0.0 {
                        f.push(format!("fixture {k}: unused feature {j} got {}", phi[j]));
                    }
                }
            }
            let acc = (base + phi.iter().sum::<f64>() - ens.predict_row(&x)).abs();
            worst_acc = worst_acc.max(acc);
            if acc > LOCAL_ACCURACY_TOL {
                f.push(format!("fixture {k} row {e}: local accuracy {acc:e}"));
            }
        }
    }

    // fitted models through the public entry point
    let mut r = rng(77);
    let names: Vec<String> = ["a", "b", "c", "d", "e", "const"].map(String::from).to_vec();
    let n = 120;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut v: Vec<f64> = (0..5).map(|_| r.random_range(0.0..10.0)).collect();
            v[1] = v[1].powi(2);
            v.push(3.0);
            v
        })
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let y: Vec<f64> = rows.iter().map(|v| 50.0 + v[0] + 0.05 * v[1] - 2.0 * (v[2] > 5.0) as i32 as f64 + 0.3 * v[3] * v[4] / 10.0).collect();
    let levels: Vec<Vec<f64>> = vec![vec![2.0, 7.0], vec![9.0, 49.0], vec![3.0, 8.0], vec![1.0, 6.0], vec![4.0, 9.0]];
    let bg = product_background(&mut r, 6, &[0, 1, 2, 3, 4], &levels);
    let bg_rows: Vec<Vec<f64>> = bg.rows().map(|row| {
        let mut v = row.to_vec();
        v[5] = 3.0;
        v
    }).collect();
    let bg = Matrix::from_rows(&bg_rows).unwrap();
    let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let cities = vec!["c".to_string(); n];
    let hps = [
        Hyperparams::Gbt { eta: 0.1, max_depth: 3, rounds: 60, subsample: 0.8, colsample: 1.0, reg_lambda: 1.0, reg_gamma: 0.0 },
        Hyperparams::Rf { n_trees: 40, mtry: 2, min_node: 5 },
    ];
    for hp in hps {
        let model = fit_model(&ModelSpec::new(hp.clone(), 5), &x, &names, &y).unwrap();
        for (label, background) in [
            ("training", Background::TrainingCovers),
            ("rows", Background::Rows { x: &bg, names: &names }),
        ] {
            let s = tree_shap(&model, &x, &names, &ids, &cities, background).unwrap();
            let acc = s.max_additivity_error();
            worst_acc = worst_acc.max(acc);
            if acc > LOCAL_ACCURACY_TOL {
                f.push(format!("{} {label}: local accuracy {acc:e}", model.family));
            }
            let cj = s.feature_index("const").unwrap();
            dummies += 1;
            if s.values.column(cj).iter().any(|&v| v != 0.0) {
                f.push(format!("{}: constant feature attributed", model.family));
            }
        }
        // the two formulations coincide for rows drawn from the product background
        let bg_ids: Vec<String> = (0..bg.n_rows()).map(|i| format!("b{i}")).collect();
        let bg_cities = vec!["c".to_string(); bg.n_rows()];
        let s = tree_shap(&model, &bg, &names, &bg_ids, &bg_cities, Background::Rows { x: &bg, names: &names }).unwrap();
        let fm = model_function(&model);
        for i in (0..bg.n_rows()).step_by(3) {
            let oracle = enumerate_shapley(&fm, bg.row(i), &bg, 12).unwrap();
            for (j, o) in oracle.iter().enumerate() {
                let err = (s.values.get(i, j) - o).abs();
                worst = worst.max(err);
                if err > SHAP_ORACLE_TOL {
                    f.push(format!("{} row {i} feature {j}: {} vs {o}", model.family, s.values.get(i, j)));
                }
            }
        }
    }
    outcome(
        f,
        format!(
            "{SHAP_FIXTURES} random ensembles + fitted GBT/RF: max |treeshap - enumeration| {worst:.1e}, \
             max additivity error {worst_acc:.1e}, {dummies} dummy checks"
        ),
    )
}

fn geometry_oracle() -> Outcome {
    let mut r = rng(3);
    let mut f = Vec::new();
    let mut worst_rel = 0.0f64;
    for k in 0..GEOMETRY_FIXTURES {
        let c = Pt::new(r.random_range(-100.0..100.0), r.random_range(-100.0..100.0));
        let radius = r.random_range(1.0..150.0);
        let a = Pt::new(r.random_range(-250.0..250.0), r.random_range(-250.0..250.0));
        let b = Pt::new(r.random_range(-250.0..250.0), r.random_range(-250.0..250.0));
        let layer = VectorLayer::new(
            LayerKind::Polyline,
            vec![VectorFeature { geometry: Geometry::Polyline(vec![a, b]), class_tag: "primary".into() }],
        )
        .unwrap();
        let got = length_within_buffer(c, radius, &layer, &ClassFilter::All).unwrap();
        let oracle = dense_length(a, b, c, radius, ORACLE_SAMPLES);
        // the sampled oracle resolves lengths to two sample spacings
        let resolution = 2.0 * a.dist(b) / ORACLE_SAMPLES as f64;
        let err = (got - oracle).abs();
        if oracle > 0.0 {
            worst_rel = worst_rel.max((err - resolution).max(0.0) / oracle);
        }
        if err > GEOMETRY_REL_TOL * oracle + resolution {
            f.push(format!("fixture {k}: {got} vs oracle {oracle}"));
        }
    }
    let mut worst_chord = 0.0f64;
    for k in 0..200 {
        let c = Pt::new(r.random_range(-1e3..1e3), r.random_range(-1e3..1e3));
        let radius = r.random_range(1.0..300.0);
        let dist = r.random_range(0.0..radius * 0.999);
        let theta: f64 = r.random_range(0.0..std::f64::consts::TAU);
        let (ux, uy) = (theta.cos(), theta.sin());
        let foot = Pt::new(c.x - uy * dist, c.y + ux * dist);
        let a = Pt::new(foot.x - 3.0 * radius * ux, foot.y - 3.0 * radius * uy);
        let b = Pt::new(foot.x + 2.0 * radius * ux, foot.y + 2.0 * radius * uy);
        let layer = VectorLayer::new(
            LayerKind::Polyline,
            vec![VectorFeature { geometry: Geometry::Polyline(vec![a, b]), class_tag: "x".into() }],
        )
        .unwrap();
        let got = length_within_buffer(c, radius, &layer, &ClassFilter::All).unwrap();
        // distance of the constructed line from c, recomputed from the endpoints
        let d_line = ((b.x - a.x) * (a.y - c.y) - (a.x - c.x) * (b.y - a.y)).abs() / a.dist(b);
        let want = 2.0 * (radius * radius - d_line * d_line).sqrt();
        worst_chord = worst_chord.max((got - want).abs());
        if (got - want).abs() > CHORD_TOL {
            f.push(format!("chord {k}: {got} vs {want}"));
        }
    }
    outcome(
        f,
        format!(
            "{GEOMETRY_FIXTURES} segment/disk fixtures, worst excess relative error {worst_rel:.1e}; \
             200 chords, worst error {worst_chord:.1e}"
        ),
    )
}

fn statistics() -> Outcome {
    let mut f = Vec::new();
    // exact rank-sum test over every rank assignment with 3 <= m, n <= 8
    let mut configs = 0usize;
    for m in 3..=8 {
        for n in 3..=8 {
            let total = m + n;
            let sums = all_rank_sums(m, total);
            for mask in 0u32..(1 << total) {
                if mask.count_ones() as usize != m {
                    continue;
                }
                let a: Vec<f64> = (0..total).filter(|i| mask & (1 << i) != 0).map(|i| (i + 1) as f64 * 1.5).collect();
                let b: Vec<f64> = (0..total).filter(|i| mask & (1 << i) == 0).map(|i| (i + 1) as f64 * 1.5).collect();
                let w: usize = (0..total).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
                let got = wilcoxon_rank_sum(&a, &b).unwrap();
                let want = enumerated_p(&sums, w);
                configs += 1;
                if (got - want).abs() > WILCOXON_TOL {
                    f.push(format!("m={m} n={n} w={w}: {got} vs {want}"));
                }
            }
        }
    }
    let mut r = rng(11);
    for k in 0..BH_VECTORS {
        let m = r.random_range(1..=40);
        let p: Vec<f64> = (0..m)
            .map(|_| if r.random::<f64>() < 0.3 { r.random::<f64>() * 0.01 } else { r.random::<f64>() })
            .collect();
        let got = benjamini_hochberg(&p).unwrap();
        let want = bh_min_scan(&p);
        if got.iter().zip(&want).any(|(g, w)| (g - w).abs() > BH_TOL) {
            f.push(format!("BH vector {k}"));
        }
    }
    let mut worst_moran = 0.0f64;
    for n in 3..=50 {
        for (power, rs) in [(1.0, true), (1.0, false), (2.0, true), (2.0, false)] {
            let pts: Vec<Pt> = (0..n).map(|_| Pt::new(r.random_range(0.0..1e3), r.random_range(0.0..1e3))).collect();
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin() * 4.0 + normal(&mut r)).collect();
            let w = inverse_distance_weights(&pts, power, rs).unwrap();
            let got = morans_i(&v, &w).unwrap();
            let want = moran_double_loop(&v, &pts, power, rs);
            worst_moran = worst_moran.max((got - want).abs());
            if (got - want).abs() > MORAN_TOL {
                f.push(format!("Moran n={n} p={power} rs={rs}: {got} vs {want}"));
            }
        }
    }
    let mut rejections = 0usize;
    for t in 0..FPR_TRIALS {
        let mut r = rng(5000 + t as u64);
        let pts: Vec<Pt> = (0..40).map(|_| Pt::new(r.random_range(0.0..1e3), r.random_range(0.0..1e3))).collect();
        let v: Vec<f64> = (0..40).map(|_| normal(&mut r)).collect();
        let w = inverse_distance_weights(&pts, 1.0, true).unwrap();
        let test = permutation_test(&v, &w, 199, t as u64).unwrap();
        if test.p_two_sided <= 0.05 {
            rejections += 1;
        }
    }
    let fpr = rejections as f64 / FPR_TRIALS as f64;
    if !(FPR_RANGE.0..=FPR_RANGE.1).contains(&fpr) {
        f.push(format!("false-positive rate {fpr:.3} outside {FPR_RANGE:?}"));
    }
    outcome(
        f,
        format!(
            "Wilcoxon {configs} rank configurations, BH {BH_VECTORS} vectors, Moran worst {worst_moran:.1e} \
             (n 3..50), permutation FPR {fpr:.3} over {FPR_TRIALS} trials"
        ),
    )
}

fn learner_obligations() -> Outcome {
    let mut f = Vec::new();
    let mut r = rng(21);
    // elastic net subgradient optimality
    let mut worst_sub = 0.0f64;
    for k in 0..ENET_PROBLEMS {
        let n = r.random_range(20..=60);
        let d = r.random_range(2..=10);
        let (x, y) = regression_data(&mut r, n, d, 1.0);
        let alpha = match k % 5 {
            0 => 0.0,
            1 => 1.0,
            _ => r.random_range(0.0..1.0),
        };
        let lambda = 10f64.powf(r.random_range(-3.0..0.5));
        let fit = fit_enet(&x, &y, alpha, lambda).unwrap();
        let res: Vec<f64> = (0..n).map(|i| y[i] - fit.predict_row(x.row(i))).collect();
        for j in 0..d {
            let g = (0..n).map(|i| x.get(i, j) * res[i]).sum::<f64>() / n as f64;
            let b = fit.coefs[j];
            let viol = if b != 0.0 {
                (g - lambda * alpha * b.signum() - lambda * (1.0 - alpha) * b).abs()
            } else {
                (g.abs() - lambda * alpha).max(0.0)
            };
            worst_sub = worst_sub.max(viol);
            if viol >= SUBGRADIENT_TOL {
                f.push(format!("ENet problem {k} coef {j}: violation {viol:e}"));
            }
        }
    }
    // ridge limit against the closed form on centred data
    let mut worst_ridge = 0.0f64;
    for k in 0..20 {
        let n = r.random_range(15..=50);
        let d = if k < 10 { 2 } else { r.random_range(3..=8) };
        let (x, y) = regression_data(&mut r, n, d, 0.5);
        let lambda = 10f64.powf(r.random_range(-2.0..0.5));
        let fit = fit_enet(&x, &y, 0.0, lambda).unwrap();
        let xm = to_dmatrix(&x);
        let means = xm.row_mean();
        let xc = DMatrix::from_fn(n, d, |i, j| xm[(i, j)] - means[j]);
        let ym = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
        let a = xc.transpose() * &xc + DMatrix::identity(d, d) * (n as f64 * lambda);
        let beta = a.lu().solve(&(xc.transpose() * yc)).unwrap();
        for j in 0..d {
            let e = (fit.coefs[j] - beta[j]).abs();
            worst_ridge = worst_ridge.max(e);
            if e > RIDGE_TOL {
                f.push(format!("ridge problem {k} coef {j}: {} vs {}", fit.coefs[j], beta[j]));
            }
        }
    }
    // SVR KKT conditions
    let mut worst_kkt = 0.0f64;
    for k in 0..20 {
        let n = r.random_range(10..=40);
        let d = r.random_range(1..=3);
        let (x, y) = regression_data(&mut r, n, d, 0.5);
        let p = SvrParams {
            c: [0.1, 1.0, 10.0][k % 3],
            epsilon: [0.05, 0.3, 1.0][k % 3],
            gamma: r.random_range(0.1..1.0),
        };
        let fit = fit_svr(&x, &y, p, DEFAULT_SVR_CAP).unwrap();
        let mut sum = 0.0;
        for i in 0..n {
            let (a, s) = (fit.alpha[i], fit.alpha_star[i]);
            let theta = a - s;
            sum += theta;
            let resid = y[i] - fit.model.predict_row(x.row(i));
            let mut v = [0.0f64; 4];
            v[0] = (-a).max(a - p.c).max(-s).max(s - p.c).max(0.0);
            v[1] = a.min(s).max(0.0);
            v[2] = if theta == 0.0 {
                (resid.abs() - p.epsilon).max(0.0)
            } else if theta > 0.0 && theta < p.c {
                (resid - p.epsilon).abs()
            } else if theta < 0.0 && theta > -p.c {
                (resid + p.epsilon).abs()
            } else if theta > 0.0 {
                (p.epsilon - resid).max(0.0)
            } else {
                (resid + p.epsilon).max(0.0)
            };
            let viol = v.iter().cloned().fold(0.0, f64::max);
            worst_kkt = worst_kkt.max(viol);
            if viol > SVR_KKT_TOL {
                f.push(format!("SVR problem {k} row {i}: KKT violation {viol:e}"));
            }
        }
        if sum.abs() > SVR_KKT_TOL {
            f.push(format!("SVR problem {k}: sum of dual weights {sum:e}"));
        }
    }
    // brute-force dual on 6-point 1-D problems
    let mut worst_dual = 0.0f64;
    for k in 0..12 {
        let xs: Vec<f64> = (0..6).map(|_| r.random_range(0.0..5.0)).collect();
        let y: Vec<f64> = xs.iter().map(|v| 3.0 * v.sin() + 0.3 * normal(&mut r)).collect();
        let p = SvrParams {
            c: [0.5, 2.0, 10.0][k % 3],
            epsilon: [0.05, 0.2][k % 2],
            gamma: [0.5, 1.0][(k / 2) % 2],
        };
        let x = Matrix::from_rows(&xs.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap();
        let fit = fit_svr(&x, &y, p, DEFAULT_SVR_CAP).unwrap();
        let km = DMatrix::from_fn(6, 6, |i, j| rbf(&[xs[i]], &[xs[j]], p.gamma));
        let (best, _) = svr_dual_brute_force(&km, &y, p.epsilon, p.c);
        let rel = (fit.objective - best).abs() / best.abs();
        worst_dual = worst_dual.max(rel);
        if rel > SVR_ORACLE_REL_TOL {
            f.push(format!("SVR dual {k}: objective {} vs oracle {best}", fit.objective));
        }
    }
    // boosting loss with full sampling
    for k in 0..10 {
        let (x, y) = regression_data(&mut r, 80, 4, 1.0);
        let p = GbtParams {
            eta: [0.05, 0.3, 1.0][k % 3],
            max_depth: 1 + k % 4,
            rounds: 60,
            subsample: 1.0,
            colsample: 1.0,
            reg_lambda: [0.0, 1.0, 5.0][k % 3],
            reg_gamma: 0.0,
        };
        let fit = fit_gbt(&x, &y, p, k as u64).unwrap();
        if let Some(w) = fit.train_loss.windows(2).position(|w| w[1] > w[0]) {
            f.push(format!("GBT problem {k}: loss rose at round {}", w + 1));
        }
    }
    // monotone rescaling of every feature. Midpoint thresholds move under a
    // nonlinear map, so predictions are compared only for fits whose split
    // search saw every row; bootstrapped forests are compared tree by tree.
    let mut worst_inv = 0.0f64;
    for k in 0..9u64 {
        let (x, y) = regression_data(&mut r, 70, 3, 1.0);
        let xt = Matrix::from_rows(
            &x.rows().map(|row| row.iter().map(|v| 2.0 * (v / 3.0).exp() + 1.0).collect()).collect::<Vec<Vec<f64>>>(),
        )
        .unwrap();
        let (e0, e1) = match k % 3 {
            0 | 2 => {
                let p = RfParams { n_trees: 30, mtry: 2, min_node: 3, bootstrap: k % 3 == 2 };
                (fit_rf(&x, &y, p, k).unwrap().ensemble, fit_rf(&xt, &y, p, k).unwrap().ensemble)
            }
            _ => {
                let p = GbtParams { eta: 0.1, max_depth: 3, rounds: 40, subsample: 1.0, colsample: 0.67, reg_lambda: 1.0, reg_gamma: 0.0 };
                (fit_gbt(&x, &y, p, k).unwrap().ensemble, fit_gbt(&xt, &y, p, k).unwrap().ensemble)
            }
        };
        let same_topology = e0.trees.len() == e1.trees.len()
            && e0.trees.iter().zip(&e1.trees).all(|(a, b)| {
                a.nodes.len() == b.nodes.len()
                    && a.nodes.iter().zip(&b.nodes).all(|(p, q)| match (p, q) {
                        (Node::Split { feature: f0, left: l0, right: r0, .. }, Node::Split { feature: f1, left: l1, right: r1, .. }) => {
                            f0 == f1 && l0 == l1 && r0 == r1
                        }
                        (Node::Leaf { value: v0, .. }, Node::Leaf { value: v1, .. }) => (v0 - v1).abs() <= INVARIANCE_TOL,
                        _ => false,
                    })
            });
        if !same_topology {
            f.push(format!("invariance fixture {k}: topology differs"));
        }
        if k % 3 == 2 {
            continue;
        }
        for i in 0..x.n_rows() {
            let e = (e0.predict_row(x.row(i)) - e1.predict_row(xt.row(i))).abs();
            worst_inv = worst_inv.max(e);
            if e > INVARIANCE_TOL {
                f.push(format!("invariance fixture {k} row {i}: {e:e}"));
            }
        }
    }
    outcome(
        f,
        format!(
            "ENet worst subgradient {worst_sub:.1e} ({ENET_PROBLEMS} problems), ridge worst {worst_ridge:.1e}, \
             SVR worst KKT {worst_kkt:.1e}, dual oracle worst rel {worst_dual:.1e}, monotone worst {worst_inv:.1e}"
        ),
    )
}

fn pipeline_hygiene() -> Outcome {
    let mut f = Vec::new();
    let mut r = rng(31);
    let n = 60;
    let names: Vec<String> = ["u", "v", "w", "s", "k"].map(String::from).to_vec();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let u = r.random_range(0.0..10.0);
            vec![u, (normal(&mut r) * 0.8).exp(), r.random_range(0.0..100.0), u * u + r.random_range(0.0..5.0), r.random_range(-1.0..1.0)]
        })
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let y: Vec<f64> = rows.iter().map(|v| 55.0 + v[0] + 2.0 * v[1].ln() + 0.02 * v[2] + normal(&mut r)).collect();
    let cities: Vec<String> = (0..n).map(|i| format!("c{}", i % 3)).collect();
    let entries = vec![
        CvEntry::new("LM", vec![Hyperparams::Lm { selection_limit: 2 }, Hyperparams::Lm { selection_limit: 4 }]),
        CvEntry::new("ENET", vec![Hyperparams::Enet { alpha: 0.5, lambda: 0.01 }, Hyperparams::Enet { alpha: 1.0, lambda: 0.3 }]),
        CvEntry::new("SVR", vec![Hyperparams::Svr { c: 10.0, epsilon: 0.5, gamma: 0.2 }]),
        CvEntry::new("RF", vec![Hyperparams::Rf { n_trees: 30, mtry: 2, min_node: 3 }]),
        CvEntry::new("GBT", vec![
            Hyperparams::Gbt { eta: 0.1, max_depth: 2, rounds: 30, subsample: 0.8, colsample: 1.0, reg_lambda: 1.0, reg_gamma: 0.0 },
            Hyperparams::Gbt { eta: 0.1, max_depth: 3, rounds: 30, subsample: 0.8, colsample: 1.0, reg_lambda: 1.0, reg_gamma: 0.0 },
        ]),
    ];
    let plan = make_fold_plan_with(n, 9, 2, 5, 3).unwrap();
    let run = |threads: usize, y: &[f64]| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| nested_cv(&x, &names, y, &cities, &entries, &plan).unwrap())
    };
    let base = run(1, &y);
    // leakage: every stored transform is refitted from the outer-training rows alone
    let mut checked = 0;
    for fr in &base.folds {
        let train = plan.outer_train(fr.repeat, fr.fold);
        let refit = Pipeline::fit(&x.select_rows(&train), &names, fr.family.policy()).unwrap();
        checked += 1;
        if refit != fr.pipeline {
            f.push(format!("{} fold ({}, {}): stored transform differs from training-row refit", fr.label, fr.repeat, fr.fold));
        }
    }
    // leakage: the held-out targets of fold (0, 0) cannot influence its predictions
    let mut y2 = y.clone();
    for &i in &plan.outer[0][0] {
        y2[i] += 25.0;
    }
    let perturbed = run(1, &y2);
    for (a, b) in base.folds.iter().zip(&perturbed.folds) {
        if a.repeat == 0 && a.fold == 0 && (a.predictions != b.predictions || a.grid_index != b.grid_index) {
            f.push(format!("{}: held-out targets changed fold (0, 0)", a.label));
        }
    }
    // reruns at several thread counts
    let reference = serde_json::to_string(&base).unwrap();
    for threads in [1, 2, 4] {
        if serde_json::to_string(&run(threads, &y)).unwrap() != reference {
            f.push(format!("nested CV differs with {threads} threads"));
        }
    }
    let w = inverse_distance_weights(
        &rows.iter().map(|v| Pt::new(v[0] * 100.0, v[2] * 10.0 + v[4])).collect::<Vec<_>>(),
        1.0,
        true,
    )
    .unwrap();
    let perm = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let m = fit_model(&ModelSpec::new(Hyperparams::Rf { n_trees: 50, mtry: 2, min_node: 3 }, 4), &x, &names, &y).unwrap();
            let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
            let s = tree_shap(&m, &x, &names, &ids, &cities, Background::TrainingCovers).unwrap();
            let t = permutation_test(&y, &w, 299, 8).unwrap();
            serde_json::to_string(&(m, s, t)).unwrap()
        })
    };
    let p1 = perm(1);
    if perm(3) != p1 {
        f.push("forest/SHAP/permutation output differs across thread counts".into());
    }
    // artifact round trip
    let dir = tempfile::tempdir().unwrap();
    let specs = [
        Hyperparams::Lm { selection_limit: 3 },
        Hyperparams::Enet { alpha: 0.5, lambda: 0.05 },
        Hyperparams::Svr { c: 5.0, epsilon: 0.3, gamma: 0.2 },
        Hyperparams::Rf { n_trees: 25, mtry: 2, min_node: 3 },
        Hyperparams::Gbt { eta: 0.1, max_depth: 3, rounds: 25, subsample: 0.8, colsample: 1.0, reg_lambda: 1.0, reg_gamma: 0.0 },
    ];
    let probe = Matrix::from_rows(&rows.iter().map(|v| v.iter().map(|a| a * 1.01 + 0.1).collect()).collect::<Vec<Vec<f64>>>()).unwrap();
    for hp in specs {
        let m = fit_model(&ModelSpec::new(hp, 2), &x, &names, &y).unwrap();
        let path = dir.path().join(format!("{}.json", m.family));
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        let (p0, p1) = (m.predict(&probe, &names).unwrap(), back.predict(&probe, &names).unwrap());
        if back != m || p0.iter().zip(&p1).any(|(a, b)| a.to_bits() != b.to_bits()) {
            f.push(format!("{} artifact round trip not bit-identical", m.family));
        }
    }
    outcome(
        f,
        format!("{checked} fold transforms refitted, held-out perturbation, thread counts 1/2/3/4, 5 artifact round trips"),
    )
}

fn square(x0: f64, y0: f64, side: f64) -> Polygon {
    Polygon::new(vec![Pt::new(x0, y0), Pt::new(x0 + side, y0), Pt::new(x0 + side, y0 + side), Pt::new(x0, y0 + side)])
}

fn is_monotone(t: &ExposureTable) -> bool {
    std::iter::once(&t.total)
        .chain(t.cities.values())
        .all(|g| g.rows.windows(2).all(|w| w[1].population <= w[0].population && w[1].percent <= w[0].percent))
}

fn exposure_accounting() -> Outcome {
    let mut f = Vec::new();
    // city a: 3x3 cells of 10 m, population raster at 5 m with 1 person per cell
    let mut a = make_grid("a", &square(0.0, 0.0, 30.0), 10.0).unwrap();
    a.values = [38.0, 42.0, 50.0, 52.0, 57.0, 62.0, 67.0, 72.0].into_iter().map(Some).chain([None]).collect();
    let pop_a = Raster::new(Pt::new(0.0, 0.0), 5.0, 6, 6, vec![1.0; 36]).unwrap();
    // city b: 2x2 cells of 10 m, one population cell per grid cell
    let mut b = make_grid("b", &square(100.0, 0.0, 20.0), 10.0).unwrap();
    b.values = vec![Some(41.0), Some(66.0), Some(45.0), Some(70.0)];
    let pop_b = Raster::new(Pt::new(100.0, 0.0), 10.0, 2, 2, vec![10.0, 20.0, 30.0, 40.0]).unwrap();
    let t = exposure_table(&[(&a, &pop_a), (&b, &pop_b)], &DEFAULT_THRESHOLDS).unwrap();
    let want_a = [28.0, 24.0, 20.0, 16.0, 12.0, 8.0, 4.0];
    let want_b = [100.0, 60.0, 60.0, 60.0, 60.0, 60.0, 0.0];
    let want_total = [128.0, 84.0, 80.0, 76.0, 72.0, 68.0, 4.0];
    let check = |label: &str, got: &lur_core::mapping::GroupExposure, want: &[f64], total: f64, f: &mut Vec<String>| {
        if got.total_population != total {
            f.push(format!("{label}: total {} vs {total}", got.total_population));
        }
        for (row, &w) in got.rows.iter().zip(want) {
            if row.population != w || row.percent != w / total * 100.0 {
                f.push(format!("{label} >{}: {} ({}%) vs {w}", row.threshold, row.population, row.percent));
            }
        }
    };
    check("a", &t.cities["a"], &want_a, 32.0, &mut f);
    check("b", &t.cities["b"], &want_b, 100.0, &mut f);
    check("total", &t.total, &want_total, 132.0, &mut f);
    if t.unassigned_population != 4.0 {
        f.push(format!("unassigned {} vs 4", t.unassigned_population));
    }
    // monotone bands on random grids
    let mut r = rng(41);
    let mut runs = 1;
    if !is_monotone(&t) {
        f.push("fixture bands not monotone".into());
    }
    for k in 0..300 {
        let side = r.random_range(20.0..200.0);
        let mut g: NoiseGrid = make_grid("r", &square(0.0, 0.0, side), r.random_range(5.0..25.0)).unwrap();
        g.values = (0..g.n_cells())
            .map(|_| (r.random::<f64>() > 0.1).then(|| (r.random_range(35.0..75.0) * 2.0f64).round() / 2.0))
            .collect();
        let cell = r.random_range(3.0..30.0);
        let nr = (side / cell).ceil() as usize;
        let pop = Raster::new(Pt::new(0.0, 0.0), cell, nr, nr, (0..nr * nr).map(|_| r.random_range(0.0..50.0)).collect()).unwrap();
        if let Ok(t) = exposure_table(&[(&g, &pop)], &DEFAULT_THRESHOLDS) {
            runs += 1;
            if !is_monotone(&t) {
                f.push(format!("random table {k} not monotone"));
            }
        }
    }
    outcome(f, format!("hand fixture (2 cities, 13 cells) exact, monotone on {runs} tables"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("synthetic recovery", synthetic_recovery),
        ("Shapley correctness", shapley_correctness),
        ("geometry oracle", geometry_oracle),
        ("statistics", statistics),
        ("learner obligations", learner_obligations),
        ("pipeline hygiene", pipeline_hygiene),
        ("exposure accounting", exposure_accounting),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        println!(
            "criterion {} {}: {} [{:.1}s] {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
