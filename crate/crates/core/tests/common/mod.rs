//! Independent oracles shared by the integration tests. Nothing here calls
//! the routine it checks.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lur_core::geometry::Pt;
use lur_core::matrix::Matrix;
use lur_core::models::{Node, RegressionTree, TreeEnsemble};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw (Box-Muller).
pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    let u: f64 = r.random::<f64>().max(1e-300);
    let v: f64 = r.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Length of segment ab inside the open disk (c, r) by midpoint sampling.
pub fn dense_length(a: Pt, b: Pt, c: Pt, r: f64, samples: usize) -> f64 {
    let len = a.dist(b);
    let mut inside = 0usize;
    for k in 0..samples {
        let t = (k as f64 + 0.5) / samples as f64;
        let p = Pt::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        if (p.x - c.x).powi(2) + (p.y - c.y).powi(2) < r * r {
            inside += 1;
        }
    }
    len * inside as f64 / samples as f64
}

/// Every size-`m` subset of ranks 1..=n_total, as rank sums.
pub fn all_rank_sums(m: usize, n_total: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n_total) {
        if mask.count_ones() as usize == m {
            out.push((0..n_total).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum());
        }
    }
    out
}

/// Two-tailed exact p of rank sum `w` from the enumerated null sums.
pub fn enumerated_p(sums: &[usize], w: usize) -> f64 {
    let total = sums.len() as f64;
    let lo = sums.iter().filter(|&&s| s <= w).count() as f64 / total;
    let hi = sums.iter().filter(|&&s| s >= w).count() as f64 / total;
    (2.0 * lo.min(hi)).min(1.0)
}

/// BH adjusted p-values by scanning, for each value, every p at or above
/// its rank.
pub fn bh_min_scan(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut sorted: Vec<(f64, usize)> = p.iter().copied().zip(0..).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = vec![0.0; m];
    for (rank, &(_, i)) in sorted.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (k, &(pk, _)) in sorted.iter().enumerate().skip(rank) {
            best = best.min(pk * m as f64 / (k + 1) as f64);
        }
        out[i] = best.min(1.0);
    }
    out
}

/// Moran's I straight from the definition, weights built in the loop.
pub fn moran_double_loop(values: &[f64], pts: &[Pt], power: f64, row_standardize: bool) -> f64 {
    let n = values.len();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = ((pts[i].x - pts[j].x).powi(2) + (pts[i].y - pts[j].y).powi(2)).sqrt();
                w[i][j] = 1.0 / d.powf(power);
            }
        }
        if row_standardize {
            let s: f64 = w[i].iter().sum();
            for v in &mut w[i] {
                *v /= s;
            }
        }
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let (mut num, mut s0, mut den) = (0.0, 0.0, 0.0);
    for i in 0..n {
        den += (values[i] - mean).powi(2);
        for j in 0..n {
            num += w[i][j] * (values[i] - mean) * (values[j] - mean);
            s0 += w[i][j];
        }
    }
    n as f64 / s0 * num / den
}

/// Minimum of ½θᵀKθ − θᵀy + ε‖θ‖₁ subject to Σθ = 0, |θ_i| ≤ C, found by
/// trying every assignment of each θ_i to {−C, free<0, 0, free>0, C} and
/// solving the equality-constrained problem on the free set.
pub fn svr_dual_brute_force(k: &DMatrix<f64>, y: &[f64], eps: f64, c: f64) -> (f64, Vec<f64>) {
    let n = y.len();
    let objective = |t: &[f64]| {
        let tv = DVector::from_column_slice(t);
        0.5 * (tv.transpose() * k * &tv)[(0, 0)] - t.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
            + eps * t.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let states = 5usize.pow(n as u32);
    for code in 0..states {
        let mut s = vec![0usize; n];
        let mut cc = code;
        for v in s.iter_mut() {
            *v = cc % 5;
            cc /= 5;
        }
        let mut theta = vec![0.0; n];
        let mut free = Vec::new();
        let mut sign = Vec::new();
        for i in 0..n {
            match s[i] {
                0 => theta[i] = -c,
                1 => {
                    free.push(i);
                    sign.push(-1.0)
                }
                2 => {}
                3 => {
                    free.push(i);
                    sign.push(1.0)
                }
                _ => theta[i] = c,
            }
        }
        let fixed_sum: f64 = theta.iter().sum();
        if free.is_empty() {
            if fixed_sum.abs() > 1e-12 {
                continue;
            }
        } else {
            let f = free.len();
            let mut a = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (p, &i) in free.iter().enumerate() {
                for (q, &j) in free.iter().enumerate() {
                    a[(p, q)] = k[(i, j)];
                }
                a[(p, f)] = 1.0;
                a[(f, p)] = 1.0;
                let fixed: f64 = (0..n).map(|j| k[(i, j)] * theta[j]).sum();
                rhs[p] = y[i] - eps * sign[p] - fixed;
            }
            rhs[f] = -fixed_sum;
            let Some(sol) = a.lu().solve(&rhs) else { continue };
            let mut ok = true;
            for (p, &i) in free.iter().enumerate() {
                let v = sol[p];
                if v * sign[p] < -1e-12 || v.abs() > c + 1e-12 {
                    ok = false;
                }
                theta[i] = v;
            }
            if !ok {
                continue;
            }
        }
        let o = objective(&theta);
        if o < best.0 {
            best = (o, theta);
        }
    }
    best
}

/// Per-feature value levels whose product has at most `max_rows` entries.
pub fn product_levels(r: &mut ChaCha8Rng, n_used: usize, max_rows: usize) -> Vec<Vec<f64>> {
    loop {
        let counts: Vec<usize> = (0..n_used).map(|_| r.random_range(2..=6)).collect();
        if counts.iter().product::<usize>() <= max_rows {
            return counts
                .iter()
                .map(|&k| {
                    let mut v: Vec<f64> = (0..k).map(|_| r.random_range(-5.0..5.0)).collect();
                    v.sort_by(f64::total_cmp);
                    v.dedup();
                    v
                })
                .collect();
        }
    }
}

/// Cartesian product of `levels` placed in columns `used` of a d-column
/// matrix; the remaining columns get arbitrary values.
pub fn product_background(r: &mut ChaCha8Rng, d: usize, used: &[usize], levels: &[Vec<f64>]) -> Matrix {
    let mut rows: Vec<Vec<f64>> = vec![vec![]];
    for lv in levels {
        rows = rows
            .into_iter()
            .flat_map(|row| {
                lv.iter().map(move |&v| {
                    let mut r2 = row.clone();
                    r2.push(v);
                    r2
                })
            })
            .collect();
    }
    let full: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|pr| {
            let mut v: Vec<f64> = (0..d).map(|_| r.random_range(-9.0..9.0)).collect();
            for (k, &j) in used.iter().enumerate() {
                v[j] = pr[k];
            }
            v
        })
        .collect();
    Matrix::from_rows(&full).unwrap()
}

/// Random tree splitting only on `used` features, thresholds between
/// adjacent levels or at arbitrary points. Covers are left at zero.
pub fn random_tree(r: &mut ChaCha8Rng, used: &[usize], levels: &[Vec<f64>], max_depth: usize) -> RegressionTree {
    fn grow(
        r: &mut ChaCha8Rng,
        used: &[usize],
        levels: &[Vec<f64>],
        depth: usize,
        max_depth: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let id = nodes.len();
        if depth == max_depth || (depth > 0 && r.random::<f64>() < 0.25) {
            nodes.push(Node::Leaf {
                value: r.random_range(-10.0..10.0),
                cover: 0.0,
            });
            return id;
        }
        let k = r.random_range(0..used.len());
        let lv = &levels[k];
        let threshold = if lv.len() >= 2 && r.random::<f64>() < 0.8 {
            let i = r.random_range(0..lv.len() - 1);
            (lv[i] + lv[i + 1]) / 2.0
        } else {
            r.random_range(-6.0..6.0)
        };
        nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
        let left = grow(r, used, levels, depth + 1, max_depth, nodes);
        let right = grow(r, used, levels, depth + 1, max_depth, nodes);
        nodes[id] = Node::Split {
            feature: used[k],
            threshold,
            left,
            right,
            cover: 0.0,
        };
        id
    }
    let mut nodes = Vec::new();
    grow(r, used, levels, 0, max_depth, &mut nodes);
    RegressionTree { nodes }
}

pub fn random_ensemble(r: &mut ChaCha8Rng, used: &[usize], levels: &[Vec<f64>]) -> TreeEnsemble {
    let n_trees = r.random_range(1..=6);
    let trees: Vec<RegressionTree> = (0..n_trees)
        .map(|_| {
            let depth = r.random_range(1..=4);
            random_tree(r, used, levels, depth)
        })
        .collect();
    TreeEnsemble {
        base: r.random_range(40.0..70.0),
        weights: (0..n_trees).map(|_| r.random_range(0.05..1.0)).collect(),
        trees,
    }
}

/// Random regression data: y = Σ b_j x_j + noise, columns on mixed scales.
pub fn regression_data(r: &mut ChaCha8Rng, n: usize, d: usize, noise: f64) -> (Matrix, Vec<f64>) {
    let scales: Vec<f64> = (0..d).map(|_| r.random_range(0.5..2.0)).collect();
    let beta: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = scales.iter().map(|s| s * normal(r)).collect();
        y.push(1.5 + row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + noise * normal(r));
        rows.push(row);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

pub fn to_dmatrix(x: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.n_rows(), x.n_cols(), x.as_slice())
}
