//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_guard::detection::{Combinator, Direction, Objective};
use spectral_guard::graph::{aggregate_heads, AttentionGraph, HeadAttention};
use spectral_guard::metrics::Confusion;
use spectral_guard::FeatureTable;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cyclic Jacobi rotations; eigenvalues ascending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let scale = a.norm().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Row-stochastic matrix with a random fraction of exact zeros.
pub fn row_stochastic(rng: &mut ChaCha8Rng, n: usize, sparsity: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut total = 0.0;
        for j in 0..n {
            let keep = i == j || rng.random::<f64>() >= sparsity;
            if keep {
                let v: f64 = rng.random::<f64>().powi(3) + 1e-6;
                m[(i, j)] = v;
                total += v;
            }
        }
        for j in 0..n {
            m[(i, j)] /= total;
        }
    }
    m
}

/// Aggregated attention graph of `heads` random row-stochastic heads.
pub fn random_attention_graph(rng: &mut ChaCha8Rng, n: usize, heads: usize) -> AttentionGraph {
    let sparsity = rng.random_range(0.0..0.8);
    let sym: Vec<_> = (0..heads)
        .map(|h| {
            HeadAttention::new(0, h, row_stochastic(rng, n, sparsity))
                .symmetrized()
                .unwrap()
        })
        .collect();
    aggregate_heads(&sym).unwrap()
}

/// Symmetric nonnegative weights made of disconnected random blocks.
pub fn block_diagonal(rng: &mut ChaCha8Rng, sizes: &[usize]) -> DMatrix<f64> {
    let n: usize = sizes.iter().sum();
    let mut w = DMatrix::zeros(n, n);
    let mut start = 0;
    for &s in sizes {
        for i in start..start + s {
            for j in i..start + s {
                let v = if i == j { rng.random::<f64>() } else { 0.05 + rng.random::<f64>() };
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        start += s;
    }
    w
}

/// Random connected weighted graph: a random spanning tree plus extra edges.
pub fn connected_weights(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    for i in 1..n {
        let j = rng.random_range(0..i);
        let v = 0.1 + rng.random::<f64>();
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    let density = rng.random::<f64>();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < density * 0.5 {
                let v = rng.random::<f64>();
                w[(i, j)] += v;
                w[(j, i)] += v;
            }
        }
    }
    w
}

/// min over nonempty S with |S| <= N/2 of cut(S, S^c) / |S|.
pub fn cheeger_constant(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1u32 << n) - 1 {
        let size = mask.count_ones() as usize;
        if size > n / 2 {
            continue;
        }
        let mut cut = 0.0;
        for i in 0..n {
            if mask & (1 << i) == 0 {
                continue;
            }
            for j in 0..n {
                if mask & (1 << j) == 0 {
                    cut += w[(i, j)];
                }
            }
        }
        best = best.min(cut / size as f64);
    }
    best
}

/// Counts (positive, negative) pairs directly.
pub fn brute_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        if !positive[i] {
            continue;
        }
        for j in 0..scores.len() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn dirichlet_sum(w: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let n = w.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += w[(i, j)] * (x[i] - x[j]).powi(2);
        }
    }
    0.5 * s
}

/// Cohen's d with pooled standard deviation, written out longhand.
pub fn cohens_d_oracle(a: &[f64], b: &[f64]) -> f64 {
    fn moments(x: &[f64]) -> (f64, f64) {
        let mut sum = 0.0;
        for v in x {
            sum += v;
        }
        let mean = sum / x.len() as f64;
        let mut ss = 0.0;
        for v in x {
            ss += (v - mean) * (v - mean);
        }
        (mean, ss)
    }
    let (ma, ssa) = moments(a);
    let (mb, ssb) = moments(b);
    let pooled = ((ssa + ssb) / (a.len() + b.len() - 2) as f64).sqrt();
    ((ma - mb) / pooled).abs()
}

/// Continued fraction for the regularized incomplete beta function.
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Lanczos approximation of ln Gamma (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut s = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        s += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

/// Two-sided Welch test (statistic, df, p) via the incomplete beta function.
pub fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let var = |x: &[f64]| {
        let m = mean(x);
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (var(a) / na, var(b) / nb);
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let p = incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    (t, df, p)
}

/// Welch results frozen from scipy.stats.ttest_ind(a, b, equal_var=False):
/// (a, b, statistic, p, df).
pub const WELCH_REFERENCE: &[(&[f64], &[f64], f64, f64, f64)] = &[
    (
        &[1.0, 2.0, 3.0, 4.0, 5.0],
        &[2.5, 3.5, 4.5, 5.5, 6.5, 7.5],
        -1.9215378456610457,
        0.0868807084741848,
        8.98936170212766,
    ),
    (
        &[0.1, 0.4, 0.35, 0.8],
        &[0.9, 1.2, 1.1],
        -3.8569001721381726,
        0.013562378744036947,
        4.672816761660984,
    ),
    (
        &[10.0, 12.0, 9.5, 11.0, 10.5, 13.0, 9.0],
        &[8.0, 7.5, 9.1, 6.0, 8.8],
        3.704351777721308,
        0.004469388117769907,
        9.479030655179466,
    ),
    (
        &[1.0, 1.1, 0.9, 1.05],
        &[5.0, 5.2, 4.9, 5.1, 5.05],
        -61.40787987582192,
        8.003804405790373e-11,
        6.998645445309856,
    ),
    (
        &[-2.0, 0.5, 3.0],
        &[-1.0, 4.0, 2.0, 0.0],
        -0.4120816918460671,
        0.7008984479750553,
        4.103836372490666,
    ),
];

fn candidate_thresholds(values: &[f64]) -> Vec<f64> {
    let mut grid = values.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut cands = vec![f64::NEG_INFINITY, f64::INFINITY];
    cands.extend(grid.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    cands
}

/// Best objective over every single rule and every pair of rules, trying
/// all directions and all candidate thresholds of both columns.
pub fn best_pair_objective(table: &FeatureTable, objective: &Objective, combinator: Combinator) -> f64 {
    let pos = table.positives();
    let cols = table.keys().len();
    let mut best = f64::NEG_INFINITY;
    for i in 0..cols {
        let ci = table.column_at(i);
        for &ti in &candidate_thresholds(ci) {
            for di in Direction::BOTH {
                let fi: Vec<bool> = ci.iter().map(|&v| di.fires(v, ti)).collect();
                best = best.max(objective.value(&Confusion::count(&fi, &pos)));
                for j in (i + 1)..cols {
                    let cj = table.column_at(j);
                    for &tj in &candidate_thresholds(cj) {
                        for dj in Direction::BOTH {
                            let flagged: Vec<bool> = (0..table.len())
                                .map(|k| {
                                    let b = dj.fires(cj[k], tj);
                                    match combinator {
                                        Combinator::AnyFires => fi[k] || b,
                                        Combinator::AllFire => fi[k] && b,
                                    }
                                })
                                .collect();
                            best = best.max(objective.value(&Confusion::count(&flagged, &pos)));
                        }
                    }
                }
            }
        }
    }
    best
}
