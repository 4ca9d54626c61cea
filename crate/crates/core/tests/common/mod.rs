#![allow(dead_code)]

use msrank::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rank by counting: `#{v < a} + (#{v == a} + 1) / 2`.
pub fn naive_midranks(a: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|&v| {
            let below = a.iter().filter(|&&w| w < v).count() as f64;
            let tied = a.iter().filter(|&&w| w == v).count() as f64;
            below + (tied + 1.0) / 2.0
        })
        .collect()
}

pub fn epa_weight(u: f64) -> f64 {
    let v = 2.0 * u - 1.0;
    (1.0 - v * v).max(0.0)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `max_{j<k} |T_jk| - sqrt(2 log(n / (k - j)))` by a plain double loop.
pub fn naive_scan(x: &[f64], y: &[f64], weight: impl Fn(f64) -> f64, min_window: usize) -> f64 {
    let n = x.len();
    let mut best = f64::NEG_INFINITY;
    for j in 0..n {
        for k in (j + 1)..n {
            if k - j + 1 < min_window {
                continue;
            }
            let abs: Vec<f64> = y[j..=k].iter().map(|v| v.abs()).collect();
            let r = naive_midranks(&abs);
            let mut num = 0.0;
            let mut den = 0.0;
            for i in j..=k {
                let c = weight((x[i] - x[j]) / (x[k] - x[j])) * r[i - j];
                num += c * sign(y[i]);
                den += c * c;
            }
            let t = if den > 0.0 { num / den.sqrt() } else { 0.0 };
            let pen = (2.0 * (n as f64 / (k - j) as f64).ln()).sqrt();
            best = best.max(t.abs() - pen);
        }
    }
    best
}

/// Random dataset with strictly increasing x and continuous y.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let mut x = Vec::with_capacity(n);
    let mut acc = rng.random_range(-3.0..3.0);
    for _ in 0..n {
        acc += rng.random_range(0.01..1.0);
        x.push(acc);
    }
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0) + rng.random_range(-0.5..0.5)).collect();
    Dataset::new(x, y).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Composite Simpson on `[a, b]` with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
