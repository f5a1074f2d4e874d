#![allow(dead_code)]

use hcrn::config::ScenarioConfig;
use hcrn::engine::{BatchResult, RunResult};
use hcrn::policies::{FeedbackKind, PolicyKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config(policy: PolicyKind) -> ScenarioConfig {
    ScenarioConfig {
        policy,
        ..ScenarioConfig::default()
    }
}

/// Finite localization errors strictly after `after`, per run in seed order.
pub fn post_errors(batch: &BatchResult, after: usize) -> Vec<Vec<f64>> {
    batch
        .runs
        .iter()
        .map(|r| {
            r.records
                .iter()
                .filter(|rec| rec.cpi > after && rec.loc_error.is_finite())
                .map(|rec| rec.loc_error)
                .collect()
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn pooled_median(per_run: &[Vec<f64>]) -> f64 {
    let mut all: Vec<f64> = per_run.iter().flatten().copied().collect();
    median(&mut all)
}

pub fn pooled_mean(per_run: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = per_run.iter().flatten().copied().collect();
    all.iter().sum::<f64>() / all.len() as f64
}

/// Paired seed bootstrap of `median(b) - median(a)`; returns the (5%, 95%) bounds.
pub fn bootstrap_median_diff(a: &[Vec<f64>], b: &[Vec<f64>], resamples: usize, seed: u64) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = a.len();
    let mut diffs = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut pa: Vec<f64> = idx.iter().flat_map(|&i| a[i].iter().copied()).collect();
        let mut pb: Vec<f64> = idx.iter().flat_map(|&i| b[i].iter().copied()).collect();
        diffs.push(median(&mut pb) - median(&mut pa));
    }
    diffs.sort_by(f64::total_cmp);
    let at = |p: f64| diffs[((resamples - 1) as f64 * p).round() as usize];
    (at(0.05), at(0.95))
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|yi| (yi - my).powi(2)).sum();
    (a, b, 1.0 - ss_res / ss_tot)
}

/// Last CPI whose feedback carried a matching list, i.e. the commit CPI.
pub fn commit_cpi(run: &RunResult) -> Option<usize> {
    run.records
        .iter()
        .rev()
        .find(|r| r.feedback_kinds.contains(&FeedbackKind::MatchingList))
        .map(|r| r.cpi)
}

/// Brute-force best utility over all injective assignments.
pub fn brute_force_best(w: &[Vec<f64>]) -> (Vec<usize>, f64) {
    fn rec(w: &[Vec<f64>], m: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, best: &mut (Vec<usize>, f64)) {
        if m == w.len() {
            let u: f64 = cur.iter().enumerate().map(|(i, &c)| w[i][c]).sum();
            if u > best.1 {
                *best = (cur.clone(), u);
            }
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                cur.push(c);
                rec(w, m + 1, used, cur, best);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let cols = w.first().map_or(0, Vec::len);
    rec(w, 0, &mut vec![false; cols], &mut Vec::new(), &mut best);
    best
}
