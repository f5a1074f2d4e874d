//! Matching mathematics: weight matrices, utilities, an exact maximum-weight
//! assignment solver, the brute-force enumeration oracle, and the regret and
//! feedback metrics built on them.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of matchings `enumerate_matchings` will produce.
pub const ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    TrueSinr,
    EstimatedSinr,
    TargetBased,
}

/// Row-major `M x N` reward matrix: rows are radar nodes, columns channels.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    kind: WeightKind,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, kind: WeightKind) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if rows > cols {
            return Err(Error::MatchingInfeasible {
                nodes: rows,
                channels: cols,
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "weight",
                value: *bad,
            });
        }
        Ok(WeightMatrix {
            rows,
            cols,
            values,
            kind,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], kind: WeightKind) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged weight rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat(), kind)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        kind: WeightKind,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for m in 0..rows {
            for n in 0..cols {
                values.push(f(m, n));
            }
        }
        Self::new(rows, cols, values, kind)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.values[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WeightMatrix {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Injective node-to-channel assignment: entry `m` is node `m`'s channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matching(Vec<usize>);

impl Matching {
    pub fn new(assignment: Vec<usize>, channels: usize) -> Result<Self> {
        let mut seen = vec![false; channels];
        for &c in &assignment {
            if c >= channels {
                return Err(Error::ShapeMismatch(format!("channel {c} out of range 0..{channels}")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::ShapeMismatch(format!("channel {c} assigned twice")));
            }
        }
        Ok(Matching(assignment))
    }

    pub fn channel(&self, node: usize) -> usize {
        self.0[node]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.0.len());
        self.0.iter().all(|c| seen.insert(*c))
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join(";"))
    }
}

/// An ordered candidate set of matchings with a play cursor.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingList {
    items: Vec<Matching>,
    cursor: usize,
}

impl MatchingList {
    pub fn new(items: Vec<Matching>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Config("matching list must not be empty".into()));
        }
        let unique: HashSet<&Matching> = items.iter().collect();
        if unique.len() != items.len() {
            return Err(Error::Config("matching list contains duplicates".into()));
        }
        Ok(MatchingList { items, cursor: 0 })
    }

    pub fn items(&self) -> &[Matching] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn current(&self) -> &Matching {
        &self.items[self.cursor]
    }

    /// Move to the next matching; returns true when the sweep just completed
    /// (the cursor wrapped back to zero).
    pub fn advance(&mut self) -> bool {
        self.cursor += 1;
        if self.cursor == self.items.len() {
            self.cursor = 0;
            true
        } else {
            false
        }
    }
}

fn check_shape(w: &WeightMatrix, pi: &Matching) -> Result<()> {
    if pi.len() != w.rows() || pi.as_slice().iter().any(|&c| c >= w.cols()) {
        return Err(Error::ShapeMismatch(format!(
            "matching of {} nodes against a {}x{} matrix",
            pi.len(),
            w.rows(),
            w.cols()
        )));
    }
    Ok(())
}

/// Sum of the matrix entries selected by the matching, in node order.
pub fn utility(w: &WeightMatrix, pi: &Matching) -> Result<f64> {
    check_shape(w, pi)?;
    Ok(pi.as_slice().iter().enumerate().map(|(m, &n)| w.get(m, n)).sum())
}

/// Square minimum-cost assignment by shortest augmenting paths with dual
/// potentials (O(n^3)). Returns `assign[row] = col`.
fn hungarian_min_cost(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based internals; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut next = 0usize;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r - 1) * n + (col - 1)] - u[r] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    next = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = next;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for col in 1..=n {
        if owner[col] != 0 {
            assign[owner[col] - 1] = col - 1;
        }
    }
    assign
}

/// Best assignment of `rows` onto distinct members of `cols` (rows <= cols),
/// padding phantom rows with a constant below every real weight.
fn solve_restricted(w: &WeightMatrix, rows: &[usize], cols: &[usize]) -> (Vec<usize>, f64) {
    let n = cols.len();
    debug_assert!(rows.len() <= n);
    if rows.is_empty() {
        return (Vec::new(), 0.0);
    }
    let min_w = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| w.get(r, c)))
        .fold(f64::INFINITY, f64::min);
    let pad = min_w - 2.0;
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for (j, &c) in cols.iter().enumerate() {
            let weight = rows.get(i).map_or(pad, |&r| w.get(r, c));
            cost[i * n + j] = -weight;
        }
    }
    let assign = hungarian_min_cost(&cost, n);
    let chosen: Vec<usize> = rows.iter().enumerate().map(|(i, _)| cols[assign[i]]).collect();
    let value = rows.iter().zip(&chosen).map(|(&r, &c)| w.get(r, c)).sum();
    (chosen, value)
}

fn tie_tolerance(w: &WeightMatrix) -> f64 {
    let scale: f64 = (0..w.rows())
        .map(|m| w.row(m).iter().fold(0.0f64, |a, v| a.max(v.abs())))
        .sum();
    1e-10 * scale
}

/// Optimal matching with the lexicographically smallest assignment vector
/// among (numerically) tied optima. `fixed` pins node/channel pairs first.
fn lexicographic_optimum(w: &WeightMatrix, fixed: &[(usize, usize)]) -> Option<(Matching, f64)> {
    let mut free_rows: Vec<usize> = (0..w.rows()).filter(|m| fixed.iter().all(|f| f.0 != *m)).collect();
    let mut free_cols: Vec<usize> = (0..w.cols()).filter(|n| fixed.iter().all(|f| f.1 != *n)).collect();
    if free_rows.len() > free_cols.len() {
        return None;
    }
    let fixed_value: f64 = fixed.iter().map(|&(m, n)| w.get(m, n)).sum();
    let (_, best) = solve_restricted(w, &free_rows, &free_cols);
    let target = fixed_value + best;
    let tol = tie_tolerance(w);

    let mut assignment = vec![usize::MAX; w.rows()];
    for &(m, n) in fixed {
        assignment[m] = n;
    }
    let mut committed = fixed_value;
    while let Some(&row) = free_rows.first() {
        let rest_rows = &free_rows[1..];
        let mut placed = false;
        for (ci, &col) in free_cols.iter().enumerate() {
            let mut rest_cols = free_cols.clone();
            rest_cols.remove(ci);
            let (_, completion) = solve_restricted(w, rest_rows, &rest_cols);
            if committed + w.get(row, col) + completion >= target - tol {
                assignment[row] = col;
                committed += w.get(row, col);
                free_cols = rest_cols;
                placed = true;
                break;
            }
        }
        // The optimum's own column always qualifies; failure means NaN poisoning.
        assert!(placed, "lexicographic search lost the optimum");
        free_rows.remove(0);
    }
    let matching = Matching(assignment);
    let value = utility(w, &matching).expect("shape checked");
    Some((matching, value))
}

/// Exact maximum-weight matching. Ties are broken towards the
/// lexicographically smallest assignment vector so that every node solving
/// the same matrix picks the same matching.
pub fn max_weight_matching(w: &WeightMatrix) -> (Matching, f64) {
    lexicographic_optimum(w, &[]).expect("M <= N enforced by WeightMatrix")
}

/// Best matching that contains the given node/channel pair.
pub fn max_weight_matching_with(w: &WeightMatrix, node: usize, channel: usize) -> (Matching, f64) {
    lexicographic_optimum(w, &[(node, channel)]).expect("a single pinned pair is always completable")
}

fn falling_factorial(n: usize, k: usize) -> u128 {
    (0..k).map(|i| (n - i) as u128).product()
}

/// All injective assignments of `nodes` onto `channels`, lexicographic order.
pub fn enumerate_matchings(nodes: usize, channels: usize) -> Result<Vec<Matching>> {
    enumerate_matchings_capped(nodes, channels, ENUMERATION_CAP)
}

pub fn enumerate_matchings_capped(nodes: usize, channels: usize, cap: u128) -> Result<Vec<Matching>> {
    if nodes > channels {
        return Err(Error::MatchingInfeasible { nodes, channels });
    }
    let count = falling_factorial(channels, nodes);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut current = Vec::with_capacity(nodes);
    let mut used = vec![false; channels];
    fn rec(
        depth: usize,
        nodes: usize,
        used: &mut [bool],
        current: &mut Vec<usize>,
        out: &mut Vec<Matching>,
    ) {
        if depth == nodes {
            out.push(Matching(current.clone()));
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                current.push(c);
                rec(depth + 1, nodes, used, current, out);
                current.pop();
                used[c] = false;
            }
        }
    }
    rec(0, nodes, &mut used, &mut current, &mut out);
    Ok(out)
}

/// Realized utility summed over a history of (true weights, chosen matching).
pub fn cumulative_utility(history: &[(WeightMatrix, Matching)]) -> Result<f64> {
    history.iter().map(|(w, pi)| utility(w, pi)).sum()
}

/// Cumulative regret after each CPI of the history against the per-CPI
/// optimal matching.
pub fn regret_sequence(history: &[(WeightMatrix, Matching)]) -> Result<Vec<f64>> {
    let mut total = 0.0;
    history
        .iter()
        .map(|(w, pi)| {
            let (_, best) = max_weight_matching(w);
            total += (best - utility(w, pi)?).max(0.0);
            Ok(total)
        })
        .collect()
}

pub fn cumulative_regret(history: &[(WeightMatrix, Matching)]) -> Result<f64> {
    Ok(regret_sequence(history)?.last().copied().unwrap_or(0.0))
}

/// Average feedback per node per CPI over the first `k` CPIs.
pub fn average_feedback(counts: &[u64], nodes: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::OutOfRange {
            what: "cpi count",
            detail: "average feedback needs k >= 1".into(),
        });
    }
    if nodes == 0 {
        return Err(Error::OutOfRange {
            what: "node count",
            detail: "average feedback needs at least one node".into(),
        });
    }
    if counts.len() < k {
        return Err(Error::ShapeMismatch(format!("{} feedback counts for k = {k}", counts.len())));
    }
    let total: u64 = counts[..k].iter().sum();
    Ok(total as f64 / (nodes as f64 * k as f64))
}
