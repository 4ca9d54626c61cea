//! Local midranks of absolute responses.
//!
//! Within a window `j..=k` the midrank of `|y_i|` is
//! `sum_l (1{|y_l| < |y_i|} + 1{|y_l| = |y_i|} / 2) + 1/2`, which is the
//! ordinary rank whenever the window holds no ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Design points with their responses. `x` is strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "x has {} entries but y has {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::TooFewRows(x.len()));
        }
        if let Some(v) = x.iter().chain(&y).find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value {v}")));
        }
        for w in x.windows(2) {
            if w[1] == w[0] {
                return Err(Error::DuplicateX(w[0]));
            }
            if w[1] < w[0] {
                return Err(Error::InvalidInput(format!(
                    "design points must be increasing, found {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(Dataset { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `sign(y_i)` as `-1.0`, `0.0` or `1.0`.
    pub fn signs(&self) -> Vec<f64> {
        self.y.iter().map(|&v| sign(v)).collect()
    }

    pub fn abs_y(&self) -> Vec<f64> {
        self.y.iter().map(|v| v.abs()).collect()
    }

    /// Same design, new responses.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        Dataset::new(self.x.clone(), y)
    }
}

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Midranks of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub j: usize,
    pub k: usize,
    pub midranks: Vec<f64>,
}

/// Midranks of `absvals` (all entries treated as one window).
pub fn local_midranks(absvals: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..absvals.len()).collect();
    order.sort_by(|&a, &b| absvals[a].total_cmp(&absvals[b]));
    let mut out = vec![0.0; absvals.len()];
    let mut start = 0;
    while start < order.len() {
        let v = absvals[order[start]];
        let mut end = start + 1;
        while end < order.len() && absvals[order[end]] == v {
            end += 1;
        }
        // ranks start+1 ..= end share their average
        let mid = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = mid;
        }
        start = end;
    }
    out
}

/// Dense tie-aware levels of `|y|`: equal absolute values share a level and
/// levels follow the global sort order.
#[derive(Debug, Clone)]
pub struct RankLevels {
    levels: Vec<u32>,
    distinct: usize,
}

impl RankLevels {
    pub fn new(absvals: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..absvals.len()).collect();
        order.sort_by(|&a, &b| absvals[a].total_cmp(&absvals[b]));
        let mut levels = vec![0u32; absvals.len()];
        let mut level = 0u32;
        for (pos, &i) in order.iter().enumerate() {
            if pos > 0 && absvals[i] != absvals[order[pos - 1]] {
                level += 1;
            }
            levels[i] = level;
        }
        let distinct = if absvals.is_empty() { 0 } else { level as usize + 1 };
        RankLevels { levels, distinct }
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        RankLevels::new(&d.abs_y())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Levels of `j..=k` as reals; they order the window exactly like `|y|`.
    pub fn level_values(&self, j: usize, k: usize) -> Vec<f64> {
        self.levels[j..=k].iter().map(|&l| l as f64).collect()
    }

    /// Windows `j..=k` for `k = j+1, ..., n-1`, one extension at a time.
    pub fn stream(&self, j: usize) -> WindowRankStream<'_> {
        WindowRankStream::new(self, j)
    }
}

/// Fenwick tree over level counts.
#[derive(Debug, Clone)]
struct LevelCounter {
    tree: Vec<u32>,
}

impl LevelCounter {
    fn new(size: usize) -> Self {
        LevelCounter { tree: vec![0; size + 1] }
    }

    fn add(&mut self, level: usize) {
        let mut i = level + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted entries with level `< level`.
    fn count_below(&self, level: usize) -> u32 {
        let mut i = level;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }
}

/// Incrementally maintained midranks of the growing window `j..=k`.
///
/// Each extension costs `O(log n)` for the new element's rank plus one pass
/// over the window to shift the ranks of larger and tied entries.
#[derive(Debug, Clone)]
pub struct WindowRankStream<'a> {
    levels: &'a [u32],
    j: usize,
    k: usize,
    counter: LevelCounter,
    level_count: Vec<u32>,
    ranks: Vec<f64>,
}

impl<'a> WindowRankStream<'a> {
    fn new(levels: &'a RankLevels, j: usize) -> Self {
        let mut s = WindowRankStream {
            levels: &levels.levels,
            j,
            k: j,
            counter: LevelCounter::new(levels.distinct),
            level_count: vec![0; levels.distinct],
            ranks: Vec::with_capacity(levels.len().saturating_sub(j)),
        };
        if j < s.levels.len() {
            s.push(j);
        }
        s
    }

    fn push(&mut self, i: usize) {
        let v = self.levels[i];
        let below = self.counter.count_below(v as usize) as f64;
        let tied = self.level_count[v as usize] as f64;
        for (r, &l) in self.ranks.iter_mut().zip(&self.levels[self.j..i]) {
            if l > v {
                *r += 1.0;
            } else if l == v {
                *r += 0.5;
            }
        }
        self.ranks.push(below + tied / 2.0 + 1.0);
        self.counter.add(v as usize);
        self.level_count[v as usize] += 1;
    }

    /// Extend the window by one point; returns the new right end and the
    /// midranks of `j..=k`.
    pub fn advance(&mut self) -> Option<(usize, &[f64])> {
        if self.k + 1 >= self.levels.len() {
            return None;
        }
        self.k += 1;
        self.push(self.k);
        Some((self.k, &self.ranks))
    }
}

impl Iterator for WindowRankStream<'_> {
    type Item = RankTable;

    fn next(&mut self) -> Option<RankTable> {
        let j = self.j;
        self.advance().map(|(k, r)| RankTable {
            j,
            k,
            midranks: r.to_vec(),
        })
    }
}

/// Midrank tables for every window `j..=k`, `k > j`, of `d`.
pub fn window_rank_stream(d: &Dataset, j: usize) -> Result<std::vec::IntoIter<RankTable>> {
    if j + 1 >= d.len() {
        return Err(Error::InvalidWindow { j, k: j + 1, n: d.len() });
    }
    let levels = RankLevels::from_dataset(d);
    Ok(levels.stream(j).collect::<Vec<_>>().into_iter())
}
