//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::HashSet;

use dartsketch::dartboard::{DartPlacement, Dartboard};
use dartsketch::sketches::{CurtainParams, CurtainSketch};
use rand::Rng;

/// Curtain state recomputed from scratch from the full dart multiset.
pub struct NaiveCurtain {
    pub params: CurtainParams,
    pub board: Dartboard,
    pub darts: HashSet<DartPlacement>,
}

impl NaiveCurtain {
    pub fn new(params: CurtainParams, seed: u64) -> Self {
        Self {
            params,
            board: params.dartboard(seed),
            darts: HashSet::new(),
        }
    }

    pub fn add(&mut self, dart: DartPlacement) {
        self.darts.insert(dart);
    }

    fn half(column: usize, level: i64) -> i64 {
        2 * level + (column % 2) as i64
    }

    /// Smallest curtain with steps in O_a that lies on or above every dart
    /// and on or above the floor one level below the sawtooth baseline.
    /// Computed by repeated relaxation rather than by cones.
    pub fn heights(&self) -> Vec<i64> {
        let m = self.params.m();
        let span = 2 * self.params.a() as i64 - 1;
        let mut g: Vec<i64> = (0..m).map(|i| Self::half(i, -1)).collect();
        for d in &self.darts {
            g[d.column] = g[d.column].max(Self::half(d.column, d.level as i64));
        }
        loop {
            let mut moved = false;
            for i in 0..m {
                for j in [i.wrapping_sub(1), i + 1] {
                    if j < m && g[j] - g[i] > span {
                        g[i] = g[j] - span;
                        moved = true;
                    }
                }
            }
            if !moved {
                return g;
            }
        }
    }

    pub fn tension(&self, g: &[i64]) -> Vec<bool> {
        let span = 2 * self.params.a() as i64 - 1;
        (0..g.len())
            .map(|i| (i > 0 && g[i] - g[i - 1] == -span) || (i + 1 < g.len() && g[i + 1] - g[i] == span))
            .collect()
    }

    /// Cells of column `i` covered by the window, top first, as levels
    /// (negative levels included so indices line up with bit positions).
    pub fn window_levels(&self, g: i64, tension: bool, column: usize) -> Vec<i64> {
        let top = if tension { g } else { g - 2 };
        (0..self.params.h() as i64)
            .map(|k| (top - 2 * k - (column % 2) as i64).div_euclid(2))
            .collect()
    }

    pub fn window_words(&self) -> Vec<u64> {
        let g = self.heights();
        let t = self.tension(&g);
        (0..self.params.m())
            .map(|i| {
                let mut w = 0;
                for (k, level) in self.window_levels(g[i], t[i], i).into_iter().enumerate() {
                    if level >= 0 && self.darts.contains(&DartPlacement { column: i, level: level as u32 }) {
                        w |= 1 << k;
                    }
                }
                w
            })
            .collect()
    }

    /// Rules applied literally to the dart set.
    pub fn occupied(&self, column: usize, level: u32) -> bool {
        let g = self.heights();
        let t = self.tension(&g);
        let x = Self::half(column, level as i64);
        if x > g[column] {
            return false;
        }
        if x == g[column] && !t[column] {
            return true;
        }
        let window = self.window_levels(g[column], t[column], column);
        if window.contains(&(level as i64)) {
            return self.darts.contains(&DartPlacement { column, level });
        }
        true
    }

    pub fn free_area(&self) -> f64 {
        let mut total = 0.0;
        for c in 0..self.params.m() {
            for l in 0..=self.params.max_level() {
                if !self.occupied(c, l) {
                    total += self.board.cell_area(c, l);
                }
            }
        }
        total
    }
}

/// Every cell of a small board.
pub fn all_cells(board: &Dartboard) -> Vec<DartPlacement> {
    let mut out = Vec::new();
    for column in 0..board.m() {
        for level in 0..=board.max_level() {
            out.push(DartPlacement { column, level });
        }
    }
    out
}

/// Probability that the next dart changes `sketch`, by trying every cell on
/// a copy and weighting by its area.
pub fn change_probability<S: Clone>(
    board: &Dartboard,
    sketch: &S,
    mut update: impl FnMut(&mut S, DartPlacement) -> bool,
) -> f64 {
    all_cells(board)
        .into_iter()
        .filter(|&d| {
            let mut copy = sketch.clone();
            update(&mut copy, d)
        })
        .map(|d| board.cell_area(d.column, d.level))
        .sum()
}

/// A dart with roughly geometric level so small boards fill up unevenly.
pub fn random_dart<R: Rng>(rng: &mut R, m: usize, max_level: u32) -> DartPlacement {
    let column = rng.gen_range(0..m);
    let mut level = 0;
    while level < max_level && rng.gen_bool(0.55) {
        level += 1;
    }
    DartPlacement { column, level }
}

/// Compares an incremental Curtain against the oracle; returns a
/// description of the first difference.
pub fn curtain_mismatch(sketch: &CurtainSketch, oracle: &NaiveCurtain) -> Option<String> {
    let g = oracle.heights();
    if sketch.heights_half() != g {
        return Some(format!("heights {:?} vs oracle {:?}", sketch.heights_half(), g));
    }
    let t = oracle.tension(&g);
    if sketch.tension_flags() != t {
        return Some(format!("tension {:?} vs oracle {:?}", sketch.tension_flags(), t));
    }
    let words: Vec<u64> = (0..sketch.params().m()).map(|i| sketch.window_word(i)).collect();
    let expect = oracle.window_words();
    if words != expect {
        return Some(format!("window bits {words:?} vs oracle {expect:?}"));
    }
    for d in all_cells(&oracle.board) {
        if sketch.is_occupied(d.column, d.level).unwrap() != oracle.occupied(d.column, d.level) {
            return Some(format!("occupancy differs at {d:?}"));
        }
    }
    let diff = (sketch_free(sketch) - oracle.free_area()).abs();
    if diff > 1e-12 {
        return Some(format!("free area differs by {diff:e}"));
    }
    None
}

fn sketch_free(s: &CurtainSketch) -> f64 {
    use dartsketch::sketches::Sketch;
    s.free_area()
}
