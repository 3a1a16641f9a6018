mod common;

use std::collections::HashMap;

use common::all_cells;
use dartsketch::dartboard::{DartPlacement, Dartboard, OffsetVector, PartitionParams};
use dartsketch::martingale::MartingaleSketch;
use dartsketch::sketches::{CurtainParams, CurtainSketch, LogLogSketch, PcsaSketch, Sketch};

/// Exact distribution of the martingale after each of `steps` darts, by
/// expanding every dart outcome. States are keyed by their full encoding
/// (which includes the running estimate and variance) and by `N`, the
/// number of darts thrown while some cell was still free.
///
/// Returns `(E[λ̂ - N], E[(λ̂ - N)^2], E[V], E[N])` per step. Once the board
/// is full the estimate stops growing, so `E[λ̂] = E[N]` rather than `λ`.
fn exact_moments<S: Sketch + Clone>(
    board: &Dartboard,
    start: S,
    steps: usize,
    update: impl Fn(&mut S, DartPlacement) -> bool,
) -> Vec<[f64; 4]> {
    let cells = all_cells(board);
    let total: f64 = cells.iter().map(|d| board.cell_area(d.column, d.level)).sum();
    assert!((total - 1.0).abs() < 1e-14, "cells cover {total}");

    type States<S> = HashMap<(Vec<u8>, u32), (MartingaleSketch<S>, f64)>;
    let mut states: States<S> = HashMap::new();
    let first = MartingaleSketch::new(start);
    states.insert((first.to_bytes(), 0), (first, 1.0));
    let mut out = Vec::new();
    for _ in 0..steps {
        let mut next: States<S> = HashMap::new();
        for ((_, n), (s, p)) in &states {
            let n = n + u32::from(s.inner().free_area() > 0.0);
            for &d in &cells {
                let mut c = s.clone();
                c.observe(|inner| update(inner, d));
                let w = p * board.cell_area(d.column, d.level);
                next.entry((c.to_bytes(), n)).or_insert((c, 0.0)).1 += w;
            }
        }
        states = next;
        let mut acc = [0.0; 4];
        for ((_, n), (s, p)) in &states {
            let dev = s.estimate() - *n as f64;
            acc[0] += p * dev;
            acc[1] += p * dev * dev;
            acc[2] += p * s.variance_estimate();
            acc[3] += p * *n as f64;
        }
        out.push(acc);
    }
    out
}

fn check(moments: &[[f64; 4]]) {
    for (step, &[bias, second, v, _]) in moments.iter().enumerate() {
        assert!(bias.abs() < 1e-10, "after {} darts: E[λ̂ - N] = {bias}", step + 1);
        assert!(
            (second - v).abs() < 1e-10 * second.max(1.0),
            "after {} darts: E[(λ̂ - N)^2] = {second}, E[V] = {v}",
            step + 1
        );
    }
}

/// While saturation is impossible `N = λ`, so the estimate is exactly
/// unbiased and `E[V]` is exactly its variance.
fn check_unsaturated(moments: &[[f64; 4]], up_to: usize) {
    for (step, &[_, _, _, n]) in moments.iter().take(up_to).enumerate() {
        assert!((n - (step + 1) as f64).abs() < 1e-12);
    }
}

fn tiny_board(q: f64, sawtooth: bool) -> Dartboard {
    let p = PartitionParams::new(q, 2)
        .unwrap()
        .with_sawtooth(sawtooth)
        .with_max_level(3)
        .unwrap();
    Dartboard::new(p, OffsetVector::zeros(2), 7).unwrap()
}

#[test]
fn pcsa_is_exactly_unbiased_on_a_tiny_board() {
    let board = tiny_board(2.0, false);
    let m = exact_moments(&board, PcsaSketch::new(board.clone()), 10, |s, d| s.update(d).unwrap());
    check(&m);
    // 8 cells cannot all be hit by 7 darts
    check_unsaturated(&m, 8);
    assert!(m[9][3] < 10.0);
}

#[test]
fn loglog_is_exactly_unbiased_on_a_tiny_board() {
    let board = tiny_board(2.91, false);
    let m = exact_moments(&board, LogLogSketch::new(board.clone()), 10, |s, d| s.update(d).unwrap());
    check(&m);
}

#[test]
fn curtain_is_exactly_unbiased_on_a_tiny_board() {
    let p = CurtainParams::new(2.0, 1, 1, 2).unwrap().with_max_level(3).unwrap();
    let sketch = CurtainSketch::new(p, 7);
    let board = sketch.board().clone();
    let m = exact_moments(&board, sketch, 8, |s, d| s.update(d).unwrap());
    check(&m);
}

#[test]
fn two_cell_board_closed_form() {
    // One column, levels 0 and 1 only: cell areas 1 - 1/q and 1/q.
    let q = 3.0;
    let p = PartitionParams::new(q, 1).unwrap().with_max_level(1).unwrap();
    let board = Dartboard::new(p, OffsetVector::zeros(1), 1).unwrap();
    let m = exact_moments(&board, PcsaSketch::new(board.clone()), 6, |s, d| s.update(d).unwrap());
    check(&m);
    // Second dart: with probability a^2 + b^2 it repeats (estimate 1),
    // otherwise the estimate is 1 + 1/P for the area P left free.
    let (a, b) = (1.0 - 1.0 / q, 1.0 / q);
    let e2 = a * (a + b * (1.0 + 1.0 / b)) + b * (b + a * (1.0 + 1.0 / a));
    assert!((e2 - 2.0).abs() < 1e-12);
    assert!(m[1][0].abs() < 1e-12 && (m[1][3] - 2.0).abs() < 1e-12);
    // Third dart: the board is full after two distinct hits.
    let full = 2.0 * a * b;
    assert!((m[2][3] - (3.0 - full)).abs() < 1e-12);
}
