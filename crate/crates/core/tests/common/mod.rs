#![allow(dead_code)]

use proptest::collection::vec;
use proptest::prelude::*;
use stshap::{Coalition, SyntheticGame};

/// A table game over `m` players built from `2^m` values.
pub fn table_game(m: usize, values: &[f64]) -> SyntheticGame {
    SyntheticGame::from_fn(m, |b| values[b as usize]).unwrap()
}

/// Random exhaustive games with `m` in `lo..=hi`.
pub fn games(lo: usize, hi: usize) -> impl Strategy<Value = SyntheticGame> {
    (lo..=hi).prop_flat_map(|m| vec(-10.0..10.0f64, 1 << m).prop_map(move |v| table_game(m, &v)))
}

/// Game where players `j` and `k` are interchangeable.
pub fn with_twins(m: usize, values: &[f64], j: usize, k: usize) -> SyntheticGame {
    let swap = |b: u64| {
        let (bj, bk) = ((b >> j) & 1, (b >> k) & 1);
        (b & !(1 << j) & !(1 << k)) | (bj << k) | (bk << j)
    };
    SyntheticGame::from_fn(m, |b| {
        let s = swap(b);
        // symmetrize: v(S) and v(swap(S)) share one value
        values[b.min(s) as usize]
    })
    .unwrap()
}

/// Brute-force Shapley value of player `i` from the textbook definition,
/// summing over subsets listed explicitly as vectors of players.
pub fn shapley_by_subsets(game: &SyntheticGame, i: usize) -> f64 {
    let m = game.m();
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    let others: Vec<usize> = (0..m).filter(|&p| p != i).collect();
    let mut total = 0.0;
    for pick in 0..(1u64 << others.len()) {
        let members: Vec<usize> = others
            .iter()
            .enumerate()
            .filter(|(t, _)| pick >> t & 1 == 1)
            .map(|(_, &p)| p)
            .collect();
        let s_bits = members.iter().fold(0u64, |b, &p| b | 1 << p);
        let s = Coalition::from_bits(m, s_bits).unwrap();
        let si = Coalition::from_bits(m, s_bits | 1 << i).unwrap();
        let w = fact(members.len()) * fact(m - members.len() - 1) / fact(m);
        total += w * (game.value(si).unwrap() - game.value(s).unwrap());
    }
    total
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
