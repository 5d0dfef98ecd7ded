#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// `rows` rows of `m` features `x1..xm` plus `y`. With `linear` the target
/// is a noisy linear function, otherwise a binary label from a nonlinear
/// rule.
pub fn write_dataset(dir: &Path, name: &str, rows: usize, m: usize, seed: u64, linear: bool) -> PathBuf {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..m).map(|j| (j as f64 + 1.0) * if j % 2 == 0 { 1.0 } else { -0.6 }).collect();
    let mut text = (1..=m).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",") + ",y\n";
    for _ in 0..rows {
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = if linear {
            x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.1..0.1)
        } else {
            let s = x[0] * x[1] + x[2..].iter().take(2).sum::<f64>();
            if s > 0.0 {
                1.0
            } else {
                0.0
            }
        };
        for v in &x {
            write!(text, "{v:.4},").unwrap();
        }
        writeln!(text, "{y:.4}").unwrap();
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}
