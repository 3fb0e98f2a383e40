//! Wall-clock comparison of the quadratic matrix form and the chunked scan.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ssd::{chunked_scan, ssd_matrix_form, SsdParams};

pub const DEFAULT_LENGTHS: [usize; 4] = [512, 1024, 2048, 4096];
/// Relative agreement required before anything is timed.
pub const AGREEMENT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct BenchSettings {
    pub chunk: usize,
    pub trials: usize,
    pub state_dim: usize,
    pub channels: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            chunk: crate::ssd::DEFAULT_CHUNK,
            trials: 3,
            state_dim: crate::ssd::DEFAULT_STATE_DIM,
            channels: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub len: usize,
    /// Median seconds.
    pub matrix: f64,
    pub chunked: f64,
    pub max_rel_err: f64,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.matrix / self.chunked
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub chunk: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Least-squares slope of log(time) against log(T) for each form.
    pub fn slopes(&self) -> (f64, f64) {
        let xs: Vec<f64> = self.rows.iter().map(|r| (r.len as f64).ln()).collect();
        let fit = |ys: Vec<f64>| log_slope(&xs, &ys);
        (
            fit(self.rows.iter().map(|r| r.matrix.ln()).collect()),
            fit(self.rows.iter().map(|r| r.chunked.ln()).collect()),
        )
    }

    pub fn row(&self, len: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.len == len)
    }
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "chunk = {}", self.chunk)?;
        writeln!(f, "{:>6} {:>12} {:>12} {:>9} {:>10}", "T", "matrix_ms", "chunked_ms", "speedup", "max_err")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>6} {:>12.3} {:>12.3} {:>9.1} {:>10.2e}",
                r.len,
                r.matrix * 1e3,
                r.chunked * 1e3,
                r.speedup(),
                r.max_rel_err
            )?;
        }
        if self.rows.len() >= 2 {
            let (m, c) = self.slopes();
            writeln!(f, "log-log slope: matrix {m:.2}, chunked {c:.2}")?;
        }
        Ok(())
    }
}

pub fn random_params(rng: &mut ChaCha8Rng, len: usize, state_dim: usize, channels: usize) -> SsdParams {
    let a = (0..len).map(|_| rng.gen_range(0.5..1.0)).collect();
    let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let b = v(len * state_dim);
    let c = v(len * state_dim);
    let x = v(len * channels);
    SsdParams::new(a, b, c, x, state_dim, channels).expect("valid random parameters")
}

fn median_secs(trials: usize, mut f: impl FnMut()) -> f64 {
    let mut times: Vec<f64> = (0..trials)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

/// Fails if the two forms disagree at any length.
pub fn run_bench(lengths: &[usize], settings: &BenchSettings) -> Result<BenchReport> {
    if settings.trials == 0 || settings.chunk == 0 {
        return Err(Error::InvalidValue("trials and chunk must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut rows = Vec::new();
    for &len in lengths {
        let params = random_params(&mut rng, len, settings.state_dim, settings.channels);
        let chunk = settings.chunk.min(len);
        let m = ssd_matrix_form(&params);
        let c = chunked_scan(&params, chunk)?;
        let max_rel_err = m
            .iter()
            .zip(&c)
            .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
            .fold(0.0, f64::max);
        if !(max_rel_err <= AGREEMENT_TOL) {
            return Err(Error::InvalidValue(format!(
                "T={len}: matrix and chunked forms disagree by {max_rel_err:e}"
            )));
        }
        let matrix = median_secs(settings.trials, || {
            std::hint::black_box(ssd_matrix_form(std::hint::black_box(&params)));
        });
        let chunked = median_secs(settings.trials, || {
            std::hint::black_box(chunked_scan(std::hint::black_box(&params), chunk).ok());
        });
        rows.push(BenchRow {
            len,
            matrix,
            chunked,
            max_rel_err,
        });
    }
    Ok(BenchReport {
        chunk: settings.chunk,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [1.0f64, 2.0, 4.0].iter().map(|v| v.ln()).collect();
        let ys: Vec<f64> = [3.0f64, 12.0, 48.0].iter().map(|v| v.ln()).collect();
        assert!((log_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_run_agrees() {
        let r = run_bench(&[32, 64], &BenchSettings { trials: 1, ..Default::default() }).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|row| row.max_rel_err <= AGREEMENT_TOL));
        assert!(r.to_string().contains("speedup"));
    }
}
