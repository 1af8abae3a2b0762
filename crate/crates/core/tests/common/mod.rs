//! Reference computations written independently of the library, shared by
//! the integration tests and the acceptance runner.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.5758293035489004;

/// Index of the largest magnitude among the non-negative frequency bins of
/// an `n`-point FFT of the first `n` samples.
pub fn fft_peak_bin(x: &[f64], n: usize) -> usize {
    let mut buf: Vec<Complex<f64>> = x[..n].iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (0..=n / 2)
        .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
        .expect("non-empty spectrum")
}

/// Q(x) = P(N(0,1) > x), by Simpson integration of the normal density on
/// [x, x + 12].
pub fn q_simpson(x: f64) -> f64 {
    let n = 20_000;
    let h = 12.0 / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(x) + pdf(x + 12.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(x + i as f64 * h);
    }
    s * h / 3.0
}

/// BPSK BER oracle Q(√(2·Eb/N0)).
pub fn bpsk_ber(ebn0_db: f64) -> f64 {
    q_simpson((2.0 * 10f64.powf(ebn0_db / 10.0)).sqrt())
}

/// Whether `errors` out of `trials` is inside the normal-approximation
/// binomial interval around `p` at `z` standard errors. Returns the verdict,
/// the expected count and the half-width.
pub fn binomial_ok(errors: u64, trials: u64, p: f64, z: f64) -> (bool, f64, f64) {
    let mean = p * trials as f64;
    let half = z * (mean * (1.0 - p)).sqrt();
    ((errors as f64 - mean).abs() <= half, mean, half)
}

fn bits(index: usize, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |k| ((index >> k) & 1) as f64)
}

/// ln Z of an RBM by direct enumeration of E(v,h) = -hᵀWv - bᵀv - cᵀh.
pub fn brute_log_z(w: &Array2<f64>, b: &Array1<f64>, c: &Array1<f64>) -> f64 {
    let (u_h, u_v) = w.dim();
    let mut terms = Vec::with_capacity(1 << (u_v + u_h));
    for vi in 0..1usize << u_v {
        let v = bits(vi, u_v);
        let field = c + &w.dot(&v);
        let bv = b.dot(&v);
        for hi in 0..1usize << u_h {
            let hw: f64 = (0..u_h).filter(|j| (hi >> j) & 1 == 1).map(|j| field[j]).sum();
            terms.push(hw + bv);
        }
    }
    log_sum_exp(&terms)
}

/// Σ_{v,h} exp(-E(v,h) - log_z) with the energy evaluated here.
pub fn joint_mass(w: &Array2<f64>, b: &Array1<f64>, c: &Array1<f64>, log_z: f64) -> f64 {
    let (u_h, u_v) = w.dim();
    let mut total = 0.0;
    for vi in 0..1usize << u_v {
        let v = bits(vi, u_v);
        let field = c + &w.dot(&v);
        let bv = b.dot(&v);
        for hi in 0..1usize << u_h {
            let hw: f64 = (0..u_h).filter(|j| (hi >> j) & 1 == 1).map(|j| field[j]).sum();
            total += (hw + bv - log_z).exp();
        }
    }
    total
}

/// Mean negative log marginal likelihood of binary rows, marginalizing h by
/// enumeration.
pub fn brute_nll(w: &Array2<f64>, b: &Array1<f64>, c: &Array1<f64>, data: &Array2<f64>) -> f64 {
    let u_h = w.nrows();
    let log_z = brute_log_z(w, b, c);
    let mut total = 0.0;
    for row in data.rows() {
        let v = row.to_owned();
        let field = c + &w.dot(&v);
        let bv = b.dot(&v);
        let terms: Vec<f64> = (0..1usize << u_h)
            .map(|hi| bv + (0..u_h).filter(|j| (hi >> j) & 1 == 1).map(|j| field[j]).sum::<f64>())
            .collect();
        total += log_z - log_sum_exp(&terms);
    }
    total / data.nrows() as f64
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Central-difference derivative of `f` along every coordinate of `x`.
pub fn central_differences(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest |a - n| / max(|a|, |n|, floor) over paired entries.
pub fn worst_relative(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Per-class centroids of 2-D points and the mean within-class standard
/// deviation (root mean squared distance to the class centroid).
pub fn centroids_and_spread(points: &[(f64, f64)], labels: &[usize], classes: usize) -> (Vec<(f64, f64)>, f64) {
    let mut sum = vec![(0.0, 0.0, 0usize); classes];
    for (&(x, y), &l) in points.iter().zip(labels) {
        sum[l].0 += x;
        sum[l].1 += y;
        sum[l].2 += 1;
    }
    let cent: Vec<(f64, f64)> = sum.iter().map(|&(x, y, n)| (x / n as f64, y / n as f64)).collect();
    let mut spread = vec![0.0; classes];
    for (&(x, y), &l) in points.iter().zip(labels) {
        spread[l] += (x - cent[l].0).powi(2) + (y - cent[l].1).powi(2);
    }
    let mean_std = (0..classes)
        .map(|k| (spread[k] / sum[k].2 as f64).sqrt())
        .sum::<f64>()
        / classes as f64;
    (cent, mean_std)
}
