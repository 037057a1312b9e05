//! Shared oracles for integration and acceptance tests.

#![allow(dead_code)]

use abcpg::gibbs::nig_update;
use abcpg::NigState;
use rand::Rng;

pub struct Brute {
    pub a: f64,
    pub b: f64,
    pub mu: [f64; 2],
    pub lambda: [[f64; 2]; 2],
}

pub fn brute_force(prior: &NigState, h: &[f64]) -> Brute {
    let [[p, q], [_, s]] = prior.lambda;
    let r11 = p.sqrt();
    let r12 = q / r11;
    let r22 = (s - r12 * r12).sqrt();

    let mut x: Vec<[f64; 2]> = h.windows(2).map(|w| [1.0, w[0].ln()]).collect();
    let mut y: Vec<f64> = h[1..].iter().map(|v| v.ln()).collect();
    x.push([r11, r12]);
    y.push(r11 * prior.mu[0] + r12 * prior.mu[1]);
    x.push([0.0, r22]);
    y.push(r22 * prior.mu[1]);

    // modified Gram-Schmidt on the two columns
    let c1: Vec<f64> = x.iter().map(|r| r[0]).collect();
    let c2: Vec<f64> = x.iter().map(|r| r[1]).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let n1 = dot(&c1, &c1).sqrt();
    let q1: Vec<f64> = c1.iter().map(|v| v / n1).collect();
    let k12 = dot(&q1, &c2);
    let v: Vec<f64> = c2.iter().zip(&q1).map(|(c, q)| c - k12 * q).collect();
    let n2 = dot(&v, &v).sqrt();
    let q2: Vec<f64> = v.iter().map(|x| x / n2).collect();
    let z1 = dot(&q1, &y);
    let z2 = dot(&q2, &y);
    let beta1 = z2 / n2;
    let beta0 = (z1 - k12 * beta1) / n1;
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(r, yy)| {
            let e = yy - r[0] * beta0 - r[1] * beta1;
            e * e
        })
        .sum();
    Brute {
        a: prior.a + (h.len() - 1) as f64 / 2.0,
        b: prior.b + 0.5 * rss,
        mu: [beta0, beta1],
        lambda: [[n1 * n1, n1 * k12], [n1 * k12, k12 * k12 + n2 * n2]],
    }
}

/// Random prior and path of length `T <= 50`.
pub fn random_instance<R: Rng>(rng: &mut R) -> (NigState, Vec<f64>) {
    let p: f64 = rng.random_range(0.5..5.0);
    let s: f64 = rng.random_range(0.5..5.0);
    let q = rng.random_range(-0.9..0.9) * (p * s).sqrt();
    let prior = NigState::new(
        rng.random_range(0.5..5.0),
        rng.random_range(0.1..3.0),
        [rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)],
        [[p, q], [q, s]],
    )
    .unwrap();
    let t_len = rng.random_range(1..=50);
    let phi = rng.random_range(0.0..0.99);
    let mut lh = rng.random_range(-9.0..-5.0);
    let mut h = vec![f64::exp(lh)];
    for _ in 0..t_len {
        lh = -0.7 + phi * lh + 0.6 * rng.random_range(-1.7..1.7);
        h.push(lh.exp());
    }
    (prior, h)
}

/// Largest mismatch between `nig_update` and the brute-force solve, as a
/// multiple of the `1e-10` relative tolerance; `<= 1` passes.
pub fn nig_mismatch(prior: &NigState, h: &[f64]) -> f64 {
    let got = nig_update(prior, h).unwrap();
    let want = brute_force(prior, h);
    let rel = |x: f64, y: f64| (x - y).abs() / (1e-10 * y.abs().max(1.0));
    let mut worst = rel(got.a, want.a).max(rel(got.b, want.b));
    for i in 0..2 {
        worst = worst.max(rel(got.mu[i], want.mu[i]));
        for j in 0..2 {
            worst = worst.max(rel(got.lambda[i][j], want.lambda[i][j]));
        }
    }
    worst
}
