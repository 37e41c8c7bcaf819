#![allow(dead_code)]

use jkraim::dist::{normal, ErrorDistribution, Pgo};
use rand::Rng;
use rand_distr::StandardNormal;

/// Draw from a PGO by composition: pick the tail, core-Gaussian or uniform
/// piece by its mass, then sample that piece by rejection.
pub fn sample_pgo<R: Rng>(p: &Pgo, rng: &mut R) -> f64 {
    let a = p.x_rp;
    let tail = 2.0 * p.tail_weight() * normal::sf(a / p.sigma2);
    let core = p.p1 * (1.0 - 2.0 * normal::sf(a / p.sigma1));
    let flat = 2.0 * a * p.c_offset;
    let u: f64 = rng.gen::<f64>() * (tail + core + flat);
    if u < tail {
        loop {
            let x = p.sigma2 * rng.sample::<f64, _>(StandardNormal);
            if x.abs() > a {
                return x;
            }
        }
    } else if u < tail + core {
        loop {
            let x = p.sigma1 * rng.sample::<f64, _>(StandardNormal);
            if x.abs() <= a {
                return x;
            }
        }
    } else {
        rng.gen_range(-a..a)
    }
}

/// Direct sampler for the shapes used in tests; independent of the
/// library's inverse-CDF sampler.
pub fn sample<R: Rng>(d: &ErrorDistribution, rng: &mut R) -> f64 {
    match d {
        ErrorDistribution::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
        ErrorDistribution::Bgmm { p1, sigma1, sigma2 } => {
            let s = if rng.gen::<f64>() < *p1 { sigma1 } else { sigma2 };
            s * rng.sample::<f64, _>(StandardNormal)
        }
        ErrorDistribution::Pgo(p) => sample_pgo(p, rng),
        ErrorDistribution::Sum { parts } => parts.iter().map(|p| sample(p, rng)).sum(),
    }
}

/// Kolmogorov distance between sorted samples and a CDF.
pub fn kolmogorov(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// CDF by trapezoid integration of a density from `-span` to `x`.
pub fn integrate_cdf(pdf: impl Fn(f64) -> f64, x: f64, span: f64, steps: usize) -> f64 {
    let h = (x + span) / steps as f64;
    let mut s = 0.5 * (pdf(-span) + pdf(x));
    for i in 1..steps {
        s += pdf(-span + i as f64 * h);
    }
    s * h
}
