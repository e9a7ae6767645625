//! Small numeric utilities shared by the samplers, the replication harness
//! and the verification suites.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Type-7 percentile (linear interpolation) of unsorted data, `p` in [0,1].
pub fn percentile(data: &[f64], p: f64) -> f64 {
    assert!(!data.is_empty());
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    percentile_sorted(&sorted, p)
}

pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Draws from N(mean, 1) truncated to the positive (or negative) half line.
///
/// Inverse-CDF in the central regime; Robert's exponential rejection sampler
/// when the admissible region is far in the tail.
pub fn truncated_normal_unit_sd(mean: f64, positive: bool, rng: &mut ChaCha8Rng) -> f64 {
    // reduce to sampling w ~ N(0,1) | w > a, then map back
    let a = if positive { -mean } else { mean };
    let w = if a < 4.0 {
        // inverse CDF: P(W > a) region
        let pa = phi(a);
        loop {
            let u: f64 = rng.gen();
            let p = pa + u * (1.0 - pa);
            if p < 1.0 {
                break phi_inv(p);
            }
        }
    } else {
        // Robert (1995) translated-exponential rejection for deep tails
        let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = rng.gen::<f64>();
            let x = a - (1.0 - e).ln() / alpha;
            let accept = (-(x - alpha) * (x - alpha) / 2.0).exp();
            if rng.gen::<f64>() < accept {
                break x;
            }
        }
    };
    if positive {
        mean + w
    } else {
        mean - w
    }
}

/// Standard normal draw.
pub fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Upper-tail chi-squared p-value.
pub fn chi2_pvalue(stat: f64, df: f64) -> f64 {
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

/// Two-sided Kolmogorov-Smirnov p-value (asymptotic) for a sample against a
/// continuous CDF.
pub fn ks_pvalue<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    let t = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..101 {
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64) * (k as f64) * t * t).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Monte-Carlo standard error of the mean of a (possibly autocorrelated)
/// chain, estimated by non-overlapping batch means.
pub fn batch_means_se(chain: &[f64], n_batches: usize) -> f64 {
    let b = chain.len() / n_batches;
    assert!(b >= 1, "chain too short for requested batches");
    let means: Vec<f64> = (0..n_batches)
        .map(|k| mean(&chain[k * b..(k + 1) * b]))
        .collect();
    sample_sd(&means) / (n_batches as f64).sqrt()
}

/// Maximum-likelihood logistic regression of a binary response on a design
/// matrix (intercept added), by damped IRLS. Returns fitted probabilities.
pub fn logistic_fit(design: &crate::data::DesignMatrix, z: &[u8]) -> crate::error::Result<Vec<f64>> {
    use nalgebra::{DMatrix, DVector};
    let n = z.len();
    let d = design.n_cols();
    let mut x = DMatrix::zeros(n, d + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 0..d {
            x[(i, j + 1)] = design.value(i, j);
        }
    }
    let zv: Vec<f64> = z.iter().map(|&v| v as f64).collect();
    let mut beta = DVector::zeros(d + 1);
    for _ in 0..50 {
        let eta = &x * &beta;
        let p: Vec<f64> = eta.iter().map(|&e| 1.0 / (1.0 + (-e).exp())).collect();
        let mut grad = DVector::zeros(d + 1);
        let mut hess = DMatrix::zeros(d + 1, d + 1);
        for i in 0..n {
            let w = (p[i] * (1.0 - p[i])).max(1e-10);
            let r = zv[i] - p[i];
            for a in 0..=d {
                grad[a] += x[(i, a)] * r;
                for b in 0..=d {
                    hess[(a, b)] += x[(i, a)] * w * x[(i, b)];
                }
            }
        }
        // mild ridge for separable data
        for a in 0..=d {
            hess[(a, a)] += 1e-6;
        }
        let step = hess
            .lu()
            .solve(&grad)
            .ok_or_else(|| crate::error::Error::validation("logistic IRLS failed"))?;
        beta += &step;
        if step.norm() < 1e-10 {
            break;
        }
    }
    let eta = &x * &beta;
    Ok(eta
        .iter()
        .map(|&e| (1.0 / (1.0 + (-e).exp())).clamp(0.001, 0.999))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn percentile_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..501).map(|_| std_normal(&mut rng)).collect();
        for p in [0.025, 0.5, 0.975] {
            let a = percentile(&data, p);
            // independent oracle: full sort, direct interpolation formula
            let mut s = data.clone();
            s.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let h = p * (s.len() - 1) as f64;
            let expect = s[h.floor() as usize]
                + (h - h.floor()) * (s[h.ceil() as usize] - s[h.floor() as usize]);
            assert_eq!(a, expect);
        }
    }

    #[test]
    fn truncated_normal_respects_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mean in [-8.0, -1.0, 0.0, 2.0, 8.0] {
            for _ in 0..200 {
                assert!(truncated_normal_unit_sd(mean, true, &mut rng) > 0.0);
                assert!(truncated_normal_unit_sd(mean, false, &mut rng) < 0.0);
            }
        }
    }

    #[test]
    fn truncated_normal_mean_matches_formula() {
        // E[W | W > 0] = m + phi_pdf(m)/Phi(m) for W ~ N(m,1)
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = 0.7;
        let draws: Vec<f64> = (0..200000)
            .map(|_| truncated_normal_unit_sd(m, true, &mut rng))
            .collect();
        let pdf = (-m * m / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let expect = m + pdf / phi(m);
        assert!((mean(&draws) - expect).abs() < 0.01);
    }

    #[test]
    fn ks_detects_and_accepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let normal: Vec<f64> = (0..2000).map(|_| std_normal(&mut rng)).collect();
        assert!(ks_pvalue(&normal, phi) > 0.01);
        let shifted: Vec<f64> = normal.iter().map(|x| x + 0.5).collect();
        assert!(ks_pvalue(&shifted, phi) < 1e-6);
    }

    #[test]
    fn logistic_recovers_constant_rate() {
        use crate::data::{DesignMatrix, DesignOrigin};
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|_| std_normal(&mut rng)).collect();
        let z: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.3)).collect();
        let dm = DesignMatrix {
            columns: vec![x],
            origin: vec![DesignOrigin {
                source: None,
                name: "x".into(),
                level: None,
            }],
        };
        let p = logistic_fit(&dm, &z).unwrap();
        assert!((mean(&p) - 0.3).abs() < 0.05);
    }
}
