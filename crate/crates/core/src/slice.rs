//! Univariate slice sampler (stepping out + shrinkage, Neal 2003), used for
//! the leaf-scale hyperparameters whose half-Cauchy / half-Normal
//! conditionals are not conjugate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One slice-sampling step targeting an unnormalized log density on
/// `(lower, +inf)`. `width` is the initial bracket size.
pub fn slice_sample<F: Fn(f64) -> f64>(
    log_density: F,
    x0: f64,
    width: f64,
    lower: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    debug_assert!(x0 > lower);
    let log_y = log_density(x0) + rng.gen::<f64>().ln();

    // stepping out
    let u: f64 = rng.gen();
    let mut left = (x0 - u * width).max(lower);
    let mut right = left + width;
    let max_steps = 64;
    let mut steps = 0;
    while left > lower && log_density(left) > log_y && steps < max_steps {
        left = (left - width).max(lower);
        steps += 1;
    }
    steps = 0;
    while log_density(right) > log_y && steps < max_steps {
        right += width;
        steps += 1;
    }

    // shrinkage
    loop {
        let x1 = left + rng.gen::<f64>() * (right - left);
        if log_density(x1) > log_y {
            return x1;
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        if right - left < 1e-300 {
            return x0;
        }
    }
}
