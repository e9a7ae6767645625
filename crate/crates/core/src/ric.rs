//! Shrinkage-induced bias in the Gaussian linear treatment model
//! y = tau*z + beta'x + eps with z = gamma'x + nu: closed-form bias of the
//! ridge posterior mean, the equivalent-likelihood b-shift decomposition,
//! and debiasing by augmenting the design with the fitted treatment zhat.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stats;

/// A fully specified linear instance. The prior precision `m` applies to
/// theta = (tau, beta) over the design (z, X); the posterior mean is
/// (M + D'D)^{-1} D'y, so M is expressed on the unit-error-variance scale.
#[derive(Debug, Clone)]
pub struct LinearRicProblem {
    /// n x p control matrix.
    pub x: DMatrix<f64>,
    /// Treatment vector (continuous or binary).
    pub z: DVector<f64>,
    pub beta: DVector<f64>,
    /// Selection coefficients: z = X gamma + nu.
    pub gamma: DVector<f64>,
    pub tau: f64,
    pub sigma: f64,
    pub sigma_nu: f64,
    /// (1+p) x (1+p) symmetric PSD prior precision for (tau, beta).
    pub m: DMatrix<f64>,
}

impl LinearRicProblem {
    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.x.shape();
        if self.z.len() != n || self.beta.len() != p || self.gamma.len() != p {
            return Err(Error::validation("dimension mismatch in linear instance"));
        }
        if self.m.nrows() != p + 1 || self.m.ncols() != p + 1 {
            return Err(Error::validation("prior precision must be (1+p) square"));
        }
        if (&self.m - self.m.transpose()).amax() > 1e-10 {
            return Err(Error::validation("prior precision must be symmetric"));
        }
        if self.sigma <= 0.0 {
            return Err(Error::validation("sigma must be positive"));
        }
        Ok(())
    }

    /// Design (z | X) and coefficient vector (tau, beta).
    pub fn design(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (n, p) = self.x.shape();
        let mut d = DMatrix::zeros(n, p + 1);
        d.column_mut(0).copy_from(&self.z);
        d.view_mut((0, 1), (n, p)).copy_from(&self.x);
        let mut theta = DVector::zeros(p + 1);
        theta[0] = self.tau;
        theta.rows_mut(1, p).copy_from(&self.beta);
        (d, theta)
    }

    /// Least-squares fit of z on X.
    pub fn z_hat(&self) -> Result<DVector<f64>> {
        let gamma_hat = solve_spd(&(self.x.transpose() * &self.x), &(self.x.transpose() * &self.z))?;
        Ok(&self.x * gamma_hat)
    }
}

/// Solves A x = b for symmetric positive-definite A, reporting the
/// condition number when A is numerically singular.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::Singular {
            msg: "linear system is numerically singular".into(),
            cond,
        });
    }
    svd.solve(b, 0.0).map_err(|e| Error::Singular {
        msg: e.to_string(),
        cond,
    })
}

/// Bias of the posterior mean theta_hat = (M + D'D)^{-1} D'y over repeated
/// y draws: -(M + D'D)^{-1} M theta. Works for any design/precision pair of
/// matching size; coordinate 0 is bias(tau_hat) under the (z | X) layout.
pub fn ridge_bias_for(design: &DMatrix<f64>, m: &DMatrix<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let a = m + design.transpose() * design;
    let rhs = -(m * theta);
    solve_spd(&a, &rhs)
}

/// Ridge bias for the instance's own (z | X) design and prior precision.
pub fn ridge_bias(problem: &LinearRicProblem) -> Result<DVector<f64>> {
    problem.validate()?;
    let (d, theta) = problem.design();
    ridge_bias_for(&d, &problem.m, &theta)
}

/// Result of augmenting the design with the fitted treatment.
#[derive(Debug, Clone)]
pub struct DebiasedReport {
    /// First row of (Ztilde'Ztilde)^{-1} Ztilde'X with Ztilde = (z zhat):
    /// the z-coefficients of the two-variable regressions of each control
    /// column on (z, zhat). All ~0 when zhat is the least-squares fit.
    pub first_row_block: Vec<f64>,
    /// Bias of (tau, c, beta) under the augmented design (z zhat X), flat
    /// prior on the first two coordinates. Coordinate 0 is bias(tau_hat).
    pub bias: DVector<f64>,
}

/// Computes the bias of the posterior mean after appending `z_hat` as an
/// extra covariate with a flat prior (alongside a flat prior on z). The
/// control-coefficient prior block is carried over from the instance.
pub fn debiased_design(problem: &LinearRicProblem, z_hat: &DVector<f64>) -> Result<DebiasedReport> {
    problem.validate()?;
    let (n, p) = problem.x.shape();
    if z_hat.len() != n {
        return Err(Error::validation("z_hat length mismatch"));
    }

    // Ztilde = (z zhat); singular iff z and zhat are collinear, i.e. the
    // treatment is a deterministic function of the controls (no overlap).
    let mut zt = DMatrix::zeros(n, 2);
    zt.column_mut(0).copy_from(&problem.z);
    zt.column_mut(1).copy_from(z_hat);
    let gram = zt.transpose() * &zt;
    let det = gram[(0, 0)] * gram[(1, 1)] - gram[(0, 1)] * gram[(1, 0)];
    if det.abs() < 1e-10 * gram[(0, 0)].max(gram[(1, 1)]).powi(2).max(1e-300) {
        return Err(Error::DegenerateOverlap(
            "treatment is an exact function of the controls (z = z_hat)".into(),
        ));
    }
    let ztx = zt.transpose() * &problem.x;
    let mut coeffs = Vec::with_capacity(p);
    for j in 0..p {
        let sol = solve_spd(&gram, &ztx.column(j).clone_owned())?;
        coeffs.push(sol[0]);
    }

    // augmented design (z zhat X), theta = (tau, 0, beta), prior precision
    // blockdiag(0, 0, M_beta)
    let mut d = DMatrix::zeros(n, p + 2);
    d.column_mut(0).copy_from(&problem.z);
    d.column_mut(1).copy_from(z_hat);
    d.view_mut((0, 2), (n, p)).copy_from(&problem.x);
    let mut m_aug = DMatrix::zeros(p + 2, p + 2);
    m_aug
        .view_mut((2, 2), (p, p))
        .copy_from(&problem.m.view((1, 1), (p, p)).clone_owned());
    let mut theta = DVector::zeros(p + 2);
    theta[0] = problem.tau;
    theta.rows_mut(2, p).copy_from(&problem.beta);
    let bias = ridge_bias_for(&d, &m_aug, &theta)?;

    Ok(DebiasedReport {
        first_row_block: coeffs,
        bias,
    })
}

/// The b-shift reparameterization of the conditional mean.
#[derive(Debug, Clone)]
pub struct BShift {
    pub tau_shift: f64,
    pub beta_shift: DVector<f64>,
    /// Variance of the absorbed term b*(z - gamma'x): b^2 Var(nu).
    pub extra_resid_var: f64,
    /// Max abs discrepancy between the original and shifted conditional
    /// means evaluated on the data rows.
    pub identity_residual: f64,
}

/// For any scalar b, tau*z + beta'x = (tau+b)z + (beta - b*gamma)'x
/// - b*(z - gamma'x). Returns the shifted coefficients and verifies the
/// identity row by row.
pub fn b_shift_decomposition(problem: &LinearRicProblem, b: f64) -> BShift {
    let beta_shift = &problem.beta - b * &problem.gamma;
    let lhs = problem.tau * &problem.z + &problem.x * &problem.beta;
    let nu = &problem.z - &problem.x * &problem.gamma;
    let rhs = (problem.tau + b) * &problem.z + &problem.x * &beta_shift - b * &nu;
    let identity_residual = (lhs - rhs).amax();
    BShift {
        tau_shift: problem.tau + b,
        beta_shift,
        extra_resid_var: b * b * problem.sigma_nu * problem.sigma_nu,
        identity_residual,
    }
}

/// Empirical Var(nu) from the residual z - zhat.
pub fn empirical_nu_variance(problem: &LinearRicProblem, z_hat: &DVector<f64>) -> f64 {
    let resid: Vec<f64> = (&problem.z - z_hat).iter().cloned().collect();
    let sd = stats::sample_sd(&resid);
    sd * sd
}

/// Monte-Carlo estimate of the posterior-mean bias over repeated y draws.
#[derive(Debug, Clone)]
pub struct MonteCarloBias {
    pub mc_bias: Vec<f64>,
    pub mc_se: Vec<f64>,
    pub draws: usize,
}

/// Simulates y = D theta + sigma*eps repeatedly and averages the posterior
/// mean error. Uses the affine form error = bias + sigma * B eps with
/// B = (M + D'D)^{-1} D', so each draw costs one matrix-vector product.
pub fn monte_carlo_bias(
    design: &DMatrix<f64>,
    m: &DMatrix<f64>,
    theta: &DVector<f64>,
    sigma: f64,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloBias> {
    let (n, q) = design.shape();
    let a = m + design.transpose() * design;
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 0.0 || smax / smin > 1e12 {
        return Err(Error::Singular {
            msg: "posterior precision numerically singular".into(),
            cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    let b_mat = svd
        .solve(&design.transpose(), 0.0)
        .map_err(|e| Error::Singular {
            msg: e.to_string(),
            cond: smax / smin,
        })?;
    let analytic = {
        let rhs = -(m * theta);
        let svd2 = (m + design.transpose() * design).svd(true, true);
        svd2.solve(&rhs, 0.0).map_err(|e| Error::Singular {
            msg: e.to_string(),
            cond: smax / smin,
        })?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; q];
    let mut sumsq = vec![0.0; q];
    let mut eps = DVector::zeros(n);
    for _ in 0..draws {
        for i in 0..n {
            eps[i] = stats::std_normal(&mut rng);
        }
        let err = &analytic + sigma * (&b_mat * &eps);
        for j in 0..q {
            sum[j] += err[j];
            sumsq[j] += err[j] * err[j];
        }
    }
    let dn = draws as f64;
    let mc_bias: Vec<f64> = sum.iter().map(|s| s / dn).collect();
    let mc_se = sumsq
        .iter()
        .zip(&mc_bias)
        .map(|(&ss, &m)| ((ss / dn - m * m).max(0.0) / dn).sqrt())
        .collect();
    Ok(MonteCarloBias {
        mc_bias,
        mc_se,
        draws,
    })
}

/// A randomized confounded instance: standard-normal controls, z generated
/// from a random selection direction, flat prior on tau and unit ridge on
/// the controls.
pub fn random_instance(n: usize, p: usize, seed: u64) -> LinearRicProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| stats::std_normal(&mut rng));
    let gamma = DVector::from_fn(p, |_, _| stats::std_normal(&mut rng));
    let sigma_nu = 0.5;
    let z = &x * &gamma + DVector::from_fn(n, |_, _| sigma_nu * stats::std_normal(&mut rng));
    let beta = DVector::from_fn(p, |_, _| stats::std_normal(&mut rng));
    let mut m = DMatrix::identity(p + 1, p + 1);
    m[(0, 0)] = 0.0;
    LinearRicProblem {
        x,
        z,
        beta,
        gamma,
        tau: 1.0,
        sigma: 1.0,
        sigma_nu,
        m,
    }
}
