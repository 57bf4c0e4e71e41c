//! Linear-Gaussian target with one Kalman tracker per radar.
//!
//! The probe sets the state noise `Q = diag(alpha)` and each radar's
//! response sets its measurement noise `R = diag(1 / beta)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dataset::Probe;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(String),
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch { what: String, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub a: DMatrix<f64>,
    pub c_obs: DMatrix<f64>,
    pub initial_mean: DVector<f64>,
    pub initial_covariance: DMatrix<f64>,
    /// Multiplies `diag(alpha)`; zero switches process noise off.
    pub process_noise_scale: f64,
}

impl TargetModel {
    /// `A = C = I`, `x0 = 0`, `Sigma0 = I`.
    pub fn identity(dim: usize) -> Self {
        Self {
            a: DMatrix::identity(dim, dim),
            c_obs: DMatrix::identity(dim, dim),
            initial_mean: DVector::zeros(dim),
            initial_covariance: DMatrix::identity(dim, dim),
            process_noise_scale: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn check(&self) -> Result<(), TrackError> {
        let n = self.dim();
        let dims = [
            ("A columns", self.a.ncols()),
            ("C rows", self.c_obs.nrows()),
            ("C columns", self.c_obs.ncols()),
            ("initial mean", self.initial_mean.len()),
            ("initial covariance rows", self.initial_covariance.nrows()),
            ("initial covariance columns", self.initial_covariance.ncols()),
        ];
        for (what, found) in dims {
            if found != n {
                return Err(TrackError::DimensionMismatch { what: what.into(), expected: n, found });
            }
        }
        if !(self.process_noise_scale >= 0.0 && self.process_noise_scale.is_finite()) {
            return Err(TrackError::NotPositiveDefinite("process noise scale".into()));
        }
        Ok(())
    }
}

/// Per-step, per-radar outputs of [`track`]. Indexed `[n][i]`.
#[derive(Debug, Clone)]
pub struct Trajectories {
    pub truth: Vec<DVector<f64>>,
    pub measurements: Vec<Vec<DVector<f64>>>,
    pub means: Vec<Vec<DVector<f64>>>,
    pub covariances: Vec<Vec<DMatrix<f64>>>,
    /// Predicted covariance before each update.
    pub predicted: Vec<Vec<DMatrix<f64>>>,
    pub innovations: Vec<Vec<DVector<f64>>>,
    pub innovation_covariances: Vec<Vec<DMatrix<f64>>>,
}

fn diag_noise(variances: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    variances.map(|v| {
        let z: f64 = StandardNormal.sample(rng);
        v.sqrt() * z
    })
}

/// Runs the target and all trackers for `steps` steps. `allocations[n][i]`
/// is radar `i`'s response at step `n` and must be strictly positive.
pub fn track(
    model: &TargetModel,
    probes: &[Probe],
    allocations: &[Vec<Vec<f64>>],
    steps: usize,
    seed: u64,
) -> Result<Trajectories, TrackError> {
    model.check()?;
    let dim = model.dim();
    for (what, found) in [("probes", probes.len()), ("allocations", allocations.len())] {
        if found < steps {
            return Err(TrackError::DimensionMismatch { what: what.into(), expected: steps, found });
        }
    }
    let radars = allocations.first().map_or(0, |a| a.len());
    for n in 0..steps {
        if probes[n].dim() != dim {
            return Err(TrackError::DimensionMismatch { what: format!("probe {}", n + 1), expected: dim, found: probes[n].dim() });
        }
        if probes[n].as_slice().iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(TrackError::NotPositiveDefinite(format!("Q at step {}", n + 1)));
        }
        if allocations[n].len() != radars {
            return Err(TrackError::DimensionMismatch { what: format!("radars at step {}", n + 1), expected: radars, found: allocations[n].len() });
        }
        for (i, b) in allocations[n].iter().enumerate() {
            if b.len() != dim {
                return Err(TrackError::DimensionMismatch { what: format!("response of radar {}", i + 1), expected: dim, found: b.len() });
            }
            if b.iter().any(|v| !(*v > 0.0) || !(1.0 / v).is_finite()) {
                return Err(TrackError::NotPositiveDefinite(format!("R of radar {} at step {}", i + 1, n + 1)));
            }
        }
    }
    let sigma0 = Cholesky::new(model.initial_covariance.clone())
        .ok_or_else(|| TrackError::NotPositiveDefinite("initial covariance".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
    let mut x = &model.initial_mean + sigma0.l() * z;

    let a = &model.a;
    let c = &model.c_obs;
    let eye = DMatrix::<f64>::identity(dim, dim);
    let mut mean = vec![model.initial_mean.clone(); radars];
    let mut cov = vec![model.initial_covariance.clone(); radars];
    let mut out = Trajectories {
        truth: Vec::with_capacity(steps),
        measurements: Vec::with_capacity(steps),
        means: Vec::with_capacity(steps),
        covariances: Vec::with_capacity(steps),
        predicted: Vec::with_capacity(steps),
        innovations: Vec::with_capacity(steps),
        innovation_covariances: Vec::with_capacity(steps),
    };

    for n in 0..steps {
        let q_diag = DVector::from_column_slice(probes[n].as_slice()) * model.process_noise_scale;
        let q = DMatrix::from_diagonal(&q_diag);
        x = a * &x + diag_noise(&q_diag, &mut rng);

        let mut ys = Vec::with_capacity(radars);
        let mut ms = Vec::with_capacity(radars);
        let mut ps = Vec::with_capacity(radars);
        let mut pp = Vec::with_capacity(radars);
        let mut es = Vec::with_capacity(radars);
        let mut ss = Vec::with_capacity(radars);
        for i in 0..radars {
            let r_diag = DVector::from_iterator(dim, allocations[n][i].iter().map(|b| 1.0 / b));
            let r = DMatrix::from_diagonal(&r_diag);
            let y = c * &x + diag_noise(&r_diag, &mut rng);

            let m_pred = a * &mean[i];
            let p_pred = a * &cov[i] * a.transpose() + &q;
            let s = c * &p_pred * c.transpose() + &r;
            let s_chol = Cholesky::new(s.clone())
                .ok_or_else(|| TrackError::NotPositiveDefinite(format!("innovation covariance of radar {}", i + 1)))?;
            let gain = s_chol.solve(&(c * &p_pred)).transpose();
            let innovation = &y - c * &m_pred;
            let m_post = &m_pred + &gain * &innovation;
            // Joseph form keeps the covariance symmetric
            let ikc = &eye - &gain * c;
            let p_post = &ikc * &p_pred * ikc.transpose() + &gain * &r * gain.transpose();

            mean[i] = m_post.clone();
            cov[i] = p_post.clone();
            ys.push(y);
            ms.push(m_post);
            ps.push(p_post);
            pp.push(p_pred);
            es.push(innovation);
            ss.push(s);
        }
        out.truth.push(x.clone());
        out.measurements.push(ys);
        out.means.push(ms);
        out.covariances.push(ps);
        out.predicted.push(pp);
        out.innovations.push(es);
        out.innovation_covariances.push(ss);
    }
    Ok(out)
}
