//! Cosine noise schedule, forward noising, and deterministic DDIM stepping.

use crate::error::{Error, Result};
use crate::tensor::Rng;

/// Largest allowed per-step noise fraction; the cumulative product never
/// quite reaches zero.
const BETA_CLIP: f64 = 0.999;

/// Diffusion horizon and cumulative signal table.
///
/// `alpha_bar[t]` is the signal fraction remaining after `t` noising steps;
/// index 0 is clean data with value exactly 1, and the table is strictly
/// decreasing.
#[derive(Debug, Clone)]
pub struct DiffusionSchedule {
    pub t_max: usize,
    pub alpha_bar: Vec<f64>,
    pub cosine_s: f64,
}

/// Cosine schedule: alpha_bar(t) = f(t)/f(0) with
/// f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), realized through per-step
/// betas clipped to `BETA_CLIP`.
pub fn cosine_schedule(t_max: usize, s: f64) -> Result<DiffusionSchedule> {
    if t_max < 1 {
        return Err(Error::Config("diffusion horizon T must be >= 1".into()));
    }
    if s <= 0.0 {
        return Err(Error::Config("cosine offset s must be positive".into()));
    }
    let f = |t: f64| -> f64 {
        let angle = ((t / t_max as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2;
        angle.cos() * angle.cos()
    };
    let f0 = f(0.0);
    let mut alpha_bar = Vec::with_capacity(t_max + 1);
    alpha_bar.push(1.0);
    let mut prev_cf = 1.0;
    for t in 1..=t_max {
        let cf = f(t as f64) / f0;
        let beta = (1.0 - cf / prev_cf).min(BETA_CLIP);
        let next = alpha_bar[t - 1] * (1.0 - beta);
        alpha_bar.push(next);
        prev_cf = cf;
    }
    Ok(DiffusionSchedule { t_max, alpha_bar, cosine_s: s })
}

impl DiffusionSchedule {
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Signal-to-noise ratio at step t.
    pub fn snr(&self, t: usize) -> f64 {
        self.alpha_bar[t] / (1.0 - self.alpha_bar[t])
    }

    /// x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps with a fresh
    /// standard-normal eps. Returns (x_t, eps).
    pub fn forward_noise(&self, x0: &[f64], t: usize, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
        if t > self.t_max {
            return Err(Error::Contract(format!("forward_noise: t={t} outside 0..={}", self.t_max)));
        }
        let ab = self.alpha_bar[t];
        let (cs, cn) = (ab.sqrt(), (1.0 - ab).sqrt());
        let eps = rng.normal_vec(x0.len());
        let xt = x0.iter().zip(&eps).map(|(&x, &e)| cs * x + cn * e).collect();
        Ok((xt, eps))
    }

    /// One DDIM update from step `t` to the smaller step `t_next`.
    ///
    /// The normalized noise is recovered from the clean estimate,
    /// eps_hat = (x_t - sqrt(ab_t) x0_hat) / sqrt(1 - ab_t), and the output
    /// is sqrt(ab_t') x0_hat + sqrt(1 - ab_t' - sigma^2) eps_hat
    /// + sigma eps_new. sigma = 0 makes the chain deterministic.
    pub fn ddim_step(
        &self,
        clean_est: &[f64],
        noisy_t: &[f64],
        t: usize,
        t_next: usize,
        sigma: f64,
        rng: Option<&mut Rng>,
    ) -> Result<Vec<f64>> {
        if t_next >= t || t > self.t_max {
            return Err(Error::Contract(format!(
                "ddim_step: need 0 <= t_next < t <= {}, got t={t}, t_next={t_next}",
                self.t_max
            )));
        }
        if clean_est.len() != noisy_t.len() {
            return Err(Error::Contract("ddim_step: clean and noisy buffers differ in length".into()));
        }
        let ab_t = self.alpha_bar[t];
        let ab_n = self.alpha_bar[t_next];
        let noise_dir_sq = 1.0 - ab_n - sigma * sigma;
        if noise_dir_sq < -1e-12 {
            return Err(Error::Contract(format!("ddim_step: sigma={sigma} too large for t_next={t_next}")));
        }
        let c_clean = ab_n.sqrt();
        let c_noise = noise_dir_sq.max(0.0).sqrt();
        let inv_cn_t = 1.0 / (1.0 - ab_t).sqrt();
        let sqrt_ab_t = ab_t.sqrt();
        let fresh: Option<Vec<f64>> = if sigma > 0.0 {
            let rng = rng.ok_or_else(|| Error::Contract("ddim_step: sigma > 0 requires an rng".into()))?;
            Some(rng.normal_vec(clean_est.len()))
        } else {
            None
        };
        let mut out = Vec::with_capacity(clean_est.len());
        for i in 0..clean_est.len() {
            let eps_hat = (noisy_t[i] - sqrt_ab_t * clean_est[i]) * inv_cn_t;
            let mut v = c_clean * clean_est[i] + c_noise * eps_hat;
            if let Some(f) = &fresh {
                v += sigma * f[i];
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// W + 1 timesteps from T down to 0, uniformly spaced, endpoints included.
pub fn timestep_subsequence(t_max: usize, w: usize) -> Result<Vec<usize>> {
    if w < 1 || w > t_max {
        return Err(Error::Config(format!("need 1 <= W <= T, got W={w}, T={t_max}")));
    }
    let ts: Vec<usize> = (0..=w)
        .map(|k| ((t_max as f64) * ((w - k) as f64) / (w as f64)).round() as usize)
        .collect();
    Ok(ts)
}
