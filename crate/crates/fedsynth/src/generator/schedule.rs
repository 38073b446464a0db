//! Cosine noise schedule: ᾱ_t = f(t)/f(0) with
//! f(t) = cos²(((t/T + s)/(1 + s))·π/2), s = 0.008, betas clipped at 0.999.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    /// ᾱ_0..ᾱ_T; ᾱ_0 = 1 exactly, strictly decreasing.
    alpha_bar: Vec<f64>,
    /// β_t for t = 1..T at index t−1.
    betas: Vec<f64>,
    /// α_t = 1 − β_t.
    alphas: Vec<f64>,
}

const COSINE_S: f64 = 0.008;
const BETA_CLIP: f64 = 0.999;

pub fn cosine_schedule(steps: usize) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::config(format!("schedule needs T ≥ 2, got {steps}")));
    }
    let f = |t: f64| {
        let x = (t / steps as f64 + COSINE_S) / (1.0 + COSINE_S) * std::f64::consts::FRAC_PI_2;
        x.cos().powi(2)
    };
    let f0 = f(0.0);
    let alpha_bar: Vec<f64> = (0..=steps).map(|t| f(t as f64) / f0).collect();
    let mut betas = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    for t in 1..=steps {
        let beta = (1.0 - alpha_bar[t] / alpha_bar[t - 1]).min(BETA_CLIP);
        betas.push(beta);
        alphas.push(1.0 - beta);
    }
    let schedule = NoiseSchedule { steps, alpha_bar, betas, alphas };
    schedule.check()?;
    Ok(schedule)
}

impl NoiseSchedule {
    /// Rebuild from an exported ᾱ table.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 3 {
            return Err(Error::parse("schedule table too short"));
        }
        let steps = alpha_bar.len() - 1;
        let mut betas = Vec::with_capacity(steps);
        let mut alphas = Vec::with_capacity(steps);
        for t in 1..=steps {
            let beta = (1.0 - alpha_bar[t] / alpha_bar[t - 1]).min(BETA_CLIP);
            betas.push(beta);
            alphas.push(1.0 - beta);
        }
        let s = NoiseSchedule { steps, alpha_bar, betas, alphas };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.alpha_bar[0] != 1.0 {
            return Err(Error::config("ᾱ_0 must be exactly 1"));
        }
        if !self.alpha_bar.windows(2).all(|w| w[1] < w[0]) {
            return Err(Error::config("ᾱ must be strictly decreasing"));
        }
        if !self.alpha_bar.iter().all(|&a| a > 0.0) {
            return Err(Error::config("ᾱ must stay positive"));
        }
        if self.alpha_bar[self.steps] >= 0.01 {
            return Err(Error::config(format!(
                "ᾱ_T = {} leaves too much signal at the terminal step",
                self.alpha_bar[self.steps]
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bar_table(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// β_t for t in 1..=T.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// α_t for t in 1..=T.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// Forward-diffuse x0 to step t: √ᾱ_t·x0 + √(1−ᾱ_t)·ε.
    pub fn diffuse(&self, x0: &[f64], eps: &[f64], t: usize) -> Vec<f64> {
        let a = self.alpha_bar[t].sqrt();
        let b = (1.0 - self.alpha_bar[t]).sqrt();
        x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_exactly_one() {
        for &t in &[2usize, 16, 512] {
            assert_eq!(cosine_schedule(t).unwrap().alpha_bar(0), 1.0);
        }
    }

    #[test]
    fn reference_length_schedule_decays_below_point_01() {
        let s = cosine_schedule(512).unwrap();
        assert!(s.alpha_bar(512) < 0.01, "ᾱ_T = {}", s.alpha_bar(512));
        assert!(s.alpha_bar_table().windows(2).all(|w| w[1] < w[0]));
        assert!(s.betas.iter().all(|&b| b <= 0.999 && b > 0.0));
    }

    #[test]
    fn t2_values_match_closed_form() {
        // f(t) = cos²(((t/2 + 0.008)/1.008)·π/2):
        //   f(0) = cos²(0.0124666…) , f(1) = cos²(0.79161057…), f(2) ≈ 0
        // frozen from an independent high-precision evaluation:
        let s = cosine_schedule(2).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!((s.alpha_bar(1) - 0.493_843_590_440_637_7).abs() < 1e-12);
        assert!(s.alpha_bar(2) < 1e-30);
    }

    #[test]
    fn rejects_tiny_schedules() {
        assert!(cosine_schedule(1).is_err());
        assert!(cosine_schedule(0).is_err());
    }

    #[test]
    fn diffuse_interpolates_signal_and_noise() {
        let s = cosine_schedule(64).unwrap();
        let x0 = vec![2.0, -1.0];
        let eps = vec![0.5, 0.5];
        let x = s.diffuse(&x0, &eps, 0);
        assert_eq!(x, x0); // ᾱ_0 = 1
        let x = s.diffuse(&x0, &eps, 64);
        // nearly pure noise
        assert!((x[0] - 0.5).abs() < 1e-3 && (x[1] - 0.5).abs() < 1e-3);
    }
}
