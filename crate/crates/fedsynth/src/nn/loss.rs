//! Loss terms and their exact gradients. Every loss returns
//! (scalar value, gradient wrt its direct argument); composition happens at
//! the call site.

use super::mat::Mat;

/// Mean cross-entropy over the batch with the exact logit gradient
/// (softmax − onehot) / B.
pub fn cross_entropy(logits: &Mat, labels: &[usize]) -> (f64, Mat) {
    assert_eq!(logits.rows(), labels.len(), "labels/batch mismatch");
    let batch = logits.rows() as f64;
    let mut grad = Mat::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += log_z - row[labels[r]];
        let g = grad.row_mut(r);
        for (c, v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            g[c] = (p - if c == labels[r] { 1.0 } else { 0.0 }) / batch;
        }
    }
    (loss / batch, grad)
}

/// MSE plus L1 between prediction and target, both averaged over every entry;
/// gradient is (2e + sign(e)) / N.
pub fn mse_plus_l1(pred: &Mat, target: &Mat) -> (f64, Mat) {
    assert_eq!(pred.rows(), target.rows());
    assert_eq!(pred.cols(), target.cols());
    let n = (pred.rows() * pred.cols()) as f64;
    let mut grad = Mat::zeros(pred.rows(), pred.cols());
    let mut mse = 0.0;
    let mut l1 = 0.0;
    for (g, (p, t)) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data().iter().zip(target.data()))
    {
        let e = p - t;
        mse += e * e;
        l1 += e.abs();
        *g = (2.0 * e + e.signum() * if e == 0.0 { 0.0 } else { 1.0 }) / n;
    }
    ((mse + l1) / n, grad)
}

/// Proximal anchor term (μ/2)·‖θ − anchor‖² with gradient μ·(θ − anchor).
pub fn proximal(params: &[f64], anchor: &[f64], mu: f64) -> (f64, Vec<f64>) {
    assert_eq!(params.len(), anchor.len());
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (g, (p, a)) in grad.iter_mut().zip(params.iter().zip(anchor)) {
        let d = p - a;
        loss += d * d;
        *g = mu * d;
    }
    (0.5 * mu * loss, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const NORM_FLOOR: f64 = 1e-12;

/// Model-contrastive term over trunk representations, averaged over the batch:
/// −log[ exp(sim(z, z_glob)/τ) / (exp(sim(z, z_glob)/τ) + exp(sim(z, z_prev)/τ)) ]
/// with cosine similarity. Returns the gradient wrt the local features `z`;
/// the reference representations are treated as constants.
pub fn contrastive_moon(z: &Mat, z_glob: &Mat, z_prev: &Mat, tau: f64) -> (f64, Mat) {
    assert_eq!(z.rows(), z_glob.rows());
    assert_eq!(z.rows(), z_prev.rows());
    let batch = z.rows() as f64;
    let mut grad = Mat::zeros(z.rows(), z.cols());
    let mut loss = 0.0;
    for r in 0..z.rows() {
        let zr = z.row(r);
        let zg = z_glob.row(r);
        let zp = z_prev.row(r);
        let nz = dot(zr, zr).sqrt().max(NORM_FLOOR);
        let ng = dot(zg, zg).sqrt().max(NORM_FLOOR);
        let np = dot(zp, zp).sqrt().max(NORM_FLOOR);
        let cos_g = dot(zr, zg) / (nz * ng);
        let cos_p = dot(zr, zp) / (nz * np);
        let s1 = cos_g / tau;
        let s2 = cos_p / tau;
        let m = s1.max(s2);
        let log_z = ((s1 - m).exp() + (s2 - m).exp()).ln() + m;
        loss += log_z - s1;
        let p1 = (s1 - log_z).exp();
        let p2 = (s2 - log_z).exp();
        // dℓ/ds1 = p1 − 1, dℓ/ds2 = p2; d cos(z,a)/dz = a/(‖z‖‖a‖) − cos·z/‖z‖².
        let c1 = (p1 - 1.0) / tau;
        let c2 = p2 / tau;
        let g = grad.row_mut(r);
        for i in 0..zr.len() {
            let dcos_g = zg[i] / (nz * ng) - cos_g * zr[i] / (nz * nz);
            let dcos_p = zp[i] / (nz * np) - cos_p * zr[i] / (nz * nz);
            g[i] = (c1 * dcos_g + c2 * dcos_p) / batch;
        }
    }
    (loss / batch, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_loss_is_ln_c() {
        let logits = Mat::from_rows(&[vec![0.0; 5], vec![2.5; 5]]);
        let (loss, _) = cross_entropy(&logits, &[0, 3]);
        assert!((loss - 5f64.ln()).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn saturated_logits_loss_vanishes() {
        let logits = Mat::from_rows(&[vec![50.0, 0.0, 0.0]]);
        let (loss, _) = cross_entropy(&logits, &[0]);
        assert!(loss < 1e-12, "loss {loss}");
    }

    #[test]
    fn ce_gradient_is_softmax_minus_onehot() {
        let logits = Mat::from_rows(&[vec![0.0, 0.0, 0.0, 0.0]]);
        let (_, grad) = cross_entropy(&logits, &[2]);
        for (c, g) in grad.row(0).iter().enumerate() {
            let expect = 0.25 - if c == 2 { 1.0 } else { 0.0 };
            assert!((g - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn mse_l1_on_known_values() {
        let pred = Mat::from_rows(&[vec![1.0, -2.0]]);
        let target = Mat::from_rows(&[vec![0.0, 0.0]]);
        let (loss, grad) = mse_plus_l1(&pred, &target);
        // mse = (1+4)/2 = 2.5, l1 = 3/2 = 1.5
        assert!((loss - 4.0).abs() < 1e-14);
        assert!((grad.at(0, 0) - (2.0 + 1.0) / 2.0).abs() < 1e-14);
        assert!((grad.at(0, 1) - (-4.0 - 1.0) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn proximal_zero_at_anchor() {
        let p = vec![1.0, -2.0, 3.0];
        let (loss, grad) = proximal(&p, &p, 0.7);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn proximal_hand_case() {
        let (loss, grad) = proximal(&[2.0, 0.0], &[0.0, 0.0], 2.0);
        assert!((loss - 4.0).abs() < 1e-14); // (2/2)·4
        assert_eq!(grad, vec![4.0, 0.0]);
    }

    #[test]
    fn moon_closed_form_orthogonal_case() {
        // z == z_glob, z ⊥ z_prev, τ = 0.5 → ℓ = −log(e²/(e²+1)).
        let z = Mat::from_rows(&[vec![1.0, 0.0]]);
        let zg = Mat::from_rows(&[vec![1.0, 0.0]]);
        let zp = Mat::from_rows(&[vec![0.0, 1.0]]);
        let (loss, _) = contrastive_moon(&z, &zg, &zp, 0.5);
        let expect = -(2f64.exp() / (2f64.exp() + 1.0)).ln();
        assert!((loss - expect).abs() < 1e-12, "loss {loss} expect {expect}");
    }

    #[test]
    fn moon_gradient_matches_finite_differences() {
        let zg = Mat::from_rows(&[vec![0.3, -0.8, 0.5]]);
        let zp = Mat::from_rows(&[vec![-0.2, 0.4, 0.9]]);
        let base = vec![0.7, 0.1, -0.4];
        let (_, grad) = contrastive_moon(&Mat::from_rows(&[base.clone()]), &zg, &zp, 0.5);
        let h = 1e-6;
        for i in 0..3 {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let (lp, _) = contrastive_moon(&Mat::from_rows(&[plus]), &zg, &zp, 0.5);
            let (lm, _) = contrastive_moon(&Mat::from_rows(&[minus]), &zg, &zp, 0.5);
            let fd = (lp - lm) / (2.0 * h);
            let analytic = grad.at(0, i);
            assert!(
                (fd - analytic).abs() < 1e-7,
                "coord {i}: fd {fd} vs analytic {analytic}"
            );
        }
    }
}
