use crate::error::{Error, Result};

/// Probabilities are clamped to `[FOCAL_EPS, 1 - FOCAL_EPS]` before the log.
pub const FOCAL_EPS: f64 = 1e-7;
/// Lower bound added to the softplus output so scales stay strictly positive.
pub const SOFTPLUS_FLOOR: f64 = 1e-4;

/// Loss value and derivative for a scalar input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grad1 {
    pub value: f64,
    pub grad: f64,
}

/// Loss value and derivatives for an (error, predicted scale) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleLoss {
    pub value: f64,
    pub d_error: f64,
    pub d_scale: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Binary focal loss `-(1 - q)^γ ln q`, with `q = p̂` for foreground cells and
/// `q = 1 - p̂` for background cells. The gradient is with respect to `p̂`.
pub fn focal_loss(p_hat: f64, is_foreground: bool, gamma: f64) -> Grad1 {
    let clamped = p_hat.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
    let active = clamped == p_hat;
    let q = if is_foreground { clamped } else { 1.0 - clamped };
    let one_minus = 1.0 - q;
    let ln_q = q.ln();
    let value = -one_minus.powf(gamma) * ln_q;
    let d_q = if gamma == 0.0 {
        -1.0 / q
    } else {
        gamma * one_minus.powf(gamma - 1.0) * ln_q - one_minus.powf(gamma) / q
    };
    let grad = if !active {
        0.0
    } else if is_foreground {
        d_q
    } else {
        -d_q
    };
    Grad1 { value, grad }
}

pub fn smooth_l1(residual: f64) -> Grad1 {
    if residual.abs() < 1.0 {
        Grad1 {
            value: 0.5 * residual * residual,
            grad: residual,
        }
    } else {
        Grad1 {
            value: residual.abs() - 0.5,
            grad: sign(residual),
        }
    }
}

fn check_scale(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

/// `KL(Laplace(0, b) ‖ Laplace(ê, b̂))`
/// `= ln(b̂ / b) + (b·exp(-|ê| / b) + |ê|) / b̂ - 1`.
pub fn laplace_kl(e_hat: f64, b_hat: f64, b_gt: f64) -> Result<ScaleLoss> {
    check_scale("predicted diversity", b_hat)?;
    check_scale("ground-truth diversity", b_gt)?;
    let abs_e = e_hat.abs();
    let decay = (-abs_e / b_gt).exp();
    let numer = b_gt * decay + abs_e;
    Ok(ScaleLoss {
        value: (b_hat / b_gt).ln() + numer / b_hat - 1.0,
        d_error: sign(e_hat) * (1.0 - decay) / b_hat,
        d_scale: 1.0 / b_hat - numer / (b_hat * b_hat),
    })
}

/// `KL(N(0, σ²) ‖ N(ê, σ̂²)) = ln(σ̂ / σ) + (σ² + ê²) / (2σ̂²) - 1/2`.
pub fn gaussian_kl(e_hat: f64, sigma_hat: f64, sigma_gt: f64) -> Result<ScaleLoss> {
    check_scale("predicted sigma", sigma_hat)?;
    check_scale("ground-truth sigma", sigma_gt)?;
    let numer = sigma_gt * sigma_gt + e_hat * e_hat;
    let var = sigma_hat * sigma_hat;
    Ok(ScaleLoss {
        value: (sigma_hat / sigma_gt).ln() + numer / (2.0 * var) - 0.5,
        d_error: e_hat / var,
        d_scale: 1.0 / sigma_hat - numer / (var * sigma_hat),
    })
}

/// Negative log-likelihood of `ê` under `Laplace(0, b̂)`.
pub fn laplace_nll(e_hat: f64, b_hat: f64) -> Result<ScaleLoss> {
    check_scale("predicted diversity", b_hat)?;
    let abs_e = e_hat.abs();
    Ok(ScaleLoss {
        value: (2.0 * b_hat).ln() + abs_e / b_hat,
        d_error: sign(e_hat) / b_hat,
        d_scale: 1.0 / b_hat - abs_e / (b_hat * b_hat),
    })
}

/// Negative log-likelihood of `ê` under `N(0, σ̂²)`.
pub fn gaussian_nll(e_hat: f64, sigma_hat: f64) -> Result<ScaleLoss> {
    check_scale("predicted sigma", sigma_hat)?;
    let var = sigma_hat * sigma_hat;
    Ok(ScaleLoss {
        value: 0.5 * (2.0 * std::f64::consts::PI * var).ln() + e_hat * e_hat / (2.0 * var),
        d_error: e_hat / var,
        d_scale: 1.0 / sigma_hat - e_hat * e_hat / (var * sigma_hat),
    })
}

/// Positivity map for predicted scales: `ln(1 + eˣ) + 1e-4`.
pub fn softplus(x: f64) -> f64 {
    let sp = if x > 30.0 { x } else if x < -30.0 { x.exp() } else { x.exp().ln_1p() };
    sp + SOFTPLUS_FLOOR
}

pub fn softplus_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pre-activation whose [`softplus`] equals `y` (requires `y > 1e-4`).
pub fn inverse_softplus(y: f64) -> f64 {
    let s = y - SOFTPLUS_FLOOR;
    if s > 30.0 {
        s
    } else {
        s.exp_m1().ln()
    }
}
