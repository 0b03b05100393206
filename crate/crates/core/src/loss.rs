//! Per-token losses and their derivatives with respect to the predicted
//! positive-class probability.

use crate::error::{Error, Result};

/// Probabilities are clamped into `[P_MIN, 1 - P_MIN]` before any loss or
/// gradient evaluation inside training.
pub const P_MIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiceLossConfig {
    pub alpha: f64,
    pub gamma: f64,
}

impl DiceLossConfig {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        let cfg = DiceLossConfig { alpha, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "dice alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "dice gamma must be > 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

impl Default for DiceLossConfig {
    fn default() -> Self {
        DiceLossConfig {
            alpha: 0.7,
            gamma: 0.25,
        }
    }
}

fn check_domain(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(p))
    }
}

/// Self-adjusting dice loss for one token:
/// `1 - (2 f y + gamma) / (f + y + gamma)` with `f = (1 - p)^alpha * p`.
pub fn dice_loss(p: f64, y: u8, cfg: &DiceLossConfig) -> Result<f64> {
    check_domain(p)?;
    let y = f64::from(y);
    let f = (1.0 - p).powf(cfg.alpha) * p;
    Ok(1.0 - (2.0 * f * y + cfg.gamma) / (f + y + cfg.gamma))
}

/// Derivative of [`dice_loss`] in `p`.
pub fn dice_grad(p: f64, y: u8, cfg: &DiceLossConfig) -> Result<f64> {
    check_domain(p)?;
    let y = f64::from(y);
    let a = cfg.alpha;
    let f = (1.0 - p).powf(a) * p;
    let df = (1.0 - p).powf(a - 1.0) * (1.0 - p * (1.0 + a));
    let denom = f + y + cfg.gamma;
    Ok(-df * (2.0 * y * y + 2.0 * y * cfg.gamma - cfg.gamma) / (denom * denom))
}

pub fn ce_loss(p: f64, y: u8) -> Result<f64> {
    wce_loss(p, y, 1.0)
}

pub fn ce_grad(p: f64, y: u8) -> Result<f64> {
    wce_grad(p, y, 1.0)
}

/// Cross-entropy with the positive term scaled by `w_pos`.
pub fn wce_loss(p: f64, y: u8, w_pos: f64) -> Result<f64> {
    check_domain(p)?;
    Ok(if y == 1 {
        -w_pos * p.ln()
    } else {
        -(1.0 - p).ln()
    })
}

pub fn wce_grad(p: f64, y: u8, w_pos: f64) -> Result<f64> {
    check_domain(p)?;
    Ok(if y == 1 { -w_pos / p } else { 1.0 / (1.0 - p) })
}

/// Which per-token objective the labeler trains against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSelector {
    CrossEntropy,
    WeightedCrossEntropy { positive_weight: f64 },
    Dice(DiceLossConfig),
}

impl Default for LossSelector {
    fn default() -> Self {
        LossSelector::Dice(DiceLossConfig::default())
    }
}

impl LossSelector {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossSelector::CrossEntropy => Ok(()),
            LossSelector::WeightedCrossEntropy { positive_weight } => {
                if *positive_weight > 0.0 && positive_weight.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "positive class weight must be > 0, got {positive_weight}"
                    )))
                }
            }
            LossSelector::Dice(cfg) => cfg.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSelector::CrossEntropy => "ce",
            LossSelector::WeightedCrossEntropy { .. } => "wce",
            LossSelector::Dice(_) => "dice",
        }
    }

    /// Loss and `dL/dp` at the clamped probability. Fails only for NaN input.
    pub fn eval(&self, p: f64, y: u8) -> Result<(f64, f64)> {
        if p.is_nan() {
            return Err(Error::Domain(p));
        }
        let p = p.clamp(P_MIN, 1.0 - P_MIN);
        match self {
            LossSelector::CrossEntropy => Ok((ce_loss(p, y)?, ce_grad(p, y)?)),
            LossSelector::WeightedCrossEntropy { positive_weight } => Ok((
                wce_loss(p, y, *positive_weight)?,
                wce_grad(p, y, *positive_weight)?,
            )),
            LossSelector::Dice(cfg) => Ok((dice_loss(p, y, cfg)?, dice_grad(p, y, cfg)?)),
        }
    }
}
