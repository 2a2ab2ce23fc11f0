use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which accuracy-drop rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AesMode {
    /// Accuracy drops are penalized with γ.
    Canonical,
    /// β applies to |ΔAcc| whichever its sign; this is what the published
    /// table values are consistent with.
    TableVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AesWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for AesWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 3.0, gamma: 5.0 }
    }
}

/// Accuracy-efficiency score of `model` against `baseline`, both given as
/// `(accuracy, length)`. Accuracy units cancel, so percent or fraction both work.
pub fn compute_aes(baseline: (f64, f64), model: (f64, f64), w: AesWeights, mode: AesMode) -> Result<f64> {
    let (acc_b, len_b) = baseline;
    let (acc_m, len_m) = model;
    if !(acc_b > 0.0 && len_b > 0.0) {
        return Err(Error::Input(format!(
            "AES needs positive baseline accuracy and length, got ({acc_b}, {len_b})"
        )));
    }
    let d_len = (len_b - len_m) / len_b;
    let d_acc = (acc_m - acc_b) / acc_b;
    let penalty = match mode {
        AesMode::TableVariant => w.beta,
        AesMode::Canonical if d_acc >= 0.0 => w.beta,
        AesMode::Canonical => -w.gamma,
    };
    Ok(w.alpha * d_len + penalty * d_acc.abs())
}
