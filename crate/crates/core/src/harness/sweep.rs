use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medoe::BoostConfig;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoostParam {
    Temperature,
    Entropy,
    Kl,
    Clip,
}

impl BoostParam {
    pub const ALL: [BoostParam; 4] = [BoostParam::Temperature, BoostParam::Entropy, BoostParam::Kl, BoostParam::Clip];

    pub fn name(self) -> &'static str {
        match self {
            BoostParam::Temperature => "temp_boost",
            BoostParam::Entropy => "ent_coef_boost",
            BoostParam::Kl => "kl_coef_boost",
            BoostParam::Clip => "clip_coef_boost",
        }
    }

    /// Log-uniform sampling range.
    pub fn range(self) -> (f64, f64) {
        match self {
            BoostParam::Temperature => (0.5, 10.0),
            _ => (1.0, 1000.0),
        }
    }

    pub fn get(self, cfg: &BoostConfig) -> f64 {
        match self {
            BoostParam::Temperature => cfg.temperature_boost,
            BoostParam::Entropy => cfg.entropy_boost,
            BoostParam::Kl => cfg.kl_boost,
            BoostParam::Clip => cfg.clip_boost,
        }
    }

    pub fn set(self, cfg: &mut BoostConfig, value: f64) {
        match self {
            BoostParam::Temperature => cfg.temperature_boost = value,
            BoostParam::Entropy => cfg.entropy_boost = value,
            BoostParam::Kl => cfg.kl_boost = value,
            BoostParam::Clip => cfg.clip_boost = value,
        }
    }
}

impl FromStr for BoostParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B_T" | "temp_boost" | "temperature" => Ok(BoostParam::Temperature),
            "B_alpha" | "B_α" | "ent_coef_boost" | "entropy" => Ok(BoostParam::Entropy),
            "B_kappa" | "B_κ" | "kl_coef_boost" | "kl" => Ok(BoostParam::Kl),
            "B_delta" | "B_δ" | "clip_coef_boost" | "clip" => Ok(BoostParam::Clip),
            _ => Err(Error::arg(format!("unknown boost parameter {s:?}"))),
        }
    }
}

/// `num_samples` copies of `fixed` with `param` drawn log-uniformly from its range.
pub fn sweep_sample(fixed: &BoostConfig, param: BoostParam, num_samples: usize, rng: &mut Rng) -> Vec<BoostConfig> {
    let (lo, hi) = param.range();
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..num_samples)
        .map(|_| {
            let mut cfg = fixed.clone();
            let v = (llo + (lhi - llo) * rng.gen::<f64>()).exp();
            param.set(&mut cfg, v.clamp(lo, hi));
            cfg
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::component_rng;

    #[test]
    fn samples_vary_one_field() {
        let fixed = BoostConfig::chainball();
        let mut rng = component_rng(0, "sweep");
        let out = sweep_sample(&fixed, BoostParam::Temperature, 1024, &mut rng);
        assert_eq!(out.len(), 1024);
        for c in &out {
            assert!((0.5..=10.0).contains(&c.temperature_boost));
            let mut back = c.clone();
            back.temperature_boost = fixed.temperature_boost;
            assert_eq!(back, fixed);
        }
        assert_eq!("B_κ".parse::<BoostParam>().unwrap(), BoostParam::Kl);
        assert!("B_x".parse::<BoostParam>().is_err());
    }
}
