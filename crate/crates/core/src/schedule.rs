//! Which layers train in which round.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::FreezeMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Unfreeze base layers from the input side.
    Vanilla,
    /// Unfreeze base layers from the head side.
    Anti,
    /// All base layers train; head gradient is computed but not applied.
    #[serde(rename = "FedBABU")]
    FedBabu,
    /// Every layer, head included, trains and is aggregated.
    FedAvg,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::FedAvg, Mode::FedBabu, Mode::Vanilla, Mode::Anti];

    pub fn is_scheduled(self) -> bool {
        matches!(self, Mode::Vanilla | Mode::Anti)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Vanilla => "Vanilla",
            Mode::Anti => "Anti",
            Mode::FedBabu => "FedBABU",
            Mode::FedAvg => "FedAvg",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(Mode::Vanilla),
            "anti" => Ok(Mode::Anti),
            "fedbabu" => Ok(Mode::FedBabu),
            "fedavg" => Ok(Mode::FedAvg),
            _ => Err(Error::Config(format!(
                "unknown mode `{s}` (expected Vanilla, Anti, FedBABU or FedAvg)"
            ))),
        }
    }
}

/// Scheduling mode plus the round `t_k` at which the k-th scheduled layer
/// unfreezes. For Vanilla the k-th scheduled layer is base layer `k`; for
/// Anti it is base layer `K - k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub mode: Mode,
    pub unfreeze_rounds: Vec<u64>,
}

impl SchedulePlan {
    pub fn new(mode: Mode, unfreeze_rounds: Vec<u64>) -> Self {
        Self {
            mode,
            unfreeze_rounds,
        }
    }

    /// Unfreeze rounds `(0, 100, 200)`.
    pub fn default_for(mode: Mode) -> Self {
        Self::new(mode, vec![0, 100, 200])
    }

    pub fn base_layer_count(&self) -> usize {
        self.unfreeze_rounds.len()
    }

    /// Number of scheduled layers unfrozen by round `t` (inclusive comparison).
    pub fn unfrozen_count(&self, t: u64) -> usize {
        self.unfreeze_rounds.iter().filter(|&&tk| tk <= t).count()
    }
}

/// Freeze mask over `k` base layers plus the head for round `t`.
pub fn trainable_mask(plan: &SchedulePlan, t: u64, k: usize) -> FreezeMask {
    let mut flags = vec![false; k + 1];
    match plan.mode {
        Mode::Vanilla => {
            let j = plan.unfrozen_count(t).min(k);
            flags[..j].iter_mut().for_each(|f| *f = true);
        }
        Mode::Anti => {
            let j = plan.unfrozen_count(t).min(k);
            flags[k - j..k].iter_mut().for_each(|f| *f = true);
        }
        Mode::FedBabu => flags[..k].iter_mut().for_each(|f| *f = true),
        Mode::FedAvg => flags.iter_mut().for_each(|f| *f = true),
    }
    FreezeMask::new(flags)
}

/// Checks a plan against the run length. Returns warnings on success and
/// every violation (each named) on failure. Unfreeze rounds are only
/// checked for Vanilla and Anti, the modes that read them.
pub fn validate_plan(plan: &SchedulePlan, total_rounds: u64) -> Result<Vec<String>> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    if !plan.mode.is_scheduled() {
        return Ok(warnings);
    }
    let rounds = &plan.unfreeze_rounds;
    if rounds.is_empty() {
        errors.push("unfreeze_rounds is empty; at least one base layer is required".to_string());
    } else {
        if rounds[0] != 0 {
            errors.push(format!(
                "first unfreeze round must be 0 so training starts immediately, got {}",
                rounds[0]
            ));
        }
        if let Some(w) = rounds.windows(2).position(|w| w[1] < w[0]) {
            errors.push(format!(
                "non-monotone unfreeze rounds: t_{} = {} follows t_{} = {}",
                w + 2,
                rounds[w + 1],
                w + 1,
                rounds[w]
            ));
        }
        for (k, &t) in rounds.iter().enumerate() {
            if t >= total_rounds {
                errors.push(format!(
                    "layer never unfrozen: t_{} = {t} is not below total_rounds = {total_rounds}",
                    k + 1
                ));
            }
        }
        let last = *rounds.last().expect("non-empty");
        if last < total_rounds && 2 * last > total_rounds {
            warnings.push(format!(
                "last unfreeze round {last} is past half of {total_rounds} rounds; late layers get little training"
            ));
        }
    }
    if errors.is_empty() {
        Ok(warnings)
    } else {
        Err(Error::Schedule(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(plan: &SchedulePlan, t: u64) -> Vec<bool> {
        trainable_mask(plan, t, plan.base_layer_count())
            .flags()
            .to_vec()
    }

    #[test]
    fn vanilla_round_50() {
        let plan = SchedulePlan::default_for(Mode::Vanilla);
        assert_eq!(flags(&plan, 50), [true, false, false, false]);
        assert_eq!(flags(&plan, 100), [true, true, false, false]);
    }

    #[test]
    fn anti_round_150() {
        let plan = SchedulePlan::default_for(Mode::Anti);
        assert_eq!(flags(&plan, 0), [false, false, true, false]);
        assert_eq!(flags(&plan, 150), [false, true, true, false]);
    }

    #[test]
    fn after_last_unfreeze_all_base_train() {
        for mode in Mode::ALL {
            let plan = SchedulePlan::default_for(mode);
            for t in [200, 250, 299] {
                assert_eq!(&flags(&plan, t)[..3], [true, true, true], "{mode} t={t}");
            }
        }
        assert_eq!(
            flags(&SchedulePlan::default_for(Mode::FedAvg), 0),
            [true; 4]
        );
        assert_eq!(
            flags(&SchedulePlan::default_for(Mode::FedBabu), 0),
            [true, true, true, false]
        );
    }

    #[test]
    fn default_plan_valid() {
        let plan = SchedulePlan::default_for(Mode::Vanilla);
        assert!(validate_plan(&plan, 300).is_ok());
        let ablation = SchedulePlan::new(Mode::Anti, vec![0, 50, 100]);
        assert!(validate_plan(&ablation, 300).is_ok());
    }

    #[test]
    fn non_monotone_rejected() {
        let err =
            validate_plan(&SchedulePlan::new(Mode::Vanilla, vec![0, 200, 100]), 300).unwrap_err();
        assert!(
            err.to_string().contains("non-monotone unfreeze rounds"),
            "{err}"
        );
    }

    #[test]
    fn never_unfrozen_rejected() {
        let err =
            validate_plan(&SchedulePlan::new(Mode::Anti, vec![0, 100, 400]), 300).unwrap_err();
        assert!(err.to_string().contains("layer never unfrozen"), "{err}");
    }

    #[test]
    fn each_violation_reported() {
        let err =
            validate_plan(&SchedulePlan::new(Mode::Vanilla, vec![5, 2, 400]), 300).unwrap_err();
        let Error::Schedule(list) = err else { panic!() };
        assert_eq!(list.len(), 3, "{list:?}");
        assert!(validate_plan(&SchedulePlan::new(Mode::Vanilla, vec![]), 300).is_err());
    }

    #[test]
    fn late_unfreeze_warns() {
        let warnings =
            validate_plan(&SchedulePlan::new(Mode::Vanilla, vec![0, 100, 200]), 350).unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn baselines_ignore_rounds() {
        let plan = SchedulePlan::new(Mode::FedAvg, vec![0, 100, 200]);
        assert!(validate_plan(&plan, 10).is_ok());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("FedBABU".parse::<Mode>().unwrap(), Mode::FedBabu);
        assert_eq!("anti".parse::<Mode>().unwrap(), Mode::Anti);
        assert!("fedprox".parse::<Mode>().is_err());
    }
}
