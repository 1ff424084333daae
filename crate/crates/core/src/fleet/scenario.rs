use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use thiserror::Error;

use super::cost::BootCostModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

/// Hours from the notification mail until the site administrator acts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResponseDistribution {
    LogNormal { median_hours: f64, sigma: f64 },
    Exponential { mean_hours: f64 },
    Constant { hours: f64 },
}

impl ResponseDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ResponseDistribution::LogNormal { median_hours, sigma } => LogNormal::new(median_hours.ln(), sigma)
                .expect("validated")
                .sample(rng),
            ResponseDistribution::Exponential { mean_hours } => {
                Exp::new(1.0 / mean_hours).expect("validated").sample(rng)
            }
            ResponseDistribution::Constant { hours } => hours,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let ok = match *self {
            ResponseDistribution::LogNormal { median_hours, sigma } => {
                median_hours > 0.0 && median_hours.is_finite() && sigma >= 0.0 && sigma.is_finite()
            }
            ResponseDistribution::Exponential { mean_hours } => mean_hours > 0.0 && mean_hours.is_finite(),
            ResponseDistribution::Constant { hours } => hours >= 0.0 && hours.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(format!("bad response distribution {self}")))
        }
    }
}

impl fmt::Display for ResponseDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResponseDistribution::LogNormal { median_hours, sigma } => {
                write!(f, "lognormal:{median_hours}:{sigma}")
            }
            ResponseDistribution::Exponential { mean_hours } => write!(f, "exponential:{mean_hours}"),
            ResponseDistribution::Constant { hours } => write!(f, "constant:{hours}"),
        }
    }
}

impl std::str::FromStr for ResponseDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| format!("bad number `{t}`"));
        match parts.as_slice() {
            ["lognormal", m, s] => Ok(ResponseDistribution::LogNormal {
                median_hours: num(m)?,
                sigma: num(s)?,
            }),
            ["exponential", m] => Ok(ResponseDistribution::Exponential { mean_hours: num(m)? }),
            ["constant", h] => Ok(ResponseDistribution::Constant { hours: num(h)? }),
            _ => Err(format!("unknown distribution `{s}`")),
        }
    }
}

/// Inputs to the fire drill.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetScenario {
    pub n_appliances: usize,
    pub mirror_count: usize,
    /// The first this many mirrors are down for the whole drill.
    pub mirrors_down: usize,
    pub response: ResponseDistribution,
    pub check_interval_h: f64,
    pub check_jitter: f64,
    pub horizon_h: f64,
    pub sample_h: f64,
    pub boot_cost: BootCostModel,
    pub seed: u64,
    /// Ship the patch with one byte flipped after signing.
    pub tamper_patch: bool,
}

impl Default for FleetScenario {
    fn default() -> Self {
        FleetScenario {
            n_appliances: 1000,
            mirror_count: 3,
            mirrors_down: 0,
            // Median half a day; about 96% of sites act within two days.
            response: ResponseDistribution::LogNormal {
                median_hours: 12.0,
                sigma: 0.79,
            },
            check_interval_h: 24.0,
            check_jitter: 0.1,
            horizon_h: 168.0,
            sample_h: 1.0,
            boot_cost: BootCostModel::calibrated(),
            seed: 1,
            tamper_patch: false,
        }
    }
}

impl FleetScenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if self.n_appliances == 0 {
            return bad("appliances must be at least 1");
        }
        if self.mirror_count == 0 {
            return bad("mirrors must be at least 1");
        }
        if self.mirrors_down > self.mirror_count {
            return bad("mirrors_down exceeds mirrors");
        }
        if !(self.check_interval_h > 0.0 && self.check_interval_h.is_finite()) {
            return bad("check_interval_h must be positive");
        }
        if !(0.0..0.5).contains(&self.check_jitter) {
            return bad("check_jitter must be in [0, 0.5)");
        }
        if !(self.horizon_h > 0.0 && self.horizon_h.is_finite()) {
            return bad("horizon_h must be positive");
        }
        if !(self.sample_h > 0.0 && self.sample_h <= self.horizon_h) {
            return bad("sample_h must be positive and within the horizon");
        }
        self.boot_cost
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.response.validate()
    }

    /// `key=value` lines; unknown keys are errors, missing keys keep defaults.
    pub fn parse(text: &str) -> Result<FleetScenario, ScenarioError> {
        let mut s = FleetScenario::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| ScenarioError::Parse { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected key=value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let f = || v.parse::<f64>().map_err(|_| err(format!("bad number `{v}`")));
            let u = || v.parse::<u64>().map_err(|_| err(format!("bad integer `{v}`")));
            match k {
                "appliances" => s.n_appliances = u()? as usize,
                "mirrors" => s.mirror_count = u()? as usize,
                "mirrors_down" => s.mirrors_down = u()? as usize,
                "response" => s.response = v.parse().map_err(err)?,
                "check_interval_h" => s.check_interval_h = f()?,
                "check_jitter" => s.check_jitter = f()?,
                "horizon_h" => s.horizon_h = f()?,
                "sample_h" => s.sample_h = f()?,
                "seed" => s.seed = u()?,
                "tamper_patch" => {
                    s.tamper_patch = v.parse().map_err(|_| err(format!("bad bool `{v}`")))?
                }
                "fixed_overhead_s" => s.boot_cost.fixed_overhead_s = f()?,
                "signature_check_s" => s.boot_cost.signature_check_s = f()?,
                "base_install_s" => s.boot_cost.base_install_s = f()?,
                "package_rate_bytes_per_s" => s.boot_cost.package_rate_bytes_per_s = f()?,
                _ => return Err(err(format!("unknown key `{k}`"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let c = &self.boot_cost;
        format!(
            "appliances={}\nmirrors={}\nmirrors_down={}\nresponse={}\ncheck_interval_h={}\n\
             check_jitter={}\nhorizon_h={}\nsample_h={}\nseed={}\ntamper_patch={}\n\
             fixed_overhead_s={}\nsignature_check_s={}\nbase_install_s={}\npackage_rate_bytes_per_s={}\n",
            self.n_appliances,
            self.mirror_count,
            self.mirrors_down,
            self.response,
            self.check_interval_h,
            self.check_jitter,
            self.horizon_h,
            self.sample_h,
            self.seed,
            self.tamper_patch,
            c.fixed_overhead_s,
            c.signature_check_s,
            c.base_install_s,
            c.package_rate_bytes_per_s,
        )
    }
}
