use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("package install rate must be positive")]
    ZeroRate,
    #[error("cost components must be non-negative")]
    NegativeComponent,
    #[error("reboot interval {interval_s}s must exceed boot time {boot_s}s")]
    IntervalTooShort { interval_s: f64, boot_s: f64 },
    #[error("bad duration `{0}`")]
    BadDuration(String),
}

/// Seconds spent per boot, by stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootCostModel {
    pub fixed_overhead_s: f64,
    pub signature_check_s: f64,
    pub base_install_s: f64,
    pub package_rate_bytes_per_s: f64,
}

/// Decimal megabyte, as used for the calibration figures.
pub const MB: f64 = 1e6;

impl BootCostModel {
    /// 85 s fixed, 30 s signatures, 25 s base, 96 MB of packages in 180 s.
    pub fn calibrated() -> Self {
        BootCostModel {
            fixed_overhead_s: 85.0,
            signature_check_s: 30.0,
            base_install_s: 25.0,
            package_rate_bytes_per_s: 96.0 * MB / 180.0,
        }
    }

    pub fn package_install_s(&self, package_bytes: u64) -> Result<f64, CostError> {
        self.validate()?;
        Ok(package_bytes as f64 / self.package_rate_bytes_per_s)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if [self.fixed_overhead_s, self.signature_check_s, self.base_install_s]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(CostError::NegativeComponent);
        }
        if !(self.package_rate_bytes_per_s > 0.0) {
            return Err(CostError::ZeroRate);
        }
        Ok(())
    }
}

impl Default for BootCostModel {
    fn default() -> Self {
        Self::calibrated()
    }
}

pub fn boot_duration(model: &BootCostModel, package_bytes: u64) -> Result<f64, CostError> {
    let packages = model.package_install_s(package_bytes)?;
    Ok(model.fixed_overhead_s + model.signature_check_s + model.base_install_s + packages)
}

/// Fraction of time spent booting when rebooting once per interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Downtime {
    pub fraction: f64,
}

impl Downtime {
    pub fn percent(&self) -> f64 {
        self.fraction * 100.0
    }

    /// Percent with five decimals, e.g. `0.00617%`.
    pub fn percent_text(&self) -> String {
        format!("{:.5}%", self.percent())
    }
}

pub fn availability(reboot_interval_s: f64, boot_seconds: f64) -> Result<Downtime, CostError> {
    if !(boot_seconds >= 0.0) {
        return Err(CostError::NegativeComponent);
    }
    if !(reboot_interval_s > boot_seconds) {
        return Err(CostError::IntervalTooShort {
            interval_s: reboot_interval_s,
            boot_s: boot_seconds,
        });
    }
    Ok(Downtime {
        fraction: boot_seconds / reboot_interval_s,
    })
}

/// Parses `60d`, `24h`, `30m`, `320s` or a bare number of seconds.
pub fn parse_duration(text: &str) -> Result<f64, CostError> {
    let bad = || CostError::BadDuration(text.to_string());
    let t = text.trim();
    let (num, unit) = match t.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => (&t[..i], c),
        Some(_) => (t, 's'),
        None => return Err(bad()),
    };
    let value: f64 = num.parse().map_err(|_| bad())?;
    if !value.is_finite() || value < 0.0 {
        return Err(bad());
    }
    let scale = match unit {
        's' => 1.0,
        'm' => 60.0,
        'h' => 3600.0,
        'd' => 86400.0,
        _ => return Err(bad()),
    };
    Ok(value * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn calibrated_boot_durations() {
        let m = BootCostModel::calibrated();
        assert!((boot_duration(&m, 96_000_000).unwrap() - 320.0).abs() < 1e-9);
        assert!((boot_duration(&m, 0).unwrap() - 140.0).abs() < 1e-9);
        assert!((boot_duration(&m, 48_000_000).unwrap() - 230.0).abs() < 1e-9);
        assert!((m.package_install_s(96_000_000).unwrap() - 180.0).abs() < 1e-9);
    }

    #[test]
    fn zero_rate_rejected() {
        let m = BootCostModel {
            package_rate_bytes_per_s: 0.0,
            ..BootCostModel::calibrated()
        };
        assert_eq!(boot_duration(&m, 1), Err(CostError::ZeroRate));
    }

    #[test]
    fn downtime_figures() {
        let d = availability(60.0 * 86400.0, 320.0).unwrap();
        assert_eq!(d.percent_text(), "0.00617%");
        assert_eq!(availability(30.0 * 86400.0, 600.0).unwrap().percent_text(), "0.02315%");
        assert_eq!(availability(100.0, 0.0).unwrap().fraction, 0.0);
        assert!(availability(100.0, 100.0).is_err());
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("60d").unwrap(), 5_184_000.0);
        assert_eq!(parse_duration("24h").unwrap(), 86_400.0);
        assert_eq!(parse_duration("320").unwrap(), 320.0);
        assert_eq!(parse_duration("1.5m").unwrap(), 90.0);
        assert!(parse_duration("").is_err());
        assert!(parse_duration("3w").is_err());
        assert!(parse_duration("-1s").is_err());
    }

    proptest! {
        #[test]
        fn availability_matches_closed_form(interval in 1.0f64..1e9, frac in 0.0f64..0.999) {
            let boot = interval * frac;
            let d = availability(interval, boot).unwrap();
            prop_assert!((d.fraction - boot / interval).abs() <= 1e-9);
        }
    }
}
