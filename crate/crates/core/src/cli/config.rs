//! Run configuration: one TOML file, every key optional, flags win.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::FixedOffset;
use serde::{Deserialize, Serialize};

use crate::calendar::{parse_utc_offset, HolidayCalendar};
use crate::error::{Error, Result};
use crate::eval::SplitSpec;
use crate::features::{FeatureValues, SpeedingThresholds, WindowKind};
use crate::labeling::Target;
use crate::trips::TripConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripSettings {
    pub gap_s: i64,
    pub min_duration_s: i64,
    pub min_mileage_km: f64,
}

impl Default for TripSettings {
    fn default() -> Self {
        let d = TripConfig::default();
        TripSettings {
            gap_s: d.gap_threshold_s,
            min_duration_s: d.min_duration_s,
            min_mileage_km: d.min_mileage_km,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PremiumSettings {
    pub loss: f64,
    pub admin: f64,
    pub margin: f64,
}

impl Default for PremiumSettings {
    fn default() -> Self {
        PremiumSettings {
            loss: 0.0,
            admin: 0.0,
            margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory for every artifact; default inputs are looked up here too.
    pub out_dir: PathBuf,
    pub events: Option<PathBuf>,
    pub claims: Option<PathBuf>,
    /// Holiday list file; the bundled calendar when absent.
    pub holidays: Option<PathBuf>,
    /// Generator parameters for `synth`; the bundled defaults when absent.
    pub synth_config: Option<PathBuf>,
    pub window: WindowKind,
    pub timezone: String,
    pub alpha: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub stratify: bool,
    pub speeding_kph: [f64; 3],
    pub trip: TripSettings,
    pub premium: PremiumSettings,
    /// Candidate features per target; the published model columns when a
    /// target is absent.
    pub candidates: BTreeMap<String, Vec<String>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let split = SplitSpec::default();
        RunConfig {
            out_dir: PathBuf::from("out"),
            events: None,
            claims: None,
            holidays: None,
            synth_config: None,
            window: WindowKind::Lifetime,
            timezone: "+03:00".into(),
            alpha: 0.05,
            test_fraction: split.test_fraction,
            seed: split.seed,
            stratify: split.stratify,
            speeding_kph: SpeedingThresholds::default().0,
            trip: TripSettings::default(),
            premium: PremiumSettings::default(),
            candidates: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    /// Parses a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.events, &mut cfg.claims, &mut cfg.holidays, &mut cfg.synth_config]
            .into_iter()
            .flatten()
        {
            *p = base.join(&*p);
        }
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tz()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.trip.gap_s <= 0 || self.trip.min_duration_s < 0 || self.trip.min_mileage_km.is_nan() || self.trip.min_mileage_km < 0.0 {
            return bad("trip thresholds must be non-negative with a positive gap".into());
        }
        for (target, cols) in &self.candidates {
            target.parse::<Target>().map_err(Error::Config)?;
            if let Some(c) = cols.iter().find(|c| !FeatureValues::NAMES.contains(&c.as_str())) {
                return bad(format!("candidates.{target}: unknown feature `{c}`"));
            }
        }
        Ok(())
    }

    pub fn tz(&self) -> Result<FixedOffset> {
        parse_utc_offset(&self.timezone).map_err(Error::Config)
    }

    pub fn calendar(&self) -> Result<HolidayCalendar> {
        match &self.holidays {
            Some(p) => HolidayCalendar::from_file(p),
            None => Ok(HolidayCalendar::russian()),
        }
    }

    pub fn trip_config(&self) -> TripConfig {
        TripConfig {
            gap_threshold_s: self.trip.gap_s,
            min_duration_s: self.trip.min_duration_s,
            min_mileage_km: self.trip.min_mileage_km,
        }
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.test_fraction,
            seed: self.seed,
            stratify: self.stratify,
        }
    }

    pub fn candidates_for(&self, target: Target) -> Vec<String> {
        match self.candidates.get(target.as_str()) {
            Some(c) => c.clone(),
            None => crate::glm::default_candidates(target).into_iter().map(String::from).collect(),
        }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn malformed_values_are_config_errors() {
        for text in ["alpha = 2.0", "timezone = \"Mars\"", "bogus = 1", "window = \"monthly\"", "[candidates]\nany = [\"x\"]"] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "events = \"ev.jsonl\"\nout_dir = \"o\"\n[candidates]\nweak = [\"a1\"]\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.events.clone().unwrap(), dir.path().join("ev.jsonl"));
        assert_eq!(cfg.out("x.csv"), dir.path().join("o").join("x.csv"));
        assert_eq!(cfg.candidates_for(Target::Weak), vec!["a1"]);
        assert_eq!(cfg.candidates_for(Target::Medium), vec!["mileage", "a1", "max_n_sp", "d_night_m"]);
    }
}
