use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::calibrate::BackflowOptions;
use super::data::{day_of_year, DaySelection, ScenarioData, REPRESENTATIVE_DAYS};
use super::hosting::HostingOptions;
use super::run::{Control, RunSettings};
use super::sweep::SweepOptions;
use crate::assets::DEFAULT_YEAR;
use crate::dispatch::{DispatchOptions, SolverOptions};
use crate::error::{Error, Result};
use crate::forecast::ForecastConfig;
use crate::grid::{default_feeder, FeederModel};
use crate::mpc::MpcMode;

pub const DEFAULT_SEED: u64 = 2013;

/// Which days of the year a synthetic scenario simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DaysConfig {
    /// `n` representative days.
    Count(usize),
    Keyword(FullYear),
    Window {
        start: usize,
        len: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FullYear {
    #[serde(rename = "full-year")]
    FullYear,
}

impl Default for DaysConfig {
    fn default() -> Self {
        DaysConfig::Count(REPRESENTATIVE_DAYS)
    }
}

impl From<DaysConfig> for DaySelection {
    fn from(d: DaysConfig) -> Self {
        match d {
            DaysConfig::Count(n) => DaySelection::Representative(n),
            DaysConfig::Keyword(FullYear::FullYear) => DaySelection::FullYear,
            DaysConfig::Window { start, len } => DaySelection::Window { start, len },
        }
    }
}

/// A complete experiment description, read from TOML.
///
/// ```toml
/// seed = 2013
/// days = 14              # or "full-year", or { start = 166, len = 7 }
/// feeder = "feeder.toml" # optional, default feeder otherwise
/// series_csv = "year.csv"
/// spot_csv = "spot.csv"
/// p_min = -150.0
/// penetration = 0.5
/// control = "dispatch"   # or "price-only"
/// mpc = "hourly"         # perfect | hourly | day-ahead
///
/// [dispatch]
/// ewh_groups = 20
/// switch_cost = 0.02
///
/// [solver]
/// kind = "heuristic"
/// ```
///
/// Relative paths are resolved against the directory of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub days: DaysConfig,
    pub feeder: Option<PathBuf>,
    /// Measured minute series; synthetic data is generated when absent.
    pub series_csv: Option<PathBuf>,
    pub spot_csv: Option<PathBuf>,
    /// Backflow limit override, kW.
    pub p_min: Option<f64>,
    /// Forward limit override, kW.
    pub p_max: Option<f64>,
    pub penetration: f64,
    pub control: Control,
    pub mpc: MpcMode,
    pub dispatch: DispatchOptions,
    pub solver: SolverOptions,
    pub forecast: ForecastConfig,
    pub hosting: HostingOptions,
    pub sweep: SweepOptions,
    pub calibration: BackflowOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: DEFAULT_SEED,
            days: DaysConfig::default(),
            feeder: None,
            series_csv: None,
            spot_csv: None,
            p_min: None,
            p_max: None,
            penetration: 0.5,
            control: Control::Dispatch,
            mpc: MpcMode::Hourly,
            dispatch: DispatchOptions::default(),
            solver: SolverOptions::default(),
            forecast: ForecastConfig::default(),
            hosting: HostingOptions::default(),
            sweep: SweepOptions::default(),
            calibration: BackflowOptions::default(),
        }
    }
}

fn config_error(text: &str, e: toml::de::Error) -> Error {
    let field = e
        .span()
        .map(|s| format!("line {}", text[..s.start.min(text.len())].matches('\n').count() + 1))
        .unwrap_or_else(|| "document".into());
    Error::ScenarioConfig {
        field,
        message: e.message().to_string(),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| config_error(text, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and makes its relative paths relative to its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.feeder, &mut cfg.series_csv, &mut cfg.spot_csv]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::ScenarioConfig {
            field: "document".into(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::ScenarioConfig {
                field: field.into(),
                message,
            })
        };
        if !(self.penetration >= 0.0 && self.penetration.is_finite()) {
            return bad(
                "penetration",
                format!("must be a finite non-negative fraction, got {}", self.penetration),
            );
        }
        if self.series_csv.is_some() != self.spot_csv.is_some() {
            return bad("series_csv", "series_csv and spot_csv must be given together".into());
        }
        match self.days {
            DaysConfig::Count(0) => return bad("days", "need at least one day".into()),
            DaysConfig::Window { len: 0, .. } => return bad("days", "window needs at least one day".into()),
            _ => {}
        }
        if let Some(p) = self.p_min.filter(|p| !(*p < 0.0)) {
            return bad("p_min", format!("backflow limit must be negative, got {p}"));
        }
        if let Some(p) = self.p_max.filter(|p| !(*p > 0.0)) {
            return bad("p_max", format!("forward limit must be positive, got {p}"));
        }
        self.forecast.validate()
    }

    /// The feeder with any limit overrides applied.
    pub fn feeder_model(&self) -> Result<FeederModel> {
        let feeder = match &self.feeder {
            Some(path) => FeederModel::from_file(path)?,
            None => default_feeder(),
        };
        if self.p_min.is_none() && self.p_max.is_none() {
            return Ok(feeder);
        }
        feeder.with_limits(self.p_min.unwrap_or(feeder.p_min), self.p_max.unwrap_or(feeder.p_max))
    }

    pub fn scenario(&self) -> Result<ScenarioData> {
        let feeder = self.feeder_model()?;
        match (&self.series_csv, &self.spot_csv) {
            (Some(series), Some(spot)) => ScenarioData::from_csv(feeder, series, spot, self.seed),
            _ => Ok(ScenarioData::synthetic(feeder, self.seed, self.days.into())),
        }
    }

    /// Just the day `date`, from the CSV files or the synthetic year.
    pub fn day_scenario(&self, date: NaiveDate) -> Result<ScenarioData> {
        let missing = || Error::ScenarioConfig {
            field: "day".into(),
            message: format!("{date} is not in the scenario data"),
        };
        if self.series_csv.is_some() {
            let all = self.scenario()?;
            let pos = all.days.iter().position(|d| d.date == date).ok_or_else(missing)?;
            return all.subset(&[pos]);
        }
        if date.year() != DEFAULT_YEAR {
            return Err(Error::ScenarioConfig {
                field: "day".into(),
                message: format!("the synthetic data covers {DEFAULT_YEAR} only"),
            });
        }
        let s = ScenarioData::synthetic(
            self.feeder_model()?,
            self.seed,
            DaySelection::Window {
                start: day_of_year(date),
                len: 1,
            },
        );
        if s.days.len() != 1 {
            return Err(missing());
        }
        Ok(s)
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            penetration: self.penetration,
            control: self.control,
            dispatch: self.dispatch.clone(),
            solver: self.solver.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::SolverKind;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(ScenarioConfig::from_toml_str("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn fields_parse() {
        let cfg = ScenarioConfig::from_toml_str(
            r#"
seed = 7
days = "full-year"
p_min = -120.0
control = "price-only"
mpc = "day-ahead"
[dispatch]
ewh_groups = 5
[solver]
kind = "bnb"
gap_tol = 0.01
[sweep]
switch_costs = [0.0, 0.1]
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(DaySelection::from(cfg.days), DaySelection::FullYear);
        assert_eq!(cfg.control, Control::PriceOnly);
        assert_eq!(cfg.mpc, MpcMode::DayAhead);
        assert_eq!(cfg.dispatch.ewh_groups, 5);
        assert_eq!(cfg.solver.kind, SolverKind::Bnb);
        assert_eq!(cfg.sweep.switch_costs, vec![0.0, 0.1]);
        assert_eq!(cfg.feeder_model().unwrap().p_min, -120.0);
        let window = ScenarioConfig::from_toml_str("days = { start = 3, len = 2 }").unwrap();
        assert_eq!(
            DaySelection::from(window.days),
            DaySelection::Window { start: 3, len: 2 }
        );
    }

    #[test]
    fn unknown_and_invalid_fields_name_the_place() {
        let e = ScenarioConfig::from_toml_str("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(
            matches!(&e, Error::ScenarioConfig { field, message } if field == "line 2" && message.contains("bogus"))
        );
        let e = ScenarioConfig::from_toml_str("[dispatch]\newh_grups = 3\n").unwrap_err();
        assert!(e.to_string().contains("ewh_grups"), "{e}");
        let e = ScenarioConfig::from_toml_str("p_min = 10.0").unwrap_err();
        assert!(matches!(&e, Error::ScenarioConfig { field, .. } if field == "p_min"));
        assert!(ScenarioConfig::from_toml_str("series_csv = \"a.csv\"").is_err());
    }

    #[test]
    fn round_trips_and_resolves_paths() {
        let mut cfg = ScenarioConfig::default();
        cfg.feeder = Some("feeder.toml".into());
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);

        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("feeder.toml"), default_feeder().to_toml_string()).unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        let loaded = ScenarioConfig::from_file(&path).unwrap();
        assert_eq!(loaded.feeder.as_deref(), Some(dir.path().join("feeder.toml").as_path()));
        assert_eq!(loaded.feeder_model().unwrap().n_buses(), default_feeder().n_buses());
    }

    #[test]
    fn single_day_from_the_synthetic_year() {
        let cfg = ScenarioConfig::default();
        let date = NaiveDate::from_ymd_opt(DEFAULT_YEAR, 6, 20).unwrap();
        let s = cfg.day_scenario(date).unwrap();
        assert_eq!(s.days.len(), 1);
        assert_eq!(s.days[0].date, date);
        assert!(cfg.day_scenario(NaiveDate::from_ymd_opt(1999, 6, 20).unwrap()).is_err());
    }
}
