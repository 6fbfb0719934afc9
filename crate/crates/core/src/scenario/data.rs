use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::assets::{
    DrawProfile, LoadModel, PvModel, DAYS_PER_YEAR, DEFAULT_CAPACITY_FACTOR, DEFAULT_YEAR, HOUSEHOLD_CONSUMPTION_KWH,
    LOAD_POWER_FACTOR, MINUTES_PER_DAY, PASSIVE_KWH_PER_HOUSEHOLD,
};
use crate::error::{Error, Result};
use crate::grid::{FeederModel, MinuteSeries};
use crate::seed::{rng_for, sub_seed};

/// Missing stretches shorter than this are interpolated; longer ones drop
/// every day they touch.
pub const MAX_GAP_MINUTES: usize = 15;
pub const REPRESENTATIVE_DAYS: usize = 14;

/// One day of minute data for the whole feeder.
#[derive(Debug, Clone, Serialize)]
pub struct DayData {
    pub date: NaiveDate,
    /// PV output per kWp installed, kW, per minute.
    pub pv_per_kwp: Vec<f64>,
    /// Passive demand per bus and minute, kW; zero rows for buses without load.
    pub load_kw: Vec<Vec<f64>>,
    /// Measured PV reactive power per bus and minute, kvar per kWp at the
    /// bus. Left as is when PV is shed.
    pub pv_kvar_per_kwp: Option<Vec<Vec<f64>>>,
    /// Hourly spot price, EUR/kWh.
    pub spot: Vec<f64>,
    /// How many days of the year this day stands for.
    pub weight: f64,
}

impl DayData {
    pub fn total_load(&self) -> Vec<f64> {
        (0..MINUTES_PER_DAY)
            .map(|m| self.load_kw.iter().map(|row| row[m]).sum())
            .collect()
    }

    /// Spot price on the 10-minute grid.
    pub fn spot_steps(&self) -> Vec<f64> {
        self.spot.iter().flat_map(|&p| [p; 6]).collect()
    }

    /// Minute data for the power flow with `kwp_per_household` of PV at
    /// every PV bus.
    pub fn minute_series(&self, feeder: &FeederModel, kwp_per_household: f64) -> MinuteSeries {
        let q_ratio = (1.0 - LOAD_POWER_FACTOR * LOAD_POWER_FACTOR).sqrt() / LOAD_POWER_FACTOR;
        let mut s = MinuteSeries::zeros(feeder.n_buses(), MINUTES_PER_DAY);
        for bus in feeder.buses() {
            s.load_kw[bus.id].clone_from(&self.load_kw[bus.id]);
            s.load_kvar[bus.id] = self.load_kw[bus.id].iter().map(|p| p * q_ratio).collect();
            if bus.has_pv {
                let kwp = kwp_per_household * bus.households as f64;
                s.pv_kw[bus.id] = self.pv_per_kwp.iter().map(|p| p * kwp).collect();
                if let Some(q) = &self.pv_kvar_per_kwp {
                    s.pv_kvar
                        .get_or_insert_with(|| vec![vec![0.0; MINUTES_PER_DAY]; feeder.n_buses()])[bus.id] =
                        q[bus.id].iter().map(|v| v * kwp).collect();
                }
            }
        }
        s
    }
}

/// Which days a synthetic scenario contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaySelection {
    /// `n` days spread evenly over the year, each weighted `365 / n`
    /// (rounded down).
    Representative(usize),
    FullYear,
    /// `len` consecutive days from day-of-year index `start`, weight 1.
    Window {
        start: usize,
        len: usize,
    },
}

impl Default for DaySelection {
    fn default() -> Self {
        DaySelection::Representative(REPRESENTATIVE_DAYS)
    }
}

impl DaySelection {
    /// Day-of-year indices and weights.
    pub fn days(&self) -> Vec<(usize, f64)> {
        match *self {
            DaySelection::FullYear => (0..DAYS_PER_YEAR).map(|d| (d, 1.0)).collect(),
            DaySelection::Window { start, len } => (start.min(DAYS_PER_YEAR)..(start + len).min(DAYS_PER_YEAR))
                .map(|d| (d, 1.0))
                .collect(),
            DaySelection::Representative(n) => {
                let n = n.clamp(1, DAYS_PER_YEAR);
                let block = DAYS_PER_YEAR / n;
                (0..n).map(|j| (block * j + block / 2, block as f64)).collect()
            }
        }
    }
}

/// Everything a simulation run needs besides the control settings.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioData {
    #[serde(skip)]
    pub feeder: FeederModel,
    pub days: Vec<DayData>,
    #[serde(skip)]
    pub draw_profile: DrawProfile,
    pub seed: u64,
    /// Yearly PV energy per kWp, kWh.
    pub annual_pv_kwh_per_kwp: f64,
    /// Yearly consumption per household including hot water, kWh.
    pub annual_consumption_per_household: f64,
    /// Days removed during ingestion, with the reason.
    pub dropped: Vec<(NaiveDate, String)>,
}

impl ScenarioData {
    /// Seeded synthetic load, PV and spot prices on `feeder`.
    pub fn synthetic(feeder: FeederModel, seed: u64, selection: DaySelection) -> Self {
        let pv = PvModel::new(sub_seed(seed, &[1]), DEFAULT_CAPACITY_FACTOR);
        let loads: Vec<Option<LoadModel>> = feeder
            .buses()
            .iter()
            .map(|b| {
                b.has_load.then(|| {
                    LoadModel::new(
                        b.households,
                        sub_seed(seed, &[2, b.id as u64]),
                        PASSIVE_KWH_PER_HOUSEHOLD,
                    )
                })
            })
            .collect();
        let year = NaiveDate::from_ymd_opt(DEFAULT_YEAR, 1, 1).expect("valid date");
        let days = selection
            .days()
            .into_iter()
            .map(|(d, weight)| DayData {
                date: year + Duration::days(d as i64),
                pv_per_kwp: pv.day(d),
                load_kw: loads
                    .iter()
                    .map(|m| m.as_ref().map_or_else(|| vec![0.0; MINUTES_PER_DAY], |m| m.day(d)))
                    .collect(),
                pv_kvar_per_kwp: None,
                spot: synth_spot_day(sub_seed(seed, &[3]), d),
                weight,
            })
            .collect();
        ScenarioData {
            feeder,
            days,
            draw_profile: DrawProfile::default(),
            seed,
            annual_pv_kwh_per_kwp: DEFAULT_CAPACITY_FACTOR * 8760.0,
            annual_consumption_per_household: HOUSEHOLD_CONSUMPTION_KWH,
            dropped: Vec::new(),
        }
    }

    /// Scenario from measured data: a minute CSV and an hourly spot-price
    /// CSV (`timestamp,eur_per_mwh`).
    ///
    /// The minute CSV is either bus-level, `timestamp,bus_id,load_kw,pv_kw
    /// [,pv_kvar]`, with PV given for [`PV_REFERENCE_KWP_PER_HOUSEHOLD`] at
    /// each bus, or feeder-wide, `timestamp,pv_kw_per_kwp,
    /// load_kw_per_household`, where every household draws the same load.
    /// The PV of all buses is pooled into one profile per kWp, which the
    /// penetration then scales.
    pub fn from_csv(feeder: FeederModel, series_path: &Path, spot_path: &Path, seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(series_path).map_err(|e| Error::io(series_path, e))?;
        let origin = series_path.display().to_string();
        let bus_level = text
            .lines()
            .next()
            .is_some_and(|h| h.split(',').any(|c| c.trim() == "bus_id"));
        let (series, days) = if bus_level {
            let (series, columns) = ingest_bus_csv_str(&text, &origin)?;
            let days = bus_days(&feeder, &series, &columns, &origin)?;
            (series, days)
        } else {
            let series = ingest_csv_str(&text, &origin)?;
            let pv_col = series.column("pv_kw_per_kwp")?;
            let load_col = series.column("load_kw_per_household")?;
            let days = series
                .days
                .iter()
                .map(|day| {
                    let per_household = &day.columns[load_col];
                    DayData {
                        date: day.date,
                        pv_per_kwp: day.columns[pv_col].clone(),
                        load_kw: feeder
                            .buses()
                            .iter()
                            .map(|b| {
                                let scale = if b.has_load { b.households as f64 } else { 0.0 };
                                per_household.iter().map(|v| v * scale).collect()
                            })
                            .collect(),
                        pv_kvar_per_kwp: None,
                        spot: Vec::new(),
                        weight: 1.0,
                    }
                })
                .collect::<Vec<_>>();
            (series, days)
        };
        let spot = ingest_spot_csv(spot_path)?;
        let mut dropped = series.dropped.clone();
        let mut kept = Vec::new();
        for mut day in days {
            match spot.iter().find(|(d, _)| d == &day.date) {
                Some((_, prices)) => {
                    day.spot = prices.clone();
                    kept.push(day);
                }
                None => dropped.push((day.date, "no spot prices".into())),
            }
        }
        let days = kept;
        if days.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{}: no complete day left",
                series_path.display()
            )));
        }
        let n = days.len() as f64;
        let year_scale = DAYS_PER_YEAR as f64 / n;
        let mut days = days;
        for d in days.iter_mut() {
            d.weight = year_scale;
        }
        let households = feeder.total_households().max(1) as f64;
        let pv_kwh: f64 = days
            .iter()
            .map(|d| d.pv_per_kwp.iter().sum::<f64>() / 60.0)
            .sum::<f64>()
            * year_scale;
        let per_household_kwh: f64 = days
            .iter()
            .map(|d| d.total_load().iter().sum::<f64>() / 60.0)
            .sum::<f64>()
            * year_scale
            / households;
        let draw_profile = DrawProfile::default();
        Ok(ScenarioData {
            feeder,
            days,
            annual_pv_kwh_per_kwp: pv_kwh,
            annual_consumption_per_household: per_household_kwh
                + draw_profile.daily_demand_per_household * DAYS_PER_YEAR as f64,
            draw_profile,
            seed,
            dropped,
        })
    }

    /// Yearly PV energy over yearly consumption for a uniform installation.
    pub fn penetration(&self, kwp_per_household: f64) -> f64 {
        kwp_per_household * self.annual_pv_kwh_per_kwp / self.annual_consumption_per_household
    }

    pub fn kwp_per_household(&self, penetration: f64) -> f64 {
        penetration * self.annual_consumption_per_household / self.annual_pv_kwh_per_kwp
    }

    pub fn total_weight(&self) -> f64 {
        self.days.iter().map(|d| d.weight).sum()
    }

    /// A copy restricted to the listed day positions.
    pub fn subset(&self, positions: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        out.days = positions
            .iter()
            .map(|&i| {
                self.days
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidInput(format!("scenario has no day {i}")))
            })
            .collect::<Result<_>>()?;
        Ok(out)
    }

    /// Writes the scenario as the bus-level minute CSV and the spot-price
    /// CSV that [`ScenarioData::from_csv`] reads.
    pub fn write_csv(&self, series_path: &Path, spot_path: &Path) -> Result<()> {
        let buses: Vec<_> = self.feeder.buses().iter().filter(|b| b.has_load || b.has_pv).collect();
        let with_kvar = self.days.iter().any(|d| d.pv_kvar_per_kwp.is_some());
        let header = if with_kvar {
            &BUS_CSV_HEADER[..]
        } else {
            &BUS_CSV_HEADER[..4]
        };
        let mut w = csv::Writer::from_path(series_path).map_err(|e| csv_io(series_path, e))?;
        w.write_record(header)?;
        for d in &self.days {
            let midnight = d.date.and_hms_opt(0, 0, 0).expect("midnight");
            for m in 0..MINUTES_PER_DAY {
                let ts = (midnight + Duration::minutes(m as i64))
                    .format(TIMESTAMP_FORMAT)
                    .to_string();
                for bus in &buses {
                    let kwp = if bus.has_pv {
                        PV_REFERENCE_KWP_PER_HOUSEHOLD * bus.households as f64
                    } else {
                        0.0
                    };
                    let mut record = vec![
                        ts.clone(),
                        bus.id.to_string(),
                        format!("{:.6}", d.load_kw[bus.id][m]),
                        format!("{:.6}", d.pv_per_kwp[m] * kwp),
                    ];
                    if with_kvar {
                        let q = d.pv_kvar_per_kwp.as_ref().map_or(0.0, |q| q[bus.id][m]);
                        record.push(format!("{:.6}", q * kwp));
                    }
                    w.write_record(&record)?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(series_path, e))?;
        let mut w = csv::Writer::from_path(spot_path).map_err(|e| csv_io(spot_path, e))?;
        w.write_record(["timestamp", "eur_per_mwh"])?;
        for d in &self.days {
            let midnight = d.date.and_hms_opt(0, 0, 0).expect("midnight");
            for (h, p) in d.spot.iter().enumerate() {
                let ts = midnight + Duration::hours(h as i64);
                w.write_record([ts.format(TIMESTAMP_FORMAT).to_string(), format!("{:.4}", p * 1000.0)])?;
            }
        }
        w.flush().map_err(|e| Error::io(spot_path, e))?;
        Ok(())
    }
}

/// In bus-level files `pv_kw` is the output of this much PV per household
/// at the bus.
pub const PV_REFERENCE_KWP_PER_HOUSEHOLD: f64 = 1.0;

fn bus_days(
    feeder: &FeederModel,
    series: &IngestedSeries,
    columns: &[BusColumns],
    origin: &str,
) -> Result<Vec<DayData>> {
    let invalid = |message: String| Error::InvalidInput(format!("{origin}: {message}"));
    for c in columns {
        if c.bus >= feeder.n_buses() {
            return Err(invalid(format!("bus {} is not on the feeder", c.bus)));
        }
    }
    if let Some(b) = feeder
        .buses()
        .iter()
        .find(|b| (b.has_load || b.has_pv) && !columns.iter().any(|c| c.bus == b.id))
    {
        return Err(invalid(format!("no rows for bus {}", b.id)));
    }
    let pv_kwp: f64 = columns
        .iter()
        .map(|c| &feeder.buses()[c.bus])
        .filter(|b| b.has_pv)
        .map(|b| PV_REFERENCE_KWP_PER_HOUSEHOLD * b.households as f64)
        .sum();
    let with_kvar = columns.iter().any(|c| c.pv_kvar.is_some());
    let mut days = Vec::with_capacity(series.days.len());
    for day in &series.days {
        let mut load_kw = vec![vec![0.0; MINUTES_PER_DAY]; feeder.n_buses()];
        let mut pv_per_kwp = vec![0.0; MINUTES_PER_DAY];
        let mut kvar = with_kvar.then(|| vec![vec![0.0; MINUTES_PER_DAY]; feeder.n_buses()]);
        for c in columns {
            let bus = &feeder.buses()[c.bus];
            if bus.has_load {
                load_kw[c.bus].clone_from(&day.columns[c.load]);
            }
            let pv = &day.columns[c.pv];
            if !bus.has_pv || bus.households == 0 {
                if pv.iter().any(|v| *v != 0.0) {
                    return Err(invalid(format!(
                        "PV output at bus {} which has no PV households",
                        c.bus
                    )));
                }
                continue;
            }
            for (acc, v) in pv_per_kwp.iter_mut().zip(pv) {
                *acc += v / pv_kwp;
            }
            if let (Some(q), Some(col)) = (kvar.as_mut(), c.pv_kvar) {
                let kwp = PV_REFERENCE_KWP_PER_HOUSEHOLD * bus.households as f64;
                q[c.bus] = day.columns[col].iter().map(|v| v / kwp).collect();
            }
        }
        days.push(DayData {
            date: day.date,
            pv_per_kwp,
            load_kw,
            pv_kvar_per_kwp: kvar,
            spot: Vec::new(),
            weight: 1.0,
        });
    }
    Ok(days)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    }
}

/// Hourly spot prices in EUR/kWh for day-of-year `day`: cheap nights,
/// morning and evening peaks, a midday dip that deepens in summer, lower
/// weekend levels and seeded day-to-day and hour-to-hour noise.
pub fn synth_spot_day(seed: u64, day: usize) -> Vec<f64> {
    let mut rng: ChaCha8Rng = rng_for(seed, &[0x5907, day as u64]);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let summer = 0.5 * (1.0 + (2.0 * PI * (day as f64 - 171.0) / 365.0).cos());
    let weekend = matches!(day % 7, 5 | 6);
    let z: f64 = normal.sample(&mut rng);
    let level = (48.0 - 8.0 * summer) * (0.15 * z).exp() * if weekend { 0.85 } else { 1.0 };
    let bump = |h: f64, c: f64, w: f64| (-0.5 * ((h - c) / w).powi(2)).exp();
    (0..24)
        .map(|h| {
            let hour = h as f64 + 0.5;
            let shape = 0.72 + 0.4 * bump(hour, 9.0, 1.8) + 0.45 * bump(hour, 19.0, 1.6) + 0.25 * bump(hour, 13.0, 3.0)
                - 0.18 * summer * bump(hour, 13.5, 2.0);
            let eur_per_mwh = (level * shape + 2.5 * normal.sample(&mut rng)).max(1.0);
            eur_per_mwh / 1000.0
        })
        .collect()
}

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    let s = s.strip_suffix('Z').or_else(|| s.strip_suffix("+00:00")).unwrap_or(s);
    [
        "%Y-%m-%d %H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%dT%H:%M:%S",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// One complete day of an ingested minute CSV.
#[derive(Debug, Clone, Serialize)]
pub struct IngestedDay {
    pub date: NaiveDate,
    /// `[column][minute]`
    pub columns: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestedSeries {
    pub names: Vec<String>,
    pub days: Vec<IngestedDay>,
    /// Days removed because of long gaps or partial coverage.
    pub dropped: Vec<(NaiveDate, String)>,
    /// Missing minutes filled by interpolation.
    pub interpolated: usize,
}

impl IngestedSeries {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidInput(format!("missing column {name:?} (have {:?})", self.names)))
    }
}

/// Reads a minute-resolution CSV: a `timestamp` column (`YYYY-MM-DD HH:MM`,
/// optional seconds or `T` separator) followed by numeric columns.
///
/// Missing minutes are absent rows or empty / `NaN` cells. Runs shorter
/// than [`MAX_GAP_MINUTES`] are filled linearly between their neighbours;
/// longer runs remove every calendar day they touch. Days not fully
/// covered by the file are removed as well.
pub fn ingest_csv(path: &Path) -> Result<IngestedSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_csv_str(&text, &path.display().to_string())
}

pub fn ingest_csv_str(text: &str, origin: &str) -> Result<IngestedSeries> {
    let (names, stamps, rows) = parse_wide(text, origin)?;
    lay_on_grid(names, &stamps, rows, origin)
}

type Rows = (Vec<String>, Vec<NaiveDateTime>, Vec<Vec<Option<f64>>>);

fn parse_wide(text: &str, origin: &str) -> Result<Rows> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "timestamp" {
        return Err(parse_err(1, "expected a header `timestamp,<column>,...`".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut stamps: Vec<NaiveDateTime> = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", names.len() + 1, record.len()),
            ));
        }
        let ts =
            parse_timestamp(&record[0]).ok_or_else(|| parse_err(line, format!("bad timestamp {:?}", &record[0])))?;
        if ts.and_utc().timestamp() % 60 != 0 {
            return Err(parse_err(line, "timestamps must fall on whole minutes".into()));
        }
        if let Some(prev) = stamps.last() {
            if ts <= *prev {
                return Err(parse_err(line, format!("timestamp {ts} not after {prev}")));
            }
        }
        let values = record
            .iter()
            .skip(1)
            .map(|cell| {
                if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                    return Ok(None);
                }
                cell.parse::<f64>()
                    .map(|v| v.is_finite().then_some(v))
                    .map_err(|_| parse_err(line, format!("bad number {cell:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        stamps.push(ts);
        rows.push(values);
    }
    Ok((names, stamps, rows))
}

/// Puts timestamped rows on a continuous minute grid, fills short gaps and
/// drops the days with long ones.
fn lay_on_grid(
    names: Vec<String>,
    stamps: &[NaiveDateTime],
    rows: Vec<Vec<Option<f64>>>,
    origin: &str,
) -> Result<IngestedSeries> {
    if stamps.is_empty() {
        return Err(Error::InvalidInput(format!("{origin}: no data rows")));
    }

    // lay the rows onto a continuous minute grid from the first midnight
    let first_day = stamps[0].date();
    let last_day = stamps[stamps.len() - 1].date();
    let origin_ts = first_day.and_hms_opt(0, 0, 0).expect("midnight");
    let n_days = (last_day - first_day).num_days() as usize + 1;
    let len = n_days * MINUTES_PER_DAY;
    let mut grid: Vec<Vec<Option<f64>>> = vec![vec![None; len]; names.len()];
    for (ts, row) in stamps.iter().zip(rows) {
        let idx = (*ts - origin_ts).num_minutes() as usize;
        for (c, v) in row.into_iter().enumerate() {
            grid[c][idx] = v;
        }
    }
    let covered_from = (stamps[0] - origin_ts).num_minutes() as usize;
    let covered_to = (stamps[stamps.len() - 1] - origin_ts).num_minutes() as usize;

    let mut bad_days: BTreeSet<usize> = BTreeSet::new();
    let mut reasons: Vec<(usize, String)> = Vec::new();
    if covered_from > 0 {
        bad_days.insert(0);
        reasons.push((0, "file starts after midnight".into()));
    }
    if covered_to + 1 < len {
        bad_days.insert(n_days - 1);
        reasons.push((n_days - 1, "file ends before midnight".into()));
    }
    let mut interpolated = 0;
    for col in grid.iter_mut() {
        let mut i = covered_from;
        while i <= covered_to {
            if col[i].is_some() {
                i += 1;
                continue;
            }
            let start = i;
            while i <= covered_to && col[i].is_none() {
                i += 1;
            }
            let run = i - start;
            if run >= MAX_GAP_MINUTES || start == covered_from || i > covered_to {
                for d in start / MINUTES_PER_DAY..=(i - 1) / MINUTES_PER_DAY {
                    if bad_days.insert(d) {
                        reasons.push((d, format!("{run} consecutive missing minutes")));
                    }
                }
                continue;
            }
            let (a, b) = (col[start - 1].expect("present"), col[i].expect("present"));
            for (j, slot) in col[start..i].iter_mut().enumerate() {
                let w = (j + 1) as f64 / (run + 1) as f64;
                *slot = Some(a + w * (b - a));
            }
            interpolated += run;
        }
    }

    let mut days = Vec::new();
    for d in 0..n_days {
        if bad_days.contains(&d) {
            continue;
        }
        let range = d * MINUTES_PER_DAY..(d + 1) * MINUTES_PER_DAY;
        days.push(IngestedDay {
            date: first_day + Duration::days(d as i64),
            columns: grid
                .iter()
                .map(|col| col[range.clone()].iter().map(|v| v.expect("filled")).collect())
                .collect(),
        });
    }
    reasons.sort_by_key(|(d, _)| *d);
    let dropped: Vec<(NaiveDate, String)> = reasons
        .into_iter()
        .map(|(d, why)| (first_day + Duration::days(d as i64), why))
        .collect();
    for (date, why) in &dropped {
        log::info!("{origin}: dropping {date}: {why}");
    }
    Ok(IngestedSeries {
        names,
        days,
        dropped,
        interpolated,
    })
}

/// Header of the bus-level time-series CSV.
pub const BUS_CSV_HEADER: [&str; 5] = ["timestamp", "bus_id", "load_kw", "pv_kw", "pv_kvar"];

/// One bus of an ingested bus-level CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BusColumns {
    pub bus: usize,
    pub load: usize,
    pub pv: usize,
    pub pv_kvar: Option<usize>,
}

/// Reads the bus-level minute CSV `timestamp,bus_id,load_kw,pv_kw[,pv_kvar]`
/// (one row per bus and minute, UTC) into one column per bus and quantity.
///
/// Timestamps must increase strictly within each bus. Gap handling is the
/// same as for [`ingest_csv`], applied to every bus.
pub fn ingest_bus_csv(path: &Path) -> Result<(IngestedSeries, Vec<BusColumns>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_bus_csv_str(&text, &path.display().to_string())
}

pub fn ingest_bus_csv_str(text: &str, origin: &str) -> Result<(IngestedSeries, Vec<BusColumns>)> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let with_kvar = headers == BUS_CSV_HEADER;
    if !with_kvar && headers != BUS_CSV_HEADER[..4] {
        return Err(parse_err(
            1,
            "expected the header `timestamp,bus_id,load_kw,pv_kw[,pv_kvar]`".into(),
        ));
    }
    let width = headers.len();
    let mut by_time: BTreeMap<NaiveDateTime, BTreeMap<usize, Vec<Option<f64>>>> = BTreeMap::new();
    let mut last: BTreeMap<usize, NaiveDateTime> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, got {}", record.len()),
            ));
        }
        let ts =
            parse_timestamp(&record[0]).ok_or_else(|| parse_err(line, format!("bad timestamp {:?}", &record[0])))?;
        if ts.and_utc().timestamp() % 60 != 0 {
            return Err(parse_err(line, "timestamps must fall on whole minutes".into()));
        }
        let bus: usize = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad bus id {:?}", &record[1])))?;
        if let Some(prev) = last.insert(bus, ts) {
            if ts <= prev {
                return Err(parse_err(line, format!("bus {bus}: timestamp {ts} not after {prev}")));
            }
        }
        let values = record
            .iter()
            .skip(2)
            .map(|cell| {
                if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                    return Ok(None);
                }
                cell.parse::<f64>()
                    .map(|v| v.is_finite().then_some(v))
                    .map_err(|_| parse_err(line, format!("bad number {cell:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        by_time.entry(ts).or_default().insert(bus, values);
    }
    let per_bus = width - 2;
    let buses: Vec<usize> = last.keys().copied().collect();
    let mut names = Vec::with_capacity(buses.len() * per_bus);
    let mut columns = Vec::with_capacity(buses.len());
    for (j, &bus) in buses.iter().enumerate() {
        for q in &BUS_CSV_HEADER[2..width] {
            names.push(format!("{q}@{bus}"));
        }
        columns.push(BusColumns {
            bus,
            load: j * per_bus,
            pv: j * per_bus + 1,
            pv_kvar: with_kvar.then_some(j * per_bus + 2),
        });
    }
    let stamps: Vec<NaiveDateTime> = by_time.keys().copied().collect();
    let rows = by_time
        .into_values()
        .map(|at| {
            buses
                .iter()
                .flat_map(|b| at.get(b).cloned().unwrap_or_else(|| vec![None; per_bus]))
                .collect()
        })
        .collect();
    Ok((lay_on_grid(names, &stamps, rows, origin)?, columns))
}

/// Reads `timestamp,eur_per_mwh` hourly prices and returns EUR/kWh per
/// complete day.
pub fn ingest_spot_csv(path: &Path) -> Result<Vec<(NaiveDate, Vec<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_spot_str(&text, &path.display().to_string())
}

pub fn ingest_spot_str(text: &str, origin: &str) -> Result<Vec<(NaiveDate, Vec<f64>)>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["timestamp", "eur_per_mwh"] {
        return Err(parse_err(1, "expected the header `timestamp,eur_per_mwh`".into()));
    }
    let mut out: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    let mut prev: Option<NaiveDateTime> = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, got {}", record.len())));
        }
        let ts =
            parse_timestamp(&record[0]).ok_or_else(|| parse_err(line, format!("bad timestamp {:?}", &record[0])))?;
        if prev.is_some_and(|p| ts <= p) {
            return Err(parse_err(line, format!("timestamp {ts} is not increasing")));
        }
        prev = Some(ts);
        let price: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad price {:?}", &record[1])))?;
        let date = ts.date();
        if out.last().is_none_or(|(d, _)| *d != date) {
            out.push((date, vec![None; 24]));
        }
        out.last_mut().expect("pushed").1[ts.hour() as usize] = Some(price / 1000.0);
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("{origin}: no price rows")));
    }
    Ok(out
        .into_iter()
        .filter_map(|(date, prices)| {
            let full: Option<Vec<f64>> = prices.into_iter().collect();
            if full.is_none() {
                log::info!("{origin}: dropping {date}: incomplete hourly prices");
            }
            full.map(|p| (date, p))
        })
        .collect())
}

/// Day-of-year (0-based) of `date`.
pub fn day_of_year(date: NaiveDate) -> usize {
    date.ordinal0() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::default_feeder;

    fn csv_with_gap(gap: std::ops::Range<usize>, days: usize) -> String {
        let mut s = String::from("timestamp,a\n");
        let start = NaiveDate::from_ymd_opt(2013, 3, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        for m in 0..days * MINUTES_PER_DAY {
            if gap.contains(&m) {
                continue;
            }
            let ts = start + Duration::minutes(m as i64);
            s.push_str(&format!("{},{}\n", ts.format(TIMESTAMP_FORMAT), m as f64));
        }
        s
    }

    #[test]
    fn short_gap_is_interpolated() {
        let s = ingest_csv_str(&csv_with_gap(100..110, 1), "t").unwrap();
        assert_eq!(s.days.len(), 1);
        assert_eq!(s.interpolated, 10);
        // the column is the minute index, so interpolation reproduces it
        for m in 95..115 {
            assert!((s.days[0].columns[0][m] - m as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn long_gap_drops_the_day() {
        let s = ingest_csv_str(&csv_with_gap(2000..2020, 3), "t").unwrap();
        assert_eq!(s.days.len(), 2);
        assert_eq!(s.dropped.len(), 1);
        assert_eq!(s.dropped[0].0, NaiveDate::from_ymd_opt(2013, 3, 2).unwrap());
        assert!(s.dropped[0].1.contains("20 consecutive"));
    }

    #[test]
    fn fourteen_minute_gap_is_kept_fifteen_is_not() {
        assert_eq!(ingest_csv_str(&csv_with_gap(500..514, 1), "t").unwrap().days.len(), 1);
        assert_eq!(ingest_csv_str(&csv_with_gap(500..515, 1), "t").unwrap().days.len(), 0);
    }

    #[test]
    fn nan_cells_count_as_missing() {
        let mut text = csv_with_gap(0..0, 1);
        text = text.replace(",300\n", ",NaN\n");
        let s = ingest_csv_str(&text, "t").unwrap();
        assert_eq!(s.interpolated, 1);
        assert!((s.days[0].columns[0][300] - 300.0).abs() < 1e-9);
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let text = "timestamp,a\n2013-01-01 00:00,1\n2013-01-01 00:01,x\n";
        let err = ingest_csv_str(text, "f.csv").unwrap_err();
        assert!(err.to_string().starts_with("f.csv:3:"), "{err}");
        let text = "timestamp,a\n2013-01-01 00:01,1\n2013-01-01 00:00,2\n";
        assert!(ingest_csv_str(text, "f.csv")
            .unwrap_err()
            .to_string()
            .contains("not after"));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(ingest_csv_str("timestamp,a\n", "t").is_err());
        assert!(ingest_csv_str("", "t").is_err());
    }

    #[test]
    fn spot_prices_convert_to_eur_per_kwh() {
        let mut text = String::from("timestamp,eur_per_mwh\n");
        for h in 0..24 {
            text.push_str(&format!("2013-01-01 {h:02}:00,{}\n", 40 + h));
        }
        text.push_str("2013-01-02 00:00,10\n");
        let days = ingest_spot_str(&text, "s").unwrap();
        assert_eq!(days.len(), 1);
        assert!((days[0].1[3] - 0.043).abs() < 1e-12);
    }

    #[test]
    fn representative_days_cover_the_year() {
        let days = DaySelection::Representative(14).days();
        assert_eq!(days.len(), 14);
        assert_eq!(days.iter().map(|d| d.1).sum::<f64>(), 364.0);
        assert_eq!(days[0].0, 13);
    }

    #[test]
    fn penetration_anchor() {
        let s = ScenarioData::synthetic(default_feeder(), 1, DaySelection::Representative(2));
        assert!((s.penetration(0.865) - 0.2857).abs() < 5e-5);
        assert!((s.kwp_per_household(s.penetration(1.3)) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = ScenarioData::synthetic(default_feeder(), 4, DaySelection::Representative(3));
        let (a, b) = (dir.path().join("series.csv"), dir.path().join("spot.csv"));
        s.write_csv(&a, &b).unwrap();
        let back = ScenarioData::from_csv(default_feeder(), &a, &b, 4).unwrap();
        assert_eq!(back.days.len(), 3);
        for (x, y) in s.days.iter().zip(&back.days) {
            assert_eq!(x.date, y.date);
            assert!(x
                .pv_per_kwp
                .iter()
                .zip(&y.pv_per_kwp)
                .all(|(p, q)| (p - q).abs() < 1e-6));
            for (lx, ly) in x.load_kw.iter().zip(&y.load_kw) {
                assert!(lx.iter().zip(ly).all(|(p, q)| (p - q).abs() < 1e-6));
            }
            assert!(x.spot.iter().zip(&y.spot).all(|(p, q)| (p - q).abs() < 1e-7));
        }
    }

    fn bus_rows(minutes: std::ops::Range<usize>, buses: &[usize], kvar: bool) -> String {
        let mut text = String::from(if kvar {
            "timestamp,bus_id,load_kw,pv_kw,pv_kvar\n"
        } else {
            "timestamp,bus_id,load_kw,pv_kw\n"
        });
        let start = NaiveDate::from_ymd_opt(2013, 7, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        for m in minutes {
            let ts = (start + Duration::minutes(m as i64)).format("%Y-%m-%dT%H:%M:%SZ");
            for &b in buses {
                text += &format!(
                    "{ts},{b},{},{}",
                    0.5 + b as f64,
                    if m % 1440 >= 600 { 2.0 } else { 0.0 }
                );
                text += if kvar { ",-0.5\n" } else { "\n" };
            }
        }
        text
    }

    #[test]
    fn bus_level_rows_pivot_per_bus() {
        let (series, cols) = ingest_bus_csv_str(&bus_rows(0..2880, &[3, 1], true), "mem").unwrap();
        assert_eq!(series.days.len(), 2);
        assert_eq!(cols.iter().map(|c| c.bus).collect::<Vec<_>>(), vec![1, 3]);
        let day = &series.days[0];
        assert_eq!(day.columns[cols[1].load][0], 3.5);
        assert_eq!(day.columns[cols[0].pv][700], 2.0);
        assert_eq!(day.columns[cols[0].pv_kvar.unwrap()][5], -0.5);

        let (_, cols) = ingest_bus_csv_str(&bus_rows(0..1440, &[2], false), "mem").unwrap();
        assert_eq!(cols[0].pv_kvar, None);
    }

    #[test]
    fn bus_level_gap_in_one_bus_drops_the_day() {
        let mut text = bus_rows(0..2880, &[0, 1], false);
        let lines: Vec<&str> = text.lines().collect();
        // bus 1 loses 20 minutes on the second day
        let keep: Vec<&str> = lines
            .iter()
            .enumerate()
            .filter(|(i, _)| !(*i > 0 && (i - 1) % 2 == 1 && (1500..1520).contains(&((i - 1) / 2))))
            .map(|(_, l)| *l)
            .collect();
        text = keep.join("\n");
        let (series, _) = ingest_bus_csv_str(&text, "mem").unwrap();
        assert_eq!(series.days.len(), 1);
        assert_eq!(series.dropped[0].0, NaiveDate::from_ymd_opt(2013, 7, 2).unwrap());
    }

    #[test]
    fn bus_level_rejects_bad_input() {
        let text = "timestamp,bus_id,load_kw,pv_kw\n2013-07-01T00:01:00Z,1,1,0\n2013-07-01T00:00:00Z,1,1,0\n";
        assert!(matches!(
            ingest_bus_csv_str(text, "mem"),
            Err(Error::Parse { line: 3, .. })
        ));
        let text = "timestamp,bus,load_kw,pv_kw\n";
        assert!(matches!(
            ingest_bus_csv_str(text, "mem"),
            Err(Error::Parse { line: 1, .. })
        ));
        let text = "timestamp,bus_id,load_kw,pv_kw\n2013-07-01T00:00:00Z,x,1,0\n";
        assert!(ingest_bus_csv_str(text, "mem").is_err());
    }

    #[test]
    fn bus_level_scenario_checks_the_feeder() {
        let dir = tempfile::tempdir().unwrap();
        let feeder = default_feeder();
        let spot = dir.path().join("spot.csv");
        let mut prices = String::from("timestamp,eur_per_mwh\n");
        for h in 0..24 {
            prices += &format!("2013-07-01 {h:02}:00,40\n");
        }
        std::fs::write(&spot, prices).unwrap();
        let series = dir.path().join("series.csv");
        let all: Vec<usize> = feeder
            .buses()
            .iter()
            .filter(|b| b.has_load || b.has_pv)
            .map(|b| b.id)
            .collect();

        std::fs::write(&series, bus_rows(0..1440, &all, true)).unwrap();
        let s = ScenarioData::from_csv(feeder.clone(), &series, &spot, 1).unwrap();
        let pv_kwp: f64 = feeder
            .buses()
            .iter()
            .filter(|b| b.has_pv)
            .map(|b| b.households as f64)
            .sum();
        let expect = 2.0 * all.len() as f64 / pv_kwp;
        assert!((s.days[0].pv_per_kwp[700] - expect).abs() < 1e-12);
        let minutes = s.days[0].minute_series(&feeder, 2.0);
        let b = feeder.buses().iter().find(|b| b.has_pv).unwrap();
        let q = minutes.pv_kvar.as_ref().unwrap()[b.id][0];
        assert!((q + 0.5 / (b.households as f64) * 2.0 * b.households as f64).abs() < 1e-12);

        std::fs::write(&series, bus_rows(0..1440, &all[1..], false)).unwrap();
        assert!(ScenarioData::from_csv(feeder.clone(), &series, &spot, 1).is_err());
        let mut extra = all.clone();
        extra.push(feeder.n_buses());
        std::fs::write(&series, bus_rows(0..1440, &extra, false)).unwrap();
        assert!(ScenarioData::from_csv(feeder, &series, &spot, 1).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = ScenarioData::synthetic(default_feeder(), 9, DaySelection::Representative(2));
        let b = ScenarioData::synthetic(default_feeder(), 9, DaySelection::Representative(2));
        assert_eq!(a.days[1].load_kw, b.days[1].load_kw);
        assert_eq!(a.days[1].spot, b.days[1].spot);
    }
}
