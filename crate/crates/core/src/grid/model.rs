use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three-phase apparent power base used for the per-unit system.
pub const BASE_KVA: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub households: u32,
    pub has_load: bool,
    pub has_pv: bool,
}

impl Bus {
    pub fn busbar() -> Self {
        Bus {
            id: 0,
            households: 0,
            has_load: false,
            has_pv: false,
        }
    }

    pub fn load(id: usize, households: u32) -> Self {
        Bus {
            id,
            households,
            has_load: true,
            has_pv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    pub resistance_ohm: f64,
    pub reactance_ohm: f64,
    pub ampacity_a: Option<f64>,
}

/// Radial LV feeder rooted at the transformer busbar (bus 0).
///
/// Construction goes through [`FeederModel::new`], which checks that the
/// lines form a tree and precomputes the traversal order used by the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct FeederModel {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    pub busbar_voltage: f64,
    pub nominal_voltage: f64,
    pub transformer_rating: f64,
    pub p_max: f64,
    pub p_min: f64,
    #[serde(skip)]
    pub(crate) topology: Topology,
}

/// Parent pointers and a root-first ordering of the buses.
#[derive(Debug, Clone, Default)]
pub(crate) struct Topology {
    /// `parent_line[b]` is the index of the line feeding bus `b` (unused for 0).
    pub parent_line: Vec<usize>,
    pub parent_bus: Vec<usize>,
    /// Buses in breadth-first order from the busbar.
    pub order: Vec<usize>,
}

impl FeederModel {
    pub fn new(
        buses: Vec<Bus>,
        lines: Vec<Line>,
        busbar_voltage: f64,
        nominal_voltage: f64,
        transformer_rating: f64,
        p_max: f64,
        p_min: f64,
    ) -> Result<Self> {
        if buses.len() < 2 {
            return Err(Error::InvalidFeeder("need the busbar and at least one bus".into()));
        }
        for (idx, bus) in buses.iter().enumerate() {
            if bus.id != idx {
                return Err(Error::InvalidFeeder(format!(
                    "bus ids must be contiguous from 0, found id {} at position {idx}",
                    bus.id
                )));
            }
            if bus.has_load && bus.households == 0 {
                return Err(Error::InvalidFeeder(format!("load bus {idx} has no households")));
            }
        }
        if buses[0].has_load || buses[0].has_pv {
            return Err(Error::InvalidFeeder(
                "bus 0 is the transformer busbar and cannot carry load or PV".into(),
            ));
        }
        for (idx, line) in lines.iter().enumerate() {
            if !(line.resistance_ohm > 0.0) || !(line.reactance_ohm > 0.0) {
                return Err(Error::InvalidFeeder(format!(
                    "line {idx} ({} -> {}) needs positive resistance and reactance",
                    line.from_bus, line.to_bus
                )));
            }
            if line.from_bus >= buses.len() || line.to_bus >= buses.len() {
                return Err(Error::InvalidFeeder(format!("line {idx} references an unknown bus")));
            }
        }
        if !(busbar_voltage > 0.0) || !(nominal_voltage > 0.0) {
            return Err(Error::InvalidFeeder("voltages must be positive".into()));
        }
        if !(p_min < 0.0 && 0.0 < p_max) {
            return Err(Error::InvalidFeeder(format!(
                "transformer limits need p_min < 0 < p_max, got p_min={p_min} p_max={p_max}"
            )));
        }
        let topology = build_topology(buses.len(), &lines)?;
        Ok(FeederModel {
            buses,
            lines,
            busbar_voltage,
            nominal_voltage,
            transformer_rating,
            p_max,
            p_min,
            topology,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Ids of buses that carry consumers, in ascending order.
    pub fn load_buses(&self) -> Vec<usize> {
        self.buses.iter().filter(|b| b.has_load).map(|b| b.id).collect()
    }

    pub fn pv_buses(&self) -> Vec<usize> {
        self.buses.iter().filter(|b| b.has_pv).map(|b| b.id).collect()
    }

    pub fn total_households(&self) -> u32 {
        self.buses.iter().map(|b| b.households).sum()
    }

    /// Impedance base in ohm for the per-unit system.
    pub fn base_impedance(&self) -> f64 {
        self.nominal_voltage * self.nominal_voltage / (BASE_KVA * 1e3)
    }

    /// Copy with every line impedance multiplied by `factor`.
    pub fn with_impedance_scale(&self, factor: f64) -> Result<Self> {
        let lines = self
            .lines
            .iter()
            .map(|l| Line {
                resistance_ohm: l.resistance_ohm * factor,
                reactance_ohm: l.reactance_ohm * factor,
                ..l.clone()
            })
            .collect();
        FeederModel::new(
            self.buses.clone(),
            lines,
            self.busbar_voltage,
            self.nominal_voltage,
            self.transformer_rating,
            self.p_max,
            self.p_min,
        )
    }

    pub fn with_limits(&self, p_min: f64, p_max: f64) -> Result<Self> {
        FeederModel::new(
            self.buses.clone(),
            self.lines.clone(),
            self.busbar_voltage,
            self.nominal_voltage,
            self.transformer_rating,
            p_max,
            p_min,
        )
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: FeederConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "document".into());
            Error::config(field, e.message().to_string())
        })?;
        cfg.into_model()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let cfg = FeederConfig::from_model(self);
        toml::to_string_pretty(&cfg).expect("feeder config serializes")
    }
}

fn build_topology(n: usize, lines: &[Line]) -> Result<Topology> {
    if lines.len() != n - 1 {
        return Err(Error::InvalidFeeder(format!(
            "a radial feeder with {n} buses needs {} lines, got {}",
            n - 1,
            lines.len()
        )));
    }
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (idx, line) in lines.iter().enumerate() {
        if line.from_bus == line.to_bus {
            return Err(Error::InvalidFeeder(format!("line {idx} is a self-loop")));
        }
        adjacency[line.from_bus].push((line.to_bus, idx));
        adjacency[line.to_bus].push((line.from_bus, idx));
    }
    let mut parent_line = vec![usize::MAX; n];
    let mut parent_bus = vec![usize::MAX; n];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::from([0usize]);
    visited[0] = true;
    while let Some(bus) = queue.pop_front() {
        order.push(bus);
        for &(next, line) in &adjacency[bus] {
            if line == parent_line[bus] {
                continue;
            }
            if visited[next] {
                return Err(Error::InvalidFeeder(format!("line {line} closes a loop")));
            }
            visited[next] = true;
            parent_line[next] = line;
            parent_bus[next] = bus;
            queue.push_back(next);
        }
    }
    if let Some(orphan) = visited.iter().position(|v| !v) {
        return Err(Error::InvalidFeeder(format!(
            "bus {orphan} is not connected to the busbar"
        )));
    }
    Ok(Topology {
        parent_line,
        parent_bus,
        order,
    })
}

/// On-disk feeder description (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederConfig {
    #[serde(default = "default_nominal")]
    pub nominal_voltage_v: f64,
    #[serde(default = "default_busbar")]
    pub busbar_voltage_pu: f64,
    #[serde(default = "default_rating")]
    pub transformer_rating_kva: f64,
    pub p_max_kw: f64,
    pub p_min_kw: f64,
    #[serde(rename = "bus")]
    pub buses: Vec<BusConfig>,
    #[serde(rename = "line")]
    pub lines: Vec<LineConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusConfig {
    pub id: usize,
    #[serde(default)]
    pub households: u32,
    #[serde(default)]
    pub has_load: Option<bool>,
    #[serde(default)]
    pub has_pv: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ampacity_a: Option<f64>,
}

fn default_nominal() -> f64 {
    400.0
}
fn default_busbar() -> f64 {
    1.01
}
fn default_rating() -> f64 {
    630.0
}

impl FeederConfig {
    fn into_model(self) -> Result<FeederModel> {
        let mut buses = Vec::with_capacity(self.buses.len());
        for (idx, b) in self.buses.iter().enumerate() {
            if b.id != idx {
                return Err(Error::config(
                    format!("bus[{idx}].id"),
                    format!("expected {idx} (ids must be contiguous and sorted), got {}", b.id),
                ));
            }
            let has_load = b.has_load.unwrap_or(b.households > 0);
            if has_load && b.households == 0 {
                return Err(Error::config(
                    format!("bus[{idx}].households"),
                    "load bus needs at least one household",
                ));
            }
            buses.push(Bus {
                id: b.id,
                households: b.households,
                has_load,
                has_pv: b.has_pv.unwrap_or(has_load),
            });
        }
        let mut lines = Vec::with_capacity(self.lines.len());
        for (idx, l) in self.lines.iter().enumerate() {
            if !(l.r_ohm > 0.0) {
                return Err(Error::config(
                    format!("line[{idx}].r_ohm"),
                    format!("must be > 0, got {}", l.r_ohm),
                ));
            }
            if !(l.x_ohm > 0.0) {
                return Err(Error::config(
                    format!("line[{idx}].x_ohm"),
                    format!("must be > 0, got {}", l.x_ohm),
                ));
            }
            if l.from >= buses.len() || l.to >= buses.len() {
                return Err(Error::config(format!("line[{idx}]"), "references an unknown bus"));
            }
            lines.push(Line {
                from_bus: l.from,
                to_bus: l.to,
                resistance_ohm: l.r_ohm,
                reactance_ohm: l.x_ohm,
                ampacity_a: l.ampacity_a,
            });
        }
        if !(self.p_min_kw < 0.0) {
            return Err(Error::config("p_min_kw", "backflow limit must be negative"));
        }
        if !(self.p_max_kw > 0.0) {
            return Err(Error::config("p_max_kw", "forward limit must be positive"));
        }
        FeederModel::new(
            buses,
            lines,
            self.busbar_voltage_pu,
            self.nominal_voltage_v,
            self.transformer_rating_kva,
            self.p_max_kw,
            self.p_min_kw,
        )
    }

    fn from_model(model: &FeederModel) -> Self {
        FeederConfig {
            nominal_voltage_v: model.nominal_voltage,
            busbar_voltage_pu: model.busbar_voltage,
            transformer_rating_kva: model.transformer_rating,
            p_max_kw: model.p_max,
            p_min_kw: model.p_min,
            buses: model
                .buses
                .iter()
                .map(|b| BusConfig {
                    id: b.id,
                    households: b.households,
                    has_load: Some(b.has_load),
                    has_pv: Some(b.has_pv),
                })
                .collect(),
            lines: model
                .lines
                .iter()
                .map(|l| LineConfig {
                    from: l.from_bus,
                    to: l.to_bus,
                    r_ohm: l.resistance_ohm,
                    x_ohm: l.reactance_ohm,
                    ampacity_a: l.ampacity_a,
                })
                .collect(),
        }
    }
}
