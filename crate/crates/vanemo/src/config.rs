//! Scenario configuration: human-editable TOML with units spelled out in
//! the key names, so a speed can never silently be read in the wrong unit.

use crate::mobility::RoadScenario;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const KMH_TO_MPS: f64 = 1.0 / 3.6;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidField { field, reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoadCfg {
    pub length_m: f64,
    pub width_m: f64,
    pub ar_range_m: f64,
    pub ar_spacing_m: f64,
    pub ar_y_m: f64,
}

impl Default for RoadCfg {
    fn default() -> Self {
        RoadCfg {
            length_m: 10_000.0,
            width_m: 40.0,
            ar_range_m: 100.0,
            ar_spacing_m: 150.0,
            ar_y_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehiclesCfg {
    pub count: u16,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    /// Constant spacing between the two vehicles of a cooperating pair.
    pub pair_gap_m: f64,
    pub adhoc_range_m: f64,
}

impl Default for VehiclesCfg {
    fn default() -> Self {
        VehiclesCfg {
            count: 30,
            speed_min_kmh: 50.0,
            speed_max_kmh: 120.0,
            pair_gap_m: 75.0,
            adhoc_range_m: 900.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficCfg {
    /// Constant-bit-rate downlink packets per second per mobile router.
    pub cn_rate_pps: f64,
    pub packet_size_bytes: u32,
}

impl Default for TrafficCfg {
    fn default() -> Self {
        TrafficCfg { cn_rate_pps: 50.0, packet_size_bytes: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinksCfg {
    pub adhoc_rate_mbps: f64,
    pub wireless_prop_delay_s: f64,
    /// One-way wired backbone latency points swept as the router-to-agent
    /// latency axis.
    pub backbone_latency_sweep_ms: Vec<f64>,
    /// Latency multiplier for the access-router-to-access-router path when
    /// the two routers belong to different provider domains.
    pub inter_domain_latency_factor: f64,
    pub loss_prob_wireless: f64,
    pub loss_prob_wired: f64,
}

impl Default for LinksCfg {
    fn default() -> Self {
        LinksCfg {
            adhoc_rate_mbps: 4.0,
            wireless_prop_delay_s: 0.001,
            backbone_latency_sweep_ms: vec![10.0, 20.0, 40.0, 80.0, 160.0],
            inter_domain_latency_factor: 3.0,
            loss_prob_wireless: 0.0,
            loss_prob_wired: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolCfg {
    /// Radio teardown + re-association time when switching between the
    /// heterogeneous access networks of the two providers.
    pub reattach_delay_s: f64,
    /// Time an access router needs to install the forwarding tunnel after
    /// acknowledging a handover-initiate exchange.
    pub tunnel_install_s: f64,
    /// Settle time before a still-attached router tears its old link down.
    pub detach_settle_s: f64,
    /// Extra wait for the address-uniqueness exchange beyond the message
    /// round trip itself (the access router answers immediately).
    pub dad_wait_s: f64,
    /// Fraction of router range at which the new router's signal counts as
    /// usable; 1.0 means anywhere inside coverage.
    pub signal_threshold_fraction: f64,
    pub retransmit_max: u32,
    pub retransmit_grace_s: f64,
    /// FIFO buffer capacity at the next access router for the baseline's
    /// forwarded packets; drop-tail beyond this.
    pub fmip_buffer_cap: usize,
    /// Hold time bound for re-sequencing direct-path packets behind
    /// still-in-flight tunnel packets after the baseline's final binding
    /// update, expressed as a multiple of the backbone latency.
    pub reseq_hold_factor: f64,
    pub ingress_filtering: bool,
    /// Control experiment: register a care-of address carrying the previous
    /// router's prefix instead of one from the peer's advertised prefix.
    pub naive_reestablish_coa: bool,
    /// Unsolicited router-advertisement beacon interval of access routers.
    pub required_interval_s: f64,
}

impl Default for ProtocolCfg {
    fn default() -> Self {
        ProtocolCfg {
            reattach_delay_s: 0.9,
            tunnel_install_s: 0.005,
            detach_settle_s: 0.01,
            dad_wait_s: 0.0,
            signal_threshold_fraction: 1.0,
            retransmit_max: 3,
            retransmit_grace_s: 0.02,
            fmip_buffer_cap: 256,
            reseq_hold_factor: 4.5,
            ingress_filtering: true,
            naive_reestablish_coa: false,
            required_interval_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunCfg {
    pub duration_s: f64,
    pub seeds: u32,
    pub base_seed: u64,
    pub protocols: Vec<String>,
    pub trace: bool,
}

impl Default for RunCfg {
    fn default() -> Self {
        RunCfg {
            duration_s: 180.0,
            seeds: 10,
            base_seed: 42,
            protocols: vec!["multimr".into(), "fmipv6".into()],
            trace: false,
        }
    }
}

/// Complete scenario description. `Default` reproduces the bundled
/// `configs/table1.toml`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub road: RoadCfg,
    pub vehicles: VehiclesCfg,
    pub traffic: TrafficCfg,
    pub links: LinksCfg,
    pub protocol: ProtocolCfg,
    pub run: RunCfg,
}

/// Protocols the simulator implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    /// Cooperative multi-mobile-router scheme.
    MultiMr,
    /// Predictive fast-handover baseline.
    Fmipv6,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::MultiMr => "multimr",
            Protocol::Fmipv6 => "fmipv6",
        }
    }

    pub fn parse(s: &str) -> Option<Protocol> {
        match s.to_ascii_lowercase().as_str() {
            "multimr" | "multi-mr" | "proposed" => Some(Protocol::MultiMr),
            "fmipv6" | "fmip" => Some(Protocol::Fmipv6),
            _ => None,
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn speed_min_mps(&self) -> f64 {
        self.vehicles.speed_min_kmh * KMH_TO_MPS
    }

    pub fn speed_max_mps(&self) -> f64 {
        self.vehicles.speed_max_kmh * KMH_TO_MPS
    }

    pub fn road_scenario(&self) -> RoadScenario {
        RoadScenario {
            length_m: self.road.length_m,
            width_m: self.road.width_m,
            ar_range_m: self.road.ar_range_m,
            ar_spacing_m: self.road.ar_spacing_m,
            ar_y_m: self.road.ar_y_m,
            adhoc_range_m: self.vehicles.adhoc_range_m,
        }
    }

    pub fn protocols(&self) -> Result<Vec<Protocol>, ConfigError> {
        self.run
            .protocols
            .iter()
            .map(|s| {
                Protocol::parse(s)
                    .ok_or_else(|| invalid("run.protocols", format!("unknown protocol `{s}`")))
            })
            .collect()
    }

    pub fn sweep_latencies_s(&self) -> Vec<f64> {
        self.links.backbone_latency_sweep_ms.iter().map(|ms| ms / 1000.0).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.road;
        if r.ar_range_m <= 0.0 {
            return Err(invalid("road.ar_range_m", "must be positive"));
        }
        if r.ar_spacing_m <= 0.0 {
            return Err(invalid("road.ar_spacing_m", "must be positive"));
        }
        if r.ar_spacing_m >= 2.0 * r.ar_range_m {
            return Err(invalid(
                "road.ar_spacing_m",
                format!(
                    "spacing {} leaves no coverage overlap for range {}",
                    r.ar_spacing_m, r.ar_range_m
                ),
            ));
        }
        if r.length_m <= r.ar_spacing_m {
            return Err(invalid("road.length_m", "road shorter than one router spacing"));
        }
        if r.width_m < 0.0 {
            return Err(invalid("road.width_m", "must be non-negative"));
        }
        let v = &self.vehicles;
        if v.speed_min_kmh <= 0.0 || v.speed_max_kmh < v.speed_min_kmh {
            return Err(invalid("vehicles.speed_min_kmh", "need 0 < min <= max"));
        }
        if v.pair_gap_m <= 0.0 || v.pair_gap_m > v.adhoc_range_m {
            return Err(invalid("vehicles.pair_gap_m", "must be in (0, adhoc_range_m]"));
        }
        if self.traffic.cn_rate_pps < 0.0 {
            return Err(invalid("traffic.cn_rate_pps", "must be non-negative"));
        }
        if self.traffic.packet_size_bytes == 0 {
            return Err(invalid("traffic.packet_size_bytes", "must be positive"));
        }
        let l = &self.links;
        if l.adhoc_rate_mbps <= 0.0 {
            return Err(invalid("links.adhoc_rate_mbps", "must be positive"));
        }
        if l.backbone_latency_sweep_ms.is_empty() {
            return Err(invalid("links.backbone_latency_sweep_ms", "must not be empty"));
        }
        if l.backbone_latency_sweep_ms.iter().any(|&ms| ms <= 0.0) {
            return Err(invalid("links.backbone_latency_sweep_ms", "latencies must be positive"));
        }
        if !(0.0..=1.0).contains(&l.loss_prob_wireless) {
            return Err(invalid("links.loss_prob_wireless", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&l.loss_prob_wired) {
            return Err(invalid("links.loss_prob_wired", "must be in [0, 1]"));
        }
        if l.inter_domain_latency_factor < 1.0 {
            return Err(invalid("links.inter_domain_latency_factor", "must be >= 1"));
        }
        let p = &self.protocol;
        if !(0.0..=1.0).contains(&p.signal_threshold_fraction) {
            return Err(invalid("protocol.signal_threshold_fraction", "must be in [0, 1]"));
        }
        if p.fmip_buffer_cap == 0 {
            return Err(invalid("protocol.fmip_buffer_cap", "must be positive"));
        }
        if self.run.duration_s <= 0.0 {
            return Err(invalid("run.duration_s", "must be positive"));
        }
        if self.run.seeds == 0 {
            return Err(invalid("run.seeds", "must be positive"));
        }
        self.protocols()?;
        Ok(())
    }
}

/// Fully resolved parameters of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub scenario: ScenarioConfig,
    pub protocol: Protocol,
    /// One-way wired backbone latency for this run, seconds.
    pub backbone_latency_s: f64,
    pub seed: u64,
    pub collect_traces: bool,
}

impl RunParams {
    pub fn wireless_delay_s(&self, size_bytes: u32) -> f64 {
        let ser = size_bytes as f64 * 8.0 / (self.scenario.links.adhoc_rate_mbps * 1e6);
        ser + self.scenario.links.wireless_prop_delay_s
    }

    pub fn inter_domain_latency_s(&self) -> f64 {
        self.backbone_latency_s * self.scenario.links.inter_domain_latency_factor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_table_values() {
        let c = ScenarioConfig::default();
        assert_eq!(c.vehicles.count, 30);
        assert_eq!(c.road.length_m, 10_000.0);
        assert_eq!(c.road.width_m, 40.0);
        assert_eq!(c.road.ar_spacing_m, 150.0);
        assert_eq!(c.traffic.packet_size_bytes, 400);
        assert_eq!(c.links.adhoc_rate_mbps, 4.0);
        assert_eq!(c.vehicles.adhoc_range_m, 900.0);
        assert_eq!(c.vehicles.speed_min_kmh, 50.0);
        assert_eq!(c.vehicles.speed_max_kmh, 120.0);
        // 50-120 km/h in m/s
        assert!((c.speed_min_mps() - 13.889).abs() < 1e-3);
        assert!((c.speed_max_mps() - 33.333).abs() < 1e-3);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_is_identity() {
        let c = ScenarioConfig::default();
        let text = c.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_no_overlap_geometry() {
        let mut c = ScenarioConfig::default();
        c.road.ar_spacing_m = 250.0;
        let err = c.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ar_spacing_m"), "{msg}");
    }

    #[test]
    fn rejects_unknown_protocol_naming_field() {
        let mut c = ScenarioConfig::default();
        c.run.protocols = vec!["hmipv6".into()];
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("run.protocols"), "{msg}");
    }

    #[test]
    fn malformed_toml_is_reported() {
        let err = ScenarioConfig::from_toml_str("[road]\nlength_m = \"ten\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    #[test]
    fn ar_count_for_default_road() {
        let c = ScenarioConfig::default();
        let road = c.road_scenario();
        assert_eq!(road.ar_count(), 67); // 0, 150, ..., 9900
    }
}
