//! Per-flow feature vectors.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::aggregate::{FlowRecord, Timeouts};
use super::dataset::{Dataset, FeatureDef, FeatureKind, Schema};
use super::pcap::Protocol;
use crate::constraints::{ConstraintKind, ConstraintSpec, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Continuous feature names, in default column order.
pub const CONTINUOUS_FEATURES: [&str; 19] = [
    "total_packets",
    "total_bytes",
    "duration",
    "mean_pkt_len",
    "min_pkt_len",
    "max_pkt_len",
    "std_pkt_len",
    "mean_iat",
    "min_iat",
    "max_iat",
    "std_iat",
    "throughput",
    "up_bytes",
    "down_bytes",
    "up_packets",
    "down_packets",
    "up_down_byte_ratio",
    "burst_count",
    "mean_burst_len",
];

pub const PROTOCOL_VOCAB: [&str; 2] = ["tcp", "udp"];
pub const DIRECTION_VOCAB: [&str; 3] = ["forward", "backward", "bidirectional"];

/// All 21 features in default order.
pub fn default_feature_names() -> Vec<String> {
    CONTINUOUS_FEATURES
        .iter()
        .chain(["protocol", "direction"].iter())
        .map(|s| s.to_string())
        .collect()
}

fn feature_def(name: &str) -> Option<FeatureDef> {
    match name {
        "protocol" => Some(FeatureDef::categorical(name, &PROTOCOL_VOCAB)),
        "direction" => Some(FeatureDef::categorical(name, &DIRECTION_VOCAB)),
        n if CONTINUOUS_FEATURES.contains(&n) => Some(FeatureDef::continuous(n)),
        _ => None,
    }
}

/// Schema for a list of catalogue feature names.
pub fn schema_for(names: &[String]) -> Result<Schema> {
    let mut seen = HashSet::new();
    let mut defs = Vec::with_capacity(names.len());
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::config(format!("feature `{n}` listed twice")));
        }
        defs.push(feature_def(n).ok_or_else(|| Error::config(format!("unknown flow feature `{n}`")))?);
    }
    Schema::new(defs)
}

pub fn default_schema() -> Schema {
    schema_for(&default_feature_names()).expect("built-in schema is valid")
}

/// Identities that every extracted flow satisfies.
pub fn default_constraints(phi: f64) -> Vec<ConstraintSpec> {
    let spec = |a: &str, b: &str, c: &str, offset: f64| ConstraintSpec {
        kind: ConstraintKind::Ratio,
        a: a.into(),
        b: b.into(),
        c: c.into(),
        phi,
        offset,
    };
    vec![
        spec("mean_pkt_len", "total_bytes", "total_packets", 0.0),
        spec("throughput", "total_bytes", "duration", 0.0),
        spec("mean_iat", "duration", "total_packets", 1.0),
    ]
}

/// Flow extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub idle_timeout: f64,
    pub active_timeout: f64,
    pub burst_gap: f64,
    /// Output columns, drawn from the built-in catalogue.
    pub columns: Vec<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let t = Timeouts::default();
        Self {
            idle_timeout: t.idle,
            active_timeout: t.active,
            burst_gap: t.burst_gap,
            columns: default_feature_names(),
        }
    }
}

impl FeatureConfig {
    pub fn timeouts(&self) -> Result<Timeouts> {
        for (name, v) in [
            ("idle_timeout", self.idle_timeout),
            ("active_timeout", self.active_timeout),
            ("burst_gap", self.burst_gap),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("features.{name} must be positive, got {v}")));
            }
        }
        Ok(Timeouts {
            idle: self.idle_timeout,
            active: self.active_timeout,
            burst_gap: self.burst_gap,
        })
    }

    pub fn schema(&self) -> Result<Schema> {
        schema_for(&self.columns)
    }
}

/// Primary flow quantities; everything else is derived from these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseFeatures {
    pub up_packets: f64,
    pub down_packets: f64,
    pub up_bytes: f64,
    pub down_bytes: f64,
    pub duration: f64,
    pub min_pkt_len: f64,
    pub max_pkt_len: f64,
    pub std_pkt_len: f64,
    pub min_iat: f64,
    pub max_iat: f64,
    pub std_iat: f64,
    pub burst_count: f64,
    pub protocol: Protocol,
}

impl BaseFeatures {
    pub fn from_flow(f: &FlowRecord) -> Self {
        let ns = |v: u64| v as f64 * 1e-9;
        Self {
            up_packets: f.up_packets as f64,
            down_packets: f.down_packets as f64,
            up_bytes: f.up_bytes as f64,
            down_bytes: f.down_bytes as f64,
            duration: f.duration(),
            min_pkt_len: f.len_min as f64,
            max_pkt_len: f.len_max as f64,
            std_pkt_len: f.std_len(),
            min_iat: ns(f.iat_min_ns),
            max_iat: ns(f.iat_max_ns),
            std_iat: f.std_iat(),
            burst_count: f.bursts as f64,
            protocol: f.key.protocol,
        }
    }

    /// Value of a catalogue feature. Categorical values are vocabulary indices.
    pub fn get(&self, name: &str) -> Option<f64> {
        let packets = self.up_packets + self.down_packets;
        let bytes = self.up_bytes + self.down_bytes;
        let d = DEFAULT_DELTA;
        Some(match name {
            "total_packets" => packets,
            "total_bytes" => bytes,
            "duration" => self.duration,
            "mean_pkt_len" => bytes / packets.max(d),
            "min_pkt_len" => self.min_pkt_len,
            "max_pkt_len" => self.max_pkt_len,
            "std_pkt_len" => self.std_pkt_len,
            "mean_iat" => self.duration / (packets - 1.0).max(d),
            "min_iat" => self.min_iat,
            "max_iat" => self.max_iat,
            "std_iat" => self.std_iat,
            // zero-length flows use one microsecond tick as the denominator
            "throughput" => bytes / self.duration.max(d),
            "up_bytes" => self.up_bytes,
            "down_bytes" => self.down_bytes,
            "up_packets" => self.up_packets,
            "down_packets" => self.down_packets,
            "up_down_byte_ratio" => self.up_bytes / self.down_bytes.max(1.0),
            "burst_count" => self.burst_count,
            "mean_burst_len" => packets / self.burst_count.max(1.0),
            "protocol" => match self.protocol {
                Protocol::Tcp => 0.0,
                Protocol::Udp => 1.0,
            },
            "direction" => match (self.up_packets > 0.0, self.down_packets > 0.0) {
                (true, true) => 2.0,
                (false, true) => 1.0,
                _ => 0.0,
            },
            _ => return None,
        })
    }

    /// Row of values in the order of `schema`.
    pub fn row(&self, schema: &Schema) -> Result<Vec<f64>> {
        schema
            .features
            .iter()
            .map(|f| {
                self.get(&f.name)
                    .ok_or_else(|| Error::config(format!("unknown flow feature `{}`", f.name)))
            })
            .collect()
    }
}

/// Turn flows into a raw (unstandardized) dataset with the configured columns.
pub fn featurize(flows: &[FlowRecord], cfg: &FeatureConfig) -> Result<Dataset> {
    let schema = cfg.schema()?;
    for f in &schema.features {
        if let FeatureKind::Categorical { .. } = f.kind {
            if f.name != "protocol" && f.name != "direction" {
                return Err(Error::config(format!("`{}` is not a flow feature", f.name)));
            }
        }
    }
    let mut data = Vec::with_capacity(flows.len() * schema.len());
    for f in flows {
        data.extend(BaseFeatures::from_flow(f).row(&schema)?);
    }
    let m = Matrix::from_vec(flows.len(), schema.len(), data)?;
    Dataset::new(schema, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::ConstraintSet;
    use crate::flow::aggregate::aggregate;
    use crate::flow::pcap::PacketRecord;

    fn pkt(ts_ns: u64, len: u32) -> PacketRecord {
        PacketRecord {
            ts_ns,
            src_ip: [10, 0, 0, 1].into(),
            dst_ip: [10, 0, 0, 2].into(),
            src_port: 4000,
            dst_port: 443,
            protocol: Protocol::Tcp,
            total_length: len,
            payload_length: len - 40,
        }
    }

    fn value(ds: &Dataset, row: usize, name: &str) -> f64 {
        let c = ds.schema.names().iter().position(|n| n == name).unwrap();
        ds.features[(row, c)]
    }

    #[test]
    fn two_packet_flow() {
        let flows = aggregate(&[pkt(0, 100), pkt(1_000_000_000, 100)], &Timeouts::default());
        let ds = featurize(&flows, &FeatureConfig::default()).unwrap();
        assert_eq!(ds.schema.len(), 21);
        assert_eq!(value(&ds, 0, "total_bytes"), 200.0);
        assert_eq!(value(&ds, 0, "duration"), 1.0);
        assert_eq!(value(&ds, 0, "throughput"), 200.0);
        assert_eq!(value(&ds, 0, "mean_iat"), 1.0);
        assert_eq!(value(&ds, 0, "std_pkt_len"), 0.0);
        assert_eq!(value(&ds, 0, "direction"), 0.0);
    }

    #[test]
    fn single_packet_flow() {
        let flows = aggregate(&[pkt(5, 80)], &Timeouts::default());
        let ds = featurize(&flows, &FeatureConfig::default()).unwrap();
        for n in ["mean_iat", "min_iat", "max_iat", "std_iat", "duration"] {
            assert_eq!(value(&ds, 0, n), 0.0, "{n}");
        }
        assert_eq!(value(&ds, 0, "throughput"), 80.0 / DEFAULT_DELTA);
    }

    #[test]
    fn duplicate_columns_rejected() {
        let cfg = FeatureConfig {
            columns: vec!["duration".into(), "duration".into()],
            ..FeatureConfig::default()
        };
        assert!(matches!(featurize(&[], &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn default_identities_hold() {
        let ps = [pkt(0, 60), pkt(300_000, 1500), pkt(2_700_000_000, 400)];
        let flows = aggregate(&ps, &Timeouts::default());
        let ds = featurize(&flows, &FeatureConfig::default()).unwrap();
        let set = ConstraintSet::from_specs(&default_constraints(0.5), &ds.schema.continuous_names(), DEFAULT_DELTA)
            .unwrap();
        let raw = ds.continuous_raw();
        for r in raw.iter_rows() {
            for g in set.residuals(r) {
                assert!(g.abs() <= 1e-9, "{g}");
            }
        }
    }
}
