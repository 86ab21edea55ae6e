//! Flow-record parsing, feature encoding, environmental augmentation, and
//! window assembly.
//!
//! A raw flow record carries 53 numeric flow statistics, addresses, ports, a
//! protocol tag, and 13 environmental channels. Encoding maps one record to
//! exactly 71 floats: the 53 statistics and 13 environmental channels are
//! z-scored with statistics fitted on training data, the two addresses are
//! hash-encoded, the two ports are min-max scaled over the full port domain,
//! and the protocol tag becomes a stable small integer.

mod augment;
mod csv_io;
mod synth;
mod window;

pub use augment::{augment_environment, EnvChannelSpec, EnvGeneratorConfig};
pub use csv_io::{parse_csv, ParseStats, SchemaMode, CICIDS_FEATURE_COLUMNS};
pub use synth::{generate_records, write_synthetic_csv, SynthConfig};
pub use window::{
    assemble_windows, label_window, preprocess_records, AssembleStats, PreprocessStats,
    Provenance, WindowedDataset, WINDOW_LEN,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Number of raw flow-statistic features per record.
pub const FLOW_FEATURES: usize = 53;
/// Number of environmental channels appended to each record.
pub const ENV_CHANNELS: usize = 13;
/// Encoded width: 53 statistics + 2 addresses + 2 ports + protocol + 13 env.
pub const ENCODED_DIM: usize = FLOW_FEATURES + 5 + ENV_CHANNELS;
/// Hash buckets for address encoding.
pub const IP_HASH_BUCKETS: u32 = 65_536;

/// Attack class carried by an abnormal record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    None,
    Dos,
    Ddos,
    PortScan,
}

impl AttackKind {
    pub fn tag(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Dos => "dos",
            AttackKind::Ddos => "ddos",
            AttackKind::PortScan => "portscan",
        }
    }

    pub fn from_tag(tag: &str) -> Option<AttackKind> {
        match tag {
            "none" => Some(AttackKind::None),
            "dos" => Some(AttackKind::Dos),
            "ddos" => Some(AttackKind::Ddos),
            "portscan" => Some(AttackKind::PortScan),
            _ => None,
        }
    }
}

/// One parsed flow/telemetry row.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    /// Seconds since epoch.
    pub timestamp: f64,
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: String,
    /// Raw flow statistics; [`FLOW_FEATURES`] entries.
    pub features: Vec<f64>,
    /// Environmental channels; empty until augmented, then [`ENV_CHANNELS`].
    pub environment: Vec<f64>,
    /// True for abnormal traffic.
    pub abnormal: bool,
    pub attack: AttackKind,
}

impl FlowRecord {
    pub fn label(&self) -> u8 {
        u8::from(self.abnormal)
    }
}

/// How one input column is turned into a float.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Encoder {
    Zscore { mean: f64, std: f64 },
    MinMax { min: f64, max: f64 },
    IpHash,
    ProtocolMap,
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub encoder: Encoder,
}

/// Fitted, frozen encoding recipe. Encoding through a shared reference can
/// never mutate the schema, which is the train/test leakage guard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    /// Exactly [`ENCODED_DIM`] columns in encode order: flow statistics,
    /// src/dst address, src/dst port, protocol, environment channels.
    pub columns: Vec<ColumnSpec>,
    /// Protocol tags in first-seen order; id = position + 1, 0 is unknown.
    pub protocols: Vec<String>,
    pub hash_buckets: u32,
}

/// FNV-1a 32-bit over the canonical dotted-quad string, folded into
/// [0, 1] through `buckets` buckets. Deterministic across process restarts.
pub fn encode_ip(address: &str) -> Result<f64> {
    encode_ip_with_buckets(address, IP_HASH_BUCKETS)
}

pub fn encode_ip_with_buckets(address: &str, buckets: u32) -> Result<f64> {
    let parsed: std::net::Ipv4Addr = address.trim().parse().map_err(|_| Error::Encoding {
        what: "IPv4 address",
        value: address.to_string(),
    })?;
    let canonical = parsed.to_string();
    let mut h: u32 = 0x811c_9dc5;
    for b in canonical.as_bytes() {
        h ^= u32::from(*b);
        h = h.wrapping_mul(16_777_619);
    }
    Ok(f64::from(h % buckets) / f64::from(buckets - 1))
}

/// Min-max over the fixed port domain [0, 65535].
pub fn normalize_port(port: i64) -> Result<f64> {
    if !(0..=65_535).contains(&port) {
        return Err(Error::InvalidArgument {
            what: "port",
            details: format!("{port} is outside [0, 65535]"),
        });
    }
    Ok(port as f64 / 65_535.0)
}

impl FeatureSchema {
    /// Stable integer id for a protocol tag; unknown tags map to the
    /// reserved id 0 with a warning.
    pub fn protocol_id(&self, tag: &str) -> u32 {
        let tag = tag.trim();
        match self.protocols.iter().position(|p| p == tag) {
            Some(i) => i as u32 + 1,
            None => {
                log::warn!("unknown protocol tag {tag:?}, using reserved id 0");
                0
            }
        }
    }

    /// Encodes one record into exactly [`ENCODED_DIM`] floats.
    pub fn encode(&self, record: &FlowRecord) -> Result<Vec<f64>> {
        if record.features.len() != FLOW_FEATURES {
            return Err(Error::DimensionMismatch {
                op: "encode",
                axis: "features",
                expected: FLOW_FEATURES,
                got: record.features.len(),
            });
        }
        if record.environment.len() != ENV_CHANNELS {
            return Err(Error::DimensionMismatch {
                op: "encode",
                axis: "environment",
                expected: ENV_CHANNELS,
                got: record.environment.len(),
            });
        }
        let mut out = Vec::with_capacity(ENCODED_DIM);
        for (i, col) in self.columns.iter().enumerate() {
            let encoded = match &col.encoder {
                Encoder::Zscore { mean, std } => {
                    let raw = if i < FLOW_FEATURES {
                        record.features[i]
                    } else {
                        record.environment[i - (FLOW_FEATURES + 5)]
                    };
                    (raw - mean) / std
                }
                Encoder::MinMax { min, max } => {
                    let raw = if col.name == "src_port" {
                        f64::from(record.src_port)
                    } else {
                        f64::from(record.dst_port)
                    };
                    (raw - min) / (max - min)
                }
                Encoder::IpHash => {
                    let addr =
                        if col.name == "src_ip" { &record.src_ip } else { &record.dst_ip };
                    encode_ip_with_buckets(addr, self.hash_buckets)?
                }
                Encoder::ProtocolMap => f64::from(self.protocol_id(&record.protocol)),
                Encoder::Passthrough => {
                    if i < FLOW_FEATURES {
                        record.features[i]
                    } else {
                        record.environment[i - (FLOW_FEATURES + 5)]
                    }
                }
            };
            out.push(encoded);
        }
        Ok(out)
    }
}

/// Fits the per-feature statistics and the protocol table on training
/// records and freezes them into a schema. `feature_names` labels the 53
/// flow-statistic columns; `env_names` labels the 13 environment channels.
pub fn fit_standardizer(
    records: &[FlowRecord],
    feature_names: &[String],
    env_names: &[String],
) -> Result<FeatureSchema> {
    if records.is_empty() {
        return Err(Error::EmptyInput("fit_standardizer: no training records"));
    }
    if feature_names.len() != FLOW_FEATURES || env_names.len() != ENV_CHANNELS {
        return Err(Error::Configuration(format!(
            "expected {FLOW_FEATURES} feature names and {ENV_CHANNELS} environment names, \
             got {} and {}",
            feature_names.len(),
            env_names.len()
        )));
    }
    for r in records {
        if r.features.len() != FLOW_FEATURES {
            return Err(Error::DimensionMismatch {
                op: "fit_standardizer",
                axis: "features",
                expected: FLOW_FEATURES,
                got: r.features.len(),
            });
        }
        if r.environment.len() != ENV_CHANNELS {
            return Err(Error::DimensionMismatch {
                op: "fit_standardizer",
                axis: "environment",
                expected: ENV_CHANNELS,
                got: r.environment.len(),
            });
        }
    }

    // Population mean/std per column; zero variance falls back to std 1.
    let fit = |slice: &dyn Fn(&FlowRecord) -> f64| -> Encoder {
        let n = records.len() as f64;
        let mean = records.iter().map(|r| slice(r)).sum::<f64>() / n;
        let var = records.iter().map(|r| (slice(r) - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Encoder::Zscore { mean, std }
    };

    let mut columns = Vec::with_capacity(ENCODED_DIM);
    for (j, name) in feature_names.iter().enumerate() {
        let getter = move |r: &FlowRecord| r.features[j];
        columns.push(ColumnSpec { name: name.clone(), encoder: fit(&getter) });
    }
    columns.push(ColumnSpec { name: "src_ip".into(), encoder: Encoder::IpHash });
    columns.push(ColumnSpec { name: "dst_ip".into(), encoder: Encoder::IpHash });
    columns.push(ColumnSpec {
        name: "src_port".into(),
        encoder: Encoder::MinMax { min: 0.0, max: 65_535.0 },
    });
    columns.push(ColumnSpec {
        name: "dst_port".into(),
        encoder: Encoder::MinMax { min: 0.0, max: 65_535.0 },
    });
    columns.push(ColumnSpec { name: "protocol".into(), encoder: Encoder::ProtocolMap });
    for (j, name) in env_names.iter().enumerate() {
        let getter = move |r: &FlowRecord| r.environment[j];
        columns.push(ColumnSpec { name: name.clone(), encoder: fit(&getter) });
    }

    // Protocol table in first-seen order.
    let mut protocols: Vec<String> = Vec::new();
    for r in records {
        let tag = r.protocol.trim();
        if !protocols.iter().any(|p| p == tag) {
            protocols.push(tag.to_string());
        }
    }

    let schema = FeatureSchema { columns, protocols, hash_buckets: IP_HASH_BUCKETS };
    debug_assert_eq!(schema.columns.len(), ENCODED_DIM);
    Ok(schema)
}
