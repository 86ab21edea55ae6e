//! Synthetic flow-record generator: a desk-scale stand-in for the real flow
//! dataset. Attacks arrive in whole-minute bursts so windows inherit clean
//! labels; abnormal records shift a configurable feature subset by a
//! configurable number of standard deviations and push their environmental
//! channels out of band.

use crate::error::{Error, Result};
use crate::preprocess::{
    augment_environment, AttackKind, EnvGeneratorConfig, FlowRecord, FLOW_FEATURES,
};
use crate::RngState;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub records: usize,
    pub attack: AttackKind,
    /// Probability that a minute is under attack; every record in an
    /// attacked minute is abnormal.
    pub attack_fraction: f64,
    /// Mean shift applied to the attacked features, in per-feature σ units.
    pub shift_magnitude: f64,
    /// How many of the attack signature features to shift.
    pub shift_features: usize,
    /// Records emitted per minute (transmission rate; one per second at 60).
    pub per_minute: usize,
    pub start_timestamp: i64,
    pub env: EnvGeneratorConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            records: 6000,
            attack: AttackKind::Dos,
            attack_fraction: 0.3,
            shift_magnitude: 3.0,
            shift_features: 5,
            per_minute: 60,
            start_timestamp: 1_700_000_000,
            env: EnvGeneratorConfig::default(),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.attack_fraction) {
            return Err(Error::InvalidArgument {
                what: "attack fraction",
                details: format!("{} outside [0, 1]", self.attack_fraction),
            });
        }
        if self.per_minute == 0 || self.per_minute > 60 {
            return Err(Error::InvalidArgument {
                what: "per_minute",
                details: format!("{} outside [1, 60]", self.per_minute),
            });
        }
        if self.shift_features > FLOW_FEATURES {
            return Err(Error::InvalidArgument {
                what: "shift_features",
                details: format!("{} exceeds {FLOW_FEATURES}", self.shift_features),
            });
        }
        self.env.validate()
    }
}

/// Baseline mean of feature `j`; a fixed, seed-independent profile.
fn base_mean(j: usize) -> f64 {
    10.0 + 3.0 * (j % 7) as f64 + (j as f64 * 0.61).sin()
}

/// Baseline standard deviation of feature `j`.
fn base_std(j: usize) -> f64 {
    1.0 + 0.5 * (j % 5) as f64
}

/// Feature indices most affected by each attack class, in priority order.
/// Flood attacks hit rate and inter-arrival statistics; scans hit flag
/// counts and packet-size minima.
fn signature_features(kind: AttackKind) -> &'static [usize] {
    match kind {
        AttackKind::Dos => &[13, 14, 1, 3, 15, 35, 19, 46],
        AttackKind::Ddos => &[14, 13, 2, 4, 36, 16, 24, 43],
        AttackKind::PortScan => &[43, 37, 1, 14, 42, 6, 38, 50],
        AttackKind::None => &[],
    }
}

fn normal_dst_port(rng: &mut RngState) -> u16 {
    const COMMON: [u16; 4] = [80, 443, 53, 1883];
    COMMON[rng.below(COMMON.len())]
}

/// Generates `cfg.records` flow records at `cfg.per_minute` per minute,
/// with whole minutes flipped abnormal at `cfg.attack_fraction`, then fills
/// the environment channels consistent with each record's label.
pub fn generate_records(cfg: &SynthConfig, rng: &mut RngState) -> Result<Vec<FlowRecord>> {
    cfg.validate()?;
    let minutes = cfg.records.div_ceil(cfg.per_minute);
    let mut minute_rng = rng.derive("synth-minutes");
    let attacked: Vec<bool> = (0..minutes)
        .map(|_| cfg.attack != AttackKind::None && minute_rng.uniform() < cfg.attack_fraction)
        .collect();

    let signature: Vec<usize> =
        signature_features(cfg.attack).iter().copied().take(cfg.shift_features).collect();
    let mut feat_rng = rng.derive("synth-features");
    let mut net_rng = rng.derive("synth-network");

    let second_stride = 60 / cfg.per_minute;
    let mut records = Vec::with_capacity(cfg.records);
    for r in 0..cfg.records {
        let minute = r / cfg.per_minute;
        let offset = (r % cfg.per_minute) * second_stride;
        let timestamp = (cfg.start_timestamp + (minute * 60 + offset) as i64) as f64;
        let abnormal = attacked[minute];

        let mut features: Vec<f64> = (0..FLOW_FEATURES)
            .map(|j| base_mean(j) + base_std(j) * feat_rng.normal())
            .collect();
        if abnormal {
            for &j in &signature {
                features[j] += cfg.shift_magnitude * base_std(j);
            }
        }

        let (src_ip, dst_ip, src_port, dst_port, protocol) = if abnormal {
            match cfg.attack {
                AttackKind::Ddos => (
                    // Many spoofed sources flooding one victim.
                    format!("172.16.{}.{}", net_rng.below(256), 1 + net_rng.below(254)),
                    "192.168.0.2".to_string(),
                    (1024 + net_rng.below(64_000)) as u16,
                    80,
                    "TCP".to_string(),
                ),
                AttackKind::PortScan => (
                    "10.0.1.9".to_string(),
                    "192.168.0.3".to_string(),
                    (1024 + net_rng.below(64_000)) as u16,
                    (1 + net_rng.below(65_535)) as u16,
                    "TCP".to_string(),
                ),
                _ => (
                    "10.0.1.7".to_string(),
                    "192.168.0.2".to_string(),
                    (1024 + net_rng.below(64_000)) as u16,
                    80,
                    "TCP".to_string(),
                ),
            }
        } else {
            let proto = match net_rng.below(20) {
                0 => "ICMP",
                n if n < 6 => "UDP",
                _ => "TCP",
            };
            (
                format!("10.0.1.{}", 1 + net_rng.below(8)),
                format!("192.168.0.{}", 1 + net_rng.below(4)),
                (1024 + net_rng.below(64_000)) as u16,
                normal_dst_port(&mut net_rng),
                proto.to_string(),
            )
        };

        records.push(FlowRecord {
            timestamp,
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            protocol,
            features,
            environment: Vec::new(),
            abnormal,
            attack: if abnormal { cfg.attack } else { AttackKind::None },
        });
    }
    augment_environment(&mut records, &cfg.env, &mut rng.derive("synth-env"))?;
    Ok(records)
}

/// Writes records in the synthetic CSV schema (the one `SchemaMode::Synthetic`
/// parses back). Output is byte-deterministic for a given record list.
pub fn write_synthetic_csv(records: &[FlowRecord], env: &EnvGeneratorConfig, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("timestamp,src_ip,dst_ip,src_port,dst_port,protocol,label,attack");
    for i in 0..FLOW_FEATURES {
        out.push_str(&format!(",f{i:02}"));
    }
    for c in &env.channels {
        out.push(',');
        out.push_str(&c.name);
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            r.timestamp,
            r.src_ip,
            r.dst_ip,
            r.src_port,
            r.dst_port,
            r.protocol,
            if r.abnormal { "abnormal" } else { "normal" },
            r.attack.tag(),
        ));
        for v in &r.features {
            out.push_str(&format!(",{v}"));
        }
        for v in &r.environment {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    crate::ioutil::write_atomic(path, out.as_bytes())
}
