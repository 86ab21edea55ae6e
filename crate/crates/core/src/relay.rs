//! Simulated SDN controller and hash-chained ledger: packets are classified
//! by a pluggable detector, smart-contract rules turn each verdict into
//! ledger entries, a single in-process miner packages entries into blocks,
//! and only clean traffic reaches the edge nodes.

use crate::error::{Error, Result};
use crate::ioutil::write_atomic;
use crate::models::Model;
use crate::preprocess::{
    fit_standardizer, generate_records, AttackKind, EnvGeneratorConfig, SynthConfig,
    ENCODED_DIM, FLOW_FEATURES, WINDOW_LEN,
};
use crate::RngState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

pub const QUARANTINE_NODE: &str = "quarantine";

/// One UAV transmission: a window of encoded telemetry plus routing intent.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub uav_id: String,
    pub sequence: u64,
    pub rows: usize,
    pub cols: usize,
    pub window: Vec<f64>,
    /// Data category, selects the target edge node.
    pub declared_kind: String,
    /// Simulation-only ground truth.
    pub ground_truth: Option<bool>,
}

impl Packet {
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.uav_id.as_bytes());
        h.update(self.sequence.to_le_bytes());
        h.update((self.rows as u64).to_le_bytes());
        h.update((self.cols as u64).to_le_bytes());
        for v in &self.window {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictLabel {
    Normal,
    Abnormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub verdict_id: u64,
    pub uav_id: String,
    pub sequence: u64,
    pub label: VerdictLabel,
    pub score: f64,
    /// Logical timestamp (event counter), not wall time.
    pub decided_at: u64,
}

/// Smart-contract actions. Normal traffic updates identity and flight logs
/// and records environmental data; abnormal traffic updates identity and
/// abnormal flight logs and prohibits transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractAction {
    IdentityUpdate,
    FlightLogUpdate,
    AbnormalFlightLogUpdate,
    EnvironmentRecord,
    TransmissionProhibited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractLogEntry {
    pub uav_id: String,
    pub action: ContractAction,
    pub verdict_id: u64,
}

/// Items awaiting mining: contract entries, plus the payload digest of each
/// packet that passed detection (abnormal payloads are never stored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "item")]
pub enum LedgerItem {
    Contract(ContractLogEntry),
    PacketDigest { uav_id: String, sequence: u64, digest_hex: String },
}

impl LedgerItem {
    /// Canonical length-prefixed serialization fed to the block hash.
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut push_str = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u64).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        match self {
            LedgerItem::Contract(e) => {
                out.push(0u8);
                push_str(&mut out, &e.uav_id);
                out.push(match e.action {
                    ContractAction::IdentityUpdate => 0,
                    ContractAction::FlightLogUpdate => 1,
                    ContractAction::AbnormalFlightLogUpdate => 2,
                    ContractAction::EnvironmentRecord => 3,
                    ContractAction::TransmissionProhibited => 4,
                });
                out.extend_from_slice(&e.verdict_id.to_le_bytes());
            }
            LedgerItem::PacketDigest { uav_id, sequence, digest_hex } => {
                out.push(1u8);
                push_str(&mut out, uav_id);
                out.extend_from_slice(&sequence.to_le_bytes());
                push_str(&mut out, digest_hex);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerBlock {
    pub index: u64,
    pub prev_hash_hex: String,
    pub items: Vec<LedgerItem>,
    pub block_hash_hex: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn block_hash(index: u64, prev_hash_hex: &str, items: &[LedgerItem]) -> String {
    let mut h = Sha256::new();
    h.update(index.to_le_bytes());
    h.update(prev_hash_hex.as_bytes());
    h.update((items.len() as u64).to_le_bytes());
    for item in items {
        let bytes = item.canonical_bytes();
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    hex(&h.finalize())
}

/// Append-only chain; block 0 links to the all-zero genesis hash.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    pub blocks: Vec<LedgerBlock>,
}

pub const GENESIS_PREV_HASH: &str =
    "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub valid: bool,
    pub blocks: usize,
    pub first_violation: Option<usize>,
}

impl Ledger {
    /// Packages up to `max_per_block` pending items in arrival order into a
    /// new block. Returns None when nothing is pending.
    pub fn mine_block(
        &mut self,
        pending: &mut VecDeque<LedgerItem>,
        max_per_block: usize,
    ) -> Result<Option<&LedgerBlock>> {
        if max_per_block == 0 {
            return Err(Error::InvalidArgument {
                what: "block capacity",
                details: "must be at least 1".into(),
            });
        }
        if pending.is_empty() {
            return Ok(None);
        }
        let take = max_per_block.min(pending.len());
        let items: Vec<LedgerItem> = pending.drain(..take).collect();
        let index = self.blocks.len() as u64;
        let prev_hash_hex = match self.blocks.last() {
            Some(b) => b.block_hash_hex.clone(),
            None => GENESIS_PREV_HASH.to_string(),
        };
        let block_hash_hex = block_hash(index, &prev_hash_hex, &items);
        self.blocks.push(LedgerBlock { index, prev_hash_hex, items, block_hash_hex });
        Ok(self.blocks.last())
    }

    /// Recomputes every block hash and link; reports the first violation.
    pub fn verify_chain(&self) -> ChainReport {
        let mut prev = GENESIS_PREV_HASH.to_string();
        for (i, block) in self.blocks.iter().enumerate() {
            let recomputed = block_hash(block.index, &block.prev_hash_hex, &block.items);
            if block.index != i as u64
                || block.prev_hash_hex != prev
                || block.block_hash_hex != recomputed
            {
                return ChainReport {
                    valid: false,
                    blocks: self.blocks.len(),
                    first_violation: Some(i),
                };
            }
            prev = block.block_hash_hex.clone();
        }
        ChainReport { valid: true, blocks: self.blocks.len(), first_violation: None }
    }

    pub fn contract_entries(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| &b.items)
            .filter(|i| matches!(i, LedgerItem::Contract(_)))
            .count()
    }

    /// Newline-delimited canonical block records for external audit.
    pub fn export(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for block in &self.blocks {
            out.push_str(
                &serde_json::to_string(block).map_err(|e| Error::Container(e.to_string()))?,
            );
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }
}

/// Scores one packet; models and test stubs both fit behind this.
pub trait Detector {
    fn score(&mut self, packet: &Packet) -> Result<f64>;
    fn kind(&self) -> &'static str;
}

impl Detector for Model {
    fn score(&mut self, packet: &Packet) -> Result<f64> {
        self.score_window(&packet.window, packet.rows, packet.cols)
    }

    fn kind(&self) -> &'static str {
        "model"
    }
}

/// Simulation-only oracle that reads the packet's ground truth.
pub struct PerfectStubDetector;

impl Detector for PerfectStubDetector {
    fn score(&mut self, packet: &Packet) -> Result<f64> {
        match packet.ground_truth {
            Some(true) => Ok(0.99),
            Some(false) => Ok(0.01),
            None => Err(Error::Configuration(
                "stub detector needs ground-truth labels".into(),
            )),
        }
    }

    fn kind(&self) -> &'static str {
        "stub_perfect"
    }
}

/// Fixed-score stub for threshold tests.
pub struct ConstantDetector(pub f64);

impl Detector for ConstantDetector {
    fn score(&mut self, _packet: &Packet) -> Result<f64> {
        Ok(self.0)
    }

    fn kind(&self) -> &'static str {
        "constant"
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerStats {
    pub submitted: usize,
    pub rejected: usize,
    pub delivered: usize,
    pub dropped: usize,
    pub quarantined: usize,
}

/// One edge node: a sink that keeps everything delivered to it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeNode {
    pub received: Vec<Packet>,
}

enum VerdictState {
    Decided,
    Executed,
    Forwarded,
}

/// The simulated controller: detector, smart contracts, routing, and the
/// pending-ledger queue. Packets are processed in submission order.
pub struct Controller {
    detector: Box<dyn Detector>,
    threshold: f64,
    clock: u64,
    next_verdict_id: u64,
    last_sequence: HashMap<String, u64>,
    verdicts: Vec<Verdict>,
    states: HashMap<u64, VerdictState>,
    packets: HashMap<u64, Packet>,
    pub pending: VecDeque<LedgerItem>,
    pub edges: BTreeMap<String, EdgeNode>,
    pub stats: ControllerStats,
}

impl Controller {
    pub fn new(detector: Box<dyn Detector>, threshold: f64, kinds: &[String]) -> Controller {
        let mut edges = BTreeMap::new();
        for kind in kinds {
            edges.insert(kind.clone(), EdgeNode::default());
        }
        edges.insert(QUARANTINE_NODE.to_string(), EdgeNode::default());
        Controller {
            detector,
            threshold,
            clock: 0,
            next_verdict_id: 0,
            last_sequence: HashMap::new(),
            verdicts: Vec::new(),
            states: HashMap::new(),
            packets: HashMap::new(),
            pending: VecDeque::new(),
            edges,
            stats: ControllerStats::default(),
        }
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    /// Classifies one packet. Malformed windows and stale sequence numbers
    /// are protocol rejections: counted, never fatal to the run.
    pub fn submit(&mut self, packet: Packet) -> Result<Verdict> {
        self.stats.submitted += 1;
        if packet.window.len() != packet.rows * packet.cols {
            self.stats.rejected += 1;
            return Err(Error::Protocol(format!(
                "window of {} values does not match declared {}x{}",
                packet.window.len(),
                packet.rows,
                packet.cols
            )));
        }
        if let Some(&last) = self.last_sequence.get(&packet.uav_id) {
            if packet.sequence <= last {
                self.stats.rejected += 1;
                return Err(Error::Protocol(format!(
                    "out-of-order sequence {} after {} from {}",
                    packet.sequence, last, packet.uav_id
                )));
            }
        }
        let score = match self.detector.score(&packet) {
            Ok(s) => s,
            Err(e) => {
                self.stats.rejected += 1;
                return Err(Error::Protocol(format!("detector rejected packet: {e}")));
            }
        };
        self.last_sequence.insert(packet.uav_id.clone(), packet.sequence);
        self.clock += 1;
        let verdict = Verdict {
            verdict_id: self.next_verdict_id,
            uav_id: packet.uav_id.clone(),
            sequence: packet.sequence,
            label: if score >= self.threshold {
                VerdictLabel::Abnormal
            } else {
                VerdictLabel::Normal
            },
            score,
            decided_at: self.clock,
        };
        self.next_verdict_id += 1;
        self.states.insert(verdict.verdict_id, VerdictState::Decided);
        self.packets.insert(verdict.verdict_id, packet);
        self.verdicts.push(verdict.clone());
        Ok(verdict)
    }

    /// Runs the smart contract for one verdict and queues its ledger items.
    /// Idempotent: a second execution yields no new entries.
    pub fn execute_contract(&mut self, verdict_id: u64) -> Result<Vec<ContractLogEntry>> {
        let verdict = self
            .verdicts
            .iter()
            .find(|v| v.verdict_id == verdict_id)
            .cloned()
            .ok_or_else(|| Error::Protocol(format!("unknown verdict {verdict_id}")))?;
        match self.states.get(&verdict_id) {
            Some(VerdictState::Decided) => {}
            Some(_) => {
                log::warn!("contract for verdict {verdict_id} already executed");
                return Ok(Vec::new());
            }
            None => return Err(Error::Protocol(format!("unknown verdict {verdict_id}"))),
        }
        let actions = match verdict.label {
            VerdictLabel::Normal => [
                ContractAction::IdentityUpdate,
                ContractAction::FlightLogUpdate,
                ContractAction::EnvironmentRecord,
            ],
            VerdictLabel::Abnormal => [
                ContractAction::IdentityUpdate,
                ContractAction::AbnormalFlightLogUpdate,
                ContractAction::TransmissionProhibited,
            ],
        };
        let entries: Vec<ContractLogEntry> = actions
            .iter()
            .map(|&action| ContractLogEntry {
                uav_id: verdict.uav_id.clone(),
                action,
                verdict_id,
            })
            .collect();
        for e in &entries {
            self.pending.push_back(LedgerItem::Contract(e.clone()));
        }
        if verdict.label == VerdictLabel::Normal {
            // Passed packets get their payload digest chained; prohibited
            // payloads are never stored.
            let packet = self.packets.get(&verdict_id).expect("packet retained");
            self.pending.push_back(LedgerItem::PacketDigest {
                uav_id: packet.uav_id.clone(),
                sequence: packet.sequence,
                digest_hex: hex(&packet.digest()),
            });
        }
        self.states.insert(verdict_id, VerdictState::Executed);
        Ok(entries)
    }

    /// Routes a contracted packet: normal traffic goes to the edge node for
    /// its declared kind (quarantine for unknown kinds), abnormal traffic is
    /// dropped.
    pub fn forward(&mut self, verdict_id: u64) -> Result<Option<String>> {
        let verdict = self
            .verdicts
            .iter()
            .find(|v| v.verdict_id == verdict_id)
            .cloned()
            .ok_or_else(|| Error::Protocol(format!("unknown verdict {verdict_id}")))?;
        match self.states.get(&verdict_id) {
            Some(VerdictState::Executed) => {}
            Some(VerdictState::Decided) => {
                return Err(Error::Protocol(format!(
                    "verdict {verdict_id} forwarded before contract execution"
                )))
            }
            Some(VerdictState::Forwarded) => {
                return Err(Error::Protocol(format!("verdict {verdict_id} already forwarded")))
            }
            None => return Err(Error::Protocol(format!("unknown verdict {verdict_id}"))),
        }
        self.states.insert(verdict_id, VerdictState::Forwarded);
        if verdict.label == VerdictLabel::Abnormal {
            self.stats.dropped += 1;
            self.packets.remove(&verdict_id);
            return Ok(None);
        }
        let packet = self.packets.remove(&verdict_id).expect("packet retained");
        let node = if self.edges.contains_key(&packet.declared_kind) {
            packet.declared_kind.clone()
        } else {
            log::warn!(
                "unknown data kind {:?}, routing to quarantine",
                packet.declared_kind
            );
            self.stats.quarantined += 1;
            QUARANTINE_NODE.to_string()
        };
        self.stats.delivered += 1;
        self.edges.get_mut(&node).expect("node exists").received.push(packet);
        Ok(Some(node))
    }
}

/// Scenario description, deserialized from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub uav_count: usize,
    pub packets_per_uav: usize,
    /// Attack classes injected, drawn uniformly per attacked packet.
    pub attack_mix: Vec<AttackKind>,
    /// Per-packet probability that a window is attack traffic.
    pub attack_probability: f64,
    #[serde(default = "default_block_capacity")]
    pub block_capacity: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// "stub_perfect" or "checkpoint"; checkpoints come from the caller.
    #[serde(default = "default_detector")]
    pub detector: String,
    #[serde(default = "default_kinds")]
    pub data_kinds: Vec<String>,
}

fn default_block_capacity() -> usize {
    16
}

fn default_threshold() -> f64 {
    0.5
}

fn default_detector() -> String {
    "stub_perfect".into()
}

fn default_kinds() -> Vec<String> {
    vec!["pressure".into(), "humidity".into(), "acceleration".into(), "imagery".into()]
}

/// Per-attack confusion tallied against ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub packets: usize,
    pub detected: usize,
    pub missed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub detector: String,
    pub stats: ControllerStats,
    pub verdict_count: usize,
    pub contract_entries: usize,
    pub false_positives: usize,
    pub per_attack: BTreeMap<String, AttackOutcome>,
    pub chain: ChainReport,
    pub safety_violations: usize,
}

/// End-to-end run: generate packets, submit, execute contracts, forward,
/// mine until drained, and verify the chain. Deterministic under `seed`.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    detector: Option<Box<dyn Detector>>,
    seed: u64,
) -> Result<(ScenarioReport, Ledger)> {
    if !(0.0..=1.0).contains(&cfg.attack_probability) {
        return Err(Error::Configuration(format!(
            "attack probability {} outside [0, 1]",
            cfg.attack_probability
        )));
    }
    if cfg.attack_mix.is_empty() && cfg.attack_probability > 0.0 {
        return Err(Error::Configuration("attack mix is empty".into()));
    }
    if cfg.data_kinds.is_empty() {
        return Err(Error::Configuration("scenario needs at least one data kind".into()));
    }
    let detector: Box<dyn Detector> = match (cfg.detector.as_str(), detector) {
        ("stub_perfect", _) => Box::new(PerfectStubDetector),
        ("checkpoint", Some(d)) => d,
        ("checkpoint", None) => {
            return Err(Error::Configuration(
                "scenario wants a checkpoint detector but none was supplied".into(),
            ))
        }
        (other, _) => {
            return Err(Error::Configuration(format!("unknown detector kind {other:?}")))
        }
    };

    let root = RngState::new(seed);
    let mut controller = Controller::new(detector, cfg.threshold, &cfg.data_kinds);
    let mut ledger = Ledger::default();

    // Frozen schema fitted once on a clean calibration batch, then reused
    // for every packet window.
    let calib_cfg = SynthConfig {
        records: 600,
        attack: AttackKind::Dos,
        attack_fraction: 0.0,
        ..SynthConfig::default()
    };
    let calib = generate_records(&calib_cfg, &mut root.derive("calibration"))?;
    let feature_names: Vec<String> = (0..FLOW_FEATURES).map(|i| format!("f{i:02}")).collect();
    let env_names = EnvGeneratorConfig::default().channel_names();
    let schema = fit_standardizer(&calib, &feature_names, &env_names)?;

    let mut pkt_rng = root.derive("packets");
    let mut per_attack: BTreeMap<String, AttackOutcome> = BTreeMap::new();
    let mut false_positives = 0usize;
    let mut safety_violations = 0usize;

    for uav in 0..cfg.uav_count {
        let uav_id = format!("uav-{uav:03}");
        for sequence in 0..cfg.packets_per_uav {
            let attacked = pkt_rng.uniform() < cfg.attack_probability;
            let attack = if attacked {
                cfg.attack_mix[pkt_rng.below(cfg.attack_mix.len())]
            } else {
                AttackKind::None
            };
            let window_cfg = SynthConfig {
                records: WINDOW_LEN,
                attack: if attacked { attack } else { AttackKind::Dos },
                attack_fraction: if attacked { 1.0 } else { 0.0 },
                ..SynthConfig::default()
            };
            // Each packet gets its own labeled stream so windows differ.
            let mut window_rng = root.derive(&format!("window/{uav}/{sequence}"));
            let records = generate_records(&window_cfg, &mut window_rng)?;
            let mut window = Vec::with_capacity(WINDOW_LEN * ENCODED_DIM);
            for r in &records {
                window.extend(schema.encode(r)?);
            }

            let packet = Packet {
                uav_id: uav_id.clone(),
                sequence: sequence as u64,
                rows: WINDOW_LEN,
                cols: ENCODED_DIM,
                window,
                declared_kind: cfg.data_kinds[pkt_rng.below(cfg.data_kinds.len())].clone(),
                ground_truth: Some(attacked),
            };
            let verdict = match controller.submit(packet) {
                Ok(v) => v,
                Err(_) => continue,
            };
            controller.execute_contract(verdict.verdict_id)?;
            let delivered_to = controller.forward(verdict.verdict_id)?;

            let outcome = per_attack.entry(attack.tag().to_string()).or_default();
            outcome.packets += 1;
            let flagged = verdict.label == VerdictLabel::Abnormal;
            if attacked {
                if flagged {
                    outcome.detected += 1;
                } else {
                    outcome.missed += 1;
                }
            } else if flagged {
                false_positives += 1;
            }
            if flagged && delivered_to.as_deref().is_some_and(|n| n != QUARANTINE_NODE) {
                safety_violations += 1;
            }
            if controller.pending.len() >= cfg.block_capacity {
                ledger.mine_block(&mut controller.pending, cfg.block_capacity)?;
            }
        }
    }
    // Drain the queue.
    while !controller.pending.is_empty() {
        ledger.mine_block(&mut controller.pending, cfg.block_capacity)?;
    }

    let report = ScenarioReport {
        detector: controller.detector.kind().to_string(),
        stats: controller.stats.clone(),
        verdict_count: controller.verdicts().len(),
        contract_entries: ledger.contract_entries(),
        false_positives,
        per_attack,
        chain: ledger.verify_chain(),
        safety_violations,
    };
    Ok((report, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(uav: &str, sequence: u64, truth: bool) -> Packet {
        Packet {
            uav_id: uav.into(),
            sequence,
            rows: 2,
            cols: 3,
            window: vec![0.5; 6],
            declared_kind: "humidity".into(),
            ground_truth: Some(truth),
        }
    }

    fn controller_with(score: f64) -> Controller {
        Controller::new(
            Box::new(ConstantDetector(score)),
            0.5,
            &["humidity".to_string(), "pressure".to_string()],
        )
    }

    #[test]
    fn high_score_is_abnormal_low_is_normal() {
        let mut c = controller_with(0.99);
        let v = c.submit(packet("uav-1", 0, true)).unwrap();
        assert_eq!(v.label, VerdictLabel::Abnormal);

        let mut c = controller_with(0.01);
        let v = c.submit(packet("uav-1", 0, false)).unwrap();
        assert_eq!(v.label, VerdictLabel::Normal);
    }

    #[test]
    fn out_of_order_sequence_is_rejected() {
        let mut c = controller_with(0.2);
        c.submit(packet("uav-1", 5, false)).unwrap();
        let err = c.submit(packet("uav-1", 5, false)).unwrap_err();
        assert_eq!(err.category(), "protocol");
        let err = c.submit(packet("uav-1", 4, false)).unwrap_err();
        assert_eq!(err.category(), "protocol");
        assert_eq!(c.stats.rejected, 2);
        // Another UAV has its own sequence space.
        c.submit(packet("uav-2", 0, false)).unwrap();
    }

    #[test]
    fn malformed_window_is_rejected_not_fatal() {
        let mut c = controller_with(0.2);
        let mut p = packet("uav-1", 0, false);
        p.window.pop();
        assert_eq!(c.submit(p).unwrap_err().category(), "protocol");
        assert_eq!(c.stats.rejected, 1);
        c.submit(packet("uav-1", 1, false)).unwrap();
    }

    #[test]
    fn contracts_emit_the_mandated_entry_sets() {
        let mut c = controller_with(0.01);
        let v = c.submit(packet("uav-1", 0, false)).unwrap();
        let entries = c.execute_contract(v.verdict_id).unwrap();
        let actions: Vec<ContractAction> = entries.iter().map(|e| e.action).collect();
        assert_eq!(
            actions,
            vec![
                ContractAction::IdentityUpdate,
                ContractAction::FlightLogUpdate,
                ContractAction::EnvironmentRecord
            ]
        );

        let mut c = controller_with(0.99);
        let v = c.submit(packet("uav-1", 0, true)).unwrap();
        let entries = c.execute_contract(v.verdict_id).unwrap();
        let actions: Vec<ContractAction> = entries.iter().map(|e| e.action).collect();
        assert_eq!(
            actions,
            vec![
                ContractAction::IdentityUpdate,
                ContractAction::AbnormalFlightLogUpdate,
                ContractAction::TransmissionProhibited
            ]
        );
    }

    #[test]
    fn contract_execution_is_idempotent() {
        let mut c = controller_with(0.01);
        let v = c.submit(packet("uav-1", 0, false)).unwrap();
        let first = c.execute_contract(v.verdict_id).unwrap();
        assert_eq!(first.len(), 3);
        let queued = c.pending.len();
        let again = c.execute_contract(v.verdict_id).unwrap();
        assert!(again.is_empty());
        assert_eq!(c.pending.len(), queued);
    }

    #[test]
    fn forwarding_rules() {
        // Normal: delivered to the node for its kind.
        let mut c = controller_with(0.01);
        let v = c.submit(packet("uav-1", 0, false)).unwrap();
        c.execute_contract(v.verdict_id).unwrap();
        let node = c.forward(v.verdict_id).unwrap();
        assert_eq!(node.as_deref(), Some("humidity"));
        assert_eq!(c.edges["humidity"].received.len(), 1);
        assert_eq!(c.stats.delivered, 1);

        // Abnormal: dropped, delivered nowhere.
        let mut c = controller_with(0.99);
        let v = c.submit(packet("uav-1", 0, true)).unwrap();
        c.execute_contract(v.verdict_id).unwrap();
        assert_eq!(c.forward(v.verdict_id).unwrap(), None);
        assert_eq!(c.stats.dropped, 1);
        assert!(c.edges.values().all(|e| e.received.is_empty()));

        // Unknown kind: quarantined.
        let mut c = controller_with(0.01);
        let mut p = packet("uav-1", 0, false);
        p.declared_kind = "mystery".into();
        let v = c.submit(p).unwrap();
        c.execute_contract(v.verdict_id).unwrap();
        assert_eq!(c.forward(v.verdict_id).unwrap().as_deref(), Some(QUARANTINE_NODE));
        assert_eq!(c.stats.quarantined, 1);
    }

    #[test]
    fn forward_requires_contract_first() {
        let mut c = controller_with(0.01);
        let v = c.submit(packet("uav-1", 0, false)).unwrap();
        assert_eq!(c.forward(v.verdict_id).unwrap_err().category(), "protocol");
    }

    #[test]
    fn delivered_payload_is_untouched() {
        let mut c = controller_with(0.01);
        let original = packet("uav-1", 0, false);
        let v = c.submit(original.clone()).unwrap();
        c.execute_contract(v.verdict_id).unwrap();
        c.forward(v.verdict_id).unwrap();
        let delivered = &c.edges["humidity"].received[0];
        assert_eq!(delivered.window, original.window);
        for (a, b) in delivered.window.iter().zip(&original.window) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    fn entry(i: u64) -> LedgerItem {
        LedgerItem::Contract(ContractLogEntry {
            uav_id: format!("uav-{i}"),
            action: ContractAction::IdentityUpdate,
            verdict_id: i,
        })
    }

    #[test]
    fn genesis_block_links_to_zero_hash() {
        let mut ledger = Ledger::default();
        let mut pending: VecDeque<LedgerItem> = (0..2).map(entry).collect();
        let block = ledger.mine_block(&mut pending, 16).unwrap().unwrap();
        assert_eq!(block.index, 0);
        assert_eq!(block.prev_hash_hex, GENESIS_PREV_HASH);
    }

    #[test]
    fn five_entries_capacity_three_makes_blocks_of_three_and_two() {
        let mut ledger = Ledger::default();
        let mut pending: VecDeque<LedgerItem> = (0..5).map(entry).collect();
        let first = ledger.mine_block(&mut pending, 3).unwrap().unwrap().items.len();
        assert_eq!(first, 3);
        let second = ledger.mine_block(&mut pending, 3).unwrap().unwrap().items.len();
        assert_eq!(second, 2);
        assert!(pending.is_empty());
        assert!(ledger.mine_block(&mut pending, 3).unwrap().is_none());
    }

    #[test]
    fn identical_entry_sequences_make_identical_chains() {
        let build = || {
            let mut ledger = Ledger::default();
            let mut pending: VecDeque<LedgerItem> = (0..7).map(entry).collect();
            while !pending.is_empty() {
                ledger.mine_block(&mut pending, 3).unwrap();
            }
            ledger
        };
        let a = build();
        let b = build();
        assert_eq!(a, b);
        assert_eq!(
            a.blocks.last().unwrap().block_hash_hex,
            b.blocks.last().unwrap().block_hash_hex
        );
    }

    #[test]
    fn verify_chain_detects_tampering_and_accepts_truncation() {
        let mut ledger = Ledger::default();
        let mut pending: VecDeque<LedgerItem> = (0..9).map(entry).collect();
        while !pending.is_empty() {
            ledger.mine_block(&mut pending, 3).unwrap();
        }
        assert!(ledger.verify_chain().valid);

        // Single-field tamper in block 1 is caught at index 1.
        let mut tampered = ledger.clone();
        if let LedgerItem::Contract(e) = &mut tampered.blocks[1].items[0] {
            e.uav_id = "uav-X".into();
        }
        let report = tampered.verify_chain();
        assert!(!report.valid);
        assert_eq!(report.first_violation, Some(1));

        // Dropping the tail block keeps a valid prefix.
        let mut truncated = ledger.clone();
        truncated.blocks.pop();
        assert!(truncated.verify_chain().valid);
    }

    #[test]
    fn scenario_attack_probability_zero_delivers_everything() {
        let cfg = ScenarioConfig {
            uav_count: 2,
            packets_per_uav: 5,
            attack_mix: vec![AttackKind::Dos],
            attack_probability: 0.0,
            block_capacity: 4,
            threshold: 0.5,
            detector: "stub_perfect".into(),
            data_kinds: default_kinds(),
        };
        let (report, ledger) = run_scenario(&cfg, None, 1).unwrap();
        assert_eq!(report.stats.delivered, 10);
        assert_eq!(report.stats.dropped, 0);
        assert_eq!(report.safety_violations, 0);
        assert!(report.chain.valid);
        assert_eq!(report.contract_entries, 3 * report.verdict_count);
        assert!(ledger.verify_chain().valid);
    }

    #[test]
    fn scenario_attack_probability_one_delivers_nothing() {
        let cfg = ScenarioConfig {
            uav_count: 2,
            packets_per_uav: 5,
            attack_mix: vec![AttackKind::Ddos, AttackKind::PortScan],
            attack_probability: 1.0,
            block_capacity: 4,
            threshold: 0.5,
            detector: "stub_perfect".into(),
            data_kinds: default_kinds(),
        };
        let (report, _) = run_scenario(&cfg, None, 2).unwrap();
        assert_eq!(report.stats.delivered, 0);
        assert_eq!(report.stats.dropped, 10);
        assert_eq!(report.safety_violations, 0);
    }

    #[test]
    fn scenario_is_deterministic_under_seed() {
        let cfg = ScenarioConfig {
            uav_count: 2,
            packets_per_uav: 4,
            attack_mix: vec![AttackKind::Dos],
            attack_probability: 0.4,
            block_capacity: 8,
            threshold: 0.5,
            detector: "stub_perfect".into(),
            data_kinds: default_kinds(),
        };
        let (r1, l1) = run_scenario(&cfg, None, 7).unwrap();
        let (r2, l2) = run_scenario(&cfg, None, 7).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn missing_checkpoint_detector_is_a_configuration_error() {
        let cfg = ScenarioConfig {
            uav_count: 1,
            packets_per_uav: 1,
            attack_mix: vec![AttackKind::Dos],
            attack_probability: 0.0,
            block_capacity: 4,
            threshold: 0.5,
            detector: "checkpoint".into(),
            data_kinds: default_kinds(),
        };
        assert_eq!(run_scenario(&cfg, None, 0).unwrap_err().category(), "configuration");
    }
}
