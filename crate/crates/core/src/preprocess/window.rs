//! Minute binning, window sampling, window labeling, and the on-disk
//! windowed-dataset container.

use crate::error::{Error, Result};
use crate::ioutil::write_atomic;
use crate::preprocess::{
    augment_environment, fit_standardizer, parse_csv, EnvGeneratorConfig, FeatureSchema,
    FlowRecord, SchemaMode, CICIDS_FEATURE_COLUMNS, ENCODED_DIM, FLOW_FEATURES,
};
use crate::RngState;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

/// Records per window and the bin length in seconds.
pub const WINDOW_LEN: usize = 60;
const BIN_SECONDS: f64 = 60.0;
const DATASET_MAGIC: &[u8; 8] = b"CTWDAT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub seed: u64,
}

/// Ordered labeled windows plus the frozen schema that encoded them.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub rows: usize,
    pub cols: usize,
    /// n · rows · cols floats, window-major.
    pub data: Vec<f64>,
    pub labels: Vec<u8>,
    pub schema: FeatureSchema,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembleStats {
    pub bins: usize,
    pub dropped_bins: usize,
    pub windows: usize,
}

/// Sidecar counts for one preprocessing run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub parsed: usize,
    pub skipped: usize,
    pub bins: usize,
    pub dropped_bins: usize,
    pub windows: usize,
    pub abnormal_windows: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window(&self, i: usize) -> &[f64] {
        let stride = self.rows * self.cols;
        &self.data[i * stride..(i + 1) * stride]
    }

    /// New dataset holding only the given window indices, same schema.
    pub fn subset(&self, indices: &[usize]) -> WindowedDataset {
        let stride = self.rows * self.cols;
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.window(i));
            labels.push(self.labels[i]);
        }
        WindowedDataset {
            rows: self.rows,
            cols: self.cols,
            data,
            labels,
            schema: self.schema.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Container layout: magic, u64 header length, header JSON (schema +
    /// provenance), u64 n/rows/cols, f64-LE window data, label bytes.
    /// The float round-trip is bit-exact.
    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            schema: &'a FeatureSchema,
            provenance: &'a Provenance,
        }
        let header = serde_json::to_vec(&Header { schema: &self.schema, provenance: &self.provenance })
            .map_err(|e| Error::Container(e.to_string()))?;
        let mut buf = Vec::with_capacity(
            DATASET_MAGIC.len() + 32 + header.len() + self.data.len() * 8 + self.labels.len(),
        );
        buf.extend_from_slice(DATASET_MAGIC);
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.rows as u64).to_le_bytes());
        buf.extend_from_slice(&(self.cols as u64).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.labels);
        write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<WindowedDataset> {
        #[derive(Deserialize)]
        struct Header {
            schema: FeatureSchema,
            provenance: Provenance,
        }
        let mut file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let mut off = 0usize;
        let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
            if *off + n > buf.len() {
                return Err(Error::Container("truncated dataset container".into()));
            }
            let s = &buf[*off..*off + n];
            *off += n;
            Ok(s)
        };
        if take(&mut off, DATASET_MAGIC.len())? != DATASET_MAGIC {
            return Err(Error::Container("bad dataset magic".into()));
        }
        let u64_at = |off: &mut usize| -> Result<u64> {
            Ok(u64::from_le_bytes(take(off, 8)?.try_into().expect("8 bytes")))
        };
        let header_len = u64_at(&mut off)? as usize;
        let header: Header = serde_json::from_slice(take(&mut off, header_len)?)
            .map_err(|e| Error::Container(format!("bad dataset header: {e}")))?;
        let n = u64_at(&mut off)? as usize;
        let rows = u64_at(&mut off)? as usize;
        let cols = u64_at(&mut off)? as usize;
        let mut data = Vec::with_capacity(n * rows * cols);
        for _ in 0..n * rows * cols {
            data.push(f64::from_le_bytes(take(&mut off, 8)?.try_into().expect("8 bytes")));
        }
        let labels = take(&mut off, n)?.to_vec();
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Container("labels must be binary".into()));
        }
        Ok(WindowedDataset {
            rows,
            cols,
            data,
            labels,
            schema: header.schema,
            provenance: header.provenance,
        })
    }
}

/// Majority vote with the abnormal-wins tie-break: label 1 iff at least half
/// the member records are abnormal.
pub fn label_window(member_labels: &[u8], window: usize) -> Result<u8> {
    if member_labels.len() != window {
        return Err(Error::InvalidArgument {
            what: "window labels",
            details: format!("expected {window} member labels, got {}", member_labels.len()),
        });
    }
    let abnormal = member_labels.iter().filter(|&&l| l == 1).count();
    Ok(u8::from(2 * abnormal >= window))
}

/// Buckets records into minute bins, samples exactly `window` records
/// uniformly without replacement from each bin that has at least that many
/// (keeping timestamp order), and encodes each pick through the frozen
/// schema. Bins that fall short are dropped and counted.
pub fn assemble_windows(
    records: &[FlowRecord],
    schema: &FeatureSchema,
    window: usize,
    rng: &mut RngState,
) -> Result<(Vec<Vec<f64>>, Vec<u8>, AssembleStats)> {
    if window == 0 {
        return Err(Error::InvalidArgument {
            what: "window",
            details: "must be at least 1".into(),
        });
    }
    // Records arrive sorted; group consecutive runs sharing a minute index.
    let mut bins: Vec<(i64, Vec<usize>)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let minute = (r.timestamp / BIN_SECONDS).floor() as i64;
        match bins.last_mut() {
            Some((m, members)) if *m == minute => members.push(i),
            _ => bins.push((minute, vec![i])),
        }
    }

    let mut stats = AssembleStats { bins: bins.len(), ..AssembleStats::default() };
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for (_, members) in &bins {
        if members.len() < window {
            stats.dropped_bins += 1;
            continue;
        }
        let picks = rng.sample_indices(members.len(), window);
        let mut matrix = Vec::with_capacity(window * ENCODED_DIM);
        let mut member_labels = Vec::with_capacity(window);
        for &p in &picks {
            let record = &records[members[p]];
            matrix.extend(schema.encode(record)?);
            member_labels.push(record.label());
        }
        labels.push(label_window(&member_labels, window)?);
        windows.push(matrix);
        stats.windows += 1;
    }
    if windows.is_empty() {
        return Err(Error::EmptyInput("assemble_windows: no minute bin reached the window size"));
    }
    Ok((windows, labels, stats))
}

/// Full preprocessing pipeline: parse, augment environment channels when the
/// source schema lacks them, fit or reuse a frozen schema, and assemble
/// labeled windows.
pub fn preprocess_records(
    path: &Path,
    mode: SchemaMode,
    seed: u64,
    frozen_schema: Option<FeatureSchema>,
    window: usize,
) -> Result<(WindowedDataset, PreprocessStats)> {
    let root = RngState::new(seed);
    let (mut records, parse_stats) = parse_csv(path, mode)?;
    if records.is_empty() {
        return Err(Error::EmptyInput("preprocess: no records parsed"));
    }
    let env_cfg = EnvGeneratorConfig::default();
    if mode == SchemaMode::Cicids {
        // The source schema has no environmental channels; synthesize them
        // consistent with each record's traffic state.
        augment_environment(&mut records, &env_cfg, &mut root.derive("augment"))?;
    }
    let schema = match frozen_schema {
        Some(s) => s,
        None => {
            let feature_names: Vec<String> = match mode {
                SchemaMode::Cicids => {
                    CICIDS_FEATURE_COLUMNS.iter().map(|c| c.to_string()).collect()
                }
                SchemaMode::Synthetic => {
                    (0..FLOW_FEATURES).map(|i| format!("f{i:02}")).collect()
                }
            };
            fit_standardizer(&records, &feature_names, &env_cfg.channel_names())?
        }
    };
    let (windows, labels, assemble_stats) =
        assemble_windows(&records, &schema, window, &mut root.derive("windows"))?;

    let stats = PreprocessStats {
        parsed: parse_stats.parsed,
        skipped: parse_stats.skipped,
        bins: assemble_stats.bins,
        dropped_bins: assemble_stats.dropped_bins,
        windows: assemble_stats.windows,
        abnormal_windows: labels.iter().filter(|&&l| l == 1).count(),
    };
    let mut data = Vec::with_capacity(windows.len() * window * ENCODED_DIM);
    for w in &windows {
        data.extend_from_slice(w);
    }
    let dataset = WindowedDataset {
        rows: window,
        cols: ENCODED_DIM,
        data,
        labels,
        schema,
        provenance: Provenance { source: path.display().to_string(), seed },
    };
    Ok((dataset, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{AttackKind, ENV_CHANNELS};

    fn record(ts: f64, abnormal: bool) -> FlowRecord {
        FlowRecord {
            timestamp: ts,
            src_ip: "10.0.0.1".into(),
            dst_ip: "10.0.0.2".into(),
            src_port: 999,
            dst_port: 80,
            protocol: "TCP".into(),
            features: vec![ts % 7.0; FLOW_FEATURES],
            environment: vec![0.5; ENV_CHANNELS],
            abnormal,
            attack: if abnormal { AttackKind::Dos } else { AttackKind::None },
        }
    }

    fn schema_for(records: &[FlowRecord]) -> FeatureSchema {
        let f: Vec<String> = (0..FLOW_FEATURES).map(|i| format!("f{i:02}")).collect();
        let e: Vec<String> = (0..ENV_CHANNELS).map(|i| format!("env{i:02}")).collect();
        fit_standardizer(records, &f, &e).unwrap()
    }

    #[test]
    fn label_window_majority_and_tie() {
        assert_eq!(label_window(&[0; 60], 60).unwrap(), 0);
        assert_eq!(label_window(&[1; 60], 60).unwrap(), 1);
        let mut half = vec![0u8; 30];
        half.extend(vec![1u8; 30]);
        assert_eq!(label_window(&half, 60).unwrap(), 1);
        let mut minority = vec![0u8; 31];
        minority.extend(vec![1u8; 29]);
        assert_eq!(label_window(&minority, 60).unwrap(), 0);
        assert_eq!(label_window(&[0, 1], 60).unwrap_err().category(), "invalid-argument");
    }

    #[test]
    fn exact_bin_keeps_timestamp_order() {
        let records: Vec<FlowRecord> = (0..60).map(|i| record(i as f64, false)).collect();
        let schema = schema_for(&records);
        let mut rng = RngState::new(0);
        let (windows, labels, stats) =
            assemble_windows(&records, &schema, 60, &mut rng).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(labels, vec![0]);
        assert_eq!(stats, AssembleStats { bins: 1, dropped_bins: 0, windows: 1 });
        // Sampling 60 of 60 keeps the bin itself: first encoded column is
        // the z-scored ts%7 value, which must appear in timestamp order.
        let col0: Vec<f64> = (0..60).map(|r| windows[0][r * ENCODED_DIM]).collect();
        let expect: Vec<f64> = records.iter().map(|r| schema.encode(r).unwrap()[0]).collect();
        assert_eq!(col0, expect);
    }

    #[test]
    fn short_bin_is_dropped_and_counted() {
        let mut records: Vec<FlowRecord> = (0..59).map(|i| record(i as f64, false)).collect();
        records.extend((0..60).map(|i| record(60.0 + i as f64 * 0.5, true)));
        let schema = schema_for(&records);
        let mut rng = RngState::new(0);
        let (windows, labels, stats) =
            assemble_windows(&records, &schema, 60, &mut rng).unwrap();
        assert_eq!(stats.dropped_bins, 1);
        assert_eq!(windows.len(), 1);
        assert_eq!(labels, vec![1]);
    }

    #[test]
    fn oversize_bin_sampling_is_seeded() {
        let records: Vec<FlowRecord> =
            (0..120).map(|i| record(i as f64 * 0.5, i % 2 == 0)).collect();
        let schema = schema_for(&records);
        let (w1, l1, _) = assemble_windows(&records, &schema, 60, &mut RngState::new(5)).unwrap();
        let (w2, l2, _) = assemble_windows(&records, &schema, 60, &mut RngState::new(5)).unwrap();
        let (w3, _, _) = assemble_windows(&records, &schema, 60, &mut RngState::new(6)).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(l1, l2);
        assert_ne!(w1, w3);
    }

    #[test]
    fn no_full_bin_is_an_error() {
        let records: Vec<FlowRecord> = (0..10).map(|i| record(i as f64, false)).collect();
        let schema = schema_for(&records);
        let err = assemble_windows(&records, &schema, 60, &mut RngState::new(0)).unwrap_err();
        assert_eq!(err.category(), "empty-input");
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        let records: Vec<FlowRecord> = (0..120).map(|i| record(i as f64, i % 5 == 0)).collect();
        let schema = schema_for(&records);
        let (windows, labels, _) =
            assemble_windows(&records, &schema, 60, &mut RngState::new(3)).unwrap();
        let mut data = Vec::new();
        for w in &windows {
            data.extend_from_slice(w);
        }
        let ds = WindowedDataset {
            rows: 60,
            cols: ENCODED_DIM,
            data,
            labels,
            schema,
            provenance: Provenance { source: "test".into(), seed: 3 },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.ctwd");
        ds.save(&path).unwrap();
        let loaded = WindowedDataset::load(&path).unwrap();
        assert_eq!(ds, loaded);
        for (a, b) in ds.data.iter().zip(&loaded.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn subset_preserves_windows() {
        let records: Vec<FlowRecord> = (0..180).map(|i| record(i as f64, i % 3 == 0)).collect();
        let schema = schema_for(&records);
        let (windows, labels, _) =
            assemble_windows(&records, &schema, 60, &mut RngState::new(1)).unwrap();
        let mut data = Vec::new();
        for w in &windows {
            data.extend_from_slice(w);
        }
        let ds = WindowedDataset {
            rows: 60,
            cols: ENCODED_DIM,
            data,
            labels,
            schema,
            provenance: Provenance { source: "test".into(), seed: 1 },
        };
        let sub = ds.subset(&[2, 0]);
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.window(0), ds.window(2));
        assert_eq!(sub.window(1), ds.window(0));
        assert_eq!(sub.labels, vec![ds.labels[2], ds.labels[0]]);
    }
}
