//! CSV parsing for the CICIDS2017 flow schema and the synthetic schema.
//! Malformed rows are counted and skipped; records come back sorted by
//! timestamp.

use crate::error::{Error, Result};
use crate::preprocess::{AttackKind, FlowRecord, ENV_CHANNELS, FLOW_FEATURES};
use std::path::Path;

/// The 53 flow-statistic columns standardized from the CICIDS2017 schema,
/// in published order. Header matching is case-insensitive after trimming.
pub const CICIDS_FEATURE_COLUMNS: [&str; FLOW_FEATURES] = [
    "Flow Duration",
    "Total Fwd Packets",
    "Total Backward Packets",
    "Total Length of Fwd Packets",
    "Total Length of Bwd Packets",
    "Fwd Packet Length Max",
    "Fwd Packet Length Min",
    "Fwd Packet Length Mean",
    "Fwd Packet Length Std",
    "Bwd Packet Length Max",
    "Bwd Packet Length Min",
    "Bwd Packet Length Mean",
    "Bwd Packet Length Std",
    "Flow Bytes/s",
    "Flow Packets/s",
    "Flow IAT Mean",
    "Flow IAT Std",
    "Flow IAT Max",
    "Flow IAT Min",
    "Fwd IAT Total",
    "Fwd IAT Mean",
    "Fwd IAT Std",
    "Fwd IAT Max",
    "Fwd IAT Min",
    "Bwd IAT Total",
    "Bwd IAT Mean",
    "Bwd IAT Std",
    "Bwd IAT Max",
    "Bwd IAT Min",
    "Fwd PSH Flags",
    "Bwd PSH Flags",
    "Fwd URG Flags",
    "Bwd URG Flags",
    "Fwd Header Length",
    "Bwd Header Length",
    "Fwd Packets/s",
    "Bwd Packets/s",
    "Min Packet Length",
    "Max Packet Length",
    "Packet Length Mean",
    "Packet Length Std",
    "Packet Length Variance",
    "FIN Flag Count",
    "SYN Flag Count",
    "RST Flag Count",
    "PSH Flag Count",
    "ACK Flag Count",
    "URG Flag Count",
    "CWE Flag Count",
    "ECE Flag Count",
    "Down/Up Ratio",
    "Average Packet Size",
    "Avg Fwd Segment Size",
];

/// Which on-disk schema a CSV follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaMode {
    Cicids,
    Synthetic,
}

impl SchemaMode {
    pub fn tag(&self) -> &'static str {
        match self {
            SchemaMode::Cicids => "cicids",
            SchemaMode::Synthetic => "synthetic",
        }
    }

    pub fn from_tag(tag: &str) -> Option<SchemaMode> {
        match tag {
            "cicids" => Some(SchemaMode::Cicids),
            "synthetic" => Some(SchemaMode::Synthetic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub parsed: usize,
    pub skipped: usize,
}

/// Days-from-civil (Gregorian) to seconds since the Unix epoch.
fn epoch_seconds(year: i64, month: i64, day: i64, h: i64, m: i64, s: i64) -> f64 {
    let y = if month <= 2 { year - 1 } else { year };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (month + 9) % 12;
    let doy = (153 * mp + 2) / 5 + day - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    let days = era * 146_097 + doe - 719_468;
    (days * 86_400 + h * 3600 + m * 60 + s) as f64
}

/// CICIDS2017 timestamps look like "7/7/2017 8:55" or "5/7/2017 8:42:21",
/// day first, optionally with an AM/PM suffix.
fn parse_cicids_timestamp(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    let (date, time) = raw.split_once(' ')?;
    let mut time = time.trim();
    let mut pm = false;
    let mut am = false;
    for (suffix, flag) in [("AM", &mut am), ("PM", &mut pm)] {
        if let Some(stripped) = time.strip_suffix(suffix) {
            time = stripped.trim();
            *flag = true;
        }
    }
    let d: Vec<i64> = date.split('/').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    if d.len() != 3 {
        return None;
    }
    let t: Vec<i64> = time.split(':').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    if t.is_empty() || t.len() > 3 {
        return None;
    }
    let mut hour = t[0];
    if pm && hour < 12 {
        hour += 12;
    }
    if am && hour == 12 {
        hour = 0;
    }
    let minute = t.get(1).copied().unwrap_or(0);
    let second = t.get(2).copied().unwrap_or(0);
    Some(epoch_seconds(d[2], d[1], d[0], hour, minute, second))
}

fn classify_label(raw: &str) -> (bool, AttackKind) {
    let label = raw.trim().to_ascii_lowercase();
    if label == "benign" || label == "normal" {
        return (false, AttackKind::None);
    }
    let kind = if label.contains("ddos") {
        AttackKind::Ddos
    } else if label.contains("portscan") || label.contains("port scan") {
        AttackKind::PortScan
    } else if label.contains("dos") {
        AttackKind::Dos
    } else {
        AttackKind::None
    };
    (true, kind)
}

struct HeaderIndex {
    positions: Vec<usize>,
}

impl HeaderIndex {
    /// Resolves mandatory columns case-insensitively after trimming; a
    /// missing column is a schema error naming it.
    fn resolve(header: &csv::StringRecord, wanted: &[String]) -> Result<HeaderIndex> {
        let normalized: Vec<String> =
            header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
        let mut positions = Vec::with_capacity(wanted.len());
        for name in wanted {
            let target = name.to_ascii_lowercase();
            match normalized.iter().position(|h| *h == target) {
                Some(i) => positions.push(i),
                None => return Err(Error::MissingColumn { column: name.clone() }),
            }
        }
        Ok(HeaderIndex { positions })
    }

    fn get<'r>(&self, row: &'r csv::StringRecord, slot: usize) -> Option<&'r str> {
        row.get(self.positions[slot]).map(str::trim)
    }
}

/// Parses a flow CSV. Rows with unparseable cells are counted and skipped;
/// the survivors come back sorted by timestamp (stable for ties).
pub fn parse_csv(path: &Path, mode: SchemaMode) -> Result<(Vec<FlowRecord>, ParseStats)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?
        .clone();

    let wanted: Vec<String> = match mode {
        SchemaMode::Cicids => {
            let mut cols: Vec<String> = [
                "Timestamp",
                "Source IP",
                "Destination IP",
                "Source Port",
                "Destination Port",
                "Protocol",
                "Label",
            ]
            .map(String::from)
            .to_vec();
            cols.extend(CICIDS_FEATURE_COLUMNS.iter().map(|c| c.to_string()));
            cols
        }
        SchemaMode::Synthetic => {
            let mut cols: Vec<String> =
                ["timestamp", "src_ip", "dst_ip", "src_port", "dst_port", "protocol", "label",
                 "attack"]
                .map(String::from)
                .to_vec();
            cols.extend((0..FLOW_FEATURES).map(|i| format!("f{i:02}")));
            cols.extend(crate::preprocess::EnvGeneratorConfig::default().channel_names());
            cols
        }
    };
    let index = HeaderIndex::resolve(&header, &wanted)?;

    let mut records = Vec::new();
    let mut stats = ParseStats::default();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                stats.skipped += 1;
                continue;
            }
        };
        match parse_row(&row, &index, mode) {
            Some(record) => {
                records.push(record);
                stats.parsed += 1;
            }
            None => stats.skipped += 1,
        }
    }
    if stats.skipped > 0 {
        log::warn!(
            "{}: skipped {} malformed row(s), parsed {}",
            path.display(),
            stats.skipped,
            stats.parsed
        );
    }
    records.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite timestamps"));
    Ok((records, stats))
}

fn parse_row(
    row: &csv::StringRecord,
    index: &HeaderIndex,
    mode: SchemaMode,
) -> Option<FlowRecord> {
    let timestamp = match mode {
        SchemaMode::Cicids => parse_cicids_timestamp(index.get(row, 0)?)?,
        SchemaMode::Synthetic => index.get(row, 0)?.parse::<f64>().ok()?,
    };
    let src_ip = index.get(row, 1)?.to_string();
    let dst_ip = index.get(row, 2)?.to_string();
    let src_port: u16 = index.get(row, 3)?.parse().ok()?;
    let dst_port: u16 = index.get(row, 4)?.parse().ok()?;
    let protocol = index.get(row, 5)?.to_string();
    let (abnormal, mut attack) = classify_label(index.get(row, 6)?);

    let mut features = Vec::with_capacity(FLOW_FEATURES);
    let base = 7 + usize::from(mode == SchemaMode::Synthetic);
    if mode == SchemaMode::Synthetic {
        attack = AttackKind::from_tag(index.get(row, 7)?)?;
    }
    for slot in base..base + FLOW_FEATURES {
        let v: f64 = index.get(row, slot)?.parse().ok()?;
        if !v.is_finite() {
            return None;
        }
        features.push(v);
    }
    let environment = match mode {
        SchemaMode::Cicids => Vec::new(),
        SchemaMode::Synthetic => {
            let mut env = Vec::with_capacity(ENV_CHANNELS);
            for slot in base + FLOW_FEATURES..base + FLOW_FEATURES + ENV_CHANNELS {
                let v: f64 = index.get(row, slot)?.parse().ok()?;
                env.push(v);
            }
            env
        }
    };
    Some(FlowRecord {
        timestamp,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        protocol,
        features,
        environment,
        abnormal,
        attack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn cicids_header() -> String {
        let mut cols = vec![
            "Flow ID",
            "Source IP",
            "Source Port",
            "Destination IP",
            "Destination Port",
            "Protocol",
            "Timestamp",
        ];
        cols.extend(CICIDS_FEATURE_COLUMNS);
        cols.push("Label");
        cols.join(",")
    }

    fn cicids_row(ts: &str, label: &str, bad_cell: bool) -> String {
        let mut cells = vec![
            "1-1".to_string(),
            "192.168.10.5".to_string(),
            "49188".to_string(),
            "104.16.207.165".to_string(),
            "443".to_string(),
            "6".to_string(),
            ts.to_string(),
        ];
        for i in 0..FLOW_FEATURES {
            if bad_cell && i == 10 {
                cells.push("oops".to_string());
            } else {
                cells.push(format!("{}", i as f64 * 1.5));
            }
        }
        cells.push(label.to_string());
        cells.join(",")
    }

    fn write_fixture(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn well_formed_rows_parse() {
        let fixture = write_fixture(&[
            cicids_header(),
            cicids_row("5/7/2017 8:42:21", "BENIGN", false),
            cicids_row("5/7/2017 8:42:20", "DoS Hulk", false),
            cicids_row("5/7/2017 8:43:01", "DDoS", false),
        ]);
        let (records, stats) = parse_csv(fixture.path(), SchemaMode::Cicids).unwrap();
        assert_eq!(stats, ParseStats { parsed: 3, skipped: 0 });
        assert_eq!(records.len(), 3);
        // Sorted by timestamp: the 8:42:20 DoS row comes first.
        assert_eq!(records[0].attack, AttackKind::Dos);
        assert!(records[0].abnormal);
        assert_eq!(records[1].attack, AttackKind::None);
        assert!(!records[1].abnormal);
        assert_eq!(records[2].attack, AttackKind::Ddos);
        assert_eq!(records[0].features.len(), FLOW_FEATURES);
        assert!(records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn malformed_row_is_skipped_and_counted() {
        let fixture = write_fixture(&[
            cicids_header(),
            cicids_row("5/7/2017 8:42:21", "BENIGN", false),
            cicids_row("5/7/2017 8:42:22", "BENIGN", true),
            cicids_row("5/7/2017 8:42:23", "PortScan", false),
        ]);
        let (records, stats) = parse_csv(fixture.path(), SchemaMode::Cicids).unwrap();
        assert_eq!(stats, ParseStats { parsed: 2, skipped: 1 });
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].attack, AttackKind::PortScan);
    }

    #[test]
    fn header_only_file_yields_empty_list() {
        let fixture = write_fixture(&[cicids_header()]);
        let (records, stats) = parse_csv(fixture.path(), SchemaMode::Cicids).unwrap();
        assert!(records.is_empty());
        assert_eq!(stats, ParseStats { parsed: 0, skipped: 0 });
    }

    #[test]
    fn missing_column_names_it() {
        let fixture = write_fixture(&["Timestamp,Source IP,Label".to_string()]);
        let err = parse_csv(fixture.path(), SchemaMode::Cicids).unwrap_err();
        assert_eq!(err, Error::MissingColumn { column: "Destination IP".into() });
    }

    #[test]
    fn header_match_is_case_insensitive_and_trimmed() {
        let noisy = cicids_header()
            .replace("Source IP", "  source ip ")
            .replace("Flow Duration", " flow duration");
        let fixture =
            write_fixture(&[noisy, cicids_row("5/7/2017 8:42:21", "BENIGN", false)]);
        let (records, _) = parse_csv(fixture.path(), SchemaMode::Cicids).unwrap();
        assert_eq!(records.len(), 1);
    }

    #[test]
    fn timestamp_formats() {
        let base = parse_cicids_timestamp("5/7/2017 8:42:21").unwrap();
        let no_secs = parse_cicids_timestamp("5/7/2017 8:42").unwrap();
        assert_eq!(base - no_secs, 21.0);
        let pm = parse_cicids_timestamp("5/7/2017 2:00 PM").unwrap();
        let am = parse_cicids_timestamp("5/7/2017 2:00 AM").unwrap();
        assert_eq!(pm - am, 12.0 * 3600.0);
        // 2017-07-05 00:00:00 UTC.
        let midnight = parse_cicids_timestamp("5/7/2017 0:00:00").unwrap();
        assert_eq!(midnight, 1_499_212_800.0);
        assert!(parse_cicids_timestamp("garbage").is_none());
    }
}
