//! Versioned, deterministic text formats for Q-tables and catalogues.
//!
//! Q-table files are line-oriented: a header carrying the format version,
//! bucket counts, action-grid shape and entry count, then one record per
//! nonzero Q-value sorted by (state ordinal, action ordinal). Values are
//! written with 17 significant digits, which round-trips f64 exactly.
//! Catalogues are a directory of milestone files plus a manifest with
//! per-file checksums. All writes go through write-temp-then-rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::catalogue::{Catalogue, Milestone};
use crate::rl::{ActionId, DiscretizerConfig, QTable, Snapshot, StateKey, H_SKEWS, V_SKEWS};

const QTABLE_MAGIC: &str = "qtable v1";
const MANIFEST_MAGIC: &str = "catalogue v1";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported format version in {path}: {found:?}")]
    VersionMismatch { path: PathBuf, found: String },
    #[error("checksum mismatch for {file}: stored {stored}, computed {computed}")]
    ChecksumMismatch {
        file: String,
        stored: String,
        computed: String,
    },
    #[error("truncated file {path}: expected {expected} records, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("malformed line {line} in {path}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("state space mismatch in {path}: file has buckets {found:?}, expected {expected:?}")]
    SpaceMismatch {
        path: PathBuf,
        found: [u8; 4],
        expected: [u8; 4],
    },
    #[error("missing milestone file {file}")]
    MissingMilestone { file: String },
    #[error("manifest indices not contiguous: expected {expected}, found {found}")]
    NonContiguous { expected: usize, found: usize },
}

impl PersistError {
    fn io(path: &Path, source: std::io::Error) -> PersistError {
        PersistError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Write bytes atomically: temp file in the same directory, then rename.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| PersistError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| PersistError::io(&tmp, e))?;
        f.sync_all().map_err(|e| PersistError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| PersistError::io(path, e))
}

fn render_qtable(snapshot: &Snapshot, disc: &DiscretizerConfig) -> String {
    let mut out = String::new();
    out.push_str(QTABLE_MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "buckets {} {} {} {}\n",
        disc.speed_buckets, disc.direction_buckets, disc.rotation_buckets, disc.distance_buckets
    ));
    out.push_str(&format!("actions {} {}\n", H_SKEWS.len(), V_SKEWS.len()));
    out.push_str(&format!("entries {}\n", snapshot.len()));
    for ((s, a), v) in snapshot {
        out.push_str(&format!(
            "{} {} {} {} {} {:.16e}\n",
            s.rel_speed_bucket,
            s.rel_direction_bucket,
            s.rel_rotation_bucket,
            s.distance_bucket,
            a.ordinal(),
            v
        ));
    }
    out
}

/// Serialize a Q-table's values to `path`. Deterministic: the same table
/// always produces byte-identical files. Traces are never written.
pub fn write_qtable(q: &QTable, disc: &DiscretizerConfig, path: &Path) -> Result<(), PersistError> {
    atomic_write(path, render_qtable(&q.snapshot(), disc).as_bytes())
}

fn parse_header_line<'l>(
    path: &Path,
    line_no: usize,
    line: Option<&'l str>,
    key: &str,
) -> Result<Vec<&'l str>, PersistError> {
    let line = line.ok_or_else(|| PersistError::Malformed {
        path: path.to_path_buf(),
        line: line_no,
        reason: format!("missing {key} header"),
    })?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(PersistError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            reason: format!("expected {key} header, got {line:?}"),
        });
    }
    Ok(parts.collect())
}

fn parse_qtable(path: &Path, text: &str, expected: &DiscretizerConfig) -> Result<Snapshot, PersistError> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    if first != QTABLE_MAGIC {
        return Err(PersistError::VersionMismatch {
            path: path.to_path_buf(),
            found: first.to_string(),
        });
    }

    let malformed = |line: usize, reason: String| PersistError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let buckets = parse_header_line(path, 2, lines.next(), "buckets")?;
    let found: Vec<u8> = buckets
        .iter()
        .map(|s| s.parse::<u8>())
        .collect::<Result<_, _>>()
        .map_err(|e| malformed(2, format!("bad bucket count: {e}")))?;
    if found.len() != 4 {
        return Err(malformed(2, format!("expected 4 bucket counts, got {}", found.len())));
    }
    let expected_buckets = [
        expected.speed_buckets,
        expected.direction_buckets,
        expected.rotation_buckets,
        expected.distance_buckets,
    ];
    if found != expected_buckets {
        return Err(PersistError::SpaceMismatch {
            path: path.to_path_buf(),
            found: [found[0], found[1], found[2], found[3]],
            expected: expected_buckets,
        });
    }

    let actions = parse_header_line(path, 3, lines.next(), "actions")?;
    if actions != [H_SKEWS.len().to_string(), V_SKEWS.len().to_string()] {
        return Err(malformed(3, format!("unsupported action grid {actions:?}")));
    }

    let entries = parse_header_line(path, 4, lines.next(), "entries")?;
    let expected_count: usize = entries
        .first()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(4, "bad entry count".into()))?;

    let mut snapshot = Snapshot::new();
    for (i, line) in lines.enumerate() {
        let line_no = 5 + i;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(malformed(line_no, format!("expected 6 fields, got {}", fields.len())));
        }
        let idx: Vec<u8> = fields[..4]
            .iter()
            .map(|s| s.parse::<u8>())
            .collect::<Result<_, _>>()
            .map_err(|e| malformed(line_no, format!("bad state index: {e}")))?;
        for (b, limit) in idx.iter().zip(expected_buckets) {
            if *b >= limit {
                return Err(malformed(line_no, format!("state index {b} >= bucket count {limit}")));
            }
        }
        let ordinal: usize = fields[4]
            .parse()
            .map_err(|e| malformed(line_no, format!("bad action ordinal: {e}")))?;
        let action = ActionId::from_ordinal(ordinal)
            .ok_or_else(|| malformed(line_no, format!("action ordinal {ordinal} out of range")))?;
        let value: f64 = fields[5]
            .parse()
            .map_err(|e| malformed(line_no, format!("bad value: {e}")))?;
        let key = StateKey {
            rel_speed_bucket: idx[0],
            rel_direction_bucket: idx[1],
            rel_rotation_bucket: idx[2],
            distance_bucket: idx[3],
        };
        snapshot.insert((key, action), value);
    }

    if snapshot.len() != expected_count {
        return Err(PersistError::Truncated {
            path: path.to_path_buf(),
            expected: expected_count,
            found: snapshot.len(),
        });
    }
    Ok(snapshot)
}

/// Read a Q-table back. The file's state-space header must match the
/// expected discretization exactly.
pub fn read_qtable(path: &Path, expected: &DiscretizerConfig) -> Result<QTable, PersistError> {
    let text = fs::read_to_string(path).map_err(|e| PersistError::io(path, e))?;
    Ok(QTable::from_snapshot(&parse_qtable(path, &text, expected)?))
}

fn milestone_file_name(index: usize) -> String {
    format!("milestone_{index}.qt")
}

/// Save a catalogue as `manifest.tsv` plus one Q-table file per milestone.
/// Milestone files are written first, the manifest last, each atomically.
pub fn save_catalogue(
    catalogue: &Catalogue,
    disc: &DiscretizerConfig,
    dir: &Path,
) -> Result<(), PersistError> {
    fs::create_dir_all(dir).map_err(|e| PersistError::io(dir, e))?;
    let mut manifest = String::new();
    manifest.push_str(MANIFEST_MAGIC);
    manifest.push('\n');
    manifest.push_str(&format!("interval\t{}\n", catalogue.interval()));
    manifest.push_str(&format!("count\t{}\n", catalogue.len()));
    for m in catalogue.milestones() {
        let name = milestone_file_name(m.index);
        let body = render_qtable(&m.snapshot, disc);
        atomic_write(&dir.join(&name), body.as_bytes())?;
        manifest.push_str(&format!(
            "{}\t{}\t{}\t{:016x}\n",
            m.index,
            m.deaths_at_capture,
            name,
            fnv1a64(body.as_bytes())
        ));
    }
    atomic_write(&dir.join("manifest.tsv"), manifest.as_bytes())
}

/// Load a catalogue directory, verifying every milestone checksum and the
/// manifest's contiguity.
pub fn load_catalogue(dir: &Path, expected: &DiscretizerConfig) -> Result<Catalogue, PersistError> {
    let manifest_path = dir.join("manifest.tsv");
    let text = fs::read_to_string(&manifest_path).map_err(|e| PersistError::io(&manifest_path, e))?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    if first != MANIFEST_MAGIC {
        return Err(PersistError::VersionMismatch {
            path: manifest_path.clone(),
            found: first.to_string(),
        });
    }
    let malformed = |line: usize, reason: String| PersistError::Malformed {
        path: manifest_path.clone(),
        line,
        reason,
    };

    let interval_fields: Vec<&str> = lines
        .next()
        .unwrap_or("")
        .split('\t')
        .collect();
    if interval_fields.len() != 2 || interval_fields[0] != "interval" {
        return Err(malformed(2, "expected interval line".into()));
    }
    let interval: u64 = interval_fields[1]
        .parse()
        .map_err(|e| malformed(2, format!("bad interval: {e}")))?;

    let count_fields: Vec<&str> = lines.next().unwrap_or("").split('\t').collect();
    if count_fields.len() != 2 || count_fields[0] != "count" {
        return Err(malformed(3, "expected count line".into()));
    }
    let count: usize = count_fields[1]
        .parse()
        .map_err(|e| malformed(3, format!("bad count: {e}")))?;

    let mut milestones = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line_no = 4 + i;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(malformed(line_no, format!("expected 4 fields, got {}", fields.len())));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|e| malformed(line_no, format!("bad index: {e}")))?;
        if index != milestones.len() {
            return Err(PersistError::NonContiguous {
                expected: milestones.len(),
                found: index,
            });
        }
        let deaths: u64 = fields[1]
            .parse()
            .map_err(|e| malformed(line_no, format!("bad death count: {e}")))?;
        let name = fields[2];
        let stored_sum = fields[3];

        let file_path = dir.join(name);
        let bytes = match fs::read(&file_path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(PersistError::MissingMilestone { file: name.to_string() })
            }
            Err(e) => return Err(PersistError::io(&file_path, e)),
        };
        let computed = format!("{:016x}", fnv1a64(&bytes));
        if computed != stored_sum {
            return Err(PersistError::ChecksumMismatch {
                file: name.to_string(),
                stored: stored_sum.to_string(),
                computed,
            });
        }
        let text = String::from_utf8(bytes).map_err(|_| malformed(line_no, "milestone file is not utf-8".into()))?;
        let snapshot = parse_qtable(&file_path, &text, expected)?;
        milestones.push(Milestone {
            index,
            deaths_at_capture: deaths,
            snapshot,
        });
    }

    if milestones.len() != count {
        return Err(PersistError::Truncated {
            path: manifest_path,
            expected: count,
            found: milestones.len(),
        });
    }
    Catalogue::from_parts(interval, milestones).map_err(|e| PersistError::Malformed {
        path: dir.join("manifest.tsv"),
        line: 0,
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::LearnerConfig;

    fn state(s: u8, d: u8, r: u8, z: u8) -> StateKey {
        StateKey {
            rel_speed_bucket: s,
            rel_direction_bucket: d,
            rel_rotation_bucket: r,
            distance_bucket: z,
        }
    }

    #[test]
    fn fnv_matches_known_vectors() {
        // Standard FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_table_round_trips_as_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let disc = DiscretizerConfig::default();
        let path = dir.path().join("empty.qt");
        write_qtable(&QTable::new(), &disc, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4, "header only");
        let q = read_qtable(&path, &disc).unwrap();
        assert_eq!(q.value_count(), 0);
    }

    #[test]
    fn writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let disc = DiscretizerConfig::default();
        let mut q = QTable::new();
        q.set_q(state(0, 1, 2, 3), ActionId::CENTER, 1.25);
        q.set_q(state(3, 7, 7, 4), ActionId::new(-2, 1).unwrap(), -0.031);
        q.set_q(state(1, 0, 0, 0), ActionId::new(2, -1).unwrap(), 1e-15);
        let p1 = dir.path().join("a.qt");
        let p2 = dir.path().join("b.qt");
        write_qtable(&q, &disc, &p1).unwrap();
        write_qtable(&q, &disc, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn version_and_space_mismatches_are_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let disc = DiscretizerConfig::default();
        let path = dir.path().join("t.qt");
        write_qtable(&QTable::new(), &disc, &path).unwrap();

        let bad_version = path.with_file_name("bad_version.qt");
        fs::write(&bad_version, "qtable v9\nbuckets 4 8 8 5\nactions 5 3\nentries 0\n").unwrap();
        assert!(matches!(
            read_qtable(&bad_version, &disc).unwrap_err(),
            PersistError::VersionMismatch { .. }
        ));

        let mut other = disc.clone();
        other.distance_buckets = 7;
        assert!(matches!(
            read_qtable(&path, &other).unwrap_err(),
            PersistError::SpaceMismatch { .. }
        ));
    }

    #[test]
    fn truncated_file_detected() {
        let dir = tempfile::tempdir().unwrap();
        let disc = DiscretizerConfig::default();
        let path = dir.path().join("t.qt");
        fs::write(
            &path,
            "qtable v1\nbuckets 4 8 8 5\nactions 5 3\nentries 2\n0 0 0 0 7 1.0000000000000000e0\n",
        )
        .unwrap();
        assert!(matches!(
            read_qtable(&path, &disc).unwrap_err(),
            PersistError::Truncated { expected: 2, found: 1, .. }
        ));
    }

    #[test]
    fn catalogue_round_trip_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let disc = DiscretizerConfig::default();
        let cfg = LearnerConfig::default();
        let mut cat = Catalogue::new(10).unwrap();
        let mut q = QTable::new();
        for deaths in 1..=30u64 {
            crate::rl::sarsa_lambda_update(
                &mut q,
                state((deaths % 4) as u8, 0, 0, 0),
                ActionId::CENTER,
                deaths as f64,
                state(0, 0, 0, 1),
                ActionId::CENTER,
                &cfg,
            );
            cat.maybe_capture(deaths, &q);
        }
        assert_eq!(cat.len(), 4);

        let cat_dir = dir.path().join("catalogue");
        save_catalogue(&cat, &disc, &cat_dir).unwrap();
        let loaded = load_catalogue(&cat_dir, &disc).unwrap();
        assert_eq!(loaded, cat);
    }

    #[test]
    fn empty_directory_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_catalogue(dir.path(), &DiscretizerConfig::default()).unwrap_err();
        assert!(matches!(err, PersistError::Io { .. }));
    }

    #[test]
    fn corrupted_milestone_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let disc = DiscretizerConfig::default();
        let mut cat = Catalogue::new(1).unwrap();
        let mut q = QTable::new();
        q.set_q(state(0, 0, 0, 0), ActionId::CENTER, 5.0);
        cat.maybe_capture(1, &q);
        let cat_dir = dir.path().join("catalogue");
        save_catalogue(&cat, &disc, &cat_dir).unwrap();

        // Flip one byte in milestone_1.qt.
        let target = cat_dir.join("milestone_1.qt");
        let mut bytes = fs::read(&target).unwrap();
        let last = bytes.len() - 2;
        bytes[last] = bytes[last].wrapping_add(1);
        fs::write(&target, bytes).unwrap();

        match load_catalogue(&cat_dir, &disc).unwrap_err() {
            PersistError::ChecksumMismatch { file, .. } => assert_eq!(file, "milestone_1.qt"),
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn missing_milestone_detected() {
        let dir = tempfile::tempdir().unwrap();
        let disc = DiscretizerConfig::default();
        let mut cat = Catalogue::new(1).unwrap();
        cat.maybe_capture(1, &QTable::new());
        let cat_dir = dir.path().join("catalogue");
        save_catalogue(&cat, &disc, &cat_dir).unwrap();
        fs::remove_file(cat_dir.join("milestone_1.qt")).unwrap();
        assert!(matches!(
            load_catalogue(&cat_dir, &disc).unwrap_err(),
            PersistError::MissingMilestone { .. }
        ));
    }
}
