//! Append-only run journal and the measure-populated run table.
//!
//! Each line of `journal.ndjson` is `{"crc":<u32>,"record":{...}}` where the
//! CRC-32 covers the exact bytes of the `record` object. A crash can only tear
//! the final line; opening the journal drops such a tail. Damage anywhere
//! else is reported and left for the operator.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::design::{RunStatus, RunTable};
use crate::model::ExperimentDefinition;

pub const JOURNAL_FILE: &str = "journal.ndjson";
pub const RUN_TABLE_FILE: &str = "run_table.csv";

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("journal {path} is corrupt at line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Done,
    Failed,
}

impl From<RecordStatus> for RunStatus {
    fn from(s: RecordStatus) -> Self {
        match s {
            RecordStatus::Done => RunStatus::Done,
            RecordStatus::Failed => RunStatus::Failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub sequence_no: u64,
    pub run_id: String,
    pub status: RecordStatus,
    pub measures: BTreeMap<String, f64>,
    pub wall_time: f64,
    /// RFC 3339 UTC timestamp.
    pub finished_at: String,
    /// CRC-32 of the serialized record body; filled in on write and read.
    #[serde(skip)]
    pub checksum: u32,
}

/// A run outcome about to be journaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub run_id: String,
    pub status: RecordStatus,
    pub measures: BTreeMap<String, f64>,
    pub wall_time: f64,
}

#[derive(Serialize)]
struct LineOut<'a> {
    crc: u32,
    record: &'a RawValue,
}

#[derive(Deserialize)]
struct LineIn<'a> {
    crc: u32,
    #[serde(borrow)]
    record: &'a RawValue,
}

fn decode_line(line: &str) -> Result<JournalRecord, String> {
    let parsed: LineIn<'_> = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let body = parsed.record.get();
    let actual = crc32fast::hash(body.as_bytes());
    if actual != parsed.crc {
        return Err(format!(
            "checksum mismatch (stored {:08x}, computed {actual:08x})",
            parsed.crc
        ));
    }
    let mut record: JournalRecord = serde_json::from_str(body).map_err(|e| e.to_string())?;
    record.checksum = actual;
    Ok(record)
}

fn encode_line(record: &mut JournalRecord) -> String {
    let body = serde_json::to_string(record).expect("journal records serialize");
    record.checksum = crc32fast::hash(body.as_bytes());
    let raw = RawValue::from_string(body).expect("serialized JSON is valid");
    let mut line = serde_json::to_string(&LineOut {
        crc: record.checksum,
        record: &raw,
    })
    .expect("journal lines serialize");
    line.push('\n');
    line
}

struct Scan {
    records: Vec<JournalRecord>,
    /// Byte length of the valid prefix.
    valid_len: u64,
}

fn scan(path: &Path, bytes: &[u8]) -> Result<Scan, JournalError> {
    let mut records: Vec<JournalRecord> = Vec::new();
    let mut offset = 0usize;
    let mut line_no = 0usize;
    while offset < bytes.len() {
        line_no += 1;
        let (line, next, complete) = match bytes[offset..].iter().position(|&b| b == b'\n') {
            Some(i) => (&bytes[offset..offset + i], offset + i + 1, true),
            None => (&bytes[offset..], bytes.len(), false),
        };
        let is_last = next >= bytes.len();
        let decoded = std::str::from_utf8(line)
            .map_err(|e| e.to_string())
            .and_then(decode_line)
            .and_then(|r| match records.last() {
                Some(prev) if r.sequence_no <= prev.sequence_no => Err(format!(
                    "sequence {} does not follow {}",
                    r.sequence_no, prev.sequence_no
                )),
                _ => Ok(r),
            });
        match decoded {
            Ok(record) if complete => records.push(record),
            // a complete-looking final record without its newline is still torn
            Ok(_) => break,
            Err(_) if is_last => break,
            Err(reason) => {
                return Err(JournalError::Corrupt {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason,
                })
            }
        }
        offset = next;
    }
    Ok(Scan {
        records,
        valid_len: offset as u64,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, JournalError> {
    match File::open(path) {
        Ok(mut f) => {
            let mut buf = Vec::new();
            f.read_to_end(&mut buf).map_err(|source| JournalError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            Ok(buf)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(source) => Err(JournalError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

/// Reads every valid record, ignoring a torn tail. A missing file is empty.
pub fn read_records(path: &Path) -> Result<Vec<JournalRecord>, JournalError> {
    Ok(scan(path, &read_bytes(path)?)?.records)
}

/// The latest terminal record per run id.
pub fn load_completed(path: &Path) -> Result<BTreeMap<String, JournalRecord>, JournalError> {
    Ok(latest_per_run(read_records(path)?))
}

fn latest_per_run(records: Vec<JournalRecord>) -> BTreeMap<String, JournalRecord> {
    let mut out: BTreeMap<String, JournalRecord> = BTreeMap::new();
    for r in records {
        // records arrive in sequence order, so later ones win
        out.insert(r.run_id.clone(), r);
    }
    out
}

/// Single-writer handle on an open journal.
pub struct Journal {
    path: PathBuf,
    file: File,
    records: Vec<JournalRecord>,
}

impl std::fmt::Debug for Journal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Journal")
            .field("path", &self.path)
            .field("records", &self.records.len())
            .finish()
    }
}

impl Journal {
    /// Opens (or creates) a journal for appending, truncating any torn tail.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, JournalError> {
        let path = path.into();
        let io = |source| JournalError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let bytes = read_bytes(&path)?;
        let Scan { records, valid_len } = scan(&path, &bytes)?;
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(&path)
            .map_err(io)?;
        if valid_len < bytes.len() as u64 {
            log::warn!(
                "dropping {} torn bytes at the end of {}",
                bytes.len() as u64 - valid_len,
                path.display()
            );
            file.set_len(valid_len).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        Ok(Journal {
            path,
            file,
            records,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[JournalRecord] {
        &self.records
    }

    pub fn last_sequence(&self) -> u64 {
        self.records.last().map(|r| r.sequence_no).unwrap_or(0)
    }

    /// Appends one terminal record and syncs it to stable storage before returning.
    pub fn append(&mut self, outcome: Outcome) -> Result<&JournalRecord, JournalError> {
        let mut record = JournalRecord {
            sequence_no: self.last_sequence() + 1,
            run_id: outcome.run_id,
            status: outcome.status,
            measures: outcome.measures,
            wall_time: outcome.wall_time,
            finished_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            checksum: 0,
        };
        let line = encode_line(&mut record);
        let io = |source| JournalError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.records.push(record);
        Ok(self.records.last().unwrap())
    }

    /// The latest terminal record per run id.
    pub fn completed(&self) -> BTreeMap<String, JournalRecord> {
        latest_per_run(self.records.clone())
    }
}

/// Column layout shared by the plan and the populated table.
pub fn run_table_header(def: &ExperimentDefinition) -> Vec<String> {
    let mut header = vec!["run_id".to_string(), "subject".to_string()];
    header.extend(def.factors.iter().map(|f| f.name.clone()));
    header.extend(["repetition", "block", "status"].map(String::from));
    header.extend(def.dependent_metrics().map(|m| m.name.clone()));
    header
}

/// Renders the run table in table order with measures from `completed`.
///
/// Done runs carry their dependent measures; failed runs show `FAILED`
/// with empty measure cells; everything else is `pending`.
pub fn emit_run_table_csv(
    def: &ExperimentDefinition,
    table: &RunTable,
    completed: &BTreeMap<String, JournalRecord>,
) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(run_table_header(def))
        .expect("in-memory write");
    for run in &table.runs {
        let record = completed.get(&run.run_id);
        let status = record
            .map(|r| RunStatus::from(r.status))
            .unwrap_or(run.status);
        let mut row = vec![run.run_id.clone(), run.subject.clone()];
        for f in &def.factors {
            row.push(run.treatment_of(&f.name).unwrap_or("").to_string());
        }
        row.push(run.repetition.to_string());
        row.push(run.block.clone().unwrap_or_default());
        row.push(status.as_csv().to_string());
        for m in def.dependent_metrics() {
            let value = match (status, record) {
                (RunStatus::Done, Some(r)) => r.measures.get(&m.name).copied(),
                (RunStatus::Done, None) => run.measures.get(&m.name).copied(),
                _ => None,
            };
            row.push(value.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("run table CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("run table CSV: missing column `{0}`")]
    MissingColumn(String),
    #[error("run table CSV row {row}: {message}")]
    Row { row: usize, message: String },
}

/// Parses a run-table CSV back into a table (measures and statuses included).
pub fn parse_run_table_csv(def: &ExperimentDefinition, text: &str) -> Result<RunTable, CsvError> {
    use crate::design::Run;

    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CsvError::MissingColumn(name.to_string()))
    };
    let run_id = col("run_id")?;
    let subject = col("subject")?;
    let repetition = col("repetition")?;
    let block = col("block")?;
    let status = col("status")?;
    let factor_cols: Vec<(String, usize)> = def
        .factors
        .iter()
        .map(|f| col(&f.name).map(|i| (f.name.clone(), i)))
        .collect::<Result<_, _>>()?;
    let metric_cols: Vec<(String, usize)> = def
        .metrics
        .iter()
        .filter_map(|m| {
            headers
                .iter()
                .position(|h| h == m.name)
                .map(|i| (m.name.clone(), i))
        })
        .collect();

    let mut runs = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let get = |c: usize| rec.get(c).unwrap_or("").to_string();
        let treatments: Vec<(String, String)> = factor_cols
            .iter()
            .map(|(f, c)| (f.clone(), get(*c)))
            .collect();
        let subject_name = get(subject);
        let mut trial_key = format!("subject={subject_name}");
        for (f, t) in &treatments {
            if def.factor(f).is_some_and(|f| f.kind.expands()) {
                trial_key.push_str(&format!(";{f}={t}"));
            }
        }
        let mut measures = BTreeMap::new();
        for (m, c) in &metric_cols {
            let cell = get(*c);
            if !cell.trim().is_empty() {
                let v: f64 = cell.trim().parse().map_err(|_| CsvError::Row {
                    row,
                    message: format!("`{cell}` in column `{m}` is not a number"),
                })?;
                measures.insert(m.clone(), v);
            }
        }
        let block_cell = get(block);
        runs.push(Run {
            run_id: get(run_id),
            trial_key,
            subject: subject_name,
            treatments,
            repetition: get(repetition).parse().map_err(|_| CsvError::Row {
                row,
                message: "repetition is not an integer".into(),
            })?,
            block: (!block_cell.is_empty()).then_some(block_cell),
            measures,
            status: RunStatus::from_csv(&get(status)).ok_or_else(|| CsvError::Row {
                row,
                message: format!("unknown status `{}`", get(status)),
            })?,
        });
    }
    Ok(RunTable::new(runs, def.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(id: &str, status: RecordStatus, energy: f64) -> Outcome {
        Outcome {
            run_id: id.into(),
            status,
            measures: BTreeMap::from([("energy".to_string(), energy)]),
            wall_time: 0.5,
        }
    }

    #[test]
    fn first_append_has_sequence_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut j = Journal::open(dir.path().join(JOURNAL_FILE)).unwrap();
        assert_eq!(
            j.append(outcome("r1", RecordStatus::Done, 1.0))
                .unwrap()
                .sequence_no,
            1
        );
    }

    #[test]
    fn appends_read_back_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(JOURNAL_FILE);
        let mut j = Journal::open(&path).unwrap();
        let a = j
            .append(outcome("r1", RecordStatus::Done, 1.25))
            .unwrap()
            .clone();
        let b = j
            .append(outcome("r2", RecordStatus::Failed, 0.1))
            .unwrap()
            .clone();
        assert_eq!((a.sequence_no, b.sequence_no), (1, 2));
        assert_eq!(read_records(&path).unwrap(), vec![a, b]);
    }

    #[test]
    fn missing_and_empty_journals_are_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(JOURNAL_FILE);
        assert!(load_completed(&path).unwrap().is_empty());
        std::fs::write(&path, "").unwrap();
        assert!(load_completed(&path).unwrap().is_empty());
    }

    #[test]
    fn five_done_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(JOURNAL_FILE);
        let mut j = Journal::open(&path).unwrap();
        for i in 1..=5 {
            j.append(outcome(&format!("r{i}"), RecordStatus::Done, i as f64))
                .unwrap();
        }
        assert_eq!(load_completed(&path).unwrap().len(), 5);
    }

    #[test]
    fn later_record_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(JOURNAL_FILE);
        {
            let mut j = Journal::open(&path).unwrap();
            j.append(outcome("r3", RecordStatus::Failed, 0.0)).unwrap();
            j.append(outcome("r1", RecordStatus::Done, 1.0)).unwrap();
        }
        // resume in a new process
        let mut j = Journal::open(&path).unwrap();
        j.append(outcome("r3", RecordStatus::Done, 3.0)).unwrap();
        let map = load_completed(&path).unwrap();
        assert_eq!(map["r3"].status, RecordStatus::Done);
        assert_eq!(map["r3"].sequence_no, 3);
        assert_eq!(map["r3"].measures["energy"], 3.0);
    }

    #[test]
    fn torn_tail_is_dropped_and_appends_continue() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(JOURNAL_FILE);
        {
            let mut j = Journal::open(&path).unwrap();
            for i in 1..=3 {
                j.append(outcome(&format!("r{i}"), RecordStatus::Done, 1.0))
                    .unwrap();
            }
        }
        // cut the last record mid-line
        let bytes = std::fs::read(&path).unwrap();
        let last_start = bytes[..bytes.len() - 1]
            .iter()
            .rposition(|&b| b == b'\n')
            .unwrap()
            + 1;
        let cut = last_start + (bytes.len() - last_start) / 2;
        std::fs::write(&path, &bytes[..cut]).unwrap();

        assert_eq!(load_completed(&path).unwrap().len(), 2);
        let mut j = Journal::open(&path).unwrap();
        assert_eq!(j.last_sequence(), 2);
        assert_eq!(
            j.append(outcome("r3", RecordStatus::Done, 1.0))
                .unwrap()
                .sequence_no,
            3
        );
        let records = read_records(&path).unwrap();
        assert_eq!(
            records.iter().map(|r| r.sequence_no).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn mid_file_corruption_is_a_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(JOURNAL_FILE);
        {
            let mut j = Journal::open(&path).unwrap();
            for i in 1..=3 {
                j.append(outcome(&format!("r{i}"), RecordStatus::Done, 1.0))
                    .unwrap();
            }
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let flipped = text.replacen("\"r2\"", "\"r9\"", 1);
        std::fs::write(&path, flipped).unwrap();
        match load_completed(&path) {
            Err(JournalError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected corruption, got {other:?}"),
        }
        assert!(Journal::open(&path).is_err());
    }
}
