//! Append-only run journal and deterministic CSV assembly.
//!
//! Every completed grid point is recorded as one JSON line holding its
//! final CSV row verbatim. The journal is the resume source of truth: a
//! killed sweep restarts from the last fully written line, and the final
//! CSV is assembled by sorting journal rows into grid order, so a resumed
//! run reproduces the uninterrupted run byte for byte.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// One completed grid point: identifying indices plus the formatted row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointRecord {
    pub chain: usize,
    pub point: usize,
    pub row: String,
}

/// Paths for one run's artifacts inside the output directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
    pub run_id: String,
}

impl RunPaths {
    pub fn new(dir: &Path, run_id: &str) -> Self {
        RunPaths { dir: dir.to_path_buf(), run_id: run_id.to_string() }
    }

    pub fn journal(&self) -> PathBuf {
        self.dir.join(format!("points-{}.jsonl", self.run_id))
    }

    pub fn csv(&self, stem: &str) -> PathBuf {
        self.dir.join(format!("{stem}-{}.csv", self.run_id))
    }

    pub fn report(&self, stem: &str) -> PathBuf {
        self.dir.join(format!("{stem}-{}.json", self.run_id))
    }

    pub fn checkpoint(&self, chain: usize, tag: &str) -> PathBuf {
        self.dir.join(format!("chain-{}-{chain}-{tag}.qsbm", self.run_id))
    }

    pub fn config_echo(&self) -> PathBuf {
        self.dir.join(format!("config-{}.json", self.run_id))
    }
}

/// Load journal records, tolerating exactly one torn trailing line (the
/// mark of a kill mid-write). A malformed line anywhere else is corruption
/// and aborts.
pub fn load_journal(path: &Path) -> Result<Vec<PointRecord>> {
    let mut text = String::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_string(&mut text)
                .with_context(|| format!("reading journal {}", path.display()))?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).context("opening journal"),
    }
    let lines: Vec<&str> = text.lines().collect();
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PointRecord>(line) {
            Ok(rec) => records.push(rec),
            Err(e) if i + 1 == lines.len() => {
                eprintln!("note: dropping torn trailing journal line ({e})");
            }
            Err(e) => bail!("corrupt journal line {} in {}: {e}", i + 1, path.display()),
        }
    }
    Ok(records)
}

/// Serialized appender: the single writer for a run's journal.
pub struct JournalWriter {
    w: BufWriter<File>,
}

impl JournalWriter {
    /// Open for appending (resume) or truncated fresh (new run).
    pub fn open(path: &Path, resume: bool) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .append(resume)
            .write(true)
            .truncate(!resume)
            .open(path)
            .with_context(|| format!("opening journal {}", path.display()))?;
        Ok(JournalWriter { w: BufWriter::new(f) })
    }

    /// Append one record and flush it to the OS so a kill cannot tear more
    /// than the line currently in flight.
    pub fn append(&mut self, rec: &PointRecord) -> Result<()> {
        let line = serde_json::to_string(rec)?;
        self.w.write_all(line.as_bytes())?;
        self.w.write_all(b"\n")?;
        self.w.flush()?;
        Ok(())
    }
}

/// Rewrite the journal to exactly `records`, atomically. Called on resume
/// before the appender opens, so a torn trailing line from a kill cannot
/// fuse with the next appended record.
pub fn rewrite_journal(path: &Path, records: &[PointRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for rec in records {
        serde_json::to_writer(&mut buf, rec)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Write `content` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)
        .with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Assemble the final CSV from journal records: header, then rows sorted
/// by (chain, point). Duplicate (chain, point) keys keep the latest record
/// so a re-run of a point supersedes its earlier row.
pub fn assemble_csv(header: &str, records: &[PointRecord]) -> String {
    let mut latest: BTreeMap<(usize, usize), &str> = BTreeMap::new();
    for rec in records {
        latest.insert((rec.chain, rec.point), rec.row.as_str());
    }
    let mut out = String::with_capacity(records.len() * 128);
    out.push_str(header);
    out.push('\n');
    for row in latest.values() {
        out.push_str(row);
        out.push('\n');
    }
    out
}

/// Contiguously completed prefix length per chain, from journal records.
/// A gap ends the prefix: later isolated rows are recomputed rather than
/// trusted out of order.
pub fn completed_prefix(records: &[PointRecord], chain: usize) -> usize {
    let mut done: Vec<usize> = records.iter().filter(|r| r.chain == chain).map(|r| r.point).collect();
    done.sort_unstable();
    done.dedup();
    let mut n = 0;
    for &p in &done {
        if p == n {
            n += 1;
        } else {
            break;
        }
    }
    n
}
