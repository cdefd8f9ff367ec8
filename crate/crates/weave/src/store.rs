//! On-disk formats: the append-only change log and snapshots.
//!
//! Log frame: `u32 LE length | JSON record | u32 LE CRC32(JSON record)`, where
//! the record is `{"seq": n, "op": ..., "payload": ...}`.
//!
//! Snapshot: `"STRGSNAP" | u16 LE version | u64 LE particle count`, then one
//! length-prefixed JSON particle per entry, a u64 strand count with
//! length-prefixed JSON strands, a length-prefixed JSON metadata block, and a
//! trailing CRC32 over every preceding byte.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use weave_core::id::StrandId;
use weave_core::weave::{Change, WeaveState};
use weave_core::{InsightParticle, Millis, RelationalStrand};

use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"STRGSNAP";
pub const SNAPSHOT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub change: Change,
}

pub fn encode_frame(record: &LogRecord) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(record).map_err(|e| Error::Corrupt(e.to_string()))?;
    let mut out = Vec::with_capacity(payload.len() + 8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

/// Result of reading a log: the intact records, and whether a torn final
/// frame (an interrupted append) was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct LogContents {
    pub records: Vec<LogRecord>,
    pub torn_tail: bool,
    /// Byte length of the intact prefix.
    pub valid_len: u64,
}

/// Decodes a whole log. A damaged frame in the middle is an error; a damaged
/// or incomplete last frame is treated as a torn write and dropped.
pub fn decode_log(bytes: &[u8]) -> Result<LogContents> {
    let mut records: Vec<LogRecord> = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        if rest.len() < 4 {
            return Ok(LogContents { records, torn_tail: true, valid_len: pos as u64 });
        }
        let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        if rest.len() < 8 + len {
            return Ok(LogContents { records, torn_tail: true, valid_len: pos as u64 });
        }
        let payload = &rest[4..4 + len];
        let crc = u32::from_le_bytes(rest[4 + len..8 + len].try_into().unwrap());
        let end = pos + 8 + len;
        if crc32fast::hash(payload) != crc {
            if end == bytes.len() {
                return Ok(LogContents { records, torn_tail: true, valid_len: pos as u64 });
            }
            return Err(Error::ChecksumMismatch { offset: pos as u64 });
        }
        let record: LogRecord =
            serde_json::from_slice(payload).map_err(|e| Error::Corrupt(format!("log record at byte {pos}: {e}")))?;
        if let Some(last) = records.last() {
            if record.seq <= last.seq {
                return Err(Error::Corrupt(format!("log seq {} follows {}", record.seq, last.seq)));
            }
        }
        records.push(record);
        pos = end;
    }
    Ok(LogContents { records, torn_tail: false, valid_len: pos as u64 })
}

pub fn read_log(path: &Path) -> Result<LogContents> {
    match fs::read(path) {
        Ok(bytes) => decode_log(&bytes),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            Ok(LogContents { records: Vec::new(), torn_tail: false, valid_len: 0 })
        }
        Err(e) => Err(e.into()),
    }
}

/// Appends frames to a log file.
#[derive(Debug)]
pub struct LogWriter {
    file: File,
    fsync: bool,
}

impl LogWriter {
    /// Opens `path` for appending, first cutting off any torn tail at `valid_len`.
    pub fn open(path: &Path, valid_len: u64, fsync: bool) -> Result<Self> {
        let file = OpenOptions::new().create(true).read(true).write(true).truncate(false).open(path)?;
        if file.metadata()?.len() != valid_len {
            file.set_len(valid_len)?;
        }
        let mut w = Self { file, fsync };
        w.seek_end()?;
        Ok(w)
    }

    fn seek_end(&mut self) -> Result<()> {
        use std::io::Seek;
        self.file.seek(io::SeekFrom::End(0))?;
        Ok(())
    }

    pub fn append(&mut self, records: &[LogRecord]) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for r in records {
            buf.extend_from_slice(&encode_frame(r)?);
        }
        self.file.write_all(&buf)?;
        if self.fsync {
            self.file.sync_data()?;
        }
        Ok(())
    }

    /// Empties the log (after its contents are captured in a snapshot).
    pub fn truncate(&mut self) -> Result<()> {
        self.file.set_len(0)?;
        self.seek_end()?;
        if self.fsync {
            self.file.sync_all()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SnapshotMeta {
    seq: u64,
    last_refinement: Millis,
    ingests_since_refinement: u64,
    minted: u64,
    acknowledged: Vec<StrandId>,
}

fn push_json<T: Serialize>(out: &mut Vec<u8>, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&bytes);
    Ok(())
}

pub fn encode_snapshot(state: &WeaveState) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(state.particles.len() as u64).to_le_bytes());
    for p in &state.particles {
        push_json(&mut out, p)?;
    }
    out.extend_from_slice(&(state.strands.len() as u64).to_le_bytes());
    for s in &state.strands {
        push_json(&mut out, s)?;
    }
    let meta = SnapshotMeta {
        seq: state.seq,
        last_refinement: state.last_refinement,
        ingests_since_refinement: state.ingests_since_refinement,
        minted: state.minted,
        acknowledged: state.acknowledged.clone(),
    };
    push_json(&mut out, &meta)?;
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt(format!("snapshot truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn json<T: for<'de> Deserialize<'de>>(&mut self) -> Result<T> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        let at = self.pos;
        serde_json::from_slice(self.take(len)?).map_err(|e| Error::Corrupt(format!("snapshot entry at byte {at}: {e}")))
    }
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<WeaveState> {
    if bytes.len() < SNAPSHOT_MAGIC.len() + 2 + 8 + 4 {
        return Err(Error::Corrupt("snapshot too short".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().unwrap()) {
        return Err(Error::ChecksumMismatch { offset: body.len() as u64 });
    }
    if &body[..8] != SNAPSHOT_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u16::from_le_bytes(body[8..10].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut c = Cursor { bytes: body, pos: 10 };
    let n = c.u64()?;
    let mut particles: Vec<InsightParticle> = Vec::with_capacity(n.min(1 << 20) as usize);
    for _ in 0..n {
        particles.push(c.json()?);
    }
    let m = c.u64()?;
    let mut strands: Vec<RelationalStrand> = Vec::with_capacity(m.min(1 << 20) as usize);
    for _ in 0..m {
        strands.push(c.json()?);
    }
    let meta: SnapshotMeta = c.json()?;
    if c.pos != body.len() {
        return Err(Error::Corrupt("trailing bytes after snapshot metadata".into()));
    }
    Ok(WeaveState {
        seq: meta.seq,
        last_refinement: meta.last_refinement,
        ingests_since_refinement: meta.ingests_since_refinement,
        minted: meta.minted,
        acknowledged: meta.acknowledged,
        particles,
        strands,
    })
}

/// Writes a snapshot atomically: temp file, fsync, rename.
pub fn write_snapshot(path: &Path, state: &WeaveState) -> Result<()> {
    let bytes = encode_snapshot(state)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(&bytes)?;
        f.flush()?;
        f.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<WeaveState> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_snapshot(&bytes)
}
