//! Memory-access trace files.
//!
//! Text (`.mtr`): one record per line, `R|W <hex address> [instr index]`,
//! `#` starts a comment. An optional first line
//! `#!mtr version=1 address_bits=32 records=N` declares a header; when
//! `records` is given the body must match it.
//!
//! Binary (`.mtb`), little-endian throughout:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `MTRB`                  |
//! | 4      | 2    | version (1)                   |
//! | 6      | 1    | address bits                  |
//! | 7      | 1    | reserved, zero                |
//! | 8      | 8    | record count                  |
//! | 16     | 17×n | records: kind u8 (0 = R, 1 = W), address u64, instr u64 |
//!
//! Both readers stream; memory use does not grow with trace length.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::types::{AccessKind, AccessRecord};

pub const MAGIC: [u8; 4] = *b"MTRB";
pub const VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 16;
pub const RECORD_BYTES: usize = 17;
pub const DEFAULT_ADDRESS_BITS: u8 = 32;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("record {index}: {msg}")]
    BadRecord { index: u64, msg: String },
    #[error("bad trace header: {0}")]
    Header(String),
    #[error("unsupported trace version {0}")]
    Version(u16),
    #[error("address {address:#x} is outside the {mem_size}-byte memory")]
    AddressOutOfRange { address: u64, mem_size: u64 },
    #[error("header declares {declared} records but the body holds {actual}")]
    CountMismatch { declared: u64, actual: u64 },
    #[error("record {index}: instruction index {instr} is below the previous one ({prev})")]
    InstrNotMonotonic { index: u64, instr: u64, prev: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceHeader {
    pub version: u16,
    pub address_bits: u8,
    pub record_count: Option<u64>,
}

impl Default for TraceHeader {
    fn default() -> Self {
        Self {
            version: VERSION,
            address_bits: DEFAULT_ADDRESS_BITS,
            record_count: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Text,
    Binary,
}

impl TraceFormat {
    /// `.mtb` is binary, anything else text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mtb") => TraceFormat::Binary,
            _ => TraceFormat::Text,
        }
    }
}

/// Reader settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Reject addresses at or above this bound.
    pub mem_size_bytes: Option<u64>,
    /// Used to synthesize instruction indices when a text line omits one.
    pub mem_ops_per_instruction: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            mem_size_bytes: None,
            mem_ops_per_instruction: 0.4,
        }
    }
}

/// Instruction index implied by a record's position in the trace.
pub fn instr_for_ordinal(ordinal: u64, mem_ops_per_instruction: f64) -> u64 {
    (ordinal as f64 / mem_ops_per_instruction + 1e-9).floor() as u64
}

/// Per-record checks shared by both readers.
#[derive(Debug, Clone, Copy)]
struct Checker {
    opts: TraceOptions,
    address_limit: Option<u64>,
    prev_instr: u64,
    count: u64,
}

impl Checker {
    fn new(opts: TraceOptions, header: &TraceHeader) -> Self {
        let by_bits = (header.address_bits < 64).then(|| 1u64 << header.address_bits);
        let address_limit = match (by_bits, opts.mem_size_bytes) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Self {
            opts,
            address_limit,
            prev_instr: 0,
            count: 0,
        }
    }

    fn check(&mut self, rec: &AccessRecord) -> Result<(), TraceError> {
        if let Some(limit) = self.address_limit {
            if rec.address >= limit {
                return Err(TraceError::AddressOutOfRange {
                    address: rec.address,
                    mem_size: limit,
                });
            }
        }
        if rec.instr_index < self.prev_instr {
            return Err(TraceError::InstrNotMonotonic {
                index: self.count,
                instr: rec.instr_index,
                prev: self.prev_instr,
            });
        }
        self.prev_instr = rec.instr_index;
        self.count += 1;
        Ok(())
    }
}

fn parse_u64(text: &str) -> Option<u64> {
    match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => u64::from_str_radix(text, 16).ok(),
    }
}

/// Parse one text record line (no comments, not blank). `ordinal` is the
/// record's position, used when the instruction index is absent.
pub fn parse_text_record(line: &str, ordinal: u64, mem_ops_per_instruction: f64) -> Result<AccessRecord, String> {
    let mut fields = line.split_whitespace();
    let kind = match fields.next() {
        Some("R" | "r") => AccessKind::Read,
        Some("W" | "w") => AccessKind::Write,
        Some(other) => return Err(format!("unknown access kind {other:?}")),
        None => return Err("empty record".into()),
    };
    let addr_text = fields.next().ok_or("missing address")?;
    let address = parse_u64(addr_text).ok_or_else(|| format!("bad address {addr_text:?}"))?;
    let instr_index = match fields.next() {
        Some(t) => t.parse().map_err(|_| format!("bad instruction index {t:?}"))?,
        None => instr_for_ordinal(ordinal, mem_ops_per_instruction),
    };
    if let Some(extra) = fields.next() {
        return Err(format!("unexpected field {extra:?}"));
    }
    Ok(AccessRecord {
        kind,
        address,
        instr_index,
    })
}

fn parse_text_header(line: &str) -> Result<TraceHeader, TraceError> {
    let mut header = TraceHeader::default();
    for field in line.trim_start_matches("#!mtr").split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| TraceError::Header(format!("expected key=value, got {field:?}")))?;
        let bad = || TraceError::Header(format!("bad value for {key}: {value:?}"));
        match key {
            "version" => header.version = value.parse().map_err(|_| bad())?,
            "address_bits" => header.address_bits = value.parse().map_err(|_| bad())?,
            "records" => header.record_count = Some(value.parse().map_err(|_| bad())?),
            _ => return Err(TraceError::Header(format!("unknown header key {key:?}"))),
        }
    }
    if header.version != VERSION {
        return Err(TraceError::Version(header.version));
    }
    if header.address_bits == 0 || header.address_bits > 64 {
        return Err(TraceError::Header(format!("address_bits {} out of range", header.address_bits)));
    }
    Ok(header)
}

/// Streaming reader for the text format.
pub struct TextReader<R> {
    input: R,
    header: TraceHeader,
    checker: Checker,
    line_no: u64,
    buf: String,
    pending: Option<String>,
    done: bool,
}

impl<R: BufRead> TextReader<R> {
    pub fn new(mut input: R, opts: TraceOptions) -> Result<Self, TraceError> {
        let mut first = String::new();
        input.read_line(&mut first)?;
        let (header, pending, line_no) = if first.starts_with("#!mtr") {
            (parse_text_header(first.trim_end())?, None, 1)
        } else {
            (TraceHeader::default(), (!first.is_empty()).then_some(first), 0)
        };
        Ok(Self {
            input,
            header,
            checker: Checker::new(opts, &header),
            line_no,
            buf: String::new(),
            pending,
            done: false,
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    fn next_line(&mut self) -> Result<bool, TraceError> {
        if let Some(p) = self.pending.take() {
            self.buf = p;
        } else {
            self.buf.clear();
            if self.input.read_line(&mut self.buf)? == 0 {
                return Ok(false);
            }
        }
        self.line_no += 1;
        Ok(true)
    }

    fn step(&mut self) -> Result<Option<AccessRecord>, TraceError> {
        loop {
            if !self.next_line()? {
                if let Some(declared) = self.header.record_count {
                    if declared != self.checker.count {
                        return Err(TraceError::CountMismatch {
                            declared,
                            actual: self.checker.count,
                        });
                    }
                }
                return Ok(None);
            }
            let body = self.buf.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let rec = parse_text_record(body, self.checker.count, self.checker.opts.mem_ops_per_instruction)
                .map_err(|msg| TraceError::Parse { line: self.line_no, msg })?;
            self.checker.check(&rec).map_err(|e| match e {
                TraceError::AddressOutOfRange { address, mem_size } => TraceError::Parse {
                    line: self.line_no,
                    msg: format!("address {address:#x} is outside the {mem_size}-byte memory"),
                },
                other => other,
            })?;
            return Ok(Some(rec));
        }
    }
}

impl<R: BufRead> Iterator for TextReader<R> {
    type Item = Result<AccessRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.step().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

pub fn encode_header(header: &TraceHeader, record_count: u64) -> [u8; HEADER_BYTES] {
    let mut out = [0u8; HEADER_BYTES];
    out[0..4].copy_from_slice(&MAGIC);
    out[4..6].copy_from_slice(&header.version.to_le_bytes());
    out[6] = header.address_bits;
    out[8..16].copy_from_slice(&record_count.to_le_bytes());
    out
}

pub fn decode_header(bytes: &[u8; HEADER_BYTES]) -> Result<TraceHeader, TraceError> {
    if bytes[0..4] != MAGIC {
        return Err(TraceError::Header("missing MTRB magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(TraceError::Version(version));
    }
    let address_bits = bytes[6];
    if address_bits == 0 || address_bits > 64 {
        return Err(TraceError::Header(format!("address_bits {address_bits} out of range")));
    }
    Ok(TraceHeader {
        version,
        address_bits,
        record_count: Some(u64::from_le_bytes(bytes[8..16].try_into().unwrap())),
    })
}

pub fn encode_record(rec: &AccessRecord) -> [u8; RECORD_BYTES] {
    let mut out = [0u8; RECORD_BYTES];
    out[0] = u8::from(rec.kind.is_write());
    out[1..9].copy_from_slice(&rec.address.to_le_bytes());
    out[9..17].copy_from_slice(&rec.instr_index.to_le_bytes());
    out
}

pub fn decode_record(bytes: &[u8; RECORD_BYTES], index: u64) -> Result<AccessRecord, TraceError> {
    let kind = match bytes[0] {
        0 => AccessKind::Read,
        1 => AccessKind::Write,
        k => {
            return Err(TraceError::BadRecord {
                index,
                msg: format!("unknown access kind byte {k}"),
            })
        }
    };
    Ok(AccessRecord {
        kind,
        address: u64::from_le_bytes(bytes[1..9].try_into().unwrap()),
        instr_index: u64::from_le_bytes(bytes[9..17].try_into().unwrap()),
    })
}

/// Streaming reader for the binary format.
pub struct BinaryReader<R> {
    input: R,
    header: TraceHeader,
    checker: Checker,
    remaining: u64,
    done: bool,
}

impl<R: Read> BinaryReader<R> {
    pub fn new(mut input: R, opts: TraceOptions) -> Result<Self, TraceError> {
        let mut raw = [0u8; HEADER_BYTES];
        input.read_exact(&mut raw).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => TraceError::Header("file shorter than the 16-byte header".into()),
            _ => e.into(),
        })?;
        let header = decode_header(&raw)?;
        Ok(Self {
            input,
            checker: Checker::new(opts, &header),
            remaining: header.record_count.unwrap_or(0),
            header,
            done: false,
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    fn step(&mut self) -> Result<Option<AccessRecord>, TraceError> {
        let index = self.checker.count;
        let declared = self.header.record_count.unwrap_or(0);
        if self.remaining == 0 {
            let mut probe = [0u8; 1];
            if self.input.read(&mut probe)? != 0 {
                return Err(TraceError::BadRecord {
                    index,
                    msg: format!("trailing bytes after the {declared} declared records"),
                });
            }
            return Ok(None);
        }
        let mut raw = [0u8; RECORD_BYTES];
        self.input.read_exact(&mut raw).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => TraceError::CountMismatch { declared, actual: index },
            _ => e.into(),
        })?;
        let rec = decode_record(&raw, index)?;
        self.checker.check(&rec)?;
        self.remaining -= 1;
        Ok(Some(rec))
    }
}

impl<R: Read> Iterator for BinaryReader<R> {
    type Item = Result<AccessRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.step().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

pub type RecordStream = Box<dyn Iterator<Item = Result<AccessRecord, TraceError>> + Send>;

/// Open a trace file, choosing the format by extension.
pub fn open(path: &Path, opts: TraceOptions) -> Result<RecordStream, TraceError> {
    let file = BufReader::new(File::open(path)?);
    Ok(match TraceFormat::from_path(path) {
        TraceFormat::Binary => Box::new(BinaryReader::new(file, opts)?),
        TraceFormat::Text => Box::new(TextReader::new(file, opts)?),
    })
}

/// Read a whole trace into memory.
pub fn read_all(path: &Path, opts: TraceOptions) -> Result<Vec<AccessRecord>, TraceError> {
    open(path, opts)?.collect()
}

pub fn format_text_record(rec: &AccessRecord) -> String {
    format!("{} {:#010x} {}", rec.kind, rec.address, rec.instr_index)
}

pub fn write_text<W: Write>(mut out: W, records: &[AccessRecord]) -> io::Result<()> {
    writeln!(out, "#!mtr version={VERSION} address_bits={DEFAULT_ADDRESS_BITS} records={}", records.len())?;
    for rec in records {
        writeln!(out, "{}", format_text_record(rec))?;
    }
    out.flush()
}

pub fn write_binary<W: Write>(mut out: W, records: &[AccessRecord]) -> io::Result<()> {
    out.write_all(&encode_header(&TraceHeader::default(), records.len() as u64))?;
    for rec in records {
        out.write_all(&encode_record(rec))?;
    }
    out.flush()
}

/// Write a trace file, choosing the format by extension.
pub fn write_file(path: &Path, records: &[AccessRecord]) -> Result<(), TraceError> {
    let out = BufWriter::new(File::create(path)?);
    match TraceFormat::from_path(path) {
        TraceFormat::Binary => write_binary(out, records)?,
        TraceFormat::Text => write_text(out, records)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn text(src: &str) -> Result<Vec<AccessRecord>, TraceError> {
        TextReader::new(src.as_bytes(), TraceOptions::default())?.collect()
    }

    #[test]
    fn parses_write_line() {
        let recs = text("W 0x00001040 7\n").unwrap();
        assert_eq!(recs, [AccessRecord::write(0x1040, 7)]);
    }

    #[test]
    fn empty_body_with_header() {
        assert!(text("#!mtr version=1 address_bits=32 records=0\n").unwrap().is_empty());
        assert!(text("").unwrap().is_empty());
    }

    #[test]
    fn unknown_kind_names_line() {
        match text("X 0x10 1\n") {
            Err(TraceError::Parse { line: 1, msg }) => assert!(msg.contains("X")),
            other => panic!("{other:?}"),
        }
        match text("#!mtr version=1\n# note\nR 0x0 1\nQ 0x4 2\n") {
            Err(TraceError::Parse { line: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comments_and_implicit_instr() {
        let recs = text("# header comment\nR 40 # trailing\n\nW 0x80\nr 0xc0\n").unwrap();
        assert_eq!(recs.iter().map(|r| r.instr_index).collect::<Vec<_>>(), [0, 2, 5]);
        assert_eq!(recs[0].address, 0x40);
        assert!(recs[1].kind.is_write());
    }

    #[test]
    fn implicit_instr_is_exact_at_multiples() {
        for i in 0..1000u64 {
            assert_eq!(instr_for_ordinal(i, 0.4), i * 5 / 2, "ordinal {i}");
        }
    }

    #[test]
    fn record_count_is_enforced() {
        assert!(matches!(
            text("#!mtr version=1 records=2\nR 0x0 1\n"),
            Err(TraceError::CountMismatch { declared: 2, actual: 1 })
        ));
    }

    #[test]
    fn out_of_range_address_errors() {
        let opts = TraceOptions {
            mem_size_bytes: Some(0x1000),
            ..Default::default()
        };
        let r: Result<Vec<_>, _> = TextReader::new("R 0x1000 0\n".as_bytes(), opts).unwrap().collect();
        assert!(matches!(r, Err(TraceError::Parse { line: 1, .. })));
        assert!(matches!(text("R 0x100000000 0\n"), Err(TraceError::Parse { line: 1, .. })));
    }

    #[test]
    fn decreasing_instr_errors() {
        assert!(matches!(text("R 0 5\nR 4 3\n"), Err(TraceError::InstrNotMonotonic { index: 1, .. })));
    }

    #[test]
    fn binary_golden_bytes() {
        let recs = [AccessRecord::write(0x1040, 7), AccessRecord::read(0xdeadbeef, 0x0102030405060708)];
        let mut bytes = Vec::new();
        write_binary(&mut bytes, &recs).unwrap();
        #[rustfmt::skip]
        let golden: Vec<u8> = vec![
            b'M', b'T', b'R', b'B', 0x01, 0x00, 0x20, 0x00,
            0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
            0x01, 0x40, 0x10, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
            0x07, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
            0x00, 0xef, 0xbe, 0xad, 0xde, 0x00, 0x00, 0x00, 0x00,
            0x08, 0x07, 0x06, 0x05, 0x04, 0x03, 0x02, 0x01,
        ];
        assert_eq!(bytes, golden);
        assert_eq!(bytes.len(), HEADER_BYTES + 2 * RECORD_BYTES);
        let back: Vec<_> = BinaryReader::new(&bytes[..], TraceOptions::default()).unwrap().collect::<Result<_, _>>().unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn binary_rejects_damage() {
        let mut bytes = Vec::new();
        write_binary(&mut bytes, &[AccessRecord::read(0, 0)]).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(BinaryReader::new(&bad_magic[..], TraceOptions::default()), Err(TraceError::Header(_))));
        let truncated = &bytes[..bytes.len() - 1];
        let r: Result<Vec<_>, _> = BinaryReader::new(truncated, TraceOptions::default()).unwrap().collect();
        assert!(matches!(r, Err(TraceError::CountMismatch { declared: 1, actual: 0 })));
        let mut trailing = bytes.clone();
        trailing.push(0);
        let r: Result<Vec<_>, _> = BinaryReader::new(&trailing[..], TraceOptions::default()).unwrap().collect();
        assert!(matches!(r, Err(TraceError::BadRecord { .. })));
        let mut bad_kind = bytes;
        bad_kind[HEADER_BYTES] = 9;
        let r: Result<Vec<_>, _> = BinaryReader::new(&bad_kind[..], TraceOptions::default()).unwrap().collect();
        assert!(matches!(r, Err(TraceError::BadRecord { index: 0, .. })));
    }

    fn record() -> impl Strategy<Value = (bool, u32, u32)> {
        (any::<bool>(), any::<u32>(), 0u32..1000)
    }

    fn build(raw: &[(bool, u32, u32)]) -> Vec<AccessRecord> {
        let mut instr = 0u64;
        raw.iter()
            .map(|&(w, addr, gap)| {
                instr += u64::from(gap);
                let addr = u64::from(addr);
                if w {
                    AccessRecord::write(addr, instr)
                } else {
                    AccessRecord::read(addr, instr)
                }
            })
            .collect()
    }

    proptest! {
        #[test]
        fn text_round_trip(raw in prop::collection::vec(record(), 0..200)) {
            let recs = build(&raw);
            let mut bytes = Vec::new();
            write_text(&mut bytes, &recs).unwrap();
            prop_assert_eq!(text(std::str::from_utf8(&bytes).unwrap()).unwrap(), recs);
        }

        #[test]
        fn binary_round_trip(raw in prop::collection::vec(record(), 0..200)) {
            let recs = build(&raw);
            let mut bytes = Vec::new();
            write_binary(&mut bytes, &recs).unwrap();
            let back: Vec<_> = BinaryReader::new(&bytes[..], TraceOptions::default()).unwrap().collect::<Result<_, _>>().unwrap();
            prop_assert_eq!(back, recs);
        }
    }
}
