//! Scan-level data model and file formats.
//!
//! A [`ScanSet`] is an ordered stack of equally sampled traces with one
//! axis value per trace: scan position in mm for a TOFD B-scan, beam angle
//! in degrees for a sectorial scan. Two encodings are supported:
//!
//! * binary "UTS1": magic `UTS1`, little-endian u32 version (=1),
//!   u32 trace count, u32 samples per trace, f64 sample rate, u8 kind
//!   (0 = tofd_bscan, 1 = sscan), the axis values as f64, then all samples
//!   as f32, trace-major;
//! * CSV: header `# fs=<Hz> kind=<...>`, one trace per row with the axis
//!   value in column 1.
//!
//! Samples are stored as f32 in both encodings, so parsing either file
//! yields the identical (quantized) scan.

use crate::error::{Error, Result};
use crate::signal::RfTrace;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    TofdBscan,
    Sscan,
}

impl ScanKind {
    fn to_u8(self) -> u8 {
        match self {
            ScanKind::TofdBscan => 0,
            ScanKind::Sscan => 1,
        }
    }

    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(ScanKind::TofdBscan),
            1 => Ok(ScanKind::Sscan),
            other => Err(Error::MalformedFile(format!("kind byte {other}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ScanKind::TofdBscan => "tofd_bscan",
            ScanKind::Sscan => "sscan",
        }
    }

    fn from_label(s: &str) -> Result<Self> {
        match s {
            "tofd_bscan" => Ok(ScanKind::TofdBscan),
            "sscan" => Ok(ScanKind::Sscan),
            other => Err(Error::MalformedFile(format!("kind label {other:?}"))),
        }
    }
}

/// Ordered collection of traces sharing sampling rate and length.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSet {
    pub traces: Vec<RfTrace>,
    pub kind: ScanKind,
    /// Per-trace metadata: position (mm) or beam angle (degrees).
    pub axis: Vec<f64>,
}

impl ScanSet {
    pub fn new(traces: Vec<RfTrace>, kind: ScanKind, axis: Vec<f64>) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::InvalidScan("no traces".into()));
        }
        if axis.len() != traces.len() {
            return Err(Error::InvalidScan(format!(
                "{} axis values for {} traces",
                axis.len(),
                traces.len()
            )));
        }
        let fs = traces[0].fs;
        let len = traces[0].len();
        for (i, t) in traces.iter().enumerate() {
            if t.fs != fs {
                return Err(Error::InvalidScan(format!(
                    "trace {i} fs {} differs from {fs}",
                    t.fs
                )));
            }
            if t.len() != len {
                return Err(Error::InvalidScan(format!(
                    "trace {i} length {} differs from {len}",
                    t.len()
                )));
            }
        }
        Ok(ScanSet { traces, kind, axis })
    }

    pub fn fs(&self) -> f64 {
        self.traces[0].fs
    }

    pub fn samples_per_trace(&self) -> usize {
        self.traces[0].len()
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

const MAGIC: &[u8; 4] = b"UTS1";
const VERSION: u32 = 1;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::MalformedFile(format!(
                "truncated while reading {field}"
            )));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }
}

/// Write a scan in the binary UTS1 layout.
pub fn write_scan(path: &Path, scan: &ScanSet) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(scan.len() as u32).to_le_bytes())?;
    w.write_all(&(scan.samples_per_trace() as u32).to_le_bytes())?;
    w.write_all(&scan.fs().to_le_bytes())?;
    w.write_all(&[scan.kind.to_u8()])?;
    for &a in &scan.axis {
        w.write_all(&a.to_le_bytes())?;
    }
    for trace in &scan.traces {
        for &s in &trace.samples {
            w.write_all(&(s as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a scan from the binary UTS1 layout. Errors name the field at which
/// the file stopped making sense.
pub fn read_scan(path: &Path) -> Result<ScanSet> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::MalformedFile(format!(
            "magic {:?}, expected UTS1",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::MalformedFile(format!(
            "version {version}, expected {VERSION}"
        )));
    }
    let trace_count = cur.u32("trace_count")? as usize;
    let samples_per_trace = cur.u32("samples_per_trace")? as usize;
    let fs = cur.f64("sample_rate_hz")?;
    let kind = ScanKind::from_u8(cur.u8("kind")?)?;
    if trace_count == 0 {
        return Err(Error::MalformedFile("trace_count is zero".into()));
    }
    let mut axis = Vec::with_capacity(trace_count);
    for i in 0..trace_count {
        axis.push(cur.f64(&format!("axis[{i}]"))?);
    }
    let mut traces = Vec::with_capacity(trace_count);
    for i in 0..trace_count {
        let raw = cur.take(4 * samples_per_trace, &format!("samples of trace {i}"))?;
        let samples: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        traces.push(RfTrace::new(samples, fs)?);
    }
    if cur.pos != data.len() {
        return Err(Error::MalformedFile(format!(
            "{} trailing bytes after samples",
            data.len() - cur.pos
        )));
    }
    ScanSet::new(traces, kind, axis)
}

/// Write a scan as CSV rows, one trace per row, axis value first. Samples
/// go through f32 so the CSV and binary encodings parse identically.
pub fn write_scan_csv(path: &Path, scan: &ScanSet) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# fs={} kind={}", scan.fs(), scan.kind.label())?;
    for (trace, &axis) in scan.traces.iter().zip(&scan.axis) {
        write!(w, "{axis}")?;
        for &s in &trace.samples {
            write!(w, ",{}", s as f32)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a scan from the CSV layout.
pub fn read_scan_csv(path: &Path) -> Result<ScanSet> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedFile("missing header row".into()))??;
    let rest = header
        .strip_prefix("# ")
        .ok_or_else(|| Error::MalformedFile("header row must start with '# '".into()))?;
    let mut fs = None;
    let mut kind = None;
    for part in rest.split_whitespace() {
        if let Some(v) = part.strip_prefix("fs=") {
            fs = Some(v.parse::<f64>().map_err(|_| {
                Error::MalformedFile(format!("fs value {v:?} in header"))
            })?);
        } else if let Some(v) = part.strip_prefix("kind=") {
            kind = Some(ScanKind::from_label(v)?);
        }
    }
    let fs = fs.ok_or_else(|| Error::MalformedFile("header missing fs".into()))?;
    let kind = kind.ok_or_else(|| Error::MalformedFile("header missing kind".into()))?;
    let mut traces = Vec::new();
    let mut axis = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let axis_value: f64 = fields
            .next()
            .ok_or_else(|| Error::MalformedFile(format!("row {row} empty")))?
            .trim()
            .parse()
            .map_err(|_| Error::MalformedFile(format!("axis value in row {row}")))?;
        let samples: Vec<f64> = fields
            .enumerate()
            .map(|(col, f)| {
                f.trim()
                    .parse::<f32>()
                    .map(|v| v as f64)
                    .map_err(|_| Error::MalformedFile(format!("sample {col} in row {row}")))
            })
            .collect::<Result<_>>()?;
        axis.push(axis_value);
        traces.push(RfTrace::new(samples, fs)?);
    }
    ScanSet::new(traces, kind, axis)
}
