//! Packet trace rows and their tab-separated text form.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Micros, StreamId, MICROS_PER_SEC};

pub const COLUMNS: [&str; 11] = [
    "time_s",
    "dir",
    "len",
    "stream",
    "seq",
    "frame",
    "pkt_idx",
    "pkts_in_frame",
    "frame_bytes",
    "tx_us",
    "drop_stage",
];

/// Columns a trace must carry; `drop_stage` is optional on input.
const MANDATORY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapturePoint {
    /// Server NIC: DL at transmission, UL at reception.
    ServerEgress,
    /// Output of the effects stage, before the Wi-Fi hop.
    PathEgress,
    /// Client NIC, DL only.
    ClientIngress,
}

impl CapturePoint {
    pub const ALL: [CapturePoint; 3] = [CapturePoint::ServerEgress, CapturePoint::PathEgress, CapturePoint::ClientIngress];

    pub fn as_str(self) -> &'static str {
        match self {
            CapturePoint::ServerEgress => "server_egress",
            CapturePoint::PathEgress => "path_egress",
            CapturePoint::ClientIngress => "client_ingress",
        }
    }

    /// File name inside a run directory.
    pub fn file_name(self) -> &'static str {
        match self {
            CapturePoint::ServerEgress => "trace.server.tsv",
            CapturePoint::PathEgress => "trace.path.tsv",
            CapturePoint::ClientIngress => "trace.client.tsv",
        }
    }
}

impl FromStr for CapturePoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CapturePoint::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::ConfigParse(format!("unknown capture point `{s}`")))
    }
}

impl fmt::Display for CapturePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "DL")]
    Dl,
    #[serde(rename = "UL")]
    Ul,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Dl => "DL",
            Direction::Ul => "UL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub time_us: Micros,
    pub dir: Direction,
    /// Bytes on the wire, shard header included.
    pub len: u32,
    pub stream: StreamId,
    pub seq: u64,
    pub frame: u64,
    pub pkt_idx: u32,
    pub pkts_in_frame: u32,
    pub frame_bytes: u64,
    pub tx_us: Micros,
    /// Eventual fate of the packet; `None` when delivered.
    pub drop_stage: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMeta {
    pub run_id: Option<String>,
    pub capture: Option<CapturePoint>,
}

pub fn format_time_s(us: Micros) -> String {
    format!("{}.{:06}", us / MICROS_PER_SEC, us % MICROS_PER_SEC)
}

/// Parses fixed-point seconds into microseconds without going through a
/// float, so exported times survive a round trip exactly.
pub fn parse_time_s(s: &str) -> Option<Micros> {
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut digits: String = frac.chars().take(6).collect();
    while digits.len() < 6 {
        digits.push('0');
    }
    let round_up = frac.as_bytes().get(6).is_some_and(|&b| b >= b'5');
    let us = whole.parse::<u64>().ok()? * MICROS_PER_SEC + digits.parse::<u64>().ok()?;
    Some(us + round_up as u64)
}

pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, meta: &TraceMeta) -> io::Result<Self> {
        let mut comment = Vec::new();
        if let Some(id) = &meta.run_id {
            comment.push(format!("run_id={id}"));
        }
        if let Some(c) = meta.capture {
            comment.push(format!("capture={c}"));
        }
        if !comment.is_empty() {
            writeln!(out, "# {}", comment.join(" "))?;
        }
        writeln!(out, "{}", COLUMNS.join("\t"))?;
        Ok(TraceWriter { out })
    }

    pub fn write_row(&mut self, r: &TraceRow) -> io::Result<()> {
        writeln!(
            self.out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            format_time_s(r.time_us),
            r.dir.as_str(),
            r.len,
            r.stream,
            r.seq,
            r.frame,
            r.pkt_idx,
            r.pkts_in_frame,
            r.frame_bytes,
            r.tx_us,
            r.drop_stage.as_deref().unwrap_or("")
        )
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_trace(rows: &[TraceRow], meta: &TraceMeta) -> String {
    let mut w = TraceWriter::new(Vec::new(), meta).expect("writing to memory");
    for r in rows {
        w.write_row(r).expect("writing to memory");
    }
    String::from_utf8(w.finish().expect("writing to memory")).expect("trace text is ASCII")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
    /// One message per skipped row, prefixed with its 1-based line number.
    pub warnings: Vec<String>,
}

/// Maps canonical column names to the names used by an external export.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnMap(pub HashMap<String, String>);

impl ColumnMap {
    fn external<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.0.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

pub fn parse_trace(text: &str) -> Result<ParsedTrace> {
    parse_trace_with(text, &ColumnMap::default())
}

pub fn parse_trace_with(text: &str, columns: &ColumnMap) -> Result<ParsedTrace> {
    let mut meta = TraceMeta {
        run_id: None,
        capture: None,
    };
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(Error::MissingColumn(COLUMNS[0].into())),
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) if l.starts_with('#') => {
                for kv in l[1..].split_whitespace() {
                    match kv.split_once('=') {
                        Some(("run_id", v)) => meta.run_id = Some(v.to_string()),
                        Some(("capture", v)) => meta.capture = v.parse().ok(),
                        _ => {}
                    }
                }
            }
            Some((_, l)) => break l,
        }
    };
    let names: Vec<&str> = header.split('\t').map(str::trim).collect();
    let mut index = [usize::MAX; 11];
    for (i, canonical) in COLUMNS.iter().enumerate() {
        let wanted = columns.external(canonical);
        match names.iter().position(|n| *n == wanted) {
            Some(p) => index[i] = p,
            None if i < MANDATORY => return Err(Error::MissingColumn(canonical.to_string())),
            None => {}
        }
    }
    let needed = index[..MANDATORY].iter().max().copied().unwrap_or(0) + 1;

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < needed {
            warnings.push(format!("line {}: expected {} fields, found {}", n + 1, needed, fields.len()));
            continue;
        }
        match parse_row(&fields, &index) {
            Ok(r) => rows.push(r),
            Err(reason) => warnings.push(format!("line {}: {reason}", n + 1)),
        }
    }
    Ok(ParsedTrace { meta, rows, warnings })
}

fn parse_row(f: &[&str], ix: &[usize; 11]) -> std::result::Result<TraceRow, String> {
    fn num<T: FromStr>(f: &[&str], i: usize, name: &str) -> std::result::Result<T, String> {
        f[i].trim().parse().map_err(|_| format!("bad {name} `{}`", f[i]))
    }
    let time_us = parse_time_s(f[ix[0]].trim()).ok_or_else(|| format!("bad time_s `{}`", f[ix[0]]))?;
    let dir = match f[ix[1]].trim() {
        "DL" | "dl" => Direction::Dl,
        "UL" | "ul" => Direction::Ul,
        other => return Err(format!("bad dir `{other}`")),
    };
    let stream = f[ix[3]].trim().parse::<StreamId>().map_err(|_| format!("bad stream `{}`", f[ix[3]]))?;
    let drop_stage = ix[10]
        .ne(&usize::MAX)
        .then(|| f.get(ix[10]).map(|s| s.trim()).unwrap_or(""))
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    Ok(TraceRow {
        time_us,
        dir,
        len: num(f, ix[2], "len")?,
        stream,
        seq: num(f, ix[4], "seq")?,
        frame: num(f, ix[5], "frame")?,
        pkt_idx: num(f, ix[6], "pkt_idx")?,
        pkts_in_frame: num(f, ix[7], "pkts_in_frame")?,
        frame_bytes: num(f, ix[8], "frame_bytes")?,
        tx_us: num(f, ix[9], "tx_us")?,
        drop_stage,
    })
}
