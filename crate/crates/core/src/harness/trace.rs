//! Per-round trace records and their CSV form.
//!
//! Column order: `round, cost, realized_slots, used, skipped, unassigned`,
//! then for every agent `i` the block
//! `a{i}_x0.., a{i}_u0.., a{i}_e0.., a{i}_d2_self, a{i}_d2_cross, a{i}_p_h,
//! a{i}_p_0, a{i}_q_h, a{i}_q_0, a{i}_granted, a{i}_sent, a{i}_skip,
//! a{i}_has_agg, a{i}_lost`. Floats carry 17 significant digits.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRound {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Own estimation error `x_i − x̂_ii`.
    pub e: Vec<f64>,
    /// `d²(ê_i)` in the one-round noise metric.
    pub d2_self: f64,
    /// `Σ_{j≠i} d²(x_i − x̂_ji)`: how wrong the other agents are about `i`.
    pub d2_cross: f64,
    pub p_h: f64,
    pub p_0: f64,
    pub q_h: u32,
    pub q_0: u32,
    pub granted: bool,
    pub sent: bool,
    /// Granted, held the aggregate, and announced the slot as unused.
    pub skip: bool,
    /// Held the final aggregate of the previous round.
    pub has_agg: bool,
    /// Receivers that missed this agent's message.
    pub lost: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub round: u64,
    pub cost: f64,
    pub realized_slots: f64,
    pub used: usize,
    pub skipped: usize,
    pub unassigned: usize,
    pub agents: Vec<AgentRound>,
}

impl TraceRecord {
    pub fn m_c(&self) -> usize {
        self.used + self.skipped + self.unassigned
    }

    pub fn sq_norm(&self) -> f64 {
        self.agents.iter().flat_map(|a| a.x.iter()).map(|v| v * v).sum()
    }
}

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn header(agents: usize, n: usize, m: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["round", "cost", "realized_slots", "used", "skipped", "unassigned"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 0..agents {
        cols.extend((0..n).map(|c| format!("a{i}_x{c}")));
        cols.extend((0..m).map(|c| format!("a{i}_u{c}")));
        cols.extend((0..n).map(|c| format!("a{i}_e{c}")));
        for name in [
            "d2_self", "d2_cross", "p_h", "p_0", "q_h", "q_0", "granted", "sent", "skip", "has_agg", "lost",
        ] {
            cols.push(format!("a{i}_{name}"));
        }
    }
    cols
}

fn row(record: &TraceRecord) -> Vec<String> {
    let mut out = vec![
        record.round.to_string(),
        fmt_float(record.cost),
        fmt_float(record.realized_slots),
        record.used.to_string(),
        record.skipped.to_string(),
        record.unassigned.to_string(),
    ];
    for a in &record.agents {
        out.extend(a.x.iter().chain(&a.u).chain(&a.e).map(|v| fmt_float(*v)));
        out.extend([
            fmt_float(a.d2_self),
            fmt_float(a.d2_cross),
            fmt_float(a.p_h),
            fmt_float(a.p_0),
            a.q_h.to_string(),
            a.q_0.to_string(),
            fmt_bool(a.granted).into(),
            fmt_bool(a.sent).into(),
            fmt_bool(a.skip).into(),
            fmt_bool(a.has_agg).into(),
            a.lost.to_string(),
        ]);
    }
    out
}

pub fn write_trace<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = records.first() else {
        return Err(Error::Parse("cannot write an empty trace".into()));
    };
    let n = first.agents.first().map_or(0, |a| a.x.len());
    let m = first.agents.first().map_or(0, |a| a.u.len());
    w.write_record(header(first.agents.len(), n, m))?;
    for r in records {
        w.write_record(row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(std::io::BufWriter::new(file), records)
}

struct Layout {
    agents: usize,
    n: usize,
    m: usize,
    index: HashMap<String, usize>,
}

impl Layout {
    fn from_header(h: &csv::StringRecord) -> Result<Self> {
        let index: HashMap<String, usize> = h.iter().enumerate().map(|(i, s)| (s.to_string(), i)).collect();
        let count = |pred: &dyn Fn(&str) -> bool| h.iter().filter(|s| pred(s)).count();
        let agents = count(&|s| s.ends_with("_granted"));
        let n = count(&|s| s.starts_with("a0_x"));
        let m = count(&|s| s.starts_with("a0_u"));
        let expected = header(agents, n, m);
        if agents == 0 || h.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Parse(
                "trace header does not match the documented column order".into(),
            ));
        }
        Ok(Self { agents, n, m, index })
    }

    fn col(&self, name: &str) -> usize {
        self.index[name]
    }
}

fn field(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<&str> {
    rec.get(idx)
        .ok_or_else(|| Error::Parse(format!("line {line}: missing column {idx}")))
}

fn parse<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<T> {
    let s = field(rec, idx, line)?;
    s.parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse `{s}` in column {idx}")))
}

fn parse_bool(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<bool> {
    match field(rec, idx, line)? {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse(format!("line {line}: expected 0/1, got `{other}`"))),
    }
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let layout = Layout::from_header(rdr.headers()?)?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line + 2;
        let mut agents = Vec::with_capacity(layout.agents);
        for i in 0..layout.agents {
            let x0 = layout.col(&format!("a{i}_x0"));
            let floats = |start: usize, len: usize| -> Result<Vec<f64>> {
                (start..start + len).map(|c| parse(&rec, c, line)).collect()
            };
            let x = floats(x0, layout.n)?;
            let u = floats(x0 + layout.n, layout.m)?;
            let e = floats(x0 + layout.n + layout.m, layout.n)?;
            let c = |name: &str| layout.col(&format!("a{i}_{name}"));
            agents.push(AgentRound {
                x,
                u,
                e,
                d2_self: parse(&rec, c("d2_self"), line)?,
                d2_cross: parse(&rec, c("d2_cross"), line)?,
                p_h: parse(&rec, c("p_h"), line)?,
                p_0: parse(&rec, c("p_0"), line)?,
                q_h: parse(&rec, c("q_h"), line)?,
                q_0: parse(&rec, c("q_0"), line)?,
                granted: parse_bool(&rec, c("granted"), line)?,
                sent: parse_bool(&rec, c("sent"), line)?,
                skip: parse_bool(&rec, c("skip"), line)?,
                has_agg: parse_bool(&rec, c("has_agg"), line)?,
                lost: parse(&rec, c("lost"), line)?,
            });
        }
        out.push(TraceRecord {
            round: parse(&rec, 0, line)?,
            cost: parse(&rec, 1, line)?,
            realized_slots: parse(&rec, 2, line)?,
            used: parse(&rec, 3, line)?,
            skipped: parse(&rec, 4, line)?,
            unassigned: parse(&rec, 5, line)?,
            agents,
        });
    }
    for (k, r) in out.iter().enumerate() {
        if r.round != k as u64 {
            return Err(Error::Parse(format!(
                "trace rounds must run 0, 1, 2, ...; found {} at row {k}",
                r.round
            )));
        }
    }
    Ok(out)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>> {
    read_trace(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TraceRecord> {
        let agent = |s: f64| AgentRound {
            x: vec![s, -s, 1.0 / 3.0, f64::MIN_POSITIVE],
            u: vec![0.1 + 0.2],
            e: vec![1e-300, 0.0, -0.0, 2.5],
            d2_self: std::f64::consts::PI,
            d2_cross: 7.0,
            p_h: 0.5,
            p_0: 1.0 - 1e-16,
            q_h: 8,
            q_0: 15,
            granted: true,
            sent: false,
            skip: true,
            has_agg: true,
            lost: 2,
        };
        (0..3)
            .map(|k| TraceRecord {
                round: k,
                cost: 1.0 / (k as f64 + 7.0),
                realized_slots: 199.5,
                used: 1,
                skipped: 1,
                unassigned: 0,
                agents: vec![agent(k as f64 * 0.1), agent(-1e-7)],
            })
            .collect()
    }

    #[test]
    fn roundtrip_is_exact() {
        let records = sample();
        let mut buf = Vec::new();
        write_trace(&mut buf, &records).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back, records);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("round,cost,realized_slots,used,skipped,unassigned,a0_x0,"));
        assert!(text.contains("3.3333333333333331e-1"));
    }

    #[test]
    fn rejects_damaged_traces() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let swapped = text.replacen("used,skipped", "skipped,used", 1);
        assert!(read_trace(swapped.as_bytes()).is_err());
        let garbled = text.replacen("1.4285714285714285e-1", "abc", 1);
        assert!(matches!(read_trace(garbled.as_bytes()), Err(Error::Parse(_))));
        assert!(write_trace(Vec::new(), &[]).is_err());
    }
}
