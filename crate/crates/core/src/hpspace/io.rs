//! Plain-text search-space definitions and the points CSV.
//!
//! A space file holds one `key = value` line per dimension:
//!
//! ```text
//! base_lr         = [1e-4, 1e-2] log
//! warmup_fraction = {0.02, 0.05, 0.10} discrete
//! ```
//!
//! Intervals take a `log` or `linear` scale tag; choice sets may carry an
//! optional `discrete` tag. `#` starts a comment.

use std::io::{Read, Write};
use std::path::Path;

use super::{HyperparameterPoint, Interval, Scale, SearchSpace};
use crate::error::{Error, Result};

pub const POINTS_HEADER: &str =
    "id,base_lr,beta1,beta2,warmup_fraction,weight_decay,label_smoothing,dropout";

enum Value {
    Interval(Interval),
    Choices(Vec<f64>),
}

fn parse_numbers(body: &str) -> std::result::Result<Vec<f64>, String> {
    body.split(',')
        .map(|s| {
            let s = s.trim();
            let (num, pct) = match s.strip_suffix('%') {
                Some(n) => (n.trim(), true),
                None => (s, false),
            };
            num.parse::<f64>()
                .map(|x| if pct { x / 100.0 } else { x })
                .map_err(|_| format!("bad number {s:?}"))
        })
        .collect()
}

fn parse_value(text: &str) -> std::result::Result<Value, String> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix('[') {
        let (body, tag) = rest.split_once(']').ok_or("unterminated interval")?;
        let nums = parse_numbers(body)?;
        let [lo, hi] = nums[..] else {
            return Err("an interval needs exactly two bounds".into());
        };
        let scale = match tag.trim() {
            "log" | "Log" => Scale::Log,
            "linear" | "Linear" | "" => Scale::Linear,
            other => return Err(format!("unknown scale tag {other:?}")),
        };
        Ok(Value::Interval(Interval { lo, hi, scale }))
    } else if let Some(rest) = text.strip_prefix('{') {
        let (body, tag) = rest.split_once('}').ok_or("unterminated choice set")?;
        match tag.trim() {
            "" | "discrete" | "Discrete" => {}
            other => return Err(format!("unexpected tag {other:?} on a choice set")),
        }
        Ok(Value::Choices(parse_numbers(body)?))
    } else {
        Err("expected [lo, hi] <scale> or {a, b, ...}".into())
    }
}

/// Parses a space definition. `origin` is only used in error messages.
pub fn parse_space(text: &str, origin: &Path) -> Result<SearchSpace> {
    let mut base_lr = None;
    let mut b1 = None;
    let mut b2 = None;
    let mut wd = None;
    let mut warmup = None;
    let mut ls = None;
    let mut dropout = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, line_no, "expected key = value"))?;
        let value = parse_value(value).map_err(|m| Error::parse(origin, line_no, m))?;
        let key = key.trim();
        let wrong = |want: &str| Error::parse(origin, line_no, format!("{key} must be {want}"));
        match (key, value) {
            ("base_lr", Value::Interval(iv)) => base_lr = Some(iv),
            ("one_minus_beta1", Value::Interval(iv)) => b1 = Some(iv),
            ("one_minus_beta2", Value::Interval(iv)) => b2 = Some(iv),
            ("weight_decay", Value::Interval(iv)) => wd = Some(iv),
            ("warmup_fraction", Value::Choices(c)) => warmup = Some(c),
            ("label_smoothing", Value::Choices(c)) => ls = Some(c),
            ("dropout", Value::Choices(c)) => dropout = Some(c),
            ("base_lr" | "one_minus_beta1" | "one_minus_beta2" | "weight_decay", _) => {
                return Err(wrong("an interval"))
            }
            ("warmup_fraction" | "label_smoothing" | "dropout", _) => {
                return Err(wrong("a choice set"))
            }
            _ => return Err(Error::parse(origin, line_no, format!("unknown key {key:?}"))),
        }
    }

    let missing = |k: &str| Error::parse(origin, 0, format!("missing key {k}"));
    let space = SearchSpace {
        base_lr: base_lr.ok_or_else(|| missing("base_lr"))?,
        one_minus_beta1: b1.ok_or_else(|| missing("one_minus_beta1"))?,
        one_minus_beta2: b2.ok_or_else(|| missing("one_minus_beta2"))?,
        warmup_fraction: warmup.ok_or_else(|| missing("warmup_fraction"))?,
        weight_decay: wd.ok_or_else(|| missing("weight_decay"))?,
        label_smoothing: ls.ok_or_else(|| missing("label_smoothing"))?,
        dropout: dropout.ok_or_else(|| missing("dropout"))?,
    };
    space.validate()?;
    Ok(space)
}

pub fn space_to_string(space: &SearchSpace) -> String {
    let iv = |i: &Interval| {
        let tag = match i.scale {
            Scale::Log => "log",
            Scale::Linear => "linear",
        };
        format!("[{:?}, {:?}] {tag}", i.lo, i.hi)
    };
    let ch = |c: &[f64]| {
        let items: Vec<String> = c.iter().map(|x| format!("{x:?}")).collect();
        format!("{{{}}} discrete", items.join(", "))
    };
    format!(
        "base_lr = {}\none_minus_beta1 = {}\none_minus_beta2 = {}\nwarmup_fraction = {}\nweight_decay = {}\nlabel_smoothing = {}\ndropout = {}\n",
        iv(&space.base_lr),
        iv(&space.one_minus_beta1),
        iv(&space.one_minus_beta2),
        ch(&space.warmup_fraction),
        iv(&space.weight_decay),
        ch(&space.label_smoothing),
        ch(&space.dropout),
    )
}

pub fn write_points<W: Write>(out: W, points: &[HyperparameterPoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a points CSV. `origin` is only used in error messages.
pub fn read_points<R: Read>(input: R, origin: &Path) -> Result<Vec<HyperparameterPoint>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r
        .headers()
        .map_err(|e| Error::parse(origin, 1, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != POINTS_HEADER {
        return Err(Error::parse(
            origin,
            1,
            format!("expected header {POINTS_HEADER:?}, found {headers:?}"),
        ));
    }
    let mut points: Vec<HyperparameterPoint> = Vec::new();
    for rec in r.deserialize() {
        let p: HyperparameterPoint = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(origin, line, e.to_string())
        })?;
        p.validate()?;
        if points.iter().any(|q| q.id == p.id) {
            return Err(Error::InvalidArgument(format!("duplicate point id {}", p.id)));
        }
        points.push(p);
    }
    Ok(points)
}
