//! Portable text layout for network parameters.
//!
//! ```text
//! ssil-mlp v1
//! dims 3 256 2
//! squash tanh 1
//! weight 0
//! <one line per output row, `in` floats>
//! bias 0
//! <out floats>
//! ...
//! ```
//!
//! Floats are written in shortest round-trip form, so load(save(net)) == net exactly.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Mlp, OutputSquash};
use crate::error::{Error, Result};

const HEADER: &str = "ssil-mlp v1";

pub fn to_text(net: &Mlp) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    writeln!(out, "dims {}", join(net.dims().iter())).unwrap();
    writeln!(out, "squash {}", net.squash()).unwrap();
    for (l, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
        writeln!(out, "weight {l}").unwrap();
        for row in w.rows() {
            writeln!(out, "{}", join(row.iter())).unwrap();
        }
        writeln!(out, "bias {l}").unwrap();
        writeln!(out, "{}", join(b.iter())).unwrap();
    }
    out
}

pub fn from_text(text: &str, origin: &Path) -> Result<Mlp> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let fail = |line: usize, msg: String| Error::Format { path: origin.to_path_buf(), line, msg };
    let mut next = |what: &str| lines.next().ok_or_else(|| fail(0, format!("unexpected end of file, expected {what}")));

    let (n, header) = next("header")?;
    if header != HEADER {
        return Err(fail(n, format!("expected `{HEADER}`, found `{header}`")));
    }
    let (n, dims_line) = next("dims")?;
    let dims: Vec<usize> = dims_line
        .strip_prefix("dims ")
        .ok_or_else(|| fail(n, "expected `dims ...`".into()))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| fail(n, format!("bad width `{t}`: {e}"))))
        .collect::<Result<_>>()?;
    if dims.len() < 2 {
        return Err(fail(n, "need at least two widths".into()));
    }
    let (n, squash_line) = next("squash")?;
    let squash = match squash_line.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["squash", "identity"] => OutputSquash::Identity,
        ["squash", "tanh", bound] => OutputSquash::Tanh {
            bound: bound.parse().map_err(|e| fail(n, format!("bad tanh bound: {e}")))?,
        },
        _ => return Err(fail(n, format!("unknown squash `{squash_line}`"))),
    };

    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (l, gap) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (gap[0], gap[1]);
        let (n, tag) = next("weight tag")?;
        if tag != format!("weight {l}") {
            return Err(fail(n, format!("expected `weight {l}`, found `{tag}`")));
        }
        let mut flat = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_out {
            let (n, row) = next("weight row")?;
            let vals = parse_floats(row, fan_in).map_err(|m| fail(n, m))?;
            flat.extend(vals);
        }
        let (n, tag) = next("bias tag")?;
        if tag != format!("bias {l}") {
            return Err(fail(n, format!("expected `bias {l}`, found `{tag}`")));
        }
        let (n, row) = next("bias row")?;
        let b = parse_floats(row, fan_out).map_err(|m| fail(n, m))?;
        weights.push(Array2::from_shape_vec((fan_out, fan_in), flat).expect("row count checked"));
        biases.push(Array1::from(b));
    }
    Mlp::from_parts(weights, biases, squash)
}

pub fn save(net: &Mlp, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Mlp> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}

pub(crate) fn join<T: std::fmt::Display>(it: impl Iterator<Item = T>) -> String {
    let mut s = String::new();
    for (i, v) in it.enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

pub(crate) fn parse_floats(line: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let vals = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad float `{t}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if vals.len() != expected {
        return Err(format!("expected {expected} values, found {}", vals.len()));
    }
    Ok(vals)
}
