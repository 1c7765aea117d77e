//! Plain-text dataset files.
//!
//! ```text
//! itlm-dataset v1 d=2 n=3 link=identity truth=1 models=1
//! model 0 0x1.6a09e667f3bcdp-1 -0x1.6a09e667f3bcdp-1
//! 0x1.8p+0 -0x1p-2 0x1.2p+1 1 0
//! ...
//! ```
//!
//! The header gives `d`, `n` and flags. With `truth=1`, `models` lines list
//! the ground-truth vectors, and every row ends with its clean flag and its
//! component id (`-` for none). Each row holds `d` feature values then the
//! response. All reals are hexadecimal float literals, so a write/read cycle
//! is bit-exact. The piecewise link is written `piecewise:<neg>:<pos>`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::{Dataset, LinkFunction, Truth};
use crate::hexfloat;

const MAGIC: &str = "itlm-dataset";
const VERSION: &str = "v1";

pub fn format_link(link: LinkFunction) -> String {
    match link {
        LinkFunction::Identity => "identity".to_string(),
        LinkFunction::PiecewiseLinear { neg_slope, pos_slope } => {
            format!("piecewise:{}:{}", hexfloat::format(neg_slope), hexfloat::format(pos_slope))
        }
    }
}

/// Parses `identity` or `piecewise:<neg>:<pos>`, slopes in decimal or hex.
pub fn parse_link(s: &str) -> std::result::Result<LinkFunction, String> {
    if s == "identity" {
        return Ok(LinkFunction::Identity);
    }
    let rest = s.strip_prefix("piecewise:").ok_or_else(|| format!("unknown link '{s}'"))?;
    let (neg, pos) = rest.split_once(':').ok_or_else(|| format!("piecewise link needs two slopes, got '{s}'"))?;
    let number = |t: &str| parse_real(t).map_err(|e| format!("bad slope: {e}"));
    LinkFunction::piecewise(number(neg)?, number(pos)?).map_err(|e| e.to_string())
}

/// Decimal or hexadecimal float.
pub fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let body = s.trim_start_matches(['-', '+']);
    if body.starts_with("0x") || body.starts_with("0X") {
        hexfloat::parse(s)
    } else {
        s.parse::<f64>().map_err(|_| format!("'{s}' is not a number"))
    }
}

pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let (n, d) = (dataset.n(), dataset.d());
    let truth = dataset.truth();
    writeln!(
        out,
        "{MAGIC} {VERSION} d={d} n={n} link={} truth={} models={}",
        format_link(dataset.link()),
        u8::from(truth.is_some()),
        truth.map_or(0, |t| t.theta_star.len())
    )?;
    if let Some(t) = truth {
        for (j, model) in t.theta_star.iter().enumerate() {
            write!(out, "model {j}")?;
            for v in model.iter() {
                write!(out, " {}", hexfloat::format(*v))?;
            }
            writeln!(out)?;
        }
    }
    let mut line = String::new();
    for i in 0..n {
        line.clear();
        for j in 0..d {
            line.push_str(&hexfloat::format(dataset.features()[(i, j)]));
            line.push(' ');
        }
        line.push_str(&hexfloat::format(dataset.responses()[i]));
        if let Some(t) = truth {
            line.push_str(if t.clean_mask[i] { " 1 " } else { " 0 " });
            match t.component_id[i] {
                Some(c) => line.push_str(&c.to_string()),
                None => line.push('-'),
            }
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut lines = BufReader::new(input).lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(MAGIC) || tokens.next() != Some(VERSION) {
        return Err(parse_err(1, format!("expected '{MAGIC} {VERSION}' header")));
    }
    let (mut d, mut n, mut link, mut has_truth, mut models) = (None, None, None, None, 0usize);
    for tok in tokens {
        let (key, value) = tok.split_once('=').ok_or_else(|| parse_err(1, format!("bad header field '{tok}'")))?;
        let count = || value.parse::<usize>().map_err(|_| parse_err(1, format!("bad count in '{tok}'")));
        match key {
            "d" => d = Some(count()?),
            "n" => n = Some(count()?),
            "models" => models = count()?,
            "truth" => has_truth = Some(count()? != 0),
            "link" => link = Some(parse_link(value).map_err(|e| parse_err(1, e))?),
            _ => return Err(parse_err(1, format!("unknown header field '{key}'"))),
        }
    }
    let (d, n) = (d.ok_or_else(|| parse_err(1, "missing d"))?, n.ok_or_else(|| parse_err(1, "missing n"))?);
    let link = link.unwrap_or(LinkFunction::Identity);
    let has_truth = has_truth.unwrap_or(false);

    let real = |line: usize, tok: &str| hexfloat::parse(tok).map_err(|e| parse_err(line, e));
    let mut next_line = |what: &str| -> Result<(usize, String)> {
        let (no, l) = lines.next().ok_or_else(|| parse_err(0, format!("unexpected end of file reading {what}")))?;
        Ok((no, l?))
    };

    let mut theta_star = Vec::with_capacity(models);
    if has_truth {
        for j in 0..models {
            let (no, l) = next_line("models")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != d + 2 || toks[0] != "model" || toks[1] != j.to_string() {
                return Err(parse_err(no, format!("expected 'model {j}' with {d} values")));
            }
            let values = toks[2..].iter().map(|t| real(no, t)).collect::<Result<Vec<f64>>>()?;
            theta_star.push(DVector::from_vec(values));
        }
    }

    let width = d + 1 + if has_truth { 2 } else { 0 };
    let mut features = DMatrix::zeros(n, d);
    let mut responses = DVector::zeros(n);
    let mut clean_mask = Vec::with_capacity(n);
    let mut component_id = Vec::with_capacity(n);
    for i in 0..n {
        let (no, l) = next_line("rows")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != width {
            return Err(parse_err(no, format!("expected {width} fields, found {}", toks.len())));
        }
        for j in 0..d {
            features[(i, j)] = real(no, toks[j])?;
        }
        responses[i] = real(no, toks[d])?;
        if has_truth {
            clean_mask.push(match toks[d + 1] {
                "1" => true,
                "0" => false,
                other => return Err(parse_err(no, format!("bad clean flag '{other}'"))),
            });
            component_id.push(match toks[d + 2] {
                "-" => None,
                c => Some(c.parse::<usize>().map_err(|_| parse_err(no, format!("bad component id '{c}'")))?),
            });
        }
    }
    if let Some((no, l)) = lines.next() {
        if !l?.trim().is_empty() {
            return Err(parse_err(no, "trailing data after the last row"));
        }
    }

    let dataset = Dataset::new(features, responses, link)?;
    if has_truth {
        dataset.with_truth(Truth { theta_star, clean_mask, component_id })
    } else {
        Ok(dataset)
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_dataset(dataset, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(File::open(path)?)
}
