//! CSV forms of lattices and ratio curves.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces every value bit for bit.

use crate::convolve::{RatioPoint, TailRatioCurve};
use crate::dist::LatticeDist;
use crate::error::{Error, Result};

fn num(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad number {:?}: {e}", s.trim())))
}

/// `step,offset,remainder` header and values, then `index,mass` rows. The
/// part of the remainder known to sit beyond the grid is kept in a
/// `# beyond=` comment; without it the remainder reads back as unplaced.
pub fn lattice_to_csv(l: &LatticeDist) -> String {
    let mut out = String::new();
    if l.remainder_beyond() > 0.0 {
        out.push_str(&format!("# beyond={}\n", l.remainder_beyond()));
    }
    out.push_str("step,offset,remainder\n");
    out.push_str(&format!("{},{},{}\n", l.step(), l.offset(), l.remainder()));
    out.push_str("index,mass\n");
    for (i, m) in l.masses().iter().enumerate() {
        out.push_str(&format!("{i},{m}\n"));
    }
    out
}

pub fn lattice_from_csv(text: &str) -> Result<LatticeDist> {
    let mut beyond = 0.0;
    let mut header: Option<(f64, f64, f64)> = None;
    let mut mass = Vec::new();
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    while let Some(line) = lines.next() {
        if let Some(c) = line.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("beyond=") {
                beyond = num(v)?;
            }
            continue;
        }
        if line == "step,offset,remainder" {
            let vals = lines
                .next()
                .ok_or_else(|| Error::Parse("missing step,offset,remainder values".into()))?;
            let v: Vec<&str> = vals.split(',').collect();
            if v.len() != 3 {
                return Err(Error::Parse(format!("expected 3 header values: {vals:?}")));
            }
            header = Some((num(v[0])?, num(v[1])?, num(v[2])?));
            continue;
        }
        if line == "index,mass" {
            continue;
        }
        let (i, m) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("expected index,mass: {line:?}")))?;
        let i: usize = i
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad index {i:?}: {e}")))?;
        if i != mass.len() {
            return Err(Error::Parse(format!("index {i} out of order")));
        }
        mass.push(num(m)?);
    }
    let (step, offset, remainder) =
        header.ok_or_else(|| Error::Parse("missing step,offset,remainder header".into()))?;
    if beyond > remainder {
        return Err(Error::Parse(format!(
            "beyond part {beyond} exceeds remainder {remainder}"
        )));
    }
    LatticeDist::with_split(step, offset, mass, beyond, remainder - beyond)
}

/// `# Etau=` and other metadata comments, then `x,ratio,err_lo,err_hi`.
pub fn curve_to_csv(c: &TailRatioCurve) -> String {
    let mut out = format!("# Etau={}\n", c.e_tau);
    for (k, v) in &c.meta {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str("x,ratio,err_lo,err_hi\n");
    for p in &c.points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.x,
            p.ratio,
            p.err_lo(),
            p.err_hi()
        ));
    }
    out
}

pub fn curve_from_csv(text: &str) -> Result<TailRatioCurve> {
    let mut curve = TailRatioCurve::new(f64::NAN);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.trim().split_once('=') {
                if k.trim() == "Etau" {
                    curve.e_tau = num(v)?;
                } else {
                    curve
                        .meta
                        .push((k.trim().to_string(), v.trim().to_string()));
                }
            }
            continue;
        }
        if line.starts_with("x,") {
            continue;
        }
        let v: Vec<&str> = line.split(',').collect();
        if v.len() != 4 {
            return Err(Error::Parse(format!("expected 4 columns: {line:?}")));
        }
        let (x, ratio, lo, hi) = (num(v[0])?, num(v[1])?, num(v[2])?, num(v[3])?);
        curve.points.push(RatioPoint {
            x,
            ratio,
            lo: ratio - lo,
            hi: ratio + hi,
        });
    }
    Ok(curve)
}

/// Value of a `# key=value` metadata entry.
pub fn meta_value<'a>(c: &'a TailRatioCurve, key: &str) -> Option<&'a str> {
    c.meta
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}
