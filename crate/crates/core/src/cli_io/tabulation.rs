//! Top-share tabulation CSV: a `year,<p_1>,...,<p_{K+1}>` header with
//! percentiles in percent, then one `YYYY,<S_1>,...` row per year with
//! shares in percent.
//!
//! Percent values are converted to fractions by shifting the decimal
//! exponent of the text and parsing once, so `3.37` becomes the double
//! nearest to 0.0337 rather than `3.37 / 100`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::TopShareTabulation;
use crate::tail_moments::PercentileGrid;

/// Parse a percent literal (`"3.37"`, `"1e-2"`) to the nearest fraction.
pub fn percent_to_fraction(text: &str) -> Option<f64> {
    let t = text.trim();
    if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b)) {
        return None;
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    mantissa.parse::<f64>().ok()?;
    format!("{mantissa}e{}", exp - 2)
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
}

/// Shortest plain decimal (in percent) that [`percent_to_fraction`] maps
/// back to `fraction`.
pub fn fraction_to_percent(fraction: f64) -> String {
    // `{:e}` is the shortest round-trip form, e.g. "3.37e-2"
    let sci = format!("{fraction:e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp = exp.parse::<i32>().expect("integer exponent") + 2;
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    // value = 0.digits * 10^(exp + 1)
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (int, frac) = digits.split_at(point as usize);
        format!("{int}.{frac}")
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// Non-blank, non-comment lines split into trimmed fields, with 1-based
/// file line numbers. Lines go through csv one at a time because its own
/// line counter skips blank and comment lines.
fn numbered_records(text: &str) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(trimmed.as_bytes());
        let rec = rdr
            .records()
            .next()
            .expect("non-empty line yields a record")
            .map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        out.push((line, rec));
    }
    Ok(out)
}

/// Parse tabulation CSV text; one tabulation per data row, in file order.
pub fn parse_tabulation_reader<R: Read>(mut reader: R) -> Result<Vec<TopShareTabulation>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut records = numbered_records(&text)?.into_iter();
    let Some((hline, header)) = records.next() else {
        return Err(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        });
    };
    if header.len() < 4 || !header[0].eq_ignore_ascii_case("year") {
        return Err(Error::Parse {
            line: hline,
            msg: "header must be `year,<p1>,<p2>,...` with at least three percentiles".into(),
        });
    }
    let mut points = Vec::with_capacity(header.len() - 1);
    for field in header.iter().skip(1) {
        let p = percent_to_fraction(field).ok_or_else(|| Error::Parse {
            line: hline,
            msg: format!("percentile `{field}` is not a number"),
        })?;
        points.push(p);
    }
    let grid = PercentileGrid::new(points).map_err(|e| Error::Parse {
        line: hline,
        msg: e.to_string(),
    })?;

    let mut out = Vec::new();
    for (line, rec) in records {
        let bad = |msg: String| Error::Parse { line, msg };
        if rec.len() != header.len() {
            return Err(bad(format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let year: i32 = rec[0]
            .parse()
            .map_err(|_| bad(format!("year `{}` is not an integer", &rec[0])))?;
        let mut shares = Vec::with_capacity(rec.len() - 1);
        for (field, p) in rec.iter().skip(1).zip(grid.points()) {
            let s = percent_to_fraction(field).ok_or_else(|| bad(format!("share `{field}` is not a number")))?;
            if !(s > 0.0 && s <= 1.0) {
                return Err(bad(format!(
                    "share {field}% at p = {}% is outside (0, 100]",
                    fraction_to_percent(*p)
                )));
            }
            shares.push(s);
        }
        let tab = TopShareTabulation::new(grid.clone(), shares).map_err(|e| bad(format!("year {year}: {e}")))?;
        out.push(tab.with_year(year));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

pub fn parse_tabulation_str(text: &str) -> Result<Vec<TopShareTabulation>> {
    parse_tabulation_reader(text.as_bytes())
}

pub fn parse_tabulation(path: &Path) -> Result<Vec<TopShareTabulation>> {
    let file = std::fs::File::open(path)?;
    parse_tabulation_reader(std::io::BufReader::new(file))
}

/// Write tabulations sharing one grid in the same CSV layout.
pub fn write_tabulation_csv<W: Write>(tabs: &[TopShareTabulation], writer: W) -> Result<()> {
    let first = tabs.first().ok_or(Error::EmptyInput)?;
    if tabs.iter().any(|t| t.grid() != first.grid()) {
        return Err(Error::InvalidArgument("tabulations use different grids".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut header = vec!["year".to_string()];
    header.extend(first.grid().points().iter().map(|p| fraction_to_percent(*p)));
    w.write_record(&header).map_err(csv_err)?;
    for t in tabs {
        let year = t
            .year()
            .ok_or_else(|| Error::InvalidArgument("tabulation without a year".into()))?;
        let mut row = vec![year.to_string()];
        row.extend(t.shares().iter().map(|s| fraction_to_percent(*s)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
