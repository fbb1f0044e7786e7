//! CSV formats for centers, approximants and trajectories.
//!
//! * centers: header `x1,...,xd`, one point per row;
//! * approximant: a leading `# family=<f> lengthscale=<rho> variance=<s2> jitter=<j>`
//!   comment, then header `x1,...,xd,coefficient`;
//! * trajectory: header `t,x1,...,xd`.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DVector;

use crate::dynamics::Trajectory;
use crate::geometry::{CenterSet, Domain};
use crate::kernels::{Kernel, KernelFamily};
use crate::native_approx::Approximant;
use crate::{Error, Result};

fn coord_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

fn fmt(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v:?}")
}

pub fn write_centers_csv<W: Write>(w: W, centers: &CenterSet) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(coord_header(centers.dim()))?;
    for p in centers.iter() {
        wr.write_record(p.iter().map(|v| fmt(*v)))?;
    }
    wr.flush()?;
    Ok(())
}

fn parse_rows<R: Read>(r: R) -> Result<(csv::StringRecord, Vec<Vec<f64>>)> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rd.headers()?.clone();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Io(format!("bad number `{s}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((headers, rows))
}

/// Reads a center CSV; with a domain, every point must lie inside it.
pub fn read_centers_csv<R: Read>(r: R, domain: Option<&Domain>) -> Result<CenterSet> {
    let (headers, rows) = parse_rows(r)?;
    if headers
        .iter()
        .enumerate()
        .any(|(i, h)| h != format!("x{}", i + 1))
    {
        return Err(Error::Io(format!(
            "center CSV header must be x1,...,xd, got {headers:?}"
        )));
    }
    match domain {
        Some(d) => CenterSet::within(d, rows),
        None => CenterSet::new(rows),
    }
}

pub fn write_approximant_csv<W: Write>(mut w: W, v: &Approximant) -> Result<()> {
    let k = v.kernel();
    writeln!(
        w,
        "# family={} lengthscale={} variance={} jitter={}",
        k.family,
        fmt(k.lengthscale),
        fmt(k.variance),
        fmt(v.jitter())
    )?;
    let mut wr = csv::Writer::from_writer(w);
    let mut header = coord_header(v.centers().dim());
    header.push("coefficient".into());
    wr.write_record(&header)?;
    for (p, a) in v.centers().iter().zip(v.coefficients().iter()) {
        wr.write_record(p.iter().chain(std::iter::once(a)).map(|x| fmt(*x)))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_approximant_csv<R: Read>(r: R) -> Result<Approximant> {
    let mut br = BufReader::new(r);
    let mut first = String::new();
    br.read_line(&mut first)?;
    let meta = first
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Io("approximant CSV must start with a `#` metadata line".into()))?;
    let (mut family, mut rho, mut s2, mut jitter) = (None, None, None, 0.0);
    for kv in meta.split_whitespace() {
        let (key, val) = kv
            .split_once('=')
            .ok_or_else(|| Error::Io(format!("bad metadata entry `{kv}`")))?;
        let num = || {
            val.parse::<f64>()
                .map_err(|e| Error::Io(format!("bad `{key}`: {e}")))
        };
        match key {
            "family" => family = Some(val.parse::<KernelFamily>()?),
            "lengthscale" => rho = Some(num()?),
            "variance" => s2 = Some(num()?),
            "jitter" => jitter = num()?,
            _ => {}
        }
    }
    let kernel = Kernel::new(
        family.ok_or_else(|| Error::Io("missing family".into()))?,
        rho.ok_or_else(|| Error::Io("missing lengthscale".into()))?,
        s2.unwrap_or(1.0),
    )?;
    let (headers, rows) = parse_rows(br)?;
    if headers.iter().next_back() != Some("coefficient") {
        return Err(Error::Io(
            "approximant CSV needs a trailing `coefficient` column".into(),
        ));
    }
    let d = headers.len() - 1;
    let mut points = Vec::with_capacity(rows.len());
    let mut coeffs = Vec::with_capacity(rows.len());
    for mut row in rows {
        coeffs.push(row.pop().expect("row has d + 1 fields"));
        if row.len() != d {
            return Err(Error::Io("ragged approximant row".into()));
        }
        points.push(row);
    }
    Ok(
        Approximant::new(kernel, CenterSet::new(points)?, DVector::from_vec(coeffs))?
            .with_jitter(jitter),
    )
}

pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let d = traj.states.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend(coord_header(d));
    wr.write_record(&header)?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        wr.write_record(std::iter::once(t).chain(x.iter()).map(|v| fmt(*v)))?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes a header and rows of already-formatted fields.
pub fn write_table<W: Write>(
    w: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for row in rows {
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}
