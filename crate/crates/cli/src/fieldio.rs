//! Field files: CSV with header `t_index,x_index,value`, one row per lattice
//! point in time-major order.

use std::io::{Read, Write};

use anyhow::{bail, Context};
use stou_core::{FieldSample64, Lattice64};

pub const FIELD_HEADER: [&str; 3] = ["t_index", "x_index", "value"];

pub fn write_field<W: Write>(w: W, field: &FieldSample64) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FIELD_HEADER)?;
    let l = field.lattice();
    for t in 0..l.n_t() {
        for x in 0..l.n_x() {
            out.write_record([t.to_string(), x.to_string(), field.get(t, x).to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a field file. Spacings are not stored in the file and come from the
/// caller; every `(t, x)` cell of the implied rectangle must appear once.
pub fn read_field<R: Read>(r: R, dx: f64, dt: f64) -> anyhow::Result<FieldSample64> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(FIELD_HEADER) {
        bail!("field header must be `t_index,x_index,value`, found `{}`", header.iter().collect::<Vec<_>>().join(","));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse_idx = |i: usize| -> anyhow::Result<usize> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .with_context(|| format!("row {}: bad {}", line + 2, FIELD_HEADER[i]))
        };
        let t = parse_idx(0)?;
        let x = parse_idx(1)?;
        let v: f64 = rec
            .get(2)
            .unwrap_or("")
            .trim()
            .parse()
            .with_context(|| format!("row {}: bad value", line + 2))?;
        rows.push((t, x, v));
    }
    if rows.is_empty() {
        bail!("field file has no rows");
    }
    let nt = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    let nx = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    let lattice = Lattice64::new(nx, nt, dx, dt)?;
    let mut values = vec![f64::NAN; nx * nt];
    let mut seen = vec![false; nx * nt];
    for (t, x, v) in rows {
        let k = lattice.index(t, x);
        if seen[k] {
            bail!("duplicate entry for t_index={t}, x_index={x}");
        }
        seen[k] = true;
        values[k] = v;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        let (t, x) = lattice.coords(k);
        bail!("missing entry for t_index={t}, x_index={x}");
    }
    Ok(FieldSample64::new(lattice, values)?)
}
