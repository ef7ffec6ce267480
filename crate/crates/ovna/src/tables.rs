//! CSV artifacts. Every file starts with a `# <kind> v<version>` line;
//! floats are written in shortest round-trip form so reading a file back
//! reproduces the in-memory values exactly, except wavelengths, which are
//! stored in nm and come back within one ulp.

use std::fs;
use std::path::Path;

use ovna_core::apc::TrackingTrace;
use ovna_core::dsp::MetricsSeries;
use ovna_core::experiment::{Comparison, NonlinearityStudy};

use crate::Error;

pub const METRICS_HEADER: &str = "# ovna-metrics v1";
pub const TRACKING_HEADER: &str = "# ovna-tracking v1";
pub const PER_CORE_HEADER: &str = "# ovna-per-core-il v1";
pub const COMPARISON_HEADER: &str = "# ovna-comparison v1";
pub const STUDY_HEADER: &str = "# ovna-nonlinearity-study v1";

const METRICS_COLUMNS: [&str; 5] = ["wavelength_nm", "il_db", "il_norm_db", "mdl_db", "xt_db"];
const TRACKING_COLUMNS: [&str; 4] = ["time_s", "wavelength_nm", "tracking", "orthogonal"];

fn csv_text(
    header: &str,
    columns: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    let body = String::from_utf8(body).map_err(|e| Error::Format(e.to_string()))?;
    Ok(format!("{header}\n{body}"))
}

fn strings(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Checks the version line and returns the column names and the numeric rows.
fn parse(text: &str, header: &str, what: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), Error> {
    let mut lines = text.splitn(2, '\n');
    let first = lines.next().unwrap_or("").trim_end();
    if first != header {
        return Err(Error::Format(format!(
            "{what}: expected header line '{header}', found '{first}'"
        )));
    }
    let mut r = csv::ReaderBuilder::new().from_reader(lines.next().unwrap_or("").as_bytes());
    let columns: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    Error::Format(format!("{what}: row {}: '{v}' is not a number", i + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((columns, rows))
}

fn expect_columns(what: &str, got: &[String], want: &[&str]) -> Result<(), Error> {
    if got.len() != want.len() || got.iter().zip(want).any(|(a, b)| a != b) {
        return Err(Error::Format(format!(
            "{what}: expected columns {want:?}, found {got:?}"
        )));
    }
    Ok(())
}

pub fn metrics_csv(m: &MetricsSeries) -> Result<String, Error> {
    let rows = (0..m.len()).map(|i| {
        vec![
            (m.wavelength[i] * 1e9).to_string(),
            m.il[i].to_string(),
            m.il_norm[i].to_string(),
            m.mdl[i].to_string(),
            m.xt[i].to_string(),
        ]
    });
    csv_text(METRICS_HEADER, &strings(&METRICS_COLUMNS), rows)
}

pub fn parse_metrics(text: &str) -> Result<MetricsSeries, Error> {
    let (cols, rows) = parse(text, METRICS_HEADER, "metrics")?;
    expect_columns("metrics", &cols, &METRICS_COLUMNS)?;
    let mut m = MetricsSeries::default();
    for r in rows {
        m.wavelength.push(r[0] * 1e-9);
        m.il.push(r[1]);
        m.il_norm.push(r[2]);
        m.mdl.push(r[3]);
        m.xt.push(r[4]);
    }
    Ok(m)
}

/// Wavelength column as written, in nm; used to compare grids exactly.
pub fn metrics_wavelengths_nm(text: &str) -> Result<Vec<f64>, Error> {
    let (_, rows) = parse(text, METRICS_HEADER, "metrics")?;
    Ok(rows.iter().map(|r| r[0]).collect())
}

pub fn tracking_csv(t: &TrackingTrace) -> Result<String, Error> {
    let rows = (0..t.len()).map(|i| {
        vec![
            t.time[i].to_string(),
            (t.wavelength[i] * 1e9).to_string(),
            t.tracking[i].to_string(),
            t.orthogonal[i].to_string(),
        ]
    });
    csv_text(TRACKING_HEADER, &strings(&TRACKING_COLUMNS), rows)
}

pub fn parse_tracking(text: &str) -> Result<TrackingTrace, Error> {
    let (cols, rows) = parse(text, TRACKING_HEADER, "tracking")?;
    expect_columns("tracking", &cols, &TRACKING_COLUMNS)?;
    let mut t = TrackingTrace::default();
    for r in rows {
        t.time.push(r[0]);
        t.wavelength.push(r[1] * 1e-9);
        t.tracking.push(r[2]);
        t.orthogonal.push(r[3]);
    }
    Ok(t)
}

/// One row per core, one column per wavelength (nm in the header).
pub fn per_core_csv(wavelength: &[f64], il: &[Vec<f64>]) -> Result<String, Error> {
    let mut cols = vec!["core".to_string()];
    cols.extend(wavelength.iter().map(|w| (w * 1e9).to_string()));
    let rows = il.iter().enumerate().map(|(c, row)| {
        let mut r = vec![c.to_string()];
        r.extend(row.iter().map(|v| v.to_string()));
        r
    });
    csv_text(PER_CORE_HEADER, &cols, rows)
}

/// Wavelengths (m) and the per-core rows.
pub fn parse_per_core(text: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>), Error> {
    let (cols, rows) = parse(text, PER_CORE_HEADER, "per-core IL")?;
    if cols.first().map(String::as_str) != Some("core") {
        return Err(Error::Format(
            "per-core IL: first column must be 'core'".into(),
        ));
    }
    let wavelength = cols[1..]
        .iter()
        .map(|c| {
            c.parse::<f64>()
                .map(|w| w * 1e-9)
                .map_err(|_| Error::Format(format!("per-core IL: bad wavelength column '{c}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((
        wavelength,
        rows.into_iter().map(|r| r[1..].to_vec()).collect(),
    ))
}

pub fn comparison_csv(c: &Comparison) -> Result<String, Error> {
    let header = format!(
        "{COMPARISON_HEADER}\n# std_a_db={} std_b_db={} std_ratio={}",
        c.std_a, c.std_b, c.std_ratio
    );
    let rows = c
        .wavelength
        .iter()
        .zip(&c.delta_il)
        .map(|(w, d)| vec![(w * 1e9).to_string(), d.to_string()]);
    csv_text(&header, &strings(&["wavelength_nm", "delta_il_db"]), rows)
}

pub fn study_csv(channel: usize, s: &NonlinearityStudy) -> Result<String, Error> {
    let row = vec![
        channel.to_string(),
        s.linear.to_string(),
        s.corrected.to_string(),
        s.uncorrected.to_string(),
    ];
    csv_text(
        STUDY_HEADER,
        &strings(&[
            "channel",
            "linear_width_bins",
            "corrected_width_bins",
            "uncorrected_width_bins",
        ]),
        std::iter::once(row),
    )
}

pub fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}
