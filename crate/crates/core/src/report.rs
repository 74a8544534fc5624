//! CSV schemas for sweeps, metric time series, decoy tallies and analyses.
//!
//! Every file starts with the header row given by the matching `*_HEADER`
//! constant. Floats are written in shortest round-trip form, so reading a
//! file back reproduces the values exactly. Missing optional values are empty
//! fields.

use std::io::{Read, Write};

use crate::channel::IntensityClass;
use crate::decoy::TallyAnalysis;
use crate::error::{Error, Result};
use crate::sifting::DecoyTally;
use crate::sim::{Sample, SweepPoint};

pub const SWEEP_HEADER: [&str; 7] = ["mu", "raw_kbps", "sifted_kbps", "corrected_kbps", "secret_kbps", "duty", "qber"];

pub const METRICS_HEADER: [&str; 9] = [
    "time_ms",
    "frames",
    "raw_bits",
    "sifted_bits",
    "corrected_bits",
    "sift_queue_bits",
    "ec_queue_bits",
    "compensations",
    "drift_qber",
];

pub const TALLY_HEADER: [&str; 4] = ["class", "sent", "detected", "errors"];

pub const ANALYSIS_HEADER: [&str; 13] = [
    "q_mu", "q_nu1", "q_nu2", "e_mu", "e_nu1", "e_nu2", "y0_l", "y1_l", "e1_u", "q1_l", "mu", "rate",
    "corrected_fraction",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn bad(table: &str, column: &str, message: impl Into<String>) -> Error {
    Error::Validation { field: format!("{table}.{column}"), message: message.into() }
}

fn reader<R: Read>(r: R, table: &str, header: &[&str]) -> Result<csv::Reader<R>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let found: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(bad(table, "header", format!("expected {}, found {}", header.join(","), found.join(","))));
    }
    Ok(rd)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, table: &str, header: &[&str]) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| bad(table, header[i], format!("cannot parse `{raw}`")))
}

fn opt_field(rec: &csv::StringRecord, i: usize, table: &str, header: &[&str]) -> Result<Option<f64>> {
    if rec.get(i).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        field(rec, i, table, header).map(Some)
    }
}

pub fn write_sweep_csv<W: Write>(w: W, points: &[SweepPoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SWEEP_HEADER)?;
    for p in points {
        wr.write_record([
            p.mu.to_string(),
            p.raw_kbps.to_string(),
            p.sifted_kbps.to_string(),
            p.corrected_kbps.to_string(),
            p.secret_kbps.to_string(),
            p.duty.to_string(),
            opt(p.qber),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepPoint>> {
    let h = &SWEEP_HEADER;
    let mut rd = reader(r, "sweep", h)?;
    rd.records()
        .map(|rec| {
            let rec = rec?;
            Ok(SweepPoint {
                mu: field(&rec, 0, "sweep", h)?,
                raw_kbps: field(&rec, 1, "sweep", h)?,
                sifted_kbps: field(&rec, 2, "sweep", h)?,
                corrected_kbps: field(&rec, 3, "sweep", h)?,
                secret_kbps: field(&rec, 4, "sweep", h)?,
                duty: field(&rec, 5, "sweep", h)?,
                qber: opt_field(&rec, 6, "sweep", h)?,
            })
        })
        .collect()
}

pub fn write_metrics_csv<W: Write>(w: W, samples: &[Sample]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(METRICS_HEADER)?;
    for s in samples {
        wr.write_record([
            s.time_ms.to_string(),
            s.frames.to_string(),
            s.raw_bits.to_string(),
            s.sifted_bits.to_string(),
            s.corrected_bits.to_string(),
            s.sift_queue_bits.to_string(),
            s.ec_queue_bits.to_string(),
            s.compensations.to_string(),
            s.drift_qber.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<Sample>> {
    let h = &METRICS_HEADER;
    let mut rd = reader(r, "metrics", h)?;
    rd.records()
        .map(|rec| {
            let rec = rec?;
            Ok(Sample {
                time_ms: field(&rec, 0, "metrics", h)?,
                frames: field(&rec, 1, "metrics", h)?,
                raw_bits: field(&rec, 2, "metrics", h)?,
                sifted_bits: field(&rec, 3, "metrics", h)?,
                corrected_bits: field(&rec, 4, "metrics", h)?,
                sift_queue_bits: field(&rec, 5, "metrics", h)?,
                ec_queue_bits: field(&rec, 6, "metrics", h)?,
                compensations: field(&rec, 7, "metrics", h)?,
                drift_qber: field(&rec, 8, "metrics", h)?,
            })
        })
        .collect()
}

pub fn write_tally_csv<W: Write>(w: W, tally: &DecoyTally) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TALLY_HEADER)?;
    for c in IntensityClass::ALL {
        let i = c.index();
        wr.write_record([
            c.name().to_string(),
            tally.sent[i].to_string(),
            tally.detected[i].to_string(),
            tally.errors[i].to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a tally. Classes may appear in any order; a class with no row
/// counts as nothing sent. Repeated classes and inconsistent counts are
/// rejected.
pub fn read_tally_csv<R: Read>(r: R) -> Result<DecoyTally> {
    let h = &TALLY_HEADER;
    let mut rd = reader(r, "tally", h)?;
    let mut tally = DecoyTally::default();
    let mut seen = [false; 3];
    for rec in rd.records() {
        let rec = rec?;
        let name = rec.get(0).unwrap_or("");
        let class = IntensityClass::parse(name).ok_or_else(|| bad("tally", "class", format!("unknown class `{name}`")))?;
        let i = class.index();
        if std::mem::replace(&mut seen[i], true) {
            return Err(bad("tally", "class", format!("class `{name}` listed twice")));
        }
        tally.sent[i] = field(&rec, 1, "tally", h)?;
        tally.detected[i] = field(&rec, 2, "tally", h)?;
        tally.errors[i] = field(&rec, 3, "tally", h)?;
    }
    if !tally.is_consistent() {
        return Err(bad("tally", "counts", "need errors <= detected <= sent in every class"));
    }
    Ok(tally)
}

pub fn write_analysis_csv<W: Write>(w: W, a: &TallyAnalysis) -> Result<()> {
    let e = &a.estimates;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(ANALYSIS_HEADER)?;
    wr.write_record(
        [e.q_mu, e.q_nu1, e.q_nu2, e.e_mu, e.e_nu1, e.e_nu2, e.y0_l, e.y1_l, e.e1_u, e.q1_l, e.mu, a.rate, a.corrected_fraction]
            .map(|x| x.to_string()),
    )?;
    wr.flush()?;
    Ok(())
}
