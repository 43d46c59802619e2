use std::path::Path;

use crate::curve::{Provenance, RdCurve, RdPoint};
use crate::error::{Error, Result};

pub const CURVE_HEADER: [&str; 5] = ["distortion", "rate_bits", "provenance", "n", "params_digest"];

/// CSV bytes with one row per point, sorted by distortion. Floats use the
/// shortest representation that reads back to the same value.
pub fn curve_to_csv(curve: &RdCurve) -> Result<Vec<u8>> {
    let mut points = curve.points.clone();
    points.sort_by(|a, b| a.distortion.total_cmp(&b.distortion));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER)?;
    for p in &points {
        w.write_record([
            p.distortion.to_string(),
            p.rate_bits.to_string(),
            p.provenance.to_string(),
            p.n.to_string(),
            p.params_digest.clone(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn curve_from_csv(bytes: &[u8]) -> Result<RdCurve> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CURVE_HEADER {
        return Err(Error::format(
            0,
            format!("unexpected CSV header {:?}", header.iter().collect::<Vec<_>>()),
        ));
    }
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::invalid(format!("CSV line {line}: bad {what}"));
        let provenance = match &rec[2] {
            "oracle" => Provenance::Oracle,
            "nerd" => Provenance::Nerd,
            "ba" => Provenance::Ba,
            "ba-plugin" => Provenance::BaPlugin,
            _ => return Err(bad("provenance")),
        };
        points.push(RdPoint {
            distortion: rec[0].parse().map_err(|_| bad("distortion"))?,
            rate_bits: rec[1].parse().map_err(|_| bad("rate"))?,
            provenance,
            n: rec[3].parse().map_err(|_| bad("sample count"))?,
            params_digest: rec[4].to_string(),
        });
    }
    Ok(RdCurve::new(points))
}

pub fn write_curve(curve: &RdCurve, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), curve_to_csv(curve)?)?;
    Ok(())
}

pub fn read_curve(path: impl AsRef<Path>) -> Result<RdCurve> {
    curve_from_csv(&std::fs::read(path.as_ref())?)
}
