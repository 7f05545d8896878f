//! File exports for risk reports and uncertainty maps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::maps::UncertaintyMap;
use super::sure::SureReport;
use crate::error::Result;
use crate::io::{write_atomic, write_json, write_pgm};

/// One CSV row. `rss` is summed over pixels; `sure`, `sure_full` and `mse`
/// are per pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SureRow {
    pub case_id: String,
    pub accel: f64,
    pub lambda: f64,
    pub n_rb: usize,
    pub sigma2: f64,
    pub rss: f64,
    pub dof: f64,
    pub sure: f64,
    pub sure_full: f64,
    pub sure_db: f64,
    pub mse: Option<f64>,
    pub snr_db: Option<f64>,
}

impl SureRow {
    pub fn new(case_id: impl Into<String>, accel: f64, lambda: f64, n_rb: usize, report: &SureReport) -> Self {
        Self {
            case_id: case_id.into(),
            accel,
            lambda,
            n_rb,
            sigma2: report.sigma2,
            rss: report.rss,
            dof: report.dof,
            sure: report.sure,
            sure_full: report.sure_full,
            sure_db: report.sure_db,
            mse: None,
            snr_db: None,
        }
    }

    pub fn with_reference(mut self, mse: f64, snr_db: f64) -> Self {
        self.mse = Some(mse);
        self.snr_db = Some(snr_db);
        self
    }
}

pub fn encode_sure_csv(rows: &[SureRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
}

pub fn write_sure_csv(path: impl AsRef<Path>, rows: &[SureRow]) -> Result<()> {
    write_atomic(path.as_ref(), &encode_sure_csv(rows)?)
}

pub fn read_sure_csv(path: impl AsRef<Path>) -> Result<Vec<SureRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes `<stem>_mean.pgm` (magnitude), `<stem>_variance.pgm`, the bias and
/// error maps when present, and `<stem>_summary.json`. Returns the paths
/// written.
pub fn write_map(dir: impl AsRef<Path>, stem: &str, map: &UncertaintyMap) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let (w, h) = (map.width(), map.height());
    let mut layers: Vec<(&str, Vec<f64>)> = vec![("mean", map.mean.magnitudes()), ("variance", map.variance.clone())];
    if let Some(b) = &map.bias_sq {
        layers.push(("bias_sq", b.clone()));
    }
    if let Some(e) = &map.error {
        layers.push(("error", e.clone()));
    }
    let mut written = Vec::new();
    for (name, values) in layers {
        let path = dir.join(format!("{stem}_{name}.pgm"));
        write_pgm(&path, w, h, &values)?;
        written.push(path);
    }
    let summary = dir.join(format!("{stem}_summary.json"));
    write_json(&summary, &map.summary())?;
    written.push(summary);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ComplexImage;
    use crate::uq::bias_error_maps;

    fn report() -> SureReport {
        SureReport {
            sigma2: 0.5,
            rss: 8.0,
            dof: 3.0,
            sure: 0.09375,
            sure_full: 0.1875,
            sure_db: 12.5,
            n: 16,
            epsilon: 1e-3,
            n_probes: 10,
        }
    }

    #[test]
    fn csv_header_and_round_trip() {
        let rows = vec![
            SureRow::new("a", 4.0, 0.0, 1, &report()).with_reference(0.2, 13.0),
            SureRow::new("b", 8.0, 0.1, 2, &report()),
        ];
        let bytes = encode_sure_csv(&rows).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "case_id,accel,lambda,n_rb,sigma2,rss,dof,sure,sure_full,sure_db,mse,snr_db"
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sure.csv");
        write_sure_csv(&path, &rows).unwrap();
        assert_eq!(read_sure_csv(&path).unwrap(), rows);
    }

    #[test]
    fn map_files() {
        let a = ComplexImage::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = ComplexImage::from_real(2, 2, &[1.0, 0.0, 3.0, 2.0]).unwrap();
        let map = bias_error_maps(&[a.clone(), b], &a).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_map(dir.path(), "case", &map).unwrap();
        assert_eq!(paths.len(), 5);
        let pgm = std::fs::read(dir.path().join("case_variance.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
        let summary: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("case_summary.json")).unwrap()).unwrap();
        assert_eq!(summary["k"], 2);
        assert_eq!(summary["variance"]["max"], 1.0);
    }
}
