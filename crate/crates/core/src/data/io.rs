use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataSpec, Dataset, Sample};
use crate::error::{Error, Result};

/// JSON written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSidecar {
    pub spec_id: String,
    pub n: usize,
    pub d: usize,
    pub spec: Option<DataSpec>,
}

fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

/// Writes `x_1..x_d,y` rows plus a `.json` sidecar. Values use the shortest
/// decimal form that parses back to the same `f64`.
pub fn write_csv(data: &Dataset, spec: Option<&DataSpec>, path: &Path) -> Result<()> {
    let d = data.dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for s in data.samples() {
        let mut row: Vec<String> = s.x.iter().map(|v| v.to_string()).collect();
        row.push(s.y.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    let sidecar = DatasetSidecar {
        spec_id: data.spec_id().to_string(),
        n: data.len(),
        d,
        spec: spec.cloned(),
    };
    serde_json::to_writer_pretty(File::create(sidecar_path(path))?, &sidecar)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<(Dataset, DatasetSidecar)> {
    let sidecar: DatasetSidecar = serde_json::from_reader(File::open(sidecar_path(path))?)?;
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width != sidecar.d + 1 {
        return Err(Error::DimensionMismatch {
            expected: sidecar.d + 1,
            got: width,
            context: "dataset csv columns",
        });
    }
    let mut samples = Vec::with_capacity(sidecar.n);
    for record in r.records() {
        let record = record?;
        let mut vals = Vec::with_capacity(width);
        for field in record.iter() {
            vals.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidSpec(format!("bad number `{field}`: {e}")))?,
            );
        }
        let y = vals.pop().ok_or(Error::EmptyDataset)?;
        samples.push(Sample { x: vals, y });
    }
    if samples.len() != sidecar.n {
        return Err(Error::DimensionMismatch {
            expected: sidecar.n,
            got: samples.len(),
            context: "dataset csv rows",
        });
    }
    Ok((Dataset::with_id(samples, sidecar.spec_id.clone()), sidecar))
}
