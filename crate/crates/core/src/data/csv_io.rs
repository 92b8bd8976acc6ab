//! Pre-featurized datasets as CSV with a `label,f0,f1,...` header.

use std::path::Path;

use super::LabeledSample;
use crate::error::{Error, Result};

pub fn read_csv_samples(path: &Path) -> Result<Vec<LabeledSample>> {
    let csv_err = |reason: String| Error::Csv {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if headers.get(0) != Some("label") || headers.len() < 2 {
        return Err(csv_err("header must be `label,f0,f1,...`".into()));
    }
    for (j, name) in headers.iter().skip(1).enumerate() {
        if name != format!("f{j}") {
            return Err(csv_err(format!("column {} should be named f{j}, found {name}", j + 1)));
        }
    }
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| csv_err(format!("line {line}: {e}")))?;
        let label = record[0]
            .parse::<usize>()
            .map_err(|e| csv_err(format!("line {line}: bad label {:?}: {e}", &record[0])))?;
        let features = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| csv_err(format!("line {line}: bad feature {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(LabeledSample { features, label });
    }
    Ok(samples)
}

pub fn write_csv_samples(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let dim = samples.first().map_or(0, |s| s.features.len());
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((0..dim).map(|j| format!("f{j}")))
        .collect();
    writer.write_record(&header).map_err(csv_err)?;
    for s in samples {
        let row: Vec<String> = std::iter::once(s.label.to_string())
            .chain(s.features.iter().map(|v| format!("{v:?}")))
            .collect();
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn reads_and_writes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let samples = vec![
            LabeledSample {
                features: vec![0.1, -2.5],
                label: 1,
            },
            LabeledSample {
                features: vec![3.0, 1e-7],
                label: 0,
            },
        ];
        write_csv_samples(&path, &samples).unwrap();
        assert_eq!(read_csv_samples(&path).unwrap(), samples);
    }

    #[test]
    fn rejects_bad_header_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::File::create(&path)
            .unwrap()
            .write_all(b"y,f0\n1,2\n")
            .unwrap();
        assert!(matches!(read_csv_samples(&path), Err(Error::Csv { .. })));

        std::fs::write(&path, "label,f0\n1,abc\n").unwrap();
        let err = read_csv_samples(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
