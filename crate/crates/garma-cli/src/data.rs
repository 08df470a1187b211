//! CSV ingestion: counts plus any external covariate columns.

use std::collections::HashMap;
use std::path::Path;

use garma::model::{design_matrix, CountSeries, CovariateKind, ModelSpec};

use crate::config::DataSection;
use crate::CliError;

#[derive(Debug)]
pub struct LoadedSeries {
    pub series: CountSeries,
    pub warnings: Vec<String>,
}

/// Reads the count column (and any external covariate columns the model
/// names) from a headed CSV. Values are divided by `scale_divisor` and
/// re-rounded to integers, with a warning when rounding changes a value.
pub fn load_series(
    path: &Path,
    spec: &ModelSpec,
    section: &DataSection,
) -> Result<LoadedSeries, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::config(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::config(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let y_idx = headers
        .iter()
        .position(|h| h == section.y_column)
        .ok_or_else(|| {
            CliError::config(format!(
                "column '{}' not found in {} (header: {})",
                section.y_column,
                path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            ))
        })?;

    let external_names: Vec<String> = spec
        .covariates
        .iter()
        .filter_map(|c| match c {
            CovariateKind::External { name } => Some(name.clone()),
            _ => None,
        })
        .collect();
    let mut external_idx = HashMap::new();
    for name in &external_names {
        let idx = headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::config(format!(
                "external covariate column '{name}' not found in {}",
                path.display()
            ))
        })?;
        external_idx.insert(name.clone(), idx);
    }

    if !(section.scale_divisor > 0.0 && section.scale_divisor.is_finite()) {
        return Err(CliError::config(format!(
            "scale_divisor must be a positive real, got {}",
            section.scale_divisor
        )));
    }

    let mut y = Vec::new();
    let mut externals: HashMap<String, Vec<f64>> =
        external_names.iter().map(|n| (n.clone(), Vec::new())).collect();
    let mut rounded_values = 0usize;
    for (row_number, record) in reader.records().enumerate() {
        let line = row_number + 2; // 1-based, after the header
        let record =
            record.map_err(|e| CliError::config(format!("malformed row at line {line}: {e}")))?;
        let raw = record.get(y_idx).ok_or_else(|| {
            CliError::config(format!("row at line {line} is missing the count column"))
        })?;
        let value: f64 = raw.trim().parse().map_err(|_| {
            CliError::config(format!("cannot parse count '{raw}' at line {line}"))
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(CliError::config(format!(
                "counts must be finite and non-negative; got {value} at line {line}"
            )));
        }
        let scaled = value / section.scale_divisor;
        let rounded = scaled.round();
        if (rounded - scaled).abs() > 1e-9 {
            rounded_values += 1;
        }
        y.push(rounded as u64);

        for (name, idx) in &external_idx {
            let raw = record.get(*idx).ok_or_else(|| {
                CliError::config(format!("row at line {line} is missing column '{name}'"))
            })?;
            let v: f64 = raw.trim().parse().map_err(|_| {
                CliError::config(format!("cannot parse '{raw}' in column '{name}' at line {line}"))
            })?;
            externals.get_mut(name).unwrap().push(v);
        }
    }
    if y.is_empty() {
        return Err(CliError::config(format!("{} has no data rows", path.display())));
    }

    let mut warnings = Vec::new();
    if rounded_values > 0 {
        warnings.push(format!(
            "{rounded_values} of {} counts changed when dividing by {} and re-rounding",
            y.len(),
            section.scale_divisor
        ));
    }

    let x = design_matrix(&spec.covariates, y.len(), section.origin, &externals)
        .map_err(CliError::from_config_err)?;
    let series = CountSeries::new(y, x, spec.n_beta(), section.origin)
        .map_err(CliError::from_config_err)?;
    Ok(LoadedSeries { series, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use garma::model::Family;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn data_section(path: &str) -> DataSection {
        DataSection {
            path: path.into(),
            y_column: "y".into(),
            scale_divisor: 1.0,
            origin: 1,
        }
    }

    #[test]
    fn loads_simple_counts() {
        let f = write_csv("t,y\n1,3\n2,5\n");
        let spec = ModelSpec::new(Family::Poisson, 0, 0);
        let loaded = load_series(f.path(), &spec, &data_section("x")).unwrap();
        assert_eq!(loaded.series.counts(), &[3, 5]);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn scale_divisor_rounds_with_warning() {
        let f = write_csv("t,y\n1,2500\n2,4000\n");
        let spec = ModelSpec::new(Family::Poisson, 0, 0);
        let mut section = data_section("x");
        section.scale_divisor = 1000.0;
        let loaded = load_series(f.path(), &spec, &section).unwrap();
        assert_eq!(loaded.series.counts(), &[3, 4]);
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn reports_line_numbers_on_bad_rows() {
        let f = write_csv("t,y\n1,3\n2,oops\n");
        let spec = ModelSpec::new(Family::Poisson, 0, 0);
        let err = load_series(f.path(), &spec, &data_section("x")).unwrap_err();
        assert!(err.message.contains("line 3"), "{}", err.message);
    }

    #[test]
    fn rejects_negative_counts() {
        let f = write_csv("t,y\n1,-2\n");
        let spec = ModelSpec::new(Family::Poisson, 0, 0);
        assert!(load_series(f.path(), &spec, &data_section("x")).is_err());
    }

    #[test]
    fn reads_external_covariates() {
        let f = write_csv("t,y,temp\n1,3,20.5\n2,5,21.0\n");
        let spec = ModelSpec::new(Family::Poisson, 0, 0).with_covariates(vec![
            CovariateKind::Intercept,
            CovariateKind::External { name: "temp".into() },
        ]);
        let loaded = load_series(f.path(), &spec, &data_section("x")).unwrap();
        assert_eq!(loaded.series.x_row(0), &[1.0, 20.5]);
        assert_eq!(loaded.series.x_row(1), &[1.0, 21.0]);
    }
}
