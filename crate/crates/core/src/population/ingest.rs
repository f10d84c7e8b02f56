use std::path::Path;

use super::PopulationError;

/// Read the `income` column of a CSV file.
///
/// Line numbers in errors are 1-based and count the header.
pub fn load_income_csv(path: &Path) -> Result<Vec<f64>, PopulationError> {
    let file = std::fs::File::open(path)
        .map_err(|e| PopulationError::Io { path: path.display().to_string(), source: e })?;
    read_incomes(file)
}

pub fn read_incomes<R: std::io::Read>(reader: R) -> Result<Vec<f64>, PopulationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| PopulationError::Parse { line: 1, message: e.to_string() })?
        .clone();
    let col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("income"))
        .ok_or(PopulationError::MissingColumn("income"))?;
    let mut out = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let line = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(k + 2, |p| p.line() as usize);
        let record = record.map_err(|e| PopulationError::Parse { line, message: e.to_string() })?;
        let field = record.get(col).unwrap_or("");
        let value: f64 = field.parse().map_err(|_| PopulationError::Parse {
            line,
            message: format!("income {field:?} is not a number"),
        })?;
        if !(value >= 0.0 && value.is_finite()) {
            return Err(PopulationError::Parse { line, message: format!("income {value} must be finite and >= 0") });
        }
        out.push(value);
    }
    Ok(out)
}
