//! CSV ingestion and model construction.

use crate::Failure;
use adjscore_core::datasets;
use adjscore_core::engine::ModelSpec;
use adjscore_core::{DMatrix, DVector, Family, Link};
use std::path::Path;

/// A numeric table read from a CSV file with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    /// Row-major cells.
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str, field: &str) -> Result<usize, Failure> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| {
            Failure::input(format!(
                "{field}: column '{name}' not found; columns are {}",
                self.columns.join(", ")
            ))
        })
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r[j]))
    }
}

/// Reads a UTF-8 CSV with a header row. Every cell must parse as a number
/// with '.' as the decimal separator; surrounding spaces are ignored.
/// Row numbers in messages count data rows from 1, the header excluded.
pub fn read_table(path: &Path) -> Result<Table, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::input(format!("data: cannot read {}: {e}", path.display())))?;
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| Failure::input(format!("data: bad header row in {}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.is_empty() || columns.iter().all(|c| c.is_empty()) {
        return Err(Failure::input(format!("data: {} has no header row", path.display())));
    }
    if let Some(c) = columns.iter().find(|c| c.is_empty()) {
        return Err(Failure::input(format!("data: empty column name in header '{c}'")));
    }
    for (j, c) in columns.iter().enumerate() {
        if columns[..j].contains(c) {
            return Err(Failure::input(format!("data: duplicate column name '{c}'")));
        }
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Failure::input(format!("data: row {row}: {e}")))?;
        let mut values = Vec::with_capacity(columns.len());
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Failure::input(format!("data: row {row}, column '{}': cannot parse '{cell}' as a number", columns[j]))
            })?;
            if !v.is_finite() {
                return Err(Failure::input(format!("data: row {row}, column '{}': value must be finite", columns[j])));
            }
            values.push(v);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Failure::input(format!("data: {} has no data rows", path.display())));
    }
    Ok(Table { columns, rows })
}

/// Column selection for a regression read from CSV.
#[derive(Debug, Clone, Default)]
pub struct Columns {
    pub response: Option<String>,
    pub weights: Option<String>,
    pub covariates: Vec<String>,
    pub no_intercept: bool,
}

impl Columns {
    fn any_given(&self) -> bool {
        self.response.is_some() || self.weights.is_some() || !self.covariates.is_empty() || self.no_intercept
    }
}

/// A regression problem with the names of its design columns.
#[derive(Debug, Clone)]
pub struct Problem {
    pub source: String,
    pub spec: ModelSpec,
    pub coefficient_names: Vec<String>,
}

pub fn parse_family(s: &str) -> Result<Family, Failure> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
        Failure::input(format!("family: unknown family '{s}'; expected one of {}", names.join(", ")))
    })
}

pub fn parse_link(s: &str) -> Result<Link, Failure> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Link::ALL.iter().map(|l| l.name()).collect();
        Failure::input(format!("link: unknown link '{s}'; expected one of {}", names.join(", ")))
    })
}

/// Links whose inverse maps onto the family's mean space.
pub fn supported_links(family: Family) -> &'static [Link] {
    match family {
        Family::Gaussian => &[Link::Identity, Link::Log, Link::Inverse],
        Family::Binomial => &[Link::Logit, Link::Probit, Link::Cloglog],
        Family::Poisson => &[Link::Log, Link::Identity, Link::Sqrt],
        Family::Gamma => &[Link::Log, Link::Inverse, Link::Identity],
    }
}

fn check_pair(family: Family, link: Link) -> Result<(), Failure> {
    let links = supported_links(family);
    if links.contains(&link) {
        return Ok(());
    }
    let names: Vec<&str> = links.iter().map(|l| l.name()).collect();
    Err(Failure::input(format!(
        "link: '{link}' is not supported for the {family} family; use one of {}",
        names.join(", ")
    )))
}

/// Builds the problem from an embedded dataset name or a CSV path. Embedded
/// datasets carry their own design, family and link; family and link may be
/// overridden. For CSV data the covariates default to every column other
/// than the response and weights, and the family defaults to gaussian.
pub fn load_problem(
    data: &str,
    columns: &Columns,
    family: Option<&str>,
    link: Option<&str>,
) -> Result<Problem, Failure> {
    let family = family.map(parse_family).transpose()?;
    let link = link.map(parse_link).transpose()?;
    if datasets::DATASET_NAMES.contains(&data) && !Path::new(data).exists() {
        if columns.any_given() {
            return Err(Failure::input(format!(
                "data: '{data}' is an embedded dataset with a fixed design; column options apply to CSV files only"
            )));
        }
        let base = datasets::by_name(data).map_err(|e| Failure::input(format!("data: {e}")))?;
        let family = family.unwrap_or(base.family);
        let link = link.unwrap_or(if family == base.family { base.link } else { family.canonical_link() });
        check_pair(family, link)?;
        let spec = ModelSpec { family, link, ..base };
        spec.validate().map_err(|e| Failure::input(format!("data: {e}")))?;
        return Ok(Problem {
            source: data.to_string(),
            spec,
            coefficient_names: datasets::CLOTTING_COLUMNS.iter().map(|s| s.to_string()).collect(),
        });
    }
    let path = Path::new(data);
    if !path.exists() {
        return Err(Failure::input(format!(
            "data: '{data}' is neither a file nor an embedded dataset; available datasets: {}",
            datasets::DATASET_NAMES.join(", ")
        )));
    }
    let table = read_table(path)?;
    let family = family.unwrap_or(Family::Gaussian);
    let link = link.unwrap_or(family.canonical_link());
    check_pair(family, link)?;
    let response = columns
        .response
        .as_deref()
        .ok_or_else(|| Failure::input("response: a response column is required for CSV data"))?;
    let yj = table.column_index(response, "response")?;
    let wj = columns.weights.as_deref().map(|w| table.column_index(w, "weights")).transpose()?;
    let cov: Vec<usize> = if columns.covariates.is_empty() {
        (0..table.columns.len()).filter(|&j| j != yj && Some(j) != wj).collect()
    } else {
        columns.covariates.iter().map(|c| table.column_index(c, "covariates")).collect::<Result<_, _>>()?
    };
    let mut names = Vec::new();
    if !columns.no_intercept {
        names.push("(intercept)".to_string());
    }
    names.extend(cov.iter().map(|&j| table.columns[j].clone()));
    if names.is_empty() {
        return Err(Failure::input("covariates: the design has no columns"));
    }
    let offset = usize::from(!columns.no_intercept);
    let n = table.rows.len();
    let x = DMatrix::from_fn(n, names.len(), |i, j| if j < offset { 1.0 } else { table.rows[i][cov[j - offset]] });
    let y = table.column(yj);
    for (i, &yi) in y.iter().enumerate() {
        family
            .check_response(yi)
            .map_err(|e| Failure::input(format!("response: row {}: {e}", i + 1)))?;
    }
    let mut spec = ModelSpec::new(x, y, family, link).map_err(|e| Failure::input(format!("data: {e}")))?;
    if let Some(wj) = wj {
        let m = table.column(wj);
        if let Some(i) = m.iter().position(|&v| !(v > 0.0)) {
            return Err(Failure::input(format!("weights: row {}: weight must be positive, got {}", i + 1, m[i])));
        }
        spec = spec.with_weights(m).map_err(|e| Failure::input(format!("weights: {e}")))?;
    }
    Ok(Problem { source: data.to_string(), spec, coefficient_names: names })
}
