//! Embedded datasets.

use crate::engine::ModelSpec;
use crate::error::{GlmError, Result};
use crate::families::{Family, Link};
use nalgebra::{DMatrix, DVector};

pub const CONCENTRATION: [f64; 9] = [5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 60.0, 80.0, 100.0];
pub const LOT1_TIME: [f64; 9] = [118.0, 58.0, 42.0, 35.0, 27.0, 25.0, 21.0, 19.0, 18.0];
pub const LOT2_TIME: [f64; 9] = [69.0, 35.0, 26.0, 21.0, 18.0, 16.0, 13.0, 12.0, 12.0];

/// One row of a named dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ClottingRow {
    pub conc: f64,
    /// 1 or 2
    pub lot: u8,
    pub time: f64,
}

/// Mean blood clotting times (seconds) for nine plasma concentrations and
/// two lots of thromboplastin, lot 1 first.
pub fn clotting_rows() -> Vec<ClottingRow> {
    let lot = |l: u8, times: &[f64; 9]| {
        CONCENTRATION
            .iter()
            .zip(times)
            .map(move |(&conc, &time)| ClottingRow { conc, lot: l, time })
            .collect::<Vec<_>>()
    };
    let mut rows = lot(1, &LOT1_TIME);
    rows.extend(lot(2, &LOT2_TIME));
    rows
}

pub const CLOTTING_COLUMNS: [&str; 4] = ["(intercept)", "lot2", "log_conc", "lot2:log_conc"];

/// Columns: intercept, lot-2 indicator, log concentration, interaction.
pub fn clotting_design() -> DMatrix<f64> {
    let rows = clotting_rows();
    DMatrix::from_fn(rows.len(), 4, |i, j| {
        let r = &rows[i];
        let lot2 = if r.lot == 2 { 1.0 } else { 0.0 };
        match j {
            0 => 1.0,
            1 => lot2,
            2 => r.conc.ln(),
            _ => lot2 * r.conc.ln(),
        }
    })
}

/// Gamma regression with log link on the clotting design.
pub fn clotting_spec() -> ModelSpec {
    let y = DVector::from_iterator(18, clotting_rows().into_iter().map(|r| r.time));
    ModelSpec::new(clotting_design(), y, Family::Gamma, Link::Log).expect("embedded data is valid")
}

pub const DATASET_NAMES: [&str; 1] = ["clotting"];

pub fn by_name(name: &str) -> Result<ModelSpec> {
    match name {
        "clotting" => Ok(clotting_spec()),
        _ => Err(GlmError::InvalidArgument(format!(
            "unknown dataset '{name}'; available: {}",
            DATASET_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clotting_shape() {
        let rows = clotting_rows();
        assert_eq!(rows.len(), 18);
        assert_eq!(rows[0], ClottingRow { conc: 5.0, lot: 1, time: 118.0 });
        assert_eq!(rows[17], ClottingRow { conc: 100.0, lot: 2, time: 12.0 });
        let x = clotting_design();
        assert_eq!(x.shape(), (18, 4));
        assert_eq!(x[(9, 1)], 1.0);
        assert!((x[(9, 3)] - 5f64.ln()).abs() < 1e-15);
        assert!(by_name("iris").is_err());
    }
}
