//! Labelled unit-by-time panels.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::engine::InterventionSplit;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePanel {
    pub unit_ids: Vec<String>,
    pub time_labels: Vec<String>,
    pub values: Matrix,
    pub split: InterventionSplit,
}

impl TimePanel {
    pub fn new(
        unit_ids: Vec<String>,
        time_labels: Vec<String>,
        values: Matrix,
        split: InterventionSplit,
    ) -> Result<Self> {
        if unit_ids.len() != values.rows() {
            return Err(Error::Shape(format!(
                "{} unit ids for {} rows",
                unit_ids.len(),
                values.rows()
            )));
        }
        if time_labels.len() != values.cols() || split.t_total != values.cols() {
            return Err(Error::Shape(format!(
                "{} time labels and split over {} periods for {} columns",
                time_labels.len(),
                split.t_total,
                values.cols()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = unit_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate unit id '{dup}'")));
        }
        Ok(Self {
            unit_ids,
            time_labels,
            values,
            split,
        })
    }

    /// Panel with ids `unit_0..` and labels `1..=T`.
    pub fn unlabelled(values: Matrix, split: InterventionSplit) -> Result<Self> {
        let ids = (0..values.rows()).map(|i| format!("unit_{i}")).collect();
        let labels = (1..=values.cols()).map(|j| j.to_string()).collect();
        Self::new(ids, labels, values, split)
    }

    pub fn n_units(&self) -> usize {
        self.values.rows()
    }

    pub fn n_periods(&self) -> usize {
        self.values.cols()
    }
}
