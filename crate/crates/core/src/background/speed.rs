use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid3, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedKind {
    Constant,
    Gridded,
}

/// Background wave speed `c0 > 0` sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedField {
    grid: Grid3,
    values: Vec<f64>,
    kind: SpeedKind,
}

impl SpeedField {
    pub fn constant(grid: Grid3, c0: f64) -> Result<Self> {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::NonPositiveSpeed { node: 0, value: c0 });
        }
        Ok(Self {
            values: vec![c0; grid.len()],
            grid,
            kind: SpeedKind::Constant,
        })
    }

    pub fn from_fn<F: Fn(Point) -> f64>(grid: Grid3, f: F) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.node_position(i))).collect();
        Self::from_values(grid, values)
    }

    /// Gridded field from node values (x-fastest order).
    pub fn from_values(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} speed values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some((node, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::NonPositiveSpeed { node, value });
        }
        Ok(Self {
            grid,
            values,
            kind: SpeedKind::Gridded,
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> SpeedKind {
        self.kind
    }

    /// The constant value, if the field is tagged constant.
    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            SpeedKind::Constant => Some(self.values[0]),
            SpeedKind::Gridded => None,
        }
    }

    pub fn value_at(&self, p: Point) -> f64 {
        match self.kind {
            SpeedKind::Constant => self.values[0],
            SpeedKind::Gridded => self.grid.interpolate(&self.values, p),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::MAX, f64::min)
    }
}
