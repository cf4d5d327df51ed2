use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{DsiError, Result};

/// Physical quantity carried by one entry of the predicted-data vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QuantityKind {
    OilRate,
    WaterRate,
    InjectionRate,
    Pressure,
    Other,
}

impl QuantityKind {
    pub const ALL: [QuantityKind; 5] = [
        QuantityKind::OilRate,
        QuantityKind::WaterRate,
        QuantityKind::InjectionRate,
        QuantityKind::Pressure,
        QuantityKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuantityKind::OilRate => "oil_rate",
            QuantityKind::WaterRate => "water_rate",
            QuantityKind::InjectionRate => "injection_rate",
            QuantityKind::Pressure => "pressure",
            QuantityKind::Other => "other",
        }
    }
}

impl fmt::Display for QuantityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuantityKind {
    type Err = DsiError;

    fn from_str(s: &str) -> Result<Self> {
        QuantityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| DsiError::UnknownKind(s.trim().to_string()))
    }
}

/// Metadata for one entry of the predicted-data vector `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataElement {
    pub id: String,
    pub well_id: String,
    /// Well head easting (m).
    pub x: f64,
    /// Well head northing (m).
    pub y: f64,
    /// Days since the start of production.
    pub time: f64,
    pub kind: QuantityKind,
    pub is_history: bool,
    /// Standard deviation of the data error, in the units of the datum.
    pub noise_std: f64,
}

/// Ordered description of `d`, split into history (`d_h`) and forecast (`d_f`)
/// elements. History elements need not be contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct DataLayout {
    elements: Vec<DataElement>,
    history: Vec<usize>,
    forecast: Vec<usize>,
    by_id: HashMap<String, usize>,
}

impl DataLayout {
    pub fn new(elements: Vec<DataElement>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(elements.len());
        let mut history = Vec::new();
        let mut forecast = Vec::new();
        for (i, e) in elements.iter().enumerate() {
            if !(e.x.is_finite() && e.y.is_finite() && e.time.is_finite()) {
                return Err(DsiError::InvalidInput(format!(
                    "element '{}' has non-finite coordinates",
                    e.id
                )));
            }
            if e.time < 0.0 {
                return Err(DsiError::InvalidInput(format!(
                    "element '{}' has negative time {}",
                    e.id, e.time
                )));
            }
            if e.is_history {
                if !(e.noise_std > 0.0 && e.noise_std.is_finite()) {
                    return Err(DsiError::InvalidInput(format!(
                        "history element '{}' needs a positive noise_std, got {}",
                        e.id, e.noise_std
                    )));
                }
                history.push(i);
            } else {
                if !(e.noise_std >= 0.0 && e.noise_std.is_finite()) {
                    return Err(DsiError::InvalidInput(format!(
                        "element '{}' has invalid noise_std {}",
                        e.id, e.noise_std
                    )));
                }
                forecast.push(i);
            }
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(DsiError::InvalidInput(format!("duplicate element id '{}'", e.id)));
            }
        }
        Ok(Self {
            elements,
            history,
            forecast,
            by_id,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[DataElement] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &DataElement {
        &self.elements[i]
    }

    /// Row indices of `d_h` within `d`, in layout order.
    pub fn history_indices(&self) -> &[usize] {
        &self.history
    }

    pub fn forecast_indices(&self) -> &[usize] {
        &self.forecast
    }

    pub fn n_history(&self) -> usize {
        self.history.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Layout restricted to the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let elements = rows
            .iter()
            .map(|&r| {
                self.elements
                    .get(r)
                    .cloned()
                    .ok_or_else(|| DsiError::InvalidInput(format!("row {r} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(elements)
    }

    /// Noise standard deviations of the history elements (the diagonal of `Ce^{1/2}`).
    pub fn history_noise(&self) -> Vec<f64> {
        self.history.iter().map(|&i| self.elements[i].noise_std).collect()
    }
}
