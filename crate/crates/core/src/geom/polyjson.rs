//! Direct 2D input: `{ "outer": [[x, y], ...], "holes": [[[x, y], ...], ...] }`
//! in millimetres. `outer` may also be a list of rings for parts with several
//! islands, and an optional `z` records the layer height. Winding in the file
//! is irrelevant; roles come from nesting.

use std::path::Path;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use super::{orient_slices, GeomError, Polygon, SliceSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rings {
    One(Vec<[f64; 2]>),
    Many(Vec<Vec<[f64; 2]>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolygonFile {
    pub outer: Rings,
    #[serde(default)]
    pub holes: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

fn ring(points: &[[f64; 2]]) -> Polygon {
    Polygon::new(points.iter().map(|&p| DVec2::from_array(p)).collect())
}

fn unring(p: &Polygon) -> Vec<[f64; 2]> {
    p.points.iter().map(|p| p.to_array()).collect()
}

impl PolygonFile {
    pub fn to_slices(&self) -> Result<SliceSet, GeomError> {
        let mut loops: Vec<Polygon> = match &self.outer {
            Rings::One(r) => vec![ring(r)],
            Rings::Many(rs) => rs.iter().map(|r| ring(r)).collect(),
        };
        loops.extend(self.holes.iter().map(|r| ring(r)));
        for (k, l) in loops.iter().enumerate() {
            if l.points.iter().any(|p| !p.is_finite()) {
                return Err(GeomError::InvalidPolygon(format!("ring {k} has non-finite coordinates")));
            }
        }
        let loops: Vec<Polygon> = loops.iter().map(|l| l.simplified(1e-12)).collect();
        orient_slices(loops, self.z.unwrap_or(0.0))
    }

    pub fn from_slices(slices: &SliceSet) -> Self {
        let outer = match slices.outer.as_slice() {
            [one] => Rings::One(unring(one)),
            many => Rings::Many(many.iter().map(unring).collect()),
        };
        Self {
            outer,
            holes: slices.holes.iter().map(unring).collect(),
            z: Some(slices.z),
        }
    }
}

pub fn parse(text: &str) -> Result<SliceSet, GeomError> {
    let file: PolygonFile = serde_json::from_str(text)?;
    file.to_slices()
}

pub fn load(path: impl AsRef<Path>) -> Result<SliceSet, GeomError> {
    parse(&std::fs::read_to_string(path)?)
}

pub fn to_json(slices: &SliceSet) -> String {
    serde_json::to_string_pretty(&PolygonFile::from_slices(slices)).expect("polygon file serialises")
}
