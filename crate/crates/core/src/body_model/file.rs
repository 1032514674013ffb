//! JSON model-definition files.
//!
//! ```text
//! {
//!   "version": 1,
//!   "units": "mm",                      // or "m"; converted to mm on load
//!   "joint_count": J, "vertex_count": V,
//!   "num_shape": 10, "num_expression": 10,
//!   "parents": [-1, 0, ...],
//!   "template": [...],                  // V×3
//!   "shape_basis": [...],               // V×3×K, index (v*3 + axis)*K + k
//!   "pose_corrective_basis": [...],     // optional, V×3×9(J-1)
//!   "joint_regressor": [...],           // J×V
//!   "skinning_weights": [...],          // V×J
//!   "part_masks": {"body": [...], ...},
//!   "part_joint_masks": {"body": [...], ...},
//!   "arrays": "model.npz"               // optional sibling container
//! }
//! ```
//!
//! Arrays are row-major and may be flat or nested. Any array may instead be
//! the string `"npz:<key>"`, naming a member of the `arrays` container, which
//! is resolved relative to the JSON file.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use serde_json::{json, Map, Value};

use super::{BodyModelDef, BodyModelError, KinematicTree, ModelArrays};
use crate::io::{read_npz_file, NpzArchive};

pub const FORMAT_VERSION: u64 = 1;

fn format_err(msg: impl Into<String>) -> BodyModelError {
    BodyModelError::Format(msg.into())
}

fn flatten_numbers(value: &Value, out: &mut Vec<f64>, key: &str) -> Result<(), BodyModelError> {
    match value {
        Value::Number(n) => {
            out.push(
                n.as_f64()
                    .ok_or_else(|| format_err(format!("'{key}' has a non-numeric entry")))?,
            );
            Ok(())
        }
        Value::Array(items) => items.iter().try_for_each(|v| flatten_numbers(v, out, key)),
        _ => Err(format_err(format!("'{key}' must contain only numbers"))),
    }
}

struct Source<'a> {
    doc: &'a Map<String, Value>,
    archive: Option<NpzArchive>,
}

impl Source<'_> {
    fn array(&self, key: &str, expected: usize) -> Result<Option<Vec<f64>>, BodyModelError> {
        let Some(value) = self.doc.get(key) else {
            return Ok(None);
        };
        let values = match value {
            Value::Null => return Ok(None),
            Value::String(s) => {
                let member = s
                    .strip_prefix("npz:")
                    .ok_or_else(|| format_err(format!("'{key}' must be an array or \"npz:<key>\"")))?;
                let archive = self
                    .archive
                    .as_ref()
                    .ok_or_else(|| format_err(format!("'{key}' references a container but 'arrays' is not set")))?;
                archive
                    .get(member)
                    .ok_or_else(|| format_err(format!("container has no member '{member}'")))?
                    .to_f64()
            }
            _ => {
                let mut out = Vec::new();
                flatten_numbers(value, &mut out, key)?;
                out
            }
        };
        if values.len() != expected {
            return Err(format_err(format!(
                "'{key}' has {} values, expected {expected}",
                values.len()
            )));
        }
        Ok(Some(values))
    }

    fn required(&self, key: &str, expected: usize) -> Result<Vec<f64>, BodyModelError> {
        self.array(key, expected)?
            .ok_or_else(|| format_err(format!("missing required array '{key}'")))
    }

    fn count(&self, key: &str) -> Result<Option<usize>, BodyModelError> {
        match self.doc.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(|n| Some(n as usize))
                .ok_or_else(|| format_err(format!("'{key}' must be a nonnegative integer"))),
        }
    }

    fn index_sets(&self, key: &str) -> Result<BTreeMap<String, Vec<usize>>, BodyModelError> {
        let mut out = BTreeMap::new();
        let Some(value) = self.doc.get(key) else {
            return Ok(out);
        };
        let obj = value
            .as_object()
            .ok_or_else(|| format_err(format!("'{key}' must be an object")))?;
        for (name, idx) in obj {
            let list = idx
                .as_array()
                .ok_or_else(|| format_err(format!("'{key}.{name}' must be an index list")))?
                .iter()
                .map(|v| {
                    v.as_u64()
                        .map(|i| i as usize)
                        .ok_or_else(|| format_err(format!("'{key}.{name}' has a non-index entry")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.insert(name.clone(), list);
        }
        Ok(out)
    }
}

/// Parses a model definition. `base_dir` resolves the optional `arrays` container.
pub fn model_from_json(text: &str, base_dir: Option<&Path>) -> Result<BodyModelDef, BodyModelError> {
    let root: Value = serde_json::from_str(text)?;
    let doc = root
        .as_object()
        .ok_or_else(|| format_err("model file must be a JSON object"))?;

    match doc.get("version").and_then(Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(format_err(format!("unsupported model format version {v}"))),
        None => return Err(format_err("missing 'version'")),
    }
    let unit_scale = match doc.get("units").and_then(Value::as_str).unwrap_or("mm") {
        "mm" => 1.0,
        "m" => 1000.0,
        other => return Err(format_err(format!("unknown units '{other}'"))),
    };

    let archive = match doc.get("arrays") {
        None | Some(Value::Null) => None,
        Some(Value::String(rel)) => {
            let path = base_dir.map(|d| d.join(rel)).unwrap_or_else(|| rel.into());
            Some(read_npz_file(&path)?)
        }
        Some(_) => return Err(format_err("'arrays' must be a file name")),
    };
    let src = Source { doc, archive };

    let parents: Vec<i64> = doc
        .get("parents")
        .and_then(Value::as_array)
        .ok_or_else(|| format_err("missing 'parents'"))?
        .iter()
        .map(|v| {
            v.as_i64()
                .ok_or_else(|| format_err("'parents' entries must be integers"))
        })
        .collect::<Result<_, _>>()?;
    let tree = KinematicTree::new(&parents)?;
    let j = tree.joint_count();
    if let Some(declared) = src.count("joint_count")? {
        if declared != j {
            return Err(BodyModelError::DimensionMismatch {
                what: "joint_count vs parents",
                expected: declared,
                found: j,
            });
        }
    }
    let v = src
        .count("vertex_count")?
        .ok_or_else(|| format_err("missing 'vertex_count'"))?;
    let num_shape = src.count("num_shape")?.unwrap_or(10);
    let num_expression = src.count("num_expression")?.unwrap_or(10);
    let k = num_shape + num_expression;

    let template: Vec<Vector3<f64>> = src
        .required("template", 3 * v)?
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]) * unit_scale)
        .collect();
    let shape_basis = DMatrix::from_row_slice(3 * v, k, &src.required("shape_basis", 3 * v * k)?) * unit_scale;
    let pose_cols = 9 * (j - 1);
    let pose_corrective_basis = src
        .array("pose_corrective_basis", 3 * v * pose_cols)?
        .map(|vals| DMatrix::from_row_slice(3 * v, pose_cols, &vals) * unit_scale);
    let joint_regressor = DMatrix::from_row_slice(j, v, &src.required("joint_regressor", j * v)?);
    let skinning_weights = DMatrix::from_row_slice(v, j, &src.required("skinning_weights", v * j)?);

    BodyModelDef::new(ModelArrays {
        template,
        shape_basis,
        num_shape,
        num_expression,
        pose_corrective_basis,
        joint_regressor,
        skinning_weights,
        tree,
        part_masks: src.index_sets("part_masks")?,
        part_joint_masks: src.index_sets("part_joint_masks")?,
    })
}

pub fn load_model(path: &Path) -> Result<BodyModelDef, BodyModelError> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text, path.parent())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Serializes a model with all arrays inline, in millimeters.
pub fn model_to_json(model: &BodyModelDef) -> String {
    let a = model.arrays();
    let mut doc = json!({
        "version": FORMAT_VERSION,
        "units": "mm",
        "joint_count": model.joint_count(),
        "vertex_count": model.vertex_count(),
        "num_shape": a.num_shape,
        "num_expression": a.num_expression,
        "parents": a.tree.signed_parents(),
        "template": a.template.iter().flat_map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>(),
        "shape_basis": row_major(&a.shape_basis),
        "joint_regressor": row_major(&a.joint_regressor),
        "skinning_weights": row_major(&a.skinning_weights),
        "part_masks": a.part_masks,
        "part_joint_masks": a.part_joint_masks,
    });
    if let Some(p) = &a.pose_corrective_basis {
        doc["pose_corrective_basis"] = json!(row_major(p));
    }
    let mut s = serde_json::to_string(&doc).expect("model serializes");
    s.push('\n');
    s
}

pub fn write_model(path: &Path, model: &BodyModelDef) -> Result<(), BodyModelError> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}
