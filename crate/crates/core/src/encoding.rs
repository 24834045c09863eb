//! Numerical encodings of discrete records.
//!
//! Attribute `j` with level `s` is encoded as `A_j e_s`, where `e_s` is the
//! one-hot vector of length `m_j` and `A_j` is a fixed `p_j x m_j` matrix:
//! a row of scalar values, the identity, or the identity with its first row
//! dropped. The blocks are concatenated in attribute order into `z`, one
//! component of `z` is the target `y`, and the remaining `p` components form
//! the feature vector `x`.
//!
//! Columns of `Z = [X, y]` keep the attribute order of `z` with the target
//! component moved to the end.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeKind, DiscreteDataset, Domain};
use crate::{Error, Result};

/// Linear transform applied to one attribute's one-hot vector.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeEncoding {
    /// `A_j = v^T`: level `s` maps to `values[s]`.
    Scalar(Vec<f64>),
    OneHot,
    /// One-hot with the first level's row dropped; level 0 encodes as zeros.
    ReducedOneHot,
}

impl AttributeEncoding {
    /// Output width `p_j` for an attribute with `size` levels.
    pub fn width(&self, size: usize) -> usize {
        match self {
            AttributeEncoding::Scalar(_) => 1,
            AttributeEncoding::OneHot => size,
            AttributeEncoding::ReducedOneHot => size - 1,
        }
    }

    pub fn is_indicator(&self) -> bool {
        !matches!(self, AttributeEncoding::Scalar(_))
    }

    /// The `p_j x m_j` matrix `A_j`.
    pub fn transform(&self, size: usize) -> DMatrix<f64> {
        match self {
            AttributeEncoding::Scalar(v) => DMatrix::from_row_slice(1, size, v),
            AttributeEncoding::OneHot => DMatrix::identity(size, size),
            AttributeEncoding::ReducedOneHot => {
                DMatrix::from_fn(size - 1, size, |r, c| if c == r + 1 { 1.0 } else { 0.0 })
            }
        }
    }

    /// Write `A_j e_level` into `out` (length `p_j`).
    fn write(&self, level: usize, out: &mut [f64]) {
        match self {
            AttributeEncoding::Scalar(v) => out[0] = v[level],
            AttributeEncoding::OneHot => {
                out.fill(0.0);
                out[level] = 1.0;
            }
            AttributeEncoding::ReducedOneHot => {
                out.fill(0.0);
                if level > 0 {
                    out[level - 1] = 1.0;
                }
            }
        }
    }

    fn max_abs(&self) -> f64 {
        match self {
            AttributeEncoding::Scalar(v) => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            _ => 1.0,
        }
    }
}

/// Affine map sending `min -> -1` and `max -> +1`; constant input maps to 0.
pub fn rescale_values(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![0.0; values.len()];
    }
    values
        .iter()
        .map(|&v| (2.0 * (v - min) / (max - min) - 1.0).clamp(-1.0, 1.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub attribute: usize,
    /// Component within the attribute's encoding (0 for scalar encodings).
    pub component: usize,
}

/// Validated encoding of every attribute of a domain, plus the target choice.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingSpec {
    sizes: Vec<usize>,
    names: Vec<String>,
    /// As declared, before rescaling.
    declared: Vec<AttributeEncoding>,
    /// What is actually applied (scalar values rescaled when `rescale`).
    effective: Vec<AttributeEncoding>,
    target: Target,
    rescale: bool,
    /// Start of each attribute's block within `z`.
    offsets: Vec<usize>,
    /// `z` component -> column of `[X, y]`.
    z_to_column: Vec<usize>,
}

impl EncodingSpec {
    pub fn new(
        domain: &Domain,
        encodings: Vec<AttributeEncoding>,
        target: Target,
        rescale: bool,
    ) -> Result<Self> {
        let sizes = domain.sizes();
        if encodings.len() != sizes.len() {
            return Err(Error::InvalidEncoding(format!(
                "{} encodings for {} attributes",
                encodings.len(),
                sizes.len()
            )));
        }
        for (j, (enc, &m)) in encodings.iter().zip(&sizes).enumerate() {
            if let AttributeEncoding::Scalar(v) = enc {
                if v.len() != m {
                    return Err(Error::InvalidEncoding(format!(
                        "attribute `{}`: {} scalar values for {m} levels",
                        domain.attribute(j).name,
                        v.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidEncoding(format!(
                        "attribute `{}`: non-finite scalar value",
                        domain.attribute(j).name
                    )));
                }
            }
        }
        if target.attribute >= sizes.len() {
            return Err(Error::InvalidEncoding(format!(
                "target attribute {} out of range",
                target.attribute
            )));
        }
        let t_width = encodings[target.attribute].width(sizes[target.attribute]);
        if target.component >= t_width {
            return Err(Error::InvalidEncoding(format!(
                "target component {} out of range for width {t_width}",
                target.component
            )));
        }

        let effective: Vec<AttributeEncoding> = encodings
            .iter()
            .map(|e| match e {
                AttributeEncoding::Scalar(v) if rescale => {
                    AttributeEncoding::Scalar(rescale_values(v))
                }
                other => other.clone(),
            })
            .collect();

        let mut offsets = Vec::with_capacity(sizes.len());
        let mut width = 0;
        for (enc, &m) in effective.iter().zip(&sizes) {
            offsets.push(width);
            width += enc.width(m);
        }
        if width < 1 {
            return Err(Error::InvalidEncoding("encoding has zero width".into()));
        }
        let target_z = offsets[target.attribute] + target.component;
        let p = width - 1;
        let z_to_column = (0..width)
            .map(|k| match k.cmp(&target_z) {
                std::cmp::Ordering::Less => k,
                std::cmp::Ordering::Equal => p,
                std::cmp::Ordering::Greater => k - 1,
            })
            .collect();

        Ok(EncodingSpec {
            sizes,
            names: domain.attributes().iter().map(|a| a.name.clone()).collect(),
            declared: encodings,
            effective,
            target,
            rescale,
            offsets,
            z_to_column,
        })
    }

    /// Scalar `1..m_j` for numeric attributes and reduced one-hot for
    /// categorical ones, with the target scalar-encoded and values rescaled
    /// to `[-1, 1]`.
    pub fn default_for(domain: &Domain, target: usize) -> Result<Self> {
        let encodings = domain
            .attributes()
            .iter()
            .enumerate()
            .map(|(j, a)| default_encoding(a.kind, a.size, j == target))
            .collect();
        EncodingSpec::new(
            domain,
            encodings,
            Target {
                attribute: target,
                component: 0,
            },
            true,
        )
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_attributes(&self) -> usize {
        self.sizes.len()
    }

    /// Effective encoding of attribute `j` (after rescaling).
    pub fn encoding(&self, j: usize) -> &AttributeEncoding {
        &self.effective[j]
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn rescale(&self) -> bool {
        self.rescale
    }

    pub fn width(&self, j: usize) -> usize {
        self.effective[j].width(self.sizes[j])
    }

    /// Number of features `p`.
    pub fn p(&self) -> usize {
        self.z_to_column.len() - 1
    }

    pub fn transform(&self, j: usize) -> DMatrix<f64> {
        self.effective[j].transform(self.sizes[j])
    }

    /// Columns of `Z = [X, y]` holding attribute `j`'s block, in component order.
    pub fn block_columns(&self, j: usize) -> Vec<usize> {
        let start = self.offsets[j];
        (start..start + self.width(j))
            .map(|k| self.z_to_column[k])
            .collect()
    }

    /// `sqrt(||U||^2 + c)`: scalar features are bounded by their largest
    /// absolute value and each indicator-encoded attribute contributes at
    /// most one unit entry.
    pub fn feature_bound(&self) -> f64 {
        let (u2, c, _) = self.bound_parts();
        (u2 + c as f64).sqrt()
    }

    /// The looser `sqrt(||U||^2 + b)` bound that treats each indicator column
    /// separately.
    pub fn naive_feature_bound(&self) -> f64 {
        let (u2, _, b) = self.bound_parts();
        (u2 + b as f64).sqrt()
    }

    fn bound_parts(&self) -> (f64, usize, usize) {
        let mut u2 = 0.0;
        let mut c = 0;
        let mut b = 0;
        for j in 0..self.sizes.len() {
            let mut feature_cols = self.width(j);
            if j == self.target.attribute {
                feature_cols -= 1;
            }
            if feature_cols == 0 {
                continue;
            }
            let enc = &self.effective[j];
            if enc.is_indicator() {
                c += 1;
                b += feature_cols;
            } else {
                u2 += enc.max_abs().powi(2);
            }
        }
        (u2, c, b)
    }

    /// Bound on `|y|`.
    pub fn target_bound(&self) -> f64 {
        self.effective[self.target.attribute].max_abs()
    }

    /// Logistic regression needs a scalar target on a binary attribute with
    /// values exactly `{-1, +1}`.
    pub fn validate_logistic(&self) -> Result<()> {
        let t = self.target.attribute;
        match &self.effective[t] {
            AttributeEncoding::Scalar(v) if self.sizes[t] == 2 => {
                let mut sorted = v.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted == [-1.0, 1.0] {
                    Ok(())
                } else {
                    Err(Error::InvalidEncoding(format!(
                        "logistic target `{}` must encode to {{-1, +1}}, got {v:?}",
                        self.names[t]
                    )))
                }
            }
            _ => Err(Error::InvalidEncoding(format!(
                "logistic target `{}` must be a scalar-encoded binary attribute",
                self.names[t]
            ))),
        }
    }

    /// Encode one record as a row of `Z = [x, y]`.
    pub fn encode_record(&self, record: &[u32], out: &mut [f64]) {
        let mut block = Vec::new();
        for (j, &level) in record.iter().enumerate() {
            block.resize(self.width(j), 0.0);
            self.effective[j].write(level as usize, &mut block);
            for (c, &v) in block.iter().enumerate() {
                out[self.z_to_column[self.offsets[j] + c]] = v;
            }
        }
    }

    pub fn from_json(domain: &Domain, text: &str) -> Result<Self> {
        let file: EncodingFile = serde_json::from_str(text)?;
        file.resolve(domain)
    }

    pub fn load_json(domain: &Domain, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(domain, &text)
    }

    pub fn to_json(&self) -> Result<String> {
        let attributes = self
            .names
            .iter()
            .zip(&self.declared)
            .map(|(name, enc)| {
                let entry = match enc {
                    AttributeEncoding::Scalar(v) => EncodingEntry::Scalar {
                        values: Some(v.clone()),
                    },
                    AttributeEncoding::OneHot => EncodingEntry::OneHot,
                    AttributeEncoding::ReducedOneHot => EncodingEntry::ReducedOneHot,
                };
                (name.clone(), entry)
            })
            .collect();
        let file = EncodingFile {
            attributes,
            target: TargetEntry {
                attribute: self.names[self.target.attribute].clone(),
                component: self.target.component,
            },
            rescale: self.rescale,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

fn default_encoding(kind: AttributeKind, size: usize, is_target: bool) -> AttributeEncoding {
    match kind {
        AttributeKind::Categorical if !is_target => AttributeEncoding::ReducedOneHot,
        _ => AttributeEncoding::Scalar((1..=size).map(|v| v as f64).collect()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum EncodingEntry {
    Scalar {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
    },
    OneHot,
    ReducedOneHot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TargetEntry {
    attribute: String,
    #[serde(default)]
    component: usize,
}

/// JSON sidecar: per-attribute encodings keyed by name, the target, and the
/// rescale flag. Attributes not listed get the default encoding for their kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EncodingFile {
    #[serde(default)]
    attributes: BTreeMap<String, EncodingEntry>,
    target: TargetEntry,
    #[serde(default = "default_true")]
    rescale: bool,
}

fn default_true() -> bool {
    true
}

impl EncodingFile {
    fn resolve(self, domain: &Domain) -> Result<EncodingSpec> {
        for name in self.attributes.keys() {
            if domain.index_of(name).is_none() {
                return Err(Error::InvalidEncoding(format!(
                    "encoding names unknown attribute `{name}`"
                )));
            }
        }
        let target = domain.index_of(&self.target.attribute).ok_or_else(|| {
            Error::InvalidEncoding(format!(
                "unknown target attribute `{}`",
                self.target.attribute
            ))
        })?;
        let encodings = domain
            .attributes()
            .iter()
            .enumerate()
            .map(|(j, a)| match self.attributes.get(&a.name) {
                Some(EncodingEntry::Scalar { values: Some(v) }) => {
                    AttributeEncoding::Scalar(v.clone())
                }
                Some(EncodingEntry::Scalar { values: None }) => {
                    AttributeEncoding::Scalar((1..=a.size).map(|v| v as f64).collect())
                }
                Some(EncodingEntry::OneHot) => AttributeEncoding::OneHot,
                Some(EncodingEntry::ReducedOneHot) => AttributeEncoding::ReducedOneHot,
                None => default_encoding(a.kind, a.size, j == target),
            })
            .collect();
        EncodingSpec::new(
            domain,
            encodings,
            Target {
                attribute: target,
                component: self.target.component,
            },
            self.rescale,
        )
    }
}

/// Encoded design: `X` (`n x p`), `y`, and the bounds used for sensitivity.
#[derive(Debug, Clone)]
pub struct EncodedData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub x_bound: f64,
    pub y_bound: f64,
    /// Columns of `Z = [X, y]` for each attribute.
    pub block_map: Vec<Vec<usize>>,
}

impl EncodedData {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// `Z = [X, y]`.
    pub fn z(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.x.nrows(), self.x.ncols() + 1);
        z.columns_mut(0, self.x.ncols()).copy_from(&self.x);
        z.set_column(self.x.ncols(), &self.y);
        z
    }
}

pub fn encode(dataset: &DiscreteDataset, spec: &EncodingSpec) -> Result<EncodedData> {
    if dataset.domain().sizes() != spec.sizes() {
        return Err(Error::DimensionMismatch(format!(
            "encoding expects sizes {:?}, dataset has {:?}",
            spec.sizes(),
            dataset.domain().sizes()
        )));
    }
    let n = dataset.n();
    let p = spec.p();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut row = vec![0.0; p + 1];
    for (i, record) in dataset.records().enumerate() {
        spec.encode_record(record, &mut row);
        for k in 0..p {
            x[(i, k)] = row[k];
        }
        y[i] = row[p];
    }
    Ok(EncodedData {
        x,
        y,
        x_bound: spec.feature_bound(),
        y_bound: spec.target_bound(),
        block_map: (0..spec.num_attributes())
            .map(|j| spec.block_columns(j))
            .collect(),
    })
}
