//! Discrete tabular datasets and their declared attribute domains.
//!
//! The domain is never inferred from data: marginal shapes and every
//! sensitivity bound depend on the declared level counts, so a dataset is
//! always loaded against an explicit [`Domain`] (usually a JSON sidecar).

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    #[default]
    Categorical,
    Numeric,
}

/// One attribute of a [`Domain`]: a name and `size` levels `0..size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub kind: AttributeKind,
}

impl Attribute {
    pub fn new(name: impl Into<String>, size: usize, kind: AttributeKind) -> Self {
        Attribute {
            name: name.into(),
            size,
            labels: None,
            kind,
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Resolve a CSV cell to a level index: labels first, then integer indices.
    fn resolve(&self, cell: &str) -> std::result::Result<usize, Option<i64>> {
        let cell = cell.trim();
        if let Some(labels) = &self.labels {
            if let Some(pos) = labels.iter().position(|l| l == cell) {
                return Ok(pos);
            }
        }
        match cell.parse::<i64>() {
            Ok(v) if v >= 0 && (v as u64) < self.size as u64 => Ok(v as usize),
            Ok(v) => Err(Some(v)),
            Err(_) => Err(None),
        }
    }

    fn label(&self, level: usize) -> String {
        match &self.labels {
            Some(labels) => labels[level].clone(),
            None => level.to_string(),
        }
    }
}

/// Ordered attribute schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Domain {
    attributes: Vec<Attribute>,
}

impl Domain {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &attributes {
            if a.size == 0 {
                return Err(Error::InvalidDomain(format!(
                    "attribute `{}` has size 0",
                    a.name
                )));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(Error::InvalidDomain(format!(
                    "duplicate attribute name `{}`",
                    a.name
                )));
            }
            if let Some(labels) = &a.labels {
                if labels.len() != a.size {
                    return Err(Error::InvalidDomain(format!(
                        "attribute `{}` has {} labels for size {}",
                        a.name,
                        labels.len(),
                        a.size
                    )));
                }
                let distinct: HashSet<_> = labels.iter().collect();
                if distinct.len() != labels.len() {
                    return Err(Error::InvalidDomain(format!(
                        "attribute `{}` has duplicate labels",
                        a.name
                    )));
                }
            }
        }
        Ok(Domain { attributes })
    }

    /// Shorthand for unlabeled categorical attributes named `a0, a1, ...`.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        Domain::new(
            sizes
                .iter()
                .enumerate()
                .map(|(j, &m)| Attribute::new(format!("a{j}"), m, AttributeKind::Categorical))
                .collect(),
        )
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let attributes: Vec<Attribute> = serde_json::from_str(text)?;
        Domain::new(attributes)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.attributes)?)
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, j: usize) -> &Attribute {
        &self.attributes[j]
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.size).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Total domain size `prod m_j`, or `None` if it overflows `u128`.
    pub fn total_size(&self) -> Option<u128> {
        self.attributes
            .iter()
            .try_fold(1u128, |acc, a| acc.checked_mul(a.size as u128))
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let attributes = Vec::<Attribute>::deserialize(d)?;
        Domain::new(attributes).map_err(serde::de::Error::custom)
    }
}

/// `n x d` matrix of level indices, validated against its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDataset {
    domain: Arc<Domain>,
    records: Vec<u32>,
}

impl DiscreteDataset {
    pub fn new(domain: Arc<Domain>, records: Vec<Vec<u32>>) -> Result<Self> {
        let d = domain.len();
        let mut flat = Vec::with_capacity(records.len() * d);
        for (i, row) in records.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "record {i} has {} values, domain has {d} attributes",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                let size = domain.attribute(j).size;
                if v as usize >= size {
                    return Err(Error::OutOfRange {
                        row: i,
                        attribute: domain.attribute(j).name.clone(),
                        level: v as i64,
                        size,
                    });
                }
            }
            flat.extend_from_slice(row);
        }
        Ok(DiscreteDataset {
            domain,
            records: flat,
        })
    }

    /// Build from an already validated flat buffer.
    pub(crate) fn from_flat(domain: Arc<Domain>, records: Vec<u32>) -> Self {
        debug_assert!(domain.is_empty() || records.len().is_multiple_of(domain.len()));
        DiscreteDataset { domain, records }
    }

    pub fn empty(domain: Arc<Domain>) -> Self {
        DiscreteDataset {
            domain,
            records: Vec::new(),
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn n(&self) -> usize {
        if self.domain.is_empty() {
            0
        } else {
            self.records.len() / self.domain.len()
        }
    }

    pub fn d(&self) -> usize {
        self.domain.len()
    }

    pub fn record(&self, i: usize) -> &[u32] {
        let d = self.d();
        &self.records[i * d..(i + 1) * d]
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        let d = self.d().max(1);
        self.records.chunks_exact(d)
    }

    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        self.records().map(|r| r.to_vec()).collect()
    }

    /// Select records by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut flat = Vec::with_capacity(indices.len() * self.d());
        for &i in indices {
            flat.extend_from_slice(self.record(i));
        }
        DiscreteDataset::from_flat(self.domain.clone(), flat)
    }

    /// Write as CSV with a header row; levels are written as labels when
    /// the attribute declares them and `use_labels` is set.
    pub fn write_csv<W: Write>(&self, writer: W, use_labels: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.domain.attributes().iter().map(|a| a.name.as_str()))?;
        for row in self.records() {
            w.write_record(row.iter().enumerate().map(|(j, &v)| {
                let a = self.domain.attribute(j);
                if use_labels {
                    a.label(v as usize)
                } else {
                    v.to_string()
                }
            }))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, use_labels: bool) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), use_labels)
    }
}

/// Result of [`load_csv`]: the dataset plus the number of rows dropped in
/// lenient mode.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: DiscreteDataset,
    pub dropped_rows: usize,
}

pub fn load_csv(path: impl AsRef<Path>, domain: Arc<Domain>, strict: bool) -> Result<Loaded> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), domain, strict)
}

/// Parse CSV records against `domain`. Column order follows the domain, not
/// the file; extra CSV columns are ignored.
///
/// In strict mode the first unresolvable, missing or out-of-range cell is an
/// error. Otherwise the offending row is dropped and counted.
pub fn read_csv<R: Read>(reader: R, domain: Arc<Domain>, strict: bool) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let columns: Vec<usize> = domain
        .attributes()
        .iter()
        .map(|a| {
            headers
                .iter()
                .position(|h| h.trim() == a.name)
                .ok_or_else(|| Error::UnknownColumn(a.name.clone()))
        })
        .collect::<Result<_>>()?;

    let d = domain.len();
    let mut flat = Vec::new();
    let mut row_buf = Vec::with_capacity(d);
    let mut dropped = 0usize;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        row_buf.clear();
        let mut failure = None;
        for (j, &col) in columns.iter().enumerate() {
            let a = domain.attribute(j);
            let cell = record.get(col).unwrap_or("");
            match a.resolve(cell) {
                Ok(level) => row_buf.push(level as u32),
                Err(Some(level)) => {
                    failure = Some(Error::OutOfRange {
                        row,
                        attribute: a.name.clone(),
                        level,
                        size: a.size,
                    });
                    break;
                }
                Err(None) => {
                    failure = Some(Error::UnresolvableValue {
                        row,
                        attribute: a.name.clone(),
                        value: cell.to_string(),
                    });
                    break;
                }
            }
        }
        match failure {
            None => flat.extend_from_slice(&row_buf),
            Some(e) if strict => return Err(e),
            Some(_) => dropped += 1,
        }
    }
    Ok(Loaded {
        dataset: DiscreteDataset::from_flat(domain, flat),
        dropped_rows: dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinStrategy {
    EqualWidth,
    EqualFrequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub levels: Vec<u32>,
    /// `bins + 1` nondecreasing edges.
    pub edges: Vec<f64>,
}

/// Bin real values into `bins` levels.
///
/// Equal-frequency binning assigns levels by sorted rank, and tied values
/// share the level of their first occurrence, so identical inputs always
/// land in one bin.
pub fn discretize_numeric(values: &[f64], bins: usize, strategy: BinStrategy) -> Result<Discretized> {
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(Error::InvalidParameter("cannot discretize an empty column".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("value {v} in numeric column")));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    match strategy {
        BinStrategy::EqualWidth => {
            let width = (max - min) / bins as f64;
            let edges: Vec<f64> = (0..=bins)
                .map(|k| if k == bins { max } else { min + width * k as f64 })
                .collect();
            let levels = values
                .iter()
                .map(|&v| {
                    if width == 0.0 {
                        0
                    } else {
                        (((v - min) / width).floor() as usize).min(bins - 1) as u32
                    }
                })
                .collect();
            Ok(Discretized { levels, edges })
        }
        BinStrategy::EqualFrequency => {
            let n = values.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let mut levels = vec![0u32; n];
            let mut edges = vec![f64::NAN; bins + 1];
            edges[0] = min;
            edges[bins] = max;
            let mut group_start = 0usize;
            for (rank, &i) in order.iter().enumerate() {
                if rank > 0 && values[i] != values[order[rank - 1]] {
                    group_start = rank;
                }
                let level = (group_start * bins / n).min(bins - 1);
                levels[i] = level as u32;
                // first value reaching a level defines that level's lower edge
                for edge in edges.iter_mut().take(level + 1).skip(1) {
                    if edge.is_nan() {
                        *edge = values[i];
                    }
                }
            }
            for edge in edges.iter_mut() {
                if edge.is_nan() {
                    *edge = max;
                }
            }
            Ok(Discretized { levels, edges })
        }
    }
}

/// Shuffle with `seed`, take `test_size` records as the test set and up to
/// `train_cap` of the remainder as the training set.
pub fn split(
    dataset: &DiscreteDataset,
    test_size: usize,
    train_cap: usize,
    seed: u64,
) -> Result<(DiscreteDataset, DiscreteDataset)> {
    let n = dataset.n();
    if test_size > n {
        return Err(Error::InvalidParameter(format!(
            "test size {test_size} exceeds dataset size {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let (test_idx, rest) = idx.split_at(test_size);
    let train_idx = &rest[..rest.len().min(train_cap)];
    Ok((dataset.subset(train_idx), dataset.subset(test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain23() -> Arc<Domain> {
        Arc::new(Domain::from_sizes(&[2, 3]).unwrap())
    }

    #[test]
    fn parses_integer_csv() {
        let csv = "a0,a1\n0,2\n1,0\n";
        let loaded = read_csv(csv.as_bytes(), domain23(), true).unwrap();
        assert_eq!(loaded.dataset.to_rows(), vec![vec![0, 2], vec![1, 0]]);
        assert_eq!(loaded.dropped_rows, 0);
    }

    #[test]
    fn column_order_follows_domain() {
        let csv = "extra,a1,a0\nx,2,0\ny,0,1\n";
        let loaded = read_csv(csv.as_bytes(), domain23(), true).unwrap();
        assert_eq!(loaded.dataset.to_rows(), vec![vec![0, 2], vec![1, 0]]);
    }

    #[test]
    fn out_of_range_is_error_in_strict_mode() {
        let csv = "a0,a1\n0,5\n";
        let err = read_csv(csv.as_bytes(), domain23(), true).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { level: 5, size: 3, .. }), "{err}");
    }

    #[test]
    fn lenient_mode_drops_bad_rows() {
        let csv = "a0,a1\n0,5\n1,\n1,1\nfoo,0\n";
        let loaded = read_csv(csv.as_bytes(), domain23(), false).unwrap();
        assert_eq!(loaded.dataset.to_rows(), vec![vec![1, 1]]);
        assert_eq!(loaded.dropped_rows, 3);
    }

    #[test]
    fn missing_cell_is_error_in_strict_mode() {
        let csv = "a0,a1\n1,\n";
        let err = read_csv(csv.as_bytes(), domain23(), true).unwrap_err();
        assert!(matches!(err, Error::UnresolvableValue { .. }));
    }

    #[test]
    fn unknown_column() {
        let csv = "a0,zz\n0,1\n";
        let err = read_csv(csv.as_bytes(), domain23(), true).unwrap_err();
        assert!(matches!(err, Error::UnknownColumn(ref c) if c == "a1"));
    }

    #[test]
    fn empty_body() {
        let loaded = read_csv("a0,a1\n".as_bytes(), domain23(), true).unwrap();
        assert_eq!(loaded.dataset.n(), 0);
    }

    #[test]
    fn labels_resolve() {
        let domain = Arc::new(
            Domain::new(vec![
                Attribute::new("sex", 2, AttributeKind::Categorical)
                    .with_labels(vec!["F".into(), "M".into()]),
                Attribute::new("age", 3, AttributeKind::Numeric),
            ])
            .unwrap(),
        );
        let csv = "age,sex\n2,M\n0,F\n";
        let loaded = read_csv(csv.as_bytes(), domain, true).unwrap();
        assert_eq!(loaded.dataset.to_rows(), vec![vec![1, 2], vec![0, 0]]);
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::from_sizes(&[2, 0]).is_err());
        let dup = vec![
            Attribute::new("x", 2, AttributeKind::Numeric),
            Attribute::new("x", 3, AttributeKind::Numeric),
        ];
        assert!(Domain::new(dup).is_err());
        let bad_labels =
            vec![Attribute::new("x", 2, AttributeKind::Numeric).with_labels(vec!["a".into()])];
        assert!(Domain::new(bad_labels).is_err());
    }

    #[test]
    fn total_size_guards_overflow() {
        let d = Domain::from_sizes(&[1000; 20]).unwrap();
        assert_eq!(d.total_size(), None);
        let d = Domain::from_sizes(&[2, 3, 4]).unwrap();
        assert_eq!(d.total_size(), Some(24));
    }

    #[test]
    fn domain_json_schema() {
        let json = r#"[{"name":"age","size":3,"kind":"numeric"},
                      {"name":"sex","size":2,"labels":["F","M"],"kind":"categorical"}]"#;
        let d = Domain::from_json(json).unwrap();
        assert_eq!(d.sizes(), vec![3, 2]);
        assert_eq!(d.attribute(0).kind, AttributeKind::Numeric);
        let back = Domain::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn equal_width_midpoint() {
        let out = discretize_numeric(&[0.0, 1.0, 2.0, 3.0], 2, BinStrategy::EqualWidth).unwrap();
        assert_eq!(out.levels, vec![0, 0, 1, 1]);
        assert_eq!(out.edges, vec![0.0, 1.5, 3.0]);
    }

    #[test]
    fn single_value_degenerates() {
        for s in [BinStrategy::EqualWidth, BinStrategy::EqualFrequency] {
            let out = discretize_numeric(&[10.0], 20, s).unwrap();
            assert_eq!(out.levels, vec![0]);
            assert_eq!(out.edges.len(), 21);
        }
        let out = discretize_numeric(&[4.0; 7], 3, BinStrategy::EqualFrequency).unwrap();
        assert!(out.levels.iter().all(|&l| l == 0));
    }

    #[test]
    fn discretize_rejects_bad_input() {
        assert!(discretize_numeric(&[1.0], 0, BinStrategy::EqualWidth).is_err());
        assert!(discretize_numeric(&[], 2, BinStrategy::EqualWidth).is_err());
        assert!(discretize_numeric(&[f64::NAN], 2, BinStrategy::EqualWidth).is_err());
    }

    #[test]
    fn equal_frequency_matches_quantile_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1001;
        let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let out = discretize_numeric(&values, 4, BinStrategy::EqualFrequency).unwrap();

        // oracle: sort, cut at the k*n/4 order statistics
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        for (v, &l) in values.iter().zip(&out.levels) {
            let rank = sorted.iter().position(|s| s == v).unwrap();
            let expected = (0..4usize).rev().find(|&k| rank >= (k * n).div_ceil(4)).unwrap();
            assert_eq!(l as usize, expected);
        }
        let mut counts = [0usize; 4];
        for &l in &out.levels {
            counts[l as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() <= 1.0, "{counts:?}");
        }
        assert!(out.edges.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(out.edges.len(), 5);
    }

    #[test]
    fn split_sizes() {
        let domain = Arc::new(Domain::from_sizes(&[3]).unwrap());
        let make = |n: usize| {
            DiscreteDataset::from_flat(domain.clone(), (0..n).map(|i| (i % 3) as u32).collect())
        };
        let (train, test) = split(&make(1100), 1000, 50_000, 1).unwrap();
        assert_eq!((train.n(), test.n()), (100, 1000));
        let (train, test) = split(&make(60_000), 1000, 50_000, 1).unwrap();
        assert_eq!((train.n(), test.n()), (50_000, 1000));
        assert!(split(&make(10), 11, 5, 1).is_err());
    }

    #[test]
    fn split_is_deterministic_partition() {
        // encode the row index into the records so we can recover it
        let n = 500usize;
        let domain = Arc::new(Domain::from_sizes(&[n]).unwrap());
        let ds = DiscreteDataset::from_flat(domain, (0..n as u32).collect());
        let (a_train, a_test) = split(&ds, 100, 300, 42).unwrap();
        let (b_train, b_test) = split(&ds, 100, 300, 42).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        let train: HashSet<u32> = a_train.records().map(|r| r[0]).collect();
        let test: HashSet<u32> = a_test.records().map(|r| r[0]).collect();
        assert_eq!(train.len(), 300);
        assert_eq!(test.len(), 100);
        assert!(train.is_disjoint(&test));
        let (c_train, _) = split(&ds, 100, 300, 43).unwrap();
        assert_ne!(a_train, c_train);
    }

    #[test]
    fn csv_label_round_trip() {
        let domain = Arc::new(
            Domain::new(vec![
                Attribute::new("c", 3, AttributeKind::Categorical)
                    .with_labels(vec!["x".into(), "y".into(), "z".into()]),
                Attribute::new("k", 4, AttributeKind::Numeric),
            ])
            .unwrap(),
        );
        let ds = DiscreteDataset::new(
            domain.clone(),
            vec![vec![0, 3], vec![2, 1], vec![1, 0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, true).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("z,1"));
        let back = read_csv(buf.as_slice(), domain, true).unwrap().dataset;
        assert_eq!(back, ds);
    }
}
