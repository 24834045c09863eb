//! Marginal queries, tables and workloads.
//!
//! A table over the sorted attribute set `r` stores one count per tuple of
//! `Omega_r`, laid out row-major over the attributes in ascending id order:
//! for `r = {j, k}` with `j < k`, cell `(s, t)` lives at `s * m_k + t`.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{DiscreteDataset, Domain};
use crate::{Error, Result};

/// Sorted, duplicate-free, nonempty set of attribute ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct MarginalQuery {
    attrs: Vec<usize>,
}

impl MarginalQuery {
    pub fn new(mut attrs: Vec<usize>) -> Result<Self> {
        if attrs.is_empty() {
            return Err(Error::InvalidParameter("marginal query needs an attribute".into()));
        }
        attrs.sort_unstable();
        if attrs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!(
                "duplicate attribute in marginal query {attrs:?}"
            )));
        }
        Ok(MarginalQuery { attrs })
    }

    pub fn pair(j: usize, k: usize) -> Result<Self> {
        MarginalQuery::new(vec![j, k])
    }

    pub fn attrs(&self) -> &[usize] {
        &self.attrs
    }

    pub fn arity(&self) -> usize {
        self.attrs.len()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.attrs.binary_search(&j).is_ok()
    }

    /// `m_r = prod_{j in r} m_j`, or `None` on overflow.
    pub fn size(&self, domain: &Domain) -> Option<u128> {
        self.attrs
            .iter()
            .try_fold(1u128, |acc, &j| acc.checked_mul(domain.attribute(j).size as u128))
    }
}

impl TryFrom<Vec<usize>> for MarginalQuery {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        MarginalQuery::new(v)
    }
}

impl From<MarginalQuery> for Vec<usize> {
    fn from(q: MarginalQuery) -> Self {
        q.attrs
    }
}

/// Counts (or estimated counts) over `Omega_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct MarginalTable {
    #[serde(rename = "attrs")]
    query: MarginalQuery,
    /// Level counts of the query attributes, in query order.
    shape: Vec<usize>,
    values: Vec<f64>,
    exact: bool,
}

impl MarginalTable {
    pub fn new(query: MarginalQuery, shape: Vec<usize>, values: Vec<f64>, exact: bool) -> Result<Self> {
        if shape.len() != query.arity() {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} does not match query {:?}",
                query.attrs()
            )));
        }
        let len: usize = shape.iter().product();
        if values.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "table over shape {shape:?} needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(MarginalTable {
            query,
            shape,
            values,
            exact,
        })
    }

    pub fn zeros(query: MarginalQuery, domain: &Domain) -> Self {
        let shape: Vec<usize> = query.attrs().iter().map(|&j| domain.attribute(j).size).collect();
        let len = shape.iter().product();
        MarginalTable {
            query,
            shape,
            values: vec![0.0; len],
            exact: true,
        }
    }

    pub fn query(&self) -> &MarginalQuery {
        &self.query
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.exact = false;
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Replace the cell values, marking the table as an estimate.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        MarginalTable::new(self.query.clone(), self.shape.clone(), values, false)
    }

    fn cell_index(&self, levels: &[usize]) -> usize {
        levels
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&l, &m)| acc * m + l)
    }

    /// Value at the tuple of levels (in query attribute order).
    pub fn get(&self, levels: &[usize]) -> f64 {
        self.values[self.cell_index(levels)]
    }
}

#[derive(Deserialize)]
struct RawTable {
    attrs: MarginalQuery,
    shape: Vec<usize>,
    values: Vec<f64>,
    exact: bool,
}

impl TryFrom<RawTable> for MarginalTable {
    type Error = Error;
    fn try_from(raw: RawTable) -> Result<Self> {
        MarginalTable::new(raw.attrs, raw.shape, raw.values, raw.exact)
    }
}

/// Exact counts of `q` over the dataset.
pub fn compute_marginal(dataset: &DiscreteDataset, q: &MarginalQuery) -> Result<MarginalTable> {
    let d = dataset.d();
    if let Some(&bad) = q.attrs().iter().find(|&&j| j >= d) {
        return Err(Error::InvalidParameter(format!(
            "attribute {bad} outside domain of {d} attributes"
        )));
    }
    let mut table = MarginalTable::zeros(q.clone(), dataset.domain());
    let attrs = q.attrs();
    for record in dataset.records() {
        let idx = attrs
            .iter()
            .zip(&table.shape)
            .fold(0usize, |acc, (&j, &m)| acc * m + record[j] as usize);
        table.values[idx] += 1.0;
    }
    Ok(table)
}

/// L2 sensitivity of any marginal query under add/remove-one neighbors.
pub fn marginal_sensitivity(_q: &MarginalQuery) -> f64 {
    1.0
}

/// Shape a two-way table as the `m_j x m_k` matrix with rows indexed by the
/// smaller attribute id.
pub fn as_matrix(table: &MarginalTable) -> Result<DMatrix<f64>> {
    if table.query.arity() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "expected a two-way table, got arity {}",
            table.query.arity()
        )));
    }
    let (rows, cols) = (table.shape[0], table.shape[1]);
    Ok(DMatrix::from_row_slice(rows, cols, &table.values))
}

/// Like [`as_matrix`] but with rows indexed by `row_attr`.
pub fn as_matrix_oriented(table: &MarginalTable, row_attr: usize) -> Result<DMatrix<f64>> {
    let m = as_matrix(table)?;
    match table.query.attrs() {
        [j, _] if *j == row_attr => Ok(m),
        [_, k] if *k == row_attr => Ok(m.transpose()),
        _ => Err(Error::InvalidParameter(format!(
            "attribute {row_attr} not in query {:?}",
            table.query.attrs()
        ))),
    }
}

/// A one-way table shaped as the diagonal matrix `diag(mu_j)`.
pub fn one_way_as_diagonal(table: &MarginalTable) -> Result<DMatrix<f64>> {
    if table.query.arity() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected a one-way table, got arity {}",
            table.query.arity()
        )));
    }
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&table.values)))
}

/// Sum a two-way table down to the one-way marginal of `target`.
pub fn derive_one_way(table: &MarginalTable, target: usize) -> Result<MarginalTable> {
    let m = as_matrix_oriented(table, target)?;
    let sums: Vec<f64> = m.row_iter().map(|r| r.sum()).collect();
    MarginalTable::new(
        MarginalQuery::new(vec![target])?,
        vec![sums.len()],
        sums,
        table.exact,
    )
}

/// Set of distinct marginal queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    queries: Vec<MarginalQuery>,
}

impl Workload {
    pub fn new(queries: Vec<MarginalQuery>) -> Result<Self> {
        let distinct: BTreeSet<_> = queries.iter().collect();
        if distinct.len() != queries.len() {
            return Err(Error::InvalidParameter("workload has duplicate queries".into()));
        }
        Ok(Workload { queries })
    }

    pub fn queries(&self) -> &[MarginalQuery] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// True if this is exactly the set of all pairs over `d` attributes.
    pub fn is_all_pairs(&self, d: usize) -> bool {
        let ours: BTreeSet<_> = self.queries.iter().collect();
        ours.len() == d * d.saturating_sub(1) / 2
            && ours
                .iter()
                .all(|q| q.arity() == 2 && q.attrs()[1] < d)
    }
}

/// All `C(d, 2)` two-way queries, in lexicographic order.
pub fn all_pairs_workload(domain: &Domain) -> Result<Workload> {
    let d = domain.len();
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "all-pairs workload needs at least 2 attributes, domain has {d}"
        )));
    }
    let mut queries = Vec::with_capacity(d * (d - 1) / 2);
    for j in 0..d {
        for k in j + 1..d {
            queries.push(MarginalQuery { attrs: vec![j, k] });
        }
    }
    Workload::new(queries)
}

/// A collection of tables, as exchanged between CLI steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSet {
    pub tables: Vec<MarginalTable>,
}

impl MarginalSet {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
