//! Private release of every pairwise marginal.
//!
//! Three mechanisms produce the same [`MechanismOutput`]:
//!
//! * [`exact_oracle`]: the true tables, no privacy (reference only).
//! * [`gaussian_all_pairs`]: every pair measured once with equal zCDP shares.
//! * [`aim_lite`]: an adaptive select/measure loop in the spirit of AIM. It
//!   starts from noisy one-way marginals and an independence model, then
//!   repeatedly picks the pair whose model is furthest from the data (net of
//!   the expected measurement noise) with the exponential mechanism,
//!   measures it, and increases the per-round budget when a measurement
//!   barely moves the model. Unmeasured pairs stay at the independence
//!   estimate implied by the current one-way marginals.
//!
//! Everything downstream of a [`MechanismOutput`] is post-processing, so the
//! output can be written to disk and the dataset discarded.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gumbel, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::DiscreteDataset;
use crate::marginals::{
    all_pairs_workload, compute_marginal, derive_one_way, marginal_sensitivity, MarginalQuery,
    MarginalTable, Workload,
};
use crate::privacy::{eps_delta_to_rho, sigma_for_rho, PrivacyBudget, ZcdpLedger, BUDGET_SLACK};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Exact,
    Gaussian,
    AimLite,
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MechanismKind::Exact => "exact",
            MechanismKind::Gaussian => "gaussian",
            MechanismKind::AimLite => "aim-lite",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceEvent {
    /// One-way initialization of AIM-lite.
    Init { sigma: f64, rho: f64 },
    Round {
        round: usize,
        query: Vec<usize>,
        sigma: f64,
        rho: f64,
        annealed: bool,
    },
    /// Table that was entirely nonpositive before post-processing.
    DegenerateTable { query: Vec<usize> },
    /// Largest disagreement between the one-way marginals of an attribute
    /// implied by different pairs.
    OneWayDisagreement { attribute: usize, max_abs_diff: f64 },
}

/// Estimated tables for every attribute pair, plus accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutput {
    pub mechanism: MechanismKind,
    pub private: bool,
    pub attribute_sizes: Vec<usize>,
    pub n_hat: f64,
    /// One table per pair `(j, k)`, `j < k`, in lexicographic order.
    pub tables: Vec<MarginalTable>,
    pub ledger: ZcdpLedger,
    #[serde(default)]
    pub trace: Vec<TraceEvent>,
}

impl MechanismOutput {
    pub fn pair(&self, j: usize, k: usize) -> Option<&MarginalTable> {
        let (a, b) = if j < k { (j, k) } else { (k, j) };
        self.tables
            .iter()
            .find(|t| t.query().attrs() == [a, b])
    }

    /// Check that every pair is present with the declared shape.
    pub fn validate(&self) -> Result<()> {
        let sizes = &self.attribute_sizes;
        let d = sizes.len();
        for j in 0..d {
            for k in j + 1..d {
                let t = self.pair(j, k).ok_or(Error::MissingPair(j, k))?;
                if t.shape() != [sizes[j], sizes[k]] {
                    return Err(Error::DimensionMismatch(format!(
                        "table ({j}, {k}) has shape {:?}, expected [{}, {}]",
                        t.shape(),
                        sizes[j],
                        sizes[k]
                    )));
                }
            }
        }
        if !self.n_hat.is_finite() {
            return Err(Error::NonFinite("n_hat".into()));
        }
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let out: MechanismOutput = serde_json::from_str(&text)?;
        out.validate()?;
        Ok(out)
    }
}

fn require_all_pairs(dataset: &DiscreteDataset, workload: &Workload) -> Result<()> {
    if !workload.is_all_pairs(dataset.d()) {
        return Err(Error::InvalidParameter(
            "mechanisms expect the workload of all attribute pairs".into(),
        ));
    }
    Ok(())
}

fn exact_pair_tables(dataset: &DiscreteDataset) -> Result<Vec<MarginalTable>> {
    all_pairs_workload(dataset.domain())?
        .queries()
        .iter()
        .map(|q| compute_marginal(dataset, q))
        .collect()
}

/// The true pairwise tables; `n_hat = n` and nothing is charged.
pub fn exact_oracle(dataset: &DiscreteDataset, workload: &Workload) -> Result<MechanismOutput> {
    require_all_pairs(dataset, workload)?;
    Ok(MechanismOutput {
        mechanism: MechanismKind::Exact,
        private: false,
        attribute_sizes: dataset.domain().sizes(),
        n_hat: dataset.n() as f64,
        tables: exact_pair_tables(dataset)?,
        ledger: ZcdpLedger::new(0.0),
        trace: Vec::new(),
    })
}

/// Clip every entry at zero and rescale each table to total `n_hat`.
///
/// Tables that are entirely zero after clipping are left at zero; their
/// positions are returned.
pub fn postprocess_tables(tables: &mut [MarginalTable], n_hat: f64) -> Vec<usize> {
    let mut degenerate = Vec::new();
    for (i, t) in tables.iter_mut().enumerate() {
        let total: f64 = t.values().iter().map(|v| v.max(0.0)).sum();
        if total > 0.0 {
            let scale = n_hat / total;
            // leave tables that already satisfy the constraints bit-for-bit
            let already = t.values().iter().all(|&v| v >= 0.0) && scale == 1.0;
            if !already {
                for v in t.values_mut() {
                    *v = v.max(0.0) * scale;
                }
            }
        } else {
            for v in t.values_mut() {
                *v = 0.0;
            }
            degenerate.push(i);
        }
    }
    degenerate
}

/// Report how far apart the one-way marginals implied by different pairs are.
fn one_way_disagreement(tables: &[MarginalTable], d: usize) -> Vec<TraceEvent> {
    (0..d)
        .filter_map(|j| {
            let derived: Vec<Vec<f64>> = tables
                .iter()
                .filter(|t| t.query().contains(j))
                .filter_map(|t| derive_one_way(t, j).ok())
                .map(|t| t.into_values())
                .collect();
            let first = derived.first()?;
            let max_abs_diff = derived
                .iter()
                .flat_map(|o| o.iter().zip(first).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            Some(TraceEvent::OneWayDisagreement {
                attribute: j,
                max_abs_diff,
            })
        })
        .collect()
}

fn finish(
    mechanism: MechanismKind,
    dataset: &DiscreteDataset,
    mut tables: Vec<MarginalTable>,
    n_hat: f64,
    ledger: ZcdpLedger,
    mut trace: Vec<TraceEvent>,
) -> MechanismOutput {
    let degenerate = postprocess_tables(&mut tables, n_hat);
    trace.extend(degenerate.into_iter().map(|i| TraceEvent::DegenerateTable {
        query: tables[i].query().attrs().to_vec(),
    }));
    trace.extend(one_way_disagreement(&tables, dataset.d()));
    MechanismOutput {
        mechanism,
        private: true,
        attribute_sizes: dataset.domain().sizes(),
        n_hat,
        tables,
        ledger,
        trace,
    }
}

fn add_noise<R: Rng + ?Sized>(values: &mut [f64], sigma: f64, rng: &mut R) -> Result<()> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    for v in values {
        *v += normal.sample(rng);
    }
    Ok(())
}

/// Total-count estimates can go nonpositive under heavy noise; one record is
/// the smallest meaningful scale.
fn floor_n_hat(n_hat: f64) -> f64 {
    n_hat.max(1.0)
}

/// Measure all `K` pairs once with `sigma = sqrt(K / (2 rho))`.
pub fn gaussian_all_pairs<R: Rng + ?Sized>(
    dataset: &DiscreteDataset,
    workload: &Workload,
    budget: PrivacyBudget,
    rng: &mut R,
) -> Result<MechanismOutput> {
    require_all_pairs(dataset, workload)?;
    let mut ledger = ZcdpLedger::for_budget(budget);
    let k = workload.len();
    let rho_each = ledger.rho_total() / k as f64;
    let mut tables = exact_pair_tables(dataset)?;
    let mut sum_totals = 0.0;
    for t in tables.iter_mut() {
        let sensitivity = marginal_sensitivity(t.query());
        let sigma = sigma_for_rho(rho_each, sensitivity);
        ledger.charge_gaussian(format!("measure {:?}", t.query().attrs()), sigma, sensitivity)?;
        add_noise(t.values_mut(), sigma, rng)?;
        sum_totals += t.total();
    }
    let n_hat = floor_n_hat(sum_totals / k as f64);
    Ok(finish(MechanismKind::Gaussian, dataset, tables, n_hat, ledger, Vec::new()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AimLiteConfig {
    /// Share of the total budget spent measuring one-way marginals.
    pub init_budget_fraction: f64,
    /// Share of each round's budget spent on selection.
    pub selection_budget_fraction: f64,
    /// Round cap; `None` means `16 d`.
    pub max_rounds: Option<usize>,
    /// Per-round budget multiplier when a measurement barely moves the model.
    pub anneal_factor: f64,
}

impl Default for AimLiteConfig {
    fn default() -> Self {
        AimLiteConfig {
            init_budget_fraction: 0.1,
            selection_budget_fraction: 0.1,
            max_rounds: None,
            anneal_factor: 2.0,
        }
    }
}

impl AimLiteConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.init_budget_fraction) {
            return Err(Error::InvalidParameter(format!(
                "init_budget_fraction must lie in (0, 1), got {}",
                self.init_budget_fraction
            )));
        }
        if !in_unit(self.selection_budget_fraction) {
            return Err(Error::InvalidParameter(format!(
                "selection_budget_fraction must lie in (0, 1), got {}",
                self.selection_budget_fraction
            )));
        }
        if self.max_rounds == Some(0) {
            return Err(Error::InvalidParameter("max_rounds must be positive".into()));
        }
        if !(self.anneal_factor > 1.0) || !self.anneal_factor.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "anneal_factor must exceed 1, got {}",
                self.anneal_factor
            )));
        }
        Ok(())
    }
}

/// Running estimate of a measured pair: inverse-variance weighted mean of
/// every measurement so far.
#[derive(Debug, Clone)]
struct Measured {
    values: Vec<f64>,
    variance: f64,
}

impl Measured {
    fn absorb(&mut self, values: &[f64], variance: f64) {
        let w_old = 1.0 / self.variance;
        let w_new = 1.0 / variance;
        for (v, &x) in self.values.iter_mut().zip(values) {
            *v = (*v * w_old + x * w_new) / (w_old + w_new);
        }
        self.variance = 1.0 / (w_old + w_new);
    }
}

struct AimModel {
    sizes: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    n_hat: f64,
    init_one_way: Vec<Vec<f64>>,
    init_variance: f64,
    one_way: Vec<Vec<f64>>,
    measured: Vec<Option<Measured>>,
}

impl AimModel {
    /// Current estimate of pair `i`.
    fn table(&self, i: usize) -> Vec<f64> {
        if let Some(m) = &self.measured[i] {
            return m.values.clone();
        }
        let (j, k) = self.pairs[i];
        let mut out = Vec::with_capacity(self.sizes[j] * self.sizes[k]);
        for &a in &self.one_way[j] {
            for &b in &self.one_way[k] {
                out.push(a * b / self.n_hat);
            }
        }
        out
    }

    /// Re-estimate every one-way marginal from the initial measurement and the
    /// row/column sums of all measured pairs, weighting by inverse variance.
    fn refresh_one_ways(&mut self) {
        for j in 0..self.sizes.len() {
            let mut weighted: Vec<f64> = self.init_one_way[j]
                .iter()
                .map(|v| v / self.init_variance)
                .collect();
            let mut weight = 1.0 / self.init_variance;
            for (i, &(a, b)) in self.pairs.iter().enumerate() {
                let Some(m) = &self.measured[i] else { continue };
                if a != j && b != j {
                    continue;
                }
                let (rows, cols) = (self.sizes[a], self.sizes[b]);
                let sums: Vec<f64> = if a == j {
                    (0..rows).map(|s| m.values[s * cols..(s + 1) * cols].iter().sum()).collect()
                } else {
                    (0..cols).map(|t| (0..rows).map(|s| m.values[s * cols + t]).sum()).collect()
                };
                let other = if a == j { cols } else { rows };
                let var = m.variance * other as f64;
                for (w, s) in weighted.iter_mut().zip(&sums) {
                    *w += s / var;
                }
                weight += 1.0 / var;
            }
            let mut est: Vec<f64> = weighted.iter().map(|w| (w / weight).max(0.0)).collect();
            let total: f64 = est.iter().sum();
            if total > 0.0 {
                est.iter_mut().for_each(|v| *v *= self.n_hat / total);
            }
            self.one_way[j] = est;
        }
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Exponential mechanism over `scores` with utility sensitivity 1, sampled
/// by adding Gumbel noise to `eps * score / 2` and taking the argmax.
fn exponential_select<R: Rng + ?Sized>(scores: &[f64], epsilon: f64, rng: &mut R) -> usize {
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, s) in scores.iter().enumerate() {
        let v = epsilon * s / 2.0 + gumbel.sample(rng);
        if v > best.0 {
            best = (v, i);
        }
    }
    best.1
}

/// Adaptive select/measure release of all pairwise marginals.
pub fn aim_lite<R: Rng + ?Sized>(
    dataset: &DiscreteDataset,
    workload: &Workload,
    budget: PrivacyBudget,
    config: &AimLiteConfig,
    rng: &mut R,
) -> Result<MechanismOutput> {
    require_all_pairs(dataset, workload)?;
    config.validate()?;
    let d = dataset.d();
    let sizes = dataset.domain().sizes();
    let mut ledger = ZcdpLedger::new(eps_delta_to_rho(budget));
    let rho_total = ledger.rho_total();
    let mut trace = Vec::new();

    // one-way initialization
    let rho_init = config.init_budget_fraction * rho_total;
    let sigma_init = sigma_for_rho(rho_init / d as f64, 1.0);
    let mut init_one_way = Vec::with_capacity(d);
    let mut sum_totals = 0.0;
    for j in 0..d {
        let q = MarginalQuery::new(vec![j])?;
        let mut values = compute_marginal(dataset, &q)?.into_values();
        ledger.charge_gaussian(format!("init {j}"), sigma_init, marginal_sensitivity(&q))?;
        add_noise(&mut values, sigma_init, rng)?;
        sum_totals += values.iter().sum::<f64>();
        values.iter_mut().for_each(|v| *v = v.max(0.0));
        init_one_way.push(values);
    }
    trace.push(TraceEvent::Init {
        sigma: sigma_init,
        rho: rho_init,
    });
    let n_hat = floor_n_hat(sum_totals / d as f64);

    let truth = exact_pair_tables(dataset)?;
    let pairs: Vec<(usize, usize)> = truth
        .iter()
        .map(|t| (t.query().attrs()[0], t.query().attrs()[1]))
        .collect();
    let mut model = AimModel {
        sizes: sizes.clone(),
        pairs: pairs.clone(),
        n_hat,
        init_one_way: init_one_way.clone(),
        init_variance: sigma_init * sigma_init,
        one_way: init_one_way,
        measured: vec![None; pairs.len()],
    };
    model.refresh_one_ways();

    let max_rounds = config.max_rounds.unwrap_or(16 * d);
    let mut rho_round = ledger.remaining() / max_rounds as f64;
    for round in 0..max_rounds {
        let remaining = ledger.remaining();
        if remaining <= BUDGET_SLACK * ledger.rho_total().max(1.0) {
            break;
        }
        let spend_all = round + 1 == max_rounds || 2.0 * rho_round > remaining;
        let this_round = if spend_all { remaining } else { rho_round };
        let rho_select = config.selection_budget_fraction * this_round;
        let rho_measure = this_round - rho_select;
        let eps_select = (8.0 * rho_select).sqrt();
        let sigma = sigma_for_rho(rho_measure, 1.0);

        let scores: Vec<f64> = (0..pairs.len())
            .map(|i| {
                let cells = truth[i].values().len() as f64;
                l1(truth[i].values(), &model.table(i))
                    - (2.0 / std::f64::consts::PI).sqrt() * sigma * cells
            })
            .collect();
        let chosen = exponential_select(&scores, eps_select, rng);
        let query = truth[chosen].query().attrs().to_vec();
        ledger.charge(format!("select round {round}"), rho_select)?;

        let mut values = truth[chosen].values().to_vec();
        ledger.charge_gaussian(
            format!("measure round {round} {query:?}"),
            sigma,
            marginal_sensitivity(truth[chosen].query()),
        )?;
        add_noise(&mut values, sigma, rng)?;

        let before = model.table(chosen);
        match &mut model.measured[chosen] {
            Some(m) => m.absorb(&values, sigma * sigma),
            slot @ None => {
                *slot = Some(Measured {
                    values,
                    variance: sigma * sigma,
                })
            }
        }
        model.refresh_one_ways();
        let after = model.table(chosen);
        let annealed = l2(&before, &after) < sigma * (after.len() as f64).sqrt();
        if annealed {
            rho_round *= config.anneal_factor;
        }
        trace.push(TraceEvent::Round {
            round,
            query,
            sigma,
            rho: this_round,
            annealed,
        });
        if spend_all {
            break;
        }
    }

    let tables = truth
        .iter()
        .enumerate()
        .map(|(i, t)| t.with_values(model.table(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(MechanismKind::AimLite, dataset, tables, n_hat, ledger, trace))
}

/// A configured mechanism, for callers that pick one at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    Exact,
    Gaussian(PrivacyBudget),
    AimLite(PrivacyBudget, AimLiteConfig),
}

impl Mechanism {
    pub fn kind(&self) -> MechanismKind {
        match self {
            Mechanism::Exact => MechanismKind::Exact,
            Mechanism::Gaussian(_) => MechanismKind::Gaussian,
            Mechanism::AimLite(..) => MechanismKind::AimLite,
        }
    }

    /// Release all pairwise marginals of `dataset`.
    pub fn release<R: Rng + ?Sized>(&self, dataset: &DiscreteDataset, rng: &mut R) -> Result<MechanismOutput> {
        let workload = all_pairs_workload(dataset.domain())?;
        match self {
            Mechanism::Exact => exact_oracle(dataset, &workload),
            Mechanism::Gaussian(b) => gaussian_all_pairs(dataset, &workload, *b, rng),
            Mechanism::AimLite(b, cfg) => aim_lite(dataset, &workload, *b, cfg, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dataset::Domain;
    use crate::privacy::within_budget;

    fn random_dataset(sizes: &[usize], n: usize, seed: u64) -> DiscreteDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let domain = Arc::new(Domain::from_sizes(sizes).unwrap());
        let rows = (0..n)
            .map(|_| sizes.iter().map(|&m| rng.random_range(0..m as u32)).collect())
            .collect();
        DiscreteDataset::new(domain, rows).unwrap()
    }

    fn budget(e: f64) -> PrivacyBudget {
        PrivacyBudget::new(e, 1e-5).unwrap()
    }

    #[test]
    fn oracle_passes_tables_through() {
        let ds = random_dataset(&[2, 3, 4], 50, 1);
        let w = all_pairs_workload(ds.domain()).unwrap();
        let out = exact_oracle(&ds, &w).unwrap();
        assert!(!out.private);
        assert_eq!(out.n_hat, 50.0);
        assert!(out.ledger.entries().is_empty());
        for q in w.queries() {
            let (j, k) = (q.attrs()[0], q.attrs()[1]);
            assert_eq!(out.pair(k, j).unwrap(), &compute_marginal(&ds, q).unwrap());
        }
        out.validate().unwrap();
    }

    #[test]
    fn workload_must_be_all_pairs() {
        let ds = random_dataset(&[2, 3, 4], 10, 1);
        let partial = Workload::new(vec![MarginalQuery::pair(0, 1).unwrap()]).unwrap();
        assert!(exact_oracle(&ds, &partial).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gaussian_all_pairs(&ds, &partial, budget(1.0), &mut rng).is_err());
    }

    #[test]
    fn postprocess_examples() {
        let q = MarginalQuery::new(vec![0]).unwrap();
        let mut t = vec![MarginalTable::new(q.clone(), vec![2], vec![-1.0, 3.0], false).unwrap()];
        assert!(postprocess_tables(&mut t, 2.0).is_empty());
        assert_eq!(t[0].values(), &[0.0, 2.0]);

        let exact = MarginalTable::new(q.clone(), vec![2], vec![1.0, 3.0], true).unwrap();
        let mut t = vec![exact.clone()];
        postprocess_tables(&mut t, 4.0);
        assert_eq!(t[0], exact);

        let mut t = vec![MarginalTable::new(q, vec![2], vec![-1.0, -3.0], false).unwrap()];
        assert_eq!(postprocess_tables(&mut t, 4.0), vec![0]);
        assert_eq!(t[0].values(), &[0.0, 0.0]);
    }

    #[test]
    fn postprocess_sums_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 10.0).unwrap();
        for _ in 0..50 {
            let q = MarginalQuery::pair(0, 1).unwrap();
            let values: Vec<f64> = (0..12).map(|_| 5.0 + normal.sample(&mut rng)).collect();
            let mut once = vec![MarginalTable::new(q, vec![3, 4], values, false).unwrap()];
            let n_hat = 57.3;
            if !postprocess_tables(&mut once, n_hat).is_empty() {
                continue;
            }
            assert!((once[0].total() - n_hat).abs() < 1e-9);
            assert!(once[0].values().iter().all(|&v| v >= 0.0));
            let mut twice = once.clone();
            postprocess_tables(&mut twice, n_hat);
            for (a, b) in once[0].values().iter().zip(twice[0].values()) {
                assert!((a - b).abs() <= 1e-12 * n_hat);
            }
        }
    }

    #[test]
    fn gaussian_accounting() {
        let ds = random_dataset(&[2, 3, 4], 200, 2);
        let w = all_pairs_workload(ds.domain()).unwrap();
        let out = gaussian_all_pairs(&ds, &w, budget(1.0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let rho = eps_delta_to_rho(budget(1.0));
        assert_eq!(out.ledger.entries().len(), 3);
        for e in out.ledger.entries() {
            assert!((e.rho - rho / 3.0).abs() < 1e-15);
            assert!((e.sigma.unwrap() - (3.0 / (2.0 * rho)).sqrt()).abs() < 1e-12);
        }
        assert!(within_budget(out.ledger.rho_spent(), rho));
        for t in &out.tables {
            assert!(t.values().iter().all(|&v| v >= 0.0));
            assert!((t.total() - out.n_hat).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_zero_noise_limit() {
        let ds = random_dataset(&[2, 3, 2], 100, 4);
        let w = all_pairs_workload(ds.domain()).unwrap();
        let out = gaussian_all_pairs(&ds, &w, budget(1e14), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let exact = exact_oracle(&ds, &w).unwrap();
        for (a, b) in out.tables.iter().zip(&exact.tables) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-5, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn determinism() {
        let ds = random_dataset(&[3, 3, 4, 2], 300, 6);
        let w = all_pairs_workload(ds.domain()).unwrap();
        let cfg = AimLiteConfig::default();
        let run = |seed| aim_lite(&ds, &w, budget(0.5), &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
        let g = |seed| gaussian_all_pairs(&ds, &w, budget(0.5), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(g(1), g(1));
    }

    #[test]
    fn aim_lite_accounting_and_shape() {
        let ds = random_dataset(&[3, 4, 2, 5], 1000, 7);
        let w = all_pairs_workload(ds.domain()).unwrap();
        for (seed, eps) in [(1, 0.05), (2, 0.5), (3, 2.0)] {
            let out = aim_lite(&ds, &w, budget(eps), &AimLiteConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            out.validate().unwrap();
            let rho = eps_delta_to_rho(budget(eps));
            assert!(within_budget(out.ledger.rho_spent(), rho));
            // the final round spends whatever is left
            assert!((out.ledger.rho_spent() - rho).abs() < 1e-9 * rho.max(1.0));
            assert!(out.n_hat > 0.0);
            let rounds = out
                .trace
                .iter()
                .filter(|e| matches!(e, TraceEvent::Round { .. }))
                .count();
            assert!((1..=64).contains(&rounds));
            for t in &out.tables {
                assert!(t.values().iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn aim_lite_zero_noise_limit() {
        let ds = random_dataset(&[3, 2, 4], 400, 8);
        let w = all_pairs_workload(ds.domain()).unwrap();
        let out = aim_lite(&ds, &w, budget(1e14), &AimLiteConfig::default(), &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        let exact = exact_oracle(&ds, &w).unwrap();
        let measured: Vec<Vec<usize>> = out
            .trace
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Round { query, .. } => Some(query.clone()),
                _ => None,
            })
            .collect();
        assert!(!measured.is_empty());
        for q in measured {
            let a = out.pair(q[0], q[1]).unwrap();
            let b = exact.pair(q[0], q[1]).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-6, "{q:?}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            AimLiteConfig { init_budget_fraction: 0.0, ..Default::default() },
            AimLiteConfig { selection_budget_fraction: 1.0, ..Default::default() },
            AimLiteConfig { max_rounds: Some(0), ..Default::default() },
            AimLiteConfig { anneal_factor: 1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        AimLiteConfig::default().validate().unwrap();
    }

    #[test]
    fn output_json_round_trip() {
        let ds = random_dataset(&[2, 3, 2], 60, 9);
        let out = Mechanism::AimLite(budget(1.0), AimLiteConfig::default())
            .release(&ds, &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        out.save_json(&path).unwrap();
        let back = MechanismOutput::load_json(&path).unwrap();
        assert_eq!(back, out);
    }

    #[test]
    fn exponential_selection_prefers_high_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores = [0.0, 100.0, 0.0];
        let hits = (0..200).filter(|_| exponential_select(&scores, 1.0, &mut rng) == 1).count();
        assert_eq!(hits, 200);
        let flat = [0.0; 4];
        let mut counts = [0; 4];
        for _ in 0..4000 {
            counts[exponential_select(&flat, 1.0, &mut rng)] += 1;
        }
        assert!(counts.iter().all(|&c| (800..1200).contains(&c)), "{counts:?}");
    }
}
