//! Privacy accounting: Gaussian mechanism calibration, `(eps, delta)` to zCDP
//! conversion, and an additive zCDP ledger.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slack used for every budget comparison, relative to `max(total, 1)`.
pub const BUDGET_SLACK: f64 = 1e-12;

/// `spent <= total` up to [`BUDGET_SLACK`].
pub fn within_budget(spent: f64, total: f64) -> bool {
    spent <= total + BUDGET_SLACK * total.max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Classic Gaussian mechanism scale: `sigma^2 = 2 ln(1.25/delta) Delta^2 / eps^2`.
pub fn gaussian_sigma(sensitivity: f64, budget: PrivacyBudget) -> Result<f64> {
    if !(sensitivity > 0.0) || !sensitivity.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sensitivity must be positive, got {sensitivity}"
        )));
    }
    Ok((2.0 * (1.25 / budget.delta).ln()).sqrt() * sensitivity / budget.epsilon)
}

/// Add i.i.d. `N(0, sigma^2)` noise to every entry.
pub fn gaussian_mechanism<R: Rng + ?Sized>(values: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    let normal = standard_normal_scaled(sigma)?;
    Ok(values.iter().map(|v| v + normal.sample(rng)).collect())
}

fn standard_normal_scaled(sigma: f64) -> Result<Normal<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise scale must be positive and finite, got {sigma}"
        )));
    }
    Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// zCDP cost `Delta^2 / (2 sigma^2)` of one Gaussian measurement.
pub fn zcdp_of_gaussian(sigma: f64, sensitivity: f64) -> f64 {
    sensitivity * sensitivity / (2.0 * sigma * sigma)
}

/// Noise scale that spends exactly `rho` on a query of the given sensitivity.
pub fn sigma_for_rho(rho: f64, sensitivity: f64) -> f64 {
    sensitivity / (2.0 * rho).sqrt()
}

/// Largest `rho` with `rho + 2 sqrt(rho ln(1/delta)) <= eps`.
pub fn eps_delta_to_rho(budget: PrivacyBudget) -> f64 {
    let l = (1.0 / budget.delta).ln();
    // sqrt(l + eps) - sqrt(l), written without cancellation
    let root = budget.epsilon / ((l + budget.epsilon).sqrt() + l.sqrt());
    root * root
}

/// `eps = rho + 2 sqrt(rho ln(1/delta))`.
pub fn rho_to_epsilon(rho: f64, delta: f64) -> f64 {
    rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub rho: f64,
    /// Gaussian noise scale, absent for non-Gaussian charges (selection).
    pub sigma: Option<f64>,
    pub sensitivity: f64,
}

/// Additive zCDP composition over one mechanism run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZcdpLedger {
    rho_total: f64,
    rho_spent: f64,
    entries: Vec<LedgerEntry>,
}

impl ZcdpLedger {
    pub fn new(rho_total: f64) -> Self {
        ZcdpLedger {
            rho_total,
            rho_spent: 0.0,
            entries: Vec::new(),
        }
    }

    pub fn for_budget(budget: PrivacyBudget) -> Self {
        ZcdpLedger::new(eps_delta_to_rho(budget))
    }

    pub fn rho_total(&self) -> f64 {
        self.rho_total
    }

    pub fn rho_spent(&self) -> f64 {
        self.rho_spent
    }

    pub fn remaining(&self) -> f64 {
        (self.rho_total - self.rho_spent).max(0.0)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn charge(&mut self, label: impl Into<String>, rho: f64) -> Result<()> {
        self.record(label.into(), rho, None, 0.0)
    }

    /// Charge a Gaussian measurement with the given scale and sensitivity.
    pub fn charge_gaussian(&mut self, label: impl Into<String>, sigma: f64, sensitivity: f64) -> Result<()> {
        let rho = zcdp_of_gaussian(sigma, sensitivity);
        self.record(label.into(), rho, Some(sigma), sensitivity)
    }

    fn record(&mut self, label: String, rho: f64, sigma: Option<f64>, sensitivity: f64) -> Result<()> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "charge `{label}` has invalid rho {rho}"
            )));
        }
        if !within_budget(self.rho_spent + rho, self.rho_total) {
            return Err(Error::BudgetExceeded {
                label,
                spent: self.rho_spent,
                rho,
                total: self.rho_total,
            });
        }
        self.rho_spent += rho;
        self.entries.push(LedgerEntry {
            label,
            rho,
            sigma,
            sensitivity,
        });
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries)?)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn budget(e: f64, d: f64) -> PrivacyBudget {
        PrivacyBudget::new(e, d).unwrap()
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 1e-5).is_err());
        assert!(PrivacyBudget::new(1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(f64::INFINITY, 0.5).is_err());
    }

    #[test]
    fn sigma_examples() {
        let s1 = gaussian_sigma(1.0, budget(1.0, 1e-5)).unwrap();
        assert!((s1 - 4.844_805_262_605_389).abs() < 1e-12, "{s1}");
        let s2 = gaussian_sigma(2.0, budget(1.0, 1e-5)).unwrap();
        assert_eq!(s2, 2.0 * s1);
        let half = gaussian_sigma(1.0, budget(2.0, 1e-5)).unwrap();
        assert!((half - s1 / 2.0).abs() < 1e-15);
        assert!(gaussian_sigma(0.0, budget(1.0, 1e-5)).is_err());
    }

    #[test]
    fn sigma_monotone() {
        let b = |e, d| gaussian_sigma(1.0, budget(e, d)).unwrap();
        assert!(b(0.5, 1e-5) > b(1.0, 1e-5));
        assert!(b(1.0, 1e-6) > b(1.0, 1e-5));
    }

    #[test]
    fn mechanism_is_seeded_and_calibrated() {
        let v = vec![3.0; 4];
        let a = gaussian_mechanism(&v, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = gaussian_mechanism(&v, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let tiny = gaussian_mechanism(&v, 1e-12, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(tiny.iter().all(|x| (x - 3.0).abs() < 1e-9));
        assert!(gaussian_mechanism(&v, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());

        let sigma = 2.5;
        let draws = gaussian_mechanism(&vec![0.0; 100_000], sigma, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn zcdp_examples() {
        assert_eq!(zcdp_of_gaussian(1.0, 1.0), 0.5);
        assert_eq!(zcdp_of_gaussian(2.0, 1.0), 0.125);
        assert_eq!(zcdp_of_gaussian(2.0, 0.0), 0.0);
        assert!((zcdp_of_gaussian(sigma_for_rho(0.3, 2.0), 2.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn conversion_is_a_fixed_point() {
        let b = budget(1.0, 1e-5);
        let rho = eps_delta_to_rho(b);
        let l = 1e5f64.ln();
        let closed = ((l + 1.0).sqrt() - l.sqrt()).powi(2);
        assert!((rho - closed).abs() < 1e-12);
        assert!((rho_to_epsilon(rho, 1e-5) - 1.0).abs() < 1e-12);
        for &(e, d) in &[(0.05, 1e-5), (2.0, 1e-9), (10.0, 0.1), (1e-4, 1e-3)] {
            let rho = eps_delta_to_rho(budget(e, d));
            assert!(rho_to_epsilon(rho, d) <= e * (1.0 + 1e-12));
            assert!((rho_to_epsilon(rho, d) - e).abs() < 1e-12 * e.max(1.0));
        }
    }

    #[test]
    fn conversion_limit_delta_to_one() {
        let rho = eps_delta_to_rho(budget(0.7, 1.0 - 1e-15));
        assert!((rho - 0.7).abs() < 1e-6, "{rho}");
    }

    #[test]
    fn ledger_charges() {
        let mut l = ZcdpLedger::new(0.5);
        l.charge("a", 0.3).unwrap();
        l.charge("b", 0.2).unwrap();
        assert!((l.rho_spent() - 0.5).abs() < 1e-15);
        let err = l.charge("c", 0.01).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { ref label, .. } if label == "c"));
        l.charge("zero", 0.0).unwrap();
        assert_eq!(l.entries().len(), 3);
        assert!(l.charge("neg", -1.0).is_err());
    }

    #[test]
    fn ledger_json() {
        let mut l = ZcdpLedger::new(1.0);
        l.charge_gaussian("m", 1.0, 1.0).unwrap();
        let json = l.to_json().unwrap();
        let entries: Vec<LedgerEntry> = serde_json::from_str(&json).unwrap();
        assert_eq!(entries[0].rho, 0.5);
        assert_eq!(entries[0].sigma, Some(1.0));
        assert_eq!(entries[0].label, "m");
    }
}
