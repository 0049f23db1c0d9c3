//! Single-product inventory control.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InventoryDomainSpec {
    pub demand_mean: f64,
    /// Zero gives a point mass at the rounded mean.
    pub demand_std: f64,
    pub purchase_cost: f64,
    pub sale_price: f64,
    pub holding_cost: f64,
    pub max_inventory: usize,
    pub max_order: usize,
    pub horizon: usize,
    pub discount: f64,
    pub initial_level: usize,
}

impl Default for InventoryDomainSpec {
    fn default() -> Self {
        Self {
            demand_mean: 8.0,
            demand_std: 3.0,
            purchase_cost: 2.49,
            sale_price: 3.99,
            holding_cost: 0.03,
            max_inventory: 20,
            max_order: 10,
            horizon: 50,
            discount: 0.95,
            initial_level: 0,
        }
    }
}

impl InventoryDomainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.demand_mean.is_finite() && self.demand_mean >= 0.0) {
            return Err(Error::config("demand_mean", "must be finite and non-negative"));
        }
        if !(self.demand_std.is_finite() && self.demand_std >= 0.0) {
            return Err(Error::config("demand_std", "must be finite and non-negative"));
        }
        for (field, v) in [
            ("purchase_cost", self.purchase_cost),
            ("sale_price", self.sale_price),
            ("holding_cost", self.holding_cost),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        if self.max_inventory == 0 {
            return Err(Error::config("max_inventory", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config("discount", "must lie in (0, 1)"));
        }
        if self.initial_level > self.max_inventory {
            return Err(Error::config("initial_level", "exceeds max_inventory"));
        }
        Ok(())
    }

    /// Largest demand value represented; stock on hand never exceeds it.
    pub fn max_demand(&self) -> usize {
        self.max_inventory + self.max_order
    }

    /// Demand pmf on `0..=max_demand` with both tails lumped into the end points.
    pub fn demand_pmf(&self) -> Vec<f64> {
        let top = self.max_demand();
        if self.demand_std == 0.0 {
            let mut pmf = vec![0.0; top + 1];
            pmf[(self.demand_mean.round() as usize).min(top)] = 1.0;
            return pmf;
        }
        let normal = Normal::new(self.demand_mean, self.demand_std).expect("validated");
        let mut pmf: Vec<f64> = (0..=top)
            .map(|d| {
                let lo = if d == 0 { 0.0 } else { normal.cdf(d as f64 - 0.5) };
                let hi = if d == top { 1.0 } else { normal.cdf(d as f64 + 0.5) };
                (hi - lo).max(0.0)
            })
            .collect();
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|p| *p /= total);
        pmf
    }
}

/// Builds the inventory MDP: state is the stock level, action the order size.
pub fn make_inventory_env(spec: &InventoryDomainSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let n = spec.max_inventory + 1;
    let na = spec.max_order + 1;
    let pmf = spec.demand_pmf();
    let mut rewards = vec![0.0; n * na];
    let mut transitions = vec![0.0; n * na * n];
    for level in 0..n {
        for order in 0..na {
            let available = level + order;
            let row = &mut transitions[(level * na + order) * n..(level * na + order + 1) * n];
            let mut r = 0.0;
            for (demand, p) in pmf.iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                let sales = available.min(demand);
                let left = available - sales;
                row[left.min(spec.max_inventory)] += p;
                r += p
                    * (spec.sale_price * sales as f64
                        - spec.purchase_cost * order as f64
                        - spec.holding_cost * left as f64);
            }
            rewards[level * na + order] = r;
        }
    }
    let mut initial = vec![0.0; n];
    initial[spec.initial_level] = 1.0;
    TabularMdp::new(n, na, rewards, transitions, spec.discount, initial)
}
