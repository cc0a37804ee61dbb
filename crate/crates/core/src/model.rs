//! Problem instances: quantity grids, cost parameters, uncertainty
//! distributions built from the VarL parameterization, and the named
//! case-study presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{truncated_normal_cdf, Real};

/// Quantities are tonnes of hydrogen, always multiples of the grid step.
pub type Quantity = i64;

/// Discretization of order quantities and inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantityGrid {
    /// Tonnes per grid unit.
    pub step: Quantity,
    pub max_order_local: Quantity,
    pub max_order_import: Quantity,
    pub max_inventory: Quantity,
}

impl QuantityGrid {
    pub fn validate(&self) -> Result<()> {
        if self.step <= 0 {
            return Err(Error::Config("grid step must be positive".into()));
        }
        for (name, v) in [
            ("max_order_local", self.max_order_local),
            ("max_order_import", self.max_order_import),
            ("max_inventory", self.max_inventory),
        ] {
            if v < 0 || v % self.step != 0 {
                return Err(Error::Config(format!(
                    "{name} = {v} is not a non-negative multiple of step {}",
                    self.step
                )));
            }
        }
        Ok(())
    }

    pub fn on_grid(&self, q: Quantity) -> bool {
        q >= 0 && q % self.step == 0
    }

    /// Nearest grid multiple; exact midpoints round up.
    pub fn snap<R: Real>(&self, x: R) -> Quantity {
        let step = R::from_i64(self.step).unwrap();
        let k = (x / step + R::from_f64_lossy(0.5)).floor();
        (k.to_i64().unwrap_or(0)).max(0) * self.step
    }

    pub fn inventory_levels(&self) -> usize {
        (self.max_inventory / self.step) as usize + 1
    }
    pub fn local_order_levels(&self) -> usize {
        (self.max_order_local / self.step) as usize + 1
    }
    pub fn import_order_levels(&self) -> usize {
        (self.max_order_import / self.step) as usize + 1
    }

    pub fn local_orders(&self) -> impl Iterator<Item = Quantity> + '_ {
        (0..self.local_order_levels() as i64).map(|k| k * self.step)
    }
    pub fn import_orders(&self) -> impl Iterator<Item = Quantity> + '_ {
        (0..self.import_order_levels() as i64).map(|k| k * self.step)
    }
    pub fn inventory_values(&self) -> impl Iterator<Item = Quantity> + '_ {
        (0..self.inventory_levels() as i64).map(|k| k * self.step)
    }
}

/// What a [`DistributionSpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistKind {
    Capacity,
    Demand,
    YieldLoss,
}

impl std::fmt::Display for DistKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistKind::Capacity => write!(f, "capacity"),
            DistKind::Demand => write!(f, "demand"),
            DistKind::YieldLoss => write!(f, "yield-loss"),
        }
    }
}

/// Symmetric truncated-normal family parameterized by mean, bounds, and the
/// variability level VarL, with sigma = VarL * (mean - lower).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec<R> {
    pub mean: R,
    pub lower: R,
    pub upper: R,
    pub varl: R,
    pub kind: DistKind,
}

impl<R: Real> DistributionSpec<R> {
    pub fn sigma(&self) -> R {
        self.varl * (self.mean - self.lower)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower <= self.mean && self.mean <= self.upper) {
            return Err(Error::Config(format!(
                "{} spec: need lower <= mean <= upper, got {} / {} / {}",
                self.kind, self.lower, self.mean, self.upper
            )));
        }
        if self.varl < R::zero() {
            return Err(Error::Config(format!("{} spec: varl must be >= 0", self.kind)));
        }
        Ok(())
    }

    /// Same distribution collapsed to a point mass at its mean.
    pub fn at_mean(&self) -> Self {
        Self { varl: R::zero(), ..*self }
    }
}

/// Probability mass function over quantity grid points. The single
/// representation for capacity, demand, and yield-arrival randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<R> {
    support: Vec<Quantity>,
    probs: Vec<R>,
}

impl<R: Real> DiscreteDistribution<R> {
    pub fn new(support: Vec<Quantity>, probs: Vec<R>) -> Result<Self> {
        if support.len() != probs.len() || support.is_empty() {
            return Err(Error::Config("pmf support/probs length mismatch or empty".into()));
        }
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("pmf support must be strictly increasing".into()));
        }
        if probs.iter().any(|p| *p < R::zero()) {
            return Err(Error::Config("pmf has a negative probability".into()));
        }
        let total: R = probs.iter().copied().sum();
        let tol = R::from_f64_lossy(1e-12).max(R::epsilon() * R::from_usize(100).unwrap());
        if (total - R::one()).abs() > tol {
            return Err(Error::Config(format!("pmf probabilities sum to {total}, not 1")));
        }
        Ok(Self { support, probs })
    }

    pub fn point_mass(q: Quantity) -> Self {
        Self { support: vec![q], probs: vec![R::one()] }
    }

    pub fn support(&self) -> &[Quantity] {
        &self.support
    }
    pub fn probs(&self) -> &[R] {
        &self.probs
    }
    pub fn iter(&self) -> impl Iterator<Item = (Quantity, R)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> R {
        self.iter().map(|(q, p)| R::from_i64(q).unwrap() * p).sum()
    }

    pub fn max_support(&self) -> Quantity {
        *self.support.last().unwrap()
    }

    pub fn prob_of(&self, q: Quantity) -> R {
        match self.support.binary_search(&q) {
            Ok(i) => self.probs[i],
            Err(_) => R::zero(),
        }
    }

    /// P(X <= q).
    pub fn cdf(&self, q: Quantity) -> R {
        self.iter().filter(|&(x, _)| x <= q).map(|(_, p)| p).sum()
    }

    /// Inverse-CDF sampling from a uniform u in [0, 1).
    pub fn quantile(&self, u: R) -> Quantity {
        let mut cum = R::zero();
        for (q, p) in self.iter() {
            cum += p;
            if u < cum {
                return q;
            }
        }
        self.max_support()
    }
}

/// Unit costs in euros per kilogram. One cost unit in reports equals
/// (euros/kg) * tonnes / 1000.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams<R> {
    pub c_local: R,
    pub c_import: R,
    pub c_hold: R,
    pub c_penalty: R,
}

impl<R: Real> CostParams<R> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_local", self.c_local),
            ("c_import", self.c_import),
            ("c_hold", self.c_hold),
            ("c_penalty", self.c_penalty),
        ] {
            if v < R::zero() {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.c_penalty <= self.c_import {
            log::warn!(
                "c_penalty ({}) <= c_import ({}): never importing is trivially optimal",
                self.c_penalty,
                self.c_import
            );
        }
        Ok(())
    }

    pub fn scaled(&self, factor: R) -> Self {
        Self {
            c_local: self.c_local * factor,
            c_import: self.c_import * factor,
            c_hold: self.c_hold * factor,
            c_penalty: self.c_penalty * factor,
        }
    }
}

/// Full instance definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig<R> {
    pub grid: QuantityGrid,
    /// Local lead time in periods.
    pub lead_local: usize,
    /// Import lead time in periods; strictly greater than `lead_local`.
    pub lead_import: usize,
    pub costs: CostParams<R>,
    pub capacity: DistributionSpec<R>,
    pub demand: DistributionSpec<R>,
    pub yield_loss: DistributionSpec<R>,
    pub label: String,
}

impl<R: Real> ProblemConfig<R> {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.costs.validate()?;
        self.capacity.validate()?;
        self.demand.validate()?;
        self.yield_loss.validate()?;
        if self.lead_import <= self.lead_local {
            return Err(Error::Config(format!(
                "lead_import ({}) must exceed lead_local ({})",
                self.lead_import, self.lead_local
            )));
        }
        if self.yield_loss.lower < R::zero() || self.yield_loss.upper > R::one() {
            return Err(Error::Config("yield-loss support must lie in [0, 1]".into()));
        }
        let step = R::from_i64(self.grid.step).unwrap();
        for spec in [&self.capacity, &self.demand] {
            for v in [spec.lower, spec.upper] {
                if (v / step).fract() != R::zero() {
                    return Err(Error::Config(format!(
                        "{} bound {v} is not a multiple of the grid step",
                        spec.kind
                    )));
                }
            }
        }
        if let Some(max_demand) = self.demand.upper.to_i64() {
            if self.grid.max_inventory < max_demand {
                return Err(Error::Config(format!(
                    "max_inventory {} below the maximum demand {}",
                    self.grid.max_inventory, max_demand
                )));
            }
        }
        Ok(())
    }

    pub fn with_costs(&self, costs: CostParams<R>) -> Self {
        Self { costs, ..self.clone() }
    }
}

/// Bin-integrate a truncated normal onto the quantity grid.
///
/// Each support point g receives the truncated-normal mass of
/// [g - step/2, g + step/2) intersected with [lower, upper], renormalized.
/// With sigma = 0 the result is a point mass at the grid point nearest the
/// mean.
pub fn discretize_truncated_normal<R: Real>(
    spec: &DistributionSpec<R>,
    grid_step: Quantity,
) -> Result<DiscreteDistribution<R>> {
    spec.validate()?;
    if grid_step <= 0 {
        return Err(Error::Config("grid step must be positive".into()));
    }
    let step = R::from_i64(grid_step).unwrap();
    let lo_k = (spec.lower / step).ceil().to_i64().unwrap();
    let hi_k = (spec.upper / step).floor().to_i64().unwrap();
    if lo_k > hi_k {
        return Err(Error::Config(format!(
            "{} spec: no grid point in [{}, {}] at step {grid_step}",
            spec.kind, spec.lower, spec.upper
        )));
    }
    let support: Vec<Quantity> = (lo_k..=hi_k).map(|k| k * grid_step).collect();

    let sigma = spec.sigma();
    if sigma == R::zero() {
        let half = R::from_f64_lossy(0.5);
        let k = (spec.mean / step + half).floor().to_i64().unwrap().clamp(lo_k, hi_k);
        return DiscreteDistribution::new(vec![k * grid_step], vec![R::one()]);
    }

    let half = R::from_f64_lossy(0.5);
    let mut probs = Vec::with_capacity(support.len());
    for &g in &support {
        let gr = R::from_i64(g).unwrap();
        let a = (gr - half * step).max(spec.lower);
        let b = (gr + half * step).min(spec.upper);
        let mass = if b <= a {
            R::zero()
        } else {
            // plain normal CDF; global renormalization below absorbs the
            // truncation constant
            crate::real::normal_cdf((b - spec.mean) / sigma)
                - crate::real::normal_cdf((a - spec.mean) / sigma)
        };
        probs.push(mass);
    }
    let total: R = probs.iter().copied().sum();
    if total <= R::zero() {
        return Err(Error::Config(format!("{} spec: empty support after truncation", spec.kind)));
    }
    for p in &mut probs {
        *p = *p / total;
    }
    DiscreteDistribution::new(support, probs)
}

/// Distribution of the local supplier's per-period capacity.
pub fn capacity_pmf<R: Real>(config: &ProblemConfig<R>) -> Result<DiscreteDistribution<R>> {
    discretize_truncated_normal(&config.capacity, config.grid.step)
}

/// Distribution of the per-period demand.
pub fn demand_pmf<R: Real>(config: &ProblemConfig<R>) -> Result<DiscreteDistribution<R>> {
    discretize_truncated_normal(&config.demand, config.grid.step)
}

/// Distribution of the quantity that actually arrives from an import order.
///
/// The arrived amount is the nearest grid multiple of (1 - loss) * order,
/// with the loss fraction truncated-normal on the yield-loss spec. The pmf is
/// computed analytically by mapping grid-cell boundaries back to loss
/// intervals; ties at exact midpoints round up to the larger quantity.
pub fn arrival_pmf<R: Real>(
    order_qty: Quantity,
    config: &ProblemConfig<R>,
) -> Result<DiscreteDistribution<R>> {
    let grid = &config.grid;
    if !grid.on_grid(order_qty) || order_qty > grid.max_order_import {
        return Err(Error::Input(format!(
            "import order {order_qty} is off grid or above max_order_import {}",
            grid.max_order_import
        )));
    }
    if order_qty == 0 {
        return Ok(DiscreteDistribution::point_mass(0));
    }
    let spec = &config.yield_loss;
    spec.validate()?;
    let q = R::from_i64(order_qty).unwrap();
    let sigma = spec.sigma();
    if sigma == R::zero() {
        let arrived = grid.snap((R::one() - spec.mean) * q);
        return Ok(DiscreteDistribution::point_mass(arrived.min(order_qty)));
    }

    let step = R::from_i64(grid.step).unwrap();
    let half = R::from_f64_lossy(0.5);
    let loss_cdf = |x: R| truncated_normal_cdf(x, spec.mean, sigma, spec.lower, spec.upper);

    let mut support = Vec::new();
    let mut probs = Vec::new();
    for k in 0..=(order_qty / grid.step) {
        let g = k * grid.step;
        let gr = R::from_i64(g).unwrap();
        // arrived in [g - step/2, g + step/2)  <=>  loss in the pre-image
        let loss_hi = R::one() - (gr - half * step) / q;
        let loss_lo = R::one() - (gr + half * step) / q;
        let mass = loss_cdf(loss_hi) - loss_cdf(loss_lo);
        if mass > R::zero() {
            support.push(g);
            probs.push(mass);
        }
    }
    let total: R = probs.iter().copied().sum();
    if total <= R::zero() {
        return Err(Error::Config("yield-loss spec maps no mass onto the grid".into()));
    }
    for p in &mut probs {
        *p = *p / total;
    }
    DiscreteDistribution::new(support, probs)
}

/// Exporting country of the import channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Country {
    Norway,
    Morocco,
    Uae,
}

impl Country {
    pub const ALL: [Country; 3] = [Country::Norway, Country::Morocco, Country::Uae];

    /// Import lead time in weeks.
    pub fn lead_import(&self) -> usize {
        match self {
            Country::Norway => 1,
            Country::Morocco => 2,
            Country::Uae => 3,
        }
    }

    /// Total import cost in euros per kilogram.
    pub fn c_import(&self) -> f64 {
        match self {
            Country::Norway => 8.62,
            Country::Morocco => 5.76,
            Country::Uae => 6.27,
        }
    }
}

impl std::fmt::Display for Country {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Country::Norway => "Norway",
            Country::Morocco => "Morocco",
            Country::Uae => "UAE",
        })
    }
}

impl std::str::FromStr for Country {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "norway" | "no" => Ok(Country::Norway),
            "morocco" | "ma" => Ok(Country::Morocco),
            "uae" | "ae" => Ok(Country::Uae),
            other => Err(Error::Parse(format!("unknown country '{other}'"))),
        }
    }
}

/// Storage technology, which determines the weekly holding cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Storage {
    SaltCavern,
    CompressedGas,
    LiquidHydrogen,
}

impl Storage {
    pub const ALL: [Storage; 3] = [Storage::SaltCavern, Storage::CompressedGas, Storage::LiquidHydrogen];

    /// Weekly holding cost in euros per kilogram: midpoint of the projected
    /// daily range times seven.
    pub fn c_hold(&self) -> f64 {
        match self {
            Storage::SaltCavern => 2.8,
            Storage::CompressedGas => 16.1,
            Storage::LiquidHydrogen => 24.5,
        }
    }

    pub fn abbrev(&self) -> &'static str {
        match self {
            Storage::SaltCavern => "SC",
            Storage::CompressedGas => "CG",
            Storage::LiquidHydrogen => "LH",
        }
    }
}

impl std::fmt::Display for Storage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.abbrev())
    }
}

impl std::str::FromStr for Storage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" | "saltcavern" | "salt-cavern" => Ok(Storage::SaltCavern),
            "cg" | "compressedgas" | "compressed-gas" => Ok(Storage::CompressedGas),
            "lh" | "liquidhydrogen" | "liquid-hydrogen" => Ok(Storage::LiquidHydrogen),
            other => Err(Error::Parse(format!("unknown storage '{other}'"))),
        }
    }
}

/// A named case-study cell: country, storage type, and the local/import cost
/// ratio rho.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPreset {
    pub country: Country,
    pub storage: Storage,
    pub rho: f64,
}

impl ScenarioPreset {
    pub fn new(country: Country, storage: Storage, rho: f64) -> Result<Self> {
        if rho <= 0.0 {
            return Err(Error::Config(format!("rho must be > 0, got {rho}")));
        }
        Ok(Self { country, storage, rho })
    }

    /// Parse a `country/storage/rho` triple, e.g. `morocco/sc/1.0`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("expected country/storage/rho, got '{s}'")));
        }
        let country: Country = parts[0].parse()?;
        let storage: Storage = parts[1].parse()?;
        let rho: f64 = parts[2]
            .parse()
            .map_err(|_| Error::Parse(format!("bad rho '{}'", parts[2])))?;
        Self::new(country, storage, rho)
    }
}

/// Build a full instance for a case-study preset at the given variability
/// levels.
pub fn preset_config<R: Real>(
    preset: &ScenarioPreset,
    varl_c: f64,
    varl_d: f64,
    varl_y: f64,
) -> ProblemConfig<R> {
    let r = R::from_f64_lossy;
    let c_import = preset.country.c_import();
    ProblemConfig {
        grid: QuantityGrid {
            step: 2000,
            max_order_local: 20_000,
            max_order_import: 20_000,
            max_inventory: 40_000,
        },
        lead_local: 0,
        lead_import: preset.country.lead_import(),
        costs: CostParams {
            c_local: r(preset.rho * c_import),
            c_import: r(c_import),
            c_hold: r(preset.storage.c_hold()),
            c_penalty: r(30.0),
        },
        capacity: DistributionSpec {
            mean: r(10_000.0),
            lower: r(0.0),
            upper: r(20_000.0),
            varl: r(varl_c),
            kind: DistKind::Capacity,
        },
        demand: DistributionSpec {
            mean: r(14_000.0),
            lower: r(6_000.0),
            upper: r(22_000.0),
            varl: r(varl_d),
            kind: DistKind::Demand,
        },
        yield_loss: DistributionSpec {
            mean: r(0.175),
            lower: r(0.0),
            upper: r(0.35),
            varl: r(varl_y),
            kind: DistKind::YieldLoss,
        },
        label: format!("{}/{}/{}", preset.country, preset.storage, preset.rho),
    }
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

/// Human-editable scenario file (TOML), the CLI-facing mirror of
/// [`ProblemConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub label: String,
    pub grid: QuantityGrid,
    pub costs: CostsSection,
    pub leads: LeadsSection,
    pub capacity: DistSection,
    pub demand: DistSection,
    #[serde(rename = "yield")]
    pub yield_loss: DistSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostsSection {
    pub c_local: f64,
    pub c_import: f64,
    pub c_hold: f64,
    pub c_penalty: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeadsSection {
    pub lead_local: usize,
    pub lead_import: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistSection {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub varl: f64,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_config<R: Real>(&self) -> Result<ProblemConfig<R>> {
        let r = R::from_f64_lossy;
        let dist = |s: &DistSection, kind| DistributionSpec {
            mean: r(s.mean),
            lower: r(s.lower),
            upper: r(s.upper),
            varl: r(s.varl),
            kind,
        };
        let config = ProblemConfig {
            grid: self.grid,
            lead_local: self.leads.lead_local,
            lead_import: self.leads.lead_import,
            costs: CostParams {
                c_local: r(self.costs.c_local),
                c_import: r(self.costs.c_import),
                c_hold: r(self.costs.c_hold),
                c_penalty: r(self.costs.c_penalty),
            },
            capacity: dist(&self.capacity, DistKind::Capacity),
            demand: dist(&self.demand, DistKind::Demand),
            yield_loss: dist(&self.yield_loss, DistKind::YieldLoss),
            label: self.label.clone(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_config(config: &ProblemConfig<f64>) -> Self {
        let sect = |s: &DistributionSpec<f64>| DistSection {
            mean: s.mean,
            lower: s.lower,
            upper: s.upper,
            varl: s.varl,
        };
        Self {
            label: config.label.clone(),
            grid: config.grid,
            costs: CostsSection {
                c_local: config.costs.c_local,
                c_import: config.costs.c_import,
                c_hold: config.costs.c_hold,
                c_penalty: config.costs.c_penalty,
            },
            leads: LeadsSection {
                lead_local: config.lead_local,
                lead_import: config.lead_import,
            },
            capacity: sect(&config.capacity),
            demand: sect(&config.demand),
            yield_loss: sect(&config.yield_loss),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn base_morocco() -> ProblemConfig<f64> {
        preset_config(&ScenarioPreset::new(Country::Morocco, Storage::SaltCavern, 1.0).unwrap(), 0.5, 0.5, 0.5)
    }

    #[test]
    fn zero_variance_is_point_mass() {
        let spec = DistributionSpec {
            mean: 10_000.0,
            lower: 0.0,
            upper: 20_000.0,
            varl: 0.0,
            kind: DistKind::Capacity,
        };
        let pmf = discretize_truncated_normal(&spec, 2000).unwrap();
        assert_eq!(pmf.support(), &[10_000]);
        assert_eq!(pmf.probs(), &[1.0]);
    }

    #[test]
    fn symmetric_pmf_about_mean() {
        let spec = DistributionSpec {
            mean: 10_000.0,
            lower: 0.0,
            upper: 20_000.0,
            varl: 0.5, // sigma 5000
            kind: DistKind::Capacity,
        };
        let pmf = discretize_truncated_normal(&spec, 2000).unwrap();
        for k in 1..=5i64 {
            let lo = pmf.prob_of(10_000 - 2000 * k);
            let hi = pmf.prob_of(10_000 + 2000 * k);
            assert_abs_diff_eq!(lo, hi, epsilon = 1e-13);
            assert!(lo < pmf.prob_of(10_000), "mode must be at the mean");
        }
    }

    #[test]
    fn capacity_sigma_from_varl() {
        let config = base_morocco();
        assert_abs_diff_eq!(config.capacity.sigma(), 5000.0, epsilon = 1e-12);
        assert_abs_diff_eq!(config.demand.sigma(), 4000.0, epsilon = 1e-12);
    }

    #[test]
    fn demand_endpoint_symmetry() {
        let config = base_morocco();
        let pmf = demand_pmf(&config).unwrap();
        assert_abs_diff_eq!(pmf.prob_of(6000), pmf.prob_of(22_000), epsilon = 1e-13);
        assert_eq!(pmf.support().first(), Some(&6000));
        assert_eq!(pmf.support().last(), Some(&22_000));
    }

    #[test]
    fn high_varl_capacity_has_tail_mass() {
        let mut config = base_morocco();
        config.capacity.varl = 1.0;
        let pmf = capacity_pmf(&config).unwrap();
        // the endpoint bins are half-width; at sigma = mean their truncated
        // mass is ~3.7%
        assert!(pmf.prob_of(0) > 0.03);
        assert!(pmf.prob_of(20_000) > 0.03);
        assert_abs_diff_eq!(pmf.prob_of(0), pmf.prob_of(20_000), epsilon = 1e-13);
    }

    #[test]
    fn arrival_of_nothing_is_nothing() {
        let config = base_morocco();
        let pmf = arrival_pmf(0, &config).unwrap();
        assert_eq!(pmf.support(), &[0]);
    }

    #[test]
    fn arrival_of_one_step_is_certain() {
        // (1 - loss) * 2000 in [1300, 2000]; everything >= 1000 snaps to 2000
        let config = base_morocco();
        let pmf = arrival_pmf(2000, &config).unwrap();
        assert_eq!(pmf.support(), &[2000]);
        assert_abs_diff_eq!(pmf.probs()[0], 1.0, epsilon = 1e-13);
    }

    #[test]
    fn arrival_of_8000_splits_at_loss_eighth() {
        let config = base_morocco();
        let pmf = arrival_pmf(8000, &config).unwrap();
        assert_eq!(pmf.support(), &[6000, 8000]);
        // P(arrive 8000) = P(loss <= 0.125)
        let expect = truncated_normal_cdf(0.125, 0.175, 0.5 * 0.175, 0.0, 0.35);
        assert_abs_diff_eq!(pmf.prob_of(8000), expect, epsilon = 1e-12);
    }

    #[test]
    fn arrival_support_bounds() {
        let config = base_morocco();
        for q in config.grid.import_orders() {
            let pmf = arrival_pmf(q, &config).unwrap();
            assert!(pmf.max_support() <= q);
            let floor = config.grid.snap(0.65 * q as f64);
            assert!(*pmf.support().first().unwrap() >= floor);
        }
    }

    #[test]
    fn off_grid_order_rejected() {
        let config = base_morocco();
        assert!(arrival_pmf(2500, &config).is_err());
        assert!(arrival_pmf(22_000, &config).is_err());
    }

    #[test]
    fn discretization_fosd_in_mean() {
        // shifting the mean one step right weakly shifts the CDF right
        let mk = |mean: f64| DistributionSpec {
            mean,
            lower: 0.0,
            upper: 20_000.0,
            varl: 0.4,
            kind: DistKind::Capacity,
        };
        let a = discretize_truncated_normal(&mk(8000.0), 2000).unwrap();
        let b = discretize_truncated_normal(&mk(10_000.0), 2000).unwrap();
        for q in (0..=20_000).step_by(2000) {
            assert!(b.cdf(q) <= a.cdf(q) + 1e-12);
        }
    }

    #[test]
    fn preset_values() {
        let p = ScenarioPreset::new(Country::Morocco, Storage::SaltCavern, 1.0).unwrap();
        let c: ProblemConfig<f64> = preset_config(&p, 0.5, 0.5, 0.5);
        assert_eq!(c.lead_import, 2);
        assert_abs_diff_eq!(c.costs.c_import, 5.76);
        assert_abs_diff_eq!(c.costs.c_local, 5.76);
        assert_abs_diff_eq!(c.costs.c_hold, 2.8);

        let p = ScenarioPreset::new(Country::Norway, Storage::LiquidHydrogen, 0.6).unwrap();
        let c: ProblemConfig<f64> = preset_config(&p, 0.5, 0.5, 0.5);
        assert_eq!(c.lead_import, 1);
        assert_abs_diff_eq!(c.costs.c_local, 5.172, epsilon = 1e-12);
        assert_abs_diff_eq!(c.costs.c_hold, 24.5);

        let p = ScenarioPreset::new(Country::Uae, Storage::CompressedGas, 1.4).unwrap();
        let c: ProblemConfig<f64> = preset_config(&p, 0.5, 0.5, 0.5);
        assert_eq!(c.lead_import, 3);
        assert_abs_diff_eq!(c.costs.c_local, 8.778, epsilon = 1e-12);
        assert_abs_diff_eq!(c.costs.c_hold, 16.1);
        c.validate().unwrap();
    }

    #[test]
    fn preset_triple_parsing() {
        let p = ScenarioPreset::parse("morocco/sc/1.2").unwrap();
        assert_eq!(p.country, Country::Morocco);
        assert_eq!(p.storage, Storage::SaltCavern);
        assert_abs_diff_eq!(p.rho, 1.2);
        assert!(ScenarioPreset::parse("mars/sc/1.0").is_err());
        assert!(ScenarioPreset::parse("morocco/sc/0").is_err());
    }

    #[test]
    fn scenario_file_round_trip() {
        let config = base_morocco();
        let file = ScenarioFile::from_config(&config);
        let text = toml::to_string_pretty(&file).unwrap();
        let parsed = ScenarioFile::parse(&text).unwrap();
        let back: ProblemConfig<f64> = parsed.to_config().unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn snap_ties_round_up() {
        let grid = QuantityGrid { step: 2000, max_order_local: 0, max_order_import: 0, max_inventory: 0 };
        assert_eq!(grid.snap(1000.0f64), 2000);
        assert_eq!(grid.snap(999.0f64), 0);
        assert_eq!(grid.snap(3000.0f64), 4000);
        assert_eq!(grid.snap(2999.0f64), 2000);
    }
}
