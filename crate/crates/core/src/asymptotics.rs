//! N-sweeps and the empirical asymptotic laws measured on them.

use serde::Serialize;

use crate::error::{check_alpha, Error, Result};
use crate::landscape::{compute_landscape, LandscapeField};
use crate::measures::{AxisBox, DiscreteMeasure, GriddedDensity, Atom};
use crate::point::{diameter, Point};
use crate::quantizer::{solve_quantization, solve_quantization_warm, Quantizer, QuantizerConfig};
use crate::transport::w1_distance;

/// `β = 1 + dα - d`.
pub fn beta(alpha: f64, dim: usize) -> f64 {
    1.0 + dim as f64 * alpha - dim as f64
}

/// Solves each `N` in increasing order, warm-starting from the previous one.
pub fn sweep(nu: &DiscreteMeasure, alpha: f64, n_list: &[usize], config: &QuantizerConfig) -> Result<Vec<Quantizer>> {
    if n_list.is_empty() {
        return Err(Error::Invalid("N list is empty".into()));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) || n_list[0] == 0 {
        return Err(Error::Invalid("N list must be positive and strictly increasing".into()));
    }
    let mut out: Vec<Quantizer> = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let q = match out.last() {
            None => solve_quantization(nu, n, alpha, config)?,
            Some(prev) => solve_quantization_warm(nu, n, alpha, config, prev)?,
        };
        log::info!("N = {n}: {} sites, cost {}", q.len(), q.total_cost());
        out.push(q);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub alpha: f64,
    pub d: usize,
    /// `(N, cost)`, sorted by `N`.
    pub points: Vec<(usize, f64)>,
    pub fitted_slope: f64,
    pub fitted_intercept: f64,
    /// `exp(intercept)`; the constant of the power law when the target is the unit cube.
    pub c_estimate: f64,
    pub r_squared: f64,
}

/// Least squares fit of `log cost` against `log N`.
pub fn scaling_fit(points: &[(usize, f64)], alpha: f64, d: usize) -> Result<ScalingReport> {
    let mut points = points.to_vec();
    points.sort_by_key(|p| p.0);
    if points.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Invalid("duplicate N in scaling data".into()));
    }
    if points.len() < 3 {
        return Err(Error::InsufficientData(points.len()));
    }
    if points.iter().any(|&(n, c)| n == 0 || !(c > 0.0 && c.is_finite())) {
        return Err(Error::Invalid("scaling fit needs N ≥ 1 and positive finite costs".into()));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, c)| ((n as f64).ln(), c.ln())).collect();
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ScalingReport {
        alpha,
        d,
        points,
        fitted_slope: slope,
        fitted_intercept: intercept,
        c_estimate: intercept.exp(),
        r_squared,
    })
}

/// Covering radius `ω = max_x min_i |x - x_i|` over the support atoms and
/// separation `δ = min_{j≠k} |x_j - x_k|` (`+∞` for one site).
pub fn delone_constants(sites: &[Point], support: &DiscreteMeasure) -> (f64, f64) {
    let omega = support
        .atoms()
        .iter()
        .map(|a| sites.iter().map(|s| a.x.dist(s)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let mut delta = f64::INFINITY;
    for i in 0..sites.len() {
        for j in i + 1..sites.len() {
            delta = delta.min(sites[i].dist(&sites[j]));
        }
    }
    (omega, delta)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeloneRow {
    pub n: usize,
    pub omega: f64,
    pub delta: f64,
    pub omega_scaled: f64,
    pub delta_scaled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeloneReport {
    pub rows: Vec<DeloneRow>,
    pub diameter: f64,
}

impl DeloneReport {
    /// `(max/min of ω·N^{1/d}, max/min of δ·N^{1/d})` over rows with finite values.
    pub fn spreads(&self) -> (f64, f64) {
        (spread(self.rows.iter().map(|r| r.omega_scaled)), spread(self.rows.iter().map(|r| r.delta_scaled)))
    }
}

/// Ratio of the largest to the smallest finite value (`+∞` if the smallest is 0).
pub fn spread(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi < lo {
        1.0
    } else if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Delone constants of each quantizer, scaled by `N^{1/d}` with `N` the site count.
pub fn delone_report(quantizers: &[Quantizer], support: &DiscreteMeasure) -> DeloneReport {
    let d = support.dim() as f64;
    let rows = quantizers
        .iter()
        .map(|q| {
            let (omega, delta) = delone_constants(q.sites(), support);
            let s = (q.len() as f64).powf(1.0 / d);
            DeloneRow { n: q.len(), omega, delta, omega_scaled: omega * s, delta_scaled: delta * s }
        })
        .collect();
    DeloneReport { rows, diameter: support.support_diameter() }
}

fn basin_sinks(q: &Quantizer, i: usize) -> Vec<Point> {
    let net = &q.networks()[i];
    net.topology().sinks().into_iter().map(|v| net.position(v)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasinRow {
    pub site: usize,
    pub mass: f64,
    pub diameter: f64,
    /// `mass / diameter^d` (`+∞` for a zero diameter).
    pub mass_density: f64,
    pub cost: f64,
    /// `cost · N^{α + 1/d}`.
    pub scaled_cost: f64,
}

pub fn basin_stats(q: &Quantizer) -> Vec<BasinRow> {
    let d = q.dim() as f64;
    let n = q.len() as f64;
    (0..q.len())
        .map(|i| {
            let diam = diameter(&basin_sinks(q, i));
            let mass = q.masses()[i];
            let cost = q.networks()[i].cost();
            BasinRow {
                site: i,
                mass,
                diameter: diam,
                mass_density: if diam > 0.0 { mass / diam.powf(d) } else { f64::INFINITY },
                cost,
                scaled_cost: cost * n.powf(q.alpha() + 1.0 / d),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallRow {
    pub site: usize,
    /// Distance to the nearest sink of another basin, times `N^{1/d}` (`+∞` for one basin).
    pub r_in_scaled: f64,
    /// Distance to the farthest own sink, times `N^{1/d}`.
    pub r_out_scaled: f64,
    /// Site farther than `r_out` from the boundary of the support's bounding box.
    pub interior: bool,
}

pub fn inner_outer_ball_check(q: &Quantizer) -> Vec<BallRow> {
    let d = q.dim();
    let s = (q.len() as f64).powf(1.0 / d as f64);
    let basins: Vec<Vec<Point>> = (0..q.len()).map(|i| basin_sinks(q, i)).collect();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in basins.iter().flatten() {
        for k in 0..d {
            lo[k] = lo[k].min(p.0[k]);
            hi[k] = hi[k].max(p.0[k]);
        }
    }
    q.sites()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let r_out = basins[i].iter().map(|p| p.dist(x)).fold(0.0, f64::max);
            let r_in = basins
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, b)| b.iter())
                .map(|p| p.dist(x))
                .fold(f64::INFINITY, f64::min);
            let boundary = (0..d).map(|k| (x.0[k] - lo[k]).min(hi[k] - x.0[k])).fold(f64::INFINITY, f64::min);
            BallRow { site: i, r_in_scaled: r_in * s, r_out_scaled: r_out * s, interior: boundary > r_out }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityRow {
    pub n: usize,
    pub w1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityReport {
    pub alpha: f64,
    /// `α / (α + 1/d)`.
    pub exponent: f64,
    pub rows: Vec<DensityRow>,
}

/// Exponent of the limit site density, `α / (α + 1/d)`.
pub fn limit_exponent(alpha: f64, dim: usize) -> f64 {
    alpha / (alpha + 1.0 / dim as f64)
}

/// Uniform probability on the sites.
pub fn empirical_sites(sites: &[Point], dim: usize) -> Result<DiscreteMeasure> {
    let w = 1.0 / sites.len() as f64;
    DiscreteMeasure::new(dim, sites.iter().map(|&x| Atom { x, m: w }).collect())
}

/// W1 distance between the uniform measure on each quantizer's sites and the
/// normalized limit density `f^{α/(α+1/d)}` discretized on the density's grid.
pub fn density_compare(quantizers: &[Quantizer], density: Option<&GriddedDensity>, alpha: f64) -> Result<DensityReport> {
    let density = density.ok_or(Error::NoDensity)?;
    let dim = density.region.dim();
    check_alpha(alpha, dim)?;
    let exponent = limit_exponent(alpha, dim);
    let target = density.discretize_power(exponent)?.normalized_to(1.0);
    let rows = quantizers
        .iter()
        .map(|q| {
            let mu = empirical_sites(q.sites(), dim)?;
            Ok(DensityRow { n: q.len(), w1: w1_distance(&mu, &target)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityReport { alpha, exponent, rows })
}

/// Landscape of every basin network.
pub fn quantizer_landscapes(q: &Quantizer) -> Result<Vec<LandscapeField>> {
    q.networks().iter().map(compute_landscape).collect()
}

/// `N^{β/d} · Σ z·m` over the sinks inside each region.
pub fn energy_equidistribution(q: &Quantizer, fields: &[LandscapeField], regions: &[AxisBox]) -> Vec<f64> {
    let d = q.dim();
    let factor = (q.len() as f64).powf(beta(q.alpha(), d) / d as f64);
    regions
        .iter()
        .map(|r| {
            let e: f64 = fields.iter().flat_map(|f| f.sinks()).filter(|s| r.contains(&s.x)).map(|s| s.z * s.mass).sum();
            factor * e
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{grid_discretize, DensitySpec};
    use approx::assert_relative_eq;

    #[test]
    fn planted_power_law() {
        let pts: Vec<(usize, f64)> = [2usize, 4, 8, 16, 32].iter().map(|&n| (n, 0.7 * (n as f64).powf(-0.35))).collect();
        let r = scaling_fit(&pts, 0.85, 2).unwrap();
        assert!((r.fitted_slope + 0.35).abs() < 1e-12);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        assert_relative_eq!(r.c_estimate, 0.7, max_relative = 1e-12);
        assert!(matches!(scaling_fit(&pts[..2], 0.85, 2), Err(Error::InsufficientData(2))));
    }

    #[test]
    fn delone_values() {
        let nu = grid_discretize(&AxisBox::unit_cube(2), &DensitySpec::Uniform, 10).unwrap();
        let (omega, delta) = delone_constants(&[Point::xy(0.5, 0.5)], &nu);
        assert_relative_eq!(omega, 0.45 * 2f64.sqrt(), max_relative = 1e-12);
        assert_eq!(delta, f64::INFINITY);
        let (_, delta) = delone_constants(&[Point::xy(0.5, 0.5), Point::xy(0.5, 0.5)], &nu);
        assert_eq!(delta, 0.0);
        let k = 4;
        let lattice: Vec<Point> =
            (0..k * k).map(|i| Point::xy((i % k) as f64 / k as f64, (i / k) as f64 / k as f64)).collect();
        let (_, delta) = delone_constants(&lattice, &nu);
        assert_eq!(delta, 1.0 / k as f64);
    }

    #[test]
    fn spread_handles_degenerate_rows() {
        assert_eq!(spread([2.0, f64::INFINITY, 1.0]), 2.0);
        assert_eq!(spread([0.0, 1.0]), f64::INFINITY);
        assert_eq!(spread(std::iter::empty()), 1.0);
    }

    #[test]
    fn uniform_limit_density_is_uniform() {
        let g = GriddedDensity { region: AxisBox::unit_cube(2), density: DensitySpec::Uniform, resolution: 6 };
        let t = g.discretize_power(limit_exponent(0.85, 2)).unwrap();
        assert!(t.atoms().iter().all(|a| (a.m - 1.0 / 36.0).abs() < 1e-15));
        assert!(matches!(density_compare(&[], None, 0.85), Err(Error::NoDensity)));
        assert_relative_eq!(limit_exponent(0.85, 2), 0.85 / 1.35);
    }
}
