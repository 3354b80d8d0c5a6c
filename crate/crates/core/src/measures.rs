//! Finite atomic measures, grid discretization of densities and empirical
//! Ahlfors-regularity constants.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{diameter, Point};

/// Hard cap on the number of atoms produced by [`grid_discretize`].
pub const DEFAULT_ATOM_CAP: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Point,
    pub m: f64,
}

/// A finite positive measure `Σ m_i δ_{x_i}` on R^d.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
    total_mass: f64,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Invalid(format!("dimension {dim} not in 1..=3")));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.m.is_finite() && a.m > 0.0) {
                return Err(Error::Invalid(format!("atom {i}: mass must be positive, got {}", a.m)));
            }
            if !a.x.is_finite() {
                return Err(Error::Invalid(format!("atom {i}: non-finite coordinate")));
            }
            if a.x.0[dim..].iter().any(|&c| c != 0.0) {
                return Err(Error::Invalid(format!("atom {i}: coordinates exceed dimension {dim}")));
            }
        }
        let total_mass = atoms.iter().map(|a| a.m).sum();
        Ok(DiscreteMeasure { dim, atoms, total_mass })
    }

    /// Convenience constructor from `(coords, mass)` pairs.
    pub fn from_pairs(dim: usize, pairs: &[(&[f64], f64)]) -> Result<Self> {
        let atoms = pairs
            .iter()
            .map(|(c, m)| {
                if c.len() != dim {
                    return Err(Error::Invalid(format!("expected {dim} coordinates, got {}", c.len())));
                }
                Ok(Atom { x: Point::new(c), m: *m })
            })
            .collect::<Result<Vec<_>>>()?;
        DiscreteMeasure::new(dim, atoms)
    }

    pub fn dirac(dim: usize, x: Point, m: f64) -> Result<Self> {
        DiscreteMeasure::new(dim, vec![Atom { x, m }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn points(&self) -> Vec<Point> {
        self.atoms.iter().map(|a| a.x).collect()
    }

    /// Merges atoms with exactly equal coordinates, keeping first-occurrence order.
    pub fn canonicalize(&self) -> DiscreteMeasure {
        let mut index: HashMap<[u64; 3], usize> = HashMap::with_capacity(self.atoms.len());
        let mut atoms: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            match index.get(&a.x.bit_key()) {
                Some(&i) => atoms[i].m += a.m,
                None => {
                    index.insert(a.x.bit_key(), atoms.len());
                    atoms.push(*a);
                }
            }
        }
        let total_mass = atoms.iter().map(|a| a.m).sum();
        DiscreteMeasure { dim: self.dim, atoms, total_mass }
    }

    /// Rescales masses so the total is `target`.
    pub fn normalized_to(&self, target: f64) -> DiscreteMeasure {
        let s = target / self.total_mass;
        let atoms: Vec<Atom> = self.atoms.iter().map(|a| Atom { x: a.x, m: a.m * s }).collect();
        let total_mass = atoms.iter().map(|a| a.m).sum();
        DiscreteMeasure { dim: self.dim, atoms, total_mass }
    }

    pub fn scaled_space(&self, lambda: f64) -> DiscreteMeasure {
        let atoms = self.atoms.iter().map(|a| Atom { x: a.x * lambda, m: a.m }).collect();
        DiscreteMeasure { dim: self.dim, atoms, total_mass: self.total_mass }
    }

    pub fn scaled_mass(&self, factor: f64) -> DiscreteMeasure {
        self.normalized_to(self.total_mass * factor)
    }

    pub fn support_diameter(&self) -> f64 {
        diameter(&self.points())
    }

    pub fn to_document(&self) -> MeasureDocument {
        MeasureDocument {
            dimension: self.dim,
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomDocument { x: a.x.coords(self.dim).to_vec(), m: a.m })
                .collect(),
        }
    }

    pub fn from_document(doc: &MeasureDocument) -> Result<Self> {
        let atoms = doc
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if a.x.len() != doc.dimension {
                    return Err(Error::Invalid(format!(
                        "atoms[{i}].x: expected {} coordinates, got {}",
                        doc.dimension,
                        a.x.len()
                    )));
                }
                Ok(Atom { x: Point::new(&a.x), m: a.m })
            })
            .collect::<Result<Vec<_>>>()?;
        DiscreteMeasure::new(doc.dimension, atoms)
    }
}

/// JSON form: `{dimension, atoms: [{x: [...], m: ...}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureDocument {
    pub dimension: usize,
    pub atoms: Vec<AtomDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDocument {
    pub x: Vec<f64>,
    pub m: f64,
}

/// Axis-aligned box `[lo, hi]` in R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn unit_cube(dim: usize) -> AxisBox {
        AxisBox { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lo.len();
        if d == 0 || d > 3 || self.hi.len() != d {
            return Err(Error::Invalid("box: lo/hi must have equal length in 1..=3".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && h > l)) {
            return Err(Error::Invalid("box: need finite lo < hi on every axis".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim()).all(|k| p.0[k] >= self.lo[k] && p.0[k] <= self.hi[k])
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// A named sub-box with a constant density value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedBox {
    pub name: String,
    #[serde(rename = "box")]
    pub region: AxisBox,
    pub value: f64,
}

/// Density families accepted by [`grid_discretize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform,
    /// `f(x) = intercept + slope * x[axis]`.
    LinearRamp { axis: usize, intercept: f64, slope: f64 },
    /// `f(x) = intercept + slope * |x - center|`.
    RadialRamp { center: Vec<f64>, intercept: f64, slope: f64 },
    /// Sum of constant values on named sub-boxes (overlaps add) plus a background.
    PiecewiseConstant {
        #[serde(default)]
        background: f64,
        boxes: Vec<NamedBox>,
    },
}

impl DensitySpec {
    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            DensitySpec::Uniform => 1.0,
            DensitySpec::LinearRamp { axis, intercept, slope } => intercept + slope * p.0[*axis],
            DensitySpec::RadialRamp { center, intercept, slope } => {
                intercept + slope * p.dist(&Point::new(center))
            }
            DensitySpec::PiecewiseConstant { background, boxes } => {
                background
                    + boxes
                        .iter()
                        .filter(|b| b.region.contains(p))
                        .map(|b| b.value)
                        .sum::<f64>()
            }
        }
    }
}

/// A density on a box together with the grid used to discretize it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GriddedDensity {
    #[serde(rename = "box")]
    pub region: AxisBox,
    pub density: DensitySpec,
    pub resolution: usize,
}

impl GriddedDensity {
    pub fn discretize(&self) -> Result<DiscreteMeasure> {
        grid_discretize(&self.region, &self.density, self.resolution)
    }

    /// Discretization of the normalized density `f^p / ∫ f^p` on the same cells.
    pub fn discretize_power(&self, p: f64) -> Result<DiscreteMeasure> {
        discretize_with(&self.region, self.resolution, DEFAULT_ATOM_CAP, |x| {
            let v = self.density.eval(x);
            if v < 0.0 {
                Err(Error::NegativeDensity(x.0.to_vec()))
            } else {
                Ok(v.powf(p))
            }
        })
    }
}

/// One atom per cell center, mass = density × cell volume, normalized to total mass 1.
pub fn grid_discretize(region: &AxisBox, density: &DensitySpec, resolution: usize) -> Result<DiscreteMeasure> {
    grid_discretize_with_cap(region, density, resolution, DEFAULT_ATOM_CAP)
}

pub fn grid_discretize_with_cap(
    region: &AxisBox,
    density: &DensitySpec,
    resolution: usize,
    cap: usize,
) -> Result<DiscreteMeasure> {
    if let DensitySpec::LinearRamp { axis, .. } = density {
        if *axis >= region.dim() {
            return Err(Error::Invalid(format!("ramp axis {axis} out of range")));
        }
    }
    if let DensitySpec::RadialRamp { center, .. } = density {
        if center.len() != region.dim() {
            return Err(Error::Invalid("radial ramp center has wrong dimension".into()));
        }
    }
    discretize_with(region, resolution, cap, |x| {
        let v = density.eval(x);
        if v < 0.0 || !v.is_finite() {
            Err(Error::NegativeDensity(x.0.to_vec()))
        } else {
            Ok(v)
        }
    })
}

fn discretize_with(
    region: &AxisBox,
    resolution: usize,
    cap: usize,
    f: impl Fn(&Point) -> Result<f64>,
) -> Result<DiscreteMeasure> {
    region.validate()?;
    if resolution < 2 {
        return Err(Error::Invalid(format!("resolution must be >= 2, got {resolution}")));
    }
    let d = region.dim();
    let count = (resolution as u128).pow(d as u32);
    if count > cap as u128 {
        return Err(Error::BudgetExceeded { atoms: count.min(usize::MAX as u128) as usize, cap });
    }
    let count = count as usize;
    let widths: Vec<f64> = (0..d).map(|k| (region.hi[k] - region.lo[k]) / resolution as f64).collect();
    let cell_volume: f64 = widths.iter().product();
    let mut atoms = Vec::with_capacity(count);
    let mut idx = vec![0usize; d];
    for _ in 0..count {
        let mut c = [0.0; 3];
        for k in 0..d {
            c[k] = region.lo[k] + (idx[k] as f64 + 0.5) * widths[k];
        }
        let x = Point(c);
        let m = f(&x)? * cell_volume;
        if m > 0.0 {
            atoms.push(Atom { x, m });
        }
        // axis 0 varies slowest
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < resolution {
                break;
            }
            idx[k] = 0;
        }
    }
    let total: f64 = atoms.iter().map(|a| a.m).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateDensity);
    }
    for a in &mut atoms {
        a.m /= total;
    }
    DiscreteMeasure::new(d, atoms)
}

/// Empirical constants `c_A <= ν(B_r(x)) / r^d <= C_A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AhlforsEstimate {
    pub c_lower: f64,
    pub c_upper: f64,
    pub radii_sampled: Vec<f64>,
    pub support_diameter: f64,
    /// Typical atom spacing (median nearest-neighbour distance of the sampled atoms).
    pub cell_scale: f64,
}

/// Estimates Ahlfors constants on sampled atoms and geometric radii in `[2h, diam]`.
///
/// Each atom stands for a cell of width `h`; its mass enters the ball with a linear
/// ramp across the shell `r ± h/2`, which removes most of the lattice-counting noise.
pub fn ahlfors_constants(
    measure: &DiscreteMeasure,
    radius_count: usize,
    sample_count: usize,
    seed: u64,
) -> Result<AhlforsEstimate> {
    if measure.len() < 2 {
        return Err(Error::Invalid("ahlfors_constants needs at least 2 atoms".into()));
    }
    if radius_count == 0 || sample_count == 0 {
        return Err(Error::Invalid("radius_count and sample_count must be positive".into()));
    }
    let pts = measure.points();
    let n = pts.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = if sample_count >= n {
        (0..n).collect()
    } else {
        sample(&mut rng, n, sample_count).into_vec()
    };
    picked.sort_unstable();

    let mut nn: Vec<f64> = picked
        .iter()
        .map(|&i| {
            pts.iter()
                .enumerate()
                .filter(|&(j, q)| j != i && q.dist2(&pts[i]) > 0.0)
                .map(|(_, q)| q.dist2(&pts[i]))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .filter(|d| d.is_finite())
        .collect();
    if nn.is_empty() {
        return Err(Error::Invalid("all atoms coincide".into()));
    }
    nn.sort_by(f64::total_cmp);
    let h = nn[nn.len() / 2];
    let diam = measure.support_diameter();
    let r_min = (2.0 * h).min(diam);
    let radii: Vec<f64> = if radius_count == 1 || r_min == diam {
        vec![diam]
    } else {
        let ratio = (diam / r_min).powf(1.0 / (radius_count - 1) as f64);
        (0..radius_count)
            .map(|k| if k + 1 == radius_count { diam } else { (r_min * ratio.powi(k as i32)).min(diam) })
            .collect()
    };

    let d = measure.dim() as i32;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &i in &picked {
        let x = pts[i];
        for &r in &radii {
            let mass: f64 = measure
                .atoms()
                .iter()
                .map(|a| a.m * shell_weight(a.x.dist(&x), r, h))
                .sum();
            let ratio = mass / r.powi(d);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    Ok(AhlforsEstimate { c_lower: lo, c_upper: hi, radii_sampled: radii, support_diameter: diam, cell_scale: h })
}

fn shell_weight(dist: f64, r: f64, h: f64) -> f64 {
    ((r - dist) / h + 0.5).clamp(0.0, 1.0)
}
