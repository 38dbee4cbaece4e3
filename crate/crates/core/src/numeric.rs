//! Discretized distributions and their composition.
//!
//! A [`NumericDistribution`] keeps point masses exactly and represents the
//! absolutely continuous remainder as cell masses on a uniform grid (a
//! piecewise-constant density). Serial composition convolves the cell
//! midpoints on a common lattice; parallel composition multiplies CDFs on a
//! merged grid, so jumps at atoms compose exactly.

use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dist::DistributionSpec;
use crate::error::{Error, Result, Violation};

/// Total mass tolerance accepted when building a distribution from raw parts.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Mass that may be dropped from either end of a composed grid.
const TRIM_MASS: f64 = 1e-13;
/// Atoms lighter than this are discarded after composition.
const MIN_ATOM_MASS: f64 = 1e-15;
/// Upper bound on the working grid, in multiples of the output cell count.
const MAX_WORK_FACTOR: f64 = 16.0;
const MAX_HORIZON: f64 = 1e12;
const DIRECT_CONVOLUTION_LIMIT: usize = 1 << 18;

fn default_points() -> usize {
    1 << 14
}

fn default_quantile() -> f64 {
    1.0 - 1e-6
}

/// Resolution of the discretization grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_points")]
    pub points: usize,
    /// The continuous part is sampled up to this quantile of itself.
    #[serde(rename = "quantile", default = "default_quantile")]
    pub horizon_quantile: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: default_points(),
            horizon_quantile: default_quantile(),
        }
    }
}

impl GridConfig {
    pub fn new(points: usize, horizon_quantile: f64) -> Self {
        Self {
            points,
            horizon_quantile,
        }
    }

    pub fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.points < 64 {
            out.push(Violation::new(format!("{path}.points"), "grid needs at least 64 points"));
        }
        if !(self.horizon_quantile > 0.5 && self.horizon_quantile < 1.0) {
            out.push(Violation::new(format!("{path}.quantile"), "quantile must lie in (0.5, 1)"));
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.violations("grid");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Cell masses on `[start + k step, start + (k + 1) step)`, uniform within
/// each cell.
#[derive(Debug, Clone, PartialEq)]
struct Hist {
    start: f64,
    step: f64,
    masses: Vec<f64>,
    cum: Vec<f64>,
}

impl Hist {
    fn empty() -> Self {
        Self {
            start: 0.0,
            step: 1.0,
            masses: Vec::new(),
            cum: vec![0.0],
        }
    }

    fn new(start: f64, step: f64, masses: Vec<f64>) -> Self {
        let mut cum = Vec::with_capacity(masses.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for m in &masses {
            acc += m;
            cum.push(acc);
        }
        Self {
            start,
            step,
            masses,
            cum,
        }
    }

    fn len(&self) -> usize {
        self.masses.len()
    }

    fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    fn end(&self) -> f64 {
        self.start + self.step * self.len() as f64
    }

    fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Cumulative mass up to `t`, linear within cells.
    fn cum_at(&self, t: f64) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let x = (t - self.start) / self.step;
        if x <= 0.0 {
            return 0.0;
        }
        if x >= n as f64 {
            return self.total();
        }
        let k = (x.floor() as usize).min(n - 1);
        self.cum[k] + (x - k as f64) * self.masses[k]
    }

    fn scaled(&self, factor: f64) -> Self {
        Hist::new(self.start, self.step, self.masses.iter().map(|m| m * factor).collect())
    }

    fn shifted(&self, by: f64) -> Self {
        Hist {
            start: self.start + by,
            ..self.clone()
        }
    }

    /// Mass falling into each of `n` cells of width `step` from `start`.
    fn regrid(&self, start: f64, step: f64, n: usize) -> Vec<f64> {
        let offset = (self.start - start) / step;
        let whole = offset.round();
        if self.step == step && (offset - whole).abs() < 1e-9 && whole >= 0.0 {
            let first = whole as usize;
            let mut out = vec![0.0; n];
            for (k, m) in self.masses.iter().enumerate() {
                if let Some(slot) = out.get_mut(first + k) {
                    *slot = *m;
                }
            }
            return out;
        }
        let mut out = Vec::with_capacity(n);
        let mut prev = self.cum_at(start);
        for j in 0..n {
            let c = self.cum_at(start + (j + 1) as f64 * step);
            out.push((c - prev).max(0.0));
            prev = c;
        }
        out
    }

    /// Drops negligible mass from both ends and coarsens to at most
    /// `max_cells` cells.
    fn trimmed(self, max_cells: usize) -> Hist {
        if self.is_empty() {
            return self;
        }
        let total = self.total();
        let n = self.len();
        let first = self.cum.partition_point(|c| *c <= TRIM_MASS).saturating_sub(1).min(n - 1);
        let last = self
            .cum
            .partition_point(|c| total - *c > TRIM_MASS)
            .clamp(first + 1, n);
        let start = self.start + first as f64 * self.step;
        let end = self.start + last as f64 * self.step;
        let cells = last - first;
        if cells <= max_cells {
            return Hist::new(start, self.step, self.masses[first..last].to_vec());
        }
        let step = (end - start) / max_cells as f64;
        let masses = self.regrid(start, step, max_cells);
        Hist::new(start, step, masses)
    }
}

/// A distribution on `[0, inf)` as exact atoms plus a gridded continuous
/// part. Total mass is one.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericDistribution {
    atoms: Vec<Atom>,
    atom_cum: Vec<f64>,
    cont: Hist,
}

fn merge_atoms(mut raw: Vec<(f64, f64)>) -> Vec<Atom> {
    raw.retain(|(_, m)| *m > MIN_ATOM_MASS);
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Atom> = Vec::with_capacity(raw.len());
    for (x, m) in raw {
        match out.last_mut() {
            Some(last) if (x - last.location).abs() <= 1e-12 * x.abs().max(1.0) => last.mass += m,
            _ => out.push(Atom { location: x, mass: m }),
        }
    }
    out
}

impl NumericDistribution {
    /// Normalizes so that atoms plus the continuous part carry unit mass.
    fn assemble(atoms: Vec<Atom>, cont: Hist) -> Self {
        let atom_total: f64 = atoms.iter().map(|a| a.mass).sum();
        let cont_total = cont.total();
        let (atoms, cont) = if cont.is_empty() || cont_total <= 1e-12 || atom_total >= 1.0 - 1e-12 {
            let scale = 1.0 / atom_total;
            let atoms = atoms
                .into_iter()
                .map(|a| Atom {
                    location: a.location,
                    mass: a.mass * scale,
                })
                .collect();
            (atoms, Hist::empty())
        } else {
            let scale = (1.0 - atom_total) / cont_total;
            (atoms, cont.scaled(scale))
        };
        let mut atom_cum = Vec::with_capacity(atoms.len() + 1);
        let mut acc = 0.0;
        atom_cum.push(0.0);
        for a in &atoms {
            acc += a.mass;
            atom_cum.push(acc);
        }
        Self { atoms, atom_cum, cont }
    }

    /// Builds a distribution from raw parts. Total mass must be one within
    /// [`MASS_TOLERANCE`]; it is then renormalized exactly.
    pub fn from_parts(
        atoms: Vec<(f64, f64)>,
        grid_start: f64,
        grid_step: f64,
        cell_masses: Vec<f64>,
    ) -> Result<Self> {
        let mut v = Vec::new();
        if atoms.iter().any(|(x, m)| !x.is_finite() || !m.is_finite() || *m < 0.0) {
            v.push(Violation::new("atoms", "atoms need finite locations and non-negative masses"));
        }
        if !cell_masses.is_empty() {
            if !grid_start.is_finite() || !(grid_step > 0.0) || !grid_step.is_finite() {
                v.push(Violation::new("grid", "grid needs a finite start and positive step"));
            }
            if cell_masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
                v.push(Violation::new("density", "cell masses must be finite and non-negative"));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum::<f64>() + cell_masses.iter().sum::<f64>();
        if v.is_empty() && (total - 1.0).abs() > MASS_TOLERANCE {
            v.push(Violation::new("", format!("total mass {total} ≠ 1")));
        }
        if !v.is_empty() {
            return Err(Error::Invalid(v));
        }
        let cont = if cell_masses.is_empty() {
            Hist::empty()
        } else {
            Hist::new(grid_start, grid_step, cell_masses)
        };
        Ok(Self::assemble(merge_atoms(atoms), cont))
    }

    pub fn point(location: f64) -> Self {
        Self::assemble(vec![Atom { location, mass: 1.0 }], Hist::empty())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn cell_masses(&self) -> &[f64] {
        &self.cont.masses
    }

    pub fn grid_step(&self) -> f64 {
        self.cont.step
    }

    /// Left edge of the first cell.
    pub fn grid_start(&self) -> f64 {
        self.cont.start
    }

    pub fn grid_len(&self) -> usize {
        self.cont.len()
    }

    /// Cell centres, where [`density`](Self::density) and
    /// [`cdf_values`](Self::cdf_values) are reported.
    pub fn grid_times(&self) -> Vec<f64> {
        (0..self.cont.len())
            .map(|k| self.cont.start + (k as f64 + 0.5) * self.cont.step)
            .collect()
    }

    pub fn density(&self) -> Vec<f64> {
        self.cont.masses.iter().map(|m| m / self.cont.step).collect()
    }

    pub fn cdf_values(&self) -> Vec<f64> {
        self.grid_times().into_iter().map(|t| self.cdf(t)).collect()
    }

    pub fn continuous_mass(&self) -> f64 {
        self.cont.total()
    }

    pub fn total_mass(&self) -> f64 {
        self.atom_cum.last().unwrap() + self.cont.total()
    }

    fn atom_mass_through(&self, t: f64) -> f64 {
        self.atom_cum[self.atoms.partition_point(|a| a.location <= t)]
    }

    fn atom_mass_before(&self, t: f64) -> f64 {
        self.atom_cum[self.atoms.partition_point(|a| a.location < t)]
    }

    pub fn cdf(&self, t: f64) -> f64 {
        (self.atom_mass_through(t) + self.cont.cum_at(t)).min(1.0)
    }

    /// `P(X < t)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        (self.atom_mass_before(t) + self.cont.cum_at(t)).min(1.0)
    }

    fn support_min(&self) -> f64 {
        let a = self.atoms.first().map(|a| a.location).unwrap_or(f64::INFINITY);
        let c = if self.cont.is_empty() {
            f64::INFINITY
        } else {
            self.cont.start
        };
        a.min(c)
    }

    /// `(mean, variance)`, exact for the atom-plus-histogram representation.
    pub fn moments(&self) -> (f64, f64) {
        let h = self.cont.step;
        let centre = |k: usize| self.cont.start + (k as f64 + 0.5) * h;
        let mut mean: f64 = self.atoms.iter().map(|a| a.location * a.mass).sum();
        mean += self
            .cont
            .masses
            .iter()
            .enumerate()
            .map(|(k, m)| m * centre(k))
            .sum::<f64>();
        let mut var: f64 = self
            .atoms
            .iter()
            .map(|a| a.mass * (a.location - mean).powi(2))
            .sum();
        var += self
            .cont
            .masses
            .iter()
            .enumerate()
            .map(|(k, m)| m * ((centre(k) - mean).powi(2) + h * h / 12.0))
            .sum::<f64>();
        (mean, var)
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }

    pub fn variance(&self) -> f64 {
        self.moments().1
    }

    /// Distribution of the sum of independent draws from `self` and `other`.
    pub fn convolve(&self, other: &NumericDistribution) -> NumericDistribution {
        if self.operand_order(other).is_gt() {
            return other.convolve(self);
        }
        let max_cells = self.cont.len().max(other.cont.len());
        let mut raw_atoms = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for a in &self.atoms {
            for b in &other.atoms {
                raw_atoms.push((a.location + b.location, a.mass * b.mass));
            }
        }
        let mut parts = Vec::new();
        if !self.cont.is_empty() && !other.cont.is_empty() {
            parts.push(convolve_hists(&self.cont, &other.cont));
        }
        for (atoms, cont) in [(&self.atoms, &other.cont), (&other.atoms, &self.cont)] {
            if cont.is_empty() {
                continue;
            }
            for a in atoms.iter() {
                parts.push(cont.shifted(a.location).scaled(a.mass));
            }
        }
        let cont = combine(parts, max_cells);
        Self::assemble(merge_atoms(raw_atoms), cont)
    }

    /// Fixes which operand sets the working lattice so that binary
    /// compositions are exactly symmetric.
    fn operand_order(&self, other: &NumericDistribution) -> std::cmp::Ordering {
        let key = |d: &NumericDistribution| [d.cont.step, d.cont.start, d.cont.len() as f64, d.atoms.len() as f64];
        let (a, b) = (key(self), key(other));
        a.iter().zip(&b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    }

    /// Distribution of the maximum of independent draws: the CDF is the
    /// pointwise product of the two CDFs.
    pub fn max_compose(&self, other: &NumericDistribution) -> NumericDistribution {
        let max_cells = self.cont.len().max(other.cont.len());
        let mut locations: Vec<f64> = self
            .atoms
            .iter()
            .chain(other.atoms.iter())
            .map(|a| a.location)
            .collect();
        locations.sort_by(f64::total_cmp);
        locations.dedup();
        let product = |t: f64| self.cdf(t) * other.cdf(t);
        let mut jumps = Vec::with_capacity(locations.len());
        for &x in &locations {
            let jump = product(x) - self.cdf_left(x) * other.cdf_left(x);
            jumps.push((x, jump));
        }
        let atoms = merge_atoms(jumps.clone());

        let cont = if max_cells == 0 {
            Hist::empty()
        } else {
            let lo = self.support_min().max(other.support_min());
            let hi = [&self.cont, &other.cont]
                .iter()
                .filter(|h| !h.is_empty())
                .map(|h| h.end())
                .fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                let step = (hi - lo) / max_cells as f64;
                let mut jump_cum = 0.0;
                let mut next_jump = 0;
                let mut cont_at = |t: f64| {
                    while next_jump < jumps.len() && jumps[next_jump].0 <= t {
                        jump_cum += jumps[next_jump].1;
                        next_jump += 1;
                    }
                    product(t) - jump_cum
                };
                let mut prev = cont_at(lo);
                let mut masses = Vec::with_capacity(max_cells);
                for j in 0..max_cells {
                    let t = if j + 1 == max_cells {
                        hi
                    } else {
                        lo + (j + 1) as f64 * step
                    };
                    let c = cont_at(t);
                    masses.push((c - prev).max(0.0));
                    prev = c;
                }
                Hist::new(lo, step, masses).trimmed(max_cells)
            } else {
                Hist::empty()
            }
        };
        Self::assemble(atoms, cont)
    }

    /// Kolmogorov-Smirnov distance to the empirical CDF of `samples`.
    pub fn ks_distance(&self, samples: &[f64]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let mut xs = samples.to_vec();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        let mut i = 0;
        while i < xs.len() {
            let x = xs[i];
            let mut j = i;
            while j < xs.len() && xs[j] == x {
                j += 1;
            }
            d = d
                .max((self.cdf(x) - j as f64 / n).abs())
                .max((self.cdf_left(x) - i as f64 / n).abs());
            i = j;
        }
        for a in &self.atoms {
            let right = xs.partition_point(|v| *v <= a.location) as f64 / n;
            let left = xs.partition_point(|v| *v < a.location) as f64 / n;
            d = d
                .max((self.cdf(a.location) - right).abs())
                .max((self.cdf_left(a.location) - left).abs());
        }
        d
    }

    /// `t,pdf,cdf,atom_mass` rows ordered by `t`; grid rows are cell
    /// centres with `atom_mass` 0, atoms are extra rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,pdf,cdf,atom_mass\n");
        self.write_csv_rows(&mut out, None);
        out
    }

    pub(crate) fn write_csv_rows(&self, out: &mut String, prefix: Option<&str>) {
        let times = self.grid_times();
        let density = self.density();
        let mut k = 0;
        let mut a = 0;
        while k < times.len() || a < self.atoms.len() {
            let take_grid = a >= self.atoms.len() || (k < times.len() && times[k] <= self.atoms[a].location);
            let (t, pdf, mass) = if take_grid {
                k += 1;
                (times[k - 1], density[k - 1], 0.0)
            } else {
                a += 1;
                (self.atoms[a - 1].location, 0.0, self.atoms[a - 1].mass)
            };
            if let Some(p) = prefix {
                out.push_str(p);
                out.push(',');
            }
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(t),
                fmt_f64(pdf),
                fmt_f64(self.cdf(t)),
                fmt_f64(mass)
            );
        }
    }

    /// Parses the output of [`to_csv`](Self::to_csv).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default().trim();
        if header != "t,pdf,cdf,atom_mass" {
            return Err(Error::Parse {
                path: "line 1".into(),
                message: format!("expected header t,pdf,cdf,atom_mass, found '{header}'"),
            });
        }
        let mut grid = Vec::new();
        let mut atoms = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse_err = |message: String| Error::Parse {
                path: format!("line {}", i + 2),
                message,
            };
            if fields.len() != 4 {
                return Err(parse_err(format!("expected 4 fields, found {}", fields.len())));
            }
            let mut vals = [0.0; 4];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f.trim().parse().map_err(|e| parse_err(format!("'{f}': {e}")))?;
            }
            if vals[3] != 0.0 {
                atoms.push((vals[0], vals[3]));
            } else {
                grid.push((vals[0], vals[1]));
            }
        }
        if grid.len() == 1 {
            return Err(Error::Parse {
                path: "grid".into(),
                message: "a grid needs at least 2 rows".into(),
            });
        }
        let (start, step, masses) = if grid.is_empty() {
            (0.0, 1.0, Vec::new())
        } else {
            let n = grid.len();
            let step = (grid[n - 1].0 - grid[0].0) / (n - 1) as f64;
            let masses = grid.iter().map(|(_, pdf)| pdf * step).collect();
            (grid[0].0 - 0.5 * step, step, masses)
        };
        Self::from_parts(atoms, start, step, masses)
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small or
/// large magnitudes.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-5 || x.abs() >= 1e16) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Convolves two histograms by pairing cell midpoints: the sums fall on a
/// lattice with the common step, and each lattice mass becomes one cell
/// centred on it.
fn convolve_hists(a: &Hist, b: &Hist) -> Hist {
    let step = a.step.max(b.step);
    let coarsen = |h: &Hist| -> Vec<f64> {
        if h.step == step {
            h.masses.clone()
        } else {
            let n = ((h.end() - h.start) / step).ceil().max(1.0) as usize;
            h.regrid(h.start, step, n)
        }
    };
    let (ma, mb) = (coarsen(a), coarsen(b));
    let lattice = convolve_sequences(&ma, &mb);
    Hist::new(a.start + b.start + 0.5 * step, step, lattice)
}

/// Sums histograms onto one grid aligned with the first part, then trims.
fn combine(parts: Vec<Hist>, max_cells: usize) -> Hist {
    let Some(base) = parts.first() else {
        return Hist::empty();
    };
    let lo = parts.iter().map(|p| p.start).fold(f64::INFINITY, f64::min);
    let hi = parts.iter().map(|p| p.end()).fold(f64::NEG_INFINITY, f64::max);
    let step = base
        .step
        .max((hi - lo) / (MAX_WORK_FACTOR * max_cells as f64));
    let start = if step == base.step {
        base.start - ((base.start - lo) / step).ceil() * step
    } else {
        lo
    };
    let n = (((hi - start) / step).ceil() as usize).max(1);
    let mut masses = vec![0.0; n];
    for p in &parts {
        for (acc, m) in masses.iter_mut().zip(p.regrid(start, step, n)) {
            *acc += m;
        }
    }
    Hist::new(start, step, masses).trimmed(max_cells)
}

fn convolve_sequences(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    if a.len().saturating_mul(b.len()) <= DIRECT_CONVOLUTION_LIMIT {
        let mut out = vec![0.0; out_len];
        for (i, x) in a.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    // Pack both real inputs into one complex transform.
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|i| Complex::new(*a.get(i).unwrap_or(&0.0), *b.get(i).unwrap_or(&0.0)))
        .collect();
    forward.process(&mut buf);
    let mut prod = vec![Complex::new(0.0, 0.0); n];
    for k in 0..n {
        let z = buf[k];
        let zc = buf[(n - k) % n].conj();
        let fa = (z + zc) * 0.5;
        let fb = (z - zc) * Complex::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inverse.process(&mut prod);
    let scale = 1.0 / n as f64;
    prod[..out_len].iter().map(|z| (z.re * scale).max(0.0)).collect()
}

/// Exact atoms plus cell masses of the continuous part up to its
/// `horizon_quantile`; the truncated tail is folded back by renormalizing.
pub fn discretize(spec: &DistributionSpec, cfg: &GridConfig) -> Result<NumericDistribution> {
    spec.ensure_valid()?;
    cfg.ensure_valid()?;
    let atoms: Vec<Atom> = spec
        .atoms()
        .into_iter()
        .map(|(location, mass)| Atom { location, mass })
        .collect();
    let cmass = spec.continuous_mass();
    let Some(lo) = spec.continuous_start().filter(|_| cmass > 1e-12) else {
        return Ok(NumericDistribution::assemble(atoms, Hist::empty()));
    };
    let target = (1.0 - cfg.horizon_quantile) * cmass;
    let tail = |t: f64| cmass - spec.continuous_cdf(t);
    let mut width = 1.0_f64.max(lo);
    while tail(lo + width) > target {
        width *= 2.0;
        if width > MAX_HORIZON {
            return Err(Error::Horizon(format!(
                "{} quantile of the {} continuous part lies beyond t = {MAX_HORIZON:e}",
                cfg.horizon_quantile,
                spec.family_name()
            )));
        }
    }
    let (mut a, mut b) = (0.0, width);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if tail(lo + mid) > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    let hi = lo + b;
    let n = cfg.points;
    let step = (hi - lo) / n as f64;
    let mut prev = spec.continuous_cdf(lo);
    let mut masses = Vec::with_capacity(n);
    for k in 0..n {
        let t = if k + 1 == n { hi } else { lo + (k + 1) as f64 * step };
        let c = spec.continuous_cdf(t);
        masses.push((c - prev).max(0.0));
        prev = c;
    }
    Ok(NumericDistribution::assemble(atoms, Hist::new(lo, step, masses)))
}

/// Free-function form of [`NumericDistribution::moments`].
pub fn numeric_moments(d: &NumericDistribution) -> (f64, f64) {
    d.moments()
}

pub fn convolve(a: &NumericDistribution, b: &NumericDistribution) -> NumericDistribution {
    a.convolve(b)
}

pub fn max_compose(a: &NumericDistribution, b: &NumericDistribution) -> NumericDistribution {
    a.max_compose(b)
}

pub fn ks_distance(d: &NumericDistribution, samples: &[f64]) -> f64 {
    d.ks_distance(samples)
}
