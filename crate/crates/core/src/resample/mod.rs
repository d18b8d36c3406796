//! Resampling of point clouds onto an `r x r` variance matrix.
//!
//! Each element `e` blends a K-nearest-neighbour fallback `u(e)` with a Gaussian
//! RBF over the points inside a fixed radius:
//!
//! ```text
//! value(e) = (phi(0) u(e) + sum phi(|e - p_i|) v_i) / (phi(0) + sum phi(|e - p_i|))
//! phi(d)   = exp(-d^2 / (2 sigma^2))
//! ```
//!
//! Distances are measured in grid units: a semantic distance `d` maps to
//! `d / d_max * (r - 1)`. Per-element sums always run in point-index order, so
//! the indexed path and the brute-force oracle agree bit for bit.

mod render;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::scalar::Scalar;
use crate::signals::PointCloud;

pub use render::{color_of, render, render_scatter, write_png, write_ppm, Image};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfConfig<T> {
    /// Elements per side.
    pub r: usize,
    /// Support radius in grid units.
    pub radius: T,
    pub sigma: T,
    /// Neighbours averaged for the fallback value.
    pub k: usize,
}

impl<T: Scalar> Default for RbfConfig<T> {
    fn default() -> Self {
        RbfConfig {
            r: 32,
            radius: T::of(32.0),
            sigma: T::of(10.0),
            k: 32,
        }
    }
}

impl<T: Scalar> RbfConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::invalid(format!("r must be >= 2, got {}", self.r)));
        }
        if !(self.radius > T::zero()) {
            return Err(Error::invalid("radius must be > 0"));
        }
        if !(self.sigma > T::zero()) {
            return Err(Error::invalid("sigma must be > 0"));
        }
        if self.k == 0 {
            return Err(Error::invalid("K must be >= 1"));
        }
        Ok(())
    }

    pub fn phi(&self, dist2: T) -> T {
        (-dist2 / (T::of(2.0) * self.sigma * self.sigma)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct VarianceMatrix<T> {
    pub model_id: String,
    pub position: String,
    pub r: usize,
    pub d_max: T,
    /// Row-major, `r * r` values; row index follows the first distance coordinate.
    pub values: Vec<T>,
}

impl<T: Scalar> VarianceMatrix<T> {
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.r + j]
    }

    /// Grid index of a semantic distance: `round(d / d_max * (r - 1))`, clamped.
    pub fn grid_index(&self, d: T) -> usize {
        let x = (d / self.d_max * T::of_usize(self.r - 1)).round();
        x.max(T::zero()).min(T::of_usize(self.r - 1)).to_usize().unwrap_or(0)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = io::read_json(path)?;
        if m.r < 2 || m.values.len() != m.r * m.r {
            return Err(Error::Data(format!(
                "{}: matrix needs r >= 2 and r*r values",
                path.display()
            )));
        }
        Ok(m)
    }
}

/// Point positions in grid units plus their values as offsets from `anchor`,
/// the first point's value. A constant cloud therefore interpolates exactly.
#[derive(Debug, Clone)]
pub(crate) struct GridCloud<T> {
    pub pos: Vec<[T; 2]>,
    pub val: Vec<T>,
    pub anchor: T,
    /// Whether point `p` sits on the same spot as its partner `p ^ 1`.
    coincident: Vec<bool>,
}

impl<T: Scalar> GridCloud<T> {
    pub fn new(cloud: &PointCloud<T>, r: usize) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if !(cloud.d_max > T::zero()) || !cloud.d_max.is_finite() {
            return Err(Error::invalid("d_max must be finite and > 0"));
        }
        let scale = T::of_usize(r - 1) / cloud.d_max;
        let anchor = cloud.points[0][2];
        let mut pos = Vec::with_capacity(cloud.len());
        let mut val = Vec::with_capacity(cloud.len());
        for p in &cloud.points {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data("non-finite point in cloud".into()));
            }
            pos.push([p[0] * scale, p[1] * scale]);
            val.push(p[2] - anchor);
        }
        let coincident = (0..pos.len())
            .map(|p| pos.get(p ^ 1).is_some_and(|q| *q == pos[p]))
            .collect();
        Ok(GridCloud {
            pos,
            val,
            anchor,
            coincident,
        })
    }

    pub fn dist2(&self, i: usize, e: [T; 2]) -> T {
        let dx = self.pos[i][0] - e[0];
        let dy = self.pos[i][1] - e[1];
        dx * dx + dy * dy
    }

    /// Tie-break rank of point `p` at element `e`: its index, except that a
    /// coincident partner pair swaps below the diagonal, so mirrored elements
    /// pick mirrored points. The map is its own inverse.
    pub fn tie_rank(&self, p: usize, e: [T; 2]) -> usize {
        if e[0] > e[1] && self.coincident[p] {
            p ^ 1
        } else {
            p
        }
    }

    /// Mean of the chosen neighbour values, summed in index order.
    pub fn mean_of(&self, mut chosen: Vec<usize>) -> T {
        chosen.sort_unstable();
        let n = T::of_usize(chosen.len());
        chosen.iter().map(|&i| self.val[i]).sum::<T>() / n
    }
}

fn by_distance<T: Scalar>(a: &(T, usize), b: &(T, usize)) -> std::cmp::Ordering {
    a.0.partial_cmp(&b.0)
        .expect("finite distances")
        .then(a.1.cmp(&b.1))
}

/// Fallback value at element `e`: mean of the K nearest points (grid units),
/// ties at the K-th distance going to the lower point index. Below the
/// diagonal the two points of a coincident partner pair trade places, which
/// keeps subtract-mode matrices antisymmetric.
pub fn knn_value<T: Scalar>(cloud: &PointCloud<T>, cfg: &RbfConfig<T>, e: [T; 2]) -> Result<T> {
    cfg.validate()?;
    let grid = GridCloud::new(cloud, cfg.r)?;
    Ok(grid.anchor + knn_select(&grid, cfg.k, e))
}

fn knn_select<T: Scalar>(grid: &GridCloud<T>, k: usize, e: [T; 2]) -> T {
    let n = grid.val.len();
    if k >= n {
        return grid.mean_of((0..n).collect());
    }
    let mut d: Vec<(T, usize)> = (0..n).map(|i| (grid.dist2(i, e), grid.tie_rank(i, e))).collect();
    d.select_nth_unstable_by(k - 1, by_distance);
    grid.mean_of(d[..k].iter().map(|&(_, rank)| grid.tie_rank(rank, e)).collect())
}

/// Uniform bucket grid over point positions with cells one radius wide.
struct Buckets {
    cells: Vec<Vec<usize>>,
    side: usize,
    cell: f64,
}

impl Buckets {
    fn new<T: Scalar>(grid: &GridCloud<T>, r: usize, radius: T) -> Self {
        const MAX_SIDE: usize = 4096;
        // Slightly wider than the radius so rounding in `T` cannot push an
        // in-radius point two cells away.
        let mut cell = radius.as_f64() * (1.0 + 1e-6);
        let mut side = (r as f64 / cell).ceil() as usize + 1;
        if side > MAX_SIDE {
            // Wider cells stay correct; they only admit more candidates.
            side = MAX_SIDE;
            cell = r as f64 / (MAX_SIDE - 1) as f64;
        }
        let mut cells = vec![Vec::new(); side * side];
        for (i, p) in grid.pos.iter().enumerate() {
            let (cx, cy) = (Self::coord(p[0].as_f64(), cell, side), Self::coord(p[1].as_f64(), cell, side));
            cells[cx * side + cy].push(i);
        }
        Buckets { cells, side, cell }
    }

    fn coord(x: f64, cell: f64, side: usize) -> usize {
        ((x / cell).floor().max(0.0) as usize).min(side - 1)
    }

    /// Indices of points in the 3x3 block of cells around `e`, unsorted.
    fn near(&self, e: [f64; 2], out: &mut Vec<usize>) {
        out.clear();
        let (cx, cy) = (Self::coord(e[0], self.cell, self.side), Self::coord(e[1], self.cell, self.side));
        for x in cx.saturating_sub(1)..=(cx + 1).min(self.side - 1) {
            for y in cy.saturating_sub(1)..=(cy + 1).min(self.side - 1) {
                out.extend_from_slice(&self.cells[x * self.side + y]);
            }
        }
    }
}

fn blend<T: Scalar>(anchor: T, fallback: T, weighted: T, weights: T) -> T {
    // phi(0) = 1
    anchor + (fallback + weighted) / (T::one() + weights)
}

/// Indexed, row-parallel interpolation.
pub fn interpolate<T: Scalar>(cloud: &PointCloud<T>, cfg: &RbfConfig<T>) -> Result<VarianceMatrix<T>> {
    cfg.validate()?;
    let grid = GridCloud::new(cloud, cfg.r)?;
    let r = cfg.r;
    let radius2 = cfg.radius * cfg.radius;
    // Points beyond the clamped grid can still fall inside the radius, so bucket
    // only when every point lies in [0, r-1]; otherwise scan all.
    let in_grid = grid
        .pos
        .iter()
        .all(|p| p.iter().all(|&x| x >= T::zero() && x <= T::of_usize(r - 1)));
    let buckets = in_grid.then(|| Buckets::new(&grid, r, cfg.radius));

    let mut values = vec![T::zero(); r * r];
    values.par_chunks_mut(r).enumerate().for_each(|(i, row)| {
        let mut near = Vec::new();
        for (j, out) in row.iter_mut().enumerate() {
            let e = [T::of_usize(i), T::of_usize(j)];
            match &buckets {
                Some(b) => {
                    b.near([i as f64, j as f64], &mut near);
                    near.sort_unstable();
                }
                None => {
                    near.clear();
                    near.extend(0..grid.val.len());
                }
            }
            let (mut num, mut den) = (T::zero(), T::zero());
            for &p in &near {
                let d2 = grid.dist2(p, e);
                if d2 <= radius2 {
                    let w = cfg.phi(d2);
                    num = num + w * grid.val[p];
                    den = den + w;
                }
            }
            *out = blend(grid.anchor, knn_select(&grid, cfg.k, e), num, den);
        }
    });
    Ok(VarianceMatrix {
        model_id: cloud.model_id.clone(),
        position: cloud.position.clone(),
        r,
        d_max: cloud.d_max,
        values,
    })
}

/// Reference interpolation: a plain double loop over elements and points, with
/// the K nearest found by a full sort.
pub fn interpolate_bruteforce<T: Scalar>(
    cloud: &PointCloud<T>,
    cfg: &RbfConfig<T>,
) -> Result<VarianceMatrix<T>> {
    let (values, _) = bruteforce_terms(cloud, cfg)?;
    Ok(VarianceMatrix {
        model_id: cloud.model_id.clone(),
        position: cloud.position.clone(),
        r: cfg.r,
        d_max: cloud.d_max,
        values,
    })
}

/// The fallback-free form: the weighted mean of points inside the radius, or
/// `None` where the circle is empty.
pub fn interpolate_without_fallback<T: Scalar>(
    cloud: &PointCloud<T>,
    cfg: &RbfConfig<T>,
) -> Result<Vec<Option<T>>> {
    Ok(bruteforce_terms(cloud, cfg)?.1)
}

fn bruteforce_terms<T: Scalar>(
    cloud: &PointCloud<T>,
    cfg: &RbfConfig<T>,
) -> Result<(Vec<T>, Vec<Option<T>>)> {
    cfg.validate()?;
    let grid = GridCloud::new(cloud, cfg.r)?;
    let radius2 = cfg.radius * cfg.radius;
    let mut blended = Vec::with_capacity(cfg.r * cfg.r);
    let mut plain = Vec::with_capacity(cfg.r * cfg.r);
    for i in 0..cfg.r {
        for j in 0..cfg.r {
            let e = [T::of_usize(i), T::of_usize(j)];
            let (mut num, mut den) = (T::zero(), T::zero());
            for p in 0..grid.val.len() {
                let d2 = grid.dist2(p, e);
                if d2 <= radius2 {
                    let w = cfg.phi(d2);
                    num = num + w * grid.val[p];
                    den = den + w;
                }
            }
            let mut ranked: Vec<(T, usize)> = (0..grid.val.len())
                .map(|p| (grid.dist2(p, e), grid.tie_rank(p, e)))
                .collect();
            ranked.sort_by(by_distance);
            ranked.truncate(cfg.k);
            let u = grid.mean_of(ranked.into_iter().map(|(_, rank)| grid.tie_rank(rank, e)).collect());
            blended.push(blend(grid.anchor, u, num, den));
            plain.push((den > T::zero()).then(|| grid.anchor + num / den));
        }
    }
    Ok((blended, plain))
}

/// Interpolates every cloud, in input order.
pub fn interpolate_all<T: Scalar>(
    clouds: &[PointCloud<T>],
    cfg: &RbfConfig<T>,
) -> Result<Vec<VarianceMatrix<T>>> {
    clouds.iter().map(|c| interpolate(c, cfg)).collect()
}
