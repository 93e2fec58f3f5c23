//! Basin-of-attraction rasters for 2-D problems.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_to_terminal, OptimizerConfig, TerminalStatus};
use crate::problems::{PointZ, ProblemInstance};
use crate::{seed, Error, Result};

/// Label of cells whose run did not end near any attractor.
pub const UNRESOLVED: i32 = -1;
pub const DEFAULT_MATCH_RADIUS: f64 = 1e-2;
pub const DEFAULT_BUDGET: usize = 200_000;

/// `nx x ny` cells over `[x_min, x_max] x [y_min, y_max]`, sampled at their
/// centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        let g = Self {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(lo, hi, lo, hi, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::Config(format!(
                "grid bounds [{}, {}] x [{}, {}] are empty or not finite",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config("grid needs at least one cell per axis".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x_min + (i as f64 + 0.5) * self.dx(),
            self.y_min + (j as f64 + 0.5) * self.dy(),
        )
    }

    /// Cell containing `(x, y)`, if any.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.x_min) / self.dx()).floor();
        let fj = ((y - self.y_min) / self.dy()).floor();
        let ok = |f: f64, n: usize| f >= 0.0 && f < n as f64;
        (ok(fi, self.nx) && ok(fj, self.ny)).then_some((fi as usize, fj as usize))
    }

    /// Row-major index with `x` varying fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasinRaster {
    pub grid: GridSpec,
    /// One label per cell, indexed by [`GridSpec::index`]: the position of
    /// the matched attractor, or [`UNRESOLVED`].
    pub labels: Vec<i32>,
    pub attractors: Vec<PointZ>,
    pub match_radius: f64,
    pub unresolved_id: i32,
    pub max_iters: usize,
}

impl BasinRaster {
    pub fn label_at(&self, i: usize, j: usize) -> i32 {
        self.labels[self.grid.index(i, j)]
    }

    pub fn count(&self, label: i32) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// `x,y,label` rows, one per cell in index order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,label")?;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let (x, y) = self.grid.center(i, j);
                writeln!(w, "{x},{y},{}", self.label_at(i, j))?;
            }
        }
        Ok(())
    }

    /// Binary PPM, `y` increasing upwards; unresolved cells are black.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        const PALETTE: [[u8; 3]; 6] = [
            [31, 119, 180],
            [255, 127, 14],
            [44, 160, 44],
            [214, 39, 40],
            [148, 103, 189],
            [140, 86, 75],
        ];
        write!(w, "P6\n{} {}\n255\n", self.grid.nx, self.grid.ny)?;
        let mut buf = Vec::with_capacity(self.labels.len() * 3);
        for j in (0..self.grid.ny).rev() {
            for i in 0..self.grid.nx {
                let label = self.label_at(i, j);
                let rgb = if label < 0 {
                    [0, 0, 0]
                } else {
                    PALETTE[label as usize % PALETTE.len()]
                };
                buf.extend_from_slice(&rgb);
            }
        }
        w.write_all(&buf)
    }
}

/// Run `cfg` from every cell center and label the cell with the first
/// attractor within `match_radius` of the terminal iterate.
///
/// Cell `c` runs with seed `derive(cfg.seed, c)`, so the raster does not
/// depend on scheduling.
pub fn basin_raster(
    problem: &ProblemInstance,
    cfg: &OptimizerConfig,
    grid: &GridSpec,
    attractors: &[PointZ],
    match_radius: f64,
) -> Result<BasinRaster> {
    if problem.k() != 1 || problem.d() != 1 {
        return Err(Error::Shape(format!(
            "basin rasters need a 2-D problem, '{}' has blocks ({}, {})",
            problem.name(),
            problem.k(),
            problem.d()
        )));
    }
    grid.validate()?;
    cfg.validate()?;
    if !(match_radius > 0.0) {
        return Err(Error::Config(format!(
            "match_radius must be positive, got {match_radius}"
        )));
    }
    for (a, p) in attractors.iter().enumerate() {
        problem.check_shape(p)?;
        for (b, q) in attractors.iter().enumerate().skip(a + 1) {
            if p.distance(q) <= 2.0 * match_radius {
                return Err(Error::Config(format!(
                    "attractors {a} and {b} are within 2 * match_radius of each other"
                )));
            }
        }
    }
    let labels = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % grid.nx, idx / grid.nx);
            let (x, y) = grid.center(i, j);
            let cell_cfg = OptimizerConfig {
                seed: seed::derive(cfg.seed, idx as u64),
                ..cfg.clone()
            };
            let out = run_to_terminal(problem, PointZ::new(vec![x], vec![y]), &cell_cfg)?;
            if out.status == TerminalStatus::Diverged {
                return Ok(UNRESOLVED);
            }
            Ok(attractors
                .iter()
                .position(|a| a.distance(&out.z) <= match_radius)
                .map_or(UNRESOLVED, |p| p as i32))
        })
        .collect::<Result<Vec<i32>>>()?;
    Ok(BasinRaster {
        grid: grid.clone(),
        labels,
        attractors: attractors.to_vec(),
        match_radius,
        unresolved_id: UNRESOLVED,
        max_iters: cfg.max_iters,
    })
}
