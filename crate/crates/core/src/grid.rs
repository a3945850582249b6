//! Uniform periodic grids on the unit torus and the discrete calculus used
//! throughout the crate.
//!
//! Cells are indexed with axis 1 fastest. Cell `i` along an axis sits at
//! `x = i * h`, so the sample set always contains `x = 0` and, for even `n`,
//! `x = 1/2`.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n_per_axis: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Grid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n_per_axis < 8 {
            return Err(Error::Grid(format!(
                "need at least 8 cells per axis, got {n_per_axis}"
            )));
        }
        Ok(Self { dim, n: n_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Total number of cells, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.n, idx / self.n]
        }
    }

    pub fn flat_index(&self, multi: [usize; 2]) -> usize {
        if self.dim == 1 {
            multi[0]
        } else {
            multi[0] + self.n * multi[1]
        }
    }

    pub fn point(&self, idx: usize) -> Point {
        let m = self.multi_index(idx);
        let h = self.h();
        [m[0] as f64 * h, m[1] as f64 * h]
    }

    /// Periodic neighbour of `idx` shifted by `offset` cells along `axis`.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let n = self.n as isize;
        let mut m = self.multi_index(idx);
        m[axis] = (m[axis] as isize + offset).rem_euclid(n) as usize;
        self.flat_index(m)
    }

    /// Wrapped Euclidean distance on the torus.
    pub fn torus_distance(&self, x: &Point, y: &Point) -> f64 {
        (0..self.dim)
            .map(|a| {
                let d = (x[a] - y[a]).rem_euclid(1.0);
                let w = d.min(1.0 - d);
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn ensure_same(&self, other: &TorusGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: format!("{self:?}"),
                right: format!("{other:?}"),
            })
        }
    }
}

/// Cell-centred scalar samples on a [`TorusGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { cell, value });
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values produced by finite arithmetic on
    /// already-validated fields.
    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmin(&self) -> usize {
        argext(&self.values, |a, b| a < b)
    }

    pub fn argmax(&self) -> usize {
        argext(&self.values, |a, b| a > b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Fails with the first nonpositive cell, if any.
    pub fn ensure_positive(&self) -> Result<()> {
        match self.values.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            Some((cell, &value)) => Err(Error::NonPositive { cell, value }),
            None => Ok(()),
        }
    }

    /// Cyclic shift by `k` cells along `axis`: `out[i] = self[i - k]`.
    pub fn roll(&self, axis: usize, k: isize) -> Field {
        let g = self.grid;
        Field::from_raw(
            g,
            (0..g.len()).map(|i| self.values[g.shift(i, axis, -k)]).collect(),
        )
    }
}

fn argext(values: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}

/// Where the components of a [`VectorField`] live.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    /// Sampled at cell centres.
    Cell,
    /// Component `a` at index `i` sits on the face between cell `i` and its
    /// `+1` neighbour along axis `a`.
    Face,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    placement: Placement,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: TorusGrid, placement: Placement, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::Grid(format!(
                "vector field has {} components on a {}-d grid",
                components.len(),
                grid.dim()
            )));
        }
        for c in &components {
            Field::new(grid, c.clone())?;
        }
        Ok(Self {
            grid,
            placement,
            components,
        })
    }

    pub(crate) fn from_raw(grid: TorusGrid, placement: Placement, components: Vec<Vec<f64>>) -> Self {
        Self {
            grid,
            placement,
            components,
        }
    }

    pub fn zeros(grid: TorusGrid, placement: Placement) -> Self {
        Self::from_raw(grid, placement, vec![vec![0.0; grid.len()]; grid.dim()])
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Pointwise scaling by a scalar field.
    pub fn scale(&self, s: &Field) -> VectorField {
        let comps = self
            .components
            .iter()
            .map(|c| c.iter().zip(s.values()).map(|(a, b)| a * b).collect())
            .collect();
        VectorField::from_raw(self.grid, self.placement, comps)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> VectorField {
        let comps = self
            .components
            .iter()
            .map(|c| c.iter().map(|&v| f(v)).collect())
            .collect();
        VectorField::from_raw(self.grid, self.placement, comps)
    }

    /// Pointwise Euclidean norm.
    pub fn magnitude(&self) -> Field {
        let g = self.grid;
        Field::from_raw(
            g,
            (0..g.len())
                .map(|i| {
                    self.components
                        .iter()
                        .map(|c| c[i] * c[i])
                        .sum::<f64>()
                        .sqrt()
                })
                .collect(),
        )
    }

    pub fn dot(&self, other: &VectorField) -> Field {
        let g = self.grid;
        Field::from_raw(
            g,
            (0..g.len())
                .map(|i| {
                    self.components
                        .iter()
                        .zip(&other.components)
                        .map(|(a, b)| a[i] * b[i])
                        .sum()
                })
                .collect(),
        )
    }

    pub fn sup_norm(&self) -> f64 {
        self.magnitude().max()
    }
}

/// Second-order central difference per axis, periodic wrap.
pub fn gradient(f: &Field) -> VectorField {
    let g = *f.grid();
    let inv = 0.5 / g.h();
    let v = f.values();
    let comps = (0..g.dim())
        .map(|a| {
            (0..g.len())
                .map(|i| (v[g.shift(i, a, 1)] - v[g.shift(i, a, -1)]) * inv)
                .collect()
        })
        .collect();
    VectorField::from_raw(g, Placement::Cell, comps)
}

/// Compact forward difference placed on the `+1` faces.
pub fn face_gradient(f: &Field) -> VectorField {
    let g = *f.grid();
    let inv = 1.0 / g.h();
    let v = f.values();
    let comps = (0..g.dim())
        .map(|a| {
            (0..g.len())
                .map(|i| (v[g.shift(i, a, 1)] - v[i]) * inv)
                .collect()
        })
        .collect();
    VectorField::from_raw(g, Placement::Face, comps)
}

/// Discrete divergence, the negative adjoint of the matching gradient:
/// central differences for cell-centred fields, compact backward
/// differences for face-centred ones. Both telescope under periodicity.
pub fn divergence(g: &VectorField) -> Field {
    let grid = *g.grid();
    let h = grid.h();
    let mut out = vec![0.0; grid.len()];
    for (a, c) in g.components().iter().enumerate() {
        match g.placement() {
            Placement::Cell => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += (c[grid.shift(i, a, 1)] - c[grid.shift(i, a, -1)]) * (0.5 / h);
                }
            }
            Placement::Face => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += (c[i] - c[grid.shift(i, a, -1)]) / h;
                }
            }
        }
    }
    Field::from_raw(grid, out)
}

/// Midpoint rule `h^dim * sum(values)`.
pub fn integrate(f: &Field) -> f64 {
    f.grid().cell_volume() * f.values().iter().sum::<f64>()
}

pub fn sup_norm(f: &Field) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Time-indexed sequence of fields on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    grid: TorusGrid,
    times: Vec<f64>,
    frames: Vec<Field>,
}

impl Trajectory {
    pub fn new(grid: TorusGrid) -> Self {
        Self {
            grid,
            times: Vec::new(),
            frames: Vec::new(),
        }
    }

    pub fn from_frames(grid: TorusGrid, times: Vec<f64>, frames: Vec<Field>) -> Result<Self> {
        let mut tr = Self::new(grid);
        if times.len() != frames.len() {
            return Err(Error::Grid(format!(
                "{} times for {} frames",
                times.len(),
                frames.len()
            )));
        }
        for (t, f) in times.into_iter().zip(frames) {
            tr.push(t, f)?;
        }
        Ok(tr)
    }

    pub fn push(&mut self, t: f64, frame: Field) -> Result<()> {
        self.grid.ensure_same(frame.grid())?;
        match self.times.last() {
            None if t != 0.0 => {
                return Err(Error::Grid(format!("trajectory must start at t = 0, got {t}")))
            }
            Some(&last) if t <= last => {
                return Err(Error::Grid(format!(
                    "times must increase strictly: {t} after {last}"
                )))
            }
            _ => {}
        }
        self.times.push(t);
        self.frames.push(frame);
        Ok(())
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[Field] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&Field> {
        self.frames.last()
    }

    pub fn min(&self) -> f64 {
        self.frames.iter().map(Field::min).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.frames
            .iter()
            .map(Field::max)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Frames sharing a time lattice with `other`, differenced pointwise.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.frames
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| sup_norm(&a.zip_map(b, |x, y| x - y)))
            .fold(0.0, f64::max)
    }
}

pub fn sup_norm_traj(tr: &Trajectory) -> f64 {
    tr.frames().iter().map(sup_norm).fold(0.0, f64::max)
}

fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `x1[,x2],value` rows with 17 significant digits. Optional comment
/// lines are emitted first, prefixed with `#`.
pub fn write_snapshot<W: Write>(field: &Field, comments: &[String], mut out: W) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let g = field.grid();
    let mut w = csv::Writer::from_writer(out);
    if g.dim() == 1 {
        w.write_record(["x1", "value"])?;
    } else {
        w.write_record(["x1", "x2", "value"])?;
    }
    for (i, &v) in field.values().iter().enumerate() {
        let p = g.point(i);
        let mut rec = vec![fmt_full(p[0])];
        if g.dim() == 2 {
            rec.push(fmt_full(p[1]));
        }
        rec.push(fmt_full(v));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`] onto `grid`. Rows must come
/// in the grid's cell order.
pub fn read_snapshot<R: Read>(grid: TorusGrid, input: R) -> Result<Field> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.len() != grid.dim() + 1 || headers.get(grid.dim()) != Some("value") {
        return Err(Error::Grid(format!(
            "snapshot header {:?} does not match a {}-d grid",
            headers.iter().collect::<Vec<_>>(),
            grid.dim()
        )));
    }
    let tol = 1e-9;
    let mut values = Vec::with_capacity(grid.len());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i >= grid.len() {
            return Err(Error::Grid(format!("snapshot has more than {} rows", grid.len())));
        }
        let expect = grid.point(i);
        for a in 0..grid.dim() {
            let x: f64 = parse_num(&rec[a], i)?;
            if (x - expect[a]).abs() > tol {
                return Err(Error::Grid(format!(
                    "row {i}: coordinate {x} does not match cell at {}",
                    expect[a]
                )));
            }
        }
        values.push(parse_num(&rec[grid.dim()], i)?);
    }
    Field::new(grid, values)
}

fn parse_num(s: &str, row: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Grid(format!("row {row}: cannot parse number {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn g1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(TorusGrid::new(3, 16).is_err());
        assert!(TorusGrid::new(1, 4).is_err());
        let g = TorusGrid::new(2, 16).unwrap();
        assert_eq!(g.len(), 256);
        assert_eq!(g.h() * 16.0, 1.0);
    }

    #[test]
    fn torus_distance_wraps() {
        let g = g1(8);
        assert!((g.torus_distance(&[0.1, 0.0], &[0.9, 0.0]) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let f = Field::constant(TorusGrid::new(2, 8).unwrap(), 3.5);
        let gr = gradient(&f);
        assert!(gr.components().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_sine_is_second_order() {
        let g = g1(64);
        let f = Field::from_fn(g, |p| (2.0 * PI * p[0]).sin()).unwrap();
        let gr = gradient(&f);
        let err = (0..g.len())
            .map(|i| (gr.component(0)[i] - 2.0 * PI * (2.0 * PI * g.point(i)[0]).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 2e-2, "err = {err}");
    }

    #[test]
    fn gradient_along_unused_axis_vanishes() {
        let g = TorusGrid::new(2, 16).unwrap();
        let f = Field::from_fn(g, |p| (2.0 * PI * p[0]).cos()).unwrap();
        assert!(gradient(&f).component(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_of_zero_and_total_flux() {
        let g = TorusGrid::new(2, 12).unwrap();
        assert!(divergence(&VectorField::zeros(g, Placement::Cell))
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let comps = vec![
            (0..g.len()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect(),
            (0..g.len()).map(|i| ((i * 104729) % 17) as f64 * 0.3).collect(),
        ];
        for placement in [Placement::Cell, Placement::Face] {
            let v = VectorField::new(g, placement, comps.clone()).unwrap();
            assert!(integrate(&divergence(&v)).abs() <= 1e-13);
        }
    }

    // The wide central Laplacian has symbol -(sin(2 pi h)/h)^2, so at n = 64
    // its error against -4 pi^2 sin is 4 pi^2 - (64 sin(pi/32))^2 = 0.12670.
    #[test]
    fn central_laplacian_matches_its_symbol() {
        let g = g1(64);
        let s = Field::from_fn(g, |p| (2.0 * PI * p[0]).sin()).unwrap();
        let lap = divergence(&gradient(&s));
        let symbol = (64.0 * (PI / 32.0).sin()).powi(2);
        let expected_err = 4.0 * PI * PI - symbol;
        let err = (0..g.len())
            .map(|i| (lap.values()[i] + 4.0 * PI * PI * s.values()[i]).abs())
            .fold(0.0, f64::max);
        assert!((err - expected_err).abs() < 1e-10, "{err} vs {expected_err}");
        assert!((expected_err - 0.1267).abs() < 1e-4);
        // Compact pairing stays inside the 0.1 budget.
        let compact = divergence(&face_gradient(&s));
        let err_c = (0..g.len())
            .map(|i| (compact.values()[i] + 4.0 * PI * PI * s.values()[i]).abs())
            .fold(0.0, f64::max);
        assert!(err_c <= 0.1, "compact err = {err_c}");
    }

    #[test]
    fn quadrature_examples() {
        let g = g1(64);
        assert!((integrate(&Field::constant(g, 1.0)) - 1.0).abs() < 1e-15);
        let c = Field::from_fn(g, |p| (2.0 * PI * p[0]).cos()).unwrap();
        assert!(integrate(&c).abs() <= 1e-14);
        // I0(1) by a 4096-point midpoint sum, which is exact to roundoff.
        let fine = Field::from_fn(g1(4096), |p| (-(2.0 * PI * p[0]).cos()).exp()).unwrap();
        let oracle = integrate(&fine);
        assert!((oracle - 1.266_065_877_752_008_4).abs() < 1e-13);
        let f = Field::from_fn(g1(128), |p| (-(2.0 * PI * p[0]).cos()).exp()).unwrap();
        assert!((integrate(&f) - 1.26607).abs() <= 1e-5);
        assert!((integrate(&f) - oracle).abs() <= 1e-12);
    }

    #[test]
    fn sup_norm_examples() {
        let g = g1(16);
        assert_eq!(sup_norm(&Field::constant(g, -3.0)), 3.0);
        let f = Field::from_fn(g, |p| 1.0 + 0.5 * (2.0 * PI * p[0]).cos()).unwrap();
        assert!((sup_norm(&f) - 1.5).abs() <= 1e-14);
        let tr = Trajectory::from_frames(
            g,
            vec![0.0, 1.0],
            vec![Field::constant(g, 1.0), Field::constant(g, -2.0)],
        )
        .unwrap();
        assert_eq!(sup_norm_traj(&tr), 2.0);
    }

    #[test]
    fn trajectory_rejects_bad_times() {
        let g = g1(8);
        let mut tr = Trajectory::new(g);
        assert!(tr.push(0.5, Field::zeros(g)).is_err());
        tr.push(0.0, Field::zeros(g)).unwrap();
        assert!(tr.push(0.0, Field::zeros(g)).is_err());
        assert!(tr.push(1.0, Field::zeros(g1(16))).is_err());
    }

    #[test]
    fn field_rejects_nan() {
        assert!(matches!(
            Field::new(g1(8), vec![0.0, 1.0, f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]),
            Err(Error::NonFinite { cell: 2, .. })
        ));
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = Field::from_fn(g, |p| (p[0] * 3.1).sin() + p[1] / 3.0).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&f, &["seed=7".to_string()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed=7\nx1,x2,value\n"));
        let back = read_snapshot(g, buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    fn field_strategy(g: TorusGrid) -> impl Strategy<Value = Field> {
        proptest::collection::vec(-10.0f64..10.0, g.len())
            .prop_map(move |v| Field::new(g, v).unwrap())
    }

    proptest! {
        #[test]
        fn gradient_commutes_with_shifts(f in field_strategy(TorusGrid::new(2, 8).unwrap()), k in -9isize..9) {
            for axis in 0..2 {
                let a = gradient(&f.roll(axis, k));
                let b = gradient(&f);
                for c in 0..2 {
                    let shifted = Field::from_raw(*f.grid(), b.component(c).to_vec()).roll(axis, k);
                    prop_assert_eq!(a.component(c), shifted.values());
                }
            }
        }

        #[test]
        fn discrete_integration_by_parts(
            u in field_strategy(TorusGrid::new(2, 8).unwrap()),
            g0 in field_strategy(TorusGrid::new(2, 8).unwrap()),
            g1f in field_strategy(TorusGrid::new(2, 8).unwrap()),
        ) {
            let grid = *u.grid();
            let comps = vec![g0.values().to_vec(), g1f.values().to_vec()];
            let v = VectorField::new(grid, Placement::Cell, comps.clone()).unwrap();
            let lhs = integrate(&u.zip_map(&divergence(&v), |a, b| a * b));
            let rhs = -integrate(&gradient(&u).dot(&v));
            prop_assert!((lhs - rhs).abs() <= 1e-12, "{} vs {}", lhs, rhs);
            let vf = VectorField::new(grid, Placement::Face, comps).unwrap();
            let lhs = integrate(&u.zip_map(&divergence(&vf), |a, b| a * b));
            let rhs = -integrate(&face_gradient(&u).dot(&vf));
            prop_assert!((lhs - rhs).abs() <= 1e-12, "{} vs {}", lhs, rhs);
        }

        #[test]
        fn fourier_modes_integrate_to_zero(k1 in 0i32..16, k2 in 0i32..16, n in 32usize..40) {
            prop_assume!(k1 != 0 || k2 != 0);
            let g = TorusGrid::new(2, n).unwrap();
            let re = Field::from_fn(g, |p| (2.0 * PI * (k1 as f64 * p[0] + k2 as f64 * p[1])).cos()).unwrap();
            let im = Field::from_fn(g, |p| (2.0 * PI * (k1 as f64 * p[0] + k2 as f64 * p[1])).sin()).unwrap();
            prop_assert!(integrate(&re).hypot(integrate(&im)) <= 1e-13);
        }
    }
}
