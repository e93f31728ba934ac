//! Functions sampled on a uniform box grid, interpolated inside the box and
//! prescribed by an exterior datum outside it.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{norm, Frame, Point};

/// Exterior datum on the complement of the grid box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exterior {
    Constant { value: f64 },
    /// `2 |2x|^eta - 1`, optionally capped from above.
    Envelope { eta: f64, cap: Option<f64> },
    /// `left` for `x_1 < 0`, `right` otherwise.
    Step { left: f64, right: f64 },
    Affine { slope: Point, offset: f64 },
    /// `lambda * (inner(frame(x)) - shift)`.
    Transformed { inner: Box<Exterior>, lambda: f64, frame: Frame, shift: f64 },
    /// `values[l]` on the shell `2^l <= |x| < 2^{l+1}` (and `values[0]` for
    /// `|x| < 1`), `outer` beyond the table.
    Shells { values: Vec<f64>, outer: f64 },
}

impl Exterior {
    pub fn eval(&self, x: &Point, n: usize) -> f64 {
        match self {
            Exterior::Constant { value } => *value,
            Exterior::Envelope { eta, cap } => {
                let v = envelope(norm(x, n), *eta);
                cap.map_or(v, |c| v.min(c))
            }
            Exterior::Step { left, right } => {
                if x[0] < 0.0 {
                    *left
                } else {
                    *right
                }
            }
            Exterior::Affine { slope, offset } => {
                let dot = if n == 1 { slope[0] * x[0] } else { slope[0] * x[0] + slope[1] * x[1] };
                dot + offset
            }
            Exterior::Transformed { inner, lambda, frame, shift } => lambda * (inner.eval(&frame.apply(x), n) - shift),
            Exterior::Shells { values, outer } => {
                let r = norm(x, n);
                let l = if r < 1.0 { 0 } else { r.log2().floor() as usize };
                values.get(l).copied().unwrap_or(*outer)
            }
        }
    }

    /// Radii `|x|` across which the datum jumps.
    pub fn jump_radii(&self) -> Vec<f64> {
        match self {
            Exterior::Shells { values, .. } => (1..=values.len()).map(|l| 2f64.powi(l as i32)).collect(),
            _ => Vec::new(),
        }
    }

    /// Polynomial growth rate at infinity.
    pub fn growth_exponent(&self) -> f64 {
        match self {
            Exterior::Constant { .. } | Exterior::Step { .. } | Exterior::Shells { .. } => 0.0,
            Exterior::Envelope { eta, cap } => {
                if cap.is_some() {
                    0.0
                } else {
                    *eta
                }
            }
            Exterior::Affine { slope, .. } => {
                if slope[0] != 0.0 || slope[1] != 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Exterior::Transformed { inner, .. } => inner.growth_exponent(),
        }
    }

    /// Bound `|e(x)| <= c0 + c1 |x|^g` used for tail estimates.
    pub fn growth_bound(&self) -> (f64, f64) {
        match self {
            Exterior::Constant { value } => (value.abs(), 0.0),
            Exterior::Step { left, right } => (left.abs().max(right.abs()), 0.0),
            Exterior::Shells { values, outer } => (values.iter().fold(outer.abs(), |m, v| m.max(v.abs())), 0.0),
            Exterior::Envelope { eta, cap } => match cap {
                Some(c) => (c.abs().max(1.0), 0.0),
                None => (1.0, 2.0 * 2f64.powf(*eta)),
            },
            Exterior::Affine { slope, offset } => (offset.abs(), slope[0].hypot(slope[1])),
            Exterior::Transformed { inner, lambda, frame, shift } => {
                let (c0, c1) = inner.growth_bound();
                let g = inner.growth_exponent();
                let sh = frame.shift[0].hypot(frame.shift[1]);
                // |frame(x)|^g <= (s|x| + |shift|)^g <= 2^g (s^g |x|^g + |shift|^g)
                let c0n = c0 + c1 * 2f64.powf(g) * sh.powf(g) + shift.abs();
                let c1n = c1 * 2f64.powf(g) * frame.scale.powf(g);
                (lambda.abs() * c0n, lambda.abs() * c1n)
            }
        }
    }
}

/// `2 |2 r|^eta - 1` evaluated without cancellation for small `eta`.
pub fn envelope(r: f64, eta: f64) -> f64 {
    if r == 0.0 {
        return -1.0;
    }
    1.0 + 2.0 * (eta * (2.0 * r).ln()).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    Linear,
    Cubic,
}

/// Uniform grid on an axis-aligned box with spacing `h` on every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub lo: Point,
    pub h: f64,
    pub counts: [usize; 2],
}

impl Grid {
    /// Symmetric box `[-half_width, half_width]^dim` with `nodes` nodes per axis.
    pub fn centered(dim: usize, half_width: f64, nodes: usize) -> Result<Self> {
        if nodes < 4 {
            return Err(Error::InvalidParams("grid needs at least 4 nodes per axis".into()));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidParams("grid half width must be positive".into()));
        }
        let h = 2.0 * half_width / (nodes - 1) as f64;
        let counts = if dim == 1 { [nodes, 1] } else { [nodes, nodes] };
        Ok(Self { dim, lo: [-half_width, if dim == 1 { 0.0 } else { -half_width }], h, counts })
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hi(&self) -> Point {
        [
            self.lo[0] + self.h * (self.counts[0] - 1) as f64,
            self.lo[1] + self.h * (self.counts[1].max(1) - 1) as f64,
        ]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.counts[0] * j
    }

    pub fn node(&self, k: usize) -> Point {
        let i = k % self.counts[0];
        let j = k / self.counts[0];
        [self.lo[0] + self.h * i as f64, if self.dim == 1 { 0.0 } else { self.lo[1] + self.h * j as f64 }]
    }

    /// True for nodes on the box boundary.
    pub fn is_boundary(&self, k: usize) -> bool {
        let i = k % self.counts[0];
        let j = k / self.counts[0];
        let edge0 = i == 0 || i + 1 == self.counts[0];
        if self.dim == 1 {
            edge0
        } else {
            edge0 || j == 0 || j + 1 == self.counts[1]
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        let hi = self.hi();
        let ok0 = x[0] >= self.lo[0] && x[0] <= hi[0];
        if self.dim == 1 {
            ok0
        } else {
            ok0 && x[1] >= self.lo[1] && x[1] <= hi[1]
        }
    }

    /// Distance from an interior point to the box boundary (negative outside).
    pub fn margin(&self, x: &Point) -> f64 {
        let hi = self.hi();
        let m0 = (x[0] - self.lo[0]).min(hi[0] - x[0]);
        if self.dim == 1 {
            m0
        } else {
            m0.min(x[1] - self.lo[1]).min(hi[1] - x[1])
        }
    }

    /// Largest coordinate magnitude of the box.
    pub fn extent(&self) -> f64 {
        let hi = self.hi();
        let e = self.lo[0].abs().max(hi[0].abs());
        if self.dim == 1 {
            e
        } else {
            e.max(self.lo[1].abs()).max(hi[1].abs())
        }
    }

    /// Cell index and local coordinate along axis `a`, clamped to the box.
    #[inline]
    pub fn locate(&self, a: usize, x: f64) -> (usize, f64) {
        let z = (x - self.lo[a]) / self.h;
        let last = self.counts[a] - 2;
        let c = (z.floor().max(0.0) as usize).min(last);
        (c, z - c as f64)
    }
}

/// Sampled function: node values, piecewise-polynomial interpolant, exterior.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    exterior: Exterior,
    interp: Interp,
    /// Per-cell power-basis coefficients in local coordinates:
    /// 4 per cell in 1D, 16 per cell (`a[k + 4 l]`) in 2D.
    coeffs: Vec<f64>,
    sup_bound: Option<f64>,
}

impl GridFunction {
    pub fn from_values(grid: Grid, values: Vec<f64>, exterior: Exterior, interp: Interp) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParams(format!(
                "expected {} values for the grid, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("grid values must be finite".into()));
        }
        if grid.counts[0] < 2 || (grid.dim == 2 && grid.counts[1] < 2) {
            return Err(Error::InvalidParams("grid needs at least two nodes per axis".into()));
        }
        let coeffs = build_coeffs(&grid, &values, interp);
        Ok(Self { grid, values, exterior, interp, coeffs, sup_bound: None })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&Point) -> f64, exterior: Exterior, interp: Interp) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(&grid.node(k))).collect();
        Self::from_values(grid, values, exterior, interp)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exterior(&self) -> &Exterior {
        &self.exterior
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Declared global bound on `|u|`, if any.
    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn with_sup_bound(mut self, b: f64) -> Self {
        self.sup_bound = Some(b);
        self
    }

    pub fn with_exterior(mut self, e: Exterior) -> Self {
        self.exterior = e;
        self
    }

    /// Largest node magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[inline]
    pub fn cell1(&self, c: usize) -> &[f64] {
        &self.coeffs[4 * c..4 * c + 4]
    }

    #[inline]
    pub fn cell2(&self, c0: usize, c1: usize) -> &[f64] {
        let k = c0 + (self.grid.counts[0] - 1) * c1;
        &self.coeffs[16 * k..16 * k + 16]
    }

    /// Value of the interpolant inside the box or the exterior outside.
    pub fn eval(&self, x: &Point) -> f64 {
        if self.grid.contains(x) {
            self.eval_inside(x)
        } else {
            self.exterior.eval(x, self.grid.dim)
        }
    }

    /// Interpolant value; `x` is clamped into the box.
    #[inline]
    pub fn eval_inside(&self, x: &Point) -> f64 {
        let (c0, t0) = self.grid.locate(0, x[0]);
        if self.grid.dim == 1 {
            horner(self.cell1(c0), t0)
        } else {
            let (c1, t1) = self.grid.locate(1, x[1]);
            eval_bicubic(self.cell2(c0, c1), t0, t1)
        }
    }

    /// Exact image `v(x) = lambda (u(mu x + x0) - shift)` on the preimage grid.
    ///
    /// Node values and cell polynomials are mapped without resampling, so the
    /// interpolant of the image is the image of the interpolant.
    pub fn affine_image(&self, lambda: f64, mu: f64, x0: Point, shift: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite() && lambda.is_finite() && lambda != 0.0) {
            return Err(Error::DegenerateScaling);
        }
        let g = &self.grid;
        let lo = [(g.lo[0] - x0[0]) / mu, if g.dim == 1 { 0.0 } else { (g.lo[1] - x0[1]) / mu }];
        let grid = Grid { dim: g.dim, lo, h: g.h / mu, counts: g.counts };
        let values = self.values.iter().map(|v| lambda * (v - shift)).collect();
        let stride = if g.dim == 1 { 4 } else { 16 };
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| if i % stride == 0 { lambda * (a - shift) } else { lambda * a })
            .collect();
        let exterior = Exterior::Transformed {
            inner: Box::new(self.exterior.clone()),
            lambda,
            frame: Frame { scale: mu, shift: x0 },
            shift,
        };
        let sup_bound = self.sup_bound.map(|b| lambda.abs() * (b + shift.abs()));
        Ok(Self { grid, values, exterior, interp: self.interp, coeffs, sup_bound })
    }

    /// Writes values and a JSON sidecar; `binary` selects little-endian f64 over CSV.
    pub fn write(&self, stem: &Path, binary: bool, meta: &serde_json::Value) -> Result<PathBuf> {
        let data_path = stem.with_extension(if binary { "bin" } else { "csv" });
        let sidecar_path = stem.with_extension("json");
        let mut buf = Vec::new();
        if binary {
            for v in &self.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        } else {
            if let Some(h) = meta.get("config_hash").and_then(|v| v.as_str()) {
                writeln!(buf, "# config_hash={h}")?;
            }
            if let Some(v) = meta.get("toolkit_version").and_then(|v| v.as_str()) {
                writeln!(buf, "# toolkit_version={v}")?;
            }
            writeln!(buf, "{}", if self.grid.dim == 1 { "x,value" } else { "x,y,value" })?;
            for (k, v) in self.values.iter().enumerate() {
                let x = self.grid.node(k);
                if self.grid.dim == 1 {
                    writeln!(buf, "{:.16e},{:.16e}", x[0], v)?;
                } else {
                    writeln!(buf, "{:.16e},{:.16e},{:.16e}", x[0], x[1], v)?;
                }
            }
        }
        crate::io::write_atomic(&data_path, &buf)?;
        let sidecar = Sidecar {
            grid: self.grid.clone(),
            interp: self.interp,
            exterior: self.exterior.clone(),
            sup_bound: self.sup_bound,
            data_file: data_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            binary,
            meta: meta.clone(),
        };
        crate::io::write_json(&sidecar_path, &serde_json::to_value(&sidecar)?)?;
        Ok(sidecar_path)
    }

    /// Reads a grid function from its JSON sidecar.
    pub fn read(sidecar_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(sidecar_path)?;
        let sc: Sidecar = serde_json::from_str(&text)?;
        let dir = sidecar_path.parent().unwrap_or(Path::new("."));
        let data = dir.join(&sc.data_file);
        let values = if sc.binary {
            let bytes = std::fs::read(&data)?;
            if bytes.len() % 8 != 0 {
                return Err(Error::Config(format!("{} is not a whole number of f64 values", data.display())));
            }
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        } else {
            let f = std::fs::File::open(&data)?;
            let mut vals = Vec::new();
            for line in BufReader::new(f).lines() {
                let line = line?;
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
                    continue;
                }
                let last = line.rsplit(',').next().unwrap_or("");
                vals.push(
                    last.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad value `{last}` in {}: {e}", data.display())))?,
                );
            }
            vals
        };
        let mut g = Self::from_values(sc.grid, values, sc.exterior, sc.interp)?;
        g.sup_bound = sc.sup_bound;
        Ok(g)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    grid: Grid,
    interp: Interp,
    exterior: Exterior,
    sup_bound: Option<f64>,
    data_file: String,
    binary: bool,
    #[serde(default)]
    meta: serde_json::Value,
}

#[inline]
pub fn horner(a: &[f64], t: f64) -> f64 {
    ((a[3] * t + a[2]) * t + a[1]) * t + a[0]
}

#[inline]
fn eval_bicubic(a: &[f64], t0: f64, t1: f64) -> f64 {
    let mut acc = 0.0;
    for l in (0..4).rev() {
        acc = acc * t1 + horner(&a[4 * l..4 * l + 4], t0);
    }
    acc
}

/// Per-cell coefficients of the 1D interpolant of `u`.
pub fn cells_1d(u: &[f64], interp: Interp) -> Vec<[f64; 4]> {
    let n = u.len();
    match interp {
        Interp::Linear => (0..n - 1).map(|c| [u[c], u[c + 1] - u[c], 0.0, 0.0]).collect(),
        Interp::Cubic => {
            let m = natural_second_differences(u);
            (0..n - 1)
                .map(|c| {
                    [
                        u[c],
                        u[c + 1] - u[c] - (2.0 * m[c] + m[c + 1]) / 6.0,
                        0.5 * m[c],
                        (m[c + 1] - m[c]) / 6.0,
                    ]
                })
                .collect()
        }
    }
}

/// `h^2 u''` at the nodes of the natural cubic spline.
fn natural_second_differences(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm for m[i-1] + 4 m[i] + m[i+1] = 6 (u[i+1] - 2u[i] + u[i-1])
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (u[i + 2] - 2.0 * u[i + 1] + u[i]);
        let (cp, dp) = if i == 0 { (0.0, 0.0) } else { (c[i - 1], d[i - 1]) };
        let den = 4.0 - cp;
        c[i] = 1.0 / den;
        d[i] = (rhs - dp) / den;
    }
    for i in (0..k).rev() {
        let next = if i + 1 < k { m[i + 2] } else { 0.0 };
        m[i + 1] = d[i] - c[i] * next;
    }
    m
}

fn build_coeffs(grid: &Grid, values: &[f64], interp: Interp) -> Vec<f64> {
    let n0 = grid.counts[0];
    if grid.dim == 1 {
        return cells_1d(values, interp).into_iter().flatten().collect();
    }
    let n1 = grid.counts[1];
    // along axis 0 for every row
    let rows: Vec<Vec<[f64; 4]>> = (0..n1).map(|j| cells_1d(&values[j * n0..(j + 1) * n0], interp)).collect();
    let cells0 = n0 - 1;
    let cells1 = n1 - 1;
    let mut out = vec![0.0; 16 * cells0 * cells1];
    let mut column = vec![0.0; n1];
    for c0 in 0..cells0 {
        for k in 0..4 {
            for j in 0..n1 {
                column[j] = rows[j][c0][k];
            }
            for (c1, b) in cells_1d(&column, interp).into_iter().enumerate() {
                let base = 16 * (c0 + cells0 * c1);
                for l in 0..4 {
                    out[base + k + 4 * l] = b[l];
                }
            }
        }
    }
    out
}
