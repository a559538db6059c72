//! Cubic interpolation on uniform grids: natural splines in 1D and a
//! C^1 bicubic (Catmull-Rom style) surface in 2D with analytic partials.

use crate::{Error, Result};

/// Natural cubic spline on a uniform grid.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x0: f64,
    dx: f64,
    y: Vec<f64>,
    m: Vec<f64>, // second derivatives at knots
}

impl CubicSpline {
    pub fn new(x0: f64, dx: f64, y: Vec<f64>) -> Result<Self> {
        if y.len() < 2 || !dx.is_finite() || dx <= 0.0 || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("cubic spline needs >= 2 finite knots".into()));
        }
        let n = y.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal solve for natural boundary conditions.
            let mut sub = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            for i in 1..n - 1 {
                sub[i] = 1.0;
                diag[i] = 4.0;
                rhs[i] = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (dx * dx);
            }
            for i in 2..n - 1 {
                let w = sub[i] / diag[i - 1];
                diag[i] -= w;
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (1..n - 1).rev() {
                let upper = if i + 1 < n - 1 { m[i + 1] } else { 0.0 };
                m[i] = (rhs[i] - upper) / diag[i];
            }
        }
        Ok(CubicSpline { x0, dx, y, m })
    }

    pub fn x_min(&self) -> f64 {
        self.x0
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.dx * (self.y.len() - 1) as f64
    }

    fn cell(&self, x: f64) -> (usize, f64) {
        let n = self.y.len();
        let s = (x - self.x0) / self.dx;
        let i = (s.floor() as isize).clamp(0, n as isize - 2) as usize;
        (i, x - (self.x0 + self.dx * i as f64))
    }

    /// Value; arguments beyond the knot range use the boundary cubic.
    pub fn eval(&self, x: f64) -> f64 {
        let (i, t) = self.cell(x);
        let h = self.dx;
        let a = (self.y[i + 1] - self.y[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0;
        self.y[i] + a * t + self.m[i] * t * t / 2.0 + (self.m[i + 1] - self.m[i]) * t * t * t / (6.0 * h)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let (i, t) = self.cell(x);
        let h = self.dx;
        let a = (self.y[i + 1] - self.y[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0;
        a + self.m[i] * t + (self.m[i + 1] - self.m[i]) * t * t / (2.0 * h)
    }
}

/// Uniform 2D grid with C^1 bicubic interpolation and analytic partials.
///
/// Node derivatives are estimated with fourth-order central differences, so
/// interpolation error on smooth data is O(h^4) in the interior.
#[derive(Debug, Clone)]
pub struct BicubicTable {
    pub x0: f64,
    pub dx: f64,
    pub nx: usize,
    pub y0: f64,
    pub dy: f64,
    pub ny: usize,
    v: Vec<f64>,
    vx: Vec<f64>,
    vy: Vec<f64>,
    vxy: Vec<f64>,
}

fn diff_row(get: &dyn Fn(isize) -> f64, i: usize, n: usize, h: f64) -> f64 {
    // One-sided second-order stencils at the edges, central inside.
    if i == 0 {
        (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * get(i as isize) - 4.0 * get(i as isize - 1) + get(i as isize - 2)) / (2.0 * h)
    } else if i == 1 || i == n - 2 {
        (get(i as isize + 1) - get(i as isize - 1)) / (2.0 * h)
    } else {
        (8.0 * (get(i as isize + 1) - get(i as isize - 1)) - (get(i as isize + 2) - get(i as isize - 2)))
            / (12.0 * h)
    }
}

impl BicubicTable {
    pub fn from_values(
        x0: f64,
        dx: f64,
        nx: usize,
        y0: f64,
        dy: f64,
        ny: usize,
        v: Vec<f64>,
    ) -> Result<Self> {
        if nx < 4 || ny < 4 || v.len() != nx * ny {
            return Err(Error::InvalidSpec("bicubic table needs at least 4x4 values".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("bicubic table has non-finite entries".into()));
        }
        let idx = |i: usize, j: usize| i * ny + j;
        let mut vx = vec![0.0; nx * ny];
        let mut vy = vec![0.0; nx * ny];
        let mut vxy = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let col = |k: isize| v[idx(k as usize, j)];
                vx[idx(i, j)] = diff_row(&col, i, nx, dx);
            }
        }
        for i in 0..nx {
            for j in 0..ny {
                let row = |k: isize| v[idx(i, k as usize)];
                vy[idx(i, j)] = diff_row(&row, j, ny, dy);
                let rowx = |k: isize| vx[idx(i, k as usize)];
                vxy[idx(i, j)] = diff_row(&rowx, j, ny, dy);
            }
        }
        Ok(BicubicTable { x0, dx, nx, y0, dy, ny, v, vx, vy, vxy })
    }

    /// Build by sampling `f` on the grid.
    pub fn tabulate(
        x0: f64,
        x1: f64,
        nx: usize,
        y0: f64,
        y1: f64,
        ny: usize,
        f: &mut dyn FnMut(f64, f64) -> Result<f64>,
    ) -> Result<Self> {
        let dx = (x1 - x0) / (nx - 1) as f64;
        let dy = (y1 - y0) / (ny - 1) as f64;
        let mut v = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                v[i * ny + j] = f(x0 + dx * i as f64, y0 + dy * j as f64)?;
            }
        }
        Self::from_values(x0, dx, nx, y0, dy, ny, v)
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x0, self.x0 + self.dx * (self.nx - 1) as f64)
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.y0, self.y0 + self.dy * (self.ny - 1) as f64)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (xa, xb) = self.x_range();
        let (ya, yb) = self.y_range();
        x >= xa - 1e-12 && x <= xb + 1e-12 && y >= ya - 1e-12 && y <= yb + 1e-12
    }

    /// Value and both partials at `(x, y)`. Arguments are clamped to the grid.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let idx = |i: usize, j: usize| i * self.ny + j;
        let sx = ((x - self.x0) / self.dx).floor() as isize;
        let sy = ((y - self.y0) / self.dy).floor() as isize;
        let i = sx.clamp(0, self.nx as isize - 2) as usize;
        let j = sy.clamp(0, self.ny as isize - 2) as usize;
        let tx = (x - (self.x0 + self.dx * i as f64)) / self.dx;
        let ty = (y - (self.y0 + self.dy * j as f64)) / self.dy;

        // Hermite basis in each direction.
        let h = |t: f64| {
            let t2 = t * t;
            let t3 = t2 * t;
            (
                2.0 * t3 - 3.0 * t2 + 1.0,
                t3 - 2.0 * t2 + t,
                -2.0 * t3 + 3.0 * t2,
                t3 - t2,
            )
        };
        let hd = |t: f64| {
            let t2 = t * t;
            (
                6.0 * t2 - 6.0 * t,
                3.0 * t2 - 4.0 * t + 1.0,
                -6.0 * t2 + 6.0 * t,
                3.0 * t2 - 2.0 * t,
            )
        };
        let (hx0, hx1, hx2, hx3) = h(tx);
        let (gy0, gy1, gy2, gy3) = h(ty);
        let (dx0, dx1, dx2, dx3) = hd(tx);
        let (ey0, ey1, ey2, ey3) = hd(ty);

        let corners = [(i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1)];
        let mut val = 0.0;
        let mut ddx = 0.0;
        let mut ddy = 0.0;
        for (ci, &(a, b)) in corners.iter().enumerate() {
            let k = idx(a, b);
            let (v, vx, vy, vxy) = (self.v[k], self.vx[k] * self.dx, self.vy[k] * self.dy, self.vxy[k] * self.dx * self.dy);
            let (bx, bdx) = match ci {
                0 | 1 => (hx0, dx0),
                _ => (hx2, dx2),
            };
            let (cx, cdx) = match ci {
                0 | 1 => (hx1, dx1),
                _ => (hx3, dx3),
            };
            let (by, bdy) = match ci {
                0 | 2 => (gy0, ey0),
                _ => (gy2, ey2),
            };
            let (cy, cdy) = match ci {
                0 | 2 => (gy1, ey1),
                _ => (gy3, ey3),
            };
            val += v * bx * by + vx * cx * by + vy * bx * cy + vxy * cx * cy;
            ddx += (v * bdx * by + vx * cdx * by + vy * bdx * cy + vxy * cdx * cy) / self.dx;
            ddy += (v * bx * bdy + vx * cx * bdy + vy * bx * cdy + vxy * cx * cdy) / self.dy;
        }
        (val, ddx, ddy)
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_cubic() {
        let f = |x: f64| 0.3 * x * x * x - x + 2.0;
        let n = 41;
        let y: Vec<f64> = (0..n).map(|i| f(-2.0 + 0.1 * i as f64)).collect();
        let s = CubicSpline::new(-2.0, 0.1, y).unwrap();
        for k in 0..50 {
            let x = -1.8 + 3.4 * k as f64 / 49.0;
            assert!((s.eval(x) - f(x)).abs() < 2e-3, "x={x}");
            assert!((s.deriv(x) - (0.9 * x * x - 1.0)).abs() < 2e-2, "x={x}");
        }
    }

    #[test]
    fn bicubic_matches_smooth_function() {
        let f = |x: f64, y: f64| (x * 1.3).sin() * (0.7 * y).cos() + 0.1 * x * y;
        let t = BicubicTable::tabulate(-1.0, 1.0, 33, -1.0, 1.0, 33, &mut |x, y| Ok(f(x, y))).unwrap();
        for k in 0..20 {
            let x = -0.9 + 1.8 * k as f64 / 19.0;
            let y = 0.35 * x - 0.2;
            let (v, gx, gy) = t.eval(x, y);
            assert!((v - f(x, y)).abs() < 1e-5);
            let hx = (f(x + 1e-5, y) - f(x - 1e-5, y)) / 2e-5;
            let hy = (f(x, y + 1e-5) - f(x, y - 1e-5)) / 2e-5;
            assert!((gx - hx).abs() < 1e-3);
            assert!((gy - hy).abs() < 1e-3);
        }
    }
}
