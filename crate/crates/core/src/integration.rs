//! Importance-weighted integrals over convex polygons.
//!
//! A polygon is split at its leftmost and rightmost vertices into a lower and
//! an upper chain. Between consecutive vertex abscissae both chains are
//! linear, so the double integral is computed piece by piece as an outer
//! adaptive Simpson rule in `x` over an inner adaptive Simpson rule in `y`
//! between the interpolated limits. All components of a vector integrand are
//! refined together.
//!
//! [`grid_oracle`] is an independent midpoint-rule reference used to check
//! the interpolating integrator.

use crate::error::{Error, Result};
use crate::geometry::{polygon_area, Point, Polygon};

/// Relative tolerance for masses and moments.
pub const DEFAULT_MOMENT_TOL: f64 = 1e-4;
/// Relative tolerance for sensor-loss integrals.
pub const DEFAULT_LOSS_TOL: f64 = 0.1;
/// Deepest bisection allowed in either direction.
pub const MAX_DEPTH: u32 = 30;
/// Masses below this signal an importance-field design failure.
pub const MIN_MASS: f64 = 1e-300;

/// Adaptive quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub max_depth: u32,
    /// Initial equal panels across the full x-extent of a cell.
    pub min_panels_x: usize,
    /// Initial equal panels for each inner y-integral.
    pub min_panels_y: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_MOMENT_TOL,
            max_depth: MAX_DEPTH,
            min_panels_x: 16,
            min_panels_y: 4,
        }
    }
}

impl Quadrature {
    pub fn with_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 0.1) {
            return Err(Error::InvalidParameter(format!(
                "quadrature tolerance must lie in (0, 0.1], got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

/// One x-interval on which both boundary chains are linear.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    x0: f64,
    x1: f64,
    bottom: (f64, f64),
    top: (f64, f64),
}

impl Piece {
    #[inline]
    fn limits(&self, x: f64) -> (f64, f64) {
        let t = (x - self.x0) / (self.x1 - self.x0);
        (
            self.bottom.0 + t * (self.bottom.1 - self.bottom.0),
            self.top.0 + t * (self.top.1 - self.top.0),
        )
    }
}

/// Lower and upper boundaries of a convex polygon as piecewise-linear
/// functions of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryProfile {
    /// Vertex abscissae, strictly increasing.
    pub x_knots: Vec<f64>,
    lower: Vec<Point>,
    upper: Vec<Point>,
    pieces: Vec<Piece>,
}

impl BoundaryProfile {
    pub fn x_min(&self) -> f64 {
        self.x_knots[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x_knots[self.x_knots.len() - 1]
    }

    /// Upper boundary at `x`, clamped to the profile's extent.
    pub fn y_top(&self, x: f64) -> f64 {
        interpolate_chain(&self.upper, x)
    }

    /// Lower boundary at `x`, clamped to the profile's extent.
    pub fn y_bottom(&self, x: f64) -> f64 {
        interpolate_chain(&self.lower, x)
    }
}

/// Chain vertices sorted by x; at a repeated abscissa the last vertex wins.
fn interpolate_chain(chain: &[Point], x: f64) -> f64 {
    let x = x.clamp(chain[0].x, chain[chain.len() - 1].x);
    let idx = chain.partition_point(|p| p.x <= x);
    if idx == 0 {
        return chain[0].y;
    }
    if idx >= chain.len() {
        return chain[chain.len() - 1].y;
    }
    let (a, b) = (chain[idx - 1], chain[idx]);
    if b.x == a.x {
        return a.y;
    }
    a.y + (x - a.x) / (b.x - a.x) * (b.y - a.y)
}

/// Splits a convex counterclockwise polygon into lower and upper chains.
pub fn build_profile(poly: &Polygon) -> Result<BoundaryProfile> {
    let v = poly.vertices();
    let n = v.len();
    let start = (0..n)
        .min_by(|&i, &j| v[i].lexicographic_cmp(&v[j]))
        .expect("polygon has vertices");
    let cyc: Vec<Point> = (0..n).map(|k| v[(start + k) % n]).collect();
    let x_min = cyc[0].x;
    let x_max = cyc.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    if !(x_max > x_min) {
        return Err(Error::DegeneratePolygon("zero x-extent".into()));
    }

    // Counterclockwise from the bottom-left vertex: lower chain runs right,
    // up the right wall, then the upper chain runs back left.
    let r_first = cyc
        .iter()
        .position(|p| p.x == x_max)
        .expect("x_max is attained");
    let mut r_last = r_first;
    while r_last + 1 < n && cyc[r_last + 1].x == x_max {
        r_last += 1;
    }
    let l_top = if cyc[n - 1].x == x_min { n - 1 } else { n };

    let lower: Vec<Point> = cyc[..=r_first].to_vec();
    let mut upper: Vec<Point> = cyc[r_last..l_top].to_vec();
    upper.push(cyc[l_top % n]);
    upper.reverse();

    let mut x_knots: Vec<f64> = lower.iter().chain(&upper).map(|p| p.x).collect();
    x_knots.sort_by(f64::total_cmp);
    x_knots.dedup();

    let pieces = x_knots
        .windows(2)
        .map(|w| {
            let (x0, x1) = (w[0], w[1]);
            Piece {
                x0,
                x1,
                bottom: (interpolate_chain(&lower, x0), interpolate_chain(&lower, x1)),
                top: (interpolate_chain(&upper, x0), interpolate_chain(&upper, x1)),
            }
        })
        .collect();

    Ok(BoundaryProfile {
        x_knots,
        lower,
        upper,
        pieces,
    })
}

#[inline]
fn axpy<const N: usize>(a: f64, x: &[f64; N], y: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|c| a * x[c] + y[c])
}

#[inline]
fn simpson<const N: usize>(h: f64, fa: &[f64; N], fm: &[f64; N], fb: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|c| h / 6.0 * (fa[c] + 4.0 * fm[c] + fb[c]))
}

struct Panel<const N: usize> {
    a: f64,
    b: f64,
    fa: [f64; N],
    fm: [f64; N],
    fb: [f64; N],
    whole: [f64; N],
}

/// Adaptive Simpson with Richardson extrapolation on one panel.
fn refine<const N: usize, G>(
    g: &mut G,
    p: Panel<N>,
    tol: [f64; N],
    depth: u32,
    max_depth: u32,
) -> Result<[f64; N]>
where
    G: FnMut(f64) -> Result<[f64; N]>,
{
    let m = 0.5 * (p.a + p.b);
    let lm = 0.5 * (p.a + m);
    let rm = 0.5 * (m + p.b);
    let flm = g(lm)?;
    let frm = g(rm)?;
    let left = simpson(m - p.a, &p.fa, &flm, &p.fm);
    let right = simpson(p.b - m, &p.fm, &frm, &p.fb);
    let sum: [f64; N] = std::array::from_fn(|c| left[c] + right[c]);
    let delta: [f64; N] = std::array::from_fn(|c| sum[c] - p.whole[c]);

    let converged = (0..N).all(|c| {
        let d = delta[c].abs();
        d <= 15.0 * tol[c] || d <= 8.0 * f64::EPSILON * (left[c].abs() + right[c].abs())
    });
    if converged {
        return Ok(axpy(1.0 / 15.0, &delta, &sum));
    }
    if depth >= max_depth || m <= p.a || m >= p.b {
        return Err(Error::IntegrationFailure {
            max_depth,
            a: p.a,
            b: p.b,
        });
    }
    let half: [f64; N] = std::array::from_fn(|c| 0.5 * tol[c]);
    let l = refine(
        g,
        Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
        },
        half,
        depth + 1,
        max_depth,
    )?;
    let r = refine(
        g,
        Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
        },
        half,
        depth + 1,
        max_depth,
    )?;
    Ok(std::array::from_fn(|c| l[c] + r[c]))
}

/// Integrates `g` over `[a, b]` split into `panels` equal panels, each refined
/// adaptively with its share of the absolute tolerance `tol`.
fn adaptive_simpson<const N: usize, G>(
    g: &mut G,
    a: f64,
    b: f64,
    panels: usize,
    tol: [f64; N],
    max_depth: u32,
) -> Result<[f64; N]>
where
    G: FnMut(f64) -> Result<[f64; N]>,
{
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let share: [f64; N] = std::array::from_fn(|c| tol[c] / panels as f64);
    let mut total = [0.0; N];
    let mut fa = g(a)?;
    for k in 0..panels {
        let pa = a + width * k as f64;
        let pb = if k + 1 == panels {
            b
        } else {
            a + width * (k + 1) as f64
        };
        let fm = g(0.5 * (pa + pb))?;
        let fb = g(pb)?;
        let whole = simpson(pb - pa, &fa, &fm, &fb);
        let part = refine(
            g,
            Panel {
                a: pa,
                b: pb,
                fa,
                fm,
                fb,
                whole,
            },
            share,
            0,
            max_depth,
        )?;
        for c in 0..N {
            total[c] += part[c];
        }
        fa = fb;
    }
    Ok(total)
}

/// Coarse tensor Simpson estimate of `∫|f_c|` used to scale tolerances.
fn coarse_scale<const N: usize, F>(profile: &BoundaryProfile, f: &F) -> [f64; N]
where
    F: Fn(Point) -> [f64; N],
{
    let mut scale = [0.0; N];
    for piece in &profile.pieces {
        let w = piece.x1 - piece.x0;
        for (xi, wx) in [(0.0, 1.0), (0.25, 4.0), (0.5, 2.0), (0.75, 4.0), (1.0, 1.0)] {
            let x = piece.x0 + xi * w;
            let (lo, hi) = piece.limits(x);
            let h = hi - lo;
            for (yi, wy) in [(0.0, 1.0), (0.25, 4.0), (0.5, 2.0), (0.75, 4.0), (1.0, 1.0)] {
                let v = f(Point::new(x, lo + yi * h));
                for c in 0..N {
                    scale[c] += wx * wy * v[c].abs() * (w / 12.0) * (h / 12.0);
                }
            }
        }
    }
    scale
}

/// Integrates a vector-valued `f` over the region described by `profile`.
pub fn integrate_profile<const N: usize, F>(
    profile: &BoundaryProfile,
    f: F,
    quad: &Quadrature,
) -> Result<[f64; N]>
where
    F: Fn(Point) -> [f64; N],
{
    quad.validate()?;
    let width = profile.x_max() - profile.x_min();
    let scale = coarse_scale(profile, &f);
    let tol: [f64; N] = std::array::from_fn(|c| quad.rel_tol * scale[c].max(MIN_MASS));
    // The inner error integrates over the full width; keep it well inside
    // the outer budget.
    let inner_tol: [f64; N] = std::array::from_fn(|c| 0.1 * tol[c] / width);

    let mut total = [0.0; N];
    for piece in &profile.pieces {
        let w = piece.x1 - piece.x0;
        if w <= 0.0 {
            continue;
        }
        let panels = ((quad.min_panels_x as f64) * w / width).ceil() as usize;
        let piece_tol: [f64; N] = std::array::from_fn(|c| tol[c] * w / width);
        let mut column = |x: f64| -> Result<[f64; N]> {
            let (lo, hi) = piece.limits(x);
            if hi <= lo {
                return Ok([0.0; N]);
            }
            let mut inner = |y: f64| Ok(f(Point::new(x, y)));
            adaptive_simpson(
                &mut inner,
                lo,
                hi,
                quad.min_panels_y,
                inner_tol,
                quad.max_depth,
            )
        };
        let part = adaptive_simpson(
            &mut column,
            piece.x0,
            piece.x1,
            panels,
            piece_tol,
            quad.max_depth,
        )?;
        for c in 0..N {
            total[c] += part[c];
        }
    }
    Ok(total)
}

/// `∬ φ dy dx` over the profile.
pub fn weighted_mass<F>(profile: &BoundaryProfile, phi: F, quad: &Quadrature) -> Result<f64>
where
    F: Fn(Point) -> f64,
{
    let [m] = integrate_profile(profile, |q| [phi(q)], quad)?;
    Ok(m)
}

/// `∬ φ(q)·q dy dx` over the profile.
pub fn weighted_moment<F>(profile: &BoundaryProfile, phi: F, quad: &Quadrature) -> Result<Point>
where
    F: Fn(Point) -> f64,
{
    let [mx, my] = integrate_profile(
        profile,
        |q| {
            let w = phi(q);
            [w * q.x, w * q.y]
        },
        quad,
    )?;
    Ok(Point::new(mx, my))
}

/// Importance-weighted mass, first moment and centroid of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMoments {
    pub mass: f64,
    pub moment: Point,
    pub centroid: Point,
}

impl CellMoments {
    fn from_integrals(mass: f64, mx: f64, my: f64) -> Result<Self> {
        if !(mass >= MIN_MASS) {
            return Err(Error::MassUnderflow { mass });
        }
        let moment = Point::new(mx, my);
        Ok(Self {
            mass,
            moment,
            centroid: moment * (1.0 / mass),
        })
    }
}

pub fn cell_moments<F>(poly: &Polygon, phi: F, quad: &Quadrature) -> Result<CellMoments>
where
    F: Fn(Point) -> f64,
{
    let profile = build_profile(poly)?;
    let [m, mx, my] = integrate_profile(
        &profile,
        |q| {
            let w = phi(q);
            [w, w * q.x, w * q.y]
        },
        quad,
    )?;
    CellMoments::from_integrals(m, mx, my)
}

/// Moments and sensor loss of one cell from a single quadrature pass.
pub fn cell_moments_and_loss<F>(
    poly: &Polygon,
    agent: Point,
    phi: F,
    quad: &Quadrature,
) -> Result<(CellMoments, f64)>
where
    F: Fn(Point) -> f64,
{
    let profile = build_profile(poly)?;
    let [m, mx, my, loss] = integrate_profile(
        &profile,
        |q| {
            let w = phi(q);
            [w, w * q.x, w * q.y, 0.5 * (q - agent).norm_squared() * w]
        },
        quad,
    )?;
    Ok((CellMoments::from_integrals(m, mx, my)?, loss))
}

/// `½ ∬ ‖q − agent‖² φ(q) dq` over the cell.
pub fn sensor_loss_cell<F>(poly: &Polygon, agent: Point, phi: F, quad: &Quadrature) -> Result<f64>
where
    F: Fn(Point) -> f64,
{
    let profile = build_profile(poly)?;
    let [loss] = integrate_profile(
        &profile,
        |q| [0.5 * (q - agent).norm_squared() * phi(q)],
        quad,
    )?;
    Ok(loss)
}

/// Midpoint-rule sum over a `resolution × resolution` grid on the polygon's
/// bounding box, counting cells whose centres lie inside the polygon.
pub fn grid_oracle<F>(poly: &Polygon, integrand: F, resolution: usize) -> f64
where
    F: Fn(Point) -> f64,
{
    let (lo, hi) = poly.bounding_box();
    let dx = (hi.x - lo.x) / resolution as f64;
    let dy = (hi.y - lo.y) / resolution as f64;
    let edges: Vec<(Point, Point)> = poly.edges().collect();
    let mut sum = 0.0;
    for i in 0..resolution {
        let x = lo.x + (i as f64 + 0.5) * dx;
        let mut column = 0.0;
        for j in 0..resolution {
            let q = Point::new(x, lo.y + (j as f64 + 0.5) * dy);
            if edges.iter().all(|&(a, b)| (b - a).cross(q - a) >= 0.0) {
                column += integrand(q);
            }
        }
        sum += column;
    }
    sum * dx * dy
}

/// Area of a polygon by quadrature of the unit integrand; used in tests to
/// compare against the shoelace formula.
pub fn quadrature_area(poly: &Polygon, quad: &Quadrature) -> Result<(f64, f64)> {
    let profile = build_profile(poly)?;
    Ok((weighted_mass(&profile, |_| 1.0, quad)?, polygon_area(poly)?))
}
