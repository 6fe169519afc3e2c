//! Shared numerical routines: adaptive quadrature, adaptive Runge-Kutta
//! integration with dense output, and bracketed root finding.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("quadrature did not converge on [{a}, {b}] (reached depth {depth})")]
    QuadratureNoConvergence { a: f64, b: f64, depth: usize },
    #[error("ODE step size underflow at t = {t:.6e} (h = {h:.3e} after {steps} steps)")]
    StepUnderflow { t: f64, h: f64, steps: usize },
    #[error("ODE integration exceeded {max_steps} steps at t = {t:.6e}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("root not bracketed: f({a:.6e}) and f({b:.6e}) have the same sign")]
    NotBracketed { a: f64, b: f64 },
}

/// Adaptive Simpson quadrature of `f` on [a, b] to relative tolerance
/// `rtol` (with an absolute floor to terminate near-zero integrals).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rtol: f64,
) -> Result<f64, NumericsError> {
    const MAX_DEPTH: usize = 40;
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // First pass to get a magnitude scale for the relative tolerance.
    let scale = whole.abs().max(1e-300);
    simpson_rec(f, a, b, fa, fm, fb, whole, rtol * scale, MAX_DEPTH)
        .ok_or(NumericsError::QuadratureNoConvergence { a, b, depth: MAX_DEPTH })
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

/// One accepted integration step: time, state, and derivative at that point.
/// The derivative is kept so the solution can be interpolated with cubic
/// Hermite polynomials at the same order as the integrator.
#[derive(Debug, Clone, Copy)]
pub struct OdeKnot {
    pub t: f64,
    pub y: f64,
    pub dy: f64,
}

/// Dense solution of a scalar autonomous ODE as a sequence of accepted steps.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub knots: Vec<OdeKnot>,
}

impl OdeSolution {
    pub fn t_end(&self) -> f64 {
        self.knots.last().map(|k| k.t).unwrap_or(0.0)
    }

    /// Cubic Hermite interpolation of y(t). Clamps to the endpoints outside
    /// the covered interval.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if n == 0 {
            return f64::NAN;
        }
        if t <= self.knots[0].t {
            return self.knots[0].y;
        }
        if t >= self.knots[n - 1].t {
            return self.knots[n - 1].y;
        }
        let idx = match self
            .knots
            .binary_search_by(|k| k.t.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.knots[i].y,
            Err(i) => i - 1,
        };
        let k0 = &self.knots[idx];
        let k1 = &self.knots[idx + 1];
        let h = k1.t - k0.t;
        let s = (t - k0.t) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * k0.y + h10 * h * k0.dy + h01 * k1.y + h11 * h * k1.dy
    }

    /// Inverse lookup: time at which the monotone solution reaches level
    /// `y`. Returns None when the level lies outside the covered range.
    pub fn time_at_level(&self, y: f64) -> Option<f64> {
        let n = self.knots.len();
        if n < 2 {
            return None;
        }
        let increasing = self.knots[n - 1].y > self.knots[0].y;
        let (y_min, y_max) = if increasing {
            (self.knots[0].y, self.knots[n - 1].y)
        } else {
            (self.knots[n - 1].y, self.knots[0].y)
        };
        if y < y_min || y > y_max {
            return None;
        }
        // Binary search for the bracketing step on the monotone knot values.
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if (self.knots[mid].y <= y) == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Bisect the Hermite interpolant inside this step.
        let (mut ta, mut tb) = (self.knots[lo].t, self.knots[hi].t);
        for _ in 0..80 {
            let tm = 0.5 * (ta + tb);
            let ym = self.eval(tm);
            if (ym > y) == increasing {
                tb = tm;
            } else {
                ta = tm;
            }
        }
        Some(0.5 * (ta + tb))
    }
}

/// Controls for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 0.0,
            h_init: 1e-9,
            max_steps: 2_000_000,
        }
    }
}

// Cash-Karp RK4(5) coefficients.
const CK_A: [[f64; 5]; 5] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
    [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ],
];
const CK_B5: [f64; 6] = [
    37.0 / 378.0,
    0.0,
    250.0 / 621.0,
    125.0 / 594.0,
    0.0,
    512.0 / 1771.0,
];
const CK_B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    1.0 / 4.0,
];

/// Integrate the scalar autonomous ODE dy/dt = f(y) from `y0` with adaptive
/// Cash-Karp RK4(5) steps until `stop(y)` returns true (checked on accepted
/// steps). Records every accepted step for dense evaluation.
pub fn integrate_adaptive<F, S>(
    f: F,
    y0: f64,
    stop: S,
    opts: &OdeOptions,
) -> Result<OdeSolution, NumericsError>
where
    F: Fn(f64) -> f64,
    S: Fn(f64) -> bool,
{
    let mut t = 0.0;
    let mut y = y0;
    let mut dy = f(y);
    let mut knots = vec![OdeKnot { t, y, dy }];
    let mut h = opts.h_init;
    let mut steps = 0usize;

    while !stop(y) {
        if steps >= opts.max_steps {
            return Err(NumericsError::TooManySteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        let mut k = [0.0f64; 6];
        k[0] = dy;
        for stage in 1..6 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                yi += h * CK_A[stage - 1][j] * kj;
            }
            k[stage] = f(yi.max(0.0));
        }
        let mut y5 = y;
        let mut y4 = y;
        for j in 0..6 {
            y5 += h * CK_B5[j] * k[j];
            y4 += h * CK_B4[j] * k[j];
        }
        let err = (y5 - y4).abs();
        let tol = opts.atol + opts.rtol * y.abs().max(y5.abs());
        if err <= tol || h <= t.abs().max(1e-30) * 1e-14 {
            if err > tol {
                return Err(NumericsError::StepUnderflow { t, h, steps });
            }
            t += h;
            y = y5.max(0.0);
            dy = f(y);
            knots.push(OdeKnot { t, y, dy });
            steps += 1;
        }
        // Standard step-size update with safety factor and growth limits.
        let factor = if err > 0.0 {
            0.9 * (tol / err).powf(0.2)
        } else {
            5.0
        };
        h *= factor.clamp(0.2, 5.0);
    }
    Ok(OdeSolution { knots })
}

/// Bisection root finding on [a, b]; requires a sign change. Converges to
/// relative precision ~1e-14 on the abscissa.
pub fn bisect_root<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64, NumericsError> {
    let (mut a, mut b) = (a, b);
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericsError::NotBracketed { a, b });
    }
    let rising = fb > fa;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm > 0.0) == rising {
            b = m;
        } else {
            a = m;
        }
        if (b - a).abs() <= 1e-14 * (a.abs() + b.abs()) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}
