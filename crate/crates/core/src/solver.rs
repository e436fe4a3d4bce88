//! Explicit Runge-Kutta integrators for small fixed-size systems.
//!
//! [`Rk23`] is the Bogacki-Shampine 3(2) pair with first-same-as-last
//! reuse; [`Rk4`] is the classical fixed-step method. Both advance exactly
//! to the requested end time so that output samples land on a fixed grid.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk23,
    Rk4,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rk23" => Ok(Method::Rk23),
            "rk4" => Ok(Method::Rk4),
            other => Err(format!("unknown method `{other}`, expected `rk23` or `rk4`")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rk23 => "rk23",
            Method::Rk4 => "rk4",
        })
    }
}

#[derive(Debug)]
pub enum SolveError<E, const N: usize> {
    /// The right-hand side failed at an accepted point, or kept failing
    /// until the step size underflowed.
    Rhs { t: f64, y: [f64; N], source: E },
    /// Error control drove the step below the minimum.
    StepUnderflow { t: f64, h: f64, y: [f64; N] },
}

pub trait Integrator<const N: usize> {
    /// Advances `y` from `t0` to exactly `t1`.
    fn advance<E, F>(&mut self, f: &mut F, t0: f64, y0: [f64; N], t1: f64) -> Result<[f64; N], SolveError<E, N>>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>;
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Rk23 {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    // Step size carried between calls.
    h: Option<f64>,
}

impl Rk23 {
    pub fn new(rel_tol: f64, abs_tol: f64, max_step: f64) -> Self {
        Rk23 {
            rel_tol,
            abs_tol,
            max_step,
            min_step: 1e-14,
            h: None,
        }
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.abs_tol + self.rel_tol * a.abs().max(b.abs())
    }

    fn initial_step<const N: usize>(&self, y: &[f64; N], dy: &[f64; N], span: f64) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.scale(y[i], y[i]);
            d0 += (y[i] / sc).powi(2);
            d1 += (dy[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(self.max_step).min(span)
    }
}

impl<const N: usize> Integrator<N> for Rk23 {
    fn advance<E, F>(&mut self, f: &mut F, t0: f64, y0: [f64; N], t1: f64) -> Result<[f64; N], SolveError<E, N>>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    {
        let mut t = t0;
        let mut y = y0;
        if t1 <= t0 {
            return Ok(y);
        }
        let mut k1 = f(t, &y).map_err(|source| SolveError::Rhs { t, y, source })?;
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(&y, &k1, t1 - t0),
        };
        loop {
            let free = h.min(self.max_step);
            let clipped = t + free >= t1 - 1e-12 * t1.abs().max(1.0);
            let h_try = if clipped { t1 - t } else { free };
            let min_step = self.min_step * t.abs().max(1.0);

            let stages = (|| {
                let k2 = f(t + 0.5 * h_try, &axpy(&y, h_try, &[(0.5, &k1)]))?;
                let k3 = f(t + 0.75 * h_try, &axpy(&y, h_try, &[(0.75, &k2)]))?;
                let y_new = axpy(&y, h_try, &[(2.0 / 9.0, &k1), (1.0 / 3.0, &k2), (4.0 / 9.0, &k3)]);
                let k4 = f(t + h_try, &y_new)?;
                Ok((k2, k3, k4, y_new))
            })();
            let (k2, k3, k4, y_new) = match stages {
                Ok(v) => v,
                Err(source) => {
                    h = 0.25 * h_try;
                    if h < min_step {
                        return Err(SolveError::Rhs { t, y, source });
                    }
                    continue;
                }
            };

            let mut err = 0.0;
            for i in 0..N {
                let e = h_try
                    * (-5.0 / 72.0 * k1[i] + 1.0 / 12.0 * k2[i] + 1.0 / 9.0 * k3[i] - 1.0 / 8.0 * k4[i]);
                err += (e / self.scale(y[i], y_new[i])).powi(2);
            }
            let err = (err / N as f64).sqrt();

            if err <= 1.0 {
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
                let next = h_try * factor;
                h = if clipped && factor >= 1.0 { free.max(next) } else { next };
                y = y_new;
                k1 = k4;
                if clipped {
                    self.h = Some(h);
                    return Ok(y);
                }
                t += h_try;
            } else {
                h = h_try * (0.9 * err.powf(-1.0 / 3.0)).max(0.2);
                if h < min_step {
                    return Err(SolveError::StepUnderflow { t, h, y });
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Rk4 {
    pub step: f64,
}

impl Rk4 {
    pub fn new(step: f64) -> Self {
        Rk4 { step }
    }
}

impl<const N: usize> Integrator<N> for Rk4 {
    fn advance<E, F>(&mut self, f: &mut F, t0: f64, y0: [f64; N], t1: f64) -> Result<[f64; N], SolveError<E, N>>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(y0);
        }
        let n = (span / self.step - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        let mut y = y0;
        for i in 0..n {
            let t = t0 + i as f64 * h;
            let wrap = |y: [f64; N]| move |source| SolveError::Rhs { t, y, source };
            let k1 = f(t, &y).map_err(wrap(y))?;
            let k2 = f(t + 0.5 * h, &axpy(&y, h, &[(0.5, &k1)])).map_err(wrap(y))?;
            let k3 = f(t + 0.5 * h, &axpy(&y, h, &[(0.5, &k2)])).map_err(wrap(y))?;
            let k4 = f(t + h, &axpy(&y, h, &[(1.0, &k3)])).map_err(wrap(y))?;
            y = axpy(&y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]);
        }
        Ok(y)
    }
}

/// Either integrator behind one value.
#[derive(Clone, Debug)]
pub enum AnyIntegrator {
    Rk23(Rk23),
    Rk4(Rk4),
}

impl<const N: usize> Integrator<N> for AnyIntegrator {
    fn advance<E, F>(&mut self, f: &mut F, t0: f64, y0: [f64; N], t1: f64) -> Result<[f64; N], SolveError<E, N>>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    {
        match self {
            AnyIntegrator::Rk23(s) => s.advance(f, t0, y0, t1),
            AnyIntegrator::Rk4(s) => s.advance(f, t0, y0, t1),
        }
    }
}
