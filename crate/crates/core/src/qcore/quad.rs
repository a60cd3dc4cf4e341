use num_complex::Complex;

use crate::error::{Error, Result};

/// Real samples of a function of time on an increasing grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SampledFunction {
    /// Samples on an explicit grid, which must be strictly increasing.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Invalid(format!(
                "{} sample times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::Invalid("sampled function needs at least one sample".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("sample times must be strictly increasing".into()));
        }
        Ok(Self { times, values })
    }

    /// Samples `values[k]` at `t0 + k * dt`.
    pub fn uniform(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Invalid(format!("grid step must be positive, got {dt}")));
        }
        let times = (0..values.len()).map(|k| t0 + k as f64 * dt).collect();
        Self::new(times, values)
    }

    /// Tabulates `f` at `n` points `t0 + k * dt`.
    pub fn tabulate(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..n).map(|k| f(t0 + k as f64 * dt)).collect();
        Self::uniform(t0, dt, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Piecewise-linear interpolation, held constant outside the grid.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    fn uniform_step(&self) -> Result<f64> {
        let dt = self.times[1] - self.times[0];
        for (index, w) in self.times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) {
                return Err(Error::NonUniformGrid { index, expected: dt });
            }
        }
        Ok(dt)
    }
}

/// Running trapezoid integral on the same grid, starting at 0.
pub fn trapezoid_cumulative(f: &SampledFunction) -> Result<SampledFunction> {
    if f.len() < 2 {
        return Err(Error::Invalid("trapezoid integration needs at least 2 samples".into()));
    }
    let dt = f.uniform_step()?;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(f.len());
    out.push(0.0);
    for w in f.values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    Ok(SampledFunction {
        times: f.times.clone(),
        values: out,
    })
}

/// The sine integral `Si(x) = int_0^x sin(t)/t dt`.
///
/// Power series below |x| = 2, continued fraction for the complex
/// exponential integral `E1(ix)` above.
pub fn sine_integral(x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let t = x.abs();
    if t == 0.0 {
        return 0.0;
    }
    let si = if t <= 2.0 {
        let mut sum = 0.0;
        let mut term = t; // (-1)^n t^(2n+1) / (2n+1)!
        let mut n = 0usize;
        loop {
            let contrib = term / (2 * n + 1) as f64;
            sum += contrib;
            if contrib.abs() < EPS * sum.abs() {
                break;
            }
            n += 1;
            term *= -t * t / ((2 * n) * (2 * n + 1)) as f64;
        }
        sum
    } else {
        let one = Complex::new(1.0, 0.0);
        let mut b = Complex::new(1.0, t);
        let mut c = Complex::new(1.0 / TINY, 0.0);
        let mut d = one / b;
        let mut h = d;
        for i in 2..10_000 {
            let a = -((i - 1) * (i - 1)) as f64;
            b += 2.0;
            d = one / (d * a + b);
            c = b + Complex::new(a, 0.0) / c;
            let del = c * d;
            h *= del;
            if (del.re - 1.0).abs() + del.im.abs() < EPS {
                break;
            }
        }
        h *= Complex::new(t.cos(), -t.sin());
        std::f64::consts::FRAC_PI_2 + h.im
    };
    si.copysign(x)
}
