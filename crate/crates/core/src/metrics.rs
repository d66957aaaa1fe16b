//! L_p distance kernels.
//!
//! Every kernel computes the p-th power sum `Σ|x_i − y_i|^p` with eight
//! independent single-precision accumulators; the `1/p` root is applied
//! separately because ranking only needs the power sum. Dispatch is on the
//! exact value of p:
//!
//! | tier       | p          | per-component cost      |
//! |------------|------------|-------------------------|
//! | `Fast`     | 1, 2       | abs / multiply          |
//! | `SqrtFast` | 0.5, 1.5   | one square root         |
//! | `General`  | anything   | one `powf`              |

use std::fmt;
use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const LANES: usize = 8;

/// Cost class of an L_p kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    Fast,
    SqrtFast,
    General,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Fast => "fast",
            Tier::SqrtFast => "sqrt-fast",
            Tier::General => "general",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kernel {
    L1,
    L2,
    Half,
    ThreeHalves,
    General(f32),
}

/// The exponent p of an L_p metric, validated to lie in (0, 2].
#[derive(Debug, Clone, Copy)]
pub struct MetricParam {
    p: f64,
    kernel: Kernel,
}

impl MetricParam {
    pub const L_HALF: MetricParam = MetricParam {
        p: 0.5,
        kernel: Kernel::Half,
    };
    pub const L1: MetricParam = MetricParam {
        p: 1.0,
        kernel: Kernel::L1,
    };
    pub const L2: MetricParam = MetricParam {
        p: 2.0,
        kernel: Kernel::L2,
    };

    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0 && p <= 2.0) {
            return Err(Error::InvalidMetric(p));
        }
        // Exact comparison: p is configuration, not a computed quantity.
        let kernel = if p == 1.0 {
            Kernel::L1
        } else if p == 2.0 {
            Kernel::L2
        } else if p == 0.5 {
            Kernel::Half
        } else if p == 1.5 {
            Kernel::ThreeHalves
        } else {
            Kernel::General(p as f32)
        };
        Ok(MetricParam { p, kernel })
    }

    pub fn p(self) -> f64 {
        self.p
    }

    pub fn tier(self) -> Tier {
        match self.kernel {
            Kernel::L1 | Kernel::L2 => Tier::Fast,
            Kernel::Half | Kernel::ThreeHalves => Tier::SqrtFast,
            Kernel::General(_) => Tier::General,
        }
    }

    /// `Σ|x_i − y_i|^p` without validation. Callers guarantee equal lengths
    /// and finite inputs (checked once when a [`crate::Dataset`] or
    /// [`Vector`] is constructed).
    #[inline]
    pub fn pth_power(self, x: &[f32], y: &[f32]) -> f32 {
        debug_assert_eq!(x.len(), y.len());
        #[cfg(test)]
        probe::record(self.p);
        match self.kernel {
            Kernel::L1 => accumulate(x, y, |a| a),
            Kernel::L2 => accumulate(x, y, |a| a * a),
            Kernel::Half => accumulate(x, y, |a| a.sqrt()),
            Kernel::ThreeHalves => accumulate(x, y, |a| a * a.sqrt()),
            Kernel::General(p) => accumulate(x, y, |a| a.powf(p)),
        }
    }

    /// Maps a p-th power sum back to the L_p distance.
    #[inline]
    pub fn root(self, pth_power: f32) -> f32 {
        match self.kernel {
            Kernel::L1 => pth_power,
            Kernel::L2 => pth_power.sqrt(),
            Kernel::Half => pth_power * pth_power,
            Kernel::ThreeHalves => pth_power.powf(2.0 / 3.0),
            Kernel::General(p) => pth_power.powf(1.0 / p),
        }
    }

    #[inline]
    pub fn distance(self, x: &[f32], y: &[f32]) -> f32 {
        self.root(self.pth_power(x, y))
    }
}

impl PartialEq for MetricParam {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
    }
}

impl fmt::Display for MetricParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.p)
    }
}

impl TryFrom<f64> for MetricParam {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        MetricParam::new(p)
    }
}

#[inline(always)]
fn accumulate(x: &[f32], y: &[f32], f: impl Fn(f32) -> f32) -> f32 {
    let mut acc = [0.0f32; LANES];
    let xs = x.chunks_exact(LANES);
    let ys = y.chunks_exact(LANES);
    let (xr, yr) = (xs.remainder(), ys.remainder());
    for (a, b) in xs.zip(ys) {
        for i in 0..LANES {
            acc[i] += f((a[i] - b[i]).abs());
        }
    }
    let mut tail = 0.0f32;
    for (a, b) in xr.iter().zip(yr) {
        tail += f((a - b).abs());
    }
    let mut sum = tail;
    for a in acc {
        sum += a;
    }
    sum
}

/// Power-based p-th power sum for any p, bypassing the fast paths.
pub fn general_pth_power(x: &[f32], y: &[f32], p: MetricParam) -> f32 {
    let p = p.p as f32;
    accumulate(x, y, |a| a.powf(p))
}

/// A finite, non-empty vector of single-precision components.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f32>);

impl Vector {
    pub fn new(components: Vec<f32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param("vector must have at least one component"));
        }
        check_finite(&components, 0)?;
        Ok(Vector(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

impl AsRef<[f32]> for Vector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

pub(crate) fn check_finite(row: &[f32], row_index: usize) -> Result<()> {
    match row.iter().position(|v| !v.is_finite()) {
        Some(col) => Err(Error::NonFinite {
            row: row_index,
            col,
        }),
        None => Ok(()),
    }
}

fn check_pair(x: &[f32], y: &[f32]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::param("vectors must have at least one component"));
    }
    check_finite(x, 0)?;
    check_finite(y, 1)
}

/// `(Σ|x_i − y_i|^p)^(1/p)`.
pub fn lp_distance(x: &[f32], y: &[f32], p: MetricParam) -> Result<f32> {
    check_pair(x, y)?;
    Ok(p.distance(x, y))
}

/// `Σ|x_i − y_i|^p`, which orders points exactly as [`lp_distance`] does.
pub fn lp_distance_pth_power(x: &[f32], y: &[f32], p: MetricParam) -> Result<f32> {
    check_pair(x, y)?;
    Ok(p.pth_power(x, y))
}

/// Mean wall-clock nanoseconds per distance evaluation at dimension `d`.
pub fn time_distance_kernel(d: usize, p: MetricParam, reps: usize) -> Result<f64> {
    if d == 0 || reps == 0 {
        return Err(Error::param("d and reps must be positive"));
    }
    const POOL: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ d as u64);
    let pool: Vec<Vec<f32>> = (0..POOL + 1)
        .map(|_| (0..d).map(|_| rng.gen::<f32>()).collect())
        .collect();

    let mut sink = 0.0f32;
    for i in 0..reps.min(1000) {
        sink += p.distance(&pool[i % POOL], &pool[i % POOL + 1]);
    }
    let start = Instant::now();
    for i in 0..reps {
        let (x, y) = (&pool[i % POOL], &pool[i % POOL + 1]);
        sink += p.distance(black_box(x), black_box(y));
    }
    let elapsed = start.elapsed();
    black_box(sink);
    Ok(elapsed.as_nanos() as f64 / reps as f64)
}
