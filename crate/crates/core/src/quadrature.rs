//! Global adaptive Gauss–Kronrod (7/15) quadrature on a mesh graded toward a
//! known endpoint singularity.
//!
//! Angular integrands in this crate behave like `θ^{s-ν-1}` near `θ = 0`, so
//! the initial mesh is geometric, `θ_k = upper · 2^{-k}` for `k = 0..=depth`,
//! plus the residual panel `[0, upper · 2^{-depth-1}]`. Panels are then
//! bisected in order of largest error estimate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::scalar::{CompensatedSum, Real};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} exceeds tolerance {tolerance:e} after {panels} panels")]
    NotConverged {
        estimate: f64,
        error: f64,
        tolerance: f64,
        panels: usize,
    },
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
}

/// Result of a successful integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    /// Estimated absolute error.
    pub error: T,
    /// Integral of `|f|`, the scale the relative tolerance refers to.
    pub l1: T,
    pub panels: usize,
    pub evaluations: usize,
}

/// Options for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct Options<T> {
    /// Relative tolerance with respect to `∫|f|`.
    pub rel_tol: T,
    /// Absolute error accepted regardless of `∫|f|`, for integrands that
    /// cancel to (nearly) zero.
    pub abs_tol: T,
    /// Number of geometric panels toward the lower endpoint.
    pub depth: usize,
    pub max_panels: usize,
}

impl<T: Real> Options<T> {
    pub fn with_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol: T::c(rel_tol).max(T::epsilon() * T::c(50.0)),
            abs_tol: T::zero(),
            depth: 40,
            max_panels: 20_000,
        }
    }
}

impl<T: Real> Default for Options<T> {
    fn default() -> Self {
        Self::with_tol(1e-9)
    }
}

#[derive(Clone, Copy, Debug)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
    l1: T,
}

impl<T: Real> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Panel<T> {}
impl<T: Real> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

fn kronrod<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Result<Panel<T>, QuadratureError> {
    let center = (a + b) * T::c(0.5);
    let half = (b - a) * T::c(0.5);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFinite {
            at: center.to_f64_lossy(),
        });
    }
    let mut kron = fc * T::c(WGK[7]);
    let mut gauss = fc * T::c(WG[3]);
    let mut l1 = fc.abs() * T::c(WGK[7]);
    let mut fv = [T::zero(); 14];
    for k in 0..7 {
        let dx = half * T::c(XGK[k]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        if !f1.is_finite() || !f2.is_finite() {
            return Err(QuadratureError::NonFinite {
                at: (center - dx).to_f64_lossy(),
            });
        }
        fv[2 * k] = f1;
        fv[2 * k + 1] = f2;
        kron += (f1 + f2) * T::c(WGK[k]);
        l1 += (f1.abs() + f2.abs()) * T::c(WGK[k]);
        if k % 2 == 1 {
            gauss += (f1 + f2) * T::c(WG[k / 2]);
        }
    }
    // QUADPACK-style error scaling.
    let mean = kron * T::c(0.5);
    let mut asc = (fc - mean).abs() * T::c(WGK[7]);
    for k in 0..7 {
        asc += ((fv[2 * k] - mean).abs() + (fv[2 * k + 1] - mean).abs()) * T::c(WGK[k]);
    }
    let asc = asc * half.abs();
    let raw = ((kron - gauss) * half).abs();
    let mut error = raw;
    if asc > T::zero() && raw > T::zero() {
        error = asc * T::one().min((T::c(200.0) * raw / asc).powf(T::c(1.5)));
    }
    let l1 = l1 * half.abs();
    let floor = T::c(50.0) * T::epsilon() * l1;
    if floor > error {
        error = floor;
    }
    Ok(Panel {
        a,
        b,
        value: kron * half,
        error,
        l1,
    })
}

/// Integrates `f` over `[lower, upper]` with the initial mesh graded toward `lower`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    lower: T,
    upper: T,
    opts: &Options<T>,
) -> Result<Integral<T>, QuadratureError> {
    let mut breaks = Vec::with_capacity(opts.depth + 2);
    breaks.push(upper);
    let width = upper - lower;
    let mut h = width;
    for _ in 0..opts.depth {
        h *= T::c(0.5);
        if h <= T::epsilon() * (lower.abs() + width) {
            break;
        }
        breaks.push(lower + h);
    }
    breaks.push(lower);
    breaks.reverse();
    integrate_on_mesh(&mut f, &breaks, opts)
}

/// Integrates `f` on `[0, upper]` with geometric grading toward `0`.
pub fn integrate_graded<T: Real, F: FnMut(T) -> T>(
    f: F,
    upper: T,
    opts: &Options<T>,
) -> Result<Integral<T>, QuadratureError> {
    integrate(f, T::zero(), upper, opts)
}

/// Adaptive integration starting from an explicit increasing list of breakpoints.
pub fn integrate_on_mesh<T: Real, F: FnMut(T) -> T>(
    f: &mut F,
    breaks: &[T],
    opts: &Options<T>,
) -> Result<Integral<T>, QuadratureError> {
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod(f, w[0], w[1])?);
            evaluations += 15;
        }
    }
    loop {
        let (value, error, l1) = totals(&heap);
        let tolerance = (opts.rel_tol * l1).max(opts.abs_tol);
        if error <= tolerance {
            return Ok(Integral {
                value,
                error,
                l1,
                panels: heap.len(),
                evaluations,
            });
        }
        let worst = match heap.peek() {
            Some(p) => *p,
            None => {
                return Ok(Integral {
                    value,
                    error,
                    l1,
                    panels: 0,
                    evaluations,
                })
            }
        };
        let mid = (worst.a + worst.b) * T::c(0.5);
        let too_narrow = mid <= worst.a || mid >= worst.b;
        if heap.len() >= opts.max_panels || too_narrow {
            return Err(QuadratureError::NotConverged {
                estimate: value.to_f64_lossy(),
                error: error.to_f64_lossy(),
                tolerance: tolerance.to_f64_lossy(),
                panels: heap.len(),
            });
        }
        heap.pop();
        heap.push(kronrod(f, worst.a, mid)?);
        heap.push(kronrod(f, mid, worst.b)?);
        evaluations += 30;
    }
}

fn totals<T: Real>(heap: &BinaryHeap<Panel<T>>) -> (T, T, T) {
    let mut value = CompensatedSum::new();
    let mut error = CompensatedSum::new();
    let mut l1 = CompensatedSum::new();
    for p in heap.iter() {
        value.add(p.value);
        error.add(p.error);
        l1.add(p.l1);
    }
    (value.value(), error.value(), l1.value())
}
