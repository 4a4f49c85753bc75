//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

#![allow(clippy::excessive_precision)]

use alloc::vec::Vec;
use core::fmt;

// Kronrod abscissae on [0, 1] (symmetric), with the 15-point Kronrod and
// embedded 7-point Gauss weights. Odd indices are the Gauss nodes.
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
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Semi-infinite integrals are cut where the integrand drops below this
    /// fraction of its sampled peak.
    pub tail_cutoff: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_subdivisions: 2000,
            tail_cutoff: 1e-16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadratureError {
    NotConverged {
        value: f64,
        error: f64,
        subdivisions: usize,
    },
    NonFinite {
        at: f64,
    },
    TailNotDecaying {
        reached: f64,
    },
}

impl fmt::Display for QuadratureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadratureError::NotConverged {
                value,
                error,
                subdivisions,
            } => write!(
                f,
                "quadrature did not converge after {subdivisions} subdivisions (value {value}, error {error:e})"
            ),
            QuadratureError::NonFinite { at } => write!(f, "integrand is not finite at {at}"),
            QuadratureError::TailNotDecaying { reached } => {
                write!(f, "integrand tail has not decayed by x = {reached}")
            }
        }
    }
}

impl core::error::Error for QuadratureError {}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment, QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFinite { at: center });
    }
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadratureError::NonFinite { at: x1 });
        }
        if !f2.is_finite() {
            return Err(QuadratureError::NonFinite { at: x2 });
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok(Segment {
        a,
        b,
        value: kronrod * half,
        error: libm::fabs((kronrod - gauss) * half),
    })
}

/// `int_a^b f(x) dx`, bisecting the worst segment until the summed error
/// estimate is below `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    config: &QuadratureConfig,
) -> Result<Estimate, QuadratureError> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let mut segments: Vec<Segment> = Vec::with_capacity(64);
    segments.push(kronrod(&f, a, b)?);
    loop {
        let (value, error) = segments.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if error <= config.abs_tol {
            return Ok(Estimate { value, error });
        }
        if segments.len() >= config.max_subdivisions {
            return Err(QuadratureError::NotConverged {
                value,
                error,
                subdivisions: segments.len(),
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            return Err(QuadratureError::NotConverged {
                value,
                error,
                subdivisions: segments.len() + 1,
            });
        }
        segments.push(kronrod(&f, seg.a, mid)?);
        segments.push(kronrod(&f, mid, seg.b)?);
    }
}

const TAIL_SAMPLES: usize = 32;
const MAX_TAIL_LENGTH: f64 = 1e6;

/// Finite upper limit past which `|f|` stays below `tail_cutoff` times its
/// sampled peak on `[a, upper]`.
pub fn tail_cutoff<F: Fn(f64) -> f64>(f: &F, a: f64, config: &QuadratureConfig) -> Result<f64, QuadratureError> {
    let mut length = 1.0;
    let mut peak: f64 = 0.0;
    loop {
        let upper = a + length;
        for k in 0..=TAIL_SAMPLES {
            let x = a + length * k as f64 / TAIL_SAMPLES as f64;
            let v = libm::fabs(f(x));
            if v.is_finite() {
                peak = peak.max(v);
            }
        }
        let threshold = config.tail_cutoff * peak;
        let at_upper = libm::fabs(f(upper));
        let beyond = libm::fabs(f(a + 1.5 * length));
        if at_upper <= threshold && beyond <= threshold {
            return Ok(upper);
        }
        if length > MAX_TAIL_LENGTH {
            return Err(QuadratureError::TailNotDecaying { reached: upper });
        }
        length *= 2.0;
    }
}

/// `int_a^inf f(x) dx` for integrands with a decaying tail.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    config: &QuadratureConfig,
) -> Result<Estimate, QuadratureError> {
    let upper = tail_cutoff(&f, a, config)?;
    integrate(f, a, upper, config)
}
