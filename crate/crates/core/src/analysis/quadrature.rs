//! Globally adaptive Gauss-Kronrod (7/15 point) quadrature.

use crate::error::{Error, Result};

/// Kronrod abscissae on [-1, 1], non-negative half, outermost first.
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

/// Gauss weights for the 7-point rule (nodes XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Estimated absolute error.
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Piece {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
    }
}

/// Integrates `f` over the consecutive intervals between `breaks`
/// (at least two increasing points), bisecting the piece with the largest
/// error estimate until the total error is below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    let mut pieces: Vec<Piece> = breaks.windows(2).map(|w| kronrod(&f, w[0], w[1])).collect();
    loop {
        let value: f64 = pieces.iter().map(|p| p.value).sum();
        let error: f64 = pieces.iter().map(|p| p.error).sum();
        let tolerance = abs_tol.max(rel_tol * value.abs());
        if error <= tolerance {
            return Ok(Integral { value, error });
        }
        if pieces.len() >= MAX_INTERVALS || !error.is_finite() {
            return Err(Error::Quadrature {
                achieved: error,
                tolerance,
            });
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("at least one piece");
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        pieces.push(kronrod(&f, p.a, mid));
        pieces.push(kronrod(&f, mid, p.b));
    }
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    integrate_breaks(f, &[a, b], abs_tol, rel_tol)
}

/// `∫_a^∞ f`, through `x = a + (1 - s)/s` on `s ∈ (0, 1]`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    let g = |s: f64| {
        let x = a + (1.0 - s) / s;
        let v = f(x) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    // Extra breakpoints near s = 0 let the first pass see tails that live
    // far out on the x axis.
    let breaks = [0.0, 1.0 / 1024.0, 1.0 / 64.0, 1.0 / 8.0, 0.5, 1.0];
    integrate_breaks(g, &breaks, abs_tol, rel_tol)
}

/// `∫_{-∞}^{∞} f`, split at 0.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    let right = integrate_to_infinity(&f, 0.0, abs_tol / 2.0, rel_tol)?;
    let left = integrate_to_infinity(|x| f(-x), 0.0, abs_tol / 2.0, rel_tol)?;
    Ok(Integral {
        value: left.value + right.value,
        error: left.error + right.error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, 1e-12, 0.0).unwrap();
        assert!((r.value - (64.0 / 6.0 - 1.0 / 6.0 - 9.0)).abs() < 1e-13);
    }

    #[test]
    fn known_integrals() {
        let e = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-12, 0.0).unwrap();
        assert!((e.value - 1.0).abs() < 1e-11);
        let g = integrate_real_line(|x| (-x * x).exp(), 1e-12, 0.0).unwrap();
        assert!((g.value - std::f64::consts::PI.sqrt()).abs() < 1e-11);
        let peaked = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10, 1e-12).unwrap();
        assert!((peaked.value - 2.0 * 100.0 * (100.0f64).atan()).abs() < 1e-8);
    }

    #[test]
    fn reports_non_convergence() {
        // divergent at 0
        let err = integrate(|x| 1.0 / x, 0.0, 1.0, 1e-9, 0.0);
        assert!(matches!(err, Err(Error::Quadrature { .. })));
    }
}
