//! Adaptive Gauss–Kronrod (7, 15) quadrature.
//!
//! Used as the numeric fallback for forcing history integrals and for
//! cross-checking closed forms. Intervals are bisected until the
//! Kronrod/Gauss discrepancy drops below the requested tolerance.

use alloc::vec::Vec;

use crate::math::abs;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (7-point rule).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, abs((kronrod - gauss) * half))
}

/// Integrates `f` over `[a, b]` to the combined tolerance
/// `max(abs_tol, rel_tol·|I|)`. Returns the estimate and the error bound.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let mut segments: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(&f, a, b);
    segments.push((a, b, v, e));
    let mut total = v;
    let mut err = e;
    let max_segments = 4000;
    while err > abs_tol.max(rel_tol * abs(total)) && segments.len() < max_segments {
        // bisect the segment with the largest error
        let (idx, _) = segments
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, s)| if s.3 > best.1 { (i, s.3) } else { best });
        let (sa, sb, sv, se) = segments.swap_remove(idx);
        let mid = 0.5 * (sa + sb);
        let (lv, le) = gk15(&f, sa, mid);
        let (rv, re) = gk15(&f, mid, sb);
        total += lv + rv - sv;
        err += le + re - se;
        segments.push((sa, mid, lv, le));
        segments.push((mid, sb, rv, re));
    }
    // re-sum to shed accumulated cancellation in the running totals
    let total = segments.iter().map(|s| s.2).sum();
    let err = segments.iter().map(|s| s.3).sum();
    (total, err)
}

/// Integrates `f` over `(−∞, b]` by the substitution `ξ = b − s/(1 − s)`.
pub fn integrate_to(f: impl Fn(f64) -> f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    let g = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - s;
        let xi = b - s / one_minus;
        let jac = 1.0 / (one_minus * one_minus);
        let val = f(xi) * jac;
        if val.is_finite() {
            val
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}
