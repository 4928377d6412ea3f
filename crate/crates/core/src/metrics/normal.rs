//! Standard normal distribution function and quantile.
//!
//! `normal_cdf` follows Cody's rational Chebyshev approximations (the scheme
//! behind most `pnorm` implementations); the tail branch splits the exponent
//! to keep full relative accuracy. `normal_quantile` is Wichura's AS241
//! (PPND16), accurate to about 1e-16 relative.

use crate::error::{Error, Result};
use crate::scalar::Real;

const A: [f64; 5] = [
    2.235_252_035_460_683_9,
    161.028_231_068_555_88,
    1_067.689_485_460_370_9,
    18_154.981_253_343_561,
    0.065_682_337_918_207_449,
];
const B: [f64; 4] = [
    47.202_581_904_688_242,
    976.098_551_737_776_69,
    10_260.932_208_618_978,
    45_507.789_335_026_73,
];
const C: [f64; 9] = [
    0.398_941_512_088_134_67,
    8.883_149_794_388_375_9,
    93.506_656_132_177_856,
    597.270_276_394_800_26,
    2_494.537_585_290_372_7,
    6_848.190_450_536_282_3,
    11_602.651_437_647_35,
    9_842.714_838_383_978,
    1.076_557_677_372_019_2e-8,
];
const D: [f64; 8] = [
    22.266_688_044_328_116,
    235.387_901_782_625,
    1_519.377_599_407_554_8,
    6_485.558_298_266_761,
    18_615.571_640_885_098,
    34_900.952_721_145_977,
    38_912.003_286_093_271,
    19_685.429_676_859_991,
];
const P: [f64; 6] = [
    0.215_898_534_057_956_99,
    0.127_401_161_160_247_36,
    0.022_235_277_870_649_807,
    0.001_421_619_193_227_893_5,
    2.911_287_495_116_879_2e-5,
    0.023_073_441_764_940_173,
];
const Q: [f64; 5] = [
    1.284_260_096_144_911_2,
    0.468_238_212_480_865_12,
    0.065_988_137_868_928_552,
    0.003_782_396_332_027_582_4,
    7.297_515_550_839_662e-5,
];

const SQRT_32: f64 = 5.656_854_249_492_380_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_94;

/// `exp(-y²/2)` evaluated as a product of two factors, splitting `y` at a
/// multiple of 1/16 so the large factor is computed from an exact square.
#[inline]
fn split_gauss_tail<T: Real>(y: T) -> T {
    let sixteen = T::lit(16.0);
    let half = T::lit(0.5);
    let ysq = (y * sixteen).trunc() / sixteen;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq * half).exp() * (-del * half).exp()
}

/// Returns `(Φ(x), 1 − Φ(x))`, each accurate in relative terms.
pub fn normal_cdf_both<T: Real>(x: T) -> (T, T) {
    if x.is_nan() {
        return (x, x);
    }
    if x.is_infinite() {
        return if x > T::zero() {
            (T::one(), T::zero())
        } else {
            (T::zero(), T::one())
        };
    }
    let half = T::lit(0.5);
    let y = x.abs();
    if y <= T::lit(0.674_489_75) {
        let (mut xnum, mut xden) = (T::zero(), T::zero());
        if y > T::epsilon() * half {
            let xsq = x * x;
            xnum = T::lit(A[4]) * xsq;
            xden = xsq;
            for i in 0..3 {
                xnum = (xnum + T::lit(A[i])) * xsq;
                xden = (xden + T::lit(B[i])) * xsq;
            }
        }
        let temp = x * (xnum + T::lit(A[3])) / (xden + T::lit(B[3]));
        (half + temp, half - temp)
    } else if y <= T::lit(SQRT_32) {
        let mut xnum = T::lit(C[8]) * y;
        let mut xden = y;
        for i in 0..7 {
            xnum = (xnum + T::lit(C[i])) * y;
            xden = (xden + T::lit(D[i])) * y;
        }
        let temp = (xnum + T::lit(C[7])) / (xden + T::lit(D[7]));
        let tail = split_gauss_tail(y) * temp;
        if x > T::zero() {
            (T::one() - tail, tail)
        } else {
            (tail, T::one() - tail)
        }
    } else {
        let xsq = T::one() / (x * x);
        let mut xnum = T::lit(P[5]) * xsq;
        let mut xden = xsq;
        for i in 0..4 {
            xnum = (xnum + T::lit(P[i])) * xsq;
            xden = (xden + T::lit(Q[i])) * xsq;
        }
        let mut temp = xsq * (xnum + T::lit(P[4])) / (xden + T::lit(Q[4]));
        temp = (T::lit(INV_SQRT_2PI) - temp) / y;
        let tail = split_gauss_tail(y) * temp;
        if x > T::zero() {
            (T::one() - tail, tail)
        } else {
            (tail, T::one() - tail)
        }
    }
}

/// Standard normal distribution function Φ(x). Accepts ±∞.
#[inline]
pub fn normal_cdf<T: Real>(x: T) -> T {
    normal_cdf_both(x).0
}

/// Standard normal density φ(x).
#[inline]
pub fn normal_pdf<T: Real>(x: T) -> T {
    T::lit(INV_SQRT_2PI) * (-(x * x) * T::lit(0.5)).exp()
}

/// Standard normal quantile Φ⁻¹(u) for 0 < u < 1.
pub fn normal_quantile<T: Real>(u: T) -> Result<T> {
    if !(u > T::zero() && u < T::one()) {
        return Err(Error::Argument(format!(
            "normal_quantile requires 0 < u < 1, got {u}"
        )));
    }
    Ok(T::lit(quantile_unchecked(u.to_f64_lossy())))
}

/// AS241 without the domain check. Callers guarantee `0 < u < 1`.
#[inline]
pub(crate) fn quantile_unchecked(u: f64) -> f64 {
    let q = u - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q
            * (((((((r * 2_509.080_928_730_122_7 + 33_430.575_583_588_128) * r
                + 67_265.770_927_008_7)
                * r
                + 45_921.953_931_549_871)
                * r
                + 13_731.693_765_509_461)
                * r
                + 1_971.590_950_306_551_4)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_6)
            / (((((((r * 5_226.495_278_852_545_9 + 28_729.085_735_721_943) * r
                + 39_307.895_800_092_711)
                * r
                + 21_213.794_301_586_596)
                * r
                + 5_394.196_021_424_751_1)
                * r
                + 687.187_007_492_057_91)
                * r
                + 42.313_330_701_600_911)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { u } else { 1.0 - u };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_185) * r
            + 0.241_780_725_177_450_61)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_6)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_6)
            / (((((((r * 1.050_750_071_644_416_8e-9 + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_07)
                * r
                + 0.689_767_334_985_100_05)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_758_8)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_123)
            * r
            + 0.296_560_571_828_504_89)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_8)
            / (((((((r * 2.044_263_103_389_939_8e-15 + 1.421_511_758_316_445_9e-7) * r
                + 1.846_318_317_510_054_7e-5)
                * r
                + 7.868_691_311_456_132_6e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_81)
                * r
                + 0.599_832_206_555_887_94)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(normal_cdf(0.0_f64), 0.5);
        assert!((normal_cdf(1.0_f64) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_quantile(0.975_f64).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
    }

    #[test]
    fn quantile_domain() {
        assert!(normal_quantile(0.0_f64).is_err());
        assert!(normal_quantile(1.0_f64).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn round_trip() {
        for i in 1..2000 {
            let u = i as f64 / 2000.0;
            let x = normal_quantile(u).unwrap();
            assert!((normal_cdf(x) - u).abs() < 1e-14, "u={u}");
        }
        for &u in &[1e-300f64, 1e-100, 1e-20, 1e-10] {
            let x = normal_quantile(u).unwrap();
            assert!(((normal_cdf(x) - u) / u).abs() < 1e-12, "u={u}");
        }
    }

    #[test]
    fn f32_path() {
        assert!((normal_cdf(1.0_f32) - 0.841_344_7).abs() < 1e-6);
    }
}
