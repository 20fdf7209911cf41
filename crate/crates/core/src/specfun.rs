//! Error functions on the real line.
//!
//! `erf`, `erfc` and the scaled `erfcx(x) = exp(x²)·erfc(x)` share W. J. Cody's
//! three-interval rational approximations. The far tail of `erfc` is assembled
//! as `exp(-x²)·erfcx(x)` with `x²` split so that the exponential keeps full
//! relative accuracy out to the underflow threshold.

/// `1/√π`.
pub const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_286_948_079_451_560_772_586;

// erf on |x| <= 0.46875
const A: [f64; 5] = [
    3.161_123_743_870_565_6,
    1.138_641_541_510_501_56e2,
    3.774_852_376_853_020_21e2,
    3.209_377_589_138_469_47e3,
    1.857_777_061_846_031_53e-1,
];
const B: [f64; 4] = [
    2.360_129_095_234_412_09e1,
    2.440_246_379_344_441_73e2,
    1.282_616_526_077_372_28e3,
    2.844_236_833_439_170_62e3,
];

// erfcx on 0.46875 < x <= 4
const C: [f64; 9] = [
    5.641_884_969_886_700_89e-1,
    8.883_149_794_388_375_94,
    6.611_919_063_714_162_95e1,
    2.986_351_381_974_001_31e2,
    8.819_522_212_417_690_9e2,
    1.712_047_612_634_070_58e3,
    2.051_078_377_826_071_47e3,
    1.230_339_354_797_997_25e3,
    2.153_115_354_744_038_46e-8,
];
const D: [f64; 8] = [
    1.574_492_611_070_983_47e1,
    1.176_939_508_913_124_99e2,
    5.371_811_018_620_098_58e2,
    1.621_389_574_566_690_19e3,
    3.290_799_235_733_459_63e3,
    4.362_619_090_143_247_16e3,
    3.439_367_674_143_721_64e3,
    1.230_339_354_803_749_42e3,
];

// erfcx on x > 4, rational in 1/x²
const P: [f64; 6] = [
    3.053_266_349_612_323_44e-1,
    3.603_448_999_498_044_39e-1,
    1.257_817_261_112_292_46e-1,
    1.608_378_514_874_227_66e-2,
    6.587_491_615_298_378_03e-4,
    1.631_538_713_730_209_78e-2,
];
const Q: [f64; 5] = [
    2.568_520_192_289_822_42,
    1.872_952_849_923_460_47,
    5.279_051_029_514_284_12e-1,
    6.051_834_131_244_131_91e-2,
    2.335_204_976_268_691_85e-3,
];

const SMALL: f64 = 0.46875;
// erfc(x) underflows past this point.
const ERFC_UNDERFLOW: f64 = 26.543;

#[inline]
fn erf_small(x: f64) -> f64 {
    let z = x * x;
    let num = (((A[4] * z + A[0]) * z + A[1]) * z + A[2]) * z + A[3];
    let den = (((z + B[0]) * z + B[1]) * z + B[2]) * z + B[3];
    x * num / den
}

/// `erfcx(y)` for `y > 0.46875`.
#[inline]
fn erfcx_large(y: f64) -> f64 {
    if y <= 4.0 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        (num + C[7]) / (den + D[7])
    } else {
        let z = 1.0 / (y * y);
        let mut num = P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + P[i]) * z;
            den = (den + Q[i]) * z;
        }
        let r = z * (num + P[4]) / (den + Q[4]);
        (FRAC_1_SQRT_PI - r) / y
    }
}

/// `exp(-y²)` with `y²` split into an exactly representable head and a small tail.
#[inline]
fn exp_neg_square(y: f64) -> f64 {
    let head = (y * 16.0).trunc() / 16.0;
    let tail = (y - head) * (y + head);
    (-head * head).exp() * (-tail).exp()
}

#[inline]
fn exp_pos_square(y: f64) -> f64 {
    let head = (y * 16.0).trunc() / 16.0;
    let tail = (y - head) * (y + head);
    (head * head).exp() * tail.exp()
}

/// `erfc(|x|)` for `|x| > 0.46875`.
#[inline]
fn erfc_abs_large(y: f64) -> f64 {
    if y >= ERFC_UNDERFLOW {
        0.0
    } else {
        exp_neg_square(y) * erfcx_large(y)
    }
}

/// The error function.
pub fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= SMALL {
        return erf_small(x);
    }
    let tail = erfc_abs_large(y);
    if x < 0.0 {
        tail - 1.0
    } else {
        1.0 - tail
    }
}

/// The complementary error function, accurate in relative terms through the
/// far positive tail.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= SMALL {
        return 1.0 - erf_small(x);
    }
    let tail = erfc_abs_large(y);
    if x < 0.0 {
        2.0 - tail
    } else {
        tail
    }
}

/// Scaled complementary error function `exp(x²)·erfc(x)`.
///
/// Finite for all `x` above roughly -26.6; overflows to `+inf` below that.
pub fn erfcx(x: f64) -> f64 {
    let y = x.abs();
    if y <= SMALL {
        return (x * x).exp() * (1.0 - erf_small(x));
    }
    let scaled = erfcx_large(y);
    if x < 0.0 {
        2.0 * exp_pos_square(y) - scaled
    } else {
        scaled
    }
}
