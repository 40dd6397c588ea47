use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Open01;

use crate::{Error, Result};

/// `n x k` Latin hypercube in `(0,1)`: every column has exactly one sample
/// in each stratum `[(i-1)/n, i/n)`, placed uniformly within it, with
/// independent stratum permutations per column.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, k);
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..k {
        perm.shuffle(rng);
        for (row, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.sample(Open01);
            out[(row, col)] = (stratum as f64 + u) / n as f64;
        }
    }
    out
}

/// Standard normal quantile function (Wichura's AS241, about 1e-16
/// relative accuracy).
pub fn probit(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid(format!("probit argument {u} outside (0, 1)")));
    }
    let q = u - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return Ok(num / den);
    }
    let tail = if q < 0.0 { u } else { 1.0 - u };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -value } else { value })
}

/// Latin hypercube mapped through the probit: `N(0, I_k)`-distributed rows.
pub fn normal_design<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    latin_hypercube(n, k, rng).map(|u| probit(u).expect("Open01 samples lie in (0,1)"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn strata_ok(m: &DMatrix<f64>) -> bool {
        let n = m.nrows();
        m.column_iter().all(|col| {
            let mut hits = vec![0; n];
            for &v in col.iter() {
                hits[((v * n as f64).floor() as usize).min(n - 1)] += 1;
            }
            hits.iter().all(|&h| h == 1)
        })
    }

    #[test]
    fn quartiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = latin_hypercube(4, 1, &mut rng);
        let mut v: Vec<f64> = m.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        for (i, x) in v.iter().enumerate() {
            assert!(*x >= i as f64 / 4.0 && *x < (i + 1) as f64 / 4.0);
        }
    }

    #[test]
    fn stratification_and_determinism() {
        let m = latin_hypercube(100, 32, &mut ChaCha8Rng::seed_from_u64(11));
        assert!(strata_ok(&m));
        assert!(m.iter().all(|&v| v > 0.0 && v < 1.0));
        let again = latin_hypercube(100, 32, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(m, again);
    }

    #[test]
    fn probit_basics() {
        assert_eq!(probit(0.5).unwrap(), 0.0);
        for u in [1e-300, 1e-12, 0.01, 0.2, 0.4, 0.7, 0.975, 0.999_999] {
            let a = probit(u).unwrap();
            assert!(a.is_finite());
            if u > 1e-10 {
                let b = probit(1.0 - u).unwrap();
                assert!((a + b).abs() < 1e-12 * a.abs().max(1.0), "{u}: {a} {b}");
            }
        }
        assert!(probit(0.0).is_err());
        assert!(probit(1.0).is_err());
        assert!(probit(f64::NAN).is_err());
    }
}
