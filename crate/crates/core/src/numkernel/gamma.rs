use std::f64::consts::PI;

use num_complex::Complex64;

use super::{bernoulli_even, check_finite, ComplexValue};
use crate::{Error, Result};

// Lanczos coefficients for g = 607/128, 15 terms (P. Godfrey's table,
// as used in several numerical libraries).
const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS: [f64; 15] = [
    0.999_999_999_999_997_09,
    57.156_235_665_862_923_517,
    -59.597_960_355_475_491_248,
    14.136_097_974_741_747_174,
    -0.491_913_816_097_620_199_78,
    0.339_946_499_848_118_886_99e-4,
    0.465_236_289_270_485_756_65e-4,
    -0.983_744_753_048_795_646_77e-4,
    0.158_088_703_224_912_488_84e-3,
    -0.210_264_441_724_104_883_19e-3,
    0.217_439_618_115_212_643_20e-3,
    -0.164_318_106_536_763_890_22e-3,
    0.844_182_239_838_527_432_93e-4,
    -0.261_908_384_015_814_086_70e-4,
    0.368_991_826_595_316_227_04e-5,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_78;

fn is_nonpositive_integer(s: Complex64) -> bool {
    s.im == 0.0 && s.re <= 0.0 && s.re == s.re.round()
}

// log sin(pi z) without overflow for large |Im z|.
fn ln_sin_pi(z: Complex64) -> Complex64 {
    if z.im < 0.0 {
        return ln_sin_pi(z.conj()).conj();
    }
    if z.im < 1.0 {
        return (z * PI).sin().ln();
    }
    // sin(pi z) = e^{-i pi z} (e^{2 i pi z} - 1) / (2i)
    let i = Complex64::i();
    let w = (i * 2.0 * PI * z).exp();
    -i * PI * z - (2.0 * i).ln() + (w - 1.0).ln()
}

fn ln_gamma_lanczos(s: Complex64) -> Complex64 {
    let z = s - 1.0;
    let mut series = Complex64::new(LANCZOS[0], 0.0);
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        series += *c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (z + 0.5) * t.ln() - t + LN_SQRT_2PI + series.ln()
}

/// Principal branch of log Gamma, continuous along vertical lines.
pub fn ln_gamma_complex(s: ComplexValue) -> Result<ComplexValue> {
    if is_nonpositive_integer(s) {
        return Err(Error::Pole {
            function: "gamma",
            at: format!("{}", s.re),
        });
    }
    let v = if s.re < 0.5 {
        let one = Complex64::new(1.0, 0.0);
        Complex64::new(PI.ln(), 0.0) - ln_sin_pi(s) - ln_gamma_lanczos(one - s)
    } else {
        ln_gamma_lanczos(s)
    };
    check_finite(v, "ln_gamma")
}

pub fn gamma_complex(s: ComplexValue) -> Result<ComplexValue> {
    let v = ln_gamma_complex(s)?.exp();
    check_finite(v, "gamma")
}

fn require_positive(x: f64, function: &'static str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(function, format!("x = {x} must be positive")))
    }
}

const ASYMPTOTIC_FROM: f64 = 12.0;

pub fn digamma(x: f64) -> Result<f64> {
    require_positive(x, "digamma")?;
    let mut x = x;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_FROM {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    let mut acc = 0.0;
    let mut p = x2;
    for j in 1..=10 {
        acc += bernoulli_even(j) / (2 * j) as f64 * p;
        p *= x2;
    }
    Ok(shift + x.ln() - 0.5 / x - acc)
}

/// Trigamma psi'(x).
pub fn polygamma1(x: f64) -> Result<f64> {
    require_positive(x, "trigamma")?;
    let mut x = x;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_FROM {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    let mut acc = 1.0 / x + 0.5 * x2;
    let mut p = x2 / x;
    for j in 1..=10 {
        acc += bernoulli_even(j) * p;
        p *= x2;
    }
    Ok(shift + acc)
}

/// Tetragamma psi''(x).
pub fn polygamma2(x: f64) -> Result<f64> {
    require_positive(x, "tetragamma")?;
    let mut x = x;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_FROM {
        shift -= 2.0 / (x * x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    let mut acc = -x2 - x2 / x;
    let mut p = x2 * x2;
    for j in 1..=10 {
        acc -= (2 * j + 1) as f64 * bernoulli_even(j) * p;
        p *= x2;
    }
    Ok(shift + acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaDerivatives {
    pub argument: f64,
    /// `values[i]` is Gamma^{(i+1)}(x) / Gamma(x).
    pub values: Vec<f64>,
}

impl GammaDerivatives {
    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn order(&self, j: usize) -> Option<f64> {
        if j == 0 {
            Some(1.0)
        } else {
            self.values.get(j - 1).copied()
        }
    }
}

/// Gamma'/Gamma, Gamma''/Gamma and Gamma'''/Gamma at x (up to `max_order`).
pub fn gamma_log_derivatives(x: f64, max_order: usize) -> Result<GammaDerivatives> {
    if !(1..=3).contains(&max_order) {
        return Err(Error::domain(
            "gamma_log_derivatives",
            format!("order {max_order} not in 1..=3"),
        ));
    }
    let psi = digamma(x)?;
    let mut values = vec![psi];
    if max_order >= 2 {
        let psi1 = polygamma1(x)?;
        values.push(psi1 + psi * psi);
        if max_order >= 3 {
            let psi2 = polygamma2(x)?;
            values.push(psi2 + 3.0 * psi * psi1 + psi * psi * psi);
        }
    }
    Ok(GammaDerivatives {
        argument: x,
        values,
    })
}
