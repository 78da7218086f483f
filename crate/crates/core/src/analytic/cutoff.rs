use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use dashmap::DashMap;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{default_g, CutoffPolynomial};
use crate::numkernel::{ln_gamma_complex, zeta_complex};
use crate::{Error, Result};

/// Abscissas offered for decay envelopes |K(y)| <= I(sigma) y^{-sigma}.
pub const ENVELOPE_SIGMAS: [f64; 16] = [
    0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0, 24.0, 32.0, 40.0, 48.0,
];

const BASE_STEP: f64 = 0.05;
const DECAY_CUTOFF: f64 = 1e-18;
const MAX_HEIGHT: f64 = 1000.0;
const HALVING_TOL: f64 = 1e-8;
/// Slack on the trapezoidal value of int |integrand| used in envelopes.
const ENVELOPE_SAFETY: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    /// T(y) = (2 pi i)^{-1} int Gamma(s+k/2)/Gamma(k/2) G(s)/s y^{-s} ds
    T,
    /// U(y) = (i pi)^{-1} int zeta^(q)(1+2s) (Gamma(s+k/2)/Gamma(k/2))^2 G(s)^2/s y^{-s} ds
    U { p: u64, nu: u32 },
}

#[derive(Debug)]
struct NodeTable {
    sigma: f64,
    h: f64,
    /// integrand at sigma + i j h, j = 0, 1, ...
    values: Vec<Complex64>,
    abs_integral: f64,
}

/// Value at y together with the half-resolution estimate used as error monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureProbe {
    pub value: f64,
    pub coarse: f64,
    pub sigma: f64,
    pub h: f64,
    pub nodes: usize,
}

/// Vertical-line trapezoidal evaluator for T or U at fixed weight and G.
#[derive(Debug)]
pub struct CutoffKernel {
    k: u32,
    kind: KernelKind,
    g: CutoffPolynomial,
    ln_gamma_half_k: f64,
    tables: DashMap<u64, Arc<NodeTable>>,
}

impl CutoffKernel {
    pub fn new(k: u32, kind: KernelKind, g: CutoffPolynomial) -> Result<Self> {
        if k < 2 || k % 2 != 0 {
            return Err(Error::domain("CutoffKernel", format!("weight {k}")));
        }
        if let KernelKind::U { p, .. } = kind {
            if !crate::arith::is_prime(p) {
                return Err(Error::domain("CutoffKernel", format!("{p} is not prime")));
            }
        }
        let ln_gamma_half_k = ln_gamma_complex(Complex64::new(k as f64 / 2.0, 0.0))?.re;
        Ok(CutoffKernel { k, kind, g, ln_gamma_half_k, tables: DashMap::new() })
    }

    pub fn t(k: u32) -> Result<Self> {
        Self::new(k, KernelKind::T, default_g())
    }

    pub fn u(k: u32, p: u64, nu: u32) -> Result<Self> {
        Self::new(k, KernelKind::U { p, nu }, default_g())
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    fn integrand(&self, s: Complex64) -> Result<Complex64> {
        let gamma = ln_gamma_complex(s + self.k as f64 / 2.0)? - self.ln_gamma_half_k;
        let g = self.g.eval(s);
        match self.kind {
            KernelKind::T => Ok(gamma.exp() * g / s),
            KernelKind::U { p, nu } => {
                let w = Complex64::new(1.0, 0.0) + s * 2.0;
                let mut z = zeta_complex(w)?;
                if nu > 0 {
                    z *= Complex64::new(1.0, 0.0) - (-w * (p as f64).ln()).exp();
                }
                Ok(z * (gamma * 2.0).exp() * g * g / s)
            }
        }
    }

    /// Normalization turning the one-sided t-integral of Re(...) into the value.
    fn prefactor(&self) -> f64 {
        match self.kind {
            KernelKind::T => 1.0 / PI,
            KernelKind::U { .. } => 2.0 / PI,
        }
    }

    fn table(&self, sigma: f64) -> Result<Arc<NodeTable>> {
        if let Some(t) = self.tables.get(&sigma.to_bits()) {
            return Ok(t.clone());
        }
        let h = BASE_STEP * (sigma / 0.5).min(1.0);
        let mut values = Vec::new();
        let mut peak: f64 = 0.0;
        let min_height = 2.0 * (sigma + self.k as f64);
        loop {
            let t = values.len() as f64 * h;
            if t > MAX_HEIGHT {
                return Err(Error::NonConvergence {
                    what: "cutoff integrand decay",
                    limit: values.len() as u64,
                    tol: DECAY_CUTOFF,
                });
            }
            let v = self.integrand(Complex64::new(sigma, t))?;
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Overflow("cutoff integrand"));
            }
            peak = peak.max(v.norm());
            values.push(v);
            if t > min_height && v.norm() < DECAY_CUTOFF * peak {
                break;
            }
        }
        let abs_sum: f64 = values.iter().skip(1).map(|v| v.norm()).sum::<f64>() + values[0].norm() / 2.0;
        let table = Arc::new(NodeTable {
            sigma,
            h,
            abs_integral: h * abs_sum,
            values,
        });
        Ok(self.tables.entry(sigma.to_bits()).or_insert(table).clone())
    }

    /// Line of integration: 2 for y >= 1, otherwise small enough that y^{-sigma} <= e^2.
    fn sigma_for(y: f64) -> f64 {
        if y >= 1.0 {
            return 2.0;
        }
        let l = -y.ln();
        [2.0, 1.0, 0.5, 0.25]
            .into_iter()
            .find(|s| s * l <= 2.0)
            .unwrap_or(0.25)
    }

    pub fn probe(&self, y: f64) -> Result<QuadratureProbe> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::domain("cutoff", format!("y = {y}")));
        }
        let sigma = Self::sigma_for(y);
        let table = self.table(sigma)?;
        let ly = y.ln();
        let mut fine = crate::CompensatedSum::new();
        let mut coarse = crate::CompensatedSum::new();
        fine += table.values[0].re / 2.0;
        coarse += table.values[0].re / 2.0;
        for (j, v) in table.values.iter().enumerate().skip(1) {
            let (s, c) = (j as f64 * table.h * ly).sin_cos();
            // Re(v e^{-i theta})
            let term = v.re * c + v.im * s;
            fine += term;
            if j % 2 == 0 {
                coarse += term;
            }
        }
        let scale = self.prefactor() * y.powf(-sigma) * table.h;
        Ok(QuadratureProbe {
            value: scale * fine.value(),
            coarse: 2.0 * scale * coarse.value(),
            sigma: table.sigma,
            h: table.h,
            nodes: table.values.len(),
        })
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        let probe = self.probe(y)?;
        let diff = (probe.value - probe.coarse).abs();
        let limit = HALVING_TOL * probe.value.abs().max(1.0);
        if diff > limit {
            return Err(Error::QuadratureFailure { diff, limit });
        }
        // Far in the decay region the quadrature returns rounding noise well above
        // the envelope, which bounds the true value.
        if y > 1.0 {
            let env = self.envelope_at(y)?;
            return Ok(probe.value.clamp(-env, env));
        }
        Ok(probe.value)
    }

    /// I(sigma) with |K(y)| <= I(sigma) y^{-sigma} for every y > 0.
    pub fn envelope(&self, sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) {
            return Err(Error::domain("envelope", format!("sigma = {sigma}")));
        }
        let t = self.table(sigma)?;
        Ok(ENVELOPE_SAFETY * self.prefactor() * t.abs_integral)
    }

    /// Smallest envelope value at y over ENVELOPE_SIGMAS.
    pub fn envelope_at(&self, y: f64) -> Result<f64> {
        let mut best = f64::INFINITY;
        for s in ENVELOPE_SIGMAS {
            best = best.min(self.envelope(s)? * y.powf(-s));
        }
        Ok(best)
    }
}

type KernelKey = (u32, KernelKind);

pub fn shared_kernel(k: u32, kind: KernelKind) -> Result<Arc<CutoffKernel>> {
    static KERNELS: OnceLock<DashMap<KernelKey, Arc<CutoffKernel>>> = OnceLock::new();
    let map = KERNELS.get_or_init(DashMap::new);
    // U depends on the level only through whether p divides it.
    let kind = match kind {
        KernelKind::U { p, nu } => KernelKind::U { p, nu: nu.min(1) },
        t => t,
    };
    if let Some(k) = map.get(&(k, kind)) {
        return Ok(k.clone());
    }
    let kernel = Arc::new(CutoffKernel::new(k, kind, default_g())?);
    Ok(map.entry((k, kind)).or_insert(kernel).clone())
}

/// T(y) with the default G.
pub fn t_cutoff(y: f64, k: u32) -> Result<f64> {
    shared_kernel(k, KernelKind::T)?.eval(y)
}

/// U(y) at level p^nu with the default G.
pub fn u_cutoff(y: f64, k: u32, p: u64, nu: u32) -> Result<f64> {
    shared_kernel(k, KernelKind::U { p, nu })?.eval(y)
}
