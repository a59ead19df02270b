//! Temperature-dependent conductivities of austenitic stainless steel, their
//! bounded C¹ extensions, and the nondimensional form of the model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Material constants. Defaults are for non-ferromagnetic stainless steel
/// (#1.4301). Temperatures in K, SI units throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialModel {
    /// Resistivity polynomial `a + bθ + cθ² + dθ³` in Ω·m.
    pub sigma_coeffs: [f64; 4],
    /// Thermal conductivity `100 (a + bθ)` in W/(m·K).
    pub eta_coeffs: [f64; 2],
    /// Range on which the laws are used verbatim, K.
    pub extension_range: [f64; 2],
    /// Width of the C¹ blend on either side of each range end, K.
    pub blend_margin: f64,
    /// Density, kg/m³.
    pub rho: f64,
    /// Specific heat capacity, J/(kg·K).
    pub cp: f64,
    /// Heat transfer coefficient of the Robin condition.
    pub alpha: f64,
    /// Isotropic multiplier of the electric conductivity tensor.
    pub eps_scalar: f64,
    /// Isotropic multiplier of the heat conductivity tensor.
    pub kappa_scalar: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        MaterialModel {
            sigma_coeffs: [4.9659e-7, 8.4121e-10, -3.7246e-13, 6.1960e-17],
            eta_coeffs: [0.11215, 1.4087e-4],
            extension_range: [0.0, 10000.0],
            blend_margin: 100.0,
            rho: 7900.0,
            cp: 455.0,
            alpha: 20.0,
            eps_scalar: 1.0,
            kappa_scalar: 1.0,
        }
    }
}

/// Value and slope of a cubic Hermite interpolant on `[a, b]`.
fn hermite(t: f64, a: f64, b: f64, ya: f64, ma: f64, yb: f64, mb: f64) -> (f64, f64) {
    let h = b - a;
    let s = (t - a) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let value = h00 * ya + h10 * h * ma + h01 * yb + h11 * h * mb;
    let d00 = 6.0 * s2 - 6.0 * s;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = -6.0 * s2 + 6.0 * s;
    let d11 = 3.0 * s2 - 2.0 * s;
    let slope = (d00 * ya + d01 * yb) / h + d10 * ma + d11 * mb;
    (value, slope)
}

impl MaterialModel {
    fn raw_sigma(&self, t: f64) -> (f64, f64) {
        let [a, b, c, d] = self.sigma_coeffs;
        let den = a + t * (b + t * (c + t * d));
        let dden = b + t * (2.0 * c + 3.0 * d * t);
        (1.0 / den, -dden / (den * den))
    }

    fn raw_eta(&self, t: f64) -> (f64, f64) {
        let [a, b] = self.eta_coeffs;
        (100.0 * (a + b * t), 100.0 * b)
    }

    /// Evaluates `law` inside the range and continues it by constants outside,
    /// joined by cubic Hermite blends of half-width `blend_margin`.
    fn extended(&self, t: f64, law: impl Fn(f64) -> (f64, f64)) -> (f64, f64) {
        let [lo, hi] = self.extension_range;
        let m = self.blend_margin;
        if t >= lo + m && t <= hi - m {
            law(t)
        } else if t <= lo - m {
            (law(lo).0, 0.0)
        } else if t >= hi + m {
            (law(hi).0, 0.0)
        } else if t < lo + m {
            let (yb, mb) = law(lo + m);
            hermite(t, lo - m, lo + m, law(lo).0, 0.0, yb, mb)
        } else {
            let (ya, ma) = law(hi - m);
            hermite(t, hi - m, hi + m, ya, ma, law(hi).0, 0.0)
        }
    }

    pub(crate) fn sigma_with_slope(&self, t: f64) -> (f64, f64) {
        self.extended(t, |t| self.raw_sigma(t))
    }

    pub(crate) fn eta_with_slope(&self, t: f64) -> (f64, f64) {
        self.extended(t, |t| self.raw_eta(t))
    }

    /// Electrical conductivity in 1/(Ω·m).
    pub fn sigma(&self, t: f64) -> Result<f64> {
        finite(t)?;
        Ok(self.sigma_with_slope(t).0)
    }

    /// Thermal conductivity in W/(m·K).
    pub fn eta(&self, t: f64) -> Result<f64> {
        finite(t)?;
        Ok(self.eta_with_slope(t).0)
    }

    pub fn sigma_prime(&self, t: f64) -> Result<f64> {
        finite(t)?;
        Ok(self.sigma_with_slope(t).1)
    }

    pub fn eta_prime(&self, t: f64) -> Result<f64> {
        finite(t)?;
        Ok(self.eta_with_slope(t).1)
    }

    /// Volumetric heat capacity ϱC_p, J/(m³·K).
    pub fn heat_capacity(&self) -> f64 {
        self.rho * self.cp
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.extension_range;
        if !(self.blend_margin > 0.0 && lo + 2.0 * self.blend_margin < hi) {
            return Err(Error::InvalidInput(format!(
                "blend margin {} does not fit the range [{lo}, {hi}]",
                self.blend_margin
            )));
        }
        if !(self.rho > 0.0 && self.cp > 0.0 && self.alpha >= 0.0) {
            return Err(Error::InvalidInput("rho, cp must be > 0 and alpha >= 0".into()));
        }
        if !(self.eps_scalar > 0.0 && self.kappa_scalar > 0.0) {
            return Err(Error::InvalidInput("conductivity multipliers must be > 0".into()));
        }
        // the resistivity polynomial must stay positive on the range
        let n = 1000;
        for i in 0..=n {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            let [a, b, c, d] = self.sigma_coeffs;
            if !(a + t * (b + t * (c + t * d)) > 0.0) || !(self.raw_eta(t).0 > 0.0) {
                return Err(Error::InvalidInput(format!("conductivity law not positive at {t} K")));
            }
        }
        Ok(())
    }
}

fn finite(t: f64) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite("conductivity argument"))
    }
}

/// Reference scales used to nondimensionalize the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    /// Length scale, m.
    pub length: f64,
    /// Time scale, s (normally the horizon length).
    pub time: f64,
    /// Temperature scale, K.
    pub temperature: f64,
    /// Current density scale, A/m² (normally the control bound).
    pub current_density: f64,
}

impl Default for ScalingConfig {
    /// 10 cm body, 2 s horizon, 1500 K, 10⁸ A/m².
    fn default() -> Self {
        ScalingConfig {
            length: 0.1,
            time: 2.0,
            temperature: 1500.0,
            current_density: 1e8,
        }
    }
}

impl ScalingConfig {
    pub fn identity() -> Self {
        ScalingConfig {
            length: 1.0,
            time: 1.0,
            temperature: 1.0,
            current_density: 1.0,
        }
    }
}

/// Reference scales together with the dimensionless groups of the scaled system
///
/// ```text
///   ∂θ − ∇·(D η̂(θ)∇θ) = Jo σ̂(θ)|∇φ|²,   D η̂ ∂νθ + Bi (θ − θ_l) = 0,
///   −∇·(σ̂(θ)∇φ) = 0,                     σ̂ ∂νφ = u on Γ_N,  φ = 0 on Γ_D,
/// ```
/// with `η̂ = η/η(θ₀)` and `σ̂ = σ/σ(θ₀)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSet {
    pub length: f64,
    pub time: f64,
    pub temperature: f64,
    pub current_density: f64,
    /// `u_ref·L_ref/σ(θ₀)`, V.
    pub potential: f64,
    pub sigma_ref: f64,
    pub eta_ref: f64,
    /// `η(θ₀)·t_ref/(ϱC_p·L_ref²)`
    pub diffusion_number: f64,
    /// `σ(θ₀)·φ_ref²·t_ref/(ϱC_p·θ_ref·L_ref²)`
    pub joule_number: f64,
    /// `α·t_ref/(ϱC_p·L_ref)`
    pub robin_number: f64,
}

pub fn make_scaling(model: &MaterialModel, cfg: &ScalingConfig, theta0: f64) -> Result<ScalingSet> {
    let refs = [cfg.length, cfg.time, cfg.temperature, cfg.current_density];
    if refs.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "reference scales must be positive, got {refs:?}"
        )));
    }
    let sigma_ref = model.eps_scalar * model.sigma(theta0)?;
    let eta_ref = model.kappa_scalar * model.eta(theta0)?;
    let rc = model.heat_capacity();
    let l = cfg.length;
    let potential = cfg.current_density * l / sigma_ref;
    Ok(ScalingSet {
        length: l,
        time: cfg.time,
        temperature: cfg.temperature,
        current_density: cfg.current_density,
        potential,
        sigma_ref,
        eta_ref,
        diffusion_number: eta_ref * cfg.time / (rc * l * l),
        joule_number: sigma_ref * potential * potential * cfg.time / (rc * cfg.temperature * l * l),
        robin_number: model.alpha * cfg.time / (rc * l),
    })
}

#[derive(Clone, Debug)]
enum Law {
    Thermal,
    Electrical,
    Constant,
}

/// A conductivity as a function of the scaled temperature.
#[derive(Clone, Debug)]
pub struct ScaledLaw {
    law: Law,
    factor: f64,
    temperature: f64,
    material: MaterialModel,
}

impl ScaledLaw {
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        self.eval(t).1
    }

    #[inline]
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let (v, d) = match self.law {
            Law::Constant => return (self.factor, 0.0),
            Law::Thermal => self.material.eta_with_slope(self.temperature * t),
            Law::Electrical => self.material.sigma_with_slope(self.temperature * t),
        };
        (self.factor * v, self.factor * self.temperature * d)
    }
}

/// Coefficients of the scaled thermistor system consumed by assembly.
#[derive(Clone, Debug)]
pub struct ScaledModel {
    /// `D·η̂`
    pub heat: ScaledLaw,
    /// `σ̂`
    pub electric: ScaledLaw,
    pub joule: f64,
    pub robin: f64,
    /// Ambient temperature in scaled units.
    pub theta_l: f64,
    pub scaling: Option<ScalingSet>,
}

impl ScaledModel {
    pub fn new(material: &MaterialModel, scaling: ScalingSet, theta_l: f64) -> ScaledModel {
        let heat = ScaledLaw {
            law: Law::Thermal,
            factor: scaling.diffusion_number * material.kappa_scalar / scaling.eta_ref,
            temperature: scaling.temperature,
            material: material.clone(),
        };
        let electric = ScaledLaw {
            law: Law::Electrical,
            factor: material.eps_scalar / scaling.sigma_ref,
            temperature: scaling.temperature,
            material: material.clone(),
        };
        ScaledModel {
            heat,
            electric,
            joule: scaling.joule_number,
            robin: scaling.robin_number,
            theta_l: theta_l / scaling.temperature,
            scaling: Some(scaling),
        }
    }

    /// Constant conductivities; used for patch tests and small oracles.
    pub fn uniform(heat: f64, electric: f64, joule: f64, robin: f64, theta_l: f64) -> ScaledModel {
        let c = |factor| ScaledLaw {
            law: Law::Constant,
            factor,
            temperature: 1.0,
            material: MaterialModel::default(),
        };
        ScaledModel {
            heat: c(heat),
            electric: c(electric),
            joule,
            robin,
            theta_l,
            scaling: None,
        }
    }

    /// Converts a scaled temperature to Kelvin.
    pub fn kelvin(&self, t: f64) -> f64 {
        self.scaling.as_ref().map_or(1.0, |s| s.temperature) * t
    }

    pub fn temperature_scale(&self) -> f64 {
        self.scaling.as_ref().map_or(1.0, |s| s.temperature)
    }
}
