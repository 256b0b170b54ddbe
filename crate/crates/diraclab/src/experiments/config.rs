//! Run configuration: a single TOML document holding every physical and
//! numerical parameter, with validation of the commensurability constraints
//! the Wigner pipeline relies on.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{make_grid, Grid2D, LatticeSpec};
use crate::potential::{regularized_coulomb, HartreeKernel, PeriodicPotential};
use crate::symbol::{Band, DiracConstants};
use crate::wigner::{BumpC2, TestFunction, TrigPoly, WignerSettings};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("lattice: {0}")]
    Lattice(#[from] crate::lattice::LatticeError),
    #[error("potential: {0}")]
    Potential(#[from] crate::potential::PotentialError),
    #[error("constraint violated: {0}")]
    Constraint(String),
}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError::Constraint(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsSection {
    /// rest mass m (energy / c^2 units)
    pub mass: f64,
    /// speed of light c (length / time units)
    pub light_speed: f64,
    /// semiclassical parameter (dimensionless, in (0, 1])
    pub hbar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeSection {
    /// side of the square fundamental cell (length units)
    pub cell_side: f64,
    /// lattice-to-macroscopic scale ratio a in (0, 1]
    pub scale_a: f64,
    /// torus length L = cells_per_side * a * cell_side
    pub cells_per_side: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSection {
    /// position nodes per axis (power of two)
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialSection {
    /// rows (m1, m2, re, im) over the dual basis; must be Hermitian
    #[serde(default)]
    pub coefficients: Vec<(i32, i32, f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KernelSection {
    None,
    /// Khat(k) = exp(-width^2 |k|^2 / 2)
    Gaussian { width: f64 },
    /// Khat(k) = exp(-sigma^2 |k|^2 / 2) / |k|, zero mode dropped
    Coulomb { sigma: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "scaling", rename_all = "kebab-case")]
pub enum EnvelopeSpec {
    /// width = factor * sqrt(hbar)
    SqrtHbar { factor: f64 },
    /// width = factor * hbar^(1/4); broader family used by the
    /// adiabatic-decoupling study
    QuarterHbar { factor: f64 },
    /// width independent of hbar (length units)
    Fixed { value: f64 },
}

impl EnvelopeSpec {
    pub fn width(&self, hbar: f64) -> f64 {
        match self {
            EnvelopeSpec::SqrtHbar { factor } => factor * hbar.sqrt(),
            EnvelopeSpec::QuarterHbar { factor } => factor * hbar.powf(0.25),
            EnvelopeSpec::Fixed { value } => *value,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialSection {
    /// packet center in units of the torus length
    pub x0: [f64; 2],
    /// carrier momentum (momentum units); k0/hbar must land on the grid
    /// frequency lattice
    pub k0: [f64; 2],
    pub band: Band,
    pub envelope: EnvelopeSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSection {
    pub t_final: f64,
    /// step; omit for min(1e-3, 0.1 hbar / E_max), snapped to the
    /// derivative half-step
    #[serde(default)]
    pub dt: Option<f64>,
    /// times at which the weak residuals are sampled
    pub residual_times: Vec<f64>,
    /// centered-difference half-step for d/dt of the pairings
    pub derivative_halfstep: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WignerSection {
    /// spatial subsampling stride of the transform
    pub xstride: usize,
    /// momentum sampling interval (momentum units); must be a power-of-two
    /// multiple of pi hbar / L
    pub k_spacing: f64,
    /// half-width of the stored momentum window (momentum units)
    pub k_window: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MasslessSection {
    /// cutoff radius around the band crossing
    pub kappa: f64,
}

impl Default for MasslessSection {
    fn default() -> Self {
        MasslessSection { kappa: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatterySection {
    /// base radius of the momentum bumps
    pub bump_radius: f64,
    /// offset of the displaced bump centers
    #[serde(default = "default_bump_offset")]
    pub bump_offset: f64,
}

fn default_bump_offset() -> f64 {
    0.08
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSection {
    pub directory: String,
    pub seed: u64,
    /// stride (in residual sample times) at which spinor snapshots are
    /// written by `run`
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_snapshot_every() -> usize {
    1
}

/// Complete description of one simulation; see `configs/` for annotated
/// examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub constants: ConstantsSection,
    pub lattice: LatticeSection,
    pub grid: GridSection,
    #[serde(default)]
    pub potential: PotentialSection,
    pub kernel: KernelSection,
    pub initial: InitialSection,
    pub time: TimeSection,
    pub wigner: WignerSection,
    #[serde(default)]
    pub massless: MasslessSection,
    pub battery: BatterySection,
    pub output: OutputSection,
}

impl Default for PotentialSection {
    fn default() -> Self {
        PotentialSection {
            coefficients: Vec::new(),
        }
    }
}

/// Everything derived from a validated [`RunConfig`], ready to drive the
/// solvers.
#[derive(Debug)]
pub struct Prepared {
    pub config: RunConfig,
    pub consts: DiracConstants,
    pub grid: Grid2D,
    pub lattice: LatticeSpec,
    pub pot: PeriodicPotential,
    pub kernel: HartreeKernel,
    pub settings: WignerSettings,
    pub battery: Vec<TestFunction>,
    pub x0: [f64; 2],
    pub width: f64,
    pub dt: f64,
    pub kappa: f64,
    pub box_length: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn box_length(&self) -> f64 {
        self.lattice.cells_per_side as f64 * self.lattice.scale_a * self.lattice.cell_side
    }

    /// Validates every constraint and builds the derived objects.
    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let c = &self.constants;
        if c.hbar <= 0.0 || c.hbar > 1.0 {
            return Err(err(format!("hbar = {} must lie in (0, 1]", c.hbar)));
        }
        if c.light_speed <= 0.0 || c.mass < 0.0 {
            return Err(err("need c > 0 and m >= 0"));
        }
        let consts = DiracConstants::new(c.mass, c.light_speed, c.hbar);

        if self.lattice.scale_a <= 0.0 || self.lattice.scale_a > 1.0 {
            return Err(err("scale_a must lie in (0, 1]"));
        }
        if self.lattice.cells_per_side == 0 {
            return Err(err("cells_per_side must be positive"));
        }
        let length = self.box_length();
        let grid = make_grid([length, length], [self.grid.n, self.grid.n])?;
        let lattice = LatticeSpec::square(self.lattice.cell_side, self.lattice.scale_a)?;

        let coeffs: Vec<((i32, i32), Complex64)> = self
            .potential
            .coefficients
            .iter()
            .map(|&(m1, m2, re, im)| ((m1, m2), Complex64::new(re, im)))
            .collect();
        let pot = PeriodicPotential::new(lattice.clone(), coeffs)?;

        let kernel = match &self.kernel {
            KernelSection::None => HartreeKernel::none(),
            KernelSection::Gaussian { width } => HartreeKernel::gaussian(*width),
            KernelSection::Coulomb { sigma } => regularized_coulomb(*sigma)?,
        };

        // Wigner commensurability: the momentum sampling interval must be a
        // power-of-two multiple of the native resolution pi hbar / L.
        let dk_native = std::f64::consts::PI * c.hbar / length;
        let fold_f = self.wigner.k_spacing / dk_native;
        let fold = fold_f.round() as usize;
        if fold == 0 || (fold_f - fold as f64).abs() > 1e-9 || !fold.is_power_of_two() {
            return Err(err(format!(
                "incommensurate Wigner sampling: k_spacing / (pi hbar / L) = {fold_f:.6} \
                 must be a positive power-of-two integer (hbar = {}, L = {length})",
                c.hbar
            )));
        }
        if self.grid.n % fold != 0 {
            return Err(err(format!(
                "fold factor {fold} does not divide the grid size {}",
                self.grid.n
            )));
        }
        if self.grid.n % self.wigner.xstride != 0 {
            return Err(err(format!(
                "xstride {} does not divide the grid size {}",
                self.wigner.xstride, self.grid.n
            )));
        }
        let nf = self.grid.n / fold;
        let mut k_window_nodes = (2.0 * self.wigner.k_window / self.wigner.k_spacing).round()
            as usize;
        if k_window_nodes % 2 == 1 {
            k_window_nodes += 1;
        }
        let k_window_nodes = k_window_nodes.min(nf).max(4);
        let settings = WignerSettings {
            xstride: self.wigner.xstride,
            fold,
            k_window: k_window_nodes,
        };
        settings
            .validate(&grid)
            .map_err(|e| err(format!("wigner sampling: {e}")))?;
        let window_halfwidth = 0.5 * k_window_nodes as f64 * self.wigner.k_spacing;

        // carrier on the frequency lattice
        let dxi = 2.0 * std::f64::consts::PI / length;
        for ax in 0..2 {
            let m = self.initial.k0[ax] / c.hbar / dxi;
            if (m - m.round()).abs() > 1e-9 {
                return Err(err(format!(
                    "carrier momentum k0[{ax}] = {} is incommensurate: k0 / (hbar 2 pi / L) \
                     = {m:.6} must be an integer",
                    self.initial.k0[ax]
                )));
            }
        }

        let kappa = self.massless.kappa;
        let k0n = self.initial.k0[0].hypot(self.initial.k0[1]);
        let width = self.initial.envelope.width(c.hbar);
        if width <= 0.0 {
            return Err(err("envelope width must be positive"));
        }
        if consts.is_massless() {
            // spectral margin: three momentum widths of the packet
            let sigma_k = c.hbar / (width * std::f64::consts::SQRT_2);
            if k0n < kappa + 3.0 * sigma_k {
                return Err(err(format!(
                    "massless carrier |k0| = {k0n:.4} too close to the cutoff \
                     kappa = {kappa} (need margin 3 sigma_k = {:.4})",
                    3.0 * sigma_k
                )));
            }
        }

        // battery inside the window (and inside the cutoff annulus if massless)
        let battery = standard_battery(
            self.initial.k0,
            self.battery.bump_radius,
            self.battery.bump_offset,
            [length, length],
        );
        for t in &battery {
            if !t.phi.support_inside(
                if consts.is_massless() { kappa } else { 0.0 },
                window_halfwidth,
            ) {
                return Err(err(format!(
                    "test function {} has momentum support outside the admissible annulus \
                     [{}, {window_halfwidth:.4}]",
                    t.id,
                    if consts.is_massless() { kappa } else { 0.0 }
                )));
            }
        }

        // time stepping: snap dt onto the derivative half-step lattice
        let h = self.time.derivative_halfstep;
        if h <= 0.0 {
            return Err(err("derivative_halfstep must be positive"));
        }
        let dt = match self.time.dt {
            Some(dt) => {
                if dt <= 0.0 {
                    return Err(err("dt must be positive"));
                }
                let steps = h / dt;
                if (steps - steps.round()).abs() > 1e-9 {
                    return Err(err(format!(
                        "derivative_halfstep {h} is not a multiple of dt = {dt}"
                    )));
                }
                dt
            }
            None => {
                let xi_max = std::f64::consts::PI * self.grid.n as f64 / length;
                let e_max = crate::symbol::energy(
                    [c.hbar * xi_max, c.hbar * xi_max],
                    &consts,
                );
                let raw = (0.1 * c.hbar / e_max).min(1e-3);
                h / (h / raw).ceil()
            }
        };
        for &t in &self.time.residual_times {
            for probe in [t - h, t, t + h] {
                if probe < -1e-12 {
                    return Err(err(format!(
                        "residual time {t} needs a sample at negative time {probe}"
                    )));
                }
                let steps = probe / dt;
                if (steps - steps.round()).abs() > 1e-6 {
                    return Err(err(format!(
                        "residual sample time {probe} is not on the dt = {dt} lattice"
                    )));
                }
                if probe > self.time.t_final + 1e-12 {
                    return Err(err(format!(
                        "residual sample time {probe} exceeds t_final = {}",
                        self.time.t_final
                    )));
                }
            }
        }

        Ok(Prepared {
            config: self.clone(),
            consts,
            grid,
            lattice,
            pot,
            kernel,
            settings,
            battery,
            x0: [
                self.initial.x0[0] * length,
                self.initial.x0[1] * length,
            ],
            width,
            dt,
            kappa,
            box_length: length,
        })
    }
}

/// The fixed six-pair test battery used by the residual experiments:
/// low-order trigonometric factors in position and C^2 bumps around the
/// carrier momentum.
pub fn standard_battery(
    k0: [f64; 2],
    radius: f64,
    offset: f64,
    box_extent: [f64; 2],
) -> Vec<TestFunction> {
    let q = 2.0 * std::f64::consts::PI / box_extent[0];
    let mk = |id: &str, eta: TrigPoly, center: [f64; 2], r: f64| {
        TestFunction::new(id, eta, BumpC2 { center, radius: r }, box_extent)
    };
    vec![
        mk("t1-const", TrigPoly::constant(1.0), k0, radius),
        mk("t2-cosx1", TrigPoly::mode([q, 0.0], 1.0, 0.0), k0, radius),
        mk(
            "t3-sinx1",
            TrigPoly::mode([q, 0.0], 0.0, 1.0),
            [k0[0] + offset, k0[1]],
            0.85 * radius,
        ),
        mk(
            "t4-cosx2",
            TrigPoly::mode([0.0, q], 1.0, 0.0),
            [k0[0] - offset, k0[1]],
            0.85 * radius,
        ),
        mk(
            "t5-diag",
            TrigPoly::mode([q, q], 1.0, 0.0),
            [k0[0], k0[1] + offset],
            0.85 * radius,
        ),
        mk(
            "t6-sin2x1",
            TrigPoly::mode([2.0 * q, 0.0], 0.0, 1.0),
            k0,
            0.75 * radius,
        ),
    ]
}

/// In-repo benchmark configuration (massive case). All acceptance numbers
/// are quoted against this document.
pub fn benchmark_massive_toml() -> &'static str {
    include_str!("../../configs/benchmark_massive.toml")
}

/// Massless companion of the benchmark with the cutoff at kappa = 0.5.
pub fn benchmark_massless_toml() -> &'static str {
    include_str!("../../configs/benchmark_massless.toml")
}
