//! Run configuration: a TOML file with one section per concern. Unknown keys
//! are rejected, every tolerance must be positive, and validation failures
//! name the offending field.

use anyhow::{bail, Context};
use fsilab_core::{BodyShape, NondimParams, PhysicalParams};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub body: BodyConfig,
    pub domain: DomainConfig,
    #[serde(default)]
    pub params: Option<ParamsConfig>,
    #[serde(default)]
    pub physical: Option<PhysicalConfig>,
    #[serde(default)]
    pub steady: SteadyConfig,
    #[serde(default)]
    pub thresholds: ThresholdsConfig,
    #[serde(default)]
    pub modes: ModesConfig,
    #[serde(default)]
    pub transient: TransientConfig,
    #[serde(default)]
    pub bifurcation: BifurcationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub kind: String,
    #[serde(default)]
    pub semi_axes: Option<Vec<f64>>,
    #[serde(default)]
    pub polygon_file: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub outer_radius: f64,
    pub mesh_size: f64,
    #[serde(default = "default_true")]
    pub symmetric: bool,
    #[serde(default = "default_degree")]
    pub velocity_degree: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub lambda: Vec<f64>,
    pub omega_n_sq: f64,
    pub varpi: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConfig {
    pub stream_speed: f64,
    pub body_diameter: f64,
    pub viscosity: f64,
    pub density: f64,
    pub body_mass: f64,
    pub spring_stiffness: f64,
    pub lambda_scale: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadyConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub max_bisect: usize,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        SteadyConfig { tol: 1e-10, max_iter: 25, max_bisect: 6 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdsConfig {
    pub eig_tol: f64,
    pub dense_cutoff: usize,
    pub state_tol: f64,
    /// branch directory produced by the steady command
    pub branch: Option<String>,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        ThresholdsConfig { eig_tol: 1e-10, dense_cutoff: 2000, state_tol: 1e-8, branch: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesConfig {
    pub count: usize,
    pub eig_tol: f64,
}

impl Default for ModesConfig {
    fn default() -> Self {
        ModesConfig { count: 10, eig_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransientConfig {
    /// initial-data scale; 0 selects the scale from the smallness bound
    pub epsilon: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_modes: usize,
    /// field snapshots every k steps (0 = none)
    pub snapshot_every: usize,
    pub gronwall_a: f64,
    pub gronwall_b: f64,
    pub gronwall_alpha: f64,
}

impl Default for TransientConfig {
    fn default() -> Self {
        TransientConfig {
            epsilon: 0.0,
            t_end: 10.0,
            dt: 0.05,
            n_modes: 8,
            snapshot_every: 0,
            gronwall_a: 1.0,
            gronwall_b: 1.0,
            gronwall_alpha: 3.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BifurcationConfig {
    pub window: [f64; 2],
    pub samples: usize,
    pub crossing_tol: f64,
    pub kernel_gap: f64,
    pub range_threshold: f64,
    /// freeze the base flow at this lambda (0 = track the branch); the
    /// frozen path is the verification workflow
    pub frozen_lambda: f64,
    pub amplify: f64,
}

impl Default for BifurcationConfig {
    fn default() -> Self {
        BifurcationConfig {
            window: [0.1, 1.0],
            samples: 5,
            crossing_tol: 1e-6,
            kernel_gap: 1e-6,
            range_threshold: 1e-3,
            frozen_lambda: 0.0,
            amplify: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: Option<String>,
}

fn default_true() -> bool {
    true
}

fn default_degree() -> usize {
    2
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).context("config schema error")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let positive = [
            ("domain.outer_radius", self.domain.outer_radius),
            ("domain.mesh_size", self.domain.mesh_size),
            ("steady.tol", self.steady.tol),
            ("thresholds.eig_tol", self.thresholds.eig_tol),
            ("thresholds.state_tol", self.thresholds.state_tol),
            ("modes.eig_tol", self.modes.eig_tol),
            ("transient.t_end", self.transient.t_end),
            ("transient.dt", self.transient.dt),
            ("bifurcation.crossing_tol", self.bifurcation.crossing_tol),
            ("bifurcation.kernel_gap", self.bifurcation.kernel_gap),
            ("bifurcation.range_threshold", self.bifurcation.range_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                bail!("field {name} must be strictly positive (got {v})");
            }
        }
        if self.transient.epsilon < 0.0 {
            bail!("field transient.epsilon must be nonnegative");
        }
        if self.params.is_none() && self.physical.is_none() {
            bail!("one of [params] or [physical] is required");
        }
        if let Some(p) = &self.params {
            if p.lambda.is_empty() {
                bail!("field params.lambda must not be empty");
            }
            if p.lambda.windows(2).any(|w| w[0] >= w[1]) {
                bail!("field params.lambda must be strictly increasing");
            }
            if p.lambda.iter().any(|&l| l < 0.0) {
                bail!("field params.lambda must be nonnegative");
            }
            if !(p.omega_n_sq > 0.0) {
                bail!("field params.omega_n_sq must be strictly positive");
            }
            if !(p.varpi > 0.0) {
                bail!("field params.varpi must be strictly positive");
            }
        }
        if let Some(p) = &self.physical {
            // delegate the positivity checks; errors name the field
            let phys = PhysicalParams {
                stream_speed: p.stream_speed,
                body_diameter: p.body_diameter,
                viscosity: p.viscosity,
                density: p.density,
                body_mass: p.body_mass,
                spring_stiffness: p.spring_stiffness,
            };
            fsilab_core::nondimensionalize(&phys).map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        if self.bifurcation.window[0] >= self.bifurcation.window[1] {
            bail!("field bifurcation.window must satisfy window[0] < window[1]");
        }
        if self.bifurcation.samples < 2 {
            bail!("field bifurcation.samples must be at least 2");
        }
        if self.modes.count == 0 {
            bail!("field modes.count must be at least 1");
        }
        if self.transient.n_modes == 0 {
            bail!("field transient.n_modes must be at least 1");
        }
        Ok(())
    }

    pub fn body(&self) -> anyhow::Result<BodyShape> {
        let axes = self.body.semi_axes.clone().unwrap_or_default();
        match self.body.kind.as_str() {
            "disk" => Ok(BodyShape::disk()),
            "ellipse" => {
                if axes.len() != 2 {
                    bail!("field body.semi_axes: ellipse needs 2 semi-axes");
                }
                BodyShape::ellipse(axes[0], axes[1]).map_err(|e| anyhow::anyhow!("{e}"))
            }
            "sphere" => Ok(BodyShape::sphere()),
            "ellipsoid" => {
                if axes.len() != 3 {
                    bail!("field body.semi_axes: ellipsoid needs 3 semi-axes");
                }
                BodyShape::ellipsoid(axes[0], axes[1], axes[2]).map_err(|e| anyhow::anyhow!("{e}"))
            }
            "polyfile" => {
                let path = self
                    .body
                    .polygon_file
                    .as_ref()
                    .ok_or_else(|| anyhow::anyhow!("field body.polygon_file is required"))?;
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading polygon file {path}"))?;
                let mut verts = Vec::new();
                for (ln, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let mut it = line.split_whitespace();
                    let x: f64 = it
                        .next()
                        .ok_or_else(|| anyhow::anyhow!("polygon line {}", ln + 1))?
                        .parse()?;
                    let y: f64 = it
                        .next()
                        .ok_or_else(|| anyhow::anyhow!("polygon line {}", ln + 1))?
                        .parse()?;
                    verts.push([x, y]);
                }
                BodyShape::from_polygon(verts).map_err(|e| anyhow::anyhow!("{e}"))
            }
            other => bail!("field body.kind: unknown body kind '{other}'"),
        }
    }

    /// lambda grid plus the spring/mass groups.
    pub fn nondim(&self) -> anyhow::Result<(Vec<f64>, NondimParams)> {
        if let Some(p) = &self.params {
            return Ok((
                p.lambda.clone(),
                NondimParams { lambda: p.lambda[0], omega_n_sq: p.omega_n_sq, varpi: p.varpi },
            ));
        }
        let p = self.physical.as_ref().expect("validated");
        let phys = PhysicalParams {
            stream_speed: p.stream_speed,
            body_diameter: p.body_diameter,
            viscosity: p.viscosity,
            density: p.density,
            body_mass: p.body_mass,
            spring_stiffness: p.spring_stiffness,
        };
        let nd = fsilab_core::nondimensionalize(&phys).map_err(|e| anyhow::anyhow!("{e}"))?;
        let grid = p
            .lambda_scale
            .clone()
            .map(|scales| scales.iter().map(|s| s * nd.lambda).collect())
            .unwrap_or_else(|| vec![nd.lambda]);
        Ok((grid, nd))
    }
}
