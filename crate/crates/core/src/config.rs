//! Run configuration: a JSON document with every field optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SieveError};
use crate::geometry::{DLaw, LimitDomain, Topology};
use crate::harness::{EpsilonSchedule, Forcing, MeshParams, Model, Sweep};
use crate::kernel::{GammaExtent, InterfaceKernel, KernelKind};
use crate::semigroup::HeatOptions;
use crate::solvers::{CgOptions, EigenOptions, Preconditioner};

pub const ENV_THREADS: &str = "SIEVELAB_THREADS";
pub const ENV_OUTPUT_DIR: &str = "SIEVELAB_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OmegaConfig {
    /// Edge of the interface cube.
    pub edge: f64,
    pub depth_minus: f64,
    pub depth_plus: f64,
}

impl Default for OmegaConfig {
    fn default() -> Self {
        Self {
            edge: 1.0,
            depth_minus: 0.5,
            depth_plus: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    /// Eigenvalues per operator, the zero eigenvalue included.
    pub k: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Inner CG steps of the preconditioner (0 selects plain Jacobi).
    pub inner_cg: usize,
    pub guard: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            k: 6,
            tol: 1e-7,
            max_iter: 3000,
            inner_cg: 12,
            guard: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LinearConfig {
    fn default() -> Self {
        let d = CgOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dimension: usize,
    pub omega: OmegaConfig,
    pub topology: Topology,
    pub kernel: KernelKind,
    /// Defaults to `d = eps^3` for `n = 2` and `d = eps^2.5` for `n = 3`.
    pub d_law: Option<DLaw>,
    pub eps: Vec<f64>,
    pub mesh: MeshParams,
    pub model: Model,
    pub eigen: EigenConfig,
    pub linear: LinearConfig,
    pub heat: HeatOptions,
    /// Worker threads (0 = all cores).
    pub threads: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Refuse to sweep plans that fail the assumption audit.
    pub audit_gate: bool,
    /// Record wall-clock times (off keeps reports reproducible).
    pub timings: bool,
    pub hole_scale: f64,
    /// Data for interface sweeps (default `sign-normal`).
    pub forcing: Option<Forcing>,
    /// Data for Robin sweeps (default `sign-tangential`).
    pub robin_forcing: Option<Forcing>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dimension: 2,
            omega: OmegaConfig::default(),
            topology: Topology::Interface,
            kernel: KernelKind::Constant { value: 1.0 },
            d_law: None,
            eps: vec![0.25, 0.125, 0.0625],
            mesh: MeshParams::default(),
            model: Model::Reduced,
            eigen: EigenConfig::default(),
            linear: LinearConfig::default(),
            heat: HeatOptions::default(),
            threads: 0,
            seed: 0x5eed,
            output_dir: PathBuf::from("sievelab-out"),
            audit_gate: true,
            timings: false,
            hole_scale: 1.0,
            forcing: None,
            robin_forcing: None,
        }
    }
}

/// Reads and validates a config file; an empty file gives the defaults.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json_str(&text)
}

/// Parses `constant:V`, `gaussian:A,W`, `cosine:B,A,F` or `table:PATH`.
pub fn parse_kernel_spec(spec: &str, extent: GammaExtent) -> Result<KernelKind> {
    let bad = || SieveError::Config(format!("bad kernel spec {spec:?}"));
    let (name, args) = spec.split_once(':').ok_or_else(bad)?;
    if name == "table" {
        return Ok(InterfaceKernel::load_table(Path::new(args), extent)?.kind().clone());
    }
    let nums: Vec<f64> = args
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let kind = match (name, nums.as_slice()) {
        ("constant", [v]) => KernelKind::Constant { value: *v },
        ("gaussian", [a, w]) => KernelKind::Gaussian {
            amplitude: *a,
            width: *w,
        },
        ("cosine", [b, a, f]) => KernelKind::SeparableCosine {
            base: *b,
            amplitude: *a,
            frequency: *f,
        },
        _ => return Err(bad()),
    };
    InterfaceKernel::new(kind.clone(), extent)?;
    Ok(kind)
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = if text.trim().is_empty() {
            RunConfig::default()
        } else {
            serde_json::from_str(text).map_err(|e| SieveError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `SIEVELAB_THREADS` and `SIEVELAB_OUTPUT_DIR` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(t) = std::env::var(ENV_THREADS) {
            self.threads = t
                .trim()
                .parse()
                .map_err(|_| SieveError::Config(format!("{ENV_THREADS} = {t:?} is not a count")))?;
        }
        if let Ok(d) = std::env::var(ENV_OUTPUT_DIR) {
            self.output_dir = PathBuf::from(d);
        }
        Ok(())
    }

    pub fn d_law(&self) -> DLaw {
        self.d_law.unwrap_or(if self.dimension == 3 {
            DLaw { c: 1.0, p: 2.5 }
        } else {
            DLaw::cubic()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.dimension, 2 | 3) {
            return Err(SieveError::Config(format!(
                "dimension must be 2 or 3, got {}",
                self.dimension
            )));
        }
        let law = self.d_law();
        if !(law.c > 0.0) {
            return Err(SieveError::Config(format!("d_law.c = {} must be positive", law.c)));
        }
        if !(law.p > 2.0) {
            return Err(SieveError::PlanViolation {
                assumption: "d-law-5+",
                detail: format!("d = c eps^p needs p > 2, got p = {}", law.p),
            });
        }
        if self.dimension == 3 && !(law.p < 4.0) {
            return Err(SieveError::PlanViolation {
                assumption: "d-law-4+",
                detail: format!("for n = 3 the passages shrink only if p < 4, got p = {}", law.p),
            });
        }
        self.domain()?;
        self.kernel()?;
        self.schedule()?;
        if !(self.hole_scale > 0.0) {
            return Err(SieveError::Config(format!(
                "hole_scale = {} must be positive",
                self.hole_scale
            )));
        }
        if !(2..=9).contains(&self.eigen.k) {
            return Err(SieveError::Config(format!("eigen.k = {} outside 2..=9", self.eigen.k)));
        }
        if !(self.eigen.tol > 0.0 && self.linear.tol > 0.0) {
            return Err(SieveError::Config("solver tolerances must be positive".into()));
        }
        let h = &self.heat;
        if !(h.t_final > 0.0) || h.steps == 0 || !(h.theta > 0.0 && h.theta <= 1.0) {
            return Err(SieveError::Config(format!("bad heat settings {h:?}")));
        }
        if h.samples == 0 || !h.steps.is_multiple_of(h.samples) {
            return Err(SieveError::Config(format!(
                "heat.samples = {} must divide heat.steps = {}",
                h.samples, h.steps
            )));
        }
        let m = &self.mesh;
        if !(m.h0 > 0.0 && m.full_h0 > 0.0) || m.hole_edges == 0 || m.rings == 0 {
            return Err(SieveError::Config(format!("bad mesh settings {m:?}")));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<LimitDomain> {
        let o = &self.omega;
        match self.topology {
            Topology::Interface => LimitDomain::interface(self.dimension, o.edge, o.depth_minus, o.depth_plus),
            Topology::Boundary => LimitDomain::boundary(self.dimension, o.edge, o.depth_minus),
        }
    }

    /// Single-sided box of the same total height, for Robin sweeps.
    pub fn robin_domain(&self) -> Result<LimitDomain> {
        let o = &self.omega;
        let depth = match self.topology {
            Topology::Interface => o.depth_minus + o.depth_plus,
            Topology::Boundary => o.depth_minus,
        };
        LimitDomain::boundary(self.dimension, o.edge, depth)
    }

    pub fn kernel(&self) -> Result<InterfaceKernel> {
        InterfaceKernel::new(self.kernel.clone(), self.domain()?.gamma_extent())
    }

    pub fn schedule(&self) -> Result<EpsilonSchedule> {
        let mut s = EpsilonSchedule::new(self.eps.clone(), self.d_law(), self.model, self.mesh)?;
        s.hole_scale = self.hole_scale;
        Ok(s)
    }

    fn fill(&self, mut sweep: Sweep, forcing: Option<Forcing>) -> Sweep {
        if let Some(f) = forcing {
            sweep.forcing = f;
        }
        sweep.k = self.eigen.k;
        sweep.cg = CgOptions {
            tol: self.linear.tol,
            max_iter: self.linear.max_iter,
        };
        sweep.eigen = EigenOptions {
            tol: self.eigen.tol,
            max_iter: self.eigen.max_iter,
            guard: self.eigen.guard,
            seed: self.seed,
            preconditioner: if self.eigen.inner_cg == 0 {
                Preconditioner::Jacobi
            } else {
                Preconditioner::InnerCg {
                    iterations: self.eigen.inner_cg,
                }
            },
        };
        sweep.heat = self.heat;
        sweep.threads = self.threads;
        sweep.audit_gate = self.audit_gate;
        sweep.timings = self.timings;
        sweep
    }

    pub fn sweep(&self) -> Result<Sweep> {
        let s = Sweep::new(self.domain()?, self.kernel()?, self.schedule()?);
        let forcing = match self.topology {
            Topology::Interface => self.forcing,
            Topology::Boundary => self.robin_forcing.or(self.forcing),
        };
        Ok(self.fill(s, forcing))
    }

    pub fn robin_sweep(&self) -> Result<Sweep> {
        let dom = self.robin_domain()?;
        let kernel = InterfaceKernel::new(self.kernel.clone(), dom.gamma_extent())?;
        let s = Sweep::new(dom, kernel, self.schedule()?);
        Ok(self.fill(s, self.robin_forcing))
    }

    /// Compact JSON of the fully defaulted config, without the fields that
    /// cannot change a result (threads, output directory, timings).
    pub fn canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            for k in ["threads", "output_dir", "timings"] {
                o.remove(k);
            }
        }
        Ok(serde_json::to_string(&v)?)
    }

    /// First 16 hex digits of the SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical_json()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_json_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.d_law(), DLaw::cubic());
        assert_eq!(RunConfig::from_json_str("{}").unwrap(), cfg);
    }

    #[test]
    fn small_exponent_cites_the_d_law() {
        let err = RunConfig::from_json_str(r#"{"d_law": {"c": 1.0, "p": 1.0}}"#).unwrap_err();
        assert!(matches!(
            err,
            SieveError::PlanViolation {
                assumption: "d-law-5+",
                ..
            }
        ));
        let err = RunConfig::from_json_str(r#"{"dimension": 3, "d_law": {"c": 1.0, "p": 4.5}}"#).unwrap_err();
        assert!(matches!(
            err,
            SieveError::PlanViolation {
                assumption: "d-law-4+",
                ..
            }
        ));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_json_str(r#"{"foo": 1}"#).unwrap_err();
        assert!(err.to_string().contains("foo"));
        let err = RunConfig::from_json_str(r#"{"mesh": {"h00": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("h00"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.eps = vec![0.25, 0.125];
        assert_eq!(a.hash().unwrap().len(), 16);
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap(), RunConfig::default().hash().unwrap());
        let mut c = a.clone();
        c.threads = 3;
        c.output_dir = "elsewhere".into();
        assert_eq!(a.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn kernel_specs() {
        let ext = GammaExtent::new(1, 1.0).unwrap();
        assert_eq!(
            parse_kernel_spec("constant:2", ext).unwrap(),
            KernelKind::Constant { value: 2.0 }
        );
        assert!(matches!(
            parse_kernel_spec("gaussian:1,0.5", ext).unwrap(),
            KernelKind::Gaussian { .. }
        ));
        assert!(matches!(
            parse_kernel_spec("cosine:1,0.5,1", ext).unwrap(),
            KernelKind::SeparableCosine { .. }
        ));
        assert!(parse_kernel_spec("constant:-1", ext).is_err());
        assert!(parse_kernel_spec("wobble:1", ext).is_err());
    }
}
