//! Everything a subcommand needs, read from one config file.

use std::path::{Path, PathBuf};

use fptorus::coeff::config::Config;
use fptorus::fvsolver::FVConfig;
use fptorus::picard::{GlobalOptions, PicardOptions, DEFAULT_SAFETY};
use fptorus::{ProblemSpec, Result};

pub const RUN_KEYS: &[&str] = &[
    "T_final",
    "stepper",
    "mobility",
    "dt",
    "dt_safety",
    "diag_every",
    "snapshot_every",
    "max_newton_iter",
    "newton_tol",
    "n_t",
    "max_n_t",
    "max_iter",
    "refine",
    "windows",
    "max_frames",
    "c_gauss",
    "safety",
    "pairs",
    "seed",
];

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: ProblemSpec,
    pub fv: FVConfig,
    pub picard: PicardOptions,
    pub global: GlobalOptions,
    /// Fixed integral-bound constant; fitted when absent.
    pub c_gauss: Option<f64>,
    pub safety: f64,
    /// Random pairs drawn for the contraction estimate.
    pub pairs: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub config_path: PathBuf,
    /// The config file exactly as read.
    pub config_text: String,
}

impl RunConfig {
    /// `seed` from the command line wins over `[run] seed`.
    pub fn load(path: &Path, out: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        let cfg = Config::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let spec = ProblemSpec::from_config(&cfg, base)?;
        cfg.check_known("run", RUN_KEYS)?;

        let fv_default = FVConfig::default();
        let fv = FVConfig {
            dt_safety: cfg.get_parsed("run", "dt_safety")?.unwrap_or(fv_default.dt_safety),
            stepper: cfg.get_parsed("run", "stepper")?.unwrap_or(fv_default.stepper),
            mobility: cfg.get_parsed("run", "mobility")?.unwrap_or(fv_default.mobility),
            max_newton_iter: cfg.get_parsed("run", "max_newton_iter")?.unwrap_or(fv_default.max_newton_iter),
            newton_tol: cfg.get_parsed("run", "newton_tol")?.unwrap_or(fv_default.newton_tol),
            diag_every: cfg.get_parsed("run", "diag_every")?.unwrap_or(fv_default.diag_every),
            dt: cfg.get_parsed("run", "dt")?,
            snapshot_every: cfg.get_parsed("run", "snapshot_every")?.unwrap_or(100),
        };
        fv.validate()?;

        let pd = PicardOptions::default();
        let picard = PicardOptions {
            tol: spec.tolerances.picard,
            max_iter: cfg.get_parsed("run", "max_iter")?.unwrap_or(pd.max_iter),
            n_t: cfg.get_parsed("run", "n_t")?.unwrap_or(pd.n_t),
            max_n_t: cfg.get_parsed("run", "max_n_t")?.unwrap_or(pd.max_n_t),
            refine: cfg.get_parsed("run", "refine")?.unwrap_or(pd.refine),
            ..pd
        };
        let c_gauss = cfg.get_parsed("run", "c_gauss")?;
        let safety = cfg.get_parsed("run", "safety")?.unwrap_or(DEFAULT_SAFETY);
        let gd = GlobalOptions::default();
        let global = GlobalOptions {
            picard: PicardOptions {
                refine: false,
                ..picard.clone()
            },
            mu: spec.mu,
            c_gauss,
            safety,
            windows: cfg.get_parsed("run", "windows")?,
            max_frames: cfg.get_parsed("run", "max_frames")?.unwrap_or(gd.max_frames),
            ..gd
        };
        Ok(Self {
            spec,
            fv,
            picard,
            global,
            c_gauss,
            safety,
            pairs: cfg.get_parsed("run", "pairs")?.unwrap_or(20),
            seed: match seed {
                Some(s) => s,
                None => cfg.get_parsed("run", "seed")?.unwrap_or(0),
            },
            out: out.to_path_buf(),
            config_path: path.to_path_buf(),
            config_text: text,
        })
    }
}
