//! Resolved experiment configuration.
//!
//! One serializable [`RunConfig`] fully determines a run: every artifact in a
//! run directory is reproducible from the persisted copy alone (plus the
//! dataset files it points at). Values come from built-in defaults, then an
//! optional config file (TOML, or JSON such as a previous run's manifest),
//! then command-line flags — later sources win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kgforget::eval::EvalSetting;
use kgforget::graph::DeletionKind;
use kgforget::model::{ModelKind, Norm};
use kgforget::train::{Optimizer, TrainConfig};
use kgforget::unlearn::{Method, UnlearnConfig};

/// What to delete: a seeded random share, or an explicit label file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DeleteSpec {
    pub kind: DeletionKind,
    /// Fraction of triples/entities/relations to delete (seeded draw).
    pub ratio: Option<f64>,
    /// Label file naming the deletions; overrides `ratio` when present.
    /// Triples: one tab-separated `head, relation, tail` per line.
    /// Entities/relations: one label per line.
    pub file: Option<PathBuf>,
}

impl Default for DeleteSpec {
    fn default() -> Self {
        DeleteSpec {
            kind: DeletionKind::Triples,
            ratio: Some(0.05),
            file: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Split directory (`train.txt` [+ `valid.txt`/`test.txt`]) or single TSV.
    pub dataset: PathBuf,
    pub model: ModelKind,
    pub dim: usize,
    pub margin: f64,
    pub norm: Norm,
    pub train: TrainConfig,
    pub unlearn: UnlearnConfig,
    pub delete: DeleteSpec,
    pub eval_setting: EvalSetting,
    /// Methods the `compare`/`sweep` subcommands run, in row order.
    pub methods: Vec<Method>,
    /// Test share held out of single-file datasets (directories bring their
    /// own splits).
    pub holdout_frac: f64,
    /// Deletion ratios the `sweep` subcommand walks.
    pub sweep_ratios: Vec<f64>,
    pub out: PathBuf,
    /// Global seed; drives initialization, batching, holdouts, deletion
    /// draws, and probe vectors. Overrides `train.seed`.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::new(),
            model: ModelKind::TransE,
            dim: 32,
            margin: 1.0,
            norm: Norm::L1,
            train: TrainConfig::default(),
            unlearn: UnlearnConfig::default(),
            delete: DeleteSpec::default(),
            eval_setting: EvalSetting::Filtered,
            methods: vec![Method::Kgif, Method::WfKgif, Method::ZeroFisher],
            holdout_frac: 0.1,
            sweep_ratios: vec![0.01, 0.05, 0.1],
            out: PathBuf::new(),
            seed: 0,
        }
    }
}

/// Command-line values that override the config file. `None` = not given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub dim: Option<usize>,
    pub margin: Option<f64>,
    pub norm: Option<Norm>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub optimizer: Option<Optimizer>,
    pub batch: Option<usize>,
    pub neg: Option<usize>,
    pub delete_kind: Option<DeletionKind>,
    pub delete_ratio: Option<f64>,
    pub delete_file: Option<PathBuf>,
    pub methods: Option<Vec<Method>>,
    pub iters: Option<usize>,
    pub damping: Option<f64>,
    pub step: Option<f64>,
    pub scale: Option<f64>,
    pub noise: Option<f64>,
    pub fd_mode: Option<kgforget::unlearn::FdMode>,
    /// `Some(None)` = explicitly unbounded; `Some(Some(k))` = radius k.
    pub khop: Option<Option<usize>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub eval_setting: Option<EvalSetting>,
    pub holdout_frac: Option<f64>,
    pub sweep_ratios: Option<Vec<f64>>,
}

/// Build the resolved config: defaults ← config file ← flags, then the
/// model-dependent optimizer/learning-rate fallbacks for anything still
/// unspecified, then validation.
pub fn resolve_config(file: Option<&Path>, ov: &Overrides) -> Result<RunConfig> {
    let (mut cfg, file_set_optimizer, file_set_lr) = match file {
        None => (RunConfig::default(), false, false),
        Some(p) => load_config_file(p)?,
    };

    macro_rules! overlay {
        ($($src:ident => $dst:expr),+ $(,)?) => {
            $(if let Some(v) = ov.$src.clone() { $dst = v; })+
        };
    }
    overlay! {
        dataset => cfg.dataset,
        model => cfg.model,
        dim => cfg.dim,
        margin => cfg.margin,
        norm => cfg.norm,
        epochs => cfg.train.epochs,
        batch => cfg.train.batch_size,
        neg => cfg.train.n_neg_per_pos,
        delete_kind => cfg.delete.kind,
    }
    // ratio and file wrap their flag values in Some, so overlay! can't place them
    if let Some(r) = ov.delete_ratio {
        cfg.delete.ratio = Some(r);
    }
    if let Some(f) = ov.delete_file.clone() {
        cfg.delete.file = Some(f);
    }
    if let Some(ms) = ov.methods.clone() {
        if let [only] = ms[..] {
            cfg.unlearn.method = only;
        }
        cfg.methods = ms;
    }
    overlay! {
        iters => cfg.unlearn.iters,
        damping => cfg.unlearn.damping,
        step => cfg.unlearn.step,
        scale => cfg.unlearn.scale,
        noise => cfg.unlearn.noise,
        fd_mode => cfg.unlearn.fd_mode,
        khop => cfg.unlearn.khop,
        seed => cfg.seed,
        out => cfg.out,
        eval_setting => cfg.eval_setting,
        holdout_frac => cfg.holdout_frac,
        sweep_ratios => cfg.sweep_ratios,
    }

    let optimizer_given = ov.optimizer.is_some() || file_set_optimizer;
    let lr_given = ov.lr.is_some() || file_set_lr;
    if let Some(o) = ov.optimizer {
        cfg.train.optimizer = o;
    }
    if let Some(l) = ov.lr {
        cfg.train.lr = l;
    }
    if !optimizer_given {
        cfg.train.optimizer = Optimizer::default_for(cfg.model);
    }
    if !lr_given {
        cfg.train.lr = cfg.train.optimizer.default_lr();
    }
    cfg.train.seed = cfg.seed;

    validate(&cfg)?;
    Ok(cfg)
}

/// Parse a config file; JSON when the extension says so (so a previous run's
/// manifest round-trips), TOML otherwise. Also reports whether the file set
/// `train.optimizer` / `train.lr`, which suppresses the model-dependent
/// fallbacks.
fn load_config_file(path: &Path) -> Result<(RunConfig, bool, bool)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        // accept either a bare RunConfig or a manifest wrapping one
        let value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        let cfg_value = value.get("config").unwrap_or(&value).clone();
        let has = |k: &str| cfg_value.pointer(&format!("/train/{k}")).is_some();
        let (opt, lr) = (has("optimizer"), has("lr"));
        let cfg: RunConfig = serde_json::from_value(cfg_value)
            .with_context(|| format!("interpreting {}", path.display()))?;
        Ok((cfg, opt, lr))
    } else {
        let value: toml::Value = text
            .parse()
            .with_context(|| format!("parsing {}", path.display()))?;
        let has = |k: &str| {
            value
                .get("train")
                .and_then(|t| t.get(k))
                .is_some()
        };
        let (opt, lr) = (has("optimizer"), has("lr"));
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("interpreting {}", path.display()))?;
        Ok((cfg, opt, lr))
    }
}

fn validate(cfg: &RunConfig) -> Result<()> {
    if cfg.dataset.as_os_str().is_empty() {
        bail!("no dataset given (--dataset or config file)");
    }
    if cfg.out.as_os_str().is_empty() {
        bail!("no output directory given (--out or config file)");
    }
    if cfg.dim == 0 {
        bail!("--dim must be at least 1");
    }
    if !(cfg.margin > 0.0 && cfg.margin.is_finite()) {
        bail!("--margin must be positive and finite");
    }
    if !(cfg.holdout_frac > 0.0 && cfg.holdout_frac < 1.0) {
        bail!("holdout fraction must lie strictly between 0 and 1");
    }
    if cfg.methods.is_empty() {
        bail!("at least one unlearning method is required");
    }
    if cfg.delete.ratio.is_none() && cfg.delete.file.is_none() {
        bail!("deletion spec needs either a ratio or a file");
    }
    if let Some(r) = cfg.delete.ratio {
        if !(r > 0.0 && r < 1.0) {
            bail!("--delete-ratio must lie strictly between 0 and 1");
        }
    }
    for &r in &cfg.sweep_ratios {
        if !(r > 0.0 && r < 1.0) {
            bail!("sweep ratios must lie strictly between 0 and 1");
        }
    }
    Ok(())
}

/// Hex SHA-256 of the canonical JSON serialization of the resolved config.
pub fn config_hash(cfg: &RunConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}
