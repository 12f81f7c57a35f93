use std::path::Path;

use relmrf::{LbpConfig, RelationshipKind};
use serde::{Deserialize, Serialize};

use crate::args::{CommonArgs, Mode};
use crate::Failure;

/// Keys accepted in a `--config` TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    relationship: Option<RelationshipKind>,
    mode: Option<Mode>,
    k: Option<usize>,
    damping: Option<f64>,
    max_iters: Option<usize>,
    tolerance: Option<f64>,
    workers: Option<usize>,
    seed: Option<u64>,
    repair: Option<bool>,
    theta: Option<Vec<f64>>,
}

/// Settings after merging flags over the config file over defaults. Echoed into
/// every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub relationship: RelationshipKind,
    pub mode: Mode,
    pub k: usize,
    pub workers: usize,
    pub seed: u64,
    pub lbp: LbpConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn resolve(common: &CommonArgs, theta: Option<Vec<f64>>) -> Result<Self, Failure> {
        let file = match &common.config {
            Some(path) => read_file(path)?,
            None => FileConfig::default(),
        };
        let seed = common.seed.or(file.seed).unwrap_or(0);
        let defaults = LbpConfig::default();
        let lbp = LbpConfig {
            max_iterations: common.max_iters.or(file.max_iters).unwrap_or(defaults.max_iterations),
            damping: common.damping.or(file.damping).unwrap_or(defaults.damping),
            tolerance: common.tolerance.or(file.tolerance).unwrap_or(defaults.tolerance),
            seed,
            repair: common.repair || file.repair.unwrap_or(false),
        };
        lbp.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        let config = RunConfig {
            relationship: common
                .relationship
                .map(Into::into)
                .or(file.relationship)
                .unwrap_or(RelationshipKind::Equivalence),
            mode: common.mode.or(file.mode).unwrap_or(Mode::Dense),
            k: common.k.or(file.k).unwrap_or(8),
            workers: common.workers.or(file.workers).unwrap_or(1),
            seed,
            lbp,
            theta: theta.or(file.theta),
        };
        if config.k == 0 {
            return Err(Failure::Usage("--k must be at least 1".into()));
        }
        if config.workers == 0 {
            return Err(Failure::Usage("--workers must be at least 1".into()));
        }
        Ok(config)
    }
}

fn read_file(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(anyhow::anyhow!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Input(anyhow::anyhow!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn flags_override_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "damping = 0.7\nmax_iters = 50\nrelationship = \"parent-child\"\nworkers = 3").unwrap();
        let common = CommonArgs {
            damping: Some(0.2),
            config: Some(f.path().to_path_buf()),
            ..Default::default()
        };
        let c = RunConfig::resolve(&common, None).unwrap();
        assert_eq!(c.lbp.damping, 0.2);
        assert_eq!(c.lbp.max_iterations, 50);
        assert_eq!(c.relationship, RelationshipKind::ParentChild);
        assert_eq!(c.workers, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "dampnig = 0.7").unwrap();
        let common = CommonArgs {
            config: Some(f.path().to_path_buf()),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&common, None), Err(Failure::Input(_))));
    }

    #[test]
    fn bad_damping_is_usage() {
        let common = CommonArgs {
            damping: Some(1.5),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&common, None), Err(Failure::Usage(_))));
    }
}
