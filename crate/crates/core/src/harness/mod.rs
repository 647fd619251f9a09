//! Experiment harness: configuration, seeded runs and CSV artifacts.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]. Random
//! streams are derived from `(seed, tag)` pairs, so reruns produce the same
//! bytes and independent parts of a run never share a generator.

mod config;
pub mod delivery_table;
pub mod maps;
pub mod merged;
pub mod nav_transfer;
pub mod repl;
pub mod stats;

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{ExperimentConfig, DEFAULTS};

use crate::delivery::DeliveryError;
use crate::kb::KbError;
use crate::rmax::ModelError;
use crate::task_model::TaskModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    NavTransfer,
    DeliveryTable,
    DialogCdf,
    EntropyTable,
    MergedSetting,
    DialogRepl,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::NavTransfer,
        Experiment::DeliveryTable,
        Experiment::DialogCdf,
        Experiment::EntropyTable,
        Experiment::MergedSetting,
        Experiment::DialogRepl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::NavTransfer => "nav-transfer",
            Experiment::DeliveryTable => "delivery-table",
            Experiment::DialogCdf => "dialog-cdf",
            Experiment::EntropyTable => "entropy-table",
            Experiment::MergedSetting => "merged-setting",
            Experiment::DialogRepl => "dialog-repl",
        }
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment `{s}`")))
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("{0}")]
    Run(String),
    #[error("io: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Resource(_) => 3,
            HarnessError::Run(_) | HarnessError::Io(_) => 1,
        }
    }
}

impl From<DeliveryError> for HarnessError {
    fn from(e: DeliveryError) -> Self {
        if e.is_resource() {
            HarnessError::Resource(e.to_string())
        } else {
            HarnessError::Run(e.to_string())
        }
    }
}

impl From<TaskModelError> for HarnessError {
    fn from(e: TaskModelError) -> Self {
        DeliveryError::from(e).into()
    }
}

impl From<KbError> for HarnessError {
    fn from(e: KbError) -> Self {
        DeliveryError::from(e).into()
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        HarnessError::Run(e.to_string())
    }
}

/// Seed of the random stream named `tag` under `seed`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub fn stream(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag))
}

/// A CSV file: header, rows, and the provenance comment written above them.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Table {
        Table { name: name.to_string(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn render(&self, config_hash: &str) -> String {
        let mut out = format!("# config_hash={config_hash} version={}\n", env!("CARGO_PKG_VERSION"));
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Fixed-precision number formatting for CSV cells.
pub fn num(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x:.6}").unwrap();
    if s == "-0.000000" {
        s.remove(0);
    }
    s
}

pub fn flag(b: bool) -> String {
    (b as u8).to_string()
}

/// Run a batch experiment and return its tables.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Table>, HarnessError> {
    match cfg.experiment {
        Experiment::NavTransfer => Ok(nav_transfer::run(cfg)?.tables()),
        Experiment::DeliveryTable => Ok(delivery_table::run_delivery_table(cfg)?.tables()),
        Experiment::DialogCdf => Ok(delivery_table::run_dialog_cdf(cfg)?.tables()),
        Experiment::EntropyTable => Ok(delivery_table::run_entropy_table(cfg)?.tables()),
        Experiment::MergedSetting => Ok(merged::run(cfg)?.tables()),
        Experiment::DialogRepl => Err(HarnessError::Config("dialog-repl is interactive".into())),
    }
}

/// Write `tables` into `dir`, one `<name>.csv` each.
pub fn write_tables(dir: &Path, tables: &[Table], config_hash: &str) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        std::fs::write(&path, t.render(config_hash)).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Run `f` on every item on up to `threads` worker threads; results come
/// back in input order.
pub(crate) fn parallel_map<T: Sync, U: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<(usize, U)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= items.len() {
                            break;
                        }
                        done.push((i, f(&items[i])));
                    }
                    done
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, u)| u).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_tag() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_eq!(derive_seed(7, "x"), derive_seed(7, "x"));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..50).collect();
        assert_eq!(parallel_map(&items, 4, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn table_render() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![num(0.5), flag(true)]);
        let text = t.render("abc");
        assert!(text.starts_with("# config_hash=abc version="));
        assert!(text.ends_with("a,b\n0.500000,1\n"));
        assert_eq!(num(-0.0000001), "0.000000");
    }
}
