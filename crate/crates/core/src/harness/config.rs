use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use super::{Experiment, HarnessError};
use crate::delivery::DeliverySettings;
use crate::dialog::{DialogConfig, ObsModel};
use crate::grid::{GridMap, Place};
use crate::rmax::RMaxConfig;

/// Every recognised key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("threads", "0"),
    ("rmax.m_min", "10"),
    ("rmax.replan_interval", "50"),
    ("rmax.r_max", "100"),
    ("rmax.step_cost", "-1"),
    ("rmax.gamma", "0.95"),
    ("nav.sizes", "20,30"),
    ("nav.caps", "133,180"),
    ("nav.density", "0.2"),
    ("nav.map_seed", "1"),
    ("nav.action_success", "0.8"),
    ("nav.source_episodes", "300"),
    ("nav.episodes", "200"),
    ("nav.window", "10"),
    ("delivery.map", "office"),
    ("delivery.offices", "alice:room4,bob:room5"),
    ("delivery.action_success", "0.6"),
    ("delivery.brs", "0.1,0.5,0.7"),
    ("delivery.outdated_br", "0.3"),
    ("delivery.trials", "2000"),
    ("delivery.practice_episodes", "1500"),
    ("delivery.pn_trials", "1000"),
    ("delivery.model", "learned"),
    ("dialog.serve_bonus", "80"),
    ("dialog.serve_penalty", "-80"),
    ("dialog.cost_general", "2"),
    ("dialog.cost_confirm", "1.5"),
    ("dialog.max_turns", "20"),
    ("dialog.belief_budget", "2000"),
    ("obs.rho_item", "0.8"),
    ("obs.rho_room", "0.8"),
    ("obs.rho_person", "0.8"),
    ("obs.rho_conf", "0.9"),
    ("stats.permutations", "10000"),
    ("cdf.br", "0.1"),
    ("cdf.rooms", "auto"),
    ("cdf.dialogs", "2000"),
    ("entropy.beliefs", "10000"),
    ("merged.success", "0.9,0.7,0.5"),
    ("merged.trap_success", "0.3333"),
    ("merged.learn_episodes", "300"),
    ("merged.episodes", "1000"),
    ("merged.model", "learned"),
    ("repl.br", "0.1"),
];

/// Keys that change how a run executes but not what it computes.
const UNHASHED: &[&str] = &["threads"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    values: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Parse a seed list: comma-separated numbers and inclusive `a-b` ranges.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, HarnessError> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || config_err(format!("bad seed `{part}`"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> ExperimentConfig {
        ExperimentConfig {
            experiment,
            seeds: vec![1],
            output_dir: PathBuf::from("out"),
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Parse `key = value` lines; `#` starts a comment. The keys
    /// `experiment`, `seeds` and `output_dir` set the matching fields.
    pub fn parse(text: &str, experiment: Option<Experiment>) -> Result<ExperimentConfig, HarnessError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| config_err(format!("line {}: expected key = value", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let named = pairs.iter().find(|(k, _)| k == "experiment").map(|(_, v)| v.parse::<Experiment>()).transpose()?;
        let experiment = match (experiment, named) {
            (Some(a), Some(b)) if a != b => {
                return Err(config_err(format!("config is for `{b}`, not `{a}`")));
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(config_err("no experiment named")),
        };
        let mut cfg = ExperimentConfig::new(experiment);
        for (k, v) in pairs.iter().filter(|(k, _)| k != "experiment") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Set one key, as from the config file or an override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key {
            "seeds" | "seed" => self.seeds = parse_seeds(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => {
                let slot = self.values.get_mut(key).ok_or_else(|| config_err(format!("unknown key `{key}`")))?;
                *slot = value.to_string();
            }
        }
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, text: &str) -> Result<(), HarnessError> {
        let (k, v) = text.split_once('=').ok_or_else(|| config_err(format!("override `{text}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() && self.experiment != Experiment::DialogRepl {
            return Err(config_err("at least one seed is required"));
        }
        self.rmax()?;
        self.delivery_settings()?;
        for key in ["delivery.brs", "merged.success"] {
            if self.f64_list(key)?.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(config_err(format!("{key}: values must lie in [0,1]")));
            }
        }
        for key in ["delivery.outdated_br", "delivery.action_success", "nav.action_success", "nav.density", "cdf.br", "merged.trap_success", "repl.br"] {
            if !(0.0..=1.0).contains(&self.f64(key)?) {
                return Err(config_err(format!("{key}: must lie in [0,1]")));
            }
        }
        let (sizes, caps) = (self.usize_list("nav.sizes")?, self.usize_list("nav.caps")?);
        if sizes.len() != caps.len() || sizes.iter().any(|s| *s < 8) || caps.contains(&0) {
            return Err(config_err("nav.sizes and nav.caps need equal lengths, sizes >= 8 and caps >= 1"));
        }
        for key in ["nav.window", "delivery.trials", "cdf.dialogs", "entropy.beliefs", "merged.episodes", "stats.permutations"] {
            if self.usize(key)? == 0 {
                return Err(config_err(format!("{key} must be at least 1")));
            }
        }
        self.delivery_map()?;
        self.offices()?;
        self.cdf_rooms()?;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&str, HarnessError> {
        self.values.get(key).map(String::as_str).ok_or_else(|| config_err(format!("unknown key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64, HarnessError> {
        let v = self.get(key)?;
        v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| config_err(format!("{key}: `{v}` is not a number")))
    }

    pub fn usize(&self, key: &str) -> Result<usize, HarnessError> {
        let v = self.get(key)?;
        v.parse().map_err(|_| config_err(format!("{key}: `{v}` is not a non-negative integer")))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, HarnessError> {
        let v = self.get(key)?;
        v.split(',')
            .map(|x| x.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<_>>>()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| config_err(format!("{key}: `{v}` is not a list of numbers")))
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, HarnessError> {
        let v = self.get(key)?;
        v.split(',')
            .map(|x| x.trim().parse::<usize>().ok())
            .collect::<Option<Vec<_>>>()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| config_err(format!("{key}: `{v}` is not a list of integers")))
    }

    /// Worker threads; 0 means one per available core.
    pub fn threads(&self) -> usize {
        match self.usize("threads") {
            Ok(0) | Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
            Ok(n) => n,
        }
    }

    pub fn rmax(&self) -> Result<RMaxConfig, HarnessError> {
        let cfg = RMaxConfig {
            m_min: self.usize("rmax.m_min")? as u32,
            replan_interval: self.usize("rmax.replan_interval")?,
            r_max: self.f64("rmax.r_max")?,
            step_cost: self.f64("rmax.step_cost")?,
            gamma: self.f64("rmax.gamma")?,
            ..RMaxConfig::default()
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn delivery_settings(&self) -> Result<DeliverySettings, HarnessError> {
        let dialog = DialogConfig {
            serve_bonus: self.f64("dialog.serve_bonus")?,
            serve_penalty: self.f64("dialog.serve_penalty")?,
            cost_general: self.f64("dialog.cost_general")?,
            cost_confirm: self.f64("dialog.cost_confirm")?,
            max_turns: self.usize("dialog.max_turns")?,
            gamma: 1.0,
            belief_budget: self.usize("dialog.belief_budget")?,
        };
        dialog.validate().map_err(|e| config_err(e.to_string()))?;
        let obs = ObsModel {
            rho_item: self.f64("obs.rho_item")?,
            rho_room: self.f64("obs.rho_room")?,
            rho_person: self.f64("obs.rho_person")?,
            rho_conf: self.f64("obs.rho_conf")?,
        };
        obs.validate().map_err(|e| config_err(e.to_string()))?;
        let pn_trials = self.usize("delivery.pn_trials")?;
        if pn_trials == 0 {
            return Err(config_err("delivery.pn_trials must be at least 1"));
        }
        Ok(DeliverySettings { dialog, obs, pn_trials, ..DeliverySettings::default() })
    }

    /// The delivery map: `office` for the bundled map, else a file path.
    pub fn delivery_map(&self) -> Result<GridMap, HarnessError> {
        match self.get("delivery.map")? {
            "office" => Ok(GridMap::office10x14()),
            path => GridMap::load(std::path::Path::new(path)).map_err(|e| config_err(format!("delivery.map: {e}"))),
        }
    }

    /// `person:room` pairs.
    pub fn offices(&self) -> Result<Vec<(String, Place)>, HarnessError> {
        let v = self.get("delivery.offices")?;
        v.split(',')
            .map(|pair| {
                let (p, r) = pair.split_once(':').ok_or_else(|| config_err(format!("delivery.offices: bad entry `{pair}`")))?;
                let room = Place::parse(r.trim()).ok_or_else(|| config_err(format!("delivery.offices: bad room `{r}`")))?;
                Ok((p.trim().to_string(), room))
            })
            .collect()
    }

    /// Rooms for the completion CDFs; `None` picks the nearest and farthest.
    pub fn cdf_rooms(&self) -> Result<Option<Vec<Place>>, HarnessError> {
        match self.get("cdf.rooms")? {
            "auto" => Ok(None),
            v => v
                .split(',')
                .map(|r| Place::parse(r.trim()).filter(|p| matches!(p, Place::Room(_))))
                .collect::<Option<Vec<_>>>()
                .map(Some)
                .ok_or_else(|| config_err(format!("cdf.rooms: `{v}`"))),
        }
    }

    /// Hash of everything that determines the output.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("experiment={}\n", self.experiment));
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        h.update(format!("seeds={}\n", seeds.join(",")));
        for (k, v) in self.values.iter().filter(|(k, _)| !UNHASHED.contains(&k.as_str())) {
            h.update(format!("{k}={v}\n"));
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let text = "experiment = delivery-table\nseeds = 1-3, 9\n# comment\ndelivery.trials = 50 # inline\n";
        let mut cfg = ExperimentConfig::parse(text, None).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3, 9]);
        assert_eq!(cfg.usize("delivery.trials").unwrap(), 50);
        cfg.apply_override("delivery.brs=0.2,0.4").unwrap();
        assert_eq!(cfg.f64_list("delivery.brs").unwrap(), vec![0.2, 0.4]);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_experiments_are_config_errors() {
        assert_eq!(ExperimentConfig::parse("experiment = x", None).unwrap_err().exit_code(), 2);
        assert_eq!(ExperimentConfig::parse("nope = 1", Some(Experiment::NavTransfer)).unwrap_err().exit_code(), 2);
        assert!(ExperimentConfig::parse("experiment = nav-transfer", Some(Experiment::DialogCdf)).is_err());
        let mut cfg = ExperimentConfig::new(Experiment::DeliveryTable);
        cfg.set("delivery.brs", "0.1,2").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("delivery.brs", "0.1").unwrap();
        cfg.set("seeds", "").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_values_but_not_threads() {
        let a = ExperimentConfig::new(Experiment::MergedSetting);
        let mut b = a.clone();
        b.set("threads", "3").unwrap();
        assert_eq!(a.hash(), b.hash());
        b.set("merged.episodes", "5").unwrap();
        assert_ne!(a.hash(), b.hash());
        b.set("merged.episodes", "1000").unwrap();
        b.set("seeds", "2").unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
