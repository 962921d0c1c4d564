//! Key = value configuration files. Files provide run defaults; CLI flags
//! and environment variables override them.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layout::{ArrayLayout, PlacementPolicy};
use crate::metrics::ExecMode;
use crate::report::RunParams;
use crate::sim::SchedulerKind;
use crate::topology::{Place, WorkerPlacement};

/// Parsed `key = value` pairs, comments (#) and blank lines ignored.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: lineno + 1,
                msg: "expected 'key = value'".into(),
            })?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.values.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("bad value '{v}' for key '{key}'"))),
        }
    }

    /// Fold every recognized key into `params`; unknown keys are errors.
    pub fn apply(mut self, params: &mut RunParams) -> Result<()> {
        if let Some(v) = self.take::<String>("bench")? {
            params.bench.name = v.parse()?;
        }
        if let Some(v) = self.take("n")? {
            params.bench.n = v;
        }
        if let Some(v) = self.take("base_case")? {
            params.bench.base_case = v;
        }
        if let Some(v) = self.take("steps")? {
            params.bench.steps = v;
        }
        if let Some(v) = self.take("reps")? {
            params.bench.reps = v;
        }
        if let Some(v) = self.take("data_seed")? {
            params.bench.data_seed = v;
        }
        if let Some(v) = self.take::<String>("hints")? {
            params.bench.hints = v.parse()?;
        }
        if let Some(v) = self.take::<String>("layout")? {
            params.bench.layout = v.parse::<ArrayLayout>()?;
        }
        if let Some(v) = self.take("workers")? {
            params.workers = v;
        }
        if let Some(v) = self.take("sockets")? {
            params.sockets = v;
        }
        if let Some(v) = self.take("cores_per_socket")? {
            params.cores_per_socket = v;
        }
        if let Some(v) = self.take::<String>("placement")? {
            params.placement = v.parse::<WorkerPlacement>()?;
        }
        if let Some(v) = self.take::<String>("mode")? {
            params.mode = v.parse::<ExecMode>()?;
        }
        if let Some(v) = self.take::<String>("scheduler")? {
            params.sched.scheduler = v.parse::<SchedulerKind>()?;
        }
        if let Some(v) = self.take("local_bias")? {
            params.sched.policy.local_bias = v;
        }
        if let Some(v) = self.take("push_threshold")? {
            params.sched.policy.push_threshold = v;
        }
        if let Some(v) = self.take("seed")? {
            params.sched.seed = v;
        }
        if let Some(v) = self.take("steal_cost")? {
            params.sched.steal_cost = v;
        }
        if let Some(v) = self.take("promote_cost")? {
            params.sched.promote_cost = v;
        }
        if let Some(v) = self.take("sync_cost")? {
            params.sched.nontrivial_sync_cost = v;
        }
        if let Some(v) = self.take("check_parent_cost")? {
            params.sched.check_parent_cost = v;
        }
        if let Some(v) = self.take("mailbox_pop_cost")? {
            params.sched.mailbox_pop_cost = v;
        }
        if let Some(v) = self.take("push_attempt_cost")? {
            params.sched.push_attempt_cost = v;
        }
        if let Some(v) = self.take("spawn_cost")? {
            params.sched.spawn_cost = v;
        }
        if let Some(v) = self.take("llc_capacity")? {
            params.sched.llc_capacity = v;
        }
        // Cost model: an explicit switch plus the four latency knobs.
        let mut cm = params.sched.cost_model.unwrap_or_default();
        let mut touched = false;
        if let Some(v) = self.take("llc_local")? {
            cm.llc_local = v;
            touched = true;
        }
        if let Some(v) = self.take("llc_remote")? {
            cm.llc_remote = v;
            touched = true;
        }
        if let Some(v) = self.take("dram_local")? {
            cm.dram_local = v;
            touched = true;
        }
        if let Some(v) = self.take("dram_remote")? {
            cm.dram_remote = v;
            touched = true;
        }
        match self.take::<String>("cost_model")?.as_deref() {
            Some("on") => params.sched.cost_model = Some(cm),
            Some("off") => params.sched.cost_model = None,
            Some(other) => {
                return Err(Error::Config(format!(
                    "cost_model must be 'on' or 'off', got '{other}'"
                )))
            }
            None if touched => params.sched.cost_model = Some(cm),
            None => {}
        }
        if let Some(v) = self.take::<String>("placement_policy")? {
            params.placement_policy = Some(parse_placement_policy(&v)?);
        }
        if let Some(v) = self.take::<String>("partition")? {
            params.placement_policy = Some(parse_partition(&v)?);
        }
        if let Some(key) = self.values.keys().next() {
            return Err(Error::Config(format!("unknown config key '{key}'")));
        }
        Ok(())
    }
}

pub fn parse_placement_policy(s: &str) -> Result<PlacementPolicy> {
    match s {
        "first_touch" | "first-touch" => Ok(PlacementPolicy::FirstTouch),
        "interleave" => Ok(PlacementPolicy::Interleave),
        "partitioned" | "bench" => Err(Error::Config(
            "use the benchmark default or a 'partition = lo-hi:place,...' map".into(),
        )),
        other => Err(Error::Config(format!("unknown placement policy '{other}'"))),
    }
}

/// `lo-hi:place` comma-separated block ranges, e.g. `0-8:0,8-16:1`.
pub fn parse_partition(s: &str) -> Result<PlacementPolicy> {
    let mut ranges = Vec::new();
    for part in s.split(',') {
        let (range, place) = part.split_once(':').ok_or_else(|| {
            Error::Config(format!("bad partition entry '{part}' (want lo-hi:place)"))
        })?;
        let (lo, hi) = range
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("bad block range '{range}'")))?;
        let lo: u32 = lo
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad range bound '{lo}'")))?;
        let hi: u32 = hi
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad range bound '{hi}'")))?;
        let place = if place.trim() == "any" {
            Place::Any
        } else {
            Place::Socket(
                place
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad place '{place}'")))?,
            )
        };
        ranges.push((lo..hi, place));
    }
    Ok(PlacementPolicy::Partitioned(ranges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{BenchmarkName, BenchmarkSpec};
    use crate::topology::CostModel;

    #[test]
    fn parses_and_applies_known_keys() {
        let text = "
            # machine
            sockets = 2
            cores_per_socket = 4
            workers = 8
            placement = spread
            scheduler = numaws
            local_bias = 0.9
            push_threshold = 2
            cost_model = on
            dram_remote = 400
            seed = 17
        ";
        let cfg = FileConfig::parse(text).unwrap();
        let mut params = RunParams::new(BenchmarkSpec::new(BenchmarkName::Scan));
        cfg.apply(&mut params).unwrap();
        assert_eq!(params.sockets, 2);
        assert_eq!(params.workers, 8);
        assert_eq!(params.placement, WorkerPlacement::Spread);
        assert_eq!(params.sched.scheduler, SchedulerKind::NumaWs);
        assert_eq!(params.sched.policy.local_bias, 0.9);
        assert_eq!(params.sched.policy.push_threshold, 2);
        let cm = params.sched.cost_model.unwrap();
        assert_eq!(cm.dram_remote, 400);
        assert_eq!(cm.llc_local, CostModel::default().llc_local);
        assert_eq!(params.sched.seed, 17);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut params = RunParams::new(BenchmarkSpec::new(BenchmarkName::Scan));
        assert!(FileConfig::parse("wat = 1")
            .unwrap()
            .apply(&mut params)
            .is_err());
        assert!(FileConfig::parse("workers = soon")
            .unwrap()
            .apply(&mut params)
            .is_err());
        assert!(FileConfig::parse("broken line").is_err());
    }

    #[test]
    fn partition_maps_parse() {
        let p = parse_partition("0-8:0, 8-16:1, 16-24:any").unwrap();
        match p {
            PlacementPolicy::Partitioned(ranges) => {
                assert_eq!(ranges.len(), 3);
                assert_eq!(ranges[0], (0..8, Place::Socket(0)));
                assert_eq!(ranges[2], (16..24, Place::Any));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
