//! Scenario files, lab dispatch, reports and the bundled catalog.
//!
//! A scenario names a substrate, a lab and its parameters. Dispatch runs the
//! lab, freezes one trace and returns a report whose verdicts state whether
//! each expected outcome was observed. An expected impossibility (say, a
//! disagreeing read/write schedule) is a passing verdict.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::adversary::{
    apply_schedule, bivalency_hunt, random_schedule, AdversaryError, Protocol, Schedule,
    SchedulerAction,
};
use crate::cap::{conflicting_writes, run_cap_config, snapshot_consistency, CapMode, Workload};
use crate::clocks::{sweep, ChannelModel, ClockPair};
use crate::consensus::{check_consensus_from, CheckMode, ConsensusProtocol, ViolationKind};
use crate::kernel::{
    happened_before, vclock_lt, CellSpec, Configuration, Outcome, SubstrateKind, Trace, Value,
    MAX_PROCS,
};
use crate::ordering::{
    build_pomset, linear_extensions, lww_resolve, surplus_pairs, timestamp_map, Timestamp,
    EXTENSION_BOUND,
};
use crate::raw::RawExchange;
use crate::two_generals::{
    ack_chain, bilateral_coordination, common_knowledge, knowledge_depth, parse_mask,
    syntactic_depth, Depth, KnowledgeError, ATTACK_AT_DAWN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabKind {
    Consensus,
    TwoGenerals,
    Cap,
    Clocks,
    Ordering,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    /// Free-form note on which claim the scenario exercises.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exercises: Option<String>,
    pub substrate: SubstrateKind,
    pub n_procs: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<CellSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    pub lab: LabKind,
    #[serde(default)]
    pub lab_params: Json,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario JSON: {0}")]
    Parse(String),
    #[error("schema violation at {field}: {reason}")]
    Schema { field: String, reason: String },
    #[error("lab failed: {0}")]
    Lab(String),
}

fn schema(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        field: field.into(),
        reason: reason.into(),
    }
}

fn lab_err(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Lab(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Verdict {
    fn check(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            status: if ok { Status::Pass } else { Status::Fail },
            detail: detail.into(),
        }
    }

    fn unknown(name: &str, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            status: Status::Unknown,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario_id: String,
    pub seed: u64,
    pub lab: LabKind,
    pub substrate: SubstrateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exercises: Option<String>,
    pub verdicts: Vec<Verdict>,
    pub metrics: Map<String, Json>,
    pub witness: Option<Schedule>,
    pub notes: Vec<String>,
}

impl Report {
    fn new(config: &ScenarioConfig, seed: u64) -> Self {
        let mut notes = Vec::new();
        if config.seed.is_none() {
            notes.push("seed not given; defaulted to 0".to_string());
        }
        Self {
            scenario_id: config.scenario_id.clone(),
            seed,
            lab: config.lab,
            substrate: config.substrate,
            exercises: config.exercises.clone(),
            verdicts: Vec::new(),
            metrics: Map::new(),
            witness: None,
            notes,
        }
    }

    fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable metric"),
        );
    }

    pub fn all_as_expected(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    /// 0 when no verdict failed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_as_expected() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "scenario {} (lab {:?}, substrate {}, seed {})\n",
            self.scenario_id, self.lab, self.substrate, self.seed
        );
        for v in &self.verdicts {
            let tag = match v.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Unknown => "UNKNOWN",
            };
            out += &format!("  {tag:<7} {}: {}\n", v.name, v.detail);
        }
        for (k, v) in &self.metrics {
            out += &format!("  {k} = {v}\n");
        }
        if let Some(w) = &self.witness {
            out += &format!("  witness: {w}\n");
        }
        for n in &self.notes {
            out += &format!("  note: {n}\n");
        }
        out
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let config: ScenarioConfig =
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

fn params<T: for<'de> Deserialize<'de>>(lab: LabKind, raw: &Json) -> Result<T, ScenarioError> {
    let raw = if raw.is_null() {
        json!({})
    } else {
        raw.clone()
    };
    serde_json::from_value(raw).map_err(|e| schema(format!("lab_params ({lab:?})"), e.to_string()))
}

fn default_depth() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    Violation,
    Certified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HuntExpectation {
    Sustained,
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HuntParams {
    pub steps: usize,
    pub expect: HuntExpectation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusParams {
    pub protocol: String,
    pub inputs: Vec<Value>,
    #[serde(default = "ConsensusParams::default_mode")]
    pub mode: String,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub seeds: Option<u64>,
    /// Defaults to `violation` for the read/write family, else `certified`.
    #[serde(default)]
    pub expect: Option<Expectation>,
    #[serde(default)]
    pub hunt: Option<HuntParams>,
}

impl ConsensusParams {
    fn default_mode() -> String {
        "exhaustive".into()
    }

    fn check_mode(&self) -> Result<CheckMode, ScenarioError> {
        match self.mode.as_str() {
            "exhaustive" => Ok(CheckMode::Exhaustive { depth: self.depth }),
            "random" => Ok(CheckMode::Random {
                seeds: self.seeds.unwrap_or(1000),
                max_len: self.depth,
            }),
            other => Err(schema(
                "lab_params.mode",
                format!("expected exhaustive|random, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoGeneralsParams {
    #[serde(default)]
    pub rounds: usize,
    #[serde(default)]
    pub mask: String,
    /// Present for the bilateral coordination run.
    #[serde(default)]
    pub decide: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapExpect {
    pub divergence_events: Option<usize>,
    pub refused_requests: Option<usize>,
    pub not_occurred_txns: Option<usize>,
    pub final_consistent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapParams {
    pub mode: CapMode,
    /// Defaults to one conflicting write per side under a full partition.
    #[serde(default)]
    pub workload: Option<Workload>,
    #[serde(default)]
    pub expect: CapExpect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClocksParams {
    pub d0: f64,
    pub theta: f64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default = "ClocksParams::default_trials")]
    pub trials: usize,
}

impl ClocksParams {
    fn default_trials() -> usize {
        1000
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeParams {
    /// Length of the seeded random schedule used when none is given.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub timestamps: Option<Vec<Timestamp>>,
    #[serde(default)]
    pub expect_anomalies: Option<bool>,
}

impl ScenarioConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.scenario_id.is_empty() {
            return Err(schema("scenario_id", "must not be empty"));
        }
        if self.n_procs == 0 || self.n_procs > MAX_PROCS {
            return Err(schema("n_procs", format!("must be within 1..={MAX_PROCS}")));
        }
        if !self.cells.is_empty() && !matches!(self.lab, LabKind::Raw | LabKind::Ordering) {
            return Err(schema(
                "cells",
                "only the raw and ordering labs take cell declarations",
            ));
        }
        if let Some(s) = &self.schedule {
            validate_schedule(self.substrate, self.n_procs, s)?;
        }
        match self.lab {
            LabKind::Consensus => {
                let p: ConsensusParams = params(self.lab, &self.lab_params)?;
                p.check_mode()?;
                let protocol = ConsensusProtocol::by_name(&p.protocol, self.n_procs)
                    .map_err(|e| schema("lab_params.protocol", e.to_string()))?;
                if p.inputs.len() != self.n_procs {
                    return Err(schema(
                        "lab_params.inputs",
                        format!("{} inputs for {} processes", p.inputs.len(), self.n_procs),
                    ));
                }
                if p.protocol == "bilateral" && self.substrate != SubstrateKind::Bilateral {
                    return Err(schema(
                        "substrate",
                        "the bilateral protocol needs the bilateral substrate",
                    ));
                }
                protocol
                    .initial_on(self.substrate, &p.inputs)
                    .map_err(lab_err)?;
            }
            LabKind::TwoGenerals => {
                let p: TwoGeneralsParams = params(self.lab, &self.lab_params)?;
                let expected = if p.decide.is_some() {
                    SubstrateKind::Bilateral
                } else {
                    SubstrateKind::Fito
                };
                if self.substrate != expected || self.n_procs != 2 {
                    return Err(schema(
                        "substrate",
                        format!("this two-generals run needs 2 processes on {expected}"),
                    ));
                }
                if p.decide.is_none() {
                    let mask = parse_mask(&p.mask)
                        .map_err(|e| schema("lab_params.mask", e.to_string()))?;
                    if mask.len() != p.rounds {
                        return Err(schema(
                            "lab_params.mask",
                            format!("{} bits for {} rounds", mask.len(), p.rounds),
                        ));
                    }
                }
            }
            LabKind::Cap => {
                let p: CapParams = params(self.lab, &self.lab_params)?;
                if self.substrate != p.mode.substrate() {
                    return Err(schema(
                        "substrate",
                        format!("{:?} runs on {}", p.mode, p.mode.substrate()),
                    ));
                }
                let w = p.workload.unwrap_or_else(conflicting_writes);
                let (c, _) = run_cap_config(p.mode, &w)
                    .map_err(|e| schema("lab_params.workload", e.to_string()))?;
                if c.n_procs() != self.n_procs {
                    return Err(schema(
                        "n_procs",
                        format!("workload uses {} processes", c.n_procs()),
                    ));
                }
            }
            LabKind::Clocks => {
                let p: ClocksParams = params(self.lab, &self.lab_params)?;
                ChannelModel::new(p.d0, p.jitter, 0)
                    .map_err(|e| schema("lab_params", e.to_string()))?;
                if self.n_procs != 2 {
                    return Err(schema("n_procs", "the clock exchange has 2 processes"));
                }
            }
            LabKind::Ordering | LabKind::Raw => {
                let _: ExchangeParams = params(self.lab, &self.lab_params)?;
                Configuration::new(self.substrate, self.n_procs, &self.cells)
                    .map_err(|e| schema("cells", e.to_string()))?;
            }
        }
        Ok(())
    }
}

fn validate_schedule(kind: SubstrateKind, n: usize, s: &Schedule) -> Result<(), ScenarioError> {
    for (i, a) in s.steps.iter().enumerate() {
        let field = format!("schedule[{i}]");
        match a {
            SchedulerAction::TxnDecide { .. } if kind == SubstrateKind::Fito => {
                return Err(schema(
                    field,
                    format!("txn_decide ({a}) is not valid on the fito substrate"),
                ));
            }
            SchedulerAction::DeliverMsg { .. } | SchedulerAction::DropMsg { .. }
                if kind == SubstrateKind::Bilateral =>
            {
                let name = if matches!(a, SchedulerAction::DropMsg { .. }) {
                    "drop_msg"
                } else {
                    "deliver_msg"
                };
                return Err(schema(
                    field,
                    format!("{name} ({a}) is not valid on the bilateral substrate"),
                ));
            }
            SchedulerAction::ProcStep { process } if *process >= n => {
                return Err(schema(field, format!("process {process} does not exist")));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Replays `schedule` over the protocol-free exchange model from the
/// scenario's initial configuration (one `init` event per process).
pub fn run(
    scenario: &ScenarioConfig,
    seed: u64,
    schedule: &Schedule,
) -> Result<Trace, ScenarioError> {
    validate_schedule(scenario.substrate, scenario.n_procs, schedule)?;
    let initial = Configuration::new(scenario.substrate, scenario.n_procs, &scenario.cells)
        .map_err(|e| schema("cells", e.to_string()))?
        .initialize();
    let end = apply_schedule(&RawExchange, &initial, schedule)
        .map_err(|(i, e)| schema(format!("schedule[{i}]"), e.to_string()))?;
    Ok(end.trace(&scenario.scenario_id, seed))
}

/// Runs the scenario's lab. Any verdict other than the expected one is
/// reported, not raised; errors mean the lab could not run at all.
pub fn dispatch(config: &ScenarioConfig) -> Result<(Trace, Report), ScenarioError> {
    config.validate()?;
    let seed = config.seed();
    let mut report = Report::new(config, seed);
    let trace = match config.lab {
        LabKind::Consensus => consensus_lab(config, seed, &mut report)?,
        LabKind::TwoGenerals => two_generals_lab(config, seed, &mut report)?,
        LabKind::Cap => cap_lab(config, seed, &mut report)?,
        LabKind::Clocks => clocks_lab(config, seed, &mut report)?,
        LabKind::Ordering | LabKind::Raw => exchange_lab(config, seed, &mut report)?,
    };
    Ok((trace, report))
}

fn consensus_lab(
    config: &ScenarioConfig,
    seed: u64,
    report: &mut Report,
) -> Result<Trace, ScenarioError> {
    let p: ConsensusParams = params(config.lab, &config.lab_params)?;
    let protocol = ConsensusProtocol::by_name(&p.protocol, config.n_procs).map_err(lab_err)?;
    let initial = protocol
        .initial_on(config.substrate, &p.inputs)
        .map_err(lab_err)?;
    let mode = p.check_mode()?;
    let expect = p.expect.unwrap_or(match protocol.primitive() {
        crate::consensus::Primitive::ReadWrite => Expectation::Violation,
        _ => Expectation::Certified,
    });
    let r = check_consensus_from(&protocol, &initial, &p.inputs, mode);

    report.metric("protocol", protocol.name());
    report.metric("runs", r.runs);
    report.metric("violations", &r.violations);
    report.metric("termination_unknown", r.termination_unknown);
    report.metric("max_own_steps_to_decide", r.max_own_steps_to_decide);

    match expect {
        Expectation::Violation => {
            let detail = match r.first_violation() {
                Some(w) => format!("{:?} after {}", w.kind, w.schedule),
                None => format!("no violation in {} runs", r.runs),
            };
            report
                .verdicts
                .push(Verdict::check("violation-found", !r.certified(), detail));
            report.witness = r.first_violation().map(|w| w.schedule.clone());
        }
        Expectation::Certified => {
            let detail = match r.first_violation() {
                Some(w) => format!("{:?} after {}", w.kind, w.schedule),
                None => format!("0 violations in {} runs", r.runs),
            };
            report
                .verdicts
                .push(Verdict::check("certified", r.certified(), detail));
            report.witness = r.first_violation().map(|w| w.schedule.clone());
            if let Some(bound) = protocol.wait_free_bound() {
                let worst = r.max_own_steps_to_decide.unwrap_or(0);
                report.verdicts.push(Verdict::check(
                    "wait-free",
                    worst <= bound,
                    format!("every decision within {worst} own steps (bound {bound})"),
                ));
            }
        }
    }
    if expect == Expectation::Certified {
        report.verdicts.push(Verdict::check(
            "no-disagreement",
            r.count(ViolationKind::Agreement) == 0,
            format!("{} disagreeing runs", r.count(ViolationKind::Agreement)),
        ));
    }
    if r.termination_unknown > 0 {
        report.verdicts.push(Verdict::unknown(
            "termination",
            format!(
                "{} runs undecided at the exploration bound",
                r.termination_unknown
            ),
        ));
    }

    if let Some(h) = p.hunt {
        let found = bivalency_hunt(&protocol, &initial, h.steps);
        let (ok, detail) = match (&found, h.expect) {
            (Ok(s), HuntExpectation::Sustained) => {
                (true, format!("bivalent for {} steps: {s}", s.len()))
            }
            (Ok(s), HuntExpectation::Exhausted) => (
                false,
                format!("unexpectedly bivalent for {} steps", s.len()),
            ),
            (Err(e @ AdversaryError::BivalencyExhausted(_)), HuntExpectation::Exhausted) => {
                (true, e.to_string())
            }
            (Err(e), _) => (false, e.to_string()),
        };
        report
            .verdicts
            .push(Verdict::check("bivalency-hunt", ok, detail));
        if let Ok(s) = &found {
            report.metric("bivalent_steps", s.len());
        }
    }

    let replay = config
        .schedule
        .clone()
        .or_else(|| report.witness.clone())
        .unwrap_or_else(|| random_schedule(&initial, &protocol, seed, 16));
    let end = apply_schedule(&protocol, &initial, &replay)
        .map_err(|(i, e)| schema(format!("schedule[{i}]"), e.to_string()))?;
    report.metric("replayed_schedule", replay.to_string());
    Ok(end.trace(&config.scenario_id, seed))
}

fn two_generals_lab(
    config: &ScenarioConfig,
    seed: u64,
    report: &mut Report,
) -> Result<Trace, ScenarioError> {
    let p: TwoGeneralsParams = params(config.lab, &config.lab_params)?;
    let end = match p.decide {
        Some(decide) => bilateral_coordination(decide),
        None => {
            let mask = parse_mask(&p.mask).map_err(lab_err)?;
            ack_chain(p.rounds, &mask).map_err(lab_err)?
        }
    };
    let trace = end.trace(&config.scenario_id, seed);
    let syntactic = syntactic_depth(&trace);
    report.metric("syntactic_depth", syntactic);
    match knowledge_depth(&trace, ATTACK_AT_DAWN) {
        Ok(depth) => {
            report.metric("oracle_depth", depth);
            report.verdicts.push(Verdict::check(
                "oracle-matches-syntactic-depth",
                depth == syntactic,
                format!("oracle {depth}, delivered-count {syntactic}"),
            ));
        }
        Err(e @ KnowledgeError::OracleBound { .. }) => {
            report.verdicts.push(Verdict::unknown(
                "oracle-matches-syntactic-depth",
                e.to_string(),
            ));
        }
        Err(e) => return Err(lab_err(e)),
    }
    let expected_ck = p.decide == Some(Outcome::Completed);
    match common_knowledge(&trace, ATTACK_AT_DAWN) {
        Ok(ck) => {
            report.metric("common_knowledge", ck);
            report.verdicts.push(Verdict::check(
                "common-knowledge",
                ck == expected_ck,
                format!("common knowledge {ck}, expected {expected_ck}"),
            ));
        }
        Err(e @ KnowledgeError::OracleBound { .. }) => {
            report.verdicts.push(Verdict::check(
                "common-knowledge",
                !expected_ck && matches!(syntactic, Depth::Finite(_)),
                format!("{e}; finite chain cannot reach common knowledge"),
            ));
        }
        Err(e) => return Err(lab_err(e)),
    }
    if p.decide == Some(Outcome::NotOccurred) {
        report.verdicts.push(Verdict::check(
            "no-intermediate-state",
            trace.is_empty(),
            format!("{} events recorded", trace.len()),
        ));
    }
    Ok(trace)
}

fn cap_lab(
    config: &ScenarioConfig,
    seed: u64,
    report: &mut Report,
) -> Result<Trace, ScenarioError> {
    let p: CapParams = params(config.lab, &config.lab_params)?;
    let workload = p.workload.clone().unwrap_or_else(conflicting_writes);
    let (end, m) = run_cap_config(p.mode, &workload).map_err(lab_err)?;
    let trace = end.trace(&config.scenario_id, seed);
    let intervals = snapshot_consistency(&trace);
    report.metric("mode", p.mode);
    report.metric("divergence_events", m.divergence_events);
    report.metric("refused_requests", m.refused_requests);
    report.metric("not_occurred_txns", m.not_occurred_txns);
    report.metric("final_consistent", m.final_consistent);
    report.metric("final_values", m.final_values);
    report.metric("divergence_intervals", &intervals);

    match p.mode {
        CapMode::FitoAp => report.verdicts.push(Verdict::check(
            "never-refuses",
            m.refused_requests == 0,
            format!("{} refusals", m.refused_requests),
        )),
        CapMode::FitoCp | CapMode::Bilateral => report.verdicts.push(Verdict::check(
            "never-diverges",
            m.divergence_events == 0 && intervals.is_empty(),
            format!("{} divergent ops", m.divergence_events),
        )),
    }
    if p.mode == CapMode::Bilateral {
        report.verdicts.push(Verdict::check(
            "local-ops-complete",
            m.refused_requests == 0,
            format!("{} refusals", m.refused_requests),
        ));
    }
    let e = &p.expect;
    let mut expect = |name: &str, want: Option<String>, got: String| {
        if let Some(want) = want {
            report.verdicts.push(Verdict::check(
                name,
                want == got,
                format!("got {got}, expected {want}"),
            ));
        }
    };
    expect(
        "divergence-events",
        e.divergence_events.map(|v| v.to_string()),
        m.divergence_events.to_string(),
    );
    expect(
        "refused-requests",
        e.refused_requests.map(|v| v.to_string()),
        m.refused_requests.to_string(),
    );
    expect(
        "not-occurred-txns",
        e.not_occurred_txns.map(|v| v.to_string()),
        m.not_occurred_txns.to_string(),
    );
    expect(
        "final-consistent",
        e.final_consistent.map(|v| v.to_string()),
        m.final_consistent.to_string(),
    );
    Ok(trace)
}

/// Records at most this many exchanges in the clocks trace.
const CLOCK_TRACE_TRIALS: usize = 16;

fn clocks_lab(
    config: &ScenarioConfig,
    seed: u64,
    report: &mut Report,
) -> Result<Trace, ScenarioError> {
    let p: ClocksParams = params(config.lab, &config.lab_params)?;
    let channel = ChannelModel::new(p.d0, p.jitter, seed).map_err(lab_err)?;
    let (rows, s) = sweep(&channel, ClockPair { theta: p.theta }, p.trials).map_err(lab_err)?;
    report.metric("summary", &s);

    match config.substrate {
        SubstrateKind::Bilateral => {
            report.verdicts.push(Verdict::check(
                "offset-error-within-jitter",
                s.max_bilateral_error <= p.jitter,
                format!(
                    "max |error| {} with jitter bound {}",
                    s.max_bilateral_error, p.jitter
                ),
            ));
            report.verdicts.push(Verdict::check(
                "rtt-within-2j-of-2d0",
                s.max_rtt_error <= 2.0 * p.jitter,
                format!("max |rtt - 2·d0| {}", s.max_rtt_error),
            ));
        }
        SubstrateKind::Fito => {
            let lo = (p.d0 - p.jitter).max(0.0);
            let ok =
                s.max_fito_error <= p.d0 + p.jitter && (rows.is_empty() || s.min_fito_error >= lo);
            report.verdicts.push(Verdict::check(
                "one-way-error-tracks-delay",
                ok,
                format!(
                    "|error| in [{}, {}], d0 {} ± {}",
                    s.min_fito_error, s.max_fito_error, p.d0, p.jitter
                ),
            ));
        }
    }

    let mut c = Configuration::new(config.substrate, 2, &[]).expect("two processes");
    for (i, r) in rows.iter().take(CLOCK_TRACE_TRIALS).enumerate() {
        c = match config.substrate {
            SubstrateKind::Bilateral => c
                .bilateral_attempt(0, 1, i as Value, i as Value, Outcome::Completed)
                .expect("unpartitioned"),
            SubstrateKind::Fito => {
                let (sent, m) = c.fito_send(0, 1, i as Value).expect("fito");
                sent.fito_deliver(m).expect("in flight")
            }
        };
        let note = match config.substrate {
            SubstrateKind::Bilateral => format!(
                "trial={i} m_ab={} m_ba={} offset={}",
                r.m_ab, r.m_ba, r.bilateral
            ),
            SubstrateKind::Fito => format!("trial={i} m_ab={} offset={}", r.m_ab, r.fito),
        };
        c = c.local_event(1, &note).expect("process exists");
    }
    Ok(c.trace(&config.scenario_id, seed))
}

const DEFAULT_EXCHANGE_STEPS: usize = 12;

fn exchange_lab(
    config: &ScenarioConfig,
    seed: u64,
    report: &mut Report,
) -> Result<Trace, ScenarioError> {
    let p: ExchangeParams = params(config.lab, &config.lab_params)?;
    let initial = Configuration::new(config.substrate, config.n_procs, &config.cells)
        .map_err(lab_err)?
        .initialize();
    let schedule = match &config.schedule {
        Some(s) => s.clone(),
        None => random_schedule(
            &initial,
            &RawExchange,
            seed,
            p.steps.unwrap_or(DEFAULT_EXCHANGE_STEPS),
        ),
    };
    let end = apply_schedule(&RawExchange, &initial, &schedule)
        .map_err(|(i, e)| schema(format!("schedule[{i}]"), e.to_string()))?;
    let trace = run(config, seed, &schedule)?;
    report.witness = Some(schedule);
    report.metric("events", trace.len());

    let hb = |a, b| happened_before(&trace, a, b).expect("ids from trace");
    let ids: Vec<_> = trace.events().iter().map(|e| e.id).collect();
    let pairs = || ids.iter().flat_map(|&a| ids.iter().map(move |&b| (a, b)));
    let ev = |id| trace.get(id).expect("ids from trace");
    let monotone = pairs().all(|(a, b)| !hb(a, b) || ev(a).lamport < ev(b).lamport);
    report.verdicts.push(Verdict::check(
        "lamport-respects-causality",
        monotone,
        "a → b implies L(a) < L(b)",
    ));
    let vc = pairs().all(|(a, b)| hb(a, b) == vclock_lt(&ev(a).vclock, &ev(b).vclock));
    report.verdicts.push(Verdict::check(
        "vclock-characterizes-causality",
        vc,
        "V(a) < V(b) iff a → b",
    ));

    match config.substrate {
        SubstrateKind::Bilateral => {
            let half = end.half_state_violation();
            report.verdicts.push(Verdict::check(
                "no-half-state",
                half.is_none(),
                half.unwrap_or_else(|| {
                    "every transaction advanced both endpoints or neither".into()
                }),
            ));
        }
        SubstrateKind::Fito => {
            if let crate::substrates::SubstrateState::Fito(f) = end.substrate() {
                report.metric("sends", f.sends);
                report.metric("deliveries", f.deliveries);
                report.metric("dropped", f.dropped.len());
                report.metric("in_flight", f.in_flight.len());
                report.verdicts.push(Verdict::check(
                    "messages-conserved",
                    f.conserved(),
                    "sends = deliveries + drops + in flight",
                ));
            }
        }
    }

    if config.lab == LabKind::Ordering {
        let pomset = build_pomset(&trace).map_err(lab_err)?;
        let agree = pairs().all(|(a, b)| pomset.lt(a, b).unwrap() == hb(a, b));
        report.verdicts.push(Verdict::check(
            "pomset-matches-happened-before",
            agree,
            "closure equals causality",
        ));
        let concurrent = pomset.concurrent_pairs();
        let surplus = surplus_pairs(&pomset, &ids).map_err(lab_err)?;
        report.metric("concurrent_pairs", concurrent);
        report.metric("surplus_pairs_of_emission_order", surplus);
        report.metric("reduced_edges", pomset.reduced_edges().len());
        report.verdicts.push(Verdict::check(
            "surplus-equals-concurrency",
            surplus == concurrent,
            format!("a log adds order to {surplus} concurrent pairs"),
        ));
        if pomset.len() <= EXTENSION_BOUND {
            report.metric(
                "linear_extensions",
                linear_extensions(&pomset).map_err(lab_err)?.to_string(),
            );
        } else {
            report.notes.push(format!(
                "linear extensions not counted: {} events exceed the bound {EXTENSION_BOUND}",
                pomset.len()
            ));
        }
        if let Some(ts) = &p.timestamps {
            let r = lww_resolve(&trace, &timestamp_map(ts)).map_err(lab_err)?;
            report.metric("lww_winner", r.winner.to_string());
            report.metric("lww_anomalies", &r.anomalies);
            if let Some(want) = p.expect_anomalies {
                report.verdicts.push(Verdict::check(
                    "lww-anomalies",
                    want == !r.anomalies.is_empty(),
                    format!(
                        "{} anomalies, expected {}",
                        r.anomalies.len(),
                        if want { "at least one" } else { "none" }
                    ),
                ));
            }
        }
    }
    Ok(trace)
}

/// Bundled scenario sources, embedded at build time.
const BUNDLED: &[&str] = &[
    include_str!("../scenarios/2pc-vs-swap-bilateral.json"),
    include_str!("../scenarios/2pc-vs-swap-fito.json"),
    include_str!("../scenarios/cap-partition-bilateral.json"),
    include_str!("../scenarios/cap-partition-fito-ap.json"),
    include_str!("../scenarios/cap-partition-fito-cp.json"),
    include_str!("../scenarios/clock-offset-bilateral.json"),
    include_str!("../scenarios/clock-offset-fito.json"),
    include_str!("../scenarios/consensus-vs-transaction-bilateral.json"),
    include_str!("../scenarios/consensus-vs-transaction-fito.json"),
    include_str!("../scenarios/timeout-retry-bilateral.json"),
    include_str!("../scenarios/timeout-retry-fito.json"),
    include_str!("../scenarios/vector-clocks-vs-emergent-order-bilateral.json"),
    include_str!("../scenarios/vector-clocks-vs-emergent-order-fito.json"),
];

/// Every bundled scenario, sorted by id.
pub fn catalog() -> Vec<ScenarioConfig> {
    let mut all: Vec<ScenarioConfig> = BUNDLED
        .iter()
        .map(|src| parse_scenario(src).expect("bundled scenarios are valid"))
        .collect();
    all.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    all
}

pub fn find_in_catalog(id: &str) -> Option<ScenarioConfig> {
    catalog().into_iter().find(|s| s.scenario_id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(lab: &str, extra: &str) -> String {
        format!(r#"{{"scenario_id":"t","substrate":"fito","n_procs":2,"lab":"{lab}"{extra}}}"#)
    }

    #[test]
    fn minimal_fito_scenario() {
        let c = parse_scenario(&minimal("raw", "")).unwrap();
        assert_eq!(c.seed(), 0);
        let (_, r) = dispatch(&c).unwrap();
        assert!(r.notes.iter().any(|n| n.contains("defaulted to 0")));
    }

    #[test]
    fn unknown_fields_and_labs_are_rejected() {
        assert!(matches!(
            parse_scenario(&minimal("raw", r#","colour":1"#)),
            Err(ScenarioError::Parse(_))
        ));
        assert!(matches!(
            parse_scenario(&minimal("paxos", "")),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn txn_decide_on_fito_names_the_action() {
        let text = minimal(
            "raw",
            r#","schedule":[{"action":"proc_step","process":0},{"action":"txn_decide","txn_id":0,"outcome":"completed"}]"#,
        );
        match parse_scenario(&text) {
            Err(ScenarioError::Schema { field, reason }) => {
                assert_eq!(field, "schedule[1]");
                assert!(reason.contains("txn_decide"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_schedule_runs_only_initialization() {
        let c = parse_scenario(&minimal("raw", "")).unwrap();
        let t = run(&c, 0, &Schedule::default()).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.events().iter().all(|e| e.payload == "init"));
    }

    #[test]
    fn two_message_scenario() {
        let c = parse_scenario(&minimal("raw", "")).unwrap();
        let s: Schedule = serde_json::from_str(
            r#"[{"action":"proc_step","process":0},{"action":"proc_step","process":1},
                {"action":"deliver_msg","msg_id":0},{"action":"drop_msg","msg_id":1}]"#,
        )
        .unwrap();
        let t = run(&c, 3, &s).unwrap();
        let count = |k| t.events().iter().filter(|e| e.kind == k).count();
        assert_eq!(count(crate::kernel::EventKind::Send), 2);
        assert_eq!(count(crate::kernel::EventKind::Receive), 1);
        assert_eq!(t.to_jsonl(), run(&c, 3, &s).unwrap().to_jsonl());
        let bad = Schedule::new(vec![SchedulerAction::DeliverMsg { msg_id: 9 }]);
        assert!(matches!(
            run(&c, 0, &bad),
            Err(ScenarioError::Schema { .. })
        ));
    }

    #[test]
    fn bilateral_protocol_needs_bilateral_substrate() {
        let text = minimal(
            "consensus",
            r#","lab_params":{"protocol":"bilateral","inputs":[0,1]}"#,
        );
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::Schema { .. })
        ));
    }

    #[test]
    fn catalog_is_sorted_and_covers_both_substrates() {
        let ids: Vec<_> = catalog().into_iter().map(|s| s.scenario_id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert!(ids.len() >= 8);
        for row in [
            "timeout-retry",
            "2pc-vs-swap",
            "consensus-vs-transaction",
            "vector-clocks-vs-emergent-order",
        ] {
            for side in ["fito", "bilateral"] {
                assert!(ids.contains(&format!("{row}-{side}")), "{row}-{side}");
            }
        }
    }
}
