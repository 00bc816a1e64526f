//! Scenario runner, workspace inspection and ledger replay.
//!
//! Scenario files hold one command per line; blank lines and `#` comments
//! are ignored:
//!
//! ```text
//! create-network OWNER_BALANCE
//! add-node NAME BALANCE
//! register-node NAME
//! gen-data NAME DSID SEED SLOPE INTERCEPT NOISE ROWS
//! train NAME MODELID DSID TASK
//! fine-tune NAME MODELID BASEREF DSID STEPS LR
//! share NAME RESID
//! set-price NAME RESID PRICE
//! query NAME TASK SENSORS...
//! acquire NAME ADDR PRICE
//! trace ADDR
//! ```
//!
//! A word starting with `#` begins a comment unless it is a `#N` reference.
//! `ADDR` is a 64-hex content address, `NODE:RESID` (the address of a
//! node's resource) or `#N` (the N-th hit of the latest query, from 1).
//! `RESID` names a node's model or, failing that, its dataset.
//!
//! A workspace holds `ledger.log`, `state.txt`, `network.txt` and one
//! directory per node under `nodes/`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::cas::ContentAddress;
use crate::kgstore::{Iri, Resource, SpaceProfile};
use crate::ledger::{Address, Ledger, LedgerError, DEFAULT_GENESIS_SUPPLY, LEDGER_CONTRACT};
use crate::mlsim::{format_number, make_synthetic_room, RoomProfile};
use crate::node::{self, check_id, IslNode, Network, NodeError, RankedModel};

pub const LEDGER_LOG: &str = "ledger.log";
pub const STATE_FILE: &str = "state.txt";
pub const NETWORK_FILE: &str = "network.txt";
pub const NODES_DIR: &str = "nodes";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("UsageError: {0}")]
    Usage(String),
    #[error("ParseError: line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Command { line: usize, source: NodeError },
    #[error(transparent)]
    Workflow(#[from] NodeError),
    #[error("UnknownWorkspace: {0}")]
    UnknownWorkspace(PathBuf),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::UnknownWorkspace(_) => 2,
            _ => 1,
        }
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        CliError::Workflow(e.into())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    CreateNetwork { owner_balance: u64 },
    AddNode { name: String, balance: u64 },
    RegisterNode { name: String },
    GenData { name: String, dataset: String, seed: u64, profile: RoomProfile, rows: usize },
    Train { name: String, model: String, dataset: String, task: String },
    FineTune { name: String, model: String, base: String, dataset: String, steps: usize, lr: f64 },
    Share { name: String, resource: String },
    SetPrice { name: String, resource: String, price: u64 },
    Query { name: String, task: String, sensors: Vec<String> },
    Acquire { name: String, addr: String, price: u64 },
    Trace { addr: String },
}

fn parse_line(words: &[&str]) -> Result<Command, String> {
    fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
        s.parse().map_err(|_| format!("bad {what} {s:?}"))
    }
    fn real(s: &str, what: &str) -> Result<f64, String> {
        let v: f64 = num(s, what)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("bad {what} {s:?}"))
        }
    }
    let (cmd, args) = words.split_first().expect("non-empty line");
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("{cmd} takes {n} arguments, got {}", args.len()))
        }
    };
    let s = |i: usize| args[i].to_owned();
    Ok(match *cmd {
        "create-network" => {
            want(1)?;
            Command::CreateNetwork { owner_balance: num(args[0], "balance")? }
        }
        "add-node" => {
            want(2)?;
            Command::AddNode { name: s(0), balance: num(args[1], "balance")? }
        }
        "register-node" => {
            want(1)?;
            Command::RegisterNode { name: s(0) }
        }
        "gen-data" => {
            want(7)?;
            Command::GenData {
                name: s(0),
                dataset: s(1),
                seed: num(args[2], "seed")?,
                profile: RoomProfile {
                    slope: real(args[3], "slope")?,
                    intercept: real(args[4], "intercept")?,
                    noise_scale: real(args[5], "noise")?,
                },
                rows: num(args[6], "row count")?,
            }
        }
        "train" => {
            want(4)?;
            Command::Train { name: s(0), model: s(1), dataset: s(2), task: s(3) }
        }
        "fine-tune" => {
            want(6)?;
            Command::FineTune {
                name: s(0),
                model: s(1),
                base: s(2),
                dataset: s(3),
                steps: num(args[4], "step count")?,
                lr: real(args[5], "learning rate")?,
            }
        }
        "share" => {
            want(2)?;
            Command::Share { name: s(0), resource: s(1) }
        }
        "set-price" => {
            want(3)?;
            Command::SetPrice { name: s(0), resource: s(1), price: num(args[2], "price")? }
        }
        "query" => {
            if args.len() < 2 {
                return Err(format!("query takes NAME TASK SENSORS..., got {} arguments", args.len()));
            }
            Command::Query {
                name: s(0),
                task: s(1),
                sensors: args[2..].iter().map(|w| w.to_string()).collect(),
            }
        }
        "acquire" => {
            want(3)?;
            Command::Acquire { name: s(0), addr: s(1), price: num(args[2], "price")? }
        }
        "trace" => {
            want(1)?;
            Command::Trace { addr: s(0) }
        }
        other => return Err(format!("unknown command {other:?}")),
    })
}

/// A word opens a comment if it starts with `#` and is not a `#N` reference.
fn is_comment_start(word: &str) -> bool {
    word.strip_prefix('#')
        .is_some_and(|rest| rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Parses a whole scenario into `(line number, command)` pairs.
pub fn parse_scenario(text: &str) -> Result<Vec<(usize, Command)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let words: Vec<&str> = raw
            .split_whitespace()
            .take_while(|w| !is_comment_start(w))
            .collect();
        if words.is_empty() {
            continue;
        }
        let cmd = parse_line(&words).map_err(|reason| CliError::Parse { line: i + 1, reason })?;
        out.push((i + 1, cmd));
    }
    Ok(out)
}

/// Executes scenario commands against a network, optionally persisted to a
/// workspace directory.
pub struct Runner {
    net: Network,
    workspace: Option<PathBuf>,
    last_query: Vec<RankedModel>,
    output: String,
}

impl Runner {
    pub fn in_memory() -> Self {
        Self {
            net: Network::new(Ledger::new(DEFAULT_GENESIS_SUPPLY)),
            workspace: None,
            last_query: Vec::new(),
            output: String::new(),
        }
    }

    /// Starts a fresh workspace; `dir` must be absent or empty.
    pub fn create_workspace(dir: &Path) -> Result<Self, CliError> {
        if dir.exists() && fs::read_dir(dir)?.next().is_some() {
            return Err(CliError::Usage(format!("workspace {} is not empty", dir.display())));
        }
        fs::create_dir_all(dir.join(NODES_DIR))?;
        let mut runner = Self::in_memory();
        runner.net.ledger_mut().attach_log_file(&dir.join(LEDGER_LOG))?;
        runner.workspace = Some(dir.to_owned());
        runner.persist()?;
        Ok(runner)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn output(&self) -> &str {
        &self.output
    }

    pub fn last_query(&self) -> &[RankedModel] {
        &self.last_query
    }

    /// Parses and runs `text`, stopping at the first failing command.
    pub fn run_text(&mut self, text: &str) -> Result<(), CliError> {
        for (line, cmd) in parse_scenario(text)? {
            let result = self.execute(&cmd);
            self.persist()?;
            result.map_err(|source| CliError::Command { line, source })?;
        }
        Ok(())
    }

    fn persist(&self) -> Result<(), CliError> {
        let Some(ws) = &self.workspace else {
            return Ok(());
        };
        fs::write(ws.join(STATE_FILE), self.net.ledger().state().dump())?;
        let owner = self.net.owner().map_or("-".to_owned(), Address::to_string);
        fs::write(ws.join(NETWORK_FILE), format!("owner {owner}\n"))?;
        for n in self.net.nodes() {
            n.save()?;
        }
        Ok(())
    }

    fn emit(&mut self, line: String) {
        self.output.push_str(&line);
        self.output.push('\n');
    }

    pub fn execute(&mut self, cmd: &Command) -> Result<(), NodeError> {
        match cmd {
            Command::CreateNetwork { owner_balance } => {
                let owner = self.net.bootstrap(*owner_balance)?;
                self.emit(format!("network owner={owner}"));
            }
            Command::AddNode { name, balance } => {
                check_id(name)?;
                if self.net.node(name).is_ok() {
                    return Err(NodeError::DuplicateNode(name.clone()));
                }
                let account = self.net.open_account(*balance)?;
                let node = match &self.workspace {
                    Some(ws) => IslNode::create_at(&ws.join(NODES_DIR).join(name), account.clone())?,
                    None => IslNode::in_memory(name, account.clone())?,
                };
                self.net.insert_node(node)?;
                self.emit(format!("node {name} account={account} balance={balance}"));
            }
            Command::RegisterNode { name } => {
                let r = self.net.register_node(name)?;
                self.emit(format!("registered {name} {}", r.tx_id));
            }
            Command::GenData { name, dataset, seed, profile, rows } => {
                let data = make_synthetic_room(*seed, *profile, *rows)?;
                let d = self.net.node_mut(name)?.add_dataset(dataset, &data)?;
                self.emit(format!("dataset {} rows={rows}", d.id));
            }
            Command::Train { name, model, dataset, task } => {
                let task = node::task_iri(task)?;
                let n = self.net.node_mut(name)?;
                let d = n.dataset_iri(dataset)?;
                let m = n.train_local(model, &d, &task)?;
                self.emit(format!("model {} {}", m.id, metrics(&m)));
            }
            Command::FineTune { name, model, base, dataset, steps, lr } => {
                let base = self.resolve_base(name, base)?;
                let n = self.net.node_mut(name)?;
                let d = n.dataset_iri(dataset)?;
                let m = n.fine_tune_remote(model, &base, &d, *steps, *lr)?;
                self.emit(format!("model {} base={base} {}", m.id, metrics(&m)));
            }
            Command::Share { name, resource } => {
                let shared = match self.local_resource(name, resource)? {
                    Resource::Model(m) => self.net.share_model(name, &m.id)?,
                    Resource::Dataset(d) => vec![self.net.share_dataset(name, &d.id)?],
                };
                for s in shared {
                    self.emit(format!("shared {} {} {}", s.iri, s.addr, s.tx_id));
                }
            }
            Command::SetPrice { name, resource, price } => {
                let addr = match self.resolve_addr(resource) {
                    Ok(a) => a,
                    Err(_) => {
                        let r = self.local_resource(name, resource)?;
                        self.net.node(name)?.address_of(&r)?
                    }
                };
                let r = self.net.set_price(name, &addr, *price)?;
                self.emit(format!("price {addr} {price} {}", r.tx_id));
            }
            Command::Query { name, task, sensors } => {
                let task = node::task_iri(task)?;
                let sensors: Vec<&str> = sensors.iter().map(String::as_str).collect();
                let space = SpaceProfile::new(Iri::entity(name, "space", "query")?, name, &sensors)?;
                let hits = self.net.query_models(name, &task, &space)?;
                self.emit(format!("query {task} hits={}", hits.len()));
                for (i, h) in hits.iter().enumerate() {
                    self.emit(format!(
                        "#{} {} {} owner={} mse={} mae={} price={} features={}",
                        i + 1,
                        h.addr,
                        h.model_iri,
                        h.owner_node,
                        format_number(h.mse),
                        format_number(h.mae),
                        h.price,
                        h.input_features.join(",")
                    ));
                }
                self.last_query = hits;
            }
            Command::Acquire { name, addr, price } => {
                let addr = self.resolve_addr(addr)?;
                let got = self.net.acquire_model(name, &addr, *price)?;
                self.emit(format!(
                    "acquired {} {} token={} {} price={}",
                    got.addr, got.model_iri, got.token, got.tx_id, got.price
                ));
            }
            Command::Trace { addr } => {
                let addr = self.resolve_addr(addr)?;
                let steps = self.net.provenance(&addr)?;
                self.emit(format!("trace {addr} steps={}", steps.len()));
                for line in provenance_lines(&steps) {
                    self.emit(line);
                }
            }
        }
        Ok(())
    }

    fn local_resource(&self, name: &str, id: &str) -> Result<Resource, NodeError> {
        let n = self.net.node(name)?;
        let m = n.model_iri(id)?;
        if let Some(r) = n.graph().resource(&m) {
            return Ok(r);
        }
        let d = n.dataset_iri(id)?;
        n.graph()
            .resource(&d)
            .ok_or_else(|| crate::kgstore::KgError::NotFound(d).into())
    }

    fn resolve_addr(&self, reference: &str) -> Result<ContentAddress, NodeError> {
        if let Some(n) = reference.strip_prefix('#') {
            let i: usize = n
                .parse()
                .map_err(|_| NodeError::InvalidId(reference.to_owned()))?;
            return self
                .last_query
                .get(i.wrapping_sub(1))
                .map(|h| h.addr.clone())
                .ok_or_else(|| NodeError::InvalidId(format!("{reference}: latest query has {} hits", self.last_query.len())));
        }
        if let Some((node, id)) = reference.split_once(':') {
            let r = self.local_resource(node, id)?;
            return self.net.node(node)?.address_of(&r);
        }
        Ok(ContentAddress::parse(reference)?)
    }

    fn resolve_base(&self, name: &str, reference: &str) -> Result<Iri, NodeError> {
        let n = self.net.node(name)?;
        if let Some((owner, id)) = reference.split_once(':') {
            let iri = Iri::entity(owner, "model", id)?;
            return match n.graph().model(&iri) {
                Some(_) => Ok(iri),
                None => Err(crate::kgstore::KgError::NotFound(iri).into()),
            };
        }
        if reference.starts_with('#') || ContentAddress::parse(reference).is_ok() {
            let addr = self.resolve_addr(reference)?;
            return match n.graph().find_by_address(&addr) {
                Some(Resource::Model(m)) => Ok(m.id),
                _ => Err(crate::contracts::ContractError::UnknownResource(format!("{addr} is not a model known to {name}")).into()),
            };
        }
        n.model_iri(reference)
    }
}

fn metrics(m: &crate::kgstore::ModelRecord) -> String {
    format!(
        "mse={} mae={}",
        m.mse().map_or("-".into(), format_number),
        m.mae().map_or("-".into(), format_number)
    )
}

fn provenance_lines(steps: &[node::ProvenanceStep]) -> Vec<String> {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "{} model={} addr={} tx={} owner={} dataset={} addr={} tx={} owner={}",
                i + 1,
                s.model_iri,
                s.model_addr,
                s.model_tx,
                s.model_owner,
                s.dataset_iri,
                s.dataset_addr,
                s.dataset_tx,
                s.dataset_owner
            )
        })
        .collect()
}

/// Output of a scenario run, complete up to the failing command if any.
#[derive(Debug)]
pub struct RunOutcome {
    pub output: String,
    pub error: Option<CliError>,
}

/// Runs a scenario file into a fresh workspace.
pub fn run(file: &Path, workspace: &Path) -> RunOutcome {
    let text = match fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => {
            return RunOutcome {
                output: String::new(),
                error: Some(CliError::Usage(format!("cannot read {}: {e}", file.display()))),
            }
        }
    };
    if let Err(e) = parse_scenario(&text) {
        return RunOutcome { output: String::new(), error: Some(e) };
    }
    let mut runner = match Runner::create_workspace(workspace) {
        Ok(r) => r,
        Err(e) => return RunOutcome { output: String::new(), error: Some(e) },
    };
    let error = runner.run_text(&text).err();
    RunOutcome {
        output: runner.output,
        error,
    }
}

/// Runs a scenario entirely in memory.
pub fn run_in_memory(text: &str) -> (Runner, Result<(), CliError>) {
    let mut runner = Runner::in_memory();
    let result = runner.run_text(text);
    (runner, result)
}

fn require_workspace(dir: &Path) -> Result<(), CliError> {
    if dir.join(LEDGER_LOG).is_file() {
        Ok(())
    } else {
        Err(CliError::UnknownWorkspace(dir.to_owned()))
    }
}

/// Rebuilds the network of a workspace by replaying its log and loading
/// every node directory.
pub fn load_workspace(dir: &Path) -> Result<Network, CliError> {
    require_workspace(dir)?;
    let (supply, txs) = Ledger::decode_log(&fs::read_to_string(dir.join(LEDGER_LOG))?)?;
    let ledger = Ledger::replay(supply, &txs)?;
    let owner = fs::read_to_string(dir.join(NETWORK_FILE))
        .ok()
        .and_then(|t| {
            t.lines()
                .find_map(|l| l.strip_prefix("owner "))
                .and_then(|a| Address::parse(a.trim()))
        });
    let mut nodes = Vec::new();
    let nodes_dir = dir.join(NODES_DIR);
    if nodes_dir.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&nodes_dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.sort();
        for path in entries.into_iter().filter(|p| p.is_dir()) {
            nodes.push(IslNode::open(&path)?);
        }
    }
    Ok(Network::from_parts(ledger, owner, nodes))
}

fn seq_of(tx: &str) -> u64 {
    tx.strip_prefix("tx-").and_then(|s| s.parse().ok()).unwrap_or(u64::MAX)
}

/// Registries in share order, then the task index.
pub fn registry_report(net: &Network) -> String {
    let world = net.ledger().world();
    let label = |a: &Address| net.node_name_of(a).map_or_else(|| a.to_string(), str::to_owned);
    let mut entries: Vec<(u64, String)> = Vec::new();
    for (addr, d) in &world.oracle.shared_datasets {
        entries.push((
            seq_of(&d.tx_id),
            format!(
                "dataset {addr} {} owner={} iri={} price={}",
                d.tx_id,
                label(&d.owner_node),
                d.dataset_iri,
                world.isl.price(addr)
            ),
        ));
    }
    for (addr, m) in &world.oracle.shared_models {
        entries.push((
            seq_of(&m.tx_id),
            format!(
                "model {addr} {} owner={} iri={} task={} dataset={} base={} price={}",
                m.tx_id,
                label(&m.owner_node),
                m.model_iri,
                m.task,
                m.dataset_addr,
                m.base_model_addr.as_ref().map_or("-", ContentAddress::as_str),
                world.isl.price(addr)
            ),
        ));
    }
    entries.sort();
    let mut out = String::new();
    for (_, line) in entries {
        out.push_str(&line);
        out.push('\n');
    }
    for (task, addrs) in &world.oracle.task_index {
        let list: Vec<&str> = addrs.iter().map(ContentAddress::as_str).collect();
        let _ = writeln!(out, "task {task} {}", list.join(","));
    }
    out
}

/// Balances with their change relative to each account's initial
/// allocation.
pub fn balances_report(net: &Network) -> String {
    let ledger = net.ledger();
    let mut initial = std::collections::BTreeMap::new();
    for (tx, r) in ledger.log().iter().zip(ledger.receipts()) {
        if tx.contract == LEDGER_CONTRACT && tx.method == "create_account" && r.is_ok() {
            if let Some(a) = Address::parse(&r.return_value) {
                initial.insert(a, tx.value);
            }
        }
    }
    let label = |a: &Address| {
        if *a == Address::treasury() {
            "treasury".to_owned()
        } else if Some(a) == net.owner() {
            "owner".to_owned()
        } else {
            net.node_name_of(a).map_or_else(|| "account".to_owned(), str::to_owned)
        }
    };
    let mut out = String::new();
    for (addr, bal) in &ledger.state().accounts {
        let delta = initial.get(addr).map_or(String::new(), |&init| {
            let d = *bal as i128 - init as i128;
            format!(" delta={}{d}", if d > 0 { "+" } else { "" })
        });
        let _ = writeln!(out, "{} {addr} {bal}{delta}", label(addr));
    }
    let _ = writeln!(out, "contracts {}", ledger.state().contract_balance);
    let _ = writeln!(out, "total {}", ledger.state().total_supply());
    out
}

/// Deterministic report on a workspace.
pub fn inspect(dir: &Path, what: &[String]) -> Result<String, CliError> {
    let usage = || CliError::Usage("inspect <dir> registry|balances|provenance <addr>|graph <node>".into());
    let kind = what.first().ok_or_else(usage)?;
    let net = load_workspace(dir)?;
    match (kind.as_str(), what.len()) {
        ("registry", 1) => Ok(registry_report(&net)),
        ("balances", 1) => Ok(balances_report(&net)),
        ("provenance", 2) => {
            let addr = ContentAddress::parse(&what[1]).map_err(NodeError::from)?;
            let steps = net.provenance(&addr)?;
            Ok(provenance_lines(&steps).into_iter().map(|l| l + "\n").collect())
        }
        ("graph", 2) => Ok(String::from_utf8(net.node(&what[1])?.graph().export()).expect("export is UTF-8")),
        _ => Err(usage()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Match,
    Mismatch,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Match => "MATCH",
            Verdict::Mismatch => "MISMATCH",
        })
    }
}

/// Replays the workspace log and compares the result with `state.txt`.
pub fn replay(dir: &Path) -> Result<Verdict, CliError> {
    require_workspace(dir)?;
    let (supply, txs) = Ledger::decode_log(&fs::read_to_string(dir.join(LEDGER_LOG))?)?;
    let ledger = Ledger::replay(supply, &txs)?;
    let stored = fs::read_to_string(dir.join(STATE_FILE))?;
    Ok(if stored == ledger.state().dump() {
        Verdict::Match
    } else {
        Verdict::Mismatch
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_NODE: &str = "\
# two rooms
create-network 100
add-node a 1000
add-node b 1000
register-node a
register-node b
gen-data a d 1 2 1 0.05 50
train a m d occupancy_detection
share a m
set-price a a:m 10
query b occupancy_detection co2 temperature
acquire b #1 10
trace #1
";

    #[test]
    fn parses_commands_and_comments() {
        let cmds = parse_scenario("  # only a comment\n\nshare a m #trailing words\n").unwrap();
        assert_eq!(cmds, vec![(3, Command::Share { name: "a".into(), resource: "m".into() })]);
        let err = parse_scenario("share a\n").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 1, .. }));
        assert_eq!(err.exit_code(), 2);
        assert!(parse_scenario("fly away\n").is_err());
        assert!(parse_scenario("gen-data a d 1 2 1 NaN 5\n").is_err());
    }

    #[test]
    fn two_node_flow_in_memory() {
        let (runner, result) = run_in_memory(TWO_NODE);
        result.unwrap();
        let out = runner.output();
        assert!(out.contains("query isl://schema/task/occupancy_detection hits=1"));
        assert!(out.contains("price=10"));
        assert!(out.contains("trace "));
        let net = runner.network();
        let a = net.node("a").unwrap().account().clone();
        assert_eq!(net.ledger().balance(&a), Some(1_010));
        let report = balances_report(net);
        assert!(report.contains(" delta=+10\n"), "{report}");
        assert!(report.contains(" delta=-10\n"), "{report}");
        let registry = registry_report(net);
        assert_eq!(registry.lines().filter(|l| l.starts_with("dataset ") || l.starts_with("model ")).count(), 2);
    }

    #[test]
    fn untrusted_share_fails() {
        let (runner, result) = run_in_memory("create-network 1\nadd-node x 5\ngen-data x d 1 2 1 0 5\nshare x d\n");
        let err = result.unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("Unauthorized"), "{err}");
        assert_eq!(runner.network().ledger().receipts().last().unwrap().revert_reason().unwrap().split(':').next(), Some("Unauthorized"));
    }

    #[test]
    fn workspace_run_inspect_replay() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = dir.path().join("s.isl");
        fs::write(&scenario, TWO_NODE).unwrap();
        let ws = dir.path().join("ws");
        let outcome = run(&scenario, &ws);
        assert!(outcome.error.is_none(), "{:?}", outcome.error);
        assert_eq!(replay(&ws).unwrap(), Verdict::Match);

        let registry = inspect(&ws, &["registry".into()]).unwrap();
        assert!(registry.contains(" tx-"));
        let model_addr = registry
            .lines()
            .find(|l| l.starts_with("model "))
            .and_then(|l| l.split(' ').nth(1))
            .unwrap()
            .to_owned();
        let prov = inspect(&ws, &["provenance".into(), model_addr]).unwrap();
        assert_eq!(prov.lines().count(), 1);
        let graph = inspect(&ws, &["graph".into(), "b".into()]).unwrap();
        assert!(graph.contains("isl://a/model/m"));
        assert!(matches!(inspect(&ws, &["nope".into()]), Err(CliError::Usage(_))));
        assert!(matches!(
            inspect(&dir.path().join("missing"), &["registry".into()]),
            Err(CliError::UnknownWorkspace(_))
        ));

        // A second run into the same workspace is refused.
        assert!(matches!(run(&scenario, &ws).error, Some(CliError::Usage(_))));

        let log = fs::read_to_string(ws.join(LEDGER_LOG)).unwrap();
        let edited = log.replacen(" value=10\n", " value=11\n", 1);
        assert_ne!(edited, log);
        fs::write(ws.join(LEDGER_LOG), edited).unwrap();
        assert!(matches!(replay(&ws), Ok(Verdict::Mismatch) | Err(CliError::Workflow(NodeError::Ledger(LedgerError::CorruptLog(_))))));
    }

    #[test]
    fn empty_scenario_is_genesis() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = dir.path().join("empty.isl");
        fs::write(&scenario, "# nothing\n").unwrap();
        let ws = dir.path().join("ws");
        assert!(run(&scenario, &ws).error.is_none());
        assert_eq!(replay(&ws).unwrap(), Verdict::Match);
        let net = load_workspace(&ws).unwrap();
        assert_eq!(net.ledger().state(), Ledger::new(DEFAULT_GENESIS_SUPPLY).state());
    }
}
