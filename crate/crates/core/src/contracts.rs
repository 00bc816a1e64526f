//! The oracle and exchange contracts.
//!
//! Both are plain state machines over [`WorldState`]; the ledger calls
//! [`execute`] on a scratch copy and commits only on success.
//!
//! Wire contract (method names and argument order):
//!
//! | contract | method          | args                                              | payable |
//! |----------|-----------------|---------------------------------------------------|---------|
//! | oracle   | `init`          |                                                   | no      |
//! | oracle   | `register_node` | node address                                      | no      |
//! | oracle   | `share_dataset` | dataset IRI, content address                      | no      |
//! | oracle   | `share_model`   | model IRI, address, task IRI, dataset address, base address or `-` | no |
//! | isl      | `set_price`     | content address, price                            | no      |
//! | isl      | `acquire`       | content address                                   | yes     |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::cas::ContentAddress;
use crate::kgstore::Iri;
use crate::ledger::{tx_id, Address};

pub const ORACLE: &str = "oracle";
pub const ISL: &str = "isl";

/// Argument standing for an absent base model.
pub const NO_BASE: &str = "-";

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ContractError {
    #[error("Unauthorized: {0}")]
    Unauthorized(String),
    #[error("AlreadyRegistered: {0}")]
    AlreadyRegistered(String),
    #[error("AlreadyShared: {0}")]
    AlreadyShared(String),
    #[error("IncompleteChain: {0}")]
    IncompleteChain(String),
    #[error("UnknownResource: {0}")]
    UnknownResource(String),
    #[error("WrongPayment: expected {expected}, got {got}")]
    WrongPayment { expected: u64, got: u64 },
    #[error("NonPayable: method does not accept value")]
    NonPayable,
    #[error("NotInitialized: oracle has no owner yet")]
    NotInitialized,
    #[error("AlreadyInitialized: oracle owner already set")]
    AlreadyInitialized,
    #[error("BadArguments: {0}")]
    BadArguments(String),
    #[error("UnknownMethod: {0}")]
    UnknownMethod(String),
}

impl ContractError {
    /// Bare error name, e.g. `Unauthorized`.
    pub fn name(&self) -> &'static str {
        match self {
            ContractError::Unauthorized(_) => "Unauthorized",
            ContractError::AlreadyRegistered(_) => "AlreadyRegistered",
            ContractError::AlreadyShared(_) => "AlreadyShared",
            ContractError::IncompleteChain(_) => "IncompleteChain",
            ContractError::UnknownResource(_) => "UnknownResource",
            ContractError::WrongPayment { .. } => "WrongPayment",
            ContractError::NonPayable => "NonPayable",
            ContractError::NotInitialized => "NotInitialized",
            ContractError::AlreadyInitialized => "AlreadyInitialized",
            ContractError::BadArguments(_) => "BadArguments",
            ContractError::UnknownMethod(_) => "UnknownMethod",
        }
    }
}

/// Caller-visible facts about the transaction being executed.
#[derive(Clone, Debug)]
pub struct CallContext {
    pub sender: Address,
    pub value: u64,
    pub seq: u64,
}

/// Where the transaction value goes on success.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payee {
    Account(Address),
    Contract,
    /// Method is not payable; any non-zero value reverts.
    None,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub return_value: String,
    pub payee: Payee,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedDataset {
    pub owner_node: Address,
    pub dataset_iri: String,
    pub tx_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedModel {
    pub owner_node: Address,
    pub model_iri: String,
    pub tx_id: String,
    pub task: String,
    pub dataset_addr: ContentAddress,
    pub base_model_addr: Option<ContentAddress>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OracleState {
    pub owner: Option<Address>,
    pub trusted_nodes: BTreeSet<Address>,
    pub shared_datasets: BTreeMap<ContentAddress, SharedDataset>,
    pub shared_models: BTreeMap<ContentAddress, SharedModel>,
    /// Task IRI -> model addresses in share order.
    pub task_index: BTreeMap<String, Vec<ContentAddress>>,
}

/// One root-first step of an on-chain dependency walk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegistryStep {
    pub model_addr: ContentAddress,
    pub model: SharedModel,
    pub dataset: SharedDataset,
}

impl OracleState {
    pub fn is_trusted(&self, addr: &Address) -> bool {
        self.trusted_nodes.contains(addr)
    }

    pub fn is_registered(&self, addr: &ContentAddress) -> bool {
        self.shared_datasets.contains_key(addr) || self.shared_models.contains_key(addr)
    }

    /// Owner node of a shared dataset or model.
    pub fn owner_of(&self, addr: &ContentAddress) -> Option<&Address> {
        self.shared_datasets
            .get(addr)
            .map(|d| &d.owner_node)
            .or_else(|| self.shared_models.get(addr).map(|m| &m.owner_node))
    }

    /// Share transaction id of a shared dataset or model.
    pub fn share_tx(&self, addr: &ContentAddress) -> Option<&str> {
        self.shared_datasets
            .get(addr)
            .map(|d| d.tx_id.as_str())
            .or_else(|| self.shared_models.get(addr).map(|m| m.tx_id.as_str()))
    }

    /// Model addresses registered for `task`, in share order.
    pub fn query_task(&self, task: &str) -> Vec<ContentAddress> {
        self.task_index.get(task).cloned().unwrap_or_default()
    }

    /// Walks base-model links from `model_addr` to the chain root. Returns
    /// `None` if `model_addr` is not a shared model.
    pub fn trace(&self, model_addr: &ContentAddress) -> Option<Vec<RegistryStep>> {
        let mut steps = Vec::new();
        let mut current = Some(model_addr.clone());
        while let Some(addr) = current {
            let model = self.shared_models.get(&addr)?.clone();
            let dataset = self.shared_datasets.get(&model.dataset_addr)?.clone();
            current = model.base_model_addr.clone();
            steps.push(RegistryStep {
                model_addr: addr,
                model,
                dataset,
            });
            if steps.len() > self.shared_models.len() {
                return None;
            }
        }
        steps.reverse();
        Some(steps)
    }

    /// Checks role exclusivity, chain closure and task-index consistency.
    pub fn check_invariants(&self) -> Result<(), String> {
        for addr in self.shared_datasets.keys() {
            if self.shared_models.contains_key(addr) {
                return Err(format!("{addr} registered as both dataset and model"));
            }
        }
        for (addr, m) in &self.shared_models {
            if !self.shared_datasets.contains_key(&m.dataset_addr) {
                return Err(format!("model {addr} dataset {} not shared", m.dataset_addr));
            }
            if let Some(base) = &m.base_model_addr {
                if !self.shared_models.contains_key(base) {
                    return Err(format!("model {addr} base {base} not shared"));
                }
            }
            if self.trace(addr).is_none() {
                return Err(format!("model {addr} chain does not reach a root"));
            }
            let listed = self.task_index.get(&m.task).map_or(0, |v| v.iter().filter(|a| *a == addr).count());
            if listed != 1 {
                return Err(format!("model {addr} listed {listed} times under {}", m.task));
            }
        }
        for (task, addrs) in &self.task_index {
            for a in addrs {
                match self.shared_models.get(a) {
                    Some(m) if &m.task == task => {}
                    _ => return Err(format!("task index {task} lists {a} wrongly")),
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Acquisition {
    pub buyer: Address,
    pub resource: ContentAddress,
    pub granted_at_seq: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IslState {
    pub prices: BTreeMap<ContentAddress, u64>,
    pub acquisitions: BTreeMap<String, Acquisition>,
    pub tokens: BTreeMap<String, bool>,
}

impl IslState {
    /// Posted price, 0 when unset.
    pub fn price(&self, addr: &ContentAddress) -> u64 {
        self.prices.get(addr).copied().unwrap_or(0)
    }

    /// True iff `token` was minted for `caller` acquiring `addr`.
    pub fn validate_token(&self, token: &str, addr: &ContentAddress, caller: &Address) -> bool {
        self.tokens.get(token).copied().unwrap_or(false)
            && self
                .acquisitions
                .get(token)
                .is_some_and(|a| &a.buyer == caller && &a.resource == addr)
    }
}

/// Access token for the acquisition at `seq`: hex SHA-256 of
/// `"<seq>|<resource>|<buyer>"`.
pub fn access_token(seq: u64, resource: &ContentAddress, buyer: &Address) -> String {
    hex::encode(Sha256::digest(format!("{seq}|{resource}|{buyer}").as_bytes()))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorldState {
    pub oracle: OracleState,
    pub isl: IslState,
}

impl WorldState {
    pub fn dump(&self) -> String {
        let o = &self.oracle;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "oracle.owner {}",
            o.owner.as_ref().map_or("-".to_owned(), ToString::to_string)
        );
        for n in &o.trusted_nodes {
            let _ = writeln!(out, "oracle.trusted {n}");
        }
        for (a, d) in &o.shared_datasets {
            let _ = writeln!(out, "oracle.dataset {a} owner={} iri={} tx={}", d.owner_node, d.dataset_iri, d.tx_id);
        }
        for (a, m) in &o.shared_models {
            let _ = writeln!(
                out,
                "oracle.model {a} owner={} iri={} tx={} task={} dataset={} base={}",
                m.owner_node,
                m.model_iri,
                m.tx_id,
                m.task,
                m.dataset_addr,
                m.base_model_addr.as_ref().map_or(NO_BASE, ContentAddress::as_str)
            );
        }
        for (t, addrs) in &o.task_index {
            let list: Vec<&str> = addrs.iter().map(ContentAddress::as_str).collect();
            let _ = writeln!(out, "oracle.task {t} {}", list.join(","));
        }
        for (a, p) in &self.isl.prices {
            let _ = writeln!(out, "isl.price {a} {p}");
        }
        for (t, acq) in &self.isl.acquisitions {
            let _ = writeln!(
                out,
                "isl.token {t} valid={} buyer={} resource={} seq={}",
                self.isl.tokens.get(t).copied().unwrap_or(false),
                acq.buyer,
                acq.resource,
                acq.granted_at_seq
            );
        }
        out
    }
}

fn arity(args: &[String], n: usize, method: &str) -> Result<(), ContractError> {
    if args.len() == n {
        Ok(())
    } else {
        Err(ContractError::BadArguments(format!(
            "{method} takes {n} arguments, got {}",
            args.len()
        )))
    }
}

fn content_arg(s: &str) -> Result<ContentAddress, ContractError> {
    ContentAddress::parse(s).map_err(|e| ContractError::BadArguments(e.to_string()))
}

fn iri_arg(s: &str) -> Result<String, ContractError> {
    Iri::new(s)
        .map(|i| i.as_str().to_owned())
        .map_err(|e| ContractError::BadArguments(e.to_string()))
}

fn non_payable(return_value: String) -> Outcome {
    Outcome {
        return_value,
        payee: Payee::None,
    }
}

/// Dispatches a contract call against `world`. On error the caller must
/// discard `world`.
pub fn execute(
    world: &mut WorldState,
    ctx: &CallContext,
    contract: &str,
    method: &str,
    args: &[String],
) -> Result<Outcome, ContractError> {
    match (contract, method) {
        (ORACLE, "init") => {
            arity(args, 0, method)?;
            if world.oracle.owner.is_some() {
                return Err(ContractError::AlreadyInitialized);
            }
            world.oracle.owner = Some(ctx.sender.clone());
            Ok(non_payable(String::new()))
        }
        (ORACLE, "register_node") => {
            arity(args, 1, method)?;
            let node = Address::parse(&args[0])
                .ok_or_else(|| ContractError::BadArguments(format!("bad address {:?}", args[0])))?;
            oracle_register_node(&mut world.oracle, &ctx.sender, node)?;
            Ok(non_payable(String::new()))
        }
        (ORACLE, "share_dataset") => {
            arity(args, 2, method)?;
            let iri = iri_arg(&args[0])?;
            let addr = content_arg(&args[1])?;
            oracle_share_dataset(&mut world.oracle, ctx, iri, addr).map(non_payable)
        }
        (ORACLE, "share_model") => {
            arity(args, 5, method)?;
            let iri = iri_arg(&args[0])?;
            let addr = content_arg(&args[1])?;
            let task = iri_arg(&args[2])?;
            let dataset_addr = content_arg(&args[3])?;
            let base = match args[4].as_str() {
                NO_BASE => None,
                s => Some(content_arg(s)?),
            };
            oracle_share_model(&mut world.oracle, ctx, iri, addr, task, dataset_addr, base).map(non_payable)
        }
        (ISL, "set_price") => {
            arity(args, 2, method)?;
            let addr = content_arg(&args[0])?;
            let price: u64 = args[1]
                .parse()
                .map_err(|_| ContractError::BadArguments(format!("bad price {:?}", args[1])))?;
            let owner = world
                .oracle
                .owner_of(&addr)
                .ok_or_else(|| ContractError::UnknownResource(addr.to_string()))?;
            if *owner != ctx.sender {
                return Err(ContractError::Unauthorized(format!(
                    "{} does not own {addr}",
                    ctx.sender
                )));
            }
            world.isl.prices.insert(addr, price);
            Ok(non_payable(String::new()))
        }
        (ISL, "acquire") => {
            arity(args, 1, method)?;
            let addr = content_arg(&args[0])?;
            if !world.oracle.is_trusted(&ctx.sender) {
                return Err(ContractError::Unauthorized(format!("{} is not a trusted node", ctx.sender)));
            }
            let owner = world
                .oracle
                .owner_of(&addr)
                .cloned()
                .ok_or_else(|| ContractError::UnknownResource(addr.to_string()))?;
            let price = world.isl.price(&addr);
            if ctx.value != price {
                return Err(ContractError::WrongPayment {
                    expected: price,
                    got: ctx.value,
                });
            }
            let token = access_token(ctx.seq, &addr, &ctx.sender);
            world.isl.tokens.insert(token.clone(), true);
            world.isl.acquisitions.insert(
                token.clone(),
                Acquisition {
                    buyer: ctx.sender.clone(),
                    resource: addr.clone(),
                    granted_at_seq: ctx.seq,
                },
            );
            Ok(Outcome {
                return_value: format!("{token} {addr}"),
                payee: Payee::Account(owner),
            })
        }
        (ORACLE | ISL, other) => Err(ContractError::UnknownMethod(format!("{contract}.{other}"))),
        _ => Err(ContractError::UnknownMethod(format!("{contract}.{method}"))),
    }
}

fn oracle_register_node(oracle: &mut OracleState, caller: &Address, node: Address) -> Result<(), ContractError> {
    let owner = oracle.owner.as_ref().ok_or(ContractError::NotInitialized)?;
    if owner != caller {
        return Err(ContractError::Unauthorized(format!("{caller} is not the oracle owner")));
    }
    if !oracle.trusted_nodes.insert(node.clone()) {
        return Err(ContractError::AlreadyRegistered(node.to_string()));
    }
    Ok(())
}

fn require_trusted(oracle: &OracleState, caller: &Address) -> Result<(), ContractError> {
    if oracle.is_trusted(caller) {
        Ok(())
    } else {
        Err(ContractError::Unauthorized(format!("{caller} is not a trusted node")))
    }
}

fn require_fresh(oracle: &OracleState, addr: &ContentAddress) -> Result<(), ContractError> {
    if oracle.is_registered(addr) {
        Err(ContractError::AlreadyShared(addr.to_string()))
    } else {
        Ok(())
    }
}

fn oracle_share_dataset(
    oracle: &mut OracleState,
    ctx: &CallContext,
    dataset_iri: String,
    addr: ContentAddress,
) -> Result<String, ContractError> {
    require_trusted(oracle, &ctx.sender)?;
    require_fresh(oracle, &addr)?;
    let tx = tx_id(ctx.seq);
    oracle.shared_datasets.insert(
        addr,
        SharedDataset {
            owner_node: ctx.sender.clone(),
            dataset_iri,
            tx_id: tx.clone(),
        },
    );
    Ok(tx)
}

fn oracle_share_model(
    oracle: &mut OracleState,
    ctx: &CallContext,
    model_iri: String,
    addr: ContentAddress,
    task: String,
    dataset_addr: ContentAddress,
    base_model_addr: Option<ContentAddress>,
) -> Result<String, ContractError> {
    require_trusted(oracle, &ctx.sender)?;
    require_fresh(oracle, &addr)?;
    if !oracle.shared_datasets.contains_key(&dataset_addr) {
        return Err(ContractError::IncompleteChain(format!("dataset {dataset_addr} is not shared")));
    }
    if let Some(base) = &base_model_addr {
        if !oracle.shared_models.contains_key(base) {
            return Err(ContractError::IncompleteChain(format!("base model {base} is not shared")));
        }
    }
    let tx = tx_id(ctx.seq);
    oracle.task_index.entry(task.clone()).or_default().push(addr.clone());
    oracle.shared_models.insert(
        addr,
        SharedModel {
            owner_node: ctx.sender.clone(),
            model_iri,
            tx_id: tx.clone(),
            task,
            dataset_addr,
            base_model_addr,
        },
    );
    Ok(tx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Call, Ledger, Status};

    struct Fixture {
        ledger: Ledger,
        owner: Address,
        a: Address,
        b: Address,
        outsider: Address,
    }

    fn fixture() -> Fixture {
        let mut ledger = Ledger::new(10_000);
        let owner = ledger.create_account(100).unwrap();
        ledger.submit(Call::new(&owner, ORACLE, "init", vec![], 0)).unwrap();
        let a = ledger.create_account(100).unwrap();
        let b = ledger.create_account(100).unwrap();
        let outsider = ledger.create_account(100).unwrap();
        for n in [&a, &b] {
            let r = ledger
                .submit(Call::new(&owner, ORACLE, "register_node", vec![n.to_string()], 0))
                .unwrap();
            assert!(r.is_ok());
        }
        Fixture { ledger, owner, a, b, outsider }
    }

    fn call(l: &mut Ledger, who: &Address, contract: &str, method: &str, args: &[&str], value: u64) -> Result<String, ContractError> {
        l.submit(Call::new(who, contract, method, args.iter().map(|s| s.to_string()).collect(), value))
            .unwrap()
            .into_result()
            .map(|r| r.return_value)
    }

    fn addr(tag: &str) -> ContentAddress {
        ContentAddress::of(tag.as_bytes())
    }

    const OCC: &str = "isl://schema/task/occupancy_detection";
    const ENERGY: &str = "isl://schema/task/energy_prediction";

    fn share_ds(f: &mut Fixture, who: &Address, tag: &str) -> Result<String, ContractError> {
        let iri = format!("isl://n/dataset/{tag}");
        call(&mut f.ledger, who, ORACLE, "share_dataset", &[&iri, addr(tag).as_str()], 0)
    }

    fn share_model(f: &mut Fixture, who: &Address, tag: &str, task: &str, ds: &str, base: Option<&str>) -> Result<String, ContractError> {
        let iri = format!("isl://n/model/{tag}");
        let base = base.map(|b| addr(b).to_string()).unwrap_or_else(|| NO_BASE.to_string());
        call(
            &mut f.ledger,
            who,
            ORACLE,
            "share_model",
            &[&iri, addr(tag).as_str(), task, addr(ds).as_str(), &base],
            0,
        )
    }

    #[test]
    fn register_node_governance() {
        let mut f = fixture();
        assert!(f.ledger.world().oracle.is_trusted(&f.a));
        let (a, b, owner) = (f.a.clone(), f.b.clone(), f.owner.clone());
        assert!(matches!(
            call(&mut f.ledger, &a, ORACLE, "register_node", &[f.outsider.as_str()], 0),
            Err(ContractError::Unauthorized(_))
        ));
        assert!(matches!(
            call(&mut f.ledger, &owner, ORACLE, "register_node", &[b.as_str()], 0),
            Err(ContractError::AlreadyRegistered(_))
        ));
        assert!(matches!(
            call(&mut f.ledger, &owner, ORACLE, "init", &[], 0),
            Err(ContractError::AlreadyInitialized)
        ));
    }

    #[test]
    fn share_dataset_rules() {
        let mut f = fixture();
        let (a, b, outsider) = (f.a.clone(), f.b.clone(), f.outsider.clone());
        let seq = f.ledger.next_seq();
        assert_eq!(share_ds(&mut f, &a, "d1").unwrap(), format!("tx-{seq}"));
        assert!(matches!(share_ds(&mut f, &b, "d1"), Err(ContractError::AlreadyShared(_))));
        assert!(matches!(share_ds(&mut f, &outsider, "d2"), Err(ContractError::Unauthorized(_))));
        assert_eq!(f.ledger.world().oracle.shared_datasets[&addr("d1")].owner_node, a);
    }

    #[test]
    fn share_model_closure_rules() {
        let mut f = fixture();
        let (a, b) = (f.a.clone(), f.b.clone());
        assert!(matches!(
            share_model(&mut f, &a, "m0", OCC, "d0", None),
            Err(ContractError::IncompleteChain(_))
        ));
        share_ds(&mut f, &a, "d0").unwrap();
        share_model(&mut f, &a, "m0", OCC, "d0", None).unwrap();
        assert_eq!(f.ledger.world().oracle.query_task(OCC), vec![addr("m0")]);

        share_ds(&mut f, &b, "d1").unwrap();
        assert!(matches!(
            share_model(&mut f, &b, "m2", OCC, "d1", Some("m1")),
            Err(ContractError::IncompleteChain(_))
        ));
        // Cross-owner base models are allowed.
        share_model(&mut f, &b, "m1", OCC, "d1", Some("m0")).unwrap();
        let chain = f.ledger.world().oracle.trace(&addr("m1")).unwrap();
        assert_eq!(chain.len(), 2);
        assert_eq!(chain[0].model_addr, addr("m0"));
        assert_eq!(chain[0].model.owner_node, a);
        assert_eq!(chain[1].model.owner_node, b);
        assert!(matches!(
            share_model(&mut f, &b, "m1", OCC, "d1", Some("m0")),
            Err(ContractError::AlreadyShared(_))
        ));
        // A dataset address cannot be reused as a model.
        assert!(matches!(
            share_model(&mut f, &b, "d0", OCC, "d1", None),
            Err(ContractError::AlreadyShared(_))
        ));
        f.ledger.world().oracle.check_invariants().unwrap();
    }

    #[test]
    fn task_index_order_and_disjointness() {
        let mut f = fixture();
        let a = f.a.clone();
        share_ds(&mut f, &a, "d").unwrap();
        share_model(&mut f, &a, "z", OCC, "d", None).unwrap();
        share_model(&mut f, &a, "y", OCC, "d", None).unwrap();
        share_model(&mut f, &a, "e", ENERGY, "d", None).unwrap();
        let o = &f.ledger.world().oracle;
        assert_eq!(o.query_task(OCC), vec![addr("z"), addr("y")]);
        assert_eq!(o.query_task(ENERGY), vec![addr("e")]);
        assert!(o.query_task("isl://schema/task/none").is_empty());
    }

    #[test]
    fn pricing_and_acquire() {
        let mut f = fixture();
        let (a, b, outsider) = (f.a.clone(), f.b.clone(), f.outsider.clone());
        share_ds(&mut f, &a, "d").unwrap();
        share_model(&mut f, &a, "m", OCC, "d", None).unwrap();
        let m = addr("m");
        assert!(matches!(
            call(&mut f.ledger, &b, ISL, "set_price", &[m.as_str(), "10"], 0),
            Err(ContractError::Unauthorized(_))
        ));
        assert!(matches!(
            call(&mut f.ledger, &a, ISL, "set_price", &[addr("zz").as_str(), "10"], 0),
            Err(ContractError::UnknownResource(_))
        ));
        call(&mut f.ledger, &a, ISL, "set_price", &[m.as_str(), "10"], 0).unwrap();
        assert_eq!(f.ledger.world().isl.price(&m), 10);

        let before = f.ledger.state().clone();
        assert_eq!(
            call(&mut f.ledger, &b, ISL, "acquire", &[m.as_str()], 5),
            Err(ContractError::WrongPayment { expected: 10, got: 5 })
        );
        assert_eq!(f.ledger.state(), &before);

        let first = call(&mut f.ledger, &b, ISL, "acquire", &[m.as_str()], 10).unwrap();
        assert_eq!(f.ledger.balance(&b), Some(90));
        assert_eq!(f.ledger.balance(&a), Some(110));
        let second = call(&mut f.ledger, &b, ISL, "acquire", &[m.as_str()], 10).unwrap();
        let (t1, loc) = first.split_once(' ').unwrap();
        let (t2, _) = second.split_once(' ').unwrap();
        assert_ne!(t1, t2);
        assert_eq!(loc, m.as_str());
        assert_eq!(t1.len(), 64);

        let isl = &f.ledger.world().isl;
        assert!(isl.validate_token(t1, &m, &b));
        assert!(!isl.validate_token(t1, &addr("d"), &b));
        assert!(!isl.validate_token(t1, &m, &a));
        assert!(!isl.validate_token("nope", &m, &b));

        assert!(matches!(
            call(&mut f.ledger, &outsider, ISL, "acquire", &[m.as_str()], 10),
            Err(ContractError::Unauthorized(_))
        ));
        assert!(matches!(
            call(&mut f.ledger, &b, ISL, "acquire", &[addr("ghost").as_str()], 0),
            Err(ContractError::UnknownResource(_))
        ));
    }

    #[test]
    fn free_resources_and_non_payable() {
        let mut f = fixture();
        let (a, b) = (f.a.clone(), f.b.clone());
        share_ds(&mut f, &a, "d").unwrap();
        call(&mut f.ledger, &a, ISL, "set_price", &[addr("d").as_str(), "0"], 0).unwrap();
        call(&mut f.ledger, &b, ISL, "acquire", &[addr("d").as_str()], 0).unwrap();
        let r = f
            .ledger
            .submit(Call::new(&a, ORACLE, "share_dataset", vec!["isl://n/dataset/x".into(), addr("x").to_string()], 3))
            .unwrap();
        assert_eq!(r.status, Status::Reverted);
        assert_eq!(r.revert, Some(ContractError::NonPayable));
        assert!(!f.ledger.world().oracle.is_registered(&addr("x")));
    }

    #[test]
    fn bad_calls_revert() {
        let mut f = fixture();
        let a = f.a.clone();
        assert!(matches!(call(&mut f.ledger, &a, ORACLE, "nope", &[], 0), Err(ContractError::UnknownMethod(_))));
        assert!(matches!(call(&mut f.ledger, &a, "other", "x", &[], 0), Err(ContractError::UnknownMethod(_))));
        assert!(matches!(
            call(&mut f.ledger, &a, ORACLE, "share_dataset", &["not-an-iri", addr("d").as_str()], 0),
            Err(ContractError::BadArguments(_))
        ));
        assert!(matches!(call(&mut f.ledger, &a, ORACLE, "share_dataset", &[], 0), Err(ContractError::BadArguments(_))));
    }

    #[test]
    fn token_derivation_is_stable() {
        let t = access_token(5, &addr("m"), &Address::from_counter(2));
        assert_eq!(t, access_token(5, &addr("m"), &Address::from_counter(2)));
        assert_ne!(t, access_token(6, &addr("m"), &Address::from_counter(2)));
    }
}
