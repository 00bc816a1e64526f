//! ISL nodes and the network that connects them.
//!
//! A [`Network`] owns the shared ledger and every node. Workflows that touch
//! more than one node (sharing against the oracle, querying other nodes'
//! metadata, token-gated retrieval from an owner's store) are methods on the
//! network; purely local work (generating data, training, fine-tuning) lives
//! on [`IslNode`].
//!
//! Off-chain metadata such as evaluation measures and input features is
//! read from the owner node's knowledge graph; the ledger only holds
//! addresses, owners and lineage.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::cas::{BlobStore, CasError, ContentAddress, DirStore, MemStore};
use crate::contracts::{ContractError, RegistryStep, ISL, NO_BASE, ORACLE};
use crate::depgraph::{ChainStep, ProvenanceChain};
use crate::kgstore::{vocab, DatasetDescriptor, Iri, KgError, KnowledgeGraph, ModelRecord, Resource, SpaceProfile};
use crate::ledger::{Address, Call, Ledger, LedgerError, Receipt};
use crate::mlsim::{self, LinearModel, MlError, TabularDataset};

pub const KG_FILE: &str = "kg.nt";
pub const ACCOUNT_FILE: &str = "account.txt";
pub const FILES_DIR: &str = "files";

/// Locator prefix for resources whose bytes live only at their owner.
pub const REMOTE_PREFIX: &str = "remote:";

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Cas(#[from] CasError),
    #[error("TokenRejected: token not valid for {addr} and caller {caller}")]
    TokenRejected { addr: ContentAddress, caller: Address },
    #[error("IntegrityFailure: bytes served for {addr} hash to {actual}")]
    IntegrityFailure {
        addr: ContentAddress,
        actual: ContentAddress,
    },
    #[error("UnknownNode: {0}")]
    UnknownNode(String),
    #[error("DuplicateNode: {0}")]
    DuplicateNode(String),
    #[error("InvalidId: {0:?}")]
    InvalidId(String),
    #[error("MissingFile: {0}")]
    MissingFile(String),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

impl NodeError {
    /// Leading error name of the display form, e.g. `Unauthorized`.
    pub fn name(&self) -> String {
        let s = self.to_string();
        s.split(':').next().unwrap_or(&s).to_owned()
    }
}

/// Node names and local resource ids: ASCII letters, digits, `_`, `-`, `.`.
pub fn check_id(id: &str) -> Result<(), NodeError> {
    let ok = !id.is_empty()
        && id != "schema"
        && !id.starts_with('.')
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(NodeError::InvalidId(id.to_owned()))
    }
}

/// Result of one share transaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shared {
    pub iri: Iri,
    pub addr: ContentAddress,
    pub tx_id: String,
}

/// A query hit with the metadata used to rank it.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedModel {
    pub addr: ContentAddress,
    pub model_iri: Iri,
    pub task: Iri,
    pub input_features: Vec<String>,
    pub mse: f64,
    pub mae: f64,
    pub owner_node: String,
    pub owner_account: Address,
    pub price: u64,
}

impl RankedModel {
    /// MSE ascending, then content address.
    pub fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.mse
            .total_cmp(&other.mse)
            .then_with(|| self.addr.cmp(&other.addr))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Acquired {
    pub addr: ContentAddress,
    pub model_iri: Iri,
    pub token: String,
    pub tx_id: String,
    pub price: u64,
    pub model: LinearModel,
}

/// One root-first step of an on-chain provenance walk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvenanceStep {
    pub model_addr: ContentAddress,
    pub model_iri: String,
    pub model_tx: String,
    pub model_owner: String,
    pub dataset_addr: ContentAddress,
    pub dataset_iri: String,
    pub dataset_tx: String,
    pub dataset_owner: String,
}

/// Drops tx ids and addresses, keeping the id chain for comparison with
/// [`crate::depgraph::DependencyGraph::trace`].
pub fn to_chain(steps: &[ProvenanceStep]) -> ProvenanceChain {
    ProvenanceChain {
        steps: steps
            .iter()
            .map(|s| ChainStep {
                model: s.model_iri.clone(),
                dataset: s.dataset_iri.clone(),
            })
            .collect(),
    }
}

pub struct IslNode {
    node_id: String,
    account: Address,
    graph: KnowledgeGraph,
    store: Box<dyn BlobStore>,
    files: BTreeMap<String, Vec<u8>>,
    root: Option<PathBuf>,
    known_remote: BTreeMap<ContentAddress, String>,
}

impl std::fmt::Debug for IslNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IslNode")
            .field("node_id", &self.node_id)
            .field("account", &self.account)
            .field("triples", &self.graph.len())
            .finish()
    }
}

impl IslNode {
    pub fn in_memory(node_id: &str, account: Address) -> Result<Self, NodeError> {
        check_id(node_id)?;
        Ok(Self {
            node_id: node_id.to_owned(),
            account,
            graph: KnowledgeGraph::new(node_id),
            store: Box::new(MemStore::new()),
            files: BTreeMap::new(),
            root: None,
            known_remote: BTreeMap::new(),
        })
    }

    /// New node persisted under `root`; the directory name is the node id.
    pub fn create_at(root: &Path, account: Address) -> Result<Self, NodeError> {
        let node_id = dir_name(root)?;
        fs::create_dir_all(root)?;
        let node = Self {
            graph: KnowledgeGraph::new(&node_id),
            node_id,
            account,
            store: Box::new(DirStore::open(root)?),
            files: BTreeMap::new(),
            root: Some(root.to_owned()),
            known_remote: BTreeMap::new(),
        };
        node.save()?;
        Ok(node)
    }

    pub fn open(root: &Path) -> Result<Self, NodeError> {
        let node_id = dir_name(root)?;
        let account_text = fs::read_to_string(root.join(ACCOUNT_FILE))?;
        let account = Address::parse(account_text.trim())
            .ok_or_else(|| NodeError::MissingFile(format!("{} holds no address", ACCOUNT_FILE)))?;
        let graph = KnowledgeGraph::import(&node_id, &fs::read(root.join(KG_FILE))?)?;
        let mut files = BTreeMap::new();
        let files_root = root.join(FILES_DIR);
        if files_root.is_dir() {
            read_tree(&files_root, &files_root, &mut files)?;
        }
        Ok(Self {
            node_id,
            account,
            graph,
            store: Box::new(DirStore::open(root)?),
            files,
            root: Some(root.to_owned()),
            known_remote: BTreeMap::new(),
        })
    }

    /// Writes the graph, account and local files (no-op for in-memory nodes).
    pub fn save(&self) -> Result<(), NodeError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        fs::write(root.join(KG_FILE), self.graph.export())?;
        fs::write(root.join(ACCOUNT_FILE), format!("{}\n", self.account))?;
        for (rel, bytes) in &self.files {
            let path = root.join(FILES_DIR).join(rel);
            if fs::read(&path).ok().as_deref() != Some(bytes.as_slice()) {
                fs::create_dir_all(path.parent().expect("file has a parent"))?;
                fs::write(path, bytes)?;
            }
        }
        Ok(())
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn account(&self) -> &Address {
        &self.account
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut KnowledgeGraph {
        &mut self.graph
    }

    pub fn store(&self) -> &dyn BlobStore {
        self.store.as_ref()
    }

    pub fn file(&self, rel: &str) -> Option<&[u8]> {
        self.files.get(rel).map(Vec::as_slice)
    }

    /// Remote models seen in queries, with their owner node.
    pub fn known_remote(&self) -> &BTreeMap<ContentAddress, String> {
        &self.known_remote
    }

    pub fn dataset_iri(&self, local_id: &str) -> Result<Iri, NodeError> {
        check_id(local_id)?;
        Ok(Iri::entity(&self.node_id, "dataset", local_id)?)
    }

    pub fn model_iri(&self, local_id: &str) -> Result<Iri, NodeError> {
        check_id(local_id)?;
        Ok(Iri::entity(&self.node_id, "model", local_id)?)
    }

    /// Writes `data` as a local CSV file and registers it in the graph.
    pub fn add_dataset(&mut self, local_id: &str, data: &TabularDataset) -> Result<DatasetDescriptor, NodeError> {
        let iri = self.dataset_iri(local_id)?;
        let rel = format!("datasets/{local_id}.csv");
        let names: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
        let d = DatasetDescriptor::local(iri, &self.node_id, &names, &rel)?;
        self.graph.register_dataset(&d)?;
        self.files.insert(rel, data.to_csv_bytes());
        Ok(d)
    }

    fn bytes_at(&self, locator: &str) -> Result<&[u8], NodeError> {
        self.file(locator)
            .ok_or_else(|| NodeError::MissingFile(locator.to_owned()))
    }

    pub fn load_dataset(&self, iri: &Iri) -> Result<TabularDataset, NodeError> {
        let d = self
            .graph
            .dataset(iri)
            .ok_or_else(|| KgError::NotFound(iri.clone()))?;
        Ok(TabularDataset::from_csv_bytes(self.bytes_at(&d.local_uri)?)?)
    }

    pub fn load_model(&self, iri: &Iri) -> Result<LinearModel, NodeError> {
        let m = self.graph.model(iri).ok_or_else(|| KgError::NotFound(iri.clone()))?;
        Ok(LinearModel::from_bytes(self.bytes_at(&m.model_uri)?)?)
    }

    fn register_trained(
        &mut self,
        local_id: &str,
        model: &LinearModel,
        dataset: &Iri,
        data: &TabularDataset,
        task: Iri,
        base_model: Option<Iri>,
    ) -> Result<ModelRecord, NodeError> {
        let iri = self.model_iri(local_id)?;
        let metrics = mlsim::evaluate(model, data)?;
        let rel = format!("models/{local_id}.model");
        let record = ModelRecord {
            id: iri,
            task,
            dataset: dataset.clone(),
            model_uri: rel.clone(),
            base_model,
            input_features: model.input_features.clone(),
            eval_measures: [("MAE".to_owned(), metrics.mae), ("MSE".to_owned(), metrics.mse)].into(),
            owner_node: self.node_id.clone(),
            shared: false,
            content_address: None,
            tx_id: None,
        };
        self.graph.register_model(&record)?;
        self.files.insert(rel, model.to_bytes());
        Ok(self.graph.model(&record.id).expect("just registered"))
    }

    /// Trains a model from scratch on a local dataset; MAE/MSE are measured
    /// on the training data.
    pub fn train_local(&mut self, local_id: &str, dataset: &Iri, task: &Iri) -> Result<ModelRecord, NodeError> {
        self.model_iri(local_id)?;
        let data = self.load_dataset(dataset)?;
        let model = mlsim::train(&data)?.quantized();
        self.register_trained(local_id, &model, dataset, &data, task.clone(), None)
    }

    /// Fine-tunes `base` (local or acquired) on a local dataset. The new
    /// record keeps the base's task and points back at it.
    pub fn fine_tune_remote(
        &mut self,
        local_id: &str,
        base: &Iri,
        dataset: &Iri,
        steps: usize,
        learning_rate: f64,
    ) -> Result<ModelRecord, NodeError> {
        self.model_iri(local_id)?;
        let base_record = self.graph.model(base).ok_or_else(|| KgError::NotFound(base.clone()))?;
        let base_model = self.load_model(base)?;
        let data = self.load_dataset(dataset)?;
        let model = mlsim::fine_tune(&base_model, &data, steps, learning_rate)?.quantized();
        self.register_trained(local_id, &model, dataset, &data, base_record.task, Some(base.clone()))
    }

    /// Content address of a resource: recorded if shared, otherwise hashed
    /// from the local file.
    pub fn address_of(&self, r: &Resource) -> Result<ContentAddress, NodeError> {
        if let Some(addr) = r.content_address() {
            return Ok(addr.clone());
        }
        let locator = match r {
            Resource::Dataset(d) => &d.local_uri,
            Resource::Model(m) => &m.model_uri,
        };
        Ok(ContentAddress::of(self.bytes_at(locator)?))
    }

    fn resource_bytes(&self, r: &Resource) -> Result<Vec<u8>, NodeError> {
        let locator = match r {
            Resource::Dataset(d) => &d.local_uri,
            Resource::Model(m) => &m.model_uri,
        };
        Ok(self.bytes_at(locator)?.to_vec())
    }

    /// Owner-side retrieval: hands out stored bytes as held, after checking
    /// the token against the ledger.
    pub fn serve(
        &self,
        ledger: &Ledger,
        caller: &Address,
        addr: &ContentAddress,
        token: &str,
    ) -> Result<Vec<u8>, NodeError> {
        if !ledger.world().isl.validate_token(token, addr, caller) {
            return Err(NodeError::TokenRejected {
                addr: addr.clone(),
                caller: caller.clone(),
            });
        }
        Ok(self.store.read_raw(addr)?.into_bytes())
    }
}

fn dir_name(root: &Path) -> Result<String, NodeError> {
    let name = root
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| NodeError::InvalidId(root.display().to_string()))?
        .to_owned();
    check_id(&name)?;
    Ok(name)
}

fn read_tree(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) -> Result<(), NodeError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            read_tree(base, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(base)
                .expect("walked from base")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            out.insert(rel, fs::read(&path)?);
        }
    }
    Ok(())
}

/// The shared ledger plus every participating node.
#[derive(Debug)]
pub struct Network {
    ledger: Ledger,
    owner: Option<Address>,
    nodes: BTreeMap<String, IslNode>,
}

impl Network {
    pub fn new(ledger: Ledger) -> Self {
        Self {
            ledger,
            owner: None,
            nodes: BTreeMap::new(),
        }
    }

    /// Reassembles a network from a replayed ledger and loaded nodes.
    pub fn from_parts(ledger: Ledger, owner: Option<Address>, nodes: Vec<IslNode>) -> Self {
        Self {
            ledger,
            owner,
            nodes: nodes.into_iter().map(|n| (n.node_id.clone(), n)).collect(),
        }
    }

    /// Funds the network owner and makes it the oracle owner.
    pub fn bootstrap(&mut self, owner_balance: u64) -> Result<Address, NodeError> {
        let owner = self.ledger.create_account(owner_balance)?;
        self.ledger
            .submit(Call::new(&owner, ORACLE, "init", vec![], 0))?
            .into_result()?;
        self.owner = Some(owner.clone());
        Ok(owner)
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut Ledger {
        &mut self.ledger
    }

    pub fn owner(&self) -> Option<&Address> {
        self.owner.as_ref()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &IslNode> {
        self.nodes.values()
    }

    pub fn node(&self, name: &str) -> Result<&IslNode, NodeError> {
        self.nodes.get(name).ok_or_else(|| NodeError::UnknownNode(name.to_owned()))
    }

    pub fn node_mut(&mut self, name: &str) -> Result<&mut IslNode, NodeError> {
        self.nodes
            .get_mut(name)
            .ok_or_else(|| NodeError::UnknownNode(name.to_owned()))
    }

    pub fn node_name_of(&self, account: &Address) -> Option<&str> {
        self.nodes
            .values()
            .find(|n| &n.account == account)
            .map(|n| n.node_id.as_str())
    }

    /// Creates a funded account for a node that is about to join.
    pub fn open_account(&mut self, balance: u64) -> Result<Address, NodeError> {
        Ok(self.ledger.create_account(balance)?)
    }

    pub fn insert_node(&mut self, node: IslNode) -> Result<(), NodeError> {
        if self.nodes.contains_key(&node.node_id) {
            return Err(NodeError::DuplicateNode(node.node_id));
        }
        self.nodes.insert(node.node_id.clone(), node);
        Ok(())
    }

    /// Adds an in-memory node with a fresh funded account.
    pub fn add_node(&mut self, name: &str, balance: u64) -> Result<&mut IslNode, NodeError> {
        check_id(name)?;
        if self.nodes.contains_key(name) {
            return Err(NodeError::DuplicateNode(name.to_owned()));
        }
        let account = self.open_account(balance)?;
        self.insert_node(IslNode::in_memory(name, account)?)?;
        self.node_mut(name)
    }

    fn submit(&mut self, sender: &Address, contract: &str, method: &str, args: Vec<String>, value: u64) -> Result<Receipt, NodeError> {
        Ok(self
            .ledger
            .submit(Call::new(sender, contract, method, args, value))?
            .into_result()?)
    }

    /// Owner-signed oracle registration of a node.
    pub fn register_node(&mut self, name: &str) -> Result<Receipt, NodeError> {
        let account = self.node(name)?.account.clone();
        let owner = self.owner.clone().ok_or(ContractError::NotInitialized)?;
        self.submit(&owner, ORACLE, "register_node", vec![account.to_string()], 0)
    }

    fn share_tx(&mut self, name: &str, resource: &Resource, addr: &ContentAddress) -> Result<Shared, NodeError> {
        let node = self.node(name)?;
        let sender = node.account.clone();
        let bytes = node.resource_bytes(resource)?;
        let args = match resource {
            Resource::Dataset(d) => vec![d.id.to_string(), addr.to_string()],
            Resource::Model(m) => {
                let graph = &node.graph;
                let dataset = graph
                    .dataset(&m.dataset)
                    .map(Resource::Dataset)
                    .ok_or_else(|| KgError::NotFound(m.dataset.clone()))?;
                let dataset_addr = node.address_of(&dataset)?;
                let base = match &m.base_model {
                    None => NO_BASE.to_owned(),
                    Some(b) => {
                        let base = graph.model(b).map(Resource::Model).ok_or_else(|| KgError::NotFound(b.clone()))?;
                        node.address_of(&base)?.to_string()
                    }
                };
                vec![m.id.to_string(), addr.to_string(), m.task.to_string(), dataset_addr.to_string(), base]
            }
        };
        let method = match resource {
            Resource::Dataset(_) => "share_dataset",
            Resource::Model(_) => "share_model",
        };
        let receipt = self.submit(&sender, ORACLE, method, args, 0)?;
        let node = self.node_mut(name)?;
        node.store.put(&bytes)?;
        node.graph.mark_shared(resource.id(), addr, &receipt.return_value)?;
        Ok(Shared {
            iri: resource.id().clone(),
            addr: addr.clone(),
            tx_id: receipt.return_value,
        })
    }

    /// Shares a local dataset. On any failure the graph and store are
    /// untouched.
    pub fn share_dataset(&mut self, name: &str, dataset: &Iri) -> Result<Shared, NodeError> {
        let node = self.node(name)?;
        let d = node
            .graph
            .dataset(dataset)
            .ok_or_else(|| KgError::NotFound(dataset.clone()))?;
        if d.shared {
            return Err(ContractError::AlreadyShared(dataset.to_string()).into());
        }
        if d.owner_node != node.node_id {
            return Err(ContractError::Unauthorized(format!("{dataset} is owned by {}", d.owner_node)).into());
        }
        let r = Resource::Dataset(d);
        let addr = node.address_of(&r)?;
        self.share_tx(name, &r, &addr)
    }

    /// Shares a local model, first sharing every unshared asset of its
    /// dependency closure that this node owns, in dependency order. All
    /// checks run before the first transaction so a rejected plan has no
    /// on-chain effect.
    pub fn share_model(&mut self, name: &str, model: &Iri) -> Result<Vec<Shared>, NodeError> {
        let node = self.node(name)?;
        let oracle = &self.ledger.world().oracle;
        let record = node.graph.model(model).ok_or_else(|| KgError::NotFound(model.clone()))?;
        if record.shared {
            return Err(ContractError::AlreadyShared(model.to_string()).into());
        }
        if record.owner_node != node.node_id {
            return Err(ContractError::Unauthorized(format!("{model} is owned by {}", record.owner_node)).into());
        }

        let mut plan: Vec<(Resource, ContentAddress)> = Vec::new();
        for m in node.graph.model_chain(model)? {
            let d = node
                .graph
                .dataset(&m.dataset)
                .ok_or_else(|| KgError::UnresolvedDependency(format!("dataset {}", m.dataset)))?;
            for r in [Resource::Dataset(d), Resource::Model(m)] {
                if r.owner_node() != node.node_id {
                    let on_chain = r.content_address().is_some_and(|a| match &r {
                        Resource::Dataset(_) => oracle.shared_datasets.contains_key(a),
                        Resource::Model(_) => oracle.shared_models.contains_key(a),
                    });
                    if !on_chain {
                        return Err(ContractError::IncompleteChain(format!(
                            "{} is owned by {} and not shared",
                            r.id(),
                            r.owner_node()
                        ))
                        .into());
                    }
                } else if !r.is_shared() {
                    let addr = node.address_of(&r)?;
                    if oracle.is_registered(&addr) || plan.iter().any(|(_, a)| *a == addr) {
                        return Err(ContractError::AlreadyShared(addr.to_string()).into());
                    }
                    if !plan.iter().any(|(p, _)| p.id() == r.id()) {
                        plan.push((r, addr));
                    }
                }
            }
        }

        let mut done = Vec::with_capacity(plan.len());
        for (r, addr) in plan {
            done.push(self.share_tx(name, &r, &addr)?);
        }
        Ok(done)
    }

    /// Posts a price for a resource this node shared.
    pub fn set_price(&mut self, name: &str, addr: &ContentAddress, price: u64) -> Result<Receipt, NodeError> {
        let sender = self.node(name)?.account.clone();
        self.submit(&sender, ISL, "set_price", vec![addr.to_string(), price.to_string()], 0)
    }

    /// Models registered for `task` whose inputs the space can supply,
    /// ranked by MSE then address. Models whose owner metadata cannot be
    /// found are skipped.
    pub fn query_models(&mut self, name: &str, task: &Iri, space: &SpaceProfile) -> Result<Vec<RankedModel>, NodeError> {
        self.node(name)?;
        let world = self.ledger.world();
        let mut hits = Vec::new();
        for addr in world.oracle.query_task(task.as_str()) {
            let entry = &world.oracle.shared_models[&addr];
            let Some(owner) = self.node_name_of(&entry.owner_node) else {
                continue;
            };
            let Ok(iri) = Iri::new(entry.model_iri.clone()) else {
                continue;
            };
            let Some(record) = self.nodes[owner].graph.model(&iri) else {
                continue;
            };
            if !record.input_features.iter().all(|f| space.available_sensors.contains(f)) {
                continue;
            }
            hits.push(RankedModel {
                addr: addr.clone(),
                model_iri: iri,
                task: task.clone(),
                input_features: record.input_features.clone(),
                mse: record.mse().unwrap_or(f64::INFINITY),
                mae: record.mae().unwrap_or(f64::INFINITY),
                owner_node: owner.to_owned(),
                owner_account: entry.owner_node.clone(),
                price: world.isl.price(&addr),
            });
        }
        hits.sort_by(RankedModel::rank_cmp);
        let node = self.node_mut(name)?;
        for h in &hits {
            if h.owner_node != node.node_id {
                node.known_remote.insert(h.addr.clone(), h.owner_node.clone());
            }
        }
        Ok(hits)
    }

    /// Consumer-side retrieval from the resource owner, verifying the bytes
    /// against `addr`.
    pub fn retrieve(&self, name: &str, addr: &ContentAddress, token: &str) -> Result<Vec<u8>, NodeError> {
        let caller = &self.node(name)?.account;
        let owner_account = self
            .ledger
            .world()
            .oracle
            .owner_of(addr)
            .ok_or_else(|| ContractError::UnknownResource(addr.to_string()))?;
        let owner = self
            .node_name_of(owner_account)
            .ok_or_else(|| NodeError::UnknownNode(owner_account.to_string()))?;
        let bytes = self.nodes[owner].serve(&self.ledger, caller, addr, token)?;
        let actual = ContentAddress::of(&bytes);
        if &actual != addr {
            return Err(NodeError::IntegrityFailure {
                addr: addr.clone(),
                actual,
            });
        }
        Ok(bytes)
    }

    /// Pays for, retrieves and verifies a shared model, then records it and
    /// its on-chain lineage in the consumer's graph. Payment happens first;
    /// a retrieval failure leaves the payment in place but the consumer's
    /// graph and store untouched.
    pub fn acquire_model(&mut self, name: &str, addr: &ContentAddress, expected_price: u64) -> Result<Acquired, NodeError> {
        let buyer = self.node(name)?.account.clone();
        if !self.ledger.world().oracle.shared_models.contains_key(addr) {
            return Err(ContractError::UnknownResource(addr.to_string()).into());
        }
        let receipt = self.submit(&buyer, ISL, "acquire", vec![addr.to_string()], expected_price)?;
        let token = receipt
            .return_value
            .split_once(' ')
            .map(|(t, _)| t.to_owned())
            .unwrap_or_default();
        let bytes = self.retrieve(name, addr, &token)?;
        let model = LinearModel::from_bytes(&bytes)?;

        let steps = self
            .ledger
            .world()
            .oracle
            .trace(addr)
            .ok_or_else(|| ContractError::UnknownResource(addr.to_string()))?;
        let rel = format!("acquired/{addr}.model");
        let mut graph = self.node(name)?.graph.clone();
        for step in &steps {
            self.cache_step(&mut graph, step, (&step.model_addr == addr).then_some(rel.as_str()))?;
        }
        let model_iri = Iri::new(steps.last().expect("trace is non-empty").model.model_iri.clone())?;

        let node = self.node_mut(name)?;
        node.store.put(&bytes)?;
        node.files.insert(rel, bytes);
        node.graph = graph;
        Ok(Acquired {
            addr: addr.clone(),
            model_iri,
            token,
            tx_id: receipt.tx_id,
            price: expected_price,
            model,
        })
    }

    fn cache_step(&self, graph: &mut KnowledgeGraph, step: &RegistryStep, model_uri: Option<&str>) -> Result<(), NodeError> {
        let me = graph.node_id().to_owned();
        let owner_graph = |account: &Address| {
            self.node_name_of(account)
                .map(|n| &self.nodes[n].graph)
                .ok_or_else(|| NodeError::UnknownNode(account.to_string()))
        };

        let d_iri = Iri::new(step.dataset.dataset_iri.clone())?;
        let d_owner = owner_graph(&step.dataset.owner_node)?;
        if d_owner.node_id() != me {
            let mut d = d_owner.dataset(&d_iri).ok_or_else(|| KgError::NotFound(d_iri.clone()))?;
            d.local_uri = format!("{REMOTE_PREFIX}{}", step.model.dataset_addr);
            graph.cache_remote_dataset(&d)?;
        }

        let m_iri = Iri::new(step.model.model_iri.clone())?;
        let m_owner = owner_graph(&step.model.owner_node)?;
        if m_owner.node_id() != me {
            let mut m = m_owner.model(&m_iri).ok_or_else(|| KgError::NotFound(m_iri.clone()))?;
            m.model_uri = match (model_uri, graph.model(&m_iri)) {
                (Some(uri), _) => uri.to_owned(),
                (None, Some(existing)) => existing.model_uri,
                (None, None) => format!("{REMOTE_PREFIX}{}", step.model_addr),
            };
            graph.cache_remote_model(&m)?;
        }
        Ok(())
    }

    /// Root-first on-chain lineage of a shared model.
    pub fn provenance(&self, addr: &ContentAddress) -> Result<Vec<ProvenanceStep>, NodeError> {
        let steps = self
            .ledger
            .world()
            .oracle
            .trace(addr)
            .ok_or_else(|| ContractError::UnknownResource(addr.to_string()))?;
        let label = |a: &Address| self.node_name_of(a).map_or_else(|| a.to_string(), str::to_owned);
        Ok(steps
            .into_iter()
            .map(|s| ProvenanceStep {
                model_owner: label(&s.model.owner_node),
                dataset_owner: label(&s.dataset.owner_node),
                dataset_addr: s.model.dataset_addr.clone(),
                dataset_iri: s.dataset.dataset_iri,
                dataset_tx: s.dataset.tx_id,
                model_iri: s.model.model_iri,
                model_tx: s.model.tx_id,
                model_addr: s.model_addr,
            })
            .collect())
    }

    /// Content addresses of every shared resource known to some node's graph.
    pub fn shared_addresses(&self) -> BTreeSet<ContentAddress> {
        let o = &self.ledger.world().oracle;
        o.shared_datasets.keys().chain(o.shared_models.keys()).cloned().collect()
    }
}

/// Resolves a task argument given as a bare name or a full IRI.
pub fn task_iri(task: &str) -> Result<Iri, NodeError> {
    let full = if task.starts_with(crate::kgstore::SCHEME) {
        task.to_owned()
    } else {
        vocab::task_iri(task)
    };
    if !vocab::is_known_task(&full) {
        return Err(KgError::MalformedDescriptor(format!("unknown task {task:?}")).into());
    }
    Ok(Iri::new(full)?)
}
