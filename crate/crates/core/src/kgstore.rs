//! Embedded triple store holding one node's knowledge graph.
//!
//! Datasets, models and spaces are stored purely as triples; the typed
//! descriptors below are views assembled from, and written back to, the
//! triple set. Shared resources owned by other nodes are cached under their
//! owner's namespace so dependency resolution never leaves the graph.
//!
//! The serialization is line oriented, one `<s> <p> <o> .` triple per line.
//! Literal objects are quoted; decimals carry a `^^<isl://schema/decimal>`
//! datatype suffix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::cas::ContentAddress;
use crate::depgraph::DependencyGraph;
use crate::mlsim::format_number;

pub const SCHEME: &str = "isl://";

/// Minimal ML-Schema style vocabulary.
pub mod vocab {
    pub const TYPE: &str = "isl://schema/type";
    pub const DATASET: &str = "isl://schema/Dataset";
    pub const MODEL: &str = "isl://schema/Model";
    pub const SPACE: &str = "isl://schema/Space";
    pub const OWNER_NODE: &str = "isl://schema/ownerNode";
    pub const FEATURE_SCHEMA: &str = "isl://schema/featureSchema";
    pub const LOCAL_URI: &str = "isl://schema/localUri";
    pub const CONTENT_ADDRESS: &str = "isl://schema/contentAddress";
    pub const TX_ID: &str = "isl://schema/txId";
    pub const TASK: &str = "isl://schema/task";
    pub const TRAINED_ON: &str = "isl://schema/trainedOn";
    pub const MODEL_URI: &str = "isl://schema/modelUri";
    pub const BASE_MODEL: &str = "isl://schema/baseModel";
    pub const INPUT_FEATURES: &str = "isl://schema/inputFeatures";
    pub const AVAILABLE_SENSOR: &str = "isl://schema/availableSensor";
    pub const EVAL_PREFIX: &str = "isl://schema/eval/";
    pub const DECIMAL: &str = "isl://schema/decimal";

    pub const TASK_PREFIX: &str = "isl://schema/task/";
    pub const TASKS: [&str; 2] = ["occupancy_detection", "energy_prediction"];

    /// Controlled feature vocabulary with unit tags.
    pub const FEATURES: [(&str, &str); 4] = [
        ("co2", "ppm"),
        ("temperature", "celsius"),
        ("humidity", "percent"),
        ("power", "watt"),
    ];

    pub fn unit_of(feature: &str) -> Option<&'static str> {
        FEATURES.iter().find(|(f, _)| *f == feature).map(|(_, u)| *u)
    }

    pub fn task_iri(name: &str) -> String {
        format!("{TASK_PREFIX}{name}")
    }

    pub fn is_known_task(iri: &str) -> bool {
        iri.strip_prefix(TASK_PREFIX).is_some_and(|t| TASKS.contains(&t))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KgError {
    #[error("MalformedIri: {0:?}")]
    MalformedIri(String),
    #[error("MalformedTriple: {0}")]
    MalformedTriple(String),
    #[error("DuplicateId: {0}")]
    DuplicateId(Iri),
    #[error("MalformedDescriptor: {0}")]
    MalformedDescriptor(String),
    #[error("UnresolvedDependency: {0}")]
    UnresolvedDependency(String),
    #[error("NotFound: {0}")]
    NotFound(Iri),
    #[error("AlreadyShared: {0}")]
    AlreadyShared(Iri),
    #[error("ParseError: line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// `isl://<node>/<path>` identifier.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Iri(String);

impl Iri {
    pub fn new(value: impl Into<String>) -> Result<Self, KgError> {
        let value = value.into();
        let ok = value
            .strip_prefix(SCHEME)
            .is_some_and(|rest| !rest.is_empty() && !rest.starts_with('/'))
            && !value
                .chars()
                .any(|c| c.is_whitespace() || c.is_control() || matches!(c, '<' | '>' | '"' | '\\'));
        if ok {
            Ok(Self(value))
        } else {
            Err(KgError::MalformedIri(value))
        }
    }

    /// `isl://<node>/<kind>/<local>`.
    pub fn entity(node: &str, kind: &str, local: &str) -> Result<Self, KgError> {
        Self::new(format!("{SCHEME}{node}/{kind}/{local}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Authority segment: the owning node id (or `schema`).
    pub fn namespace(&self) -> &str {
        let rest = &self.0[SCHEME.len()..];
        rest.split('/').next().unwrap_or(rest)
    }

    /// Last path segment.
    pub fn local_name(&self) -> &str {
        self.0.rsplit('/').next().unwrap_or(&self.0)
    }

    fn vocab(s: &'static str) -> Self {
        Self(s.to_owned())
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

/// Canonical decimal literal text.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decimal(String);

impl Decimal {
    pub fn from_f64(x: f64) -> Self {
        Self(format_number(x))
    }

    pub fn parse(s: &str) -> Option<Self> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(|_| Self(s.to_owned()))
    }

    pub fn value(&self) -> f64 {
        self.0.parse().expect("decimal literal is numeric")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Iri(Iri),
    Str(String),
    Decimal(Decimal),
}

impl Term {
    pub fn str(s: impl Into<String>) -> Self {
        Term::Str(s.into())
    }

    pub fn decimal(x: f64) -> Self {
        Term::Decimal(Decimal::from_f64(x))
    }

    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Term::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Term::Decimal(d) => Some(d.value()),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(i) => write!(f, "<{i}>"),
            Term::Str(s) => write!(f, "\"{}\"", escape(s)),
            Term::Decimal(d) => write!(f, "\"{}\"^^<{}>", d.0, vocab::DECIMAL),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
}

impl Triple {
    /// Builds a triple from raw subject/predicate strings.
    pub fn new(subject: &str, predicate: &str, object: Term) -> Result<Self, KgError> {
        let subject =
            Iri::new(subject).map_err(|e| KgError::MalformedTriple(format!("subject: {e}")))?;
        let predicate =
            Iri::new(predicate).map_err(|e| KgError::MalformedTriple(format!("predicate: {e}")))?;
        Ok(Self {
            subject,
            predicate,
            object,
        })
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}> <{}> {} .", self.subject, self.predicate, self.object)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

/// A feature name with its unit tag.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Feature {
    pub name: String,
    pub unit: String,
}

impl Feature {
    /// Feature from the controlled vocabulary.
    pub fn known(name: &str) -> Option<Self> {
        vocab::unit_of(name).map(|unit| Self {
            name: name.to_owned(),
            unit: unit.to_owned(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetDescriptor {
    pub id: Iri,
    pub owner_node: String,
    pub feature_schema: Vec<Feature>,
    pub local_uri: String,
    pub shared: bool,
    pub content_address: Option<ContentAddress>,
    pub tx_id: Option<String>,
}

impl DatasetDescriptor {
    /// Unshared local dataset with the given controlled-vocabulary features.
    pub fn local(id: Iri, owner_node: &str, features: &[&str], local_uri: &str) -> Result<Self, KgError> {
        let feature_schema = features
            .iter()
            .map(|f| {
                Feature::known(f)
                    .ok_or_else(|| KgError::MalformedDescriptor(format!("unknown feature {f:?}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            id,
            owner_node: owner_node.to_owned(),
            feature_schema,
            local_uri: local_uri.to_owned(),
            shared: false,
            content_address: None,
            tx_id: None,
        })
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_schema.iter().map(|f| f.name.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelRecord {
    pub id: Iri,
    pub task: Iri,
    pub dataset: Iri,
    pub model_uri: String,
    pub base_model: Option<Iri>,
    pub input_features: Vec<String>,
    pub eval_measures: BTreeMap<String, f64>,
    pub owner_node: String,
    pub shared: bool,
    pub content_address: Option<ContentAddress>,
    pub tx_id: Option<String>,
}

impl ModelRecord {
    pub fn mse(&self) -> Option<f64> {
        self.eval_measures.get("MSE").copied()
    }

    pub fn mae(&self) -> Option<f64> {
        self.eval_measures.get("MAE").copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpaceProfile {
    pub id: Iri,
    pub available_sensors: BTreeSet<String>,
    pub node: String,
}

impl SpaceProfile {
    pub fn new(id: Iri, node: &str, sensors: &[&str]) -> Result<Self, KgError> {
        for s in sensors {
            if vocab::unit_of(s).is_none() {
                return Err(KgError::MalformedDescriptor(format!("unknown sensor {s:?}")));
            }
        }
        Ok(Self {
            id,
            available_sensors: sensors.iter().map(|s| s.to_string()).collect(),
            node: node.to_owned(),
        })
    }
}

/// Either kind of shareable resource.
#[derive(Clone, Debug, PartialEq)]
pub enum Resource {
    Dataset(DatasetDescriptor),
    Model(ModelRecord),
}

impl Resource {
    pub fn id(&self) -> &Iri {
        match self {
            Resource::Dataset(d) => &d.id,
            Resource::Model(m) => &m.id,
        }
    }

    pub fn owner_node(&self) -> &str {
        match self {
            Resource::Dataset(d) => &d.owner_node,
            Resource::Model(m) => &m.owner_node,
        }
    }

    pub fn content_address(&self) -> Option<&ContentAddress> {
        match self {
            Resource::Dataset(d) => d.content_address.as_ref(),
            Resource::Model(m) => m.content_address.as_ref(),
        }
    }

    pub fn tx_id(&self) -> Option<&str> {
        match self {
            Resource::Dataset(d) => d.tx_id.as_deref(),
            Resource::Model(m) => m.tx_id.as_deref(),
        }
    }

    pub fn is_shared(&self) -> bool {
        match self {
            Resource::Dataset(d) => d.shared,
            Resource::Model(m) => m.shared,
        }
    }
}

/// Knowledge graph of one node.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct KnowledgeGraph {
    node_id: String,
    // subject -> (predicate, object)
    subjects: BTreeMap<Iri, BTreeSet<(Iri, Term)>>,
}

fn features_literal(features: &[Feature]) -> String {
    features
        .iter()
        .map(|f| format!("{}:{}", f.name, f.unit))
        .collect::<Vec<_>>()
        .join(",")
}

fn split_list(s: &str) -> Vec<&str> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(',').collect()
    }
}

impl KnowledgeGraph {
    pub fn new(node_id: &str) -> Self {
        Self {
            node_id: node_id.to_owned(),
            subjects: BTreeMap::new(),
        }
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn len(&self) -> usize {
        self.subjects.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.subjects
            .get(&t.subject)
            .is_some_and(|po| po.contains(&(t.predicate.clone(), t.object.clone())))
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.subjects.iter().flat_map(|(s, po)| {
            po.iter().map(move |(p, o)| Triple {
                subject: s.clone(),
                predicate: p.clone(),
                object: o.clone(),
            })
        })
    }

    pub fn triple_set(&self) -> BTreeSet<Triple> {
        self.triples().collect()
    }

    /// Inserts triples with set semantics, returning how many were new.
    pub fn assert_triples(&mut self, triples: impl IntoIterator<Item = Triple>) -> usize {
        triples
            .into_iter()
            .filter(|t| {
                self.subjects
                    .entry(t.subject.clone())
                    .or_default()
                    .insert((t.predicate.clone(), t.object.clone()))
            })
            .count()
    }

    fn has_subject(&self, id: &Iri) -> bool {
        self.subjects.contains_key(id)
    }

    fn objects<'a>(&'a self, s: &Iri, p: &'a str) -> impl Iterator<Item = &'a Term> + 'a {
        self.subjects
            .get(s)
            .into_iter()
            .flat_map(move |po| po.iter().filter(move |(pred, _)| pred.as_str() == p).map(|(_, o)| o))
    }

    fn object<'a>(&'a self, s: &Iri, p: &'a str) -> Option<&'a Term> {
        self.objects(s, p).next()
    }

    fn is_a(&self, s: &Iri, class: &str) -> bool {
        self.objects(s, vocab::TYPE)
            .any(|o| o.as_iri().is_some_and(|i| i.as_str() == class))
    }

    fn subjects_of_type<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a Iri> + 'a {
        self.subjects.keys().filter(move |s| self.is_a(s, class))
    }

    fn string_prop(&self, s: &Iri, p: &str) -> Option<String> {
        self.object(s, p).and_then(Term::as_str).map(str::to_owned)
    }

    fn sharing_props(&self, s: &Iri) -> (Option<ContentAddress>, Option<String>) {
        let addr = self
            .string_prop(s, vocab::CONTENT_ADDRESS)
            .and_then(|a| ContentAddress::parse(&a).ok());
        (addr, self.string_prop(s, vocab::TX_ID))
    }

    fn put(&mut self, s: &Iri, p: &'static str, o: Term) {
        self.subjects
            .entry(s.clone())
            .or_default()
            .insert((Iri::vocab(p), o));
    }

    fn is_dataset(&self, id: &Iri) -> bool {
        self.is_a(id, vocab::DATASET)
    }

    fn is_model(&self, id: &Iri) -> bool {
        self.is_a(id, vocab::MODEL)
    }

    pub fn dataset(&self, id: &Iri) -> Option<DatasetDescriptor> {
        if !self.is_dataset(id) {
            return None;
        }
        let feature_schema = split_list(&self.string_prop(id, vocab::FEATURE_SCHEMA).unwrap_or_default())
            .into_iter()
            .map(|f| {
                let (name, unit) = f.split_once(':').unwrap_or((f, ""));
                Feature {
                    name: name.to_owned(),
                    unit: unit.to_owned(),
                }
            })
            .collect();
        let (content_address, tx_id) = self.sharing_props(id);
        Some(DatasetDescriptor {
            id: id.clone(),
            owner_node: self.string_prop(id, vocab::OWNER_NODE).unwrap_or_default(),
            feature_schema,
            local_uri: self.string_prop(id, vocab::LOCAL_URI).unwrap_or_default(),
            shared: content_address.is_some() && tx_id.is_some(),
            content_address,
            tx_id,
        })
    }

    pub fn model(&self, id: &Iri) -> Option<ModelRecord> {
        if !self.is_model(id) {
            return None;
        }
        let iri = |p| self.object(id, p).and_then(Term::as_iri).cloned();
        let eval_measures = self.subjects[id]
            .iter()
            .filter_map(|(p, o)| {
                let name = p.as_str().strip_prefix(vocab::EVAL_PREFIX)?;
                Some((name.to_owned(), o.as_f64()?))
            })
            .collect();
        let (content_address, tx_id) = self.sharing_props(id);
        Some(ModelRecord {
            id: id.clone(),
            task: iri(vocab::TASK)?,
            dataset: iri(vocab::TRAINED_ON)?,
            model_uri: self.string_prop(id, vocab::MODEL_URI).unwrap_or_default(),
            base_model: iri(vocab::BASE_MODEL),
            input_features: split_list(&self.string_prop(id, vocab::INPUT_FEATURES).unwrap_or_default())
                .into_iter()
                .map(str::to_owned)
                .collect(),
            eval_measures,
            owner_node: self.string_prop(id, vocab::OWNER_NODE).unwrap_or_default(),
            shared: content_address.is_some() && tx_id.is_some(),
            content_address,
            tx_id,
        })
    }

    pub fn resource(&self, id: &Iri) -> Option<Resource> {
        self.dataset(id)
            .map(Resource::Dataset)
            .or_else(|| self.model(id).map(Resource::Model))
    }

    fn check_sharing(shared: bool, addr: &Option<ContentAddress>, tx: &Option<String>) -> Result<(), KgError> {
        if shared != (addr.is_some() && tx.is_some()) || (!shared && (addr.is_some() || tx.is_some())) {
            return Err(KgError::MalformedDescriptor(
                "shared must hold exactly when content address and tx id are both present".into(),
            ));
        }
        Ok(())
    }

    fn write_dataset(&mut self, d: &DatasetDescriptor) {
        let id = &d.id;
        self.put(id, vocab::TYPE, Term::Iri(Iri::vocab(vocab::DATASET)));
        self.put(id, vocab::OWNER_NODE, Term::str(&d.owner_node));
        self.put(id, vocab::FEATURE_SCHEMA, Term::str(features_literal(&d.feature_schema)));
        self.put(id, vocab::LOCAL_URI, Term::str(&d.local_uri));
        if let (Some(addr), Some(tx)) = (&d.content_address, &d.tx_id) {
            self.put(id, vocab::CONTENT_ADDRESS, Term::str(addr.as_str()));
            self.put(id, vocab::TX_ID, Term::str(tx));
        }
    }

    fn check_dataset(&self, d: &DatasetDescriptor) -> Result<(), KgError> {
        if self.has_subject(&d.id) {
            return Err(KgError::DuplicateId(d.id.clone()));
        }
        Self::check_sharing(d.shared, &d.content_address, &d.tx_id)?;
        if d.feature_schema.is_empty() {
            return Err(KgError::MalformedDescriptor("empty feature schema".into()));
        }
        for f in &d.feature_schema {
            if vocab::unit_of(&f.name) != Some(f.unit.as_str()) {
                return Err(KgError::MalformedDescriptor(format!(
                    "feature {}:{} not in vocabulary",
                    f.name, f.unit
                )));
            }
        }
        Ok(())
    }

    /// Adds an unshared dataset owned by this node.
    pub fn register_dataset(&mut self, d: &DatasetDescriptor) -> Result<Iri, KgError> {
        self.check_dataset(d)?;
        if d.shared {
            return Err(KgError::MalformedDescriptor(
                "datasets are registered unshared and shared through the node workflow".into(),
            ));
        }
        if d.owner_node != self.node_id {
            return Err(KgError::MalformedDescriptor(format!(
                "local dataset must be owned by {}",
                self.node_id
            )));
        }
        self.write_dataset(d);
        Ok(d.id.clone())
    }

    /// Caches a shared dataset owned by another node. Re-caching an identical
    /// descriptor is a no-op.
    pub fn cache_remote_dataset(&mut self, d: &DatasetDescriptor) -> Result<Iri, KgError> {
        if self.dataset(&d.id).as_ref() == Some(d) {
            return Ok(d.id.clone());
        }
        self.check_dataset(d)?;
        if !d.shared || d.owner_node == self.node_id {
            return Err(KgError::MalformedDescriptor(
                "only shared datasets owned by other nodes can be cached".into(),
            ));
        }
        self.write_dataset(d);
        Ok(d.id.clone())
    }

    fn check_model(&self, m: &ModelRecord) -> Result<(), KgError> {
        if self.has_subject(&m.id) {
            return Err(KgError::DuplicateId(m.id.clone()));
        }
        Self::check_sharing(m.shared, &m.content_address, &m.tx_id)?;
        if !vocab::is_known_task(m.task.as_str()) {
            return Err(KgError::MalformedDescriptor(format!("unknown task {}", m.task)));
        }
        if m.input_features.is_empty() || m.input_features.iter().any(|f| vocab::unit_of(f).is_none()) {
            return Err(KgError::MalformedDescriptor(format!(
                "input features {:?} not in vocabulary",
                m.input_features
            )));
        }
        for (name, v) in &m.eval_measures {
            if !(v.is_finite() && *v >= 0.0) || name.is_empty() || Iri::new(format!("{}{name}", vocab::EVAL_PREFIX)).is_err() {
                return Err(KgError::MalformedDescriptor(format!("bad eval measure {name}={v}")));
            }
        }
        if !self.is_dataset(&m.dataset) {
            return Err(KgError::UnresolvedDependency(format!("dataset {}", m.dataset)));
        }
        if let Some(base) = &m.base_model {
            if !self.is_model(base) {
                return Err(KgError::UnresolvedDependency(format!("base model {base}")));
            }
        }
        Ok(())
    }

    fn write_model(&mut self, m: &ModelRecord) {
        let id = &m.id;
        self.put(id, vocab::TYPE, Term::Iri(Iri::vocab(vocab::MODEL)));
        self.put(id, vocab::TASK, Term::Iri(m.task.clone()));
        self.put(id, vocab::TRAINED_ON, Term::Iri(m.dataset.clone()));
        self.put(id, vocab::MODEL_URI, Term::str(&m.model_uri));
        if let Some(base) = &m.base_model {
            self.put(id, vocab::BASE_MODEL, Term::Iri(base.clone()));
        }
        self.put(id, vocab::INPUT_FEATURES, Term::str(m.input_features.join(",")));
        self.put(id, vocab::OWNER_NODE, Term::str(&m.owner_node));
        for (name, v) in &m.eval_measures {
            let p = Iri::new(format!("{}{name}", vocab::EVAL_PREFIX)).expect("checked eval name");
            self.subjects
                .entry(id.clone())
                .or_default()
                .insert((p, Term::decimal(*v)));
        }
        if let (Some(addr), Some(tx)) = (&m.content_address, &m.tx_id) {
            self.put(id, vocab::CONTENT_ADDRESS, Term::str(addr.as_str()));
            self.put(id, vocab::TX_ID, Term::str(tx));
        }
    }

    /// Adds an unshared model owned by this node. Its dataset and base model
    /// must already be in the graph, locally or as cached remote resources.
    pub fn register_model(&mut self, m: &ModelRecord) -> Result<Iri, KgError> {
        self.check_model(m)?;
        if m.shared || m.owner_node != self.node_id {
            return Err(KgError::MalformedDescriptor(
                "models are registered unshared and owned by this node".into(),
            ));
        }
        self.write_model(m);
        Ok(m.id.clone())
    }

    /// Caches a shared model owned by another node. Re-caching an identical
    /// record is a no-op.
    pub fn cache_remote_model(&mut self, m: &ModelRecord) -> Result<Iri, KgError> {
        if let Some(existing) = self.model(&m.id) {
            let mut same = existing.clone();
            same.model_uri = m.model_uri.clone();
            same.eval_measures = m.eval_measures.clone();
            if same == *m {
                // Refresh the locator when bytes become available locally.
                if existing.model_uri != m.model_uri {
                    let old = (Iri::vocab(vocab::MODEL_URI), Term::str(&existing.model_uri));
                    self.subjects.get_mut(&m.id).expect("existing model").remove(&old);
                    self.put(&m.id, vocab::MODEL_URI, Term::str(&m.model_uri));
                }
                return Ok(m.id.clone());
            }
        }
        self.check_model(m)?;
        if !m.shared || m.owner_node == self.node_id {
            return Err(KgError::MalformedDescriptor(
                "only shared models owned by other nodes can be cached".into(),
            ));
        }
        self.write_model(m);
        Ok(m.id.clone())
    }

    pub fn register_space(&mut self, s: &SpaceProfile) -> Result<Iri, KgError> {
        if self.has_subject(&s.id) {
            return Err(KgError::DuplicateId(s.id.clone()));
        }
        self.put(&s.id, vocab::TYPE, Term::Iri(Iri::vocab(vocab::SPACE)));
        self.put(&s.id, vocab::OWNER_NODE, Term::str(&s.node));
        for sensor in &s.available_sensors {
            self.put(&s.id, vocab::AVAILABLE_SENSOR, Term::str(sensor));
        }
        Ok(s.id.clone())
    }

    pub fn space(&self, id: &Iri) -> Option<SpaceProfile> {
        if !self.is_a(id, vocab::SPACE) {
            return None;
        }
        Some(SpaceProfile {
            id: id.clone(),
            available_sensors: self
                .objects(id, vocab::AVAILABLE_SENSOR)
                .filter_map(Term::as_str)
                .map(str::to_owned)
                .collect(),
            node: self.string_prop(id, vocab::OWNER_NODE).unwrap_or_default(),
        })
    }

    /// Every dataset in the graph, local and cached, ordered by id.
    pub fn datasets(&self) -> Vec<DatasetDescriptor> {
        self.subjects_of_type(vocab::DATASET)
            .filter_map(|id| self.dataset(id))
            .collect()
    }

    /// Every model in the graph, local and cached, ordered by id.
    pub fn models(&self) -> Vec<ModelRecord> {
        self.subjects_of_type(vocab::MODEL)
            .filter_map(|id| self.model(id))
            .collect()
    }

    pub fn local_datasets(&self) -> Vec<DatasetDescriptor> {
        self.datasets()
            .into_iter()
            .filter(|d| d.owner_node == self.node_id)
            .collect()
    }

    pub fn shared_local_datasets(&self) -> Vec<DatasetDescriptor> {
        self.local_datasets().into_iter().filter(|d| d.shared).collect()
    }

    pub fn local_models(&self) -> Vec<ModelRecord> {
        self.models()
            .into_iter()
            .filter(|m| m.owner_node == self.node_id)
            .collect()
    }

    pub fn shared_local_models(&self) -> Vec<ModelRecord> {
        self.local_models().into_iter().filter(|m| m.shared).collect()
    }

    /// Models (local and cached) whose task is `task`, ordered by id.
    pub fn query_models_by_task(&self, task: &Iri) -> Vec<ModelRecord> {
        self.models().into_iter().filter(|m| &m.task == task).collect()
    }

    /// Resource with the given content address, if any.
    pub fn find_by_address(&self, addr: &ContentAddress) -> Option<Resource> {
        let lit = (Iri::vocab(vocab::CONTENT_ADDRESS), Term::str(addr.as_str()));
        self.subjects
            .iter()
            .find(|(_, po)| po.contains(&lit))
            .and_then(|(s, _)| self.resource(s))
    }

    /// Records that a local resource has been shared.
    pub fn mark_shared(&mut self, id: &Iri, addr: &ContentAddress, tx_id: &str) -> Result<Resource, KgError> {
        let resource = self.resource(id).ok_or_else(|| KgError::NotFound(id.clone()))?;
        if resource.is_shared() {
            return Err(KgError::AlreadyShared(id.clone()));
        }
        self.put(id, vocab::CONTENT_ADDRESS, Term::str(addr.as_str()));
        self.put(id, vocab::TX_ID, Term::str(tx_id));
        Ok(self.resource(id).expect("resource still present"))
    }

    /// Root-first list of the model and its base models as known to this graph.
    pub fn model_chain(&self, id: &Iri) -> Result<Vec<ModelRecord>, KgError> {
        let mut chain = Vec::new();
        let mut current = Some(id.clone());
        while let Some(m) = current {
            let record = self
                .model(&m)
                .ok_or_else(|| KgError::UnresolvedDependency(format!("model {m}")))?;
            if chain.len() > self.subjects.len() {
                return Err(KgError::UnresolvedDependency(format!("cyclic base chain at {m}")));
            }
            current = record.base_model.clone();
            chain.push(record);
        }
        chain.reverse();
        Ok(chain)
    }

    /// Dependency DAG of every model in the graph, keyed by model IRI with
    /// dataset IRIs as edge labels. Models whose base is unknown are skipped.
    pub fn dependency_graph(&self) -> DependencyGraph {
        let mut g = DependencyGraph::new();
        let mut pending = self.models();
        loop {
            let before = pending.len();
            pending.retain(|m| {
                let base = m.base_model.as_ref().map(Iri::as_str);
                if base.is_some_and(|b| !g.contains(b)) {
                    return true;
                }
                g.add_model(m.id.as_str(), base, m.dataset.as_str())
                    .expect("model ids are unique subjects");
                false
            });
            if pending.is_empty() || pending.len() == before {
                break;
            }
        }
        g
    }

    /// One triple per line, sorted.
    pub fn export(&self) -> Vec<u8> {
        let mut out = String::new();
        for t in self.triples() {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn import(node_id: &str, bytes: &[u8]) -> Result<Self, KgError> {
        let text = std::str::from_utf8(bytes).map_err(|e| KgError::Parse {
            line: 0,
            reason: e.to_string(),
        })?;
        let mut g = Self::new(node_id);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t = parse_triple_line(line).map_err(|reason| KgError::Parse { line: i + 1, reason })?;
            g.assert_triples([t]);
        }
        Ok(g)
    }
}

struct Cursor<'a> {
    s: &'a str,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        self.s = self.s.trim_start_matches([' ', '\t']);
    }

    fn iri(&mut self) -> Result<Iri, String> {
        self.skip_ws();
        let rest = self.s.strip_prefix('<').ok_or("expected `<`")?;
        let end = rest.find('>').ok_or("unterminated IRI")?;
        let iri = Iri::new(&rest[..end]).map_err(|e| e.to_string())?;
        self.s = &rest[end + 1..];
        Ok(iri)
    }

    fn literal(&mut self) -> Result<String, String> {
        let mut chars = self.s.char_indices();
        let mut out = String::new();
        chars.next(); // opening quote
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.s = &self.s[i + 1..];
                    return Ok(out);
                }
                '\\' => match chars.next().map(|(_, c)| c) {
                    Some('\\') => out.push('\\'),
                    Some('"') => out.push('"'),
                    Some('n') => out.push('\n'),
                    Some('r') => out.push('\r'),
                    Some('t') => out.push('\t'),
                    other => return Err(format!("bad escape {other:?}")),
                },
                c => out.push(c),
            }
        }
        Err("unterminated literal".into())
    }

    fn term(&mut self) -> Result<Term, String> {
        self.skip_ws();
        if self.s.starts_with('<') {
            return self.iri().map(Term::Iri);
        }
        if !self.s.starts_with('"') {
            return Err("expected IRI or literal object".into());
        }
        let lexical = self.literal()?;
        if let Some(rest) = self.s.strip_prefix("^^") {
            self.s = rest;
            let dt = self.iri()?;
            if dt.as_str() != vocab::DECIMAL {
                return Err(format!("unsupported datatype {dt}"));
            }
            return Decimal::parse(&lexical)
                .map(Term::Decimal)
                .ok_or_else(|| format!("bad decimal {lexical:?}"));
        }
        Ok(Term::Str(lexical))
    }
}

fn parse_triple_line(line: &str) -> Result<Triple, String> {
    let mut c = Cursor { s: line };
    let subject = c.iri()?;
    let predicate = c.iri()?;
    let object = c.term()?;
    c.skip_ws();
    if c.s.trim_end() != "." {
        return Err("expected terminating ` .`".into());
    }
    Ok(Triple {
        subject,
        predicate,
        object,
    })
}
