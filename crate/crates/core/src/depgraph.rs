//! Model dependency DAG.
//!
//! Vertices are models; every model has exactly one incoming edge, from its
//! base model or from the null root, labelled with the dataset the model was
//! trained or fine-tuned on. The graph is kept as a child -> parent map, so a
//! vertex with two parents cannot be represented at all. Edge lists coming
//! from outside (the `<child> <parent|NULL> <dataset>` text format) go
//! through [`validate_edges`] before they become a graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Token used for the null root in the edge-list format.
pub const NULL_PARENT: &str = "NULL";

/// Incoming edge of a model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    /// Base model, `None` for the null root.
    pub parent: Option<String>,
    pub dataset: String,
}

/// One line of an edge list, possibly invalid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeRecord {
    pub child: String,
    pub parent: Option<String>,
    pub dataset: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DepGraphError {
    #[error("DuplicateModel: {0}")]
    DuplicateModel(String),
    #[error("UnknownBase: {0}")]
    UnknownBase(String),
    #[error("UnknownModel: {0}")]
    UnknownModel(String),
    #[error("ParseError: line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid graph: {0}")]
    Invalid(Violation),
}

/// First structural problem found in a graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Models on a parent cycle, starting from the smallest id.
    Cycle(Vec<String>),
    /// A model with more than one incoming edge.
    InDegree { model: String, parents: usize },
    /// A parent that is not itself a vertex.
    UnknownParent { model: String, parent: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle(models) => write!(f, "cycle through {}", models.join(" -> ")),
            Violation::InDegree { model, parents } => {
                write!(f, "in-degree: {model} has {parents} incoming edges")
            }
            Violation::UnknownParent { model, parent } => {
                write!(f, "unknown parent {parent} of {model}")
            }
        }
    }
}

/// One step of a root-to-model chain.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ChainStep {
    pub model: String,
    pub dataset: String,
}

/// Root-first chain `NULL -D0-> M0 -D1-> M1 ... -Dn-> Mn`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ProvenanceChain {
    pub steps: Vec<ChainStep>,
}

impl ProvenanceChain {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.model.as_str())
    }
}

/// Every asset a model depends on, the model included.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Closure {
    pub models: BTreeSet<String>,
    pub datasets: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    edges: BTreeMap<String, Edge>,
}

impl DependencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from a raw parent map without checking it. Used to
    /// reconstruct graphs from untrusted sources before [`Self::validate`].
    pub fn from_parent_map_unchecked(edges: BTreeMap<String, Edge>) -> Self {
        Self { edges }
    }

    /// Builds a graph from an edge list, rejecting it on the first violation.
    /// Edges may appear in any order.
    pub fn from_edges(records: &[EdgeRecord]) -> Result<Self, DepGraphError> {
        validate_edges(records).map_err(DepGraphError::Invalid)?;
        let edges = records
            .iter()
            .map(|r| {
                (
                    r.child.clone(),
                    Edge {
                        parent: r.parent.clone(),
                        dataset: r.dataset.clone(),
                    },
                )
            })
            .collect();
        Ok(Self { edges })
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, model: &str) -> bool {
        self.edges.contains_key(model)
    }

    pub fn edge(&self, model: &str) -> Option<&Edge> {
        self.edges.get(model)
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.edges.keys().map(String::as_str)
    }

    /// Adds `model` with an incoming edge from `base` (or the null root)
    /// labelled `dataset`.
    pub fn add_model(
        &mut self,
        model: &str,
        base: Option<&str>,
        dataset: &str,
    ) -> Result<(), DepGraphError> {
        if self.edges.contains_key(model) {
            return Err(DepGraphError::DuplicateModel(model.to_owned()));
        }
        if let Some(base) = base {
            if !self.edges.contains_key(base) {
                return Err(DepGraphError::UnknownBase(base.to_owned()));
            }
        }
        self.edges.insert(
            model.to_owned(),
            Edge {
                parent: base.map(str::to_owned),
                dataset: dataset.to_owned(),
            },
        );
        Ok(())
    }

    /// Root-first chain ending at `model`.
    pub fn trace(&self, model: &str) -> Result<ProvenanceChain, DepGraphError> {
        let mut steps = Vec::new();
        let mut current = Some(model.to_owned());
        while let Some(id) = current {
            let edge = self
                .edges
                .get(&id)
                .ok_or_else(|| match steps.is_empty() {
                    true => DepGraphError::UnknownModel(id.clone()),
                    false => DepGraphError::Invalid(Violation::UnknownParent {
                        model: steps.last().map(|s: &ChainStep| s.model.clone()).unwrap_or_default(),
                        parent: id.clone(),
                    }),
                })?;
            if steps.len() > self.edges.len() {
                return Err(DepGraphError::Invalid(self.find_cycle().unwrap_or(Violation::Cycle(vec![id]))));
            }
            steps.push(ChainStep {
                model: id,
                dataset: edge.dataset.clone(),
            });
            current = edge.parent.clone();
        }
        steps.reverse();
        Ok(ProvenanceChain { steps })
    }

    /// Number of edges between the null root and `model`.
    pub fn depth(&self, model: &str) -> Result<usize, DepGraphError> {
        self.trace(model).map(|c| c.len())
    }

    /// Ancestors of `model` (itself included) and every dataset on its chain.
    pub fn required_closure(&self, model: &str) -> Result<Closure, DepGraphError> {
        let chain = self.trace(model)?;
        let mut closure = Closure::default();
        for step in chain.steps {
            closure.models.insert(step.model);
            closure.datasets.insert(step.dataset);
        }
        Ok(closure)
    }

    /// Checks acyclicity and that every parent is a vertex. In-degree is
    /// structural here; [`validate_edges`] checks it for raw edge lists.
    pub fn validate(&self) -> Result<(), Violation> {
        for (model, edge) in &self.edges {
            if let Some(parent) = &edge.parent {
                if !self.edges.contains_key(parent) {
                    return Err(Violation::UnknownParent {
                        model: model.clone(),
                        parent: parent.clone(),
                    });
                }
            }
        }
        match self.find_cycle() {
            Some(v) => Err(v),
            None => Ok(()),
        }
    }

    fn find_cycle(&self) -> Option<Violation> {
        // 0 = unvisited, 1 = on the current walk, 2 = known to reach the root
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        for start in self.edges.keys() {
            if state.get(start.as_str()).copied().unwrap_or(0) == 2 {
                continue;
            }
            let mut walk: Vec<&str> = Vec::new();
            let mut current = Some(start.as_str());
            while let Some(id) = current {
                match state.get(id).copied().unwrap_or(0) {
                    2 => break,
                    1 => {
                        let pos = walk.iter().position(|m| *m == id).unwrap_or(0);
                        let mut cycle: Vec<String> =
                            walk[pos..].iter().map(|s| s.to_string()).collect();
                        let min = (0..cycle.len()).min_by_key(|&i| &cycle[i]).unwrap_or(0);
                        cycle.rotate_left(min);
                        return Some(Violation::Cycle(cycle));
                    }
                    _ => {}
                }
                state.insert(id, 1);
                walk.push(id);
                current = self.edges.get(id).and_then(|e| e.parent.as_deref());
            }
            for id in walk {
                state.insert(id, 2);
            }
        }
        None
    }

    /// `<child> <parent|NULL> <dataset>` lines, sorted by child.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (child, edge) in &self.edges {
            out.push_str(child);
            out.push(' ');
            out.push_str(edge.parent.as_deref().unwrap_or(NULL_PARENT));
            out.push(' ');
            out.push_str(&edge.dataset);
            out.push('\n');
        }
        out
    }
}

/// Parses the edge-list format. Blank lines and `#` comments are skipped.
pub fn parse_edge_list(text: &str) -> Result<Vec<EdgeRecord>, DepGraphError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [child, parent, dataset] = fields[..] else {
            return Err(DepGraphError::Parse {
                line: i + 1,
                reason: format!("expected 3 fields, found {}", fields.len()),
            });
        };
        if child == NULL_PARENT {
            return Err(DepGraphError::Parse {
                line: i + 1,
                reason: "NULL cannot be a child".into(),
            });
        }
        records.push(EdgeRecord {
            child: child.to_owned(),
            parent: (parent != NULL_PARENT).then(|| parent.to_owned()),
            dataset: dataset.to_owned(),
        });
    }
    Ok(records)
}

/// Checks a raw edge list: in-degree one per model, known parents, no cycles.
pub fn validate_edges(records: &[EdgeRecord]) -> Result<(), Violation> {
    let mut incoming: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *incoming.entry(r.child.as_str()).or_default() += 1;
    }
    if let Some((model, &parents)) = incoming.iter().find(|(_, &n)| n > 1) {
        return Err(Violation::InDegree {
            model: model.to_string(),
            parents,
        });
    }
    let graph = DependencyGraph::from_parent_map_unchecked(
        records
            .iter()
            .map(|r| {
                (
                    r.child.clone(),
                    Edge {
                        parent: r.parent.clone(),
                        dataset: r.dataset.clone(),
                    },
                )
            })
            .collect(),
    );
    graph.validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain3() -> DependencyGraph {
        let mut g = DependencyGraph::new();
        g.add_model("M0", None, "D0").unwrap();
        g.add_model("M1", Some("M0"), "D1").unwrap();
        g.add_model("M2", Some("M1"), "D2").unwrap();
        g
    }

    fn step(m: &str, d: &str) -> ChainStep {
        ChainStep {
            model: m.into(),
            dataset: d.into(),
        }
    }

    #[test]
    fn add_model_rules() {
        let mut g = DependencyGraph::new();
        g.add_model("M0", None, "D0").unwrap();
        g.add_model("M1", Some("M0"), "D1").unwrap();
        assert_eq!(g.depth("M1").unwrap(), 2);
        assert_eq!(
            g.add_model("M1", Some("M0"), "D1"),
            Err(DepGraphError::DuplicateModel("M1".into()))
        );
        assert_eq!(
            g.add_model("M9", Some("Mx"), "D1"),
            Err(DepGraphError::UnknownBase("Mx".into()))
        );
    }

    #[test]
    fn trace_is_root_first() {
        let g = chain3();
        assert_eq!(
            g.trace("M2").unwrap().steps,
            vec![step("M0", "D0"), step("M1", "D1"), step("M2", "D2")]
        );
        assert_eq!(g.trace("M0").unwrap().steps, vec![step("M0", "D0")]);
        assert_eq!(g.trace("Mx"), Err(DepGraphError::UnknownModel("Mx".into())));
    }

    #[test]
    fn closure_of_two_step_chain() {
        let g = chain3();
        let c = g.required_closure("M1").unwrap();
        assert_eq!(c.models, ["M0", "M1"].iter().map(|s| s.to_string()).collect());
        assert_eq!(c.datasets, ["D0", "D1"].iter().map(|s| s.to_string()).collect());
        let root = g.required_closure("M0").unwrap();
        assert_eq!(root.models.len(), 1);
        assert_eq!(root.datasets.len(), 1);
    }

    #[test]
    fn branched_closure_excludes_sibling() {
        let mut g = DependencyGraph::new();
        g.add_model("M0", None, "D0").unwrap();
        g.add_model("M1", Some("M0"), "D1").unwrap();
        g.add_model("M2", Some("M0"), "D2").unwrap();
        let c = g.required_closure("M1").unwrap();
        assert!(!c.models.contains("M2"));
        assert!(!c.datasets.contains("D2"));
    }

    #[test]
    fn dataset_reuse_is_valid() {
        let mut g = DependencyGraph::new();
        g.add_model("A", None, "D").unwrap();
        g.add_model("B", Some("A"), "D").unwrap();
        g.add_model("C", None, "D").unwrap();
        assert_eq!(g.validate(), Ok(()));
        assert_eq!(g.required_closure("B").unwrap().datasets.len(), 1);
    }

    #[test]
    fn validate_reports_cycle() {
        let mut edges = BTreeMap::new();
        edges.insert("A".to_string(), Edge { parent: Some("B".into()), dataset: "D".into() });
        edges.insert("B".to_string(), Edge { parent: Some("A".into()), dataset: "D".into() });
        let g = DependencyGraph::from_parent_map_unchecked(edges);
        assert_eq!(g.validate(), Err(Violation::Cycle(vec!["A".into(), "B".into()])));
        assert!(matches!(g.trace("A"), Err(DepGraphError::Invalid(Violation::Cycle(_)))));
    }

    #[test]
    fn validate_reports_in_degree() {
        let records = parse_edge_list("M0 NULL D0\nM1 M0 D1\nM1 NULL D2\n").unwrap();
        assert_eq!(
            validate_edges(&records),
            Err(Violation::InDegree { model: "M1".into(), parents: 2 })
        );
        assert!(DependencyGraph::from_edges(&records).is_err());
    }

    #[test]
    fn validate_reports_unknown_parent() {
        let records = parse_edge_list("M1 M0 D1\n").unwrap();
        assert_eq!(
            validate_edges(&records),
            Err(Violation::UnknownParent { model: "M1".into(), parent: "M0".into() })
        );
    }

    #[test]
    fn edge_list_round_trip() {
        let g = chain3();
        let text = g.to_edge_list();
        assert_eq!(text, "M0 NULL D0\nM1 M0 D1\nM2 M1 D2\n");
        let back = DependencyGraph::from_edges(&parse_edge_list(&text).unwrap()).unwrap();
        assert_eq!(back, g);
        assert!(parse_edge_list("a b").is_err());
        assert!(parse_edge_list("NULL a b").is_err());
    }

    /// Random forest: model i picks a parent among 0..i or the root.
    fn random_graph() -> impl Strategy<Value = DependencyGraph> {
        proptest::collection::vec((any::<prop::sample::Index>(), any::<bool>(), 0..5usize), 1..50)
            .prop_map(|spec| {
                let mut g = DependencyGraph::new();
                for (i, (pick, is_root, ds)) in spec.into_iter().enumerate() {
                    let base = (i > 0 && !is_root).then(|| format!("M{:02}", pick.index(i)));
                    g.add_model(&format!("M{i:02}"), base.as_deref(), &format!("D{ds}"))
                        .unwrap();
                }
                g
            })
    }

    /// Ancestors by brute force: a vertex is an ancestor of `m` if repeatedly
    /// following parents from `m` reaches it.
    fn brute_force_closure(g: &DependencyGraph, m: &str) -> Closure {
        let mut closure = Closure::default();
        for v in g.models() {
            let mut cur = Some(m.to_string());
            let mut hops = 0;
            while let Some(c) = cur {
                if c == v {
                    closure.models.insert(v.to_string());
                    closure.datasets.insert(g.edge(v).unwrap().dataset.clone());
                    break;
                }
                hops += 1;
                assert!(hops <= g.len());
                cur = g.edge(&c).unwrap().parent.clone();
            }
        }
        closure
    }

    proptest! {
        #[test]
        fn built_graphs_are_valid_and_closures_match(g in random_graph()) {
            prop_assert_eq!(g.validate(), Ok(()));
            for m in g.models() {
                let chain = g.trace(m).unwrap();
                prop_assert!(g.edge(&chain.steps[0].model).unwrap().parent.is_none());
                for w in chain.steps.windows(2) {
                    prop_assert_eq!(g.edge(&w[1].model).unwrap().parent.as_deref(), Some(w[0].model.as_str()));
                }
                prop_assert_eq!(chain.steps.last().unwrap().model.as_str(), m);
                prop_assert_eq!(g.required_closure(m).unwrap(), brute_force_closure(&g, m));
            }
            let back = DependencyGraph::from_edges(&parse_edge_list(&g.to_edge_list()).unwrap()).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
