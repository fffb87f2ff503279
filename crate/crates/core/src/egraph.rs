//! E-graph model, extraction-gym style JSON ingestion, and checks on
//! extractions (choice functions from e-classes to e-nodes).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde_json::{Map, Value};
use thiserror::Error;

/// Dense index of an e-node.
pub type NodeIdx = usize;
/// Dense index of an e-class.
pub type ClassIdx = usize;

#[derive(Debug, Error)]
pub enum EGraphError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing or invalid field `{0}`")]
    Field(String),
    #[error("duplicate e-node id `{0}`")]
    DuplicateNode(String),
    #[error("e-node `{node}` references unknown child node `{child}`")]
    UnknownChild { node: String, child: String },
    #[error("e-node `{node}` has negative cost {cost}")]
    NegativeCost { node: String, cost: f64 },
    #[error("e-node `{node}` has non-finite cost")]
    NonFiniteCost { node: String },
    #[error("root_eclasses is empty")]
    NoRoots,
    #[error("unknown e-class `{0}`")]
    UnknownClass(String),
    #[error("e-node `{node}` is listed under e-class `{listed}` but declares e-class `{declared}`")]
    ClassMismatch {
        node: String,
        listed: String,
        declared: String,
    },
}

/// An e-graph: e-nodes partitioned into e-classes, with a dependency relation
/// from e-nodes to e-classes, a set of root e-classes, and a cost per e-node.
///
/// Identifiers from the input are kept as opaque strings; everything downstream
/// works on the dense `NodeIdx` / `ClassIdx` indices assigned at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EGraph {
    node_names: Vec<String>,
    ops: Vec<String>,
    node_class: Vec<ClassIdx>,
    /// Children as listed in the input (node indices), kept for rendering.
    child_nodes: Vec<Vec<NodeIdx>>,
    /// Dependency classes of each node, sorted and deduplicated.
    deps: Vec<Vec<ClassIdx>>,
    costs: Vec<f64>,
    class_names: Vec<String>,
    class_nodes: Vec<Vec<NodeIdx>>,
    roots: Vec<ClassIdx>,
}

impl EGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Number of (node, class) dependency pairs, after deduplication.
    pub fn num_deps(&self) -> usize {
        self.deps.iter().map(Vec::len).sum()
    }

    pub fn node_name(&self, n: NodeIdx) -> &str {
        &self.node_names[n]
    }

    pub fn class_name(&self, c: ClassIdx) -> &str {
        &self.class_names[c]
    }

    pub fn op(&self, n: NodeIdx) -> &str {
        &self.ops[n]
    }

    pub fn class_of(&self, n: NodeIdx) -> ClassIdx {
        self.node_class[n]
    }

    pub fn deps(&self, n: NodeIdx) -> &[ClassIdx] {
        &self.deps[n]
    }

    pub fn children(&self, n: NodeIdx) -> &[NodeIdx] {
        &self.child_nodes[n]
    }

    pub fn cost(&self, n: NodeIdx) -> f64 {
        self.costs[n]
    }

    pub fn nodes_of(&self, c: ClassIdx) -> &[NodeIdx] {
        &self.class_nodes[c]
    }

    pub fn roots(&self) -> &[ClassIdx] {
        &self.roots
    }

    pub fn node_index(&self, name: &str) -> Option<NodeIdx> {
        self.node_names.iter().position(|n| n == name)
    }

    pub fn class_index(&self, name: &str) -> Option<ClassIdx> {
        self.class_names.iter().position(|n| n == name)
    }

    /// Returns a copy with every cost multiplied by `factor` (which must be
    /// finite and nonnegative).
    pub fn scale_costs(&self, factor: f64) -> EGraph {
        assert!(factor.is_finite() && factor >= 0.0);
        let mut g = self.clone();
        for c in &mut g.costs {
            *c *= factor;
        }
        g
    }

    /// Canonical JSON rendering in the same shape `parse_egraph` accepts.
    pub fn to_json(&self) -> Value {
        let mut nodes = Map::new();
        for n in 0..self.num_nodes() {
            let children: Vec<Value> = self.child_nodes[n]
                .iter()
                .map(|&c| Value::String(self.node_names[c].clone()))
                .collect();
            let mut obj = Map::new();
            obj.insert("op".into(), Value::String(self.ops[n].clone()));
            obj.insert("children".into(), Value::Array(children));
            obj.insert(
                "eclass".into(),
                Value::String(self.class_names[self.node_class[n]].clone()),
            );
            obj.insert("cost".into(), number(self.costs[n]));
            nodes.insert(self.node_names[n].clone(), Value::Object(obj));
        }
        let roots = self
            .roots
            .iter()
            .map(|&c| Value::String(self.class_names[c].clone()))
            .collect();
        let mut top = Map::new();
        top.insert("nodes".into(), Value::Object(nodes));
        top.insert("root_eclasses".into(), Value::Array(roots));
        Value::Object(top)
    }
}

pub(crate) fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// Parses extraction-gym style JSON:
///
/// ```json
/// { "nodes": { "n0": { "op": "+", "children": ["n1"], "eclass": "c0", "cost": 1.0 } },
///   "root_eclasses": ["c0"] }
/// ```
///
/// An optional `class_data` (or `classes`) object may list `nodes` per class;
/// when present, those lists must agree with each node's `eclass` field.
pub fn parse_egraph(text: &str) -> Result<EGraph, EGraphError> {
    let doc: Value = serde_json::from_str(text)?;
    let top = doc
        .as_object()
        .ok_or_else(|| EGraphError::Field("<top-level object>".into()))?;
    let nodes = top
        .get("nodes")
        .and_then(Value::as_object)
        .ok_or_else(|| EGraphError::Field("nodes".into()))?;

    let mut builder = EGraphBuilder::new();
    let mut pending_children: Vec<(NodeIdx, Vec<String>)> = Vec::with_capacity(nodes.len());

    for (name, node) in nodes {
        let obj = node
            .as_object()
            .ok_or_else(|| EGraphError::Field(format!("nodes.{name}")))?;
        let op = match obj.get("op") {
            Some(Value::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => String::new(),
        };
        let eclass = match obj.get("eclass") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(EGraphError::Field(format!("nodes.{name}.eclass"))),
        };
        let cost = match obj.get("cost") {
            Some(Value::Number(n)) => n
                .as_f64()
                .ok_or_else(|| EGraphError::NonFiniteCost { node: name.clone() })?,
            Some(Value::Null) => {
                return Err(EGraphError::NonFiniteCost { node: name.clone() });
            }
            None => 1.0,
            Some(_) => return Err(EGraphError::Field(format!("nodes.{name}.cost"))),
        };
        let children = match obj.get("children") {
            Some(Value::Array(items)) => items
                .iter()
                .map(|c| match c {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(EGraphError::Field(format!("nodes.{name}.children"))),
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
            Some(_) => return Err(EGraphError::Field(format!("nodes.{name}.children"))),
        };
        let class = builder.class(&eclass);
        let n = builder.add_node_raw(name, &op, class, cost)?;
        pending_children.push((n, children));
    }

    for (n, children) in pending_children {
        let mut idx = Vec::with_capacity(children.len());
        for child in children {
            let c = builder.node_lookup.get(&child).copied().ok_or_else(|| {
                EGraphError::UnknownChild {
                    node: builder.node_names[n].clone(),
                    child: child.clone(),
                }
            })?;
            idx.push(c);
        }
        builder.child_nodes[n] = Some(idx);
    }

    let class_listing = top
        .get("class_data")
        .or_else(|| top.get("classes"))
        .and_then(Value::as_object);
    if let Some(listing) = class_listing {
        for (cname, data) in listing {
            let Some(members) = data.get("nodes").and_then(Value::as_array) else {
                continue;
            };
            for m in members {
                let Some(mname) = m.as_str() else {
                    return Err(EGraphError::Field(format!("class_data.{cname}.nodes")));
                };
                let n = builder.node_lookup.get(mname).copied().ok_or_else(|| {
                    EGraphError::UnknownChild {
                        node: format!("class {cname}"),
                        child: mname.to_string(),
                    }
                })?;
                let declared = &builder.class_names[builder.node_class[n]];
                if declared != cname {
                    return Err(EGraphError::ClassMismatch {
                        node: mname.to_string(),
                        listed: cname.clone(),
                        declared: declared.clone(),
                    });
                }
            }
        }
    }

    let roots = top
        .get("root_eclasses")
        .and_then(Value::as_array)
        .ok_or_else(|| EGraphError::Field("root_eclasses".into()))?;
    if roots.is_empty() {
        return Err(EGraphError::NoRoots);
    }
    for r in roots {
        let name = match r {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(EGraphError::Field("root_eclasses".into())),
        };
        let c = builder
            .class_lookup
            .get(&name)
            .copied()
            .ok_or(EGraphError::UnknownClass(name))?;
        builder.add_root(c);
    }

    builder.build()
}

/// Incremental construction of an [`EGraph`].
///
/// Unlike [`parse_egraph`], the builder accepts an empty root set so that
/// validation fixtures without outputs can be expressed.
#[derive(Debug, Default)]
pub struct EGraphBuilder {
    node_names: Vec<String>,
    ops: Vec<String>,
    node_class: Vec<ClassIdx>,
    child_nodes: Vec<Option<Vec<NodeIdx>>>,
    child_classes: Vec<Vec<ClassIdx>>,
    costs: Vec<f64>,
    class_names: Vec<String>,
    node_lookup: HashMap<String, NodeIdx>,
    class_lookup: HashMap<String, ClassIdx>,
    roots: Vec<ClassIdx>,
}

impl EGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns an e-class name, creating the class if needed.
    pub fn class(&mut self, name: &str) -> ClassIdx {
        if let Some(&c) = self.class_lookup.get(name) {
            return c;
        }
        let c = self.class_names.len();
        self.class_names.push(name.to_string());
        self.class_lookup.insert(name.to_string(), c);
        c
    }

    fn add_node_raw(
        &mut self,
        name: &str,
        op: &str,
        class: ClassIdx,
        cost: f64,
    ) -> Result<NodeIdx, EGraphError> {
        if self.node_lookup.contains_key(name) {
            return Err(EGraphError::DuplicateNode(name.to_string()));
        }
        if !cost.is_finite() {
            return Err(EGraphError::NonFiniteCost {
                node: name.to_string(),
            });
        }
        if cost < 0.0 {
            return Err(EGraphError::NegativeCost {
                node: name.to_string(),
                cost,
            });
        }
        let n = self.node_names.len();
        self.node_names.push(name.to_string());
        self.ops.push(op.to_string());
        self.node_class.push(class);
        self.child_nodes.push(None);
        self.child_classes.push(Vec::new());
        self.costs.push(cost);
        self.node_lookup.insert(name.to_string(), n);
        Ok(n)
    }

    /// Adds an e-node whose children are given as e-classes.
    pub fn add_node(
        &mut self,
        name: &str,
        op: &str,
        class: ClassIdx,
        deps: &[ClassIdx],
        cost: f64,
    ) -> Result<NodeIdx, EGraphError> {
        let n = self.add_node_raw(name, op, class, cost)?;
        self.child_classes[n] = deps.to_vec();
        Ok(n)
    }

    pub fn add_root(&mut self, class: ClassIdx) {
        if !self.roots.contains(&class) {
            self.roots.push(class);
        }
    }

    pub fn build(self) -> Result<EGraph, EGraphError> {
        let num_classes = self.class_names.len();
        let mut class_nodes = vec![Vec::new(); num_classes];
        for (n, &c) in self.node_class.iter().enumerate() {
            class_nodes[c].push(n);
        }
        if let Some(empty) = class_nodes.iter().position(Vec::is_empty) {
            return Err(EGraphError::UnknownClass(self.class_names[empty].clone()));
        }

        let mut child_nodes = Vec::with_capacity(self.node_names.len());
        for (n, listed) in self.child_nodes.into_iter().enumerate() {
            match listed {
                Some(list) => child_nodes.push(list),
                None => {
                    // Children given as classes: render with each class's first member.
                    let list = self.child_classes[n]
                        .iter()
                        .map(|&c| {
                            class_nodes
                                .get(c)
                                .and_then(|m| m.first().copied())
                                .ok_or_else(|| EGraphError::UnknownClass(format!("#{c}")))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    child_nodes.push(list);
                }
            }
        }

        let deps = child_nodes
            .iter()
            .map(|list| {
                let mut d: Vec<ClassIdx> = list.iter().map(|&c| self.node_class[c]).collect();
                d.sort_unstable();
                d.dedup();
                d
            })
            .collect();

        Ok(EGraph {
            node_names: self.node_names,
            ops: self.ops,
            node_class: self.node_class,
            child_nodes,
            deps,
            costs: self.costs,
            class_names: self.class_names,
            class_nodes,
            roots: self.roots,
        })
    }
}

/// A partial choice function from e-classes to member e-nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Extraction {
    choice: BTreeMap<ClassIdx, NodeIdx>,
}

impl Extraction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (ClassIdx, NodeIdx)>) -> Self {
        Extraction {
            choice: pairs.into_iter().collect(),
        }
    }

    pub fn choose(&mut self, class: ClassIdx, node: NodeIdx) -> Option<NodeIdx> {
        self.choice.insert(class, node)
    }

    pub fn get(&self, class: ClassIdx) -> Option<NodeIdx> {
        self.choice.get(&class).copied()
    }

    pub fn contains(&self, class: ClassIdx) -> bool {
        self.choice.contains_key(&class)
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }

    /// `(class, node)` pairs in class order.
    pub fn iter(&self) -> impl Iterator<Item = (ClassIdx, NodeIdx)> + '_ {
        self.choice.iter().map(|(&c, &n)| (c, n))
    }

    /// Restriction to the given classes.
    pub fn restrict(&self, keep: impl Fn(ClassIdx) -> bool) -> Extraction {
        Extraction {
            choice: self
                .choice
                .iter()
                .filter(|(c, _)| keep(**c))
                .map(|(&c, &n)| (c, n))
                .collect(),
        }
    }

    /// Renders `{ "choices": {...}, "cost": .., "acyclic": .. }`.
    pub fn to_json(&self, g: &EGraph, acyclic: bool) -> Value {
        let mut choices = Map::new();
        for (c, n) in self.iter() {
            choices.insert(
                g.class_name(c).to_string(),
                Value::String(g.node_name(n).to_string()),
            );
        }
        let mut top = Map::new();
        top.insert("choices".into(), Value::Object(choices));
        top.insert("cost".into(), number(extraction_cost(g, self)));
        top.insert("acyclic".into(), Value::Bool(acyclic));
        Value::Object(top)
    }

    /// Reads the `choices` object of an extraction document.
    pub fn from_json(g: &EGraph, doc: &Value) -> Result<Extraction, EGraphError> {
        let choices = doc
            .get("choices")
            .and_then(Value::as_object)
            .ok_or_else(|| EGraphError::Field("choices".into()))?;
        let mut x = Extraction::new();
        for (cname, nname) in choices {
            let c = g
                .class_index(cname)
                .ok_or_else(|| EGraphError::UnknownClass(cname.clone()))?;
            let nname = nname
                .as_str()
                .ok_or_else(|| EGraphError::Field(format!("choices.{cname}")))?;
            let n = g.node_index(nname).ok_or_else(|| EGraphError::UnknownChild {
                node: cname.clone(),
                child: nname.to_string(),
            })?;
            x.choose(c, n);
        }
        Ok(x)
    }
}

/// Total cost of the chosen e-nodes; each chosen node counts once.
pub fn extraction_cost(g: &EGraph, x: &Extraction) -> f64 {
    x.iter().map(|(_, n)| g.cost(n)).sum()
}

/// Outcome of [`validate_extraction`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub is_extraction: bool,
    pub is_satisfying: bool,
    pub is_acyclic: bool,
    pub is_minimal: bool,
    pub violations: Vec<String>,
}

impl ValidityReport {
    pub fn all_ok(&self) -> bool {
        self.is_extraction && self.is_satisfying && self.is_acyclic && self.is_minimal
    }
}

/// Checks the extraction, satisfaction, acyclicity and minimality predicates.
///
/// Minimality is decided through reachability: a satisfying extraction is
/// minimal iff every class in its domain is reachable from a root class along
/// selected paths.
pub fn validate_extraction(g: &EGraph, x: &Extraction) -> ValidityReport {
    let mut violations = Vec::new();

    let mut is_extraction = true;
    for (c, n) in x.iter() {
        if c >= g.num_classes() || n >= g.num_nodes() {
            is_extraction = false;
            violations.push(format!("choice #{c} -> #{n} is out of range"));
            continue;
        }
        if g.class_of(n) != c {
            is_extraction = false;
            violations.push(format!(
                "node `{}` chosen for class `{}` belongs to `{}`",
                g.node_name(n),
                g.class_name(c),
                g.class_name(g.class_of(n))
            ));
        }
        for &d in g.deps(n) {
            if !x.contains(d) {
                is_extraction = false;
                violations.push(format!(
                    "node `{}` depends on class `{}`, which has no choice",
                    g.node_name(n),
                    g.class_name(d)
                ));
            }
        }
    }

    let mut is_satisfying = true;
    for &r in g.roots() {
        if !x.contains(r) {
            is_satisfying = false;
            violations.push(format!("root class `{}` has no choice", g.class_name(r)));
        }
    }

    let selected = |c: ClassIdx| -> Vec<ClassIdx> {
        match x.get(c) {
            Some(n) if n < g.num_nodes() => {
                g.deps(n).iter().copied().filter(|&d| x.contains(d)).collect()
            }
            _ => Vec::new(),
        }
    };

    let is_acyclic = match find_selected_cycle(g.num_classes(), x, &selected) {
        Some(c) => {
            violations.push(format!(
                "selected path from class `{}` returns to itself",
                g.class_name(c)
            ));
            false
        }
        None => true,
    };

    let mut reached = vec![false; g.num_classes()];
    let mut stack: Vec<ClassIdx> = g.roots().iter().copied().filter(|&r| x.contains(r)).collect();
    while let Some(c) = stack.pop() {
        if std::mem::replace(&mut reached[c], true) {
            continue;
        }
        stack.extend(selected(c).into_iter().filter(|&d| !reached[d]));
    }
    let mut all_reached = true;
    for (c, _) in x.iter() {
        if c < reached.len() && !reached[c] {
            all_reached = false;
            violations.push(format!(
                "class `{}` is not reachable from any root",
                g.class_name(c)
            ));
        }
    }
    let is_minimal = is_extraction && is_satisfying && all_reached;

    ValidityReport {
        is_extraction,
        is_satisfying,
        is_acyclic,
        is_minimal,
        violations,
    }
}

fn find_selected_cycle(
    num_classes: usize,
    x: &Extraction,
    selected: &dyn Fn(ClassIdx) -> Vec<ClassIdx>,
) -> Option<ClassIdx> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; num_classes];
    for (start, _) in x.iter() {
        if start >= num_classes || state[start] != 0 {
            continue;
        }
        let mut stack: Vec<(ClassIdx, Vec<ClassIdx>, usize)> = vec![(start, selected(start), 0)];
        state[start] = 1;
        while let Some((c, succ, i)) = stack.last_mut() {
            if *i < succ.len() {
                let d = succ[*i];
                *i += 1;
                match state[d] {
                    0 => {
                        state[d] = 1;
                        let s = selected(d);
                        stack.push((d, s, 0));
                    }
                    1 => return Some(d),
                    _ => {}
                }
            } else {
                state[*c] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Debug rendering of the term an extraction selects below `root`.
/// Cycles are cut and shown as `<cycle:class>`.
pub fn render_term(g: &EGraph, x: &Extraction, root: ClassIdx) -> String {
    fn go(g: &EGraph, x: &Extraction, c: ClassIdx, path: &mut Vec<ClassIdx>, out: &mut String) {
        if path.contains(&c) {
            let _ = write!(out, "<cycle:{}>", g.class_name(c));
            return;
        }
        let Some(n) = x.get(c) else {
            let _ = write!(out, "<missing:{}>", g.class_name(c));
            return;
        };
        out.push_str(g.op(n));
        let children = g.children(n);
        if !children.is_empty() {
            path.push(c);
            out.push('(');
            for (i, &child) in children.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                go(g, x, g.class_of(child), path, out);
            }
            out.push(')');
            path.pop();
        }
    }
    let mut out = String::new();
    go(g, x, root, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const E1: &str = r#"{
        "nodes": {
            "sqrt": { "op": "sqrt", "children": ["two"], "eclass": "A", "cost": 1 },
            "plus": { "op": "+", "children": ["sqrt", "zero"], "eclass": "A", "cost": 1 },
            "two":  { "op": "2", "children": [], "eclass": "B", "cost": 1 },
            "zero": { "op": "0", "children": [], "eclass": "C", "cost": 1 }
        },
        "root_eclasses": ["A"]
    }"#;

    fn e1() -> EGraph {
        parse_egraph(E1).unwrap()
    }

    fn pick(g: &EGraph, pairs: &[(&str, &str)]) -> Extraction {
        Extraction::from_pairs(pairs.iter().map(|(c, n)| {
            (g.class_index(c).unwrap(), g.node_index(n).unwrap())
        }))
    }

    #[test]
    fn parses_e1_shape() {
        let g = e1();
        assert_eq!(g.num_nodes(), 4);
        assert_eq!(g.num_classes(), 3);
        assert_eq!(g.num_deps(), 3);
        assert_eq!(g.roots(), &[g.class_index("A").unwrap()]);
        let plus = g.node_index("plus").unwrap();
        assert_eq!(g.deps(plus).len(), 2);
        assert_eq!(g.op(plus), "+");
    }

    #[test]
    fn parses_single_node() {
        let g = parse_egraph(
            r#"{"nodes":{"n0":{"op":"x","children":[],"eclass":"A","cost":0}},"root_eclasses":["A"]}"#,
        )
        .unwrap();
        assert_eq!(g.num_nodes(), 1);
        assert_eq!(g.cost(0), 0.0);
    }

    #[test]
    fn duplicate_children_collapse() {
        let g = parse_egraph(
            r#"{"nodes":{
                "m":{"op":"*","children":["a","a"],"eclass":"M","cost":1},
                "a":{"op":"a","children":[],"eclass":"A","cost":1}},
               "root_eclasses":["M"]}"#,
        )
        .unwrap();
        let m = g.node_index("m").unwrap();
        assert_eq!(g.deps(m).len(), 1);
        assert_eq!(g.children(m).len(), 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let neg = r#"{"nodes":{"n":{"op":"x","children":[],"eclass":"A","cost":-1}},"root_eclasses":["A"]}"#;
        let err = parse_egraph(neg).unwrap_err();
        assert!(err.to_string().contains("negative cost"), "{err}");

        let no_roots = r#"{"nodes":{"n":{"op":"x","children":[],"eclass":"A","cost":1}},"root_eclasses":[]}"#;
        assert!(matches!(parse_egraph(no_roots), Err(EGraphError::NoRoots)));

        let dangling = r#"{"nodes":{"n":{"op":"x","children":["q"],"eclass":"A","cost":1}},"root_eclasses":["A"]}"#;
        assert!(matches!(
            parse_egraph(dangling),
            Err(EGraphError::UnknownChild { .. })
        ));

        assert!(matches!(parse_egraph("{not json"), Err(EGraphError::Json(_))));

        let mismatch = r#"{"nodes":{"n":{"op":"x","children":[],"eclass":"A","cost":1},
                                   "m":{"op":"y","children":[],"eclass":"B","cost":1}},
                          "class_data":{"A":{"nodes":["n","m"]}},
                          "root_eclasses":["A"]}"#;
        assert!(matches!(
            parse_egraph(mismatch),
            Err(EGraphError::ClassMismatch { .. })
        ));

        let unknown_root = r#"{"nodes":{"n":{"op":"x","children":[],"eclass":"A","cost":1}},"root_eclasses":["Z"]}"#;
        assert!(matches!(
            parse_egraph(unknown_root),
            Err(EGraphError::UnknownClass(_))
        ));
    }

    #[test]
    fn costs_of_e1_extractions() {
        let g = e1();
        let x = pick(&g, &[("A", "sqrt"), ("B", "two")]);
        assert_eq!(extraction_cost(&g, &x), 2.0);
        assert_eq!(extraction_cost(&g.scale_costs(3.0), &x), 6.0);
    }

    #[test]
    fn empty_extraction_of_rootless_graph() {
        let mut b = EGraphBuilder::new();
        let a = b.class("A");
        b.add_node("n", "x", a, &[], 4.0).unwrap();
        let g = b.build().unwrap();
        let x = Extraction::new();
        assert_eq!(extraction_cost(&g, &x), 0.0);
        let report = validate_extraction(&g, &x);
        assert!(report.all_ok(), "{report:?}");
    }

    #[test]
    fn validates_e1_extractions() {
        let g = e1();
        let good = validate_extraction(&g, &pick(&g, &[("A", "sqrt"), ("B", "two")]));
        assert!(good.all_ok(), "{good:?}");

        let cyclic = validate_extraction(&g, &pick(&g, &[("A", "plus"), ("C", "zero")]));
        assert!(cyclic.is_extraction);
        assert!(cyclic.is_satisfying);
        assert!(!cyclic.is_acyclic);

        let missing_root = validate_extraction(&g, &pick(&g, &[("B", "two")]));
        assert!(!missing_root.is_satisfying);
        assert!(!missing_root.is_minimal);

        let extra = validate_extraction(&g, &pick(&g, &[("A", "sqrt"), ("B", "two"), ("C", "zero")]));
        assert!(extra.is_extraction && extra.is_satisfying && extra.is_acyclic);
        assert!(!extra.is_minimal);

        let wrong_member = validate_extraction(&g, &pick(&g, &[("A", "two"), ("B", "two")]));
        assert!(!wrong_member.is_extraction);
        assert!(!wrong_member.is_minimal);
    }

    #[test]
    fn json_round_trip() {
        let g = e1();
        let again = parse_egraph(&g.to_json().to_string()).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn extraction_json() {
        let g = e1();
        let x = pick(&g, &[("A", "sqrt"), ("B", "two")]);
        let doc = x.to_json(&g, true);
        assert_eq!(doc["cost"], 2.0);
        assert_eq!(doc["choices"]["A"], "sqrt");
        assert_eq!(Extraction::from_json(&g, &doc).unwrap(), x);
    }

    #[test]
    fn renders_terms() {
        let g = e1();
        let a = g.class_index("A").unwrap();
        assert_eq!(render_term(&g, &pick(&g, &[("A", "sqrt"), ("B", "two")]), a), "sqrt(2)");
        assert_eq!(
            render_term(&g, &pick(&g, &[("A", "plus"), ("C", "zero")]), a),
            "+(<cycle:A>, 0)"
        );
    }
}
