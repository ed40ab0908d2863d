use std::fmt;

use crate::petri::{Marking, PetriNet, PetriNetBuilder, PlaceId};

use super::DiscoveryError;

/// Block-structured process model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProcessTree {
    Tau,
    Activity(String),
    Sequence(Vec<ProcessTree>),
    Exclusive(Vec<ProcessTree>),
    Parallel(Vec<ProcessTree>),
    /// `children[0]` is the body, the rest are redo branches.
    Loop(Vec<ProcessTree>),
}

impl ProcessTree {
    pub fn activity(a: impl Into<String>) -> Self {
        ProcessTree::Activity(a.into())
    }

    pub fn children(&self) -> &[ProcessTree] {
        match self {
            ProcessTree::Tau | ProcessTree::Activity(_) => &[],
            ProcessTree::Sequence(c)
            | ProcessTree::Exclusive(c)
            | ProcessTree::Parallel(c)
            | ProcessTree::Loop(c) => c,
        }
    }

    pub fn validate(&self) -> Result<(), DiscoveryError> {
        match self {
            ProcessTree::Tau | ProcessTree::Activity(_) => Ok(()),
            ProcessTree::Loop(c) if c.len() < 2 => Err(DiscoveryError::InvalidTree(
                "loop needs a body and at least one redo child".into(),
            )),
            other if other.children().is_empty() => Err(DiscoveryError::InvalidTree(
                "operator without children".into(),
            )),
            other => other.children().iter().try_for_each(ProcessTree::validate),
        }
    }

    /// Merges directly nested operators of the same kind (except loops).
    pub fn flattened(self) -> Self {
        fn flat(
            children: Vec<ProcessTree>,
            same: fn(&ProcessTree) -> Option<&Vec<ProcessTree>>,
        ) -> Vec<ProcessTree> {
            let mut out = Vec::new();
            for c in children.into_iter().map(ProcessTree::flattened) {
                match same(&c) {
                    Some(inner) => out.extend(inner.iter().cloned()),
                    None => out.push(c),
                }
            }
            out
        }
        match self {
            ProcessTree::Sequence(c) => {
                let c = flat(c, |t| match t {
                    ProcessTree::Sequence(v) => Some(v),
                    _ => None,
                });
                if c.len() == 1 {
                    c.into_iter().next().unwrap()
                } else {
                    ProcessTree::Sequence(c)
                }
            }
            ProcessTree::Exclusive(c) => {
                let c = flat(c, |t| match t {
                    ProcessTree::Exclusive(v) => Some(v),
                    _ => None,
                });
                if c.len() == 1 {
                    c.into_iter().next().unwrap()
                } else {
                    ProcessTree::Exclusive(c)
                }
            }
            ProcessTree::Parallel(c) => {
                let c = flat(c, |t| match t {
                    ProcessTree::Parallel(v) => Some(v),
                    _ => None,
                });
                if c.len() == 1 {
                    c.into_iter().next().unwrap()
                } else {
                    ProcessTree::Parallel(c)
                }
            }
            ProcessTree::Loop(c) => {
                ProcessTree::Loop(c.into_iter().map(ProcessTree::flattened).collect())
            }
            leaf => leaf,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ProcessTree::Tau | ProcessTree::Activity(_) => 1,
            other => other.children().iter().map(ProcessTree::leaf_count).sum(),
        }
    }
}

impl fmt::Display for ProcessTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (op, children) = match self {
            ProcessTree::Tau => return f.write_str("τ"),
            ProcessTree::Activity(a) => return f.write_str(a),
            ProcessTree::Sequence(c) => ("seq", c),
            ProcessTree::Exclusive(c) => ("xor", c),
            ProcessTree::Parallel(c) => ("and", c),
            ProcessTree::Loop(c) => ("loop", c),
        };
        write!(f, "{op}(")?;
        for (i, c) in children.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

struct Translator {
    b: PetriNetBuilder,
    places: usize,
    visible: usize,
    silent: usize,
}

impl Translator {
    fn place(&mut self) -> PlaceId {
        self.places += 1;
        self.b.place(format!("p{}", self.places))
    }

    fn tau(&mut self, from: PlaceId, to: PlaceId) {
        self.silent += 1;
        let t = self.b.silent(format!("tau{}", self.silent));
        self.b.input(from, t).output(t, to);
    }

    fn block(&mut self, tree: &ProcessTree, entry: PlaceId, exit: PlaceId) {
        match tree {
            ProcessTree::Tau => self.tau(entry, exit),
            ProcessTree::Activity(a) => {
                self.visible += 1;
                let t = self.b.visible(format!("t{}", self.visible), a.clone());
                self.b.input(entry, t).output(t, exit);
            }
            ProcessTree::Sequence(children) => {
                let mut from = entry;
                for (i, c) in children.iter().enumerate() {
                    let to = if i + 1 == children.len() {
                        exit
                    } else {
                        self.place()
                    };
                    self.block(c, from, to);
                    from = to;
                }
            }
            ProcessTree::Exclusive(children) => {
                for c in children {
                    self.block(c, entry, exit);
                }
            }
            ProcessTree::Parallel(children) => {
                self.silent += 1;
                let split = self.b.silent(format!("tau{}", self.silent));
                self.silent += 1;
                let join = self.b.silent(format!("tau{}", self.silent));
                self.b.input(entry, split).output(join, exit);
                for c in children {
                    let i = self.place();
                    let o = self.place();
                    self.b.output(split, i).input(o, join);
                    self.block(c, i, o);
                }
            }
            ProcessTree::Loop(children) => {
                let start = self.place();
                let end = self.place();
                self.tau(entry, start);
                self.block(&children[0], start, end);
                for redo in &children[1..] {
                    self.block(redo, end, start);
                }
                self.tau(end, exit);
            }
        }
    }
}

/// Workflow net with the same language as `tree`. Loops are entered and
/// left through silent transitions; parallel blocks use a silent split and
/// join.
pub fn tree_to_petri(tree: &ProcessTree) -> PetriNet {
    let mut tr = Translator {
        b: PetriNetBuilder::new(),
        places: 0,
        visible: 0,
        silent: 0,
    };
    let source = tr.b.place("source");
    let sink = tr.b.place("sink");
    tr.block(tree, source, sink);
    let n = tr.b.n_places();
    tr.b.build(
        Marking::with(n, &[(source, 1)]),
        Marking::with(n, &[(sink, 1)]),
    )
    .expect("generated names are unique")
}
