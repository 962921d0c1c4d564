//! Line-oriented text serialization of computations: one strand per line, one
//! edge per line, deterministically ordered so exports diff cleanly.
//!
//! Node lines: `s <id> <duration> <block,block,...|->[ @<place>]`
//! Edge lines: `e <src> <dst> <cont|spawn|call|sync|ret>`
//!
//! Zero-duration nodes are structural anchors (frame entries/exits and
//! spawn/join points with no adjacent work); a node annotated `@p` updates
//! the enclosing frame's locality hint at that point. Frames are implicit:
//! spawn/call edges open them, ret edges close calls, sync edges join spawns.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dag::{Action, ComputationDag, FrameId, FrameNode, ParentEdge, Strand};
use crate::error::{Error, Result};
use crate::topology::Place;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EdgeKind {
    Cont,
    Spawn,
    Call,
    Sync,
    Ret,
}

impl EdgeKind {
    fn name(self) -> &'static str {
        match self {
            EdgeKind::Cont => "cont",
            EdgeKind::Spawn => "spawn",
            EdgeKind::Call => "call",
            EdgeKind::Sync => "sync",
            EdgeKind::Ret => "ret",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "cont" => EdgeKind::Cont,
            "spawn" => EdgeKind::Spawn,
            "call" => EdgeKind::Call,
            "sync" => EdgeKind::Sync,
            "ret" => EdgeKind::Ret,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
struct Node {
    duration: u64,
    blocks: Vec<u32>,
    place: Option<Place>,
}

struct Exporter<'a> {
    dag: &'a ComputationDag,
    nodes: Vec<Node>,
    edges: Vec<(u32, u32, EdgeKind)>,
}

enum Link {
    Start,
    /// Previous node; `forced` means the next node must be fresh because the
    /// previous one already anchors a spawn.
    Cont(u32, bool),
    /// A called child's exit awaiting its return point.
    Ret(u32),
}

impl<'a> Exporter<'a> {
    fn new_node(
        &mut self,
        duration: u64,
        blocks: Vec<u32>,
        place: Option<Place>,
        link: &mut Link,
        pending_syncs: &mut Vec<u32>,
        entry: &mut Option<u32>,
    ) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            duration,
            blocks,
            place,
        });
        match *link {
            Link::Start => {
                *entry = Some(id);
            }
            Link::Cont(p, _) => self.edges.push((p, id, EdgeKind::Cont)),
            Link::Ret(e) => self.edges.push((e, id, EdgeKind::Ret)),
        }
        for s in pending_syncs.drain(..) {
            self.edges.push((s, id, EdgeKind::Sync));
        }
        *link = Link::Cont(id, false);
        id
    }

    fn emit_frame(&mut self, f: FrameId) -> (u32, u32) {
        let mut link = Link::Start;
        let mut entry: Option<u32> = None;
        let mut pending_syncs: Vec<u32> = Vec::new();
        let mut open_children: Vec<u32> = Vec::new();

        let actions = self.dag.frame(f).actions.clone();
        for action in &actions {
            match action {
                Action::Work(s) => {
                    let strand = self.dag.strand(*s);
                    self.new_node(
                        strand.duration,
                        strand.blocks.clone(),
                        None,
                        &mut link,
                        &mut pending_syncs,
                        &mut entry,
                    );
                }
                Action::SetLocality(p) => {
                    self.new_node(0, Vec::new(), Some(*p), &mut link, &mut pending_syncs, &mut entry);
                }
                Action::Spawn(c) | Action::Call(c) => {
                    // Anchor the branch on the current node, materializing one
                    // if the chain has none available.
                    let src = match link {
                        Link::Cont(p, false) if pending_syncs.is_empty() => p,
                        _ => self.new_node(
                            0,
                            Vec::new(),
                            None,
                            &mut link,
                            &mut pending_syncs,
                            &mut entry,
                        ),
                    };
                    let (c_entry, c_exit) = self.emit_frame(*c);
                    match action {
                        Action::Spawn(_) => {
                            self.edges.push((src, c_entry, EdgeKind::Spawn));
                            open_children.push(c_exit);
                            link = Link::Cont(src, true);
                        }
                        _ => {
                            self.edges.push((src, c_entry, EdgeKind::Call));
                            link = Link::Ret(c_exit);
                        }
                    }
                }
                Action::Sync => {
                    pending_syncs.append(&mut open_children);
                }
            }
        }
        // Materialize the exit if the chain ends on a pending link.
        let exit = match link {
            Link::Cont(p, _) if pending_syncs.is_empty() => p,
            _ => self.new_node(0, Vec::new(), None, &mut link, &mut pending_syncs, &mut entry),
        };
        (entry.expect("frame produced no nodes"), exit)
    }
}

/// Serialize a computation.
pub fn export(dag: &ComputationDag) -> Result<String> {
    dag.validate()?;
    let mut ex = Exporter {
        dag,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    ex.emit_frame(dag.root());
    ex.edges.sort_unstable();

    let mut out = String::new();
    for (i, n) in ex.nodes.iter().enumerate() {
        let blocks = if n.blocks.is_empty() {
            "-".to_string()
        } else {
            n.blocks
                .iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(out, "s {i} {} {blocks}", n.duration).unwrap();
        if let Some(p) = n.place {
            write!(out, " @{p}").unwrap();
        }
        out.push('\n');
    }
    for (src, dst, kind) in &ex.edges {
        writeln!(out, "e {src} {dst} {}", kind.name()).unwrap();
    }
    Ok(out)
}

struct Parsed {
    nodes: BTreeMap<u32, Node>,
    outgoing: BTreeMap<u32, Vec<(u32, EdgeKind)>>,
    incoming: BTreeMap<u32, Vec<(u32, EdgeKind)>>,
}

/// Parse a computation from its text form.
pub fn import(text: &str) -> Result<ComputationDag> {
    let mut p = Parsed {
        nodes: BTreeMap::new(),
        outgoing: BTreeMap::new(),
        incoming: BTreeMap::new(),
    };
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap();
        let err = |msg: &str| Error::Parse {
            line: lineno,
            msg: msg.to_string(),
        };
        match tag {
            "s" => {
                let id: u32 = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad strand id"))?;
                let duration: u64 = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad duration"))?;
                let blocks_tok = parts.next().ok_or_else(|| err("missing block list"))?;
                let blocks = if blocks_tok == "-" {
                    Vec::new()
                } else {
                    blocks_tok
                        .split(',')
                        .map(|t| t.parse::<u32>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| err("bad block list"))?
                };
                let place = match parts.next() {
                    None => None,
                    Some(tok) => {
                        let tok = tok
                            .strip_prefix('@')
                            .ok_or_else(|| err("expected @place annotation"))?;
                        Some(if tok == "any" {
                            Place::Any
                        } else {
                            Place::Socket(tok.parse().map_err(|_| err("bad place"))?)
                        })
                    }
                };
                if duration > 0 && place.is_some() {
                    return Err(err("a node cannot both work and set locality"));
                }
                if duration == 0 && !blocks.is_empty() {
                    return Err(err("zero-duration node with blocks"));
                }
                if p.nodes.insert(id, Node { duration, blocks, place }).is_some() {
                    return Err(err("duplicate node id"));
                }
            }
            "e" => {
                let src: u32 = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad edge source"))?;
                let dst: u32 = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad edge target"))?;
                let kind = parts
                    .next()
                    .and_then(EdgeKind::parse)
                    .ok_or_else(|| err("bad edge kind"))?;
                p.outgoing.entry(src).or_default().push((dst, kind));
                p.incoming.entry(dst).or_default().push((src, kind));
            }
            _ => return Err(err("unknown line tag")),
        }
    }
    for (src, outs) in &p.outgoing {
        if !p.nodes.contains_key(src) {
            return Err(Error::MalformedDag(format!("edge from unknown node {src}")));
        }
        for (dst, _) in outs {
            if !p.nodes.contains_key(dst) {
                return Err(Error::MalformedDag(format!("edge to unknown node {dst}")));
            }
        }
    }

    let roots: Vec<u32> = p
        .nodes
        .keys()
        .filter(|id| !p.incoming.contains_key(id))
        .copied()
        .collect();
    if roots.len() != 1 {
        return Err(Error::MalformedDag(format!(
            "expected exactly one entry node, found {}",
            roots.len()
        )));
    }

    let mut builder = Importer {
        parsed: &p,
        frames: Vec::new(),
        strands: Vec::new(),
        visited: std::collections::BTreeSet::new(),
    };
    builder.frames.push(FrameNode {
        actions: Vec::new(),
        parent: None,
    });
    builder.build_frame(FrameId(0), roots[0])?;
    let block_count = builder
        .strands
        .iter()
        .flat_map(|s| s.blocks.iter())
        .map(|&b| b + 1)
        .max()
        .unwrap_or(0);
    let dag = ComputationDag {
        frames: builder.frames,
        strands: builder.strands,
        block_count,
    };
    dag.validate()?;
    Ok(dag)
}

struct Importer<'a> {
    parsed: &'a Parsed,
    frames: Vec<FrameNode>,
    strands: Vec<Strand>,
    visited: std::collections::BTreeSet<u32>,
}

impl<'a> Importer<'a> {
    /// Walk one frame's chain starting at `entry`; returns its exit node.
    fn build_frame(&mut self, frame: FrameId, entry: u32) -> Result<u32> {
        let mut cur = entry;
        // Exits of spawned children not yet joined.
        let mut open: Vec<u32> = Vec::new();
        loop {
            if !self.visited.insert(cur) {
                return Err(Error::MalformedDag(format!(
                    "node {cur} reached twice (cycle or shared continuation)"
                )));
            }
            // Joins land on this node: all currently open children must be
            // exactly the sync sources.
            let syncs: Vec<u32> = self
                .parsed
                .incoming
                .get(&cur)
                .map(|v| {
                    v.iter()
                        .filter(|(_, k)| *k == EdgeKind::Sync)
                        .map(|(s, _)| *s)
                        .collect()
                })
                .unwrap_or_default();
            if !syncs.is_empty() {
                let mut a = syncs.clone();
                let mut b = std::mem::take(&mut open);
                a.sort_unstable();
                b.sort_unstable();
                if a != b {
                    return Err(Error::MalformedDag(format!(
                        "sync at node {cur} does not join exactly the open spawns"
                    )));
                }
                self.frames[frame.index()].actions.push(Action::Sync);
            }

            let node = &self.parsed.nodes[&cur];
            if let Some(place) = node.place {
                self.frames[frame.index()]
                    .actions
                    .push(Action::SetLocality(place));
            } else if node.duration > 0 {
                let sid = crate::dag::StrandId(self.strands.len() as u32);
                self.strands.push(Strand {
                    duration: node.duration,
                    blocks: node.blocks.clone(),
                    payload: None,
                });
                self.frames[frame.index()].actions.push(Action::Work(sid));
            }

            let outs = self.parsed.outgoing.get(&cur).cloned().unwrap_or_default();
            let mut cont: Option<u32> = None;
            let mut spawn: Option<u32> = None;
            let mut callee: Option<u32> = None;
            for (dst, kind) in outs {
                match kind {
                    EdgeKind::Cont if cont.is_none() => cont = Some(dst),
                    EdgeKind::Spawn if spawn.is_none() => spawn = Some(dst),
                    EdgeKind::Call if callee.is_none() => callee = Some(dst),
                    EdgeKind::Sync | EdgeKind::Ret => {} // handled at their targets
                    _ => {
                        return Err(Error::MalformedDag(format!(
                            "node {cur} has duplicate {} edges",
                            kind.name()
                        )))
                    }
                }
            }
            if spawn.is_some() && callee.is_some() {
                return Err(Error::MalformedDag(format!(
                    "node {cur} both spawns and calls"
                )));
            }

            if let Some(child_entry) = spawn {
                let child = self.new_child(frame, ParentEdge::Spawn);
                let child_exit = self.build_frame(child, child_entry)?;
                open.push(child_exit);
                let next = cont.ok_or_else(|| {
                    Error::MalformedDag(format!("spawn at node {cur} has no continuation"))
                })?;
                cur = next;
                continue;
            }
            if let Some(child_entry) = callee {
                if cont.is_some() {
                    return Err(Error::MalformedDag(format!(
                        "call at node {cur} also has a continuation edge"
                    )));
                }
                let child = self.new_child(frame, ParentEdge::Call);
                let child_exit = self.build_frame(child, child_entry)?;
                // Control resumes at the target of the child's ret edge.
                let rets: Vec<u32> = self
                    .parsed
                    .outgoing
                    .get(&child_exit)
                    .map(|v| {
                        v.iter()
                            .filter(|(_, k)| *k == EdgeKind::Ret)
                            .map(|(d, _)| *d)
                            .collect()
                    })
                    .unwrap_or_default();
                if rets.len() != 1 {
                    return Err(Error::MalformedDag(format!(
                        "called frame exiting at node {child_exit} needs exactly one ret edge"
                    )));
                }
                cur = rets[0];
                continue;
            }
            match cont {
                Some(next) => cur = next,
                None => {
                    if !open.is_empty() {
                        return Err(Error::MalformedDag(format!(
                            "frame ends at node {cur} with unsynced spawns"
                        )));
                    }
                    return Ok(cur);
                }
            }
        }
    }

    fn new_child(&mut self, parent: FrameId, edge: ParentEdge) -> FrameId {
        let id = FrameId(self.frames.len() as u32);
        self.frames.push(FrameNode {
            actions: Vec::new(),
            parent: Some((parent, edge)),
        });
        self.frames[parent.index()].actions.push(match edge {
            ParentEdge::Spawn => Action::Spawn(id),
            ParentEdge::Call => Action::Call(id),
        });
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{serial_elide, work_span};
    use crate::dag::DagBuilder;

    fn sample_dag() -> ComputationDag {
        DagBuilder::build(|b| {
            b.work(2, vec![0, 1]);
            b.set_locality(Place::Socket(1));
            b.spawn(|b| {
                b.work(3, vec![2]);
                b.spawn(|b| {
                    b.work(1, vec![]);
                });
                b.work(2, vec![]);
                b.sync();
            });
            b.set_locality(Place::Any);
            b.call(|b| {
                b.work(4, vec![1]);
            });
            b.work(1, vec![]);
            b.sync();
            b.work(2, vec![0]);
        })
        .unwrap()
    }

    #[test]
    fn export_import_is_a_fixed_point() {
        let dag = sample_dag();
        let text = export(&dag).unwrap();
        let dag2 = import(&text).unwrap();
        let text2 = export(&dag2).unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn round_trip_preserves_semantics() {
        let dag = sample_dag();
        let dag2 = import(&export(&dag).unwrap()).unwrap();
        let ws1 = work_span(&dag, 1).unwrap();
        let ws2 = work_span(&dag2, 1).unwrap();
        assert_eq!(ws1, ws2);
        let t1 = serial_elide(&dag, 1).unwrap();
        let t2 = serial_elide(&dag2, 1).unwrap();
        assert_eq!(t1.cost, t2.cost);
        let d1: Vec<u64> = t1
            .order
            .iter()
            .map(|&s| dag.strand(s).duration)
            .collect();
        let d2: Vec<u64> = t2
            .order
            .iter()
            .map(|&s| dag2.strand(s).duration)
            .collect();
        assert_eq!(d1, d2);
    }

    #[test]
    fn import_rejects_garbage() {
        assert!(import("x 1 2\n").is_err());
        assert!(import("s 0 5 -\ns 1 5 -\n").is_err()); // two roots
        assert!(import("s 0 5 - @3\n").is_err()); // work node with locality
        assert!(import("s 0 0 1,2\n").is_err()); // zero-duration with blocks
    }

    #[test]
    fn import_rejects_unjoined_spawn() {
        // n0 spawns n1 but never syncs.
        let text = "s 0 1 -\ns 1 1 -\ns 2 1 -\ne 0 1 spawn\ne 0 2 cont\n";
        assert!(import(text).is_err());
    }

    #[test]
    fn deterministic_ordering() {
        let dag = sample_dag();
        assert_eq!(export(&dag).unwrap(), export(&dag).unwrap());
    }
}
