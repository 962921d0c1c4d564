//! Fork-join computation representation: a tree of frames, each a sequence
//! of actions (work strands, locality updates, spawns, calls, syncs), forming
//! a series-parallel DAG over strands.

use crate::error::{Error, Result};
use crate::payload::Payload;
use crate::topology::{BlockId, Place};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct FrameId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct StrandId(pub u32);

impl FrameId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl StrandId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// How a frame was entered from its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentEdge {
    Spawn,
    Call,
}

/// One step in a frame's sequential program.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Work(StrandId),
    SetLocality(Place),
    Spawn(FrameId),
    Call(FrameId),
    Sync,
}

#[derive(Debug, Clone)]
pub struct FrameNode {
    pub actions: Vec<Action>,
    pub parent: Option<(FrameId, ParentEdge)>,
}

#[derive(Debug, Clone)]
pub struct Strand {
    pub duration: u64,
    pub blocks: Vec<BlockId>,
    pub payload: Option<Payload>,
}

/// A complete computation: frame tree plus the strand table.
#[derive(Debug, Clone)]
pub struct ComputationDag {
    pub frames: Vec<FrameNode>,
    pub strands: Vec<Strand>,
    /// Size of the data-block universe strands may touch.
    pub block_count: u32,
}

impl ComputationDag {
    pub fn root(&self) -> FrameId {
        FrameId(0)
    }

    pub fn frame(&self, f: FrameId) -> &FrameNode {
        &self.frames[f.index()]
    }

    pub fn strand(&self, s: StrandId) -> &Strand {
        &self.strands[s.index()]
    }

    /// Structural checks: tree shape, spawn/sync matching, strand validity.
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::MalformedDag("no frames".into()));
        }
        if self.frames[0].parent.is_some() {
            return Err(Error::MalformedDag("root frame has a parent".into()));
        }
        let mut seen_child = vec![false; self.frames.len()];
        for (fi, frame) in self.frames.iter().enumerate() {
            if frame.actions.is_empty() {
                return Err(Error::MalformedDag(format!("frame {fi} is empty")));
            }
            let mut open_spawns = 0usize;
            for action in &frame.actions {
                match action {
                    Action::Work(s) => {
                        let strand = self
                            .strands
                            .get(s.index())
                            .ok_or_else(|| Error::MalformedDag(format!("missing strand {s:?}")))?;
                        if strand.duration == 0 {
                            return Err(Error::MalformedDag(format!(
                                "strand {s:?} has zero duration"
                            )));
                        }
                        for &b in &strand.blocks {
                            if b >= self.block_count {
                                return Err(Error::MalformedDag(format!(
                                    "strand {s:?} touches undeclared block {b}"
                                )));
                            }
                        }
                    }
                    Action::SetLocality(_) => {}
                    Action::Spawn(c) | Action::Call(c) => {
                        let ci = c.index();
                        if ci >= self.frames.len() {
                            return Err(Error::MalformedDag(format!("missing frame {c:?}")));
                        }
                        if seen_child[ci] {
                            return Err(Error::MalformedDag(format!(
                                "frame {c:?} has two parents"
                            )));
                        }
                        seen_child[ci] = true;
                        let expected = match action {
                            Action::Spawn(_) => ParentEdge::Spawn,
                            _ => ParentEdge::Call,
                        };
                        match self.frames[ci].parent {
                            Some((p, e)) if p.index() == fi && e == expected => {}
                            _ => {
                                return Err(Error::MalformedDag(format!(
                                    "frame {c:?} parent link does not match its use site"
                                )))
                            }
                        }
                        if matches!(action, Action::Spawn(_)) {
                            open_spawns += 1;
                        }
                    }
                    Action::Sync => {
                        open_spawns = 0;
                    }
                }
            }
            if open_spawns > 0 {
                return Err(Error::MalformedDag(format!(
                    "frame {fi} ends with {open_spawns} unsynced spawn(s)"
                )));
            }
        }
        for (fi, seen) in seen_child.iter().enumerate().skip(1) {
            if !seen {
                return Err(Error::MalformedDag(format!("frame {fi} is unreachable")));
            }
        }
        Ok(())
    }

    /// Count of spawn actions in the whole computation.
    pub fn spawn_count(&self) -> u64 {
        self.frames
            .iter()
            .flat_map(|f| f.actions.iter())
            .filter(|a| matches!(a, Action::Spawn(_)))
            .count() as u64
    }
}

/// Cursor-style constructor for computations. Frames open and close around
/// closures, so the tree shape is correct by construction.
pub struct DagBuilder {
    frames: Vec<FrameNode>,
    strands: Vec<Strand>,
    block_count: u32,
    stack: Vec<FrameId>,
}

impl DagBuilder {
    /// Build a computation. The closure populates the root frame.
    pub fn build(f: impl FnOnce(&mut DagBuilder)) -> Result<ComputationDag> {
        let mut b = DagBuilder {
            frames: vec![FrameNode {
                actions: Vec::new(),
                parent: None,
            }],
            strands: Vec::new(),
            block_count: 0,
            stack: vec![FrameId(0)],
        };
        f(&mut b);
        let dag = ComputationDag {
            frames: b.frames,
            strands: b.strands,
            block_count: b.block_count,
        };
        dag.validate()?;
        Ok(dag)
    }

    fn current(&mut self) -> &mut FrameNode {
        let f = *self.stack.last().expect("builder frame stack empty");
        &mut self.frames[f.index()]
    }

    /// Declare that blocks [0, n) exist even if no strand touches them.
    pub fn declare_blocks(&mut self, n: u32) {
        self.block_count = self.block_count.max(n);
    }

    pub fn work(&mut self, duration: u64, blocks: Vec<BlockId>) -> StrandId {
        self.work_full(duration, blocks, None)
    }

    pub fn work_payload(
        &mut self,
        duration: u64,
        blocks: Vec<BlockId>,
        payload: Payload,
    ) -> StrandId {
        self.work_full(duration, blocks, Some(payload))
    }

    fn work_full(
        &mut self,
        duration: u64,
        blocks: Vec<BlockId>,
        payload: Option<Payload>,
    ) -> StrandId {
        assert!(duration > 0, "strand durations are positive");
        for &b in &blocks {
            self.block_count = self.block_count.max(b + 1);
        }
        let id = StrandId(self.strands.len() as u32);
        self.strands.push(Strand {
            duration,
            blocks,
            payload,
        });
        self.current().actions.push(Action::Work(id));
        id
    }

    pub fn set_locality(&mut self, place: Place) {
        self.current().actions.push(Action::SetLocality(place));
    }

    pub fn spawn(&mut self, f: impl FnOnce(&mut DagBuilder)) -> FrameId {
        self.child(ParentEdge::Spawn, f)
    }

    pub fn call(&mut self, f: impl FnOnce(&mut DagBuilder)) -> FrameId {
        self.child(ParentEdge::Call, f)
    }

    fn child(&mut self, edge: ParentEdge, f: impl FnOnce(&mut DagBuilder)) -> FrameId {
        let parent = *self.stack.last().unwrap();
        let id = FrameId(self.frames.len() as u32);
        self.frames.push(FrameNode {
            actions: Vec::new(),
            parent: Some((parent, edge)),
        });
        self.frames[parent.index()].actions.push(match edge {
            ParentEdge::Spawn => Action::Spawn(id),
            ParentEdge::Call => Action::Call(id),
        });
        self.stack.push(id);
        f(self);
        self.stack.pop();
        id
    }

    pub fn sync(&mut self) {
        self.current().actions.push(Action::Sync);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_produces_valid_tree() {
        let dag = DagBuilder::build(|b| {
            b.work(3, vec![]);
            b.spawn(|b| {
                b.work(2, vec![0]);
            });
            b.work(1, vec![]);
            b.sync();
        })
        .unwrap();
        assert_eq!(dag.frames.len(), 2);
        assert_eq!(dag.strands.len(), 3);
        assert_eq!(dag.block_count, 1);
        assert_eq!(dag.spawn_count(), 1);
    }

    #[test]
    fn unsynced_spawn_is_rejected() {
        let err = DagBuilder::build(|b| {
            b.spawn(|b| {
                b.work(1, vec![]);
            });
            b.work(1, vec![]);
        });
        assert!(matches!(err, Err(Error::MalformedDag(_))));
    }

    #[test]
    #[should_panic(expected = "positive")]
    fn zero_duration_work_panics() {
        let _ = DagBuilder::build(|b| {
            b.work(0, vec![]);
        });
    }

    #[test]
    fn empty_frame_is_rejected() {
        let err = DagBuilder::build(|b| {
            b.spawn(|_| {});
            b.sync();
        });
        assert!(matches!(err, Err(Error::MalformedDag(_))));
    }
}
