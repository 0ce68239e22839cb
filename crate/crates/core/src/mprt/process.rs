use std::collections::HashMap;
use std::sync::Arc;

use crate::modsched::Allocation;
use crate::platform::{NodeKind, PlatformConfig, Solver};

use super::comm::{CommId, Communicator, Endpoint, InterComm, Rank, ReduceOp, Request};
use super::runtime::{CollBody, Contribution, Message, MsgKey, Shared};
use super::trace::TraceEvent;
use super::MprtError;

enum ReqState {
    Send { done: f64 },
    Recv { key: MsgKey, src_kind: NodeKind },
    Complete,
}

/// A running rank: its identity, virtual clock and communication handles.
pub struct Process {
    shared: Arc<Shared>,
    me: Rank,
    world: Communicator,
    parent: Option<InterComm>,
    alloc: Allocation,
    clock: f64,
    seq: HashMap<CommId, u64>,
    reqs: HashMap<u64, ReqState>,
    next_req: u64,
    trace: Vec<TraceEvent>,
}

impl Process {
    pub(crate) fn new(
        shared: Arc<Shared>,
        me: Rank,
        world: Communicator,
        parent: Option<InterComm>,
        clock: f64,
        alloc: Allocation,
    ) -> Self {
        Process {
            shared,
            me,
            world,
            parent,
            alloc,
            clock,
            seq: HashMap::new(),
            reqs: HashMap::new(),
            next_req: 0,
            trace: Vec::new(),
        }
    }

    pub(crate) fn finish(self) -> (f64, Vec<TraceEvent>) {
        (self.clock, self.trace)
    }

    pub fn rank(&self) -> &Rank {
        &self.me
    }

    pub fn world(&self) -> &Communicator {
        &self.world
    }

    pub fn get_parent(&self) -> Option<&InterComm> {
        self.parent.as_ref()
    }

    pub fn allocation(&self) -> &Allocation {
        &self.alloc
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.shared.cfg
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    fn record(&mut self, op: &'static str, peer: Option<&Rank>, bytes: usize) {
        if self.shared.tracing {
            self.trace.push(TraceEvent {
                time: self.clock,
                rank: self.me.id,
                op,
                peer: peer.map(|r| r.id),
                bytes,
            });
        }
    }

    /// Charge `work` units of `solver` work on this rank's node; returns the cost.
    pub fn compute(&mut self, work: f64, solver: Solver) -> f64 {
        let dt = self.shared.cfg.compute_cost(work, self.me.node_kind, solver);
        self.clock += dt;
        dt
    }

    /// Charge a raw virtual duration.
    pub fn advance(&mut self, seconds: f64) {
        debug_assert!(seconds >= 0.0);
        self.clock += seconds.max(0.0);
    }

    fn peer<E: Endpoint>(&self, ep: &E, index: usize) -> Result<Rank, MprtError> {
        ep.peer(index).copied().ok_or(MprtError::InvalidRank {
            index,
            size: ep.peer_count(),
        })
    }

    fn post(&mut self, ctx: CommId, dst: &Rank, tag: i32, payload: Vec<u8>) -> f64 {
        let cost = self
            .shared
            .cfg
            .comm_cost(payload.len(), self.me.node_kind, dst.node_kind);
        self.shared.deposit(
            (ctx, self.me.id, dst.id, tag),
            Message {
                payload,
                send_time: self.clock,
            },
        );
        cost
    }

    /// Blocking send. The sender is charged the transfer, the same as an
    /// `isend` followed at once by its wait.
    pub fn send<E: Endpoint>(
        &mut self,
        ep: &E,
        dst: usize,
        tag: i32,
        payload: Vec<u8>,
    ) -> Result<(), MprtError> {
        let peer = self.peer(ep, dst)?;
        let bytes = payload.len();
        let cost = self.post(ep.context(), &peer, tag, payload);
        self.clock += cost;
        self.record("send", Some(&peer), bytes);
        Ok(())
    }

    /// Blocking receive: clock becomes max(own, send time) + transfer.
    pub fn recv<E: Endpoint>(&mut self, ep: &E, src: usize, tag: i32) -> Result<Vec<u8>, MprtError> {
        let peer = self.peer(ep, src)?;
        let msg = self
            .shared
            .take_message(self.me.id, (ep.context(), peer.id, self.me.id, tag))?;
        let cost = self
            .shared
            .cfg
            .comm_cost(msg.payload.len(), peer.node_kind, self.me.node_kind);
        self.clock = self.clock.max(msg.send_time) + cost;
        self.record("recv", Some(&peer), msg.payload.len());
        Ok(msg.payload)
    }

    fn new_request(&mut self, st: ReqState) -> Request {
        let id = self.next_req;
        self.next_req += 1;
        self.reqs.insert(id, st);
        Request { id }
    }

    pub fn isend<E: Endpoint>(
        &mut self,
        ep: &E,
        dst: usize,
        tag: i32,
        payload: Vec<u8>,
    ) -> Result<Request, MprtError> {
        let peer = self.peer(ep, dst)?;
        let bytes = payload.len();
        let cost = self.post(ep.context(), &peer, tag, payload);
        self.record("isend", Some(&peer), bytes);
        Ok(self.new_request(ReqState::Send {
            done: self.clock + cost,
        }))
    }

    pub fn irecv<E: Endpoint>(&mut self, ep: &E, src: usize, tag: i32) -> Result<Request, MprtError> {
        let peer = self.peer(ep, src)?;
        self.record("irecv", Some(&peer), 0);
        Ok(self.new_request(ReqState::Recv {
            key: (ep.context(), peer.id, self.me.id, tag),
            src_kind: peer.node_kind,
        }))
    }

    /// Complete every request. Clock becomes the max of its own value and each
    /// transfer's completion time. Receives yield their payload, sends `None`.
    pub fn wait_all(&mut self, reqs: &[Request]) -> Result<Vec<Option<Vec<u8>>>, MprtError> {
        for r in reqs {
            match self.reqs.get(&r.id) {
                None => return Err(MprtError::UnknownRequest(r.id)),
                Some(ReqState::Complete) => return Err(MprtError::DoubleWait(r.id)),
                Some(_) => {}
            }
        }
        let mut out = Vec::with_capacity(reqs.len());
        let mut t = self.clock;
        let mut bytes = 0;
        for r in reqs {
            let st = std::mem::replace(self.reqs.get_mut(&r.id).unwrap(), ReqState::Complete);
            match st {
                ReqState::Send { done } => {
                    t = t.max(done);
                    out.push(None);
                }
                ReqState::Recv { key, src_kind } => {
                    let msg = self.shared.take_message(self.me.id, key)?;
                    let cost = self
                        .shared
                        .cfg
                        .comm_cost(msg.payload.len(), src_kind, self.me.node_kind);
                    t = t.max(msg.send_time + cost);
                    bytes += msg.payload.len();
                    out.push(Some(msg.payload));
                }
                ReqState::Complete => return Err(MprtError::DoubleWait(r.id)),
            }
        }
        self.clock = t;
        if !reqs.is_empty() {
            self.record("wait_all", None, bytes);
        }
        Ok(out)
    }

    fn next_seq(&mut self, comm: &Communicator) -> u64 {
        let s = self.seq.entry(comm.id).or_insert(0);
        let v = *s;
        *s += 1;
        v
    }

    pub fn allreduce(
        &mut self,
        comm: &Communicator,
        op: ReduceOp,
        values: &[f64],
    ) -> Result<Vec<f64>, MprtError> {
        if comm.size() == 1 {
            comm.me.ok_or(MprtError::NotMember(comm.id))?;
            return Ok(values.to_vec());
        }
        let seq = self.next_seq(comm);
        let out = self.shared.collective(
            self.me.id,
            comm,
            seq,
            Contribution {
                clock: self.clock,
                body: CollBody::Allreduce {
                    op,
                    values: values.to_vec(),
                },
            },
        )?;
        self.clock = self.clock.max(out.clock);
        self.record("allreduce", None, 8 * values.len());
        Ok(out.values.clone())
    }

    pub fn allreduce_scalar(
        &mut self,
        comm: &Communicator,
        op: ReduceOp,
        value: f64,
    ) -> Result<f64, MprtError> {
        Ok(self.allreduce(comm, op, &[value])?[0])
    }

    pub fn barrier(&mut self, comm: &Communicator) -> Result<(), MprtError> {
        if comm.size() == 1 {
            comm.me.ok_or(MprtError::NotMember(comm.id))?;
            return Ok(());
        }
        let seq = self.next_seq(comm);
        let out = self.shared.collective(
            self.me.id,
            comm,
            seq,
            Contribution {
                clock: self.clock,
                body: CollBody::Barrier,
            },
        )?;
        self.clock = self.clock.max(out.clock);
        self.record("barrier", None, 0);
        Ok(())
    }

    /// Collectively start `n` ranks of `role` on `kind` nodes of `alloc`.
    pub fn spawn(
        &mut self,
        comm: &Communicator,
        role: &str,
        n: usize,
        kind: NodeKind,
        alloc: &Allocation,
    ) -> Result<InterComm, MprtError> {
        let seq = self.next_seq(comm);
        let out = self.shared.collective(
            self.me.id,
            comm,
            seq,
            Contribution {
                clock: self.clock,
                body: CollBody::Spawn {
                    role: role.to_string(),
                    n,
                    kind,
                    alloc: alloc.clone(),
                },
            },
        )?;
        self.clock = self.clock.max(out.clock);
        self.record("spawn", None, 0);
        let (id, children) = out.spawned.clone().expect("spawn resolution");
        Ok(InterComm {
            id,
            local_group: comm.clone(),
            remote_group: children,
        })
    }
}
