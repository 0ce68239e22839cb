use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use crate::ckpt::{CheckpointStore, CkptError};
use crate::mprt::Process;
use crate::xpic::{Particle, ParticleSet, StepHook, XpicError};

use super::CheckpointSpec;

/// Rank image: step, charge, mass, particle count, then x, y, vx, vy, vz
/// per particle, all little-endian.
pub fn encode_particles(step: usize, parts: &ParticleSet) -> Vec<u8> {
    let mut b = Vec::with_capacity(32 + 40 * parts.len());
    b.extend_from_slice(&(step as u64).to_le_bytes());
    b.extend_from_slice(&parts.q.to_le_bytes());
    b.extend_from_slice(&parts.m.to_le_bytes());
    b.extend_from_slice(&(parts.len() as u64).to_le_bytes());
    for q in &parts.parts {
        for v in [q.x, q.y, q.vx, q.vy, q.vz] {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

pub fn decode_particles(b: &[u8]) -> Option<(usize, ParticleSet)> {
    let word = |k: usize| b.get(8 * k..8 * k + 8).map(|s| <[u8; 8]>::try_from(s).unwrap());
    let step = u64::from_le_bytes(word(0)?) as usize;
    let q = f64::from_le_bytes(word(1)?);
    let m = f64::from_le_bytes(word(2)?);
    let n = u64::from_le_bytes(word(3)?) as usize;
    if b.len() != 32 + 40 * n {
        return None;
    }
    let f = |k: usize| f64::from_le_bytes(word(k).unwrap());
    let parts = (0..n)
        .map(|i| {
            let k = 4 + 5 * i;
            Particle {
                x: f(k),
                y: f(k + 1),
                vx: f(k + 2),
                vy: f(k + 3),
                vz: f(k + 4),
            }
        })
        .collect();
    Some((step, ParticleSet { q, m, parts }))
}

struct Pending {
    images: Vec<Option<(usize, Vec<u8>)>>,
}

struct State {
    /// Last interval index at which each rank checkpointed.
    last: Vec<u64>,
    pending: BTreeMap<usize, Pending>,
    store: Option<Arc<CheckpointStore>>,
    written: Vec<u64>,
    error: Option<CkptError>,
}

/// Collects particle images whenever the clock enters a new interval and
/// writes the set once every rank has contributed. Epochs are step numbers.
pub(super) struct Checkpointer {
    spec: CheckpointSpec,
    ranks: usize,
    state: Mutex<State>,
}

impl Checkpointer {
    pub(super) fn new(spec: CheckpointSpec, ranks: usize) -> Arc<Self> {
        Arc::new(Checkpointer {
            spec,
            ranks,
            state: Mutex::new(State {
                last: vec![0; ranks],
                pending: BTreeMap::new(),
                store: None,
                written: Vec::new(),
                error: None,
            }),
        })
    }

    pub(super) fn hook(self: &Arc<Self>) -> StepHook {
        let me = self.clone();
        StepHook(Arc::new(move |p: &mut Process, step, rank, parts: &ParticleSet| {
            me.on_step(p, step, rank, parts)
        }))
    }

    fn on_step(&self, p: &mut Process, step: usize, rank: usize, parts: &ParticleSet) -> Result<(), XpicError> {
        let slot = (p.clock() / self.spec.interval).floor() as u64;
        let mut st = self.state.lock().unwrap();
        if slot <= st.last[rank] {
            return Ok(());
        }
        st.last[rank] = slot;
        let ranks = self.ranks;
        let pend = st.pending.entry(step).or_insert_with(|| Pending {
            images: vec![None; ranks],
        });
        pend.images[rank] = Some((p.rank().node_index, encode_particles(step, parts)));
        if pend.images.iter().any(Option::is_none) {
            return Ok(());
        }
        let pend = st.pending.remove(&step).unwrap();
        let (nodes, images): (Vec<usize>, Vec<Vec<u8>>) = pend.images.into_iter().map(Option::unwrap).unzip();
        let store = st
            .store
            .get_or_insert_with(|| Arc::new(CheckpointStore::new(self.spec.root.clone(), nodes)))
            .clone();
        match store.write(step as u64, self.spec.level, &images) {
            Ok(_) => st.written.push(step as u64),
            Err(e) => {
                st.error.get_or_insert(e);
            }
        }
        Ok(())
    }

    /// Epochs written, or the first storage error.
    pub(super) fn finish(&self) -> Result<Vec<u64>, CkptError> {
        let mut st = self.state.lock().unwrap();
        match st.error.take() {
            Some(e) => Err(e),
            None => Ok(st.written.clone()),
        }
    }
}
