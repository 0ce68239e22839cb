//! Emulated storage hierarchy: a directory per node standing in for its NVM,
//! and one shared global directory.
//!
//! ```text
//! <root>/node<k>/epoch<e>.cbck
//! <root>/node<k>/buddy_of_<j>_epoch<e>.cbck
//! <root>/global/node<k>_epoch<e>.cbck
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::container::{container_pack, container_unpack, CheckpointBlock};
use super::CkptError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointLevel {
    Local,
    Buddy,
    Global,
}

impl CheckpointLevel {
    pub const ALL: [CheckpointLevel; 3] = [Self::Local, Self::Buddy, Self::Global];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Local => "local",
            Self::Buddy => "buddy",
            Self::Global => "global",
        }
    }
}

impl std::str::FromStr for CheckpointLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "local" => Ok(Self::Local),
            "buddy" => Ok(Self::Buddy),
            "global" => Ok(Self::Global),
            _ => Err(format!("unknown checkpoint level '{s}' (local, buddy, global)")),
        }
    }
}

/// Where one epoch lives. Buddy copies are keyed by the node they protect.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckpointSet {
    pub epoch: u64,
    pub local: BTreeMap<usize, PathBuf>,
    pub buddy: BTreeMap<usize, PathBuf>,
    pub global: BTreeMap<usize, PathBuf>,
    /// Completeness per level, indexed like `CheckpointLevel::ALL`.
    pub complete: [bool; 3],
    /// A Buddy request on a single node was written at Global instead.
    pub downgraded: bool,
}

impl CheckpointSet {
    pub fn is_complete(&self, level: CheckpointLevel) -> bool {
        self.complete[level as usize]
    }
}

/// Result of a restart: the epoch, each rank's image, and the tier each
/// node's container was read from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Restored {
    pub epoch: u64,
    pub images: Vec<Vec<u8>>,
    pub sources: BTreeMap<usize, CheckpointLevel>,
}

pub const RETAIN: usize = 2;

pub struct CheckpointStore {
    root: PathBuf,
    rank_nodes: Vec<usize>,
    nodes: usize,
    db: Mutex<BTreeMap<u64, CheckpointSet>>,
}

fn io(path: &Path, e: std::io::Error) -> CkptError {
    CkptError::Io(format!("{}: {e}", path.display()))
}

impl CheckpointStore {
    /// `rank_nodes[r]` is the node rank `r` runs on; nodes are numbered
    /// 0..n within the module.
    pub fn new(root: impl Into<PathBuf>, rank_nodes: Vec<usize>) -> Self {
        let nodes = rank_nodes.iter().max().map_or(0, |m| m + 1);
        CheckpointStore {
            root: root.into(),
            rank_nodes,
            nodes,
            db: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn buddy(&self, node: usize) -> usize {
        (node + 1) % self.nodes
    }

    pub fn node_dir(&self, node: usize) -> PathBuf {
        self.root.join(format!("node{node}"))
    }

    pub fn global_dir(&self) -> PathBuf {
        self.root.join("global")
    }

    pub fn local_path(&self, node: usize, epoch: u64) -> PathBuf {
        self.node_dir(node).join(format!("epoch{epoch}.cbck"))
    }

    pub fn buddy_path(&self, node: usize, epoch: u64) -> PathBuf {
        self.node_dir(self.buddy(node))
            .join(format!("buddy_of_{node}_epoch{epoch}.cbck"))
    }

    pub fn global_path(&self, node: usize, epoch: u64) -> PathBuf {
        self.global_dir().join(format!("node{node}_epoch{epoch}.cbck"))
    }

    fn path(&self, level: CheckpointLevel, node: usize, epoch: u64) -> PathBuf {
        match level {
            CheckpointLevel::Local => self.local_path(node, epoch),
            CheckpointLevel::Buddy => self.buddy_path(node, epoch),
            CheckpointLevel::Global => self.global_path(node, epoch),
        }
    }

    fn ranks_on(&self, node: usize) -> Vec<usize> {
        (0..self.rank_nodes.len())
            .filter(|&r| self.rank_nodes[r] == node)
            .collect()
    }

    /// Write one epoch; `images[r]` is rank r's state.
    pub fn write(
        &self,
        epoch: u64,
        level: CheckpointLevel,
        images: &[Vec<u8>],
    ) -> Result<CheckpointSet, CkptError> {
        if images.len() != self.rank_nodes.len() {
            return Err(CkptError::RankCount {
                expected: self.rank_nodes.len(),
                got: images.len(),
            });
        }
        let mut db = self.db.lock().unwrap();
        let mut set = CheckpointSet {
            epoch,
            ..Default::default()
        };
        let mut level = level;
        if level == CheckpointLevel::Buddy && self.nodes < 2 {
            log::warn!("buddy checkpoint needs two nodes; epoch {epoch} written to the global store");
            level = CheckpointLevel::Global;
            set.downgraded = true;
        }
        let mut tiers = vec![CheckpointLevel::Local];
        if level >= CheckpointLevel::Buddy && self.nodes >= 2 {
            tiers.push(CheckpointLevel::Buddy);
        }
        if level == CheckpointLevel::Global {
            tiers.push(CheckpointLevel::Global);
        }
        for node in 0..self.nodes {
            let blocks: Vec<CheckpointBlock> = self
                .ranks_on(node)
                .into_iter()
                .map(|r| CheckpointBlock::new(r as u32, epoch, images[r].clone()))
                .collect();
            let img = container_pack(&blocks)?;
            for &t in &tiers {
                let path = self.path(t, node, epoch);
                let dir = path.parent().unwrap();
                fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
                fs::write(&path, &img).map_err(|e| io(&path, e))?;
                match t {
                    CheckpointLevel::Local => set.local.insert(node, path),
                    CheckpointLevel::Buddy => set.buddy.insert(node, path),
                    CheckpointLevel::Global => set.global.insert(node, path),
                };
            }
        }
        for t in CheckpointLevel::ALL {
            set.complete[t as usize] = self.level_complete(t, epoch);
        }
        db.insert(epoch, set.clone());
        self.prune(&mut db)?;
        Ok(set)
    }

    fn read_node(&self, level: CheckpointLevel, node: usize, epoch: u64) -> Option<Vec<CheckpointBlock>> {
        let bytes = fs::read(self.path(level, node, epoch)).ok()?;
        let blocks = container_unpack(&bytes, epoch).ok()?;
        let want = self.ranks_on(node);
        let mut got: Vec<usize> = blocks.iter().map(|b| b.rank as usize).collect();
        got.sort_unstable();
        (got == want).then_some(blocks)
    }

    /// Every rank's block is present and valid at `level` for `epoch`.
    pub fn level_complete(&self, level: CheckpointLevel, epoch: u64) -> bool {
        self.nodes > 0 && (0..self.nodes).all(|n| self.read_node(level, n, epoch).is_some())
    }

    /// Epochs with at least one file in the given tier.
    fn epochs_in(&self, level: CheckpointLevel) -> BTreeSet<u64> {
        let mut out = BTreeSet::new();
        let dirs: Vec<PathBuf> = match level {
            CheckpointLevel::Global => vec![self.global_dir()],
            _ => (0..self.nodes).map(|n| self.node_dir(n)).collect(),
        };
        for dir in dirs {
            let Ok(rd) = fs::read_dir(&dir) else { continue };
            for entry in rd.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                if let Some((lvl, _, e)) = parse_name(&name) {
                    if lvl == level {
                        out.insert(e);
                    }
                }
            }
        }
        out
    }

    /// All epochs found on disk, any tier.
    pub fn epochs(&self) -> BTreeSet<u64> {
        CheckpointLevel::ALL
            .iter()
            .flat_map(|&l| self.epochs_in(l))
            .collect()
    }

    fn remove(&self, level: CheckpointLevel, epoch: u64) -> Result<(), CkptError> {
        for node in 0..self.nodes {
            let path = self.path(level, node, epoch);
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(io(&path, e)),
            }
        }
        Ok(())
    }

    /// Keep the newest `RETAIN` epochs of each tier and its newest complete one.
    fn prune(&self, db: &mut BTreeMap<u64, CheckpointSet>) -> Result<(), CkptError> {
        for level in CheckpointLevel::ALL {
            let epochs = self.epochs_in(level);
            let newest_complete = epochs
                .iter()
                .rev()
                .find(|&&e| self.level_complete(level, e))
                .copied();
            for &e in epochs.iter().rev().skip(RETAIN) {
                if Some(e) == newest_complete {
                    continue;
                }
                self.remove(level, e)?;
                if let Some(set) = db.get_mut(&e) {
                    match level {
                        CheckpointLevel::Local => set.local.clear(),
                        CheckpointLevel::Buddy => set.buddy.clear(),
                        CheckpointLevel::Global => set.global.clear(),
                    }
                    set.complete[level as usize] = false;
                }
            }
        }
        db.retain(|_, s| !(s.local.is_empty() && s.buddy.is_empty() && s.global.is_empty()));
        Ok(())
    }

    /// Sets written through this store that still have files.
    pub fn database(&self) -> Vec<CheckpointSet> {
        self.db.lock().unwrap().values().cloned().collect()
    }

    /// Wipe a node's local store, as if the node had failed.
    pub fn destroy_node_store(&self, node: usize) -> Result<(), CkptError> {
        let dir = self.node_dir(node);
        match fs::remove_dir_all(&dir) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(io(&dir, e)),
        }
    }

    /// Newest epoch whose every node can be recovered without reading the
    /// stores of `failed` nodes. Each node tries its own store, then its
    /// buddy's, then the global store.
    pub fn restart_latest(&self, failed: &BTreeSet<usize>) -> Result<Restored, CkptError> {
        'epochs: for epoch in self.epochs().into_iter().rev() {
            let mut images: Vec<Option<Vec<u8>>> = vec![None; self.rank_nodes.len()];
            let mut sources = BTreeMap::new();
            for node in 0..self.nodes {
                let holder = |level| match level {
                    CheckpointLevel::Local => Some(node),
                    CheckpointLevel::Buddy => Some(self.buddy(node)),
                    CheckpointLevel::Global => None,
                };
                let found = CheckpointLevel::ALL.into_iter().find_map(|level| {
                    if holder(level).is_some_and(|h| failed.contains(&h)) {
                        return None;
                    }
                    self.read_node(level, node, epoch).map(|b| (level, b))
                });
                let Some((level, blocks)) = found else { continue 'epochs };
                sources.insert(node, level);
                for b in blocks {
                    images[b.rank as usize] = Some(b.payload);
                }
            }
            if let Some(images) = images.into_iter().collect::<Option<Vec<_>>>() {
                log::info!("restarting from epoch {epoch}");
                return Ok(Restored {
                    epoch,
                    images,
                    sources,
                });
            }
        }
        Err(CkptError::NoRecoverableEpoch)
    }
}

/// Parse a store file name into (tier, node, epoch). For buddy copies the
/// node is the one protected.
pub fn parse_name(name: &str) -> Option<(CheckpointLevel, usize, u64)> {
    let stem = name.strip_suffix(".cbck")?;
    if let Some(rest) = stem.strip_prefix("buddy_of_") {
        let (j, e) = rest.split_once("_epoch")?;
        return Some((CheckpointLevel::Buddy, j.parse().ok()?, e.parse().ok()?));
    }
    if let Some(e) = stem.strip_prefix("epoch") {
        return Some((CheckpointLevel::Local, usize::MAX, e.parse().ok()?));
    }
    let rest = stem.strip_prefix("node")?;
    let (k, e) = rest.split_once("_epoch")?;
    Some((CheckpointLevel::Global, k.parse().ok()?, e.parse().ok()?))
}
