use std::fmt::Write;

use super::RankId;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    /// Virtual time at completion of the operation, seconds.
    pub time: f64,
    pub rank: RankId,
    pub op: &'static str,
    pub peer: Option<RankId>,
    pub bytes: usize,
}

/// One line per event: `time_us,rank,op,peer,bytes`.
pub fn trace_csv(events: &[TraceEvent]) -> String {
    let mut out = String::from("time_us,rank,op,peer,bytes\n");
    for e in events {
        let peer = e.peer.map_or_else(|| "-".to_string(), |p| p.to_string());
        writeln!(
            out,
            "{:.6},{},{},{},{}",
            e.time * 1e6,
            e.rank,
            e.op,
            peer,
            e.bytes
        )
        .unwrap();
    }
    out
}
