use std::fmt::Write;

use super::driver::{RankLog, SideKind};

#[derive(Clone, Debug, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub kinetic: f64,
    pub field_energy: f64,
    pub cg_iters: usize,
    pub t_field: f64,
    pub t_particle: f64,
    pub t_exchange: f64,
}

/// Per-step energies and time split of a whole run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepTrace {
    pub rows: Vec<StepRow>,
}

impl StepTrace {
    /// Build from rank logs, reading rank 0 of each side. In split mode the
    /// field time is the Cluster's and the particle time the Booster's; the
    /// exchange column is what remains of the Booster's step.
    pub fn from_logs(logs: &[RankLog]) -> StepTrace {
        let find = |side| logs.iter().find(|l| l.side == side && l.rank == 0);
        let mut rows = Vec::new();
        if let Some(m) = find(SideKind::Monolithic) {
            let mut prev = 0.0;
            for r in &m.records {
                let t_field = r.t_field_solve + r.t_field_diag;
                let t_particle = r.t_particle_solve + r.t_particle_diag;
                rows.push(StepRow {
                    step: r.step,
                    kinetic: r.kinetic.unwrap_or(0.0),
                    field_energy: r.field_energy.unwrap_or(0.0),
                    cg_iters: r.cg.map_or(0, |c| c.iters),
                    t_field,
                    t_particle,
                    t_exchange: (r.clock - prev) - t_field - t_particle,
                });
                prev = r.clock;
            }
        } else if let (Some(c), Some(b)) = (find(SideKind::Cluster), find(SideKind::Booster)) {
            let mut prev = 0.0;
            for (rc, rb) in c.records.iter().zip(&b.records) {
                rows.push(StepRow {
                    step: rb.step,
                    kinetic: rb.kinetic.unwrap_or(0.0),
                    field_energy: rc.field_energy.unwrap_or(0.0),
                    cg_iters: rc.cg.map_or(0, |s| s.iters),
                    t_field: rc.t_field_solve,
                    t_particle: rb.t_particle_solve,
                    t_exchange: (rb.clock - prev) - rc.t_field_solve - rb.t_particle_solve,
                });
                prev = rb.clock;
            }
        }
        StepTrace { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("step,kinetic,field_energy,cg_iters,t_field_us,t_particle_us,t_exchange_us\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.12e},{:.12e},{},{:.6},{:.6},{:.6}",
                r.step,
                r.kinetic,
                r.field_energy,
                r.cg_iters,
                r.t_field * 1e6,
                r.t_particle * 1e6,
                r.t_exchange * 1e6
            )
            .unwrap();
        }
        out
    }
}
