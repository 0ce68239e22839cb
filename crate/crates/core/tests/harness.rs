mod common;

use std::collections::BTreeSet;

use cbemu::ckpt::{CheckpointLevel, CheckpointStore};
use cbemu::harness::{
    decode_particles, emit_results, run_scenario, speedup_table, weak_scaling, BenchError,
    CheckpointSpec, Mode, RunOptions, ScalingTable, Scenario, WeakScaling, CSV_HEADER,
};
use cbemu::xpic::SideKind;
use cbemu::PlatformConfig;
use common::replay::replay_error;

fn small(nodes: usize, steps: usize) -> cbemu::xpic::SimParams {
    WeakScaling {
        cells_per_node: 256,
        particles_per_cell: 4,
        steps,
        seed: 3,
        solver_tol: None,
    }
    .params(nodes)
    .unwrap()
}

#[test]
fn clock_oracle_all_modes() {
    let cfg = PlatformConfig::default();
    for mode in Mode::ALL {
        for n in [1, 2, 3, 4] {
            let r = run_scenario(&Scenario::new(mode, n, small(n, 4)), &cfg, &RunOptions::default()).unwrap();
            let e = replay_error(&r, &cfg);
            assert!(e <= 1e-9, "{mode} {n}: oracle off by {e:e} (total {})", r.total);
        }
    }
}


#[test]
fn breakdown_is_additive() {
    let cfg = PlatformConfig::default();
    for mode in Mode::ALL {
        let r = run_scenario(&Scenario::new(mode, 2, small(2, 3)), &cfg, &RunOptions::default()).unwrap();
        assert!((r.field + r.particle + r.exchange - r.total).abs() <= 1e-12 * r.total);
        let rows = &r.steps.rows;
        assert_eq!(rows.len(), 4);
        let sum: f64 = rows.iter().map(|x| x.t_field + x.t_particle + x.t_exchange).sum();
        // the trailing barrier is the only time outside the step rows
        assert!(sum <= r.total + 1e-15 && r.total - sum < 1e-4, "{mode}: {sum} vs {}", r.total);
        assert!(r.field > 0.0 && r.particle > 0.0);
        assert_eq!(r.pairing, "1:1");
    }
}

#[test]
fn physics_does_not_depend_on_mode() {
    let cfg = PlatformConfig::default();
    let runs: Vec<_> = Mode::ALL
        .iter()
        .map(|&m| run_scenario(&Scenario::new(m, 2, small(2, 5)), &cfg, &RunOptions::default()).unwrap())
        .collect();
    for r in &runs[1..] {
        assert_eq!(r.final_kinetic.to_bits(), runs[0].final_kinetic.to_bits());
        assert_eq!(r.final_field_energy.to_bits(), runs[0].final_field_energy.to_bits());
        let k: Vec<u64> = r.steps.rows.iter().map(|x| x.kinetic.to_bits()).collect();
        let k0: Vec<u64> = runs[0].steps.rows.iter().map(|x| x.kinetic.to_bits()).collect();
        assert_eq!(k, k0);
    }
}

#[test]
fn sequential_and_parallel_agree() {
    let cfg = PlatformConfig::default();
    let s = Scenario::new(Mode::Cb, 2, small(2, 4));
    let a = run_scenario(&s, &cfg, &RunOptions { exec: cbemu::Exec::Sequential, ..Default::default() }).unwrap();
    let b = run_scenario(&s, &cfg, &RunOptions { exec: cbemu::Exec::Parallel, ..Default::default() }).unwrap();
    assert_eq!(a.total.to_bits(), b.total.to_bits());
    assert_eq!(a.steps, b.steps);
}

#[test]
fn zero_nodes_and_bad_interval_rejected() {
    let cfg = PlatformConfig::default();
    let s = Scenario::new(Mode::Cluster, 0, small(1, 1));
    assert!(matches!(run_scenario(&s, &cfg, &RunOptions::default()), Err(BenchError::NoNodes)));
    let mut s = Scenario::new(Mode::Cb, 1, small(1, 1));
    s.checkpoint = Some(CheckpointSpec {
        level: CheckpointLevel::Local,
        interval: 0.0,
        root: std::env::temp_dir(),
    });
    assert!(matches!(run_scenario(&s, &cfg, &RunOptions::default()), Err(BenchError::Interval(_))));
    // more nodes than the machine has
    let s = Scenario::new(Mode::Booster, 9, small(1, 1));
    assert!(matches!(run_scenario(&s, &cfg, &RunOptions::default()), Err(BenchError::Alloc(_))));
}

#[test]
fn checkpoints_restore_the_particle_state() {
    let cfg = PlatformConfig::default();
    let dir = tempfile::tempdir().unwrap();
    for (mode, level) in [(Mode::Cb, CheckpointLevel::Buddy), (Mode::Cluster, CheckpointLevel::Global)] {
        let root = dir.path().join(mode.as_str());
        let mut s = Scenario::new(mode, 3, small(3, 6));
        let probe = run_scenario(&s, &cfg, &RunOptions::default()).unwrap();
        s.checkpoint = Some(CheckpointSpec {
            level,
            interval: probe.total / 4.0,
            root: root.clone(),
        });
        let r = run_scenario(&s, &cfg, &RunOptions { capture: true, ..Default::default() }).unwrap();
        assert!(r.checkpoints.len() >= 2, "{:?}", r.checkpoints);
        // checkpointing does not perturb the run
        assert_eq!(r.total.to_bits(), probe.total.to_bits());

        let side = if mode == Mode::Cb { SideKind::Booster } else { SideKind::Monolithic };
        let store = CheckpointStore::new(root, vec![0, 1, 2]);
        let lost: BTreeSet<usize> = [1].into();
        let got = store.restart_latest(&lost).unwrap();
        assert_eq!(got.epoch, *r.checkpoints.last().unwrap());
        for (rank, img) in got.images.iter().enumerate() {
            let (step, parts) = decode_particles(img).unwrap();
            assert_eq!(step as u64, got.epoch);
            let snap = &r.log(side, rank).unwrap().snapshots[step];
            assert_eq!(snap.particles, parts.parts);
        }
    }
}

#[test]
fn results_files() {
    let cfg = PlatformConfig::default();
    let w = WeakScaling {
        cells_per_node: 64,
        particles_per_cell: 2,
        steps: 2,
        seed: 9,
        solver_tol: None,
    };
    let (t, reports) = weak_scaling(&Mode::ALL, &[1, 2], &w, &cfg, &RunOptions::default()).unwrap();
    assert_eq!(t.rows.len(), 6);
    for row in &t.rows {
        if row.nodes == 1 {
            assert_eq!((row.speedup, row.efficiency), (1.0, 1.0));
        }
        assert!((row.speedup - row.nodes as f64 * row.efficiency).abs() < 1e-12);
    }
    let sp = speedup_table(&reports);
    assert_eq!(sp.len(), 2);
    assert!(sp.iter().all(|r| r.cluster_over_cb.is_some() && r.booster_over_cb.is_some()));

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let files = emit_results(&t, a.path()).unwrap();
    assert_eq!(files.len(), 3);
    emit_results(&t, b.path()).unwrap();
    for name in ["results.csv", "runtime.dat", "efficiency.dat"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap()
        );
    }
    let csv = std::fs::read_to_string(a.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 7);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 8));
    let dat = std::fs::read_to_string(a.path().join("efficiency.dat")).unwrap();
    assert_eq!(dat.lines().next().unwrap(), "# nodes cluster booster cb");
    assert_eq!(dat.lines().count(), 3);

    // a missing mode shows up as nan, an empty table as a bare header
    let partial = ScalingTable {
        rows: t.rows.iter().filter(|r| !(r.mode == Mode::Cb && r.nodes == 2)).cloned().collect(),
    };
    assert!(partial.plot_data(|r| r.total, 3).lines().nth(2).unwrap().ends_with(" nan"));
    assert_eq!(ScalingTable::default().to_csv(), format!("{CSV_HEADER}\n"));
}

#[test]
fn node_counts_must_start_at_one() {
    let cfg = PlatformConfig::default();
    let w = WeakScaling {
        cells_per_node: 64,
        particles_per_cell: 1,
        steps: 1,
        seed: 1,
        solver_tol: None,
    };
    for bad in [&[2usize, 4][..], &[1, 1], &[1, 4, 2], &[]] {
        assert!(matches!(
            weak_scaling(&[Mode::Cb], bad, &w, &cfg, &RunOptions::default()),
            Err(BenchError::Counts(_))
        ));
    }
}
