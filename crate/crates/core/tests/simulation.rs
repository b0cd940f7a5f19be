use std::sync::OnceLock;

use searchmesh_core::config::MissionConfig;
use searchmesh_core::fleet::{BidMatrix, FleetState};
use searchmesh_core::faultmodel::FaultState;
use searchmesh_core::mdp::SolveOptions;
use searchmesh_core::sim::{
    compare_baselines, run_scenario, run_stream, Assigner, Command, MissionScenario, OutcomeMode, Policies,
    ScriptedEvent, UavInit, World,
};
use searchmesh_core::snapshot::{solve_snapshot, ModelKind};

fn policies() -> &'static Policies {
    static P: OnceLock<Policies> = OnceLock::new();
    P.get_or_init(|| {
        let cfg = MissionConfig::reduced(2, 2, 2).unwrap();
        let opts = SolveOptions::new(1e-6);
        let (u, _) = solve_snapshot(ModelKind::Uav, &cfg, &opts).unwrap();
        let (f, _) = solve_snapshot(ModelKind::Fleet, &cfg, &opts).unwrap();
        Policies::from_snapshots(&u, &f).unwrap()
    })
}

fn scenario(goals: Vec<u8>, mode: OutcomeMode) -> MissionScenario {
    MissionScenario {
        name: "two-goal".into(),
        goals,
        uavs: vec![
            UavInit { location: 1, soc: 1.0, fault: 1, commit: 0 },
            UavInit { location: 2, soc: 1.0, fault: 1, commit: 0 },
        ],
        seed: 99,
        epoch_limit: 40,
        mode,
        stochastic_recurrence: false,
        events: vec![],
    }
}

#[test]
fn seeded_runs_are_byte_identical() {
    let p = policies();
    let sc = scenario(vec![2, 1], OutcomeMode::Sampled);
    for stream in [0, 5, 17] {
        let a = run_stream(&sc, p, Assigner::Mdp, stream).unwrap();
        let b = run_stream(&sc, p, Assigner::Mdp, stream).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json_lines(), b.to_json_lines());
        a.check_consistency().unwrap();
    }
    let r1 = run_stream(&sc, p, Assigner::RandomFeasible, 3).unwrap();
    let r2 = run_stream(&sc, p, Assigner::RandomFeasible, 3).unwrap();
    assert_eq!(r1.to_json_lines(), r2.to_json_lines());
}

#[test]
fn statistics_do_not_depend_on_the_worker_count() {
    let p = policies();
    let sc = scenario(vec![2, 2], OutcomeMode::Sampled);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| compare_baselines(&sc, p, &[Assigner::Mdp, Assigner::GreedyNearest], 40).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn self_comparison_gives_identical_statistics() {
    let p = policies();
    let sc = scenario(vec![2, 1], OutcomeMode::Sampled);
    let stats = compare_baselines(&sc, p, &[Assigner::Mdp, Assigner::Mdp], 50).unwrap();
    let (a, b) = (&stats[0], &stats[1]);
    assert_eq!(a.mean_cost, b.mean_cost);
    assert_eq!(a.stderr_cost, b.stderr_cost);
    assert_eq!(a.completed, b.completed);
}

#[test]
fn nothing_to_do_gives_an_idle_trace() {
    let p = policies();
    let sc = scenario(vec![0, 0], OutcomeMode::Expected);
    let t = run_scenario(&sc, p, Assigner::Mdp).unwrap();
    assert!(t.records.iter().all(|r| r.is_idle()));
    assert!(t.assignment_sequence().is_empty());
    assert_eq!(t.completed_at, Some(0));

    let mut w = World::new(&p.config, &sc).unwrap();
    let (goals, uavs) = (w.goals.clone(), w.uavs.clone());
    for e in 1..=5 {
        let r = w.step_epoch(p, Assigner::Mdp).unwrap();
        assert!(r.is_idle());
        assert_eq!(w.epoch, e);
        assert_eq!(w.goals, goals);
        assert_eq!(w.uavs, uavs);
    }
}

#[test]
fn expected_mode_ignores_the_seed() {
    let p = policies();
    let mut sc = scenario(vec![2, 2], OutcomeMode::Expected);
    let a = run_scenario(&sc, p, Assigner::Mdp).unwrap();
    sc.seed = 12345;
    let b = run_scenario(&sc, p, Assigner::Mdp).unwrap();
    assert_eq!(a.assignment_sequence(), b.assignment_sequence());
    assert!(a.ends_idle());
}

#[test]
fn camera_failure_triggers_reassignment() {
    let p = policies();
    let base = scenario(vec![2, 2], OutcomeMode::Expected);
    let plain = run_scenario(&base, p, Assigner::Mdp).unwrap();
    let mut faulted = base.clone();
    faulted.events.push(ScriptedEvent {
        epoch: 0,
        command: Command::InjectFault { uav: 2, fault: 12 },
    });
    let t = run_scenario(&faulted, p, Assigner::Mdp).unwrap();
    let first = &t.records[0];
    assert_eq!(first.dispatched[1], 0, "a UAV with a failed camera is not dispatched");
    assert_ne!(first.dispatched, plain.records[0].dispatched);
    t.check_consistency().unwrap();
}

#[test]
fn malformed_commands_are_rejected() {
    let p = policies();
    let mut w = World::new(&p.config, &scenario(vec![1, 1], OutcomeMode::Expected)).unwrap();
    assert!(w.enqueue(Command::SetGoalPriority { goal: 3, level: 1 }).is_err());
    assert!(w.enqueue(Command::SetGoalPriority { goal: 1, level: 3 }).is_err());
    assert!(w.enqueue(Command::InjectFault { uav: 0, fault: 2 }).is_err());
    assert!(w.enqueue(Command::InjectFault { uav: 1, fault: 19 }).is_err());
    assert!(w.enqueue(Command::SetSoc { uav: 1, soc: 1.5 }).is_err());
    w.enqueue(Command::SetGoalPriority { goal: 2, level: 0 }).unwrap();
    let r = w.step_epoch(p, Assigner::Mdp).unwrap();
    assert_eq!(r.goals, vec![1, 0]);
}

#[test]
fn live_decision_ignores_a_common_bid_shift() {
    let p = policies();
    let state = FleetState {
        goals: vec![2, 1],
        assign: vec![0, 0],
        faults: vec![FaultState::HEALTHY; 2],
        avail: vec![true, true],
    };
    let bids = BidMatrix { bids: vec![vec![-10.0, -30.0], vec![-25.0, -12.0]] };
    let base = p.decide(&state, &bids).unwrap();
    for shift in [-1000.0, -1.0, 7.5] {
        let moved = BidMatrix {
            bids: bids.bids.iter().map(|r| r.iter().map(|b| b + shift).collect()).collect(),
        };
        let d = p.decide(&state, &moved).unwrap();
        assert_eq!(d.decision, base.decision);
        for (x, y) in d.top.iter().zip(&base.top) {
            assert_eq!(x.decision, y.decision);
            assert!((x.q - y.q).abs() < 1e-9);
        }
    }
}
