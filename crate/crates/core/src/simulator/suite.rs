//! Built-in scenarios and the scripted-driver dataset.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::prediction::{tree_features, GoalSample};
use crate::prelude::*;
use crate::rng::seeded;
use crate::world::{AgentPolicy, AgentState, ExitBranch, Obstacle, RoadCorridor, Scenario, Vec2};

const LANE: f64 = 1.75;

fn base(corridor: RoadCorridor, lane: f64) -> Scenario {
    let p = corridor.point_at(0.0, lane);
    let ego = AgentState {
        x: p.x,
        y: p.y,
        heading: corridor.heading(0.0),
        speed: 10.0,
        ..Default::default()
    };
    Scenario::new(corridor, ego, 0.2, 15, 10.0).expect("valid built-in scenario")
}

fn straight() -> RoadCorridor {
    RoadCorridor::straight(Vec2::new(0.0, 0.0), 0.0, 400.0, 7.0).expect("valid corridor")
}

fn curve() -> RoadCorridor {
    let r = 120.0;
    let pts = (0..=150)
        .map(|i| {
            let t = i as f64 / 150.0 * 1.5;
            Vec2::new(r * libm::sin(t), r * (1.0 - libm::cos(t)))
        })
        .collect();
    RoadCorridor::new(pts, 7.0).expect("valid corridor")
}

fn agent(sc: &Scenario, id: &str, s: f64, n: f64, speed: f64, policy: AgentPolicy) -> Obstacle {
    let c = &sc.corridor;
    let p = c.point_at(s, n);
    let mut o = Obstacle::new(
        id,
        2.25,
        0.9,
        vec![AgentState {
            x: p.x,
            y: p.y,
            heading: c.heading(s),
            speed,
            ..Default::default()
        }],
    );
    if let AgentPolicy::Follow { route, .. } = &policy {
        o.goal = Some(route.clone());
    }
    o.policy = policy;
    o
}

/// Straight two-lane road with an exit branch forking right at s = 120.
pub fn exit_ramp_scenario() -> Scenario {
    let mut sc = base(straight(), -LANE);
    let path = RoadCorridor::new(
        vec![Vec2::new(120.0, 0.0), Vec2::new(150.0, -8.0), Vec2::new(180.0, -25.0), Vec2::new(200.0, -45.0)],
        4.0,
    )
    .expect("valid branch");
    sc.branches.push(ExitBranch {
        id: "exit".into(),
        fork_s: 120.0,
        path,
        speed: Some(5.0),
    });
    sc
}

/// Ten named scenarios without conflicting traffic, for closed-loop checks.
pub fn nominal_scenarios() -> Vec<(String, Scenario)> {
    let cv = || AgentPolicy::ConstantVelocity;
    let mut out = Vec::new();

    out.push(("empty_straight".into(), base(straight(), -LANE)));

    let mut sc = base(straight(), -LANE);
    sc.obstacles.push(agent(&sc, "parked", 60.0, -LANE, 0.0, cv()));
    out.push(("parked_right".into(), sc));

    let mut sc = base(straight(), LANE);
    sc.obstacles.push(agent(&sc, "parked", 60.0, LANE, 0.0, cv()));
    out.push(("parked_left".into(), sc));

    let mut sc = base(straight(), -LANE);
    sc.obstacles.push(agent(&sc, "leader", 30.0, -LANE, 4.0, cv()));
    out.push(("slow_leader".into(), sc));

    out.push(("curve_empty".into(), base(curve(), -LANE)));

    let mut sc = base(curve(), -LANE);
    sc.obstacles.push(agent(&sc, "parked", 60.0, -LANE, 0.0, cv()));
    out.push(("curve_parked".into(), sc));

    let mut sc = exit_ramp_scenario();
    let follow = AgentPolicy::Follow {
        route: "exit".into(),
        speed: 5.0,
    };
    sc.obstacles.push(agent(&sc, "exiting", 25.0, -LANE, 8.0, follow));
    out.push(("exit_follower".into(), sc));

    let mut sc = exit_ramp_scenario();
    let follow = AgentPolicy::Follow {
        route: "end".into(),
        speed: 10.0,
    };
    sc.obstacles.push(agent(&sc, "through", 25.0, LANE, 9.0, follow));
    out.push(("exit_through".into(), sc));

    let mut sc = base(straight(), -LANE);
    sc.obstacles.push(agent(&sc, "first", 50.0, -LANE, 0.0, cv()));
    sc.obstacles.push(agent(&sc, "second", 110.0, LANE, 0.0, cv()));
    out.push(("slalom".into(), sc));

    let mut sc = base(straight(), -LANE);
    sc.obstacles.push(agent(&sc, "neighbour", 10.0, LANE, 10.0, cv()));
    out.push(("adjacent_traffic".into(), sc));

    out
}

/// Observations of rule-based drivers near the exit of
/// [`exit_ramp_scenario`]. Exiting drivers keep right and slow toward the
/// branch speed; through drivers hold a cruise speed in either lane.
pub fn scripted_driver_samples(count: usize, seed: u64) -> Vec<GoalSample> {
    let sc = exit_ramp_scenario();
    let fork = sc.branches[0].fork_s;
    let mut rng = seeded(seed);
    let noise = |sd: f64| Normal::new(0.0, sd).expect("positive sd");
    let (n_lat, n_speed, n_head) = (noise(0.25), noise(0.3), noise(0.01));
    (0..count)
        .map(|_| {
            let d: f64 = rng.random_range(5.0..100.0);
            let exit = rng.random_bool(0.5);
            let near = 1.0 - d / 100.0;
            let (n, speed, rel) = if exit {
                (
                    -LANE - 0.8 * near + n_lat.sample(&mut rng),
                    5.0 + 2.5 * (1.0 - near) + n_speed.sample(&mut rng),
                    -0.04 * near + n_head.sample(&mut rng),
                )
            } else {
                let lane = if rng.random_bool(0.5) { LANE } else { -LANE };
                (
                    lane + n_lat.sample(&mut rng),
                    rng.random_range(8.5..12.0) + n_speed.sample(&mut rng),
                    n_head.sample(&mut rng),
                )
            };
            let p = sc.corridor.point_at(fork - d, n);
            let a = AgentState {
                x: p.x,
                y: p.y,
                heading: sc.corridor.heading(fork - d) + rel,
                speed: speed.max(0.0),
                ..Default::default()
            };
            GoalSample {
                features: tree_features(&sc, &a).to_vec(),
                goal: if exit { "exit".into() } else { "end".into() },
            }
        })
        .collect()
}
