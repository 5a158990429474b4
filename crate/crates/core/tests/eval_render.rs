use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitt_core::envs::{MazeDims, MazeEnv, MazeLayout, Outcome, Pos};
use sitt_core::eval::{evaluate, evaluate_maze_with, layout_set, EvalSet};
use sitt_core::metrics::RunSummary;
use sitt_core::policy::{Actor, NetConfig, PolicyBundle};
use sitt_core::render::{maze_cell_fraction, ppm, region_step_fraction, trajectory_text, Occupancy};
use sitt_core::report::table;
use sitt_core::rng::Stream;

const HAND: &str = "\
.......
...G...
.#oo##.
.#o###.
.#o###.
.#o###.
..S....
";

#[test]
fn three_step_trajectory_matches_golden_text() {
    let mut env = MazeEnv::new(MazeLayout::from_text(HAND).unwrap(), 300);
    let mut trajectory = vec![env.state.pos];
    for a in [0, 0, 1] {
        env.step(a).unwrap();
        trajectory.push(env.state.pos);
    }
    let golden = include_str!("golden/trajectory_3step.txt");
    assert_eq!(trajectory_text(&env.layout, &trajectory), golden);
}

#[test]
fn pixmap_has_header_and_one_pixel_per_scaled_cell() {
    let layout = MazeLayout::from_text(HAND).unwrap();
    let mut occ = Occupancy::new(7, 7);
    occ.add(&[Pos::new(2, 6), Pos::new(2, 5), Pos::new(2, 4)]).unwrap();
    let img = ppm(&layout, Some(&occ), 3).unwrap();
    let header = b"P6\n21 21\n255\n";
    assert_eq!(&img[..header.len()], header);
    assert_eq!(img.len(), header.len() + 21 * 21 * 3);
    let lava = &img[header.len() + (6 * 21 + 3) * 3..][..3];
    assert_eq!(lava, [200, 50, 40]);
}

#[test]
fn random_actions_rarely_reach_the_goal() {
    let layouts = layout_set(3, Stream::EvalLayouts, MazeDims::scaled(), 15).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut wins, mut episodes) = (0, 0);
    for _ in 0..20 {
        let mut envs: Vec<MazeEnv> = layouts.iter().map(|l| MazeEnv::new(l.clone(), 300)).collect();
        let r = evaluate_maze_with(&mut envs, 0.99, |o| {
            Ok(o.envs.iter().map(|_| rng.random_range(0..4)).collect())
        })
        .unwrap();
        wins += r.episodes.iter().filter(|e| e.outcome == Outcome::Success).count();
        episodes += r.episodes.len();
    }
    let rate = wins as f64 / episodes as f64;
    assert!(rate < 0.05, "random success rate {rate}");
}

#[test]
fn deterministic_evaluation_repeats_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let b = PolicyBundle::new(
        20,
        16,
        sitt_core::envs::ActionSpace::Discrete(4),
        &NetConfig::default(),
        &mut rng,
    )
    .unwrap();
    let set = EvalSet::maze_heldout(4, MazeDims::scaled(), 15, 300).unwrap();
    let a = evaluate(&b, Actor::Student, &set, 0.99).unwrap();
    let c = evaluate(&b, Actor::Student, &set, 0.99).unwrap();
    assert_eq!(a, c);
    assert_eq!(a.episodes.len(), 15);
}

#[test]
fn route_fractions_count_the_right_cells() {
    let layout = MazeLayout::from_text(HAND).unwrap();
    let mut env = MazeEnv::new(layout.clone(), 300);
    let mut inside = vec![env.state.pos];
    for a in [0, 0, 0, 0, 1, 0] {
        env.step(a).unwrap();
        inside.push(env.state.pos);
    }
    let mut env = MazeEnv::new(layout.clone(), 300);
    let mut around = vec![env.state.pos];
    for a in [1, 1, 1, 1, 0, 0, 0, 0, 0, 3, 3, 3] {
        env.step(a).unwrap();
        around.push(env.state.pos);
    }
    let rec = |positions: Vec<Pos>, outcome| sitt_core::eval::EpisodeRecord {
        outcome,
        task_return: 0.0,
        discounted_return: 0.0,
        length: (positions.len() - 1) as u32,
        max_abs_reward: 0.0,
        positions,
    };
    let ls = [layout.clone(), layout];
    let eps = [rec(inside, Outcome::Success), rec(around, Outcome::Success)];
    assert_eq!(maze_cell_fraction(&ls[..1], &eps[..1]), 5.0 / 6.0);
    assert_eq!(maze_cell_fraction(&ls[1..], &eps[1..]), 0.0);
    assert_eq!(region_step_fraction(&ls[..1], &eps[..1]), 5.0 / 6.0);
    assert_eq!(region_step_fraction(&ls[1..], &eps[1..]), 0.0);
}

fn summary(mode: &str, seed: u64, s: f64) -> RunSummary {
    RunSummary {
        mode: mode.into(),
        seed,
        config_hash: String::new(),
        iterations: 1,
        env_steps: 1,
        paired_obs: 1,
        teacher_success: 1.0,
        student_success: s,
        final_epsilon: None,
    }
}

#[test]
fn report_lists_mean_and_std_per_method() {
    let runs: Vec<RunSummary> = [1.0, 0.8, 1.0, 0.6, 1.0]
        .iter()
        .enumerate()
        .map(|(i, &s)| summary("aligned", i as u64, s))
        .chain([summary("bc", 0, 0.0), summary("bc", 1, 0.2)])
        .collect();
    let expected = "\
| Method | Runs | Teacher success | Student success |
|---|---:|---:|---:|
| aligned | 5 | 1.00 ± 0.00 | 0.88 ± 0.16 |
| bc | 2 | 1.00 ± 0.00 | 0.10 ± 0.10 |
";
    assert_eq!(table(&runs), expected);
}
