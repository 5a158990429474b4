mod common;

use common::env::{layout_suite, reward_identity, segments};
use proptest::prelude::*;
use sitt_core::envs::color_maze::{collapse_observation, student_observation, teacher_observation};
use sitt_core::envs::{generate_path, ColorMazeBatch, MazeDims, MazeLayout, MazeState, Pos, VecEnv};

#[test]
fn thousand_default_layouts_follow_the_construction() {
    let dims = MazeDims::default();
    assert_eq!(dims.border(), 3);
    let bad = layout_suite(1000, dims);
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn thousand_scaled_layouts_follow_the_construction() {
    let bad = layout_suite(1000, MazeDims::scaled());
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn region_of_height_three_has_only_length_three_verticals() {
    let dims = MazeDims {
        grid_size: 9,
        region_size: 3,
    };
    for seed in 0..200 {
        let l = generate_path(seed, dims).unwrap();
        for (dx, dy, n) in segments(&l) {
            if dx == 0 {
                assert_eq!((dy, n), (-1, 3));
            }
        }
    }
}

#[test]
fn seed_42_matches_the_golden_layout() {
    let golden = include_str!("golden/layout_seed42.txt");
    let l = generate_path(42, MazeDims::default()).unwrap();
    assert_eq!(l.to_text(), golden);
    assert_eq!(MazeLayout::from_text(golden).unwrap(), l);
}

#[test]
fn reward_decomposes_into_its_counted_terms() {
    let mut successes = 0;
    for seed in 0..100 {
        let l = generate_path(seed, MazeDims::scaled()).unwrap();
        let (worst, s) = reward_identity(&l, 20, 300, seed);
        assert!(worst < 1e-12, "seed {seed}: mismatch {worst}");
        successes += s;
    }
    assert!(successes > 100, "too few successful replays ({successes})");
}

#[test]
fn thousand_env_batch_resets_in_one_call() {
    let layouts: Vec<_> = (0..1000)
        .map(|s| generate_path(s, MazeDims::scaled()).unwrap())
        .collect();
    let mut b = ColorMazeBatch::new(layouts, 300);
    let o = b.reset_all();
    assert_eq!(o.teacher.shape(), (1000, 20));
    assert_eq!(o.student.shape(), (1000, 16));
    assert_eq!(o, b.reset_all());
    assert!((0..1000).all(|i| o.teacher.row(i)[18..] == [0.0, 0.0]));
}

fn random_state(seed: u64, x: i32, y: i32, dir: usize) -> (MazeLayout, MazeState) {
    let l = generate_path(seed, MazeDims::scaled()).unwrap();
    let mut s = MazeState::at_start(&l);
    let (w, h) = (l.width() as i32, l.height() as i32);
    s.pos = Pos::new(x.rem_euclid(w), y.rem_euclid(h));
    let (dx, dy) = sitt_core::envs::color_maze::MOVES[dir];
    let prev = Pos::new(s.pos.x - dx, s.pos.y - dy);
    s.prev = if l.in_bounds(prev) { prev } else { s.pos };
    (l, s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn student_observation_is_the_collapsed_teacher_observation(
        seed in 0u64..50, x in 0i32..11, y in 0i32..11, dir in 0usize..4
    ) {
        let (l, s) = random_state(seed, x, y, dir);
        let t = teacher_observation(&s, &l);
        prop_assert_eq!(student_observation(&s, &l), collapse_observation(&t));
        // No student component separates Lava from Path: each neighbor slot is one-hot or empty.
        let st = student_observation(&s, &l);
        for k in 0..4 {
            let slot = &st[2 + 3 * k..5 + 3 * k];
            prop_assert!(slot.iter().sum::<f64>() <= 1.0);
        }
    }
}
