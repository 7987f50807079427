use std::collections::BTreeSet;

use acute::curriculum::synthetic::{
    brute_force_optimum, CostTable, EnumeratingProposer, TableTrainer,
};
use acute::curriculum::{generate_ac, BeamConfig};
use acute::env::audit::audit_random_walk;
use acute::env::{GridWorld, PlanarWorld};
use acute::mapping::AffineMap;
use acute::params::{goal_categories, random_task, GoalCategory, ParamRanges, Variant};
use acute::seed::stream;
use proptest::prelude::*;

fn category() -> impl Strategy<Value = GoalCategory> {
    (0..3usize).prop_map(|i| goal_categories()[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_walks_keep_every_invariant(seed in any::<u64>(), cat in category(), fire in any::<bool>()) {
        let variant = if fire { Variant::Fire } else { Variant::Plain };
        let ranges = ParamRanges::lf_default(variant);
        let mut rng = stream(seed, &[]);
        let lf = vec![random_task(&mut rng, &ranges, cat).unwrap()];
        let map = AffineMap::default_for(ranges);
        let hf = vec![map.forward(&lf[0])];

        let g = audit_random_walk(&mut GridWorld::new(), &lf, 2_000, &mut rng).unwrap();
        prop_assert_eq!(g.violations, vec![]);
        let p = audit_random_walk(&mut PlanarWorld::new(), &hf, 2_000, &mut rng).unwrap();
        prop_assert_eq!(p.violations, vec![]);
    }

    #[test]
    fn beam_search_respects_its_shape(seed in 0..500u64, w in 1..4usize, n in 1..5usize, u in 3..6usize) {
        let table = CostTable::seeded(seed);
        let cfg = BeamConfig { width_w: w, branch_n: n, length_u: u };
        let out = generate_ac(
            &table.target(),
            &cfg,
            &TableTrainer { table: &table },
            &EnumeratingProposer::new(&table),
            seed,
        )
        .unwrap();

        prop_assert_eq!(out.levels.len(), u);
        let mut kept = 0;
        for (i, lt) in out.levels.iter().enumerate() {
            // the target level has a single child per kept node
            let expected = match i {
                0 => n,
                _ if i + 1 == u => kept,
                _ => kept * n,
            };
            prop_assert_eq!(lt.candidates.len(), expected);
            kept = lt.selected.len();
            if i + 1 < u {
                prop_assert_eq!(kept, w.min(expected));
            }
        }
        // every kept branch ends on the target
        let last = out.levels.last().unwrap();
        prop_assert!(last.candidates.iter().all(|&c| out.nodes[c].params == table.target()));

        let path = out.result.params();
        prop_assert_eq!(path.len(), u);
        let sources: BTreeSet<_> = path[..u - 1].iter().map(|p| p.goal.category()).collect();
        prop_assert_eq!(sources.len(), (u - 1).min(3));

        let total: usize = out.nodes.iter().map(|x| x.timesteps_used).sum();
        prop_assert_eq!(out.result.sunk_cost_timesteps, total);
        prop_assert!(out.result.path_episodes() >= brute_force_optimum(&table, u).0);
    }
}
