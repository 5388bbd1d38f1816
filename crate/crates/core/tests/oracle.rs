mod common;

use common::{forest, gen};
use proptest::prelude::*;
use sparse_alloc::graph::{build_instance, validate_integral};
use sparse_alloc::local::{default_tau, finalize, run_rounds, EngineConfig};
use sparse_alloc::mpc::run_mpc_with_guessing;
use sparse_alloc::oracle::{opt_brute, opt_flow, BRUTE_FORCE_LIMIT};
use sparse_alloc::AllocationInstance;

fn instance_from(nl: usize, nr: usize, mask: u64, caps: &[u32]) -> AllocationInstance {
    let pairs: Vec<(usize, usize)> = (0..nl * nr)
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| (i / nr, nl + i % nr))
        .take(20)
        .collect();
    build_instance(nl, nr, &pairs, caps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn flow_matches_brute_force(
        nl in 1usize..7,
        nr in 1usize..7,
        mask in any::<u64>(),
        caps in proptest::collection::vec(1u32..4, 6),
    ) {
        let g = instance_from(nl, nr, mask, &caps[..nr]);
        let flow = opt_flow(&g);
        prop_assert_eq!(flow.opt_size, opt_brute(&g).unwrap());
        prop_assert_eq!(flow.witness.len(), flow.opt_size);
        prop_assert!(validate_integral(&g, &flow.witness));
    }
}

#[test]
fn brute_force_refuses_large_inputs() {
    let g = gen("random_bipartite:nl=10,nr=10,m=30,seed=1");
    assert!(g.edge_count() > BRUTE_FORCE_LIMIT);
    assert!(opt_brute(&g).is_err());
}

#[test]
fn closed_forms() {
    let star = gen("star:leaves=9,center_cap=4");
    assert_eq!(opt_flow(&star).opt_size, 4);
    let complete = gen("random_bipartite:nl=7,nr=3,p=1,cap=uniform1,seed=0");
    assert_eq!(opt_flow(&complete).opt_size, 3);
    let empty = build_instance(3, 2, &[], &[1, 1]).unwrap();
    assert_eq!(opt_flow(&empty).opt_size, 0);
}

#[test]
fn fractional_weights_never_exceed_optimum() {
    for seed in 0..20u64 {
        let lambda = 1 + (seed % 5) as u32;
        let g = forest(150, 90, lambda, "uniform3", seed);
        let opt = opt_flow(&g).opt_size as f64;
        let local = finalize(
            &g,
            &run_rounds(&g, &EngineConfig::uniform(0.05, default_tau(0.05, lambda))).unwrap(),
        );
        assert!(local.weight() <= opt * (1.0 + 1e-9));
        let mpc = run_mpc_with_guessing(&g, 0.1, 0.5, seed).unwrap();
        assert!(mpc.allocation.weight() <= opt * (1.0 + 1e-9));
    }
}
