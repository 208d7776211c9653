//! Property tests over random graphs, node functions, and game seeds.

use proptest::prelude::*;

use regret_lab_core::calculus::{self, NodeFunction};
use regret_lab_core::corrector::{self, Convention};
use regret_lab_core::digraph::LabeledDigraph;
use regret_lab_core::game::{self, GameConfig, InvestorStrategy, MarketStrategy};
use regret_lab_core::value::{ExpertPanel, Payoff};

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// The stub-pairing generator always yields Eulerian graphs, and the
    /// circuit it admits covers each edge exactly once.
    #[test]
    fn random_graphs_are_eulerian(nodes in 2usize..=24, seed in any::<u64>()) {
        let g = LabeledDigraph::random_eulerian(nodes, seed).unwrap();
        g.check_eulerian().unwrap();
        let cycle = g.eulerian_cycle().unwrap();
        prop_assert_eq!(cycle.len(), g.edge_count());
        let mut used = vec![0usize; g.edge_count()];
        for &e in cycle.edges() {
            used[e] += 1;
        }
        prop_assert!(used.iter().all(|&u| u == 1));
    }

    /// Poisson solve meets its residual everywhere, on random instances.
    #[test]
    fn poisson_residual_on_random_graphs(nodes in 2usize..=16, seed in any::<u64>()) {
        let g = LabeledDigraph::random_eulerian(nodes, seed).unwrap();
        let h = NodeFunction::random(nodes, seed ^ 0xabcdef);
        let mean_h = calculus::mean(&h);
        let sol = calculus::solve_poisson(&g, &h).unwrap();
        for x in 0..nodes {
            let r = (calculus::laplacian(&g, &sol, x).unwrap() - (h.get(x) - mean_h)).abs();
            prop_assert!(r <= calculus::POISSON_TOL, "residual {r:.2e} at node {x}");
        }
    }

    /// Gradients telescope to zero over every enumerated simple cycle.
    #[test]
    fn gradient_telescopes(nodes in 2usize..=10, seed in any::<u64>()) {
        let g = LabeledDigraph::random_eulerian(nodes, seed).unwrap();
        let v = NodeFunction::random(nodes, seed ^ 0x5555);
        for cycle in g.simple_cycles(10_000).unwrap() {
            let total: f64 = cycle
                .edges()
                .iter()
                .map(|&e| calculus::grad(&g, &v, e).unwrap())
                .sum();
            prop_assert!(total.abs() <= 1e-13);
        }
    }

    /// The Poisson corrector achieves indifference on arbitrary Eulerian
    /// instances; arbitrary correctors still satisfy the sandwich.
    #[test]
    fn indifference_and_sandwich(nodes in 2usize..=10, seed in any::<u64>()) {
        let g = LabeledDigraph::random_eulerian(nodes, seed).unwrap();
        let h = NodeFunction::random(nodes, seed ^ 0x1234);
        let report =
            corrector::verify_indifference(&g, &h, Convention::InvestorLp, 100_000).unwrap();
        prop_assert!(report.indifferent);

        let arbitrary = NodeFunction::random(nodes, seed ^ 0x9876);
        let loose =
            corrector::lp_report(&g, &h, &arbitrary, Convention::InvestorLp, 100_000).unwrap();
        prop_assert!(loose.m_market <= loose.mean_h + 1e-12);
        prop_assert!(loose.mean_h <= loose.m_investor + 1e-12);
    }

    /// Transcripts replay exactly and respect the state recursion.
    #[test]
    fn transcript_replays(seed in any::<u64>(), n_steps in 1usize..=64) {
        let panel = ExpertPanel::history_sensitive(1, 0.6).unwrap();
        let cfg = GameConfig::canonical(panel, Payoff::Max, n_steps).unwrap();
        let t = game::simulate(
            &cfg,
            &InvestorStrategy::PerturbedFStar { amplitude: 0.1 },
            MarketStrategy::Random,
            seed,
        )
        .unwrap();
        prop_assert_eq!(t.steps.len(), n_steps);
        let eps = cfg.epsilon();
        let mut x = cfg.start_x;
        let mut m = cfg.start_m;
        for s in &t.steps {
            prop_assert!(s.f.abs() <= 1.0);
            prop_assert_eq!(s.m, m);
            let q = cfg.panel.predictions(m);
            let bv = s.b.value();
            x = [x[0] + eps * bv * (q[0] - s.f), x[1] + eps * bv * (q[1] - s.f)];
            prop_assert_eq!(x, s.x);
            m = m.concat(s.b);
        }
        prop_assert_eq!(x, t.final_x);
    }
}
