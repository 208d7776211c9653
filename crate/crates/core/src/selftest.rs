//! Built-in invariant battery behind the `selftest` CLI subcommand.
//!
//! Each check is a trimmed-down version of the library's test suite, sized to
//! run in a few seconds.

use crate::calculus::{self, NodeFunction};
use crate::corrector::{self, Convention};
use crate::digraph::{LabeledDigraph, MarketState, Sign};
use crate::game::{self, GameConfig, InvestorStrategy, MarketStrategy};
use crate::value::{ContinuumValue, ExpertPanel, Payoff, StrategyContext};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn check(
    results: &mut Vec<CheckResult>,
    name: &'static str,
    body: impl FnOnce() -> Result<String, String>,
) {
    let (passed, details) = match body() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    results.push(CheckResult {
        name,
        passed,
        details,
    });
}

/// Run the whole battery; one result per named invariant.
pub fn run() -> Vec<CheckResult> {
    let mut results = Vec::new();

    check(&mut results, "debruijn degrees and labels", || {
        for d in 1..=8 {
            let g = LabeledDigraph::debruijn(d).map_err(|e| e.to_string())?;
            if g.in_degrees().iter().any(|&deg| deg != 2) {
                return Err(format!("d={d}: in-degree violation"));
            }
        }
        Ok("d <= 8".into())
    });

    check(&mut results, "eulerian circuit covers edges", || {
        for d in 1..=6 {
            let g = LabeledDigraph::debruijn(d).map_err(|e| e.to_string())?;
            let c = g.eulerian_cycle().map_err(|e| e.to_string())?;
            if c.len() != g.edge_count() {
                return Err(format!("d={d}: length {} != {}", c.len(), g.edge_count()));
            }
        }
        for seed in 0..5 {
            let g = LabeledDigraph::random_eulerian(10, seed).map_err(|e| e.to_string())?;
            g.eulerian_cycle().map_err(|e| e.to_string())?;
        }
        Ok("de Bruijn d <= 6 and 5 random graphs".into())
    });

    check(&mut results, "poisson residual", || {
        let mut worst: f64 = 0.0;
        for d in 1..=8 {
            let g = LabeledDigraph::debruijn(d).map_err(|e| e.to_string())?;
            let h = NodeFunction::random(g.node_count(), 1000 + d as u64);
            let mean_h = calculus::mean(&h);
            let sol = calculus::solve_poisson(&g, &h).map_err(|e| e.to_string())?;
            for x in 0..g.node_count() {
                let r = (calculus::laplacian(&g, &sol, x).unwrap() - (h.get(x) - mean_h)).abs();
                worst = worst.max(r);
            }
        }
        if worst <= calculus::POISSON_TOL {
            Ok(format!("max residual {worst:.2e}"))
        } else {
            Err(format!("residual {worst:.2e}"))
        }
    });

    check(&mut results, "representation matches solver", || {
        let mut worst: f64 = 0.0;
        for d in 1..=6 {
            let g = LabeledDigraph::debruijn(d).map_err(|e| e.to_string())?;
            let h = NodeFunction::random(g.node_count(), 2000 + d as u64);
            let sol = calculus::solve_poisson(&g, &h).map_err(|e| e.to_string())?;
            let rep = calculus::debruijn_representation(&h, d)
                .map_err(|e| e.to_string())?
                .centered();
            for x in 0..g.node_count() {
                worst = worst.max((sol.get(x) - rep.get(x)).abs());
            }
        }
        if worst <= 1e-10 {
            Ok(format!("max deviation {worst:.2e}"))
        } else {
            Err(format!("deviation {worst:.2e}"))
        }
    });

    check(&mut results, "cycle indifference", || {
        for d in 1..=3 {
            let g = LabeledDigraph::debruijn(d).map_err(|e| e.to_string())?;
            let h = NodeFunction::random(g.node_count(), 3000 + d as u64);
            let report = corrector::verify_indifference(&g, &h, Convention::InvestorLp, 100_000)
                .map_err(|e| e.to_string())?;
            if !report.indifferent {
                return Err(format!("d={d}: not indifferent"));
            }
        }
        for seed in 0..5 {
            let g = LabeledDigraph::random_eulerian(10, 40 + seed).map_err(|e| e.to_string())?;
            let h = NodeFunction::random(10, 50 + seed);
            let report = corrector::verify_indifference(&g, &h, Convention::GeneralLp, 100_000)
                .map_err(|e| e.to_string())?;
            if !report.indifferent {
                return Err(format!("random graph seed {seed}: not indifferent"));
            }
        }
        Ok("de Bruijn d <= 3 and 5 random graphs".into())
    });

    check(&mut results, "heat equation residual", || {
        let panel = ExpertPanel::history_sensitive(1, 0.6).map_err(|e| e.to_string())?;
        let mut worst: f64 = 0.0;
        for payoff in [Payoff::Max, Payoff::LogSumExp] {
            let value = ContinuumValue::new(&panel, payoff).map_err(|e| e.to_string())?;
            for &(v, t) in &[(-1.0, 0.25), (0.5, 0.5), (0.1, 0.75)] {
                let dt = 1e-6;
                let dv = 1e-4;
                let w_t = (value.w(v, t + dt).unwrap() - value.w(v, t - dt).unwrap()) / (2.0 * dt);
                let w_vv = (value.w(v + dv, t).unwrap() - 2.0 * value.w(v, t).unwrap()
                    + value.w(v - dv, t).unwrap())
                    / (dv * dv);
                worst = worst.max((w_t + 0.5 * value.sigma2() * w_vv).abs());
            }
        }
        if worst <= 1e-6 {
            Ok(format!("max residual {worst:.2e}"))
        } else {
            Err(format!("residual {worst:.2e}"))
        }
    });

    check(&mut results, "one-step residual third order", || {
        let panel = ExpertPanel::history_sensitive(1, 0.6).map_err(|e| e.to_string())?;
        let ctx = StrategyContext::new(panel, Payoff::Max, 4096).map_err(|e| e.to_string())?;
        let m: MarketState = "+".parse().unwrap();
        let coarse = ctx
            .one_step_residual([0.7, 0.1], 0.3, m, Sign::Plus, 1.0 / 64.0)
            .map_err(|e| e.to_string())?;
        let fine = ctx
            .one_step_residual([0.7, 0.1], 0.3, m, Sign::Plus, 1.0 / 128.0)
            .map_err(|e| e.to_string())?;
        let ratio = coarse / fine;
        if (6.0..=10.0).contains(&ratio) {
            Ok(format!("halving ratio {ratio:.2}"))
        } else {
            Err(format!("halving ratio {ratio:.2} outside [6, 10]"))
        }
    });

    check(&mut results, "market response case identity", || {
        let panel = ExpertPanel::history_sensitive(1, 0.6).map_err(|e| e.to_string())?;
        let ctx = StrategyContext::new(panel, Payoff::LogSumExp, 256).map_err(|e| e.to_string())?;
        let m: MarketState = "-".parse().unwrap();
        for i in 0..100 {
            let f = -1.0 + 2.0 * (i as f64) / 99.0;
            let fstar = ctx.f_star([0.2, -0.1], 0.4, m).map_err(|e| e.to_string())?;
            let b = ctx
                .b_star([0.2, -0.1], 0.4, m, f)
                .map_err(|e| e.to_string())?
                .value();
            if b * (fstar - f) != (fstar - f).abs() {
                return Err(format!("identity failed at f = {f}"));
            }
        }
        Ok("100 grid predictions".into())
    });

    check(&mut results, "minimax one-step analytic value", || {
        let panel = ExpertPanel::symmetric(1, 0.5).map_err(|e| e.to_string())?;
        let cfg = GameConfig::canonical(panel, Payoff::Max, 1).map_err(|e| e.to_string())?;
        let bracket = game::exact_value(&cfg, 21).map_err(|e| e.to_string())?;
        let analytic = cfg.epsilon() * 0.5;
        if bracket.contains(analytic) && (bracket.upper - analytic).abs() <= 1e-14 {
            Ok(format!("value {analytic}"))
        } else {
            Err(format!(
                "bracket [{}, {}] misses {analytic}",
                bracket.lower, bracket.upper
            ))
        }
    });

    check(&mut results, "transcript determinism", || {
        let panel = ExpertPanel::history_sensitive(1, 0.6).map_err(|e| e.to_string())?;
        let cfg = GameConfig::canonical(panel, Payoff::Max, 256).map_err(|e| e.to_string())?;
        let a = game::simulate(&cfg, &InvestorStrategy::FStar, MarketStrategy::Random, 9)
            .map_err(|e| e.to_string())?;
        let b = game::simulate(&cfg, &InvestorStrategy::FStar, MarketStrategy::Random, 9)
            .map_err(|e| e.to_string())?;
        if a.to_json_value() == b.to_json_value() {
            Ok("identical transcripts".into())
        } else {
            Err("transcripts differ".into())
        }
    });

    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes() {
        let results = run();
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.details);
        }
        assert!(all_passed(&results));
        assert_eq!(results.len(), 10);
    }
}
