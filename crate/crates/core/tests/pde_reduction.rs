//! Independent check of the dimension reduction behind the continuum value.
//!
//! Integrates the full two-dimensional limiting PDE
//! `u_t + 2^{-(d+1)} sum_m <hess u eta_m, eta_m> = 0`, `u(., 1) = g`,
//! backwards from the terminal data on a 2D grid with explicit Euler steps,
//! *without* assuming the translation reduction, and compares against
//! `u(x, t) = x_2 + w(x_1 - x_2, t)` in an interior region far from the
//! artificial Dirichlet boundary.

use regret_lab_core::value::{ContinuumValue, ExpertPanel, Payoff};
use regret_lab_core::MarketState;

struct Grid {
    half_width: f64,
    spacing: f64,
    points: usize,
}

impl Grid {
    fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }
}

/// One explicit Euler step of the backward PDE (forward in tau = 1 - t).
#[allow(clippy::needless_range_loop)]
fn step(panel: &ExpertPanel, grid: &Grid, u: &[Vec<f64>], dtau: f64) -> Vec<Vec<f64>> {
    let n = grid.points;
    let dx = grid.spacing;
    let d = panel.depth();
    let histories: Vec<MarketState> = (0..1usize << d)
        .map(|m| MarketState::from_index(m, d).unwrap())
        .collect();
    let weight = 1.0 / (1usize << (d + 1)) as f64;
    let mut next = u.to_vec();
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let u_x1 = (u[i + 1][j] - u[i - 1][j]) / (2.0 * dx);
            let u_x2 = (u[i][j + 1] - u[i][j - 1]) / (2.0 * dx);
            let u_11 = (u[i + 1][j] - 2.0 * u[i][j] + u[i - 1][j]) / (dx * dx);
            let u_22 = (u[i][j + 1] - 2.0 * u[i][j] + u[i][j - 1]) / (dx * dx);
            let u_12 = (u[i + 1][j + 1] - u[i + 1][j - 1] - u[i - 1][j + 1] + u[i - 1][j - 1])
                / (4.0 * dx * dx);
            let grad_dot_one = u_x1 + u_x2;
            let mut total = 0.0;
            for m in &histories {
                let q = panel.predictions(*m);
                let proj = (u_x1 * q[0] + u_x2 * q[1]) / grad_dot_one;
                let eta = [q[0] - proj, q[1] - proj];
                total += u_11 * eta[0] * eta[0]
                    + 2.0 * u_12 * eta[0] * eta[1]
                    + u_22 * eta[1] * eta[1];
            }
            // Backwards in t: u(t - dt) = u(t) + dt * diffusion term.
            next[i][j] = u[i][j] + dtau * weight * total;
        }
    }
    next
}

#[test]
#[allow(clippy::needless_range_loop)]
fn full_2d_integration_matches_reduced_solution() {
    let panel = ExpertPanel::history_sensitive(1, 0.6).unwrap();
    let payoff = Payoff::LogSumExp;
    let value = ContinuumValue::new(&panel, payoff.clone()).unwrap();

    let grid = Grid {
        half_width: 3.0,
        spacing: 0.075,
        points: 81,
    };
    assert!((grid.coord(grid.points - 1) - grid.half_width).abs() < 1e-12);

    // Terminal data everywhere, also serving as the frozen boundary values.
    let mut u: Vec<Vec<f64>> = (0..grid.points)
        .map(|i| {
            (0..grid.points)
                .map(|j| payoff.g([grid.coord(i), grid.coord(j)]))
                .collect()
        })
        .collect();

    let t_compare = 0.6;
    let tau_total = 1.0 - t_compare;
    let steps = 400;
    let dtau = tau_total / steps as f64;
    for _ in 0..steps {
        u = step(&panel, &grid, &u, dtau);
    }

    // Compare well inside the domain of dependence.
    let mut worst: f64 = 0.0;
    for i in 0..grid.points {
        for j in 0..grid.points {
            let (x1, x2) = (grid.coord(i), grid.coord(j));
            if x1.abs() > 0.6 || x2.abs() > 0.6 {
                continue;
            }
            let reduced = value.u([x1, x2], t_compare).unwrap();
            worst = worst.max((u[i][j] - reduced).abs());
        }
    }
    println!("max deviation from reduced solution: {worst:.3e}");
    assert!(
        worst <= 1e-4,
        "2D integration deviates from the reduced solution by {worst:.3e}"
    );
}
