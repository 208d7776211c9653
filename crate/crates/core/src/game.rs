//! The discrete N-step prediction game: exact small-horizon minimax oracle,
//! strategy-vs-strategy simulation, and convergence-rate experiments against
//! the continuum value.
//!
//! State dynamics: `x_{i+1} = x_i + eps b_i (q(m_i) - f_i 1)`,
//! `m_{i+1} = m_i | b_i`, `t_{i+1} = t_i + eps^2`, with `eps = N^{-1/2}`
//! exactly, so `N` steps from `t = 0` land exactly at the horizon `t = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digraph::{MarketState, Sign};
use crate::error::{Error, Result};
use crate::value::{ExpertPanel, Payoff, StrategyContext};

/// Hard cap on the exact-minimax horizon.
pub const MAX_EXACT_HORIZON: usize = 8;

/// Node budget for the exact-minimax tree: `(4 f_grid)^steps` must stay
/// under this.
pub const EXACT_TREE_BUDGET: f64 = 1.5e8;

/// Hard cap on exhaustive market search (`2^steps` paths).
pub const MAX_EXHAUSTIVE_HORIZON: usize = 20;

/// Exhaustive search forks across the first levels of the path tree.
const PARALLEL_LEVELS: usize = 4;

/// A fully specified game instance.
#[derive(Debug, Clone)]
pub struct GameConfig {
    pub panel: ExpertPanel,
    pub payoff: Payoff,
    /// Horizon `N`; fixes `epsilon = N^{-1/2}` and the step count.
    pub n_steps: usize,
    pub start_x: [f64; 2],
    pub start_t: f64,
    pub start_m: MarketState,
}

#[derive(Deserialize)]
struct GameConfigSpec {
    panel: serde_json::Value,
    payoff: String,
    #[serde(rename = "N")]
    n_steps: usize,
    #[serde(default)]
    start_x: Option<[f64; 2]>,
    #[serde(default)]
    start_t: Option<f64>,
    #[serde(default)]
    start_m: Option<String>,
}

impl GameConfig {
    pub fn new(
        panel: ExpertPanel,
        payoff: Payoff,
        n_steps: usize,
        start_x: [f64; 2],
        start_t: f64,
        start_m: MarketState,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("horizon N must be positive".into()));
        }
        if !(0.0..1.0).contains(&start_t) {
            return Err(Error::Config(format!(
                "start_t = {start_t} must lie in [0, 1)"
            )));
        }
        if start_m.depth() != panel.depth() {
            return Err(Error::Config(format!(
                "start history has depth {}, panel expects {}",
                start_m.depth(),
                panel.depth()
            )));
        }
        if !start_x.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("start_x must be finite".into()));
        }
        Ok(Self {
            panel,
            payoff,
            n_steps,
            start_x,
            start_t,
            start_m,
        })
    }

    /// Canonical start: `x = 0`, `t = 0`, all-minus history.
    pub fn canonical(panel: ExpertPanel, payoff: Payoff, n_steps: usize) -> Result<Self> {
        let m = MarketState::all_minus(panel.depth())?;
        Self::new(panel, payoff, n_steps, [0.0, 0.0], 0.0, m)
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / (self.n_steps as f64).sqrt()
    }

    /// Steps remaining until the horizon: `floor((1 - start_t) N)`.
    pub fn steps(&self) -> usize {
        ((1.0 - self.start_t) * self.n_steps as f64 + 1e-9).floor() as usize
    }

    pub fn context(&self) -> Result<StrategyContext> {
        StrategyContext::new(self.panel.clone(), self.payoff.clone(), self.n_steps)
    }

    /// The config one step later, after the investor plays `f` and the market
    /// plays `b`. Uses the same arithmetic as every game loop in this module,
    /// so values match bit for bit.
    pub fn advanced(&self, f: f64, b: Sign) -> Result<Self> {
        let eps = self.epsilon();
        let (x, t, m) = step_state(
            &self.panel,
            self.start_x,
            self.start_t,
            self.start_m,
            f,
            b,
            eps,
        );
        Self::new(
            self.panel.clone(),
            self.payoff.clone(),
            self.n_steps,
            x,
            t,
            m,
        )
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: GameConfigSpec = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad game config JSON: {e}")))?;
        let panel = ExpertPanel::from_json_str(&spec.panel.to_string())?;
        let payoff = Payoff::parse(&spec.payoff)?;
        let start_m = match spec.start_m {
            Some(s) => s.parse()?,
            None => MarketState::all_minus(panel.depth())?,
        };
        Self::new(
            panel,
            payoff,
            spec.n_steps,
            spec.start_x.unwrap_or([0.0, 0.0]),
            spec.start_t.unwrap_or(0.0),
            start_m,
        )
    }
}

/// Shared single-step update.
fn step_state(
    panel: &ExpertPanel,
    x: [f64; 2],
    t: f64,
    m: MarketState,
    f: f64,
    b: Sign,
    eps: f64,
) -> ([f64; 2], f64, MarketState) {
    let q = panel.predictions(m);
    let bv = b.value();
    let x_next = [x[0] + eps * bv * (q[0] - f), x[1] + eps * bv * (q[1] - f)];
    let t_next = (t + eps * eps).min(1.0);
    (x_next, t_next, m.concat(b))
}

// ---------------------------------------------------------------------------
// Exact minimax oracle
// ---------------------------------------------------------------------------

/// Bracket on the true minimax value: `upper` is the grid minimax (the
/// investor restricted to the grid can only do worse), `lower` subtracts the
/// Lipschitz slack `eps * steps * spacing` covering off-grid predictions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ValueBracket {
    pub lower: f64,
    pub upper: f64,
}

impl ValueBracket {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Coarse investor grid: `f_grid` equispaced points spanning `[-1, 1]`.
pub fn grid_candidates(f_grid: usize) -> Vec<f64> {
    let spacing = 2.0 / (f_grid - 1) as f64;
    (0..f_grid).map(|j| -1.0 + j as f64 * spacing).collect()
}

/// Refinement pass: `f_grid` points spanning one coarse cell around the
/// incumbent, clamped to `[-1, 1]`.
pub fn refined_candidates(incumbent: f64, f_grid: usize) -> Vec<f64> {
    let delta = 2.0 / (f_grid - 1) as f64;
    let lo = (incumbent - delta).max(-1.0);
    let hi = (incumbent + delta).min(1.0);
    let spacing = (hi - lo) / (f_grid - 1) as f64;
    (0..f_grid).map(|j| lo + j as f64 * spacing).collect()
}

/// Exact minimax value of the game by full tree recursion over an investor
/// grid (refined once around the incumbent) and both market moves.
pub fn exact_value(cfg: &GameConfig, f_grid: usize) -> Result<ValueBracket> {
    if f_grid < 11 {
        return Err(Error::Size {
            what: "f_grid",
            value: f_grid,
            min: 11,
            max: usize::MAX,
        });
    }
    let steps = cfg.steps();
    if steps > MAX_EXACT_HORIZON {
        return Err(Error::Size {
            what: "exact minimax horizon",
            value: steps,
            min: 0,
            max: MAX_EXACT_HORIZON,
        });
    }
    let tree_size = (4.0 * f_grid as f64).powi(steps as i32);
    if tree_size > EXACT_TREE_BUDGET {
        return Err(Error::Capacity {
            what: "exact minimax tree",
            reached: tree_size as usize,
            cap: EXACT_TREE_BUDGET as usize,
        });
    }
    let eps = cfg.epsilon();
    let upper = minimax_node(cfg, cfg.start_x, cfg.start_t, cfg.start_m, steps, f_grid, eps);
    let slack = eps * steps as f64 * 2.0 / (f_grid - 1) as f64;
    Ok(ValueBracket {
        lower: upper - slack,
        upper,
    })
}

fn minimax_node(
    cfg: &GameConfig,
    x: [f64; 2],
    t: f64,
    m: MarketState,
    remaining: usize,
    f_grid: usize,
    eps: f64,
) -> f64 {
    if remaining == 0 {
        return cfg.payoff.g(x);
    }
    let market_best = |f: f64| -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for b in [Sign::Plus, Sign::Minus] {
            let (x2, t2, m2) = step_state(&cfg.panel, x, t, m, f, b, eps);
            let v = minimax_node(cfg, x2, t2, m2, remaining - 1, f_grid, eps);
            if v > worst {
                worst = v;
            }
        }
        worst
    };
    let mut best = f64::INFINITY;
    let mut incumbent = 0.0;
    for f in grid_candidates(f_grid) {
        let v = market_best(f);
        if v < best {
            best = v;
            incumbent = f;
        }
    }
    for f in refined_candidates(incumbent, f_grid) {
        let v = market_best(f);
        if v < best {
            best = v;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Strategies and simulation
// ---------------------------------------------------------------------------

/// Investor policies available to the simulator.
#[derive(Debug, Clone)]
pub enum InvestorStrategy {
    /// The asymptotically optimal prediction.
    FStar,
    Constant(f64),
    /// `f*` plus per-step seeded uniform noise of the given amplitude,
    /// clamped back into `[-1, 1]`.
    PerturbedFStar { amplitude: f64 },
    /// Scripted predictions, one per step.
    Script(Vec<f64>),
}

/// Market policies available to the simulator.
#[derive(Debug, Clone, Copy)]
pub enum MarketStrategy {
    /// Penalize deviation from `f*`.
    BStar,
    AllPlus,
    /// Seeded coin flips, a pure function of `(seed, step)`.
    Random,
    /// One-step maximizer of the continuum value.
    Greedy,
}

/// Per-step uniform noise in `[-1, 1]`, a pure function of its inputs.
fn step_noise(seed: u64, step: usize, salt: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt.wrapping_shl(32) ^ step as u64);
    rng.gen_range(-1.0..=1.0)
}

fn investor_predict(
    strategy: &InvestorStrategy,
    ctx: &StrategyContext,
    seed: u64,
    step: usize,
    x: [f64; 2],
    t_next: f64,
    m: MarketState,
) -> Result<f64> {
    match strategy {
        InvestorStrategy::FStar => ctx.f_star(x, t_next, m),
        InvestorStrategy::Constant(v) => Ok(*v),
        InvestorStrategy::PerturbedFStar { amplitude } => {
            let base = ctx.f_star(x, t_next, m)?;
            Ok((base + amplitude * step_noise(seed, step, 1)).clamp(-1.0, 1.0))
        }
        InvestorStrategy::Script(values) => values.get(step).copied().ok_or_else(|| {
            Error::Config(format!("script has {} entries, step {step} requested", values.len()))
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn market_respond(
    strategy: MarketStrategy,
    ctx: &StrategyContext,
    seed: u64,
    step: usize,
    x: [f64; 2],
    t_next: f64,
    m: MarketState,
    f: f64,
) -> Result<Sign> {
    match strategy {
        MarketStrategy::BStar => ctx.b_star(x, t_next, m, f),
        MarketStrategy::AllPlus => Ok(Sign::Plus),
        MarketStrategy::Random => Ok(if step_noise(seed, step, 2) >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }),
        MarketStrategy::Greedy => {
            let eps = ctx.epsilon();
            let mut best = (f64::NEG_INFINITY, Sign::Plus);
            // Canonical order makes the +1 branch win ties.
            for b in [Sign::Plus, Sign::Minus] {
                let (x2, t2, _) = step_state(ctx.panel(), x, t_next - eps * eps, m, f, b, eps);
                let v = ctx.value().u(x2, t2)?;
                if v > best.0 {
                    best = (v, b);
                }
            }
            Ok(best.1)
        }
    }
}

/// One recorded step: the history seen, both moves, and the regret state
/// after the step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub m: MarketState,
    pub f: f64,
    pub b: Sign,
    pub x: [f64; 2],
}

/// Full record of a simulated game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTranscript {
    pub steps: Vec<StepRecord>,
    pub final_x: [f64; 2],
    pub final_payoff: f64,
}

impl GameTranscript {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "steps": self.steps.iter().map(|s| serde_json::json!({
                "m": s.m.to_string(),
                "f": s.f,
                "b": s.b.as_i8(),
                "x": s.x,
            })).collect::<Vec<_>>(),
            "final_x": self.final_x,
            "final_payoff": self.final_payoff,
        })
    }
}

/// Play the game: the market observes the investor's prediction each step.
///
/// Both strategies are probed once for same-input/same-output behavior before
/// the run; the transcript is byte-identical across runs with the same seed.
pub fn simulate(
    cfg: &GameConfig,
    investor: &InvestorStrategy,
    market: MarketStrategy,
    seed: u64,
) -> Result<GameTranscript> {
    let ctx = cfg.context()?;
    simulate_with_context(cfg, &ctx, investor, market, seed)
}

/// `simulate` against a prebuilt context (the context must match the config).
pub fn simulate_with_context(
    cfg: &GameConfig,
    ctx: &StrategyContext,
    investor: &InvestorStrategy,
    market: MarketStrategy,
    seed: u64,
) -> Result<GameTranscript> {
    let eps = cfg.epsilon();
    let steps = cfg.steps();
    let mut x = cfg.start_x;
    let mut t = cfg.start_t;
    let mut m = cfg.start_m;

    // Purity probe: identical inputs must give identical outputs.
    {
        let t_next = (t + eps * eps).min(1.0);
        let fa = investor_predict(investor, ctx, seed, 0, x, t_next, m)?;
        let fb = investor_predict(investor, ctx, seed, 0, x, t_next, m)?;
        if fa.to_bits() != fb.to_bits() {
            return Err(Error::Config(
                "investor strategy failed the same-input/same-output probe".into(),
            ));
        }
        if fa.is_finite() && fa.abs() <= 1.0 {
            let ba = market_respond(market, ctx, seed, 0, x, t_next, m, fa)?;
            let bb = market_respond(market, ctx, seed, 0, x, t_next, m, fa)?;
            if ba != bb {
                return Err(Error::Config(
                    "market strategy failed the same-input/same-output probe".into(),
                ));
            }
        }
    }

    let mut records = Vec::with_capacity(steps);
    for step in 0..steps {
        let t_next = (t + eps * eps).min(1.0);
        let f = investor_predict(investor, ctx, seed, step, x, t_next, m)?;
        if !f.is_finite() || f.abs() > 1.0 {
            return Err(Error::Protocol { step, value: f });
        }
        let b = market_respond(market, ctx, seed, step, x, t_next, m, f)?;
        let (x2, t2, m2) = step_state(&cfg.panel, x, t, m, f, b, eps);
        records.push(StepRecord { m, f, b, x: x2 });
        x = x2;
        t = t2;
        m = m2;
    }
    Ok(GameTranscript {
        steps: records,
        final_x: x,
        final_payoff: cfg.payoff.g(x),
    })
}

// ---------------------------------------------------------------------------
// Exhaustive worst-case market
// ---------------------------------------------------------------------------

/// Worst final payoff over all `2^steps` market paths against a fixed
/// investor strategy. Forks across the first levels of the tree.
pub fn worst_case_payoff(
    cfg: &GameConfig,
    investor: &InvestorStrategy,
    seed: u64,
) -> Result<f64> {
    let steps = cfg.steps();
    if steps > MAX_EXHAUSTIVE_HORIZON {
        return Err(Error::Size {
            what: "exhaustive market horizon",
            value: steps,
            min: 0,
            max: MAX_EXHAUSTIVE_HORIZON,
        });
    }
    let ctx = cfg.context()?;
    worst_case_node(
        cfg,
        &ctx,
        investor,
        seed,
        0,
        cfg.start_x,
        cfg.start_t,
        cfg.start_m,
        steps,
    )
}

/// The exhaustive worst case again, but also reconstructing the maximizing
/// path and replaying it into a full transcript.
pub fn worst_case_transcript(
    cfg: &GameConfig,
    investor: &InvestorStrategy,
    seed: u64,
) -> Result<GameTranscript> {
    let steps = cfg.steps();
    if steps > MAX_EXHAUSTIVE_HORIZON {
        return Err(Error::Size {
            what: "exhaustive market horizon",
            value: steps,
            min: 0,
            max: MAX_EXHAUSTIVE_HORIZON,
        });
    }
    let ctx = cfg.context()?;
    let (_, mut path) = worst_path_node(
        cfg,
        &ctx,
        investor,
        seed,
        0,
        cfg.start_x,
        cfg.start_t,
        cfg.start_m,
        steps,
    )?;
    path.reverse();

    // Replay the maximizing path.
    let eps = cfg.epsilon();
    let mut x = cfg.start_x;
    let mut t = cfg.start_t;
    let mut m = cfg.start_m;
    let mut records = Vec::with_capacity(steps);
    for (step, &b) in path.iter().enumerate() {
        let t_next = (t + eps * eps).min(1.0);
        let f = investor_predict(investor, &ctx, seed, step, x, t_next, m)?;
        let (x2, t2, m2) = step_state(&cfg.panel, x, t, m, f, b, eps);
        records.push(StepRecord { m, f, b, x: x2 });
        x = x2;
        t = t2;
        m = m2;
    }
    Ok(GameTranscript {
        steps: records,
        final_x: x,
        final_payoff: cfg.payoff.g(x),
    })
}

/// Like [`worst_case_node`] but returns the maximizing path in reverse order.
#[allow(clippy::too_many_arguments)]
fn worst_path_node(
    cfg: &GameConfig,
    ctx: &StrategyContext,
    investor: &InvestorStrategy,
    seed: u64,
    step: usize,
    x: [f64; 2],
    t: f64,
    m: MarketState,
    remaining: usize,
) -> Result<(f64, Vec<Sign>)> {
    if remaining == 0 {
        return Ok((cfg.payoff.g(x), Vec::new()));
    }
    let eps = cfg.epsilon();
    let t_next = (t + eps * eps).min(1.0);
    let f = investor_predict(investor, ctx, seed, step, x, t_next, m)?;
    if !f.is_finite() || f.abs() > 1.0 {
        return Err(Error::Protocol { step, value: f });
    }
    let descend = |b: Sign| -> Result<(f64, Vec<Sign>)> {
        let (x2, t2, m2) = step_state(&cfg.panel, x, t, m, f, b, eps);
        let (v, mut path) =
            worst_path_node(cfg, ctx, investor, seed, step + 1, x2, t2, m2, remaining - 1)?;
        path.push(b);
        Ok((v, path))
    };
    let plus = descend(Sign::Plus)?;
    let minus = descend(Sign::Minus)?;
    Ok(if plus.0 >= minus.0 { plus } else { minus })
}

#[allow(clippy::too_many_arguments)]
fn worst_case_node(
    cfg: &GameConfig,
    ctx: &StrategyContext,
    investor: &InvestorStrategy,
    seed: u64,
    step: usize,
    x: [f64; 2],
    t: f64,
    m: MarketState,
    remaining: usize,
) -> Result<f64> {
    if remaining == 0 {
        return Ok(cfg.payoff.g(x));
    }
    let eps = cfg.epsilon();
    let t_next = (t + eps * eps).min(1.0);
    let f = investor_predict(investor, ctx, seed, step, x, t_next, m)?;
    if !f.is_finite() || f.abs() > 1.0 {
        return Err(Error::Protocol { step, value: f });
    }
    let descend = |b: Sign| -> Result<f64> {
        let (x2, t2, m2) = step_state(&cfg.panel, x, t, m, f, b, eps);
        worst_case_node(cfg, ctx, investor, seed, step + 1, x2, t2, m2, remaining - 1)
    };
    if step < PARALLEL_LEVELS && remaining > 4 {
        let (a, b) = rayon::join(|| descend(Sign::Plus), || descend(Sign::Minus));
        Ok(a?.max(b?))
    } else {
        Ok(descend(Sign::Plus)?.max(descend(Sign::Minus)?))
    }
}

// ---------------------------------------------------------------------------
// Rate experiments
// ---------------------------------------------------------------------------

/// Which side's guarantee an experiment measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Investor,
    Market,
}

/// Opponent used on the investor side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adversary {
    Exhaustive,
    BStar,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub n_steps: usize,
    pub epsilon: f64,
    pub gap: f64,
    pub gap_over_eps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateTable {
    pub side: Side,
    pub rows: Vec<RateRow>,
    /// Fitted log-log slope of `gap` against `epsilon`.
    pub slope: f64,
    pub r_squared: f64,
}

/// Default lookahead depth for the market-side best-response investor.
pub const DEFAULT_LOOKAHEAD: usize = 3;

/// Default investor grid for heuristic best responses.
pub const DEFAULT_RATE_F_GRID: usize = 21;

/// Gap-versus-epsilon experiment across horizons.
///
/// Investor side: `f*` against the worst market (exhaustive search or `b*`);
/// `gap = worst final payoff - u(start)`. Market side: `b*` against a
/// depth-limited grid best-response investor; `gap = u(start) - final
/// payoff`. The best response is a documented lower-bound heuristic: any
/// investor outcome upper-bounds what the market can force.
pub fn rate_experiment(
    template: &GameConfig,
    n_list: &[usize],
    adversary: Adversary,
    side: Side,
    lookahead: usize,
    f_grid: usize,
    seed: u64,
) -> Result<RateTable> {
    if n_list.is_empty() {
        return Err(Error::Config("rate experiment needs at least one horizon".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let cfg = GameConfig::new(
            template.panel.clone(),
            template.payoff.clone(),
            n,
            template.start_x,
            template.start_t,
            template.start_m,
        )?;
        let ctx = cfg.context()?;
        let u0 = ctx.value().u(cfg.start_x, cfg.start_t)?;
        let gap = match side {
            Side::Investor => {
                let payoff = match adversary {
                    Adversary::Exhaustive => {
                        worst_case_payoff(&cfg, &InvestorStrategy::FStar, seed)?
                    }
                    Adversary::BStar => {
                        simulate_with_context(
                            &cfg,
                            &ctx,
                            &InvestorStrategy::FStar,
                            MarketStrategy::BStar,
                            seed,
                        )?
                        .final_payoff
                    }
                };
                payoff - u0
            }
            Side::Market => {
                let transcript = best_response_vs_bstar(&cfg, &ctx, lookahead, f_grid)?;
                u0 - transcript.final_payoff
            }
        };
        let epsilon = cfg.epsilon();
        rows.push(RateRow {
            n_steps: n,
            epsilon,
            gap,
            gap_over_eps: gap / epsilon,
        });
    }
    let (slope, r_squared) = fit_log_slope(&rows);
    Ok(RateTable {
        side,
        rows,
        slope,
        r_squared,
    })
}

/// Least-squares slope of `ln gap` on `ln epsilon` over rows with positive
/// gap; NaN when fewer than two usable rows exist.
fn fit_log_slope(rows: &[RateRow]) -> (f64, f64) {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.gap > 0.0)
        .map(|r| (r.epsilon.ln(), r.gap.ln()))
        .collect();
    if points.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r_squared)
}

/// Play market `b*` against a depth-limited grid best-response investor.
fn best_response_vs_bstar(
    cfg: &GameConfig,
    ctx: &StrategyContext,
    lookahead: usize,
    f_grid: usize,
) -> Result<GameTranscript> {
    let eps = cfg.epsilon();
    let steps = cfg.steps();
    let mut x = cfg.start_x;
    let mut t = cfg.start_t;
    let mut m = cfg.start_m;
    let mut records = Vec::with_capacity(steps);
    for step in 0..steps {
        let remaining = steps - step;
        let depth = lookahead.min(remaining);
        let f = lookahead_best_f(ctx, x, t, m, depth, f_grid, eps)?;
        let t_next = (t + eps * eps).min(1.0);
        let b = ctx.b_star(x, t_next, m, f)?;
        let (x2, t2, m2) = step_state(ctx.panel(), x, t, m, f, b, eps);
        records.push(StepRecord { m, f, b, x: x2 });
        x = x2;
        t = t2;
        m = m2;
    }
    Ok(GameTranscript {
        steps: records,
        final_x: x,
        final_payoff: cfg.payoff.g(x),
    })
}

fn lookahead_best_f(
    ctx: &StrategyContext,
    x: [f64; 2],
    t: f64,
    m: MarketState,
    depth: usize,
    f_grid: usize,
    eps: f64,
) -> Result<f64> {
    let mut best = (f64::INFINITY, 0.0);
    for f in grid_candidates(f_grid) {
        let v = lookahead_value(ctx, x, t, m, f, depth, f_grid, eps)?;
        if v < best.0 {
            best = (v, f);
        }
    }
    for f in refined_candidates(best.1, f_grid) {
        let v = lookahead_value(ctx, x, t, m, f, depth, f_grid, eps)?;
        if v < best.0 {
            best = (v, f);
        }
    }
    Ok(best.1)
}

#[allow(clippy::too_many_arguments)]
fn lookahead_value(
    ctx: &StrategyContext,
    x: [f64; 2],
    t: f64,
    m: MarketState,
    f: f64,
    depth: usize,
    f_grid: usize,
    eps: f64,
) -> Result<f64> {
    let t_next = (t + eps * eps).min(1.0);
    let b = ctx.b_star(x, t_next, m, f)?;
    let (x2, t2, m2) = step_state(ctx.panel(), x, t, m, f, b, eps);
    if depth <= 1 || t2 >= 1.0 {
        return ctx.value().u(x2, t2);
    }
    let mut best = f64::INFINITY;
    for f2 in grid_candidates(f_grid) {
        let v = lookahead_value(ctx, x2, t2, m2, f2, depth - 1, f_grid, eps)?;
        if v < best {
            best = v;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Accumulated cost along a path
// ---------------------------------------------------------------------------

/// Accumulated corrected cost `sum_i (h(m_i) - (b_i/2) f#(m_i))` with `h` and
/// `f#` frozen at the config's start `(x, t)`.
///
/// For a closed walk this telescopes to `k * mean(h)`; for an open path the
/// difference from `k * mean(h)` is `H(m_1) - H(m_{k+1})`.
pub fn accumulated_cost_check(cfg: &GameConfig, path: &[Sign], k: usize) -> Result<f64> {
    let d = cfg.panel.depth();
    let max_k = 4 * (1usize << d);
    if k > max_k {
        return Err(Error::Size {
            what: "accumulated-cost path length k",
            value: k,
            min: 0,
            max: max_k,
        });
    }
    if k > path.len() {
        return Err(Error::Config(format!(
            "path provides {} symbols, k = {k} requested",
            path.len()
        )));
    }
    let ctx = cfg.context()?;
    let (x, t) = (cfg.start_x, cfg.start_t);
    let mut m = cfg.start_m;
    let mut total = 0.0;
    for &b in path.iter().take(k) {
        let h = ctx.cost(x, t, m)?;
        let fsharp = ctx.corrector(x, t, m)?;
        total += h - 0.5 * b.value() * fsharp;
        m = m.concat(b);
    }
    Ok(total)
}
