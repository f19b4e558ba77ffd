//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.
//!
//! The sweep tests share their runs through `OnceLock`s so the identity
//! checks in `p9` reuse them instead of training again.

#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vnetsim::agent::dqn::{self, Activation, DqnConfig, Fnn, ForwardCache, LossMode};
use vnetsim::agent::fixture::{self, ChainMdp};
use vnetsim::agent::tabular::{self, LearnConfig};
use vnetsim::agent::{EpsilonSchedule, Sharing};
use vnetsim::channel::{self, ChannelDraw, InterferenceMode, LinkGeometry, RfParams, ThzParams};
use vnetsim::env::state::{DiscreteState, Observation};
use vnetsim::env::EnvConfig;
use vnetsim::harness::{self, io, AgentKind, Axis, PointResult, ScenarioConfig};
use vnetsim::road::Lane;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Writes to the stderr handle directly: the harness only captures the
/// print macros, so passing checks still show their line.
fn report(id: &str, ok: bool, detail: &str, started: Instant) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let line = format!(
        "{tag} {id} ({:.1}s) {detail}\n",
        started.elapsed().as_secs_f64()
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

// ---------------------------------------------------------------------------
// Brute-force channel evaluator, written straight from the link-budget
// formulas with no shared code.

const C: f64 = 299_792_458.0;

fn wl2(f: f64) -> f64 {
    let l = C / (4.0 * PI * f);
    l * l
}

fn oracle_rf(p: &RfParams, r: f64, h: f64, ri: &[f64], hi: &[f64]) -> f64 {
    let g = p.tx_gain * p.rx_gain * wl2(p.carrier_hz);
    let mut i = 0.0;
    for k in 0..ri.len() {
        i += p.tx_power_w * g * hi[k] / ri[k].powf(p.pathloss_exp);
    }
    (g * p.tx_power_w * h / r.powf(p.pathloss_exp)) / (p.noise_w + i)
}

/// Per-interferer gain factor: expected `gamma * F_tx * F_rx` or sampled `D * wl^2`.
fn oracle_factors(p: &ThzParams, n: usize, d: Option<&[f64]>) -> Vec<f64> {
    let g = p.main_gain_tx * p.main_gain_rx * wl2(p.carrier_hz);
    match d {
        None => vec![g * p.align_prob_tx * p.align_prob_rx; n],
        Some(d) => d.iter().map(|x| x * wl2(p.carrier_hz)).collect(),
    }
}

fn oracle_thz_noise(p: &ThzParams, r: f64, ri: &[f64], d: Option<&[f64]>) -> f64 {
    let g = p.main_gain_tx * p.main_gain_rx * wl2(p.carrier_hz);
    let k = p.absorption_per_m;
    let f = oracle_factors(p, ri.len(), d);
    let mut n = p.thermal_noise_w + p.tx_power_w * g / (r * r) * (1.0 - (-k * r).exp());
    for j in 0..ri.len() {
        n += f[j] * p.tx_power_w / (ri[j] * ri[j]) * (1.0 - (-k * ri[j]).exp());
    }
    n
}

fn oracle_thz(p: &ThzParams, r: f64, ri: &[f64], d: Option<&[f64]>) -> f64 {
    let g = p.main_gain_tx * p.main_gain_rx * wl2(p.carrier_hz);
    let k = p.absorption_per_m;
    let f = oracle_factors(p, ri.len(), d);
    let mut i = 0.0;
    for j in 0..ri.len() {
        i += f[j] * p.tx_power_w * (-k * ri[j]).exp() / (ri[j] * ri[j]);
    }
    (g * p.tx_power_w * (-k * r).exp() / (r * r)) / (oracle_thz_noise(p, r, ri, d) + i)
}

fn oracle_rate(w: f64, sinr: f64) -> f64 {
    // log2(1 + x) loses digits for tiny x; use the series there instead.
    if sinr < 1e-4 {
        w * (sinr - sinr * sinr / 2.0 + sinr.powi(3) / 3.0) / 2f64.ln()
    } else {
        w * (1.0 + sinr).log2()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

#[test]
fn p1_channel_oracle() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(0..6);
        let bw = rng.gen_range(1e6..1e9);
        let rf = RfParams {
            tx_power_w: rng.gen_range(0.1..10.0),
            tx_gain: rng.gen_range(0.5..10.0),
            rx_gain: rng.gen_range(0.5..10.0),
            carrier_hz: rng.gen_range(7e8..6e9),
            pathloss_exp: rng.gen_range(2.0..5.0),
            noise_w: 1.380649e-23 * 290.0 * bw,
        };
        let (gmax, gmin) = (rng.gen_range(10.0..1000.0), rng.gen_range(0.0..1.0));
        let thz = ThzParams {
            tx_power_w: rng.gen_range(0.1..10.0),
            main_gain_tx: gmax,
            main_gain_rx: gmax,
            side_gain_tx: gmin,
            side_gain_rx: gmin,
            carrier_hz: rng.gen_range(1e11..1e13),
            absorption_per_m: rng.gen_range(0.001..0.2),
            thermal_noise_w: 1.380649e-23 * 290.0 * bw,
            beamwidth_tx_rad: rng.gen_range(0.1..PI),
            beamwidth_rx_rad: rng.gen_range(0.1..PI),
            align_prob_tx: rng.gen_range(0.0..1.0),
            align_prob_rx: rng.gen_range(0.0..1.0),
        };
        let r = rng.gen_range(1.0..300.0);
        let ri: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..1000.0)).collect();
        let mut exp = || -(1.0 - rng.gen::<f64>()).ln();
        let h = exp();
        let hi: Vec<f64> = (0..n).map(|_| exp()).collect();
        let products = [gmax * gmax, gmax * gmin, gmin * gmax, gmin * gmin];
        let d: Vec<f64> = (0..n).map(|_| products[rng.gen_range(0..4)]).collect();

        let geom = LinkGeometry {
            serving_dist_m: r,
            interferer_dists_m: ri.clone(),
        };
        let draw = ChannelDraw {
            serving_fade: h,
            interferer_fades: hi.clone(),
            interferer_alignments: d.clone(),
        };
        let rf_s = channel::rf_sinr(&rf, &geom, &draw).unwrap();
        let thz_e = channel::thz_sinr(&thz, &geom, &draw, InterferenceMode::Expected).unwrap();
        let thz_d = channel::thz_sinr(&thz, &geom, &draw, InterferenceMode::Sampled).unwrap();
        let checks = [
            (rf_s, oracle_rf(&rf, r, h, &ri, &hi)),
            (thz_e, oracle_thz(&thz, r, &ri, None)),
            (thz_d, oracle_thz(&thz, r, &ri, Some(&d))),
            (
                channel::thz_noise(&thz, &geom, None).unwrap(),
                oracle_thz_noise(&thz, r, &ri, None),
            ),
            (
                channel::thz_noise(&thz, &geom, Some(&d)).unwrap(),
                oracle_thz_noise(&thz, r, &ri, Some(&d)),
            ),
            (channel::link_rate(bw, rf_s), oracle_rate(bw, rf_s)),
            (channel::link_rate(bw, thz_e), oracle_rate(bw, thz_e)),
        ];
        for (got, want) in checks {
            assert!(got.is_finite() && want.is_finite());
            worst = worst.max(rel(got, want));
        }
    }
    let ok = worst <= 1e-9;
    report(
        "P1",
        ok,
        &format!("max relative error {worst:.3e} over 1000 tuples"),
        t0,
    );
    assert!(ok);
}

#[test]
fn p2_state_space() {
    let t0 = Instant::now();
    let disc = EnvConfig::default().discretizer();
    let (dc, df, ve) = (disc.d_close_m, disc.d_far_m, disc.v_eps_mps);
    let dists = [
        0.0,
        dc * 0.5,
        dc,
        dc + 1e-6,
        (dc + df) / 2.0,
        df,
        df + 1e-6,
        10.0 * df,
        f64::INFINITY,
    ];
    let vels = [-20.0, -ve, -ve * 0.5, 0.0, ve * 0.5, ve, 20.0];
    let mut by_index: HashMap<usize, DiscreteState> = HashMap::new();
    let mut consistent = true;
    for &d_fc in &dists {
        for &d_ft in &dists {
            for &d_rt in &dists {
                for &v_fc in &vels {
                    for &v_ft in &vels {
                        for &v_rt in &vels {
                            for c_count in 0..=3 {
                                for lane in [Lane::Right, Lane::Left] {
                                    let obs = Observation {
                                        d_fc,
                                        d_ft,
                                        d_rt,
                                        v_fc,
                                        v_ft,
                                        v_rt,
                                        c_count,
                                        lane,
                                    };
                                    let s = disc.discretize(&obs);
                                    let i = s.index();
                                    consistent &= i < DiscreteState::COUNT
                                        && DiscreteState::from_index(i) == Some(s);
                                    consistent &= *by_index.entry(i).or_insert(s) == s;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let ok = consistent && by_index.len() == 4374 && DiscreteState::COUNT == 4374;
    report(
        "P2",
        ok,
        &format!("{} distinct states, bijective={consistent}", by_index.len()),
        t0,
    );
    assert!(ok);
}

fn value_iteration(gamma: f64) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..10_000 {
        let mut next = q;
        for (s, row) in next.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let (n, r) = fixture::TRANSITIONS[s][a];
                *v = r + gamma * q[n][0].max(q[n][1]);
            }
        }
        q = next;
    }
    q
}

#[test]
fn p3_fixture_optimality() {
    let t0 = Instant::now();
    let gamma = 0.9;
    let qstar = value_iteration(gamma);
    let best: Vec<usize> = qstar.iter().map(|r| usize::from(r[1] > r[0])).collect();

    let cfg = LearnConfig {
        learning_rate: 0.1,
        discount: gamma,
        epsilon: EpsilonSchedule {
            start: 1.0,
            end: 0.5,
            decay: 0.999,
        },
        episodes: 10_000,
        horizon: 10,
        sharing: Sharing::Shared,
    };
    let (learner, _) = tabular::train(
        &mut ChainMdp::new(11),
        &cfg,
        &mut ChaCha8Rng::seed_from_u64(12),
    )
    .unwrap();
    let q = learner.table(0);
    let mut err: f64 = 0.0;
    for s in 0..2 {
        for a in 0..2 {
            err = err.max((q.get(s, a) - qstar[s][a]).abs());
        }
    }
    let tab_policy: Vec<usize> = (0..2).map(|s| q.greedy(s)).collect();

    let dcfg = DqnConfig {
        discount: gamma,
        episodes: 400,
        horizon: 10,
        target_sync_every: 10,
        loss: LossMode::SquaredError,
        epsilon: EpsilonSchedule {
            start: 1.0,
            end: 0.3,
            decay: 0.99,
        },
        ..DqnConfig::default()
    };
    let (agent, _) = dqn::train(
        &mut ChainMdp::new(13),
        &dcfg,
        &mut ChaCha8Rng::seed_from_u64(14),
    )
    .unwrap();
    let dqn_policy: Vec<usize> = (0..2).map(|s| agent.greedy(s)).collect();

    let ok = err < 1e-6 && tab_policy == best && dqn_policy == best;
    report(
        "P3",
        ok,
        &format!("tabular max |Q-Q*| {err:.2e}, policies tabular {tab_policy:?} dqn {dqn_policy:?} optimal {best:?}"),
        t0,
    );
    assert!(ok);
}

#[test]
fn p4_gradients() {
    let t0 = Instant::now();
    let acts = [Activation::Relu, Activation::Sigmoid, Activation::Linear];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut combos = std::collections::HashSet::new();
    for i in 0..100 {
        let (hidden, out) = (acts[i % 3], acts[(i / 3) % 3]);
        combos.insert((i % 3, (i / 3) % 3));
        let sizes = [
            rng.gen_range(1..7),
            rng.gen_range(1..9),
            rng.gen_range(1..6),
        ];
        // Random biases too, so no unit sits exactly on a ReLU kink.
        let mut net = Fnn::zeros(&sizes, &[hidden, out]).unwrap();
        net.params_mut()
            .iter_mut()
            .for_each(|p| *p = rng.gen_range(-1.0..1.0));
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let unit = rng.gen_range(0..sizes[2]);
        let target = rng.gen_range(-3.0..3.0);
        let tau = rng.gen_range(1.0..4.0);
        for mode in [LossMode::SquaredError, LossMode::Bce] {
            let mut cache = ForwardCache::default();
            net.forward_cached(&x, &mut cache);
            let pred = cache.output()[unit];
            let mut grad = vec![0.0; net.params().len()];
            net.backward(
                &cache,
                unit,
                dqn::loss_grad(pred, target, mode, tau),
                &mut grad,
            );
            let f = |p: &[f64]| {
                let mut n = net.clone();
                n.set_params(p).unwrap();
                dqn::loss(n.forward(&x)[unit], target, mode, tau)
            };
            let mut p = net.params().to_vec();
            for j in 0..p.len() {
                let orig = p[j];
                p[j] = orig + h;
                let up = f(&p);
                p[j] = orig - h;
                let down = f(&p);
                p[j] = orig;
                let num = (up - down) / (2.0 * h);
                let denom = grad[j].abs().max(num.abs()).max(1e-7);
                worst = worst.max((grad[j] - num).abs() / denom);
            }
        }
    }
    let ok = worst < 1e-4 && combos.len() == 9;
    report(
        "P4",
        ok,
        &format!(
            "max relative error {worst:.3e}, {} activation pairs",
            combos.len()
        ),
        t0,
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// Sweeps

fn sweep_from(
    base: ScenarioConfig,
    agent: AgentKind,
    axis: Axis,
    values: &[f64],
) -> Vec<PointResult> {
    let cfg = ScenarioConfig {
        agent,
        axis,
        values: values.to_vec(),
        seeds: SEEDS.to_vec(),
        ..base
    };
    harness::run_sweep(&cfg).unwrap()
}

fn sweep(agent: AgentKind, axis: Axis, values: &[f64]) -> Vec<PointResult> {
    sweep_from(ScenarioConfig::default(), agent, axis, values)
}

const V_VALUES: [f64; 3] = [30.0, 40.0, 50.0];
const TBS_VALUES: [f64; 5] = [2.0, 5.0, 10.0, 20.0, 30.0];
const AV_VALUES: [f64; 3] = [5.0, 15.0, 25.0];

static VELOCITY: OnceLock<Vec<PointResult>> = OnceLock::new();
static TBS: OnceLock<Vec<PointResult>> = OnceLock::new();
static AVS: OnceLock<Vec<PointResult>> = OnceLock::new();
static DEFAULT_DQN: OnceLock<Vec<PointResult>> = OnceLock::new();
static DEFAULT_TABULAR: OnceLock<Vec<PointResult>> = OnceLock::new();
static DEFAULT_NEAREST: OnceLock<Vec<PointResult>> = OnceLock::new();

fn velocity_sweep() -> &'static [PointResult] {
    VELOCITY.get_or_init(|| sweep(AgentKind::Tabular, Axis::DesiredVelocity, &V_VALUES))
}

/// Density sweep scenario: 5 RBSs, 15 vehicles.
fn tbs_sweep() -> &'static [PointResult] {
    let base = ScenarioConfig {
        n_rbs: 5,
        num_avs: 15,
        ..ScenarioConfig::default()
    };
    TBS.get_or_init(|| sweep_from(base, AgentKind::Tabular, Axis::NTbs, &TBS_VALUES))
}

/// Load sweep scenario: 5 RBSs, 15 TBSs.
fn av_sweep() -> &'static [PointResult] {
    let base = ScenarioConfig {
        n_rbs: 5,
        n_tbs: 15,
        ..ScenarioConfig::default()
    };
    AVS.get_or_init(|| sweep_from(base, AgentKind::Tabular, Axis::NAvs, &AV_VALUES))
}

/// The default scenario as a one-point sweep; 10 TBSs is the default count.
fn default_point(
    cell: &'static OnceLock<Vec<PointResult>>,
    agent: AgentKind,
) -> &'static [PointResult] {
    cell.get_or_init(|| sweep(agent, Axis::NTbs, &[ScenarioConfig::default().n_tbs as f64]))
}

fn summaries(results: &[PointResult]) -> Vec<io::SummaryRow> {
    results.iter().map(|r| r.summary.clone()).collect()
}

/// Seed means of a metric at each axis value.
fn means(rows: &[io::SummaryRow], values: &[f64], metric: fn(&io::SummaryRow) -> f64) -> Vec<f64> {
    values
        .iter()
        .map(|&v| harness::seed_mean(rows, v, metric).0)
        .collect()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn fmt(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.4e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[test]
fn p5_velocity_trend() {
    let t0 = Instant::now();
    let results = velocity_sweep();
    // Converged rewards: the plateau of the training curve.
    let rows: Vec<io::SummaryRow> = results
        .iter()
        .map(|r| io::converged(&r.rows, 0.1).unwrap())
        .collect();
    let tele = means(&rows, &V_VALUES, |r| r.r_tele);
    let tran = means(&rows, &V_VALUES, |r| r.r_tran);
    let rho = spearman(&V_VALUES, &tele);
    let tele_ok = tele.windows(2).all(|w| w[1] <= w[0]) && rho.abs() == 1.0;
    let tran_ok = tran[1] > tran[0] && tran[2] > tran[0];
    let ok = tele_ok && tran_ok;
    report(
        "P5",
        ok,
        &format!(
            "r_tele [{}] rho {rho:.2} ok={tele_ok}; r_tran [{}] ok={tran_ok}",
            fmt(&tele),
            fmt(&tran)
        ),
        t0,
    );
    assert!(ok);
}

/// Rises from the first point to an interior peak and falls from the peak to
/// the last point, monotone on each side.
fn unimodal(xs: &[f64]) -> bool {
    let peak = (0..xs.len())
        .max_by(|&a, &b| xs[a].total_cmp(&xs[b]))
        .unwrap();
    peak > 0
        && peak + 1 < xs.len()
        && xs[..=peak].windows(2).all(|w| w[1] >= w[0])
        && xs[peak..].windows(2).all(|w| w[1] <= w[0])
        && xs[peak] > xs[0]
        && xs[xs.len() - 1] < xs[peak]
}

#[test]
fn p6_tbs_trends() {
    let t0 = Instant::now();
    let rows = summaries(tbs_sweep());
    let rate = means(&rows, &TBS_VALUES, |r| r.rate_tq);
    let handoff = means(&rows, &TBS_VALUES, |r| r.handoff_prob);
    let coll = means(&rows, &TBS_VALUES, |r| r.collision_rate);
    let rho = spearman(&TBS_VALUES, &handoff);
    let a = unimodal(&rate);
    let b = strictly_increasing(&handoff) && rho > 0.9;
    let c = coll[4] < coll[0];
    let ok = a && b && c;
    report(
        "P6",
        ok,
        &format!(
            "(a) rate [{}] unimodal={a}; (b) handoff [{}] rho {rho:.2} ok={b}; (c) collision [{}] ok={c}",
            fmt(&rate),
            fmt(&handoff),
            fmt(&coll)
        ),
        t0,
    );
    assert!(ok);
}

#[test]
fn p7_av_trends() {
    let t0 = Instant::now();
    let rows = summaries(av_sweep());
    let rate = means(&rows, &AV_VALUES, |r| r.rate_tq);
    let handoff = means(&rows, &AV_VALUES, |r| r.handoff_prob);
    let coll = means(&rows, &AV_VALUES, |r| r.collision_rate);
    let (a, b, c) = (
        strictly_decreasing(&rate),
        strictly_increasing(&handoff),
        strictly_increasing(&coll),
    );
    let ok = a && b && c;
    report(
        "P7",
        ok,
        &format!(
            "rate [{}] decreasing={a}; handoff [{}] increasing={b}; collision [{}] increasing={c}",
            fmt(&rate),
            fmt(&handoff),
            fmt(&coll)
        ),
        t0,
    );
    assert!(ok);
}

#[test]
fn p8_agent_ordering() {
    let t0 = Instant::now();
    let value = ScenarioConfig::default().n_tbs as f64;
    let stat =
        |results: &[PointResult]| harness::seed_mean(&summaries(results), value, |r| r.rate_tq);
    let (dqn_m, dqn_se) = stat(default_point(&DEFAULT_DQN, AgentKind::Dqn));
    let (tab_m, _) = stat(default_point(&DEFAULT_TABULAR, AgentKind::Tabular));
    let (near_m, near_se) = stat(default_point(&DEFAULT_NEAREST, AgentKind::NearestBs));
    let pooled = (dqn_se * dqn_se + near_se * near_se).sqrt();
    let ok = dqn_m >= tab_m && tab_m >= near_m && dqn_m - near_m > pooled;
    report(
        "P8",
        ok,
        &format!("rate_tq dqn {dqn_m:.4e} tabular {tab_m:.4e} nearest {near_m:.4e}, pooled se {pooled:.3e}"),
        t0,
    );
    assert!(ok);
}

#[test]
fn p9_metric_identities() {
    let t0 = Instant::now();
    let sweeps: [(&str, &[PointResult]); 6] = [
        ("desired_velocity", velocity_sweep()),
        ("n_tbs", tbs_sweep()),
        ("n_avs", av_sweep()),
        ("dqn", default_point(&DEFAULT_DQN, AgentKind::Dqn)),
        (
            "tabular",
            default_point(&DEFAULT_TABULAR, AgentKind::Tabular),
        ),
        (
            "nearest_bs",
            default_point(&DEFAULT_NEAREST, AgentKind::NearestBs),
        ),
    ];
    let dir = tempfile::tempdir().unwrap();
    let (mut quota, mut rate, mut k, mut runs) = (0usize, 0usize, 0usize, 0usize);
    let mut worst: f64 = 0.0;
    let mut bounds_ok = true;
    for (name, results) in sweeps {
        let first = &results[0].rows[0];
        // Only the file names and the JSON header depend on this config.
        let cfg = ScenarioConfig {
            agent: first.agent.parse().unwrap(),
            axis: first.axis.parse().unwrap(),
            values: results.iter().map(|r| r.axis_value).collect::<Vec<_>>(),
            seeds: SEEDS.to_vec(),
            ..ScenarioConfig::default()
        };
        let out = dir.path().join(name);
        let files = harness::write_sweep(&cfg, results, &out).unwrap();
        let emitted: Vec<io::SummaryRow> = io::read_rows(&files.summary_csv).unwrap();
        for (path, summary) in files.episodes.iter().zip(&emitted) {
            let rows: Vec<io::EpisodeRow> = io::read_rows(path).unwrap();
            runs += 1;
            for r in &rows {
                quota += r.quota_violations;
                rate += r.rate_violations;
                k += r.k_violations;
                bounds_ok &= (0.0..=1.0).contains(&r.handoff_prob) && r.rate_tq <= r.rate_tij;
            }
            let again = io::summarize(&rows).unwrap();
            assert_eq!(
                (&again.agent, again.seed, again.eval_episodes),
                (&summary.agent, summary.seed, summary.eval_episodes)
            );
            for (a, b) in [
                (again.reward, summary.reward),
                (again.r_tran, summary.r_tran),
                (again.r_tele, summary.r_tele),
                (again.rate_tq, summary.rate_tq),
                (again.rate_tij, summary.rate_tij),
                (again.handoff_prob, summary.handoff_prob),
                (again.collision_rate, summary.collision_rate),
                (again.velocity, summary.velocity),
            ] {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }
    let ok = quota == 0 && rate == 0 && k == 0 && bounds_ok && worst <= 1e-9;
    report(
        "P9",
        ok,
        &format!(
            "{runs} runs: quota {quota}, T_q>T_ij {rate}, k outside [0,1] {k}, episode bounds ok={bounds_ok}, summary drift {worst:.2e}"
        ),
        t0,
    );
    assert!(ok);
}
