//! Discrete-event simulation loop for quantized-state hybrid automata,
//! plus the classical fixed-step baseline it is measured against.
//!
//! One iteration either takes an instantaneous guarded edge (inter
//! transition) or advances every variable by forward Euler over the gap
//! since the previous instant and schedules the next event from the
//! level-crossing matrices of the enabled location (intra transition).
//! Guards are evaluated on the committed values of the previous instant;
//! resets read those same values and write the new ones.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{evaluate, Env, ExprError};
use crate::model::{eval_guard, level_crossing_matrix, HybridAutomaton, ModelError, Qsha};
use crate::qss::{next_event_detailed, EventTime, QssError, QssSettings};

/// Engine configuration. Tolerances feed the per-variable step queries;
/// the rest bounds the loop itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Simulate until this time (seconds).
    pub horizon: f64,
    /// Time-domain tolerance for dynamic quantum acceptance.
    pub eps_t: f64,
    /// Proximity at which a value counts as sitting on a level.
    pub eps_zero: f64,
    /// Highest retained power in flow Taylor expansions.
    pub taylor_order: usize,
    /// Cap on quantum halvings per step query.
    pub max_halvings: u32,
    /// Halving stops below this fraction of the initial quantum.
    pub min_quantum_ratio: f64,
    /// Maximum consecutive zero-time transitions before aborting.
    pub zeno_cap: u32,
    /// Check location invariants on intra steps (diagnostics only).
    pub check_invariants: bool,
}

impl SimConfig {
    pub fn new(horizon: f64) -> SimConfig {
        SimConfig {
            horizon,
            eps_t: 1e-3,
            eps_zero: 1e-9,
            taylor_order: 5,
            max_halvings: 60,
            min_quantum_ratio: 1e-12,
            zeno_cap: 1000,
            check_invariants: true,
        }
    }

    pub fn qss_settings(&self) -> QssSettings {
        QssSettings {
            eps_t: self.eps_t,
            eps_zero: self.eps_zero,
            taylor_order: self.taylor_order,
            max_halvings: self.max_halvings,
            min_quantum_ratio: self.min_quantum_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Integration step inside a location.
    Intra,
    /// Instantaneous guarded location switch; shares its timestamp with
    /// the preceding entry.
    Inter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub time: f64,
    pub location: String,
    pub valuation: Env,
    pub kind: TraceKind,
}

pub type Trace = Vec<TraceEntry>;

/// Mutable loop state of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t_now: f64,
    pub t_pre: f64,
    pub x_pre: Env,
    pub x_now: Env,
    pub enabled: String,
    pub next_dt: EventTime,
    pub zero_streak: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimStats {
    pub steps: u64,
    pub inter_transitions: u64,
    pub dqss_nonconverged: u64,
    pub max_halvings_used: u32,
    pub invariant_violations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trace: Trace,
    pub diagnostics: Vec<String>,
    pub stats: SimStats,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineError {
    #[error("zeno behaviour: {streak} consecutive zero-time transitions at t={time}")]
    Zeno { time: f64, streak: u32 },
    #[error("non-finite value of `{variable}` at t={time}")]
    NonFinite { time: f64, variable: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qss(#[from] QssError),
}

/// Builds the state at t = 0 from the initial valuation.
pub fn initial_state(qsha: &Qsha) -> SimState {
    SimState {
        t_now: 0.0,
        t_pre: 0.0,
        x_pre: qsha.base.initial_valuation.clone(),
        x_now: qsha.base.initial_valuation.clone(),
        enabled: qsha.base.initial_location.clone(),
        next_dt: EventTime::At(0.0),
        zero_streak: 0,
    }
}

struct NextEventSummary {
    time: EventTime,
    nonconverged: u32,
    max_halvings: u32,
}

/// Minimum next event over every outgoing edge of `enabled` and every
/// variable its guard constrains.
///
/// `stale_zeros` is set when the current values were already checked
/// against the guards at this very instant (the arrival step had zero
/// length): level differences at zero are then skipped instead of
/// re-scheduling an immediate event, so conjunctive guards whose atoms
/// cross at different times keep making progress.
fn next_event_summary(
    qsha: &Qsha,
    enabled: &str,
    x_now: &Env,
    t_now: f64,
    config: &SimConfig,
    stale_zeros: bool,
) -> Result<NextEventSummary, EngineError> {
    let settings = config.qss_settings();
    let edges = qsha.base.outgoing_edges(enabled);
    let mut summary = NextEventSummary {
        time: EventTime::Never,
        nonconverged: 0,
        max_halvings: 0,
    };
    if edges.is_empty() {
        return Ok(summary);
    }
    let flows = &qsha.quantized_flows[enabled];
    let mut slopes = Env::new();
    for var in &qsha.base.variables {
        slopes.insert(var.clone(), evaluate(&flows[var], x_now, t_now)?);
    }
    for edge_index in edges {
        let lc = level_crossing_matrix(&qsha.base, enabled, edge_index);
        for (var, levels) in &lc.per_variable_levels {
            let current = x_now[var];
            let mut diffs: Vec<f64> = levels.iter().map(|level| level - current).collect();
            if stale_zeros {
                diffs.retain(|d| d.abs() > config.eps_zero);
            }
            if diffs.is_empty() {
                continue;
            }
            let out = next_event_detailed(&flows[var], x_now, &slopes, &diffs, t_now, &settings)?;
            summary.time = summary.time.min(out.time);
            summary.nonconverged += out.nonconverged;
            summary.max_halvings = summary.max_halvings.max(out.max_halvings_used);
        }
    }
    Ok(summary)
}

/// Next discrete simulation event for a location and valuation. Zero
/// level differences schedule an immediate event. Locations without
/// outgoing edges never fire.
pub fn compute_next_event(
    qsha: &Qsha,
    enabled: &str,
    x_now: &Env,
    t_now: f64,
    config: &SimConfig,
) -> Result<EventTime, EngineError> {
    Ok(next_event_summary(qsha, enabled, x_now, t_now, config, false)?.time)
}

/// Union of guard levels per variable over the outgoing edges of a
/// location.
fn outgoing_levels(qsha: &Qsha, location: &str) -> BTreeMap<String, Vec<f64>> {
    let mut levels: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for edge_index in qsha.base.outgoing_edges(location) {
        let lc = level_crossing_matrix(&qsha.base, location, edge_index);
        for (var, ls) in lc.per_variable_levels {
            levels.entry(var).or_default().extend(ls);
        }
    }
    for ls in levels.values_mut() {
        ls.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ls.dedup();
    }
    levels
}

/// Values that land within `eps_zero` of a guard level after an Euler
/// step are pinned exactly onto the level. The step solver drives the
/// state onto crossings up to rounding; pinning removes that rounding so
/// non-strict and equality guards evaluate exactly at the boundary.
fn snap_to_levels(qsha: &Qsha, location: &str, x: &mut Env, eps_zero: f64) {
    for (var, levels) in outgoing_levels(qsha, location) {
        let value = x[&var];
        let mut best: Option<f64> = None;
        for level in levels {
            let d = (value - level).abs();
            if d <= eps_zero && best.map_or(true, |b| d < (value - b).abs()) {
                best = Some(level);
            }
        }
        if let Some(level) = best {
            x.insert(var, level);
        }
    }
}

pub struct StepOutput {
    pub state: SimState,
    pub entry: TraceEntry,
    pub diagnostics: Vec<String>,
    pub nonconverged: u32,
    pub max_halvings: u32,
    pub invariant_violated: bool,
}

/// One iteration of the simulation loop.
///
/// If the previous values satisfy an outgoing guard, the first such edge
/// (declaration order) is taken instantaneously: resets read the previous
/// values, the location switches, and the entry shares the current
/// timestamp. Otherwise the flows evolve by forward Euler over the gap
/// since the previous instant and the next event is computed from the
/// level crossings of the enabled location.
pub fn step(qsha: &Qsha, state: SimState, config: &SimConfig) -> Result<StepOutput, EngineError> {
    let mut state = state;
    let mut diagnostics = Vec::new();
    let mut nonconverged = 0;
    let mut max_halvings = 0;
    let mut invariant_violated = false;
    let location = state.enabled.clone();

    let fired = qsha
        .base
        .outgoing_edges(&location)
        .into_iter()
        .find_map(|ei| match eval_guard(&qsha.base.edges[ei].guard, &state.x_pre) {
            Ok(true) => Some(Ok(ei)),
            Ok(false) => None,
            Err(e) => Some(Err(e)),
        })
        .transpose()?;

    let (kind, next) = if let Some(edge_index) = fired {
        let edge = &qsha.base.edges[edge_index];
        let mut x_next = state.x_pre.clone();
        for (var, expr) in &edge.resets {
            x_next.insert(var.clone(), evaluate(expr, &state.x_pre, state.t_now)?);
        }
        state.x_now = x_next;
        state.enabled = edge.target.clone();
        (TraceKind::Inter, EventTime::At(0.0))
    } else {
        let delta = state.t_now - state.t_pre;
        let flows = &qsha.quantized_flows[&location];
        let mut x_next = Env::new();
        for var in &qsha.base.variables {
            let slope = evaluate(&flows[var], &state.x_pre, state.t_pre)?;
            let value = state.x_pre[var] + slope * delta;
            if !value.is_finite() {
                return Err(EngineError::NonFinite {
                    time: state.t_now,
                    variable: var.clone(),
                });
            }
            x_next.insert(var.clone(), value);
        }
        snap_to_levels(qsha, &location, &mut x_next, config.eps_zero);
        if config.check_invariants {
            if let Some(inv) = qsha.base.invariants.get(&location) {
                if !eval_guard(inv, &x_next)? {
                    invariant_violated = true;
                    diagnostics.push(format!(
                        "invariant of `{location}` violated at t={}",
                        state.t_now
                    ));
                }
            }
        }
        state.x_now = x_next;
        let summary =
            next_event_summary(qsha, &location, &state.x_now, state.t_now, config, delta == 0.0)?;
        nonconverged = summary.nonconverged;
        max_halvings = summary.max_halvings;
        (TraceKind::Intra, summary.time)
    };

    state.x_pre = state.x_now.clone();
    let entry = TraceEntry {
        time: state.t_now,
        location: state.enabled.clone(),
        valuation: state.x_pre.clone(),
        kind,
    };
    state.t_pre = state.t_now;
    state.next_dt = next;
    match next {
        EventTime::At(dt) if dt == 0.0 => {
            state.zero_streak += 1;
            if state.zero_streak > config.zeno_cap {
                return Err(EngineError::Zeno {
                    time: state.t_now,
                    streak: state.zero_streak,
                });
            }
        }
        EventTime::At(dt) => {
            state.zero_streak = 0;
            state.t_now += dt;
            if !state.t_now.is_finite() {
                return Err(EngineError::NonFinite {
                    time: state.t_pre,
                    variable: "t".into(),
                });
            }
        }
        EventTime::Never => {
            state.zero_streak = 0;
        }
    }

    Ok(StepOutput {
        state,
        entry,
        diagnostics,
        nonconverged,
        max_halvings,
        invariant_violated,
    })
}

/// Runs the discrete-event loop until the simulation time exceeds the
/// horizon. When no further event is reachable the run idles out to the
/// horizon and ends.
pub fn simulate(qsha: &Qsha, config: &SimConfig) -> Result<SimOutput, EngineError> {
    let mut state = initial_state(qsha);
    let mut trace = Trace::new();
    let mut diagnostics = Vec::new();
    let mut stats = SimStats::default();
    while state.t_now <= config.horizon {
        let out = step(qsha, state, config)?;
        state = out.state;
        trace.push(out.entry);
        diagnostics.extend(out.diagnostics);
        stats.steps += 1;
        if matches!(trace.last().unwrap().kind, TraceKind::Inter) {
            stats.inter_transitions += 1;
        }
        stats.dqss_nonconverged += out.nonconverged as u64;
        stats.max_halvings_used = stats.max_halvings_used.max(out.max_halvings);
        if out.invariant_violated {
            stats.invariant_violations += 1;
        }
        if state.next_dt.is_never() {
            state.t_now = config.horizon;
            break;
        }
    }
    Ok(SimOutput {
        trace,
        diagnostics,
        stats,
    })
}

/// Classical two-stage baseline: fixed-step forward Euler with sign-change
/// level-crossing detection and bisection localization. A crossing that is
/// entered and left inside one step leaves no sign change at the sampled
/// endpoints and goes undetected.
pub fn baseline_simulate(
    ha: &HybridAutomaton,
    config: &SimConfig,
    fixed_dt: f64,
) -> Result<SimOutput, EngineError> {
    assert!(fixed_dt > 0.0, "fixed_dt must be positive");
    let mut t = 0.0f64;
    let mut x = ha.initial_valuation.clone();
    let mut location = ha.initial_location.clone();
    let mut trace = vec![TraceEntry {
        time: 0.0,
        location: location.clone(),
        valuation: x.clone(),
        kind: TraceKind::Intra,
    }];
    let mut zero_streak = 0u32;
    let diagnostics = Vec::new();
    let mut stats = SimStats::default();

    let guard_enabled = |location: &str, x: &Env| -> Result<Option<usize>, EngineError> {
        for ei in ha.outgoing_edges(location) {
            if eval_guard(&ha.edges[ei].guard, x)? {
                return Ok(Some(ei));
            }
        }
        Ok(None)
    };

    while t <= config.horizon {
        if let Some(edge_index) = guard_enabled(&location, &x)? {
            let edge = &ha.edges[edge_index];
            let mut x_next = x.clone();
            for (var, expr) in &edge.resets {
                x_next.insert(var.clone(), evaluate(expr, &x, t)?);
            }
            x = x_next;
            location = edge.target.clone();
            trace.push(TraceEntry {
                time: t,
                location: location.clone(),
                valuation: x.clone(),
                kind: TraceKind::Inter,
            });
            stats.steps += 1;
            stats.inter_transitions += 1;
            zero_streak += 1;
            if zero_streak > config.zeno_cap {
                return Err(EngineError::Zeno {
                    time: t,
                    streak: zero_streak,
                });
            }
            continue;
        }
        zero_streak = 0;
        let flows = &ha.flows[&location];
        let mut slopes = Env::new();
        for var in &ha.variables {
            slopes.insert(var.clone(), evaluate(&flows[var], &x, t)?);
        }
        let at = |tau: f64| -> Env {
            x.iter()
                .map(|(v, val)| (v.clone(), val + slopes[v] * tau))
                .collect()
        };
        let tentative = at(fixed_dt);
        let step_len = if guard_enabled(&location, &tentative)?.is_some() {
            // Sign change across the step: localize the crossing by
            // binary search on the Euler segment.
            let mut lo = 0.0f64;
            let mut hi = fixed_dt;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if guard_enabled(&location, &at(mid))?.is_some() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        } else {
            fixed_dt
        };
        x = at(step_len);
        for (var, value) in &x {
            if !value.is_finite() {
                return Err(EngineError::NonFinite {
                    time: t,
                    variable: var.clone(),
                });
            }
        }
        t += step_len;
        trace.push(TraceEntry {
            time: t,
            location: location.clone(),
            valuation: x.clone(),
            kind: TraceKind::Intra,
        });
        stats.steps += 1;
    }
    Ok(SimOutput {
        trace,
        diagnostics,
        stats,
    })
}

/// Number of loop iterations behind a trace: entries minus the initial
/// one.
pub fn count_steps(trace: &[TraceEntry]) -> usize {
    trace.len().saturating_sub(1)
}

/// Ordered timestamps of the inter-location transitions.
pub fn crossing_times(trace: &[TraceEntry]) -> Vec<f64> {
    trace
        .iter()
        .filter(|e| e.kind == TraceKind::Inter)
        .map(|e| e.time)
        .collect()
}

/// Audits a trace against the never-overshoot and execution conditions.
///
/// Checks, per entry: non-decreasing timestamps; inter entries share
/// their predecessor's timestamp, their predecessor satisfies the taken
/// edge's guard with at least one atom sitting on its level within
/// `eps_zero`, and their valuation equals the edge resets applied to the
/// predecessor; consecutive intra entries never straddle a guard level of
/// their location by more than `eps_zero`.
pub fn audit_trace(qsha: &Qsha, trace: &[TraceEntry], eps_zero: f64) -> Vec<String> {
    let mut violations = Vec::new();
    for (i, entry) in trace.iter().enumerate() {
        if i == 0 {
            continue;
        }
        let prev = &trace[i - 1];
        if entry.time < prev.time {
            violations.push(format!("entry {i}: time decreases ({} -> {})", prev.time, entry.time));
        }
        match entry.kind {
            TraceKind::Inter => {
                if entry.time != prev.time {
                    violations.push(format!(
                        "entry {i}: inter transition not at its predecessor's timestamp"
                    ));
                }
                let edge = qsha
                    .base
                    .outgoing_edges(&prev.location)
                    .into_iter()
                    .map(|ei| &qsha.base.edges[ei])
                    .find(|e| {
                        e.target == entry.location
                            && eval_guard(&e.guard, &prev.valuation).unwrap_or(false)
                    });
                let edge = match edge {
                    Some(e) => e,
                    None => {
                        violations.push(format!(
                            "entry {i}: no enabled edge {} -> {}",
                            prev.location, entry.location
                        ));
                        continue;
                    }
                };
                let on_level = crate::model::guard_to_dnf(&edge.guard)
                    .iter()
                    .flatten()
                    .any(|atom| {
                        prev.valuation
                            .get(&atom.variable)
                            .map(|v| (v - atom.bound.to_f64()).abs() <= eps_zero)
                            .unwrap_or(false)
                    });
                if !on_level {
                    violations.push(format!(
                        "entry {i}: inter transition at t={} does not sit on a guard level",
                        entry.time
                    ));
                }
                for var in &qsha.base.variables {
                    let expected = match edge.resets.get(var) {
                        Some(expr) => evaluate(expr, &prev.valuation, prev.time).unwrap_or(f64::NAN),
                        None => prev.valuation[var],
                    };
                    if entry.valuation[var] != expected {
                        violations.push(format!(
                            "entry {i}: reset mismatch for `{var}` at t={}",
                            entry.time
                        ));
                    }
                }
            }
            TraceKind::Intra => {
                if prev.location != entry.location {
                    violations.push(format!("entry {i}: intra entry changes location"));
                    continue;
                }
                let levels = outgoing_levels(qsha, &entry.location);
                for (var, ls) in levels {
                    let a = prev.valuation[&var];
                    let b = entry.valuation[&var];
                    for level in ls {
                        let crossed = (a - level) * (b - level) < 0.0;
                        let landed = (a - level).abs() <= eps_zero || (b - level).abs() <= eps_zero;
                        if crossed && !landed {
                            violations.push(format!(
                                "entry {i}: `{var}` passed level {level} between t={} and t={}",
                                prev.time, entry.time
                            ));
                        }
                    }
                }
            }
        }
    }
    violations
}
