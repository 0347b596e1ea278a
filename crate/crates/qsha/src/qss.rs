//! Step-size computation with a dynamic quantum.
//!
//! For one continuous variable the next scheduling event is found by
//! comparing a first-order prediction (hysteresis: the quantized signal is
//! pinned to the current value, so the step is `|dq| / |slope|`) with a
//! higher-order prediction (the flow is Taylor-expanded along the linear
//! quantization signals of the variables it reads and integrated into a
//! displacement polynomial, whose earliest deviation of `|dq|` is found by
//! root isolation). While the two predictions disagree by more than the
//! time tolerance, the quantum is halved and both are recomputed. The
//! first-order time of the accepted quantum is returned, so a forward
//! Euler step of that size moves the variable by exactly the quantum and
//! never overshoots the level the quantum was derived from.

use std::fmt;

use thiserror::Error;

use crate::expr::series::QLines;
use crate::expr::{evaluate, integrate_series, taylor_series, Env, ExprError, Expression};
use crate::poly::{smallest_positive_real_root, Polynomial, DEFAULT_ROOT_TOL};

/// Future event time: a non-negative number of seconds from now, or never
/// (no reachable crossing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventTime {
    At(f64),
    Never,
}

impl EventTime {
    pub fn is_never(self) -> bool {
        matches!(self, EventTime::Never)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            EventTime::At(t) => Some(t),
            EventTime::Never => None,
        }
    }

    /// Minimum of two event times; `Never` only wins against `Never`.
    pub fn min(self, other: EventTime) -> EventTime {
        match (self, other) {
            (EventTime::At(a), EventTime::At(b)) => EventTime::At(a.min(b)),
            (EventTime::At(a), EventTime::Never) | (EventTime::Never, EventTime::At(a)) => {
                EventTime::At(a)
            }
            (EventTime::Never, EventTime::Never) => EventTime::Never,
        }
    }
}

impl fmt::Display for EventTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventTime::At(t) => write!(f, "{t}"),
            EventTime::Never => write!(f, "inf"),
        }
    }
}

/// Tolerances and truncation settings shared by every step query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QssSettings {
    /// Time-domain tolerance for accepting a quantum.
    pub eps_t: f64,
    /// A level difference within this magnitude counts as already crossed.
    pub eps_zero: f64,
    /// Highest retained power in the Taylor expansion of the flow.
    pub taylor_order: usize,
    /// Hard cap on quantum halvings per query.
    pub max_halvings: u32,
    /// Halving stops once the quantum falls below this fraction of its
    /// initial magnitude.
    pub min_quantum_ratio: f64,
}

impl Default for QssSettings {
    fn default() -> QssSettings {
        QssSettings {
            eps_t: 1e-3,
            eps_zero: 1e-9,
            taylor_order: 5,
            max_halvings: 60,
            min_quantum_ratio: 1e-12,
        }
    }
}

/// One step-size query for one continuous variable.
#[derive(Debug, Clone)]
pub struct StepQuery<'a> {
    /// Quantized flow of the variable being stepped.
    pub ode: &'a Expression,
    /// Current values of all continuous variables.
    pub current: &'a Env,
    /// Current slopes of all continuous variables, used as the linear
    /// coefficients of the quantization signals.
    pub slopes: &'a Env,
    /// Signed quantum; carries the sign of (level - current value).
    pub quantum: f64,
    /// Absolute time at the expansion point.
    pub t_origin: f64,
    pub settings: QssSettings,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QssError {
    #[error("flow slope is not finite")]
    NonFiniteSlope,
    #[error("quantum magnitude must be positive")]
    NonPositiveQuantum,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Result of a dynamic-quantum query with its halving diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqssOutcome {
    pub time: EventTime,
    pub halvings: u32,
    /// False when halving was exhausted without the two predictions
    /// agreeing; the reported time is the last first-order prediction.
    pub converged: bool,
}

/// Slope and displacement polynomial of one variable at one instant. Both
/// are independent of the quantum, so one kernel serves a whole halving
/// chain and all levels of the variable.
pub(crate) struct StepKernel {
    slope: f64,
    /// Displacement x(t) - x(0) from the truncated series of the flow;
    /// `None` when identically zero.
    displacement: Option<Polynomial>,
}

impl StepKernel {
    pub(crate) fn build(
        ode: &Expression,
        current: &Env,
        slopes: &Env,
        taylor_order: usize,
        t_origin: f64,
    ) -> Result<StepKernel, QssError> {
        let slope = evaluate(ode, current, t_origin).map_err(|e| match e {
            ExprError::NonFinite => QssError::NonFiniteSlope,
            other => QssError::Expr(other),
        })?;
        let mut q_lines = QLines::new();
        for (name, value) in current {
            let s = slopes.get(name).copied().unwrap_or(0.0);
            q_lines.insert(name.clone(), (*value, s));
        }
        let series = taylor_series(ode, current, &q_lines, taylor_order, t_origin)?;
        let displacement = Polynomial::new(integrate_series(&series).coefficients().to_vec());
        let displacement = if displacement.is_zero() {
            None
        } else {
            Some(displacement)
        };
        Ok(StepKernel {
            slope,
            displacement,
        })
    }

    /// First-order time: the quantized signal is held by hysteresis, so
    /// the variable diverges from it at the constant rate `slope`.
    fn qss1(&self, quantum: f64) -> EventTime {
        if self.slope == 0.0 {
            EventTime::Never
        } else {
            EventTime::At((quantum / self.slope).abs())
        }
    }

    /// Higher-order time: the earliest instant at which the displacement
    /// polynomial deviates from zero by the quantum magnitude, in either
    /// direction. The sign attachment that yields an odd number of
    /// coefficient sign changes always has a positive real root, so the
    /// minimum over both attachments exists whenever the displacement is
    /// nonzero.
    fn mqss2(&self, quantum: f64) -> EventTime {
        let d = match &self.displacement {
            None => return EventTime::Never,
            Some(d) => d,
        };
        let dq = quantum.abs();
        let mut best = EventTime::Never;
        for constant in [-dq, dq] {
            let p = d.with_constant_term(constant);
            if let Ok(Some(root)) = smallest_positive_real_root(&p, DEFAULT_ROOT_TOL) {
                best = best.min(EventTime::At(root));
            }
        }
        best
    }

    pub(crate) fn dqss(&self, quantum: f64, settings: &QssSettings) -> DqssOutcome {
        let floor = quantum.abs() * settings.min_quantum_ratio;
        let mut q = quantum;
        let mut halvings = 0u32;
        loop {
            let t1 = self.qss1(q);
            let t2 = self.mqss2(q);
            match (t1, t2) {
                (EventTime::Never, EventTime::Never) => {
                    return DqssOutcome {
                        time: EventTime::Never,
                        halvings,
                        converged: true,
                    }
                }
                (EventTime::At(a), EventTime::At(b)) if (a - b).abs() < settings.eps_t => {
                    return DqssOutcome {
                        time: t1,
                        halvings,
                        converged: true,
                    }
                }
                // Disagreement, including one-sided unreachability: halve.
                _ => {}
            }
            if halvings >= settings.max_halvings || (q / 2.0).abs() < floor {
                return DqssOutcome {
                    time: t1,
                    halvings,
                    converged: false,
                };
            }
            q /= 2.0;
            halvings += 1;
        }
    }
}

fn check_quantum(q: f64) -> Result<(), QssError> {
    if q.abs() > 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(QssError::NonPositiveQuantum)
    }
}

/// First-order (hysteresis) step time for one quantum.
pub fn qss1_time(query: &StepQuery) -> Result<EventTime, QssError> {
    check_quantum(query.quantum)?;
    let kernel = StepKernel::build(
        query.ode,
        query.current,
        query.slopes,
        query.settings.taylor_order,
        query.t_origin,
    )?;
    Ok(kernel.qss1(query.quantum))
}

/// Modified second-order step time: series displacement against a
/// hysteresis-held quantized signal.
pub fn mqss2_time(query: &StepQuery) -> Result<EventTime, QssError> {
    check_quantum(query.quantum)?;
    let kernel = StepKernel::build(
        query.ode,
        query.current,
        query.slopes,
        query.settings.taylor_order,
        query.t_origin,
    )?;
    Ok(kernel.mqss2(query.quantum))
}

/// Dynamic-quantum step time with halving diagnostics.
pub fn dqss_detailed(query: &StepQuery) -> Result<DqssOutcome, QssError> {
    check_quantum(query.quantum)?;
    let kernel = StepKernel::build(
        query.ode,
        query.current,
        query.slopes,
        query.settings.taylor_order,
        query.t_origin,
    )?;
    Ok(kernel.dqss(query.quantum, &query.settings))
}

/// Dynamic-quantum step time; halves the quantum until the first- and
/// higher-order predictions agree within `eps_t`, then returns the
/// first-order prediction.
pub fn dqss(query: &StepQuery) -> Result<EventTime, QssError> {
    Ok(dqss_detailed(query)?.time)
}

/// Next scheduling event for one variable with its halving diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NextEventOutcome {
    pub time: EventTime,
    /// Number of level queries whose halving chain was exhausted.
    pub nonconverged: u32,
    pub max_halvings_used: u32,
    /// Set when called with an empty level list.
    pub empty_levels: bool,
}

/// Dispatches one variable's scheduling query over its pending level
/// crossings.
///
/// `level_crossings` holds the signed differences (level - current value)
/// for this variable. A difference within `eps_zero` means a level has
/// already been reached and the automaton must be scheduled right now.
/// Otherwise each difference seeds a dynamic-quantum query and the
/// earliest event wins.
pub fn next_event_detailed(
    ode: &Expression,
    current: &Env,
    slopes: &Env,
    level_crossings: &[f64],
    t_origin: f64,
    settings: &QssSettings,
) -> Result<NextEventOutcome, QssError> {
    if level_crossings.is_empty() {
        return Ok(NextEventOutcome {
            time: EventTime::Never,
            nonconverged: 0,
            max_halvings_used: 0,
            empty_levels: true,
        });
    }
    if level_crossings.iter().any(|d| d.abs() <= settings.eps_zero) {
        return Ok(NextEventOutcome {
            time: EventTime::At(0.0),
            nonconverged: 0,
            max_halvings_used: 0,
            empty_levels: false,
        });
    }
    let kernel = StepKernel::build(ode, current, slopes, settings.taylor_order, t_origin)?;
    let mut out = NextEventOutcome {
        time: EventTime::Never,
        nonconverged: 0,
        max_halvings_used: 0,
        empty_levels: false,
    };
    for &diff in level_crossings {
        let r = kernel.dqss(diff, settings);
        out.time = out.time.min(r.time);
        out.max_halvings_used = out.max_halvings_used.max(r.halvings);
        if !r.converged {
            out.nonconverged += 1;
        }
    }
    Ok(out)
}

/// See [`next_event_detailed`]; returns only the event time.
pub fn next_event(
    ode: &Expression,
    current: &Env,
    slopes: &Env,
    level_crossings: &[f64],
    t_origin: f64,
    settings: &QssSettings,
) -> Result<EventTime, QssError> {
    Ok(next_event_detailed(ode, current, slopes, level_crossings, t_origin, settings)?.time)
}
