//! Hybrid automata and their quantized-state counterparts: guard predicate
//! algebra, structural validation, and level-crossing extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::expr::{Env, Expression};
use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Ge,
    Le,
    Gt,
    Lt,
}

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Ge => lhs >= rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Lt => lhs < rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Lt => "<",
        }
    }
}

/// Single comparison of a variable against a rational constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub variable: String,
    pub comparator: Comparator,
    pub bound: Rational,
}

impl Atom {
    pub fn holds(&self, valuation: &Env) -> Result<bool, ModelError> {
        let v = valuation
            .get(&self.variable)
            .ok_or_else(|| ModelError::UnboundVariable(self.variable.clone()))?;
        Ok(self.comparator.holds(*v, self.bound.to_f64()))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.variable, self.comparator.symbol(), self.bound)
    }
}

/// Guard predicate tree. Negation is expressed only by comparator
/// reversal, so the tree has no `Not` node.
#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    Atom(Atom),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
}

impl Guard {
    pub fn atom(variable: impl Into<String>, comparator: Comparator, bound: Rational) -> Guard {
        Guard::Atom(Atom {
            variable: variable.into(),
            comparator,
            bound,
        })
    }

    pub fn and(a: Guard, b: Guard) -> Guard {
        Guard::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Guard, b: Guard) -> Guard {
        Guard::Or(Box::new(a), Box::new(b))
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn walk(g: &Guard, out: &mut BTreeSet<String>) {
            match g {
                Guard::Atom(a) => {
                    out.insert(a.variable.clone());
                }
                Guard::And(a, b) | Guard::Or(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }
}

fn fmt_guard(g: &Guard, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let level = match g {
        Guard::Or(..) => 1,
        Guard::And(..) => 2,
        Guard::Atom(_) => 3,
    };
    if level < min {
        write!(f, "(")?;
    }
    match g {
        Guard::Atom(a) => write!(f, "{a}")?,
        Guard::And(a, b) => {
            fmt_guard(a, 2, f)?;
            write!(f, " & ")?;
            fmt_guard(b, 3, f)?;
        }
        Guard::Or(a, b) => {
            fmt_guard(a, 1, f)?;
            write!(f, " | ")?;
            fmt_guard(b, 2, f)?;
        }
    }
    if level < min {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_guard(self, 0, f)
    }
}

/// Guarded edge between two locations, with per-variable reset
/// expressions. Variables absent from `resets` keep their value.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub guard: Guard,
    pub resets: BTreeMap<String, Expression>,
}

/// Hybrid automaton: locations carrying ODE flows over continuous
/// variables, connected by guarded, resetting edges.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridAutomaton {
    pub locations: Vec<String>,
    /// Declaration order of the continuous variables.
    pub variables: Vec<String>,
    pub initial_location: String,
    pub initial_valuation: BTreeMap<String, f64>,
    /// location -> variable -> right-hand side of the ODE.
    pub flows: BTreeMap<String, BTreeMap<String, Expression>>,
    /// Optional invariant per location, used as a diagnostic fairness
    /// condition during simulation.
    pub invariants: BTreeMap<String, Guard>,
    pub edges: Vec<Edge>,
}

impl HybridAutomaton {
    /// Indices of the edges leaving `location`, in declaration order.
    pub fn outgoing_edges(&self, location: &str) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.source == location)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Quantized-state counterpart of a [`HybridAutomaton`]: the flows read
/// the quantized signals `q(t)` instead of `x(t)`. Quantized signals are
/// addressed by their base variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Qsha {
    pub base: HybridAutomaton,
    pub quantized_variables: Vec<String>,
    pub quantized_flows: BTreeMap<String, BTreeMap<String, Expression>>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("unbound variable `{0}` in guard evaluation")]
    UnboundVariable(String),
    #[error("automaton failed validation with {0} error(s)")]
    Invalid(usize),
}

/// Outcome of structural validation. Errors block simulation; warnings
/// are informational.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    /// (rule id, human message)
    pub errors: Vec<(String, String)>,
    pub well_formedness_warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn push(&mut self, rule: &str, message: String) {
        self.errors.push((rule.to_string(), message));
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            writeln!(f, "ok")?;
        }
        for (rule, msg) in &self.errors {
            writeln!(f, "error [{rule}]: {msg}")?;
        }
        for w in &self.well_formedness_warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks every structural invariant of a [`HybridAutomaton`]. Errors are
/// data: the report is empty exactly when the automaton is accepted for
/// simulation.
pub fn validate(ha: &HybridAutomaton) -> ValidationReport {
    let mut report = ValidationReport::default();
    let locations: BTreeSet<&str> = ha.locations.iter().map(|s| s.as_str()).collect();
    let variables: BTreeSet<&str> = ha.variables.iter().map(|s| s.as_str()).collect();

    for name in ha.locations.iter().chain(ha.variables.iter()) {
        if !is_identifier(name) {
            report.push("name-syntax", format!("`{name}` is not a valid identifier"));
        }
    }
    if ha.locations.len() != locations.len() {
        report.push("duplicate-location", "duplicate location identifiers".into());
    }
    if ha.variables.len() != variables.len() {
        report.push("duplicate-variable", "duplicate variable names".into());
    }

    if !locations.contains(ha.initial_location.as_str()) {
        report.push(
            "initial-location",
            format!("initial location `{}` is not declared", ha.initial_location),
        );
    }

    for (i, e) in ha.edges.iter().enumerate() {
        if !locations.contains(e.source.as_str()) {
            report.push(
                "edge-endpoint",
                format!("edge #{i} source `{}` is not a declared location", e.source),
            );
        }
        if !locations.contains(e.target.as_str()) {
            report.push(
                "edge-endpoint",
                format!("edge #{i} target `{}` is not a declared location", e.target),
            );
        }
        for v in e.guard.variables() {
            if !variables.contains(v.as_str()) {
                report.push(
                    "undeclared-variable",
                    format!("edge #{i} guard references undeclared variable `{v}`"),
                );
            }
        }
        for (target_var, expr) in &e.resets {
            if !variables.contains(target_var.as_str()) {
                report.push(
                    "undeclared-variable",
                    format!("edge #{i} resets undeclared variable `{target_var}`"),
                );
            }
            for v in expr.variables() {
                if !variables.contains(v.as_str()) {
                    report.push(
                        "undeclared-variable",
                        format!("edge #{i} reset of `{target_var}` reads undeclared `{v}`"),
                    );
                }
            }
        }
    }

    for (loc, flows) in &ha.flows {
        if !locations.contains(loc.as_str()) {
            report.push(
                "unknown-location",
                format!("flows given for undeclared location `{loc}`"),
            );
        }
        for (var, expr) in flows {
            if !variables.contains(var.as_str()) {
                report.push(
                    "undeclared-variable",
                    format!("location `{loc}` has a flow for undeclared variable `{var}`"),
                );
            }
            for v in expr.variables() {
                if !variables.contains(v.as_str()) {
                    report.push(
                        "undeclared-variable",
                        format!("flow of `{var}` in `{loc}` reads undeclared `{v}`"),
                    );
                }
            }
        }
    }
    for loc in &ha.locations {
        let flows = ha.flows.get(loc);
        for var in &ha.variables {
            if flows.map_or(true, |f| !f.contains_key(var)) {
                report.push(
                    "missing-flow",
                    format!("location `{loc}` has no flow for variable `{var}`"),
                );
            }
        }
    }

    for (loc, inv) in &ha.invariants {
        if !locations.contains(loc.as_str()) {
            report.push(
                "unknown-location",
                format!("invariant given for undeclared location `{loc}`"),
            );
        }
        for v in inv.variables() {
            if !variables.contains(v.as_str()) {
                report.push(
                    "undeclared-variable",
                    format!("invariant of `{loc}` references undeclared variable `{v}`"),
                );
            }
        }
    }

    for var in &ha.variables {
        match ha.initial_valuation.get(var) {
            None => report.push(
                "initial-valuation",
                format!("no initial value for variable `{var}`"),
            ),
            Some(v) if !v.is_finite() => report.push(
                "initial-valuation",
                format!("initial value of `{var}` is not finite"),
            ),
            Some(_) => {}
        }
    }
    for var in ha.initial_valuation.keys() {
        if !variables.contains(var.as_str()) {
            report.push(
                "initial-valuation",
                format!("initial value given for undeclared variable `{var}`"),
            );
        }
    }

    for loc in &ha.locations {
        if ha.edges.iter().all(|e| &e.source != loc) {
            report
                .well_formedness_warnings
                .push(format!("location `{loc}` is terminal (no outgoing edges)"));
        }
    }

    report
}

/// Builds the quantized-state counterpart: every state-variable read in
/// every flow is marked as reading the quantized signal. The base
/// automaton is carried along unchanged.
pub fn quantize(ha: &HybridAutomaton) -> Result<Qsha, ModelError> {
    let report = validate(ha);
    if !report.is_ok() {
        return Err(ModelError::Invalid(report.errors.len()));
    }
    let quantized_flows = ha
        .flows
        .iter()
        .map(|(loc, flows)| {
            let q = flows
                .iter()
                .map(|(var, e)| (var.clone(), e.quantize_reads(&ha.variables)))
                .collect();
            (loc.clone(), q)
        })
        .collect();
    Ok(Qsha {
        base: ha.clone(),
        quantized_variables: ha.variables.clone(),
        quantized_flows,
    })
}

/// Rewrites a guard into disjunctive normal form: a list of conjunctive
/// terms, each a list of atoms. No simplification or deduplication is
/// performed.
pub fn guard_to_dnf(g: &Guard) -> Vec<Vec<Atom>> {
    match g {
        Guard::Atom(a) => vec![vec![a.clone()]],
        Guard::Or(a, b) => {
            let mut terms = guard_to_dnf(a);
            terms.extend(guard_to_dnf(b));
            terms
        }
        Guard::And(a, b) => {
            let left = guard_to_dnf(a);
            let right = guard_to_dnf(b);
            let mut terms = Vec::with_capacity(left.len() * right.len());
            for l in &left {
                for r in &right {
                    let mut t = l.clone();
                    t.extend(r.iter().cloned());
                    terms.push(t);
                }
            }
            terms
        }
    }
}

/// Standard predicate semantics over a complete valuation.
pub fn eval_guard(g: &Guard, valuation: &Env) -> Result<bool, ModelError> {
    match g {
        Guard::Atom(a) => a.holds(valuation),
        Guard::And(a, b) => Ok(eval_guard(a, valuation)? && eval_guard(b, valuation)?),
        Guard::Or(a, b) => Ok(eval_guard(a, valuation)? || eval_guard(b, valuation)?),
    }
}

/// Per-edge table of guard boundary values.
///
/// One row per DNF term of the edge guard; a row maps each constrained
/// variable to the boundary constants of its atoms in that term (absent
/// means unconstrained). `per_variable_levels` is the column projection:
/// the sorted, deduplicated set of boundary values per variable, which is
/// what event scheduling consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCrossingMatrix {
    pub edge_index: usize,
    pub rows: Vec<BTreeMap<String, Vec<f64>>>,
    pub per_variable_levels: BTreeMap<String, Vec<f64>>,
}

/// Builds the level-crossing matrix for one outgoing edge of `location`.
pub fn level_crossing_matrix(
    ha: &HybridAutomaton,
    location: &str,
    edge_index: usize,
) -> LevelCrossingMatrix {
    let edge = &ha.edges[edge_index];
    assert_eq!(edge.source, location, "edge does not leave this location");
    let mut rows = Vec::new();
    let mut per_variable_levels: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for term in guard_to_dnf(&edge.guard) {
        let mut row: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for atom in term {
            let level = atom.bound.to_f64();
            row.entry(atom.variable.clone()).or_default().push(level);
            per_variable_levels
                .entry(atom.variable)
                .or_default()
                .push(level);
        }
        rows.push(row);
    }
    for levels in per_variable_levels.values_mut() {
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels.dedup();
    }
    LevelCrossingMatrix {
        edge_index,
        rows,
        per_variable_levels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn rat(s: &str) -> Rational {
        s.parse().unwrap()
    }

    /// The two-location robot automaton: variables x, y, theta, phi with
    /// trigonometric flows and the combined obstacle guard.
    pub(crate) fn robot() -> HybridAutomaton {
        let vars: Vec<String> = ["x", "y", "theta", "phi"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let t1_flows: BTreeMap<String, Expression> = [
            ("x", "cos(theta)*30"),
            ("y", "sin(theta)*30"),
            ("theta", "tan(phi/1)*30"),
            ("phi", "-10"),
        ]
        .iter()
        .map(|(v, e)| (v.to_string(), parse_expression(e).unwrap()))
        .collect();
        let t2_flows: BTreeMap<String, Expression> = [
            ("x", "-(cos(theta)*30)"),
            ("y", "-(sin(theta)*30)"),
            ("theta", "-(tan(phi/1)*30)"),
            ("phi", "10"),
        ]
        .iter()
        .map(|(v, e)| (v.to_string(), parse_expression(e).unwrap()))
        .collect();

        let g = Guard::or(
            Guard::or(
                Guard::atom("y", Comparator::Ge, rat("0.8")),
                Guard::atom("x", Comparator::Ge, rat("3.2")),
            ),
            Guard::and(
                Guard::atom("y", Comparator::Le, rat("-0.4")),
                Guard::atom("x", Comparator::Le, rat("2.8")),
            ),
        );
        let back = Guard::and(
            Guard::and(
                Guard::atom("y", Comparator::Lt, rat("0.8")),
                Guard::atom("x", Comparator::Lt, rat("3.2")),
            ),
            Guard::or(
                Guard::atom("y", Comparator::Gt, rat("-0.4")),
                Guard::atom("x", Comparator::Gt, rat("2.8")),
            ),
        );

        HybridAutomaton {
            locations: vec!["T1".into(), "T2".into()],
            variables: vars,
            initial_location: "T1".into(),
            initial_valuation: [("x", 0.0), ("y", 0.0), ("theta", 0.0), ("phi", 1.0)]
                .iter()
                .map(|(v, x)| (v.to_string(), *x))
                .collect(),
            flows: [("T1".to_string(), t1_flows), ("T2".to_string(), t2_flows)]
                .into_iter()
                .collect(),
            invariants: [("T2".to_string(), g.clone())].into_iter().collect(),
            edges: vec![
                Edge {
                    source: "T1".into(),
                    target: "T2".into(),
                    guard: g,
                    resets: BTreeMap::new(),
                },
                Edge {
                    source: "T2".into(),
                    target: "T1".into(),
                    guard: back,
                    resets: BTreeMap::new(),
                },
            ],
        }
    }

    #[test]
    fn robot_automaton_validates() {
        assert!(validate(&robot()).is_ok());
    }

    #[test]
    fn broken_edge_endpoint_is_an_error() {
        let mut ha = robot();
        ha.edges[0].target = "T9".into();
        let report = validate(&ha);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].0, "edge-endpoint");
    }

    #[test]
    fn missing_flow_is_an_error() {
        let mut ha = robot();
        ha.flows.get_mut("T1").unwrap().remove("y");
        let report = validate(&ha);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].0, "missing-flow");
    }

    #[test]
    fn quantize_marks_every_state_read() {
        let q = quantize(&robot()).unwrap();
        let flow = &q.quantized_flows["T1"]["x"];
        assert_eq!(
            *flow,
            parse_expression("cos(theta)*30")
                .unwrap()
                .quantize_reads(&["theta".to_string()])
        );
        // Constant flows stay put.
        let phi = &q.quantized_flows["T1"]["phi"];
        assert_eq!(*phi, parse_expression("-10").unwrap());
    }

    #[test]
    fn quantize_is_structure_preserving() {
        let ha = robot();
        let q = quantize(&ha).unwrap();
        for (loc, flows) in &q.quantized_flows {
            for (var, e) in flows {
                assert_eq!(e.strip_quantized(), ha.flows[loc][var]);
            }
        }
    }

    #[test]
    fn quantize_rejects_invalid_automata() {
        let mut ha = robot();
        ha.flows.get_mut("T1").unwrap().remove("y");
        assert_eq!(quantize(&ha), Err(ModelError::Invalid(1)));
    }

    #[test]
    fn dnf_of_robot_guard() {
        let ha = robot();
        let terms = guard_to_dnf(&ha.edges[0].guard);
        assert_eq!(terms.len(), 3);
        assert_eq!(terms[0].len(), 1);
        assert_eq!(terms[0][0].variable, "y");
        assert_eq!(terms[1][0].variable, "x");
        assert_eq!(terms[2].len(), 2);
    }

    #[test]
    fn dnf_keeps_duplicates() {
        let a = Guard::and(
            Guard::atom("a", Comparator::Ge, rat("1")),
            Guard::atom("b", Comparator::Ge, rat("2")),
        );
        let g = Guard::or(a.clone(), a);
        assert_eq!(guard_to_dnf(&g).len(), 2);
    }

    #[test]
    fn lc_matrix_for_robot_edge() {
        let ha = robot();
        let lc = level_crossing_matrix(&ha, "T1", 0);
        assert_eq!(lc.per_variable_levels["x"], vec![2.8, 3.2]);
        assert_eq!(lc.per_variable_levels["y"], vec![-0.4, 0.8]);
        assert!(!lc.per_variable_levels.contains_key("theta"));
        assert!(!lc.per_variable_levels.contains_key("phi"));
        assert_eq!(lc.rows.len(), 3);
    }

    #[test]
    fn lc_matrix_single_atom() {
        let mut ha = robot();
        ha.edges[0].guard = Guard::atom("x", Comparator::Ge, rat("5"));
        let lc = level_crossing_matrix(&ha, "T1", 0);
        assert_eq!(lc.rows.len(), 1);
        assert_eq!(lc.per_variable_levels["x"], vec![5.0]);
        assert_eq!(lc.per_variable_levels.len(), 1);
    }

    #[test]
    fn lc_matrix_closed_band_collects_both_bounds() {
        let mut ha = robot();
        ha.edges[0].guard = Guard::and(
            Guard::atom("x", Comparator::Ge, rat("1")),
            Guard::atom("x", Comparator::Le, rat("2")),
        );
        let lc = level_crossing_matrix(&ha, "T1", 0);
        assert_eq!(lc.rows.len(), 1);
        assert_eq!(lc.rows[0]["x"], vec![1.0, 2.0]);
        assert_eq!(lc.per_variable_levels["x"], vec![1.0, 2.0]);
    }

    #[test]
    fn guard_evaluation_examples() {
        let ha = robot();
        let g = &ha.edges[0].guard;
        let at = |x: f64, y: f64| -> Env {
            [("x", x), ("y", y), ("theta", 0.0), ("phi", 1.0)]
                .iter()
                .map(|(v, val)| (v.to_string(), *val))
                .collect()
        };
        assert!(eval_guard(g, &at(3.3, 0.0)).unwrap());
        assert!(!eval_guard(g, &at(0.0, 0.0)).unwrap());
    }

    #[test]
    fn strict_comparator_boundary_is_false() {
        let g = Guard::atom("x", Comparator::Gt, rat("0"));
        let env: Env = [("x".to_string(), 0.0)].into_iter().collect();
        assert!(!eval_guard(&g, &env).unwrap());
    }

    #[test]
    fn guard_eval_missing_variable_errors() {
        let g = Guard::atom("x", Comparator::Gt, rat("0"));
        assert_eq!(
            eval_guard(&g, &Env::new()),
            Err(ModelError::UnboundVariable("x".into()))
        );
    }

    #[test]
    fn guard_display_round_trips_through_dnf_semantics() {
        let ha = robot();
        let shown = ha.edges[0].guard.to_string();
        assert_eq!(shown, "y >= 0.8 | x >= 3.2 | y <= -0.4 & x <= 2.8");
    }
}
