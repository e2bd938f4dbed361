//! Conditional field visibility.
//!
//! The schema's condition rules form a dependency graph from controller to
//! dependent fields. Visibility is evaluated in topological order so that a
//! hidden controller never influences its dependents.
//!
//! Resolution: a field with any `Show` rule is hidden until one fires, a
//! firing `Hide` rule always wins, and `Require` only marks visible fields.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::schema::{CanonicalSchema, ConditionRule, Effect};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CondError {
    #[error("conditional rules form a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown field `{0}`")]
    UnknownField(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepGraph {
    /// controller id -> (dependent id, rule)
    pub edges: BTreeMap<String, Vec<(String, ConditionRule)>>,
    pub topo_order: Vec<String>,
    incoming: BTreeMap<String, Vec<ConditionRule>>,
}

impl DepGraph {
    pub fn edge_count(&self) -> usize {
        self.edges.values().map(Vec::len).sum()
    }

    pub fn rules_for(&self, dependent: &str) -> &[ConditionRule] {
        self.incoming.get(dependent).map_or(&[], Vec::as_slice)
    }

    /// Fields reachable from `id` through one or more edges.
    pub fn descendants(&self, id: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([id.to_owned()]);
        while let Some(cur) = queue.pop_front() {
            for (dep, _) in self.edges.get(&cur).into_iter().flatten() {
                if seen.insert(dep.clone()) {
                    queue.push_back(dep.clone());
                }
            }
        }
        seen
    }
}

/// One edge per condition rule; fails on cycles.
pub fn build_dependency_graph(schema: &CanonicalSchema) -> Result<DepGraph, CondError> {
    let mut edges: BTreeMap<String, Vec<(String, ConditionRule)>> = BTreeMap::new();
    let mut incoming: BTreeMap<String, Vec<ConditionRule>> = BTreeMap::new();
    for (id, field) in &schema.fields {
        for rule in &field.conditions {
            edges.entry(rule.controller_id.clone()).or_default().push((id.clone(), rule.clone()));
            incoming.entry(id.clone()).or_default().push(rule.clone());
        }
    }

    // Kahn's algorithm; the ready set is ordered so the result is deterministic.
    let mut indegree: BTreeMap<&str, usize> = schema.fields.keys().map(|k| (k.as_str(), 0)).collect();
    for targets in edges.values() {
        for (dep, _) in targets {
            *indegree.get_mut(dep.as_str()).expect("dependent exists") += 1;
        }
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(k, _)| *k).collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(next) = ready.pop_first() {
        order.push(next.to_owned());
        for (dep, _) in edges.get(next).into_iter().flatten() {
            let d = indegree.get_mut(dep.as_str()).expect("dependent exists");
            *d -= 1;
            if *d == 0 {
                ready.insert(dep);
            }
        }
    }
    if order.len() < schema.fields.len() {
        let placed: BTreeSet<&str> = order.iter().map(String::as_str).collect();
        return Err(CondError::Cycle(find_cycle(&edges, &placed)));
    }
    Ok(DepGraph { edges, topo_order: order, incoming })
}

fn find_cycle(edges: &BTreeMap<String, Vec<(String, ConditionRule)>>, placed: &BTreeSet<&str>) -> Vec<String> {
    // Every unplaced node has an unplaced predecessor, so walking backwards
    // through unplaced controllers must revisit a node.
    let mut preds: BTreeMap<&str, &str> = BTreeMap::new();
    for (ctrl, targets) in edges {
        if placed.contains(ctrl.as_str()) {
            continue;
        }
        for (dep, _) in targets {
            if !placed.contains(dep.as_str()) {
                preds.entry(dep.as_str()).or_insert(ctrl.as_str());
            }
        }
    }
    let Some(&start) = preds.keys().next() else { return Vec::new() };
    let mut path = vec![start];
    let mut cur = start;
    loop {
        cur = preds[cur];
        if let Some(pos) = path.iter().position(|&p| p == cur) {
            let mut cycle: Vec<String> = path[pos..].iter().rev().map(|s| s.to_string()).collect();
            cycle.push(cycle[0].clone());
            return cycle;
        }
        path.push(cur);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Visibility {
    Visible,
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FormState {
    pub values: BTreeMap<String, String>,
    pub visibility: BTreeMap<String, Visibility>,
    pub required: BTreeMap<String, bool>,
}

impl FormState {
    pub fn with_values<I, K, V>(values: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        FormState { values: values.into_iter().map(|(k, v)| (k.into(), v.into())).collect(), ..Default::default() }
    }

    pub fn is_visible(&self, id: &str) -> bool {
        self.visibility.get(id) != Some(&Visibility::Hidden)
    }

    /// The value a dependent sees: none when the controller is hidden.
    pub fn effective_value(&self, id: &str) -> Option<&str> {
        if !self.is_visible(id) {
            return None;
        }
        self.values.get(id).map(String::as_str)
    }

    pub fn visible_ids(&self) -> impl Iterator<Item = &str> {
        self.visibility.iter().filter(|(_, v)| **v == Visibility::Visible).map(|(k, _)| k.as_str())
    }
}

fn evaluate_field(rules: &[ConditionRule], state: &FormState) -> (Visibility, bool) {
    let fired = |r: &ConditionRule| r.fires(state.effective_value(&r.controller_id));
    let has_show = rules.iter().any(|r| r.effect == Effect::Show);
    let shown = !has_show || rules.iter().any(|r| r.effect == Effect::Show && fired(r));
    let hidden = rules.iter().any(|r| r.effect == Effect::Hide && fired(r));
    let visibility = if shown && !hidden { Visibility::Visible } else { Visibility::Hidden };
    let required = visibility == Visibility::Visible && rules.iter().any(|r| r.effect == Effect::Require && fired(r));
    (visibility, required)
}

/// Recomputes visibility and required flags for every schema field.
pub fn evaluate_visibility(g: &DepGraph, state: &FormState, schema: &CanonicalSchema) -> FormState {
    let mut out = FormState {
        values: state.values.iter().filter(|(k, _)| schema.fields.contains_key(*k)).map(|(k, v)| (k.clone(), v.clone())).collect(),
        visibility: BTreeMap::new(),
        required: BTreeMap::new(),
    };
    for id in &g.topo_order {
        let (vis, req) = evaluate_field(g.rules_for(id), &out);
        out.visibility.insert(id.clone(), vis);
        out.required.insert(id.clone(), req);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldChange {
    pub visibility: Visibility,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityDelta {
    pub changed: BTreeMap<String, FieldChange>,
    pub state: FormState,
}

/// Applies one edit and re-evaluates only the edited field's dependents.
///
/// An empty `new_value` clears the field.
pub fn on_field_change(
    g: &DepGraph,
    state: &FormState,
    schema: &CanonicalSchema,
    id: &str,
    new_value: &str,
) -> Result<VisibilityDelta, CondError> {
    if !schema.fields.contains_key(id) {
        return Err(CondError::UnknownField(id.to_owned()));
    }
    let evaluated = state.visibility.len() == schema.fields.len()
        && schema.fields.keys().all(|k| state.visibility.contains_key(k) && state.required.contains_key(k));
    let base = if evaluated { state.clone() } else { evaluate_visibility(g, state, schema) };

    let mut next = base.clone();
    if new_value.is_empty() {
        next.values.remove(id);
    } else {
        next.values.insert(id.to_owned(), new_value.to_owned());
    }
    let affected = g.descendants(id);
    let mut changed = BTreeMap::new();
    if base.values.get(id) != next.values.get(id) {
        for dep in g.topo_order.iter().filter(|t| affected.contains(*t)) {
            let (vis, req) = evaluate_field(g.rules_for(dep), &next);
            next.visibility.insert(dep.clone(), vis);
            next.required.insert(dep.clone(), req);
            if base.visibility.get(dep) != Some(&vis) || base.required.get(dep) != Some(&req) {
                changed.insert(dep.clone(), FieldChange { visibility: vis, required: req });
            }
        }
    }
    Ok(VisibilityDelta { changed, state: next })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{CanonicalField, DataType, FormatRule, Predicate};
    use proptest::prelude::*;

    fn field(id: &str, conditions: Vec<ConditionRule>) -> CanonicalField {
        CanonicalField::new(id, id, DataType::Text, vec![id.replace('.', " ")], FormatRule::None, vec![], conditions, None)
            .unwrap()
    }

    fn rule(ctrl: &str, p: Predicate, values: &[&str], effect: Effect) -> ConditionRule {
        ConditionRule {
            controller_id: ctrl.into(),
            predicate: p,
            values: values.iter().map(|s| s.to_string()).collect(),
            effect,
        }
    }

    fn citizenship() -> CanonicalSchema {
        CanonicalSchema::from_fields(
            "t",
            vec![
                field("user.citizenship", vec![]),
                field("user.ssn", vec![rule("user.citizenship", Predicate::Equals, &["No"], Effect::Hide)]),
                field("user.visa_type", vec![rule("user.citizenship", Predicate::Equals, &["No"], Effect::Show)]),
                field("user.name", vec![]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn no_conditions_no_edges() {
        let s = CanonicalSchema::from_fields("t", vec![field("a", vec![]), field("b", vec![])]).unwrap();
        let g = build_dependency_graph(&s).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.topo_order, vec!["a", "b"]);
    }

    #[test]
    fn citizenship_has_two_edges() {
        let g = build_dependency_graph(&citizenship()).unwrap();
        assert_eq!(g.edges["user.citizenship"].len(), 2);
        assert_eq!(g.edge_count(), 2);
        let pos = |id: &str| g.topo_order.iter().position(|x| x == id).unwrap();
        assert!(pos("user.citizenship") < pos("user.ssn"));
        assert!(pos("user.citizenship") < pos("user.visa_type"));
    }

    #[test]
    fn two_cycle_is_rejected() {
        let s = CanonicalSchema::from_fields(
            "t",
            vec![
                field("a", vec![rule("b", Predicate::Equals, &["x"], Effect::Show)]),
                field("b", vec![rule("a", Predicate::Equals, &["x"], Effect::Show)]),
            ],
        )
        .unwrap();
        match build_dependency_graph(&s) {
            Err(CondError::Cycle(ids)) => {
                assert_eq!(ids.first(), ids.last());
                assert!(ids.contains(&"a".to_string()) && ids.contains(&"b".to_string()));
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn citizenship_no_hides_ssn_shows_visa() {
        let s = citizenship();
        let g = build_dependency_graph(&s).unwrap();
        let st = evaluate_visibility(&g, &FormState::with_values([("user.citizenship", "No")]), &s);
        assert_eq!(st.visibility["user.ssn"], Visibility::Hidden);
        assert_eq!(st.visibility["user.visa_type"], Visibility::Visible);
    }

    #[test]
    fn default_state() {
        let s = citizenship();
        let g = build_dependency_graph(&s).unwrap();
        let st = evaluate_visibility(&g, &FormState::default(), &s);
        assert_eq!(st.visibility["user.name"], Visibility::Visible);
        assert_eq!(st.visibility["user.ssn"], Visibility::Visible);
        assert_eq!(st.visibility["user.visa_type"], Visibility::Hidden);
    }

    fn chained() -> CanonicalSchema {
        CanonicalSchema::from_fields(
            "t",
            vec![
                field("edu.dual_enrollment", vec![]),
                field("edu.course_section", vec![rule("edu.dual_enrollment", Predicate::Equals, &["Yes"], Effect::Show)]),
                field("edu.course_credits", vec![rule("edu.course_section", Predicate::In, &["A", "B"], Effect::Show)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn chained_truth_table() {
        // (dual_enrollment, course_section) -> (section visible, credits visible)
        let table = [
            (None, None, Visibility::Hidden, Visibility::Hidden),
            (Some("Yes"), None, Visibility::Visible, Visibility::Hidden),
            (Some("Yes"), Some("A"), Visibility::Visible, Visibility::Visible),
            (Some("No"), Some("A"), Visibility::Hidden, Visibility::Hidden),
        ];
        let s = chained();
        let g = build_dependency_graph(&s).unwrap();
        for (dual, section, sec_vis, cred_vis) in table {
            let mut st = FormState::default();
            if let Some(v) = dual {
                st.values.insert("edu.dual_enrollment".into(), v.into());
            }
            if let Some(v) = section {
                st.values.insert("edu.course_section".into(), v.into());
            }
            let out = evaluate_visibility(&g, &st, &s);
            assert_eq!(out.visibility["edu.course_section"], sec_vis, "{dual:?} {section:?}");
            assert_eq!(out.visibility["edu.course_credits"], cred_vis, "{dual:?} {section:?}");
            // The hidden section keeps its stored value but contributes nothing.
            if section.is_some() && sec_vis == Visibility::Hidden {
                assert_eq!(out.values["edu.course_section"], "A");
                assert_eq!(out.effective_value("edu.course_section"), None);
            }
        }
    }

    #[test]
    fn hide_beats_show() {
        let s = CanonicalSchema::from_fields(
            "t",
            vec![
                field("a", vec![]),
                field("t", vec![
                    rule("a", Predicate::Equals, &["x"], Effect::Show),
                    rule("a", Predicate::In, &["x", "y"], Effect::Hide),
                ]),
            ],
        )
        .unwrap();
        let g = build_dependency_graph(&s).unwrap();
        let st = evaluate_visibility(&g, &FormState::with_values([("a", "x")]), &s);
        assert_eq!(st.visibility["t"], Visibility::Hidden);
    }

    #[test]
    fn require_only_when_visible() {
        let s = CanonicalSchema::from_fields(
            "t",
            vec![
                field("a", vec![]),
                field("t", vec![
                    rule("a", Predicate::NotEquals, &["none"], Effect::Require),
                    rule("a", Predicate::Equals, &["hide"], Effect::Hide),
                ]),
            ],
        )
        .unwrap();
        let g = build_dependency_graph(&s).unwrap();
        let st = evaluate_visibility(&g, &FormState::with_values([("a", "x")]), &s);
        assert!(st.required["t"]);
        let st = evaluate_visibility(&g, &FormState::with_values([("a", "hide")]), &s);
        assert!(!st.required["t"]);
        assert_eq!(st.visibility["t"], Visibility::Hidden);
    }

    #[test]
    fn change_without_dependents_is_empty() {
        let s = citizenship();
        let g = build_dependency_graph(&s).unwrap();
        let d = on_field_change(&g, &FormState::default(), &s, "user.name", "Ada").unwrap();
        assert!(d.changed.is_empty());
        assert_eq!(d.state.values["user.name"], "Ada");
    }

    #[test]
    fn citizenship_flip_delta() {
        let s = citizenship();
        let g = build_dependency_graph(&s).unwrap();
        let st = evaluate_visibility(&g, &FormState::with_values([("user.citizenship", "Yes")]), &s);
        let d = on_field_change(&g, &st, &s, "user.citizenship", "No").unwrap();
        let expected = BTreeMap::from([
            ("user.ssn".to_string(), FieldChange { visibility: Visibility::Hidden, required: false }),
            ("user.visa_type".to_string(), FieldChange { visibility: Visibility::Visible, required: false }),
        ]);
        assert_eq!(d.changed, expected);
        let again = on_field_change(&g, &d.state, &s, "user.citizenship", "No").unwrap();
        assert!(again.changed.is_empty());
    }

    #[test]
    fn unknown_field_errors() {
        let s = citizenship();
        let g = build_dependency_graph(&s).unwrap();
        assert_eq!(
            on_field_change(&g, &FormState::default(), &s, "nope", "x"),
            Err(CondError::UnknownField("nope".into()))
        );
    }

    // Random acyclic schemas: field i may only be controlled by fields j < i.
    fn arb_schema() -> impl Strategy<Value = CanonicalSchema> {
        (2usize..=15).prop_flat_map(|n| {
            let rules = proptest::collection::vec(
                (1..n, any::<prop::sample::Index>(), 0usize..3, 0usize..3, 0usize..3),
                0..=10,
            );
            rules.prop_map(move |rules| {
                let mut conds: Vec<Vec<ConditionRule>> = vec![Vec::new(); n];
                for (dep, ctrl, p, e, v) in rules {
                    let ctrl = ctrl.index(dep);
                    let predicate = [Predicate::Equals, Predicate::NotEquals, Predicate::In][p];
                    let effect = [Effect::Show, Effect::Hide, Effect::Require][e];
                    let values = match predicate {
                        Predicate::In => vec!["v0".to_string(), format!("v{v}")],
                        _ => vec![format!("v{v}")],
                    };
                    conds[dep].push(ConditionRule { controller_id: format!("f{ctrl:02}"), predicate, values, effect });
                }
                let fields = conds.into_iter().enumerate().map(|(i, c)| field(&format!("f{i:02}"), c)).collect();
                CanonicalSchema::from_fields("p", fields).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn incremental_equals_full(
            schema in arb_schema(),
            edits in proptest::collection::vec((0usize..15, 0usize..4), 1..20),
        ) {
            let g = build_dependency_graph(&schema).unwrap();
            let n = schema.len();
            let mut state = evaluate_visibility(&g, &FormState::default(), &schema);
            for (i, v) in edits {
                let id = format!("f{:02}", i % n);
                let value = if v == 3 { String::new() } else { format!("v{v}") };
                let delta = on_field_change(&g, &state, &schema, &id, &value).unwrap();
                let full = evaluate_visibility(&g, &delta.state, &schema);
                prop_assert_eq!(&delta.state, &full);
                for (k, change) in &delta.changed {
                    prop_assert!(state.visibility[k] != change.visibility || state.required[k] != change.required);
                }
                state = delta.state;
            }
        }

        #[test]
        fn evaluation_is_idempotent(schema in arb_schema(), vals in proptest::collection::vec(0usize..3, 15)) {
            let g = build_dependency_graph(&schema).unwrap();
            let st = FormState::with_values(
                schema.fields.keys().zip(vals).map(|(k, v)| (k.clone(), format!("v{v}"))),
            );
            let once = evaluate_visibility(&g, &st, &schema);
            let twice = evaluate_visibility(&g, &once, &schema);
            prop_assert_eq!(once, twice);
        }
    }
}
