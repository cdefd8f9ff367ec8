use weave_core::oracle::MockOracle;
use weave_core::query::{GraphExpand, QuerySpec, TimeWindow};
use weave_core::refine::current_importance;
use weave_core::temporal::TemporalField;
use weave_core::{AccessMetrics, EngineConfig, Error, Millis, ParticleId, SituationalImprint, StrandEvidence, StrandType, Weave};

const T0: Millis = 1_700_000_000_000;

fn weave_with(texts: &[&str]) -> (Weave, Vec<ParticleId>) {
    let mut w = Weave::new(EngineConfig::default()).unwrap();
    let oracle = MockOracle::default();
    let ids = texts
        .iter()
        .enumerate()
        .map(|(i, t)| w.ingest(t, SituationalImprint::from_source("q"), T0 + i as i64 * 1000, &oracle).unwrap())
        .collect();
    (w, ids)
}

#[test]
fn text_finds_itself_first() {
    let (w, ids) = weave_with(&["granite quarry blasting permit", "sailing regatta wind shift", "violin string tension"]);
    let r = w.query(&QuerySpec::text("sailing regatta wind shift", 3), T0 + 5000).unwrap();
    assert_eq!(r.hits[0].id, ids[1]);
    let importance = current_importance(w.get(ids[1]).unwrap(), &w.config().decay, T0 + 5000);
    assert!((r.hits[0].relevance - (0.7 + 0.3 * importance)).abs() < 1e-12);
    r.check(3).unwrap();
}

#[test]
fn expansion_multiplies_by_strength() {
    let (mut w, ids) = weave_with(&["granite quarry blasting permit", "sailing regatta wind shift"]);
    let s = w
        .add_strand(ids[0], ids[1], StrandType::Supports, StrandEvidence { sim: 0.4, cooccur: 2, conf_soi: 0.8, common_neighbors: 0 }, T0)
        .unwrap();
    let mut spec = QuerySpec::text("granite quarry blasting permit", 1);
    spec.graph_expand = Some(GraphExpand { max_depth: 1, type_filter: None, min_strength: 0.0 });
    let r = w.query(&spec, T0 + 2000).unwrap();
    assert_eq!(r.hits.len(), 2);
    let parent = &r.hits[0];
    assert_eq!(parent.id, ids[0]);
    let child = r.hits.iter().find(|h| h.id == ids[1]).unwrap();
    assert!((child.relevance - parent.relevance * s.strength).abs() < 1e-15);
    assert_eq!(child.provenance_path, Some(vec![s.id]));

    // filtered out by type or strength
    spec.graph_expand = Some(GraphExpand { max_depth: 1, type_filter: Some(StrandType::Causes), min_strength: 0.0 });
    assert_eq!(w.query(&spec, T0 + 2000).unwrap().hits.len(), 1);
    spec.graph_expand = Some(GraphExpand { max_depth: 1, type_filter: None, min_strength: s.strength + 1e-9 });
    assert_eq!(w.query(&spec, T0 + 2000).unwrap().hits.len(), 1);
}

#[test]
fn window_only_ranks_by_importance() {
    let (mut w, ids) = weave_with(&["a1 text", "b2 text", "c3 text", "d4 text", "e5 text"]);
    let importances = [0.2, 0.9, 0.5, 0.9, 0.1];
    for (id, imp) in ids.iter().zip(importances) {
        let m = w.get(*id).unwrap().metrics;
        w.set_metrics(*id, AccessMetrics { importance: imp, last_recalibrated: T0 + 5000, ..m });
    }
    let now = T0 + 10_000;
    let r = w.query(&QuerySpec::window(TemporalField::TCreate, T0 + 1000, T0 + 3000, 10), now).unwrap();
    let mut want: Vec<(f64, ParticleId)> =
        ids[1..4].iter().map(|id| (current_importance(w.get(*id).unwrap(), &w.config().decay, now), *id)).collect();
    want.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let got: Vec<ParticleId> = r.hits.iter().map(|h| h.id).collect();
    assert_eq!(got, want.iter().map(|x| x.1).collect::<Vec<_>>());
    // equal importance ties go to the smaller id
    assert!(got[0] < got[1]);
}

#[test]
fn min_importance_applies_after_expansion() {
    let (mut w, ids) = weave_with(&["granite quarry blasting permit", "sailing regatta wind shift"]);
    w.add_strand(ids[0], ids[1], StrandType::Elaborates, StrandEvidence::default(), T0).unwrap();
    let m = w.get(ids[1]).unwrap().metrics;
    w.set_metrics(ids[1], AccessMetrics { importance: 0.0, ..m });
    let mut spec = QuerySpec::text("granite quarry blasting permit", 1);
    spec.graph_expand = Some(GraphExpand { max_depth: 2, type_filter: None, min_strength: 0.0 });
    spec.min_importance = 0.3;
    let r = w.query(&spec, T0 + 2000).unwrap();
    assert_eq!(r.hits.iter().map(|h| h.id).collect::<Vec<_>>(), vec![ids[0]]);
}

#[test]
fn error_cases() {
    let empty = Weave::new(EngineConfig::default()).unwrap();
    assert_eq!(empty.query(&QuerySpec::text("anything", 3), T0), Err(Error::EmptyIndex));
    assert!(empty.query(&QuerySpec::window(TemporalField::TCreate, 0, 10, 3), T0).unwrap().hits.is_empty());
    let (w, _) = weave_with(&["one two"]);
    assert_eq!(
        w.query(&QuerySpec::window(TemporalField::TCreate, 10, 0, 3), T0),
        Err(Error::InvertedRange { lo: 10, hi: 0 })
    );
    assert!(matches!(w.query(&QuerySpec { k: 0, ..QuerySpec::text("x", 1) }, T0), Err(Error::InvalidQuery(_))));
    assert!(matches!(w.query(&QuerySpec::default(), T0), Err(Error::InvalidQuery(_))));
}

#[test]
fn recall_touches_every_hit() {
    let (mut w, ids) = weave_with(&["granite quarry blasting permit", "sailing regatta wind shift"]);
    let spec = QuerySpec { time_window: Some(TimeWindow { field: TemporalField::TCreate, lo: T0, hi: T0 + 5000 }), ..QuerySpec::text("granite", 5) };
    let r = w.recall(&spec, T0 + 60_000).unwrap();
    assert_eq!(r.hits.len(), 2);
    for id in &ids {
        let p = w.get(*id).unwrap();
        assert_eq!(p.metrics.f_access, 1);
        assert_eq!(p.temporal.t_access, T0 + 60_000);
    }
}
