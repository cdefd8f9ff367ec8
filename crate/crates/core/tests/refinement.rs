use std::collections::BTreeSet;

use weave_core::embed::{embed_deterministic, DeterministicEmbedder};
use weave_core::oracle::{MockOracle, ParticleView, RelationSuggestion, SemanticOracle, SynthesisRequest, SynthesisResult, OracleTransformOutput};
use weave_core::refine::{
    cluster_quality, ia_objective, identify_clusters, should_refine, ClusterConfig, ClusterItem, IAObjectiveWeights,
    RefinementTriggers,
};
use weave_core::weave::Cascade;
use weave_core::{EngineConfig, Error, Millis, ParticleId, SituationalImprint, StrandType, Weave};

const T0: Millis = 1_700_000_000_000;
const DAY: Millis = 86_400_000;

fn ref_cos(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    ab / (aa.sqrt() * bb.sqrt())
}

fn oracle() -> MockOracle {
    MockOracle::default()
}

fn ingest_all(w: &mut Weave, texts: &[(&str, Millis)]) -> Vec<ParticleId> {
    texts
        .iter()
        .map(|(t, at)| w.ingest(t, SituationalImprint::from_source("test"), *at, &oracle()).unwrap())
        .collect()
}

#[test]
fn identical_linked_triple_is_one_cluster() {
    let v = embed_deterministic("same words here", 64).unwrap();
    let ids: Vec<ParticleId> = (0..3).map(|i| ParticleId::from_parts(i, 1)).collect();
    let items: Vec<ClusterItem> = ids.iter().map(|&id| ClusterItem { id, vector: &v, t_create: T0 }).collect();
    let cfg = ClusterConfig::default();
    // A = 0.6 + 0.2 + 0.2 = 1 >= tau
    assert_eq!(identify_clusters(&items, |_, _| true, &cfg), vec![ids]);
}

#[test]
fn unrelated_far_apart_texts_do_not_cluster() {
    let texts = ["quartz lantern", "meadow piston", "harbor violet", "cobalt saddle", "walnut prism", "tundra kettle"];
    let vs: Vec<Vec<f64>> = texts.iter().map(|t| embed_deterministic(t, 64).unwrap()).collect();
    let cfg = ClusterConfig::default();
    let items: Vec<ClusterItem> = vs
        .iter()
        .enumerate()
        .map(|(i, v)| ClusterItem { id: ParticleId::from_parts(i as u64, 0), vector: v, t_create: T0 + 30 * DAY * i as i64 })
        .collect();
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            let dt = (30 * DAY * (j - i) as i64) as f64;
            let a = 0.6 * ref_cos(&vs[i], &vs[j]) + 0.2 * (-dt / cfg.sigma_t).exp();
            assert!(a < cfg.tau_cluster, "pair {i},{j} has affinity {a}");
        }
    }
    assert!(identify_clusters(&items, |_, _| false, &cfg).is_empty());
}

#[test]
fn pairs_are_below_the_size_gate() {
    let v = embed_deterministic("twin text", 64).unwrap();
    let items = [
        ClusterItem { id: ParticleId::from_parts(1, 0), vector: &v, t_create: T0 },
        ClusterItem { id: ParticleId::from_parts(2, 0), vector: &v, t_create: T0 },
    ];
    assert!(identify_clusters(&items, |_, _| true, &ClusterConfig::default()).is_empty());
}

#[test]
fn quality_is_mean_pairwise_cosine() {
    let cfg = ClusterConfig::default();
    let same = embed_deterministic("one two three", 64).unwrap();
    let verdict = cluster_quality(&[&same, &same, &same], &cfg);
    assert!((verdict.score - 1.0).abs() < 1e-12 && verdict.accept);
    assert!(!cluster_quality(&[&same, &same], &cfg).accept);

    // unit vectors at pairwise cosine 0.4: e_i scaled plus a shared component
    let s: f64 = (0.4f64 / 0.6).sqrt();
    let mk = |i: usize| {
        let mut v = vec![0.0; 4];
        v[i] = 1.0;
        v[3] = s;
        v
    };
    let (a, b, c) = (mk(0), mk(1), mk(2));
    let expected = (ref_cos(&a, &b) + ref_cos(&a, &c) + ref_cos(&b, &c)) / 3.0;
    assert!((expected - 0.4).abs() < 1e-12);
    let verdict = cluster_quality(&[&a, &b, &c], &cfg);
    assert!((verdict.score - expected).abs() < 1e-12);
    assert!(!verdict.accept);
}

#[test]
fn objective_hand_examples() {
    let e = DeterministicEmbedder::new(64);
    let cand = SynthesisResult { ia_core_data: "alpha beta".into(), ia_resonance_keys: vec!["alpha".into()], confidence: 0.9 };
    let same = embed_deterministic("alpha beta", 64).unwrap();
    let uniform = IAObjectiveWeights::default();
    // -1·cos(v, v) + 0.01·10 chars
    let l = ia_objective(&cand, &[&same], &uniform, &e).unwrap();
    assert!((l - (-1.0 + 0.1)).abs() < 1e-12);

    let other = embed_deterministic("gamma delta", 64).unwrap();
    let weighted = IAObjectiveWeights { omega: vec![1.0, 3.0], lambda_comp: 0.0 };
    let l = ia_objective(&cand, &[&same, &other], &weighted, &e).unwrap();
    let expected = -(0.25 * 1.0 + 0.75 * ref_cos(&same, &other));
    assert!((l - expected).abs() < 1e-12);

    let short = SynthesisResult { ia_core_data: "alpha".into(), ..cand.clone() };
    let a = ia_objective(&short, &[&same], &IAObjectiveWeights { omega: vec![], lambda_comp: 0.5 }, &e).unwrap();
    let b = ia_objective(&cand, &[&same], &IAObjectiveWeights { omega: vec![], lambda_comp: 0.5 }, &e).unwrap();
    assert!(a < b, "heavy length penalty should favour the shorter text");
}

#[test]
fn triggers_fire_in_priority_order() {
    let mut w = Weave::new(EngineConfig::default()).unwrap();
    w.mark_refined(T0);
    let triggers = RefinementTriggers { period: 1000, ingest_count_threshold: 2, fragmentation_threshold: 0.5 };
    assert_eq!(should_refine(&w.stats(), &triggers, T0 + 1), None);
    ingest_all(&mut w, &[("lone particle text", T0)]);
    // one IP, uncovered: fragmentation 1.0
    assert_eq!(should_refine(&w.stats(), &triggers, T0 + 1), Some("fragmentation"));
    ingest_all(&mut w, &[("second particle text", T0)]);
    assert_eq!(should_refine(&w.stats(), &triggers, T0 + 1), Some("ingest_count"));
    assert_eq!(should_refine(&w.stats(), &triggers, T0 + 1000), Some("period"));
}

const QUAD: [&str; 4] = [
    "ocean current salinity buoy measurement pacific one",
    "ocean current salinity buoy measurement pacific two",
    "ocean current salinity buoy measurement pacific three",
    "ocean current salinity buoy measurement pacific four",
];

fn refined_quad() -> (Weave, Vec<ParticleId>, ParticleId) {
    let mut w = Weave::new(EngineConfig::default()).unwrap();
    let ids = ingest_all(&mut w, &QUAD.iter().enumerate().map(|(i, t)| (*t, T0 + i as i64 * 60_000)).collect::<Vec<_>>());
    let report = w.refine(&oracle(), T0 + 3_600_000);
    assert_eq!(report.ias_created.len(), 1, "{report:?}");
    (w, ids, report.ias_created[0])
}

#[test]
fn aggregate_links_back_to_every_constituent() {
    let (w, ids, ia) = refined_quad();
    let prov: BTreeSet<ParticleId> = w.graph().provenance(ia, w.particles()).unwrap().into_iter().collect();
    assert_eq!(prov, ids.iter().copied().collect());
    let p = w.get(ia).unwrap();
    assert!(p.is_ia());
    assert!(p.core_data.chars().count() < QUAD.iter().map(|t| t.len()).sum::<usize>());
    for s in w.graph().strands().filter(|s| s.strand_type == StrandType::DerivedFrom) {
        assert_eq!(s.dst, ia);
    }
    assert!(w.audit().is_empty());
}

#[test]
fn strands_only_delete_keeps_aggregate_until_provenance_is_too_small() {
    let (mut w, ids, ia) = refined_quad();
    let r = w.delete(ids[0], Cascade::StrandsOnly).unwrap();
    assert!(r.ias_marked_stale.is_empty());
    assert!(!w.get(ia).unwrap().is_stale());
    let r = w.delete(ids[1], Cascade::StrandsOnly).unwrap();
    assert_eq!(r.ias_marked_stale, vec![ia]);
    assert!(w.get(ia).unwrap().is_stale());
    assert!(w.audit().is_empty());
}

#[test]
fn flagging_delete_marks_dependents_immediately() {
    let (mut w, ids, ia) = refined_quad();
    let r = w.delete(ids[2], Cascade::StrandsAndFlagIas).unwrap();
    assert_eq!(r.ias_marked_stale, vec![ia]);
    assert!(r.strands_removed >= 1);
    assert!(w.graph().strands().all(|s| s.src != ids[2] && s.dst != ids[2]));
    assert!(w.audit().is_empty());
}

#[test]
fn prune_spares_constituents_of_aggregates() {
    let (mut w, ids, ia) = refined_quad();
    let mut lone = ingest_all(&mut w, &[("isolated footnote about nothing", T0)]);
    for id in ids.iter().chain(lone.iter()).chain([ia].iter()) {
        let mut m = w.get(*id).unwrap().metrics;
        m.importance = 0.0;
        w.set_metrics(*id, m);
    }
    let pruned = weave_core::refine::prune(&mut w, 0.02, T0 + 2 * 3_600_000).unwrap();
    assert_eq!(pruned, vec![lone.pop().unwrap()]);
    for id in &ids {
        assert!(w.get(*id).is_ok());
    }
    assert!(w.get(ia).is_ok());
}

struct BrokenOracle;

impl SemanticOracle for BrokenOracle {
    fn transform(&self, raw: &str, imprint: &SituationalImprint) -> weave_core::Result<OracleTransformOutput> {
        MockOracle::default().transform(raw, imprint)
    }
    fn synthesize(&self, _req: &SynthesisRequest) -> weave_core::Result<SynthesisResult> {
        Err(Error::Oracle("synthesis unavailable".into()))
    }
    fn suggest_relation(&self, _a: &ParticleView, _b: &ParticleView) -> weave_core::Result<Option<RelationSuggestion>> {
        Err(Error::Oracle("suggestions unavailable".into()))
    }
}

#[test]
fn oracle_failure_skips_the_cluster_and_keeps_state_consistent() {
    let mut w = Weave::new(EngineConfig::default()).unwrap();
    ingest_all(&mut w, &QUAD.iter().map(|t| (*t, T0)).collect::<Vec<_>>());
    let report = w.refine(&BrokenOracle, T0 + 1000);
    assert!(report.ias_created.is_empty());
    assert!(!report.errors.is_empty());
    assert_eq!(report.clusters_accepted, 1);
    assert!(w.scan(&weave_core::weave::ScanFilter::kind(weave_core::ParticleKind::IA)).is_empty());
    assert!(w.audit().is_empty());
    // a working oracle afterwards still synthesizes the cluster
    assert_eq!(w.refine(&oracle(), T0 + 2000).ias_created.len(), 1);
}
