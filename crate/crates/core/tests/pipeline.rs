mod common;

use std::sync::Arc;

use common::{epoch, finance_docs, request_text, synthetic_questions};
use finqa_core::agents::TemplateSet;
use finqa_core::gateway::{scripted_backend, AgentKind, ChatRole, Gateway, ScriptedBackend};
use finqa_core::index::{build_index, HashEmbedder, RetrievalConfig, VectorIndex};
use finqa_core::pipeline::{Mode, Pipeline, PipelineError};
use finqa_core::roles::RoleRegistry;

const SCRIPT: [(&str, &str); 4] = [
    ("BG", "DRAFT-REASONING here.\nFinal Answer: C"),
    ("BG:s01:1", "Still unsure."),
    ("ER", "1. First summary.\n2. Second summary."),
    ("XR", "CRITIQUE-TEXT: recompute."),
];

fn index() -> (VectorIndex<f64>, HashEmbedder) {
    let provider = HashEmbedder::new(48);
    let cfg = RetrievalConfig { k: 2, chunk_size_words: 25, overlap_words: 5 };
    (build_index(&finance_docs(), &provider, &cfg, epoch()).unwrap(), provider)
}

#[test]
fn every_generator_call_starts_a_fresh_conversation() {
    let registry = RoleRegistry::builtin();
    let templates = TemplateSet::default();
    let set = synthetic_questions(&registry, 4);
    let (index, provider) = index();
    let backend = Arc::new(scripted_backend(SCRIPT));
    let gateway = Gateway::new(backend.clone());
    let pipeline = Pipeline::new(&gateway, &registry, &templates).with_retrieval(&index, &provider);
    for q in &set.questions {
        pipeline.run(q, Mode::M3).unwrap();
    }
    for call in backend.calls().iter().filter(|c| c.tag.agent == AgentKind::Generator) {
        let roles: Vec<ChatRole> = call.request.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, [ChatRole::User], "{}", call.tag);
    }
}

#[test]
fn m2_second_pass_gets_the_critique_but_not_the_draft() {
    let registry = RoleRegistry::builtin();
    let templates = TemplateSet::default();
    let set = synthetic_questions(&registry, 1);
    let backend = Arc::new(scripted_backend(SCRIPT));
    let gateway = Gateway::new(backend.clone());
    let pipeline: Pipeline<'_, f32> = Pipeline::new(&gateway, &registry, &templates);
    let trace = pipeline.run(&set.questions[0], Mode::M2).unwrap();
    let log = backend.calls();
    let second = request_text(&log[2]);
    assert!(second.contains("CRITIQUE-TEXT"));
    assert!(!second.contains("DRAFT-REASONING"));
    assert!(request_text(&log[1]).contains("DRAFT-REASONING"), "the reviewer sees the draft");
    assert!(trace.initial.is_some() && trace.critique.is_some());
}

#[test]
fn reviewer_role_moves_into_the_user_turn_without_system_support() {
    let registry = RoleRegistry::builtin();
    let templates = TemplateSet::default();
    let set = synthetic_questions(&registry, 1);
    let q = &set.questions[0];
    let backend = Arc::new(scripted_backend(SCRIPT).with_system_prompt_support(false));
    let gateway = Gateway::new(backend.clone());
    let pipeline: Pipeline<'_, f32> = Pipeline::new(&gateway, &registry, &templates);
    pipeline.run(q, Mode::M2).unwrap();
    let xr = backend.calls().into_iter().find(|c| c.tag.agent == AgentKind::Reviewer).unwrap();
    assert_eq!(xr.request.messages.len(), 1);
    assert_eq!(xr.request.messages[0].role, ChatRole::User);
    assert!(xr.request.messages[0].content.starts_with(&registry.resolve_role(&q.topic).text));
}

#[test]
fn unparseable_final_answer_is_recorded_as_none() {
    let registry = RoleRegistry::builtin();
    let templates = TemplateSet::default();
    let set = synthetic_questions(&registry, 2);
    let gateway = Gateway::new(Arc::new(scripted_backend(SCRIPT)));
    let pipeline: Pipeline<'_, f32> = Pipeline::new(&gateway, &registry, &templates);
    let trace = pipeline.run(&set.questions[1], Mode::M2).unwrap();
    assert_eq!(trace.initial.unwrap().answer, Some(finqa_core::questions::Letter::C));
    assert_eq!(trace.final_output.answer, None);
    assert!(!set.questions[1].is_correct(trace.final_output.answer));
}

#[test]
fn retriever_failure_fails_the_whole_trace() {
    let registry = RoleRegistry::builtin();
    let templates = TemplateSet::default();
    let set = synthetic_questions(&registry, 1);
    let (index, provider) = index();
    let gateway = Gateway::new(Arc::new(scripted_backend([("BG", "Final Answer: A")])));
    let pipeline = Pipeline::new(&gateway, &registry, &templates).with_retrieval(&index, &provider);
    match pipeline.run(&set.questions[0], Mode::M1) {
        Err(PipelineError::Agent { partial, .. }) => {
            assert_eq!(partial.error_kind, "script_miss");
            assert!(partial.calls.is_empty());
        }
        other => panic!("expected an agent failure, got {other:?}"),
    }
}

#[test]
fn runs_are_deterministic() {
    let registry = RoleRegistry::builtin();
    let templates = TemplateSet::default();
    let set = synthetic_questions(&registry, 3);
    let (index, provider) = index();
    let refs = || {
        let gateway = Gateway::new(Arc::new(ScriptedBackend::new(
            SCRIPT.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        )));
        let pipeline = Pipeline::new(&gateway, &registry, &templates).with_retrieval(&index, &provider);
        set.questions.iter().map(|q| pipeline.run(q, Mode::M3).unwrap().content_ref()).collect::<Vec<_>>()
    };
    assert_eq!(refs(), refs());
}

#[test]
fn retrieval_modes_need_an_index() {
    let registry = RoleRegistry::builtin();
    let templates = TemplateSet::default();
    let gateway = Gateway::new(Arc::new(scripted_backend(SCRIPT)));
    let pipeline: Pipeline<'_, f32> = Pipeline::new(&gateway, &registry, &templates);
    assert!(pipeline.check(Mode::M0).is_ok() && pipeline.check(Mode::M2).is_ok());
    assert!(matches!(pipeline.check(Mode::M1), Err(PipelineError::MissingDependency { .. })));
    assert!(matches!(pipeline.check(Mode::M3), Err(PipelineError::MissingDependency { .. })));
}
