use std::time::Duration;

use btp_core::beam::{
    beam_search, sample_from_source, sample_phase, BeamConfig, TokenModel, ToyLm, Vocabulary,
};
use btp_core::bridge::{
    encode_request, encode_response, parse_request, parse_response, BridgeError, BridgeRequest, BridgeResponse,
    ProcessTransport, SequenceAdapter, SequenceCandidate, TokenAdapter, PROTOCOL_VERSION,
};
use btp_core::harness::{index_tasks, test_phase, CodeTask, TestCase, TestPhaseOptions, ToyRunner};
use btp_core::replay::{persist, PriorityConfig, ReplayBuffer};
use btp_core::trainer::{build_minibatch, to_jsonl};
use proptest::prelude::*;

fn stub(mode: &str) -> ProcessTransport {
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/stub_bridge.py");
    ProcessTransport::spawn(&format!("python3 {script} {mode}"), Duration::from_secs(10)).unwrap()
}

fn abc() -> Vocabulary {
    Vocabulary::new(["a", "b", "c", "<eos>"].map(String::from).to_vec(), "<eos>").unwrap()
}

#[test]
fn token_mode_process() {
    let m = TokenAdapter::new(abc(), stub("uniform"));
    assert_eq!(m.next_distribution(&[0, 1], "p").unwrap(), vec![0.25; 4]);
    let hyps = beam_search(&m, "p", &BeamConfig::new(2, 2).unwrap()).unwrap();
    assert_eq!(hyps.len(), 2);
    assert_eq!(hyps[0].tokens, ["a", "a"]);
    assert_eq!(hyps[1].tokens, ["a", "b"]);
}

#[test]
fn sequence_mode_process() {
    let a = SequenceAdapter::new(stub("uniform"));
    let got = a.fetch("p", 3, 8).unwrap();
    assert_eq!(got.shortfall, 0);
    let probs: Vec<f64> = got.candidates.iter().map(|c| c.hypothesis.cum_logprob).collect();
    assert_eq!(probs, [-0.5, -1.25, -2.0]);

    let short = SequenceAdapter::new(stub("short"));
    let task = CodeTask::toy("t", "p", vec![TestCase::new("1", "1")]);
    let mut buf = ReplayBuffer::unbounded(0);
    let report = sample_from_source(&short, &[task], &BeamConfig::new(3, 8).unwrap(), &mut buf).unwrap();
    assert_eq!(buf.len(), 2);
    assert_eq!(report.shortfalls, [("t".to_string(), 3, 2)]);
}

#[test]
fn closed_and_garbage() {
    let a = SequenceAdapter::new(stub("exit"));
    assert!(matches!(a.fetch("p", 3, 8), Err(BridgeError::Closed)));
    let a = SequenceAdapter::new(stub("garbage"));
    match a.fetch("p", 3, 8) {
        Err(BridgeError::Protocol { payload, .. }) => assert_eq!(payload, "not json"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn positive_logprob_rejected() {
    let reply = |_: &str| {
        Ok::<_, BridgeError>(encode_response(&BridgeResponse::Sequence {
            version: PROTOCOL_VERSION.into(),
            candidates: vec![SequenceCandidate {
                text: "a".into(),
                tokens: vec!["a".into(), "<eos>".into()],
                seq_logprob: 0.5,
            }],
        }))
    };
    assert!(SequenceAdapter::new(reply).fetch("p", 1, 4).is_err());
}

fn toy_tasks() -> Vec<CodeTask> {
    let t = |id: &str, f: fn(i64) -> i64| {
        CodeTask::toy(id, id, (0..4).map(|x| TestCase::new(format!("x={x}"), f(x).to_string())).collect())
    };
    vec![t("double", |x| 2 * x), t("inc", |x| x + 1), t("square", |x| x * x)]
}

/// Serves a model's own beam output as sequence-mode responses.
fn replaying(model: ToyLm) -> impl FnMut(&str) -> Result<String, BridgeError> + Send {
    move |line: &str| {
        let BridgeRequest::Sequence { prompt, k, max_tokens, .. } = parse_request(line)? else {
            panic!("sequence request expected");
        };
        let hyps = beam_search(&model, &prompt, &BeamConfig::new(k, max_tokens).unwrap()).unwrap();
        let candidates = hyps
            .into_iter()
            .map(|h| SequenceCandidate {
                text: model.vocabulary().render(&h.tokens),
                tokens: h.tokens,
                seq_logprob: h.cum_logprob,
            })
            .collect();
        Ok(encode_response(&BridgeResponse::Sequence {
            version: PROTOCOL_VERSION.into(),
            candidates,
        }))
    }
}

#[test]
fn downstream_bytes_match_engine_beam() {
    let model = ToyLm::pretrained();
    let tasks = toy_tasks();
    let index = index_tasks(&tasks).unwrap();
    let cfg = BeamConfig::new(3, 8).unwrap();
    let run = |buf: &mut ReplayBuffer| {
        test_phase(buf, &index, &ToyRunner::default(), TestPhaseOptions::default()).unwrap();
        let batch = build_minibatch(buf, &index, &PriorityConfig::default(), 16, 5).unwrap();
        (persist::to_ndjson(buf), to_jsonl(&batch).unwrap())
    };

    let mut engine = ReplayBuffer::unbounded(1);
    sample_phase(&model, &tasks, &cfg, &mut engine).unwrap();
    let mut bridged = ReplayBuffer::unbounded(1);
    let adapter = SequenceAdapter::new(replaying(model.clone()));
    sample_from_source(&adapter, &tasks, &cfg, &mut bridged).unwrap();
    assert_eq!(run(&mut engine), run(&mut bridged));
}

#[test]
fn token_adapter_reproduces_toy_beam() {
    let model = ToyLm::pretrained();
    let inner = model.clone();
    let vocab = model.vocabulary().clone();
    let transport = move |line: &str| {
        let BridgeRequest::Token { prefix, prompt, .. } = parse_request(line)? else {
            panic!("token request expected");
        };
        let ids = inner.vocabulary().encode(&prefix).unwrap();
        let dist = inner.next_distribution(&ids, &prompt).unwrap();
        Ok(encode_response(&BridgeResponse::Token {
            version: PROTOCOL_VERSION.into(),
            tokens: inner.vocabulary().tokens().to_vec(),
            logprobs: dist.iter().map(|p| p.ln()).collect(),
        }))
    };
    let adapter = TokenAdapter::new(vocab, transport);
    let cfg = BeamConfig::new(4, 6).unwrap();
    let want = beam_search(&model, "p", &cfg).unwrap();
    let got = beam_search(&adapter, "p", &cfg).unwrap();
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g.tokens, w.tokens);
        assert!((g.cum_logprob - w.cum_logprob).abs() <= 1e-9);
    }
}

fn arb_token() -> impl Strategy<Value = String> {
    "[a-z<>/ \"\\\\]{0,6}"
}

fn arb_response() -> impl Strategy<Value = BridgeResponse> {
    let token = prop::collection::vec((arb_token(), -50.0f64..=0.0), 1..6).prop_map(|pairs| {
        let (tokens, logprobs) = pairs.into_iter().unzip();
        BridgeResponse::Token {
            version: PROTOCOL_VERSION.into(),
            tokens,
            logprobs,
        }
    });
    let seq = prop::collection::vec((arb_token(), prop::collection::vec(arb_token(), 1..4), -50.0f64..=0.0), 0..5)
        .prop_map(|raw| {
            let mut candidates: Vec<SequenceCandidate> = raw
                .into_iter()
                .map(|(text, tokens, seq_logprob)| SequenceCandidate { text, tokens, seq_logprob })
                .collect();
            candidates.sort_by(|a, b| b.seq_logprob.total_cmp(&a.seq_logprob));
            BridgeResponse::Sequence {
                version: PROTOCOL_VERSION.into(),
                candidates,
            }
        });
    prop_oneof![token, seq]
}

proptest! {
    #[test]
    fn response_round_trip(resp in arb_response()) {
        let line = encode_response(&resp);
        let parsed = parse_response(&line).unwrap();
        prop_assert_eq!(encode_response(&parsed), line);
        prop_assert_eq!(parsed, resp);
    }

    #[test]
    fn request_round_trip(prompt in ".{0,20}", prefix in prop::collection::vec(arb_token(), 0..5), k in 1usize..10, n in 1usize..20) {
        for req in [BridgeRequest::token(&prompt, prefix.clone()), BridgeRequest::sequence(&prompt, k, n)] {
            let line = encode_request(&req);
            let parsed = parse_request(&line).unwrap();
            prop_assert_eq!(encode_request(&parsed), line);
        }
    }
}
