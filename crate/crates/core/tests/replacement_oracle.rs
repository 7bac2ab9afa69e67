use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::json;

use mockfn_core::memory::{ChatMessage, InvocationId, MemoryBranch, MockInvocation};
use mockfn_core::runtime::Timestamp;
use mockfn_core::trainer::refine_replace;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Item {
    id: u32,
    correct: bool,
    reflected: bool,
}

/// Straight transcription of the replacement pseudocode, reading the
/// replacement test as "expected result equals actual result".
fn reference(history: &mut Vec<Item>, new: Item, threshold: usize) {
    if history.len() < threshold {
        history.push(new);
        return;
    }
    for invocation in history.iter_mut() {
        if invocation.correct && !invocation.reflected {
            *invocation = new;
            return;
        }
    }
    if new.correct {
        return;
    }
    if !history.is_empty() {
        history.remove(0);
    }
    history.push(new);
}

fn invocation(item: Item) -> MockInvocation {
    let mut id = [0u8; 12];
    id[8..].copy_from_slice(&item.id.to_be_bytes());
    MockInvocation {
        id: InvocationId(id),
        arguments: json!({"n": item.id}),
        request: format!("{{\"n\":{}}}", item.id),
        remarks: String::new(),
        results: json!(item.correct),
        ground_truth: Some(json!(true)),
        correct: Some(item.correct),
        reflected: item.reflected,
        created_at: Timestamp(0),
    }
}

fn item() -> impl Strategy<Value = (bool, bool)> {
    // reflected invocations were wrong when first answered
    prop_oneof![Just((true, false)), Just((false, true)), Just((false, false))]
}

/// Runs `cases` random (history, newcomer, limit) states through both.
pub fn check_against_reference(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let state =
        (1usize..=12).prop_flat_map(|limit| (Just(limit), proptest::collection::vec(item(), 0..=limit + 2), item()));
    runner
        .run(&state, |(limit, history, (correct, reflected))| {
            let mut model: Vec<Item> = history
                .iter()
                .enumerate()
                .map(|(i, (c, r))| Item {
                    id: i as u32,
                    correct: *c,
                    reflected: *r,
                })
                .collect();
            let new = Item {
                id: 1000,
                correct,
                reflected,
            };
            let mut memory = MemoryBranch::new(ChatMessage::system("s")).unwrap();
            for it in &model {
                memory.push(invocation(*it)).unwrap();
            }
            refine_replace(&mut memory, invocation(new), limit).unwrap();
            reference(&mut model, new, limit);
            let expected: Vec<MockInvocation> = model.into_iter().map(invocation).collect();
            prop_assert_eq!(memory.invocations(), expected);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

#[test]
fn agrees_with_reference_on_random_states() {
    check_against_reference(10_000).unwrap();
}
