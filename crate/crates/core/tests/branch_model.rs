use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::json;

use mockfn_core::error::MemoryError;
use mockfn_core::memory::{ChatMessage, InvocationId, MemoryBranch, MockInvocation};
use mockfn_core::runtime::Timestamp;

#[derive(Debug, Clone, Copy)]
enum Op {
    Append(usize),
    Create(usize),
    Commit(usize),
    Drop(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => any::<usize>().prop_map(Op::Append),
        2 => any::<usize>().prop_map(Op::Create),
        2 => any::<usize>().prop_map(Op::Commit),
        1 => any::<usize>().prop_map(Op::Drop),
    ]
}

struct ModelBranch {
    items: Vec<u32>,
    /// Index into the model of the parent, its creation index and the ids seen then.
    parent: Option<(usize, usize, Vec<u32>)>,
    alive: bool,
}

fn invocation(n: u32) -> MockInvocation {
    let mut id = [0u8; 12];
    id[8..].copy_from_slice(&n.to_be_bytes());
    MockInvocation {
        id: InvocationId(id),
        arguments: json!({ "n": n }),
        request: n.to_string(),
        remarks: String::new(),
        results: json!(n),
        ground_truth: None,
        correct: None,
        reflected: false,
        created_at: Timestamp(n as u64),
    }
}

fn ids(b: &MemoryBranch) -> Vec<u32> {
    b.invocations()
        .iter()
        .map(|i| u32::from_be_bytes(i.id.0[8..].try_into().unwrap()))
        .collect()
}

fn check(ops: &[Op]) -> Result<(), TestCaseError> {
    let mut model = vec![ModelBranch {
        items: vec![],
        parent: None,
        alive: true,
    }];
    let mut real: Vec<Option<MemoryBranch>> = vec![Some(MemoryBranch::new(ChatMessage::system("s")).unwrap())];
    let mut next = 0u32;
    for op in ops {
        let live: Vec<usize> = (0..model.len()).filter(|i| model[*i].alive).collect();
        if live.is_empty() {
            break;
        }
        match *op {
            Op::Append(k) => {
                let b = live[k % live.len()];
                real[b].as_mut().unwrap().push(invocation(next)).unwrap();
                model[b].items.push(next);
                next += 1;
            }
            Op::Create(k) => {
                let b = live[k % live.len()];
                let child = real[b].as_ref().unwrap().create_branch();
                let items = model[b].items.clone();
                model.push(ModelBranch {
                    items: items.clone(),
                    parent: Some((b, items.len(), items)),
                    alive: true,
                });
                real.push(Some(child));
            }
            Op::Commit(k) => {
                let b = live[k % live.len()];
                let branch = real[b].take().unwrap();
                model[b].alive = false;
                let result = branch.commit();
                match model[b].parent.clone() {
                    Some((p, at, inherited)) if model[p].alive => {
                        prop_assert!(result.is_ok(), "{:?}", result);
                        let added: Vec<u32> = model[b]
                            .items
                            .iter()
                            .copied()
                            .filter(|i| !inherited.contains(i))
                            .collect();
                        let at = at.min(model[p].items.len());
                        model[p].items.splice(at..at, added);
                    }
                    _ => prop_assert_eq!(result, Err(MemoryError::OrphanBranch)),
                }
            }
            Op::Drop(k) => {
                let b = live[k % live.len()];
                real[b].take().unwrap().drop_branch();
                model[b].alive = false;
            }
        }
        for (m, r) in model.iter().zip(&real) {
            if let Some(r) = r {
                prop_assert_eq!(ids(r), m.items.clone());
            }
        }
    }
    Ok(())
}

/// Random interleavings of at most eight operations against the model.
pub fn check_interleavings(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&proptest::collection::vec(op(), 0..=8), |ops| check(&ops))
        .map_err(|e| e.to_string())
}

#[test]
fn random_interleavings_match_model() {
    check_interleavings(5_000).unwrap();
}

#[test]
fn parent_appends_stay_after_committed_items() {
    // parent [a, b], branch appends x, parent appends c, commit -> [a, b, x, c]
    let ops = [
        Op::Append(0),
        Op::Append(0),
        Op::Create(0),
        Op::Append(1),
        Op::Append(0),
        Op::Commit(1),
    ];
    check(&ops).unwrap();
    let mut parent = MemoryBranch::new(ChatMessage::system("s")).unwrap();
    parent.push(invocation(0)).unwrap();
    parent.push(invocation(1)).unwrap();
    let mut child = parent.create_branch();
    child.push(invocation(10)).unwrap();
    parent.push(invocation(2)).unwrap();
    child.commit().unwrap();
    assert_eq!(ids(&parent), [0, 1, 10, 2]);
}
