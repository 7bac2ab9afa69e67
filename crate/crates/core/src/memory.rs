//! Invocation memory: an editable chat history whose elements are whole
//! invocations, with sub-branches that can be committed back to the point
//! they were created from.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::sync::{Arc, Weak};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use core::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use spin::Mutex;

use crate::error::MemoryError;
use crate::runtime::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// `ceil(chars / 4)`, the stand-in token estimator.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub token_estimate: u64,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        let content = content.into();
        let token_estimate = estimate_tokens(&content);
        Self {
            role,
            content,
            token_estimate,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// 12-byte identifier, rendered as 24 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InvocationId(pub [u8; 12]);

impl fmt::Display for InvocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for InvocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InvocationId({self})")
    }
}

impl FromStr for InvocationId {
    type Err = MemoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bytes = [0u8; 12];
        hex::decode_to_slice(s, &mut bytes)
            .map_err(|_| MemoryError::Snapshot(alloc::format!("bad invocation id '{s}'")))?;
        Ok(InvocationId(bytes))
    }
}

impl Serialize for InvocationId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for InvocationId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One argument/result exchange, stored once and rendered as a
/// user/assistant message pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockInvocation {
    pub id: InvocationId,
    pub arguments: Value,
    /// Canonical argument text sent as the user message.
    pub request: String,
    pub remarks: String,
    pub results: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Value>,
    /// Whether the original answer matched the ground truth; `None` when
    /// no ground truth was available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default)]
    pub reflected: bool,
    pub created_at: Timestamp,
}

#[derive(Serialize)]
struct ResponseBody<'a> {
    remarks: &'a str,
    results: &'a Value,
}

impl MockInvocation {
    pub fn response_text(&self) -> String {
        serde_json::to_string(&ResponseBody {
            remarks: &self.remarks,
            results: &self.results,
        })
        .expect("JSON values always serialize")
    }

    pub fn user_message(&self) -> ChatMessage {
        ChatMessage::user(self.request.clone())
    }

    pub fn assistant_message(&self) -> ChatMessage {
        ChatMessage::assistant(self.response_text())
    }
}

/// Extra material placed right after the system prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Supplement {
    pub id: String,
    pub content: String,
}

/// Replacement text used once invocations are compressed into notes.
pub const SUMMARY_PREAMBLE: &str =
    "Here are notes summarized by yourself to help you avoid mistakes and maximize accuracy:";

pub fn summary_message(summary: &str) -> ChatMessage {
    ChatMessage::system(alloc::format!("{SUMMARY_PREAMBLE}\n{summary}"))
}

#[derive(Debug, Clone)]
struct BranchState {
    system_prompt: ChatMessage,
    supplements: Vec<Supplement>,
    summary: Option<String>,
    invocations: Vec<MockInvocation>,
}

impl BranchState {
    fn position(&self, id: InvocationId) -> Option<usize> {
        self.invocations.iter().position(|i| i.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchId(pub u64);

static NEXT_BRANCH: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
struct ParentLink {
    id: BranchId,
    state: Weak<Mutex<BranchState>>,
    creation_index: usize,
    inherited: BTreeSet<InvocationId>,
}

/// A branch handle. Writes go through `&mut self`; the state sits behind
/// a lock only so that children can commit into it from other tasks.
#[derive(Debug)]
pub struct MemoryBranch {
    id: BranchId,
    state: Arc<Mutex<BranchState>>,
    parent: Option<ParentLink>,
}

impl MemoryBranch {
    pub fn new(system_prompt: ChatMessage) -> Result<Self, MemoryError> {
        if system_prompt.role != Role::System || system_prompt.content.trim().is_empty() {
            return Err(MemoryError::EmptySystemPrompt);
        }
        Ok(Self::from_state(
            BranchState {
                system_prompt,
                supplements: Vec::new(),
                summary: None,
                invocations: Vec::new(),
            },
            None,
        ))
    }

    fn from_state(state: BranchState, parent: Option<ParentLink>) -> Self {
        Self {
            id: BranchId(NEXT_BRANCH.fetch_add(1, Ordering::Relaxed)),
            state: Arc::new(Mutex::new(state)),
            parent,
        }
    }

    pub fn id(&self) -> BranchId {
        self.id
    }

    pub fn parent(&self) -> Option<BranchId> {
        self.parent.as_ref().map(|p| p.id)
    }

    pub fn creation_index(&self) -> Option<usize> {
        self.parent.as_ref().map(|p| p.creation_index)
    }

    pub fn system_prompt(&self) -> ChatMessage {
        self.state.lock().system_prompt.clone()
    }

    pub fn len(&self) -> usize {
        self.state.lock().invocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn invocations(&self) -> Vec<MockInvocation> {
        self.state.lock().invocations.clone()
    }

    pub fn get(&self, id: InvocationId) -> Option<MockInvocation> {
        let s = self.state.lock();
        s.position(id).map(|i| s.invocations[i].clone())
    }

    pub fn compressed_summary(&self) -> Option<String> {
        self.state.lock().summary.clone()
    }

    pub fn supplements(&self) -> Vec<Supplement> {
        self.state.lock().supplements.clone()
    }

    pub fn push(&mut self, invocation: MockInvocation) -> Result<(), MemoryError> {
        let mut s = self.state.lock();
        if s.position(invocation.id).is_some() {
            return Err(MemoryError::DuplicateId(invocation.id));
        }
        s.invocations.push(invocation);
        Ok(())
    }

    /// Overwrites the invocation at `index` (which must exist).
    pub fn replace_at(&mut self, index: usize, invocation: MockInvocation) -> Result<(), MemoryError> {
        let mut s = self.state.lock();
        if s.invocations
            .iter()
            .enumerate()
            .any(|(i, x)| i != index && x.id == invocation.id)
        {
            return Err(MemoryError::DuplicateId(invocation.id));
        }
        s.invocations[index] = invocation;
        Ok(())
    }

    pub fn remove_at(&mut self, index: usize) -> MockInvocation {
        self.state.lock().invocations.remove(index)
    }

    pub fn pop(&mut self) -> Option<MockInvocation> {
        self.state.lock().invocations.pop()
    }

    pub fn clear_invocations(&mut self) {
        self.state.lock().invocations.clear();
    }

    pub fn set_compressed_summary(&mut self, summary: Option<String>) {
        self.state.lock().summary = summary;
    }

    /// Adds a supplement block; returns false if one with the same id is
    /// already present.
    pub fn inject_supplement(&mut self, supplement: Supplement) -> bool {
        let mut s = self.state.lock();
        if s.supplements.iter().any(|x| x.id == supplement.id) {
            return false;
        }
        s.supplements.push(supplement);
        true
    }

    pub fn update_invocation(
        &mut self,
        id: InvocationId,
        results: Value,
        remarks: impl Into<String>,
    ) -> Result<(), MemoryError> {
        let mut s = self.state.lock();
        let i = s.position(id).ok_or(MemoryError::NotFound(id))?;
        let inv = &mut s.invocations[i];
        inv.results = results;
        inv.remarks = remarks.into();
        Ok(())
    }

    /// Edits an invocation in place.
    pub fn with_invocation<R>(
        &mut self,
        id: InvocationId,
        f: impl FnOnce(&mut MockInvocation) -> R,
    ) -> Result<R, MemoryError> {
        let mut s = self.state.lock();
        let i = s.position(id).ok_or(MemoryError::NotFound(id))?;
        Ok(f(&mut s.invocations[i]))
    }

    /// System prompt, supplements, optional summary, then one user and one
    /// assistant message per invocation.
    pub fn render_context(&self) -> Vec<ChatMessage> {
        let s = self.state.lock();
        let mut out = Vec::with_capacity(2 + s.supplements.len() + 2 * s.invocations.len());
        out.push(s.system_prompt.clone());
        out.extend(s.supplements.iter().map(|x| ChatMessage::system(x.content.clone())));
        if let Some(summary) = &s.summary {
            out.push(summary_message(summary));
        }
        for inv in &s.invocations {
            out.push(inv.user_message());
            out.push(inv.assistant_message());
        }
        out
    }

    /// Snapshots this branch into an isolated child.
    pub fn create_branch(&self) -> MemoryBranch {
        let state = self.state.lock().clone();
        let link = ParentLink {
            id: self.id,
            state: Arc::downgrade(&self.state),
            creation_index: state.invocations.len(),
            inherited: state.invocations.iter().map(|i| i.id).collect(),
        };
        Self::from_state(state, Some(link))
    }

    /// Inserts the invocations added since creation into the parent at the
    /// creation point. Parent items appended afterwards stay after them.
    pub fn commit(self) -> Result<(), MemoryError> {
        let link = self.parent.ok_or(MemoryError::OrphanBranch)?;
        let parent = link.state.upgrade().ok_or(MemoryError::OrphanBranch)?;
        let added: Vec<MockInvocation> = self
            .state
            .lock()
            .invocations
            .iter()
            .filter(|i| !link.inherited.contains(&i.id))
            .cloned()
            .collect();
        if added.is_empty() {
            return Ok(());
        }
        let mut p = parent.lock();
        if let Some(dup) = added.iter().find(|a| p.position(a.id).is_some()) {
            return Err(MemoryError::DuplicateId(dup.id));
        }
        let at = link.creation_index.min(p.invocations.len());
        p.invocations.splice(at..at, added);
        Ok(())
    }

    /// Discards the branch without touching its parent.
    pub fn drop_branch(self) {}

    pub fn snapshot(&self) -> BranchSnapshot {
        let s = self.state.lock();
        BranchSnapshot {
            system_prompt: s.system_prompt.content.clone(),
            supplements: s.supplements.clone(),
            compressed_summary: s.summary.clone(),
            invocations: s.invocations.clone(),
        }
    }

    pub fn from_snapshot(snapshot: BranchSnapshot) -> Result<Self, MemoryError> {
        let mut branch = MemoryBranch::new(ChatMessage::system(snapshot.system_prompt))?;
        for inv in snapshot.invocations {
            branch.push(inv)?;
        }
        for s in snapshot.supplements {
            branch.inject_supplement(s);
        }
        branch.set_compressed_summary(snapshot.compressed_summary);
        Ok(branch)
    }

    /// Replaces the system prompt, keeping everything else.
    pub fn set_system_prompt(&mut self, prompt: ChatMessage) -> Result<(), MemoryError> {
        if prompt.role != Role::System || prompt.content.trim().is_empty() {
            return Err(MemoryError::EmptySystemPrompt);
        }
        self.state.lock().system_prompt = prompt;
        Ok(())
    }
}

/// Persisted form of a branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSnapshot {
    pub system_prompt: String,
    #[serde(default)]
    pub supplements: Vec<Supplement>,
    #[serde(default)]
    pub compressed_summary: Option<String>,
    pub invocations: Vec<MockInvocation>,
}

impl BranchSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, MemoryError> {
        serde_json::from_str(text).map_err(|e| MemoryError::Snapshot(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use serde_json::json;

    fn inv(n: u8) -> MockInvocation {
        MockInvocation {
            id: InvocationId([n; 12]),
            arguments: json!({"x": n}),
            request: alloc::format!("{{\"x\":{n}}}"),
            remarks: alloc::format!("r{n}"),
            results: json!(n.is_multiple_of(2)),
            ground_truth: None,
            correct: None,
            reflected: false,
            created_at: Timestamp(n as u64),
        }
    }

    fn branch() -> MemoryBranch {
        MemoryBranch::new(ChatMessage::system("be f")).unwrap()
    }

    fn ids(b: &MemoryBranch) -> Vec<u8> {
        b.invocations().iter().map(|i| i.id.0[0]).collect()
    }

    #[test]
    fn empty_branch_renders_system_only() {
        let b = branch();
        let ctx = b.render_context();
        assert_eq!(ctx.len(), 1);
        assert_eq!(ctx[0].role, Role::System);
    }

    #[test]
    fn two_invocations_alternate() {
        let mut b = branch();
        b.push(inv(1)).unwrap();
        b.push(inv(2)).unwrap();
        let roles: Vec<Role> = b.render_context().iter().map(|m| m.role).collect();
        assert_eq!(
            roles,
            vec![Role::System, Role::User, Role::Assistant, Role::User, Role::Assistant]
        );
    }

    #[test]
    fn summary_sits_between_system_and_pairs() {
        let mut b = branch();
        b.set_compressed_summary(Some("S".into()));
        b.push(inv(1)).unwrap();
        let ctx = b.render_context();
        assert_eq!(ctx.len(), 4);
        assert_eq!(ctx[1].content, alloc::format!("{SUMMARY_PREAMBLE}\nS"));
        assert_eq!(ctx[2].role, Role::User);
        assert_eq!(ctx[3].role, Role::Assistant);
    }

    #[test]
    fn child_isolated_from_parent() {
        let mut parent = branch();
        for n in 1..=3 {
            parent.push(inv(n)).unwrap();
        }
        let child = parent.create_branch();
        parent.push(inv(4)).unwrap();
        assert_eq!(ids(&child), vec![1, 2, 3]);
        assert_eq!(ids(&parent), vec![1, 2, 3, 4]);
    }

    #[test]
    fn siblings_isolated() {
        let parent = branch();
        let mut a = parent.create_branch();
        let mut b = parent.create_branch();
        a.push(inv(1)).unwrap();
        b.push(inv(2)).unwrap();
        assert_eq!(ids(&a), vec![1]);
        assert_eq!(ids(&b), vec![2]);
        assert!(parent.is_empty());
    }

    #[test]
    fn commit_inserts_at_creation_point() {
        let mut parent = branch();
        parent.push(inv(b'A')).unwrap();
        parent.push(inv(b'B')).unwrap();
        let mut child = parent.create_branch();
        child.push(inv(b'X')).unwrap();
        child.push(inv(b'Y')).unwrap();
        parent.push(inv(b'C')).unwrap();
        child.commit().unwrap();
        assert_eq!(ids(&parent), b"ABXYC".to_vec());
    }

    #[test]
    fn empty_commit_and_drop_leave_parent() {
        let mut parent = branch();
        parent.push(inv(1)).unwrap();
        let child = parent.create_branch();
        child.commit().unwrap();
        let mut other = parent.create_branch();
        other.push(inv(9)).unwrap();
        other.drop_branch();
        assert_eq!(ids(&parent), vec![1]);
    }

    #[test]
    fn orphan_commit_fails() {
        let parent = branch();
        let mut child = parent.create_branch();
        child.push(inv(1)).unwrap();
        drop(parent);
        assert_eq!(child.commit(), Err(MemoryError::OrphanBranch));
    }

    #[test]
    fn duplicate_ids_rejected_at_commit() {
        let mut parent = branch();
        let mut child = parent.create_branch();
        child.push(inv(1)).unwrap();
        parent.push(inv(1)).unwrap();
        assert_eq!(child.commit(), Err(MemoryError::DuplicateId(InvocationId([1; 12]))));
    }

    #[test]
    fn nested_commit_composes() {
        let mut root = branch();
        root.push(inv(1)).unwrap();
        let mut mid = root.create_branch();
        mid.push(inv(2)).unwrap();
        let mut leaf = mid.create_branch();
        leaf.push(inv(3)).unwrap();
        leaf.commit().unwrap();
        mid.commit().unwrap();
        assert_eq!(ids(&root), vec![1, 2, 3]);
    }

    #[test]
    fn update_rewrites_assistant_message() {
        let mut b = branch();
        b.push(inv(1)).unwrap();
        let before = b.render_context();
        b.update_invocation(InvocationId([1; 12]), json!(false), "r1").unwrap();
        assert_eq!(b.render_context(), before);
        b.update_invocation(InvocationId([1; 12]), json!(1), "note").unwrap();
        let ctx = b.render_context();
        assert_eq!(ctx[2].content, r#"{"remarks":"note","results":1}"#);
        assert_eq!(b.render_context(), ctx);
        assert_eq!(
            b.update_invocation(InvocationId([7; 12]), json!(1), "x"),
            Err(MemoryError::NotFound(InvocationId([7; 12])))
        );
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut b = branch();
        b.push(inv(1)).unwrap();
        b.inject_supplement(Supplement {
            id: "rag".into(),
            content: "table".into(),
        });
        b.set_compressed_summary(Some("notes".into()));
        let snap = b.snapshot();
        let back = MemoryBranch::from_snapshot(BranchSnapshot::from_json(&snap.to_json()).unwrap()).unwrap();
        assert_eq!(back.render_context(), b.render_context());
    }

    #[test]
    fn id_hex_roundtrip() {
        let id: InvocationId = "67443dee4a52aee384278fa8".parse().unwrap();
        assert_eq!(id.to_string(), "67443dee4a52aee384278fa8");
        assert!("xyz".parse::<InvocationId>().is_err());
    }
}
