//! Versioned prompt catalog. Every prompt the runtime sends is built here so
//! that transcripts stay reproducible across releases of the same version.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde_json::Value;

use crate::contract::{FunctionContract, SchemaDoc, Violation};
use crate::memory::MockInvocation;
use crate::script::builtin_names;

pub const CATALOG_VERSION: &str = "mockfn-prompts/1";

pub fn system_prompt(contract: &FunctionContract, param_schema: &SchemaDoc, response_schema: &SchemaDoc) -> String {
    let mut out = format!(
        "You are role-playing the function `{}`. Each user message is one call of this function; \
         answer it exactly as the function would.\n",
        contract.name()
    );
    if !contract.description().trim().is_empty() {
        out.push_str(&format!(
            "\nFunction documentation:\n{}\n",
            contract.description().trim()
        ));
    }
    out.push_str(&format!(
        "\nArguments arrive as a JSON document that conforms to this JSON schema:\n{}\n\
         \nReply with a single JSON document that conforms to this JSON schema:\n{}\n\
         \nFirst write your reasoning in the \"remarks\" field, then put the return value in the \"results\" field. \
         Reply with the JSON document only.",
        param_schema.to_json_string(),
        response_schema.to_json_string()
    ));
    out
}

pub fn correction(violations: &[Violation]) -> String {
    let mut out =
        String::from("Your previous reply was rejected because it does not conform to the response schema:\n");
    for v in violations {
        out.push_str(&format!("- {v}\n"));
    }
    out.push_str("Reply again with a corrected JSON document only.");
    out
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => serde_json::to_string(other).unwrap_or_default(),
    }
}

pub fn reflection(invocation: &MockInvocation, truth: &Value) -> String {
    format!(
        "Your result for the previous call was wrong.\n\
         Arguments: {}\n\
         Your reasoning: {}\n\
         Your result: {}\n\
         Correct result: {}\n\n\
         Begin by stating your wrong result and the correct answer. Then analyze the possible reasons for \
         this mistake under a \"Mistake Analysis:\" heading, and write concrete notes for avoiding similar \
         mistakes in future calls under a \"Notes for Future Reference:\" heading. Reply in plain text.",
        invocation.request,
        invocation.remarks,
        render(&invocation.results),
        render(truth)
    )
}

/// Heading that separates analysis from notes in a reflection reply.
pub const NOTES_HEADING: &str = "Notes for Future Reference";

pub const COMPRESSION: &str =
    "In previous invocations you have made some mistakes and remarks to not make them again.\n\
Now summarize these notes to help your future self to avoid these mistakes and maximize your accuracy.\n\
You can include specific examples and reasoning in the summary.";

pub fn script_generation(contract: &FunctionContract, param_schema: &SchemaDoc, response_schema: &SchemaDoc) -> String {
    let builtins: Vec<&str> = builtin_names();
    format!(
        "Write a substitution script that reproduces the behavior of the function `{name}` you have been \
         role-playing, based on the calls above.\n\n\
         Function documentation:\n{doc}\n\n\
         Argument schema:\n{params}\n\n\
         Your replies followed this schema:\n{response}\n\n\
         Script language: statements `let x = expr;`, `x = expr;`, `x += expr;`, `if cond {{ }} else {{ }}`, \
         `while cond {{ }}`, `for item in array {{ }}`, `break;`, `continue;`, `return expr;`. Expressions: numbers, \
         strings, true, false, null, object literals {{\"k\": v}}, arrays [a, b], field access a.b, indexing a[i], \
         + - * / %, == != < <= > >=, && || !, cond ? a : b. Conditions must be booleans. \
         Reading a missing field is an error; use has(args, \"name\") or get(args, \"name\", default) for optional \
         arguments. Available functions: {builtins}.\n\
         The arguments are in the variable `args`. The script must return an object \
         {{\"Remarks\": string, \"Results\": <value matching \"results\">, \"IsReadyToCompile\": boolean}}. \
         Set \"IsReadyToCompile\" to false when the arguments are insufficient to decide.\n\
         Reply with the script inside one ```script fenced block.",
        name = contract.name(),
        doc = contract.description().trim(),
        params = param_schema.to_json_string(),
        response = response_schema.to_json_string(),
        builtins = builtins.join(", "),
    )
}

pub fn compile_feedback(diagnostic: &str) -> String {
    format!("The script failed to compile:\n{diagnostic}\nFix the error and reply with the whole script in one fenced block.")
}

pub fn rag_header(level: u8) -> String {
    format!("Reference material (level {level}):")
}
