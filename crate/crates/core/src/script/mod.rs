//! A small sandboxed script dialect for substitution scripts.
//!
//! Scripts see one variable, `args` (the argument document), and must
//! `return` a value. There is no I/O and no clock; every statement and
//! expression costs one step against a fixed budget.
//!
//! ```text
//! let species = "Unknown";
//! if has(args, "petalLength") {
//!     species = args.petalLength < 2.5 ? "Setosa" : "Versicolor";
//! }
//! return { "Remarks": "by petal length", "Results": species, "IsReadyToCompile": true };
//! ```
//!
//! Statements: `let`, assignment (`=`, `+=`, `-=`), `if`/`else`, `while`,
//! `for x in array`, `break`, `continue`, `return`. Expressions: literals,
//! object and array literals, `.field`, `[index]`, arithmetic, comparison,
//! `&&`, `||`, `!`, `cond ? a : b`, and builtin calls.

mod builtins;
mod interp;
mod lexer;
mod parser;

use alloc::string::String;
use alloc::vec::Vec;

use serde_json::Value;

use crate::error::{CompileError, ScriptFault};

/// Default step budget per execution.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

/// Names of the builtin functions the dialect provides.
pub fn builtin_names() -> Vec<&'static str> {
    builtins::Builtin::names().collect()
}

/// A compiled script. Immutable; execution is re-entrant.
#[derive(Debug, Clone)]
pub struct Program {
    body: Vec<parser::Stmt>,
}

impl Program {
    pub fn compile(source: &str) -> Result<Self, CompileError> {
        Ok(Self {
            body: parser::parse(source)?,
        })
    }

    /// Runs the script on `args`, returning whatever it returns.
    pub fn run(&self, args: &Value, budget: u64) -> Result<Value, ScriptFault> {
        interp::Machine::new(args.clone(), budget).run(&self.body)
    }

    /// Like [`run`](Self::run) but also reports the steps consumed.
    pub fn run_counted(&self, args: &Value, budget: u64) -> (Result<Value, ScriptFault>, u64) {
        let mut m = interp::Machine::new(args.clone(), budget);
        let out = m.run(&self.body);
        (out, m.steps())
    }
}

/// The output contract of a substitution script.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptOutput {
    pub remarks: String,
    pub results: Value,
    pub ready: bool,
}

impl ScriptOutput {
    /// Checks the `Remarks` / `Results` / `IsReadyToCompile` shape.
    pub fn from_value(v: Value) -> Result<Self, ScriptFault> {
        let Value::Object(mut m) = v else {
            return Err(ScriptFault::BadOutput("script must return an object".into()));
        };
        let remarks = match m.remove("Remarks") {
            Some(Value::String(s)) => s,
            Some(_) => return Err(ScriptFault::BadOutput("\"Remarks\" must be a string".into())),
            None => return Err(ScriptFault::BadOutput("missing \"Remarks\"".into())),
        };
        let results = m
            .remove("Results")
            .ok_or_else(|| ScriptFault::BadOutput("missing \"Results\"".into()))?;
        let ready = match m.remove("IsReadyToCompile") {
            Some(Value::Bool(b)) => b,
            Some(_) => return Err(ScriptFault::BadOutput("\"IsReadyToCompile\" must be a boolean".into())),
            None => return Err(ScriptFault::BadOutput("missing \"IsReadyToCompile\"".into())),
        };
        Ok(Self {
            remarks,
            results,
            ready,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn run(src: &str, args: Value) -> Result<Value, ScriptFault> {
        Program::compile(src).unwrap().run(&args, DEFAULT_STEP_BUDGET)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(run("return 1 + 2 * 3 - 4 / 2;", json!({})).unwrap(), json!(5.0));
        assert_eq!(run("return 7 % 3 + 10 - 1;", json!({})).unwrap(), json!(10));
        assert_eq!(run("return -(2 + 3) * 2;", json!({})).unwrap(), json!(-10));
        assert_eq!(run("return \"a\" + \"b\";", json!({})).unwrap(), json!("ab"));
    }

    #[test]
    fn control_flow() {
        let src = r#"
            let total = 0;
            for x in args.xs { if x == 3 { continue; } if x > 4 { break; } total += x; }
            let i = 0;
            while i < 3 { i = i + 1; }
            return [total, i];
        "#;
        assert_eq!(run(src, json!({"xs": [1, 2, 3, 4, 5, 6]})).unwrap(), json!([7, 3]));
    }

    #[test]
    fn logic_short_circuits() {
        // the right side would fault on the missing field
        assert_eq!(
            run("return has(args, \"a\") && args.a > 1;", json!({})).unwrap(),
            json!(false)
        );
        assert_eq!(run("return true || args.nope;", json!({})).unwrap(), json!(true));
    }

    #[test]
    fn scoping() {
        assert!(Program::compile("if true { let x = 1; } return x;").is_err());
        assert_eq!(
            run("let x = 1; if true { let x = 2; } return x;", json!({})).unwrap(),
            json!(1)
        );
        assert_eq!(
            run("let x = 1; if true { x = 2; } return x;", json!({})).unwrap(),
            json!(2)
        );
    }

    #[test]
    fn compile_diagnostics() {
        let e = Program::compile("let a = 1;\nreturn b;").unwrap_err();
        assert_eq!((e.line, e.column), (2, 8));
        assert!(e.message.contains("undefined variable 'b'"));
        assert!(Program::compile("return frob(1);")
            .unwrap_err()
            .message
            .contains("unknown function"));
        assert!(Program::compile("return lower();")
            .unwrap_err()
            .message
            .contains("takes 1 arguments"));
        assert!(Program::compile("let a = 1;")
            .unwrap_err()
            .message
            .contains("no return"));
        assert!(Program::compile("break; return 1;").is_err());
        assert!(Program::compile("return {a: 1, a: 2};").is_err());
        assert!(Program::compile("return (1;").is_err());
    }

    #[test]
    fn runtime_faults() {
        assert!(matches!(
            run("return args.missing;", json!({})),
            Err(ScriptFault::Runtime { .. })
        ));
        assert!(matches!(
            run("return 1 + \"a\";", json!({})),
            Err(ScriptFault::Runtime { .. })
        ));
        assert!(matches!(
            run("return 1 / 0;", json!({})),
            Err(ScriptFault::Runtime { .. })
        ));
        assert!(matches!(
            run("if 1 { return 1; } return 2;", json!({})),
            Err(ScriptFault::Runtime { .. })
        ));
        assert_eq!(run("if false { return 1; }", json!({})), Err(ScriptFault::NoReturn));
    }

    #[test]
    fn step_budget() {
        let p = Program::compile("while true { } return 1;").unwrap();
        assert_eq!(p.run(&json!({}), 1000), Err(ScriptFault::StepBudget(1000)));
        let (out, steps) = Program::compile("return 1;").unwrap().run_counted(&json!({}), 10);
        assert_eq!(out, Ok(json!(1)));
        assert_eq!(steps, 2);
    }

    #[test]
    fn builtins_behave() {
        let src = r#"return [lower("AbC"), len([1,2]), contains("foul", "ou"), num("2.5"), int(-2.7),
            str(3), get(args, "x", 9), min(3, 1, 2), max([4, 8]), round(2.5), split("a,b", ","),
            join(["a", 1], "-"), keys({b: 1}), clamp(5, 0, 3), type_of(null)];"#;
        assert_eq!(
            run(src, json!({})).unwrap(),
            json!([
                "abc",
                2,
                true,
                2.5,
                -2,
                "3",
                9,
                1,
                8,
                3.0,
                ["a", "b"],
                "a-1",
                ["b"],
                3,
                "null"
            ])
        );
    }

    #[test]
    fn output_shape() {
        let ok = ScriptOutput::from_value(json!({"Remarks": "r", "Results": 1, "IsReadyToCompile": true})).unwrap();
        assert_eq!(
            ok,
            ScriptOutput {
                remarks: "r".into(),
                results: json!(1),
                ready: true
            }
        );
        assert!(ScriptOutput::from_value(json!({"Remarks": "r", "IsReadyToCompile": true})).is_err());
        assert!(ScriptOutput::from_value(json!({"Remarks": "r", "Results": 1})).is_err());
        assert!(ScriptOutput::from_value(json!("x")).is_err());
    }
}
