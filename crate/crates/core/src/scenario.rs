//! Executable test scenarios and the `.scn` reader.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lex::Scanner;
use crate::model::ProgramModel;
use crate::trace::TracePattern;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    New { var: String, class: String },
    Invoke { var: String, method: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub steps: Vec<Step>,
    pub expected: Option<Vec<TracePattern>>,
}

impl Scenario {
    /// Resolves class names against `model` and checks that every invoked
    /// variable was created by an earlier step.
    pub fn resolve(&self, model: &ProgramModel) -> Result<Scenario, String> {
        let mut bound: Vec<&str> = Vec::new();
        let mut steps = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            match step {
                Step::New { var, class } => {
                    let q = model
                        .resolve_type(class)
                        .filter(|q| model.get(q).is_some_and(|d| d.is_class()))
                        .ok_or_else(|| format!("scenario {}: unknown class `{}`", self.name, class))?;
                    bound.push(var);
                    steps.push(Step::New {
                        var: var.clone(),
                        class: q,
                    });
                }
                Step::Invoke { var, .. } => {
                    if !bound.contains(&var.as_str()) {
                        return Err(format!("scenario {}: `{}` is not bound", self.name, var));
                    }
                    steps.push(step.clone());
                }
            }
        }
        Ok(Scenario {
            name: self.name.clone(),
            steps,
            expected: self.expected.clone(),
        })
    }

    /// Writes the scenario back in `.scn` form.
    pub fn render(&self) -> String {
        let mut out = format!("scenario {}\n", self.name);
        for step in &self.steps {
            match step {
                Step::New { var, class } => out.push_str(&format!("  new {} {}\n", var, class)),
                Step::Invoke { var, method } => {
                    out.push_str(&format!("  invoke {}.{}()\n", var, method))
                }
            }
        }
        if let Some(expected) = &self.expected {
            out.push_str("  expect:\n");
            for p in expected {
                out.push_str(&format!("    {}\n", p));
            }
        }
        out
    }
}

fn err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError {
        line,
        message: message.into(),
    }
}

/// Reads any number of scenarios. Lines whose first non-blank character is
/// `#` are comments.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>, ScenarioError> {
    let mut out: Vec<Scenario> = Vec::new();
    let mut in_expect = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix("scenario ") {
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(err(line, "scenario names are single words"));
            }
            if out.iter().any(|s| s.name == name) {
                return Err(err(line, format!("duplicate scenario `{}`", name)));
            }
            out.push(Scenario {
                name: name.to_string(),
                steps: Vec::new(),
                expected: None,
            });
            in_expect = false;
            continue;
        }
        let current = out
            .last_mut()
            .ok_or_else(|| err(line, "expected `scenario <name>`"))?;
        if in_expect {
            let pattern = trimmed.parse::<TracePattern>().map_err(|m| err(line, m))?;
            current.expected.get_or_insert_with(Vec::new).push(pattern);
            continue;
        }
        if trimmed == "expect:" {
            in_expect = true;
            current.expected = Some(Vec::new());
            continue;
        }
        let mut sc = Scanner::new(trimmed, line);
        let scan = |e: crate::lex::ScanError| err(e.line, e.message);
        if sc.eat_keyword("new") {
            let var = sc.ident().map_err(scan)?;
            let class = sc.dotted().map_err(scan)?.join(".");
            current.steps.push(Step::New { var, class });
        } else if sc.eat_keyword("invoke") {
            let parts = sc.dotted().map_err(scan)?;
            if parts.len() != 2 {
                return Err(err(line, "expected `invoke <var>.<method>()`"));
            }
            sc.expect('(').map_err(scan)?;
            sc.expect(')').map_err(scan)?;
            current.steps.push(Step::Invoke {
                var: parts[0].clone(),
                method: parts[1].clone(),
            });
        } else {
            return Err(err(line, format!("unknown scenario step `{}`", trimmed)));
        }
        if !sc.at_end() {
            return Err(err(line, "unexpected trailing text"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceEvent;

    #[test]
    fn reads_steps_and_expectations() {
        let text = "\
# smoke
scenario paste
  new c PasteCommand
  invoke c.execute()
  expect:
    advice A 0 before 3
    ...
    exit 3
scenario other
  new d X
";
        let s = parse_scenarios(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].steps.len(), 2);
        let exp = s[0].expected.as_ref().unwrap();
        assert_eq!(exp.len(), 3);
        assert_eq!(exp[1], TracePattern::Skip);
        assert!(matches!(exp[2], TracePattern::Event(TraceEvent::Exit { .. })));
        assert!(s[1].expected.is_none());
        assert_eq!(parse_scenarios(&s[0].render()).unwrap()[0], s[0]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(parse_scenarios("new c X\n").unwrap_err().line, 1);
        assert_eq!(parse_scenarios("scenario a\n  jump\n").unwrap_err().line, 2);
        assert!(parse_scenarios("scenario a\n  expect:\n    bogus 1\n").is_err());
    }
}
