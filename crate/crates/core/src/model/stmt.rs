//! Statements of method, introduction and advice bodies.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lex::{ScanResult, Scanner};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Receiver {
    This,
    Var(String),
    /// A fresh instance of the named class.
    New(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stmt {
    Emit(String),
    Call {
        receiver: Receiver,
        method: String,
        arg_count: usize,
    },
    SuperCall {
        method: String,
    },
    New {
        var: String,
        class: String,
    },
    IfType {
        var: String,
        type_name: String,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    /// Only legal in around advice.
    Proceed,
}

impl Stmt {
    /// Visits every statement in pre-order with its path (`0`, `2.then.1`, ...).
    pub fn walk<'a>(body: &'a [Stmt], f: &mut dyn FnMut(&str, &'a Stmt)) {
        fn go<'a>(prefix: &str, body: &'a [Stmt], f: &mut dyn FnMut(&str, &'a Stmt)) {
            for (i, stmt) in body.iter().enumerate() {
                let path = if prefix.is_empty() {
                    i.to_string()
                } else {
                    format!("{}.{}", prefix, i)
                };
                f(&path, stmt);
                if let Stmt::IfType {
                    then_body,
                    else_body,
                    ..
                } = stmt
                {
                    go(&format!("{}.then", path), then_body, f);
                    go(&format!("{}.else", path), else_body, f);
                }
            }
        }
        go("", body, f)
    }

    pub fn count_proceeds(body: &[Stmt]) -> usize {
        let mut n = 0;
        Stmt::walk(body, &mut |_, s| {
            if matches!(s, Stmt::Proceed) {
                n += 1
            }
        });
        n
    }
}

/// Parses a statement list until end of input or an unmatched `}`.
pub(crate) fn parse_stmts(sc: &mut Scanner) -> ScanResult<Vec<Stmt>> {
    let mut out = Vec::new();
    loop {
        if sc.at_end() || sc.peek() == Some('}') {
            return Ok(out);
        }
        out.push(parse_stmt(sc)?);
    }
}

fn parse_block(sc: &mut Scanner) -> ScanResult<Vec<Stmt>> {
    sc.expect('{')?;
    let body = parse_stmts(sc)?;
    sc.expect('}')?;
    Ok(body)
}

fn parse_stmt(sc: &mut Scanner) -> ScanResult<Stmt> {
    if sc.eat_keyword("emit") {
        return Ok(Stmt::Emit(sc.label()?));
    }
    if sc.eat_keyword("proceed") {
        if sc.eat('(') {
            sc.expect(')')?;
        }
        return Ok(Stmt::Proceed);
    }
    if sc.eat_keyword("new") {
        let var = sc.ident()?;
        let class = sc.dotted()?.join(".");
        return Ok(Stmt::New { var, class });
    }
    if sc.eat_keyword("supercall") {
        let method = sc.ident()?;
        sc.expect('(')?;
        sc.expect(')')?;
        return Ok(Stmt::SuperCall { method });
    }
    if sc.eat_keyword("call") {
        let receiver_is_new = sc.eat_keyword("new");
        let mut parts = sc.dotted()?;
        if parts.len() < 2 {
            return sc.error("expected `<receiver>.<method>(<argcount>)`");
        }
        let method = parts.pop().unwrap_or_default();
        let receiver = if receiver_is_new {
            Receiver::New(parts.join("."))
        } else if parts.len() == 1 && parts[0] == "this" {
            Receiver::This
        } else if parts.len() == 1 {
            Receiver::Var(parts.remove(0))
        } else {
            return sc.error("call receiver must be `this`, a variable or `new <Class>`");
        };
        sc.expect('(')?;
        let arg_count = if sc.eat(')') {
            0
        } else {
            let n = sc.integer()?;
            sc.expect(')')?;
            n
        };
        return Ok(Stmt::Call {
            receiver,
            method,
            arg_count,
        });
    }
    if sc.eat_keyword("if") {
        if !sc.eat_keyword("istype") {
            return sc.error("expected `istype(<var>, <Type>)` after `if`");
        }
        sc.expect('(')?;
        let var = sc.ident()?;
        sc.expect(',')?;
        let type_name = sc.dotted()?.join(".");
        sc.expect(')')?;
        let then_body = parse_block(sc)?;
        let else_body = if sc.eat_keyword("else") {
            parse_block(sc)?
        } else {
            Vec::new()
        };
        return Ok(Stmt::IfType {
            var,
            type_name,
            then_body,
            else_body,
        });
    }
    let word = sc.label().unwrap_or_default();
    sc.error(format!("unknown statement `{}`", word))
}

fn write_label(f: &mut fmt::Formatter<'_>, label: &str) -> fmt::Result {
    let bare = !label.is_empty()
        && label
            .chars()
            .all(|c| !c.is_whitespace() && !matches!(c, '{' | '}' | ';' | '"' | '#'));
    if bare {
        f.write_str(label)
    } else {
        write!(f, "\"{}\"", label.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

/// Writes statements on one line, separated by `; `.
pub fn inline_body(body: &[Stmt]) -> String {
    body.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("; ")
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Emit(label) => {
                f.write_str("emit ")?;
                write_label(f, label)
            }
            Stmt::Call {
                receiver,
                method,
                arg_count,
            } => {
                let recv = match receiver {
                    Receiver::This => "this".to_string(),
                    Receiver::Var(v) => v.clone(),
                    Receiver::New(c) => format!("new {}", c),
                };
                write!(f, "call {}.{}({})", recv, method, arg_count)
            }
            Stmt::SuperCall { method } => write!(f, "supercall {}()", method),
            Stmt::New { var, class } => write!(f, "new {} {}", var, class),
            Stmt::IfType {
                var,
                type_name,
                then_body,
                else_body,
            } => {
                write!(f, "if istype({}, {}) {{ {} }}", var, type_name, inline_body(then_body))?;
                if !else_body.is_empty() {
                    write!(f, " else {{ {} }}", inline_body(else_body))?;
                }
                Ok(())
            }
            Stmt::Proceed => f.write_str("proceed"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Vec<Stmt> {
        parse_stmts(&mut Scanner::new(src, 1)).unwrap()
    }

    #[test]
    fn parses_every_form() {
        let body = parse(
            "emit \"contract-check\"\nnew s RectFigure\ncall s.write(0); call new a.B.run(2)\nsupercall execute()\n\
             if istype(s, Storable) { call this.m() } else { emit no }\nproceed",
        );
        assert_eq!(body.len(), 7);
        assert_eq!(body[0], Stmt::Emit("contract-check".into()));
        assert_eq!(
            body[3],
            Stmt::Call {
                receiver: Receiver::New("a.B".into()),
                method: "run".into(),
                arg_count: 2
            }
        );
        assert!(matches!(&body[5], Stmt::IfType { then_body, else_body, .. }
            if then_body.len() == 1 && else_body.len() == 1));
    }

    #[test]
    fn display_reparses() {
        let src = "emit x; if istype(v, T) { emit \"a b\"; if istype(v, U) { proceed } } else { call this.m(1) }";
        let body = parse(src);
        let again = parse(&inline_body(&body));
        assert_eq!(body, again);
    }

    #[test]
    fn walk_paths() {
        let body = parse("emit a\nif istype(v, T) { emit b } else { emit c }");
        let mut paths = Vec::new();
        Stmt::walk(&body, &mut |p, _| paths.push(p.to_string()));
        assert_eq!(paths, vec!["0", "1", "1.then.0", "1.else.0"]);
    }

    #[test]
    fn unknown_statement_reports_line() {
        let err = parse_stmts(&mut Scanner::new("emit a\n\n  jump x", 10)).unwrap_err();
        assert_eq!(err.line, 12);
    }
}
