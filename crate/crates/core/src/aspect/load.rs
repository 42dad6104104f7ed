//! Reader for `.apa` aspect files.

use super::{AdviceDef, AspectDef, AspectError, DeclareParents, Introduction, NamedPointcut};
use crate::lex::{ScanError, Scanner};
use crate::model::stmt::parse_stmts;
use crate::model::{MethodDecl, Origin, Stmt};
use crate::pointcut::{parse_pointcut, parse_type_pattern, NamePattern, Param, PointcutExpr};
use crate::trace::AdviceKind;

/// Words that start a new aspect member or a new aspect.
const MEMBER_WORDS: [&str; 11] = [
    "aspect",
    "abstract",
    "privileged",
    "declare",
    "introduce",
    "pointcut",
    "before",
    "after",
    "after-returning",
    "around",
    "}",
];

/// Parsed aspects plus loader warnings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AspectFile {
    pub aspects: Vec<AspectDef>,
    pub warnings: Vec<String>,
}

fn syntax(e: ScanError) -> AspectError {
    AspectError::Syntax {
        line: e.line,
        message: e.message,
    }
}

pub fn load_aspects(text: &str) -> Result<Vec<AspectDef>, AspectError> {
    Ok(parse_aspects(text)?.aspects)
}

pub fn parse_aspects(text: &str) -> Result<AspectFile, AspectError> {
    let mut sc = Scanner::new(text, 1);
    let mut file = AspectFile::default();
    while !sc.at_end() {
        let aspect = parse_aspect(&mut sc, &mut file.warnings)?;
        if file.aspects.iter().any(|a| a.name == aspect.name) {
            return Err(AspectError::Invalid {
                aspect: aspect.name,
                location: "aspect header".into(),
                message: "aspect declared twice".into(),
            });
        }
        aspect.validate()?;
        file.aspects.push(aspect);
    }
    Ok(file)
}

fn parse_aspect(sc: &mut Scanner, warnings: &mut Vec<String>) -> Result<AspectDef, AspectError> {
    let mut privileged = false;
    let mut is_abstract = false;
    loop {
        if sc.eat_keyword("abstract") {
            is_abstract = true;
        } else if sc.eat_keyword("privileged") {
            privileged = true;
        } else {
            break;
        }
    }
    if !sc.eat_keyword("aspect") {
        return Err(syntax(sc.error::<()>("expected `aspect`").unwrap_err()));
    }
    let mut aspect = AspectDef::new(&sc.ident().map_err(syntax)?);
    if sc.eat_keyword("privileged") {
        privileged = true;
    }
    aspect.privileged = privileged;
    aspect.is_abstract = is_abstract;
    let braced = sc.eat('{');
    loop {
        if sc.at_end() {
            if braced {
                return Err(syntax(sc.error::<()>("expected `}`").unwrap_err()));
            }
            break;
        }
        if braced && sc.eat('}') {
            break;
        }
        if ["aspect", "abstract", "privileged"].iter().any(|w| sc.peek_keyword(w)) {
            if braced {
                return Err(syntax(sc.error::<()>("expected `}`").unwrap_err()));
            }
            break;
        }
        parse_member(sc, &mut aspect, warnings)?;
    }
    Ok(aspect)
}

fn parse_params(sc: &mut Scanner) -> Result<Vec<Param>, AspectError> {
    sc.expect('(').map_err(syntax)?;
    let mut out = Vec::new();
    if sc.eat(')') {
        return Ok(out);
    }
    loop {
        let type_name = sc.dotted().map_err(syntax)?.join(".");
        let name = sc.ident().map_err(syntax)?;
        out.push(Param { type_name, name });
        if sc.eat(')') {
            return Ok(out);
        }
        sc.expect(',').map_err(syntax)?;
    }
}

fn parse_expr(text: &str, line: usize) -> Result<PointcutExpr, AspectError> {
    parse_pointcut(text).map_err(|e| AspectError::Syntax {
        line,
        message: format!("in pointcut `{}`: {}", text.trim(), e),
    })
}

fn parse_block(sc: &mut Scanner) -> Result<Vec<Stmt>, AspectError> {
    sc.expect('{').map_err(syntax)?;
    let body = parse_stmts(sc).map_err(syntax)?;
    sc.expect('}').map_err(syntax)?;
    Ok(body)
}

fn skip_balanced(sc: &mut Scanner) -> Result<(), AspectError> {
    let mut depth = 0usize;
    loop {
        match sc.peek() {
            None => return Err(syntax(sc.error::<()>("unterminated block").unwrap_err())),
            Some('{') => depth += 1,
            Some('}') => {
                depth -= 1;
                if depth == 0 {
                    sc.eat('}');
                    return Ok(());
                }
            }
            _ => {}
        }
        sc.skip_one();
    }
}

fn parse_member(sc: &mut Scanner, aspect: &mut AspectDef, warnings: &mut Vec<String>) -> Result<(), AspectError> {
    sc.peek_after_trivia();
    let line = sc.line();
    if sc.eat_keyword("declare") {
        if sc.eat_keyword("parents") {
            sc.expect(':').map_err(syntax)?;
            let pattern_text = sc.token().map_err(syntax)?;
            let pattern = parse_type_pattern(&pattern_text).map_err(|e| AspectError::Syntax {
                line,
                message: format!("in type pattern `{}`: {}", pattern_text, e),
            })?;
            if !(sc.eat_keyword("implements") || sc.eat_keyword("extends")) {
                return Err(syntax(sc.error::<()>("expected `implements`").unwrap_err()));
            }
            let interface = sc.dotted().map_err(syntax)?.join(".");
            aspect.declare_parents.push(DeclareParents { pattern, interface });
        } else if sc.eat_keyword("precedence") {
            sc.expect(':').map_err(syntax)?;
            let mut list = Vec::new();
            loop {
                let tok = sc.token().map_err(syntax)?;
                let pat = NamePattern::parse(&tok).ok_or_else(|| AspectError::Syntax {
                    line,
                    message: format!("bad aspect name pattern `{}`", tok),
                })?;
                list.push(pat);
                if !sc.eat(',') {
                    break;
                }
            }
            if aspect.precedence.is_some() {
                return Err(AspectError::Syntax {
                    line,
                    message: "precedence declared twice in one aspect".into(),
                });
            }
            aspect.precedence = Some(list);
        } else {
            return Err(syntax(sc.error::<()>("expected `parents` or `precedence`").unwrap_err()));
        }
        return Ok(());
    }
    if sc.eat_keyword("introduce") {
        let mut hidden = None;
        for modifier in ["private", "protected", "public"] {
            if sc.eat_keyword(modifier) {
                hidden = (modifier != "public").then_some(modifier);
            }
        }
        if sc.eat_keyword("class") || sc.eat_keyword("interface") {
            let name = sc.ident().map_err(syntax)?;
            warnings.push(format!(
                "line {}: aspect {}: no support for introducing nested classes; `{}` ignored",
                line, aspect.name, name
            ));
            if sc.peek_after_trivia() == Some('{') {
                skip_balanced(sc)?;
            }
            return Ok(());
        }
        if let Some(m) = hidden {
            warnings.push(format!(
                "line {}: aspect {}: {} methods cannot be introduced; introducing as public",
                line, aspect.name, m
            ));
        }
        let return_type = sc.dotted().map_err(syntax)?.join(".");
        let mut path = sc.dotted().map_err(syntax)?;
        if path.len() < 2 {
            return Err(AspectError::Syntax {
                line,
                message: "introduction needs `<Type>.<method>`".into(),
            });
        }
        let name = path.pop().unwrap_or_default();
        let target = path.join(".");
        sc.expect('(').map_err(syntax)?;
        let mut param_types = Vec::new();
        if !sc.eat(')') {
            loop {
                param_types.push(sc.dotted().map_err(syntax)?.join("."));
                if sc.peek_after_trivia().is_some_and(crate::lex::is_ident_char) {
                    sc.ident().map_err(syntax)?;
                }
                if sc.eat(')') {
                    break;
                }
                sc.expect(',').map_err(syntax)?;
            }
        }
        let body = parse_block(sc)?;
        if Stmt::count_proceeds(&body) > 0 {
            return Err(AspectError::Syntax {
                line,
                message: "`proceed` is only allowed in around advice".into(),
            });
        }
        aspect.introductions.push(Introduction {
            target,
            method: MethodDecl {
                name,
                return_type,
                param_types,
                is_abstract: false,
                body,
                origin: Origin::Native,
            },
        });
        return Ok(());
    }
    if sc.eat_keyword("pointcut") {
        let name = sc.ident().map_err(syntax)?;
        let params = parse_params(sc)?;
        sc.expect(':').map_err(syntax)?;
        let text = sc.raw_clause(&MEMBER_WORDS);
        let expr = parse_expr(&text, line)?;
        if aspect.pointcuts.iter().any(|p| p.name == name) {
            return Err(AspectError::DuplicatePointcutName {
                aspect: aspect.name.clone(),
                name,
            });
        }
        aspect.pointcuts.push(NamedPointcut { name, params, expr });
        return Ok(());
    }
    let kind = if sc.eat_keyword("before") {
        AdviceKind::Before
    } else if sc.eat_keyword("after-returning") {
        AdviceKind::AfterReturning
    } else if sc.eat_keyword("after") {
        AdviceKind::After
    } else if sc.eat_keyword("around") {
        AdviceKind::Around
    } else {
        let found = sc.rest_peek(20);
        return Err(AspectError::Syntax {
            line,
            message: format!("expected an aspect member, found `{}`", found.lines().next().unwrap_or("")),
        });
    };
    let params = parse_params(sc)?;
    sc.expect(':').map_err(syntax)?;
    let text = sc.raw_until('{').map_err(syntax)?;
    let pointcut = parse_expr(&text, line)?;
    let body = parse_block(sc)?;
    let proceeds = Stmt::count_proceeds(&body);
    if proceeds > usize::from(kind == AdviceKind::Around) {
        return Err(AspectError::Syntax {
            line,
            message: format!(
                "{} advice may contain {} `proceed`",
                kind.keyword(),
                if kind == AdviceKind::Around { "at most one" } else { "no" }
            ),
        });
    }
    aspect.advice.push(AdviceDef {
        kind,
        params,
        pointcut,
        body,
    });
    Ok(())
}
