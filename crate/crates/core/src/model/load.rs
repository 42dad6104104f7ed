//! Reader for the line-oriented `.apm` model format.

use std::collections::{BTreeMap, BTreeSet};

use super::stmt::parse_stmts;
use super::{
    is_builtin, simple_name, FieldDecl, MethodDecl, ModelError, Origin, ProgramModel, Receiver,
    Stmt, TypeDecl, TypeKind,
};
use crate::lex::{ScanError, Scanner};
use crate::scenario::parse_scenarios;

struct RawMethod {
    line: usize,
    name: String,
    return_type: String,
    param_types: Vec<String>,
    is_abstract: bool,
    body_line: usize,
    body: Vec<String>,
}

struct RawType {
    line: usize,
    package: Option<String>,
    name: Option<String>,
    kind: TypeKind,
    extends: Vec<String>,
    implements: Vec<String>,
    enclosing: Option<String>,
    fields: Vec<(usize, String, String)>,
    methods: Vec<RawMethod>,
}

enum Block {
    None,
    Type(usize),
    Scenario,
}

fn syntax(e: ScanError) -> ModelError {
    ModelError::Syntax {
        line: e.line,
        message: e.message,
    }
}

fn strip_comment(line: &str) -> &str {
    line.find('#').map_or(line, |i| &line[..i])
}

fn indent_of(line: &str, lineno: usize) -> Result<usize, ModelError> {
    let trimmed = line.trim_start_matches(' ');
    if trimmed.starts_with('\t') {
        return Err(ModelError::Syntax {
            line: lineno,
            message: "tabs are not allowed for indentation".into(),
        });
    }
    Ok(line.len() - trimmed.len())
}

/// Loads and validates a model from `.apm` source text.
pub fn load_model(text: &str) -> Result<ProgramModel, ModelError> {
    let mut raw: Vec<RawType> = Vec::new();
    let mut scenario_text = String::new();
    let mut package: Option<String> = None;
    let mut block = Block::None;

    for (idx, full_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let code = strip_comment(full_line);
        if code.trim().is_empty() {
            if let Block::Scenario = block {
                scenario_text.push('\n');
            }
            continue;
        }
        let indent = indent_of(full_line, lineno)?;
        if indent == 0 {
            if let Block::Scenario = block {
                scenario_text.push('\n');
            }
            let mut sc = Scanner::new(code, lineno);
            if sc.eat_keyword("package") {
                package = Some(sc.dotted().map_err(syntax)?.join("."));
                expect_end(&mut sc)?;
                block = Block::None;
            } else if sc.eat_keyword("interface") || sc.eat_keyword("class") {
                let kind = if code.trim_start().starts_with("interface") {
                    TypeKind::Interface
                } else {
                    TypeKind::Class
                };
                raw.push(parse_type_header(&mut sc, kind, package.clone(), lineno)?);
                block = Block::Type(raw.len() - 1);
            } else if code.trim_start().starts_with("scenario") {
                // keep line numbers aligned for scenario diagnostics
                while scenario_text.lines().count() + 1 < lineno {
                    scenario_text.push('\n');
                }
                scenario_text.push_str(full_line);
                scenario_text.push('\n');
                block = Block::Scenario;
            } else {
                return Err(ModelError::Syntax {
                    line: lineno,
                    message: format!("unexpected `{}`", code.trim()),
                });
            }
            continue;
        }
        match block {
            Block::None => {
                return Err(ModelError::Syntax {
                    line: lineno,
                    message: "indented line outside a declaration".into(),
                })
            }
            Block::Scenario => {
                while scenario_text.lines().count() + 1 < lineno {
                    scenario_text.push('\n');
                }
                scenario_text.push_str(full_line);
                scenario_text.push('\n');
            }
            Block::Type(ti) => {
                let decl = &mut raw[ti];
                if indent == 2 {
                    parse_member(decl, code, lineno)?;
                } else if indent >= 4 {
                    let method = decl.methods.last_mut().ok_or(ModelError::Syntax {
                        line: lineno,
                        message: "statement outside a method".into(),
                    })?;
                    if method.body.is_empty() {
                        method.body_line = lineno;
                    }
                    while method.body_line + method.body.len() < lineno {
                        method.body.push(String::new());
                    }
                    method.body.push(full_line.to_string());
                } else {
                    return Err(ModelError::Syntax {
                        line: lineno,
                        message: "members are indented by two spaces".into(),
                    });
                }
            }
        }
    }

    let scenarios = if scenario_text.trim().is_empty() {
        Vec::new()
    } else {
        parse_scenarios(&scenario_text).map_err(|e| ModelError::Syntax {
            line: e.line,
            message: e.message,
        })?
    };
    build(raw, scenarios)
}

fn expect_end(sc: &mut Scanner) -> Result<(), ModelError> {
    if sc.at_end() {
        Ok(())
    } else {
        let rest = sc.rest();
        Err(ModelError::Syntax {
            line: sc.line(),
            message: format!("unexpected trailing `{}`", rest.trim()),
        })
    }
}

fn name_list(sc: &mut Scanner) -> Result<Vec<String>, ModelError> {
    let mut out = vec![sc.dotted().map_err(syntax)?.join(".")];
    while sc.eat(',') {
        out.push(sc.dotted().map_err(syntax)?.join("."));
    }
    Ok(out)
}

fn parse_type_header(
    sc: &mut Scanner,
    kind: TypeKind,
    package: Option<String>,
    line: usize,
) -> Result<RawType, ModelError> {
    let mut decl = RawType {
        line,
        package,
        name: None,
        kind,
        extends: Vec::new(),
        implements: Vec::new(),
        enclosing: None,
        fields: Vec::new(),
        methods: Vec::new(),
    };
    let starts_clause = |sc: &mut Scanner| {
        sc.skip_trivia();
        ["extends", "implements", "anonymous"].iter().any(|k| {
            let probe = sc.rest_peek(k.len() + 1);
            probe.starts_with(k) && probe[k.len()..].chars().all(char::is_whitespace)
        })
    };
    if !starts_clause(sc) {
        decl.name = Some(sc.ident().map_err(syntax)?);
    }
    loop {
        if sc.eat_keyword("extends") {
            decl.extends = name_list(sc)?;
        } else if sc.eat_keyword("implements") {
            decl.implements = name_list(sc)?;
        } else if sc.eat_keyword("anonymous") {
            if !sc.eat_keyword("in") {
                return sc.error("expected `anonymous in <Enclosing>`").map_err(syntax);
            }
            decl.enclosing = Some(sc.dotted().map_err(syntax)?.join("."));
        } else {
            break;
        }
    }
    expect_end(sc)?;
    if kind == TypeKind::Class && decl.extends.len() > 1 {
        return Err(ModelError::Syntax {
            line,
            message: "a class extends at most one class".into(),
        });
    }
    if kind == TypeKind::Interface && (!decl.implements.is_empty() || decl.enclosing.is_some()) {
        return Err(ModelError::Syntax {
            line,
            message: "interfaces only take an `extends` list".into(),
        });
    }
    if decl.name.is_none() && decl.enclosing.is_none() {
        return Err(ModelError::Syntax {
            line,
            message: "missing type name".into(),
        });
    }
    Ok(decl)
}

fn parse_member(decl: &mut RawType, code: &str, line: usize) -> Result<(), ModelError> {
    let mut sc = Scanner::new(code, line);
    if sc.eat_keyword("field") {
        let ty = sc.dotted().map_err(syntax)?.join(".");
        let name = sc.ident().map_err(syntax)?;
        expect_end(&mut sc)?;
        decl.fields.push((line, ty, name));
        return Ok(());
    }
    if sc.eat_keyword("method") {
        let is_abstract = sc.eat_keyword("abstract") || decl.kind == TypeKind::Interface;
        let return_type = sc.dotted().map_err(syntax)?.join(".");
        let name = sc.ident().map_err(syntax)?;
        sc.expect('(').map_err(syntax)?;
        let mut param_types = Vec::new();
        if !sc.eat(')') {
            param_types = name_list(&mut sc)?;
            sc.expect(')').map_err(syntax)?;
        }
        expect_end(&mut sc)?;
        decl.methods.push(RawMethod {
            line,
            name,
            return_type,
            param_types,
            is_abstract,
            body_line: line + 1,
            body: Vec::new(),
        });
        return Ok(());
    }
    Err(ModelError::Syntax {
        line,
        message: format!("unexpected member `{}`", code.trim()),
    })
}

struct Resolver<'a> {
    names: &'a BTreeSet<String>,
}

impl Resolver<'_> {
    fn resolve(&self, name: &str, package: Option<&str>, location: &str) -> Result<String, ModelError> {
        if is_builtin(name) || self.names.contains(name) {
            return Ok(name.to_string());
        }
        if let Some(pkg) = package {
            let q = format!("{}.{}", pkg, name);
            if self.names.contains(&q) {
                return Ok(q);
            }
        }
        let hits: Vec<&String> = self.names.iter().filter(|q| simple_name(q) == name).collect();
        match hits.as_slice() {
            [one] => Ok((*one).clone()),
            [] => Err(ModelError::Resolution {
                name: name.to_string(),
                location: location.to_string(),
            }),
            _ => Err(ModelError::Invalid {
                location: location.to_string(),
                message: format!("ambiguous type name `{}`", name),
            }),
        }
    }
}

fn qualify(package: Option<&str>, name: &str) -> String {
    match package {
        Some(p) => format!("{}.{}", p, name),
        None => name.to_string(),
    }
}

fn build(raw: Vec<RawType>, scenarios: Vec<crate::scenario::Scenario>) -> Result<ProgramModel, ModelError> {
    // Named types first; anonymous ones get `<Enclosing>$k` in file order.
    let mut qualified: Vec<Option<String>> = vec![None; raw.len()];
    let mut names = BTreeSet::new();
    for (i, r) in raw.iter().enumerate() {
        if r.enclosing.is_none() {
            let q = qualify(r.package.as_deref(), r.name.as_deref().unwrap_or_default());
            if is_builtin(&q) || !names.insert(q.clone()) {
                return Err(ModelError::Invalid {
                    location: format!("line {}", r.line),
                    message: format!("duplicate type `{}`", q),
                });
            }
            qualified[i] = Some(q);
        }
    }
    let mut anon_counter: BTreeMap<String, usize> = BTreeMap::new();
    for (i, r) in raw.iter().enumerate() {
        if let Some(enc) = &r.enclosing {
            let resolver = Resolver { names: &names };
            let enclosing =
                resolver.resolve(enc, r.package.as_deref(), &format!("line {}", r.line))?;
            let k = anon_counter.entry(enclosing.clone()).or_insert(0);
            *k += 1;
            let q = format!("{}${}", enclosing, k);
            names.insert(q.clone());
            qualified[i] = Some(q);
        }
    }

    let resolver = Resolver { names: &names };
    let mut types = BTreeMap::new();
    for (r, q) in raw.iter().zip(qualified) {
        let q = q.unwrap_or_default();
        let pkg = r.package.as_deref();
        let loc = |what: &str, line: usize| format!("line {} ({} of {})", line, what, q);
        let resolve_all = |list: &[String], what: &str| -> Result<Vec<String>, ModelError> {
            list.iter()
                .map(|n| resolver.resolve(n, pkg, &loc(what, r.line)))
                .collect()
        };
        let supers = resolve_all(&r.extends, "extends")?;
        let implements = resolve_all(&r.implements, "implements")?;
        let (extends, implements) = match r.kind {
            TypeKind::Class => (supers.into_iter().next(), implements),
            TypeKind::Interface => (None, supers),
        };
        let enclosing = match &r.enclosing {
            Some(e) => Some(resolver.resolve(e, pkg, &loc("anonymous", r.line))?),
            None => None,
        };
        let mut fields = Vec::new();
        for (line, ty, name) in &r.fields {
            if fields.iter().any(|f: &FieldDecl| &f.name == name) {
                return Err(ModelError::Invalid {
                    location: loc("field", *line),
                    message: format!("duplicate field `{}`", name),
                });
            }
            fields.push(FieldDecl {
                name: name.clone(),
                type_name: resolver.resolve(ty, pkg, &loc("field", *line))?,
            });
        }
        let mut methods: Vec<MethodDecl> = Vec::new();
        for m in &r.methods {
            let mloc = loc(&format!("method {}", m.name), m.line);
            let return_type = resolver.resolve(&m.return_type, pkg, &mloc)?;
            let param_types = m
                .param_types
                .iter()
                .map(|p| resolver.resolve(p, pkg, &mloc))
                .collect::<Result<Vec<_>, _>>()?;
            let body_text = m.body.join("\n");
            let mut sc = Scanner::new(&body_text, m.body_line);
            let mut body = parse_stmts(&mut sc).map_err(syntax)?;
            if !sc.at_end() {
                return Err(ModelError::Syntax {
                    line: sc.line(),
                    message: "unbalanced `}`".into(),
                });
            }
            if m.is_abstract && !body.is_empty() {
                return Err(ModelError::Invalid {
                    location: mloc,
                    message: "abstract methods have no body".into(),
                });
            }
            resolve_stmts(&mut body, &|n| resolver.resolve(n, pkg, &mloc))?;
            if methods
                .iter()
                .any(|o| o.name == m.name && o.param_types == param_types)
            {
                return Err(ModelError::Invalid {
                    location: mloc,
                    message: format!("duplicate method `{}`", m.name),
                });
            }
            methods.push(MethodDecl {
                name: m.name.clone(),
                return_type,
                param_types,
                is_abstract: m.is_abstract,
                body,
                origin: Origin::Native,
            });
        }
        types.insert(
            q.clone(),
            TypeDecl {
                name: q.clone(),
                kind: r.kind,
                extends,
                implements,
                anonymous: r.enclosing.is_some(),
                enclosing,
                methods,
                fields,
            },
        );
    }

    let model = ProgramModel { types, scenarios };
    model.check_hierarchy()?;
    check_bodies(&model)?;
    Ok(model)
}

pub(crate) fn resolve_stmts(
    body: &mut [Stmt],
    resolve: &dyn Fn(&str) -> Result<String, ModelError>,
) -> Result<(), ModelError> {
    for stmt in body {
        match stmt {
            Stmt::New { class, .. } => *class = resolve(class)?,
            Stmt::Call {
                receiver: Receiver::New(class),
                ..
            } => *class = resolve(class)?,
            Stmt::IfType {
                type_name,
                then_body,
                else_body,
                ..
            } => {
                *type_name = resolve(type_name)?;
                resolve_stmts(then_body, resolve)?;
                resolve_stmts(else_body, resolve)?;
            }
            _ => {}
        }
    }
    Ok(())
}

/// Checks variable scoping, instantiation targets and super calls of every
/// method body.
fn check_bodies(model: &ProgramModel) -> Result<(), ModelError> {
    for decl in model.types.values() {
        for m in &decl.methods {
            let location = format!("{}.{}", decl.name, m.name);
            if Stmt::count_proceeds(&m.body) > 0 {
                return Err(ModelError::Invalid {
                    location,
                    message: "`proceed` is only allowed in around advice".into(),
                });
            }
            let visible = |var: &str| model.field_type(&decl.name, var).is_some();
            check_scope(model, &m.body, &mut Vec::new(), &visible, &location)?;
            let mut err = None;
            Stmt::walk(&m.body, &mut |_, s| {
                if let Stmt::SuperCall { method } = s {
                    let ok = decl
                        .extends
                        .as_deref()
                        .is_some_and(|p| model.class_chain(p).iter().any(|d| d.method(method, None).is_some()));
                    if !ok && err.is_none() {
                        err = Some(ModelError::Invalid {
                            location: location.clone(),
                            message: format!("`supercall {}()` has no superclass method to call", method),
                        });
                    }
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
        }
    }
    Ok(())
}

/// Variables must be bound by an earlier `new` in an enclosing block or be
/// externally visible (fields, advice parameters).
pub(crate) fn check_scope(
    model: &ProgramModel,
    body: &[Stmt],
    scope: &mut Vec<String>,
    visible: &dyn Fn(&str) -> bool,
    location: &str,
) -> Result<(), ModelError> {
    let depth = scope.len();
    let bound = |scope: &Vec<String>, v: &str| scope.iter().any(|s| s == v) || visible(v);
    for stmt in body {
        match stmt {
            Stmt::New { var, class } => {
                check_instantiable(model, class, location)?;
                scope.push(var.clone());
            }
            Stmt::Call { receiver, .. } => match receiver {
                Receiver::Var(v) if !bound(scope, v) => {
                    return Err(ModelError::Invalid {
                        location: location.to_string(),
                        message: format!("variable `{}` is not bound", v),
                    })
                }
                Receiver::New(class) => check_instantiable(model, class, location)?,
                _ => {}
            },
            Stmt::IfType {
                var,
                then_body,
                else_body,
                ..
            } => {
                if !bound(scope, var) {
                    return Err(ModelError::Invalid {
                        location: location.to_string(),
                        message: format!("variable `{}` is not bound", var),
                    });
                }
                check_scope(model, then_body, scope, visible, location)?;
                check_scope(model, else_body, scope, visible, location)?;
            }
            _ => {}
        }
    }
    scope.truncate(depth);
    Ok(())
}

fn check_instantiable(model: &ProgramModel, class: &str, location: &str) -> Result<(), ModelError> {
    match model.get(class) {
        Some(d) if d.is_class() => Ok(()),
        _ => Err(ModelError::Invalid {
            location: location.to_string(),
            message: format!("cannot instantiate `{}`", class),
        }),
    }
}
