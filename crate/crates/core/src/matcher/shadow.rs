//! Static join-point shadows of a model.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ProgramModel, Receiver, Stmt};
use crate::trace::ShadowId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShadowKind {
    Call,
    Execution,
}

impl ShadowKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ShadowKind::Call => "call",
            ShadowKind::Execution => "execution",
        }
    }
}

/// Method signature as seen at a shadow.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub declaring_type: String,
    pub method: String,
    pub arity: usize,
    /// `None` when a call names a method the static type does not declare.
    pub return_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shadow {
    pub id: ShadowId,
    pub kind: ShadowKind,
    pub signature: Signature,
    /// Type whose method body contains the shadow.
    pub enclosing_type: String,
    /// Signature of that enclosing method.
    pub enclosing_method: Signature,
    /// Statement path of a call shadow inside the enclosing body.
    pub site: Option<String>,
    pub is_super: bool,
}

impl fmt::Display for Shadow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}.{}/{}\t",
            self.id.0,
            self.kind.keyword(),
            self.signature.declaring_type,
            self.signature.method,
            self.signature.arity
        )?;
        if let Some(site) = &self.site {
            write!(
                f,
                "{}.{}/{}@{}",
                self.enclosing_type, self.enclosing_method.method, self.enclosing_method.arity, site
            )?;
        }
        Ok(())
    }
}

/// Shadows of a model in deterministic order plus lookup indexes used by
/// the interpreter.
#[derive(Debug, Clone, Default)]
pub struct ShadowTable {
    pub shadows: Vec<Shadow>,
    exec: HashMap<(String, usize), ShadowId>,
    calls: HashMap<(String, usize, String), ShadowId>,
}

impl ShadowTable {
    pub fn build(model: &ProgramModel) -> ShadowTable {
        let mut table = ShadowTable::default();
        for decl in model.types.values() {
            for (mi, m) in decl.methods.iter().enumerate() {
                if m.is_abstract {
                    continue;
                }
                let own = Signature {
                    declaring_type: decl.name.clone(),
                    method: m.name.clone(),
                    arity: m.arity(),
                    return_type: Some(m.return_type.clone()),
                };
                let id = ShadowId(table.shadows.len());
                table.exec.insert((decl.name.clone(), mi), id);
                table.shadows.push(Shadow {
                    id,
                    kind: ShadowKind::Execution,
                    signature: own.clone(),
                    enclosing_type: decl.name.clone(),
                    enclosing_method: own.clone(),
                    site: None,
                    is_super: false,
                });
                let mut locals: Vec<(String, String)> = Vec::new();
                let mut found = Vec::new();
                collect_calls(model, &decl.name, m.body.as_slice(), "", &mut locals, &mut found);
                for (path, static_type, method, arity, is_super) in found {
                    let return_type = model
                        .lookup_method(&static_type, &method, arity)
                        .map(|(_, m)| m.return_type.clone());
                    let id = ShadowId(table.shadows.len());
                    table.calls.insert((decl.name.clone(), mi, path.clone()), id);
                    table.shadows.push(Shadow {
                        id,
                        kind: ShadowKind::Call,
                        signature: Signature {
                            declaring_type: static_type,
                            method,
                            arity,
                            return_type,
                        },
                        enclosing_type: decl.name.clone(),
                        enclosing_method: own.clone(),
                        site: Some(path),
                        is_super,
                    });
                }
            }
        }
        table
    }

    pub fn get(&self, id: ShadowId) -> &Shadow {
        &self.shadows[id.0]
    }

    pub fn len(&self) -> usize {
        self.shadows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shadows.is_empty()
    }

    pub fn execution_of(&self, type_name: &str, method_index: usize) -> Option<ShadowId> {
        self.exec.get(&(type_name.to_string(), method_index)).copied()
    }

    pub fn call_at(&self, type_name: &str, method_index: usize, path: &str) -> Option<ShadowId> {
        self.calls
            .get(&(type_name.to_string(), method_index, path.to_string()))
            .copied()
    }
}

type FoundCall = (String, String, String, usize, bool);

fn collect_calls(
    model: &ProgramModel,
    owner: &str,
    body: &[Stmt],
    prefix: &str,
    locals: &mut Vec<(String, String)>,
    out: &mut Vec<FoundCall>,
) {
    let depth = locals.len();
    for (i, stmt) in body.iter().enumerate() {
        let path = if prefix.is_empty() {
            i.to_string()
        } else {
            format!("{}.{}", prefix, i)
        };
        match stmt {
            Stmt::New { var, class } => locals.push((var.clone(), class.clone())),
            Stmt::Call {
                receiver,
                method,
                arg_count,
            } => {
                let static_type = match receiver {
                    Receiver::This => owner.to_string(),
                    Receiver::New(c) => c.clone(),
                    Receiver::Var(v) => static_var_type(model, owner, locals, v),
                };
                out.push((path, static_type, method.clone(), *arg_count, false));
            }
            Stmt::SuperCall { method } => {
                let parent = model
                    .get(owner)
                    .and_then(|d| d.extends.clone())
                    .unwrap_or_else(|| crate::model::OBJECT.to_string());
                out.push((path, parent, method.clone(), 0, true));
            }
            Stmt::IfType {
                var,
                type_name,
                then_body,
                else_body,
            } => {
                locals.push((var.clone(), type_name.clone()));
                collect_calls(model, owner, then_body, &format!("{}.then", path), locals, out);
                locals.pop();
                collect_calls(model, owner, else_body, &format!("{}.else", path), locals, out);
            }
            Stmt::Emit(_) | Stmt::Proceed => {}
        }
    }
    locals.truncate(depth);
}

fn static_var_type(model: &ProgramModel, owner: &str, locals: &[(String, String)], var: &str) -> String {
    locals
        .iter()
        .rev()
        .find(|(v, _)| v == var)
        .map(|(_, t)| t.clone())
        .or_else(|| model.field_type(owner, var).map(str::to_string))
        .unwrap_or_else(|| crate::model::OBJECT.to_string())
}
