//! Miniature object-oriented program model.
//!
//! A [`ProgramModel`] holds type declarations keyed by qualified name. It is
//! immutable once loaded; weaving produces a fresh model.

mod load;
pub mod stmt;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scenario::Scenario;

pub use load::load_model;
pub(crate) use load::{check_scope, resolve_stmts};
pub use stmt::{Receiver, Stmt};

/// Type names that resolve without a declaration.
pub const BUILTIN_TYPES: [&str; 4] = ["void", "Object", "boolean", "String"];

/// Implicit root of every class hierarchy.
pub const OBJECT: &str = "Object";

pub fn is_builtin(name: &str) -> bool {
    BUILTIN_TYPES.contains(&name)
}

/// Last dot-separated segment of a qualified name.
pub fn simple_name(qualified: &str) -> &str {
    qualified.rsplit('.').next().unwrap_or(qualified)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("{location}: cannot resolve type `{name}`")]
    Resolution { name: String, location: String },
    #[error("hierarchy cycle through {}", names.join(" -> "))]
    Cycle { names: Vec<String> },
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("no concrete method `{method}` on the superclass chain of `{class}`")]
    NoSuchMethod { class: String, method: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TypeKind {
    Class,
    Interface,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    Native,
    /// Added by weaving; carries the aspect name.
    Introduced(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDecl {
    pub name: String,
    pub return_type: String,
    pub param_types: Vec<String>,
    pub is_abstract: bool,
    pub body: Vec<Stmt>,
    pub origin: Origin,
}

impl MethodDecl {
    pub fn arity(&self) -> usize {
        self.param_types.len()
    }

    pub fn is_introduced(&self) -> bool {
        matches!(self.origin, Origin::Introduced(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: String,
    pub type_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDecl {
    pub name: String,
    pub kind: TypeKind,
    /// Superclass of a class. Interfaces keep their super-interfaces in
    /// `implements`.
    pub extends: Option<String>,
    pub implements: Vec<String>,
    pub anonymous: bool,
    pub enclosing: Option<String>,
    pub methods: Vec<MethodDecl>,
    pub fields: Vec<FieldDecl>,
}

impl TypeDecl {
    pub fn is_class(&self) -> bool {
        self.kind == TypeKind::Class
    }

    pub fn method(&self, name: &str, arity: Option<usize>) -> Option<&MethodDecl> {
        self.methods
            .iter()
            .find(|m| m.name == name && arity.is_none_or(|a| m.arity() == a))
    }

    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramModel {
    pub types: BTreeMap<String, TypeDecl>,
    pub scenarios: Vec<Scenario>,
}

impl ProgramModel {
    pub fn get(&self, name: &str) -> Option<&TypeDecl> {
        self.types.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        is_builtin(name) || self.types.contains_key(name)
    }

    /// Resolves a possibly-simple type name against the model without a
    /// package context: built-ins, exact qualified names, then a unique
    /// simple-name match.
    pub fn resolve_type(&self, name: &str) -> Option<String> {
        if self.contains(name) {
            return Some(name.to_string());
        }
        let mut found = self.types.keys().filter(|q| simple_name(q) == name);
        match (found.next(), found.next()) {
            (Some(q), None) => Some(q.clone()),
            _ => None,
        }
    }

    /// Extends target (or the implicit `Object`) followed by implemented
    /// interfaces, in declaration order.
    pub fn immediate_supertypes(&self, name: &str) -> Result<Vec<String>, ModelError> {
        if is_builtin(name) {
            return Ok(if name == OBJECT || name == "void" {
                Vec::new()
            } else {
                vec![OBJECT.to_string()]
            });
        }
        let decl = self
            .get(name)
            .ok_or_else(|| ModelError::UnknownType(name.to_string()))?;
        let mut out = Vec::new();
        match (&decl.extends, decl.kind) {
            (Some(parent), _) => out.push(parent.clone()),
            (None, TypeKind::Class) => out.push(OBJECT.to_string()),
            (None, TypeKind::Interface) => {}
        }
        out.extend(decl.implements.iter().cloned());
        Ok(out)
    }

    /// All proper supertypes reachable through extends/implements edges.
    pub fn supertypes_closure(&self, name: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<String> = self
            .immediate_supertypes(name)
            .unwrap_or_default()
            .into_iter()
            .collect();
        while let Some(next) = queue.pop_front() {
            if next == name || !seen.insert(next.clone()) {
                continue;
            }
            queue.extend(self.immediate_supertypes(&next).unwrap_or_default());
        }
        seen
    }

    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        sub == sup || self.supertypes_closure(sub).contains(sup)
    }

    /// Every type that reaches `name` through extends/implements edges,
    /// including `name` itself.
    pub fn subtypes_transitive(&self, name: &str) -> Result<BTreeSet<String>, ModelError> {
        if !self.contains(name) {
            return Err(ModelError::UnknownType(name.to_string()));
        }
        let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for tname in self.types.keys() {
            for sup in self.immediate_supertypes(tname)? {
                children.entry(sup).or_default().push(tname.clone());
            }
        }
        let mut out = BTreeSet::from([name.to_string()]);
        let mut queue = VecDeque::from([name.to_string()]);
        while let Some(next) = queue.pop_front() {
            for child in children.get(&next).into_iter().flatten() {
                if out.insert(child.clone()) {
                    queue.push_back(child.clone());
                }
            }
        }
        Ok(out)
    }

    /// Superclass chain starting at `class` itself, excluding `Object`.
    pub fn class_chain(&self, class: &str) -> Vec<&TypeDecl> {
        let mut out = Vec::new();
        let mut cursor = self.get(class);
        while let Some(decl) = cursor {
            if out.iter().any(|d: &&TypeDecl| d.name == decl.name) {
                break;
            }
            out.push(decl);
            cursor = decl.extends.as_deref().and_then(|p| self.get(p));
        }
        out
    }

    /// Walks the superclass chain from `runtime_class` and returns the first
    /// concrete method with the given name (and arity, when given).
    pub fn resolve_dispatch(
        &self,
        runtime_class: &str,
        method: &str,
        arity: Option<usize>,
    ) -> Result<(String, &MethodDecl), ModelError> {
        if !self.types.contains_key(runtime_class) {
            return Err(ModelError::UnknownType(runtime_class.to_string()));
        }
        self.class_chain(runtime_class)
            .into_iter()
            .find_map(|decl| {
                decl.methods
                    .iter()
                    .find(|m| {
                        m.name == method
                            && !m.is_abstract
                            && arity.is_none_or(|a| m.arity() == a)
                    })
                    .map(|m| (decl.name.clone(), m))
            })
            .ok_or_else(|| ModelError::NoSuchMethod {
                class: runtime_class.to_string(),
                method: method.to_string(),
            })
    }

    /// Finds a method declaration visible on `type_name` through any
    /// supertype edge, concrete or abstract. Used for static signatures.
    pub fn lookup_method(&self, type_name: &str, method: &str, arity: usize) -> Option<(String, &MethodDecl)> {
        std::iter::once(type_name.to_string())
            .chain(self.supertypes_closure(type_name))
            .find_map(|t| {
                let decl = self.get(&t)?;
                decl.method(method, Some(arity)).map(|m| (t.clone(), m))
            })
    }

    /// Declared type of a field visible from `class` (own or inherited).
    pub fn field_type(&self, class: &str, field: &str) -> Option<&str> {
        self.class_chain(class)
            .into_iter()
            .find_map(|d| d.field(field).map(|f| f.type_name.as_str()))
    }

    /// A class is abstract when some method name on its chain has no
    /// concrete implementation.
    pub fn is_abstract_class(&self, class: &str) -> bool {
        let Some(decl) = self.get(class) else {
            return false;
        };
        if !decl.is_class() {
            return true;
        }
        self.class_chain(class).iter().any(|d| {
            d.methods.iter().any(|m| {
                m.is_abstract && self.resolve_dispatch(class, &m.name, Some(m.arity())).is_err()
            })
        })
    }

    pub fn concrete_classes(&self) -> impl Iterator<Item = &TypeDecl> {
        self.types
            .values()
            .filter(|d| d.is_class() && !self.is_abstract_class(&d.name))
    }

    /// Enclosing types of an anonymous class, innermost first.
    pub fn enclosing_chain(&self, name: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut cursor = self.get(name).and_then(|d| d.enclosing.clone());
        while let Some(enc) = cursor {
            if out.contains(&enc) {
                break;
            }
            cursor = self.get(&enc).and_then(|d| d.enclosing.clone());
            out.push(enc);
        }
        out
    }

    /// Stable content hash used to detect stale logs and baselines.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("{:?}", self.types).as_bytes());
        hex(&hasher.finalize())
    }

    /// Re-checks hierarchy invariants; used after loading and after weaving.
    pub fn check_hierarchy(&self) -> Result<(), ModelError> {
        for decl in self.types.values() {
            if let Some(parent) = &decl.extends {
                let pdecl = self.get(parent).ok_or_else(|| ModelError::Resolution {
                    name: parent.clone(),
                    location: format!("extends clause of {}", decl.name),
                })?;
                if pdecl.kind != decl.kind {
                    return Err(ModelError::Invalid {
                        location: decl.name.clone(),
                        message: format!("cannot extend `{}` of a different kind", parent),
                    });
                }
                if pdecl.anonymous {
                    return Err(ModelError::Invalid {
                        location: decl.name.clone(),
                        message: format!("cannot extend anonymous class `{}`", parent),
                    });
                }
            }
            for iface in &decl.implements {
                match self.get(iface) {
                    Some(d) if d.kind == TypeKind::Interface => {}
                    Some(_) => {
                        return Err(ModelError::Invalid {
                            location: decl.name.clone(),
                            message: format!("`{}` is not an interface", iface),
                        })
                    }
                    None => {
                        return Err(ModelError::Resolution {
                            name: iface.clone(),
                            location: format!("supertypes of {}", decl.name),
                        })
                    }
                }
            }
        }
        if let Some(cycle) = self.find_cycle() {
            return Err(ModelError::Cycle { names: cycle });
        }
        Ok(())
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        fn visit(
            model: &ProgramModel,
            node: &str,
            marks: &mut BTreeMap<String, Mark>,
            path: &mut Vec<String>,
        ) -> Option<Vec<String>> {
            match marks.get(node) {
                Some(Mark::Done) => return None,
                Some(Mark::Open) => {
                    let start = path.iter().position(|p| p == node).unwrap_or(0);
                    let mut cycle = path[start..].to_vec();
                    cycle.push(node.to_string());
                    return Some(cycle);
                }
                None => {}
            }
            marks.insert(node.to_string(), Mark::Open);
            path.push(node.to_string());
            let decl = model.get(node)?;
            for sup in decl.extends.iter().chain(decl.implements.iter()) {
                if model.types.contains_key(sup) {
                    if let Some(c) = visit(model, sup, marks, path) {
                        return Some(c);
                    }
                }
            }
            path.pop();
            marks.insert(node.to_string(), Mark::Done);
            None
        }
        let mut marks = BTreeMap::new();
        for name in self.types.keys() {
            let mut path = Vec::new();
            if let Some(c) = visit(self, name, &mut marks, &mut path) {
                return Some(c);
            }
        }
        None
    }
}

impl fmt::Display for TypeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TypeKind::Class => "class",
            TypeKind::Interface => "interface",
        })
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(src: &str) -> ProgramModel {
        load_model(src).expect("model loads")
    }

    #[test]
    fn object_is_root() {
        let m = model("class A\n");
        assert_eq!(m.immediate_supertypes("A").unwrap(), vec!["Object"]);
        assert!(m.immediate_supertypes("Object").unwrap().is_empty());
    }

    #[test]
    fn supertypes_in_declaration_order() {
        let m = model("interface I1\ninterface I2\nclass C\nclass D extends C implements I1, I2\n");
        assert_eq!(m.immediate_supertypes("D").unwrap(), vec!["C", "I1", "I2"]);
        assert!(m.immediate_supertypes("I1").unwrap().is_empty());
        assert!(matches!(
            m.immediate_supertypes("Nope"),
            Err(ModelError::UnknownType(_))
        ));
    }

    #[test]
    fn dispatch_walks_superclass_chain() {
        let src = "\
class P
  method void m()
    emit p
class C extends P
class A
  method abstract void m()
class B extends A
";
        let m = model(src);
        let (decl, method) = m.resolve_dispatch("C", "m", None).unwrap();
        assert_eq!(decl, "P");
        assert_eq!(method.body, vec![Stmt::Emit("p".into())]);
        assert!(matches!(
            m.resolve_dispatch("B", "m", None),
            Err(ModelError::NoSuchMethod { .. })
        ));
        assert!(m.is_abstract_class("B"));
        assert!(!m.is_abstract_class("C"));
    }

    #[test]
    fn leaf_subtypes_is_itself() {
        let m = model("class A\nclass B extends A\n");
        assert_eq!(m.subtypes_transitive("B").unwrap(), BTreeSet::from(["B".to_string()]));
        assert_eq!(m.subtypes_transitive("A").unwrap().len(), 2);
    }
}
