//! Static weaving: declare-parents edges and introduced methods.

use super::{AspectDef, AspectError};
use crate::matcher::match_segments;
use crate::model::{check_scope, resolve_stmts, ModelError, Origin, ProgramModel, Stmt, TypeKind};

/// A woven model together with its aspects, type names resolved against
/// the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Woven {
    pub model: ProgramModel,
    pub aspects: Vec<AspectDef>,
}

pub fn weave_static(model: &ProgramModel, aspects: &[AspectDef]) -> Result<ProgramModel, AspectError> {
    Ok(Woven::new(model, aspects)?.model)
}

impl Woven {
    pub fn new(model: &ProgramModel, aspects: &[AspectDef]) -> Result<Woven, AspectError> {
        let mut resolved = Vec::with_capacity(aspects.len());
        for a in aspects {
            a.validate()?;
            resolved.push(resolve(model, a)?);
        }
        let mut woven = model.clone();
        for a in &resolved {
            for dp in &a.declare_parents {
                let targets: Vec<String> = woven
                    .types
                    .keys()
                    .filter(|t| **t != dp.interface && matches_declared(&woven, &dp.pattern, t))
                    .cloned()
                    .collect();
                for t in targets {
                    let decl = woven.types.get_mut(&t).expect("listed type");
                    if !decl.implements.contains(&dp.interface) {
                        decl.implements.push(dp.interface.clone());
                    }
                }
            }
        }
        woven.check_hierarchy()?;
        for a in &resolved {
            for intro in &a.introductions {
                let decl = woven.types.get_mut(&intro.target).expect("resolved target");
                if decl.method(&intro.method.name, Some(intro.method.arity())).is_some() {
                    return Err(AspectError::IntroductionCollision {
                        aspect: a.name.clone(),
                        target: intro.target.clone(),
                        method: format!("{}/{}", intro.method.name, intro.method.arity()),
                    });
                }
                let mut m = intro.method.clone();
                m.origin = Origin::Introduced(a.name.clone());
                decl.methods.push(m);
            }
        }
        for a in &resolved {
            check_bodies(&woven, a)?;
        }
        Ok(Woven {
            model: woven,
            aspects: resolved,
        })
    }
}

fn matches_declared(model: &ProgramModel, pattern: &crate::pointcut::TypePattern, name: &str) -> bool {
    if match_segments(pattern, name).is_some() {
        return true;
    }
    pattern.subtypes && model.supertypes_closure(name).iter().any(|s| match_segments(pattern, s).is_some())
}

fn resolve(model: &ProgramModel, aspect: &AspectDef) -> Result<AspectDef, AspectError> {
    let mut a = aspect.clone();
    let lookup = |name: &str, location: &str| {
        model.resolve_type(name).ok_or_else(|| AspectError::Resolution {
            aspect: aspect.name.clone(),
            name: name.to_string(),
            location: location.to_string(),
        })
    };
    let stmt_resolver = |location: String| {
        move |name: &str| {
            model.resolve_type(name).ok_or_else(|| ModelError::Resolution {
                name: name.to_string(),
                location: location.clone(),
            })
        }
    };
    for pc in &mut a.pointcuts {
        for p in &mut pc.params {
            p.type_name = lookup(&p.type_name, &format!("pointcut {}", pc.name))?;
        }
    }
    for (i, adv) in a.advice.iter_mut().enumerate() {
        let location = format!("advice {}", i);
        for p in &mut adv.params {
            p.type_name = lookup(&p.type_name, &location)?;
        }
        resolve_stmts(&mut adv.body, &stmt_resolver(format!("aspect {}, {}", aspect.name, location)))?;
    }
    for dp in &mut a.declare_parents {
        dp.interface = lookup(&dp.interface, "declare parents")?;
        if model.get(&dp.interface).map(|d| d.kind) != Some(TypeKind::Interface) {
            return Err(AspectError::Invalid {
                aspect: aspect.name.clone(),
                location: "declare parents".into(),
                message: format!("`{}` is not an interface", dp.interface),
            });
        }
    }
    for intro in &mut a.introductions {
        let location = format!("introduction {}.{}", intro.target, intro.method.name);
        intro.target = lookup(&intro.target, &location)?;
        if !model.types.contains_key(&intro.target) {
            return Err(AspectError::Invalid {
                aspect: aspect.name.clone(),
                location,
                message: "cannot introduce into a built-in type".into(),
            });
        }
        intro.method.return_type = lookup(&intro.method.return_type, &location)?;
        for t in &mut intro.method.param_types {
            *t = lookup(t, &location)?;
        }
        resolve_stmts(&mut intro.method.body, &stmt_resolver(format!("aspect {}, {}", aspect.name, location)))?;
    }
    Ok(a)
}

fn check_bodies(model: &ProgramModel, a: &AspectDef) -> Result<(), AspectError> {
    for (i, adv) in a.advice.iter().enumerate() {
        let location = format!("aspect {}, advice {}", a.name, i);
        let visible = |v: &str| adv.params.iter().any(|p| p.name == v);
        check_scope(model, &adv.body, &mut Vec::new(), &visible, &location)?;
    }
    for intro in &a.introductions {
        let location = format!("aspect {}, introduction {}.{}", a.name, intro.target, intro.method.name);
        let visible = |v: &str| model.field_type(&intro.target, v).is_some();
        check_scope(model, &intro.method.body, &mut Vec::new(), &visible, &location)?;
        let mut bad = None;
        Stmt::walk(&intro.method.body, &mut |_, s| {
            if let Stmt::SuperCall { method } = s {
                let parent = model.get(&intro.target).and_then(|d| d.extends.clone());
                let ok = parent.is_some_and(|p| {
                    model.class_chain(&p).iter().any(|d| d.method(method, None).is_some())
                });
                if !ok {
                    bad = Some(format!("`supercall {}()` has no superclass method to call", method));
                }
            }
        });
        if let Some(message) = bad {
            return Err(AspectError::Invalid {
                aspect: a.name.clone(),
                location,
                message,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aspect::load_aspects;
    use crate::model::load_model;

    const MODEL: &str = "\
package fig
interface Storable
  method void write(Object)
interface Marker
class Figure
  method void draw()
    emit draw
class Rect extends Figure
class Oval extends Figure
";

    #[test]
    fn no_aspects_is_identity() {
        let m = load_model(MODEL).unwrap();
        assert_eq!(weave_static(&m, &[]).unwrap(), m);
    }

    #[test]
    fn parents_and_introductions() {
        let m = load_model(MODEL).unwrap();
        let a = load_aspects(
            "aspect P\n  declare parents: Figure+ implements Storable\n  introduce void Rect.write(Object) { emit rect }\n",
        )
        .unwrap();
        let w = weave_static(&m, &a).unwrap();
        for t in ["fig.Figure", "fig.Rect", "fig.Oval"] {
            assert!(w.is_subtype(t, "fig.Storable"), "{}", t);
        }
        let rect = w.get("fig.Rect").unwrap();
        assert_eq!(rect.methods[0].origin, Origin::Introduced("P".into()));
        assert_eq!(m.get("fig.Rect").unwrap().methods.len(), 0);
    }

    #[test]
    fn collisions_and_cycles() {
        let m = load_model(MODEL).unwrap();
        let a = load_aspects("aspect P\n  introduce void Figure.draw() { emit x }\n").unwrap();
        assert!(matches!(weave_static(&m, &a), Err(AspectError::IntroductionCollision { .. })));
        let m2 = load_model("interface Top\ninterface Sub extends Top\n").unwrap();
        let a = load_aspects("aspect C\n  declare parents: Top implements Sub\n").unwrap();
        assert!(matches!(
            weave_static(&m2, &a),
            Err(AspectError::Model(ModelError::Cycle { .. }))
        ));
    }
}
