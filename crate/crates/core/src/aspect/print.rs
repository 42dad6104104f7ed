//! `.apa` text rendering; `load_aspects` reads it back unchanged.

use std::fmt;

use super::AspectDef;
use crate::model::stmt::inline_body;
use crate::pointcut::Param;

fn params(list: &[Param]) -> String {
    list.iter()
        .map(|p| format!("{} {}", p.type_name, p.name))
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for AspectDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_abstract {
            f.write_str("abstract ")?;
        }
        write!(f, "aspect {}", self.name)?;
        if self.privileged {
            f.write_str(" privileged")?;
        }
        writeln!(f)?;
        for dp in &self.declare_parents {
            writeln!(f, "  declare parents: {} implements {}", dp.pattern, dp.interface)?;
        }
        for intro in &self.introductions {
            let m = &intro.method;
            writeln!(
                f,
                "  introduce {} {}.{}({}) {{ {} }}",
                m.return_type,
                intro.target,
                m.name,
                m.param_types.join(", "),
                inline_body(&m.body)
            )?;
        }
        for pc in &self.pointcuts {
            writeln!(f, "  pointcut {}({}): {}", pc.name, params(&pc.params), pc.expr)?;
        }
        for adv in &self.advice {
            writeln!(
                f,
                "  {}({}): {} {{ {} }}",
                adv.kind.keyword(),
                params(&adv.params),
                adv.pointcut,
                inline_body(&adv.body)
            )?;
        }
        if let Some(list) = &self.precedence {
            let names: Vec<String> = list.iter().map(|n| n.text()).collect();
            writeln!(f, "  declare precedence: {}", names.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::load_aspects;

    #[test]
    fn print_then_load_is_identity() {
        let src = "\
abstract aspect Undo privileged
  declare parents: *Command implements Undoable
  introduce void PasteCommand.undo() { emit undo; if istype(x, Foo) { emit a } else { emit b } }
  pointcut exec(): execution(void *Command.execute())
  around(): exec() { emit pre; proceed; emit post }
  after-returning(): exec() && cflow(call(* Clipboard.getContents())) { emit x }
  declare precedence: Undo, *
";
        let a = load_aspects(src).unwrap();
        let printed = a.iter().map(|x| x.to_string()).collect::<String>();
        assert_eq!(load_aspects(&printed).unwrap(), a);
    }
}
