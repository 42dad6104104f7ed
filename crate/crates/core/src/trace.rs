//! Observable execution records and golden-trace comparison.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShadowId(pub usize);

impl fmt::Display for ShadowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A runtime object: its creation class and a per-scenario serial number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectRef {
    pub class: String,
    pub serial: usize,
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.class, self.serial)
    }
}

impl FromStr for ObjectRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (class, serial) = s
            .rsplit_once('#')
            .ok_or_else(|| format!("object `{}` lacks a `#serial`", s))?;
        Ok(ObjectRef {
            class: class.to_string(),
            serial: serial.parse().map_err(|_| format!("bad serial in `{}`", s))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AdviceKind {
    Before,
    After,
    AfterReturning,
    Around,
}

impl AdviceKind {
    pub const ALL: [AdviceKind; 4] = [
        AdviceKind::Before,
        AdviceKind::After,
        AdviceKind::AfterReturning,
        AdviceKind::Around,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            AdviceKind::Before => "before",
            AdviceKind::After => "after",
            AdviceKind::AfterReturning => "after-returning",
            AdviceKind::Around => "around",
        }
    }

    pub fn runs_after(self) -> bool {
        matches!(self, AdviceKind::After | AdviceKind::AfterReturning)
    }
}

impl fmt::Display for AdviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for AdviceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AdviceKind::ALL
            .into_iter()
            .find(|k| k.keyword() == s)
            .ok_or_else(|| format!("unknown advice kind `{}`", s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraceEvent {
    Enter { shadow: ShadowId, this: ObjectRef },
    Exit { shadow: ShadowId },
    Emit { label: String },
    AdviceFired {
        aspect: String,
        index: usize,
        kind: AdviceKind,
        shadow: ShadowId,
    },
    PointcutFired {
        aspect: String,
        pointcut: String,
        shadow: ShadowId,
    },
}

impl TraceEvent {
    pub fn shadow(&self) -> Option<ShadowId> {
        match self {
            TraceEvent::Enter { shadow, .. }
            | TraceEvent::Exit { shadow }
            | TraceEvent::AdviceFired { shadow, .. }
            | TraceEvent::PointcutFired { shadow, .. } => Some(*shadow),
            TraceEvent::Emit { .. } => None,
        }
    }
}

/// Tab-separated, one event per line.
impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Enter { shadow, this } => write!(f, "enter\t{}\t{}", shadow, this),
            TraceEvent::Exit { shadow } => write!(f, "exit\t{}", shadow),
            TraceEvent::Emit { label } => write!(f, "emit\t{}", label),
            TraceEvent::AdviceFired {
                aspect,
                index,
                kind,
                shadow,
            } => write!(f, "advice\t{}\t{}\t{}\t{}", aspect, index, kind, shadow),
            TraceEvent::PointcutFired {
                aspect,
                pointcut,
                shadow,
            } => write!(f, "pointcut\t{}\t{}\t{}", aspect, pointcut, shadow),
        }
    }
}

impl FromStr for TraceEvent {
    type Err = String;

    /// Accepts tabs or runs of spaces between fields.
    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let line = line.trim();
        let (tag, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let fields: Vec<&str> = rest.split_whitespace().collect();
        let shadow = |s: &str| {
            s.parse::<usize>()
                .map(ShadowId)
                .map_err(|_| format!("bad shadow id `{}`", s))
        };
        let arity = |n: usize| {
            if fields.len() == n {
                Ok(())
            } else {
                Err(format!("`{}` takes {} fields, found {}", tag, n, fields.len()))
            }
        };
        match tag {
            "enter" => {
                arity(2)?;
                Ok(TraceEvent::Enter {
                    shadow: shadow(fields[0])?,
                    this: fields[1].parse()?,
                })
            }
            "exit" => {
                arity(1)?;
                Ok(TraceEvent::Exit {
                    shadow: shadow(fields[0])?,
                })
            }
            "emit" => {
                if rest.trim().is_empty() {
                    return Err("`emit` needs a label".into());
                }
                Ok(TraceEvent::Emit {
                    label: rest.trim().to_string(),
                })
            }
            "advice" => {
                arity(4)?;
                Ok(TraceEvent::AdviceFired {
                    aspect: fields[0].to_string(),
                    index: fields[1]
                        .parse()
                        .map_err(|_| format!("bad advice index `{}`", fields[1]))?,
                    kind: fields[2].parse()?,
                    shadow: shadow(fields[3])?,
                })
            }
            "pointcut" => {
                arity(3)?;
                Ok(TraceEvent::PointcutFired {
                    aspect: fields[0].to_string(),
                    pointcut: fields[1].to_string(),
                    shadow: shadow(fields[2])?,
                })
            }
            other => Err(format!("unknown trace event `{}`", other)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}

/// An expected-trace entry: a literal event or the `...` skip marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TracePattern {
    Event(TraceEvent),
    Skip,
}

impl fmt::Display for TracePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TracePattern::Event(e) => e.fmt(f),
            TracePattern::Skip => f.write_str("..."),
        }
    }
}

impl FromStr for TracePattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "..." {
            Ok(TracePattern::Skip)
        } else {
            s.parse().map(TracePattern::Event)
        }
    }
}

impl From<TraceEvent> for TracePattern {
    fn from(e: TraceEvent) -> Self {
        TracePattern::Event(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Pass,
    /// Index of the first actual event no consistent alignment could match
    /// (equal to the trace length when the expectation was not exhausted).
    Diverged { index: usize },
}

impl Comparison {
    pub fn passed(self) -> bool {
        self == Comparison::Pass
    }
}

/// Matches `expected` against the whole of `actual`; `...` absorbs any run of
/// events, including none.
pub fn compare_traces(actual: &[TraceEvent], expected: &[TracePattern]) -> Comparison {
    let n = actual.len();
    let m = expected.len();
    // reach[j][i]: the first j patterns can consume exactly actual[..i]
    let mut reach = vec![vec![false; n + 1]; m + 1];
    reach[0][0] = true;
    for j in 0..m {
        for i in 0..=n {
            if !reach[j][i] {
                continue;
            }
            match &expected[j] {
                TracePattern::Skip => {
                    for k in i..=n {
                        reach[j + 1][k] = true;
                    }
                }
                TracePattern::Event(e) => {
                    if i < n && &actual[i] == e {
                        reach[j + 1][i + 1] = true;
                    }
                }
            }
        }
    }
    if reach[m][n] {
        return Comparison::Pass;
    }
    let furthest = (0..=n)
        .rev()
        .find(|&i| (0..=m).any(|j| reach[j][i]))
        .unwrap_or(0);
    Comparison::Diverged { index: furthest }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emit(l: &str) -> TraceEvent {
        TraceEvent::Emit { label: l.into() }
    }

    #[test]
    fn skip_marker_spans_events() {
        let actual = [emit("A"), emit("B"), emit("C")];
        let expected = [emit("A").into(), TracePattern::Skip, emit("C").into()];
        assert_eq!(compare_traces(&actual, &expected), Comparison::Pass);
    }

    #[test]
    fn first_divergence() {
        assert_eq!(
            compare_traces(&[emit("A")], &[emit("B").into()]),
            Comparison::Diverged { index: 0 }
        );
        assert_eq!(
            compare_traces(&[emit("A"), emit("B")], &[emit("A").into()]),
            Comparison::Diverged { index: 1 }
        );
        assert_eq!(
            compare_traces(&[emit("A")], &[emit("A").into(), emit("B").into()]),
            Comparison::Diverged { index: 1 }
        );
        assert!(compare_traces(&[], &[TracePattern::Skip]).passed());
    }

    #[test]
    fn event_lines_round_trip() {
        let events = vec![
            TraceEvent::Enter {
                shadow: ShadowId(3),
                this: ObjectRef {
                    class: "org.app.App$1".into(),
                    serial: 2,
                },
            },
            TraceEvent::Exit { shadow: ShadowId(3) },
            emit("contract-check"),
            TraceEvent::AdviceFired {
                aspect: "A".into(),
                index: 0,
                kind: AdviceKind::AfterReturning,
                shadow: ShadowId(1),
            },
            TraceEvent::PointcutFired {
                aspect: "A".into(),
                pointcut: "pc".into(),
                shadow: ShadowId(1),
            },
        ];
        for e in events {
            assert_eq!(e.to_string().parse::<TraceEvent>().unwrap(), e);
        }
        assert_eq!(
            "advice  A 0   before 4".parse::<TraceEvent>().unwrap(),
            TraceEvent::AdviceFired {
                aspect: "A".into(),
                index: 0,
                kind: AdviceKind::Before,
                shadow: ShadowId(4)
            }
        );
        assert!("exit".parse::<TraceEvent>().is_err());
    }
}
