use super::{
    BindArg, MethodPattern, NamePattern, ParamPattern, PointcutError, PointcutExpr, Primitive,
    TypePattern, TypeSegment,
};

/// Primitive designators this language deliberately does not support.
const UNSUPPORTED: [&str; 11] = [
    "cflowbelow",
    "args",
    "get",
    "set",
    "if",
    "handler",
    "initialization",
    "preinitialization",
    "staticinitialization",
    "adviceexecution",
    "annotation",
];

type PResult<T> = Result<T, PointcutError>;

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

/// Parses a pointcut expression. Precedence is `!` over `&&` over `||`;
/// binary operators associate to the left.
pub fn parse_pointcut(text: &str) -> PResult<PointcutExpr> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    let expr = p.or_expr()?;
    p.ws();
    if p.pos < p.chars.len() {
        return p.fail(&["`&&`", "`||`", "end of input"]);
    }
    Ok(expr)
}

/// Parses a standalone type pattern such as `org..*Figure+`.
pub fn parse_type_pattern(text: &str) -> PResult<TypePattern> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    p.ws();
    let t = p.type_pattern()?;
    p.ws();
    if p.pos < p.chars.len() {
        return p.fail(&["end of input"]);
    }
    Ok(t)
}

impl Parser {
    fn fail<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(PointcutError::Syntax {
            position: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn eat_str(&mut self, s: &str) -> bool {
        self.ws();
        let n = s.chars().count();
        if self.pos + n <= self.chars.len() && self.chars[self.pos..self.pos + n].iter().copied().eq(s.chars()) {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> PResult<()> {
        if self.eat_str(s) {
            Ok(())
        } else {
            self.fail(&[&format!("`{}`", s)])
        }
    }

    fn or_expr(&mut self) -> PResult<PointcutExpr> {
        let mut left = self.and_expr()?;
        while self.eat_str("||") {
            let right = self.and_expr()?;
            left = PointcutExpr::or(left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> PResult<PointcutExpr> {
        let mut left = self.unary()?;
        while self.eat_str("&&") {
            let right = self.unary()?;
            left = PointcutExpr::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> PResult<PointcutExpr> {
        if self.eat_str("!") {
            return Ok(PointcutExpr::not(self.unary()?));
        }
        self.atom()
    }

    fn ident(&mut self) -> Option<String> {
        self.ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '$') {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.chars[start..self.pos].iter().collect())
    }

    fn atom(&mut self) -> PResult<PointcutExpr> {
        if self.eat_str("(") {
            let inner = self.or_expr()?;
            self.expect(")")?;
            return Ok(inner);
        }
        let start = {
            self.ws();
            self.pos
        };
        let Some(word) = self.ident() else {
            return self.fail(&["`(`", "`!`", "primitive pointcut", "pointcut name"]);
        };
        if UNSUPPORTED.contains(&word.as_str()) {
            self.pos = start;
            return self.fail(&["supported primitive (call, execution, within, withincode, this, target, cflow)"]);
        }
        self.expect("(")?;
        let expr = match word.as_str() {
            "call" => PointcutExpr::Prim(Primitive::Call(self.method_pattern()?)),
            "execution" => PointcutExpr::Prim(Primitive::Execution(self.method_pattern()?)),
            "withincode" => PointcutExpr::Prim(Primitive::Withincode(self.method_pattern()?)),
            "within" => PointcutExpr::Prim(Primitive::Within(self.type_pattern()?)),
            "this" => PointcutExpr::Prim(Primitive::This(self.bind_arg()?)),
            "target" => PointcutExpr::Prim(Primitive::Target(self.bind_arg()?)),
            "cflow" => PointcutExpr::Prim(Primitive::Cflow(Box::new(self.or_expr()?))),
            _ => {
                let mut args = Vec::new();
                self.ws();
                if self.peek() != Some(')') {
                    loop {
                        match self.ident() {
                            Some(a) => args.push(a),
                            None => return self.fail(&["argument name"]),
                        }
                        if !self.eat_str(",") {
                            break;
                        }
                    }
                }
                PointcutExpr::Named { name: word, args }
            }
        };
        self.expect(")")?;
        Ok(expr)
    }

    /// Binding variables are bare identifiers starting with a lowercase
    /// letter; anything else is a type pattern.
    fn bind_arg(&mut self) -> PResult<BindArg> {
        self.ws();
        let save = self.pos;
        if let Some(word) = self.ident() {
            self.ws();
            let bare = !matches!(self.peek(), Some('.') | Some('+') | Some('*'));
            if bare && word.chars().next().is_some_and(char::is_lowercase) {
                return Ok(BindArg::Var(word));
            }
        }
        self.pos = save;
        Ok(BindArg::Type(self.type_pattern()?))
    }

    fn segment(&mut self) -> PResult<NamePattern> {
        self.ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '$' || c == '*')
        {
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        match NamePattern::parse(&text) {
            Some(n) => Ok(n),
            None => self.fail(&["name pattern"]),
        }
    }

    /// Reads `seg ((. | ..) seg)* [+]` allowing `+` only where `plus_ok`
    /// says so. Returns segments plus the index after which `+` appeared.
    fn dotted(&mut self) -> PResult<(Vec<TypeSegment>, Option<usize>)> {
        let mut segs = vec![TypeSegment::Name(self.segment()?)];
        let mut plus_at = None;
        loop {
            self.ws();
            if self.peek() == Some('+') && plus_at.is_none() {
                self.pos += 1;
                plus_at = Some(segs.len());
                continue;
            }
            if self.peek() == Some('.') && self.peek_at(1) == Some('.') {
                if self.peek_at(2) == Some('.') {
                    return self.fail(&["name pattern"]);
                }
                if plus_at.is_some() {
                    return self.fail(&["`(`", "`)`"]);
                }
                self.pos += 2;
                segs.push(TypeSegment::AnyPackage);
                segs.push(TypeSegment::Name(self.segment()?));
            } else if self.peek() == Some('.') {
                self.pos += 1;
                segs.push(TypeSegment::Name(self.segment()?));
            } else {
                return Ok((segs, plus_at));
            }
        }
    }

    fn type_pattern(&mut self) -> PResult<TypePattern> {
        let (segments, plus_at) = self.dotted()?;
        if let Some(at) = plus_at {
            if at != segments.len() {
                return self.fail(&["`)`"]);
            }
        }
        Ok(TypePattern {
            segments,
            subtypes: plus_at.is_some(),
        })
    }

    fn method_pattern(&mut self) -> PResult<MethodPattern> {
        let return_type = self.type_pattern()?;
        let (mut segs, plus_at) = self.dotted()?;
        let name_start = self.pos;
        if segs.len() < 2 || segs[segs.len() - 2] == TypeSegment::AnyPackage {
            self.pos = name_start;
            return self.fail(&["`<Type>.<name>`"]);
        }
        if let Some(at) = plus_at {
            if at != segs.len() - 1 {
                return self.fail(&["`(`"]);
            }
        }
        let name = match segs.pop() {
            Some(TypeSegment::Name(n)) => n,
            _ => return self.fail(&["method name pattern"]),
        };
        self.expect("(")?;
        let params = if self.eat_str(")") {
            ParamPattern::Empty
        } else if self.eat_str("..") {
            self.expect(")")?;
            ParamPattern::Any
        } else {
            let mut n = 0;
            loop {
                self.type_pattern()?;
                n += 1;
                if !self.eat_str(",") {
                    break;
                }
            }
            self.expect(")")?;
            ParamPattern::Arity(n)
        };
        Ok(MethodPattern {
            return_type,
            declaring_type: TypePattern {
                segments: segs,
                subtypes: plus_at.is_some(),
            },
            name,
            params,
        })
    }
}
