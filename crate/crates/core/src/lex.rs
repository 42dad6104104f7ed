//! Character scanner shared by the statement, aspect and scenario readers.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanError {
    pub line: usize,
    pub message: String,
}

pub(crate) type ScanResult<T> = Result<T, ScanError>;

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

pub(crate) struct Scanner {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Scanner {
    pub fn new(text: &str, first_line: usize) -> Self {
        Scanner {
            chars: text.chars().collect(),
            pos: 0,
            line: first_line,
        }
    }

    pub fn line(&self) -> usize {
        self.line
    }

    pub fn error<T>(&self, message: impl Into<String>) -> ScanResult<T> {
        Err(ScanError {
            line: self.line,
            message: message.into(),
        })
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
        }
        Some(c)
    }

    /// Skips whitespace, statement separators and `#` comments.
    pub fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() || c == ';' {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    pub fn skip_one(&mut self) {
        self.bump();
    }

    pub fn peek_after_trivia(&mut self) -> Option<char> {
        self.skip_trivia();
        self.peek()
    }

    pub fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_trivia();
        self.pos >= self.chars.len()
    }

    pub fn eat(&mut self, c: char) -> bool {
        self.skip_trivia();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, c: char) -> ScanResult<()> {
        if self.eat(c) {
            Ok(())
        } else {
            let found = self.peek().map_or("end of input".to_string(), |f| format!("`{}`", f));
            self.error(format!("expected `{}`, found {}", c, found))
        }
    }

    /// Consumes `kw` when it appears as a whole identifier.
    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        self.skip_trivia();
        let end = self.pos + kw.chars().count();
        if end > self.chars.len() {
            return false;
        }
        let matches = self.chars[self.pos..end].iter().copied().eq(kw.chars());
        let boundary = self.chars.get(end).is_none_or(|&c| !is_ident_char(c) && c != '-');
        if matches && boundary {
            for _ in 0..kw.chars().count() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    /// Like `eat_keyword` but never consumes.
    pub fn peek_keyword(&mut self, kw: &str) -> bool {
        let (pos, line) = (self.pos, self.line);
        let hit = self.eat_keyword(kw);
        self.pos = pos;
        self.line = line;
        hit
    }

    /// A run of non-whitespace characters.
    pub fn token(&mut self) -> ScanResult<String> {
        self.skip_trivia();
        let mut out = String::new();
        while let Some(c) = self.peek().filter(|c| !c.is_whitespace() && *c != ',' && *c != ';') {
            out.push(c);
            self.bump();
        }
        if out.is_empty() {
            return self.error("expected a token");
        }
        Ok(out)
    }

    /// Raw text up to a `;` outside parentheses (consumed) or up to a line
    /// whose first word is one of `stop_words` (not consumed).
    pub fn raw_clause(&mut self, stop_words: &[&str]) -> String {
        let mut depth = 0usize;
        let mut out = String::new();
        while let Some(c) = self.peek() {
            match c {
                ';' if depth == 0 => {
                    self.bump();
                    break;
                }
                '#' => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                    continue;
                }
                '\n' if depth == 0 => {
                    let (pos, line) = (self.pos, self.line);
                    self.skip_trivia();
                    let stop = self.pos >= self.chars.len() || stop_words.iter().any(|w| self.peek_keyword(w));
                    self.pos = pos;
                    self.line = line;
                    if stop {
                        break;
                    }
                }
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                _ => {}
            }
            out.push(c);
            self.bump();
        }
        out
    }

    pub fn ident(&mut self) -> ScanResult<String> {
        self.skip_trivia();
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if is_ident_char(c) {
                out.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if out.is_empty() {
            let found = self.peek().map_or("end of input".to_string(), |f| format!("`{}`", f));
            return self.error(format!("expected identifier, found {}", found));
        }
        Ok(out)
    }

    /// Dot-separated identifier list, e.g. `org.app.Foo.bar`.
    pub fn dotted(&mut self) -> ScanResult<Vec<String>> {
        let mut parts = vec![self.ident()?];
        while self.peek() == Some('.') {
            self.bump();
            parts.push(self.ident()?);
        }
        Ok(parts)
    }

    pub fn integer(&mut self) -> ScanResult<usize> {
        self.skip_trivia();
        let mut out = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            out.push(c);
            self.bump();
        }
        out.parse().or_else(|_| self.error("expected a non-negative integer"))
    }

    /// A label: a quoted string or a run of characters up to whitespace or a
    /// block delimiter.
    pub fn label(&mut self) -> ScanResult<String> {
        self.skip_trivia();
        if self.peek() == Some('"') {
            self.bump();
            let mut out = String::new();
            loop {
                match self.bump() {
                    Some('"') => return Ok(out),
                    Some('\\') => match self.bump() {
                        Some(c) => out.push(c),
                        None => return self.error("unterminated string"),
                    },
                    Some('\n') | None => return self.error("unterminated string"),
                    Some(c) => out.push(c),
                }
            }
        }
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c.is_whitespace() || matches!(c, '{' | '}' | ';' | '"') {
                break;
            }
            out.push(c);
            self.bump();
        }
        if out.is_empty() {
            return self.error("expected a label");
        }
        Ok(out)
    }

    /// Returns the raw text up to (not including) the first `stop` char found
    /// outside parentheses, consuming it.
    pub fn raw_until(&mut self, stop: char) -> ScanResult<String> {
        let mut depth = 0usize;
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c == stop && depth == 0 {
                return Ok(out);
            }
            match c {
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                _ => {}
            }
            out.push(c);
            self.bump();
        }
        self.error(format!("expected `{}`", stop))
    }

    /// Up to `n` upcoming characters, without consuming them.
    pub fn rest_peek(&self, n: usize) -> String {
        self.chars[self.pos..].iter().take(n).collect()
    }

    pub fn rest(&mut self) -> String {
        let out: String = self.chars[self.pos..].iter().collect();
        while self.bump().is_some() {}
        out
    }
}
