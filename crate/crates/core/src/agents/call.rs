//! Call-expression syntax for the Operator's ACTION line.
//!
//! ```text
//! call  := IDENT [ "(" [ arg ("," arg)* ] ")" ]
//! arg   := [ IDENT "=" ] value
//! value := INTEGER | '"' chars '"' | "'" chars "'"
//! ```
//!
//! Strings accept the JSON escapes plus `\'`.

use std::fmt;

use crate::memory::ArgValue;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallArg {
    pub name: Option<String>,
    pub value: ArgValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallExpr {
    pub name: String,
    pub args: Vec<CallArg>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed call at column {column}: {message}")]
pub struct CallSyntaxError {
    pub column: usize,
    pub message: String,
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, CallSyntaxError> {
        Err(CallSyntaxError {
            column: self.pos + 1,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        if !self.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            return None;
        }
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Some(self.chars[start..self.pos].iter().collect())
    }

    fn value(&mut self) -> Result<ArgValue, CallSyntaxError> {
        self.skip_ws();
        match self.peek() {
            Some(q @ ('"' | '\'')) => {
                self.pos += 1;
                let mut out = String::new();
                loop {
                    match self.peek() {
                        None => return self.err("unterminated string"),
                        Some(c) if c == q => {
                            self.pos += 1;
                            return Ok(ArgValue::Text(out));
                        }
                        Some('\\') => {
                            self.pos += 1;
                            let escaped = match self.peek() {
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some('r') => '\r',
                                Some(c @ ('"' | '\'' | '\\' | '/')) => c,
                                Some('u') => {
                                    let hex: String = self.chars.iter().skip(self.pos + 1).take(4).collect();
                                    match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                                        Some(c) if hex.len() == 4 => {
                                            self.pos += 4;
                                            c
                                        }
                                        _ => return self.err("bad unicode escape"),
                                    }
                                }
                                _ => return self.err("unknown escape"),
                            };
                            out.push(escaped);
                            self.pos += 1;
                        }
                        Some(c) => {
                            out.push(c);
                            self.pos += 1;
                        }
                    }
                }
            }
            Some(c) if c == '-' || c.is_ascii_digit() => {
                let start = self.pos;
                self.pos += 1;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let digits: String = self.chars[start..self.pos].iter().collect();
                match digits.parse() {
                    Ok(n) => Ok(ArgValue::Int(n)),
                    Err(_) => {
                        self.pos = start;
                        self.err(format!("bad integer {digits:?}"))
                    }
                }
            }
            _ => self.err("expected an integer or a quoted string"),
        }
    }

    fn arg(&mut self) -> Result<CallArg, CallSyntaxError> {
        let save = self.pos;
        if let Some(name) = self.ident() {
            if self.eat('=') {
                return Ok(CallArg {
                    name: Some(name),
                    value: self.value()?,
                });
            }
            self.pos = save;
        }
        Ok(CallArg {
            name: None,
            value: self.value()?,
        })
    }
}

pub fn parse_call(text: &str) -> Result<CallExpr, CallSyntaxError> {
    let mut c = Cursor {
        chars: text.chars().collect(),
        pos: 0,
        _src: text,
    };
    let Some(name) = c.ident() else {
        return c.err("expected an action name");
    };
    let mut args = Vec::new();
    if c.eat('(') && !c.eat(')') {
        loop {
            args.push(c.arg()?);
            if c.eat(')') {
                break;
            }
            if !c.eat(',') {
                return c.err("expected ',' or ')'");
            }
        }
    }
    c.skip_ws();
    if c.peek().is_some() {
        return c.err("unexpected trailing text");
    }
    Ok(CallExpr { name, args })
}

impl fmt::Display for CallExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if let Some(n) = &a.name {
                write!(f, "{n}=")?;
            }
            write!(f, "{}", a.value)?;
        }
        f.write_str(")")
    }
}
