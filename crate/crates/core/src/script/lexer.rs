use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CompileError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: u32,
    pub column: u32,
}

impl Pos {
    pub fn error(self, message: impl Into<String>) -> CompileError {
        CompileError {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Let,
    If,
    Else,
    While,
    For,
    In,
    Return,
    Break,
    Continue,
    True,
    False,
    Null,
    /// Operators and delimiters.
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

const SYMBOLS: [&str; 28] = [
    "==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "{", "}", "(", ")", "[", "]", ",", ":", ";", ".", "=", "<", ">",
    "+", "-", "*", "/", "%", "!", "?",
];

struct Lexer<'a> {
    chars: core::iter::Peekable<core::str::Chars<'a>>,
    rest: &'a str,
    line: u32,
    column: u32,
}

impl<'a> Lexer<'a> {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        self.rest = &self.rest[c.len_utf8()..];
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) -> Result<(), CompileError> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.rest.starts_with("//") => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some('/') if self.rest.starts_with("/*") => {
                    let start = self.pos();
                    self.bump();
                    self.bump();
                    loop {
                        if self.rest.starts_with("*/") {
                            self.bump();
                            self.bump();
                            break;
                        }
                        if self.bump().is_none() {
                            return Err(start.error("unterminated block comment"));
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn number(&mut self, pos: Pos) -> Result<Tok, CompileError> {
        let start = self.rest;
        let mut len = 0;
        let mut float = false;
        while let Some(c) = self.peek() {
            let take = c.is_ascii_digit()
                || (c == '.' && !float && self.rest[1..].starts_with(|d: char| d.is_ascii_digit()))
                || ((c == 'e' || c == 'E') && len > 0)
                || ((c == '+' || c == '-') && start[..len].ends_with(['e', 'E']));
            if !take {
                break;
            }
            if c == '.' || c == 'e' || c == 'E' {
                float = true;
            }
            len += 1;
            self.bump();
        }
        let text = &start[..len];
        if float {
            text.parse::<f64>()
                .map(Tok::Float)
                .map_err(|_| pos.error(format!("malformed number '{text}'")))
        } else {
            match text.parse::<i64>() {
                Ok(i) => Ok(Tok::Int(i)),
                Err(_) => text
                    .parse::<f64>()
                    .map(Tok::Float)
                    .map_err(|_| pos.error(format!("malformed number '{text}'"))),
            }
        }
    }

    fn string(&mut self, quote: char, pos: Pos) -> Result<Tok, CompileError> {
        self.bump();
        let mut out = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(pos.error("unterminated string literal"));
            };
            match c {
                c if c == quote => return Ok(Tok::Str(out)),
                '\n' => return Err(pos.error("unterminated string literal")),
                '\\' => {
                    let esc = self.bump().ok_or_else(|| pos.error("unterminated string literal"))?;
                    match esc {
                        'n' => out.push('\n'),
                        't' => out.push('\t'),
                        'r' => out.push('\r'),
                        '0' => out.push('\0'),
                        '\\' | '"' | '\'' => out.push(esc),
                        'u' => {
                            let mut code = 0u32;
                            for _ in 0..4 {
                                let d = self.bump().and_then(|h| h.to_digit(16));
                                code = code * 16 + d.ok_or_else(|| self.pos().error("bad \\u escape"))?;
                            }
                            out.push(char::from_u32(code).ok_or_else(|| self.pos().error("bad \\u escape"))?);
                        }
                        other => return Err(self.pos().error(format!("unknown escape '\\{other}'"))),
                    }
                }
                c => out.push(c),
            }
        }
    }
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "let" | "var" => Tok::Let,
        "if" => Tok::If,
        "else" => Tok::Else,
        "while" => Tok::While,
        "for" => Tok::For,
        "in" => Tok::In,
        "return" => Tok::Return,
        "break" => Tok::Break,
        "continue" => Tok::Continue,
        "true" => Tok::True,
        "false" => Tok::False,
        "null" => Tok::Null,
        _ => return None,
    })
}

pub(crate) fn tokenize(source: &str) -> Result<Vec<Token>, CompileError> {
    let mut lx = Lexer {
        chars: source.chars().peekable(),
        rest: source,
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        lx.skip_trivia()?;
        let pos = lx.pos();
        let Some(c) = lx.peek() else {
            out.push(Token { tok: Tok::Eof, pos });
            return Ok(out);
        };
        let tok = if c.is_ascii_digit() {
            lx.number(pos)?
        } else if c == '"' || c == '\'' {
            lx.string(c, pos)?
        } else if c.is_alphabetic() || c == '_' {
            let mut word = String::new();
            while let Some(c) = lx.peek() {
                if !(c.is_alphanumeric() || c == '_') {
                    break;
                }
                word.push(c);
                lx.bump();
            }
            keyword(&word).unwrap_or(Tok::Ident(word))
        } else if let Some(sym) = SYMBOLS.iter().find(|s| lx.rest.starts_with(**s)) {
            for _ in 0..sym.len() {
                lx.bump();
            }
            Tok::Sym(sym)
        } else {
            return Err(pos.error(format!("unexpected character '{c}'")));
        };
        out.push(Token { tok, pos });
    }
}
