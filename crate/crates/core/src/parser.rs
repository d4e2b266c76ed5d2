//! Concrete syntax.
//!
//! ```text
//! program ::= [ctx '|-'] expr
//! ctx     ::= ident ':' type (',' ident ':' type)*
//! expr    ::= '\' ident ':' type '.' expr
//!           | 'if' expr 'then' expr 'else' expr
//!           | atom+ [ '\' ... | 'if' ... ]        -- left-associative application
//! atom    ::= 'tt' | 'ff' | ident | '(' expr ')'
//! type    ::= '2' | type '-o' type | '(' type ')'   -- '-o' is right-associative
//! ```
//!
//! `--` starts a comment that runs to the end of the line.

use std::collections::HashSet;
use std::fmt;

use crate::ast::{free_vars, freshen_with, Context, Expr, Name, Type};

/// Maximum nesting of parentheses, binders and conditionals.
const MAX_NESTING: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// A source file: an optional typing context followed by a term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub context: Context,
    pub expr: Expr,
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.context.is_empty() {
            write!(f, "{} |- ", self.context)?;
        }
        write!(f, "{}", self.expr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(String),
    Tt,
    Ff,
    If,
    Then,
    Else,
    Lambda,
    Colon,
    Dot,
    Comma,
    LParen,
    RParen,
    Arrow,
    Turnstile,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Number(s) => write!(f, "number `{s}`"),
            Tok::Tt => f.write_str("`tt`"),
            Tok::Ff => f.write_str("`ff`"),
            Tok::If => f.write_str("`if`"),
            Tok::Then => f.write_str("`then`"),
            Tok::Else => f.write_str("`else`"),
            Tok::Lambda => f.write_str("`\\`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Arrow => f.write_str("`-o`"),
            Tok::Turnstile => f.write_str("`|-`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut line, mut column) = (1, 1);
    let mut last = Pos { line: 1, column: 1 };
    let mut i = 0;

    let err = |pos: Pos, message: String| ParseError { line: pos.line, column: pos.column, message };

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column };
        if c != '\n' && c != '\r' {
            last = pos;
        }
        // Newlines: "\n", "\r\n" and a lone "\r" all end a line.
        if c == '\n' || c == '\r' {
            if c == '\r' && chars.get(i + 1) == Some(&'\n') {
                i += 1;
            }
            i += 1;
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' && chars[i] != '\r' {
                i += 1;
                column += 1;
            }
            continue;
        }
        let (tok, width) = match c {
            '\\' => (Tok::Lambda, 1),
            ':' => (Tok::Colon, 1),
            '.' => (Tok::Dot, 1),
            ',' => (Tok::Comma, 1),
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '-' if chars.get(i + 1) == Some(&'o') => (Tok::Arrow, 2),
            '|' if chars.get(i + 1) == Some(&'-') => (Tok::Turnstile, 2),
            c if c.is_ascii_digit() => {
                let len = chars[i..].iter().take_while(|c| c.is_ascii_digit()).count();
                (Tok::Number(chars[i..i + len].iter().collect()), len)
            }
            c if is_ident_start(c) => {
                let len = chars[i..].iter().take_while(|c| is_ident_continue(**c)).count();
                let word: String = chars[i..i + len].iter().collect();
                let tok = match word.as_str() {
                    "tt" => Tok::Tt,
                    "ff" => Tok::Ff,
                    "if" => Tok::If,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    _ => Tok::Ident(word),
                };
                (tok, len)
            }
            other => return Err(err(pos, format!("unexpected character {other:?}"))),
        };
        toks.push((tok, pos));
        i += width;
        column += width;
        last = Pos { line, column: column - 1 };
    }
    toks.push((Tok::Eof, last));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    depth: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser { toks: lex(src)?, at: 0, depth: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        tok
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let pos = self.pos();
        Err(ParseError { line: pos.line, column: pos.column, message: message.into() })
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, ParseError> {
        self.error(format!("expected {wanted}, found {}", self.peek()))
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&tok.to_string())
        }
    }

    fn ident(&mut self) -> Result<Name, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(Name::from(s))
            }
            _ => self.unexpected("an identifier"),
        }
    }

    fn nest(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return self.error(format!("nesting deeper than {MAX_NESTING}"));
        }
        Ok(())
    }

    fn eof(&self) -> Result<(), ParseError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.unexpected("end of input")
        }
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        self.nest()?;
        let domain = match self.peek().clone() {
            Tok::Number(n) if n == "2" => {
                self.bump();
                Type::Bool
            }
            Tok::Number(n) => return self.error(format!("unknown type `{n}`; the only base type is `2`")),
            Tok::LParen => {
                self.bump();
                let t = self.ty()?;
                self.expect(Tok::RParen)?;
                t
            }
            _ => return self.unexpected("a type"),
        };
        let t = if *self.peek() == Tok::Arrow {
            self.bump();
            Type::lolli(domain, self.ty()?)
        } else {
            domain
        };
        self.depth -= 1;
        Ok(t)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.nest()?;
        let e = match self.peek() {
            Tok::Lambda => self.lambda()?,
            Tok::If => self.conditional()?,
            _ => self.application()?,
        };
        self.depth -= 1;
        Ok(e)
    }

    fn lambda(&mut self) -> Result<Expr, ParseError> {
        self.expect(Tok::Lambda)?;
        let x = self.ident()?;
        self.expect(Tok::Colon)?;
        let t = self.ty()?;
        self.expect(Tok::Dot)?;
        let body = self.expr()?;
        Ok(Expr::Lam(x, t, Box::new(body)))
    }

    fn conditional(&mut self) -> Result<Expr, ParseError> {
        self.expect(Tok::If)?;
        let c = self.expr()?;
        self.expect(Tok::Then)?;
        let t = self.expr()?;
        self.expect(Tok::Else)?;
        let e = self.expr()?;
        Ok(Expr::ite(c, t, e))
    }

    fn starts_atom(&self) -> bool {
        matches!(self.peek(), Tok::Tt | Tok::Ff | Tok::Ident(_) | Tok::LParen)
    }

    fn application(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.atom()?;
        loop {
            if self.starts_atom() {
                let arg = self.atom()?;
                e = Expr::app(e, arg);
            } else if matches!(self.peek(), Tok::Lambda | Tok::If) {
                // A trailing lambda or conditional extends as far right as possible.
                let arg = self.expr()?;
                return Ok(Expr::app(e, arg));
            } else {
                return Ok(e);
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Tt => {
                self.bump();
                Ok(Expr::True)
            }
            Tok::Ff => {
                self.bump();
                Ok(Expr::False)
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(Expr::Var(Name::from(s)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => self.unexpected("an expression"),
        }
    }

    fn context(&mut self) -> Result<Context, ParseError> {
        let mut ctx = Context::new();
        if *self.peek() == Tok::Turnstile {
            return Ok(ctx);
        }
        loop {
            let pos = self.pos();
            let x = self.ident()?;
            self.expect(Tok::Colon)?;
            let t = self.ty()?;
            if ctx.push(x.clone(), t).is_err() {
                return Err(ParseError {
                    line: pos.line,
                    column: pos.column,
                    message: format!("`{x}` is bound twice in the context"),
                });
            }
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                return Ok(ctx);
            }
        }
    }

    fn has_context_header(&self) -> bool {
        *self.peek() == Tok::Turnstile || (matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Colon)
    }
}

/// Parses a term. The result is freshened: binders are pairwise distinct and
/// distinct from the term's free variables.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.eof()?;
    let mut used: HashSet<Name> = free_vars(&e).into_iter().collect();
    Ok(freshen_with(&e, &mut used))
}

pub fn parse_type(src: &str) -> Result<Type, ParseError> {
    let mut p = Parser::new(src)?;
    let t = p.ty()?;
    p.eof()?;
    Ok(t)
}

/// Parses a source file: `x:2, y:2 |- e`, or just `e` for a closed program.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(src)?;
    let context = if p.has_context_header() {
        let ctx = p.context()?;
        p.expect(Tok::Turnstile)?;
        ctx
    } else {
        Context::new()
    };
    let e = p.expr()?;
    p.eof()?;
    let mut used: HashSet<Name> = free_vars(&e).into_iter().chain(context.domain()).collect();
    Ok(Program { context, expr: freshen_with(&e, &mut used) })
}

/// Like [`parse_expr`], for raw bytes that may not be UTF-8.
pub fn parse_expr_bytes(src: &[u8]) -> Result<Expr, ParseError> {
    match std::str::from_utf8(src) {
        Ok(s) => parse_expr(s),
        Err(e) => {
            let valid = std::str::from_utf8(&src[..e.valid_up_to()]).unwrap_or_default();
            let line = valid.matches('\n').count() + 1;
            let column = valid.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            Err(ParseError { line, column, message: "input is not valid UTF-8".into() })
        }
    }
}
