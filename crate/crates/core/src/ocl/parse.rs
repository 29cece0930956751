//! Hand-written lexer and recursive-descent parser for the constraint
//! subset. Errors carry a zero-based character offset into the source.

use super::{ArrowOp, BinOp, OclError, OclExpr, UnaryOp};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    // Punctuation and operators.
    Dot,
    Arrow,
    LParen,
    RParen,
    Bar,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    End,
}

struct Lexer {
    chars: Vec<(usize, char)>,
    pos: usize,
}

fn err(at: usize, message: impl Into<String>) -> OclError {
    OclError::Syntax {
        at,
        message: message.into(),
    }
}

impl Lexer {
    fn new(src: &str) -> Lexer {
        Lexer {
            chars: src.char_indices().collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|(_, c)| *c)
    }

    /// Character offset of the current position (not byte offset).
    fn offset(&self) -> usize {
        self.pos
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn next_token(&mut self) -> Result<(usize, Tok), OclError> {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
        let at = self.offset();
        let Some(c) = self.bump() else {
            return Ok((at, Tok::End));
        };
        let tok = match c {
            '.' => Tok::Dot,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '|' => Tok::Bar,
            '=' => Tok::Eq,
            '+' => Tok::Plus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '-' => {
                if self.peek() == Some('>') {
                    self.bump();
                    Tok::Arrow
                } else {
                    Tok::Minus
                }
            }
            '<' => match self.peek() {
                Some('=') => {
                    self.bump();
                    Tok::Le
                }
                Some('>') => {
                    self.bump();
                    Tok::Ne
                }
                _ => Tok::Lt,
            },
            '>' => {
                if self.peek() == Some('=') {
                    self.bump();
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            '\'' => {
                let mut s = String::new();
                loop {
                    match self.bump() {
                        Some('\'') => break,
                        Some('\\') => match self.bump() {
                            Some(e @ ('\'' | '\\')) => s.push(e),
                            Some(e) => {
                                return Err(err(
                                    self.offset() - 1,
                                    format!("unknown escape \\{e}"),
                                ))
                            }
                            None => return Err(err(at, "unterminated string literal")),
                        },
                        Some(ch) => s.push(ch),
                        None => return Err(err(at, "unterminated string literal")),
                    }
                }
                Tok::Str(s)
            }
            d if d.is_ascii_digit() => {
                let mut text = String::from(d);
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    text.push(self.bump().unwrap());
                }
                // A fractional part requires a digit after the dot;
                // otherwise the dot is navigation (e.g. in "1.abs", which
                // later fails as navigation on a non-object).
                if self.peek() == Some('.')
                    && matches!(
                        self.chars.get(self.pos + 1),
                        Some((_, c)) if c.is_ascii_digit()
                    )
                {
                    text.push(self.bump().unwrap());
                    while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                        text.push(self.bump().unwrap());
                    }
                    let x: f64 = text
                        .parse()
                        .map_err(|_| err(at, format!("bad float literal {text}")))?;
                    Tok::Float(x)
                } else {
                    let n: i64 = text
                        .parse()
                        .map_err(|_| err(at, format!("integer literal {text} out of range")))?;
                    Tok::Int(n)
                }
            }
            a if a.is_alphabetic() || a == '_' => {
                let mut text = String::from(a);
                while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
                    text.push(self.bump().unwrap());
                }
                Tok::Ident(text)
            }
            other => return Err(err(at, format!("unexpected character {other:?}"))),
        };
        Ok((at, tok))
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, OclError> {
    let mut lexer = Lexer::new(src);
    let mut toks = Vec::new();
    loop {
        let (at, tok) = lexer.next_token()?;
        let end = tok == Tok::End;
        toks.push((at, tok));
        if end {
            return Ok(toks);
        }
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn at(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), OclError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(err(self.at(), format!("expected {what}")))
        }
    }

    /// implies-expr := or-expr [ "implies" implies-expr ]   (right-assoc)
    fn implies(&mut self) -> Result<OclExpr, OclError> {
        let lhs = self.or()?;
        if matches!(self.peek(), Tok::Ident(w) if w == "implies") {
            self.bump();
            let rhs = self.implies()?;
            return Ok(OclExpr::Binary {
                op: BinOp::Implies,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            });
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<OclExpr, OclError> {
        let mut lhs = self.and()?;
        while matches!(self.peek(), Tok::Ident(w) if w == "or") {
            self.bump();
            let rhs = self.and()?;
            lhs = OclExpr::Binary {
                op: BinOp::Or,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<OclExpr, OclError> {
        let mut lhs = self.comparison()?;
        while matches!(self.peek(), Tok::Ident(w) if w == "and") {
            self.bump();
            let rhs = self.comparison()?;
            lhs = OclExpr::Binary {
                op: BinOp::And,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    /// comparison := additive [ cmp-op additive ]   (non-associative)
    fn comparison(&mut self) -> Result<OclExpr, OclError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        Ok(OclExpr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        })
    }

    fn additive(&mut self) -> Result<OclExpr, OclError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = OclExpr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn multiplicative(&mut self) -> Result<OclExpr, OclError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = OclExpr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn unary(&mut self) -> Result<OclExpr, OclError> {
        if matches!(self.peek(), Tok::Ident(w) if w == "not") {
            self.bump();
            let expr = self.unary()?;
            return Ok(OclExpr::Unary {
                op: UnaryOp::Not,
                expr: Box::new(expr),
            });
        }
        if *self.peek() == Tok::Minus {
            self.bump();
            let expr = self.unary()?;
            return Ok(OclExpr::Unary {
                op: UnaryOp::Neg,
                expr: Box::new(expr),
            });
        }
        self.postfix()
    }

    /// postfix := primary { "." ident | "->" arrow-op }
    fn postfix(&mut self) -> Result<OclExpr, OclError> {
        let mut expr = self.primary()?;
        loop {
            match self.peek() {
                Tok::Dot => {
                    self.bump();
                    let at = self.at();
                    let Tok::Ident(feature) = self.bump() else {
                        return Err(err(at, "expected a feature name after '.'"));
                    };
                    expr = OclExpr::Nav {
                        base: Box::new(expr),
                        feature,
                    };
                }
                Tok::Arrow => {
                    self.bump();
                    let op = self.arrow_op()?;
                    expr = OclExpr::Arrow {
                        base: Box::new(expr),
                        op,
                    };
                }
                _ => return Ok(expr),
            }
        }
    }

    fn arrow_op(&mut self) -> Result<ArrowOp, OclError> {
        let at = self.at();
        let Tok::Ident(name) = self.bump() else {
            return Err(err(at, "expected a collection operation after '->'"));
        };
        self.expect(Tok::LParen, "'('")?;
        let op = match name.as_str() {
            "size" => ArrowOp::Size,
            "isEmpty" => ArrowOp::IsEmpty,
            "notEmpty" => ArrowOp::NotEmpty,
            "includes" => ArrowOp::Includes(Box::new(self.implies()?)),
            "forAll" | "exists" | "select" => {
                let var_at = self.at();
                let Tok::Ident(var) = self.bump() else {
                    return Err(err(var_at, "expected an iterator variable"));
                };
                self.expect(Tok::Bar, "'|'")?;
                let body = Box::new(self.implies()?);
                match name.as_str() {
                    "forAll" => ArrowOp::ForAll { var, body },
                    "exists" => ArrowOp::Exists { var, body },
                    _ => ArrowOp::Select { var, body },
                }
            }
            other => {
                return Err(err(at, format!("unknown collection operation {other}")))
            }
        };
        self.expect(Tok::RParen, "')'")?;
        Ok(op)
    }

    fn primary(&mut self) -> Result<OclExpr, OclError> {
        let at = self.at();
        match self.bump() {
            Tok::Int(n) => Ok(OclExpr::IntLit(n)),
            Tok::Float(x) => Ok(OclExpr::FloatLit(x)),
            Tok::Str(s) => Ok(OclExpr::StrLit(s)),
            Tok::Ident(w) => match w.as_str() {
                "self" => Ok(OclExpr::SelfRef),
                "true" => Ok(OclExpr::BoolLit(true)),
                "false" => Ok(OclExpr::BoolLit(false)),
                "and" | "or" | "not" | "implies" => {
                    Err(err(at, format!("unexpected keyword {w}")))
                }
                _ => Ok(OclExpr::Var(w)),
            },
            Tok::LParen => {
                let inner = self.implies()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::End => Err(err(at, "unexpected end of expression")),
            other => Err(err(at, format!("unexpected token {other:?}"))),
        }
    }
}

/// Parse a constraint expression; no type checking.
pub(super) fn parse(src: &str) -> Result<OclExpr, OclError> {
    let toks = lex(src)?;
    let mut parser = Parser { toks, pos: 0 };
    let expr = parser.implies()?;
    if *parser.peek() != Tok::End {
        return Err(err(parser.at(), "trailing input after expression"));
    }
    Ok(expr)
}
