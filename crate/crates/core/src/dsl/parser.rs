use super::ast::*;
use super::error::DslError;
use super::lexer::{tokenize, Tok};
use super::sampling::Distribution;
use crate::market::Side;

const KEYWORDS: &[&str] = &[
    "avatar", "param", "state", "on", "let", "if", "else", "and", "or", "not", "true", "false",
    "buy", "sell", "int", "real", "bool", "side",
];

/// Words reserved for looping constructs. Handlers are straight-line, so
/// these are rejected wherever a statement may start.
pub const LOOP_KEYWORDS: &[&str] = &["while", "for", "loop", "do", "repeat", "until"];

pub(crate) fn is_reserved(name: &str) -> bool {
    KEYWORDS.contains(&name) || LOOP_KEYWORDS.contains(&name)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

/// Parses avatar source into an unchecked syntax tree. Use
/// [`super::parse`] for parsing plus validation.
pub fn parse_syntax(src: &str) -> Result<AvatarSpec, DslError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
    };
    let spec = p.avatar()?;
    p.expect(&Tok::Eof)?;
    Ok(spec)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn advance(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, DslError> {
        Err(DslError::parse(
            self.span(),
            format!("expected {expected}, found {}", self.peek().describe()),
        ))
    }

    fn expect(&mut self, tok: &Tok) -> Result<Span, DslError> {
        if self.peek() == tok {
            Ok(self.advance().1)
        } else {
            self.error(&tok.describe())
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn eat_word(&mut self, w: &str) -> Result<Span, DslError> {
        if self.is_word(w) {
            Ok(self.advance().1)
        } else {
            self.error(&format!("`{w}`"))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), DslError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                let span = self.advance().1;
                Ok((s, span))
            }
            Tok::Ident(s) => Err(DslError::parse(
                self.span(),
                format!("`{s}` is a reserved word"),
            )),
            _ => self.error("identifier"),
        }
    }

    fn avatar(&mut self) -> Result<AvatarSpec, DslError> {
        self.eat_word("avatar")?;
        let name = match self.advance() {
            (Tok::Str(s), _) => s,
            (t, span) => {
                return Err(DslError::parse(
                    span,
                    format!("expected avatar name string, found {}", t.describe()),
                ))
            }
        };
        self.expect(&Tok::LBrace)?;
        let mut spec = AvatarSpec {
            name,
            params: Vec::new(),
            states: Vec::new(),
            handlers: Vec::new(),
        };
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.advance();
                    break;
                }
                Tok::Ident(w) if w == "param" => spec.params.push(self.param()?),
                Tok::Ident(w) if w == "state" => spec.states.push(self.state()?),
                Tok::Ident(w) if w == "on" => spec.handlers.push(self.handler()?),
                _ => return self.error("`param`, `state`, `on` or `}`"),
            }
        }
        Ok(spec)
    }

    fn ty(&mut self) -> Result<Type, DslError> {
        let t = match self.peek() {
            Tok::Ident(w) if w == "int" => Type::Int,
            Tok::Ident(w) if w == "real" => Type::Real,
            Tok::Ident(w) if w == "bool" => Type::Bool,
            _ => return self.error("type `int`, `real` or `bool`"),
        };
        self.advance();
        Ok(t)
    }

    fn signed_number(&mut self) -> Result<Literal, DslError> {
        let neg = if self.peek() == &Tok::Minus {
            self.advance();
            true
        } else {
            false
        };
        match self.advance() {
            (Tok::Int(i), _) => Ok(Literal::Int(if neg { -i } else { i })),
            (Tok::Real(r), _) => Ok(Literal::Real(if neg { -r } else { r })),
            (Tok::Ident(w), _) if !neg && w == "true" => Ok(Literal::Bool(true)),
            (Tok::Ident(w), _) if !neg && w == "false" => Ok(Literal::Bool(false)),
            (t, span) => Err(DslError::parse(
                span,
                format!("expected literal, found {}", t.describe()),
            )),
        }
    }

    fn param(&mut self) -> Result<ParamDecl, DslError> {
        let span = self.eat_word("param")?;
        let (name, _) = self.ident()?;
        self.expect(&Tok::Colon)?;
        let ty = self.ty()?;
        self.expect(&Tok::Tilde)?;
        let dist = self.distribution()?;
        self.expect(&Tok::Semi)?;
        Ok(ParamDecl {
            name,
            ty,
            dist,
            span,
        })
    }

    fn distribution(&mut self) -> Result<Distribution, DslError> {
        let (name, span) = match self.advance() {
            (Tok::Ident(s), span) => (s, span),
            (t, span) => {
                return Err(DslError::parse(
                    span,
                    format!("expected distribution, found {}", t.describe()),
                ))
            }
        };
        self.expect(&Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek() != &Tok::RParen {
            args.push(self.signed_number()?);
            while self.peek() == &Tok::Comma {
                self.advance();
                args.push(self.signed_number()?);
            }
        }
        self.expect(&Tok::RParen)?;

        let arity = |n: usize| -> Result<(), DslError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(DslError::parse(
                    span,
                    format!("`{name}` takes {n} argument(s), got {}", args.len()),
                ))
            }
        };
        let real = |l: Literal| -> Result<f64, DslError> {
            l.as_f64()
                .ok_or_else(|| DslError::parse(span, "distribution arguments must be numbers"))
        };
        let int = |l: Literal| -> Result<i64, DslError> {
            match l {
                Literal::Int(i) => Ok(i),
                _ => Err(DslError::parse(span, "uniform_int bounds must be integers")),
            }
        };
        Ok(match name.as_str() {
            "constant" => {
                arity(1)?;
                Distribution::Constant(args[0])
            }
            "uniform" => {
                arity(2)?;
                Distribution::Uniform(real(args[0])?, real(args[1])?)
            }
            "uniform_int" => {
                arity(2)?;
                Distribution::UniformInt(int(args[0])?, int(args[1])?)
            }
            "normal" => {
                arity(2)?;
                Distribution::Normal(real(args[0])?, real(args[1])?)
            }
            "lognormal" => {
                arity(2)?;
                Distribution::LogNormal(real(args[0])?, real(args[1])?)
            }
            other => {
                return Err(DslError::parse(
                    span,
                    format!("unknown distribution `{other}`"),
                ))
            }
        })
    }

    fn state(&mut self) -> Result<StateDecl, DslError> {
        let span = self.eat_word("state")?;
        let (name, _) = self.ident()?;
        self.expect(&Tok::Colon)?;
        let ty = self.ty()?;
        self.expect(&Tok::Assign)?;
        let init = self.signed_number()?;
        self.expect(&Tok::Semi)?;
        Ok(StateDecl {
            name,
            ty,
            init,
            span,
        })
    }

    fn handler(&mut self) -> Result<Handler, DslError> {
        let span = self.eat_word("on")?;
        let kind = match self.peek() {
            Tok::Ident(w) if w == "wake" => HandlerKind::Wake,
            Tok::Ident(w) if w == "trade" => HandlerKind::Trade,
            Tok::Ident(w) if w == "news" => HandlerKind::News,
            Tok::Ident(w) if w == "message" => HandlerKind::Message,
            _ => return self.error("`wake`, `trade`, `news` or `message`"),
        };
        self.advance();
        let param = if matches!(kind, HandlerKind::News | HandlerKind::Message) {
            self.expect(&Tok::LParen)?;
            let (p, _) = self.ident()?;
            self.expect(&Tok::RParen)?;
            Some(p)
        } else {
            None
        };
        let body = self.block()?;
        Ok(Handler {
            kind,
            param,
            body,
            span,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, DslError> {
        self.expect(&Tok::LBrace)?;
        let mut out = Vec::new();
        while self.peek() != &Tok::RBrace {
            if self.peek() == &Tok::Eof {
                return self.error("`}`");
            }
            out.push(self.stmt()?);
        }
        self.advance();
        Ok(out)
    }

    fn stmt(&mut self) -> Result<Stmt, DslError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Ident(w) if LOOP_KEYWORDS.contains(&w.as_str()) => Err(DslError::type_error(
                span,
                format!("loops not permitted (`{w}`); handlers are straight-line code"),
            )),
            Tok::Ident(w) if w == "let" => {
                self.advance();
                let (name, _) = self.ident()?;
                self.expect(&Tok::Assign)?;
                let value = self.expr()?;
                self.expect(&Tok::Semi)?;
                Ok(Stmt::Let { name, value, span })
            }
            Tok::Ident(w) if w == "if" => self.if_stmt(),
            Tok::Ident(_) => {
                let (name, _) = self.ident()?;
                match self.peek() {
                    Tok::Assign => {
                        self.advance();
                        let value = self.expr()?;
                        self.expect(&Tok::Semi)?;
                        Ok(Stmt::Assign { name, value, span })
                    }
                    Tok::LParen => {
                        let args = self.args()?;
                        self.expect(&Tok::Semi)?;
                        Ok(Stmt::Call { name, args, span })
                    }
                    _ => self.error("`=` or `(`"),
                }
            }
            _ => self.error("statement"),
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, DslError> {
        let span = self.eat_word("if")?;
        let cond = self.expr()?;
        let then = self.block()?;
        let otherwise = if self.is_word("else") {
            self.advance();
            if self.is_word("if") {
                Some(vec![self.if_stmt()?])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt::If {
            cond,
            then,
            otherwise,
            span,
        })
    }

    fn args(&mut self) -> Result<Vec<Expr>, DslError> {
        self.expect(&Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek() != &Tok::RParen {
            args.push(self.expr()?);
            while self.peek() == &Tok::Comma {
                self.advance();
                args.push(self.expr()?);
            }
        }
        self.expect(&Tok::RParen)?;
        Ok(args)
    }

    pub fn expr(&mut self) -> Result<Expr, DslError> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Ident(w) if w == "or" => BinOp::Or,
            Tok::Ident(w) if w == "and" => BinOp::And,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Percent => BinOp::Rem,
            _ => return None,
        })
    }

    /// Precedence climbing. `not` sits between `and` and the comparisons;
    /// comparisons do not chain.
    fn binary(&mut self, min_prec: u8) -> Result<Expr, DslError> {
        let mut lhs = if min_prec <= 3 && self.is_word("not") {
            let span = self.advance().1;
            let operand = self.binary(3)?;
            Expr {
                kind: ExprKind::Unary(UnaryOp::Not, Box::new(operand)),
                span,
            }
        } else {
            self.unary()?
        };
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            let span = self.advance().1;
            let rhs = self.binary(prec + 1)?;
            if op.is_comparison() {
                if let Some(next) = self.binop() {
                    if next.is_comparison() {
                        return Err(DslError::parse(
                            self.span(),
                            "comparisons cannot be chained; use `and`",
                        ));
                    }
                }
            }
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.peek() == &Tok::Minus {
            let span = self.advance().1;
            let operand = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Unary(UnaryOp::Neg, Box::new(operand)),
                span,
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(i) => {
                self.advance();
                ExprKind::Int(i)
            }
            Tok::Real(r) => {
                self.advance();
                ExprKind::Real(r)
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                return Ok(e);
            }
            Tok::Ident(w) => match w.as_str() {
                "true" | "false" => {
                    self.advance();
                    ExprKind::Bool(w == "true")
                }
                "buy" => {
                    self.advance();
                    ExprKind::Side(Side::Buy)
                }
                "sell" => {
                    self.advance();
                    ExprKind::Side(Side::Sell)
                }
                _ if LOOP_KEYWORDS.contains(&w.as_str()) => {
                    return Err(DslError::type_error(span, "loops not permitted"));
                }
                _ => {
                    let (name, _) = self.ident()?;
                    if self.peek() == &Tok::LParen {
                        ExprKind::Call(name, self.args()?)
                    } else if self.peek() == &Tok::Dot {
                        self.advance();
                        let (field, _) = self.ident()?;
                        ExprKind::Var(format!("{name}.{field}"))
                    } else {
                        ExprKind::Var(name)
                    }
                }
            },
            _ => return self.error("expression"),
        };
        Ok(Expr { kind, span })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal() {
        let s = parse_syntax(r#"avatar "noop" {}"#).unwrap();
        assert_eq!(s.name, "noop");
        assert!(s.params.is_empty() && s.handlers.is_empty());
    }

    #[test]
    fn precedence() {
        let s = parse_syntax(
            r#"avatar "p" { on wake { let x = 1 + 2 * 3 > 4 and not true or false; } }"#,
        )
        .unwrap();
        let Stmt::Let { value, .. } = &s.handlers[0].body[0] else {
            panic!()
        };
        let ExprKind::Binary(BinOp::Or, lhs, _) = &value.kind else {
            panic!("top is or: {value:?}")
        };
        let ExprKind::Binary(BinOp::And, cmp, not) = &lhs.kind else {
            panic!()
        };
        assert!(matches!(cmp.kind, ExprKind::Binary(BinOp::Gt, _, _)));
        assert!(matches!(not.kind, ExprKind::Unary(UnaryOp::Not, _)));
    }

    #[test]
    fn loop_keyword_rejected() {
        let e = parse_syntax("avatar \"x\" {\n on wake {\n  while true { }\n }\n}").unwrap_err();
        assert!(e.message.contains("loops not permitted"));
        assert_eq!((e.line, e.column), (3, 3));
    }

    #[test]
    fn chained_comparison_rejected() {
        assert!(parse_syntax(r#"avatar "x" { on wake { let a = 1 < 2 < 3; } }"#).is_err());
    }

    #[test]
    fn error_position() {
        let e = parse_syntax("avatar \"x\" {\n  param q: int ~ constant(1)\n}").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("`;`"), "{}", e.message);
    }
}
