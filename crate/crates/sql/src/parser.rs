use crate::ast::{AggFunc, BinaryOp, Expr, OrderTerm, Select, SelectItem, TableRef};
use crate::error::SqlError;
use crate::lexer::{tokenize, Keyword, Token, TokenKind};
use crate::value::{parse_decimal, Value};

/// Parses a single SELECT statement. A trailing semicolon is allowed.
pub fn parse(sql: &str) -> Result<Select, SqlError> {
    let tokens = tokenize(sql)?;
    let mut p = Parser { tokens, pos: 0 };
    let select = p.select()?;
    p.eat(&TokenKind::Semicolon);
    if !p.at(&TokenKind::Eof) {
        return Err(p.unexpected("expected end of statement"));
    }
    Ok(select)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &TokenKind {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at(&self, kind: &TokenKind) -> bool {
        &self.peek().kind == kind
    }

    fn at_kw(&self, kw: Keyword) -> bool {
        self.peek().kind == TokenKind::Keyword(kw)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.at(kind) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: Keyword) -> bool {
        self.eat(&TokenKind::Keyword(kw))
    }

    fn unexpected(&self, message: &str) -> SqlError {
        let t = self.peek();
        match t.kind {
            TokenKind::Keyword(Keyword::Unsupported(name)) => {
                SqlError::parse(&format!("unsupported syntax `{name}`"), &t.text, t.pos)
            }
            _ => SqlError::parse(message, &t.text, t.pos),
        }
    }

    fn expect(&mut self, kind: &TokenKind, message: &str) -> Result<(), SqlError> {
        if self.eat(kind) {
            Ok(())
        } else {
            Err(self.unexpected(message))
        }
    }

    fn expect_kw(&mut self, kw: Keyword, message: &str) -> Result<(), SqlError> {
        self.expect(&TokenKind::Keyword(kw), message)
    }

    fn ident(&mut self, message: &str) -> Result<String, SqlError> {
        match &self.peek().kind {
            TokenKind::Ident(name) => {
                let name = name.clone();
                self.advance();
                Ok(name)
            }
            _ => Err(self.unexpected(message)),
        }
    }

    fn select(&mut self) -> Result<Select, SqlError> {
        self.expect_kw(Keyword::Select, "expected SELECT")?;
        let distinct = self.eat_kw(Keyword::Distinct);
        let mut items = vec![self.select_item()?];
        while self.eat(&TokenKind::Comma) {
            items.push(self.select_item()?);
        }
        self.expect_kw(Keyword::From, "expected FROM")?;
        let name = self.ident("expected table name")?;
        let alias = if self.eat_kw(Keyword::As) {
            Some(self.ident("expected table alias")?)
        } else if let TokenKind::Ident(a) = &self.peek().kind {
            let a = a.clone();
            self.advance();
            Some(a)
        } else {
            None
        };
        if self.at(&TokenKind::Comma) {
            return Err(self.unexpected("multiple tables in FROM are not supported"));
        }
        let filter = if self.eat_kw(Keyword::Where) { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw(Keyword::Group) {
            self.expect_kw(Keyword::By, "expected BY after GROUP")?;
            group_by.push(self.expr()?);
            while self.eat(&TokenKind::Comma) {
                group_by.push(self.expr()?);
            }
        }
        let mut order_by = Vec::new();
        if self.eat_kw(Keyword::Order) {
            self.expect_kw(Keyword::By, "expected BY after ORDER")?;
            order_by.push(self.order_term()?);
            while self.eat(&TokenKind::Comma) {
                order_by.push(self.order_term()?);
            }
        }
        Ok(Select { distinct, items, from: TableRef { name, alias }, filter, group_by, order_by })
    }

    fn select_item(&mut self) -> Result<SelectItem, SqlError> {
        if self.eat(&TokenKind::Star) {
            return Ok(SelectItem::Wildcard);
        }
        let expr = self.expr()?;
        let alias = if self.eat_kw(Keyword::As) {
            Some(match &self.peek().kind {
                TokenKind::Str(s) => {
                    let s = s.clone();
                    self.advance();
                    s
                }
                _ => self.ident("expected column alias")?,
            })
        } else if let TokenKind::Ident(a) = &self.peek().kind {
            let a = a.clone();
            self.advance();
            Some(a)
        } else {
            None
        };
        Ok(SelectItem::Expr { expr, alias })
    }

    fn order_term(&mut self) -> Result<OrderTerm, SqlError> {
        let expr = self.expr()?;
        let (descending, explicit) = if self.eat_kw(Keyword::Desc) {
            (true, true)
        } else if self.eat_kw(Keyword::Asc) {
            (false, true)
        } else {
            (false, false)
        };
        Ok(OrderTerm { expr, descending, explicit })
    }

    fn expr(&mut self) -> Result<Expr, SqlError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.and_expr()?;
        while self.eat_kw(Keyword::Or) {
            let right = self.and_expr()?;
            left = Expr::Binary { left: Box::new(left), op: BinaryOp::Or, right: Box::new(right) };
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.not_expr()?;
        while self.eat_kw(Keyword::And) {
            let right = self.not_expr()?;
            left = Expr::Binary { left: Box::new(left), op: BinaryOp::And, right: Box::new(right) };
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, SqlError> {
        if self.eat_kw(Keyword::Not) {
            let inner = self.not_expr()?;
            return Ok(Expr::Not(Box::new(inner)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.additive()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Eq => Some(BinaryOp::Eq),
                TokenKind::NotEq => Some(BinaryOp::NotEq),
                TokenKind::Lt => Some(BinaryOp::Lt),
                TokenKind::Gt => Some(BinaryOp::Gt),
                TokenKind::LtEq => Some(BinaryOp::LtEq),
                TokenKind::GtEq => Some(BinaryOp::GtEq),
                _ => None,
            };
            if let Some(op) = op {
                self.advance();
                let right = self.additive()?;
                left = Expr::Binary { left: Box::new(left), op, right: Box::new(right) };
                continue;
            }
            let negated = if self.at_kw(Keyword::Not)
                && matches!(self.peek_at(1), TokenKind::Keyword(Keyword::In | Keyword::Like | Keyword::Between))
            {
                self.advance();
                true
            } else {
                false
            };
            if self.eat_kw(Keyword::Like) {
                let pattern = self.additive()?;
                left = Expr::Like { expr: Box::new(left), pattern: Box::new(pattern), negated };
            } else if self.eat_kw(Keyword::Between) {
                let low = self.additive()?;
                self.expect_kw(Keyword::And, "expected AND in BETWEEN")?;
                let high = self.additive()?;
                left = Expr::Between { expr: Box::new(left), low: Box::new(low), high: Box::new(high), negated };
            } else if self.eat_kw(Keyword::In) {
                self.expect(&TokenKind::LParen, "expected ( after IN")?;
                if self.at_kw(Keyword::Select) {
                    let query = self.select()?;
                    self.expect(&TokenKind::RParen, "expected ) after subquery")?;
                    left = Expr::InSubquery { expr: Box::new(left), query: Box::new(query), negated };
                } else {
                    let mut list = vec![self.expr()?];
                    while self.eat(&TokenKind::Comma) {
                        list.push(self.expr()?);
                    }
                    self.expect(&TokenKind::RParen, "expected ) after IN list")?;
                    left = Expr::InList { expr: Box::new(left), list, negated };
                }
            } else {
                break;
            }
        }
        Ok(left)
    }

    fn additive(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinaryOp::Add,
                TokenKind::Minus => BinaryOp::Sub,
                _ => break,
            };
            self.advance();
            let right = self.multiplicative()?;
            left = Expr::Binary { left: Box::new(left), op, right: Box::new(right) };
        }
        Ok(left)
    }

    fn multiplicative(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinaryOp::Mul,
                TokenKind::Slash => BinaryOp::Div,
                TokenKind::Percent => BinaryOp::Rem,
                _ => break,
            };
            self.advance();
            let right = self.unary()?;
            left = Expr::Binary { left: Box::new(left), op, right: Box::new(right) };
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, SqlError> {
        if self.eat(&TokenKind::Minus) {
            let inner = self.unary()?;
            // Fold negative literals so `-3` prints and compares as a literal.
            return Ok(match inner {
                Expr::Literal(Value::Int(i)) => Expr::Literal(Value::Int(-i)),
                other => Expr::Unary { negate: true, expr: Box::new(other) },
            });
        }
        if self.eat(&TokenKind::Plus) {
            let inner = self.unary()?;
            return Ok(Expr::Unary { negate: false, expr: Box::new(inner) });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SqlError> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Int(i) => {
                self.advance();
                Ok(Expr::Literal(Value::Int(i)))
            }
            TokenKind::Decimal(ref d) => {
                self.advance();
                let r = parse_decimal(d).ok_or_else(|| SqlError::parse("bad decimal literal", &tok.text, tok.pos))?;
                Ok(Expr::Literal(Value::Num(r)))
            }
            TokenKind::Str(ref s) => {
                self.advance();
                Ok(Expr::Literal(Value::Text(s.clone())))
            }
            TokenKind::Keyword(Keyword::Null) => {
                self.advance();
                Ok(Expr::Literal(Value::Null))
            }
            TokenKind::LParen => {
                self.advance();
                if self.at_kw(Keyword::Select) {
                    return Err(self.unexpected("scalar subqueries are not supported"));
                }
                let e = self.expr()?;
                self.expect(&TokenKind::RParen, "expected )")?;
                Ok(e)
            }
            TokenKind::Ident(ref name) => {
                if self.peek_at(1) == &TokenKind::LParen {
                    return self.function_call(name.clone(), &tok);
                }
                self.advance();
                if self.eat(&TokenKind::Dot) {
                    let column = self.ident("expected column name after .")?;
                    return Ok(Expr::Column { table: Some(name.clone()), name: column });
                }
                Ok(Expr::Column { table: None, name: name.clone() })
            }
            _ => Err(self.unexpected("expected expression")),
        }
    }

    fn function_call(&mut self, name: String, tok: &Token) -> Result<Expr, SqlError> {
        let func = AggFunc::from_name(&name)
            .ok_or_else(|| SqlError::parse(&format!("unsupported function `{name}`"), &tok.text, tok.pos))?;
        self.advance();
        self.expect(&TokenKind::LParen, "expected (")?;
        let distinct = self.eat_kw(Keyword::Distinct);
        let arg = if func == AggFunc::Count && !distinct && self.eat(&TokenKind::Star) {
            None
        } else {
            Some(Box::new(self.expr()?))
        };
        if self.at(&TokenKind::Comma) {
            return Err(self.unexpected("aggregate takes a single argument"));
        }
        self.expect(&TokenKind::RParen, "expected ) after aggregate argument")?;
        Ok(Expr::Aggregate { func, distinct, arg })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_table_one_relational_query() {
        let q = parse(
            "SELECT COUNT(*) FROM articles WHERE article_id NOT IN (SELECT article_id_citing FROM citing_cited) \
             AND article_id IN (SELECT article_id_cited FROM citing_cited)",
        )
        .unwrap();
        assert_eq!(q.from.name, "articles");
        assert!(q.is_scalar_aggregate());
        assert_eq!(q.selects().len(), 3);
    }

    #[test]
    fn precedence_of_and_over_or() {
        let q = parse("SELECT a FROM t WHERE a = 1 OR b = 2 AND c = 3").unwrap();
        match q.filter.unwrap() {
            Expr::Binary { op: BinaryOp::Or, right, .. } => {
                assert!(matches!(*right, Expr::Binary { op: BinaryOp::And, .. }));
            }
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn between_binds_its_own_and() {
        let q = parse("SELECT a FROM t WHERE a BETWEEN 1 AND 3 AND b > 2").unwrap();
        assert!(matches!(q.filter.unwrap(), Expr::Binary { op: BinaryOp::And, .. }));
    }

    #[test]
    fn unsupported_syntax_names_the_token() {
        let err = parse("SELECT a FROM t ORDER BY a LIMIT 1").unwrap_err();
        assert_eq!(err.token(), Some("LIMIT"));
        let err = parse("SELECT a FROM t JOIN u ON t.x = u.y").unwrap_err();
        assert_eq!(err.token(), Some("JOIN"));
        let err = parse("SELECT LENGTH(a) FROM t").unwrap_err();
        assert_eq!(err.token(), Some("LENGTH"));
    }

    #[test]
    fn display_reparses_to_same_tree() {
        let src = "SELECT DISTINCT author_name FROM article_author WHERE author_position < 2 AND NOT article_id IN ('a', 'b') ORDER BY author_position DESC";
        let q = parse(src).unwrap();
        let again = parse(&q.to_string()).unwrap();
        assert_eq!(q, again);
    }

    #[test]
    fn trailing_semicolon_ok_garbage_not() {
        assert!(parse("SELECT a FROM t;").is_ok());
        assert!(parse("SELECT a FROM t garbage more").is_err());
    }
}
