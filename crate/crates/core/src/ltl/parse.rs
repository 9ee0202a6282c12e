//! Recursive-descent parser for the ASCII LTL syntax.
//!
//! Precedence, tightest first: unary (`!`, `X`, `G`, `F`) > `U` > `&` > `|`
//! > `->`. `U` and `->` associate to the right.

use super::{Formula, LtlError};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Token {
    True,
    False,
    Ident(String),
    Not,
    And,
    Or,
    Implies,
    Next,
    Always,
    Eventually,
    Until,
    LParen,
    RParen,
    End,
}

fn describe(tok: &Token) -> String {
    match tok {
        Token::True => "'true'".into(),
        Token::False => "'false'".into(),
        Token::Ident(s) => format!("identifier '{s}'"),
        Token::Not => "'!'".into(),
        Token::And => "'&'".into(),
        Token::Or => "'|'".into(),
        Token::Implies => "'->'".into(),
        Token::Next => "'X'".into(),
        Token::Always => "'G'".into(),
        Token::Eventually => "'F'".into(),
        Token::Until => "'U'".into(),
        Token::LParen => "'('".into(),
        Token::RParen => "')'".into(),
        Token::End => "end of input".into(),
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>, LtlError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '!' => Token::Not,
            '&' => Token::And,
            '|' => Token::Or,
            '(' => Token::LParen,
            ')' => Token::RParen,
            '-' if bytes.get(i + 1) == Some(&b'>') => {
                i += 1;
                Token::Implies
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i + 1 < bytes.len()
                    && (bytes[i + 1].is_ascii_alphanumeric() || bytes[i + 1] == b'_')
                {
                    i += 1;
                }
                match &text[start..=i] {
                    "true" => Token::True,
                    "false" => Token::False,
                    "X" => Token::Next,
                    "G" => Token::Always,
                    "F" => Token::Eventually,
                    "U" => Token::Until,
                    ident => Token::Ident(ident.to_string()),
                }
            }
            _ => {
                let found = text[start..].chars().next().unwrap_or(c);
                return Err(LtlError::UnknownToken { pos: start, found });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((text.len(), Token::End));
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].0
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].1.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, expected: &str) -> LtlError {
        LtlError::Syntax {
            pos: self.offset(),
            message: format!("expected {expected}, found {}", describe(self.peek())),
        }
    }

    fn implication(&mut self) -> Result<Formula, LtlError> {
        let lhs = self.disjunction()?;
        if *self.peek() == Token::Implies {
            self.bump();
            let rhs = self.implication()?;
            return Ok(Formula::or(Formula::not(lhs), rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, LtlError> {
        let mut lhs = self.conjunction()?;
        while *self.peek() == Token::Or {
            self.bump();
            lhs = Formula::or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, LtlError> {
        let mut lhs = self.until()?;
        while *self.peek() == Token::And {
            self.bump();
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, LtlError> {
        let lhs = self.unary()?;
        if *self.peek() == Token::Until {
            self.bump();
            let rhs = self.until()?;
            return Ok(Formula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, LtlError> {
        match self.peek() {
            Token::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Token::Next => {
                self.bump();
                Ok(Formula::next(self.unary()?))
            }
            Token::Always => {
                self.bump();
                Ok(Formula::always(self.unary()?))
            }
            Token::Eventually => {
                self.bump();
                Ok(Formula::eventually(self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, LtlError> {
        match self.peek().clone() {
            Token::True => {
                self.bump();
                Ok(Formula::True)
            }
            Token::False => {
                self.bump();
                Ok(Formula::False)
            }
            Token::Ident(name) => {
                self.bump();
                Ok(Formula::Atom(name))
            }
            Token::LParen => {
                self.bump();
                let inner = self.implication()?;
                if *self.peek() != Token::RParen {
                    return Err(self.error("')'"));
                }
                self.bump();
                Ok(inner)
            }
            _ => Err(self.error("a formula")),
        }
    }
}

/// Parses a specification such as `G !collision`. Implication is expanded
/// to `!a | b` during parsing.
pub fn parse(text: &str) -> Result<Formula, LtlError> {
    let mut parser = Parser { tokens: lex(text)?, pos: 0 };
    let f = parser.implication()?;
    if *parser.peek() != Token::End {
        return Err(parser.error("end of input"));
    }
    Ok(f)
}
