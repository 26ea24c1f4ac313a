use super::{Cmp, Predicate, RuleError, StlFormula};
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Int(usize),
    Amp,
    Bar,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Le,
    Ge,
    Plus,
    Minus,
    Star,
    End,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(v) => format!("number {v}"),
        Tok::Int(v) => format!("number {v}"),
        Tok::End => "end of input".into(),
        other => format!("{other:?}"),
    }
}

fn syntax(col: usize, msg: impl Into<String>) -> RuleError {
    RuleError::Syntax { col, msg: msg.into() }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, RuleError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '&' => Some(Tok::Amp),
            '|' => Some(Tok::Bar),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBrack),
            ']' => Some(Tok::RBrack),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, col));
            i += 1;
            continue;
        }
        if c == '<' || c == '>' {
            if chars.get(i + 1) != Some(&'=') {
                return Err(syntax(col, format!("expected `{c}=`")));
            }
            out.push((if c == '<' { Tok::Le } else { Tok::Ge }, col));
            i += 2;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut integral = true;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                integral &= chars[i] != '.';
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| syntax(col, format!("malformed number `{s}`")))?;
            if integral {
                if let Ok(n) = s.parse::<usize>() {
                    out.push((Tok::Int(n), col));
                    continue;
                }
            }
            out.push((Tok::Num(v), col));
            continue;
        }
        return Err(syntax(col, format!("unexpected character `{c}`")));
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), RuleError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.col(), format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn formula(&mut self) -> Result<StlFormula, RuleError> {
        let mut parts = vec![self.conj()?];
        while *self.peek() == Tok::Bar {
            self.bump();
            parts.push(self.conj()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { StlFormula::Or(parts) })
    }

    fn conj(&mut self) -> Result<StlFormula, RuleError> {
        let mut parts = vec![self.atom()?];
        while *self.peek() == Tok::Amp {
            self.bump();
            parts.push(self.atom()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { StlFormula::And(parts) })
    }

    fn bound(&mut self) -> Result<usize, RuleError> {
        match self.peek() {
            Tok::Int(n) => {
                let n = *n;
                self.bump();
                Ok(n)
            }
            other => Err(syntax(self.col(), format!("expected integer bound, found {}", describe(other)))),
        }
    }

    fn atom(&mut self) -> Result<StlFormula, RuleError> {
        if let (Tok::Ident(name), Tok::LBrack) = (self.peek(), self.peek2()) {
            if name == "G" || name == "F" {
                let always = name == "G";
                let col = self.col();
                self.bump();
                self.bump();
                let a = self.bound()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.bound()?;
                if a > b {
                    return Err(syntax(col, format!("empty interval [{a},{b}]")));
                }
                self.expect(Tok::RBrack, "`]`")?;
                self.expect(Tok::LParen, "`(`")?;
                let child = Box::new(self.formula()?);
                self.expect(Tok::RParen, "`)`")?;
                return Ok(if always {
                    StlFormula::Always { a, b, child }
                } else {
                    StlFormula::Eventually { a, b, child }
                });
            }
        }
        if *self.peek() == Tok::LParen {
            self.bump();
            let f = self.formula()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(f);
        }
        self.predicate()
    }

    /// Parses an affine expression into `(terms, constant)`.
    fn affine(&mut self) -> Result<(Vec<(f64, String)>, f64), RuleError> {
        let mut terms = Vec::new();
        let mut constant = 0.0;
        let mut first = true;
        loop {
            let mut sign = 1.0;
            match self.peek() {
                Tok::Plus if !first => {
                    self.bump();
                }
                Tok::Minus => {
                    self.bump();
                    sign = -1.0;
                }
                _ if first => {}
                _ => break,
            }
            first = false;
            let col = self.col();
            match self.bump() {
                Tok::Ident(name) => terms.push((sign, name)),
                Tok::Num(v) => self.scaled(sign * v, &mut terms, &mut constant)?,
                Tok::Int(v) => self.scaled(sign * v as f64, &mut terms, &mut constant)?,
                other => return Err(syntax(col, format!("expected signal or number, found {}", describe(&other)))),
            }
            if !matches!(self.peek(), Tok::Plus | Tok::Minus) {
                break;
            }
        }
        Ok((terms, constant))
    }

    fn scaled(&mut self, v: f64, terms: &mut Vec<(f64, String)>, constant: &mut f64) -> Result<(), RuleError> {
        if *self.peek() == Tok::Star {
            self.bump();
            let col = self.col();
            match self.bump() {
                Tok::Ident(name) => terms.push((v, name)),
                other => return Err(syntax(col, format!("expected signal after `*`, found {}", describe(&other)))),
            }
        } else {
            *constant += v;
        }
        Ok(())
    }

    fn predicate(&mut self) -> Result<StlFormula, RuleError> {
        let (mut terms, lc) = self.affine()?;
        let cmp = match self.peek() {
            Tok::Le => Cmp::Le,
            Tok::Ge => Cmp::Ge,
            other => return Err(syntax(self.col(), format!("expected `<=` or `>=`, found {}", describe(other)))),
        };
        self.bump();
        let (rt, rc) = self.affine()?;
        terms.extend(rt.into_iter().map(|(c, n)| (-c, n)));
        let rhs = if lc == 0.0 { rc } else { rc - lc };
        Ok(StlFormula::Pred(Predicate { terms, cmp, rhs }))
    }
}

pub fn parse_rule(text: &str) -> Result<StlFormula, RuleError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let f = p.formula()?;
    if *p.peek() != Tok::End {
        return Err(syntax(p.col(), format!("unexpected {}", describe(p.peek()))));
    }
    Ok(f)
}

/// One formula per line; blank lines and `#` comments are skipped.
pub fn parse_rules(text: &str) -> Result<Vec<StlFormula>, RuleError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        out.push(parse_rule(body).map_err(|e| RuleError::Line {
            line: i + 1,
            source: Box::new(e),
        })?);
    }
    Ok(out)
}
