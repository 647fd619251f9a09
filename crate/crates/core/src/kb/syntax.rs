//! Lexer and recursive-descent parser for the knowledge-base language.
//!
//! ```text
//! stmt        := sort_decl | attr_decl | random_decl | rule | pr_atom | fact
//! sort_decl   := "sort" IDENT "=" "{" IDENT ("," IDENT)* "}"
//! attr_decl   := "attr" IDENT [ "(" sortlist ")" ] ":" IDENT
//! random_decl := "random" "(" IDENT ")"
//! rule        := [atom] ":-" literal ("," literal)*
//! pr_atom     := "pr" "(" atom ["|" literal ("," literal)*] ")" "=" RATIONAL
//! fact        := atom
//! literal     := ["not"] atom
//! atom        := IDENT [ "(" termlist ")" ] [ "=" term ]
//! ```
//!
//! Every statement ends with `.`; `%` starts a comment running to end of line.
//! Capitalized identifiers are variables.

use super::ast::*;
use super::error::{KbError, KbResult, Pos};

const KEYWORDS: [&str; 5] = ["sort", "attr", "random", "pr", "not"];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Number(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Eq,
    Bar,
    Colon,
    If,
    Slash,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Var(s) | Tok::Number(s) => format!("`{s}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Bar => "`|`".into(),
            Tok::Colon => "`:`".into(),
            Tok::If => "`:-`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> KbResult<Vec<(Tok, Pos)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let is_word = |c: char| c.is_ascii_alphanumeric() || c == '_';

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut numeric = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                numeric = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '-' || chars[j] == '+') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    numeric = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            if !numeric && i < chars.len() && is_word(chars[i]) {
                while i < chars.len() && is_word(chars[i]) {
                    i += 1;
                }
                Tok::Ident(chars[start..i].iter().collect())
            } else {
                Tok::Number(chars[start..i].iter().collect())
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && is_word(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if c.is_ascii_uppercase() {
                Tok::Var(word)
            } else {
                Tok::Ident(word)
            }
        } else {
            i += 1;
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                ',' => Tok::Comma,
                '.' => Tok::Dot,
                '=' => Tok::Eq,
                '|' => Tok::Bar,
                '/' => Tok::Slash,
                ':' => {
                    if i < chars.len() && chars[i] == '-' {
                        i += 1;
                        Tok::If
                    } else {
                        Tok::Colon
                    }
                }
                other => {
                    return Err(KbError::Syntax {
                        pos,
                        message: format!("unexpected character `{other}`"),
                    })
                }
            }
        };
        col += i - start;
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

/// One parsed statement before validation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Stmt {
    Sort(SortDecl),
    Attr(AttributeDecl),
    Random(String),
    Rule(LogicRule),
    Pr(PrAtom),
    Fact(Atom),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> KbResult<T> {
        Err(KbError::Syntax { pos: self.pos(), message: message.into() })
    }

    fn expect(&mut self, want: Tok) -> KbResult<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {}, found {}", want.describe(), self.peek().describe()))
        }
    }

    fn ident(&mut self, what: &str) -> KbResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected {what}, found {}", other.describe())),
        }
    }

    fn constant(&mut self) -> KbResult<String> {
        match self.peek().clone() {
            Tok::Number(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.ident("constant"),
        }
    }

    fn term(&mut self) -> KbResult<Term> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.bump();
                Ok(Term::Var(v))
            }
            _ => Ok(Term::Const(self.constant()?)),
        }
    }

    fn atom(&mut self) -> KbResult<Atom> {
        let attr = self.ident("attribute name")?;
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            args.push(self.term()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.term()?);
            }
            self.expect(Tok::RParen)?;
        }
        let value = if *self.peek() == Tok::Eq {
            self.bump();
            Some(self.term()?)
        } else {
            None
        };
        Ok(Atom { attr, args, value })
    }

    fn literal(&mut self) -> KbResult<Literal> {
        if *self.peek() == Tok::Ident("not".into()) {
            self.bump();
            Ok(Literal::neg(self.atom()?))
        } else {
            Ok(Literal::pos(self.atom()?))
        }
    }

    fn literals(&mut self) -> KbResult<Vec<Literal>> {
        let mut out = vec![self.literal()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(self.literal()?);
        }
        Ok(out)
    }

    fn probability(&mut self) -> KbResult<Probability> {
        let pos = self.pos();
        let Tok::Number(first) = self.bump() else {
            return Err(KbError::Syntax { pos, message: "expected probability".into() });
        };
        let prob = if *self.peek() == Tok::Slash {
            self.bump();
            let Tok::Number(second) = self.bump() else {
                return Err(KbError::Syntax { pos, message: "expected denominator".into() });
            };
            let parse = |s: &str| {
                s.parse::<u64>().map_err(|_| KbError::Syntax {
                    pos,
                    message: format!("`{s}` is not a non-negative integer"),
                })
            };
            Probability::Ratio { num: parse(&first)?, den: parse(&second)? }
        } else if let Ok(n) = first.parse::<u64>() {
            Probability::Ratio { num: n, den: 1 }
        } else {
            let v = first.parse::<f64>().map_err(|_| KbError::Syntax {
                pos,
                message: format!("`{first}` is not a number"),
            })?;
            Probability::Decimal(v)
        };
        if !prob.in_unit_interval() {
            let value = match prob {
                Probability::Ratio { den: 0, .. } => f64::INFINITY,
                p => p.value(),
            };
            return Err(KbError::ProbabilityOutOfRange { value, pos: Some(pos) });
        }
        Ok(prob)
    }

    fn statement(&mut self) -> KbResult<Stmt> {
        let stmt = match self.peek().clone() {
            Tok::Ident(k) if k == "sort" => {
                self.bump();
                let name = self.ident("sort name")?;
                self.expect(Tok::Eq)?;
                self.expect(Tok::LBrace)?;
                let mut members = vec![self.constant()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    members.push(self.constant()?);
                }
                self.expect(Tok::RBrace)?;
                Stmt::Sort(SortDecl { name, members })
            }
            Tok::Ident(k) if k == "attr" => {
                self.bump();
                let name = self.ident("attribute name")?;
                let mut arg_sorts = Vec::new();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    arg_sorts.push(self.ident("sort name")?);
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        arg_sorts.push(self.ident("sort name")?);
                    }
                    self.expect(Tok::RParen)?;
                }
                self.expect(Tok::Colon)?;
                let range_sort = self.ident("range sort")?;
                Stmt::Attr(AttributeDecl { name, arg_sorts, range_sort, is_random: false })
            }
            Tok::Ident(k) if k == "random" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let name = self.ident("attribute name")?;
                self.expect(Tok::RParen)?;
                Stmt::Random(name)
            }
            Tok::Ident(k) if k == "pr" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let head = self.atom()?;
                let mut condition = Vec::new();
                if *self.peek() == Tok::Bar {
                    self.bump();
                    if *self.peek() != Tok::RParen {
                        condition = self.literals()?;
                    }
                }
                self.expect(Tok::RParen)?;
                self.expect(Tok::Eq)?;
                let probability = self.probability()?;
                Stmt::Pr(PrAtom { head, condition, probability })
            }
            Tok::If => {
                self.bump();
                Stmt::Rule(LogicRule { head: None, body: self.literals()? })
            }
            Tok::Ident(_) => {
                let head = self.atom()?;
                if *self.peek() == Tok::If {
                    self.bump();
                    Stmt::Rule(LogicRule { head: Some(head), body: self.literals()? })
                } else {
                    Stmt::Fact(head)
                }
            }
            other => return self.err(format!("expected statement, found {}", other.describe())),
        };
        self.expect(Tok::Dot)?;
        Ok(stmt)
    }
}

/// Parse source text into positioned statements without semantic checks.
pub(crate) fn parse_statements(text: &str) -> KbResult<Vec<(Stmt, Pos)>> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let mut out = Vec::new();
    while *p.peek() != Tok::Eof {
        let pos = p.pos();
        out.push((p.statement()?, pos));
    }
    Ok(out)
}

/// Parse a single ground literal such as `next_cell=c1` or `not leftof(a,b)`.
pub fn parse_literal(text: &str) -> KbResult<Literal> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let lit = p.literal()?;
    if *p.peek() != Tok::Eof {
        return p.err("trailing input after literal");
    }
    Ok(lit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_numbers_and_identifiers() {
        let toks: Vec<Tok> = lex("0.8 8/10 c0_1 0 1e-3 Var").unwrap().into_iter().map(|t| t.0).collect();
        assert_eq!(
            toks,
            vec![
                Tok::Number("0.8".into()),
                Tok::Number("8".into()),
                Tok::Slash,
                Tok::Number("10".into()),
                Tok::Ident("c0_1".into()),
                Tok::Number("0".into()),
                Tok::Number("1e-3".into()),
                Tok::Var("Var".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn number_followed_by_statement_dot() {
        let stmts = parse_statements("pr(a=x) = 1.").unwrap();
        let Stmt::Pr(p) = &stmts[0].0 else { panic!() };
        assert_eq!(p.probability, Probability::ratio(1, 1));
    }

    #[test]
    fn reports_line_and_column() {
        let err = parse_statements("sort a = {x}.\n  sort b = x}.").unwrap_err();
        match err {
            KbError::Syntax { pos, .. } => assert_eq!(pos, Pos { line: 2, col: 12 }),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn comments_are_skipped() {
        let stmts = parse_statements("% header\nsort a = {x}. % trailing\n").unwrap();
        assert_eq!(stmts.len(), 1);
    }

    #[test]
    fn probability_out_of_range() {
        let err = parse_statements("pr(x=a | ) = 3/2.").unwrap_err();
        assert!(matches!(err, KbError::ProbabilityOutOfRange { .. }), "{err}");
        let err = parse_statements("pr(x=a) = 1/0.").unwrap_err();
        assert!(matches!(err, KbError::ProbabilityOutOfRange { .. }), "{err}");
    }

    #[test]
    fn parses_office_listings() {
        let src = "pr(curr_room(P)=R | place(P,R)=true) = 8/10.\n\
                   serve(I,R,P) :- act_item=I, act_room=R, act_person=P.\n\
                   pr(next_cell=C1 | curr_cell=C, leftof(C,C1), act_move=right) = 8/10.";
        let stmts = parse_statements(src).unwrap();
        assert_eq!(stmts.len(), 3);
        assert!(matches!(stmts[1].0, Stmt::Rule(_)));
    }

    #[test]
    fn literal_parser() {
        let l = parse_literal("not leftof(a, b)").unwrap();
        assert!(l.negated);
        assert_eq!(l.atom.args.len(), 2);
        assert!(parse_literal("a=b c").is_err());
    }
}
