//! Line-oriented N-Triples parser.
//!
//! Only what feature extraction needs: IRIs are unescaped, blank nodes and
//! literals are recognized and validated but carried as opaque terms.

use std::borrow::Cow;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term<'a> {
    Iri(Cow<'a, str>),
    BlankNode(&'a str),
    Literal {
        lexical: Cow<'a, str>,
        datatype: Option<Cow<'a, str>>,
        language: Option<&'a str>,
    },
}

impl<'a> Term<'a> {
    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(iri) => Some(iri),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple<'a> {
    pub subject: Term<'a>,
    pub predicate: Cow<'a, str>,
    pub object: Term<'a>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub column: usize,
    pub message: &'static str,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.column + 1, self.message)
    }
}

impl std::error::Error for SyntaxError {}

/// Parses one N-Triples line. Returns `Ok(None)` for blank and comment lines.
pub fn parse_line(line: &str) -> Result<Option<Triple<'_>>, SyntaxError> {
    let mut p = Cursor { src: line, pos: 0 };
    p.skip_ws();
    if p.at_end() || p.peek() == Some(b'#') {
        return Ok(None);
    }
    let subject = match p.peek() {
        Some(b'<') => Term::Iri(p.iri()?),
        Some(b'_') => Term::BlankNode(p.blank()?),
        _ => return Err(p.err("subject must be an IRI or blank node")),
    };
    p.require_ws()?;
    if p.peek() != Some(b'<') {
        return Err(p.err("predicate must be an IRI"));
    }
    let predicate = p.iri()?;
    p.require_ws()?;
    let object = match p.peek() {
        Some(b'<') => Term::Iri(p.iri()?),
        Some(b'_') => Term::BlankNode(p.blank()?),
        Some(b'"') => p.literal()?,
        _ => return Err(p.err("object must be an IRI, blank node or literal")),
    };
    p.skip_ws();
    if p.peek() != Some(b'.') {
        return Err(p.err("expected '.' terminating the triple"));
    }
    p.pos += 1;
    p.skip_ws();
    if !p.at_end() && p.peek() != Some(b'#') {
        return Err(p.err("trailing content after '.'"));
    }
    Ok(Some(Triple {
        subject,
        predicate,
        object,
    }))
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn err(&self, message: &'static str) -> SyntaxError {
        SyntaxError {
            column: self.pos,
            message,
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t')) {
            self.pos += 1;
        }
    }

    fn require_ws(&mut self) -> Result<(), SyntaxError> {
        let start = self.pos;
        self.skip_ws();
        // `<a><b>` is legal without separating whitespace.
        if self.pos == start && !matches!(self.peek(), Some(b'<' | b'"')) {
            return Err(self.err("expected whitespace"));
        }
        Ok(())
    }

    fn iri(&mut self) -> Result<Cow<'a, str>, SyntaxError> {
        debug_assert_eq!(self.peek(), Some(b'<'));
        self.pos += 1;
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut owned: Option<String> = None;
        let mut run_start = start;
        loop {
            let Some(b) = self.peek() else {
                return Err(self.err("unterminated IRI"));
            };
            match b {
                b'>' => {
                    let iri = match owned {
                        Some(mut s) => {
                            s.push_str(&self.src[run_start..self.pos]);
                            Cow::Owned(s)
                        }
                        None => Cow::Borrowed(&self.src[start..self.pos]),
                    };
                    self.pos += 1;
                    return Ok(iri);
                }
                b'\\' => {
                    let s = owned.get_or_insert_with(String::new);
                    s.push_str(&self.src[run_start..self.pos]);
                    self.pos += 1;
                    let c = self.uchar()?;
                    s.push(c);
                    run_start = self.pos;
                }
                0..=0x20 | b'<' | b'"' | b'{' | b'}' | b'|' | b'^' | b'`' => {
                    return Err(self.err("illegal character in IRI"));
                }
                _ => {
                    self.pos += utf8_len(bytes[self.pos]);
                }
            }
        }
    }

    /// Parses `uXXXX` / `UXXXXXXXX` after a backslash.
    fn uchar(&mut self) -> Result<char, SyntaxError> {
        let width = match self.peek() {
            Some(b'u') => 4,
            Some(b'U') => 8,
            _ => return Err(self.err("invalid escape in IRI")),
        };
        self.pos += 1;
        self.hex_char(width)
    }

    fn hex_char(&mut self, width: usize) -> Result<char, SyntaxError> {
        let end = self.pos + width;
        let digits = self
            .src
            .get(self.pos..end)
            .ok_or_else(|| self.err("truncated unicode escape"))?;
        let code = u32::from_str_radix(digits, 16).map_err(|_| self.err("invalid unicode escape"))?;
        let c = char::from_u32(code).ok_or_else(|| self.err("invalid code point"))?;
        self.pos = end;
        Ok(c)
    }

    fn blank(&mut self) -> Result<&'a str, SyntaxError> {
        if !self.src[self.pos..].starts_with("_:") {
            return Err(self.err("expected blank node label"));
        }
        self.pos += 2;
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b == b' ' || b == b'\t' || b == b'.' && self.is_terminal_dot() {
                break;
            }
            self.pos += utf8_len(b);
        }
        if self.pos == start {
            return Err(self.err("empty blank node label"));
        }
        Ok(&self.src[start..self.pos])
    }

    /// A '.' ends a blank node label when only whitespace or a comment follows.
    fn is_terminal_dot(&self) -> bool {
        let rest = self.src[self.pos + 1..].trim_start_matches([' ', '\t']);
        rest.is_empty() || rest.starts_with('#')
    }

    fn literal(&mut self) -> Result<Term<'a>, SyntaxError> {
        self.pos += 1;
        let start = self.pos;
        let mut owned: Option<String> = None;
        let mut run_start = start;
        let lexical = loop {
            let Some(b) = self.peek() else {
                return Err(self.err("unterminated literal"));
            };
            match b {
                b'"' => {
                    let lex = match owned.take() {
                        Some(mut s) => {
                            s.push_str(&self.src[run_start..self.pos]);
                            Cow::Owned(s)
                        }
                        None => Cow::Borrowed(&self.src[start..self.pos]),
                    };
                    self.pos += 1;
                    break lex;
                }
                b'\\' => {
                    let s = owned.get_or_insert_with(String::new);
                    s.push_str(&self.src[run_start..self.pos]);
                    self.pos += 1;
                    let c = match self.peek() {
                        Some(b't') => '\t',
                        Some(b'b') => '\u{8}',
                        Some(b'n') => '\n',
                        Some(b'r') => '\r',
                        Some(b'f') => '\u{c}',
                        Some(b'"') => '"',
                        Some(b'\'') => '\'',
                        Some(b'\\') => '\\',
                        Some(b'u') | Some(b'U') => {
                            let c = self.uchar()?;
                            s.push(c);
                            run_start = self.pos;
                            continue;
                        }
                        _ => return Err(self.err("invalid escape in literal")),
                    };
                    s.push(c);
                    self.pos += 1;
                    run_start = self.pos;
                }
                b'\n' | b'\r' => return Err(self.err("raw line break in literal")),
                _ => self.pos += utf8_len(b),
            }
        };
        let (datatype, language) = match self.peek() {
            Some(b'^') => {
                if !self.src[self.pos..].starts_with("^^<") {
                    return Err(self.err("expected ^^<datatype>"));
                }
                self.pos += 2;
                (Some(self.iri()?), None)
            }
            Some(b'@') => {
                self.pos += 1;
                let start = self.pos;
                while matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric() || b == b'-') {
                    self.pos += 1;
                }
                if self.pos == start {
                    return Err(self.err("empty language tag"));
                }
                (None, Some(&self.src[start..self.pos]))
            }
            _ => (None, None),
        };
        Ok(Term::Literal {
            lexical,
            datatype,
            language,
        })
    }
}

fn utf8_len(first: u8) -> usize {
    match first {
        0x00..=0x7f => 1,
        0xc0..=0xdf => 2,
        0xe0..=0xef => 3,
        _ => 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iri_triple() {
        let t = parse_line(
            "<http://dbpedia.org/resource/Toy_Story> <http://purl.org/dc/terms/subject> <http://dbpedia.org/resource/Category:American_films> .",
        )
        .unwrap()
        .unwrap();
        assert_eq!(t.subject.as_iri(), Some("http://dbpedia.org/resource/Toy_Story"));
        assert_eq!(t.predicate, "http://purl.org/dc/terms/subject");
        assert_eq!(
            t.object.as_iri(),
            Some("http://dbpedia.org/resource/Category:American_films")
        );
    }

    #[test]
    fn blank_and_comment_lines() {
        assert_eq!(parse_line("").unwrap(), None);
        assert_eq!(parse_line("   # comment").unwrap(), None);
    }

    #[test]
    fn literal_objects() {
        let t = parse_line(r#"<http://a> <http://b> "café \"x\""@en ."#)
            .unwrap()
            .unwrap();
        match t.object {
            Term::Literal { lexical, language, .. } => {
                assert_eq!(lexical, "café \"x\"");
                assert_eq!(language, Some("en"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let t = parse_line(r#"<http://a> <http://b> "5"^^<http://www.w3.org/2001/XMLSchema#int> ."#)
            .unwrap()
            .unwrap();
        assert!(matches!(t.object, Term::Literal { datatype: Some(_), .. }));
    }

    #[test]
    fn escaped_iri_is_unescaped() {
        let t = parse_line(r"<http://a/\u00C9> <http://b> <http://c> .")
            .unwrap()
            .unwrap();
        assert_eq!(t.subject.as_iri(), Some("http://a/É"));
    }

    #[test]
    fn blank_nodes() {
        let t = parse_line("_:b0 <http://b> _:b1.").unwrap().unwrap();
        assert_eq!(t.subject, Term::BlankNode("b0"));
        assert_eq!(t.object, Term::BlankNode("b1"));
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "<http://a> <http://b> <http://c>",
            "<http://a> <http://b>",
            "<http://a b> <http://b> <http://c> .",
            "\"lit\" <http://b> <http://c> .",
            "<http://a> _:p <http://c> .",
            "<http://a> <http://b> \"open .",
            "<http://a> <http://b> <http://c> . extra",
        ] {
            assert!(parse_line(bad).is_err(), "accepted {bad:?}");
        }
    }
}
