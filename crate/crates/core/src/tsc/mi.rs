//! Just enough of the debugger machine-interface output grammar to drive a
//! stepping session: result records, exec-async records and stream records.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Const(String),
    Tuple(BTreeMap<String, Value>),
    List(Vec<Value>),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Const(s) => Some(s),
            _ => None,
        }
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        match self {
            Value::Tuple(map) => map.get(key),
            _ => None,
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordKind {
    /// `^done`, `^running`, `^error`, ...
    Result(String),
    /// `*stopped`, `*running`
    ExecAsync(String),
    /// `=` and `+` records.
    Notify(String),
    /// `~`, `@`, `&` stream output.
    Stream(char, String),
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub token: Option<u64>,
    pub kind: RecordKind,
    pub results: BTreeMap<String, Value>,
}

impl Record {
    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.results.get(key).and_then(Value::as_str)
    }
}

/// Parses one output line. Lines that are not MI records (for example
/// stray program output) yield `None`.
pub fn parse_line(line: &str) -> Option<Record> {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.trim() == "(gdb)" {
        return Some(Record {
            token: None,
            kind: RecordKind::Prompt,
            results: BTreeMap::new(),
        });
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    let token = if digits > 0 { line[..digits].parse().ok() } else { None };
    let rest = &line[digits..];
    let mut chars = rest.chars();
    let marker = chars.next()?;
    let body = chars.as_str();
    match marker {
        '~' | '@' | '&' => {
            let mut p = Parser::new(body);
            let text = p.cstring()?;
            Some(Record {
                token,
                kind: RecordKind::Stream(marker, text),
                results: BTreeMap::new(),
            })
        }
        '^' | '*' | '=' | '+' => {
            let (class, tail) = match body.find(',') {
                Some(i) => (&body[..i], &body[i + 1..]),
                None => (body, ""),
            };
            if class.is_empty() || !class.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_') {
                return None;
            }
            let mut p = Parser::new(tail);
            let results = if tail.is_empty() { BTreeMap::new() } else { p.results()? };
            let kind = match marker {
                '^' => RecordKind::Result(class.to_string()),
                '*' => RecordKind::ExecAsync(class.to_string()),
                _ => RecordKind::Notify(class.to_string()),
            };
            Some(Record { token, kind, results })
        }
        _ => None,
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> Option<()> {
        (self.peek()? == b).then(|| self.pos += 1)
    }

    fn results(&mut self) -> Option<BTreeMap<String, Value>> {
        let mut map = BTreeMap::new();
        loop {
            let (k, v) = self.result()?;
            map.insert(k, v);
            if self.eat(b',').is_none() {
                break;
            }
        }
        (self.pos == self.src.len()).then_some(map)
    }

    fn result(&mut self) -> Option<(String, Value)> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b == b'=' {
                break;
            }
            self.pos += 1;
        }
        let key = std::str::from_utf8(&self.src[start..self.pos]).ok()?.to_string();
        self.eat(b'=')?;
        Some((key, self.value()?))
    }

    fn value(&mut self) -> Option<Value> {
        match self.peek()? {
            b'"' => self.cstring().map(Value::Const),
            b'{' => {
                self.pos += 1;
                let mut map = BTreeMap::new();
                if self.eat(b'}').is_some() {
                    return Some(Value::Tuple(map));
                }
                loop {
                    let (k, v) = self.result()?;
                    map.insert(k, v);
                    if self.eat(b',').is_none() {
                        break;
                    }
                }
                self.eat(b'}')?;
                Some(Value::Tuple(map))
            }
            b'[' => {
                self.pos += 1;
                let mut items = Vec::new();
                if self.eat(b']').is_some() {
                    return Some(Value::List(items));
                }
                loop {
                    // Lists hold either bare values or `name=value` results;
                    // for the latter the names carry no information here.
                    let item = match self.peek()? {
                        b'"' | b'{' | b'[' => self.value()?,
                        _ => self.result()?.1,
                    };
                    items.push(item);
                    if self.eat(b',').is_none() {
                        break;
                    }
                }
                self.eat(b']')?;
                Some(Value::List(items))
            }
            _ => None,
        }
    }

    fn cstring(&mut self) -> Option<String> {
        self.eat(b'"')?;
        let mut out = Vec::new();
        loop {
            let b = self.peek()?;
            self.pos += 1;
            match b {
                b'"' => break,
                b'\\' => {
                    let e = self.peek()?;
                    self.pos += 1;
                    match e {
                        b'n' => out.push(b'\n'),
                        b't' => out.push(b'\t'),
                        b'r' => out.push(b'\r'),
                        b'0'..=b'7' => {
                            let mut v = (e - b'0') as u32;
                            for _ in 0..2 {
                                match self.peek() {
                                    Some(d @ b'0'..=b'7') => {
                                        v = v * 8 + (d - b'0') as u32;
                                        self.pos += 1;
                                    }
                                    _ => break,
                                }
                            }
                            out.push(v as u8);
                        }
                        other => out.push(other),
                    }
                }
                other => out.push(other),
            }
        }
        Some(String::from_utf8_lossy(&out).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopped_record() {
        let line = r#"*stopped,reason="end-stepping-range",frame={addr="0x0000555555555249",func="sort",args=[{name="list",value="std::vector of length 5"}],file="sort.cpp",fullname="/tmp/x/sort.cpp",line="9",arch="i386:x86-64"},thread-id="1",stopped-threads="all",core="0""#;
        let r = parse_line(line).unwrap();
        assert_eq!(r.kind, RecordKind::ExecAsync("stopped".into()));
        assert_eq!(r.get_str("reason"), Some("end-stepping-range"));
        let frame = &r.results["frame"];
        assert_eq!(frame.get_str("func"), Some("sort"));
        assert_eq!(frame.get_str("line"), Some("9"));
        assert_eq!(frame.get_str("addr"), Some("0x0000555555555249"));
    }

    #[test]
    fn tokens_errors_and_streams() {
        let r = parse_line(r#"12^error,msg="Function \"nope\" not defined.""#).unwrap();
        assert_eq!(r.token, Some(12));
        assert_eq!(r.kind, RecordKind::Result("error".into()));
        assert_eq!(r.get_str("msg"), Some("Function \"nope\" not defined."));

        let r = parse_line(r#"~"Reading symbols\n""#).unwrap();
        assert_eq!(r.kind, RecordKind::Stream('~', "Reading symbols\n".into()));

        let r = parse_line("3^done,depth=\"2\"").unwrap();
        assert_eq!(r.get_str("depth"), Some("2"));

        assert_eq!(parse_line("(gdb) ").unwrap().kind, RecordKind::Prompt);
        assert!(parse_line("1 2 3 4 5 ").is_none());
        assert!(parse_line("").is_none());
    }

    #[test]
    fn nested_lists() {
        let r = parse_line(r#"4^done,stack=[frame={level="1",addr="0x401136",func="main"}]"#).unwrap();
        match &r.results["stack"] {
            Value::List(items) => assert_eq!(items[0].get_str("addr"), Some("0x401136")),
            other => panic!("{other:?}"),
        }
    }
}
