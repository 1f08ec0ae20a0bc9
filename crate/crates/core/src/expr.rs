//! A small arithmetic expression language.
//!
//! Nonlinearities, bound families and bracket functions are written in this
//! language inside config files. Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" unary)?          right-associative
//! primary := number | ident | ident "(" args ")" | "(" sum ")"
//! ```
//!
//! Functions: `sin cos tan exp log sqrt abs atan` (one argument) and
//! `min max` (two arguments). Constants: `pi`, `e`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("function `{func}` takes {expected} argument(s), got {found}")]
    Arity {
        func: &'static str,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("non-finite value {value} from `{subexpr}`")]
    NonFinite { value: f64, subexpr: String },
    #[error("negative base raised to non-integer power in `{subexpr}`")]
    ComplexPower { subexpr: String },
    #[error("no binding for variable `{0}`")]
    Unbound(String),
    #[error("expected {expected} variable value(s), got {found}")]
    BindingCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Atan,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Atan,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Atan => "atan",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }

    fn apply(self, args: &[f64]) -> f64 {
        let a = args[0];
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tan => a.tan(),
            Func::Exp => a.exp(),
            Func::Log => a.ln(),
            Func::Sqrt => a.sqrt(),
            Func::Abs => a.abs(),
            Func::Atan => a.atan(),
            Func::Min => a.min(args[1]),
            Func::Max => a.max(args[1]),
        }
    }
}

/// Syntax tree. Variables are stored as indices into the declared
/// variable list of the owning [`Expression`].
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    E,
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression together with the variable names it may reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    vars: Vec<String>,
    source: String,
}

impl Expression {
    /// Parse `source`, accepting only the identifiers in `allowed_vars`
    /// besides the built-in constants and functions.
    pub fn parse(source: &str, allowed_vars: &[&str]) -> Result<Self, ParseError> {
        let tokens = tokenize(source)?;
        if tokens.is_empty() {
            return Err(ParseError::Syntax {
                pos: 0,
                msg: "empty expression".into(),
            });
        }
        let mut parser = Parser {
            tokens: &tokens,
            idx: 0,
            vars: allowed_vars,
            end: source.len(),
        };
        let root = parser.sum()?;
        if let Some(tok) = parser.peek() {
            return Err(ParseError::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {}", tok.kind),
            });
        }
        Ok(Expression {
            root,
            vars: allowed_vars.iter().map(|v| v.to_string()).collect(),
            source: source.to_string(),
        })
    }

    /// Build an expression directly from a tree.
    pub fn from_node(root: Node, vars: &[&str]) -> Self {
        let mut e = Expression {
            root,
            vars: vars.iter().map(|v| v.to_string()).collect(),
            source: String::new(),
        };
        e.source = e.to_string();
        e
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// The text this expression was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluate with positional values, one per declared variable.
    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        if values.len() != self.vars.len() {
            return Err(EvalError::BindingCount {
                expected: self.vars.len(),
                found: values.len(),
            });
        }
        self.eval_node(&self.root, values)
    }

    /// Evaluate with named bindings.
    pub fn evaluate(&self, bindings: &[(&str, f64)]) -> Result<f64, EvalError> {
        let values = self
            .vars
            .iter()
            .map(|name| {
                bindings
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| EvalError::Unbound(name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.eval_node(&self.root, &values)
    }

    /// True when the tree references variable `name`.
    pub fn uses_var(&self, name: &str) -> bool {
        fn walk(n: &Node, idx: usize) -> bool {
            match n {
                Node::Var(i) => *i == idx,
                Node::Neg(a) => walk(a, idx),
                Node::Bin(_, a, b) => walk(a, idx) || walk(b, idx),
                Node::Call(_, args) => args.iter().any(|a| walk(a, idx)),
                _ => false,
            }
        }
        match self.vars.iter().position(|v| v == name) {
            Some(idx) => walk(&self.root, idx),
            None => false,
        }
    }

    fn eval_node(&self, node: &Node, values: &[f64]) -> Result<f64, EvalError> {
        let v = match node {
            Node::Num(x) => *x,
            Node::Pi => std::f64::consts::PI,
            Node::E => std::f64::consts::E,
            Node::Var(i) => values[*i],
            Node::Neg(a) => -self.eval_node(a, values)?,
            Node::Bin(op, a, b) => {
                let x = self.eval_node(a, values)?;
                let y = self.eval_node(b, values)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Pow => {
                        if x < 0.0 && y.fract() != 0.0 {
                            return Err(EvalError::ComplexPower {
                                subexpr: self.render(node),
                            });
                        }
                        x.powf(y)
                    }
                }
            }
            Node::Call(f, args) => {
                let mut vals = [0.0; 2];
                for (slot, a) in vals.iter_mut().zip(args) {
                    *slot = self.eval_node(a, values)?;
                }
                f.apply(&vals[..args.len()])
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                value: v,
                subexpr: self.render(node),
            })
        }
    }

    fn render(&self, node: &Node) -> String {
        let mut s = String::new();
        write_node(&mut s, node, &self.vars).expect("writing to a String");
        s
    }
}

/// Fully parenthesised rendering; re-parsing it yields an equivalent tree.
impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.vars)
    }
}

fn write_node<W: fmt::Write>(w: &mut W, node: &Node, vars: &[String]) -> fmt::Result {
    match node {
        Node::Num(x) if *x < 0.0 => write!(w, "(-{:?})", -x),
        Node::Num(x) => write!(w, "{:?}", x),
        Node::Pi => w.write_str("pi"),
        Node::E => w.write_str("e"),
        Node::Var(i) => w.write_str(&vars[*i]),
        Node::Neg(a) => {
            w.write_str("(-")?;
            write_node(w, a, vars)?;
            w.write_char(')')
        }
        Node::Bin(op, a, b) => {
            w.write_char('(')?;
            write_node(w, a, vars)?;
            w.write_char(op.symbol())?;
            write_node(w, b, vars)?;
            w.write_char(')')
        }
        Node::Call(f, args) => {
            write!(w, "{}(", f.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    w.write_char(',')?;
                }
                write_node(w, a, vars)?;
            }
            w.write_char(')')
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Num(x) => write!(f, "number {x}"),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Op(c) => write!(f, "`{c}`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::Comma => f.write_str("`,`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match c {
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value = text.parse::<f64>().map_err(|_| ParseError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{text}`"),
                })?;
                TokenKind::Num(value)
            }
            b'a'..=b'z' | b'A'..=b'Z' => {
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                TokenKind::Ident(src[start..i].to_string())
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                i += 1;
                TokenKind::Op(c as char)
            }
            b'(' => {
                i += 1;
                TokenKind::LParen
            }
            b')' => {
                i += 1;
                TokenKind::RParen
            }
            b',' => {
                i += 1;
                TokenKind::Comma
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{ch}`"),
                });
            }
        };
        out.push(Token { kind, pos: start });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    idx: usize,
    vars: &'a [&'a str],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.idx)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.idx).cloned();
        self.idx += 1;
        t
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c), ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn eof_error(&self) -> ParseError {
        ParseError::Syntax {
            pos: self.end,
            msg: "unexpected end of input".into(),
        }
    }

    fn sum(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.product()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.idx += 1;
            let rhs = self.product()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.idx += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek_op() == Some('-') {
            self.idx += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek_op() == Some('^') {
            self.idx += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let tok = self.next().ok_or_else(|| self.eof_error())?;
        match tok.kind {
            TokenKind::Num(x) => Ok(Node::Num(x)),
            TokenKind::LParen => {
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.identifier(name, tok.pos),
            other => Err(ParseError::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {other}"),
            }),
        }
    }

    fn identifier(&mut self, name: String, pos: usize) -> Result<Node, ParseError> {
        let is_call = matches!(
            self.peek(),
            Some(Token {
                kind: TokenKind::LParen,
                ..
            })
        );
        if is_call {
            let func = Func::lookup(&name).ok_or(ParseError::UnknownIdentifier {
                name: name.clone(),
                pos,
            })?;
            self.idx += 1;
            let mut args = vec![self.sum()?];
            while matches!(
                self.peek(),
                Some(Token {
                    kind: TokenKind::Comma,
                    ..
                })
            ) {
                self.idx += 1;
                args.push(self.sum()?);
            }
            self.expect_rparen()?;
            if args.len() != func.arity() {
                return Err(ParseError::Arity {
                    func: func.name(),
                    expected: func.arity(),
                    found: args.len(),
                });
            }
            return Ok(Node::Call(func, args));
        }
        if let Some(idx) = self.vars.iter().position(|v| *v == name) {
            return Ok(Node::Var(idx));
        }
        match name.as_str() {
            "pi" => Ok(Node::Pi),
            "e" => Ok(Node::E),
            _ => Err(ParseError::UnknownIdentifier { name, pos }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.next() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => Ok(()),
            Some(t) => Err(ParseError::Syntax {
                pos: t.pos,
                msg: format!("expected `)`, found {}", t.kind),
            }),
            None => Err(self.eof_error()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval0(src: &str) -> Result<f64, EvalError> {
        Expression::parse(src, &[]).unwrap().eval(&[])
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval0("1+2*3").unwrap(), 7.0);
        assert_eq!(eval0("2^3^2").unwrap(), 512.0);
        assert_eq!(eval0("-2^2").unwrap(), -4.0);
        assert_eq!(eval0("10-4-3").unwrap(), 3.0);
        assert_eq!(eval0("16/4/2").unwrap(), 2.0);
        assert_eq!(eval0("2^-1").unwrap(), 0.5);
        assert_eq!(eval0("1.5e2 + .5").unwrap(), 150.5);
    }

    #[test]
    fn example_nonlinearity_at_origin() {
        let f = Expression::parse("(2+sin(t))/1000*exp(-abs(x))*abs(1-x)/(x^2+1)*(y-1)", &["t", "x", "y"]).unwrap();
        let v = f.eval(&[0.0, 0.0, 0.0]).unwrap();
        assert!((v + 0.002).abs() < 1e-15, "{v}");
    }

    #[test]
    fn example_lower_solution_at_zero() {
        let a = Expression::parse("-(t+1)*exp(-t)*3/400 + 3/400*(t^2-t)/(t^2+1)", &["t"]).unwrap();
        assert!((a.evaluate(&[("t", 0.0)]).unwrap() + 0.0075).abs() < 1e-15);
    }

    #[test]
    fn unknown_identifier() {
        let err = Expression::parse("sin(q)", &["t"]).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdentifier {
                name: "q".into(),
                pos: 4
            }
        );
        assert!(matches!(
            Expression::parse("foo(t)", &["t"]),
            Err(ParseError::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn arity_and_syntax_errors() {
        assert!(matches!(
            Expression::parse("min(1)", &[]),
            Err(ParseError::Arity { func: "min", .. })
        ));
        assert!(matches!(
            Expression::parse("sin(1,2)", &[]),
            Err(ParseError::Arity { func: "sin", .. })
        ));
        assert!(matches!(
            Expression::parse("1+", &[]),
            Err(ParseError::Syntax { pos: 2, .. })
        ));
        assert!(matches!(Expression::parse("(1", &[]), Err(ParseError::Syntax { .. })));
        assert!(matches!(
            Expression::parse("1 $ 2", &[]),
            Err(ParseError::Syntax { pos: 2, .. })
        ));
        assert!(Expression::parse("   ", &[]).is_err());
    }

    #[test]
    fn non_finite_results_are_errors() {
        let inv = Expression::parse("1/t", &["t"]).unwrap();
        match inv.eval(&[0.0]) {
            Err(EvalError::NonFinite { subexpr, .. }) => assert_eq!(subexpr, "(1.0/t)"),
            other => panic!("{other:?}"),
        }
        assert!(eval0("log(0-1)").is_err());
        assert!(eval0("sqrt(-1)").is_err());
        assert!(eval0("exp(1000)").is_err());
        assert!(matches!(eval0("(-8)^(1/3)"), Err(EvalError::ComplexPower { .. })));
        assert_eq!(eval0("(-2)^3").unwrap(), -8.0);
    }

    #[test]
    fn functions_and_constants() {
        assert_eq!(eval0("max(1, min(5, 3))").unwrap(), 3.0);
        assert!((eval0("atan(1)*4 - pi").unwrap()).abs() < 1e-15);
        assert!((eval0("log(e)").unwrap() - 1.0).abs() < 1e-15);
        assert!((eval0("sqrt(2)^2 - 2").unwrap()).abs() < 1e-15);
        assert!((eval0("tan(0)+cos(0)").unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn named_bindings() {
        let e = Expression::parse("t*r", &["t", "r"]).unwrap();
        assert_eq!(e.evaluate(&[("r", 2.0), ("t", 3.0)]).unwrap(), 6.0);
        assert!(matches!(e.evaluate(&[("t", 1.0)]), Err(EvalError::Unbound(_))));
        assert!(e.uses_var("r"));
        assert!(!Expression::parse("t", &["t", "r"]).unwrap().uses_var("r"));
    }

    fn arb_node(depth: u32) -> BoxedStrategy<Node> {
        let leaf = prop_oneof![
            (0.0f64..10.0).prop_map(Node::Num),
            (-5.0f64..0.0).prop_map(Node::Num),
            Just(Node::Pi),
            Just(Node::E),
            (0usize..2).prop_map(Node::Var),
        ];
        if depth == 0 {
            return leaf.boxed();
        }
        let sub = arb_node(depth - 1);
        prop_oneof![
            leaf,
            sub.clone().prop_map(|a| Node::Neg(Box::new(a))),
            (
                prop_oneof![
                    Just(BinOp::Add),
                    Just(BinOp::Sub),
                    Just(BinOp::Mul),
                    Just(BinOp::Div),
                    Just(BinOp::Pow)
                ],
                sub.clone(),
                sub.clone()
            )
                .prop_map(|(op, a, b)| Node::Bin(op, Box::new(a), Box::new(b))),
            (
                prop_oneof![Just(Func::Sin), Just(Func::Atan), Just(Func::Abs)],
                sub.clone()
            )
                .prop_map(|(f, a)| Node::Call(f, vec![a])),
            (sub.clone(), sub).prop_map(|(a, b)| Node::Call(Func::Max, vec![a, b])),
        ]
        .boxed()
    }

    proptest! {
        #[test]
        fn print_then_parse_is_evaluation_equivalent(
            node in arb_node(4),
            inputs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1000),
        ) {
            let original = Expression::from_node(node, &["t", "x"]);
            let reparsed = Expression::parse(&original.to_string(), &["t", "x"]).unwrap();
            for (t, x) in inputs {
                let a = original.eval(&[t, x]);
                let b = reparsed.eval(&[t, x]);
                match (a, b) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
                }
            }
        }

        #[test]
        fn evaluation_is_deterministic(t in -10.0f64..10.0, x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let f = Expression::parse(
                "(2+sin(t))/1000*exp(-abs(x))*abs(1-x)/(x^2+1)*(y-1)",
                &["t", "x", "y"],
            ).unwrap();
            let a = f.eval(&[t, x, y]).unwrap();
            let b = f.eval(&[t, x, y]).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
