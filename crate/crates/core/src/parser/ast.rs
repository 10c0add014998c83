use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Syntactic label of an AST node.
///
/// `Block` groups the statements of a suite so that an `if` body and its
/// `else` branch stay distinguishable. It has no counterpart in Python's
/// `ast` and is excluded from span extraction by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Label {
    Module,
    Block,
    FunctionDef,
    Arg,
    IfStmt,
    ForStmt,
    WhileStmt,
    ReturnStmt,
    Assign,
    ExprStmt,
    Pass,
    Break,
    Continue,
    Call,
    Compare,
    BinOp,
    BoolOp,
    UnaryOp,
    Name,
    Constant,
    Gt,
    Lt,
    GtE,
    LtE,
    Eq,
    NotEq,
    Add,
    Sub,
    Mult,
    Div,
    Mod,
    And,
    Or,
    Not,
    USub,
}

impl Label {
    pub const ALL: &'static [Label] = &[
        Label::Module,
        Label::Block,
        Label::FunctionDef,
        Label::Arg,
        Label::IfStmt,
        Label::ForStmt,
        Label::WhileStmt,
        Label::ReturnStmt,
        Label::Assign,
        Label::ExprStmt,
        Label::Pass,
        Label::Break,
        Label::Continue,
        Label::Call,
        Label::Compare,
        Label::BinOp,
        Label::BoolOp,
        Label::UnaryOp,
        Label::Name,
        Label::Constant,
        Label::Gt,
        Label::Lt,
        Label::GtE,
        Label::LtE,
        Label::Eq,
        Label::NotEq,
        Label::Add,
        Label::Sub,
        Label::Mult,
        Label::Div,
        Label::Mod,
        Label::And,
        Label::Or,
        Label::Not,
        Label::USub,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Module => "MODULE",
            Label::Block => "BLOCK",
            Label::FunctionDef => "FUNCTIONDEF",
            Label::Arg => "ARG",
            Label::IfStmt => "IFSTMT",
            Label::ForStmt => "FORSTMT",
            Label::WhileStmt => "WHILESTMT",
            Label::ReturnStmt => "RETURNSTMT",
            Label::Assign => "ASSIGN",
            Label::ExprStmt => "EXPRSTMT",
            Label::Pass => "PASS",
            Label::Break => "BREAK",
            Label::Continue => "CONTINUE",
            Label::Call => "CALL",
            Label::Compare => "COMPARE",
            Label::BinOp => "BINOP",
            Label::BoolOp => "BOOLOP",
            Label::UnaryOp => "UNARYOP",
            Label::Name => "NAME",
            Label::Constant => "CONSTANT",
            Label::Gt => "GT",
            Label::Lt => "LT",
            Label::GtE => "GTE",
            Label::LtE => "LTE",
            Label::Eq => "EQ",
            Label::NotEq => "NOTEQ",
            Label::Add => "ADD",
            Label::Sub => "SUB",
            Label::Mult => "MULT",
            Label::Div => "DIV",
            Label::Mod => "MOD",
            Label::And => "AND",
            Label::Or => "OR",
            Label::Not => "NOT",
            Label::USub => "USUB",
        }
    }

    /// Operator leaves carry the operator's token text.
    pub fn is_operator(self) -> bool {
        matches!(
            self,
            Label::Gt
                | Label::Lt
                | Label::GtE
                | Label::LtE
                | Label::Eq
                | Label::NotEq
                | Label::Add
                | Label::Sub
                | Label::Mult
                | Label::Div
                | Label::Mod
                | Label::And
                | Label::Or
                | Label::Not
                | Label::USub
        )
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown syntactic label {:?}", self.0)
    }
}

impl std::error::Error for UnknownLabel {}

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == upper)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl From<Label> for String {
    fn from(label: Label) -> String {
        label.as_str().to_string()
    }
}

impl TryFrom<String> for Label {
    type Error = UnknownLabel;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// A node of the syntax tree. Offsets are byte offsets, half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub label: Label,
    pub children: Vec<AstNode>,
    pub char_start: usize,
    pub char_end: usize,
    /// Lexical token for leaves (names, constants, operators, keyword statements).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
}

impl AstNode {
    pub fn new(label: Label, children: Vec<AstNode>, char_start: usize, char_end: usize) -> Self {
        AstNode {
            label,
            children,
            char_start,
            char_end,
            token: None,
        }
    }

    pub fn leaf(label: Label, token: &str, char_start: usize, char_end: usize) -> Self {
        AstNode {
            label,
            children: Vec::new(),
            char_start,
            char_end,
            token: Some(token.to_string()),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Visits nodes in pre-order (the linearization used for span lists).
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a AstNode, usize)) {
        fn go<'a>(node: &'a AstNode, depth: usize, f: &mut impl FnMut(&'a AstNode, usize)) {
            f(node, depth);
            for child in &node.children {
                go(child, depth + 1, f);
            }
        }
        go(self, 0, f);
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_, _| n += 1);
        n
    }

    /// Label-and-shape equality, ignoring offsets.
    pub fn same_shape(&self, other: &AstNode) -> bool {
        self.label == other.label
            && self.token == other.token
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.same_shape(b))
    }

    /// Checks containment of children in parents and ordering of siblings.
    /// Returns a description of the first violation found.
    pub fn check_nesting(&self) -> Result<(), String> {
        if self.char_start > self.char_end {
            return Err(format!(
                "{} has inverted span [{}, {})",
                self.label, self.char_start, self.char_end
            ));
        }
        let mut prev_end = self.char_start;
        for child in &self.children {
            if child.char_start < self.char_start || child.char_end > self.char_end {
                return Err(format!(
                    "{} [{}, {}) escapes parent {} [{}, {})",
                    child.label, child.char_start, child.char_end, self.label, self.char_start, self.char_end
                ));
            }
            if child.char_start < prev_end {
                return Err(format!(
                    "{} [{}, {}) overlaps its previous sibling",
                    child.label, child.char_start, child.char_end
                ));
            }
            prev_end = child.char_end;
            child.check_nesting()?;
        }
        Ok(())
    }

    /// S-expression rendering, handy in tests and the CLI.
    pub fn to_sexpr(&self) -> String {
        let mut out = String::new();
        self.write_sexpr(&mut out);
        out
    }

    fn write_sexpr(&self, out: &mut String) {
        out.push_str(self.label.as_str());
        if let Some(tok) = &self.token {
            if self.children.is_empty() {
                out.push(' ');
                out.push_str(&format!("{tok:?}"));
            }
        }
        if !self.children.is_empty() {
            out.push('(');
            for (i, child) in self.children.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                child.write_sexpr(out);
            }
            out.push(')');
        }
    }
}

impl fmt::Display for AstNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut result = Ok(());
        self.walk(&mut |node, depth| {
            if result.is_err() {
                return;
            }
            result = write!(
                f,
                "{:indent$}{} [{}, {})",
                "",
                node.label,
                node.char_start,
                node.char_end,
                indent = depth * 2
            )
            .and_then(|_| match &node.token {
                Some(tok) if node.is_leaf() => writeln!(f, " {tok:?}"),
                _ => writeln!(f),
            });
        });
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip_through_strings() {
        for &label in Label::ALL {
            assert_eq!(label.as_str().parse::<Label>().unwrap(), label);
        }
        assert_eq!("assign".parse::<Label>().unwrap(), Label::Assign);
        assert!("LAMBDA".parse::<Label>().is_err());
    }

    #[test]
    fn nesting_check_catches_escaping_child() {
        let bad = AstNode::new(
            Label::Assign,
            vec![
                AstNode::leaf(Label::Name, "x", 0, 1),
                AstNode::leaf(Label::Constant, "1", 4, 9),
            ],
            0,
            5,
        );
        assert!(bad.check_nesting().is_err());
        let overlapping = AstNode::new(
            Label::Assign,
            vec![
                AstNode::leaf(Label::Name, "x", 0, 3),
                AstNode::leaf(Label::Constant, "1", 2, 5),
            ],
            0,
            5,
        );
        assert!(overlapping.check_nesting().is_err());
    }
}
