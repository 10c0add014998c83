//! Recursive-descent parser for the mini language.
//!
//! ```text
//! module     := stmt*
//! stmt       := funcdef | if | for | while | simple NEWLINE
//! funcdef    := 'def' NAME '(' [NAME (',' NAME)*] ')' ':' block
//! if         := 'if' expr ':' block ('elif' expr ':' block)* ['else' ':' block]
//! for        := 'for' NAME 'in' expr ':' block
//! while      := 'while' expr ':' block
//! block      := NEWLINE INDENT stmt+ DEDENT
//! simple     := 'return' [expr] | 'pass' | 'break' | 'continue'
//!             | NAME '=' expr | expr
//! expr       := and ('or' and)*
//! and        := not ('and' not)*
//! not        := 'not' not | comparison
//! comparison := arith (cmp_op arith)*
//! arith      := term (('+' | '-') term)*
//! term       := unary (('*' | '/' | '%') unary)*
//! unary      := '-' unary | postfix
//! postfix    := primary ('(' [expr (',' expr)*] ')')*
//! primary    := NAME | NUMBER | STRING | 'True' | 'False' | 'None' | '(' expr ')'
//! ```
//!
//! `elif` becomes an `IFSTMT` in the else position of its parent. Errors are
//! collected per statement; the parser resynchronizes at the next line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{AstNode, Label};
use super::lexer::{lex, Lexeme, LexemeKind};

const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ParseResult {
    pub root: AstNode,
    pub lexemes: Vec<Lexeme>,
    pub diagnostics: Vec<ParseError>,
}

impl ParseResult {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Parses `source` into a `MODULE` tree. Never panics; problems are reported
/// in `diagnostics` and the returned tree holds every statement that parsed.
pub fn parse(source: &str) -> ParseResult {
    let lexemes = match lex(source) {
        Ok(lexemes) => lexemes,
        Err(err) => {
            return ParseResult {
                root: AstNode::new(Label::Module, Vec::new(), 0, 0),
                lexemes: Vec::new(),
                diagnostics: vec![ParseError {
                    offset: err.offset,
                    message: err.kind.to_string(),
                }],
            }
        }
    };
    let mut parser = Parser {
        lexemes: &lexemes,
        pos: 0,
        depth: 0,
        eof_offset: source.len(),
        diagnostics: Vec::new(),
    };
    let root = parser.module();
    let diagnostics = parser.diagnostics;
    ParseResult {
        root,
        lexemes,
        diagnostics,
    }
}

/// Like [`parse`], for input that may not be UTF-8.
pub fn parse_bytes(bytes: &[u8]) -> ParseResult {
    match std::str::from_utf8(bytes) {
        Ok(source) => parse(source),
        Err(err) => ParseResult {
            root: AstNode::new(Label::Module, Vec::new(), 0, 0),
            lexemes: Vec::new(),
            diagnostics: vec![ParseError {
                offset: err.valid_up_to(),
                message: "invalid UTF-8".to_string(),
            }],
        },
    }
}

/// An expression node together with its extent including any parentheses.
struct Expr {
    node: AstNode,
    start: usize,
    end: usize,
}

impl Expr {
    fn bare(node: AstNode) -> Self {
        Expr {
            start: node.char_start,
            end: node.char_end,
            node,
        }
    }
}

type PResult<T> = Result<T, ParseError>;

struct Parser<'a> {
    lexemes: &'a [Lexeme],
    pos: usize,
    depth: usize,
    eof_offset: usize,
    diagnostics: Vec<ParseError>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Lexeme> {
        self.lexemes.get(self.pos)
    }

    fn peek_at(&self, ahead: usize) -> Option<&'a Lexeme> {
        self.lexemes.get(self.pos + ahead)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.eof_offset, |l| l.char_start)
    }

    fn at(&self, kind: LexemeKind, text: &str) -> bool {
        self.peek().is_some_and(|l| l.is(kind, text))
    }

    fn at_kind(&self, kind: LexemeKind) -> bool {
        self.peek().is_some_and(|l| l.kind == kind)
    }

    fn bump(&mut self) -> &'a Lexeme {
        let lexeme = &self.lexemes[self.pos];
        self.pos += 1;
        lexeme
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn describe_current(&self) -> String {
        match self.peek() {
            None => "end of input".to_string(),
            Some(l) if l.text.is_empty() || l.text == "\n" => l.kind.to_string(),
            Some(l) => format!("{} {:?}", l.kind, l.text),
        }
    }

    fn expect(&mut self, kind: LexemeKind, text: &str) -> PResult<&'a Lexeme> {
        if self.at(kind, text) {
            Ok(self.bump())
        } else {
            self.error(format!("expected {text:?}, found {}", self.describe_current()))
        }
    }

    fn expect_kind(&mut self, kind: LexemeKind) -> PResult<&'a Lexeme> {
        if self.at_kind(kind) {
            Ok(self.bump())
        } else {
            self.error(format!("expected {kind}, found {}", self.describe_current()))
        }
    }

    fn enter(&mut self) -> PResult<()> {
        if self.depth >= MAX_DEPTH {
            return self.error("nesting too deep");
        }
        self.depth += 1;
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn module(&mut self) -> AstNode {
        let mut body = Vec::new();
        while self.peek().is_some() {
            if self.at_kind(LexemeKind::Dedent) {
                let err = self.error::<()>("unexpected dedent").unwrap_err();
                self.diagnostics.push(err);
                self.pos += 1;
                continue;
            }
            self.statement_into(&mut body);
        }
        let (start, end) = extent(&body);
        AstNode::new(Label::Module, body, start, end)
    }

    fn statement_into(&mut self, body: &mut Vec<AstNode>) {
        let depth = self.depth;
        match self.statement() {
            Ok(stmt) => body.push(stmt),
            Err(err) => {
                self.depth = depth;
                self.diagnostics.push(err);
                self.synchronize();
            }
        }
    }

    /// Skips to the start of the next statement at the current indentation.
    fn synchronize(&mut self) {
        if !self.at_kind(LexemeKind::Indent) {
            while let Some(l) = self.peek() {
                self.pos += 1;
                if l.kind == LexemeKind::Newline {
                    break;
                }
            }
        }
        if self.at_kind(LexemeKind::Indent) {
            let mut level = 0usize;
            while let Some(l) = self.peek() {
                self.pos += 1;
                match l.kind {
                    LexemeKind::Indent => level += 1,
                    LexemeKind::Dedent => {
                        level -= 1;
                        if level == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    fn statement(&mut self) -> PResult<AstNode> {
        let Some(first) = self.peek() else {
            return self.error("expected a statement");
        };
        if first.kind == LexemeKind::Indent {
            return self.error("unexpected indent");
        }
        if first.kind == LexemeKind::Keyword {
            match first.text.as_str() {
                "def" => return self.function_def(),
                "if" => return self.if_stmt(),
                "for" => return self.for_stmt(),
                "while" => return self.while_stmt(),
                _ => {}
            }
        }
        let stmt = self.simple_statement()?;
        self.expect_kind(LexemeKind::Newline)?;
        Ok(stmt)
    }

    fn simple_statement(&mut self) -> PResult<AstNode> {
        let first = self.peek().expect("checked by caller");
        if first.kind == LexemeKind::Keyword {
            let label = match first.text.as_str() {
                "pass" => Some(Label::Pass),
                "break" => Some(Label::Break),
                "continue" => Some(Label::Continue),
                _ => None,
            };
            if let Some(label) = label {
                self.bump();
                return Ok(AstNode::leaf(
                    label,
                    &first.text,
                    first.char_start,
                    first.char_end,
                ));
            }
            if first.text == "return" {
                self.bump();
                if self.at_kind(LexemeKind::Newline) {
                    return Ok(AstNode::leaf(
                        Label::ReturnStmt,
                        "return",
                        first.char_start,
                        first.char_end,
                    ));
                }
                let value = self.expression()?;
                return Ok(AstNode::new(
                    Label::ReturnStmt,
                    vec![value.node],
                    first.char_start,
                    value.end,
                ));
            }
        }
        if first.kind == LexemeKind::Name && self.peek_at(1).is_some_and(|l| l.is(LexemeKind::Op, "=")) {
            self.bump();
            self.bump();
            let target = AstNode::leaf(Label::Name, &first.text, first.char_start, first.char_end);
            let value = self.expression()?;
            return Ok(AstNode::new(
                Label::Assign,
                vec![target, value.node],
                first.char_start,
                value.end,
            ));
        }
        let expr = self.expression()?;
        Ok(AstNode::new(
            Label::ExprStmt,
            vec![expr.node],
            expr.start,
            expr.end,
        ))
    }

    fn block(&mut self) -> PResult<AstNode> {
        self.expect_kind(LexemeKind::Newline)?;
        let indent = self.expect_kind(LexemeKind::Indent)?;
        self.enter()?;
        let mut body = Vec::new();
        while self.peek().is_some() && !self.at_kind(LexemeKind::Dedent) {
            self.statement_into(&mut body);
        }
        self.leave();
        if self.at_kind(LexemeKind::Dedent) {
            self.bump();
        }
        let (start, end) = if body.is_empty() {
            (indent.char_start, indent.char_start)
        } else {
            extent(&body)
        };
        Ok(AstNode::new(Label::Block, body, start, end))
    }

    fn function_def(&mut self) -> PResult<AstNode> {
        let kw = self.bump();
        let name = self.expect_kind(LexemeKind::Name)?;
        let mut children = vec![AstNode::leaf(
            Label::Name,
            &name.text,
            name.char_start,
            name.char_end,
        )];
        self.expect(LexemeKind::Op, "(")?;
        if !self.at(LexemeKind::Op, ")") {
            loop {
                let arg = self.expect_kind(LexemeKind::Name)?;
                children.push(AstNode::leaf(Label::Arg, &arg.text, arg.char_start, arg.char_end));
                if self.at(LexemeKind::Op, ",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(LexemeKind::Op, ")")?;
        self.expect(LexemeKind::Op, ":")?;
        let body = self.block()?;
        let end = body.char_end;
        children.push(body);
        Ok(AstNode::new(Label::FunctionDef, children, kw.char_start, end))
    }

    /// Parses `if` and, recursively, `elif` chains.
    fn if_stmt(&mut self) -> PResult<AstNode> {
        let kw = self.bump();
        let cond = self.expression()?;
        self.expect(LexemeKind::Op, ":")?;
        let body = self.block()?;
        let mut end = body.char_end;
        let mut children = vec![cond.node, body];
        if self.at(LexemeKind::Keyword, "elif") {
            self.enter()?;
            let orelse = self.if_stmt();
            self.leave();
            let orelse = orelse?;
            end = orelse.char_end;
            children.push(orelse);
        } else if self.at(LexemeKind::Keyword, "else") {
            self.bump();
            self.expect(LexemeKind::Op, ":")?;
            let orelse = self.block()?;
            end = orelse.char_end;
            children.push(orelse);
        }
        Ok(AstNode::new(Label::IfStmt, children, kw.char_start, end))
    }

    fn for_stmt(&mut self) -> PResult<AstNode> {
        let kw = self.bump();
        let target = self.expect_kind(LexemeKind::Name)?;
        let target = AstNode::leaf(Label::Name, &target.text, target.char_start, target.char_end);
        self.expect(LexemeKind::Keyword, "in")?;
        let iter = self.expression()?;
        self.expect(LexemeKind::Op, ":")?;
        let body = self.block()?;
        let end = body.char_end;
        Ok(AstNode::new(
            Label::ForStmt,
            vec![target, iter.node, body],
            kw.char_start,
            end,
        ))
    }

    fn while_stmt(&mut self) -> PResult<AstNode> {
        let kw = self.bump();
        let cond = self.expression()?;
        self.expect(LexemeKind::Op, ":")?;
        let body = self.block()?;
        let end = body.char_end;
        Ok(AstNode::new(
            Label::WhileStmt,
            vec![cond.node, body],
            kw.char_start,
            end,
        ))
    }

    fn expression(&mut self) -> PResult<Expr> {
        self.enter()?;
        let result = self.or_expr();
        self.leave();
        result
    }

    fn bool_chain(
        &mut self,
        keyword: &str,
        label: Label,
        operand: fn(&mut Self) -> PResult<Expr>,
    ) -> PResult<Expr> {
        let mut left = operand(self)?;
        while self.at(LexemeKind::Keyword, keyword) {
            let op = self.bump();
            let right = operand(self)?;
            let node = AstNode::new(
                Label::BoolOp,
                vec![
                    left.node,
                    AstNode::leaf(label, &op.text, op.char_start, op.char_end),
                    right.node,
                ],
                left.start,
                right.end,
            );
            left = Expr::bare(node);
        }
        Ok(left)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        self.bool_chain("or", Label::Or, Self::and_expr)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        self.bool_chain("and", Label::And, Self::not_expr)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.at(LexemeKind::Keyword, "not") {
            let op = self.bump();
            self.enter()?;
            let operand = self.not_expr();
            self.leave();
            let operand = operand?;
            let node = AstNode::new(
                Label::UnaryOp,
                vec![
                    AstNode::leaf(Label::Not, &op.text, op.char_start, op.char_end),
                    operand.node,
                ],
                op.char_start,
                operand.end,
            );
            return Ok(Expr::bare(node));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let left = self.arith()?;
        let mut children = Vec::new();
        let start = left.start;
        let mut end = left.end;
        let mut first = Some(left);
        while let Some(label) = self.peek().and_then(compare_label) {
            let op = self.bump();
            let right = self.arith()?;
            if let Some(left) = first.take() {
                children.push(left.node);
            }
            children.push(AstNode::leaf(label, &op.text, op.char_start, op.char_end));
            end = right.end;
            children.push(right.node);
        }
        match first {
            Some(left) => Ok(left),
            None => Ok(Expr::bare(AstNode::new(Label::Compare, children, start, end))),
        }
    }

    fn binary(
        &mut self,
        ops: fn(&Lexeme) -> Option<Label>,
        operand: fn(&mut Self) -> PResult<Expr>,
    ) -> PResult<Expr> {
        let mut left = operand(self)?;
        while let Some(label) = self.peek().and_then(ops) {
            let op = self.bump();
            let right = operand(self)?;
            let node = AstNode::new(
                Label::BinOp,
                vec![
                    left.node,
                    AstNode::leaf(label, &op.text, op.char_start, op.char_end),
                    right.node,
                ],
                left.start,
                right.end,
            );
            left = Expr::bare(node);
        }
        Ok(left)
    }

    fn arith(&mut self) -> PResult<Expr> {
        self.binary(additive_label, Self::term)
    }

    fn term(&mut self) -> PResult<Expr> {
        self.binary(multiplicative_label, Self::unary)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.at(LexemeKind::Op, "-") {
            let op = self.bump();
            self.enter()?;
            let operand = self.unary();
            self.leave();
            let operand = operand?;
            let node = AstNode::new(
                Label::UnaryOp,
                vec![
                    AstNode::leaf(Label::USub, &op.text, op.char_start, op.char_end),
                    operand.node,
                ],
                op.char_start,
                operand.end,
            );
            return Ok(Expr::bare(node));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut expr = self.primary()?;
        while self.at(LexemeKind::Op, "(") {
            self.bump();
            let mut children = vec![expr.node];
            if !self.at(LexemeKind::Op, ")") {
                loop {
                    children.push(self.expression()?.node);
                    if self.at(LexemeKind::Op, ",") {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            let close = self.expect(LexemeKind::Op, ")")?;
            let node = AstNode::new(Label::Call, children, expr.start, close.char_end);
            expr = Expr::bare(node);
        }
        Ok(expr)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(tok) = self.peek() else {
            return self.error("expected an expression, found end of input");
        };
        let leaf = |label| Expr::bare(AstNode::leaf(label, &tok.text, tok.char_start, tok.char_end));
        match tok.kind {
            LexemeKind::Name => {
                self.bump();
                Ok(leaf(Label::Name))
            }
            LexemeKind::Number | LexemeKind::String => {
                self.bump();
                Ok(leaf(Label::Constant))
            }
            LexemeKind::Keyword if matches!(tok.text.as_str(), "True" | "False" | "None") => {
                self.bump();
                Ok(leaf(Label::Constant))
            }
            LexemeKind::Op if tok.text == "(" => {
                self.bump();
                let inner = self.expression()?;
                let close = self.expect(LexemeKind::Op, ")")?;
                Ok(Expr {
                    node: inner.node,
                    start: tok.char_start,
                    end: close.char_end,
                })
            }
            _ => self.error(format!(
                "expected an expression, found {}",
                self.describe_current()
            )),
        }
    }
}

fn extent(nodes: &[AstNode]) -> (usize, usize) {
    match (nodes.first(), nodes.last()) {
        (Some(first), Some(last)) => (first.char_start, last.char_end),
        _ => (0, 0),
    }
}

fn compare_label(l: &Lexeme) -> Option<Label> {
    if l.kind != LexemeKind::Op {
        return None;
    }
    Some(match l.text.as_str() {
        ">" => Label::Gt,
        "<" => Label::Lt,
        ">=" => Label::GtE,
        "<=" => Label::LtE,
        "==" => Label::Eq,
        "!=" => Label::NotEq,
        _ => return None,
    })
}

fn additive_label(l: &Lexeme) -> Option<Label> {
    match (l.kind, l.text.as_str()) {
        (LexemeKind::Op, "+") => Some(Label::Add),
        (LexemeKind::Op, "-") => Some(Label::Sub),
        _ => None,
    }
}

fn multiplicative_label(l: &Lexeme) -> Option<Label> {
    match (l.kind, l.text.as_str()) {
        (LexemeKind::Op, "*") => Some(Label::Mult),
        (LexemeKind::Op, "/") => Some(Label::Div),
        (LexemeKind::Op, "%") => Some(Label::Mod),
        _ => None,
    }
}
