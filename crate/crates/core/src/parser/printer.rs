//! Renders a tree back to source: 4-space indentation, one statement per line,
//! parentheses only where precedence requires them.

use super::ast::{AstNode, Label};

const INDENT: &str = "    ";

pub fn pretty_print(root: &AstNode) -> String {
    let mut out = String::new();
    match root.label {
        Label::Module | Label::Block => {
            for stmt in &root.children {
                statement(stmt, 0, &mut out);
            }
        }
        _ if is_statement(root.label) => statement(root, 0, &mut out),
        _ => {
            out.push_str(&expression(root));
            out.push('\n');
        }
    }
    out
}

fn is_statement(label: Label) -> bool {
    matches!(
        label,
        Label::FunctionDef
            | Label::IfStmt
            | Label::ForStmt
            | Label::WhileStmt
            | Label::ReturnStmt
            | Label::Assign
            | Label::ExprStmt
            | Label::Pass
            | Label::Break
            | Label::Continue
    )
}

fn line(depth: usize, text: &str, out: &mut String) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
    out.push_str(text);
    out.push('\n');
}

fn block(node: &AstNode, depth: usize, out: &mut String) {
    for stmt in &node.children {
        statement(stmt, depth, out);
    }
}

fn statement(node: &AstNode, depth: usize, out: &mut String) {
    let c = &node.children;
    match node.label {
        Label::FunctionDef => {
            let name = token(&c[0]);
            let args: Vec<&str> = c[1..c.len() - 1].iter().map(token).collect();
            line(depth, &format!("def {name}({}):", args.join(", ")), out);
            block(&c[c.len() - 1], depth + 1, out);
        }
        Label::IfStmt => if_chain(node, depth, "if", out),
        Label::ForStmt => {
            line(
                depth,
                &format!("for {} in {}:", token(&c[0]), expression(&c[1])),
                out,
            );
            block(&c[2], depth + 1, out);
        }
        Label::WhileStmt => {
            line(depth, &format!("while {}:", expression(&c[0])), out);
            block(&c[1], depth + 1, out);
        }
        Label::ReturnStmt => match c.first() {
            Some(value) => line(depth, &format!("return {}", expression(value)), out),
            None => line(depth, "return", out),
        },
        Label::Assign => line(depth, &format!("{} = {}", token(&c[0]), expression(&c[1])), out),
        Label::ExprStmt => line(depth, &expression(&c[0]), out),
        Label::Pass => line(depth, "pass", out),
        Label::Break => line(depth, "break", out),
        Label::Continue => line(depth, "continue", out),
        other => line(depth, &format!("# unprintable {other}"), out),
    }
}

fn if_chain(node: &AstNode, depth: usize, keyword: &str, out: &mut String) {
    let c = &node.children;
    line(depth, &format!("{keyword} {}:", expression(&c[0])), out);
    block(&c[1], depth + 1, out);
    match c.get(2) {
        Some(orelse) if orelse.label == Label::IfStmt => if_chain(orelse, depth, "elif", out),
        Some(orelse) => {
            line(depth, "else:", out);
            block(orelse, depth + 1, out);
        }
        None => {}
    }
}

fn token(node: &AstNode) -> &str {
    node.token.as_deref().unwrap_or("?")
}

// Binding strength, loosest first. Matches the parser's grammar levels.
fn precedence(node: &AstNode) -> u8 {
    match node.label {
        Label::BoolOp => match node.children[1].label {
            Label::Or => 1,
            _ => 2,
        },
        Label::UnaryOp => match node.children[0].label {
            Label::Not => 3,
            _ => 7,
        },
        Label::Compare => 4,
        Label::BinOp => match node.children[1].label {
            Label::Add | Label::Sub => 5,
            _ => 6,
        },
        Label::Call => 8,
        _ => 9,
    }
}

fn operand(node: &AstNode, min: u8) -> String {
    let text = expression(node);
    if precedence(node) < min {
        format!("({text})")
    } else {
        text
    }
}

pub fn expression(node: &AstNode) -> String {
    let c = &node.children;
    match node.label {
        Label::BoolOp | Label::BinOp => {
            let prec = precedence(node);
            format!(
                "{} {} {}",
                operand(&c[0], prec),
                token(&c[1]),
                operand(&c[2], prec + 1)
            )
        }
        Label::Compare => {
            let mut parts = vec![operand(&c[0], 5)];
            for pair in c[1..].chunks(2) {
                parts.push(token(&pair[0]).to_string());
                parts.push(operand(&pair[1], 5));
            }
            parts.join(" ")
        }
        Label::UnaryOp => {
            let prec = precedence(node);
            if c[0].label == Label::Not {
                format!("not {}", operand(&c[1], prec))
            } else {
                format!("-{}", operand(&c[1], prec))
            }
        }
        Label::Call => {
            let args: Vec<String> = c[1..].iter().map(|a| operand(a, 1)).collect();
            format!("{}({})", operand(&c[0], 8), args.join(", "))
        }
        _ => token(node).to_string(),
    }
}
