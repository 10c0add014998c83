//! Grammar-driven random program generator.
//!
//! Builds a random tree (offsets left at zero) and prints it, so every output
//! is well-formed by construction. Used for parser property tests and for the
//! synthetic training corpora of the toy denoiser.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ast::{AstNode, Label};
use super::printer::pretty_print;

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    /// Maximum nesting of compound statements.
    pub max_block_depth: usize,
    /// Maximum statements per block (and at top level).
    pub max_block_len: usize,
    /// Maximum expression nesting.
    pub max_expr_depth: usize,
    pub variables: Vec<String>,
    pub functions: Vec<String>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_block_depth: 3,
            max_block_len: 3,
            max_expr_depth: 2,
            variables: ["x", "y", "i", "n", "total", "count", "result", "item"]
                .map(String::from)
                .to_vec(),
            functions: ["f", "g", "range", "len", "print", "compute"]
                .map(String::from)
                .to_vec(),
        }
    }
}

pub struct ProgramGenerator {
    config: GeneratorConfig,
    rng: ChaCha8Rng,
}

#[derive(Clone, Copy)]
struct Scope {
    depth: usize,
    in_function: bool,
    in_loop: bool,
}

impl ProgramGenerator {
    pub fn new(config: GeneratorConfig, seed: u64) -> Self {
        ProgramGenerator {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_seed(seed: u64) -> Self {
        Self::new(GeneratorConfig::default(), seed)
    }

    /// A fresh program as source text.
    pub fn program(&mut self) -> String {
        pretty_print(&self.module())
    }

    pub fn module(&mut self) -> AstNode {
        let scope = Scope {
            depth: 0,
            in_function: false,
            in_loop: false,
        };
        let body = self.statements(scope);
        node(Label::Module, body)
    }

    fn statements(&mut self, scope: Scope) -> Vec<AstNode> {
        let n = self.rng.random_range(1..=self.config.max_block_len.max(1));
        (0..n).map(|_| self.statement(scope)).collect()
    }

    fn block(&mut self, scope: Scope) -> AstNode {
        node(Label::Block, self.statements(scope))
    }

    fn statement(&mut self, scope: Scope) -> AstNode {
        let compound_ok = scope.depth < self.config.max_block_depth;
        let mut weights: Vec<(u32, u8)> = vec![(30, 0), (10, 1), (3, 2)];
        if compound_ok {
            weights.extend([(14, 3), (10, 4), (5, 5)]);
            if scope.depth == 0 {
                weights.push((6, 6));
            }
        }
        if scope.in_function {
            weights.push((10, 7));
        }
        if scope.in_loop {
            weights.push((3, 8));
        }
        let inner = Scope {
            depth: scope.depth + 1,
            ..scope
        };
        match self.weighted(&weights) {
            0 => {
                let target = self.variable();
                let value = self.expr(self.config.max_expr_depth);
                node(Label::Assign, vec![target, value])
            }
            1 => {
                let call = self.call(self.config.max_expr_depth);
                node(Label::ExprStmt, vec![call])
            }
            2 => leaf(Label::Pass, "pass"),
            3 => self.if_stmt(inner, true),
            4 => {
                let target = self.variable();
                let iter = self.call(1);
                let body = self.block(Scope {
                    in_loop: true,
                    ..inner
                });
                node(Label::ForStmt, vec![target, iter, body])
            }
            5 => {
                let cond = self.condition();
                let body = self.block(Scope {
                    in_loop: true,
                    ..inner
                });
                node(Label::WhileStmt, vec![cond, body])
            }
            6 => {
                let mut children = vec![self.function_name()];
                let arity = self.rng.random_range(0..=2);
                let mut used = Vec::new();
                for _ in 0..arity {
                    let arg = self.pick(&self.config.variables.clone());
                    if !used.contains(&arg) {
                        used.push(arg.clone());
                        children.push(leaf(Label::Arg, &arg));
                    }
                }
                children.push(self.block(Scope {
                    in_function: true,
                    in_loop: false,
                    ..inner
                }));
                node(Label::FunctionDef, children)
            }
            7 => {
                if self.rng.random_bool(0.15) {
                    leaf(Label::ReturnStmt, "return")
                } else {
                    let value = self.expr(self.config.max_expr_depth);
                    node(Label::ReturnStmt, vec![value])
                }
            }
            _ => {
                if self.rng.random_bool(0.5) {
                    leaf(Label::Break, "break")
                } else {
                    leaf(Label::Continue, "continue")
                }
            }
        }
    }

    fn if_stmt(&mut self, scope: Scope, allow_else: bool) -> AstNode {
        let cond = self.condition();
        let body = self.block(scope);
        let mut children = vec![cond, body];
        if allow_else {
            match self.rng.random_range(0..4) {
                0 => children.push(self.if_stmt(scope, true)),
                1 => children.push(self.block(scope)),
                _ => {}
            }
        }
        node(Label::IfStmt, children)
    }

    fn condition(&mut self) -> AstNode {
        let left = self.expr(1);
        let right = self.expr(1);
        let (label, text) = [
            (Label::Gt, ">"),
            (Label::Lt, "<"),
            (Label::GtE, ">="),
            (Label::LtE, "<="),
            (Label::Eq, "=="),
            (Label::NotEq, "!="),
        ][self.rng.random_range(0..6)];
        node(Label::Compare, vec![left, leaf(label, text), right])
    }

    fn expr(&mut self, depth: usize) -> AstNode {
        if depth == 0 || self.rng.random_bool(0.45) {
            return self.atom();
        }
        match self.weighted(&[(40, 0), (15, 1), (15, 2), (8, 3), (5, 4)]) {
            0 => {
                let (label, text) = [
                    (Label::Add, "+"),
                    (Label::Sub, "-"),
                    (Label::Mult, "*"),
                    (Label::Div, "/"),
                    (Label::Mod, "%"),
                ][self.rng.random_range(0..5)];
                let left = self.expr(depth - 1);
                let right = self.expr(depth - 1);
                node(Label::BinOp, vec![left, leaf(label, text), right])
            }
            1 => self.call(depth),
            2 => self.condition(),
            3 => {
                let operand = self.expr(depth - 1);
                node(Label::UnaryOp, vec![leaf(Label::USub, "-"), operand])
            }
            _ => {
                let (label, text) = if self.rng.random_bool(0.5) {
                    (Label::And, "and")
                } else {
                    (Label::Or, "or")
                };
                let left = self.expr(depth - 1);
                let right = self.expr(depth - 1);
                node(Label::BoolOp, vec![left, leaf(label, text), right])
            }
        }
    }

    fn call(&mut self, depth: usize) -> AstNode {
        let mut children = vec![self.function_name()];
        let arity = self.rng.random_range(0..=2);
        for _ in 0..arity {
            children.push(self.expr(depth.saturating_sub(1)));
        }
        node(Label::Call, children)
    }

    fn atom(&mut self) -> AstNode {
        match self.weighted(&[(60, 0), (32, 1), (4, 2), (4, 3)]) {
            0 => self.variable(),
            1 => {
                let n = self.rng.random_range(0..=10u32);
                leaf(Label::Constant, &n.to_string())
            }
            2 => {
                let s = ["'a'", "'done'", "\"x\""][self.rng.random_range(0..3)];
                leaf(Label::Constant, s)
            }
            _ => {
                let k = ["True", "False", "None"][self.rng.random_range(0..3)];
                leaf(Label::Constant, k)
            }
        }
    }

    fn variable(&mut self) -> AstNode {
        let name = self.pick(&self.config.variables.clone());
        leaf(Label::Name, &name)
    }

    fn function_name(&mut self) -> AstNode {
        let name = self.pick(&self.config.functions.clone());
        leaf(Label::Name, &name)
    }

    fn pick(&mut self, pool: &[String]) -> String {
        pool[self.rng.random_range(0..pool.len())].clone()
    }

    fn weighted(&mut self, weights: &[(u32, u8)]) -> u8 {
        let total: u32 = weights.iter().map(|(w, _)| w).sum();
        let mut roll = self.rng.random_range(0..total);
        for &(w, choice) in weights {
            if roll < w {
                return choice;
            }
            roll -= w;
        }
        weights[weights.len() - 1].1
    }
}

fn node(label: Label, children: Vec<AstNode>) -> AstNode {
    AstNode::new(label, children, 0, 0)
}

fn leaf(label: Label, token: &str) -> AstNode {
    AstNode::leaf(label, token, 0, 0)
}
