//! Canonical source rendering. Parsing the output yields a spec that is
//! structurally equal to the input.

use super::ast::*;
use super::sampling::fmt_literal;
use std::fmt::Write;

const INDENT: &str = "    ";

pub fn print(spec: &AvatarSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "avatar {} {{", quote(&spec.name));
    let mut sections = 0;
    if !spec.params.is_empty() {
        for p in &spec.params {
            let _ = writeln!(
                out,
                "{INDENT}param {}: {} ~ {};",
                p.name,
                p.ty.name(),
                p.dist
            );
        }
        sections += 1;
    }
    if !spec.states.is_empty() {
        if sections > 0 {
            out.push('\n');
        }
        for s in &spec.states {
            let _ = writeln!(
                out,
                "{INDENT}state {}: {} = {};",
                s.name,
                s.ty.name(),
                fmt_literal(s.init)
            );
        }
        sections += 1;
    }
    for h in &spec.handlers {
        if sections > 0 {
            out.push('\n');
        }
        sections += 1;
        let _ = write!(out, "{INDENT}on {}", h.kind.keyword());
        if let Some(p) = &h.param {
            let _ = write!(out, "({p})");
        }
        out.push(' ');
        block(&mut out, &h.body, 1);
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

fn block(out: &mut String, stmts: &[Stmt], depth: usize) {
    if stmts.is_empty() {
        out.push_str("{}");
        return;
    }
    out.push_str("{\n");
    for s in stmts {
        stmt(out, s, depth + 1);
    }
    out.push_str(&INDENT.repeat(depth));
    out.push('}');
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    out.push_str(&INDENT.repeat(depth));
    match s {
        Stmt::Let { name, value, .. } => {
            let _ = writeln!(out, "let {name} = {};", expr(value));
        }
        Stmt::Assign { name, value, .. } => {
            let _ = writeln!(out, "{name} = {};", expr(value));
        }
        Stmt::Call { name, args, .. } => {
            let _ = writeln!(out, "{name}({});", arg_list(args));
        }
        Stmt::If { .. } => {
            if_chain(out, s, depth);
            out.push('\n');
        }
    }
}

fn if_chain(out: &mut String, s: &Stmt, depth: usize) {
    let Stmt::If {
        cond,
        then,
        otherwise,
        ..
    } = s
    else {
        unreachable!("if_chain called on non-if");
    };
    let _ = write!(out, "if {} ", expr(cond));
    block(out, then, depth);
    match otherwise.as_deref() {
        None => {}
        Some([inner @ Stmt::If { .. }]) => {
            out.push_str(" else ");
            if_chain(out, inner, depth);
        }
        Some(stmts) => {
            out.push_str(" else ");
            block(out, stmts, depth);
        }
    }
}

fn arg_list(args: &[Expr]) -> String {
    args.iter().map(expr).collect::<Vec<_>>().join(", ")
}

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, ..) => op.precedence(),
        ExprKind::Unary(UnaryOp::Not, _) => 3,
        ExprKind::Unary(UnaryOp::Neg, _) => 7,
        _ => 8,
    }
}

fn wrapped(e: &Expr, parens: bool) -> String {
    if parens {
        format!("({})", expr(e))
    } else {
        expr(e)
    }
}

pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(i) => i.to_string(),
        ExprKind::Real(r) => format!("{r:?}"),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Side(s) => s.as_str().to_string(),
        ExprKind::Var(v) => v.clone(),
        ExprKind::Call(name, args) => format!("{name}({})", arg_list(args)),
        ExprKind::Unary(UnaryOp::Neg, inner) => {
            format!("-{}", wrapped(inner, precedence(inner) < 7))
        }
        ExprKind::Unary(UnaryOp::Not, inner) => {
            format!("not {}", wrapped(inner, precedence(inner) < 3))
        }
        ExprKind::Binary(op, l, r) => {
            let p = op.precedence();
            let lp = precedence(l);
            let left_parens = lp < p || (op.is_comparison() && lp == p) || (lp == 3 && p > 3);
            let right_parens = precedence(r) <= p;
            format!(
                "{} {} {}",
                wrapped(l, left_parens),
                op.symbol(),
                wrapped(r, right_parens)
            )
        }
    }
}
