//! Symbolic reduction expressions.
//!
//! A [`Term`] records exactly which inputs were combined and in which
//! bracketing. `Combine(a, b)` always keeps the locally held operand on the
//! left and the received operand on the right.

use std::fmt;
use std::sync::Arc;

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Term {
    /// Input block contributed by rank `x_i`.
    Leaf(usize),
    Combine(Arc<Term>, Arc<Term>),
}

impl Term {
    pub fn leaf(i: usize) -> Self {
        Term::Leaf(i)
    }

    pub fn combine(local: &Term, received: &Term) -> Self {
        Term::Combine(Arc::new(local.clone()), Arc::new(received.clone()))
    }

    /// Leaf labels in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            match t {
                Term::Leaf(i) => out.push(*i),
                Term::Combine(a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
            }
        }
        out
    }

    /// Number of binary combinations in the expression.
    pub fn combinations(&self) -> usize {
        match self {
            Term::Leaf(_) => 0,
            Term::Combine(a, b) => 1 + a.combinations() + b.combinations(),
        }
    }

    pub fn map_leaves(&self, f: &impl Fn(usize) -> usize) -> Term {
        match self {
            Term::Leaf(i) => Term::Leaf(f(*i)),
            Term::Combine(a, b) => Term::Combine(Arc::new(a.map_leaves(f)), Arc::new(b.map_leaves(f))),
        }
    }

    fn write_operand(&self, f: &mut fmt::Formatter<'_>, bracket: bool) -> fmt::Result {
        match self {
            Term::Leaf(i) => write!(f, "x{i}"),
            Term::Combine(a, b) => {
                if bracket {
                    f.write_str("(")?;
                }
                // Left operands print flat; the operator is read left-associatively.
                a.write_operand(f, false)?;
                f.write_str("+")?;
                b.write_operand(f, true)?;
                if bracket {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

/// Renders `((x21 ⊕ x10) ⊕ (x15 ⊕ x4))` as `x21+x10+(x15+x4)`.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_operand(f, false)
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Term({self})")
    }
}
