//! Element types and binary reduction operators.

use std::fmt;

use crate::term::Term;

/// A value that can travel through the fabric inside a block.
pub trait Element: Clone + Send + Sync + fmt::Debug + PartialEq + 'static {
    /// Number of scalar elements this value stands for in volume metrics.
    fn units(&self) -> usize {
        1
    }

    fn byte_len(&self) -> usize {
        std::mem::size_of::<Self>()
    }
}

impl Element for i64 {}
impl Element for u64 {}
impl Element for f64 {}
impl Element for Term {}

/// A binary operator `⊕` applied element-wise to equal-sized blocks.
///
/// `combine(local, received)` computes `local ← local ⊕ received`; the locally
/// held operand is always on the left. Every operator is assumed associative.
pub trait ReductionOp<E>: Sync {
    fn name(&self) -> &str;

    fn is_commutative(&self) -> bool;

    fn combine(&self, local: &mut E, received: &E);

    fn apply(&self, local: &E, received: &E) -> E
    where
        E: Clone,
    {
        let mut out = local.clone();
        self.combine(&mut out, received);
        out
    }

    /// Element-wise `local ← local ⊕ received` over a run of blocks.
    fn combine_block(&self, local: &mut [E], received: &[E]) {
        assert_eq!(local.len(), received.len(), "block sizes differ");
        for (a, b) in local.iter_mut().zip(received) {
            self.combine(a, b);
        }
    }
}

impl<E, O: ReductionOp<E> + ?Sized> ReductionOp<E> for &O {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn is_commutative(&self) -> bool {
        (**self).is_commutative()
    }

    fn combine(&self, local: &mut E, received: &E) {
        (**self).combine(local, received)
    }

    fn combine_block(&self, local: &mut [E], received: &[E]) {
        (**self).combine_block(local, received)
    }
}

/// Two's-complement addition modulo 2⁶⁴; exact, so results compare bit-for-bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct WrappingAdd;

impl ReductionOp<i64> for WrappingAdd {
    fn name(&self) -> &str {
        "wrapping-add-i64"
    }

    fn is_commutative(&self) -> bool {
        true
    }

    fn combine(&self, local: &mut i64, received: &i64) {
        *local = local.wrapping_add(*received);
    }
}

impl ReductionOp<u64> for WrappingAdd {
    fn name(&self) -> &str {
        "wrapping-add-u64"
    }

    fn is_commutative(&self) -> bool {
        true
    }

    fn combine(&self, local: &mut u64, received: &u64) {
        *local = local.wrapping_add(*received);
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FloatAdd;

impl ReductionOp<f64> for FloatAdd {
    fn name(&self) -> &str {
        "add-f64"
    }

    fn is_commutative(&self) -> bool {
        true
    }

    fn combine(&self, local: &mut f64, received: &f64) {
        *local += *received;
    }
}

/// Builds `(local ⊕ received)` terms, recording the bracketing actually computed.
///
/// Declared non-commutative: swapping operands yields a different term, so
/// the engine only runs it with [`EngineOptions::allow_non_commutative`](crate::EngineOptions).
#[derive(Debug, Clone, Copy, Default)]
pub struct Symbolic;

pub fn make_symbolic_op() -> Symbolic {
    Symbolic
}

impl ReductionOp<Term> for Symbolic {
    fn name(&self) -> &str {
        "symbolic"
    }

    fn is_commutative(&self) -> bool {
        false
    }

    fn combine(&self, local: &mut Term, received: &Term) {
        *local = Term::combine(local, received);
    }
}

/// Elements of one origin rank carried inside a [`Bundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tagged<E> {
    pub source: usize,
    pub data: Vec<E>,
}

/// A bag of tagged segments; equality ignores segment order.
#[derive(Debug, Clone)]
pub struct Bundle<E>(pub Vec<Tagged<E>>);

impl<E> Bundle<E> {
    pub fn single(source: usize, data: Vec<E>) -> Self {
        Bundle(vec![Tagged { source, data }])
    }

    pub fn sort_by_source(&mut self) {
        self.0.sort_by_key(|t| t.source);
    }
}

impl<E: PartialEq + Clone> PartialEq for Bundle<E> {
    fn eq(&self, other: &Self) -> bool {
        let mut a: Vec<&Tagged<E>> = self.0.iter().collect();
        let mut b: Vec<&Tagged<E>> = other.0.iter().collect();
        a.sort_by_key(|t| t.source);
        b.sort_by_key(|t| t.source);
        a == b
    }
}

impl<E: Element> Element for Bundle<E> {
    fn units(&self) -> usize {
        self.0.iter().map(|t| t.data.iter().map(Element::units).sum::<usize>()).sum()
    }

    fn byte_len(&self) -> usize {
        self.0.iter().map(|t| t.data.iter().map(Element::byte_len).sum::<usize>()).sum()
    }
}

/// Concatenation of tagged segments. Commutative up to the source tags,
/// which is how the all-to-all reorders its result.
#[derive(Debug, Clone, Copy, Default)]
pub struct Concat;

impl<E: Element> ReductionOp<Bundle<E>> for Concat {
    fn name(&self) -> &str {
        "concat"
    }

    fn is_commutative(&self) -> bool {
        true
    }

    fn combine(&self, local: &mut Bundle<E>, received: &Bundle<E>) {
        local.0.extend(received.0.iter().cloned());
    }
}

/// Wraps a closure as an operator; handy for probes in tests and experiments.
pub struct FnOp<F> {
    name: String,
    commutative: bool,
    f: F,
}

impl<F> FnOp<F> {
    pub fn new(name: impl Into<String>, commutative: bool, f: F) -> Self {
        Self {
            name: name.into(),
            commutative,
            f,
        }
    }
}

impl<E, F> ReductionOp<E> for FnOp<F>
where
    F: Fn(&E, &E) -> E + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn is_commutative(&self) -> bool {
        self.commutative
    }

    fn combine(&self, local: &mut E, received: &E) {
        *local = (self.f)(local, received);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn wrapping_add_commutes_and_associates(a: i64, b: i64, c: i64) {
            let op = WrappingAdd;
            prop_assert_eq!(op.apply(&a, &b), op.apply(&b, &a));
            prop_assert_eq!(op.apply(&op.apply(&a, &b), &c), op.apply(&a, &op.apply(&b, &c)));
        }

        #[test]
        fn wrapping_add_blocks_commute(a in prop::collection::vec(any::<i64>(), 0..16), seed: i64) {
            let b: Vec<i64> = a.iter().map(|x| x.wrapping_mul(seed) ^ 0x5a5a).collect();
            let (mut ab, mut ba) = (a.clone(), b.clone());
            WrappingAdd.combine_block(&mut ab, &b);
            WrappingAdd.combine_block(&mut ba, &a);
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn concat_commutes_up_to_tags(x in prop::collection::vec(any::<i64>(), 0..4), y in prop::collection::vec(any::<i64>(), 0..4)) {
            let a = Bundle::single(0, x);
            let b = Bundle::single(1, y);
            prop_assert_eq!(Concat.apply(&a, &b), Concat.apply(&b, &a));
        }
    }

    #[test]
    fn symbolic_keeps_operand_order() {
        let op = make_symbolic_op();
        let t = op.apply(&Term::leaf(0), &Term::leaf(1));
        assert_eq!(t.to_string(), "x0+x1");
        assert_ne!(t, op.apply(&Term::leaf(1), &Term::leaf(0)));
        assert!(!ReductionOp::<Term>::is_commutative(&op));
    }

    #[test]
    fn bundle_units_count_payload() {
        let b = Bundle(vec![
            Tagged { source: 0, data: vec![1i64, 2] },
            Tagged { source: 3, data: vec![4i64] },
        ]);
        assert_eq!(b.units(), 3);
    }
}
