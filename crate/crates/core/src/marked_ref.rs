//! Node references carrying a one-bit logical-deletion mark in the low-order
//! bit of the pointer word.
//!
//! Every list link in the graph is an [`AtomicMarkedCell`]. The mark and the
//! successor pointer live in the same machine word so one compare-and-swap
//! covers both, which is what lets a marked node's successor stay frozen.

use std::fmt;
use std::marker::PhantomData;
use std::sync::atomic::{AtomicUsize, Ordering};

const MARK_BIT: usize = 1;

/// A (possibly null) node reference packed together with a mark bit.
pub struct MarkedRef<N> {
    packed: usize,
    _node: PhantomData<*const N>,
}

impl<N> MarkedRef<N> {
    /// Packs `target` and `mark` into one word.
    ///
    /// `target` must be at least 2-byte aligned; all node types in this crate
    /// contain pointer-sized fields so this holds for any live allocation.
    #[inline]
    pub fn new(target: *const N, mark: bool) -> Self {
        let addr = target as usize;
        debug_assert_eq!(addr & MARK_BIT, 0, "node reference is not aligned");
        Self::from_packed(addr | mark as usize)
    }

    #[inline]
    pub fn null() -> Self {
        Self::from_packed(0)
    }

    #[inline]
    pub fn from_packed(packed: usize) -> Self {
        MarkedRef {
            packed,
            _node: PhantomData,
        }
    }

    #[inline]
    pub fn packed(self) -> usize {
        self.packed
    }

    #[inline]
    pub fn target(self) -> *const N {
        (self.packed & !MARK_BIT) as *const N
    }

    #[inline]
    pub fn is_null(self) -> bool {
        self.target().is_null()
    }

    #[inline]
    pub fn is_marked(self) -> bool {
        self.packed & MARK_BIT != 0
    }

    /// Same target, mark set.
    #[inline]
    pub fn mark(self) -> Self {
        Self::from_packed(self.packed | MARK_BIT)
    }

    /// Same target, mark cleared.
    #[inline]
    pub fn unmark(self) -> Self {
        Self::from_packed(self.packed & !MARK_BIT)
    }

    /// Dereferences the target.
    ///
    /// # Safety
    ///
    /// The target must be non-null and point to a live `N`.
    #[inline]
    pub unsafe fn deref<'a>(self) -> &'a N {
        &*self.target()
    }
}

impl<N> Clone for MarkedRef<N> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<N> Copy for MarkedRef<N> {}

impl<N> PartialEq for MarkedRef<N> {
    fn eq(&self, other: &Self) -> bool {
        self.packed == other.packed
    }
}

impl<N> Eq for MarkedRef<N> {}

impl<N> fmt::Debug for MarkedRef<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarkedRef")
            .field("target", &self.target())
            .field("mark", &self.is_marked())
            .finish()
    }
}

/// An atomically updated [`MarkedRef`]. After construction the value only
/// changes through [`AtomicMarkedCell::cas`].
pub struct AtomicMarkedCell<N> {
    word: AtomicUsize,
    _node: PhantomData<*const N>,
}

// The cell holds an address, never an owned `N`.
unsafe impl<N> Send for AtomicMarkedCell<N> {}
unsafe impl<N> Sync for AtomicMarkedCell<N> {}

impl<N> AtomicMarkedCell<N> {
    pub fn new(init: MarkedRef<N>) -> Self {
        AtomicMarkedCell {
            word: AtomicUsize::new(init.packed()),
            _node: PhantomData,
        }
    }

    #[inline]
    pub fn load(&self) -> MarkedRef<N> {
        MarkedRef::from_packed(self.word.load(Ordering::SeqCst))
    }

    /// Plain store, only for cells of nodes that are not yet shared.
    #[inline]
    pub(crate) fn store_unshared(&self, value: MarkedRef<N>) {
        self.word.store(value.packed(), Ordering::Relaxed);
    }

    /// Succeeds iff the cell held exactly `expected` (target and mark).
    #[inline]
    pub fn cas(&self, expected: MarkedRef<N>, new: MarkedRef<N>) -> bool {
        self.word
            .compare_exchange(
                expected.packed(),
                new.packed(),
                Ordering::SeqCst,
                Ordering::SeqCst,
            )
            .is_ok()
    }
}

impl<N> fmt::Debug for AtomicMarkedCell<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.load().fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::{Arc, Barrier};
    use std::thread;

    #[repr(align(8))]
    struct Probe(#[allow(dead_code)] u64);

    fn leak() -> *const Probe {
        Box::into_raw(Box::new(Probe(7)))
    }

    #[test]
    fn mark_bits() {
        let n = leak();
        assert!(!MarkedRef::new(n, false).is_marked());
        assert!(MarkedRef::new(n, true).is_marked());
        assert_eq!(MarkedRef::new(n, false).mark(), MarkedRef::new(n, true));
        let r = MarkedRef::new(n, false);
        assert_eq!(r.mark().mark(), r.mark());
        assert_eq!(r.mark().unmark().target(), n);
        assert_eq!(MarkedRef::new(n, true).unmark(), MarkedRef::new(n, false));
        assert_eq!(r.unmark().unmark(), r.unmark());
        let null = MarkedRef::<Probe>::null();
        assert!(null.mark().unmark().is_null());
        assert_ne!(null, null.mark());
        unsafe { drop(Box::from_raw(n as *mut Probe)) };
    }

    #[test]
    fn mark_holds_for_many_nodes() {
        let nodes: Vec<Box<Probe>> = (0..1000).map(|i| Box::new(Probe(i))).collect();
        for b in &nodes {
            let p: *const Probe = &**b;
            let m = MarkedRef::new(p, false).mark();
            assert!(m.is_marked());
            assert_eq!(m.target(), p);
        }
    }

    #[test]
    fn cas_semantics() {
        let n = leak();
        let m = leak();
        let cell = AtomicMarkedCell::new(MarkedRef::new(n, false));
        assert!(cell.cas(MarkedRef::new(n, false), MarkedRef::new(m, false)));
        assert_eq!(cell.load(), MarkedRef::new(m, false));

        let cell = AtomicMarkedCell::new(MarkedRef::new(n, true));
        assert!(!cell.cas(MarkedRef::new(n, false), MarkedRef::new(m, false)));
        assert_eq!(cell.load(), MarkedRef::new(n, true));
    }

    #[test]
    fn racing_cas_has_one_winner() {
        let a = leak() as usize;
        let b = leak() as usize;
        let c = leak() as usize;
        let iterations = 2_000;
        let mut wins = 0;
        for _ in 0..iterations {
            let cell = Arc::new(AtomicMarkedCell::new(MarkedRef::new(a as *const Probe, false)));
            let barrier = Arc::new(Barrier::new(2));
            let handles: Vec<_> = [b, c]
                .into_iter()
                .map(|target| {
                    let cell = Arc::clone(&cell);
                    let barrier = Arc::clone(&barrier);
                    thread::spawn(move || {
                        barrier.wait();
                        cell.cas(
                            MarkedRef::new(a as *const Probe, false),
                            MarkedRef::new(target as *const Probe, false),
                        )
                    })
                })
                .collect();
            wins += handles
                .into_iter()
                .map(|h| h.join().unwrap() as usize)
                .sum::<usize>();
        }
        assert_eq!(wins, iterations);
    }

    #[test]
    fn successful_cas_values_form_a_chain() {
        // Every written value is unique, so the success log of each thread can
        // be stitched into one chain starting at the initial value.
        let fake = |t: usize, i: usize| ((t * 1_000_000 + i + 1) << 3) as *const Probe;
        let cell = Arc::new(AtomicMarkedCell::new(MarkedRef::new(fake(9, 0), false)));
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let cell = Arc::clone(&cell);
                thread::spawn(move || {
                    let mut wins = Vec::new();
                    for i in 0..20_000usize {
                        let cur = cell.load();
                        let next = MarkedRef::new(fake(t, i), i % 5 == 0);
                        if cell.cas(cur, next) {
                            wins.push((cur.packed(), next.packed()));
                        }
                    }
                    wins
                })
            })
            .collect();
        let mut chain = std::collections::HashMap::new();
        for h in handles {
            for (from, to) in h.join().unwrap() {
                assert!(chain.insert(from, to).is_none(), "two successes from one value");
            }
        }
        let total = chain.len();
        let mut cur = MarkedRef::new(fake(9, 0), false).packed();
        let mut steps = 0;
        while let Some(next) = chain.remove(&cur) {
            cur = next;
            steps += 1;
        }
        assert_eq!(steps, total);
        assert_eq!(cur, cell.load().packed());
    }

    proptest! {
        #[test]
        fn pack_unpack_bijection(addr in (0usize..(usize::MAX >> 4)).prop_map(|a| a << 3), mark: bool) {
            let r = MarkedRef::<Probe>::new(addr as *const Probe, mark);
            prop_assert_eq!(r.target() as usize, addr);
            prop_assert_eq!(r.is_marked(), mark);
            prop_assert_eq!(MarkedRef::<Probe>::from_packed(r.packed()), r);
        }
    }
}
