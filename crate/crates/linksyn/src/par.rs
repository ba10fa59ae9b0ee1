//! Indirection over the optional data-parallel runtime.
//!
//! With the `parallel` feature (the default) the prelude is rayon's. Without
//! it — e.g. on targets with no thread support, such as wasm — the same
//! method names resolve to thin sequential adapters over `std` iterators.
//! Every parallel pipeline in this crate merges results in input order, so
//! the two modes produce identical outputs.

#[cfg(feature = "parallel")]
pub(crate) mod prelude {
    pub(crate) use rayon::prelude::*;
}

#[cfg(not(feature = "parallel"))]
pub(crate) mod prelude {
    /// Sequential stand-in for a parallel iterator: wraps a `std` iterator
    /// and mirrors the adapter names used in this crate.
    pub(crate) struct Seq<I>(I);

    impl<I: Iterator> Seq<I> {
        pub(crate) fn map<U, F: FnMut(I::Item) -> U>(
            self,
            f: F,
        ) -> Seq<std::iter::Map<I, F>> {
            Seq(self.0.map(f))
        }

        pub(crate) fn enumerate(self) -> Seq<std::iter::Enumerate<I>> {
            Seq(self.0.enumerate())
        }

        pub(crate) fn flat_map_iter<U, F>(self, f: F) -> Seq<std::iter::FlatMap<I, U, F>>
        where
            U: IntoIterator,
            F: FnMut(I::Item) -> U,
        {
            Seq(self.0.flat_map(f))
        }

        pub(crate) fn for_each<F: FnMut(I::Item)>(self, f: F) {
            self.0.for_each(f)
        }

        /// Rayon-style fold against a generated identity element.
        pub(crate) fn reduce<ID, OP>(self, identity: ID, op: OP) -> I::Item
        where
            ID: Fn() -> I::Item,
            OP: FnMut(I::Item, I::Item) -> I::Item,
        {
            self.0.fold(identity(), op)
        }

        pub(crate) fn collect<C: FromIterator<I::Item>>(self) -> C {
            self.0.collect()
        }
    }

    pub(crate) trait SliceParExt<T> {
        fn par_iter(&self) -> Seq<std::slice::Iter<'_, T>>;
        fn par_iter_mut(&mut self) -> Seq<std::slice::IterMut<'_, T>>;
        fn par_chunks(&self, size: usize) -> Seq<std::slice::Chunks<'_, T>>;
    }

    impl<T> SliceParExt<T> for [T] {
        fn par_iter(&self) -> Seq<std::slice::Iter<'_, T>> {
            Seq(self.iter())
        }

        fn par_iter_mut(&mut self) -> Seq<std::slice::IterMut<'_, T>> {
            Seq(self.iter_mut())
        }

        fn par_chunks(&self, size: usize) -> Seq<std::slice::Chunks<'_, T>> {
            Seq(self.chunks(size))
        }
    }

    pub(crate) trait IntoParExt: IntoIterator + Sized {
        fn into_par_iter(self) -> Seq<Self::IntoIter> {
            Seq(self.into_iter())
        }
    }

    impl<I: IntoIterator> IntoParExt for I {}
}
