//! Dispatch layer between rayon and plain sequential loops.
//!
//! With the `parallel` feature (default) the data-parallel kernels fan out
//! over rayon's global pool; without it the same closures run sequentially.
//! Both paths produce bitwise-identical results because every item is an
//! independent pure computation collected in index order.

/// Map `0..n` through `f`, collecting results in index order.
pub fn collect_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential reference version of [`collect_indexed`]; used by benchmarks
/// and by tests that compare the two execution modes.
pub fn collect_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Run `f` over mutable chunks of `data`, `chunk` items at a time.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk, c));
    }
}
