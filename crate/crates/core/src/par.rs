//! Switches between rayon and plain iterators depending on the `parallel`
//! feature. Both branches must produce identical results. Callers import
//! `rayon::prelude::*` under the same feature for the adapter methods.

macro_rules! maybe_par_iter {
    ($e:expr) => {{
        #[cfg(feature = "parallel")]
        {
            rayon::iter::IntoParallelRefIterator::par_iter(&$e)
        }
        #[cfg(not(feature = "parallel"))]
        {
            ($e).iter()
        }
    }};
}

pub(crate) use maybe_par_iter;

/// `rayon::join` when parallel, otherwise `a` then `b`.
pub(crate) fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::join(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (a(), b())
    }
}
