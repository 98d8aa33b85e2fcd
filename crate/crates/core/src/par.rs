//! Index-ordered map over `0..n`, on the rayon pool when the `parallel`
//! feature is enabled and requested at run time.

/// Evaluates `f(i)` for `i in 0..n` and returns the results in index order,
/// so any later reduction is independent of scheduling.
pub fn map_indices<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Whether parallel execution is compiled in.
pub const PARALLEL_AVAILABLE: bool = cfg!(feature = "parallel");

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let a = map_indices(1000, true, |i| i * i);
        let b = map_indices(1000, false, |i| i * i);
        assert_eq!(a, b);
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1001).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
    }
}
