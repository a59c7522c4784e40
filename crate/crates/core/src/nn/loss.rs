//! Triplet margin loss on unnormalized embeddings.

use super::Real;

fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

/// `max(‖a − p‖ − ‖a − n‖ + margin, 0)`.
pub fn triplet_loss<T: Real>(a: &[T], p: &[T], n: &[T], margin: T) -> T {
    (distance(a, p) - distance(a, n) + margin).max(T::zero())
}

/// Loss and its gradients with respect to the anchor, positive and negative
/// embeddings. Inactive hinges have zero gradient, as does a distance term
/// whose two points coincide.
pub fn triplet_loss_grad<T: Real>(
    a: &[T],
    p: &[T],
    n: &[T],
    margin: T,
) -> (T, [Vec<T>; 3]) {
    let dim = a.len();
    let dap = distance(a, p);
    let dan = distance(a, n);
    let value = dap - dan + margin;
    let mut ga = vec![T::zero(); dim];
    let mut gp = vec![T::zero(); dim];
    let mut gn = vec![T::zero(); dim];
    if value <= T::zero() {
        return (T::zero(), [ga, gp, gn]);
    }
    for i in 0..dim {
        if dap > T::zero() {
            let u = (a[i] - p[i]) / dap;
            ga[i] += u;
            gp[i] = -u;
        }
        if dan > T::zero() {
            let u = (a[i] - n[i]) / dan;
            ga[i] = ga[i] - u;
            gn[i] = u;
        }
    }
    (value, [ga, gp, gn])
}
