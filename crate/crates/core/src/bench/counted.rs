use std::cell::Cell;
use std::ops::{Add, Div, Mul, Sub};

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
}

fn tick() {
    FLOPS.with(|c| c.set(c.get() + 1));
}

/// Scalar arithmetic shared by the timed kernels and the instrumented count.
pub trait Scalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> {
    fn from_f64(v: f64) -> Self;
    fn relu(self) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn relu(self) -> Self {
        self.max(0.0)
    }
}

/// An `f64` that tallies every add, sub, mul, div and ReLU on the current thread.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Counted(pub f64);

impl Counted {
    /// Runs `f` and returns its result with the number of operations it performed.
    pub fn count<T>(f: impl FnOnce() -> T) -> (T, u64) {
        let before = FLOPS.with(Cell::get);
        let out = f();
        (out, FLOPS.with(Cell::get) - before)
    }
}

macro_rules! counted_op {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr for Counted {
            type Output = Counted;
            fn $m(self, rhs: Counted) -> Counted {
                tick();
                Counted(self.0 $op rhs.0)
            }
        }
    };
}

counted_op!(Add, add, +);
counted_op!(Sub, sub, -);
counted_op!(Mul, mul, *);
counted_op!(Div, div, /);

impl Scalar for Counted {
    fn from_f64(v: f64) -> Self {
        Counted(v)
    }

    fn relu(self) -> Self {
        tick();
        Counted(self.0.max(0.0))
    }
}

/// `ReLU(w·x + b)`, accumulating onto the bias.
pub fn dot_neuron<S: Scalar>(w: &[S], x: &[S], b: S) -> S {
    let mut acc = b;
    for (wi, xi) in w.iter().zip(x) {
        acc = acc + *wi * *xi;
    }
    acc.relu()
}

/// `(w·x)² / (ε + ‖x − w‖²)` evaluated with the fewest operations the
/// formula allows.
pub fn yat_neuron<S: Scalar>(w: &[S], x: &[S], epsilon: S) -> S {
    let mut dot = w[0] * x[0];
    let d0 = x[0] - w[0];
    let mut dist = d0 * d0;
    for i in 1..w.len() {
        dot = dot + w[i] * x[i];
        let di = x[i] - w[i];
        dist = dist + di * di;
    }
    (dot * dot) / (epsilon + dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counted(v: &[f64]) -> Vec<Counted> {
        v.iter().copied().map(Counted).collect()
    }

    #[test]
    fn counts_by_hand() {
        let w = counted(&[1.0, 2.0]);
        let x = counted(&[3.0, -1.0]);
        let (y, n) = Counted::count(|| dot_neuron(&w, &x, Counted(0.5)));
        assert_eq!(y.0, 1.5);
        assert_eq!(n, 5);
        let (e, n) = Counted::count(|| yat_neuron(&w, &x, Counted(0.0)));
        assert_eq!(e.0, 1.0 / 13.0);
        // 2 mul + 1 add (dot), 2 sub + 2 mul + 1 add (dist), square, ε add, div
        assert_eq!(n, 11);
    }

    #[test]
    fn plain_and_counted_agree() {
        let w = [0.3, -1.2, 2.0];
        let x = [1.0, 0.5, -0.25];
        let plain = yat_neuron(&w, &x, 1e-6);
        let c = yat_neuron(&counted(&w), &counted(&x), Counted(1e-6));
        assert_eq!(plain, c.0);
        let reference = crate::yat::yat_product(&w, &x, 1e-6).unwrap();
        assert!((plain - reference).abs() <= 1e-14 * reference.abs());
    }
}
