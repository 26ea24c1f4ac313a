//! Time source abstraction so solver budgets work without `std`.

/// Monotonic time source in seconds.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// A clock that never advances. Time budgets never bind under it, which makes
/// every run reproducible bit for bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn seconds(&self) -> f64 {
        (**self).seconds()
    }
}
