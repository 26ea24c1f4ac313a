#![allow(unused_imports)]

pub(crate) use alloc::borrow::ToOwned;
pub(crate) use alloc::boxed::Box;
pub(crate) use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
pub(crate) use alloc::format;
pub(crate) use alloc::string::{String, ToString};
pub(crate) use alloc::vec;
pub(crate) use alloc::vec::Vec;

// Inherent float methods only exist with std; libm-backed trait otherwise.
#[cfg(not(feature = "std"))]
pub(crate) use num_traits::Float;
