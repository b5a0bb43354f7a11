// Float brings libm-backed math methods into scope when `std` is off; with
// `std` the inherent methods win and this import is a no-op.
#[allow(unused_imports)]
pub(crate) use num_traits::Float as _;

#[allow(unused_imports)]
pub(crate) use alloc::{boxed::Box, string::String, vec, vec::Vec};
