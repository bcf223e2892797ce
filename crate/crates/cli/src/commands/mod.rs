pub mod metrology;
pub mod optics;
pub mod timing;
