pub mod brute;
pub mod instances;
pub mod simplex;
