pub mod divdiff;
pub mod function;
pub mod momentum;
pub mod quadrature;
