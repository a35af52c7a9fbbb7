pub mod cone;
pub mod densesim;
pub mod error;
pub mod linalg;
pub mod maps;
pub mod pauli;
pub mod povm;
pub mod estimation;
pub mod varopt;
pub mod cli;
