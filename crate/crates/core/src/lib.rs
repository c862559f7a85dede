pub mod hamiltonians;
pub mod linalg;
pub mod spectral;
pub mod conditions;
pub mod output;
pub mod frames;
pub mod dynamics;
pub mod experiments;
