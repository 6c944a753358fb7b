pub mod experiments;
pub mod integrator;
pub mod methods;
pub mod optimizer;
pub mod order_conditions;
pub mod ssp;
pub mod tableau;
