//! Concrete model implementations and the name registry used by the CLI.

mod kirman;
mod toys;

pub use kirman::{kirman_rates, kirman_rates_real, Kirman};
pub use toys::{Ar1, DispersionOnly, ProductOnly, TwoMinima, UnusedParam};

use crate::dgp::Model;

/// Look up a model by its registry name.
///
/// Known names: `kirman`, `ar1`, `product`, `unused`, `twominima`,
/// `dispersion`.
pub fn model_by_name(name: &str) -> Option<Box<dyn Model>> {
    match name {
        "kirman" => Some(Box::new(Kirman::default())),
        "ar1" => Some(Box::new(Ar1)),
        "product" => Some(Box::new(ProductOnly)),
        "unused" => Some(Box::new(UnusedParam)),
        "twominima" => Some(Box::new(TwoMinima)),
        "dispersion" => Some(Box::new(DispersionOnly)),
        _ => None,
    }
}

/// All registry names, for error messages and docs.
pub fn registry_names() -> &'static [&'static str] {
    &[
        "kirman",
        "ar1",
        "product",
        "unused",
        "twominima",
        "dispersion",
    ]
}
