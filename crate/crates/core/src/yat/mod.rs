//! The E (yat) and Ē (posi-yat) products and the math built on them.

mod axioms;
mod flops;
mod normalize;
mod product;

pub use axioms::{
    axiom_check, seeded_triangle_case, Axiom, AxiomReport, AxiomViolations, Counterexample,
    Measure, AXIOM_TOLERANCE, MAX_COUNTEREXAMPLES,
};
pub use flops::{flop_model, product_flop_table, FlopCounts, ProductFlopTable};
pub use normalize::{softermax, softermax_backward, softmax, softmax_backward, SoftermaxPolicy};
pub use product::{
    pairwise_yat_matrix, posi_yat_product, scale_theta, yat_product, ScaleMode, YatConfig,
    DEFAULT_EPSILON,
};

