//! Flows tangent to plane fields on 3-manifolds.
//!
//! A plane field is the kernel of a one-form `alpha`; a vector field `X` is
//! tangent to it when `alpha(X) = 0`. Such fields generically vanish along
//! curves, and the crate follows those curves, classifies the transverse
//! dynamics along them, links them, and studies the characteristic
//! foliations that plane fields cut out on surfaces. A small combinatorial
//! layer handles round-handle decompositions and the zero-entropy knots
//! they produce.
//!
//! The numeric kernels ([`links`], [`fields`], [`linalg`]) are generic over
//! the scalar type through [`Scalar`]; the aliases below fix it to `f64`,
//! which is what the surface, catalog and pipeline layers use.
//!
//! ```
//! use std::collections::BTreeMap;
//! use planeflow::{catalog, links};
//!
//! let sys = catalog::build("s3_gradient", &BTreeMap::new()).unwrap();
//! let link = links::trace_link::<f64>(
//!     &sys.field,
//!     Some(&sys.one_form),
//!     &Default::default(),
//!     &Default::default(),
//! )
//! .unwrap();
//! assert_eq!(link.curves.len(), 2);
//! ```

pub mod catalog;
pub mod error;
pub mod expr;
pub mod fields;
pub mod geometry;
pub mod handles;
pub mod linalg;
pub mod links;
pub mod output;
pub mod pipeline;
pub mod scalar;
pub mod scene;
pub mod surfaces;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

pub type Curve = links::FixedPointCurve<f64>;
pub type SingularLink = links::SingularLink<f64>;
pub type BifurcationEvent = links::BifurcationEvent<f64>;
pub type ContinuationOptions = links::ContinuationOptions<f64>;
pub type ClassifyOptions = links::ClassifyOptions<f64>;
pub type Trajectory = fields::Trajectory<f64>;
pub type IntegrateOptions = fields::IntegrateOptions<f64>;
