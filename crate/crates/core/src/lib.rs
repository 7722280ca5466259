//! Survey analytics toolkit: SAS transport (XPORT v5) parsing, cross-cycle
//! harmonization of NHANES 1999–2014 components, from-scratch PCA/CCA and an
//! SMO-trained SVM, and the diabetes classification experiment built on top
//! of them.
//!
//! The crate is organized bottom-up:
//! - [`table`]: columnar tables with explicit SAS-style missingness
//! - [`xport`]: the XPORT v5 file format, including IBM floating point
//! - [`ingest`]: component URLs, an injectable transport, and a byte cache
//! - [`harmonize`]: declarative rules that stack cycles into canonical views
//! - [`linalg`]: dense matrices, Jacobi eigendecomposition, Cholesky
//! - [`pca`] / [`cca`]: projection models built on `linalg`
//! - [`svm`]: sequential minimal optimization with grid-search model selection
//! - [`eval`]: clinical metrics (sensitivity/specificity/PPV/NPV, ROC-AUC)
//! - [`synth`]: an offline fixture generator with known latent structure
//! - [`task`]: labeling schemes, feature strategies, and the experiment runner

pub mod cca;
pub mod eval;
pub mod harmonize;
pub mod ingest;
pub mod linalg;
pub mod pca;
pub mod svm;
pub mod synth;
pub mod table;
pub mod task;
pub mod xport;

pub use cca::CcaModel;
pub use eval::{ClassificationReport, RocCurve};
pub use linalg::Matrix;
pub use pca::PcaModel;
pub use svm::{KernelSpec, SvmModel};
pub use table::{CellValue, ColumnTable, MissingCode};
pub use task::{ExperimentConfig, ModelVariant, Scheme, ViewSet};
pub use xport::XportLibrary;
