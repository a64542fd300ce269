//! Embedding-space statistics: class variance structure, loss greediness,
//! significance testing and PCA.

mod greediness;
mod pca;
mod stats;
mod variance;

pub use greediness::{greediness_report, loss_decay_epoch, GreedinessReport};
pub use pca::{pca_csv, pca_project, PcaResult, PCA_MAX_ITER};
pub use stats::{ln_gamma, paired_t_test, regularized_incomplete_beta, student_t_two_sided_p, TTest};
pub use variance::{variance_report, VarianceReport};
