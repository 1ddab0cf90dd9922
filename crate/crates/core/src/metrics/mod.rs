//! Estimators on ensembles: marginals, Wasserstein distances, entropies,
//! and the chaoticity and relaxation summaries built from them.

pub mod chaos;
pub mod entropy;
pub mod hungarian;
pub mod marginal;
pub mod projected;
pub mod report;
pub mod stats;
pub mod w1;

pub use chaos::{chaoticity_alpha, relaxation_beta, AlphaRow, BetaRow, RelaxationSettings, SweepEntry, TensorReference};
pub use entropy::{entropy_knn, relative_entropy_knn, EntropySettings, KnnEntropy, RelativeEntropy};
pub use marginal::{extract_marginal, extract_marginal_capped, EmpiricalMarginal, MarginalMode};
pub use report::{MetricKind, MetricReport};
pub use stats::{ks_one_sample, ks_two_sample, KsResult};
pub use projected::{BkwTensor, ProjectedLaw};
pub use w1::{w1_1d, w1_assignment, w1_sliced, w1_sliced_points, w1_sliced_to_law, w1_sorted_1d, SlicedSettings, SlicedW1};
