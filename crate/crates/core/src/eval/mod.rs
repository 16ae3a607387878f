//! Synthetic-data scoring: fidelity, downstream utility and privacy risk.

mod attacks;
mod fidelity;
mod report;
mod utility;

pub use attacks::{privacy_attacks, AttackConfig, AttackOutcome, PrivacyRiskReport};
pub use fidelity::{
    fidelity, fidelity_column, fidelity_row, js_divergence, pearson, theils_u, wasserstein_1, ColumnScore,
    FidelityReport, PairScore,
};
pub use report::EvalReport;
pub use utility::{
    roc_auc, utility_phi, Classifier, ClassifierKind, ClassifierScore, DecisionTree, KNearest,
    LogisticRegression, UtilityConfig, UtilityReport,
};
