//! Evaluation mathematics: classification scores, ROUGE, inter-annotator
//! agreement and the paired t-test.
//!
//! Ratios with a zero denominator are reported as 0 and flagged rather than
//! raised, so one empty reference never aborts a corpus job.

mod agreement;
mod classification;
mod rouge;
mod ttest;

pub use agreement::{cohens_kappa, Kappa};
pub use classification::{f1_score, precision_recall_f1, ConfusionCounts, PrecisionRecallF1};
pub use rouge::{
    evaluate_generation, lcs_length, ngram_counts, rouge_l, rouge_n, rouge_n_macro, RougeN,
    RougeReport, RougeScore, TokenPair,
};
pub use ttest::{
    ln_gamma, paired_t_test, regularized_incomplete_beta, student_t_two_sided, TTestResult,
};
