//! Linear classifiers and two-layer fusion over subband classifiers.

mod fusion;
mod linear;

pub use fusion::{
    build_decision_space, fsg_classify, majority_vote, make_fold_plan, single_subband_accuracy,
    weighted_majority_vote, DecisionSpace, FoldPlan, FoldSpaces, FusionResult, MetaKind,
};
pub use linear::{
    accuracy, argmax, linear_scores, logistic_loss_and_grad, predict, predict_posteriors, softmax_rows, train,
    train_linear_max_margin, train_logistic, ClassifierKind, LinearClassifierModel, TrainOptions,
};
