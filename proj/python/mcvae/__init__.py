"""Multimodal contrastive VAE for survival prediction with missing modalities."""

from ._mcvae import (
    CheckpointError,
    Cohort,
    DataError,
    ExperimentError,
    Model,
    TrainingError,
    beta_schedule,
    c_index,
    cox_loss,
    friedman_test,
    generate_cohort,
    holm_adjust,
    load_cohort,
    missingness_mask,
    modality_dropout_mask,
    nemenyi_posthoc,
    profile,
    report,
    run_experiment,
    save_cohort,
    stratified_folds,
    wilcoxon_signed_rank,
)

__all__ = [
    "CheckpointError",
    "Cohort",
    "DataError",
    "ExperimentError",
    "Model",
    "TrainingError",
    "beta_schedule",
    "c_index",
    "cox_loss",
    "friedman_test",
    "generate_cohort",
    "holm_adjust",
    "load_cohort",
    "missingness_mask",
    "modality_dropout_mask",
    "nemenyi_posthoc",
    "profile",
    "report",
    "run_experiment",
    "save_cohort",
    "stratified_folds",
    "wilcoxon_signed_rank",
]
