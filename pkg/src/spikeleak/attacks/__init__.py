from .gradient_matching import (
    AttackConfig,
    AttackResult,
    DummyState,
    binarize_in_loop,
    binarize_post,
    gradient_match_loss,
    infer_label_idlg,
    model_input,
    run_attack,
    run_dlg,
    run_idlg,
)
from .grnn import Generator, GRNNResult, gradient_features, run_grnn
from .lbfgs import LBFGSState, lbfgs_step, two_loop_direction

__all__ = [
    "AttackConfig",
    "AttackResult",
    "DummyState",
    "GRNNResult",
    "Generator",
    "LBFGSState",
    "binarize_in_loop",
    "binarize_post",
    "gradient_features",
    "gradient_match_loss",
    "infer_label_idlg",
    "lbfgs_step",
    "model_input",
    "run_attack",
    "run_dlg",
    "run_grnn",
    "run_idlg",
    "two_loop_direction",
]
