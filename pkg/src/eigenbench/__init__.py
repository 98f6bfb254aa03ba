"""Eigenfaces face recognition with eigenvalue-threshold pruning and an
evaluation harness (accuracy-vs-training-size, FAR/FRR/DET, timing)."""

from .dataset import (
    ImageRecord,
    ImageVector,
    Manifest,
    load_image_vector,
    load_manifest,
    load_split,
    synth_dataset,
)
from .eigenfaces import (
    EigenModel,
    MatchDecision,
    SelectionRule,
    TrainingSet,
    identify,
    keep_all,
    load_model,
    save_model,
    train,
    truncate_model,
)
from .evaluation import (
    DetPoint,
    TimingReport,
    TrialResult,
    far_frr_curve,
    find_eer,
    pruning_benchmark,
    run_trials,
    training_size_sweep,
)
from .numerics import EigenPairs, gram_matrix, sym_eig

__version__ = "0.1.0"
