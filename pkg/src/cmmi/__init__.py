"""Estimation of the covariance of malicious interference in a secure
spatial-modulation link, with a Monte Carlo experiment harness."""

from .estimators import (
    METHODS,
    CovarianceEstimate,
    JointDiagonalizationCovariance,
    PCAEVD,
    SampleCovariance,
    TruncatedEVD,
    cumulative_scms,
    evd_truncate,
    jd,
    joint_diagonalize,
    pca_evd,
    scm,
)
from .experiment import ExperimentSpec, TrialRecord, emit_csv, emit_plot_script, run_experiment
from .metrics import flop_counts, nmse, secrecy_rate, sjnr, zfc_rbf
from .numerics import (
    ConvergenceError,
    EigenDecomposition,
    GivensRotation,
    apply_givens,
    givens_from_stats,
    hermitian_evd,
    null_space_projector,
    off_diagonal_energy,
    sample_complex_gaussian,
)
from .rank import AICRankDetector, aic_score, detect_rank
from .system import ChannelSet, SystemConfig, draw_channels

__version__ = "0.1.0"
