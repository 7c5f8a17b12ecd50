"""Peer-grade aggregation toolkit.

Data model and serialization (:mod:`peergrade.data`), error metrics
(:mod:`peergrade.metrics`), synthetic benchmark generators
(:mod:`peergrade.synth`), cardinal and ordinal estimators
(:mod:`peergrade.cardinal`, :mod:`peergrade.ordinal`), supervised variants
and grader diagnostics (:mod:`peergrade.supervised`), and replicated
experiment protocols (:mod:`peergrade.experiments`).

Hot numeric loops run in a compiled extension when available; see
``peergrade._kernels.BACKEND`` for the active backend.
"""

__version__ = "0.1.0"

from peergrade._kernels import BACKEND
from peergrade.cardinal import (
    EmConfig,
    Hyperparams,
    ModelFit,
    mean_estimate,
    median_estimate,
    umt_fit,
    ust_fit,
)
from peergrade.data import (
    CardinalGrade,
    Dataset,
    GradeRole,
    OrdinalBallot,
    TruthSet,
    induce_ballots,
    load_dataset,
    load_truth,
    make_ballot,
    make_dataset,
    normalize_scores,
    save_dataset,
    save_truth,
    ta_truth,
    with_exam_grades,
)
from peergrade.errors import (
    DataError,
    DegenerateExerciseError,
    EstimatorError,
    InfeasibleAssignmentError,
    InvalidExerciseError,
    MetricError,
    PeergradeError,
)
from peergrade.experiments import (
    ExperimentReport,
    ExperimentSpec,
    ReportRecord,
    filter_exercises,
    run_experiment,
    run_fig1,
    run_fig2,
    run_noisy_truth,
    run_real_eval,
    write_report,
)
from peergrade.metrics import kendall_tau_error, l2_error, pearson_r, per_exercise_errors
from peergrade.ordinal import (
    GammaPrior,
    NormalPrior,
    OrdinalFit,
    PairComparison,
    SgdConfig,
    ballots_to_pairs,
    borda,
    bt_fit,
    latent_to_scores,
    pair_win_probability,
    pl_fit,
    thurstone_fit,
)
from peergrade.supervised import (
    BiasEstimate,
    DiagnosticsReport,
    GraderDiagnostic,
    TrainTestSplit,
    correlation_report,
    estimate_grader_bias,
    exam_reliability_fit,
    grader_diagnostics,
    homework_performance,
    mean_deviation,
    smt_fit,
    sn_estimate,
    split_submissions,
)
from peergrade.synth import (
    GeneratorConfig,
    NormalTruth,
    SynthResult,
    WeibullTruth,
    generate,
    generate_full,
    perturb_truth,
    replicate_seed,
)
