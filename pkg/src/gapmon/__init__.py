"""Runtime verification over traces with monitoring gaps."""

from .errors import (
    BudgetExceeded,
    DegenerateInput,
    DigestMismatch,
    GapmonError,
    ImpossibleObservation,
    InvalidArgument,
    InvalidModel,
    ParseError,
    TableLimitExceeded,
    UnknownLabel,
)
from .model import (
    Alphabet,
    Dfsm,
    Event,
    Gap,
    GapDist,
    Hmm,
    ModelBundle,
    Peek,
    PeekModel,
    Verdict,
    dfsm_step,
    run_dfsm,
    validate_model,
    verdict_probabilities,
)
from .io import load_model, load_trace, save_model, save_trace
from .estimators import ExactMonitor, HmmLearner, ParticleMonitor, TableMonitor

__version__ = "0.1.0"
