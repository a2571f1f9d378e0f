"""Transfer functions and signal flow graphs for linear quantum networks."""

from __future__ import annotations

from .dmatrix import (
    DMatrix,
    Generator,
    classify_modes,
    column_decompose,
    expm,
    is_flat_hermitian,
    is_flat_unitary,
    is_skew_flat_hermitian,
    is_unitary,
)
from .dring import DNum, E, I, J, K
from .errors import (
    AmbiguousPairing,
    DegenerateCoupling,
    InsufficientDecay,
    NonInvertible,
    NotPassive,
    QNetError,
    SingularAt,
    UnstableSimulation,
    Unsupported,
)
from .netlib import (
    IOSystem,
    beam_splitter,
    cavity,
    check_theorem2,
    decoherence_spectrum,
    delay,
    direct_feedback_closed_loop,
    indirect_feedback_network,
    io_transfer,
    io_transfer_multi,
    markovian_limit,
    series_product,
)
from .sfg import SignalFlowGraph, enumerate_forward_paths, frl_factor, gain_direct_solve, gain_riegle
from .tfcore import (
    ExpMode,
    Lorentzian,
    MarkovDelta,
    TransferMap,
    generator_from_hamiltonian,
    system_M,
    tf_tilde,
)

__version__ = "0.1.0"
