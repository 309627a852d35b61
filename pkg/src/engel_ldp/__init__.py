"""Engel and modified Engel digit chains: exact expansions, sampling, exact
laws and large-deviation rates."""

from .errors import BinningError, DomainError, FitError, ResourceError, UnsupportedMethodError
from .engel import (
    CertifiedExpander,
    DigitSequence,
    DyadicInterval,
    ExpansionKind,
    dyadic_enclosure,
    engel_expand,
    expand,
    expand_certified,
    modified_engel_expand,
    parse_rational,
    reconstruct,
)
from .rng import BitSource, RngStream
from .chains import (
    A_PROCESS,
    C_PROCESS,
    CoupledPath,
    ProcessKind,
    ProcessPath,
    record_times,
    sample_digits_uniform,
    sample_path_transition,
    sample_path_williams,
    simulate_batch,
    step,
    step_a,
    step_c,
)
from .dist import (
    LemmaBracket,
    LogMGFResult,
    TruncatedDistribution,
    forward_dp,
    lemma1_bracket,
    log_mgf,
    tail_prob_lower,
    tail_probs_lower,
)
from .ldp import (
    ConjugationResult,
    RateFunctionSpec,
    compare_rates,
    conjugate,
    lambda_a,
    lambda_c,
    legendre_numeric,
    log_mgf_closed,
    rate,
    rate_a,
    rate_a_initial,
    rate_c,
)
from .experiments import (
    GofResult,
    RateFit,
    Side,
    TailEstimate,
    cross_validate_samplers,
    estimate_tail_mc,
    estimate_tails_dp,
    estimate_tails_mc,
    fit_rate,
    gof_transition,
    williams_gap_report,
)

__version__ = "0.1.0"
