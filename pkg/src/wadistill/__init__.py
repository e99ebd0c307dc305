"""Distill weighted automata from black-box sequence oracles.

The pipeline: generate a basis of prefixes and suffixes, fill the induced
Hankel sub-blocks with oracle answers, factorize with a truncated SVD,
and read the automaton off the factors.  Evaluation compares the distilled
automaton (or an n-gram baseline) against the oracle on ranking agreement
metrics, and the singular-value spectrum gives a model-size estimate.
"""

from .alphabet import Alphabet
from .backend import BACKEND
from .errors import (
    BasisExhausted,
    CapabilityError,
    CorruptAnswer,
    FillAborted,
    GenerationFailed,
    InvalidInput,
    InvalidSymbol,
    NonStochastic,
    NumericalFailure,
    OracleUnavailable,
    ParseError,
    ProtocolError,
    SingularNormalizerWarning,
    WadistillError,
)
from .hankel import (
    Basis,
    HankelBlocks,
    fill_hankel,
    gen_basis_oracle,
    gen_basis_uniform,
    read_basis,
    write_basis,
)
from .metrics import (
    EvalSet,
    MetricResult,
    OracleRanking,
    WARanking,
    build_eval_sets,
    evaluate_candidate,
    ndcg_n,
    wer_d,
)
from .ngram import NGramModel, NGramOracle, load_ngram, sample_corpus, save_ngram, train_ngram
from .oracle import CachedOracle, Oracle, QueryCache, WAOracle, sample_from_oracle
from .pautomac import parse_pautomac_sequences, write_pautomac_sequences
from .protocol import ExternalOracle
from .spectral import (
    Factorization,
    RankDeficiencyWarning,
    SpectrumReport,
    detect_hankel_rank,
    extract_wa,
    rank_factorize,
    wa_parameter_count,
    write_spectrum_report,
)
from .wa import WeightedAutomaton, dumps_wa, load_wa, loads_wa, random_pfa, save_wa

__version__ = "0.1.0"

__all__ = [
    "Alphabet",
    "BACKEND",
    "Basis",
    "BasisExhausted",
    "CachedOracle",
    "CapabilityError",
    "CorruptAnswer",
    "EvalSet",
    "ExternalOracle",
    "Factorization",
    "FillAborted",
    "GenerationFailed",
    "HankelBlocks",
    "InvalidInput",
    "InvalidSymbol",
    "MetricResult",
    "NGramModel",
    "NGramOracle",
    "NonStochastic",
    "NumericalFailure",
    "Oracle",
    "OracleRanking",
    "OracleUnavailable",
    "ParseError",
    "ProtocolError",
    "QueryCache",
    "RankDeficiencyWarning",
    "SingularNormalizerWarning",
    "SpectrumReport",
    "WAOracle",
    "WARanking",
    "WadistillError",
    "WeightedAutomaton",
    "build_eval_sets",
    "detect_hankel_rank",
    "dumps_wa",
    "evaluate_candidate",
    "extract_wa",
    "fill_hankel",
    "gen_basis_oracle",
    "gen_basis_uniform",
    "load_ngram",
    "load_wa",
    "loads_wa",
    "ndcg_n",
    "parse_pautomac_sequences",
    "random_pfa",
    "rank_factorize",
    "read_basis",
    "sample_corpus",
    "sample_from_oracle",
    "save_ngram",
    "save_wa",
    "train_ngram",
    "wa_parameter_count",
    "wer_d",
    "write_basis",
    "write_pautomac_sequences",
    "write_spectrum_report",
]
