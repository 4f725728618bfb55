"""dysflow: synthetic toolkit for tuning and refining speech pipelines on
dysfluent (stuttered) speech — corpus model and injector, count language
model, transcript refinement, WER alignment, endpointer and decoder
tuning, and nonparametric statistics.

The operations live in the submodules (``dysflow.align.align``,
``dysflow.refine.refine``, ...); the common types and unambiguous helpers
are re-exported here. The submodules ``align`` and ``refine`` are not
rebound at package level so that both the modules and their same-named
functions stay importable.
"""

from .align import AggregateReport, WerReport, aggregate, align_path
from .corpus import (
    CorpusError,
    CorpusStats,
    DysfluencyEvent,
    DysfluencyKind,
    InjectionConfig,
    Severity,
    Utterance,
    corpus_stats,
    generate_corpus,
    inject_dysfluencies,
    parse_corpus,
    recover_intended,
    serialize_corpus,
    tokenize,
)
from .decoder import (
    DecoderConfig,
    Lattice,
    LatticeChannel,
    TuneResult,
    decode,
    synthesize_lattice,
    tune_decoder,
)
from .endpointer import (
    EndpointerEval,
    EndpointResult,
    PosteriorStream,
    ThresholdTuning,
    apply_threshold,
    synthesize_stream,
    tune_threshold,
)
from .ngram import NGramModel
from .refine import RefineConfig, RefineTrace, remove_fillers, remove_repetitions
from .stats import SpearmanResult, WilcoxonResult, descriptive, spearman, wilcoxon_signed_rank

__version__ = "0.1.0"
