"""Short-form expansion engine.

Builds candidate lexicons from a corpus, ranks expansion candidates for
``[ABB]`` slots with a dual encoder trained under additive margin
softmax, and supports feedback-driven personalization through a small
identity-initialized adapter over frozen base artifacts.
"""

__version__ = "0.1.0"

from .shortforms import (
    ExtractedAbbreviation,
    contractions_of,
    devowel,
    extract_abbreviations,
    normalize_word,
)
from .lexicon import (
    EmbeddingTable,
    Lexicon,
    LexiconStats,
    build_abbreviation_lexicon,
    build_contraction_lexicon,
    build_embedding_table,
    iter_corpus_file,
)
from .encoder import Encoder, EncoderConfig, Vocabulary, cosine, tokenize
from .dataset import (
    AbbSentence,
    DatasetSplit,
    Slot,
    export_split,
    import_split,
    make_abbreviation_example,
    make_contraction_example,
    make_mixed_example,
    synthesize_split,
)
from .training import (
    Adam,
    EvalMetrics,
    LossReport,
    TrainConfig,
    ams_loss,
    encoder_scorer,
    evaluate,
    option_probability,
    rank_options,
    rank_permutation,
    train,
)
from .personalize import (
    AdapterParams,
    FeedbackRecord,
    OptionVectorStore,
    adapter_apply,
    load_adapter,
    personalize_train,
    rank_with_adapter,
    save_adapter,
)

__all__ = [
    "__version__",
    "ExtractedAbbreviation", "contractions_of", "devowel",
    "extract_abbreviations", "normalize_word",
    "EmbeddingTable", "Lexicon", "LexiconStats",
    "build_abbreviation_lexicon", "build_contraction_lexicon",
    "build_embedding_table", "iter_corpus_file",
    "Encoder", "EncoderConfig", "Vocabulary", "cosine", "tokenize",
    "AbbSentence", "DatasetSplit", "Slot", "export_split", "import_split",
    "make_abbreviation_example", "make_contraction_example",
    "make_mixed_example", "synthesize_split",
    "Adam", "EvalMetrics", "LossReport", "TrainConfig", "ams_loss",
    "encoder_scorer", "evaluate", "option_probability", "rank_options",
    "rank_permutation", "train",
    "AdapterParams", "FeedbackRecord", "OptionVectorStore", "adapter_apply",
    "load_adapter", "personalize_train", "rank_with_adapter", "save_adapter",
]
