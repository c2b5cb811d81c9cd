"""Vocabulary trimming for multilingual language models.

Count token frequencies on a target-language corpus, keep the observed (or
top-n) tokens, and slice the vocabulary-indexed rows out of a checkpoint.
"""

from .container import TensorRecord, TensorStore, read_container, write_container
from .freq import FrequencyTable, count_corpus, count_files, load_table, merge_tables, save_table
from .plan import (
    AllObserved,
    Reason,
    TopN,
    TrimPlan,
    apply_plan_to_ids,
    build_plan,
    load_plan,
    make_plan,
    save_plan,
    select_kept,
    structural_closure,
)
from .report import TrimReport, build_report, embedding_share, param_count
from .surgery import (
    ModelProfile,
    VocabTensor,
    builtin_profiles,
    load_profile,
    resolve_vocab_tensors,
    rewrite_config,
    slice_vocab_axis,
    trim_checkpoint,
)
from .tokenizer import (
    ModelKind,
    Normalizer,
    PieceEntry,
    PreTokenizer,
    TokenizerSpec,
    decode,
    encode_bpe,
    encode_text,
    encode_unigram,
    encode_wordpiece,
    normalize,
    parse_tokenizer,
    pretokenize,
    serialize_tokenizer,
    support_ids,
)

__version__ = "0.1.0"
