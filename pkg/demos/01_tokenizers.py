"""
Three tokenizers, one interface
===============================

Build a tiny Unigram, BPE and WordPiece tokenizer by hand, encode the same
text with each, and round-trip them through the JSON document format.
"""

from vocabtrim import (
    ModelKind,
    PieceEntry,
    PreTokenizer,
    TokenizerSpec,
    decode,
    encode_text,
    parse_tokenizer,
    serialize_tokenizer,
)

# A Unigram model scores pieces with log-probabilities and picks the best
# segmentation of each word. Metaspace marks word starts with "▁".
unigram = TokenizerSpec(
    ModelKind.UNIGRAM,
    [PieceEntry("<unk>", 0.0), PieceEntry("▁low", -2.0), PieceEntry("▁lo", -1.5),
     PieceEntry("w", -1.5), PieceEntry("er", -1.0), PieceEntry("▁", -3.0),
     PieceEntry("e", -2.5), PieceEntry("r", -2.5)],
    special_tokens=[("<unk>", 0)], unk_id=0, pre_tokenizer=PreTokenizer("Metaspace"),
)

def show(spec, text):
    ids = encode_text(text, spec)
    print(f"{spec.model_kind.value:9s} {text!r:14} -> {[spec.tokens[i] for i in ids]}")
    return ids

ids = show(unigram, "lower low")
print("decoded:", decode(ids, unigram))

# BPE replays an ordered merge list: the earliest merge that applies wins.
bpe = TokenizerSpec(
    ModelKind.BPE,
    [PieceEntry(t, float(i)) for i, t in enumerate(["l", "o", "w", "e", "r", "lo", "low", "er"])],
    merges=[("l", "o"), ("lo", "w"), ("e", "r")],
    pre_tokenizer=PreTokenizer("Whitespace"),
)
show(bpe, "lower low")

# WordPiece matches the longest vocabulary entry from the left; pieces after
# the first carry the "##" continuation prefix. A dead end makes the whole
# word unknown.
wordpiece = TokenizerSpec(
    ModelKind.WORDPIECE,
    [PieceEntry(t, float(i)) for i, t in enumerate(["[UNK]", "low", "##er", "lo", "##w"])],
    special_tokens=[("[UNK]", 0)], unk_id=0, pre_tokenizer=PreTokenizer("Whitespace"),
)
show(wordpiece, "lower low lox")

# Serialization is canonical: equal specs give identical bytes, and the
# fingerprint is a hash of those bytes.
doc = serialize_tokenizer(bpe)
print(doc.decode()[:120], "...")
assert parse_tokenizer(doc) == bpe
print("fingerprint:", bpe.fingerprint)
