"""Random tokenizer, corpus and checkpoint fixtures."""

from __future__ import annotations

import random

import numpy as np

from vocabtrim.container import TensorRecord, TensorStore
from vocabtrim.surgery import ModelProfile, VocabTensor
from vocabtrim.tokenizer import (
    ModelKind,
    PieceEntry,
    PreTokenizer,
    TokenizerSpec,
    byte_piece,
)

ALPHABET = "abcdefghij"


def dyadic_score(rng: random.Random) -> float:
    # multiples of 1/4 keep every path sum exact in floating point
    return -rng.randint(1, 40) / 4


def random_word(rng: random.Random, alphabet: str, max_len: int) -> str:
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(1, max_len)))


def random_line(rng: random.Random, alphabet: str, max_chars: int = 40) -> str:
    n = rng.randint(0, max_chars)
    return "".join(rng.choice(alphabet + "  ") for _ in range(n))


def random_unigram(
    rng: random.Random,
    max_pieces: int = 200,
    *,
    alphabet: str = ALPHABET,
    byte_fallback: bool | None = None,
    pre: str = "Metaspace",
) -> TokenizerSpec:
    if byte_fallback is None:
        byte_fallback = rng.random() < 0.3
    specials = ["<pad>", "</s>", "<unk>"]
    tokens: list[str] = list(specials)
    budget = max_pieces - len(tokens)
    marker = "▁" if pre == "Metaspace" else ("Ġ" if pre == "ByteLevel" else "")
    # leave some characters out so coverage failures occur
    chars = [c for c in alphabet if rng.random() < 0.85]
    pool = set()
    for c in chars:
        pool.add(c)
        if marker:
            pool.add(marker + c)
    while len(pool) < max(budget, 1) * 3 and len(pool) < 5000:
        w = random_word(rng, alphabet, 5)
        pool.add((marker + w) if marker and rng.random() < 0.4 else w)
    picked = rng.sample(sorted(pool), min(budget, len(pool))) if budget > 0 else []
    tokens += [t for t in picked if t not in tokens]
    pieces = [PieceEntry(t, 0.0 if t in specials else dyadic_score(rng)) for t in tokens]
    if byte_fallback:
        pieces += [PieceEntry(byte_piece(b), 0.0) for b in range(256)]
    return TokenizerSpec(
        ModelKind.UNIGRAM, pieces,
        special_tokens=[(t, i) for i, t in enumerate(specials)],
        unk_id=2, byte_fallback=byte_fallback, pre_tokenizer=PreTokenizer(pre),
    )


def random_bpe(
    rng: random.Random, max_pieces: int = 200, *, alphabet: str = ALPHABET, pre: str = "Whitespace"
) -> TokenizerSpec:
    specials = ["<s>", "<unk>"]
    chars = [c for c in alphabet if rng.random() < 0.9]
    tokens = specials + sorted(chars)
    merges: list[tuple[str, str]] = []
    have = set(tokens)
    symbols = list(chars)
    attempts = 0
    while len(tokens) < max_pieces and attempts < max_pieces * 20 and symbols:
        attempts += 1
        left, right = rng.choice(symbols), rng.choice(symbols)
        if (left, right) in merges or len(left + right) > 8:
            continue
        merges.append((left, right))
        if left + right not in have:
            have.add(left + right)
            tokens.append(left + right)
            symbols.append(left + right)
    pieces = [PieceEntry(t, float(i)) for i, t in enumerate(tokens)]
    return TokenizerSpec(
        ModelKind.BPE, pieces, merges=merges,
        special_tokens=[(t, i) for i, t in enumerate(specials)], unk_id=1,
        pre_tokenizer=PreTokenizer(pre),
    )


def random_wordpiece(
    rng: random.Random, max_pieces: int = 200, *, alphabet: str = ALPHABET
) -> TokenizerSpec:
    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]
    tokens = list(specials)
    have = set(tokens)
    for c in alphabet:
        if rng.random() < 0.85:
            for t in (c, "##" + c):
                if rng.random() < 0.9:
                    tokens.append(t)
                    have.add(t)
    while len(tokens) < max_pieces:
        w = random_word(rng, alphabet, 5)
        t = ("##" + w) if rng.random() < 0.5 else w
        if t not in have:
            have.add(t)
            tokens.append(t)
    pieces = [PieceEntry(t, float(i)) for i, t in enumerate(tokens)]
    return TokenizerSpec(
        ModelKind.WORDPIECE, pieces,
        special_tokens=[(t, i) for i, t in enumerate(specials)], unk_id=1,
        pre_tokenizer=PreTokenizer("Whitespace"),
    )


RANDOM_SPECS = {
    "Unigram": random_unigram,
    "BPE": random_bpe,
    "WordPiece": random_wordpiece,
}


def toy_checkpoint(
    rng: np.random.Generator, V: int = 10, d: int = 4, dtype: str = "F32"
) -> tuple[TensorStore, ModelProfile]:
    """Toy model: tied embedding/head pair, a V-length bias, a d x V head, dense layers."""
    np_dtype = {"F32": np.float32, "F16": np.float16, "I64": np.int64}.get(dtype)

    def rec(shape):
        if dtype == "BF16":
            raw = rng.integers(0, 256, size=(*shape, 2), dtype=np.uint8)
            return TensorRecord("BF16", shape, raw.tobytes())
        return TensorRecord.from_array(rng.standard_normal(shape).astype(np_dtype) if dtype != "I64"
                                       else rng.integers(-1000, 1000, size=shape).astype(np_dtype))

    store = TensorStore(
        {
            "embed.weight": rec((V, d)),
            "lm_head.weight": rec((V, d)),
            "lm_head.bias": rec((V,)),
            "out_proj.weight": rec((d, V)),
            "layer.0.weight": rec((d, d)),
            "layer.0.bias": rec((d,)),
            "layer.1.weight": rec((d, d)),
            "norm.weight": rec((d,)),
        },
        metadata={"format": "pt"},
    )
    profile = ModelProfile(
        name="toy",
        d_model=d,
        vocab_size_ref=V,
        vocab_tensors=(
            VocabTensor("embed.weight", 0),
            VocabTensor("lm_head.*", 0),
            VocabTensor("out_proj.weight", 1),
        ),
        emb_matrix_count=1,
        total_params_ref=store.num_params(),
        tied_groups=(("embed.weight", "lm_head.weight"),),
    )
    return store, profile
