"""Subword tokenizer definitions and deterministic encoders.

A :class:`TokenizerSpec` is an immutable description of a Unigram, BPE or
WordPiece tokenizer. Token IDs are indices into ``spec.pieces``; there are no
sparse ID spaces. Encoders never add special tokens.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import re
import unicodedata
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable

from .errors import IdOutOfRange, InvariantError, NoCoverage, SchemaError

TokenId = int

METASPACE = "▁"
SCHEMA_VERSION = "1.0"
_CACHE_LIMIT = 1 << 16
_BYTE_PIECE = re.compile(r"^<0x([0-9A-F]{2})>$")


class ModelKind(str, enum.Enum):
    UNIGRAM = "Unigram"
    BPE = "BPE"
    WORDPIECE = "WordPiece"


class Normalizer(str, enum.Enum):
    NONE = "None"
    NFKC = "NFKC"
    LOWERCASE = "Lowercase"
    NFKC_LOWERCASE = "NFKC+Lowercase"


@dataclass(frozen=True)
class PreTokenizer:
    kind: str = "Whitespace"  # Whitespace | Metaspace | ByteLevel
    replacement: str = METASPACE
    add_prefix_space: bool = True

    def __post_init__(self):
        if self.kind not in ("Whitespace", "Metaspace", "ByteLevel"):
            raise SchemaError(f"unsupported pre-tokenizer {self.kind!r}")
        if self.kind == "Metaspace" and len(self.replacement) != 1:
            raise SchemaError("metaspace replacement must be a single character")


@dataclass(frozen=True)
class PieceEntry:
    token: str
    score: float = 0.0

    def __post_init__(self):
        if not self.token:
            raise InvariantError("piece token must be non-empty")


def byte_piece(b: int) -> str:
    return f"<0x{b:02X}>"


def _bytes_to_unicode() -> dict[int, str]:
    # GPT-2 printable byte alphabet
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return {b: chr(c) for b, c in zip(bs, cs)}


BYTE_ENCODER = _bytes_to_unicode()
BYTE_DECODER = {c: b for b, c in BYTE_ENCODER.items()}
_BYTE_TABLE = [BYTE_ENCODER[b] for b in range(256)]
BYTELEVEL_SPACE = BYTE_ENCODER[ord(" ")]


@dataclass(frozen=True, eq=True)
class TokenizerSpec:
    """Full description of a subword tokenizer.

    ``merges`` is only meaningful for BPE and ``continuation_prefix`` only
    for WordPiece. Special tokens are ``(content, pinned_id)`` pairs.
    """

    model_kind: ModelKind
    pieces: tuple[PieceEntry, ...]
    merges: tuple[tuple[str, str], ...] = ()
    special_tokens: tuple[tuple[str, TokenId], ...] = ()
    unk_id: TokenId | None = None
    byte_fallback: bool = False
    normalizer: Normalizer = Normalizer.NONE
    pre_tokenizer: PreTokenizer = field(default_factory=PreTokenizer)
    continuation_prefix: str = "##"

    def __post_init__(self):
        object.__setattr__(self, "model_kind", ModelKind(self.model_kind))
        object.__setattr__(self, "normalizer", Normalizer(self.normalizer))
        object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(self, "merges", tuple(tuple(m) for m in self.merges))
        object.__setattr__(
            self, "special_tokens", tuple((c, int(i)) for c, i in self.special_tokens)
        )
        self._validate()

    def _validate(self) -> None:
        index = self.piece_to_id
        if len(index) != len(self.pieces):
            seen = set()
            for p in self.pieces:
                if p.token in seen:
                    raise InvariantError(f"duplicate piece {p.token!r}")
                seen.add(p.token)
        if self.model_kind is ModelKind.UNIGRAM:
            for p in self.pieces:
                if not math.isfinite(p.score):
                    raise InvariantError(f"non-finite score for piece {p.token!r}")
        elif self.merges and self.model_kind is not ModelKind.BPE:
            raise InvariantError("merges are only valid for BPE")
        for left, right in self.merges:
            for tok in (left, right, left + right):
                if tok not in index:
                    raise InvariantError(f"merge ({left!r}, {right!r}) references absent piece {tok!r}")
        if len(set(self.merges)) != len(self.merges):
            raise InvariantError("duplicate merge")
        for content, pinned in self.special_tokens:
            if not 0 <= pinned < len(self.pieces) or self.pieces[pinned].token != content:
                raise InvariantError(f"special token {content!r} is not at pinned id {pinned}")
        if self.unk_id is not None and not 0 <= self.unk_id < len(self.pieces):
            raise InvariantError(f"unk_id {self.unk_id} out of range")
        if self.byte_fallback:
            if self.model_kind is not ModelKind.UNIGRAM:
                raise InvariantError("byte_fallback is only supported for Unigram")
            missing = [b for b in range(256) if byte_piece(b) not in index]
            if missing:
                raise InvariantError(f"byte_fallback set but {len(missing)} byte pieces are absent")

    @property
    def vocab_size(self) -> int:
        return len(self.pieces)

    @property
    def tokens(self) -> list[str]:
        return [p.token for p in self.pieces]

    @cached_property
    def piece_to_id(self) -> dict[str, TokenId]:
        return {p.token: i for i, p in enumerate(self.pieces)}

    @cached_property
    def special_ids(self) -> frozenset[TokenId]:
        return frozenset(i for _, i in self.special_tokens)

    @cached_property
    def byte_piece_ids(self) -> tuple[TokenId, ...]:
        """IDs of ``<0x00>``..``<0xFF>`` when byte fallback is enabled."""
        if not self.byte_fallback:
            return ()
        return tuple(self.piece_to_id[byte_piece(b)] for b in range(256))

    @cached_property
    def fingerprint(self) -> str:
        return fingerprint(self)

    @cached_property
    def _encoder(self) -> "_Encoder":
        return _Encoder(self)

    def __getstate__(self):
        # cached lookups are rebuilt lazily in worker processes
        return {k: v for k, v in self.__dict__.items() if k in _FIELD_NAMES}

    def __setstate__(self, state):
        self.__dict__.update(state)


_FIELD_NAMES = frozenset(TokenizerSpec.__dataclass_fields__)


# --------------------------------------------------------------------------
# schema


def _parse_normalizer(node: Any) -> Normalizer:
    if node is None:
        return Normalizer.NONE
    if not isinstance(node, dict) or "type" not in node:
        raise SchemaError("normalizer must be null or an object with a type")
    kind = node["type"]
    if kind is None:
        return Normalizer.NONE
    if kind == "NFKC":
        return Normalizer.NFKC
    if kind == "Lowercase":
        return Normalizer.LOWERCASE
    if kind == "Sequence":
        inner = [_parse_normalizer(n) for n in node.get("normalizers", [])]
        inner = [n for n in inner if n is not Normalizer.NONE]
        if not inner:
            return Normalizer.NONE
        if len(inner) == 1:
            return inner[0]
        if inner == [Normalizer.NFKC, Normalizer.LOWERCASE]:
            return Normalizer.NFKC_LOWERCASE
        raise SchemaError(f"unsupported normalizer sequence {[n.value for n in inner]}")
    raise SchemaError(f"unsupported normalizer {kind!r}")


def _dump_normalizer(norm: Normalizer) -> Any:
    if norm is Normalizer.NONE:
        return None
    if norm is Normalizer.NFKC_LOWERCASE:
        return {"type": "Sequence", "normalizers": [{"type": "NFKC"}, {"type": "Lowercase"}]}
    return {"type": norm.value}


def _parse_pre_tokenizer(node: Any) -> PreTokenizer:
    if not isinstance(node, dict) or "type" not in node:
        raise SchemaError("pre_tokenizer must be an object with a type")
    kind = node["type"]
    if kind == "Whitespace":
        return PreTokenizer("Whitespace")
    if kind == "Metaspace":
        add_prefix = node.get("add_prefix_space")
        if add_prefix is None:
            add_prefix = node.get("prepend_scheme", "always") != "never"
        return PreTokenizer("Metaspace", node.get("replacement", METASPACE), bool(add_prefix))
    if kind == "ByteLevel":
        if node.get("add_prefix_space") or node.get("use_regex"):
            raise SchemaError("ByteLevel prefix-space and regex splitting are not supported")
        return PreTokenizer("ByteLevel")
    raise SchemaError(f"unsupported pre_tokenizer {kind!r}")


def _dump_pre_tokenizer(pre: PreTokenizer) -> dict:
    if pre.kind == "Metaspace":
        return {"type": "Metaspace", "replacement": pre.replacement,
                "add_prefix_space": pre.add_prefix_space}
    return {"type": pre.kind}


def _require(node: dict, key: str, where: str) -> Any:
    if key not in node:
        raise SchemaError(f"missing required field {where}.{key}")
    return node[key]


def _dense_vocab(vocab: Any) -> list[str]:
    if not isinstance(vocab, dict):
        raise SchemaError("model.vocab must be an object mapping piece to id")
    tokens: list[str | None] = [None] * len(vocab)
    for tok, idx in vocab.items():
        if not isinstance(idx, int) or not 0 <= idx < len(vocab) or tokens[idx] is not None:
            raise SchemaError("model.vocab ids must be dense 0..V-1")
        tokens[idx] = tok
    return tokens  # type: ignore[return-value]


def _unk_from_token(name: Any, tokens: list[str]) -> TokenId | None:
    if name is None:
        return None
    try:
        return tokens.index(name)
    except ValueError:
        raise InvariantError(f"unk_token {name!r} is not in the vocabulary") from None


def parse_tokenizer(data: bytes | str) -> TokenizerSpec:
    """Parse a tokenizer-definition JSON document."""
    try:
        doc = json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"tokenizer document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("tokenizer document must be a JSON object")
    model = _require(doc, "model", "")
    if not isinstance(model, dict):
        raise SchemaError("model must be an object")
    kind = _require(model, "type", "model")
    normalizer = _parse_normalizer(doc.get("normalizer"))
    pre = _parse_pre_tokenizer(_require(doc, "pre_tokenizer", ""))
    specials = []
    for entry in doc.get("added_tokens") or []:
        try:
            specials.append((entry["content"], int(entry["id"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed added_tokens entry {entry!r}") from exc

    common = dict(special_tokens=specials, normalizer=normalizer, pre_tokenizer=pre)
    if kind == "Unigram":
        vocab = _require(model, "vocab", "model")
        try:
            pieces = [PieceEntry(str(tok), float(score)) for tok, score in vocab]
        except (TypeError, ValueError) as exc:
            raise SchemaError("Unigram vocab must be an array of [piece, score]") from exc
        return TokenizerSpec(
            ModelKind.UNIGRAM, pieces, unk_id=model.get("unk_id"),
            byte_fallback=bool(model.get("byte_fallback", False)), **common,
        )
    if kind == "BPE":
        if model.get("dropout") or model.get("end_of_word_suffix") or model.get("byte_fallback") \
                or model.get("continuing_subword_prefix"):
            raise SchemaError("BPE dropout, suffixes, prefixes and byte fallback are not supported")
        tokens = _dense_vocab(_require(model, "vocab", "model"))
        merges = []
        for m in model.get("merges", []):
            if isinstance(m, str):
                parts = m.split(" ")
                if len(parts) != 2:
                    raise SchemaError(f"malformed merge {m!r}")
                merges.append((parts[0], parts[1]))
            elif isinstance(m, list) and len(m) == 2:
                merges.append((str(m[0]), str(m[1])))
            else:
                raise SchemaError(f"malformed merge {m!r}")
        return TokenizerSpec(
            ModelKind.BPE, [PieceEntry(t, float(i)) for i, t in enumerate(tokens)],
            merges=merges, unk_id=_unk_from_token(model.get("unk_token"), tokens), **common,
        )
    if kind == "WordPiece":
        tokens = _dense_vocab(_require(model, "vocab", "model"))
        return TokenizerSpec(
            ModelKind.WORDPIECE, [PieceEntry(t, float(i)) for i, t in enumerate(tokens)],
            unk_id=_unk_from_token(model.get("unk_token"), tokens),
            continuation_prefix=model.get("continuing_subword_prefix", "##"), **common,
        )
    raise SchemaError(f"unknown model kind {kind!r}")


def serialize_tokenizer(spec: TokenizerSpec) -> bytes:
    """Canonical JSON bytes for ``spec``; equal specs give identical bytes."""
    unk_token = None if spec.unk_id is None else spec.pieces[spec.unk_id].token
    if spec.model_kind is ModelKind.UNIGRAM:
        model: dict[str, Any] = {
            "type": "Unigram",
            "unk_id": spec.unk_id,
            "byte_fallback": spec.byte_fallback,
            "vocab": [[p.token, p.score] for p in spec.pieces],
        }
    elif spec.model_kind is ModelKind.BPE:
        model = {
            "type": "BPE",
            "unk_token": unk_token,
            "vocab": {p.token: i for i, p in enumerate(spec.pieces)},
            # list form only when a side contains the separator
            "merges": [[l, r] if (" " in l or " " in r) else f"{l} {r}" for l, r in spec.merges],
        }
    else:
        model = {
            "type": "WordPiece",
            "unk_token": unk_token,
            "continuing_subword_prefix": spec.continuation_prefix,
            "vocab": {p.token: i for i, p in enumerate(spec.pieces)},
        }
    doc = {
        "version": SCHEMA_VERSION,
        "normalizer": _dump_normalizer(spec.normalizer),
        "pre_tokenizer": _dump_pre_tokenizer(spec.pre_tokenizer),
        "added_tokens": [{"id": i, "content": c, "special": True} for c, i in spec.special_tokens],
        "model": model,
    }
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def fingerprint(spec: TokenizerSpec) -> str:
    """64-bit hash of the canonical serialization, as 16 hex digits."""
    return hashlib.blake2b(serialize_tokenizer(spec), digest_size=8).hexdigest()


# --------------------------------------------------------------------------
# pipeline stages


def normalize(text: str, spec: TokenizerSpec) -> str:
    norm = spec.normalizer
    if norm is Normalizer.NONE:
        return text
    if norm is Normalizer.LOWERCASE:
        return text.lower()
    text = unicodedata.normalize("NFKC", text)
    return text.lower() if norm is Normalizer.NFKC_LOWERCASE else text


def _split_before(text: str, marker: str) -> list[str]:
    words = []
    start = 0
    pos = text.find(marker, 1)
    while pos != -1:
        words.append(text[start:pos])
        start = pos
        pos = text.find(marker, pos + 1)
    words.append(text[start:])
    return words


def pretokenize(text: str, spec: TokenizerSpec) -> list[str]:
    """Split normalized text into words according to the pre-tokenizer."""
    if not text:
        return []
    pre = spec.pre_tokenizer
    if pre.kind == "Whitespace":
        return text.split()
    if pre.kind == "Metaspace":
        text = text.replace(" ", pre.replacement)
        if pre.add_prefix_space:
            text = pre.replacement + text
        return _split_before(text, pre.replacement)
    mapped = "".join([_BYTE_TABLE[b] for b in text.encode("utf-8")])
    return _split_before(mapped, BYTELEVEL_SPACE)


class _Encoder:
    """Lookup tables and a bounded word cache for one spec."""

    def __init__(self, spec: TokenizerSpec):
        self.spec = spec
        self.cache: dict[str, tuple[TokenId, ...]] = {}
        excluded = set(spec.special_ids)
        if spec.unk_id is not None:
            excluded.add(spec.unk_id)
        if spec.byte_fallback:
            excluded.update(spec.byte_piece_ids)
        self.match: dict[str, tuple[TokenId, float]] = {
            p.token: (i, p.score) for i, p in enumerate(spec.pieces) if i not in excluded
        }
        self.max_len = max((len(t) for t in self.match), default=0)
        self.merge_rank = {m: r for r, m in enumerate(spec.merges)}
        self.piece_to_id = spec.piece_to_id
        self.byte_ids = spec.byte_piece_ids

    def encode_word(self, word: str) -> tuple[TokenId, ...]:
        ids = self.cache.get(word)
        if ids is None:
            kind = self.spec.model_kind
            if kind is ModelKind.UNIGRAM:
                ids = self._unigram(word)
            elif kind is ModelKind.BPE:
                ids = self._bpe(word)
            else:
                ids = self._wordpiece(word)
            if len(self.cache) >= _CACHE_LIMIT:
                self.cache.clear()
            self.cache[word] = ids
        return ids

    def _unk(self, word: str) -> tuple[TokenId, ...]:
        if self.spec.unk_id is None:
            raise NoCoverage(f"cannot encode {word!r} and the tokenizer has no unknown token")
        return (self.spec.unk_id,)

    def _unigram(self, word: str) -> tuple[TokenId, ...]:
        n = len(word)
        match = self.match
        # best[i]: max total score of a segmentation of word[:i]
        best: list[float | None] = [None] * (n + 1)
        back = [0] * (n + 1)
        best[0] = 0.0
        for i in range(1, n + 1):
            top = None
            # longest piece first so equal scores keep the longest final piece
            for j in range(max(0, i - self.max_len), i):
                prev = best[j]
                if prev is None:
                    continue
                hit = match.get(word[j:i])
                if hit is None:
                    continue
                s = prev + hit[1]
                if top is None or s > top:
                    top = s
                    back[i] = j
            best[i] = top
        if best[n] is not None:
            out = []
            i = n
            while i > 0:
                j = back[i]
                out.append(match[word[j:i]][0])
                i = j
            return tuple(reversed(out))
        if not self.byte_ids:
            return self._unk(word)
        return self._unigram_fallback(word)

    def _unigram_fallback(self, word: str) -> tuple[TokenId, ...]:
        # lattice with a byte-fallback node on every character; minimise the
        # fallback count first, then maximise the piece score
        n = len(word)
        match = self.match
        best: list[tuple[int, float] | None] = [None] * (n + 1)
        back = [0] * (n + 1)
        via_bytes = [False] * (n + 1)
        best[0] = (0, 0.0)
        for i in range(1, n + 1):
            top = None
            for j in range(max(0, i - self.max_len), i):
                prev = best[j]
                hit = match.get(word[j:i])
                if prev is None or hit is None:
                    continue
                s = (prev[0], prev[1] + hit[1])
                if top is None or s > top:
                    top = s
                    back[i] = j
                    via_bytes[i] = False
            prev = best[i - 1]
            s = (prev[0] - 1, prev[1])
            if top is None or s > top:
                top = s
                back[i] = i - 1
                via_bytes[i] = True
            best[i] = top
        out: list[TokenId] = []
        i = n
        while i > 0:
            j = back[i]
            if via_bytes[i]:
                out.extend(reversed([self.byte_ids[b] for b in word[j:i].encode("utf-8")]))
            else:
                out.append(match[word[j:i]][0])
            i = j
        return tuple(reversed(out))

    def _bpe(self, word: str) -> tuple[TokenId, ...]:
        symbols = list(word)
        rank = self.merge_rank
        while len(symbols) > 1:
            best_rank = None
            best_pos = -1
            for k in range(len(symbols) - 1):
                r = rank.get((symbols[k], symbols[k + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank = r
                    best_pos = k
            if best_rank is None:
                break
            symbols[best_pos : best_pos + 2] = [symbols[best_pos] + symbols[best_pos + 1]]
        out = []
        for sym in symbols:
            idx = self.piece_to_id.get(sym)
            if idx is None:
                out.extend(self._unk(sym))
            else:
                out.append(idx)
        return tuple(out)

    def support_word(self, word: str) -> tuple[TokenId, ...]:
        ids = self.encode_word(word)
        if self.spec.model_kind is ModelKind.WORDPIECE and ids == (self.spec.unk_id,):
            path, _ = self._wordpiece_greedy(word)
            return ids + path
        return ids

    def _wordpiece_greedy(self, word: str) -> tuple[tuple[TokenId, ...], bool]:
        """Longest-match path; on failure, the pieces matched before the dead end."""
        prefix = self.spec.continuation_prefix
        match = self.match
        out = []
        start = 0
        n = len(word)
        while start < n:
            end = min(n, start + self.max_len)
            hit = None
            while end > start:
                sub = word[start:end]
                if start > 0:
                    sub = prefix + sub
                hit = match.get(sub)
                if hit is not None:
                    break
                end -= 1
            if hit is None:
                return tuple(out), False
            out.append(hit[0])
            start = end
        return tuple(out), True

    def _wordpiece(self, word: str) -> tuple[TokenId, ...]:
        path, ok = self._wordpiece_greedy(word)
        return path if ok else self._unk(word)


def _check_kind(spec: TokenizerSpec, kind: ModelKind) -> None:
    if spec.model_kind is not kind:
        raise ValueError(f"expected a {kind.value} tokenizer, got {spec.model_kind.value}")


def encode_unigram(word: str, spec: TokenizerSpec) -> list[TokenId]:
    """Highest-scoring segmentation of ``word`` (Viterbi over characters).

    Among equal-score segmentations the one with the longest final piece
    wins, applied recursively towards the start of the word.
    """
    _check_kind(spec, ModelKind.UNIGRAM)
    return list(spec._encoder.encode_word(word))


def encode_bpe(word: str, spec: TokenizerSpec) -> list[TokenId]:
    """Greedy BPE: merge the lowest-ranked adjacent pair (leftmost on ties)."""
    _check_kind(spec, ModelKind.BPE)
    return list(spec._encoder.encode_word(word))


def encode_wordpiece(word: str, spec: TokenizerSpec) -> list[TokenId]:
    """Greedy longest-match-first; any unmatched position maps the word to unk."""
    _check_kind(spec, ModelKind.WORDPIECE)
    return list(spec._encoder.encode_word(word))


def encode_words(words: Iterable[str], spec: TokenizerSpec) -> list[TokenId]:
    enc = spec._encoder.encode_word
    out: list[TokenId] = []
    for w in words:
        out.extend(enc(w))
    return out


def encode_text(text: str, spec: TokenizerSpec) -> list[TokenId]:
    return encode_words(pretokenize(normalize(text, spec), spec), spec)


def support_ids(text: str, spec: TokenizerSpec) -> list[TokenId]:
    """Token IDs that any vocabulary subset must keep for ``encode_text`` to be unchanged.

    This is the encoding itself, except for WordPiece words that fall back
    to unk: there the greedy pieces matched before the dead end are added,
    since dropping one of them can let the greedy match succeed.
    """
    support = spec._encoder.support_word
    out: list[TokenId] = []
    for w in pretokenize(normalize(text, spec), spec):
        out.extend(support(w))
    return out


def decode(ids: Iterable[TokenId], spec: TokenizerSpec) -> str:
    """Inverse of :func:`encode_text` for text fully covered by the pieces."""
    pieces = spec.pieces
    pre = spec.pre_tokenizer
    byte_ids = {i: b for b, i in enumerate(spec.byte_piece_ids)}
    buf = bytearray()
    wordpiece = spec.model_kind is ModelKind.WORDPIECE
    first = True
    for i in ids:
        if not 0 <= i < len(pieces):
            raise IdOutOfRange(f"token id {i} out of range for vocabulary of {len(pieces)}")
        if i in byte_ids:
            buf.append(byte_ids[i])
            first = False
            continue
        tok = pieces[i].token
        if pre.kind == "ByteLevel":
            for ch in tok:
                b = BYTE_DECODER.get(ch)
                if b is None:
                    buf.extend(ch.encode("utf-8"))
                else:
                    buf.append(b)
        else:
            if pre.kind == "Metaspace":
                tok = tok.replace(pre.replacement, " ")
            elif wordpiece:
                if tok.startswith(spec.continuation_prefix) and not first:
                    tok = tok[len(spec.continuation_prefix):]
                elif not first:
                    tok = " " + tok
            buf.extend(tok.encode("utf-8"))
        first = False
    text = buf.decode("utf-8", errors="replace")
    if pre.kind == "Metaspace" and pre.add_prefix_space and text.startswith(" "):
        text = text[1:]
    return text
