"""Streaming token-frequency counting over line-delimited corpora."""

from __future__ import annotations

import gzip
import logging
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import FingerprintMismatch, FormatError
from .tokenizer import TokenizerSpec, normalize, pretokenize

log = logging.getLogger(__name__)

TABLE_MAGIC = "#vt-freq"
TABLE_VERSION = "1"
_BATCH_LINES = 4096
_GZIP_MAGIC = b"\x1f\x8b"


@dataclass(eq=False)
class FrequencyTable:
    """Dense per-token occurrence counts for one tokenizer.

    ``skipped`` counts lines rejected as invalid UTF-8. It is informational
    only and is neither serialized nor compared.
    """

    counts: np.ndarray
    tokenizer_fingerprint: str
    docs_seen: int = 0
    skipped: int = field(default=0)

    def __post_init__(self):
        self.counts = np.ascontiguousarray(self.counts, dtype=np.uint64)
        if self.counts.ndim != 1:
            raise ValueError("counts must be one-dimensional")

    @classmethod
    def zeros(cls, spec: TokenizerSpec) -> FrequencyTable:
        return cls(np.zeros(spec.vocab_size, dtype=np.uint64), spec.fingerprint)

    @property
    def tokens_seen(self) -> int:
        return int(self.counts.sum())

    @property
    def distinct(self) -> int:
        return int(np.count_nonzero(self.counts))

    def __len__(self) -> int:
        return len(self.counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrequencyTable):
            return NotImplemented
        return (
            self.tokenizer_fingerprint == other.tokenizer_fingerprint
            and self.docs_seen == other.docs_seen
            and np.array_equal(self.counts, other.counts)
        )


def decode_line(line: bytes | str) -> str | None:
    if isinstance(line, str):
        text = line
    else:
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError:
            return None
    return text.rstrip("\r\n")


def _flush(batch: Counter, encode, counts: np.ndarray) -> None:
    if not batch:
        return
    n = len(counts)
    ids: list[int] = []
    weights: list[int] = []
    for word, c in batch.items():
        toks = encode(word)
        ids.extend(toks)
        weights.extend([c] * len(toks))
    # integer weights stay exact through float64 only below 2**53 per batch
    counts += np.bincount(ids, weights=weights, minlength=n).astype(np.uint64)
    batch.clear()


def count_corpus(
    lines: Iterable[bytes | str], spec: TokenizerSpec, *, unit: str = "token"
) -> FrequencyTable:
    """Count token occurrences over ``lines`` in a single streaming pass.

    With ``unit="doc"`` each token is counted at most once per line
    (document frequency). Lines that are not valid UTF-8 are skipped.

    Occurrences are taken from :func:`support_ids`, which equals the
    encoding except for WordPiece words that fall back to unk; their
    dead-end greedy pieces are credited too, so an all-observed trim keeps
    the word failing the same way.
    """
    if unit not in ("token", "doc"):
        raise ValueError(f"unknown count unit {unit!r}")
    table = FrequencyTable.zeros(spec)
    encode = spec._encoder.support_word
    batch: Counter = Counter()
    docs = skipped = pending = 0
    for raw in lines:
        text = decode_line(raw)
        if text is None:
            skipped += 1
            continue
        docs += 1
        words = pretokenize(normalize(text, spec), spec)
        if unit == "token":
            batch.update(words)
        else:
            seen = set()
            for w in words:
                seen.update(encode(w))
            if seen:
                table.counts[np.fromiter(seen, dtype=np.int64, count=len(seen))] += np.uint64(1)
        pending += 1
        if pending >= _BATCH_LINES:
            _flush(batch, encode, table.counts)
            pending = 0
    _flush(batch, encode, table.counts)
    table.docs_seen = docs
    table.skipped = skipped
    return table


def merge_tables(a: FrequencyTable, b: FrequencyTable) -> FrequencyTable:
    if a.tokenizer_fingerprint != b.tokenizer_fingerprint or len(a) != len(b):
        raise FingerprintMismatch(
            f"cannot merge tables from tokenizers {a.tokenizer_fingerprint} and {b.tokenizer_fingerprint}"
        )
    return FrequencyTable(
        a.counts + b.counts, a.tokenizer_fingerprint,
        a.docs_seen + b.docs_seen, a.skipped + b.skipped,
    )


# --------------------------------------------------------------------------
# file format

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def escape_token(token: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in token)


def unescape_token(text: str) -> str:
    out = []
    it = iter(text)
    for ch in it:
        if ch == "\\":
            nxt = next(it, None)
            if nxt not in _UNESCAPES:
                raise FormatError(f"bad escape in token {text!r}")
            out.append(_UNESCAPES[nxt])
        else:
            out.append(ch)
    return "".join(out)


def save_table(table: FrequencyTable, tokens: Sequence[str] | None = None) -> bytes:
    """Serialize as TSV. ``tokens`` supplies the human-readable token column."""
    if tokens is not None and len(tokens) != len(table):
        raise ValueError("token list does not match table length")
    lines = [
        "\t".join([TABLE_MAGIC, TABLE_VERSION, table.tokenizer_fingerprint,
                   str(table.docs_seen), str(table.tokens_seen)])
    ]
    counts = table.counts.tolist()
    for i, c in enumerate(counts):
        tok = escape_token(tokens[i]) if tokens is not None else ""
        lines.append(f"{i}\t{tok}\t{c}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_table(data: bytes) -> FrequencyTable:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("frequency table is not UTF-8") from exc
    rows = text.split("\n")
    if rows and rows[-1] == "":
        rows.pop()
    if not rows:
        raise FormatError("empty frequency table")
    head = rows[0].split("\t")
    if len(head) != 5 or head[0] != TABLE_MAGIC or head[1] != TABLE_VERSION:
        raise FormatError(f"bad frequency table header {rows[0]!r}")
    fp = head[2]
    if len(fp) != 16 or any(c not in "0123456789abcdef" for c in fp):
        raise FormatError(f"bad fingerprint {fp!r}")
    try:
        docs, tokens_seen = int(head[3]), int(head[4])
        counts = np.zeros(len(rows) - 1, dtype=np.uint64)
        for k, row in enumerate(rows[1:]):
            parts = row.split("\t")
            if len(parts) != 3 or int(parts[0]) != k:
                raise FormatError(f"bad frequency table row {k + 1}: {row!r}")
            unescape_token(parts[1])
            counts[k] = int(parts[2])
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"bad number in frequency table: {exc}") from exc
    table = FrequencyTable(counts, fp, docs)
    if table.tokens_seen != tokens_seen:
        raise FormatError("tokens_seen header does not equal the sum of counts")
    return table


# --------------------------------------------------------------------------
# corpus files and sharded counting


def _is_gzip(path: str) -> bool:
    with open(path, "rb") as f:
        return f.read(2) == _GZIP_MAGIC


def iter_file_lines(path: str, start: int = 0, end: int | None = None) -> Iterator[bytes]:
    """Yield raw lines of a plain or gzip file.

    For plain files a byte range may be given; a line belongs to the range
    containing its first byte.
    """
    if _is_gzip(path):
        if start or end is not None:
            raise ValueError("gzip corpora cannot be split by byte range")
        with gzip.open(path, "rb") as f:
            yield from f
        return
    with open(path, "rb") as f:
        if start > 0:
            f.seek(start - 1)
            f.readline()
        pos = f.tell()
        while end is None or pos < end:
            line = f.readline()
            if not line:
                break
            pos += len(line)
            yield line


def plan_shards(paths: Sequence[str], n_shards: int) -> list[tuple[str, int, int | None]]:
    """Split corpus files into roughly ``n_shards`` byte ranges per file."""
    shards = []
    for path in paths:
        if n_shards <= 1 or _is_gzip(path):
            shards.append((path, 0, None))
            continue
        size = os.path.getsize(path)
        step = max(1, -(-size // n_shards))
        for s in range(0, max(size, 1), step):
            shards.append((path, s, min(size, s + step)))
    return shards


_WORKER_SPEC: TokenizerSpec | None = None


def _init_worker(spec: TokenizerSpec) -> None:
    global _WORKER_SPEC
    _WORKER_SPEC = spec


def _count_shard(args: tuple[str, int, int | None, str]) -> FrequencyTable:
    path, start, end, unit = args
    assert _WORKER_SPEC is not None
    return count_corpus(iter_file_lines(path, start, end), _WORKER_SPEC, unit=unit)


def count_files(
    paths: Sequence[str], spec: TokenizerSpec, *, workers: int = 1, unit: str = "token"
) -> FrequencyTable:
    """Count a set of corpus files, optionally across worker processes.

    The result does not depend on ``workers``: shard tables are summed and
    integer addition is order-independent.
    """
    total = FrequencyTable.zeros(spec)
    if workers <= 1:
        for path in paths:
            log.info("counting %s", path)
            total = merge_tables(total, count_corpus(iter_file_lines(path), spec, unit=unit))
        return total
    jobs = [(p, s, e, unit) for p, s, e in plan_shards(paths, workers)]
    log.info("counting %d shards on %d workers", len(jobs), workers)
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(spec,)) as pool:
        for part in pool.map(_count_shard, jobs):
            total = merge_tables(total, part)
    return total
