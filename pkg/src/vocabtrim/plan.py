"""Select which tokens survive a trim and derive the trimmed tokenizer."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    BudgetTooSmall,
    ClosureViolation,
    DerivationMissing,
    DroppedToken,
    FingerprintMismatch,
    FormatError,
)
from .freq import FrequencyTable
from .tokenizer import ModelKind, PieceEntry, TokenizerSpec

PLAN_MAGIC = "#vt-plan"
PLAN_VERSION = "1"


class Reason(str, enum.Enum):
    OBSERVED = "Observed"
    TOPN = "TopN"
    SPECIAL = "Special"
    CLOSURE = "Closure"
    ALPHABET = "Alphabet"


@dataclass(frozen=True)
class AllObserved:
    def __str__(self) -> str:
        return "all-observed"


@dataclass(frozen=True)
class TopN:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("top-n budget must be positive")

    def __str__(self) -> str:
        return f"top-n:{self.n}"


Policy = AllObserved | TopN


def parse_policy(text: str) -> Policy:
    if text == "all-observed":
        return AllObserved()
    if text.startswith("top-n:"):
        try:
            return TopN(int(text[6:]))
        except ValueError:
            pass
    raise FormatError(f"unknown policy {text!r}")


@dataclass(frozen=True)
class TrimPlan:
    """Kept token IDs (ascending), their reasons, and the trimmed tokenizer.

    ``trimmed_spec`` is ``None`` for plans read back from a plan file without
    the source tokenizer.
    """

    kept: tuple[int, ...]
    reasons: Mapping[int, Reason]
    counts: Mapping[int, int]
    source_fingerprint: str
    policy: Policy
    trimmed_spec: TokenizerSpec | None = None
    source_vocab_size: int | None = None

    @property
    def old_to_new(self) -> dict[int, int]:
        return {old: new for new, old in enumerate(self.kept)}

    def __len__(self) -> int:
        return len(self.kept)

    def reason_counts(self) -> dict[str, int]:
        out = {r.value: 0 for r in Reason}
        for r in self.reasons.values():
            out[r.value] += 1
        return out


# --------------------------------------------------------------------------
# mandatory tokens and BPE ancestry


def alphabet_ids(spec: TokenizerSpec) -> set[int]:
    """Single characters and their continuation variants (WordPiece)."""
    prefix = spec.continuation_prefix
    out = set()
    for i, p in enumerate(spec.pieces):
        tok = p.token
        if len(tok) == 1 or (tok.startswith(prefix) and len(tok) == len(prefix) + 1):
            out.add(i)
    return out


def mandatory_ids(spec: TokenizerSpec, *, keep_alphabet: bool = False) -> set[int]:
    out = set(spec.special_ids)
    if spec.unk_id is not None:
        out.add(spec.unk_id)
    out.update(spec.byte_piece_ids)
    if keep_alphabet and spec.model_kind is ModelKind.WORDPIECE:
        out |= alphabet_ids(spec)
    return out


def _replay(token: str, rank: Mapping[tuple[str, str], int]) -> tuple[list[str], list[str]]:
    """Run the BPE merge loop on ``token``'s characters.

    Returns the final symbols and every intermediate symbol created.
    """
    symbols = list(token)
    created = []
    while len(symbols) > 1:
        best, pos = None, -1
        for k in range(len(symbols) - 1):
            r = rank.get((symbols[k], symbols[k + 1]))
            if r is not None and (best is None or r < best):
                best, pos = r, k
        if best is None:
            break
        merged = symbols[pos] + symbols[pos + 1]
        symbols[pos : pos + 2] = [merged]
        created.append(merged)
    return symbols, created


def bpe_ancestors(spec: TokenizerSpec) -> dict[int, frozenset[int]]:
    """Proper ancestors of every BPE token in its merge derivation.

    A token reached by replaying the merges over its own characters uses
    exactly that derivation inside any word. Tokens the replay cannot reach
    fall back to their lowest-ranked producing merge.
    """
    index = spec.piece_to_id
    rank = {m: r for r, m in enumerate(spec.merges)}
    producer: dict[str, tuple[str, str]] = {}
    for left, right in spec.merges:
        producer.setdefault(left + right, (left, right))
    structural = spec.special_ids | ({spec.unk_id} if spec.unk_id is not None else set())

    direct: dict[int, set[int]] = {}
    for i, p in enumerate(spec.pieces):
        tok = p.token
        if len(tok) == 1 or i in structural:
            direct[i] = set()
            continue
        symbols, created = _replay(tok, rank)
        if symbols == [tok]:
            deps = set(tok)
            deps.update(created[:-1])
        elif tok in producer:
            deps = set(producer[tok])
        else:
            raise DerivationMissing(f"BPE token {tok!r} (id {i}) has no merge derivation")
        missing = [d for d in deps if d not in index]
        if missing:
            raise DerivationMissing(f"BPE token {tok!r} derives from absent symbols {missing}")
        direct[i] = {index[d] for d in deps}

    # transitive closure; derivations only reference strictly shorter tokens
    order = sorted(direct, key=lambda i: len(spec.pieces[i].token))
    full: dict[int, frozenset[int]] = {}
    for i in order:
        acc = set(direct[i])
        for d in direct[i]:
            acc |= full[d]
        full[i] = frozenset(acc)
    return full


def structural_closure(
    kept: Iterable[int], spec: TokenizerSpec, *, keep_alphabet: bool = False
) -> set[int]:
    """Add the tokens needed for every kept token to stay constructible."""
    out = set(kept)
    if spec.model_kind is ModelKind.BPE:
        anc = bpe_ancestors(spec)
        for t in list(out):
            out |= anc[t]
    elif spec.model_kind is ModelKind.WORDPIECE and keep_alphabet:
        out |= alphabet_ids(spec)
    return out


# --------------------------------------------------------------------------
# selection


def _check_table(table: FrequencyTable, spec: TokenizerSpec) -> None:
    if table.tokenizer_fingerprint != spec.fingerprint or len(table) != spec.vocab_size:
        raise FingerprintMismatch(
            f"frequency table was counted with tokenizer {table.tokenizer_fingerprint}, "
            f"not {spec.fingerprint}"
        )


def select_kept(
    table: FrequencyTable, policy: Policy, spec: TokenizerSpec, *, keep_alphabet: bool = False
) -> set[int]:
    """Token IDs chosen by ``policy``; for top-n the budget includes everything.

    Top-n ranks tokens by count (ties by lower ID). For BPE an ancestor is
    ranked as high as its best-ranked descendant and ahead of it, so every
    prefix of the ranking is already closed and the final size is exactly n.
    """
    _check_table(table, spec)
    mandatory = structural_closure(mandatory_ids(spec, keep_alphabet=keep_alphabet), spec)
    counts = table.counts
    if isinstance(policy, AllObserved):
        return mandatory | set(np.flatnonzero(counts).tolist())

    n = policy.n
    if n < len(mandatory):
        raise BudgetTooSmall(f"budget {n} is below the {len(mandatory)} mandatory tokens")
    V = spec.vocab_size
    # primary key: (-count, id) of own or best descendant
    key = [(-int(c), i) for i, c in enumerate(counts.tolist())]
    if spec.model_kind is ModelKind.BPE:
        eff = list(key)
        for t, ancestors in bpe_ancestors(spec).items():
            for a in ancestors:
                if key[t] < eff[a]:
                    eff[a] = key[t]
        lengths = [len(p.token) for p in spec.pieces]
        order = sorted(range(V), key=lambda i: (eff[i], lengths[i], i))
    else:
        order = sorted(range(V), key=key.__getitem__)
    kept = set(mandatory)
    for i in order:
        if len(kept) >= n:
            break
        kept.add(i)
    return kept


# --------------------------------------------------------------------------
# plan construction


def _trim_spec(spec: TokenizerSpec, kept: list[int]) -> TokenizerSpec:
    remap = {old: new for new, old in enumerate(kept)}
    if spec.model_kind is ModelKind.UNIGRAM:
        pieces = [spec.pieces[i] for i in kept]
    else:
        # BPE/WordPiece scores carry the rank, which is the new ID
        pieces = [PieceEntry(spec.pieces[i].token, float(new)) for new, i in enumerate(kept)]
    survivors = {p.token for p in pieces}
    merges = [(l, r) for l, r in spec.merges if l in survivors and r in survivors and l + r in survivors]
    specials = [(c, remap[i]) for c, i in spec.special_tokens]
    unk = None if spec.unk_id is None else remap[spec.unk_id]
    return replace(spec, pieces=tuple(pieces), merges=tuple(merges),
                   special_tokens=tuple(specials), unk_id=unk)


def build_plan(
    kept: Iterable[int],
    table: FrequencyTable,
    spec: TokenizerSpec,
    *,
    policy: Policy = AllObserved(),
    keep_alphabet: bool = False,
) -> TrimPlan:
    _check_table(table, spec)
    kept_sorted = sorted(set(kept))
    kept_set = set(kept_sorted)
    specials = spec.special_ids | ({spec.unk_id} if spec.unk_id is not None else set())
    missing = mandatory_ids(spec, keep_alphabet=keep_alphabet) - kept_set
    if missing:
        raise DroppedToken(f"mandatory tokens {sorted(missing)} are not kept")
    alphabet = set(spec.byte_piece_ids)
    if keep_alphabet and spec.model_kind is ModelKind.WORDPIECE:
        alphabet |= alphabet_ids(spec)

    needed_by_others: set[int] = set()
    if spec.model_kind is ModelKind.BPE:
        anc = bpe_ancestors(spec)
        for t in kept_sorted:
            escaped = anc[t] - kept_set
            if escaped:
                raise ClosureViolation(
                    f"kept token {spec.pieces[t].token!r} needs dropped tokens {sorted(escaped)}"
                )
            needed_by_others |= anc[t]

    default = Reason.TOPN if isinstance(policy, TopN) else Reason.OBSERVED
    reasons = {}
    for t in kept_sorted:
        if t in specials:
            reasons[t] = Reason.SPECIAL
        elif t in alphabet:
            reasons[t] = Reason.ALPHABET
        elif t in needed_by_others:
            reasons[t] = Reason.CLOSURE
        else:
            reasons[t] = default
    counts = table.counts
    return TrimPlan(
        kept=tuple(kept_sorted),
        reasons=reasons,
        counts={t: int(counts[t]) for t in kept_sorted},
        source_fingerprint=spec.fingerprint,
        policy=policy,
        trimmed_spec=_trim_spec(spec, kept_sorted),
        source_vocab_size=spec.vocab_size,
    )


def make_plan(
    table: FrequencyTable, policy: Policy, spec: TokenizerSpec, *, keep_alphabet: bool = False
) -> TrimPlan:
    """select_kept, structural_closure and build_plan in one call."""
    kept = select_kept(table, policy, spec, keep_alphabet=keep_alphabet)
    kept = structural_closure(kept, spec, keep_alphabet=keep_alphabet)
    return build_plan(kept, table, spec, policy=policy, keep_alphabet=keep_alphabet)


def apply_plan_to_ids(ids: Iterable[int], plan: TrimPlan) -> list[int]:
    remap = plan.old_to_new
    out = []
    for i in ids:
        new = remap.get(i)
        if new is None:
            raise DroppedToken(f"token id {i} was removed by the plan")
        out.append(new)
    return out


# --------------------------------------------------------------------------
# plan file


def save_plan(plan: TrimPlan) -> bytes:
    lines = ["\t".join([PLAN_MAGIC, PLAN_VERSION, plan.source_fingerprint,
                        str(len(plan.kept)), str(plan.policy)])]
    for new, old in enumerate(plan.kept):
        lines.append(f"{old}\t{new}\t{plan.reasons[old].value}\t{plan.counts.get(old, 0)}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_plan(data: bytes, spec: TokenizerSpec | None = None) -> TrimPlan:
    """Read a plan file; with the source ``spec`` the trimmed tokenizer is rebuilt."""
    try:
        rows = data.decode("utf-8").split("\n")
    except UnicodeDecodeError as exc:
        raise FormatError("plan file is not UTF-8") from exc
    if rows and rows[-1] == "":
        rows.pop()
    if not rows:
        raise FormatError("empty plan file")
    head = rows[0].split("\t")
    if len(head) != 5 or head[0] != PLAN_MAGIC or head[1] != PLAN_VERSION:
        raise FormatError(f"bad plan header {rows[0]!r}")
    fp, policy = head[2], parse_policy(head[4])
    kept, reasons, counts = [], {}, {}
    try:
        n_kept = int(head[3])
        for k, row in enumerate(rows[1:]):
            old, new, reason, count = row.split("\t")
            old, new = int(old), int(new)
            if new != k or (kept and old <= kept[-1]):
                raise FormatError(f"plan row {k + 1} breaks ascending order")
            kept.append(old)
            reasons[old] = Reason(reason)
            counts[old] = int(count)
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"bad plan row: {exc}") from exc
    if n_kept != len(kept):
        raise FormatError("kept-count header does not match the number of rows")
    trimmed = None
    size = None
    if spec is not None:
        if spec.fingerprint != fp:
            raise FingerprintMismatch(f"plan targets tokenizer {fp}, not {spec.fingerprint}")
        if kept and kept[-1] >= spec.vocab_size:
            raise FormatError("plan refers to IDs beyond the tokenizer vocabulary")
        trimmed = _trim_spec(spec, kept)
        size = spec.vocab_size
    return TrimPlan(tuple(kept), reasons, counts, fp, policy, trimmed, size)


def identity_plan(spec: TokenizerSpec) -> TrimPlan:
    table = FrequencyTable.zeros(spec)
    return build_plan(range(spec.vocab_size), table, spec, policy=TopN(max(1, spec.vocab_size)))
