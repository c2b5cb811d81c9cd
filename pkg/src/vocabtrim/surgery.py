"""Row-slicing of vocabulary-indexed checkpoint tensors."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .container import TensorRecord, TensorStore
from .errors import (
    AxisMismatch,
    FieldMissing,
    IdOutOfRange,
    ProfileMismatch,
    SchemaError,
    TiedGroupInconsistent,
)
from .plan import TrimPlan

PROFILE_PATH_ENV = "VT_PROFILE_PATH"


@dataclass(frozen=True)
class VocabTensor:
    pattern: str
    axis: int = 0
    required: bool = True

    def matches(self, name: str) -> bool:
        if self.pattern.endswith("*"):
            return name.startswith(self.pattern[:-1])
        return name == self.pattern


@dataclass(frozen=True)
class ModelProfile:
    """Which tensors carry a vocabulary axis, plus parameter-accounting constants.

    ``emb_matrix_count`` is the number of independent V x d matrices counted
    in ``total_params_ref``.
    """

    name: str
    d_model: int
    vocab_size_ref: int
    vocab_tensors: tuple[VocabTensor, ...]
    emb_matrix_count: int = 1
    total_params_ref: int = 0
    tied_groups: tuple[tuple[str, ...], ...] = ()
    config_vocab_field: str = "vocab_size"
    notes: str = field(default="", compare=False)

    def __post_init__(self):
        if self.d_model < 1 or self.vocab_size_ref < 1 or self.emb_matrix_count < 1:
            raise SchemaError(f"profile {self.name!r}: d_model, vocab_size_ref and m must be positive")
        for vt in self.vocab_tensors:
            if vt.axis not in (0, 1):
                raise SchemaError(f"profile {self.name!r}: vocab axis must be 0 or 1")

    @property
    def non_embedding_params(self) -> int:
        return self.total_params_ref - self.vocab_size_ref * self.d_model * self.emb_matrix_count

    @classmethod
    def from_dict(cls, doc: dict) -> ModelProfile:
        try:
            return cls(
                name=doc["name"],
                d_model=int(doc["d_model"]),
                vocab_size_ref=int(doc["vocab_size_ref"]),
                vocab_tensors=tuple(
                    VocabTensor(v["pattern"], int(v.get("axis", 0)), bool(v.get("required", True)))
                    for v in doc["vocab_tensors"]
                ),
                emb_matrix_count=int(doc.get("emb_matrix_count", 1)),
                total_params_ref=int(doc.get("total_params_ref", 0)),
                tied_groups=tuple(tuple(g) for g in doc.get("tied_groups", [])),
                config_vocab_field=doc.get("config_vocab_field", "vocab_size"),
                notes=doc.get("notes", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed model profile: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "d_model": self.d_model,
            "vocab_size_ref": self.vocab_size_ref,
            "vocab_tensors": [
                {"pattern": v.pattern, "axis": v.axis, "required": v.required}
                for v in self.vocab_tensors
            ],
            "emb_matrix_count": self.emb_matrix_count,
            "total_params_ref": self.total_params_ref,
            "tied_groups": [list(g) for g in self.tied_groups],
            "config_vocab_field": self.config_vocab_field,
            "notes": self.notes,
        }


def builtin_profiles() -> list[str]:
    root = resources.files("vocabtrim") / "profiles"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_profile(name_or_path: str | os.PathLike) -> ModelProfile:
    """Load a profile by file path, by name from ``$VT_PROFILE_PATH``, or built in."""
    path = Path(name_or_path)
    if path.is_file():
        return ModelProfile.from_dict(json.loads(path.read_text("utf-8")))
    name = str(name_or_path)
    extra = os.environ.get(PROFILE_PATH_ENV)
    if extra:
        for d in extra.split(os.pathsep):
            candidate = Path(d) / f"{name}.json"
            if candidate.is_file():
                return ModelProfile.from_dict(json.loads(candidate.read_text("utf-8")))
    res = resources.files("vocabtrim") / "profiles" / f"{name}.json"
    if not res.is_file():
        raise ProfileMismatch(f"no model profile named {name!r}")
    return ModelProfile.from_dict(json.loads(res.read_text("utf-8")))


# --------------------------------------------------------------------------
# slicing


def slice_vocab_axis(
    t: TensorRecord, axis: int, kept: Sequence[int], *, vocab_size: int | None = None
) -> TensorRecord:
    """Keep slabs ``kept`` along ``axis``; bytes are copied, never converted."""
    if axis >= len(t.shape):
        raise AxisMismatch(f"tensor of rank {len(t.shape)} has no axis {axis}")
    extent = t.shape[axis]
    if vocab_size is not None and extent != vocab_size:
        raise AxisMismatch(f"axis {axis} has extent {extent}, expected vocabulary size {vocab_size}")
    idx = np.asarray(kept, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= extent):
        raise IdOutOfRange(f"kept ids exceed axis extent {extent}")
    raw = np.frombuffer(t.data, dtype=np.uint8).reshape(*t.shape, t.itemsize)
    out = np.take(raw, idx, axis=axis)
    shape = list(t.shape)
    shape[axis] = len(idx)
    return TensorRecord(t.dtype, tuple(shape), out.tobytes())


def resolve_vocab_tensors(store: TensorStore, profile: ModelProfile) -> dict[str, int]:
    """Map each vocabulary-indexed tensor name in ``store`` to its vocab axis."""
    found: dict[str, int] = {}
    for vt in profile.vocab_tensors:
        hits = [n for n in store.tensors if vt.matches(n)]
        if not hits and vt.required:
            raise ProfileMismatch(f"profile {profile.name!r}: no tensor matches {vt.pattern!r}")
        for n in hits:
            if found.get(n, vt.axis) != vt.axis:
                raise ProfileMismatch(f"tensor {n!r} matched with conflicting axes")
            found[n] = vt.axis
    return found


def trim_checkpoint(store: TensorStore, profile: ModelProfile, plan: TrimPlan) -> TensorStore:
    """Slice every vocabulary-indexed tensor with ``plan.kept``.

    Unmatched tensors are carried over unchanged. The plan's source
    vocabulary may be smaller than the checkpoint's (padded embedding rows
    are then dropped) but never larger.
    """
    V = profile.vocab_size_ref
    if plan.source_vocab_size is not None and plan.source_vocab_size > V:
        raise ProfileMismatch(
            f"plan covers {plan.source_vocab_size} tokens but profile {profile.name!r} has {V} rows"
        )
    if plan.kept and plan.kept[-1] >= V:
        raise ProfileMismatch(f"plan keeps id {plan.kept[-1]} beyond profile vocabulary {V}")
    targets = resolve_vocab_tensors(store, profile)
    for group in profile.tied_groups:
        extents = {
            (n, store[n].shape[targets[n]]) for n in group if n in targets and n in store
        }
        if len({e for _, e in extents}) > 1:
            raise TiedGroupInconsistent(f"tied tensors disagree on vocab extent: {sorted(extents)}")
    out: dict[str, TensorRecord] = {}
    for name, rec in store.tensors.items():
        if name in targets:
            out[name] = slice_vocab_axis(rec, targets[name], plan.kept, vocab_size=V)
        else:
            out[name] = rec
    return TensorStore(out, None if store.metadata is None else dict(store.metadata))


def rewrite_config(config: bytes, profile: ModelProfile, new_vocab: int) -> bytes:
    """Set the profile's vocabulary-size field of a JSON config; key order is kept."""
    try:
        doc = json.loads(config)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"config is not valid JSON: {exc}") from exc
    key = profile.config_vocab_field
    if not isinstance(doc, dict) or key not in doc:
        raise FieldMissing(f"config has no {key!r} field")
    doc[key] = int(new_vocab)
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
