"""Parameter accounting for trimmed models."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ProfileMismatch
from .plan import TrimPlan
from .surgery import ModelProfile


def param_count(profile: ModelProfile, vocab: int) -> int:
    """Total parameters of ``profile``'s architecture with a ``vocab``-row vocabulary."""
    if vocab < 1:
        raise ValueError("vocabulary size must be positive")
    return profile.non_embedding_params + vocab * profile.d_model * profile.emb_matrix_count


def embedding_share(profile: ModelProfile, vocab: int) -> float:
    """Fraction of all parameters held by the vocabulary-indexed matrices."""
    emb = vocab * profile.d_model * profile.emb_matrix_count
    return emb / param_count(profile, vocab)


@dataclass(frozen=True)
class TrimReport:
    vocab_before: int
    vocab_after: int
    vocab_ratio: float
    params_before: int
    params_after: int
    param_ratio: float
    embedding_share_before: float
    embedding_share_after: float
    per_reason_counts: dict[str, int] = field(default_factory=dict)
    profile_name: str = ""
    policy: str = ""
    fingerprints: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        # field declaration order is the canonical key order
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        rows = []
        for key, value in self.to_dict().items():
            if isinstance(value, dict):
                for sub, v in value.items():
                    rows.append((f"{key}.{sub}", str(v)))
            elif isinstance(value, float):
                rows.append((key, f"{value:.6f}"))
            else:
                rows.append((key, str(value)))
        width = max(len(k) for k, _ in rows)
        return "".join(f"{k.ljust(width)}  {v}\n" for k, v in rows)


def build_report(plan: TrimPlan, profile: ModelProfile) -> TrimReport:
    before = profile.vocab_size_ref
    after = len(plan.kept)
    if plan.source_vocab_size is not None and plan.source_vocab_size > before:
        raise ProfileMismatch(
            f"plan covers {plan.source_vocab_size} tokens, profile {profile.name!r} only {before}"
        )
    if after > before or (plan.kept and plan.kept[-1] >= before):
        raise ProfileMismatch(f"plan does not fit profile {profile.name!r} ({before} tokens)")
    p0 = param_count(profile, before)
    p1 = param_count(profile, after)
    fps = {"source": plan.source_fingerprint}
    if plan.trimmed_spec is not None:
        fps["trimmed"] = plan.trimmed_spec.fingerprint
    return TrimReport(
        vocab_before=before,
        vocab_after=after,
        vocab_ratio=after / before,
        params_before=p0,
        params_after=p1,
        param_ratio=p1 / p0,
        embedding_share_before=embedding_share(profile, before),
        embedding_share_after=embedding_share(profile, after),
        per_reason_counts=plan.reason_counts(),
        profile_name=profile.name,
        policy=str(plan.policy),
        fingerprints=fps,
    )
