"""Acceptance criteria 1-9, each at its stated tolerance.

Run under pytest (one PASS/FAIL line per criterion appears in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import random
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import helpers  # noqa: E402
import oracles  # noqa: E402
import published  # noqa: E402
from vocabtrim.container import read_container, write_container  # noqa: E402
from vocabtrim.freq import FrequencyTable, count_corpus  # noqa: E402
from vocabtrim.plan import (  # noqa: E402
    AllObserved,
    TopN,
    apply_plan_to_ids,
    build_plan,
    make_plan,
    mandatory_ids,
    select_kept,
    structural_closure,
)
from vocabtrim.report import embedding_share, param_count  # noqa: E402
from vocabtrim.surgery import load_profile, resolve_vocab_tensors, trim_checkpoint  # noqa: E402
from vocabtrim.tokenizer import (  # noqa: E402
    ModelKind,
    PieceEntry,
    TokenizerSpec,
    encode_bpe,
    encode_text,
    encode_unigram,
    serialize_tokenizer,
)

RESULTS: dict[int, tuple[bool, str]] = {}


def _record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (ok, detail)
    assert ok, f"criterion {n}: {detail}"


# -- 1-3: parameter accounting ---------------------------------------------------


def _accounting(pairs) -> tuple[bool, str]:
    misses = []
    for name, label, vocab, params in pairs:
        got = param_count(load_profile(name), vocab)
        if abs(got - params) > published.TOLERANCE:
            misses.append(f"{name} {label} {vocab}->{params / 1e6:.0f}M got {got / 1e6:.2f}M")
    total = len(list(pairs))
    if misses:
        return False, f"{total - len(misses)}/{total} rows within ±2M; off: " + "; ".join(misses)
    return True, f"{total}/{total} rows within ±2M"


def check_1():
    return _accounting(list(published.rows(published.TABLE_1)))


def check_2():
    return _accounting(list(published.rows(published.TABLE_2)))


def check_3():
    pairs = [(name, f"top-{v // 1000}K", v, p)
             for name, ladder in published.LADDERS.items() for v, p in ladder]
    return _accounting(pairs)


# -- 4: embedding share ----------------------------------------------------------------


def check_4():
    p = load_profile("mt5-small")
    share = embedding_share(p, p.vocab_size_ref)
    return share > 0.80, f"mt5-small embedding share {share:.4f}"


# -- 5: trim-equivalence ------------------------------------------------------------


def _fixture(kind: str, rng: random.Random) -> TokenizerSpec:
    size = rng.randint(20, 200)
    if kind == "Unigram":
        return helpers.random_unigram(rng, size, byte_fallback=False,
                                      pre=rng.choice(["Metaspace", "Whitespace"]))
    if kind == "BPE":
        return helpers.random_bpe(rng, size, pre=rng.choice(["Whitespace", "ByteLevel"]))
    return helpers.random_wordpiece(rng, size)


def check_5(per_kind: int = 1000):
    t0 = time.perf_counter()
    lines_checked = 0
    bad = []
    for kind in ("Unigram", "BPE", "WordPiece"):
        for seed in range(per_kind):
            rng = random.Random(f"{kind}-{seed}")
            spec = _fixture(kind, rng)
            assert spec.vocab_size <= 200
            # a sub-alphabet keeps the corpus language-specific, so real pruning happens
            alphabet = helpers.ALPHABET[: rng.randint(2, 10)]
            corpus = [helpers.random_line(rng, alphabet, 40) for _ in range(rng.randint(1, 20))]
            plan = make_plan(count_corpus(corpus, spec), AllObserved(), spec)
            for line in corpus:
                lines_checked += 1
                if apply_plan_to_ids(encode_text(line, spec), plan) != encode_text(line, plan.trimmed_spec):
                    bad.append(f"{kind} seed {seed}: {line!r}")
    secs = time.perf_counter() - t0
    ok = not bad and secs < 60
    detail = f"{3 * per_kind} fixtures, {lines_checked} lines, {len(bad)} mismatches, {secs:.1f}s"
    return ok, detail + ("" if not bad else f"; first: {bad[0]}")


# -- 6: encoder vs oracles ------------------------------------------------------------


def check_6(cases: int = 10_000):
    uni_bad = bpe_bad = 0
    for seed in range(cases):
        rng = random.Random(f"uni-{seed}")
        alphabet = "abcd"[: rng.randint(2, 4)]
        scores: dict[str, float] = {}
        target = rng.randint(1, 19)
        while len(scores) < target:
            scores[helpers.random_word(rng, alphabet, 4)] = helpers.dyadic_score(rng)
        spec = TokenizerSpec(
            ModelKind.UNIGRAM,
            [PieceEntry("<unk>", 0.0)] + [PieceEntry(t, s) for t, s in scores.items()],
            special_tokens=[("<unk>", 0)], unk_id=0,
        )
        word = helpers.random_word(rng, alphabet, 12)
        expected = oracles.unigram_best(word, scores) or ["<unk>"]
        if [spec.tokens[i] for i in encode_unigram(word, spec)] != expected:
            uni_bad += 1
    for seed in range(cases):
        rng = random.Random(f"bpe-{seed}")
        spec = helpers.random_bpe(rng, rng.randint(5, 20), alphabet="abcd")
        word = helpers.random_word(rng, "abcde", 12)
        expected = [s if s in spec.piece_to_id else "<unk>"
                    for s in oracles.bpe_simulate(word, list(spec.merges))]
        if [spec.tokens[i] for i in encode_bpe(word, spec)] != expected:
            bpe_bad += 1
    ok = uni_bad == 0 and bpe_bad == 0
    return ok, f"Unigram {cases - uni_bad}/{cases}, BPE {cases - bpe_bad}/{cases} agree with oracles"


# -- 7: surgery fidelity --------------------------------------------------------------


def _slab_bytes(data: bytes, shape: tuple[int, ...], itemsize: int, axis: int, k: int) -> bytes:
    # plain offset arithmetic, independent of the numpy slicing under test
    if axis == 0:
        slab = len(data) // shape[0]
        return data[k * slab : (k + 1) * slab]
    rows, cols = shape
    return b"".join(data[(r * cols + k) * itemsize : (r * cols + k + 1) * itemsize] for r in range(rows))


def check_7(cases: int = 500):
    failures = []
    for seed in range(cases):
        rng = random.Random(f"surgery-{seed}")
        V, d = rng.randint(1, 64), rng.randint(1, 16)
        dtype = rng.choice(["F32", "F16", "BF16", "I64"])
        store, profile = helpers.toy_checkpoint(np.random.default_rng(seed), V=V, d=d, dtype=dtype)
        spec = TokenizerSpec(ModelKind.UNIGRAM, [PieceEntry(f"t{i}", -1.0) for i in range(V)])
        kept = sorted(rng.sample(range(V), rng.randint(1, V)))
        plan = build_plan(kept, FrequencyTable.zeros(spec), spec)
        out = trim_checkpoint(store, profile, plan)
        axes = resolve_vocab_tensors(store, profile)
        assert len(store) >= 6 and "lm_head.bias" in axes and profile.tied_groups
        for name, rec in store.tensors.items():
            got = out[name]
            if name not in axes:
                if got.data != rec.data or got.shape != rec.shape or got.dtype != rec.dtype:
                    failures.append(f"seed {seed}: {name} changed")
                continue
            slab = rec.nbytes // V
            if len(got.data) != rec.nbytes - (V - len(kept)) * slab:
                failures.append(f"seed {seed}: {name} size law")
            for new, old in enumerate(kept):
                a = _slab_bytes(rec.data, rec.shape, rec.itemsize, axes[name], old)
                b = _slab_bytes(got.data, got.shape, got.itemsize, axes[name], new)
                if a != b:
                    failures.append(f"seed {seed}: {name} row {new}")
                    break
        once = write_container(out)
        if write_container(read_container(once)) != once:
            failures.append(f"seed {seed}: container round trip")
    ok = not failures
    return ok, f"{cases} plans, {len(failures)} violations" + (f"; first: {failures[0]}" if failures else "")


# -- 8: determinism, shard invariance, memory ---------------------------------------


def _write_corpus(path: Path, target_bytes: int, seed: int = 0) -> None:
    rng = random.Random(seed)
    words = [helpers.random_word(rng, "abcdefghijklmnopqrstuvwxyz", 9) for _ in range(50_000)]
    # a little non-ASCII text so byte fallback is exercised
    words += ["café", "naïve", "über", "日本語", "corazón"]
    weights = 1 / np.arange(1, len(words) + 1)
    weights /= weights.sum()
    g = np.random.default_rng(seed)
    size = 0
    with open(path, "w", encoding="utf-8") as f:
        while size < target_bytes:
            rows = g.choice(len(words), size=(5000, 12), p=weights).tolist()
            chunk = "\n".join(" ".join([words[i] for i in r]) for r in rows) + "\n"
            f.write(chunk)
            size += len(chunk.encode("utf-8"))


# The child reports its own high-water mark: rusage of the direct child would
# include the pytest process, since the RSS peak survives vfork + exec.
_DRIVER = """
import resource, sys
from vocabtrim.cli import main
code = main(sys.argv[2:])
hwm = next(int(l.split()[1]) for l in open("/proc/self/status") if l.startswith("VmHWM:"))
workers = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
open(sys.argv[1], "w").write(f"{hwm} {workers}")
sys.exit(code)
"""


def _vt(*args: str | Path) -> tuple[float, int]:
    """Run the CLI in a child process; return (peak MB of any process involved, exit code)."""
    with tempfile.NamedTemporaryFile("r", suffix=".rss") as f:
        proc = subprocess.run([sys.executable, "-c", _DRIVER, f.name, *map(str, args)],
                              stdout=subprocess.DEVNULL)
        main_kb, worker_kb = map(int, f.read().split())
    return max(main_kb, worker_kb) / 1024, proc.returncode


def _pipeline(tmp: Path, tag: str, workers: int) -> dict[str, bytes]:
    outs = {k: tmp / f"{tag}.{k}" for k in ("freq", "plan", "tok", "ckpt", "report")}
    assert _vt("count", "--tokenizer", tmp / "tok.json", "--out", outs["freq"],
               "--shard-workers", str(workers), tmp / "corpus.txt")[1] == 0
    assert _vt("plan", "--tokenizer", tmp / "tok.json", "--freq", outs["freq"], "--top-n", "600",
               "--out-plan", outs["plan"], "--out-tokenizer", outs["tok"])[1] == 0
    assert _vt("trim", "--plan", outs["plan"], "--profile", tmp / "toy.json",
               "--in", tmp / "model.safetensors", "--out", outs["ckpt"])[1] == 0
    proc = subprocess.run([sys.executable, "-m", "vocabtrim.cli", "report", "--plan", outs["plan"],
                           "--profile", tmp / "toy.json", "--format", "json"],
                          capture_output=True, check=True)
    outs["report"].write_bytes(proc.stdout)
    return {k: p.read_bytes() for k, p in outs.items()}


def check_8(corpus_mb: int = 100):
    with tempfile.TemporaryDirectory() as d:
        tmp = Path(d)
        rng = random.Random(8)
        spec = helpers.random_unigram(rng, 2000, alphabet="abcdefghijklmnopqrstuvwxyz", byte_fallback=True)
        (tmp / "tok.json").write_bytes(serialize_tokenizer(spec))
        store, profile = helpers.toy_checkpoint(np.random.default_rng(8), V=spec.vocab_size, d=8)
        (tmp / "model.safetensors").write_bytes(write_container(store))
        (tmp / "toy.json").write_text(json.dumps(profile.to_dict()))
        _write_corpus(tmp / "small.txt", 1 << 20, seed=1)
        _write_corpus(tmp / "corpus.txt", corpus_mb << 20)

        t0 = time.perf_counter()
        small_peak, code = _vt("count", "--tokenizer", tmp / "tok.json", "--out", tmp / "s.tsv", tmp / "small.txt")
        assert code == 0
        tables, peaks = {}, {}
        for w in (1, 2, 8):
            peaks[w], code = _vt("count", "--tokenizer", tmp / "tok.json", "--out", tmp / f"w{w}.tsv",
                                 "--shard-workers", str(w), tmp / "corpus.txt")
            assert code == 0
            tables[w] = (tmp / f"w{w}.tsv").read_bytes()
        shards_equal = tables[1] == tables[2] == tables[8]
        run_a = _pipeline(tmp, "a", 2)
        run_b = _pipeline(tmp, "b", 2)
        differing = [k for k in run_a if run_a[k] != run_b[k]]
        secs = time.perf_counter() - t0

    # memory must not scale with corpus size: the 100x larger corpus may add
    # only noise over the small one, and the total stays in the tens of MB
    growth = max(peaks.values()) - small_peak
    memory_ok = growth < 16 and max(peaks.values()) < 200
    ok = shards_equal and not differing and memory_ok
    detail = (f"tables 1/2/8 workers identical={shards_equal}; pipeline artifacts differing={differing}; "
              f"peak MB small={small_peak:.0f} 1w={peaks[1]:.0f} 2w={peaks[2]:.0f} 8w={peaks[8]:.0f}; "
              f"{secs:.0f}s")
    return ok, detail


# -- 9: budget semantics ----------------------------------------------------------------


def check_9(cases: int = 1000):
    exact_bad = mono_bad = 0
    kinds = sorted(helpers.RANDOM_SPECS)
    for seed in range(cases):
        rng = random.Random(f"budget-{seed}")
        kind = kinds[seed % 3]
        spec = helpers.RANDOM_SPECS[kind](rng, rng.randint(20, 150))
        V = spec.vocab_size
        counts = np.array([rng.choice([0, 0, 1, 2, 5, rng.randint(0, 1000)]) for _ in range(V)], np.uint64)
        table = FrequencyTable(counts, spec.fingerprint)
        floor = len(structural_closure(mandatory_ids(spec), spec))
        n1 = rng.randint(floor, V)
        n2 = rng.randint(n1, V)
        k1 = select_kept(table, TopN(n1), spec)
        k2 = select_kept(table, TopN(n2), spec)
        if len(make_plan(table, TopN(n1), spec).kept) != n1 or len(k2) != n2:
            exact_bad += 1
        if not k1 <= k2:
            mono_bad += 1
    ok = exact_bad == 0 and mono_bad == 0
    return ok, f"{cases} cases: exact-size violations {exact_bad}, monotonicity violations {mono_bad}"


CHECKS = {1: check_1, 2: check_2, 3: check_3, 4: check_4, 5: check_5,
          6: check_6, 7: check_7, 8: check_8, 9: check_9}


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6, 7, 9])
def test_criterion(n):
    _record(n, *CHECKS[n]())


@pytest.mark.slow
def test_criterion_8():
    _record(8, *check_8())


def summary_lines() -> list[str]:
    return [f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}" for n, (ok, detail) in sorted(RESULTS.items())]


if __name__ == "__main__":
    for n, fn in CHECKS.items():
        ok, detail = fn()
        RESULTS[n] = (ok, detail)
        print(f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
