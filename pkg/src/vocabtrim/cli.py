"""``vt`` command line: count -> plan -> trim -> report -> verify.

Exit codes: 0 ok, 1 verification failure, 2 schema/format error, 3 I/O
error, 4 fingerprint mismatch, 5 budget too small, 6 profile/axis mismatch.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

import numpy as np

from . import errors
from .container import TensorStore, read_container, write_container
from .freq import count_files, iter_file_lines, load_table, save_table, decode_line
from .plan import AllObserved, TopN, apply_plan_to_ids, load_plan, make_plan, save_plan
from .report import build_report
from .surgery import load_profile, resolve_vocab_tensors, rewrite_config, trim_checkpoint
from .tokenizer import encode_text, parse_tokenizer, serialize_tokenizer, support_ids

log = logging.getLogger("vocabtrim")

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_SCHEMA = 2
EXIT_IO = 3
EXIT_FINGERPRINT = 4
EXIT_BUDGET = 5
EXIT_PROFILE = 6

_EXIT_CODES = [
    (errors.FingerprintMismatch, EXIT_FINGERPRINT),
    (errors.BudgetTooSmall, EXIT_BUDGET),
    ((errors.ProfileMismatch, errors.AxisMismatch, errors.TiedGroupInconsistent,
      errors.IdOutOfRange), EXIT_PROFILE),
    (errors.VTError, EXIT_SCHEMA),
    (OSError, EXIT_IO),
]


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


def _write(path: str, data: bytes) -> None:
    Path(path).write_bytes(data)


def _tokenizer(path: str):
    return parse_tokenizer(_read(path))


def cmd_count(args: argparse.Namespace) -> int:
    spec = _tokenizer(args.tokenizer)
    table = count_files(args.corpus, spec, workers=args.shard_workers, unit=args.count_unit)
    _write(args.out, save_table(table, spec.tokens))
    if table.skipped:
        log.warning("skipped %d lines that were not valid UTF-8", table.skipped)
    print(f"docs\t{table.docs_seen}\ntokens\t{table.tokens_seen}\ndistinct\t{table.distinct}")
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    spec = _tokenizer(args.tokenizer)
    table = load_table(_read(args.freq))
    policy = TopN(args.top_n) if args.top_n is not None else AllObserved()
    plan = make_plan(table, policy, spec, keep_alphabet=args.wordpiece_alphabet_keep)
    _write(args.out_plan, save_plan(plan))
    _write(args.out_tokenizer, serialize_tokenizer(plan.trimmed_spec))
    print(f"kept\t{len(plan.kept)}\t{spec.vocab_size}")
    for reason, n in plan.reason_counts().items():
        print(f"{reason}\t{n}")
    return EXIT_OK


def cmd_trim(args: argparse.Namespace) -> int:
    plan = load_plan(_read(args.plan))
    profile = load_profile(args.profile)
    store = read_container(_read(args.input))
    trimmed = trim_checkpoint(store, profile, plan)
    _write(args.output, write_container(trimmed))
    if args.config:
        if not args.out_config:
            raise errors.SchemaError("--config requires --out-config")
        _write(args.out_config, rewrite_config(_read(args.config), profile, len(plan.kept)))
    log.info("trimmed %d -> %d parameters", store.num_params(), trimmed.num_params())
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    plan = load_plan(_read(args.plan))
    report = build_report(plan, load_profile(args.profile))
    sys.stdout.write(report.to_json() if args.format == "json" else report.to_table())
    return EXIT_OK


def _verify_rows(orig: TensorStore, trim: TensorStore, kept: tuple[int, ...], axes: dict[str, int] | None):
    """Yield a description of every fidelity violation between two checkpoints."""
    for name in sorted(orig.tensors):
        a = orig[name]
        if name not in trim:
            yield f"tensor {name}: missing from trimmed checkpoint"
            continue
        b = trim[name]
        if a.dtype != b.dtype or len(a.shape) != len(b.shape):
            yield f"tensor {name}: dtype or rank changed"
            continue
        axis = None if axes is None else axes.get(name)
        if axes is None:
            diff = [k for k, (x, y) in enumerate(zip(a.shape, b.shape)) if x != y]
            if len(diff) == 1 and b.shape[diff[0]] == len(kept):
                axis = diff[0]
            elif diff:
                yield f"tensor {name}: shape {list(a.shape)} -> {list(b.shape)} is not a vocabulary slice"
                continue
        if axis is None:
            if a.data != b.data:
                yield f"tensor {name}: non-vocabulary tensor changed"
            continue
        if b.shape[axis] != len(kept):
            yield f"tensor {name}: axis {axis} has {b.shape[axis]} rows, expected {len(kept)}"
            continue
        ra = np.moveaxis(np.frombuffer(a.data, np.uint8).reshape(*a.shape, a.itemsize), axis, 0)
        rb = np.moveaxis(np.frombuffer(b.data, np.uint8).reshape(*b.shape, b.itemsize), axis, 0)
        for new, old in enumerate(kept):
            if not np.array_equal(ra[old], rb[new]):
                yield f"tensor {name}: row {new} (source row {old}) differs"
                break


def cmd_verify(args: argparse.Namespace) -> int:
    spec = _tokenizer(args.tokenizer)
    plan = load_plan(_read(args.plan), spec)
    trimmed = _tokenizer(args.trimmed_tokenizer)
    if trimmed != plan.trimmed_spec:
        raise errors.FingerprintMismatch("trimmed tokenizer does not match the plan")
    failures: list[str] = []
    if args.sample:
        checked = skipped = 0
        kept = set(plan.kept)
        lines = itertools.chain.from_iterable(iter_file_lines(p) for p in args.sample)
        for raw in itertools.islice(lines, args.sample_lines):
            text = decode_line(raw)
            if text is None:
                continue
            ids = encode_text(text, spec)
            if not kept.issuperset(support_ids(text, spec)):
                skipped += 1
                continue
            checked += 1
            if apply_plan_to_ids(ids, plan) != encode_text(text, trimmed):
                failures.append(f"line {checked + skipped}: trimmed encoding differs")
                break
        log.info("trim-equivalence: %d lines checked, %d use dropped tokens", checked, skipped)
    if args.input or args.output:
        if not (args.input and args.output):
            raise errors.SchemaError("--in and --out must be given together")
        orig = read_container(_read(args.input))
        trim = read_container(_read(args.output))
        axes = resolve_vocab_tensors(orig, load_profile(args.profile)) if args.profile else None
        failures.extend(_verify_rows(orig, trim, plan.kept, axes))
    for f in failures:
        print(f"FAIL {f}")
    if failures:
        return EXIT_VERIFY
    print("OK")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="count token frequencies over corpora")
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count-unit", choices=["token", "doc"], default="token")
    p.add_argument("--shard-workers", type=int, default=1)
    p.add_argument("corpus", nargs="+")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("plan", help="select kept tokens and write the trimmed tokenizer")
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--freq", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--all-observed", action="store_true")
    g.add_argument("--top-n", type=int)
    p.add_argument("--out-plan", required=True)
    p.add_argument("--out-tokenizer", required=True)
    p.add_argument("--wordpiece-alphabet-keep", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("trim", help="slice a checkpoint with a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--config")
    p.add_argument("--out-config")
    p.set_defaults(func=cmd_trim)

    p = sub.add_parser("report", help="parameter accounting for a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="audit plan, tokenizers and checkpoints")
    p.add_argument("--plan", required=True)
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--trimmed-tokenizer", required=True)
    p.add_argument("--in", dest="input")
    p.add_argument("--out", dest="output")
    p.add_argument("--profile")
    p.add_argument("--sample", nargs="+")
    p.add_argument("--sample-lines", type=int, default=10000)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s", stream=sys.stderr,
    )
    if getattr(args, "top_n", None) is not None and args.top_n < 1:
        parser.error("--top-n must be >= 1")
    try:
        return args.func(args)
    except Exception as exc:
        for kinds, code in _EXIT_CODES:
            if isinstance(exc, kinds):
                print(f"vt {args.command}: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
