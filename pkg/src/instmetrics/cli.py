"""Command-line interface: ``evaluate``, ``sweep`` and ``benchmark``.

Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import cca
from .cca import CcaStrategy
from .evaluator import (
    RESULT_KEYS,
    EdgeCasePolicy,
    EvalConfig,
    InputMode,
    aggregate,
    encode_value,
    evaluate,
    evaluate_matched,
    sweep_thresholds,
)
from .matching import MatchConfig, Matcher, apply_match, match
from .metrics import build_overlap_table
from .volume import LabelMap, load_label_map

MODES = {"semantic": InputMode.SEMANTIC, "unmatched": InputMode.UNMATCHED_INSTANCE,
         "matched": InputMode.MATCHED_INSTANCE}
MATCHERS = {"naive": Matcher.NAIVE_THRESHOLD, "max-merge": Matcher.MAXIMIZE_MANY_TO_ONE}
CCA_FLAGS = {"auto": CcaStrategy.AUTO, "union-find": CcaStrategy.TWO_PASS_UNION_FIND,
             "flood": CcaStrategy.FLOOD_FILL}
BOTH_EMPTY = {"nan": math.nan, "zero": 0.0, "one": 1.0}
SWEEP_KEYS = ("threshold", "tp", "fp", "fn", "rq", "sq_iou", "pq_iou", "sq_dsc", "pq_dsc", "sq_assd")


class CaseError(Exception):
    def __init__(self, case_id, exc):
        super().__init__(f"case {case_id!r}: {exc}")


# -------------------------------------------------------------- flag parsing


def _unit_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is outside [0, 1]")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return value


def _spacing(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad spacing {text!r}") from None
    if len(values) not in (2, 3) or not all(v > 0 and math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError("spacing needs 2 or 3 positive values")
    return values


def _one_empty_assd(text: str) -> float:
    if text == "inf":
        return math.inf
    if text.startswith("cap:"):
        try:
            value = float(text[4:])
        except ValueError:
            value = math.nan
        if math.isfinite(value) and value >= 0:
            return value
    raise argparse.ArgumentTypeError(f"expected 'inf' or 'cap:<non-negative number>', got {text!r}")


def _thresholds(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("thresholds must look like start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold range {text!r}") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("threshold range must be ascending with a positive step")
    if start < 0 or stop > 1:
        raise argparse.ArgumentTypeError("thresholds must lie in [0, 1]")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not sizes or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return sizes


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pred", type=Path)
    p.add_argument("--ref", type=Path)
    p.add_argument("--manifest", type=Path, help="CSV with columns case_id,pred_path,ref_path")
    p.add_argument("--mode", choices=sorted(MODES), default="semantic")
    p.add_argument("--match-metric", choices=("iou", "dsc"), default="iou")
    p.add_argument("--match-threshold", type=_unit_float, default=0.5)
    p.add_argument("--eval-metric", choices=("iou", "dsc"), default="iou")
    p.add_argument("--eval-threshold", type=_unit_float, default=0.5)
    p.add_argument("--matcher", choices=sorted(MATCHERS), default="naive")
    p.add_argument("--allow-many-to-one", action="store_true")
    p.add_argument("--connectivity", type=int, choices=(4, 8, 6, 18, 26))
    p.add_argument("--cca", choices=sorted(CCA_FLAGS), default="auto")
    p.add_argument("--spacing", type=_spacing)
    p.add_argument("--both-empty-dsc", choices=sorted(BOTH_EMPTY), default="nan")
    p.add_argument("--one-empty-assd", type=_one_empty_assd, default=math.inf)
    p.add_argument("--no-crop", action="store_true")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="instmetrics", description="Instance-wise segmentation metrics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="evaluate one pair or a manifest")
    _add_eval_flags(p_eval)
    p_eval.set_defaults(handler=cmd_evaluate, subparser=p_eval)

    p_sweep = sub.add_parser("sweep", help="evaluate over a range of thresholds")
    _add_eval_flags(p_sweep)
    p_sweep.add_argument("--thresholds", type=_thresholds, default=_thresholds("0.1:0.9:0.1"))
    p_sweep.add_argument("--co-vary-match", action="store_true")
    p_sweep.set_defaults(handler=cmd_sweep, subparser=p_sweep)

    p_bench = sub.add_parser("benchmark", help="time connected-component strategies")
    p_bench.add_argument("--dims", type=int, choices=(2, 3), default=3)
    p_bench.add_argument("--sizes", type=_sizes, default=[50, 100])
    p_bench.add_argument("--strategy", choices=("union-find", "flood", "both"), default="both")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--density", type=_unit_float, default=0.5)
    p_bench.add_argument("--trials", type=int, default=3)
    p_bench.add_argument("--modules", action="store_true",
                         help="also time each pipeline stage")
    p_bench.set_defaults(handler=cmd_benchmark, subparser=p_bench)
    return parser


def _config(args, n_cases: int = 1) -> EvalConfig:
    # threads go to per-pair work when there is a single case, to cases otherwise
    return EvalConfig(
        mode=MODES[args.mode],
        match=MatchConfig(metric=args.match_metric, threshold=args.match_threshold,
                          allow_many_to_one=args.allow_many_to_one, matcher=MATCHERS[args.matcher]),
        eval_metric=args.eval_metric,
        eval_threshold=args.eval_threshold,
        connectivity=args.connectivity,
        cca_strategy=CCA_FLAGS[args.cca],
        edge_policy=EdgeCasePolicy(both_empty_similarity=BOTH_EMPTY[args.both_empty_dsc],
                                   one_empty_distance=args.one_empty_assd),
        worker_count=args.threads if n_cases == 1 else 1,
        crop_enabled=not args.no_crop,
    )


def _cases(args, parser) -> list[tuple[str, Path, Path]]:
    if args.manifest is not None:
        if args.pred is not None or args.ref is not None:
            parser.error("use either --manifest or --pred/--ref, not both")
        try:
            with open(args.manifest, newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise CaseError("<manifest>", exc) from None
        if not rows or set(rows[0]) != {"case_id", "pred_path", "ref_path"}:
            raise CaseError("<manifest>", "header must be case_id,pred_path,ref_path")
        ids = [r["case_id"] for r in rows]
        if len(set(ids)) != len(ids):
            raise CaseError("<manifest>", "case_id values must be unique")
        base = args.manifest.parent
        return [(r["case_id"], base / r["pred_path"], base / r["ref_path"]) for r in rows]
    if args.pred is None or args.ref is None:
        parser.error("either --manifest or both --pred and --ref are required")
    return [(args.pred.stem, args.pred, args.ref)]


def _load_pair(case_id, pred_path, ref_path, spacing) -> tuple[LabelMap, LabelMap]:
    try:
        pred, ref = load_label_map(pred_path), load_label_map(ref_path)
        if spacing is not None:
            pred, ref = pred.with_spacing(spacing), ref.with_spacing(spacing)
        if pred.shape != ref.shape:
            raise ValueError(f"shape mismatch: pred {pred.shape} vs ref {ref.shape}")
        return pred, ref
    except (OSError, ValueError) as exc:
        raise CaseError(case_id, exc) from None


def _run_cases(cases, threads, fn) -> list:
    def one(case):
        case_id = case[0]
        try:
            return fn(*case)
        except CaseError:
            raise
        except (OSError, ValueError) as exc:
            raise CaseError(case_id, exc) from None

    if threads > 1 and len(cases) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, cases))
    return [one(c) for c in cases]


# --------------------------------------------------------------- rendering


def _row(case_id, result) -> dict:
    row = {"case_id": case_id}
    row.update({k: encode_value(v) for k, v in result.as_dict().items()})
    return row


def _aggregate_block(results) -> dict:
    return {key: {"mean": encode_value(s.mean), "std": encode_value(s.std),
                  "n_finite": s.n_finite, "n_total": s.n_total}
            for key, s in aggregate(results).items()}


def _csv_text(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_evaluate(args, parser) -> int:
    cases = _cases(args, parser)
    cfg = _config(args, len(cases))

    def run(case_id, pred_path, ref_path):
        pred, ref = _load_pair(case_id, pred_path, ref_path, args.spacing)
        return evaluate(pred, ref, cfg)

    results = _run_cases(cases, args.threads, run)
    rows = [_row(c[0], r) for c, r in zip(cases, results)]
    if args.format == "json":
        text = json.dumps({"cases": rows, "aggregate": _aggregate_block(results)}, indent=2) + "\n"
    else:
        text = _csv_text(rows, ("case_id",) + RESULT_KEYS)
    _emit(text, args.out)
    return 0


def cmd_sweep(args, parser) -> int:
    cases = _cases(args, parser)
    cfg = _config(args, len(cases))

    def run(case_id, pred_path, ref_path):
        pred, ref = _load_pair(case_id, pred_path, ref_path, args.spacing)
        return sweep_thresholds(pred, ref, cfg, args.thresholds, co_vary_match=args.co_vary_match)

    curves = _run_cases(cases, args.threads, run)
    rows = []
    for (case_id, _, _), curve in zip(cases, curves):
        for t, res in curve:
            row = {"case_id": case_id, "threshold": t}
            row.update({k: encode_value(getattr(res, k)) for k in SWEEP_KEYS[1:]})
            rows.append(row)
    if args.format == "json":
        text = json.dumps({"rows": rows}, indent=2) + "\n"
    else:
        text = _csv_text(rows, ("case_id",) + SWEEP_KEYS)
    _emit(text, args.out)
    return 0


# --------------------------------------------------------------- benchmark


def _median_time(fn, trials: int):
    times, value = [], None
    for _ in range(trials):
        start = time.perf_counter()
        value = fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times), value


def cmd_benchmark(args, parser) -> int:
    if args.trials < 3:
        parser.error("--trials must be at least 3")
    strategies = {"union-find": [CcaStrategy.TWO_PASS_UNION_FIND], "flood": [CcaStrategy.FLOOD_FILL],
                  "both": [CcaStrategy.TWO_PASS_UNION_FIND, CcaStrategy.FLOOD_FILL]}[args.strategy]
    names = {CcaStrategy.TWO_PASS_UNION_FIND: "union-find", CcaStrategy.FLOOD_FILL: "flood"}
    out = sys.stdout
    out.write(f"# backend={cca.BACKEND} dims={args.dims} seed={args.seed} density={args.density}\n")
    out.write("dims,size,strategy,wall_time_seconds,trials,components\n")
    totals = {s: 0.0 for s in strategies}
    for size in args.sizes:
        rng = np.random.default_rng(args.seed)
        fg = rng.random((size,) * args.dims) < args.density
        counts = set()
        for strategy in strategies:
            seconds, (_, count) = _median_time(lambda: cca.label_array(fg, None, strategy), args.trials)
            totals[strategy] += seconds
            counts.add(count)
            out.write(f"{args.dims},{size},{names[strategy]},{seconds:.6f},{args.trials},{count}\n")
        if len(counts) > 1:
            sys.stderr.write(f"error: strategies disagree on component count at size {size}: {sorted(counts)}\n")
            return 1
    if len(strategies) > 1:
        best = min(strategies, key=lambda s: totals[s])
        out.write(f"recommendation: dims={args.dims} strategy={names[best]}\n")

    if args.modules:
        out.write("stage,size,wall_time_seconds,trials\n")
        for size in args.sizes:
            rng = np.random.default_rng(args.seed)
            shape = (size,) * args.dims
            ref = LabelMap((rng.random(shape) < args.density).astype(np.uint8))
            pred = LabelMap((rng.random(shape) < args.density).astype(np.uint8))
            cfg = EvalConfig()
            t_approx, (pred_i, ref_i) = _median_time(lambda: cca.approximate_instances(pred, ref), args.trials)

            def matching():
                result = match(build_overlap_table(pred_i, ref_i), cfg.match, pred_i, ref_i)
                return apply_match(pred_i, ref_i, result)

            t_match, matched = _median_time(matching, args.trials)
            t_eval, _ = _median_time(lambda: evaluate_matched(matched, ref_i, cfg), args.trials)
            for stage, seconds in (("approximation", t_approx), ("matching", t_match), ("evaluation", t_eval)):
                out.write(f"{stage},{size},{seconds:.6f},{args.trials}\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args, args.subparser)
    except CaseError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
