"""Command-line front end: ``simulate``, ``assess``, ``compare``, ``split`` and ``report``.

Exit codes
----------
0  success
2  configuration error (bad flag values, unreadable --config)
3  I/O error (missing input directory, unwritable output)
4  missing pair or dimension mismatch during ``assess``
5  cohort mismatch during ``compare``
6  metric rows without severity labels during ``report``

Diagnostics go to stderr as single lines; data only ever goes to files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .cohort import (
    Roster,
    balanced_undersample,
    build_simulated_corpus,
    patient_level_split,
    store_ids,
    store_load,
    stratified_split,
)
from .errors import (
    DegenerateBackground,
    DegenerateTable,
    EmptyRegion,
    MismatchedCohorts,
    MissingVolume,
    MriMotionError,
    StoreWriteError,
    TooFewSamples,
)
from .metrics import METRIC_NAMES, MetricRow, cnr, psnr, rows_from_csv, rows_to_csv, snr, ssim
from .perceptual import FeatureExtractor, deep_tap_extractor, feature_distance, volume_fid
from .report import cell, fmt4, methods_table_markdown, stat_report_csv, svg_line_plot
from .stats import compare_family, icc_absolute_agreement, rescan_rate
from .volume import SEVERITIES

log = logging.getLogger("mrimotion")

# keys that never reach the echoed config because they cannot change results
_NOT_ECHOED = {"threads", "config", "func"}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _parse_pairs(text: str, cast=float) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise CliError(2, f"expected key=value, got {item!r}")
        try:
            out[key.strip()] = cast(value)
        except ValueError:
            raise CliError(2, f"bad value in {item!r}") from None
    return out


def _echo_config(args, out: Path) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}
    cfg["toolkit_version"] = __version__
    _write(out / "config.json", json.dumps(cfg, indent=1, sort_keys=True, default=str) + "\n")


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise CliError(3, f"cannot write {path}: {exc}") from exc


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(3, f"cannot read {path}: {exc}") from exc


# -- simulate ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    counts = _parse_pairs(args.counts, int)
    unknown = set(counts) - set(SEVERITIES)
    if unknown:
        raise CliError(2, f"unknown severity levels {sorted(unknown)}")
    if any(n < 0 for n in counts.values()):
        raise CliError(2, "severity counts must be non-negative")
    src = Path(args.input)
    if not src.is_dir():
        raise CliError(3, f"input directory {src} does not exist")
    out = Path(args.out)
    clean_ids = store_ids(src)
    try:
        roster, _ = build_simulated_corpus(clean_ids, counts, args.seed, src, out, args.threads)
    except MissingVolume as exc:
        raise CliError(3, str(exc)) from exc
    except StoreWriteError as exc:
        raise CliError(3, str(exc)) from exc
    if len(roster) == 0:
        _write(out / "roster.json", roster.to_json())
    _echo_config(args, out)
    n_corrupted = sum(e.is_corrupted for e in roster)
    log.info("simulated %d corrupted volumes into %s", n_corrupted, out)
    return 0


# -- assess --------------------------------------------------------------------


def _pairing(args) -> list[tuple[str, str]]:
    pred_dir = Path(args.pred)
    if not pred_dir.is_dir():
        raise CliError(3, f"prediction directory {pred_dir} does not exist")
    roster_path = Path(args.roster) if args.roster else pred_dir / "roster.json"
    if roster_path.exists():
        roster = Roster.from_json(_read(roster_path))
        corrupted = [e for e in roster if e.is_corrupted]
        chosen = corrupted if corrupted else list(roster)
        return [(e.volume_id, e.source_id or e.volume_id) for e in chosen]
    return [(vid, vid) for vid in store_ids(pred_dir)]


def _safe(fn, *a):
    try:
        return fn(*a)
    except (DegenerateBackground, EmptyRegion, TooFewSamples) as exc:
        log.warning("%s: %s", fn.__name__, exc)
        return None


def assess_one(pred_id, gt_id, args, extractor) -> MetricRow:
    try:
        pred = store_load(args.pred, pred_id)
    except MissingVolume as exc:
        raise CliError(4, f"missing volume {pred_id}: {exc}") from exc
    row = {"snr": _safe(snr, pred), "cnr": _safe(cnr, pred)}
    if not args.unpaired:
        try:
            gt = store_load(args.gt, gt_id)
        except MissingVolume as exc:
            raise CliError(4, f"missing pair for {pred_id}: {gt_id} not in {args.gt}") from exc
        if gt.dims != pred.dims:
            raise CliError(4, f"dims mismatch for {pred_id}: {pred.dims} vs {gt.dims}")
        row["psnr"] = psnr(pred, gt)
        row["ssim"] = ssim(pred, gt)
        row["fid"] = _safe(volume_fid, extractor, pred, gt) if pred.dims[0] >= 2 else None
        row["feature_dist"] = feature_distance(extractor, pred, gt)
    return MetricRow(pred_id, args.method, **row)


def cmd_assess(args) -> int:
    if not args.unpaired and not args.gt:
        raise CliError(2, "paired mode needs --gt (or pass --unpaired)")
    if args.extractor:
        try:
            extractor = FeatureExtractor.load(args.extractor)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(2, f"cannot load extractor {args.extractor}: {exc}") from exc
    else:
        extractor = deep_tap_extractor(args.extractor_seed)
    pairs = _pairing(args)
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        rows = list(pool.map(lambda p: assess_one(p[0], p[1], args, extractor), pairs))
    rows.sort(key=lambda r: r.volume_id)
    out = Path(args.out)
    _write(out / "metrics.csv", rows_to_csv(rows))
    _echo_config(args, out)
    return 0


# -- compare -------------------------------------------------------------------


def _load_rows(paths) -> dict:
    by_method: dict = {}
    for path in paths:
        try:
            rows = rows_from_csv(_read(path))
        except ValueError as exc:
            raise CliError(2, f"{path}: {exc}") from exc
        for r in rows:
            by_method.setdefault(r.method_label, []).append(r)
    return by_method


def run_compare(by_method: dict, baseline: str, dataset: str):
    if baseline not in by_method:
        raise CliError(2, f"baseline method {baseline!r} not found among {sorted(by_method)}")
    candidates = {k: v for k, v in by_method.items() if k != baseline}
    if not candidates:
        raise CliError(2, "need at least two methods to compare")
    comparisons = []
    for metric in METRIC_NAMES:
        present = any(getattr(r, metric) is not None for rows in by_method.values() for r in rows)
        if not present:
            continue
        try:
            comparisons += compare_family(by_method[baseline], candidates, metric, dataset, baseline)
        except MismatchedCohorts as exc:
            raise CliError(5, f"cohort mismatch: {exc}") from exc
    return comparisons


def cmd_compare(args) -> int:
    by_method = _load_rows(args.metrics)
    comparisons = run_compare(by_method, args.baseline, args.dataset)
    metrics = [m for m in METRIC_NAMES
               if any(getattr(r, m) is not None for rows in by_method.values() for r in rows)]
    out = Path(args.out)
    _write(out / "stats.csv", stat_report_csv(comparisons))
    _write(out / "table.md", methods_table_markdown(by_method, comparisons, metrics,
                                                    title=args.dataset or "comparison"))
    _echo_config(args, out)
    return 0


# -- split ---------------------------------------------------------------------


def cmd_split(args) -> int:
    roster = Roster.from_json(_read(args.roster))
    if args.balance:
        roster = balanced_undersample(roster, args.balance, args.seed)
    if args.policy == "patient":
        fractions = _parse_pairs(args.fractions)
        try:
            plan = patient_level_split(roster, fractions, args.seed)
        except ValueError as exc:
            raise CliError(2, str(exc)) from exc
    else:
        plan = stratified_split(roster, args.key, args.fraction, args.seed)
    out = Path(args.out)
    _write(out / "split.json", plan.to_json())
    if args.balance:
        _write(out / "balanced_roster.json", roster.to_json())
    _echo_config(args, out)
    return 0


# -- report --------------------------------------------------------------------


def _read_ratings(path) -> np.ndarray:
    reader = csv.reader(io.StringIO(_read(path)))
    header = next(reader, None)
    if header is None:
        raise CliError(2, f"{path}: empty ratings file")
    try:
        table = [[int(x) for x in rec[1:]] for rec in reader if rec]
    except ValueError as exc:
        raise CliError(2, f"{path}: ratings must be integers") from exc
    return np.asarray(table)


def severity_table(by_method: dict, roster: Roster, baseline: str, metrics) -> tuple[str, str, dict]:
    lookup = roster.by_id()
    strata: dict = {}
    for label, rows in by_method.items():
        for r in rows:
            e = lookup.get(r.volume_id)
            if e is None or e.severity_label is None:
                raise CliError(6, f"volume {r.volume_id} has no severity label")
            strata.setdefault((e.modality, e.severity_label), {}).setdefault(label, []).append(r)

    md = ["| modality | severity | method | " + " | ".join(metrics) + " |",
          "|---" * (len(metrics) + 3) + "|"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["modality", "severity", "method", "metric", "mean", "sd", "stars"])
    means: dict = {}
    order = {s: i for i, s in enumerate(SEVERITIES)}
    for (modality, severity) in sorted(strata, key=lambda k: (k[0], order[k[1]])):
        methods = strata[(modality, severity)]
        marks = {}
        if baseline in methods and len(methods) > 1:
            others = {k: v for k, v in methods.items() if k != baseline}
            for m in metrics:
                try:
                    for c in compare_family(methods[baseline], others, m, f"{modality}/{severity}", baseline):
                        marks[(c.comparison.split(" vs ")[0], m)] = c.stars
                except (MismatchedCohorts, TooFewSamples, ValueError):
                    pass
        for label in sorted(methods):
            rows = methods[label]
            cells = []
            for m in metrics:
                vals = [getattr(r, m) for r in rows]
                cells.append(cell(vals, marks.get((label, m), "")))
                finite = [v for v in vals if v is not None]
                mean = float(np.mean(finite)) if finite else math.nan
                sd = float(np.std(finite, ddof=1)) if len(finite) > 1 else math.nan
                w.writerow([modality, severity, label, m, repr(mean), repr(sd),
                            marks.get((label, m), "")])
                means[(label, modality, m, severity)] = mean
            md.append(f"| {modality} | {severity} | {label} | " + " | ".join(cells) + " |")
    return "\n".join(md) + "\n", buf.getvalue(), means


def cmd_report(args) -> int:
    by_method = _load_rows(args.metrics)
    roster = Roster.from_json(_read(args.roster))
    metrics = [m for m in METRIC_NAMES
               if any(getattr(r, m) is not None for rows in by_method.values() for r in rows)]
    md, table_csv, means = severity_table(by_method, roster, args.baseline, metrics)
    out = Path(args.out)
    _write(out / "severity_table.md", md)
    _write(out / "severity_table.csv", table_csv)

    plot_metric = args.plot_metric
    series = {}
    for (label, modality, m, _sev) in sorted(means):
        if m != plot_metric:
            continue
        series[f"{label} {modality}"] = [means.get((label, modality, m, s)) for s in SEVERITIES]
    _write(out / f"severity_{plot_metric}.svg", svg_line_plot(series, SEVERITIES, plot_metric))

    if args.ratings:
        lines = ["| group | ICC(A,1) | 95% CI | re-scan rate |", "|---|---|---|---|"]
        rates = []
        for spec in args.ratings:
            label, sep, path = spec.partition("=")
            if not sep:
                raise CliError(2, f"--ratings expects LABEL=path, got {spec!r}")
            table = _read_ratings(path)
            rate = rescan_rate(table.ravel())
            rates.append((label, rate))
            try:
                res = icc_absolute_agreement(table)
                icc_text, ci_text = fmt4(res.icc), f"{fmt4(res.ci95[0])} to {fmt4(res.ci95[1])}"
            except DegenerateTable:
                icc_text, ci_text = "degenerate", ""
            lines.append(f"| {label} | {icc_text} | {ci_text} | {100 * rate:.2f}% |")
        if len(rates) > 1:
            lines.append("")
            first_label, first = rates[0]
            for label, rate in rates[1:]:
                lines.append(f"- {label} vs {first_label}: re-scan {100 * first:.2f}% -> "
                             f"{100 * rate:.2f}% (absolute reduction {100 * (first - rate):.2f}%)")
        _write(out / "ratings.md", "\n".join(lines) + "\n")
    _echo_config(args, out)
    return 0


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="64-bit base seed")
    common.add_argument("--threads", type=int, default=1, help="worker pool size")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config", help="JSON file with default values for any flag")

    parser = argparse.ArgumentParser(prog="mrimotion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="build a simulated motion corpus")
    p.add_argument("--in", dest="input", required=True, help="store of clean MRIF volumes")
    p.add_argument("--counts", default="mild=0,moderate=0,severe=0",
                   help="volumes per severity, e.g. mild=4,moderate=3,severe=3")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("assess", parents=[common], help="compute metric rows")
    p.add_argument("--pred", required=True, help="store of volumes to assess")
    p.add_argument("--gt", help="store of reference volumes")
    p.add_argument("--roster", help="roster pairing predictions with references")
    p.add_argument("--method", default="method", help="method label for the rows")
    p.add_argument("--unpaired", action="store_true", help="no reference: SNR/CNR only")
    p.add_argument("--extractor", help="extractor manifest (default: seeded deep-tap preset)")
    p.add_argument("--extractor-seed", type=int, default=0)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("compare", parents=[common], help="paired tests with FDR correction")
    p.add_argument("--metrics", nargs="+", required=True, help="metric CSV files")
    p.add_argument("--baseline", default="corrupted", help="method every other is compared to")
    p.add_argument("--dataset", default="", help="dataset name for the report")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("split", parents=[common], help="partition a roster")
    p.add_argument("--roster", required=True)
    p.add_argument("--policy", choices=("patient", "stratified"), default="patient")
    p.add_argument("--fractions", default="train=0.7,val=0.3", help="patient policy fractions")
    p.add_argument("--fraction", type=float, default=0.7, help="stratified first-subset fraction")
    p.add_argument("--key", default="severity_label", help="stratification field")
    p.add_argument("--balance", help="undersample classes of this field to 1:1 first")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("report", parents=[common], help="severity-stratified tables and plots")
    p.add_argument("--metrics", nargs="+", required=True)
    p.add_argument("--roster", required=True)
    p.add_argument("--baseline", default="corrupted")
    p.add_argument("--plot-metric", default="ssim", choices=METRIC_NAMES)
    p.add_argument("--ratings", nargs="*", default=[], help="LABEL=ratings.csv (subject,rater1,...)")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config(parser, args, argv):
    if not args.config:
        return args
    try:
        overrides = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(2, f"cannot read config {args.config}: {exc}") from exc
    explicit = {tok.split("=")[0].lstrip("-").replace("-", "_") for tok in argv if tok.startswith("--")}
    for key, value in overrides.items():
        if not hasattr(args, key):
            raise CliError(2, f"unknown config key {key!r}")
        flag = "in" if key == "input" else key
        if flag not in explicit:
            setattr(args, key, value)
    return args


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(levelname)s: %(message)s",
                        stream=sys.stderr)
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        args = _apply_config(parser, args, argv)
        return args.func(args)
    except CliError as exc:
        print(f"mrimotion {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except MriMotionError as exc:
        print(f"mrimotion {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
