"""Command-line interface: detect, diagnose, explain, score, synth, eval.

Every run writes a ``manifest.json`` (config hash, seed, input digests,
artifact list); re-running a command with the manifest's config and seed on
the same inputs reproduces all CSV/JSON artifacts bitwise.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
divergence. Set XFDD_LOG=debug|info|warning to control verbosity.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import fit_pca, lag_stack, spe_statistic, t2_statistic
from .data import lag_kept_indices, load_csv, run_segments, write_csv
from .errors import (
    ConfigurationError,
    DataError,
    DivergenceError,
    RelevanceError,
    ShapeError,
    XfddError,
)
from .lrp import overall_relevance, per_fault_reports, prune_mask, with_threshold
from .metrics import (
    classification_accuracy,
    confusion_matrix,
    false_alarm_rate,
    fdr_table,
)
from .nn import predict
from .pipeline import (
    ModelBundle,
    PipelineConfig,
    prepare_with_bundle,
    run,
    score_online,
)
from .report import (
    confusion_figure,
    heatmap_artifacts,
    json_dump,
    relevance_bar_figure,
    relevance_report_json,
    write_confusion_csv,
    write_fdr_table_csv,
    write_ledger_csv,
    write_loss_trace,
    write_relevance_csv,
    write_rows,
)
from .synthproc import PRESETS, benchmark

log = logging.getLogger("xfdd")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_hash(cfg_dict: dict) -> str:
    canon = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _write_manifest(out_dir: Path, command: str, cfg_dict: dict, seed, inputs: dict, artifacts) -> None:
    manifest = {
        "command": command,
        "config": cfg_dict,
        "config_hash": _config_hash(cfg_dict),
        "seed": seed,
        "version": __version__,
        "inputs": {str(k): _sha256(v) for k, v in inputs.items()},
        "artifacts": sorted(str(a) for a in artifacts),
    }
    json_dump(manifest, out_dir / "manifest.json")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _variance_rule_k(X: np.ndarray, target: float = 0.90) -> int:
    Xs = (X - X.mean(axis=0)) / np.where(X.std(axis=0) < 1e-12, 1.0, X.std(axis=0))
    eigvals = np.linalg.eigvalsh((Xs.T @ Xs) / max(X.shape[0] - 1, 1))[::-1]
    eigvals = np.clip(eigvals, 0.0, None)
    frac = np.cumsum(eigvals) / eigvals.sum()
    return int(np.searchsorted(frac, target) + 1)


def _run_flags(stat_fn, model, X, runs, lag, limit) -> np.ndarray:
    """Per-run lag-stacked statistic flags, padded with False where history is short."""
    flags = np.zeros(X.shape[0], dtype=bool)
    for s, e in run_segments(X.shape[0], runs):
        if e - s <= lag:
            continue
        stats = stat_fn(model, lag_stack(X[s:e], lag))
        flags[s + lag : e] = stats > limit
    return flags


def _model_flags_full(bundle: ModelBundle, test_raw) -> np.ndarray:
    """Model class predictions on every raw row.

    Rows without enough lag history (the first ``lag`` rows of each run)
    cannot be scored and count as "no alarm", matching the online replay.
    """
    prepared = prepare_with_bundle(bundle, test_raw)
    preds = predict(bundle.model, prepared.X)
    full = np.zeros(test_raw.n_samples, dtype=int)
    kept = lag_kept_indices(test_raw.n_samples, test_raw.run_ids, bundle.lag)
    full[kept] = preds
    return full


def _baseline_flags(cfg: PipelineConfig, train_raw, test_raw) -> dict[str, np.ndarray]:
    normal = train_raw.X[train_raw.fault_ids == 0]
    if normal.shape[0] < 10:
        log.warning("too few normal training rows for baselines; skipping")
        return {}
    k = cfg.pca_components or _variance_rule_k(normal)
    pca = fit_pca(normal, k)
    flags = {
        "pca_t2": np.atleast_1d(t2_statistic(pca, test_raw.X)) > pca.t2_limit,
        "pca_spe": np.atleast_1d(spe_statistic(pca, test_raw.X)) > pca.spe_limit,
    }

    lag = cfg.dpca_lag
    runs_train = train_raw.run_ids if train_raw.run_ids is not None else np.zeros(train_raw.n_samples, dtype=int)
    normal_runs = runs_train[train_raw.fault_ids == 0]
    stacked = []
    boundaries = np.flatnonzero(np.diff(normal_runs) != 0) + 1
    for s, e in zip(np.concatenate(([0], boundaries)), np.concatenate((boundaries, [normal.shape[0]]))):
        if e - s > lag:
            stacked.append(lag_stack(normal[s:e], lag))
    if not stacked:
        return flags
    dk = cfg.pca_components or _variance_rule_k(np.vstack(stacked))
    dpca = fit_pca(np.vstack(stacked), dk)
    runs_test = test_raw.run_ids if test_raw.run_ids is not None else np.zeros(test_raw.n_samples, dtype=int)
    flags["dpca_t2"] = _run_flags(t2_statistic, dpca, test_raw.X, runs_test, lag, dpca.t2_limit)
    flags["dpca_spe"] = _run_flags(spe_statistic, dpca, test_raw.X, runs_test, lag, dpca.spe_limit)
    return flags


def _evaluation_artifacts(bundle: ModelBundle, test_raw, out: Path) -> list[str]:
    """Confusion matrix and (detect mode) per-fault rate table for a test set."""
    prepared = prepare_with_bundle(bundle, test_raw)
    preds = predict(bundle.model, prepared.X)
    cm = confusion_matrix(preds, prepared.y, class_names=bundle.class_names)
    write_confusion_csv(cm, out / "confusion.csv")
    confusion_figure(cm, out / "confusion.svg")
    artifacts = ["confusion.csv", "confusion.svg"]

    try:
        reports = per_fault_reports(bundle.model, prepared, epsilon=bundle.epsilon)
    except RelevanceError:
        reports = {}
    if reports:
        heatmap_artifacts(reports, out)
        artifacts += ["heatmap.csv", "heatmap.svg"]
    return artifacts


def _cmd_pipeline(args, mode: str) -> int:
    try:
        cfg_dict = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {args.config}") from None
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    if args.lambda_thresh is not None:
        cfg_dict["lambda_thresh"] = args.lambda_thresh
    if args.threads is not None:
        cfg_dict["threads"] = args.threads
    cfg = PipelineConfig.from_dict(cfg_dict, mode=mode)

    train_raw = load_csv(args.train)
    test_raw = load_csv(args.test)
    log.info("loaded %d training and %d test rows", train_raw.n_samples, test_raw.n_samples)

    result = run(cfg, train_raw, test_raw)
    out = _out_dir(args)
    write_ledger_csv(result.records, out / "ledger.csv")
    json_dump(result.bundle.to_dict(), out / "model.json")
    write_loss_trace(result.selected.trace, out / "loss_trace.csv")
    artifacts = ["ledger.csv", "model.json", "loss_trace.csv"]

    selected = result.selected
    if selected.relevance_report is not None:
        report = with_threshold(selected.relevance_report, selected.lambda_used)
        keep = selected.keep
        write_relevance_csv(report, out / "relevance.csv", keep=keep)
        relevance_report_json(report, out / "relevance.json", keep=keep)
        relevance_bar_figure(report, out / "relevance_bar.svg", threshold=report.threshold)
        artifacts += ["relevance.csv", "relevance.json", "relevance_bar.svg"]

    artifacts += _evaluation_artifacts(result.bundle, test_raw, out)

    if mode == "detect":
        flags = _model_flags_full(result.bundle, test_raw)
        table = fdr_table(flags, test_raw.fault_ids, _baseline_flags(cfg, train_raw, test_raw))
        write_fdr_table_csv(table, out / "fdr_table.csv")
        artifacts.append("fdr_table.csv")
        avg = [r for r in table if r["fault"] == "average"]
        if avg:
            log.info("averaged detection rate %.2f%%", avg[0]["model"])

    _write_manifest(
        out, mode, cfg.to_dict(), cfg.seed,
        {"train": args.train, "test": args.test}, artifacts,
    )
    best = result.selected
    print(
        f"{mode}: selected {best.kind} ({best.architecture}) from {best.phase} "
        f"iteration {best.iteration}: validation {100 * best.val_accuracy:.2f}%, "
        f"test {100 * best.test_accuracy:.2f}%, {len(best.retained)} variables retained"
    )
    return EXIT_OK


def _cmd_synth(args) -> int:
    bench = benchmark(preset=args.preset, seed=args.seed or 0)
    out = _out_dir(args)
    write_csv(bench.train, out / "train.csv")
    write_csv(bench.test, out / "test.csv")
    json_dump(bench.ground_truth, out / "ground_truth.json")
    _write_manifest(
        out, "synth", {"preset": args.preset, "seed": args.seed or 0},
        args.seed or 0, {}, ["train.csv", "test.csv", "ground_truth.json"],
    )
    print(
        f"synth: wrote {bench.train.n_samples} training and {bench.test.n_samples} "
        f"test rows for preset {args.preset!r} to {out}"
    )
    return EXIT_OK


def _cmd_explain(args) -> int:
    bundle = ModelBundle.from_dict(json.loads(Path(args.model).read_text()))
    ds_raw = load_csv(args.data)
    prepared = prepare_with_bundle(bundle, ds_raw)
    report = overall_relevance(bundle.model, prepared, epsilon=bundle.epsilon)
    keep = prune_mask(report, args.lambda_thresh)
    report = with_threshold(report, args.lambda_thresh)

    out = _out_dir(args)
    write_relevance_csv(report, out / "relevance.csv", keep=keep)
    relevance_report_json(report, out / "relevance.json", keep=keep)
    relevance_bar_figure(report, out / "relevance_bar.svg", threshold=report.threshold)
    artifacts = ["relevance.csv", "relevance.json", "relevance_bar.svg"]
    try:
        reports = per_fault_reports(bundle.model, prepared, epsilon=bundle.epsilon)
    except RelevanceError:
        reports = {}
    if reports:
        heatmap_artifacts(reports, out)
        artifacts += ["heatmap.csv", "heatmap.svg"]
    _write_manifest(
        out, "explain", {"lambda_thresh": args.lambda_thresh}, bundle.seed,
        {"model": args.model, "data": args.data}, artifacts,
    )
    print(f"explain: relevance over {report.n_samples} correctly classified samples -> {out}")
    return EXIT_OK


def _cmd_score(args) -> int:
    bundle = ModelBundle.from_dict(json.loads(Path(args.model).read_text()))
    stream = load_csv(args.stream, require_labels=False)
    if stream.catalog.names != bundle.variable_names:
        raise DataError("stream variables do not match the model's catalog")
    verdicts = score_online(bundle, stream.X, explain_alarms=args.explain_alarms)

    def rows():
        for v in verdicts:
            top_var, top_rel = "", ""
            if v.attribution:
                top_var = max(v.attribution, key=v.attribution.get)
                top_rel = v.attribution[top_var]
            yield [
                v.row, v.status,
                "" if v.class_id is None else v.class_id,
                v.class_name or "",
                "" if v.probability is None else v.probability,
                top_var, top_rel,
            ]

    header = ["row", "status", "class_id", "class_name", "probability", "top_variable", "top_relevance"]
    if args.out:
        out = _out_dir(args)
        write_rows(out / "verdicts.csv", header, rows())
        _write_manifest(
            out, "score", {"explain_alarms": args.explain_alarms}, bundle.seed,
            {"model": args.model, "stream": args.stream}, ["verdicts.csv"],
        )
        alarms = sum(1 for v in verdicts if v.class_id not in (None, 0))
        print(f"score: {len(verdicts)} rows, {alarms} alarms -> {out / 'verdicts.csv'}")
    else:
        import csv as _csv

        writer = _csv.writer(sys.stdout)
        writer.writerow(header)
        for row in rows():
            writer.writerow(row)
    return EXIT_OK


def _cmd_eval(args) -> int:
    bundle = ModelBundle.from_dict(json.loads(Path(args.model).read_text()))
    test_raw = load_csv(args.data)
    out = _out_dir(args)
    artifacts = _evaluation_artifacts(bundle, test_raw, out)

    prepared = prepare_with_bundle(bundle, test_raw)
    preds = predict(bundle.model, prepared.X)
    summary = {"accuracy": classification_accuracy(preds, prepared.y)}
    if bundle.mode == "detect":
        flags = _model_flags_full(bundle, test_raw)
        table = fdr_table(flags, test_raw.fault_ids)
        write_fdr_table_csv(table, out / "fdr_table.csv")
        artifacts.append("fdr_table.csv")
        summary["false_alarm_rate"] = false_alarm_rate(flags, test_raw.fault_ids)
        avg = [r for r in table if r["fault"] == "average"]
        if avg:
            summary["averaged_fdr"] = avg[0]["model"]
    json_dump(summary, out / "metrics.json")
    artifacts.append("metrics.json")
    _write_manifest(out, "eval", {}, bundle.seed,
                    {"model": args.model, "data": args.data}, artifacts)
    print("eval: " + ", ".join(f"{k}={v:.4g}" for k, v in summary.items()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xfdd",
        description="Explainability-driven fault detection and diagnosis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_pipeline(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--train", required=True, help="training CSV")
        p.add_argument("--test", required=True, help="test CSV")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--threads", type=int, default=None, help="parallel grid candidates")
        p.add_argument("--lambda-thresh", type=float, default=None, dest="lambda_thresh",
                       help="override the pruning threshold fraction")
        return p

    add_pipeline("detect", "binary fault detection with iterative input pruning")
    add_pipeline("diagnose", "multi-class fault diagnosis with iterative input pruning")

    p = sub.add_parser("explain", help="per-variable relevance of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="labeled CSV to attribute")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--lambda-thresh", type=float, default=0.01, dest="lambda_thresh")

    p = sub.add_parser("score", help="stream rows through a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--stream", required=True, help="CSV of raw rows to score")
    p.add_argument("--out", default=None, help="output directory (default: stdout)")
    p.add_argument("--explain-alarms", action="store_true", dest="explain_alarms",
                   help="attach per-variable attribution to non-normal verdicts")

    p = sub.add_parser("synth", help="generate the synthetic benchmark")
    p.add_argument("--preset", default="default", choices=sorted(PRESETS))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="evaluate a saved model on a labeled CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    return parser


_COMMANDS = {
    "detect": lambda a: _cmd_pipeline(a, "detect"),
    "diagnose": lambda a: _cmd_pipeline(a, "diagnose"),
    "explain": _cmd_explain,
    "score": _cmd_score,
    "synth": _cmd_synth,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    level = os.environ.get("XFDD_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, ShapeError) as exc:
        log.error("configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, RelevanceError) as exc:
        log.error("numerical error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except XfddError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
