"""Command-line entry point: ``focuslime {explain,evaluate,synth,narrow,report}``.

Exit codes:

    0  every record succeeded
    1  unexpected error, or some records failed for other reasons
    2  bad configuration or command-line usage
    3  a token budget ran out for at least one record
    4  the model backend failed (network, unparseable answer) for at least one record
    5  input data could not be read (dataset, explanation files)
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import plotting
from .config import RunConfig
from .dataio import (DatasetError, read_dataset, safe_name, validate, write_csv, write_json, write_jsonl,
                     atomic_write)
from .errors import BudgetExhausted, ConfigError, FocusLimeError, ModelError
from .evaluation import alignment_report, drops, narrowing_study
from .focus import METHODS, explain
from .models import BlackBoxModel, Budget, QueryCache
from .report import render_explanation, render_file
from .segmenter import Document
from .surrogate import Attribution
from .synth import SyntheticSuiteSpec, generate_suite

logger = logging.getLogger("focuslime")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_MODEL = 4
EXIT_DATA = 5


def _failure_kind(exc: BaseException) -> str:
    if isinstance(exc, BudgetExhausted):
        return "budget"
    if isinstance(exc, ModelError):
        return "model"
    return "error"


def _exit_for(failures: list[dict]) -> int:
    kinds = {f["kind"] for f in failures}
    if "budget" in kinds:
        return EXIT_BUDGET
    if "model" in kinds:
        return EXIT_MODEL
    if kinds:
        return EXIT_ERROR
    return EXIT_OK


class Models:
    """Target/proxy clients built from a config, sharing one query cache."""

    def __init__(self, cfg: RunConfig):
        cache = QueryCache(cfg.resolve(cfg.cache_path))
        self.target = BlackBoxModel(cfg.target.to_spec("target", cfg.base_dir), cache)
        self.proxy = (BlackBoxModel(cfg.proxy.to_spec("proxy", cfg.base_dir), cache)
                      if cfg.proxy is not None else None)

    def close(self):
        self.target.close()
        if self.proxy is not None:
            self.proxy.close()


def _map_records(fn, docs, workers: int):
    """``fn`` over docs, returning ``(doc, result_or_exception)`` in input order."""
    def safe(doc):
        try:
            return fn(doc)
        except FocusLimeError as exc:
            return exc
    if workers <= 1:
        return [(d, safe(d)) for d in docs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(zip(docs, pool.map(safe, docs)))


def _record_failure(failures, doc_id, exc):
    logger.error("%s: %s", doc_id, exc)
    failures.append({"id": doc_id, "kind": _failure_kind(exc), "message": str(exc)})


def cmd_explain(cfg: RunConfig, data: Path, method: str, out: Path) -> int:
    docs = read_dataset(data)
    models = Models(cfg)
    if method in ("focus", "proxy-only") and models.proxy is None:
        raise ConfigError(f"method {method!r} needs a proxy model in the config")
    ecfg = cfg.explain_config()

    def run(doc: Document):
        exp = explain(doc, models.target, models.proxy, Budget(cfg.target_budget), Budget(cfg.proxy_budget),
                      ecfg, method)
        record = exp.to_dict(doc)
        write_json(out / f"{safe_name(doc.id)}.json", record)
        atomic_write(out / f"{safe_name(doc.id)}.html", render_explanation(record))
        return record

    failures: list[dict] = []
    try:
        for doc, res in _map_records(run, docs, cfg.record_parallelism):
            if isinstance(res, Exception):
                _record_failure(failures, doc.id, res)
    finally:
        models.close()
    code = _exit_for(failures)
    write_json(out / "summary.json", {"command": "explain", "method": method, "records": len(docs),
                                      "succeeded": len(docs) - len(failures), "failures": failures,
                                      "exit_code": code})
    logger.info("explained %d/%d records", len(docs) - len(failures), len(docs))
    return code


def load_attributions(directory: Path, docs: list[Document]):
    """``(pairs, missing)``: attributions matched to documents, and why others were dropped."""
    pairs, missing = [], []
    for doc in docs:
        path = directory / f"{safe_name(doc.id)}.json"
        if not path.exists():
            missing.append({"id": doc.id, "reason": "no explanation file"})
            continue
        try:
            rec = json.loads(path.read_text(encoding="utf-8"))
            validate(rec, "explanation")
        except Exception as exc:  # noqa: BLE001 - any unreadable file is reported, not fatal
            missing.append({"id": doc.id, "reason": f"unreadable explanation: {exc}"[:300]})
            continue
        offsets = [(u.start, u.end) for u in doc.units]
        if [(u["start"], u["end"]) for u in rec["units"]] != offsets or len(rec["scores"]) != doc.n:
            missing.append({"id": doc.id, "reason": "explanation units do not match the document"})
            continue
        pairs.append((doc, Attribution(np.array(rec["scores"], dtype=np.float64),
                                       np.array(rec["focus_mask"], dtype=np.uint8),
                                       rec["diagnostics"]["method"])))
    return pairs, missing


def cmd_evaluate(cfg: RunConfig, data: Path, explanations: list[Path], metric: str, out: Path) -> int:
    docs = read_dataset(data)
    failures: list[dict] = []
    labels = _method_labels(explanations)
    if metric == "aopc":
        models = Models(cfg)
        report = {"metric": "aopc", "depth": cfg.aopc_depth, "methods": {}, "missing": []}
        rows, curves = [], {}
        ks = list(range(1, cfg.aopc_depth + 1))
        try:
            for label, directory in zip(labels, explanations):
                pairs, missing = load_attributions(directory, docs)
                report["missing"] += [dict(m, method=label) for m in missing]
                per = []
                budget = Budget(cfg.eval_budget)

                def run(pair, budget=budget):
                    doc, attr = pair
                    return drops(models.target, doc, attr, ks, budget, cfg.parallelism, cfg.replacement)

                for (doc, _), res in zip(pairs, [r for _, r in _map_records(run, pairs, 1)]):
                    if isinstance(res, Exception):
                        _record_failure(failures, doc.id, res)
                        report["missing"].append({"id": doc.id, "reason": str(res), "method": label})
                        continue
                    per.append((doc.id, res))
                    rows.append([label, doc.id, float(res.mean())] + [float(v) for v in res])
                if not per:
                    continue
                curve = np.mean([c for _, c in per], axis=0)
                curves[label] = curve
                summary = {"aopc": float(curve.mean())}
                for k in (10, 50, 100):
                    if k <= len(curve):
                        summary[f"aopc_{k}"] = float(curve[k - 1])
                report["methods"][label] = {
                    "summary": summary,
                    "curve": [float(v) for v in curve],
                    "per_example": [{"id": i, "aopc": float(c.mean()), "curve": [float(v) for v in c]}
                                    for i, c in per],
                }
        finally:
            models.close()
        write_csv(out / "aopc_per_example.csv", ["method", "id", "aopc"] + [f"aopc_{k}" for k in ks], rows)
        write_csv(out / "aopc_curve.csv", ["method", "k", "aopc_k"],
                  [[m, k, float(c[k - 1])] for m, c in curves.items() for k in ks])
        write_json(out / "aopc.json", report)
        if curves:
            plotting.plot_aopc_curves(curves, out / "aopc_curve.png")
    else:
        report = {"metric": "recall", "ratios": list(cfg.recall_ratios), "methods": {}, "missing": []}
        rows, means = [], {}
        for label, directory in zip(labels, explanations):
            pairs, missing = load_attributions(directory, docs)
            report["missing"] += [dict(m, method=label) for m in missing]
            rep = alignment_report(pairs, cfg.recall_ratios)
            per = []
            for i, doc_id in enumerate(rep.ids):
                recalls = [float(x) for x in rep.recall[i]]
                per.append({"id": doc_id, "evidence_words": rep.evidence_words[i], "recall": recalls,
                            "retrieved": [int(x) for x in rep.retrieved[i]]})
                rows.append([label, doc_id, rep.evidence_words[i]] + recalls)
            mean = [None if np.isnan(v) else v for v in rep.mean().values()]
            means[label] = [0.0 if v is None else v for v in mean]
            report["methods"][label] = {"mean": mean, "per_example": per, "skipped": rep.skipped}
        write_csv(out / "recall.csv",
                  ["method", "id", "evidence_words"] + [f"recall@{r:g}" for r in cfg.recall_ratios], rows)
        write_json(out / "recall.json", report)
        if means:
            plotting.plot_recall(means, cfg.recall_ratios, out / "recall.png")
    if report["missing"]:
        logger.warning("%d record(s) excluded from means", len(report["missing"]))
    code = _exit_for(failures)
    if code == EXIT_OK and report["missing"]:
        code = EXIT_DATA
    return code


def _method_labels(dirs: list[Path]) -> list[str]:
    labels = []
    for d in dirs:
        summary = d / "summary.json"
        label = d.name
        if summary.exists():
            try:
                label = json.loads(summary.read_text(encoding="utf-8")).get("method", label)
            except ValueError:
                pass
        while label in labels:
            label += "'"
        labels.append(label)
    return labels


def cmd_synth(spec_path: Path, out: Path) -> int:
    try:
        spec = SyntheticSuiteSpec.from_dict(json.loads(spec_path.read_text(encoding="utf-8")))
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot read suite spec {spec_path}: {exc}") from exc
    records, model = generate_suite(spec)
    write_jsonl(out / "dataset.jsonl", records)
    write_json(out / "model.json", model.to_dict())
    config = {
        "target": {"model_id": "synthetic-target", "backend": "synthetic", "synthetic_file": "model.json"},
        "proxy": {"model_id": "synthetic-proxy", "backend": "synthetic", "synthetic_file": "model.json"},
        "budget": {"target_tokens": 0, "proxy_tokens": 0, "eval_tokens": 0},
        "seed": spec.seed,
    }
    write_json(out / "config.json", config)
    logger.info("wrote %d records to %s", len(records), out)
    return EXIT_OK


def cmd_narrow(cfg: RunConfig, data: Path, out: Path, steps: int | None = None) -> int:
    docs = read_dataset(data)
    models = Models(cfg)
    proxy = models.proxy or models.target
    steps = steps or cfg.narrow_steps

    def run(doc: Document):
        trace = narrowing_study(doc, models.target, proxy, min(steps, max(doc.n - 1, 1)), cfg.narrow_samples,
                                cfg.seed, Budget(cfg.target_budget), Budget(cfg.proxy_budget), cfg.kernel,
                                cfg.ridge, cfg.parallelism, cfg.aopc_depth)
        rec = trace.to_dict()
        write_json(out / f"{safe_name(doc.id)}_narrow.json", rec)
        return trace

    failures: list[dict] = []
    rows, paths = [], {}
    try:
        for doc, res in _map_records(run, docs, cfg.record_parallelism):
            if isinstance(res, Exception):
                _record_failure(failures, doc.id, res)
                continue
            for r in res.rows():
                rows.append([doc.id, r["step"], r["n_active"], r["mean_aopc"], r["optimal"]])
            paths[doc.id] = [(r["n_active"], r["mean_aopc"], bool(r["optimal"])) for r in res.rows()]
    finally:
        models.close()
    write_csv(out / "narrow_path.csv", ["id", "step", "n_active", "mean_aopc", "optimal"], rows)
    if paths:
        plotting.plot_narrowing(paths, out / "narrow_path.png")
    code = _exit_for(failures)
    write_json(out / "summary.json", {"command": "narrow", "records": len(docs),
                                      "succeeded": len(docs) - len(failures), "failures": failures,
                                      "exit_code": code})
    return code


def cmd_report(explanations: Path, out: Path | None = None) -> int:
    out = out or explanations
    bad = 0
    files = sorted(p for p in explanations.glob("*.json")
                   if p.name != "summary.json" and not p.name.endswith("_narrow.json"))
    for path in files:
        html, ok = render_file(path)
        bad += not ok
        atomic_write(out / (path.stem + ".html"), html)
    logger.info("rendered %d report(s), %d malformed", len(files), bad)
    return EXIT_DATA if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="focuslime", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="explain every record of a dataset")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--method", choices=METHODS, default="focus")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("evaluate", help="AOPC or evidence recall over explanation directories")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--explanations", required=True, type=Path, action="append",
                   help="directory written by explain (repeat to compare methods)")
    p.add_argument("--metric", choices=("aopc", "recall"), required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("synth", help="generate a synthetic dataset and model")
    p.add_argument("--spec", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("narrow", help="greedy neighbourhood-narrowing study")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("report", help="render HTML heatmaps for explanation files")
    p.add_argument("--explanations", required=True, type=Path)
    p.add_argument("--out", type=Path)
    return parser


def _out_dir(args, cfg: RunConfig | None) -> Path:
    if args.out is not None:
        return args.out
    if cfg is not None and cfg.output_dir is not None:
        return cfg.resolve(cfg.output_dir)
    raise ConfigError("no output directory: pass --out or set output_dir in the config")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args.spec, args.out)
        if args.command == "report":
            return cmd_report(args.explanations, args.out)
        cfg = RunConfig.load(args.config)
        out = _out_dir(args, cfg)
        if args.command == "explain":
            return cmd_explain(cfg, args.data, args.method, out)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.data, args.explanations, args.metric, out)
        if args.command == "narrow":
            if args.steps is not None and args.steps < 1:
                raise ConfigError("--steps must be >= 1")
            return cmd_narrow(cfg, args.data, out, args.steps)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (DatasetError, OSError) as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except BudgetExhausted as exc:
        logger.error("budget exhausted: %s", exc)
        return EXIT_BUDGET
    except ModelError as exc:
        logger.error("model error: %s", exc)
        return EXIT_MODEL
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
