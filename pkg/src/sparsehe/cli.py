"""Command-line entry point.

Every command that writes results puts them under ``<out>/<manifest hash>/``
and never replaces an existing file: a re-run reuses finished trials and only
fills in what is missing. Exit codes are 0 on success, 1 on runtime failure
(structured JSON on stderr) and 2 on an invalid manifest or arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import accounting, attacks, convergence
from .errors import ConfigurationError, SparseHEError
from .he.ckks import CkksParams
from .manifest import Manifest, ManifestError, load_manifest, load_schema
from .orchestrator import ABLATIONS, FlConfig, RoundReport, run_experiment
from .stats import paired_ttest
from .svg import line_chart

ENV_OUT = "SPARSEHE_OUT"
ENV_THREADS = "SPARSEHE_THREADS"
DEFAULT_OUT = "sparsehe-out"
HASH_PREFIX = 16

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class RuntimeFailure(SparseHEError):
    """A run finished but its outcome is a failure (e.g. quorum never met)."""


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _from_json_number(v):
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    return v


class Outputs:
    """Write-once files under a manifest-hash directory."""

    def __init__(self, root, manifest: Manifest):
        self.manifest_hash = manifest.hash
        self.dir = Path(root) / self.manifest_hash[:HASH_PREFIX]
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []
        self.reused: list[Path] = []

    def path(self, name: str) -> Path:
        return self.dir / name

    def _write(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        try:
            with open(p, "x", encoding="utf-8") as fh:
                fh.write(text)
        except FileExistsError:
            self.reused.append(p)
            return p
        self.written.append(p)
        return p

    def json(self, name: str, payload: dict, seed) -> Path:
        body = {"manifest_hash": self.manifest_hash, "seed": seed, **payload}
        return self._write(name, json.dumps(_jsonable(body), indent=2, sort_keys=False) + "\n")

    def csv(self, name: str, fields, rows, seed) -> Path:
        buf = io.StringIO()
        buf.write(f"# manifest_hash={self.manifest_hash} seed={seed}\n")
        writer = csv.DictWriter(buf, fieldnames=list(fields))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        return self._write(name, buf.getvalue())

    def svg(self, name: str, text: str, seed) -> Path:
        stamp = f"<!-- manifest_hash={self.manifest_hash} seed={seed} -->\n"
        return self._write(name, stamp + text)

    def load(self, name: str):
        p = self.path(name)
        if not p.exists():
            return None
        with open(p, encoding="utf-8") as fh:
            return json.load(fh)


def mean_std(values) -> dict:
    v = np.asarray([_from_json_number(x) for x in values], dtype=np.float64)
    if v.size < 2 or np.all(v == v[0]):
        std = 0.0
    else:
        std = float(np.std(v, ddof=1)) if np.isfinite(v).all() else math.nan
    return {"mean": float(np.mean(v)), "std": std, "median": float(np.median(v)), "n": int(v.size)}


SUMMARY_METRICS = ("final_accuracy", "final_f1", "final_loss", "epsilon", "mb_up_per_round", "wall_time")


def _metrics(trials: list[dict]) -> dict:
    return {m: mean_std([t[m] for t in trials]) for m in SUMMARY_METRICS}


def _fl_trial(out: Outputs, cfg: FlConfig, seed: int, stem: str) -> dict:
    """Run (or reuse) one trial; returns its summary dict."""
    name = f"{stem}_seed{seed}.json"
    rounds_csv = f"rounds/{stem}_seed{seed}.csv"
    cached = out.load(name)
    if cached is not None:
        out.reused.extend(p for p in (out.path(name), out.path(rounds_csv)) if p.exists())
        return cached["summary"]
    result = run_experiment(replace(cfg, seed=seed))
    summary = result.summary()
    out.json(
        name,
        {
            "config": cfg.to_dict(),
            "summary": summary,
            "rounds": [r.to_dict() for r in result.reports],
        },
        seed,
    )
    out.csv(rounds_csv, RoundReport.CSV_FIELDS, [r.csv_row() for r in result.reports], seed)
    return summary


def _fl_trials(out: Outputs, cfg: FlConfig, seeds, stem: str, threads: int) -> list[dict]:
    if threads <= 1:
        return [_fl_trial(out, cfg, s, stem) for s in seeds]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: _fl_trial(out, cfg, s, stem), seeds))


def _security(cfg: FlConfig) -> str | None:
    return cfg.he.security_claim if cfg.mechanisms.encryption else None


def _check_quorum(trials: list[dict], label: str) -> None:
    dead = [t["seed"] for t in trials if t["completed_rounds"] == 0]
    if dead:
        raise RuntimeFailure(f"{label}: every round failed quorum for seeds {dead}")


def cmd_fl_run(m: Manifest, out: Outputs, threads: int) -> dict:
    cfg = m.fl_config()
    trials = _fl_trials(out, cfg, m.seeds, "trial", threads)
    summary = {
        "kind": m.kind,
        "security_claim": _security(cfg),
        "config": cfg.to_dict(),
        "trials": trials,
        "metrics": _metrics(trials),
    }
    out.json("summary.json", summary, list(m.seeds))
    rounds = {}
    for s in m.seeds:
        data = out.load(f"trial_seed{s}.json")
        rounds[f"seed {s}"] = (
            [r["round"] for r in data["rounds"]],
            [r["global_accuracy"] for r in data["rounds"]],
        )
    out.svg("plots/accuracy.svg", line_chart(rounds, "Test accuracy", "round", "accuracy"), list(m.seeds))
    _check_quorum(trials, "fl_run")
    return summary


def cmd_ablation(m: Manifest, out: Outputs, threads: int) -> dict:
    base = m.fl_config("fl")
    names = m.config.get("variants", list(ABLATIONS))
    variants, rows = {}, []
    for name in names:
        cfg = replace(base, mechanisms=ABLATIONS[name])
        trials = _fl_trials(out, cfg, m.seeds, f"trial_{name}", threads)
        metrics = _metrics(trials)
        variants[name] = {"security_claim": _security(cfg), "trials": trials, "metrics": metrics}
        rows.append(
            {
                "variant": name,
                "accuracy_mean": metrics["final_accuracy"]["mean"],
                "accuracy_std": metrics["final_accuracy"]["std"],
                "loss_median": metrics["final_loss"]["median"],
                "mb_up_per_round_mean": metrics["mb_up_per_round"]["mean"],
                "epsilon": metrics["epsilon"]["mean"],
            }
        )
    summary = {
        "kind": m.kind,
        "security_claim": base.he.security_claim,
        "config": base.to_dict(),
        "rows": rows,
        "variants": variants,
    }
    out.json("summary.json", summary, list(m.seeds))
    out.csv("ablation.csv", rows[0].keys(), rows, list(m.seeds))
    for name, v in variants.items():
        _check_quorum(v["trials"], name)
    return summary


def cmd_sweep(m: Manifest, out: Outputs, threads: int) -> dict:
    base = m.fl_config("fl")
    rows, levels = [], {}
    for s in m.config["grid"]:
        cfg = replace(base, sparsifier=replace(base.sparsifier, sparsity=float(s)))
        trials = _fl_trials(out, cfg, m.seeds, f"trial_s{s}", threads)
        metrics = _metrics(trials)
        levels[str(s)] = {"trials": trials, "metrics": metrics}
        rows.append(
            {
                "sparsity": s,
                "accuracy_mean": metrics["final_accuracy"]["mean"],
                "accuracy_median": metrics["final_accuracy"]["median"],
                "accuracy_std": metrics["final_accuracy"]["std"],
                "mb_up_per_round_mean": metrics["mb_up_per_round"]["mean"],
            }
        )
    summary = {
        "kind": m.kind,
        "security_claim": _security(base),
        "config": base.to_dict(),
        "rows": rows,
        "levels": levels,
    }
    seeds = list(m.seeds)
    out.json("summary.json", summary, seeds)
    for level in levels.values():
        _check_quorum(level["trials"], "sparsity_sweep")
    out.csv("sweep.csv", rows[0].keys(), rows, seeds)
    xs = [r["sparsity"] for r in rows]
    out.svg(
        "plots/sweep_accuracy.svg",
        line_chart({"median": (xs, [r["accuracy_median"] for r in rows])}, "Accuracy vs sparsity", "s", "accuracy"),
        seeds,
    )
    out.svg(
        "plots/sweep_mb.svg",
        line_chart({"mean": (xs, [r["mb_up_per_round_mean"] for r in rows])}, "Upload vs sparsity", "s", "MB per round"),
        seeds,
    )
    return summary


ACCOUNTING_DEFAULTS = {
    "d": 66_955_010,
    "s": 0.9,
    "n_clients": 5,
    "ring_dim": 8192,
    "q_bits": 240,
    "scale_log2": 40,
    "lanes_per_slot": 64,
    "slot_model": "paper_N",
}


def accounting_report(config: dict) -> tuple[dict, str]:
    c = {**ACCOUNTING_DEFAULTS, **config}
    params = CkksParams(ring_dim=c["ring_dim"], q_bits=c["q_bits"], scale_log2=c["scale_log2"])
    report = accounting.full_report(c["d"], c["s"], c["n_clients"], params, c["lanes_per_slot"])
    breakdown = accounting.communication_breakdown(
        c["d"], c["s"], c["n_clients"], params, c["lanes_per_slot"], c["slot_model"]
    )
    report["selected"] = breakdown.to_dict()
    report["inputs"] = c
    return report, breakdown.table()


def cmd_accounting(m: Manifest, out: Outputs, threads: int) -> dict:
    report, table = accounting_report(m.config)
    out.json("accounting.json", {"kind": m.kind, "report": report}, None)
    print(table)
    return report


def cmd_mia(m: Manifest, out: Outputs, threads: int) -> dict:
    cfg = m.fl_config()
    rows = []
    for seed in m.seeds:
        name = f"mia_seed{seed}.json"
        cached = out.load(name)
        if cached is None:
            cached = {"result": attacks.mia_experiment(cfg, seed).to_dict()}
            out.json(name, cached, seed)
        rows.append(cached["result"])
    medians = {
        key: float(np.median([r[key]["attack_success_rate"] for r in rows]))
        for key in ("medhe", "standard_fl", "overfit")
    }
    summary = {
        "kind": m.kind,
        "security_claim": _security(cfg),
        "threshold_rule": attacks.THRESHOLD_RULE,
        "median_success": medians,
        "trials": rows,
    }
    out.json("summary.json", summary, list(m.seeds))
    return summary


CONVERGENCE_DEFAULTS = {
    "s": 0.9, "T": 2000, "lr": 1.0, "alpha": 0.7, "grad_noise": 0.05,
    "schedule": "inv_sqrt", "tail_fraction": 0.9,
}


def convergence_seed(c: dict, seed: int) -> dict:
    """EF, no-EF and dense runs on every problem of the standard suite."""
    problems = convergence.standard_suite(c["grad_noise"])
    per, columns = [], {}
    for i, prob in enumerate(problems):
        lr = min(c["lr"], 1.0 / prob.smoothness)
        ef = convergence.run_sparse_sgd(prob, c["s"], True, c["T"], lr, seed, c["alpha"], c["schedule"])
        no = convergence.run_sparse_sgd(prob, c["s"], False, c["T"], lr, seed, c["alpha"], c["schedule"])
        dense = convergence.run_dense_gd(prob, c["T"], lr, seed, c["schedule"])
        per.append(
            {
                "problem": i,
                "dim": prob.dim,
                "ef_final": ef.final,
                "no_ef_final": no.final,
                "dense_final": dense.final,
                "ef_slope": convergence.fit_convergence_rate(ef.suboptimality, c["tail_fraction"]),
                "ratio_no_ef_over_ef": no.final / ef.final if ef.final > 0 else math.inf,
                "ef_diverged": ef.diverged,
                "no_ef_diverged": no.diverged,
            }
        )
        columns[f"p{i}_ef"] = ef.suboptimality
        columns[f"p{i}_no_ef"] = no.suboptimality
        columns[f"p{i}_dense"] = dense.suboptimality
    return {"problems": per, "columns": columns}


def cmd_convergence(m: Manifest, out: Outputs, threads: int) -> dict:
    c = {**CONVERGENCE_DEFAULTS, **m.config}
    rows = []
    for seed in m.seeds:
        name = f"convergence_seed{seed}.json"
        cached = out.load(name)
        if cached is None:
            res = convergence_seed(c, seed)
            cached = {"problems": res["problems"]}
            out.json(name, cached, seed)
            cols = res["columns"]
            length = max(len(v) for v in cols.values())
            table = [
                {"step": t + 1, **{k: (v[t] if t < len(v) else "") for k, v in cols.items()}}
                for t in range(length)
            ]
            out.csv(f"trajectories/convergence_seed{seed}.csv", ["step", *cols], table, seed)
            out.svg(
                f"plots/convergence_seed{seed}.svg",
                line_chart(
                    {k: (range(1, len(v) + 1), v) for k, v in cols.items()},
                    "Suboptimality", "step", "f(w) - f*", log_x=True, log_y=True,
                ),
                seed,
            )
        rows.append(cached["problems"])
    n_prob = len(rows[0])
    per_problem = []
    for i in range(n_prob):
        slopes = [r[i]["ef_slope"] for r in rows if r[i]["ef_slope"] is not None]
        ratios = [_from_json_number(r[i]["ratio_no_ef_over_ef"]) for r in rows]
        per_problem.append(
            {
                "problem": i,
                "median_ef_slope": float(np.median(slopes)) if slopes else None,
                "median_ratio_no_ef_over_ef": float(np.median(ratios)),
                "median_ef_final": float(np.median([r[i]["ef_final"] for r in rows])),
                "median_no_ef_final": float(np.median([r[i]["no_ef_final"] for r in rows])),
            }
        )
    summary = {"kind": m.kind, "config": c, "per_problem": per_problem, "trials": rows}
    out.json("summary.json", summary, list(m.seeds))
    return summary


RUNNERS = {
    "fl_run": cmd_fl_run,
    "ablation": cmd_ablation,
    "sparsity_sweep": cmd_sweep,
    "accounting": cmd_accounting,
    "mia": cmd_mia,
    "convergence": cmd_convergence,
}
COMMAND_KINDS = {
    "sweep": ("sparsity_sweep",),
    "account": ("accounting",),
    "attack": ("mia",),
    "converge": ("convergence",),
}


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(p) for p in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed list must be integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def _threads(arg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"{ENV_THREADS} must be an integer, got {env!r}")
    return 1


def _out_root(arg, manifest: Manifest) -> str:
    return arg or manifest.output_dir or os.environ.get(ENV_OUT) or DEFAULT_OUT


def _emit(payload: dict, stream) -> None:
    stream.write(json.dumps(_jsonable(payload), indent=2) + "\n")


def execute_manifest(args, allowed=None) -> int:
    m = load_manifest(args.manifest)
    if allowed and m.kind not in allowed:
        raise ManifestError(
            [{"line": None, "field": "kind", "message": f"{args.command} expects kind {allowed[0]}, got {m.kind}"}]
        )
    if args.seed_override:
        m = m.with_seeds(args.seed_override)
    out = Outputs(_out_root(args.out, m), m)
    summary = RUNNERS[m.kind](m, out, _threads(args.threads))
    claim = summary.get("security_claim")
    if claim:
        print(f"security_claim: {claim}")
    _emit(
        {
            "kind": m.kind,
            "manifest_hash": out.manifest_hash,
            "output_dir": str(out.dir),
            "written": len(out.written),
            "reused": len(set(out.reused)),
        },
        sys.stdout,
    )
    return EXIT_OK


def cmd_account_direct(args) -> int:
    """``account`` without a manifest: print the breakdown for the given sizes."""
    config = {k: v for k, v in vars(args).items() if k in ACCOUNTING_DEFAULTS and v is not None}
    report, table = accounting_report(config)
    print(table)
    print(f"security_claim: {report['security_claim']}")
    _emit(report, sys.stdout)
    return EXIT_OK


def _trial_accuracies(path: str) -> dict[int, float]:
    """Per-seed final accuracy from a summary; ``path:variant`` selects an ablation row."""
    variant = None
    if ":" in path and not os.path.exists(path):
        path, variant = path.rsplit(":", 1)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read summary {path}: {exc}")
    if variant is not None:
        try:
            data = data["variants"][variant]
        except KeyError:
            raise ConfigurationError(f"{path} has no variant {variant!r}")
    if "trials" not in data:
        raise ConfigurationError(f"{path} has no per-seed trials")
    return {int(t["seed"]): float(t["final_accuracy"]) for t in data["trials"]}


def cmd_ttest(args) -> int:
    a = _trial_accuracies(args.summary_a)
    b = _trial_accuracies(args.summary_b)
    if sorted(a) != sorted(b):
        raise ConfigurationError(f"seed lists differ: {sorted(a)} vs {sorted(b)}")
    seeds = sorted(a)
    res = paired_ttest([a[s] for s in seeds], [b[s] for s in seeds])
    _emit({"seeds": seeds, **res.to_dict()}, sys.stdout)
    return EXIT_OK


def cmd_schema(args) -> int:
    _emit(load_schema(), sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsehe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def manifest_flags(p, required=True):
        p.add_argument("--manifest", required=required, help="experiment manifest (JSON)")
        p.add_argument("--out", help=f"output root (default: manifest output_dir, ${ENV_OUT}, ./{DEFAULT_OUT})")
        p.add_argument("--threads", type=int, help=f"parallel trials (default: ${ENV_THREADS} or 1)")
        p.add_argument("--seed-override", type=_seeds, help="replace the manifest seeds, e.g. 1,2,3")

    manifest_flags(sub.add_parser("run", help="run any manifest"))
    manifest_flags(sub.add_parser("sweep", help="sparsity sweep manifest"))
    manifest_flags(sub.add_parser("attack", help="membership inference manifest"))
    manifest_flags(sub.add_parser("converge", help="convergence lab manifest"))
    acc = sub.add_parser("account", help="communication accounting")
    manifest_flags(acc, required=False)
    acc.add_argument("--d", type=int)
    acc.add_argument("--s", type=float)
    acc.add_argument("--n-clients", dest="n_clients", type=int)
    acc.add_argument("--ring-dim", dest="ring_dim", type=int)
    acc.add_argument("--q-bits", dest="q_bits", type=int)
    acc.add_argument("--lanes-per-slot", dest="lanes_per_slot", type=int)
    acc.add_argument("--slot-model", dest="slot_model", choices=["paper_N", "standard_N_half"])
    tt = sub.add_parser("ttest", help="paired t-test on per-seed final accuracy")
    tt.add_argument("summary_a", help="summary.json, or summary.json:variant for ablations")
    tt.add_argument("summary_b")
    sub.add_parser("schema", help="print the manifest JSON schema")
    return parser


def dispatch(args) -> int:
    if args.command == "ttest":
        return cmd_ttest(args)
    if args.command == "schema":
        return cmd_schema(args)
    if args.command == "account" and not args.manifest:
        return cmd_account_direct(args)
    return execute_manifest(args, COMMAND_KINDS.get(args.command))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return dispatch(args)
    except ManifestError as exc:
        _emit({"error": "invalid_manifest", "diagnostics": exc.diagnostics}, sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        _emit({"error": "configuration", "type": type(exc).__name__, "message": str(exc)}, sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every runtime failure becomes exit 1
        _emit({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}, sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
