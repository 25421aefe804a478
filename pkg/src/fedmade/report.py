"""Report files and cross-run comparison.

Files written by :func:`emit_report`:

``report.json``
    Everything: config echo, every round record, FedMADE diagnostics,
    final test metrics of the best model, timing summary, abort flag.
``rounds.csv``
    One row per round: ``round, acc_<class>..., accuracy, duration, K, residual``.
    ``K`` and ``residual`` are empty for algorithms other than FedMADE.
``final_metrics.csv``
    ``metric,value`` rows: ``accuracy, precision, recall, f1, acc_<class>...,
    best_round``.
"""
import csv
import io
import json
from pathlib import Path

from .errors import ReportError

REPORT_FILE = "report.json"
ROUNDS_FILE = "rounds.csv"
FINAL_FILE = "final_metrics.csv"


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def rounds_columns(class_names):
    return ["round", *[f"acc_{c}" for c in class_names], "accuracy", "duration", "K", "residual"]


def final_columns(class_names):
    return ["accuracy", "precision", "recall", "f1", *[f"acc_{c}" for c in class_names], "best_round"]


def report_to_dict(report) -> dict:
    return {
        "config": report.config,
        "class_names": list(report.class_names),
        "rounds": [r.to_dict() for r in report.rounds],
        "best_round": report.best_round,
        "final": report.final,
        "compromised": list(report.compromised),
        "aborted": report.aborted,
        "error": report.error,
        "timing": {
            "mean_round_duration": report.mean_round_duration,
            "total_round_duration": float(sum(r.duration for r in report.rounds)),
            "wall_clock": report.wall_clock,
            "backend": report.backend,
        },
        "data_summary": report.data_summary,
    }


def rounds_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(rounds_columns(report.class_names))
    for r in report.rounds:
        w.writerow([r.round, *[_fmt(a) for a in r.per_class_accuracy], _fmt(r.accuracy),
                    _fmt(r.duration), _fmt(r.K), _fmt(r.residual)])
    return buf.getvalue()


def final_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    f = report.final
    names = final_columns(report.class_names)
    if f is None:
        values = [None] * (len(names) - 1) + [report.best_round]
    else:
        values = [f["accuracy"], f["precision"], f["recall"], f["f1"], *f["per_class_accuracy"], report.best_round]
    for n, v in zip(names, values):
        w.writerow([n, _fmt(v)])
    return buf.getvalue()


def emit_report(report, out_dir) -> list:
    out = Path(out_dir)
    paths = [out / REPORT_FILE, out / ROUNDS_FILE, out / FINAL_FILE]
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths[0].write_text(json.dumps(report_to_dict(report), indent=2))
        paths[1].write_text(rounds_csv(report))
        paths[2].write_text(final_csv(report))
    except OSError as exc:
        raise ReportError(f"cannot write report to {exc.filename or out}: {exc.strerror}") from None
    return paths


def load_report(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / REPORT_FILE
    try:
        return json.loads(p.read_text())
    except OSError as exc:
        raise ReportError(f"cannot read report {p}: {exc.strerror}") from None


def run_name(rep: dict) -> str:
    cfg = rep["config"]
    return cfg.get("name") or cfg["algorithm"]


def _data_signature(rep: dict) -> dict:
    cfg = rep["config"]
    return {"data": cfg["data"], "smote": cfg["smote"], "seed": cfg["seed"]}


def _diff(a, b, prefix=""):
    out = []
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            out.extend(_diff(a.get(k), b.get(k), f"{prefix}.{k}" if prefix else str(k)))
    elif a != b:
        out.append(f"{prefix}: {a!r} != {b!r}")
    return out


def compare_runs(report_paths, baseline_name: str) -> dict:
    """Per-class accuracy deltas and mean-round-duration ratios against a baseline run."""
    if len(report_paths) < 2:
        raise ReportError("compare needs at least two reports")
    reps = [load_report(p) for p in report_paths]
    names = [run_name(r) for r in reps]
    if len(set(names)) != len(names):
        raise ReportError(f"run names must be unique, got {names}")
    if baseline_name not in names:
        raise ReportError(f"baseline {baseline_name!r} not found; available runs: {names}")
    base = reps[names.index(baseline_name)]
    sig = _data_signature(base)
    for n, r in zip(names, reps):
        d = _diff(sig, _data_signature(r))
        if d:
            raise ReportError(f"run {n!r} has a different data configuration than {baseline_name!r}: "
                              + "; ".join(d[:10]))
    classes = base["class_names"]

    def per_class(r):
        return r["final"]["per_class_accuracy"] if r["final"] else [0.0] * len(classes)

    def overall(r):
        return r["final"]["accuracy"] if r["final"] else 0.0

    b_pc, b_acc = per_class(base), overall(base)
    b_dur = base["timing"]["mean_round_duration"]
    rows = []
    for n, r in zip(names, reps):
        pc = per_class(r)
        dur = r["timing"]["mean_round_duration"]
        rows.append({
            "run": n,
            "accuracy": overall(r),
            "accuracy_delta": overall(r) - b_acc,
            "per_class_accuracy": dict(zip(classes, pc)),
            "per_class_delta": {c: a - b for c, a, b in zip(classes, pc, b_pc)},
            "mean_round_duration": dur,
            "duration_ratio": dur / b_dur if b_dur > 0 else float("nan"),
        })
    return {"baseline": baseline_name, "classes": classes, "rows": rows}


def comparison_csv(table: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    classes = table["classes"]
    w.writerow(["run", "accuracy", "accuracy_delta", *[f"delta_{c}" for c in classes],
                "mean_round_duration", "duration_ratio"])
    for row in table["rows"]:
        w.writerow([row["run"], _fmt(row["accuracy"]), _fmt(row["accuracy_delta"]),
                    *[_fmt(row["per_class_delta"][c]) for c in classes],
                    _fmt(row["mean_round_duration"]), _fmt(row["duration_ratio"])])
    return buf.getvalue()
