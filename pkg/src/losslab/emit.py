"""Plain-text result files: surfaces, training series and comparison reports.

Floats are written with ``repr`` so files round-trip exactly and repeated
deterministic runs produce byte-identical output. A diverged grid point is
kept, with ``inf`` loss.
"""
from __future__ import annotations

import json

SURFACE_HEADER = "alpha,beta,train_loss,train_acc,test_loss,test_acc"
SERIES_HEADER = "epoch,train_loss,train_acc,test_acc,dist_from_init,weight_norm,optimizer"


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def surface_lines(samples) -> list[str]:
    lines = [SURFACE_HEADER]
    for s in samples:
        lines.append(",".join([_num(s.alpha), _num(s.beta), _num(s.train_loss), _num(s.train_acc),
                               _num(s.test_loss), _num(s.test_acc)]))
    return lines


def series_lines(metrics) -> list[str]:
    lines = [SERIES_HEADER]
    for m in metrics:
        lines.append(",".join([str(m.epoch), _num(m.train_loss), _num(m.train_acc), _num(m.test_acc),
                               _num(m.dist_from_init), _num(m.weight_norm), m.optimizer]))
    return lines


def _write(lines: list[str], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_surface(samples, path) -> None:
    _write(surface_lines(samples), path)


def emit_series(metrics, path) -> None:
    _write(series_lines(metrics), path)


def emit_report(report, path) -> None:
    """``report`` is a ComparisonReport, a dict, or a list of either."""
    def plain(r):
        return r.to_dict() if hasattr(r, "to_dict") else r

    body = [plain(r) for r in report] if isinstance(report, list) else plain(report)
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(body, sort_keys=True, indent=2) + "\n")


def read_surface(path) -> list[dict]:
    """Parse a surface file back into dicts of floats (blank fields become None)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            vals = line.rstrip("\n").split(",")
            rows.append({k: (float(v) if v != "" else None) for k, v in zip(header, vals)})
    return rows
