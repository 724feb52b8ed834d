"""Tables (stdout + CSV) and figures from metrics and bench JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .errors import ProvenanceError, SchemaError

COLUMNS = ("mode", "P@N", "PBT@N", "PTB@N", "counter_speedup", "wall_speedup")


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing field '{key}'", field=key)
    return obj[key]


def build_rows(metrics: Sequence[dict], bench: dict | None, n: int = 10) -> list[dict]:
    """One row per mode: metrics first (in order), then bench-only modes."""
    hashes = {m.get("config_hash") for m in metrics if m.get("config_hash")}
    if len(hashes) > 1:
        raise ProvenanceError(f"metrics come from different configs: {sorted(hashes)}")
    modes = dict(_need(bench, "modes", "bench")) if bench else {}
    if modes:
        base = modes.get("concat") or next(iter(modes.values()))
        for name, res in modes.items():
            _need(res, "attention_pairs", f"bench mode {name}")
            _need(res, "latency_mean", f"bench mode {name}")
        speed = {name: (base["attention_pairs"] / res["attention_pairs"],
                        base["latency_mean"] / res["latency_mean"]) for name, res in modes.items()}
    else:
        speed = {}
    rows = []
    seen = set()
    for m in metrics:
        label = _need(m, "label", "metrics")
        tables = {k: _need(m, k, f"metrics '{label}'") for k in ("P", "PBT", "PTB")}
        key = str(n)
        for name, table in tables.items():
            if key not in table:
                raise SchemaError(f"metrics '{label}': no {name}@{n}", field=f"{name}@{n}")
        cs, ws = speed.get(label, (None, None))
        rows.append({"mode": label, "P@N": tables["P"][key], "PBT@N": tables["PBT"][key],
                     "PTB@N": tables["PTB"][key], "counter_speedup": cs, "wall_speedup": ws})
        seen.add(label)
    for name, (cs, ws) in speed.items():
        if name not in seen:
            rows.append({"mode": name, "P@N": None, "PBT@N": None, "PTB@N": None,
                         "counter_speedup": cs, "wall_speedup": ws})
    return rows


def _fmt(value, kind: str) -> str:
    if value is None:
        return "-"
    if kind == "speed":
        return f"{value:.2f}x"
    return f"{100 * value:.1f}"


def render_table(rows: Sequence[dict], n: int = 10) -> str:
    header = ["mode", f"P@{n}", f"PBT@{n}", f"PTB@{n}", "counter speedup", "wall speedup"]
    widths = [14, 8, 8, 8, 16, 13]
    lines = ["".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    lines.append("-" * sum(widths))
    for r in rows:
        cells = [str(r["mode"]), _fmt(r["P@N"], "pct"), _fmt(r["PBT@N"], "pct"), _fmt(r["PTB@N"], "pct"),
                 _fmt(r["counter_speedup"], "speed"), _fmt(r["wall_speedup"], "speed")]
        lines.append("".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths))))
    return "\n".join(lines)


def write_csv(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([r["mode"]] + ["" if r[c] is None else repr(float(r[c])) for c in COLUMNS[1:]])


def read_csv(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: (v if k == "mode" else (float(v) if v else None)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def load_metrics(paths: Sequence[str | Path]) -> list[dict]:
    out = []
    for p in paths:
        data = json.loads(Path(p).read_text(encoding="utf-8"))
        if isinstance(data, dict) and "reports" in data:
            for rep in data["reports"]:
                rep.setdefault("config_hash", data.get("config_hash"))
                out.append(rep)
        elif isinstance(data, list):
            out.extend(data)
        else:
            out.append(data)
    return out


def cmd_report(metrics_paths: Sequence[str | Path], bench_path: str | Path | None, out_dir: str | Path,
               n: int = 10, figures: bool = True) -> tuple[str, list[Path]]:
    """Render the table, write ``report.csv`` and figures into ``out_dir``."""
    from . import plotting

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = load_metrics(metrics_paths)
    bench = json.loads(Path(bench_path).read_text(encoding="utf-8")) if bench_path else None
    rows = build_rows(metrics, bench, n)
    table = render_table(rows, n)
    written = [out_dir / "report.csv"]
    write_csv(rows, written[0])
    if figures:
        if bench:
            written.append(plotting.plot_nd_sweep(bench, out_dir / "speedup_vs_nd.png"))
            written.append(plotting.plot_k_sweep(bench, out_dir / "speedup_vs_k.png"))
        if metrics:
            written.append(plotting.plot_p_at_n(metrics, out_dir / "p_at_n.png"))
    return table, written
