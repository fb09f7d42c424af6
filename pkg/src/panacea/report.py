"""Report serialization: flat CSV (one row per layer x arch) and a
self-describing JSON document embedding the hardware config and seed, plus
optional rendered figures."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

from .figures import energy_breakdown_figure, sparsity_figure, throughput_figure
from .gemm import WorkloadCounters
from .sim import HardwareConfig, SimLayerReport

CSV_COLUMNS = [
    "arch", "m", "k", "n", "rho_w", "rho_x", "comp_mode", "cycles",
    "dwo_busy_cycles", "swo_busy_cycles", "dtp_enabled", "energy_pj",
    "effective_tops", "tops_per_watt_relative",
    "mults", "adds", "dram_nibbles", "sram_read_nibbles", "sram_write_nibbles",
    "compensation_mults", "compensation_adds", "rle_index_nibbles",
]


def report_rows(reports: list[SimLayerReport]) -> list[dict]:
    rows = []
    for r in reports:
        d = r.to_dict()
        d.update(d.pop("counters"))
        d.pop("seed", None)
        d["dtp_enabled"] = int(d["dtp_enabled"])
        rows.append({k: d[k] for k in CSV_COLUMNS})
    return rows


def write_csv(reports: list[SimLayerReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(report_rows(reports))


def write_json(
    reports: list[SimLayerReport], cfg: HardwareConfig, seed: int, path, extra: dict | None = None
) -> None:
    doc = {
        "config": asdict(cfg),
        "seed": seed,
        "entries": [r.to_dict() for r in reports],
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_json(path) -> tuple[list[SimLayerReport], dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = []
    for e in doc["entries"]:
        e = dict(e)
        e["counters"] = WorkloadCounters(**e["counters"])
        entries.append(SimLayerReport(**e))
    return entries, doc


def write_report(
    reports: list[SimLayerReport],
    cfg: HardwareConfig,
    seed: int,
    outdir,
    figures: bool = True,
) -> list[Path]:
    """Write the canonical CSV + JSON artifacts and, by default, rendered
    figures alongside them. Returns the written paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.csv", out / "report.json"]
    write_csv(reports, paths[0])
    write_json(reports, cfg, seed, paths[1])
    if figures and reports:
        p_thr = out / "throughput.png"
        p_nrg = out / "energy_breakdown.png"
        p_sp = out / "sparsity.png"
        throughput_figure(reports, p_thr)
        energy_breakdown_figure(reports, cfg.energy_table, p_nrg)
        seen = {}
        for r in reports:
            seen.setdefault((r.m, r.k, r.n, round(r.rho_w, 6), round(r.rho_x, 6)), r)
        layers = list(seen.values())
        sparsity_figure(
            [f"{r.m}x{r.k}x{r.n}@{i}" for i, r in enumerate(layers)],
            [r.rho_w for r in layers],
            [r.rho_x for r in layers],
            p_sp,
        )
        paths += [p_thr, p_nrg, p_sp]
    return paths
