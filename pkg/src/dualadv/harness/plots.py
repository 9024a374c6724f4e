"""Plot emission: metric distributions (vector) and qualitative grids (raster).

Plots are views over the persisted CSV and map files; nothing is recomputed.
"""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .amap import read_amap

METRIC_PLOTS = ("noise_rate", "l1", "iou")


def _read_rows(run_dir: Path) -> list[dict]:
    with open(run_dir / "results.csv") as f:
        return list(csv.DictReader(f))


def emit_plots(manifest_path: str | Path, max_examples: int = 8) -> list[Path]:
    """Write one box plot per metric plus a benign/adversarial map grid."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    run_dir = Path(manifest["run_dir"])
    rows = _read_rows(run_dir)
    if not rows:
        warnings.warn("empty manifest: no plots emitted")
        return []

    plots_dir = run_dir / "plots"
    plots_dir.mkdir(exist_ok=True)
    written: list[Path] = []

    label = "{framework}/{method}/{interpreter}".format(**manifest["config"]["attack"])
    for metric in METRIC_PLOTS:
        values = [float(r[metric]) for r in rows if r[metric] != ""]
        if not values:
            continue
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.boxplot([values], tick_labels=[label])
        ax.set_ylabel(metric)
        ax.set_title(f"{metric} over {len(values)} images")
        fig.tight_layout()
        out = plots_dir / f"{metric}.svg"
        fig.savefig(out)
        plt.close(fig)
        written.append(out)

    ids = [r["id"] for r in rows[:max_examples]]
    cells = []
    for image_id in ids:
        try:
            cells.append(
                (
                    np.load(run_dir / "images" / f"{image_id}_benign.npy"),
                    read_amap(run_dir / "maps" / f"{image_id}_benign.amap"),
                    np.load(run_dir / "images" / f"{image_id}_adv.npy"),
                    read_amap(run_dir / "maps" / f"{image_id}_adv.amap"),
                )
            )
        except (FileNotFoundError, ValueError):
            continue
    if cells:
        fig, axes = plt.subplots(len(cells), 4, figsize=(8, 2 * len(cells)), squeeze=False)
        titles = ["benign", "benign map", "adversarial", "adversarial map"]
        for r, cell in enumerate(cells):
            for c, content in enumerate(cell):
                ax = axes[r][c]
                ax.imshow(content if content.ndim == 3 else content, cmap=None if content.ndim == 3 else "hot")
                ax.set_xticks([])
                ax.set_yticks([])
                if r == 0:
                    ax.set_title(titles[c], fontsize=9)
        fig.tight_layout()
        out = plots_dir / "qualitative.png"
        fig.savefig(out, dpi=120)
        plt.close(fig)
        written.append(out)
    return written
