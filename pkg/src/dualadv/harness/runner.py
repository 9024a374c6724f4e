"""Experiment orchestration: attack a filtered image set, score it, persist.

Each invocation appends a fresh ``run-NNNN`` directory under the configured
output root, so prior runs are never touched. The CSV is the single source
of truth for the per-image metric values; plots only re-render it.
"""

from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .. import __version__
from ..attacks import AttackConfig, AttackResult, draw_targets, run_attack
from ..core import ClassifierHandle, Image
from ..interpreters import MaskSolveConfig, get_interpreter, load_rts
from ..interpreters.common import AttributionMap
from ..metrics import MetricReport, build_report
from ..models import load_model
from .amap import write_amap
from .data import load_dataset

CSV_HEADER = [
    "id",
    "framework",
    "method",
    "interpreter",
    "success",
    "y_t",
    "confidence",
    "l1",
    "iou",
    "ssim",
    "noise_rate",
    "time_s",
]

# timing columns are excluded from determinism comparisons
TIMING_COLUMNS = ("time_s",)


@dataclass
class ExperimentConfig:
    model: str
    data: str
    out_dir: str
    n: int = 10
    seed: int = 0
    attack: AttackConfig = field(default_factory=AttackConfig)
    iou_bin_threshold: float = 0.5
    batch_size: int = 32
    rts_model: str | None = None
    mask_steps: int | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if isinstance(d.get("attack"), dict):
            d["attack"] = AttackConfig(**d["attack"])
        return cls(**d)


@dataclass
class RunManifest:
    config: dict
    environment: dict
    per_image: list
    aggregates: dict
    total_wall_time_s: float
    run_dir: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def environment_fingerprint() -> dict:
    return {
        "dualadv": __version__,
        "python": platform.python_version(),
        "torch": torch.__version__,
        "numpy": np.__version__,
        "platform": platform.platform(),
    }


def next_run_dir(root: str | Path) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    i = 0
    while (root / f"run-{i:04d}").exists():
        i += 1
    run_dir = root / f"run-{i:04d}"
    run_dir.mkdir()
    return run_dir


def build_interpreter(cfg: ExperimentConfig, handle: ClassifierHandle):
    name = cfg.attack.interpreter
    rts_model = None
    mask_cfg = None
    if name == "rts":
        if not cfg.rts_model:
            raise ValueError("rts interpreter needs --rts-model (see `dualadv rts-train`)")
        rts_model = load_rts(cfg.rts_model, handle)
    if name == "mask":
        mask_cfg = MaskSolveConfig(steps=cfg.mask_steps) if cfg.mask_steps else MaskSolveConfig()
    return get_interpreter(name, rts_model=rts_model, mask_config=mask_cfg)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.8f}"
    return str(value)


def write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in CSV_HEADER])


def _error_result(im: Image, cfg: AttackConfig, message: str) -> AttackResult:
    return AttackResult(
        x_adv=Image(im.pixels, id=im.id, true_label=im.true_label),
        success=False,
        target_class=-1,
        confidence=0.0,
        m_adv=None,
        trace=[],
        wall_time_s=0.0,
        image_id=im.id,
        true_label=im.true_label,
        final_label=-1,
        framework=cfg.framework,
        method=cfg.method,
        interpreter=cfg.interpreter,
        error=message,
    )


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    t_start = time.perf_counter()
    handle = load_model(cfg.model)
    images = load_dataset(cfg.data, cfg.n, cfg.seed, handle)
    interpreter = build_interpreter(cfg, handle)

    y0 = np.array([im.true_label for im in images])
    targets = draw_targets(y0, handle.num_classes, cfg.attack.seed)

    results: list[AttackResult] = []
    benign_maps: list[AttributionMap | None] = []
    for start in range(0, len(images), cfg.batch_size):
        batch = images[start : start + cfg.batch_size]
        batch_targets = targets[start : start + cfg.batch_size]
        x0 = handle.to_batch(batch)
        with torch.enable_grad():
            m0 = interpreter.maps(handle, x0, torch.as_tensor(y0[start : start + cfg.batch_size]))
        benign_maps.extend(
            AttributionMap(m.detach().numpy(), interpreter=interpreter.name, source_image_id=im.id)
            for m, im in zip(m0, batch)
        )
        try:
            results.extend(run_attack(handle, interpreter, batch, cfg.attack, targets=batch_targets))
        except Exception as exc:  # per-image failures never abort the run
            results.extend(_error_result(im, cfg.attack, repr(exc)) for im in batch)

    report = build_report(images, benign_maps, results, cfg.iou_bin_threshold)

    run_dir = next_run_dir(cfg.out_dir)
    write_csv(run_dir / "results.csv", report.rows)
    with open(run_dir / "results.jsonl", "w") as f:
        for row in report.rows:
            f.write(json.dumps(row) + "\n")
    (run_dir / "images").mkdir(exist_ok=True)
    for im, m0, r in zip(images, benign_maps, results):
        if m0 is not None:
            write_amap(run_dir / "maps" / f"{im.id}_benign.amap", m0.values)
        if r.m_adv is not None:
            write_amap(run_dir / "maps" / f"{im.id}_adv.amap", r.m_adv.values)
        np.save(run_dir / "images" / f"{im.id}_benign.npy", im.pixels)
        np.save(run_dir / "images" / f"{im.id}_adv.npy", r.x_adv.pixels)

    manifest = RunManifest(
        config=cfg.to_dict(),
        environment=environment_fingerprint(),
        per_image=[
            {
                "id": r.image_id,
                "success": r.success,
                "y_t": r.target_class,
                "true_label": r.true_label,
                "final_label": r.final_label,
                "confidence": r.confidence,
                "error": r.error,
            }
            for r in results
        ],
        aggregates={
            "attack_success_rate": report.attack_success_rate,
            "mean_misclassification_confidence": report.mean_misclassification_confidence,
            "mean_l1_map_distance": report.mean_l1_map_distance,
            "mean_iou": report.mean_iou,
            "mean_noise_rate": report.mean_noise_rate,
            "mean_wall_time_s": report.mean_wall_time_s,
        },
        total_wall_time_s=time.perf_counter() - t_start,
        run_dir=str(run_dir),
    )
    (run_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def transferability_eval(
    manifest_path: str | Path,
    target_interpreters: list[str],
    rts_model_path: str | None = None,
) -> dict:
    """Mean L1 between target-interpreter maps of adversarial and benign images.

    Maps are recomputed from the persisted images at each input's predicted
    class; the source interpreter evaluated on itself reproduces the run's
    own mean L1 distance.
    """
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    run_dir = Path(manifest["run_dir"])
    cfg = ExperimentConfig.from_dict(manifest["config"])
    handle = load_model(cfg.model)

    ids = [row["id"] for row in manifest["per_image"]]
    benign = np.stack([np.load(run_dir / "images" / f"{i}_benign.npy") for i in ids])
    adv = np.stack([np.load(run_dir / "images" / f"{i}_adv.npy") for i in ids])

    x_ben = handle.to_batch(list(benign))
    x_adv = handle.to_batch(list(adv))
    with torch.no_grad():
        y_ben = handle.forward_probs(x_ben).argmax(dim=1)
        y_adv = handle.forward_probs(x_adv).argmax(dim=1)

    table: dict[str, float] = {}
    for name in target_interpreters:
        rts = load_rts(rts_model_path, handle) if (name == "rts" and rts_model_path) else None
        interp = get_interpreter(name, rts_model=rts)
        with torch.enable_grad():
            m_ben = interp.maps(handle, x_ben, y_ben).detach().numpy()
            m_adv = interp.maps(handle, x_adv, y_adv).detach().numpy()
        table[name] = float(np.mean(np.abs(m_adv.astype(np.float64) - m_ben.astype(np.float64))))

    out = {
        "source_interpreter": cfg.attack.interpreter,
        "targets": table,
        "n": len(ids),
    }
    (run_dir / "transfer.json").write_text(json.dumps(out, indent=2))
    return out
