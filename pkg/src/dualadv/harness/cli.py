"""Command-line entry points.

A flat JSON config file can predefine any flag of the invoked subcommand
(keys use underscores); explicit command-line flags win over file values.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from ..attacks import AttackConfig
from ..models import load_model

FRAMEWORK_CHOICES = click.Choice(["pgd", "cw", "stadv"])
METHOD_CHOICES = click.Choice(["adv2", "advedge", "advedge+", "advedge_plus"])
INTERPRETER_CHOICES = click.Choice(["grad", "cam", "rts", "mask"])


def _canonical_method(method: str) -> str:
    return "advedge_plus" if method == "advedge+" else method


def _load_config_file(ctx, _param, value):
    if value:
        data = json.loads(Path(value).read_text())
        ctx.default_map = {k.replace("-", "_"): v for k, v in data.items()}
    return value


def config_option(fn):
    return click.option(
        "--config",
        type=click.Path(exists=True),
        callback=_load_config_file,
        is_eager=True,
        expose_value=False,
        help="JSON file with default values for this command's flags.",
    )(fn)


@click.group()
def main():
    """Attack interpretable classifiers, evaluate, and defend."""


@main.command()
@config_option
@click.option("--out", required=True, type=click.Path())
@click.option("--n-train", default=2000, show_default=True)
@click.option("--n-test", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=12, show_default=True)
@click.option("--width", default=32, show_default=True)
def prepare(out, n_train, n_test, seed, epochs, width):
    """Synthesize the desk dataset and train the desk classifier."""
    from .data import synthesize_dataset, train_desk_model

    out = Path(out)
    synthesize_dataset(out / "data", n_train=n_train, n_test=n_test, seed=seed)
    _, acc = train_desk_model(out / "data", out / "model.pt", seed=seed, epochs=epochs, width=width)
    click.echo(f"dataset: {out / 'data'}")
    click.echo(f"model:   {out / 'model.pt'}  (test accuracy {acc:.3f})")


@main.command()
@config_option
@click.option("--framework", type=FRAMEWORK_CHOICES, default="pgd", show_default=True)
@click.option("--method", type=METHOD_CHOICES, default="adv2", show_default=True)
@click.option("--interpreter", type=INTERPRETER_CHOICES, default="grad", show_default=True)
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--n", default=10, show_default=True)
@click.option("--eps", default=0.031, show_default=True)
@click.option("--alpha", default=1.0 / 255.0, show_default=True)
@click.option("--iters", default=300, show_default=True)
@click.option("--lambda-int", default=None, type=float, help="Fixed map-loss weight (default: dynamic).")
@click.option("--delta", default=0.1, show_default=True, help="Edge binarization threshold.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--batch-size", default=32, show_default=True)
@click.option("--rts-model", default=None, type=click.Path(exists=True))
@click.option("--mask-steps", default=None, type=int)
def attack(framework, method, interpreter, model, data, n, eps, alpha, iters, lambda_int, delta, seed, out, batch_size, rts_model, mask_steps):
    """Run one attack configuration over a filtered image set."""
    from .runner import ExperimentConfig, run_experiment

    cfg = ExperimentConfig(
        model=model,
        data=data,
        out_dir=out,
        n=n,
        seed=seed,
        attack=AttackConfig(
            framework=framework,
            method=_canonical_method(method),
            interpreter=interpreter,
            epsilon=eps,
            alpha=alpha,
            iterations=iters,
            lambda_int=lambda_int,
            delta_bin=delta,
            seed=seed,
        ),
        batch_size=batch_size,
        rts_model=rts_model,
        mask_steps=mask_steps,
    )
    manifest = run_experiment(cfg)
    click.echo(json.dumps(manifest.aggregates, indent=2))
    click.echo(f"run dir: {manifest.run_dir}")


@main.command()
@config_option
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--targets", required=True, help="Comma-separated interpreter names.")
@click.option("--rts-model", default=None, type=click.Path(exists=True))
def transfer(manifest, targets, rts_model):
    """Cross-interpreter transferability: mean L1 per target interpreter."""
    from .runner import transferability_eval

    table = transferability_eval(manifest, [t.strip() for t in targets.split(",")], rts_model)
    click.echo(json.dumps(table, indent=2))


@main.command("detect-train")
@config_option
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--interpreters", default="grad,cam", show_default=True)
@click.option("--product", is_flag=True, help="Append the map-product third channel.")
@click.option("--n", default=400, show_default=True, help="Images per class (benign/adversarial).")
@click.option("--framework", type=FRAMEWORK_CHOICES, default="pgd", show_default=True)
@click.option("--method", type=METHOD_CHOICES, default="advedge", show_default=True)
@click.option("--iters", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
def detect_train(model, data, out, interpreters, product, n, framework, method, iters, seed):
    """Attack a sample set, stack maps from two interpreters, fit the detector."""
    from ..defenses import save_detector
    from .detector_pipeline import build_detector_from_attacks

    names = [s.strip() for s in interpreters.split(",")]
    detector = build_detector_from_attacks(
        model_path=model,
        data_dir=data,
        interpreter_names=names,
        with_product=product,
        n=n,
        framework=framework,
        method=_canonical_method(method),
        iterations=iters,
        seed=seed,
    )
    save_detector(out, detector)
    click.echo(f"held-out accuracy: {detector.held_out_accuracy:.3f}")
    click.echo(f"detector saved to {out}")


@main.command()
@config_option
@click.option("--detector", "detector_dir", required=True, type=click.Path(exists=True))
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--maps", "map_paths", nargs=2, required=True, type=click.Path(exists=True))
@click.option("--product", is_flag=True)
def detect(detector_dir, model, map_paths, product):
    """Score a pair of attribution maps as benign or adversarial."""
    from ..defenses import DETECTOR_CLASSES, detect as _detect, load_detector, stack_maps
    from .amap import read_amap

    handle = load_model(model)
    det = load_detector(detector_dir, handle)
    sample = stack_maps([read_amap(p) for p in map_paths], with_product=product)
    label, confidence = _detect(det, sample)
    click.echo(f"{DETECTOR_CLASSES[label]} (confidence {confidence:.3f})")


@main.command("robust-train")
@config_option
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--gamma", default=1.0, show_default=True)
@click.option("--eps-train", default=8.0 / 255.0, show_default=True)
@click.option("--inner-steps", default=7, show_default=True)
@click.option("--epochs", default=12, show_default=True)
@click.option("--width", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
def robust_train_cmd(data, out, gamma, eps_train, inner_steps, epochs, width, seed):
    """Train a classifier against worst-case interpretation discrepancy."""
    from ..defenses import RobustTrainConfig, robust_train
    from ..models import SmallConvNet, save_model
    from .data import NUM_CLASSES, load_arrays

    x_train, y_train = load_arrays(Path(data) / "train")
    module = SmallConvNet(num_classes=NUM_CLASSES, in_channels=3, width=width)
    cfg = RobustTrainConfig(
        gamma=gamma, epsilon_train=eps_train, inner_steps=inner_steps, epochs=epochs, seed=seed
    )
    history = robust_train(module, x_train, y_train, cfg)
    size = x_train.shape[1]
    save_model(
        out,
        module,
        arch="small_convnet",
        arch_kwargs={"num_classes": NUM_CLASSES, "in_channels": 3, "width": width},
        meta={"num_classes": NUM_CLASSES, "input_shape": (size, size, 3), "feature_tap": "act3"},
    )
    click.echo(f"final training loss: {history[-1]:.4f}")
    click.echo(f"model saved to {out}")


@main.command("rts-train")
@config_option
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--epochs", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True)
def rts_train_cmd(model, data, out, epochs, seed):
    """Train the real-time saliency masker for a classifier."""
    from ..interpreters import rts_train, save_rts
    from .data import load_arrays

    handle = load_model(model)
    x_train, y_train = load_arrays(Path(data) / "train")
    rts = rts_train(handle, x_train, y_train, epochs=epochs, seed=seed)
    save_rts(out, rts)
    click.echo(f"final masker loss: {rts.loss_history[-1]:.4f}")
    click.echo(f"rts model saved to {out}")


@main.group()
def edges():
    """Edge-map utilities."""


@edges.command("dump")
@config_option
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--binary", is_flag=True, help="Binarize before writing.")
@click.option("--delta", default=0.1, show_default=True)
def edges_dump(image_path, out, binary, delta):
    """Write the Sobel edge-weight matrix of an image as an AMAP file."""
    from PIL import Image as PilImage

    from ..edges import binarize_edges, sobel_edge_weights
    from .amap import write_amap

    arr = np.asarray(PilImage.open(image_path), dtype=np.float32) / 255.0
    edge = sobel_edge_weights(arr)
    if binary:
        edge = binarize_edges(edge, delta)
    write_amap(out, edge.weights)
    click.echo(f"edge map ({edge.mode}) written to {out}")


@main.command()
@config_option
@click.option("--manifest", required=True, type=click.Path(exists=True))
def plots(manifest):
    """Render metric distributions and qualitative grids for a run."""
    from .plots import emit_plots

    written = emit_plots(manifest)
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()
