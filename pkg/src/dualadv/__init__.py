"""dualadv: adversarial examples that fool a classifier while preserving its
attribution maps, with edge-gated perturbation variants, a full metric
suite, and two countermeasures (multi-interpreter detection and
interpretation-robust training)."""

__version__ = "0.1.0"

from .core import ClassifierHandle, Image, NormBallSpec, classify, input_gradient, project_linf

__all__ = [
    "ClassifierHandle",
    "Image",
    "NormBallSpec",
    "__version__",
    "classify",
    "input_gradient",
    "project_linf",
]
