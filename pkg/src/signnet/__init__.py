"""signnet: from-scratch neural network toolkit for sign-alphabet images.

Everything numeric (layer kernels, losses, optimizers, the PRNG) is
implemented directly in this package; numpy supplies array storage and
elementwise arithmetic only.
"""

__version__ = "0.1.0"

from .config_text import ModelGraph, parse_model_config, serialize_model_config
from .data import ManifestEntry, scan_manifest, stratified_split
from .models import Model, build_preset, load_checkpoint, save_checkpoint
from .tensor import Prng, matmul, set_deterministic
from .training import (
    TrainConfig,
    TrainReport,
    bench_inference,
    evaluate,
    infer_single,
    train_run,
)

__all__ = [
    "ModelGraph",
    "parse_model_config",
    "serialize_model_config",
    "ManifestEntry",
    "scan_manifest",
    "stratified_split",
    "Model",
    "build_preset",
    "load_checkpoint",
    "save_checkpoint",
    "Prng",
    "matmul",
    "set_deterministic",
    "TrainConfig",
    "TrainReport",
    "bench_inference",
    "evaluate",
    "infer_single",
    "train_run",
]
