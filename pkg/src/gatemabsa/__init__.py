"""Gated matrix-LSTM classifier for multimodal aspect-based sentiment.

Three stacked recurrent blocks (multimodal fusion, syntax, semantics) share
a log-domain decay pipeline; the package also ships the feature-record
format, a reverse-mode tensor engine, a training loop, and a CLI.
"""

from .autodiff import Tensor, tensor
from .adapter import ImageProjParams, ModelInputs, build_inputs, pad_or_truncate
from .blocks import FuseParams, SemParams, SynParams
from .decay import DecayMatrices, HeadConfig, QKVProjParams
from .model import (GateMabsaModel, forward, init_model, load_checkpoint,
                    named_parameters, predict, save_checkpoint)
from .records import (FeatureRecord, ManifestEntry, gen_synthetic, load_record,
                      load_split, read_record, save_record, synthesize_records,
                      validate_record, write_record)
from .training import (AdamState, EarlyStopper, Metrics, TrainConfig, adam_step,
                       evaluate, evaluate_records, train, train_from_config)

__version__ = "0.1.0"

__all__ = [
    "Tensor", "tensor", "ImageProjParams", "ModelInputs", "build_inputs",
    "pad_or_truncate", "FuseParams", "SemParams", "SynParams", "DecayMatrices",
    "HeadConfig", "QKVProjParams", "GateMabsaModel", "forward", "init_model",
    "load_checkpoint", "named_parameters", "predict", "save_checkpoint",
    "FeatureRecord", "ManifestEntry", "gen_synthetic", "load_record",
    "load_split", "read_record", "save_record", "synthesize_records",
    "validate_record", "write_record", "AdamState", "EarlyStopper", "Metrics",
    "TrainConfig", "adam_step", "evaluate", "evaluate_records", "train",
    "train_from_config",
]
