"""End to end: synthesize a dataset, train a small model, evaluate, reload.

Uses a small width and a raised learning rate so the run finishes in well
under a minute; the full-size defaults follow the published hyperparameter
table instead.
"""

import json
import tempfile
from pathlib import Path

from gatemabsa.model import load_checkpoint
from gatemabsa.records import gen_synthetic
from gatemabsa.training import TrainConfig, evaluate, train_from_config

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    manifest = gen_synthetic(seed=3, n_examples=24, n_tokens=8,
                             separation=3.0, out_dir=tmp / "data")

    config = TrainConfig(
        learning_rate=1e-3,
        epochs=8,
        batch_size=4,
        dropout=0.1,
        n_heads=2,
        max_seq_len=8,
        patience=8,
        seed=3,
        model_dim=16,
        train_manifest=str(manifest),
        dev_manifest=str(manifest),
        checkpoint_out=str(tmp / "model.gmwt"),
    )

    print("epoch logs:")
    result = train_from_config(config, log_sink=None)
    for line in result.log_lines:
        print(" ", line)
    print(f"best epoch {result.best_epoch} with dev loss {result.best_dev_loss:.4f}")

    model = load_checkpoint(tmp / "model.gmwt")
    metrics = evaluate(model, manifest, split="dev")
    print("reloaded-checkpoint dev metrics:")
    print(json.dumps(metrics.to_dict(), indent=2))
