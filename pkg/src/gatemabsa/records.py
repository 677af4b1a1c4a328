"""Multimodal feature records: the GMAB binary format, validation, and
synthetic dataset generation.

A record packages one classified example as precomputed dense features:
per-token sentence encodings, per-token aspect encodings, a 7x7 image
feature grid flattened to 49 rows, a symmetric dependency adjacency with
self-loops, the aspect's token positions (possibly empty for implicit
aspects), and a 3-class polarity label.

On disk all feature blocks are little-endian float32; in memory they are
widened to float64. Round-trips are bit-exact for values representable in
float32 (everything this package itself produces). Readers are pure and
safe to run concurrently; writers need exclusive access to their sink.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"GMAB"
FORMAT_VERSION = 1
TOKEN_DIM = 768
IMAGE_CELLS = 49
IMAGE_DIM = 2048
NUM_CLASSES = 3
LABEL_NAMES = ("negative", "neutral", "positive")
DEFAULT_MAX_SEQ_LEN = 128


class RecordError(Exception):
    """Base class for record encode/decode failures."""


class BadMagicError(RecordError):
    pass


class BadVersionError(RecordError):
    pass


class TruncatedError(RecordError):
    """Stream ended early; ``offset`` is where the missing bytes start."""

    def __init__(self, offset: int, wanted: int):
        super().__init__(f"stream truncated at offset {offset} (needed {wanted} more bytes)")
        self.offset = offset


class RecordValidationError(RecordError):
    def __init__(self, violations: list[str]):
        super().__init__("invalid record: " + "; ".join(violations))
        self.violations = violations


@dataclass
class FeatureRecord:
    """One (sentence, image, aspect, label) example as dense features."""

    id: str
    n_tokens: int
    token_feats: np.ndarray      # (n_tokens, 768)
    aspect_positions: tuple[int, ...]  # sorted, possibly empty
    aspect_feats: np.ndarray     # (a, 768), a >= 1
    image_grid: np.ndarray       # (49, 2048)
    adjacency: np.ndarray        # (n_tokens, n_tokens), 0/1, symmetric, unit diagonal
    label: int                   # 0 negative, 1 neutral, 2 positive


def validate_record(record: FeatureRecord,
                    max_seq_len: int = DEFAULT_MAX_SEQ_LEN) -> list[str]:
    """Check every record invariant; an empty list means the record is valid."""
    violations: list[str] = []
    n = record.n_tokens
    if n < 1:
        violations.append("n_tokens must be at least 1")
    if n > max_seq_len:
        violations.append(f"n_tokens {n} exceeds max_seq_len {max_seq_len}")
    if record.token_feats.shape != (n, TOKEN_DIM):
        violations.append(
            f"token_feats shape {record.token_feats.shape} != ({n}, {TOKEN_DIM})")
    if record.aspect_feats.ndim != 2 or record.aspect_feats.shape[0] < 1 \
            or record.aspect_feats.shape[1] != TOKEN_DIM:
        violations.append(
            f"aspect_feats shape {record.aspect_feats.shape} invalid (need a x {TOKEN_DIM}, a >= 1)")
    if record.image_grid.shape != (IMAGE_CELLS, IMAGE_DIM):
        violations.append(
            f"image_grid shape {record.image_grid.shape} != ({IMAGE_CELLS}, {IMAGE_DIM})")
    if record.adjacency.shape != (n, n):
        violations.append(f"adjacency shape {record.adjacency.shape} != ({n}, {n})")
    else:
        adj = record.adjacency
        if not np.isin(adj, (0.0, 1.0)).all():
            violations.append("adjacency entries must be 0 or 1")
        if not np.array_equal(adj, adj.T):
            violations.append("adjacency not symmetric")
        if not (np.diag(adj) == 1.0).all():
            violations.append("adjacency diagonal must be all ones")
    for pos in record.aspect_positions:
        if not 0 <= pos < n:
            violations.append(f"aspect position {pos} outside [0, {n})")
            break
    if list(record.aspect_positions) != sorted(set(record.aspect_positions)):
        violations.append("aspect positions must be sorted and unique")
    if not 0 <= record.label < NUM_CLASSES:
        violations.append(f"label {record.label} outside [0, {NUM_CLASSES})")
    for name in ("token_feats", "aspect_feats", "image_grid"):
        if not np.isfinite(getattr(record, name)).all():
            violations.append(f"{name} contains non-finite values")
    return violations


def records_equal(a: FeatureRecord, b: FeatureRecord) -> bool:
    return (a.id == b.id and a.n_tokens == b.n_tokens and a.label == b.label
            and a.aspect_positions == b.aspect_positions
            and np.array_equal(a.token_feats, b.token_feats)
            and np.array_equal(a.aspect_feats, b.aspect_feats)
            and np.array_equal(a.image_grid, b.image_grid)
            and np.array_equal(a.adjacency, b.adjacency))


# -- binary encoding ----------------------------------------------------------

def write_record(record: FeatureRecord, sink) -> int:
    """Serialize one record to a binary sink; returns the byte count.

    The record must satisfy every invariant. Feature blocks are stored as
    float32, so values that are not float32-representable lose precision.
    """
    violations = validate_record(record)
    if violations:
        raise RecordValidationError(violations)
    n = record.n_tokens
    a = record.aspect_feats.shape[0]
    id_bytes = record.id.encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<IIIII", FORMAT_VERSION, n, a, record.label, len(id_bytes)),
        id_bytes,
        struct.pack("<I", len(record.aspect_positions)),
        np.asarray(record.aspect_positions, dtype="<u4").tobytes(),
        record.token_feats.astype("<f4").tobytes(),
        record.aspect_feats.astype("<f4").tobytes(),
        record.image_grid.astype("<f4").tobytes(),
        record.adjacency.astype(np.uint8).tobytes(),
    ]
    blob = b"".join(parts)
    sink.write(blob)
    return len(blob)


class _Cursor:
    def __init__(self, source):
        self._buf = source.read()
        self.offset = 0

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self._buf):
            raise TruncatedError(self.offset, count - (len(self._buf) - self.offset))
        out = self._buf[self.offset:self.offset + count]
        self.offset += count
        return out


def read_record(source) -> FeatureRecord:
    """Decode and fully validate one record from a binary source."""
    cur = _Cursor(source)
    magic = cur.take(4)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, n, a, label, id_len = struct.unpack("<IIIII", cur.take(20))
    if version != FORMAT_VERSION:
        raise BadVersionError(f"unsupported format version {version}")
    rec_id = cur.take(id_len).decode("utf-8")
    (n_pos,) = struct.unpack("<I", cur.take(4))
    positions = tuple(
        int(p) for p in np.frombuffer(cur.take(4 * n_pos), dtype="<u4"))
    token_feats = np.frombuffer(
        cur.take(4 * n * TOKEN_DIM), dtype="<f4").astype(np.float64).reshape(n, TOKEN_DIM)
    aspect_feats = np.frombuffer(
        cur.take(4 * a * TOKEN_DIM), dtype="<f4").astype(np.float64).reshape(a, TOKEN_DIM)
    image_grid = np.frombuffer(
        cur.take(4 * IMAGE_CELLS * IMAGE_DIM), dtype="<f4").astype(np.float64
        ).reshape(IMAGE_CELLS, IMAGE_DIM)
    adjacency = np.frombuffer(
        cur.take(n * n), dtype=np.uint8).astype(np.float64).reshape(n, n)
    record = FeatureRecord(
        id=rec_id, n_tokens=n, token_feats=token_feats,
        aspect_positions=positions, aspect_feats=aspect_feats,
        image_grid=image_grid, adjacency=adjacency, label=label)
    violations = validate_record(record)
    if violations:
        raise RecordValidationError(violations)
    return record


def save_record(record: FeatureRecord, path: str | Path) -> int:
    with open(path, "wb") as fh:
        return write_record(record, fh)


def load_record(path: str | Path) -> FeatureRecord:
    with open(path, "rb") as fh:
        return read_record(fh)


# -- manifests ----------------------------------------------------------------

@dataclass
class ManifestEntry:
    path: str
    split: str  # "train" | "dev" | "test"


def save_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    payload = [{"path": e.path, "split": e.split} for e in entries]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    payload = json.loads(Path(path).read_text())
    return [ManifestEntry(path=item["path"], split=item["split"]) for item in payload]


def load_split(manifest_path: str | Path, split: str | None = None) -> list[FeatureRecord]:
    """Load and validate the records of one split (all splits when None).

    Relative record paths are resolved against the manifest's directory.
    """
    base = Path(manifest_path).parent
    out = []
    for entry in load_manifest(manifest_path):
        if split is not None and entry.split != split:
            continue
        p = Path(entry.path)
        if not p.is_absolute():
            p = base / p
        out.append(load_record(p))
    return out


# -- synthetic data -----------------------------------------------------------

def _class_direction(label: int, dim: int, width: int = 4) -> np.ndarray:
    """Deterministic unit vector for one class, confined to low feature dims."""
    v = np.zeros(dim)
    v[label * width:(label + 1) * width] = 1.0 / np.sqrt(width)
    return v


def synthesize_records(seed: int, n_examples: int, n_tokens: int,
                       separation: float) -> list[FeatureRecord]:
    """Deterministic synthetic records with a tunable class signal.

    Tokens form a random chain dependency tree. Each example designates one
    aspect token; the chain neighbours of that token carry a class-specific
    signal direction scaled by ``separation`` on top of unit Gaussian noise.
    Half of the examples (alternating) also carry the class signal in the
    image grid; the other half get pure image noise. Labels cycle through
    the three classes, so they are balanced. With separation 0 the features
    carry no label information at all.
    """
    if n_tokens < 2:
        raise ValueError("synthetic records need n_tokens >= 2")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    rng = np.random.default_rng(seed)
    text_dirs = [_class_direction(c, TOKEN_DIM) for c in range(NUM_CLASSES)]
    image_dirs = [_class_direction(c, IMAGE_DIM) for c in range(NUM_CLASSES)]
    aspect_marker = _class_direction(NUM_CLASSES, TOKEN_DIM)  # class-independent

    out = []
    for idx in range(n_examples):
        label = idx % NUM_CLASSES
        order = rng.permutation(n_tokens)
        adjacency = np.eye(n_tokens)
        for i in range(n_tokens - 1):
            adjacency[order[i], order[i + 1]] = 1.0
            adjacency[order[i + 1], order[i]] = 1.0
        chain_slot = int(rng.integers(n_tokens))
        aspect_pos = int(order[chain_slot])
        neighbours = [int(order[j]) for j in (chain_slot - 1, chain_slot + 1)
                      if 0 <= j < n_tokens]

        token_feats = rng.standard_normal((n_tokens, TOKEN_DIM))
        for j in neighbours:
            token_feats[j] += separation * text_dirs[label]
        token_feats[aspect_pos] += 2.0 * aspect_marker

        aspect_feats = (aspect_marker + 0.1 * rng.standard_normal(TOKEN_DIM)).reshape(1, -1)

        image_grid = rng.standard_normal((IMAGE_CELLS, IMAGE_DIM))
        if idx % 2 == 0:
            image_grid += separation * image_dirs[label]

        record = FeatureRecord(
            id=f"synth-{seed}-{idx:05d}",
            n_tokens=n_tokens,
            token_feats=token_feats.astype(np.float32).astype(np.float64),
            aspect_positions=(aspect_pos,),
            aspect_feats=aspect_feats.astype(np.float32).astype(np.float64),
            image_grid=image_grid.astype(np.float32).astype(np.float64),
            adjacency=adjacency,
            label=label,
        )
        out.append(record)
    return out


def gen_synthetic(seed: int, n_examples: int, n_tokens: int, separation: float,
                  out_dir: str | Path, dev_every: int = 4) -> Path:
    """Write a synthetic dataset plus manifest; returns the manifest path.

    Every ``dev_every``-th record goes to the dev split, the rest to train.
    The record stream itself does not depend on the split assignment.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = synthesize_records(seed, n_examples, n_tokens, separation)
    entries = []
    for idx, record in enumerate(records):
        name = f"{record.id}.gmab"
        save_record(record, out_dir / name)
        split = "dev" if dev_every > 0 and idx % dev_every == dev_every - 1 else "train"
        entries.append(ManifestEntry(path=name, split=split))
    manifest_path = out_dir / "manifest.json"
    save_manifest(entries, manifest_path)
    return manifest_path
