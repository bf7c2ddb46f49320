"""Datasets of masked pairs, record splits, CSV files and weight files."""

import hashlib
import os
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .leads import LEAD_NAMES, N_LEADS, EcgRecord, InvalidInputError
from .masking import MaskConfig, apply_mask, mask_catalog, mask_seed, primer_mask

WEIGHTS_MAGIC = b"ECGR"
WEIGHTS_VERSION = 1


# -- dataset -------------------------------------------------------------------

@dataclass
class DatasetPair:
    """One (masked input, target) training example.

    The masked input is rebuilt on access from the target, the mask
    configuration and ``noise_seed``, so a dataset costs no more memory than
    its records. ``target`` may be ``None`` for metadata-only datasets.
    """

    source_id: str
    config: MaskConfig
    noise_seed: int
    target: object = None

    @property
    def config_name(self):
        return self.config.name

    @property
    def masked(self):
        if self.target is None:
            raise InvalidInputError(f"pair {self.source_id}/{self.config_name} carries no signal")
        mask = primer_mask(self.config, self.target.n_samples)
        return apply_mask(self.target, mask, rng_seed=self.noise_seed)


def build_dataset(records, seed=0, catalog=None):
    """Cross every record with the mask catalog (record-major, catalog order).

    Parameters
    ----------
    records : sequence of EcgRecord or str
        Strings are treated as record ids and give metadata-only pairs.
    seed : int
        Fixes each pair's noise fill.
    """
    catalog = mask_catalog() if catalog is None else list(catalog)
    out = []
    for i, rec in enumerate(records):
        rid = rec if isinstance(rec, str) else rec.id
        target = None if isinstance(rec, str) else rec
        for cfg in catalog:
            out.append(DatasetPair(rid, cfg, mask_seed(seed, i, cfg.name), target))
    return out


def split_fraction(record_id, salt=""):
    """Position of an id in [0, 1), from its SHA-256 digest."""
    h = hashlib.sha256((salt + str(record_id)).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") / 2.0 ** 64


def split_ids(ids, fractions=(0.7, 0.15, 0.15), salt=""):
    """Assign ids to train/val/test by hash, independent of list order."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ValueError("fractions must be three non-negative numbers summing to 1")
    edges = (fractions[0], fractions[0] + fractions[1])
    out = {"train": [], "val": [], "test": []}
    for rid in ids:
        u = split_fraction(rid, salt)
        key = "train" if u < edges[0] else "val" if u < edges[1] else "test"
        out[key].append(rid)
    return out


def split_records(records, fractions=(0.7, 0.15, 0.15), salt=""):
    ids = split_ids([r.id for r in records], fractions, salt)
    by_id = {r.id: r for r in records}
    return {k: [by_id[i] for i in v] for k, v in ids.items()}


def write_manifest(splits, path, extra=None):
    """JSON listing record ids per split."""
    doc = {k: [r if isinstance(r, str) else r.id for r in v] for k, v in splits.items()}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def read_manifest(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


# -- CSV -------------------------------------------------------------------------

class CsvFormatError(InvalidInputError):
    pass


def _fmt(v):
    return repr(float(v))


def write_csv(record, path, fmt=None):
    """Write a record as ``# fs=<hz>``, a header of lead names, one row per sample.

    Values are written with ``repr`` (shortest exact round-trip) unless a
    ``fmt`` such as ``"%.9g"`` is given.
    """
    x = np.asarray(record.samples)
    conv = _fmt if fmt is None else (lambda v: fmt % v)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# fs={record.sampling_rate!r}\n")
        f.write(",".join(LEAD_NAMES) + "\n")
        for row in x.T:
            f.write(",".join(conv(v) for v in row) + "\n")


def read_csv(path, record_id=None, dtype=np.float64):
    """Read a record written by :func:`write_csv` (columns in any order)."""
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith("# fs="):
        raise CsvFormatError(f"{path}: first line must be '# fs=<hz>'")
    try:
        fs = float(lines[0][5:].strip())
    except ValueError:
        raise CsvFormatError(f"{path}: bad sampling rate {lines[0]!r}") from None
    if len(lines) < 2:
        raise CsvFormatError(f"{path}: missing header row")
    header = [h.strip() for h in lines[1].split(",")]
    if len(header) != N_LEADS:
        raise CsvFormatError(f"{path}: expected {N_LEADS} columns, found {len(header)}")
    missing = [n for n in LEAD_NAMES if n not in header]
    if missing:
        raise CsvFormatError(f"{path}: missing leads {missing}")
    rows = []
    for k, line in enumerate(lines[2:], start=3):
        cells = line.split(",")
        if len(cells) != N_LEADS:
            raise CsvFormatError(f"{path}:{k}: expected {N_LEADS} cells, found {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise CsvFormatError(f"{path}:{k}: non-numeric cell") from None
    if not rows:
        raise CsvFormatError(f"{path}: no samples")
    data = np.array(rows, dtype=dtype).T
    order = [header.index(n) for n in LEAD_NAMES]
    rid = record_id if record_id is not None else _stem(path)
    return EcgRecord(np.ascontiguousarray(data[order]), fs, id=rid)


def _stem(path):
    return os.path.splitext(os.path.basename(str(path)))[0]


# -- weights ---------------------------------------------------------------------

class WeightsError(ValueError):
    """Base class of weight-file errors."""


class BadMagicError(WeightsError):
    pass


class VersionMismatchError(WeightsError):
    pass


class ShapeMismatchError(WeightsError):
    pass


class CorruptWeightsError(WeightsError):
    pass


def save_weights(model, path):
    """Write every parameter and batchnorm statistic as little-endian float32."""
    state = model.state_dict()
    parts = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, len(state))]
    for name, arr in state.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        b = name.encode("utf-8")
        parts.append(struct.pack("<I", len(b)) + b)
        parts.append(struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def read_weight_tensors(path):
    """Parse a weight file into an ordered ``{name: float32 array}``."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 4 or buf[:4] != WEIGHTS_MAGIC:
        raise BadMagicError(f"{path}: not a weight file (bad magic)")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CorruptWeightsError(f"{path}: truncated at byte {pos}")
        out = buf[pos:pos + n]
        pos += n
        return out

    (version,) = struct.unpack("<I", take(4))
    if version != WEIGHTS_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {WEIGHTS_VERSION}")
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", take(4))
        try:
            name = take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptWeightsError(f"{path}: tensor name is not UTF-8") from None
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
    if pos != len(buf):
        raise CorruptWeightsError(f"{path}: {len(buf) - pos} trailing bytes")
    return tensors


def infer_config(tensors, input_width=512):
    """Recover the architecture from tensor shapes."""
    from .model import ModelConfig
    try:
        enc2d = tuple(tensors[f"enc{i}.conv2d.weight"].shape[0] for i in range(4))
        shared = tensors["enc0.bn1d.gamma"].ndim == 1
        enc1d = tuple(tensors[f"enc{i}.conv1d.weight"].shape[0] // (1 if shared else N_LEADS)
                      for i in range(4))
        k2 = tuple(tensors["enc0.conv2d.weight"].shape[2:])
        k1 = tensors["enc0.conv1d.weight"].shape[2]
        kt = tuple(tensors["transition.deconv.weight"].shape[2:])
        stride = tensors["dec0.deconv.weight"].shape[3] // 2
    except KeyError as e:
        raise ShapeMismatchError(f"weight file lacks tensor {e.args[0]}") from None
    return ModelConfig(enc2d_channels=enc2d, enc1d_channels_per_lead=enc1d,
                       transition_kernel=kt, time_stride=stride,
                       input_shape=(1, N_LEADS, input_width),
                       share_1d_weights_across_leads=shared, enc2d_kernel=k2, enc1d_kernel=k1)


def load_weights(path, config=None):
    """Rebuild a model from a weight file.

    Without ``config`` the architecture is inferred from the tensor shapes;
    with one, every tensor must match it by name and shape.
    """
    from .model import Model
    tensors = read_weight_tensors(path)
    cfg = infer_config(tensors) if config is None else config
    model = Model.build(cfg, init_seed=0, dtype=np.float32)
    expected = model.state_dict()
    for name, arr in expected.items():
        if name not in tensors:
            raise ShapeMismatchError(f"{path}: missing tensor {name}")
        if tensors[name].shape != arr.shape:
            raise ShapeMismatchError(
                f"{path}: tensor {name} has shape {tensors[name].shape}, model expects {arr.shape}")
    extra = set(tensors) - set(expected)
    if extra:
        raise ShapeMismatchError(f"{path}: unexpected tensors {sorted(extra)}")
    model.load_state_dict(tensors)
    return model
