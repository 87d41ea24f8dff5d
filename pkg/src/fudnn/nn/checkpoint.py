"""Model checkpoints: a JSON manifest plus a raw little-endian float32 blob.

Field order in the blob is layer order, then lexicographic field name,
with trainable parameters and persistent state (batch-norm running
statistics) interleaved per layer. The manifest records the order
explicitly so files remain self-describing.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .network import Network, NetworkSpec

__all__ = ["save_checkpoint", "load_checkpoint"]


def _all_fields(net: Network):
    for i, layer in enumerate(net.layers):
        for name in sorted(set(layer.params) | set(layer.state)):
            src = layer.params if name in layer.params else layer.state
            yield f"{i:02d}.{layer.name}.{name}", src[name]


def save_checkpoint(net: Network, stem, *, epoch: int = 0,
                    channel_weights=None, class_labels=None, extra=None) -> None:
    """Write ``<stem>.json`` and ``<stem>.bin``.

    ``channel_weights`` (the frozen PLV weight vector, if the model was
    trained on weighted input) and ``class_labels`` travel with the model so
    evaluation can reproduce the exact input pipeline.
    """
    stem = Path(stem)
    fields = list(_all_fields(net))
    manifest = {
        "format": "fudnn-checkpoint",
        "version": 1,
        "network": net.spec.to_dict(),
        "seed": net.seed,
        "epoch": int(epoch),
        "fields": [{"name": k, "shape": list(v.shape)} for k, v in fields],
        "channel_weights": (
            None if channel_weights is None else [float(w) for w in np.asarray(channel_weights)]
        ),
        "class_labels": None if class_labels is None else list(class_labels),
        "extra": extra or {},
    }
    with open(stem.with_suffix(".json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    blob = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for _, v in fields)
    with open(stem.with_suffix(".bin"), "wb") as f:
        f.write(blob)


def load_checkpoint(stem):
    """Rebuild (network, manifest) from ``<stem>.json`` + ``<stem>.bin``."""
    stem = Path(stem)
    try:
        with open(stem.with_suffix(".json")) as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{stem}.json: not valid JSON ({e})") from e
    if manifest.get("format") != "fudnn-checkpoint" or manifest.get("version") != 1:
        raise FormatError(f"{stem}.json: not a recognized checkpoint manifest")
    spec = NetworkSpec.from_dict(manifest["network"])
    net = Network(spec, seed=int(manifest.get("seed", 0)))
    raw = stem.with_suffix(".bin").read_bytes()
    expected = list(_all_fields(net))
    names = [{"name": k, "shape": list(v.shape)} for k, v in expected]
    if names != manifest["fields"]:
        raise FormatError(f"{stem}.json: field list does not match the declared network")
    need = sum(v.size for _, v in expected) * 4
    if len(raw) != need:
        raise FormatError(f"{stem}.bin: blob is {len(raw)} bytes, manifest claims {need}")
    off = 0
    for _, arr in expected:
        nb = arr.size * 4
        vals = np.frombuffer(raw[off:off + nb], dtype="<f4").reshape(arr.shape)
        arr[...] = vals.astype(arr.dtype)
        off += nb
    return net, manifest
