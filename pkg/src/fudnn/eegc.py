"""EEGC container: a self-describing, bit-exact on-disk format for EEG.

Layout:
    8 bytes   magic ``EEGC\\0\\0v1``
    8 bytes   little-endian uint64 header length
    N bytes   UTF-8 JSON header
    payload   channel-major little-endian IEEE-754 float32 samples

The header carries montage, rate, markers and per-trial metadata; the
payload is the raw sample bytes, so save/load round-trips are bit-exact.
Also provides a plain-CSV import/export path (one row per sample, one
column per channel, sidecar JSON for rate/markers/labels).
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .core import ClassLabel, Dataset, Montage, Recording, Trial
from .errors import FormatError

__all__ = ["MAGIC", "save_eegc", "load_eegc", "load_csv_recording", "save_csv_recording"]

MAGIC = b"EEGC\x00\x00v1"
_LEN_FMT = "<Q"


def _montage_header(m: Montage) -> dict:
    return {"labels": list(m.labels), "reference_note": m.reference_note}


def _montage_from_header(h: dict) -> Montage:
    return Montage(labels=tuple(h["labels"]), reference_note=h.get("reference_note", ""))


def _header_bytes(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_eegc(obj, path) -> None:
    """Write a Recording or Dataset to ``path`` in EEGC format."""
    if isinstance(obj, Recording):
        header = {
            "format": "eegc",
            "version": 1,
            "kind": "recording",
            "rate_hz": float(obj.rate_hz),
            "montage": _montage_header(obj.montage),
            "n_samples": int(obj.n_samples),
            "markers": [[int(i), int(c)] for i, c in obj.markers],
        }
        payloads = [obj.samples]
    elif isinstance(obj, Dataset):
        header = {
            "format": "eegc",
            "version": 1,
            "kind": "dataset",
            "rate_hz": float(obj.rate_hz) if obj.trials else 0.0,
            "montage": _montage_header(obj.montage),
            "subject_id": obj.subject_id,
            "trials": [
                {
                    "trial_id": int(t.trial_id),
                    "label": t.label.value,
                    "n_samples": int(t.n_samples),
                    "t0_s": float(t.t0_s),
                    "source_trial_id": (
                        None if t.source_trial_id is None else int(t.source_trial_id)
                    ),
                }
                for t in obj.trials
            ],
        }
        payloads = [t.data for t in obj.trials]
    else:
        raise TypeError(f"cannot save object of type {type(obj).__name__} as EEGC")

    hb = _header_bytes(header)
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack(_LEN_FMT, len(hb)))
        f.write(hb)
        for arr in payloads:
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise FormatError(f"truncated EEGC file: expected {n} bytes of {what}, got {len(b)}")
    return b


def load_eegc(path):
    """Read an EEGC file; returns a Recording or Dataset per its header."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, not an EEGC file")
        (hlen,) = struct.unpack(_LEN_FMT, _read_exact(f, 8, "header length"))
        try:
            header = json.loads(_read_exact(f, hlen, "header").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: header is not valid JSON ({e})") from e
        payload = f.read()

    if header.get("format") != "eegc" or header.get("version") != 1:
        raise FormatError(f"{path}: unsupported format/version in header")
    montage = _montage_from_header(header["montage"])
    k = montage.n_channels
    kind = header.get("kind")

    if kind == "recording":
        n = int(header["n_samples"])
        expected = k * n * 4
        if len(payload) != expected:
            raise FormatError(
                f"{path}: payload is {len(payload)} bytes, header claims {expected}"
            )
        samples = np.frombuffer(payload, dtype="<f4").reshape(k, n).copy()
        return Recording(
            montage=montage,
            rate_hz=float(header["rate_hz"]),
            samples=samples,
            markers=tuple((int(i), int(c)) for i, c in header.get("markers", [])),
        )

    if kind == "dataset":
        metas = header["trials"]
        expected = sum(k * int(m["n_samples"]) * 4 for m in metas)
        if len(payload) != expected:
            raise FormatError(
                f"{path}: payload is {len(payload)} bytes, header claims {expected}"
            )
        trials = []
        off = 0
        rate = float(header["rate_hz"])
        for m in metas:
            n = int(m["n_samples"])
            nb = k * n * 4
            data = np.frombuffer(payload[off:off + nb], dtype="<f4").reshape(k, n).copy()
            off += nb
            trials.append(
                Trial(
                    label=ClassLabel(m["label"]),
                    data=data,
                    rate_hz=rate,
                    subject_id=header.get("subject_id", ""),
                    trial_id=int(m["trial_id"]),
                    t0_s=float(m.get("t0_s", 0.0)),
                    source_trial_id=m.get("source_trial_id"),
                )
            )
        return Dataset(
            subject_id=header.get("subject_id", ""), trials=tuple(trials), montage=montage
        )

    raise FormatError(f"{path}: unknown EEGC kind {kind!r}")


def save_csv_recording(recording: Recording, csv_path, sidecar_path) -> None:
    """Write a recording as CSV (rows = samples, columns = channels) + sidecar JSON."""
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(recording.montage.labels)
        for row in recording.samples.T:
            w.writerow([repr(float(v)) for v in row])
    sidecar = {
        "rate_hz": float(recording.rate_hz),
        "markers": [[int(i), int(c)] for i, c in recording.markers],
        "reference_note": recording.montage.reference_note,
    }
    with open(sidecar_path, "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)


def load_csv_recording(csv_path, sidecar_path) -> Recording:
    """Read a recording from CSV + sidecar JSON (see ``save_csv_recording``)."""
    try:
        with open(sidecar_path) as f:
            sidecar = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{sidecar_path}: sidecar is not valid JSON ({e})") from e
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        try:
            labels = next(reader)
        except StopIteration:
            raise FormatError(f"{csv_path}: empty CSV") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(labels):
                raise FormatError(
                    f"{csv_path}:{lineno}: row has {len(row)} columns, header has {len(labels)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as e:
                raise FormatError(f"{csv_path}:{lineno}: non-numeric sample ({e})") from e
    if not rows:
        raise FormatError(f"{csv_path}: no sample rows")
    samples = np.asarray(rows, dtype=np.float32).T
    montage = Montage(
        labels=tuple(labels), reference_note=sidecar.get("reference_note", "")
    )
    return Recording(
        montage=montage,
        rate_hz=float(sidecar["rate_hz"]),
        samples=samples,
        markers=tuple((int(i), int(c)) for i, c in sidecar.get("markers", [])),
    )
