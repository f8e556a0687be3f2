"""Checkpoint archives.

An archive is a zip file holding ``manifest.json`` (architecture and
run metadata, vocabulary hash, ``type``: ``model`` or ``baseline``) and
one ``arrays/<name>.npy`` member per named array. Network parameters
(names prefixed ``param.``) are stored row-major as little-endian
float32; other arrays keep their dtype. ``.npy`` headers carry dtype
and shape.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import HashMismatch

MANIFEST = "manifest.json"
ARRAY_DIR = "arrays/"
FORMAT_VERSION = 1
PARAM_PREFIX = "param."


def _fixed_zipinfo(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    return info


def save_archive(path: str | Path, manifest: Mapping, arrays: Mapping[str, np.ndarray]) -> None:
    """Write a deterministic archive (fixed timestamps, sorted members)."""
    manifest = {"format_version": FORMAT_VERSION, **manifest, "arrays": sorted(arrays)}
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_fixed_zipinfo(MANIFEST), json.dumps(manifest, indent=2, sort_keys=True))
        for name in sorted(arrays):
            a = np.asarray(arrays[name])
            if name.startswith(PARAM_PREFIX) and a.dtype.kind == "f":
                a = a.astype("<f4")
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(a), allow_pickle=False)
            zf.writestr(_fixed_zipinfo(f"{ARRAY_DIR}{name}.npy"), buf.getvalue())


def load_archive(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read(MANIFEST))
        arrays = {}
        for name in manifest["arrays"]:
            with zf.open(f"{ARRAY_DIR}{name}.npy") as fh:
                arrays[name] = np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)
    return manifest, arrays


def check_vocab(manifest: Mapping, vocab_hash: str) -> None:
    if manifest.get("vocab_hash") != vocab_hash:
        raise HashMismatch(
            f"checkpoint vocabulary {manifest.get('vocab_hash', '?')[:12]} != data vocabulary {vocab_hash[:12]}"
        )
