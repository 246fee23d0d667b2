"""Weight checkpoints: a zip of ``.npy`` arrays plus a JSON header.

Entries carry a fixed timestamp so identical weights give identical bytes.
"""
from __future__ import annotations

import io
import json
import zipfile

import numpy as np

FORMAT = "actisleep-checkpoint"
FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header = {"format": FORMAT, "version": FORMAT_VERSION,
              "arrays": {k: list(np.shape(v)) for k, v in sorted(params.items())},
              "meta": meta or {}}
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_entry("header.json"), json.dumps(header, sort_keys=True, indent=1))
        for name in sorted(params):
            buf = io.BytesIO()
            arr = np.array(params[name], dtype=np.float64, order="C")
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            zf.writestr(_entry(f"{name}.npy"), buf.getvalue())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        if header.get("format") != FORMAT:
            raise ValueError(f"{path}: not an {FORMAT} file")
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        params = {}
        for name, shape in header["arrays"].items():
            arr = np.lib.format.read_array(io.BytesIO(zf.read(f"{name}.npy")),
                                           allow_pickle=False)
            if list(arr.shape) != shape:
                raise ValueError(f"{path}: array {name} has shape {arr.shape}, header says {shape}")
            params[name] = arr
    return params, header["meta"]
