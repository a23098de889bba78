"""
Parameter checkpoint files

Byte layout (all little endian):
    8 bytes   magic b"PBMLP001"
    uint32    number of layers L
    L times   uint32 rows, uint32 cols, uint8 activation code (0 tanh, 1 relu, 255 linear)
    rest      float64 flat parameter vector in canonical order (W0 row-major, b0, W1, b1, ...)

A JSON sidecar `<path>.json` records seed, layer sizes and activations.
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .approximator import Activation, MlpParams, flatten, unflatten
from .errors import DomainError

MAGIC = b"PBMLP001"
_ACT_CODES = {Activation.TANH: 0, Activation.RELU: 1}
_LINEAR_CODE = 255


def save_params(p: MlpParams, path: Union[str, Path], seed: int,
                extra: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = bytearray(MAGIC)
    header += struct.pack("<I", len(p.layers))
    for i, (w, _) in enumerate(p.layers):
        code = _ACT_CODES[p.activations[i]] if i < len(p.activations) else _LINEAR_CODE
        header += struct.pack("<IIB", w.shape[0], w.shape[1], code)
    path.write_bytes(bytes(header) + flatten(p).astype("<f8").tobytes())

    sidecar = {
        "seed": seed,
        "sizes": p.sizes,
        "activations": [a.value for a in p.activations],
        "n_params": p.n_params,
    }
    sidecar.update(extra or {})
    Path(f"{path}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True), encoding="utf-8")
    return path


def load_params(path: Union[str, Path]) -> Tuple[MlpParams, Dict[str, Any]]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise DomainError(f"{path} is not a parameter checkpoint")
    (n_layers,) = struct.unpack_from("<I", blob, 8)
    offset = 12
    layers, activations = [], []
    codes = {v: k for k, v in _ACT_CODES.items()}
    for i in range(n_layers):
        rows, cols, code = struct.unpack_from("<IIB", blob, offset)
        offset += struct.calcsize("<IIB")
        layers.append((np.zeros((rows, cols)), np.zeros(rows)))
        if i < n_layers - 1:
            activations.append(codes[code])
    template = MlpParams(layers=layers, activations=activations)
    flat = np.frombuffer(blob, dtype="<f8", offset=offset).astype(float)
    sidecar_path = Path(f"{path}.json")
    meta = json.loads(sidecar_path.read_text(encoding="utf-8")) if sidecar_path.exists() else {}
    return unflatten(template, flat), meta
