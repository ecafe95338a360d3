"""
Surrogate model persistence.

Layout of a model file:
    b"MNET"                 magic
    u16 little-endian       format version (1)
    u32 little-endian       header length in bytes
    header                  UTF-8 JSON {config, arrays: [{name, shape}], policies}
    payload                 each array as little-endian float32, in header order

Arrays are the weights plus the coefficients under "coeff.phi_max",
"coeff.omega_max" and "coeff.score_max". The file carries no timestamps;
creation time and training metadata go to the `<model>.meta.json` sidecar.
"""
import json
import logging
import os
import struct
from dataclasses import asdict
from datetime import datetime, timezone
from typing import Any, Dict, Optional

import numpy as np

from .exceptions import ConfigError
from .surrogate import SurrogateConfig, SurrogateParams

logger = logging.getLogger(__name__)

MAGIC = b"MNET"
FORMAT_VERSION = 1
COEFFS = ("phi_max", "omega_max", "score_max")


def model_bytes(params: SurrogateParams) -> bytes:
    params.validate()
    arrays = dict(params.weights)
    for coeff in COEFFS:
        arrays[f"coeff.{coeff}"] = getattr(params, coeff)
    header = {
        "config": asdict(params.config),
        "arrays": [{"name": name, "shape": list(value.shape)} for name, value in arrays.items()],
        "policies": list(params.policies),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.asarray(value, dtype="<f4").tobytes() for value in arrays.values())
    return MAGIC + struct.pack("<HI", FORMAT_VERSION, len(header_bytes)) + header_bytes + payload


def params_from_bytes(blob: bytes) -> SurrogateParams:
    """
    Decode a model file.

    Raises:
        ConfigError: bad magic, unsupported version or truncated payload
    """
    if blob[:4] != MAGIC:
        raise ConfigError("Not a surrogate model file (bad magic)")
    if len(blob) < 10:
        raise ConfigError("Model file truncated in preamble")
    version, header_len = struct.unpack("<HI", blob[4:10])
    if version != FORMAT_VERSION:
        raise ConfigError(f"Unsupported model format version {version}")
    header = json.loads(blob[10:10 + header_len].decode("utf-8"))
    offset = 10 + header_len
    arrays: Dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(blob):
            raise ConfigError(f"Model file truncated at array '{entry['name']}'")
        arrays[entry["name"]] = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape).astype(np.float32)
        offset = end
    if offset != len(blob):
        raise ConfigError(f"Model file has {len(blob) - offset} trailing bytes")
    coeffs = {c: arrays.pop(f"coeff.{c}").astype(np.float64) for c in COEFFS}
    params = SurrogateParams(config=SurrogateConfig(**header["config"]), weights=arrays,
                             policies=list(header["policies"]), **coeffs)
    params.validate()
    return params


def save_model(params: SurrogateParams, path: str, metadata: Optional[Dict[str, Any]] = None):
    """Write the model file and its metadata sidecar."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(model_bytes(params))
    sidecar = {"created_at": datetime.now(timezone.utc).isoformat(), "format_version": FORMAT_VERSION}
    sidecar.update(metadata or {})
    with open(path + ".meta.json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    logger.info(f"Model saved to {path}")


def load_model(path: str) -> SurrogateParams:
    """
    Load a model file.

    Raises:
        ConfigError: missing or malformed file
    """
    if not os.path.exists(path):
        raise ConfigError(f"Model file not found: {path}")
    with open(path, "rb") as f:
        params = params_from_bytes(f.read())
    logger.debug(f"Loaded model {path}: q={params.config.q}, ablation={params.config.ablation}")
    return params


def load_metadata(path: str) -> Dict[str, Any]:
    sidecar = path + ".meta.json"
    if not os.path.exists(sidecar):
        return {}
    with open(sidecar) as f:
        return json.load(f)
