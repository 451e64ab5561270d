"""Versioned binary files for fitted hedging coefficients and exercise policies.

Layout: 8 magic bytes, little-endian ``uint32`` schema version, ``uint32``
header length, a UTF-8 JSON header, then each array listed in the header as
little-endian ``float64`` in C order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .basis import BasisSpec, StateMapping
from .dual import AlphaTensor
from .primal import ExercisePolicy

MAGIC = b"BDUALART"
SCHEMA_VERSION = 1


class ArtifactError(ValueError):
    pass


def save_artifact(path: str | Path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()]
    header = json.dumps({"kind": kind, "meta": meta, "arrays": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", SCHEMA_VERSION, len(header)))
        fh.write(header)
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_artifact(path: str | Path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"artifact {path} does not exist")
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise ArtifactError(f"{path} is not an artifact file")
    version, n = struct.unpack("<II", raw[8:16])
    if version != SCHEMA_VERSION:
        raise ArtifactError(f"unsupported schema version {version}")
    header = json.loads(raw[16 : 16 + n])
    if header["kind"] != kind:
        raise ArtifactError(f"expected a {kind} artifact, found {header['kind']}")
    pos = 16 + n
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if pos + 8 * count > len(raw):
            raise ArtifactError(f"{path} is truncated")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(entry["shape"]).astype(float)
        pos += 8 * count
    if pos != len(raw):
        raise ArtifactError(f"{path} has trailing or missing data")
    return header["meta"], arrays


def _spec_meta(mapping: StateMapping) -> dict:
    s = mapping.spec
    return {"family": s.family, "P": s.P, "eta": s.eta, "d": s.d, "strike": mapping.strike}


def _mapping_from(meta: dict, arrays: dict) -> StateMapping:
    spec = BasisSpec(meta["family"], P=meta["P"], eta=meta["eta"], d=meta["d"])
    return StateMapping(
        spec,
        arrays["times"],
        mean=arrays.get("mean"),
        var=arrays.get("var"),
        lo=arrays.get("lo"),
        hi=arrays.get("hi"),
        strike=meta["strike"],
        weights=arrays.get("weights"),
    )


def save_alpha(path, alpha: AlphaTensor, mapping: StateMapping, meta: dict | None = None) -> None:
    """Coefficients plus the frozen state mapping they were fitted with."""
    m = {"basis": _spec_meta(mapping), **(meta or {})}
    save_artifact(path, "alpha", m, {"alpha": alpha.values, **mapping.arrays()})


def load_alpha(path) -> tuple[AlphaTensor, StateMapping, dict]:
    meta, arrays = load_artifact(path, "alpha")
    return AlphaTensor(arrays.pop("alpha")), _mapping_from(meta["basis"], arrays), meta


def save_policy(path, policy: ExercisePolicy, meta: dict | None = None) -> None:
    m = {"basis": _spec_meta(policy.mapping), "degree": policy.degree, "seed": policy.seed, **(meta or {})}
    save_artifact(path, "policy", m, {"beta": policy.beta, **policy.mapping.arrays()})


def load_policy(path) -> tuple[ExercisePolicy, dict]:
    meta, arrays = load_artifact(path, "policy")
    beta = arrays.pop("beta")
    return ExercisePolicy(beta, meta["degree"], _mapping_from(meta["basis"], arrays), meta["seed"]), meta
