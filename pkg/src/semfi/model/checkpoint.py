"""Binary checkpoint container.

Layout: 8-byte magic, uint64 little-endian header length, UTF-8 JSON
header, then raw little-endian float32 parameter blobs. The header holds
the config and a manifest of (name, shape, dtype, offset, nbytes) sorted by
name; blobs follow in manifest order, offsets relative to the blob section.
Serialization is canonical (sorted keys, fixed separators) so identical
state produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np
import torch

from ..errors import FormatError
from ..mol import MoLState, create_mol_state
from .config import DenoiserConfig
from .denoiser import Denoiser

MAGIC = b"SEMFICK1"


def save_checkpoint(
    path: str | Path, config: dict, tensors: Mapping[str, np.ndarray]
) -> None:
    names = sorted(tensors)
    manifest = []
    blobs = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype=np.float32))
        blob = arr.astype("<f4", copy=False).tobytes()
        manifest.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": "<f4",
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format": "semfi-checkpoint",
        "version": 1,
        "config": config,
        "params": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode(
        "utf-8"
    )
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r} in {path}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        try:
            header = json.loads(f.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"unparseable checkpoint header: {e}") from e
        for field in ("format", "version", "config", "params"):
            if field not in header:
                raise FormatError(f"checkpoint header missing field {field!r}")
        if header["format"] != "semfi-checkpoint":
            raise FormatError(f"unknown container format {header['format']!r}")
        blob = f.read()
    tensors: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        for field in ("name", "shape", "dtype", "offset", "nbytes"):
            if field not in entry:
                raise FormatError(f"manifest entry missing field {field!r}")
        if entry["dtype"] != "<f4":
            raise FormatError(
                f"parameter {entry['name']!r} has dtype {entry['dtype']!r}, "
                "expected <f4"
            )
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(blob):
            raise FormatError(
                f"parameter {entry['name']!r} blob extends past end of file"
            )
        arr = np.frombuffer(blob[start : start + n], dtype="<f4")
        expect = int(np.prod(entry["shape"])) if entry["shape"] else 1
        if arr.size != expect:
            raise FormatError(
                f"parameter {entry['name']!r} has {arr.size} values, "
                f"shape says {expect}"
            )
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return header["config"], tensors


def model_tensors(model: Denoiser, mol: MoLState | None) -> dict[str, np.ndarray]:
    out = {
        f"base/{name}": p.detach().numpy() for name, p in model.named_parameters()
    }
    if mol is not None:
        out.update({name: p.detach().numpy() for name, p in mol.named_tensors()})
    return out


def save_model_checkpoint(
    path: str | Path,
    model: Denoiser,
    mol: MoLState | None,
    extra_config: dict | None = None,
) -> None:
    config = {"denoiser": model.cfg.to_dict(), "mol": None}
    if mol is not None:
        config["mol"] = {
            "rank": mol.universal.rank,
            "alpha": mol.universal.alpha,
            "frame_counts": list(mol.frame_counts),
        }
    if extra_config:
        config.update(extra_config)
    save_checkpoint(path, config, model_tensors(model, mol))


def load_model_checkpoint(
    path: str | Path,
) -> tuple[Denoiser, MoLState | None, dict]:
    config, tensors = load_checkpoint(path)
    if "denoiser" not in config:
        raise FormatError("checkpoint config missing field 'denoiser'")
    cfg = DenoiserConfig.from_dict(config["denoiser"])
    model = Denoiser(cfg, seed=0)
    with torch.no_grad():
        for name, p in model.named_parameters():
            key = f"base/{name}"
            if key not in tensors:
                raise FormatError(f"checkpoint missing parameter {key!r}")
            if tuple(tensors[key].shape) != tuple(p.shape):
                raise FormatError(
                    f"parameter {key!r} has shape {tensors[key].shape}, "
                    f"model expects {tuple(p.shape)}"
                )
            p.copy_(torch.from_numpy(tensors[key]))
    mol = None
    if config.get("mol"):
        mc = config["mol"]
        for field in ("rank", "alpha", "frame_counts"):
            if field not in mc:
                raise FormatError(f"mol config missing field {field!r}")
        mol = create_mol_state(
            model.covered_layer_shapes(),
            rank=mc["rank"],
            seed=0,
            frame_counts=tuple(mc["frame_counts"]),
            alpha=mc["alpha"],
            enable_experts=bool(mc["frame_counts"]),
        )
        with torch.no_grad():
            for name, p in mol.named_tensors():
                if name not in tensors:
                    raise FormatError(f"checkpoint missing parameter {name!r}")
                p.copy_(torch.from_numpy(tensors[name]))
    return model, mol, config
