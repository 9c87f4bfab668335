"""Checkpoint archive: named float64 arrays plus a JSON config, byte-stable.

The archive is a plain zip with fixed entry timestamps and no compression, so
identical parameters always serialize to identical bytes.  Entries:

    config.json            encoder config, vocabulary, run metadata
    arrays/<name>.npy      one entry per parameter array
"""

from __future__ import annotations

import io
import json
import os
import zipfile
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import torch
from torch import nn

from .errors import CheckpointMissing, ConfigError
from .model import ClozeEncoder, EncoderConfig
from .vocab import Vocabulary

_EPOCH = (1980, 1, 1, 0, 0, 0)  # zip format's minimum timestamp
PROMPT_KEY = "prompt_embeddings"


def _write_entry(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def _array_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), version=(1, 0))
    return buf.getvalue()


def save_checkpoint(
    path,
    model: ClozeEncoder,
    run_config: Optional[dict] = None,
    prompts: Optional[torch.Tensor] = None,
) -> None:
    """Write the model (and prompt matrix, if any) to a stable archive."""
    arrays: Dict[str, np.ndarray] = {
        f"encoder/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()
    }
    if prompts is not None:
        arrays[PROMPT_KEY] = prompts.detach().cpu().numpy()
    config = {
        "encoder": model.cfg.to_json(),
        "vocab": model.vocab.tokens,
        "run": run_config or {},
    }
    tmp = f"{path}.tmp"
    with zipfile.ZipFile(tmp, "w") as zf:
        _write_entry(
            zf, "config.json",
            json.dumps(config, sort_keys=True, indent=2).encode("utf-8"),
        )
        for name in sorted(arrays):
            _write_entry(zf, f"arrays/{name}.npy", _array_bytes(arrays[name]))
    os.replace(tmp, path)


@dataclass
class Checkpoint:
    model: ClozeEncoder
    prompts: Optional[nn.Parameter]
    run_config: dict

    @property
    def vocab(self) -> Vocabulary:
        return self.model.vocab


def load_checkpoint(path) -> Checkpoint:
    """Rebuild the encoder (and prompts) from an archive written above."""
    if not os.path.exists(path):
        raise CheckpointMissing(f"checkpoint not found: {path}")
    with zipfile.ZipFile(path) as zf:
        config = json.loads(zf.read("config.json").decode("utf-8"))
        arrays = {}
        for name in zf.namelist():
            if name.startswith("arrays/") and name.endswith(".npy"):
                key = name[len("arrays/"):-len(".npy")]
                arrays[key] = np.lib.format.read_array(io.BytesIO(zf.read(name)))

    vocab = Vocabulary(config["vocab"])
    model = ClozeEncoder(vocab, EncoderConfig.from_json(config["encoder"]))
    state = {}
    for key, arr in arrays.items():
        if key.startswith("encoder/"):
            state[key[len("encoder/"):]] = torch.from_numpy(arr.copy())
    missing = set(model.state_dict()) - set(state)
    if missing:
        raise ConfigError(f"checkpoint {path} lacks arrays for {sorted(missing)}")
    model.load_state_dict(state)

    prompts = None
    if PROMPT_KEY in arrays:
        prompts = nn.Parameter(torch.from_numpy(arrays[PROMPT_KEY].copy()))
    return Checkpoint(model=model, prompts=prompts, run_config=config.get("run", {}))
