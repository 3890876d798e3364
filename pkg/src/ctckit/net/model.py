"""Model assembly: layer specs, the flat parameter store, and checkpoints.

A model spec is a JSON-friendly list of layer dicts, e.g.

    [{"kind": "bi_gru", "hidden": 16},
     {"kind": "affine", "out": 32},
     {"kind": "log_softmax"}]

The last two layers must be an affine projection to the vocabulary size
followed by log_softmax, so the forward output is a row-normalized
log-probability lattice.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from . import layers as L

CHECKPOINT_MAGIC = b"CKPT"

_KINDS = {
    "affine": lambda s: L.Affine(int(s["out"])),
    "relu": lambda s: L.Relu(),
    "conv1d": lambda s: L.Conv1d(int(s["out_channels"]), int(s["kernel"]),
                                 int(s.get("stride", 1))),
    "batch_norm": lambda s: L.BatchNorm(),
    "dropout": lambda s: L.Dropout(float(s["p"])),
    "frame_stack": lambda s: L.FrameStack(int(s.get("factor", 2))),
    "bi_gru": lambda s: L.BiGru(int(s["hidden"])),
    "bi_lstm": lambda s: L.BiLstm(int(s["hidden"])),
    "log_softmax": lambda s: L.LogSoftmax(),
}


class ModelError(ValueError):
    pass


class CheckpointError(RuntimeError):
    pass


def validate_model_spec(spec: list[dict], vocab_size: int) -> None:
    """Structural checks: known kinds, affine(V) + log_softmax at the top."""
    if len(spec) < 2:
        raise ModelError("model needs at least affine + log_softmax")
    for entry in spec:
        if entry.get("kind") not in _KINDS:
            raise ModelError(f"unknown layer kind {entry.get('kind')!r}")
    if spec[-1]["kind"] != "log_softmax" or spec[-2]["kind"] != "affine":
        raise ModelError("final layers must be affine followed by log_softmax")
    if int(spec[-2]["out"]) != vocab_size:
        raise ModelError(
            f"final affine width {spec[-2]['out']} != vocabulary size {vocab_size}"
        )


def spec_digest(spec: list[dict], input_dim: int) -> bytes:
    blob = json.dumps({"input_dim": input_dim, "layers": spec}, sort_keys=True)
    return hashlib.sha256(blob.encode()).digest()


class Model:
    """An ordered layer stack over one flat float32 parameter vector."""

    def __init__(self, spec: list[dict], input_dim: int, vocab_size: int, seed: int = 0):
        validate_model_spec(spec, vocab_size)
        self.spec = [dict(entry) for entry in spec]
        self.input_dim = int(input_dim)
        self.vocab_size = int(vocab_size)
        self.digest = spec_digest(self.spec, self.input_dim)
        self.layers = [_KINDS[entry["kind"]](entry) for entry in self.spec]

        dim = self.input_dim
        slots = []  # (layer, name, shape, is_buffer)
        for layer in self.layers:
            dim = layer.build(dim)
            for name, shape in layer.param_specs:
                slots.append((layer, name, shape, False))
            for name, shape, _ in layer.buffer_specs:
                slots.append((layer, name, shape, True))
        self.output_dim = dim

        total = sum(int(np.prod(shape)) for _, _, shape, _ in slots)
        self.params = np.zeros(total, dtype=np.float32)
        self.grads = np.zeros(total, dtype=np.float32)
        offset = 0
        for layer, name, shape, is_buffer in slots:
            size = int(np.prod(shape))
            view = self.params[offset : offset + size].reshape(shape)
            gview = self.grads[offset : offset + size].reshape(shape)
            if is_buffer:
                layer.b[name] = view
            else:
                layer.p[name] = view
                layer.g[name] = gview
            offset += size

        self.step = 0
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init_params(rng)

    @property
    def num_params(self) -> int:
        return self.params.size

    def zero_grad(self) -> None:
        self.grads[...] = 0.0

    def output_length(self, t_in: int) -> int:
        t = t_in
        for layer in self.layers:
            t = layer.out_len(t)
        return t

    def forward(self, feats: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        """Run the stack; returns a T' x V log-probability matrix (float64)."""
        x = np.asarray(feats, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ModelError(
                f"expected T x {self.input_dim} input, got {x.shape}"
            )
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return x

    def backward(self, d_output: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the input gradient."""
        dx = np.asarray(d_output, dtype=np.float64)
        for layer in reversed(self.layers):
            dx = layer.backward(dx)
        return dx

    # --- checkpoints ----------------------------------------------------

    def save_checkpoint(self, path) -> None:
        """'CKPT' magic, spec hash, step counter, little-endian f32 params."""
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(self.digest)))
            fh.write(self.digest)
            fh.write(struct.pack("<QQ", self.step, self.num_params))
            fh.write(self.params.astype("<f4").tobytes())

    def load_checkpoint(self, path) -> None:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CHECKPOINT_MAGIC:
                raise CheckpointError(f"{path}: bad checkpoint magic {magic!r}")
            (hash_len,) = struct.unpack("<I", fh.read(4))
            digest = fh.read(hash_len)
            if digest != self.digest:
                raise CheckpointError(
                    f"{path}: checkpoint was written for a different model spec"
                )
            step, n = struct.unpack("<QQ", fh.read(16))
            if n != self.num_params:
                raise CheckpointError(
                    f"{path}: checkpoint holds {n} parameters, model has "
                    f"{self.num_params}"
                )
            data = np.frombuffer(fh.read(4 * n), dtype="<f4")
            if data.size != n:
                raise CheckpointError(f"{path}: truncated parameter vector")
        self.params[...] = data
        self.step = step
