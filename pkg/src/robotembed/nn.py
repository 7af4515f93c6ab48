"""Dense layers, a GRU cell, Glorot initialisation and Adam.

All learnable arrays of a model live in one flat vector (``ModelParams``);
layers only remember parameter names and look them up in whatever mapping
they are handed: plain arrays for inference, tape ``Var`` leaves for
training.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from . import autodiff as ad

CHECKPOINT_FORMAT = "robotembed-params"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Training diverged (NaN/inf in loss or gradients)."""


def glorot_uniform(shape, rng) -> np.ndarray:
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ModelParams:
    """Named parameter arrays backed by a single flat float64 vector."""

    def __init__(self):
        self._shapes: dict[str, tuple[int, ...]] = {}
        self._offsets: dict[str, int] = {}
        self.flat = np.zeros(0)

    def __len__(self):
        return self.flat.size

    def __contains__(self, name):
        return name in self._shapes

    @property
    def names(self) -> list[str]:
        return list(self._shapes)

    def shape(self, name):
        return self._shapes[name]

    def add(self, name: str, shape, rng=None, init: str = "glorot") -> str:
        if name in self._shapes:
            raise KeyError(f"duplicate parameter {name}")
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ValueError(f"non-positive dimension in {shape}")
        if init == "glorot":
            val = glorot_uniform(shape, rng)
        elif init == "zeros":
            val = np.zeros(shape)
        else:
            raise ValueError(init)
        self._offsets[name] = self.flat.size
        self._shapes[name] = shape
        self.flat = np.concatenate([self.flat, val.ravel()])
        return name

    def __getitem__(self, name) -> np.ndarray:
        off, shape = self._offsets[name], self._shapes[name]
        return self.flat[off:off + int(np.prod(shape))].reshape(shape)

    def __setitem__(self, name, val):
        self[name][...] = val

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: self[n] for n in self._shapes}

    def bind(self, tape: ad.Tape) -> dict[str, ad.Var]:
        """Register every parameter as a leaf on ``tape`` (manifest order)."""
        return {n: tape.var(self[n]) for n in self._shapes}

    def flatten_grads(self, grads) -> np.ndarray:
        return np.concatenate([np.asarray(g, dtype=float).ravel() for g in grads]) \
            if grads else np.zeros(0)

    def manifest(self) -> list:
        return [[n, list(s)] for n, s in self._shapes.items()]

    def copy_from(self, other: "ModelParams", prefix_map: Mapping[str, str]) -> int:
        """Copy parameters ``src_prefix*`` of ``other`` into ``dst_prefix*``.

        Returns the number of arrays copied; shape mismatches raise.
        """
        copied = 0
        for src, dst in prefix_map.items():
            for name in other.names:
                if not name.startswith(src):
                    continue
                target = dst + name[len(src):]
                if target not in self:
                    continue
                if self.shape(target) != other.shape(name):
                    raise ValueError(f"shape mismatch {name} -> {target}")
                self[target] = other[name]
                copied += 1
        return copied

    def to_dict(self) -> dict:
        return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "manifest": self.manifest(), "params": self.flat.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
            raise ValueError("not a robotembed parameter checkpoint")
        p = cls()
        for name, shape in d["manifest"]:
            p.add(name, shape, init="zeros")
        flat = np.asarray(d["params"], dtype=float)
        if flat.size != p.flat.size:
            raise ValueError("checkpoint size does not match its manifest")
        p.flat[:] = flat
        return p

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


ACTIVATIONS = {"tanh": ad.tanh, "identity": lambda x: x}


class Dense:
    def __init__(self, params: ModelParams, name: str, in_dim: int, out_dim: int,
                 activation: str = "tanh", rng=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation}")
        self.name, self.in_dim, self.out_dim = name, in_dim, out_dim
        self.activation = activation
        self.w = params.add(f"{name}.W", (out_dim, in_dim), rng)
        self.b = params.add(f"{name}.b", (out_dim,), init="zeros")

    def __call__(self, p, x):
        if ad.value(x).shape[-1] != self.in_dim:
            raise ValueError(f"{self.name}: expected width {self.in_dim}, "
                             f"got {ad.value(x).shape[-1]}")
        return ACTIVATIONS[self.activation](ad.matmul(x, ad.transpose(p[self.w])) + p[self.b])


def dense_forward(layer: Dense, p, x):
    return layer(p, x)


class Mlp:
    """Two dense layers: tanh hidden, identity output."""

    def __init__(self, params, name, in_dim, hidden, out_dim, rng):
        self.l1 = Dense(params, f"{name}.0", in_dim, hidden, "tanh", rng)
        self.l2 = Dense(params, f"{name}.1", hidden, out_dim, "identity", rng)
        self.in_dim, self.out_dim = in_dim, out_dim

    def __call__(self, p, x):
        return self.l2(p, self.l1(p, x))


class GruCell:
    def __init__(self, params: ModelParams, name: str, hidden_dim: int, input_dim: int, rng=None):
        self.name, self.hidden_dim, self.input_dim = name, hidden_dim, input_dim
        cat = hidden_dim + input_dim
        self.wz = params.add(f"{name}.Wz", (hidden_dim, cat), rng)
        self.bz = params.add(f"{name}.bz", (hidden_dim,), init="zeros")
        self.wr = params.add(f"{name}.Wr", (hidden_dim, cat), rng)
        self.br = params.add(f"{name}.br", (hidden_dim,), init="zeros")
        self.wh = params.add(f"{name}.Wh", (hidden_dim, cat), rng)
        self.bh = params.add(f"{name}.bh", (hidden_dim,), init="zeros")

    def __call__(self, p, h, m):
        if ad.value(h).shape[-1] != self.hidden_dim or ad.value(m).shape[-1] != self.input_dim:
            raise ValueError(f"{self.name}: dimension mismatch")
        hm = ad.concat([h, m], axis=-1)
        z = ad.sigmoid(ad.matmul(hm, ad.transpose(p[self.wz])) + p[self.bz])
        r = ad.sigmoid(ad.matmul(hm, ad.transpose(p[self.wr])) + p[self.br])
        rhm = ad.concat([r * h, m], axis=-1)
        cand = ad.tanh(ad.matmul(rhm, ad.transpose(p[self.wh])) + p[self.bh])
        return (1.0 - z) * h + z * cand


def gru_step(cell: GruCell, p, h, m):
    return cell(p, h, m)


@dataclass
class AdamState:
    size: int
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Optional[np.ndarray] = field(default=None, repr=False)
    v: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Bias-corrected Adam update; mutates ``state`` and returns new params."""
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("parameter/gradient/state lengths differ")
    if not np.all(np.isfinite(grads)):
        raise TrainingError("non-finite gradient")
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = state.m / (1 - state.beta1 ** state.step)
    v_hat = state.v / (1 - state.beta2 ** state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def init_params(shape, rng) -> np.ndarray:
    return glorot_uniform(shape, rng)
