"""Optimizers operating in place on the flat parameter/gradient vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _m: np.ndarray | None = field(default=None, repr=False)
    _v: np.ndarray | None = field(default=None, repr=False)
    _t: int = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        if self._m is None:
            self._m = np.zeros_like(params, dtype=np.float64)
            self._v = np.zeros_like(params, dtype=np.float64)
        self._t += 1
        g = grads.astype(np.float64)
        self._m = self.beta1 * self._m + (1.0 - self.beta1) * g
        self._v = self.beta2 * self._v + (1.0 - self.beta2) * g * g
        m_hat = self._m / (1.0 - self.beta1**self._t)
        v_hat = self._v / (1.0 - self.beta2**self._t)
        params -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(np.float32)


@dataclass
class SgdMomentum:
    lr: float = 1e-2
    momentum: float = 0.9
    _vel: np.ndarray | None = field(default=None, repr=False)

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        if self._vel is None:
            self._vel = np.zeros_like(params, dtype=np.float64)
        self._vel = self.momentum * self._vel - self.lr * grads.astype(np.float64)
        params += self._vel.astype(np.float32)


def make_optimizer(cfg: dict):
    """Build an optimizer from a config dict with a ``kind`` discriminator."""
    kind = cfg.get("kind", "adam")
    if kind == "adam":
        return Adam(
            lr=float(cfg.get("lr", 1e-3)),
            beta1=float(cfg.get("beta1", 0.9)),
            beta2=float(cfg.get("beta2", 0.999)),
            eps=float(cfg.get("eps", 1e-8)),
        )
    if kind == "sgd_momentum":
        return SgdMomentum(
            lr=float(cfg.get("lr", 1e-2)),
            momentum=float(cfg.get("momentum", 0.9)),
        )
    raise ValueError(f"unknown optimizer kind {kind!r}")
