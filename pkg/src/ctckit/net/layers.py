"""Layer primitives with hand-derived backward passes.

Parameters are float32 views into one flat model-owned vector; all forward
and backward arithmetic runs in float64.  Non-trainable state (batch-norm
running statistics) lives in the same flat vector as "buffer" slots whose
gradients stay pinned at zero, so a checkpoint of the flat vector captures
everything the forward pass needs.

Each layer caches whatever its backward needs during forward; a model is a
single-writer object and must not interleave forwards of different inputs.
"""

from __future__ import annotations

import numpy as np


class LayerError(ValueError):
    pass


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    """Base class; subclasses fill param_specs/buffer_specs in __init__."""

    def __init__(self):
        self.param_specs: list[tuple[str, tuple[int, ...]]] = []
        self.buffer_specs: list[tuple[str, tuple[int, ...], float]] = []
        self.p: dict[str, np.ndarray] = {}  # f32 parameter views
        self.g: dict[str, np.ndarray] = {}  # f32 gradient views
        self.b: dict[str, np.ndarray] = {}  # f32 buffer views (no grad)
        self.out_dim: int = 0

    def build(self, in_dim: int) -> int:
        """Record parameter shapes for ``in_dim`` inputs; return output width."""
        raise NotImplementedError

    def init_params(self, rng) -> None:
        bound = self.init_bound()
        for name in self.p:
            self.p[name][...] = rng.uniform(-bound, bound, size=self.p[name].shape)
        for name, _, fill in self.buffer_specs:
            self.b[name][...] = fill

    def init_bound(self) -> float:
        return 0.0

    def forward(self, x: np.ndarray, train: bool, rng) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def out_len(self, t: int) -> int:
        return t

    def _w(self, name: str) -> np.ndarray:
        return self.p[name].astype(np.float64)


class Affine(Layer):
    def __init__(self, out_dim: int):
        super().__init__()
        self.out = int(out_dim)

    def build(self, in_dim):
        self.in_dim = in_dim
        self.out_dim = self.out
        self.param_specs = [("W", (in_dim, self.out)), ("b", (self.out,))]
        return self.out

    def init_bound(self):
        return 1.0 / np.sqrt(self.in_dim)

    def forward(self, x, train, rng):
        self._x = x
        return x @ self._w("W") + self._w("b")

    def backward(self, dy):
        self.g["W"] += self._x.T @ dy
        self.g["b"] += dy.sum(axis=0)
        return dy @ self._w("W").T


class Relu(Layer):
    def build(self, in_dim):
        self.out_dim = in_dim
        return in_dim

    def forward(self, x, train, rng):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


class Conv1d(Layer):
    """Time convolution with zero same-padding; stride shrinks T to ceil(T/s)."""

    def __init__(self, out_channels: int, kernel: int, stride: int = 1):
        super().__init__()
        if kernel < 1 or stride < 1:
            raise LayerError("kernel and stride must be >= 1")
        self.out_ch = int(out_channels)
        self.kernel = int(kernel)
        self.stride = int(stride)

    def build(self, in_dim):
        self.in_dim = in_dim
        self.out_dim = self.out_ch
        self.param_specs = [
            ("W", (self.kernel, in_dim, self.out_ch)),
            ("b", (self.out_ch,)),
        ]
        return self.out_ch

    def init_bound(self):
        return 1.0 / np.sqrt(self.in_dim * self.kernel)

    def out_len(self, t):
        return (t + self.stride - 1) // self.stride

    def forward(self, x, train, rng):
        t = x.shape[0]
        t_out = self.out_len(t)
        pad_l = (self.kernel - 1) // 2
        pad_r = self.kernel - 1 - pad_l
        xp = np.pad(x, ((pad_l, pad_r), (0, 0)))
        self._xp, self._t_in, self._pad_l = xp, t, pad_l
        w = self._w("W")
        y = np.tile(self._w("b"), (t_out, 1))
        for k in range(self.kernel):
            y += xp[k : k + self.stride * t_out : self.stride] @ w[k]
        return y

    def backward(self, dy):
        t_out = dy.shape[0]
        w = self._w("W")
        dxp = np.zeros_like(self._xp)
        for k in range(self.kernel):
            sl = slice(k, k + self.stride * t_out, self.stride)
            self.g["W"][k] += self._xp[sl].T @ dy
            dxp[sl] += dy @ w[k].T
        self.g["b"] += dy.sum(axis=0)
        return dxp[self._pad_l : self._pad_l + self._t_in]


class BatchNorm(Layer):
    """Per-feature normalization over the time axis of one utterance."""

    def __init__(self, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum

    def build(self, in_dim):
        self.out_dim = in_dim
        self.param_specs = [("gamma", (in_dim,)), ("beta", (in_dim,))]
        self.buffer_specs = [
            ("running_mean", (in_dim,), 0.0),
            ("running_var", (in_dim,), 1.0),
        ]
        return in_dim

    def init_params(self, rng):
        self.p["gamma"][...] = 1.0
        self.p["beta"][...] = 0.0
        self.b["running_mean"][...] = 0.0
        self.b["running_var"][...] = 1.0

    def forward(self, x, train, rng):
        self._train = train
        if train:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.momentum
            self.b["running_mean"][...] = (1 - m) * self.b["running_mean"] + m * mu
            self.b["running_var"][...] = (1 - m) * self.b["running_var"] + m * var
        else:
            mu = self.b["running_mean"].astype(np.float64)
            var = self.b["running_var"].astype(np.float64)
        self._inv_std = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mu) * self._inv_std
        return self._w("gamma") * self._xhat + self._w("beta")

    def backward(self, dy):
        xhat, inv_std = self._xhat, self._inv_std
        self.g["gamma"] += (dy * xhat).sum(axis=0)
        self.g["beta"] += dy.sum(axis=0)
        scale = self._w("gamma") * inv_std
        if not self._train:
            return dy * scale
        # differentiate through the batch statistics
        return scale * (
            dy - dy.mean(axis=0) - xhat * (dy * xhat).mean(axis=0)
        )


class Dropout(Layer):
    def __init__(self, p: float):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise LayerError("dropout rate must be in [0, 1)")
        self.rate = float(p)

    def build(self, in_dim):
        self.out_dim = in_dim
        return in_dim

    def forward(self, x, train, rng):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise LayerError("dropout in training mode needs an RNG")
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class FrameStack(Layer):
    """Concatenate every ``factor`` consecutive frames; halves the frame rate."""

    def __init__(self, factor: int = 2):
        super().__init__()
        if factor < 1:
            raise LayerError("stack factor must be >= 1")
        self.factor = int(factor)

    def build(self, in_dim):
        self.in_dim = in_dim
        self.out_dim = in_dim * self.factor
        return self.out_dim

    def out_len(self, t):
        return t // self.factor

    def forward(self, x, train, rng):
        self._t_in = x.shape[0]
        t_out = self.out_len(self._t_in)
        return x[: t_out * self.factor].reshape(t_out, -1)

    def backward(self, dy):
        dx = np.zeros((self._t_in, self.in_dim))
        used = dy.shape[0] * self.factor
        dx[:used] = dy.reshape(used, self.in_dim)
        return dx


class LogSoftmax(Layer):
    def build(self, in_dim):
        self.out_dim = in_dim
        return in_dim

    def forward(self, x, train, rng):
        shifted = x - x.max(axis=1, keepdims=True)
        self._y = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return self._y

    def backward(self, dy):
        return dy - np.exp(self._y) * dy.sum(axis=1, keepdims=True)


class _RecurrentDirection:
    """One direction of a bidirectional recurrent layer (shape bookkeeping)."""

    def __init__(self, prefix: str, gates: int, hidden: int):
        self.prefix = prefix
        self.gates = gates
        self.hidden = hidden

    def specs(self, in_dim):
        g, h = self.gates, self.hidden
        return [
            (f"{self.prefix}W_ih", (g * h, in_dim)),
            (f"{self.prefix}W_hh", (g * h, h)),
            (f"{self.prefix}b_ih", (g * h,)),
            (f"{self.prefix}b_hh", (g * h,)),
        ]


class BiGru(Layer):
    """Bidirectional GRU; output is [forward ; backward] per frame (2H wide)."""

    def __init__(self, hidden: int):
        super().__init__()
        self.hidden = int(hidden)
        self._dirs = [_RecurrentDirection("fw_", 3, self.hidden),
                      _RecurrentDirection("bw_", 3, self.hidden)]

    def build(self, in_dim):
        self.in_dim = in_dim
        self.out_dim = 2 * self.hidden
        self.param_specs = [s for d in self._dirs for s in d.specs(in_dim)]
        return self.out_dim

    def init_bound(self):
        return 1.0 / np.sqrt(self.hidden)

    def _run_direction(self, prefix, x):
        h_dim = self.hidden
        w_ih = self._w(prefix + "W_ih")
        w_hh = self._w(prefix + "W_hh")
        b_ih = self._w(prefix + "b_ih")
        b_hh = self._w(prefix + "b_hh")
        t_len = x.shape[0]
        gi = x @ w_ih.T + b_ih
        h = np.zeros(h_dim)
        hs = np.zeros((t_len, h_dim))
        cache = []
        for t in range(t_len):
            gh = h @ w_hh.T + b_hh
            r = _sigmoid(gi[t, :h_dim] + gh[:h_dim])
            z = _sigmoid(gi[t, h_dim : 2 * h_dim] + gh[h_dim : 2 * h_dim])
            u = gh[2 * h_dim :]
            n = np.tanh(gi[t, 2 * h_dim :] + r * u)
            cache.append((h, r, z, n, u))
            h = (1.0 - z) * n + z * h
            hs[t] = h
        return hs, cache

    def _backprop_direction(self, prefix, x, dh_seq, cache):
        h_dim = self.hidden
        w_hh = self._w(prefix + "W_hh")
        t_len = x.shape[0]
        d_gi = np.zeros((t_len, 3 * h_dim))
        d_whh = np.zeros_like(w_hh)
        d_bhh = np.zeros(3 * h_dim)
        dh = np.zeros(h_dim)
        for t in range(t_len - 1, -1, -1):
            h_prev, r, z, n, u = cache[t]
            dht = dh_seq[t] + dh
            dn = dht * (1.0 - z)
            dz = dht * (h_prev - n)
            dh = dht * z
            dan = dn * (1.0 - n * n)
            dr = dan * u
            du = dan * r
            dar = dr * r * (1.0 - r)
            daz = dz * z * (1.0 - z)
            dgh = np.concatenate([dar, daz, du])
            d_gi[t] = np.concatenate([dar, daz, dan])
            d_whh += np.outer(dgh, h_prev)
            d_bhh += dgh
            dh = dh + dgh @ w_hh
        self.g[prefix + "W_hh"] += d_whh
        self.g[prefix + "b_hh"] += d_bhh
        self.g[prefix + "W_ih"] += d_gi.T @ x
        self.g[prefix + "b_ih"] += d_gi.sum(axis=0)
        return d_gi @ self._w(prefix + "W_ih")

    def forward(self, x, train, rng):
        self._x = x
        fw, self._fw_cache = self._run_direction("fw_", x)
        bw_rev, self._bw_cache = self._run_direction("bw_", x[::-1])
        return np.concatenate([fw, bw_rev[::-1]], axis=1)

    def backward(self, dy):
        h_dim = self.hidden
        dx_f = self._backprop_direction("fw_", self._x, dy[:, :h_dim], self._fw_cache)
        dx_b = self._backprop_direction(
            "bw_", self._x[::-1], dy[::-1, h_dim:], self._bw_cache
        )
        return dx_f + dx_b[::-1]


class BiLstm(Layer):
    """Bidirectional LSTM; output is [forward ; backward] per frame (2H wide)."""

    def __init__(self, hidden: int):
        super().__init__()
        self.hidden = int(hidden)
        self._dirs = [_RecurrentDirection("fw_", 4, self.hidden),
                      _RecurrentDirection("bw_", 4, self.hidden)]

    def build(self, in_dim):
        self.in_dim = in_dim
        self.out_dim = 2 * self.hidden
        self.param_specs = [s for d in self._dirs for s in d.specs(in_dim)]
        return self.out_dim

    def init_bound(self):
        return 1.0 / np.sqrt(self.hidden)

    def _run_direction(self, prefix, x):
        h_dim = self.hidden
        w_ih = self._w(prefix + "W_ih")
        w_hh = self._w(prefix + "W_hh")
        b = self._w(prefix + "b_ih") + self._w(prefix + "b_hh")
        t_len = x.shape[0]
        gi = x @ w_ih.T + b
        h = np.zeros(h_dim)
        c = np.zeros(h_dim)
        hs = np.zeros((t_len, h_dim))
        cache = []
        for t in range(t_len):
            a = gi[t] + h @ w_hh.T
            i = _sigmoid(a[:h_dim])
            f = _sigmoid(a[h_dim : 2 * h_dim])
            g = np.tanh(a[2 * h_dim : 3 * h_dim])
            o = _sigmoid(a[3 * h_dim :])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            cache.append((h_prev, c_prev, i, f, g, o, tc))
            hs[t] = h
        return hs, cache

    def _backprop_direction(self, prefix, x, dh_seq, cache):
        h_dim = self.hidden
        w_hh = self._w(prefix + "W_hh")
        t_len = x.shape[0]
        d_a = np.zeros((t_len, 4 * h_dim))
        d_whh = np.zeros_like(w_hh)
        dh = np.zeros(h_dim)
        dc = np.zeros(h_dim)
        for t in range(t_len - 1, -1, -1):
            h_prev, c_prev, i, f, g, o, tc = cache[t]
            dht = dh_seq[t] + dh
            do = dht * tc
            dct = dc + dht * o * (1.0 - tc * tc)
            di = dct * g
            dg = dct * i
            df = dct * c_prev
            dc = dct * f
            da = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ]
            )
            d_a[t] = da
            d_whh += np.outer(da, h_prev)
            dh = da @ w_hh
        self.g[prefix + "W_hh"] += d_whh
        self.g[prefix + "b_hh"] += d_a.sum(axis=0)
        self.g[prefix + "W_ih"] += d_a.T @ x
        self.g[prefix + "b_ih"] += d_a.sum(axis=0)
        return d_a @ self._w(prefix + "W_ih")

    def forward(self, x, train, rng):
        self._x = x
        fw, self._fw_cache = self._run_direction("fw_", x)
        bw_rev, self._bw_cache = self._run_direction("bw_", x[::-1])
        return np.concatenate([fw, bw_rev[::-1]], axis=1)

    def backward(self, dy):
        h_dim = self.hidden
        dx_f = self._backprop_direction("fw_", self._x, dy[:, :h_dim], self._fw_cache)
        dx_b = self._backprop_direction(
            "bw_", self._x[::-1], dy[::-1, h_dim:], self._bw_cache
        )
        return dx_f + dx_b[::-1]
