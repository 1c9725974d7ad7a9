"""The MEX operator and the MEX layer.

``MEX_xi{c_i} = (1/xi) * log(mean(exp(xi * c_i)))`` moves from the minimum
(xi -> -inf) through the mean (xi -> 0) to the maximum (xi -> +inf).

The evaluation shifts by the extreme value that makes every exponent
non-positive and uses ``log1p(mean(expm1(.)))``, so it neither overflows for
large ``|xi|`` nor loses digits when ``xi`` is small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: below this magnitude xi is treated as the exact mean-limit
XI_ZERO = 1e-8


def _check_xi(xi: float) -> float:
    xi = float(xi)
    if math.isnan(xi):
        raise ValueError("MEX parameter xi is NaN")
    return xi


def mex(values, xi: float, axis: int = -1):
    """MEX of ``values`` along ``axis``.

    ``xi = +inf`` / ``-inf`` give the exact max / min, and ``|xi| < 1e-8``
    gives the exact arithmetic mean.
    """
    c = np.asarray(values, dtype=np.float64)
    xi = _check_xi(xi)
    if c.ndim == 0 or c.shape[axis] == 0:
        raise ValueError("MEX needs at least one value")
    if math.isinf(xi):
        return c.max(axis=axis) if xi > 0 else c.min(axis=axis)
    if abs(xi) < XI_ZERO:
        return c.mean(axis=axis)
    ref = c.max(axis=axis, keepdims=True) if xi > 0 else c.min(axis=axis, keepdims=True)
    s = xi * (c - ref)
    out = ref + np.log1p(np.mean(np.expm1(s), axis=axis, keepdims=True)) / xi
    return np.squeeze(out, axis=axis)


def mex_grad(values, xi: float, axis: int = -1):
    """Return ``(d_values, d_xi)`` for :func:`mex`.

    ``d_values`` are the softmax weights of ``xi * values`` (uniform at the
    mean-limit, a first-index one-hot in the hard limits). ``d_xi`` is
    ``(sum_i w_i c_i - MEX) / xi``, or half the population variance at the
    mean-limit.
    """
    c = np.asarray(values, dtype=np.float64)
    xi = _check_xi(xi)
    if c.ndim == 0 or c.shape[axis] == 0:
        raise ValueError("MEX needs at least one value")
    n = c.shape[axis]
    if math.isinf(xi):
        idx = c.argmax(axis=axis) if xi > 0 else c.argmin(axis=axis)
        w = np.zeros_like(c)
        np.put_along_axis(w, np.expand_dims(idx, axis), 1.0, axis=axis)
        return w, np.zeros(np.delete(c.shape, axis % c.ndim))
    if abs(xi) < XI_ZERO:
        w = np.full_like(c, 1.0 / n)
        return w, 0.5 * c.var(axis=axis)
    ref = c.max(axis=axis, keepdims=True) if xi > 0 else c.min(axis=axis, keepdims=True)
    dc = c - ref
    e = np.exp(xi * dc)
    w = e / e.sum(axis=axis, keepdims=True)
    shifted_mex = np.log1p(np.mean(np.expm1(xi * dc), axis=axis, keepdims=True)) / xi
    d_xi = (np.sum(w * dc, axis=axis, keepdims=True) - shifted_mex) / xi
    return w, np.squeeze(d_xi, axis=axis)


@dataclass
class MexLayerParams:
    """Parameters of a MEX layer.

    ``blocks[t]`` lists the flat input coordinates pooled into output ``t``;
    every block has the same length ``m``. Offsets are either a ``(T, m)``
    table or, when ``offset_index`` is given, a flat parameter vector that
    ``offset_index[t, s]`` points into (tied offsets). ``constants`` holds
    the optional ``c_t`` appended to each block. ``hard=True`` replaces xi by
    ``sign(xi) * inf``.
    """

    blocks: np.ndarray
    xi: float = 1.0
    offsets: np.ndarray | None = None
    offset_index: np.ndarray | None = None
    constants: np.ndarray | None = None
    out_shape: tuple | None = None
    hard: bool = False

    def __post_init__(self):
        self.blocks = np.atleast_2d(np.asarray(self.blocks, dtype=np.intp))
        T, m = self.blocks.shape
        if T == 0 or m == 0:
            raise ValueError("every MEX output needs a non-empty block")
        if self.offsets is not None:
            self.offsets = np.asarray(self.offsets, dtype=np.float64)
            if self.offset_index is None:
                if self.offsets.shape != (T, m):
                    raise ValueError(f"offset table must have shape {(T, m)}, got {self.offsets.shape}")
            else:
                self.offset_index = np.asarray(self.offset_index, dtype=np.intp)
                if self.offset_index.shape != (T, m):
                    raise ValueError(f"offset_index must have shape {(T, m)}")
                if self.offset_index.min() < 0 or self.offset_index.max() >= self.offsets.size:
                    raise IndexError("offset_index points outside the offset vector")
        if self.constants is not None:
            self.constants = np.asarray(self.constants, dtype=np.float64).reshape(-1)
            if self.constants.shape != (T,):
                raise ValueError(f"need exactly one constant per output ({T}), got {self.constants.size}")
        if self.out_shape is None:
            self.out_shape = (T,)

    @property
    def n_outputs(self) -> int:
        return self.blocks.shape[0]

    @property
    def effective_xi(self) -> float:
        if self.hard:
            return math.copysign(math.inf, self.xi) if self.xi != 0 else 0.0
        return float(self.xi)

    def block_offsets(self) -> np.ndarray | None:
        if self.offsets is None:
            return None
        if self.offset_index is None:
            return self.offsets
        return self.offsets.ravel()[self.offset_index]


@dataclass
class MexGrad:
    d_input: np.ndarray
    d_offsets: np.ndarray | None
    d_constants: np.ndarray | None
    d_xi: float


def _gather(inp: np.ndarray, params: MexLayerParams) -> np.ndarray:
    x = np.asarray(inp, dtype=np.float64).ravel()
    bad = (params.blocks < 0) | (params.blocks >= x.size)
    if bad.any():
        t = int(np.argwhere(bad)[0, 0])
        raise IndexError(f"block of output {t} references input coordinate outside [0, {x.size})")
    vals = x[params.blocks]
    b = params.block_offsets()
    if b is not None:
        vals = vals + b
    if params.constants is not None:
        vals = np.concatenate([vals, params.constants[:, None]], axis=1)
    return vals


def mex_layer_forward(inp, params: MexLayerParams) -> np.ndarray:
    vals = _gather(inp, params)
    return mex(vals, params.effective_xi, axis=1).reshape(params.out_shape)


def mex_layer_backward(inp, params: MexLayerParams, upstream):
    """Backpropagate ``upstream`` (shaped like the forward output).

    Returns ``(d_input, MexGrad)``. Overlapping blocks and tied offsets
    accumulate in output order.
    """
    inp = np.asarray(inp, dtype=np.float64)
    g_out = np.asarray(upstream, dtype=np.float64)
    if g_out.size != params.n_outputs:
        raise ValueError(f"upstream has {g_out.size} entries, layer has {params.n_outputs} outputs")
    g_out = g_out.ravel()
    vals = _gather(inp, params)
    w, dxi = mex_grad(vals, params.effective_xi, axis=1)
    g = g_out[:, None] * w
    m = params.blocks.shape[1]
    g_block = g[:, :m]

    d_input = np.zeros(inp.size)
    np.add.at(d_input, params.blocks, g_block)
    d_input = d_input.reshape(inp.shape)

    d_offsets = None
    if params.offsets is not None:
        if params.offset_index is None:
            d_offsets = g_block.copy()
        else:
            d_offsets = np.zeros(params.offsets.size)
            np.add.at(d_offsets, params.offset_index, g_block)
            d_offsets = d_offsets.reshape(params.offsets.shape)
    d_constants = g[:, m].copy() if params.constants is not None else None
    d_xi = 0.0 if params.hard else float(np.dot(g_out, dxi))
    return d_input, MexGrad(d_input, d_offsets, d_constants, d_xi)
