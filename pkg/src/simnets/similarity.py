"""The similarity layer ``u_l^T phi(x, z_l)``.

Two mappings are supported: ``linear`` (``phi_i = x_i z_i``) and ``lp``
(``phi_i = -|x_i - z_i|^p``). Weights are stored as log-weights ``v`` with
``u = exp(v)``, which keeps them strictly positive without projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import PatchGrid, ShapeError

# rows per chunk on the explicit (rows, n, d) path
_CHUNK_ELEMS = 2_000_000


@dataclass
class SimilarityParams:
    form: str
    templates: np.ndarray
    log_weights: np.ndarray | None = None
    p: float = 2.0

    def __post_init__(self):
        if self.form not in ("linear", "lp"):
            raise ValueError(f"unknown similarity form {self.form!r}")
        self.templates = np.atleast_2d(np.asarray(self.templates, dtype=np.float64))
        if self.log_weights is not None:
            self.log_weights = np.asarray(self.log_weights, dtype=np.float64).reshape(self.templates.shape)
        self.p = float(self.p)
        self.validate()

    def validate(self):
        if not np.all(np.isfinite(self.templates)):
            raise ValueError("templates contain non-finite values")
        if self.log_weights is not None and not np.all(np.isfinite(self.log_weights)):
            raise ValueError("log-weights contain non-finite values")
        if not (np.isfinite(self.p) and self.p > 0):
            raise ValueError(f"order p must be a positive real, got {self.p}")

    @property
    def weighted(self) -> bool:
        return self.log_weights is not None

    @property
    def n(self) -> int:
        return self.templates.shape[0]

    @property
    def dim(self) -> int:
        return self.templates.shape[1]

    @property
    def weights(self) -> np.ndarray:
        if self.log_weights is None:
            return np.ones_like(self.templates)
        return np.exp(self.log_weights)

    @classmethod
    def from_weights(cls, form, templates, weights=None, p=2.0):
        v = None if weights is None else np.log(np.asarray(weights, dtype=np.float64))
        return cls(form, templates, v, p)


@dataclass
class SimilarityGrad:
    d_templates: np.ndarray
    d_log_weights: np.ndarray | None
    d_p: float
    d_patches: np.ndarray | None = None


def _as_rows(patches, dim: int):
    x = patches.patches if isinstance(patches, PatchGrid) else np.asarray(patches, dtype=np.float64)
    if x.shape[-1] != dim:
        raise ShapeError(f"patch dimension {x.shape[-1]} does not match template dimension {dim}")
    return x.reshape(-1, dim), x.shape[:-1]


def _use_expansion(params: SimilarityParams, rows: int) -> bool:
    return params.p == 2.0 and rows * params.n * params.dim > _CHUNK_ELEMS


def _chunks(rows: int, params: SimilarityParams):
    step = max(1, _CHUNK_ELEMS // (params.n * params.dim))
    for lo in range(0, rows, step):
        yield slice(lo, min(rows, lo + step))


def similarity_forward(patches, params: SimilarityParams) -> np.ndarray:
    """Similarity of every patch to every template: ``(..., d) -> (..., n)``."""
    params.validate()
    X, lead = _as_rows(patches, params.dim)
    z, u = params.templates, params.weights
    if params.form == "linear":
        out = X @ (u * z).T
    elif _use_expansion(params, X.shape[0]):
        # -sum u (x - z)^2 = -(x^2 . u) + 2 x . (u z) - sum u z^2
        out = -(X * X) @ u.T + 2.0 * X @ (u * z).T - np.sum(u * z * z, axis=1)
    else:
        out = np.empty((X.shape[0], params.n))
        for sl in _chunks(X.shape[0], params):
            a = np.abs(X[sl, None, :] - z[None])
            out[sl] = -np.einsum("mnd,nd->mn", a ** params.p, u)
    return out.reshape(lead + (params.n,))


def similarity_backward(patches, params: SimilarityParams, upstream, want_p: bool = True,
                        want_input: bool = False) -> SimilarityGrad:
    """Gradients of ``sum(upstream * similarity_forward(patches, params))``.

    Subgradient conventions at ``x_k == z_k``: the template/input derivative
    is 0 there, and the ``|x-z|^p ln|x-z|`` term of the order derivative is 0.
    """
    params.validate()
    X, lead = _as_rows(patches, params.dim)
    G = np.asarray(upstream, dtype=np.float64)
    if G.shape != lead + (params.n,):
        raise ShapeError(f"upstream shape {G.shape} does not match output shape {lead + (params.n,)}")
    G = G.reshape(-1, params.n)
    z, u = params.templates, params.weights
    p = params.p
    d_p = 0.0
    d_x = None

    if params.form == "linear":
        GX = G.T @ X
        d_z = u * GX
        d_u = z * GX
        if want_input:
            d_x = G @ (u * z)
    elif p == 2.0 and not want_p and _use_expansion(params, X.shape[0]):
        GX = G.T @ X
        gsum = G.sum(axis=0)[:, None]
        d_z = 2.0 * u * (GX - z * gsum)
        d_u = -(G.T @ (X * X)) + 2.0 * z * GX - z * z * gsum
        if want_input:
            d_x = -2.0 * ((G @ u) * X - G @ (u * z))
    else:
        d_z = np.zeros_like(z)
        d_u = np.zeros_like(z)
        if want_input:
            d_x = np.empty_like(X)
        for sl in _chunks(X.shape[0], params):
            diff = X[sl, None, :] - z[None]
            a = np.abs(diff)
            ap = a ** p
            g = G[sl][:, :, None]
            d_u -= np.einsum("mn,mnd->nd", G[sl], ap)
            with np.errstate(divide="ignore", invalid="ignore"):
                slope = np.where(a > 0, p * a ** (p - 1.0), 0.0) * np.sign(diff)
            d_z += u * np.einsum("mn,mnd->nd", G[sl], slope)
            if want_input:
                d_x[sl] = -np.einsum("mn,mnd->md", G[sl], u * slope)
            if want_p:
                with np.errstate(divide="ignore", invalid="ignore"):
                    alog = np.where(a > 0, ap * np.log(np.where(a > 0, a, 1.0)), 0.0)
                d_p -= float(np.sum(g * u * alog))

    d_v = d_u * u if params.weighted else None
    if d_x is not None:
        d_x = d_x.reshape(lead + (params.dim,))
    return SimilarityGrad(d_z, d_v, d_p, d_x)
