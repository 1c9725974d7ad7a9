"""Kernel-machine evaluators used as independent oracles for SimNet layers.

Everything here is computed from kernel values only; no feature map is ever
built. ``NULL`` is the null character of the null-extended patch space.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

NULL = None

KERNEL_KINDS = ("exponential", "generalized_gaussian")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    xi: float
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.xi > 0:
            raise ValueError(f"kernel xi must be positive, got {self.xi}")
        if self.kind == "generalized_gaussian" and not 0 < self.p <= 2:
            raise ValueError(f"generalized Gaussian order must lie in (0, 2], got {self.p}")


def kernel_eval(spec: KernelSpec, x, z):
    """``exp(xi x.z)`` or ``exp(-xi sum|x-z|^p)``; broadcasts over leading axes."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape[-1] != z.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {z.shape[-1]}")
    if spec.kind == "exponential":
        return np.exp(spec.xi * np.sum(x * z, axis=-1))
    return np.exp(-spec.xi * np.sum(np.abs(x - z) ** spec.p, axis=-1))


def kernel_matrix(spec: KernelSpec, X, Z) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    return kernel_eval(spec, X[:, None, :], Z[None, :, :])


def mlp_kernel_form(x, templates, offsets, xi: float, spec: KernelSpec, weighted: bool = False):
    """Class scores ``sigma(sum_l alpha_rl K(x, z_l))`` with ``alpha = exp(xi b)``.

    ``sigma(t) = log(t / n) / xi``. ``offsets`` is ``(k, n)`` (or ``(n,)`` for a
    single output). Weighted similarities have no kernel form and are refused.
    """
    if weighted:
        raise NotImplementedError("weighted similarity has no kernel-machine form")
    if not math.isclose(spec.xi, xi):
        raise ValueError("kernel xi must equal the MEX parameter")
    b = np.atleast_2d(np.asarray(offsets, dtype=np.float64))
    K = kernel_matrix(spec, np.asarray(x)[None, :], templates)[0]
    n = K.shape[0]
    alpha = np.exp(xi * b)
    return np.log(alpha @ K / n) / xi


def mlp_kernel_classify(x, templates, offsets, xi, spec: KernelSpec) -> int:
    """Multiclass rule ``argmax_r sum_l alpha_rl K(x, z_l)``."""
    b = np.atleast_2d(np.asarray(offsets, dtype=np.float64))
    K = kernel_matrix(spec, np.asarray(x)[None, :], templates)[0]
    return int(np.argmax(np.exp(xi * b) @ K))


# -- null-extended patch kernels ------------------------------------------------

def patch_kernel_KV(v, v2, base: KernelSpec) -> float:
    if v is NULL or v2 is NULL:
        return 0.0
    return float(kernel_eval(base, v, v2))


def patch_kernel_big(X: Sequence, X2: Sequence, base: KernelSpec) -> float:
    """Sum of slotwise ``K_V`` values over two equal-length slot sequences."""
    if len(X) != len(X2):
        raise ValueError(f"slot sequences differ in length: {len(X)} vs {len(X2)}")
    return float(sum(patch_kernel_KV(a, b, base) for a, b in zip(X, X2)))


@dataclass
class PatchSupportElement:
    slots: list
    template: int
    pool: int

    def check(self, pool_map) -> None:
        """Locality: non-null exactly in-pool. Sharing: one vector throughout."""
        ref = None
        for i, s in enumerate(self.slots):
            in_pool = pool_map[i] == self.pool
            if in_pool != (s is not NULL):
                raise ValueError(f"slot {i} violates locality for pool {self.pool}")
            if s is not NULL:
                if ref is None:
                    ref = s
                elif not np.array_equal(s, ref):
                    raise ValueError(f"slot {i} violates sharing for template {self.template}")


@dataclass
class PatchSvmModel:
    """Reduced kernel-SVM on slot sequences with locality/sharing-constrained supports.

    ``support[l][p]`` is the element ``Z_lp``; ``coefficients`` has shape
    ``(k, n, P)``.
    """

    support: list
    coefficients: np.ndarray
    kernel: KernelSpec
    pool_map: np.ndarray

    @property
    def n_slots(self) -> int:
        return len(self.pool_map)

    @classmethod
    def from_templates(cls, templates, coefficients, kernel: KernelSpec, pool_map):
        pool_map = np.asarray(pool_map, dtype=np.intp)
        coefficients = np.asarray(coefficients, dtype=np.float64)
        if not np.all(np.isfinite(coefficients)):
            raise ValueError("SVM coefficients must be finite")
        n_pools = coefficients.shape[2]
        support = []
        for l, z in enumerate(np.asarray(templates, dtype=np.float64)):
            row = []
            for p in range(n_pools):
                slots = [z if pool_map[i] == p else NULL for i in range(len(pool_map))]
                row.append(PatchSupportElement(slots, l, p))
            support.append(row)
        return cls(support, coefficients, kernel, pool_map)


def patch_svm_scores(X: Sequence, model: PatchSvmModel) -> np.ndarray:
    """``sum_{l,p} alpha_rlp * K_big(X, Z_lp)`` for every class ``r``."""
    if len(X) != model.n_slots:
        raise ValueError(f"instance has {len(X)} patches, model expects {model.n_slots}")
    if any(x is NULL for x in X):
        raise ValueError("instances must not contain null slots")
    n, P = model.coefficients.shape[1:]
    gram = np.array([[patch_kernel_big(X, model.support[l][p].slots, model.kernel) for p in range(P)]
                     for l in range(n)])
    return np.einsum("rlp,lp->r", model.coefficients, gram)


def patch_svm_classify(X: Sequence, model: PatchSvmModel) -> int:
    return int(np.argmax(patch_svm_scores(X, model)))


def patch_double_sum_scores(X, templates, coefficients, pool_map, kernel: KernelSpec) -> np.ndarray:
    """``sum_{p,l} alpha_rlp sum_{i in pool p} K(x_i, z_l)`` evaluated directly."""
    X = np.asarray(X, dtype=np.float64)
    pool_map = np.asarray(pool_map)
    coefficients = np.asarray(coefficients, dtype=np.float64)
    k, n, P = coefficients.shape
    scores = np.zeros(k)
    for p in range(P):
        members = X[pool_map == p]
        for l in range(n):
            pooled = sum(float(kernel_eval(kernel, x, templates[l])) for x in members)
            scores += coefficients[:, l, p] * pooled
    return scores


# -- Gram matrices ------------------------------------------------------------

def gram_matrix(points: Sequence, kernel_fn: Callable) -> np.ndarray:
    m = len(points)
    G = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            G[i, j] = kernel_fn(points[i], points[j])
    return G


def gram_min_eigenvalue(points: Sequence, kernel_fn: Callable) -> float:
    """Smallest eigenvalue of the symmetrized Gram matrix (at most 64 points)."""
    if len(points) > 64:
        raise ValueError("dense eigensolve limited to 64 points")
    G = gram_matrix(points, kernel_fn)
    try:
        return float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"Gram eigensolve failed: {exc}") from exc


def is_psd(G, rel_tol: float = 1e-10) -> bool:
    G = 0.5 * (G + G.T)
    return bool(np.linalg.eigvalsh(G)[0] >= -rel_tol * abs(np.trace(G)))


def gram_report(G) -> str:
    eig = np.linalg.eigvalsh(0.5 * (G + G.T))
    return (f"points: {G.shape[0]}\nmin_eigenvalue: {eig[0]:.6e}\n"
            f"max_eigenvalue: {eig[-1]:.6e}\ntrace: {np.trace(G):.6e}\n")


def find_non_psd_witness(p: float, trials: int = 1000, seed=0, xi: float = 1.0):
    """Random search for 1-D points whose ``exp(-xi|x-y|^p)`` Gram is not PSD.

    Point sets have 3 to 8 coordinates drawn from [-3, 3]. Returns the first
    set whose smallest eigenvalue is below -1e-6, or ``None``. Only p > 2
    should produce one; p <= 2 serves as the control.
    """
    if not p > 0:
        raise ValueError(f"order must be positive, got {p}")
    rng = np.random.default_rng(seed)

    def kfun(a, b):
        return math.exp(-xi * abs(a - b) ** p)

    for _ in range(trials):
        pts = rng.uniform(-3.0, 3.0, size=int(rng.integers(3, 9)))
        if gram_min_eigenvalue(list(pts), kfun) < -1e-6:
            return pts
    return None


# -- decision regions -----------------------------------------------------------

@dataclass
class RegionRaster:
    xs: np.ndarray
    ys: np.ndarray
    labels: np.ndarray  # (len(ys), len(xs))

    def touches_boundary(self, label: int) -> bool:
        L = self.labels == label
        return bool(L[0].any() or L[-1].any() or L[:, 0].any() or L[:, -1].any())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "label"])
            for iy, y in enumerate(self.ys):
                for ix, x in enumerate(self.xs):
                    w.writerow([f"{x:.6g}", f"{y:.6g}", int(self.labels[iy, ix])])


def decision_region_raster(classifier: Callable, bounds, resolution) -> RegionRaster:
    """Label a regular lattice over ``bounds = (xmin, xmax, ymin, ymax)``.

    ``classifier`` maps an ``(M, 2)`` point array to ``(M, k)`` scores.
    """
    xmin, xmax, ymin, ymax = bounds
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    xs = np.linspace(xmin, xmax, int(nx))
    ys = np.linspace(ymin, ymax, int(ny))
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    scores = np.asarray(classifier(pts), dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[:, None]
    bad = ~np.all(np.isfinite(scores), axis=1)
    if bad.any():
        x, y = pts[np.argmax(bad)]
        raise ArithmeticError(f"non-finite score at lattice point ({x:.6g}, {y:.6g})")
    return RegionRaster(xs, ys, np.argmax(scores, axis=1).reshape(gy.shape))
