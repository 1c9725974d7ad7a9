"""Generalized Gaussian mixtures and the unsupervised SimNet initializer.

Component ``l`` has independent coordinates with density
``beta_l / (2 alpha_li Gamma(1/beta_l)) * exp(-(|x_i - mu_li| / alpha_li)^beta_l)``.
Setting ``z_l = mu_l``, ``u_li = alpha_li^-beta_l`` and ``p = beta_l`` makes the
l_p similarity equal to ``log P(x, l) - c_l``; the location offsets supply
``c_l`` with location-specific priors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .similarity import SimilarityParams

ALPHA_FLOOR = 1e-4
PRIOR_FLOOR = 1e-12
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_EXPANSION_ELEMS = 4_000_000


@dataclass
class GGMixture:
    priors: np.ndarray
    means: np.ndarray
    scales: np.ndarray
    shapes: np.ndarray
    log_likelihood_trace: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=np.float64).ravel()
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.scales = np.atleast_2d(np.asarray(self.scales, dtype=np.float64))
        self.shapes = np.asarray(self.shapes, dtype=np.float64).ravel()
        self.validate()

    def validate(self):
        n, d = self.means.shape
        if self.scales.shape != (n, d) or self.priors.shape != (n,) or self.shapes.shape != (n,):
            raise ValueError("mixture parameter shapes disagree")
        if np.any(self.priors < 0) or not math.isclose(self.priors.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("priors must be non-negative and sum to one")
        if np.any(self.scales <= 0) or np.any(self.shapes <= 0):
            raise ValueError("scales and shapes must be positive")

    @property
    def n(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_normalizers(self) -> np.ndarray:
        """``sum_i log(beta_l / (2 alpha_li Gamma(1/beta_l)))`` per component."""
        b = self.shapes[:, None]
        return np.sum(np.log(b) - np.log(2.0 * self.scales) - gammaln(1.0 / b), axis=1)

    def log_constants(self, priors=None) -> np.ndarray:
        """``c_l = log(lambda_l) + log_normalizers``."""
        lam = self.priors if priors is None else np.asarray(priors, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.log(lam) + self.log_normalizers()

    def component_log_density(self, X) -> np.ndarray:
        """``(N, n)`` log-densities of each component, priors excluded."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        N = X.shape[0]
        q = np.empty((N, self.n))
        gauss = np.flatnonzero(self.shapes == 2.0)
        if gauss.size and N * gauss.size * self.dim > _EXPANSION_ELEMS:
            w = self.scales[gauss] ** -2.0
            mu = self.means[gauss]
            q[:, gauss] = (X * X) @ w.T - 2.0 * X @ (w * mu).T + np.sum(w * mu * mu, axis=1)
            rest = np.flatnonzero(self.shapes != 2.0)
        else:
            rest = np.arange(self.n)
        for l in rest:
            q[:, l] = np.sum((np.abs(X - self.means[l]) / self.scales[l]) ** self.shapes[l], axis=1)
        return self.log_normalizers() - q

    def log_joint(self, X, priors=None) -> np.ndarray:
        lam = self.priors if priors is None else np.asarray(priors, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.log(lam) + self.component_log_density(X)

    def log_likelihood(self, X) -> float:
        return float(np.sum(logsumexp(self.log_joint(X), axis=1)))

    def save(self, path) -> None:
        header = {"n": self.n, "d": self.dim, "beta": self.shapes.tolist(), "lambda": self.priors.tolist(),
                  "blobs": ["mu", "alpha"], "dtype": "<f8", "order": "C"}
        with open(path, "wb") as fh:
            fh.write((json.dumps(header) + "\n").encode())
            fh.write(np.ascontiguousarray(self.means, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.scales, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GGMixture":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            n, d = header["n"], header["d"]
            body = np.frombuffer(fh.read(), dtype="<f8")
        if body.size != 2 * n * d:
            raise ValueError(f"{path}: expected {2 * n * d} floats after header, found {body.size}")
        return cls(header["lambda"], body[:n * d].reshape(n, d), body[n * d:].reshape(n, d), header["beta"])


def ggm_log_joint(x, mixture: GGMixture, l: int) -> float:
    """``log P(x and component l) = -sum_i alpha^-beta |x - mu|^beta + c_l``."""
    if not 0 <= l < mixture.n:
        raise IndexError(f"component {l} out of range [0, {mixture.n})")
    x = np.asarray(x, dtype=np.float64)
    beta = mixture.shapes[l]
    quad = np.sum(mixture.scales[l] ** -beta * np.abs(x - mixture.means[l]) ** beta)
    return float(-quad + mixture.log_constants()[l])


# -- estimation -----------------------------------------------------------------

@dataclass
class GGMFitConfig:
    max_iter: int = 100
    tol: float = 1e-7  # stop when the mean per-sample log-likelihood gain drops below this
    beta_range: tuple = (0.3, 4.0)
    seed: int = 0
    fixed_beta: float | None = None
    subsample: int = 100_000
    alpha_floor: float = ALPHA_FLOOR
    beta_tol: float = 1e-4
    lloyd_iters: int = 3


def _kmeans_pp(X, n, rng):
    """Greedy k-means++: each step draws a few D^2-weighted candidates and keeps the best."""
    N = X.shape[0]
    trials = 2 + int(math.log(n))
    centers = [X[rng.integers(N)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, n):
        total = d2.sum()
        if total <= 0:
            cand = rng.integers(N, size=trials)
        else:
            cand = rng.choice(N, size=trials, p=d2 / total)
        best, best_d2 = None, None
        for idx in cand:
            nd = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
            if best_d2 is None or nd.sum() < best_d2.sum():
                best, best_d2 = idx, nd
        centers.append(X[best])
        d2 = best_d2
    return np.array(centers)


def _nearest(X, C):
    d2 = np.sum(X * X, axis=1)[:, None] - 2.0 * X @ C.T + np.sum(C * C, axis=1)
    return np.argmin(d2, axis=1)


def _initial_mixture(X, n, cfg: GGMFitConfig, rng) -> GGMixture:
    sub = X if X.shape[0] <= cfg.subsample else X[rng.choice(X.shape[0], cfg.subsample, replace=False)]
    C = _kmeans_pp(sub, n, rng)
    for _ in range(cfg.lloyd_iters):
        lab = _nearest(sub, C)
        for l in range(n):
            if np.any(lab == l):
                C[l] = sub[lab == l].mean(axis=0)
    lab = _nearest(sub, C)
    beta0 = 2.0 if cfg.fixed_beta is None else float(cfg.fixed_beta)
    # E|x - mu| = alpha Gamma(2/beta) / Gamma(1/beta)
    ratio = math.exp(gammaln(1.0 / beta0) - gammaln(2.0 / beta0))
    global_dev = np.mean(np.abs(sub - sub.mean(axis=0)), axis=0)
    scales = np.empty_like(C)
    counts = np.empty(n)
    for l in range(n):
        members = sub[lab == l]
        counts[l] = len(members)
        dev = np.mean(np.abs(members - C[l]), axis=0) if len(members) else global_dev
        scales[l] = np.maximum(dev * ratio, cfg.alpha_floor)
    priors = (counts + 1.0) / (counts.sum() + n)
    return GGMixture(priors, C, scales, np.full(n, beta0))


def _deviation_sums(X, r, mu, beta):
    return r @ (np.abs(X - mu) ** beta)


def _profile_q(S, R, beta, floor):
    """Expected complete log-likelihood of one component with optimal (floored) scales."""
    with np.errstate(divide="ignore"):
        alpha = np.maximum((beta * S / R) ** (1.0 / beta), floor)
    d = S.size
    q = R * d * (math.log(beta) - math.log(2.0) - gammaln(1.0 / beta)) - R * np.sum(np.log(alpha))
    return float(q - np.sum(S / alpha ** beta)), alpha


def _golden_max(f, lo, hi, tol):
    a, b = lo, hi
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    # an optimum pinned at the range edge is clamped to it
    candidates = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    return max(candidates)[1]


def fit_ggm(patches, n: int, config: GGMFitConfig | None = None) -> GGMixture:
    """Fit an ``n``-component Generalized Gaussian mixture by generalized EM.

    Each M-step is guaranteed not to lower the expected complete
    log-likelihood: priors and scales use their closed-form maximizers, a
    coordinate of the mean moves to the responsibility-weighted mean only if
    that lowers its weighted deviation sum, and a shape from the
    golden-section search is kept only if it improves the profile objective.
    The per-iteration log-likelihoods are stored on
    ``mixture.log_likelihood_trace``.
    """
    cfg = config or GGMFitConfig()
    X = np.atleast_2d(np.asarray(patches, dtype=np.float64))
    N, d = X.shape
    if n < 1 or N < 10 * n:
        raise ValueError(f"need at least 10 samples per component: N={N}, n={n}")
    rng = np.random.default_rng(cfg.seed)
    mix = _initial_mixture(X, n, cfg, rng)
    lo, hi = cfg.beta_range
    trace = []

    for it in range(cfg.max_iter + 1):
        logj = mix.log_joint(X)
        lse = logsumexp(logj, axis=1)
        trace.append(float(lse.sum()))
        if it == cfg.max_iter:
            break
        if it > 0 and (trace[-1] - trace[-2]) < cfg.tol * N:
            break
        r = np.exp(logj - lse[:, None])
        R = r.sum(axis=0)
        means, scales, shapes = mix.means.copy(), mix.scales.copy(), mix.shapes.copy()
        gaussian = cfg.fixed_beta == 2.0
        if gaussian:
            # with beta = 2 the weighted mean is the exact minimizer and the
            # deviation sums follow from the first two weighted moments
            RX = r.T @ X
            RX2 = r.T @ (X * X)
        for l in range(n):
            if gaussian and R[l] >= 1e-8 * N:
                means[l] = RX[l] / R[l]
                S = np.maximum(RX2[l] - RX[l] * means[l], 0.0)
                _, scales[l] = _profile_q(S, R[l], 2.0, cfg.alpha_floor)
                continue
            if R[l] < 1e-8 * N:
                # empty component: restart it on a random data point
                means[l] = X[rng.integers(N)]
                scales[l] = np.maximum(np.mean(np.abs(X - means[l]), axis=0), cfg.alpha_floor)
                R[l] = 1e-8 * N
                continue
            rl = r[:, l]
            beta = shapes[l]
            cand = (rl @ X) / R[l]
            S_old = _deviation_sums(X, rl, means[l], beta)
            S_new = _deviation_sums(X, rl, cand, beta)
            take = S_new < S_old
            means[l] = np.where(take, cand, means[l])
            if cfg.fixed_beta is None:
                S_cache = {}

                def prof(b, rl=rl, mu=means[l], Rl=R[l]):
                    if b not in S_cache:
                        S_cache[b] = _profile_q(_deviation_sums(X, rl, mu, b), Rl, b, cfg.alpha_floor)[0]
                    return S_cache[b]

                b_new = _golden_max(prof, lo, hi, cfg.beta_tol)
                if prof(b_new) > prof(beta):
                    beta = b_new
            _, scales[l] = _profile_q(_deviation_sums(X, rl, means[l], beta), R[l], beta, cfg.alpha_floor)
            shapes[l] = beta
        mix = GGMixture(R / R.sum(), means, scales, shapes)

    mix.log_likelihood_trace = trace
    return mix


def mixture_to_similarity_params(mixture: GGMixture, p: float | None = None) -> SimilarityParams:
    """Weighted l_p similarity with ``z = mu`` and ``u = alpha^-beta``.

    The order defaults to the prior-weighted mean shape; pass ``p`` to pin it.
    """
    order = float(np.dot(mixture.priors, mixture.shapes)) if p is None else float(p)
    log_u = -mixture.shapes[:, None] * np.log(mixture.scales)
    return SimilarityParams("lp", mixture.means.copy(), log_u, order)


# -- location priors and offsets -------------------------------------------------

@dataclass
class LocationPriors:
    priors: np.ndarray  # (Q_h, Q_w, n), each location on the simplex
    log_likelihood_traces: list = field(default_factory=list, repr=False)


def fit_location_priors(patches, locations, mixture: GGMixture, grid_shape, max_iter: int = 500,
                        tol: float = 1e-10) -> LocationPriors:
    """Refit only the priors at each pool location, components held fixed.

    ``locations[i]`` is the flat pool index (row-major over ``grid_shape``)
    of ``patches[i]``. Locations without samples get uniform priors.
    """
    X = np.atleast_2d(np.asarray(patches, dtype=np.float64))
    loc = np.asarray(locations, dtype=np.intp).ravel()
    Qh, Qw = grid_shape
    n = mixture.n
    out = np.empty((Qh * Qw, n))
    traces = []
    dens = mixture.component_log_density(X)
    for g in range(Qh * Qw):
        D = dens[loc == g]
        if D.shape[0] == 0:
            out[g] = 1.0 / n
            traces.append([])
            continue
        lam = mixture.priors.copy()
        trace = []
        for _ in range(max_iter):
            with np.errstate(divide="ignore"):
                logj = D + np.log(lam)
            lse = logsumexp(logj, axis=1)
            trace.append(float(lse.sum()))
            if len(trace) > 1 and trace[-1] - trace[-2] < tol * D.shape[0]:
                break
            lam = np.exp(logj - lse[:, None]).mean(axis=0)
            lam /= lam.sum()
        out[g] = lam
        traces.append(trace)
    return LocationPriors(out.reshape(Qh, Qw, n), traces)


def location_offsets(mixture: GGMixture, priors: LocationPriors) -> np.ndarray:
    """Offsets ``b[l, q_h, q_w] = log lambda_l,loc + log_normalizer_l``."""
    lam = np.maximum(priors.priors, PRIOR_FLOOR)
    b = np.log(lam) + mixture.log_normalizers()
    return np.moveaxis(b, -1, 0)
