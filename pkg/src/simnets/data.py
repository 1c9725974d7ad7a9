"""Dataset ingestion, contrast normalization, ZCA whitening and synthetic data.

CIFAR-10 binary batches hold 10,000 records of 3073 bytes: one label byte
followed by the 32x32 red, green and blue planes, each row-major.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RECORD_BYTES = 1 + 32 * 32 * 3
RECORDS_PER_FILE = 10_000
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILES = ("test_batch.bin",)
# contrast normalization regularizer for pixels scaled to [0, 1]
CONTRAST_EPS = 10.0 / 255.0 ** 2


class DataFormatError(ValueError):
    pass


@dataclass
class LabeledImageSet:
    images: np.ndarray  # (N, H, W, D)
    labels: np.ndarray  # (N,) ints

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx) -> "LabeledImageSet":
        return LabeledImageSet(self.images[idx], self.labels[idx])


def _find_batch_dir(root: Path) -> Path:
    for cand in (root, root / "cifar-10-batches-bin"):
        if (cand / TRAIN_FILES[0]).exists() or (cand / TEST_FILES[0]).exists():
            return cand
    raise FileNotFoundError(f"no CIFAR-10 binary batches under {root}")


def read_cifar_batch(path) -> tuple[np.ndarray, np.ndarray]:
    raw = np.fromfile(path, dtype=np.uint8)
    expected = RECORD_BYTES * RECORDS_PER_FILE
    if raw.size != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes, found {raw.size}")
    rec = raw.reshape(RECORDS_PER_FILE, RECORD_BYTES)
    labels = rec[:, 0].astype(np.intp)
    planes = rec[:, 1:].reshape(-1, 3, 32, 32)
    images = np.transpose(planes, (0, 2, 3, 1)).astype(np.float64) / 255.0
    return images, labels


def balanced_subset(labels, per_class: int, seed) -> np.ndarray:
    """Seeded selection of ``per_class`` indices of every label, sorted."""
    rng = np.random.default_rng(seed)
    picks = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < per_class:
            raise ValueError(f"class {c} has only {idx.size} samples, {per_class} requested")
        picks.append(rng.choice(idx, per_class, replace=False))
    return np.sort(np.concatenate(picks))


def load_cifar10(directory, per_class: int | None = None, seed=0, split: str = "train") -> LabeledImageSet:
    """Load the train or test split, optionally a class-balanced subset.

    Pixels are scaled to [0, 1]; images come back as ``(N, 32, 32, 3)``.
    """
    root = _find_batch_dir(Path(directory))
    names = TRAIN_FILES if split == "train" else TEST_FILES
    parts = [read_cifar_batch(root / name) for name in names]
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    data = LabeledImageSet(images, labels)
    if per_class is not None:
        data = data.subset(balanced_subset(labels, per_class, seed))
    return data


def normalize_image(image, eps: float = CONTRAST_EPS) -> np.ndarray:
    """Per-image brightness/contrast normalization; batches are handled per image."""
    x = np.asarray(image, dtype=np.float64)
    axes = tuple(range(x.ndim - 3, x.ndim))
    mu = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


@dataclass
class WhiteningTransform:
    mean: np.ndarray
    matrix: np.ndarray
    epsilon: float

    def apply(self, patches) -> np.ndarray:
        x = np.asarray(patches, dtype=np.float64)
        # matrix is symmetric, so (x - m) W^T == (x - m) W
        return (x - self.mean) @ self.matrix


def zca_fit(patches, epsilon: float = 0.1) -> WhiteningTransform:
    X = np.atleast_2d(np.asarray(patches, dtype=np.float64))
    N, d = X.shape
    if N < d + 1:
        raise ValueError(f"need at least d+1={d + 1} patches to fit whitening, got {N}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / N
    s, E = np.linalg.eigh(0.5 * (cov + cov.T))
    s = np.maximum(s, 0.0)
    W = (E * (s + epsilon) ** -0.5) @ E.T
    return WhiteningTransform(mean, 0.5 * (W + W.T), float(epsilon))


def zca_apply(transform: WhiteningTransform, patches) -> np.ndarray:
    return transform.apply(patches)


def sample_patches(images, h, w, count, rng, stride=1) -> tuple[np.ndarray, np.ndarray]:
    """Random patches from random images; returns ``(patches, (row, col) of each)``."""
    from .tensor import output_extent

    images = np.asarray(images)
    N, H, W, D = images.shape
    Ph, Pw = output_extent(H, h, stride), output_extent(W, w, stride)
    img = rng.integers(N, size=count)
    i = rng.integers(Ph, size=count)
    j = rng.integers(Pw, size=count)
    di, dj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    rows = (i * stride)[:, None, None] + di
    cols = (j * stride)[:, None, None] + dj
    out = images[img[:, None, None], rows, cols]  # (count, h, w, D)
    return out.reshape(count, h * w * D), np.column_stack([i, j])


# -- synthetic data -------------------------------------------------------------------

def sample_generalized_gaussian(mu, alpha, beta, size, rng) -> np.ndarray:
    """``mu + sign * alpha * G^(1/beta)`` with ``G ~ Gamma(1/beta, 1)``."""
    mu = np.asarray(mu, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    shape = (size,) + mu.shape
    g = rng.gamma(1.0 / beta, 1.0, size=shape)
    sign = rng.choice(np.array([-1.0, 1.0]), size=shape)
    return mu + sign * alpha * g ** (1.0 / beta)


def synthetic_mixture_dataset(mixture, N: int, seed=0, location_priors=None):
    """Exact samples from a Generalized Gaussian mixture.

    Returns ``(X, components)``. With ``location_priors`` (``(L, n)``) the
    samples are split evenly over the ``L`` locations and a third array of
    location ids is returned.
    """
    rng = np.random.default_rng(seed)
    if location_priors is None:
        comps = rng.choice(mixture.n, size=N, p=mixture.priors)
        locs = None
    else:
        lp = np.asarray(location_priors, dtype=np.float64).reshape(-1, mixture.n)
        locs = np.arange(N) % lp.shape[0]
        comps = np.array([rng.choice(mixture.n, p=lp[g]) for g in locs], dtype=np.intp)
    X = np.empty((N, mixture.dim))
    for l in range(mixture.n):
        sel = comps == l
        if sel.any():
            X[sel] = sample_generalized_gaussian(mixture.means[l], mixture.scales[l], mixture.shapes[l],
                                                 int(sel.sum()), rng)
    if locs is None:
        return X, comps
    return X, comps, locs


@dataclass
class SyntheticImageSpec:
    """Class-structured images assembled from a bank of patch motifs.

    Each image is a 5x5 arrangement of 6x6 tiles (offset by one pixel) on a
    noise background. Every class has its own motif distribution in each
    image quadrant; tiles draw a motif from it and add Generalized Gaussian
    noise.
    """

    classes: int = 10
    motifs: int = 24
    size: int = 32
    channels: int = 3
    tile: int = 6
    motif_noise: float = 0.6
    background: float = 0.3
    concentration: float = 0.35
    noise_shape: float = 2.0
    seed: int = 1234


def _motif_bank(spec: SyntheticImageSpec, rng):
    t, D = spec.tile, spec.channels
    raw = rng.standard_normal((spec.motifs, t + 2, t + 2, D))
    # light smoothing gives the motifs image-like spatial correlation
    smooth = (raw[:, :-2, 1:-1] + raw[:, 2:, 1:-1] + raw[:, 1:-1, :-2] + raw[:, 1:-1, 2:] + 2 * raw[:, 1:-1, 1:-1]) / 6
    return smooth / smooth.std(axis=(1, 2, 3), keepdims=True)


def _class_priors(spec: SyntheticImageSpec, rng):
    return rng.dirichlet(np.full(spec.motifs, spec.concentration), size=(spec.classes, 4))


def synthetic_image_dataset(per_class: int, spec: SyntheticImageSpec | None = None, seed=0) -> LabeledImageSet:
    """Images in [0, 1]-like scale whose class is planted in quadrant motif statistics.

    The motif bank and class priors depend only on ``spec.seed``; ``seed``
    drives the per-image sampling, so train and test sets share structure.
    """
    spec = spec or SyntheticImageSpec()
    struct = np.random.default_rng(spec.seed)
    bank = _motif_bank(spec, struct)
    priors = _class_priors(spec, struct)
    rng = np.random.default_rng(seed)
    t, S, D = spec.tile, spec.size, spec.channels
    starts = np.arange(1, S - t + 1, t)[: (S - 1) // t]
    N = per_class * spec.classes
    labels = np.repeat(np.arange(spec.classes), per_class)
    images = spec.background * rng.standard_normal((N, S, S, D))
    for n_img in range(N):
        r = labels[n_img]
        for a in starts:
            for c in starts:
                quad = 2 * int(a + t / 2 >= S / 2) + int(c + t / 2 >= S / 2)
                m = rng.choice(spec.motifs, p=priors[r, quad])
                noise = sample_generalized_gaussian(np.zeros((t, t, D)), spec.motif_noise, spec.noise_shape, 1, rng)[0]
                images[n_img, a:a + t, c:c + t] += bank[m] + noise
    perm = rng.permutation(N)
    return LabeledImageSet(0.5 + 0.1 * images[perm], labels[perm])


def save_image_set(data: LabeledImageSet, directory, prefix: str) -> None:
    from .tensor import save_tensor

    d = Path(directory)
    save_tensor(d / f"{prefix}_images.tensor", data.images)
    save_tensor(d / f"{prefix}_labels.tensor", data.labels.astype(np.float64))


def load_image_set(directory, prefix: str) -> LabeledImageSet:
    from .tensor import load_tensor

    d = Path(directory)
    return LabeledImageSet(load_tensor(d / f"{prefix}_images.tensor"),
                           load_tensor(d / f"{prefix}_labels.tensor").astype(np.intp))


def save_whitening(transform: WhiteningTransform, path) -> None:
    header = {"d": int(transform.mean.size), "epsilon": transform.epsilon, "blobs": ["mean", "matrix"],
              "dtype": "<f8"}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(transform.mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(transform.matrix, dtype="<f8").tobytes())


def load_whitening(path) -> WhiteningTransform:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        body = np.frombuffer(fh.read(), dtype="<f8")
    d = header["d"]
    if body.size != d + d * d:
        raise DataFormatError(f"{path}: expected {d + d * d} floats, found {body.size}")
    return WhiteningTransform(body[:d].copy(), body[d:].reshape(d, d).copy(), header["epsilon"])
