"""The patch-labeling SimNet and the ConvNet special cases of the MEX layer.

Score of class ``r``::

    out(r) = MEX_xi2 over patches (i, j) of
             MEX_xi1 over templates l of  sim(x_ij, z_l) + b[r, l, q(i, j)]

where ``q`` maps a patch to its offset-sharing pool region. ``xi2=None``
stands for the exact mean-limit (``xi2 -> 0``); with ``pooling="sum"`` that
mean is multiplied by the patch count, i.e. the class score is the sum of the
patch-level scores. Both rank classes identically, but the sum keeps the
softmax loss from being flattened by the patch count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import WhiteningTransform
from .kernels import KernelSpec, PatchSvmModel
from .mex import MexLayerParams, mex, mex_grad, mex_layer_forward
from .similarity import SimilarityParams, similarity_backward, similarity_forward
from .tensor import ShapeError, extract_patches, output_extent

PARAM_GROUPS = ("z", "v", "p", "b", "xi1", "xi2")
# below this |xi1| the factorized first-layer path loses digits
_FAST_XI_MIN = 1e-2
_BATCH_CHUNK = 32


def pool_index(grid_shape, pool_shape) -> np.ndarray:
    """Flat pool id of every patch, row-major over the patch grid.

    Row ``i`` goes to pool row ``i * Q_h // P_h``; for a 2x2 lattice this
    splits at ``ceil(P_h / 2)``.
    """
    Ph, Pw = grid_shape
    Qh, Qw = pool_shape
    qh = np.arange(Ph) * Qh // Ph
    qw = np.arange(Pw) * Qw // Pw
    return (qh[:, None] * Qw + qw[None, :]).ravel()


@dataclass
class LossReport:
    loss: float
    scores: np.ndarray
    probabilities: np.ndarray
    predicted: np.ndarray


def softmax(scores, axis=-1):
    s = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=axis, keepdims=True)


class PatchLabelingNet:
    """Similarity layer -> MEX with region-shared offsets -> MEX pooling.

    Parameters are held as float64 arrays: templates ``z`` ``(n, d)``,
    log-weights ``v`` ``(n, d)`` (``None`` when unweighted), offsets ``b``
    ``(k, n, Q_h, Q_w)``, and scalars ``p``, ``xi1``, ``xi2``.
    ``trainable`` names the groups that receive gradients.
    """

    def __init__(self, similarity: SimilarityParams, offsets, image_shape, patch=(6, 6), stride=1,
                 xi1=1.0, xi2=None, trainable=("z", "v", "b"), whitening: WhiteningTransform | None = None,
                 pooling: str = "mean"):
        self.similarity = similarity
        self.b = np.asarray(offsets, dtype=np.float64)
        if self.b.ndim != 4 or self.b.shape[1] != similarity.n:
            raise ShapeError(f"offsets must be (k, n={similarity.n}, Q_h, Q_w), got {self.b.shape}")
        self.image_shape = tuple(int(s) for s in image_shape)
        self.patch = tuple(int(s) for s in patch)
        self.stride = int(stride)
        H, W, D = self.image_shape
        h, w = self.patch
        if h * w * D != similarity.dim:
            raise ShapeError(f"patch {h}x{w}x{D} does not match template dimension {similarity.dim}")
        self.grid_shape = (output_extent(H, h, stride), output_extent(W, w, stride))
        if min(self.grid_shape) < 1:
            raise ShapeError(f"patch {h}x{w} does not fit image {H}x{W}")
        Qh, Qw = self.b.shape[2:]
        if Qh > self.grid_shape[0] or Qw > self.grid_shape[1]:
            raise ShapeError("pool lattice is finer than the patch grid")
        self.pool = pool_index(self.grid_shape, (Qh, Qw))
        # internally patches are kept sorted by pool region so each region is a contiguous slice
        self._order = np.argsort(self.pool, kind="stable")
        self._spool = self.pool[self._order]
        edges = np.searchsorted(self._spool, np.arange(Qh * Qw + 1))
        self._regions = [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
        self.xi1 = float(xi1)
        self.xi2 = None if xi2 is None else float(xi2)
        if pooling not in ("mean", "sum"):
            raise ValueError(f"pooling must be 'mean' or 'sum', got {pooling!r}")
        if pooling == "sum" and self.xi2 is not None:
            raise ValueError("sum pooling is the xi2 -> 0 limit; pass xi2=None")
        self.pooling = pooling
        self.trainable = set(trainable)
        unknown = self.trainable - set(PARAM_GROUPS)
        if unknown:
            raise ValueError(f"unknown parameter groups {sorted(unknown)}")
        if "v" in self.trainable and not similarity.weighted:
            self.trainable.discard("v")
        if self.xi2 is None:
            self.trainable.discard("xi2")
        self.whitening = whitening

    # -- shapes ----------------------------------------------------------------
    @property
    def k(self) -> int:
        return self.b.shape[0]

    @property
    def n(self) -> int:
        return self.similarity.n

    @property
    def pool_shape(self) -> tuple[int, int]:
        return self.b.shape[2], self.b.shape[3]

    @property
    def n_patches(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]

    # -- parameters ------------------------------------------------------------
    def parameters(self) -> dict:
        """Current parameter values keyed by group (scalars as 0-d arrays)."""
        out = {"z": self.similarity.templates, "p": np.array(self.similarity.p), "b": self.b,
               "xi1": np.array(self.xi1)}
        if self.similarity.weighted:
            out["v"] = self.similarity.log_weights
        if self.xi2 is not None:
            out["xi2"] = np.array(self.xi2)
        return out

    def set_parameters(self, params: dict) -> None:
        for name, val in params.items():
            if name == "z":
                self.similarity.templates = np.array(val, dtype=np.float64)
            elif name == "v":
                self.similarity.log_weights = np.array(val, dtype=np.float64)
            elif name == "p":
                self.similarity.p = float(val)
            elif name == "b":
                self.b = np.array(val, dtype=np.float64)
            elif name == "xi1":
                self.xi1 = float(val)
            elif name == "xi2":
                self.xi2 = float(val)
            else:
                raise KeyError(name)

    def copy(self) -> "PatchLabelingNet":
        sim = SimilarityParams(self.similarity.form, self.similarity.templates.copy(),
                               None if self.similarity.log_weights is None else self.similarity.log_weights.copy(),
                               self.similarity.p)
        return PatchLabelingNet(sim, self.b.copy(), self.image_shape, self.patch, self.stride, self.xi1, self.xi2,
                                tuple(self.trainable), self.whitening, self.pooling)

    # -- forward ---------------------------------------------------------------
    def patches(self, images, pool_sorted: bool = False) -> np.ndarray:
        """``(B, P, d)`` patch rows, whitened when a transform is attached.

        Rows are in row-major grid order, or grouped by pool region with
        ``pool_sorted``.
        """
        x = np.asarray(images, dtype=np.float64)
        if x.shape[-3:] != self.image_shape:
            raise ShapeError(f"image shape {x.shape[-3:]} does not match configured {self.image_shape}")
        if x.ndim == 3:
            x = x[None]
        grid = extract_patches(x, self.patch[0], self.patch[1], self.stride)
        rows = grid.patches.reshape(x.shape[0], self.n_patches, -1)
        if pool_sorted:
            rows = rows[:, self._order]
        if self.whitening is not None:
            rows = self.whitening.apply(rows)
        return rows

    def _pool_offsets(self, pool_sorted: bool = False) -> np.ndarray:
        """``(k, P, n)`` offsets seen by every patch."""
        Qh, Qw = self.pool_shape
        flat = self.b.reshape(self.k, self.n, Qh * Qw)
        pool = self._spool if pool_sorted else self.pool
        return np.transpose(flat[:, :, pool], (0, 2, 1))

    def _fast_ok(self) -> bool:
        return math.isfinite(self.xi1) and abs(self.xi1) >= _FAST_XI_MIN

    def _first_layer(self, S):
        """Per-patch class scores ``(B, k, P)`` plus what backward needs."""
        xi = self.xi1
        if not self._fast_ok():
            vals = S[:, None, :, :] + self._pool_offsets(True)[None]
            return mex(vals, xi, axis=-1), ("direct", vals)
        # factorized: sum_l exp(xi (S + b)) = sum_l E_pl A_rl per pool region
        M = S.max(axis=2, keepdims=True) if xi > 0 else S.min(axis=2, keepdims=True)
        E = np.exp(xi * (S - M))
        Qh, Qw = self.pool_shape
        bflat = self.b.reshape(self.k, self.n, Qh * Qw)
        Bref = bflat.max(axis=1) if xi > 0 else bflat.min(axis=1)  # (k, G)
        A = np.exp(xi * (bflat - Bref[:, None, :]))  # (k, n, G)
        T = self._pool_contract(E, A)
        if not np.all(T > 1e-300):
            vals = S[:, None, :, :] + self._pool_offsets(True)[None]
            return mex(vals, xi, axis=-1), ("direct", vals)
        shift = M[:, None, :, 0] + Bref[:, self._spool][None]  # (B, k, P)
        m = shift + np.log(T / self.n) / xi
        return m, ("fast", S, M, E, A, Bref, T)

    def _pool_contract(self, E, A):
        """``T[b, r, p] = sum_l E[b, p, l] A[r, l, q(p)]`` as one matmul per pool region."""
        B, P, n = E.shape
        G = A.shape[2]
        # one GEMM against every region's offsets, then keep each patch's own region
        U = (E.reshape(-1, n) @ A.transpose(1, 0, 2).reshape(n, -1)).reshape(B, P, self.k, G)
        T = np.empty((B, P, self.k))
        for grp, sel in enumerate(self._regions):
            T[:, sel] = U[:, sel, :, grp]
        return T.transpose(0, 2, 1)

    def _second_layer(self, m):
        if self.xi2 is None:
            return m.sum(axis=-1) if self.pooling == "sum" else m.mean(axis=-1)
        return mex(m, self.xi2, axis=-1)

    def _forward_batch(self, X):
        S = similarity_forward(X, self.similarity)
        m, cache = self._first_layer(S)
        return self._second_layer(m), (X, S, m, cache)

    def forward(self, images) -> np.ndarray:
        """Class scores: ``(k,)`` for one image, ``(B, k)`` for a batch."""
        x = np.asarray(images, dtype=np.float64)
        single = x.ndim == 3
        xb = x[None] if single else x
        out = np.concatenate([self._forward_batch(self.patches(xb[i:i + _BATCH_CHUNK], True))[0]
                              for i in range(0, xb.shape[0], _BATCH_CHUNK)])
        return out[0] if single else out

    def predict(self, images):
        """Argmax of the scores, lowest index on ties."""
        s = self.forward(images)
        return int(np.argmax(s)) if s.ndim == 1 else np.argmax(s, axis=1)

    # -- backward --------------------------------------------------------------
    def _backward_batch(self, d_out, fwd) -> dict:
        X, S, m, cache = fwd
        grads = {}
        if self.xi2 is None:
            scale = 1.0 if self.pooling == "sum" else 1.0 / m.shape[-1]
            dm = np.repeat(d_out[:, :, None] * scale, m.shape[-1], axis=2)
        else:
            w2, dxi2 = mex_grad(m, self.xi2, axis=-1)
            dm = d_out[:, :, None] * w2
            grads["xi2"] = float(np.sum(d_out * dxi2))

        Qh, Qw = self.pool_shape
        G = Qh * Qw
        if cache[0] == "direct":
            vals = cache[1]
            w1, dxi1 = mex_grad(vals, self.xi1, axis=-1)
            g = dm[..., None] * w1  # (B, k, P, n)
            dS = g.sum(axis=1)
            d_boff = g.sum(axis=0)  # (k, P, n)
            db = np.zeros((self.k, self.n, G))
            for grp, sel in enumerate(self._regions):
                db[:, :, grp] = d_boff[:, sel, :].sum(axis=1)
            grads["xi1"] = float(np.sum(dm * dxi1))
        else:
            _, S, M, E, A, Bref, T = cache
            xi = self.xi1
            Gm = dm / T  # (B, k, P)
            bflat = self.b.reshape(self.k, self.n, G)
            dS = np.empty_like(E)
            db = np.zeros((self.k, self.n, G))
            # sum_l E A (c - shift) split into the similarity and offset parts
            wc = self._pool_contract(E * (S - M), A) + self._pool_contract(E, A * (bflat - Bref[:, None, :]))
            for grp, sel in enumerate(self._regions):
                Gs = np.swapaxes(Gm[:, :, sel], 1, 2)  # (B, Pg, k)
                dS[:, sel, :] = Gs @ A[:, :, grp]
                db[:, :, grp] = A[:, :, grp] * (Gs.reshape(-1, self.k).T @ E[:, sel, :].reshape(-1, self.n))
            dS *= E
            # d m / d xi1 = (sum_l w c - m) / xi, everything relative to the shift
            dxi1 = (wc / T - np.log(T / self.n) / xi) / xi
            grads["xi1"] = float(np.sum(dm * dxi1))

        grads["b"] = db.reshape(self.b.shape)
        sg = similarity_backward(X, self.similarity, dS, want_p="p" in self.trainable)
        grads["z"] = sg.d_templates
        if self.similarity.weighted:
            grads["v"] = sg.d_log_weights
        grads["p"] = sg.d_p
        return grads

    def loss_and_backward(self, images, labels):
        """Mean softmax cross-entropy over the batch and its parameter gradients.

        Frozen groups get zero gradients. Returns ``(LossReport, grads)``.
        """
        x = np.asarray(images, dtype=np.float64)
        single = x.ndim == 3
        xb = x[None] if single else x
        y = np.atleast_1d(np.asarray(labels)).astype(np.intp)
        if y.shape[0] != xb.shape[0]:
            raise ValueError("one label per image required")
        if np.any((y < 0) | (y >= self.k)):
            raise ValueError(f"labels must lie in [0, {self.k})")
        B = xb.shape[0]
        params = self.parameters()
        total = {name: np.zeros_like(np.asarray(val, dtype=np.float64)) for name, val in params.items()}
        scores_all, loss_sum = [], 0.0
        for lo in range(0, B, _BATCH_CHUNK):
            X = self.patches(xb[lo:lo + _BATCH_CHUNK], True)
            scores, fwd = self._forward_batch(X)
            yy = y[lo:lo + _BATCH_CHUNK]
            shifted = scores - scores.max(axis=1, keepdims=True)
            logz = np.log(np.exp(shifted).sum(axis=1))
            logp = shifted - logz[:, None]
            loss_sum += float(-logp[np.arange(len(yy)), yy].sum())
            d_out = np.exp(logp)
            d_out[np.arange(len(yy)), yy] -= 1.0
            d_out /= B
            g = self._backward_batch(d_out, fwd)
            for name in total:
                if name in self.trainable and name in g:
                    total[name] = total[name] + g[name]
            scores_all.append(scores)
        scores = np.concatenate(scores_all)
        probs = softmax(scores, axis=1)
        pred = np.argmax(scores, axis=1)
        if single:
            report = LossReport(loss_sum, scores[0], probs[0], int(pred[0]))
        else:
            report = LossReport(loss_sum / B, scores, probs, pred)
        return report, total

    # -- equivalent formulations -------------------------------------------------
    def mex_layers(self) -> tuple[MexLayerParams, MexLayerParams]:
        """The two MEX layers as generic :class:`MexLayerParams`.

        Layer one maps the ``(P, n)`` similarity map to ``(k, P)`` with tied
        offsets; layer two maps ``(k, P)`` to ``(k,)``.
        """
        P, n, k = self.n_patches, self.n, self.k
        Qh, Qw = self.pool_shape
        blocks1 = (np.arange(P)[None, :, None] * n + np.arange(n)[None, None, :]).repeat(k, 0).reshape(k * P, n)
        r = np.arange(k)[:, None, None]
        l = np.arange(n)[None, None, :]
        g = self.pool[None, :, None]
        # offset b[r, l, g] lives at flat index (r * n + l) * G + g
        oidx = ((r * n + l) * (Qh * Qw) + g).reshape(k * P, n)
        layer1 = MexLayerParams(blocks1, self.xi1, offsets=self.b, offset_index=oidx, out_shape=(k, P))
        blocks2 = np.arange(k * P).reshape(k, P)
        layer2 = MexLayerParams(blocks2, 0.0 if self.xi2 is None else self.xi2, out_shape=(k,))
        return layer1, layer2

    def forward_layers(self, image) -> np.ndarray:
        """Scores of one image by composing the generic layer functions."""
        S = similarity_forward(self.patches(image)[0], self.similarity)
        l1, l2 = self.mex_layers()
        out = mex_layer_forward(mex_layer_forward(S, l1), l2)
        return out * self.n_patches if self.pooling == "sum" else out

    def collapsed_scores(self, image) -> np.ndarray:
        """Single MEX over all (patch, template) pairs; equals forward when xi1 == xi2."""
        S = similarity_forward(self.patches(image)[0], self.similarity)
        vals = S[None] + self._pool_offsets()
        return mex(vals.reshape(self.k, -1), self.xi1, axis=-1)

    # -- persistence -------------------------------------------------------------
    def save(self, path) -> None:
        blobs = [("z", self.similarity.templates), ("b", self.b)]
        if self.similarity.weighted:
            blobs.insert(1, ("v", self.similarity.log_weights))
        if self.whitening is not None:
            blobs += [("white_mean", self.whitening.mean), ("white_matrix", self.whitening.matrix)]
        manifest = {
            "format": "simnet-checkpoint", "version": 1,
            "image_shape": list(self.image_shape), "patch": list(self.patch), "stride": self.stride,
            "n": self.n, "k": self.k, "pool_shape": list(self.pool_shape),
            "form": self.similarity.form, "p": self.similarity.p, "weighted": self.similarity.weighted,
            "xi1": self.xi1, "xi2": self.xi2, "pooling": self.pooling, "trainable": sorted(self.trainable),
            "whitening_epsilon": None if self.whitening is None else self.whitening.epsilon,
            "dtype": "<f8", "order": "C",
            "blobs": [{"name": name, "shape": list(np.shape(arr))} for name, arr in blobs],
        }
        with open(path, "wb") as fh:
            fh.write((json.dumps(manifest) + "\n").encode())
            for _, arr in blobs:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PatchLabelingNet":
        with open(path, "rb") as fh:
            manifest = json.loads(fh.readline())
            body = fh.read()
        if manifest.get("format") != "simnet-checkpoint":
            raise ValueError(f"{path}: not a SimNet checkpoint")
        arrays, pos = {}, 0
        for spec in manifest["blobs"]:
            count = int(np.prod(spec["shape"], dtype=np.int64))
            arrays[spec["name"]] = np.frombuffer(body, dtype="<f8", count=count, offset=pos).reshape(spec["shape"]).copy()
            pos += 8 * count
        if pos != len(body):
            raise ValueError(f"{path}: manifest declares {pos} bytes of blobs, file has {len(body)}")
        sim = SimilarityParams(manifest["form"], arrays["z"], arrays.get("v"), manifest["p"])
        white = None
        if "white_mean" in arrays:
            white = WhiteningTransform(arrays["white_mean"], arrays["white_matrix"], manifest["whitening_epsilon"])
        return cls(sim, arrays["b"], manifest["image_shape"], manifest["patch"], manifest["stride"],
                   manifest["xi1"], manifest["xi2"], manifest["trainable"], white, manifest.get("pooling", "mean"))


def mlp_scores(x, similarity: SimilarityParams, offsets, xi: float) -> np.ndarray:
    """Single-hidden-layer construction: ``MEX_xi{sim(x, z_l) + b_rl}_l`` per output ``r``."""
    s = similarity_forward(np.asarray(x, dtype=np.float64)[None], similarity)[0]
    b = np.atleast_2d(np.asarray(offsets, dtype=np.float64))
    return mex(s[None, :] + b, xi, axis=1)


def patch_svm_from_net(net: PatchLabelingNet) -> PatchSvmModel:
    """Patch-based kernel-SVM with ``alpha_rlp = exp(xi b_rlp)``.

    Needs unweighted similarity and ``xi1 == xi2 > 0``.
    """
    if net.similarity.weighted:
        raise NotImplementedError("weighted similarity has no kernel-machine form")
    if net.xi2 is None or not math.isclose(net.xi1, net.xi2) or net.xi1 <= 0:
        raise ValueError("kernel form requires xi1 == xi2 > 0")
    kind = "exponential" if net.similarity.form == "linear" else "generalized_gaussian"
    spec = KernelSpec(kind, net.xi1, net.similarity.p)
    Qh, Qw = net.pool_shape
    alpha = np.exp(net.xi1 * net.b.reshape(net.k, net.n, Qh * Qw))
    return PatchSvmModel.from_templates(net.similarity.templates, alpha, spec, net.pool)


# -- ConvNet realizations -----------------------------------------------------------

def realize_relu(shape) -> MexLayerParams:
    """Single-entry blocks, zero offsets, constant 0, xi -> +inf: ``max(x, 0)``."""
    T = int(np.prod(shape))
    return MexLayerParams(np.arange(T)[:, None], xi=1.0, offsets=np.zeros((T, 1)), constants=np.zeros(T),
                          out_shape=tuple(shape), hard=True)


def _window_blocks(shape, window, stride):
    H, W, D = shape
    wh, ww = (window, window) if np.isscalar(window) else window
    if wh > H or ww > W:
        raise ShapeError(f"window {wh}x{ww} larger than input {H}x{W}")
    Oh, Ow = output_extent(H, wh, stride), output_extent(W, ww, stride)
    oi = np.arange(Oh)[:, None, None, None, None] * stride
    oj = np.arange(Ow)[None, :, None, None, None] * stride
    c = np.arange(D)[None, None, :, None, None]
    di = np.arange(wh)[None, None, None, :, None]
    dj = np.arange(ww)[None, None, None, None, :]
    flat = ((oi + di) * W + (oj + dj)) * D + c
    return flat.reshape(Oh * Ow * D, wh * ww), (Oh, Ow, D)


def realize_maxpool(shape, window, stride) -> MexLayerParams:
    """2-D blocks per channel, zero offsets, no constant, xi -> +inf."""
    blocks, out = _window_blocks(shape, window, stride)
    return MexLayerParams(blocks, xi=1.0, offsets=np.zeros(blocks.shape), out_shape=out, hard=True)


def realize_avgpool(shape, window, stride) -> MexLayerParams:
    """As max pooling but at the xi -> 0 mean-limit."""
    blocks, out = _window_blocks(shape, window, stride)
    return MexLayerParams(blocks, xi=0.0, offsets=np.zeros(blocks.shape), out_shape=out)


def soft_variant(params: MexLayerParams, xi: float) -> MexLayerParams:
    """Same layer evaluated at a finite xi instead of its hard limit."""
    return MexLayerParams(params.blocks, xi, params.offsets, params.offset_index, params.constants,
                          params.out_shape, hard=False)
