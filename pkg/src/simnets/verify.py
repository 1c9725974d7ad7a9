"""Property suites that check every layer against an independent oracle.

Each suite returns a :class:`SuiteReport` listing the observed error of
every property next to its tolerance. The CLI ``verify`` command and the
acceptance tests both run these.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from . import kernels as K
from .data import synthetic_mixture_dataset
from .ggm import (GGMFitConfig, GGMixture, fit_ggm, fit_location_priors, ggm_log_joint, location_offsets,
                  mixture_to_similarity_params)
from .mex import MexLayerParams, mex, mex_grad, mex_layer_backward, mex_layer_forward
from .network import (PatchLabelingNet, mlp_scores, patch_svm_from_net, realize_avgpool, realize_maxpool,
                      realize_relu, soft_variant)
from .similarity import SimilarityParams, similarity_backward, similarity_forward
from .trainer import grad_check

SUITES = ("mex", "grad", "kernel-mlp", "kernel-patch", "psd", "ggm", "regions")


@dataclass
class PropertyResult:
    name: str
    observed: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    results: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def add_max(self, name, observed, tolerance, detail=""):
        """Pass when ``observed <= tolerance``."""
        self.results.append(PropertyResult(name, float(observed), tolerance, bool(observed <= tolerance), detail))

    def add_min(self, name, observed, threshold, detail=""):
        """Pass when ``observed >= threshold``."""
        self.results.append(PropertyResult(name, float(observed), threshold, bool(observed >= threshold), detail))

    def add_flag(self, name, ok, detail=""):
        self.results.append(PropertyResult(name, float(bool(ok)), 1.0, bool(ok), detail))

    def format(self) -> str:
        lines = [f"suite {self.suite}: {'PASS' if self.passed else 'FAIL'} ({self.seconds:.2f}s)"]
        for r in self.results:
            tag = "ok  " if r.passed else "FAIL"
            extra = f"  [{r.detail}]" if r.detail else ""
            lines.append(f"  {tag} {r.name}: observed={r.observed:.3e} tolerance={r.tolerance:.3e}{extra}")
        return "\n".join(lines)

    def to_rows(self) -> list:
        return [{"suite": self.suite, "property": r.name, "observed": r.observed, "tolerance": r.tolerance,
                 "passed": r.passed} for r in self.results]


def _rel(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def _fd(fun, theta, eps=1e-5):
    """Central-difference gradient of a scalar function of an array."""
    theta = np.array(theta, dtype=np.float64)
    g = np.empty(theta.size)
    flat = theta.reshape(-1)
    for j in range(flat.size):
        t = flat.copy()
        t[j] += eps
        up = fun(t.reshape(theta.shape))
        t[j] -= 2 * eps
        g[j] = (up - fun(t.reshape(theta.shape))) / (2 * eps)
    return g.reshape(theta.shape)


# -- MEX operator and ConvNet realizations ----------------------------------------------

XI_GRID = (-100.0, -2.0, -0.1, 1e-9, 0.1, 2.0, 100.0)


def mex_suite(seed=0, count: int = 1000) -> SuiteReport:
    rep = SuiteReport("mex")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    err = dict(max=0.0, mean=0.0, min=0.0, collapse=0.0, translate=0.0, bounds=0.0, mono=0.0)
    for _ in range(count):
        n = int(rng.integers(1, 17))
        c = rng.uniform(-5, 5, n)
        err["max"] = max(err["max"], abs(mex(c, 100.0) - c.max()) - math.log(16) / 100)
        err["min"] = max(err["min"], abs(mex(c, -100.0) - c.min()) - math.log(16) / 100)
        err["mean"] = max(err["mean"], abs(mex(c, 1e-9) - c.mean()))
        # collapsing over equal-size groups, |xi| log-uniform in [1e-6, 50]
        xi = math.copysign(math.exp(rng.uniform(math.log(1e-6), math.log(50))), rng.choice([-1, 1]))
        m, g = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        cg = rng.uniform(-5, 5, m * g)
        perm = rng.permutation(m * g).reshape(g, m)
        inner = mex(cg[perm], xi, axis=1)
        err["collapse"] = max(err["collapse"], abs(mex(inner, xi) - mex(cg, xi)))
        shift = rng.uniform(-5, 5)
        err["translate"] = max(err["translate"], abs(mex(c + shift, xi) - (mex(c, xi) + shift)))
        vals = np.array([mex(c, x) for x in XI_GRID])
        err["bounds"] = max(err["bounds"], float(np.max(np.maximum(c.min() - vals, vals - c.max()))))
        err["mono"] = max(err["mono"], float(np.max(vals[:-1] - vals[1:])))
    rep.add_max("|MEX_100 - max| - ln(16)/100", err["max"], 1e-12)
    rep.add_max("|MEX_1e-9 - mean|", err["mean"], 1e-6)
    rep.add_max("|MEX_-100 - min| - ln(16)/100", err["min"], 1e-12)
    rep.add_max("collapsing over equal groups", err["collapse"], 1e-12)
    rep.add_max("translation", err["translate"], 1e-12)
    rep.add_max("min <= MEX <= max (excess)", err["bounds"], 1e-12)
    rep.add_max("monotone in xi (largest decrease)", err["mono"], 1e-12)
    rep.add_max("MEX_1{0, ln 2} - ln 1.5", abs(mex([0.0, math.log(2)], 1.0) - math.log(1.5)), 1e-12)
    _realization_checks(rep, rng)
    rep.seconds = time.perf_counter() - t0
    return rep


def _realization_checks(rep: SuiteReport, rng) -> None:
    shape = (6, 7, 3)
    x = rng.standard_normal(shape)
    x[0, 0, 0] = 0.0
    relu = realize_relu(shape)
    rep.add_flag("relu hard == max(x, 0) bitwise", np.array_equal(mex_layer_forward(x, relu), np.maximum(x, 0)))
    rep.add_max("relu at xi=1e4", np.max(np.abs(mex_layer_forward(x, soft_variant(relu, 1e4)) - np.maximum(x, 0))),
                1e-3)
    for window, stride in ((2, 2), (3, 1), (2, 1)):
        win = sliding_window_view(x, (window, window), axis=(0, 1))[::stride, ::stride]
        flat = win.reshape(win.shape[:3] + (-1,))
        mp = realize_maxpool(shape, window, stride)
        ap = realize_avgpool(shape, window, stride)
        tag = f"{window}x{window}/{stride}"
        rep.add_flag(f"maxpool {tag} hard bitwise", np.array_equal(mex_layer_forward(x, mp), flat.max(axis=-1)))
        rep.add_max(f"maxpool {tag} at xi=1e4",
                    np.max(np.abs(mex_layer_forward(x, soft_variant(mp, 1e4)) - flat.max(axis=-1))), 1e-3)
        rep.add_flag(f"avgpool {tag} mean-limit bitwise", np.array_equal(mex_layer_forward(x, ap), flat.mean(axis=-1)))
        rep.add_max(f"avgpool {tag} at xi=1e-9",
                    np.max(np.abs(mex_layer_forward(x, soft_variant(ap, 1e-9)) - flat.mean(axis=-1))), 1e-6)


# -- gradients -------------------------------------------------------------------------------

def _similarity_grad_error(rng, form, p, weighted, margin=1e-3):
    n, d, rows = 3, 5, 7
    z = rng.standard_normal((n, d))
    x = rng.standard_normal((rows, d))
    if form == "lp":
        # keep every |x - z| at least `margin` away from the kink
        close = np.abs(x[:, None, :] - z[None]) < 2 * margin
        while close.any():
            x += np.where(close.any(axis=1), 3 * margin, 0.0)
            close = np.abs(x[:, None, :] - z[None]) < 2 * margin
    v = 0.3 * rng.standard_normal((n, d)) if weighted else None
    up = rng.standard_normal((rows, n))
    params = SimilarityParams(form, z, v, p)
    g = similarity_backward(x, params, up, want_p=True, want_input=True)

    def f_z(t):
        return float(np.sum(up * similarity_forward(x, SimilarityParams(form, t, v, p))))

    def f_v(t):
        return float(np.sum(up * similarity_forward(x, SimilarityParams(form, z, t, p))))

    def f_p(t):
        return float(np.sum(up * similarity_forward(x, SimilarityParams(form, z, v, float(t)))))

    def f_x(t):
        return float(np.sum(up * similarity_forward(t, params)))

    errs = [_rel(g.d_templates, _fd(f_z, z)), _rel(g.d_patches, _fd(f_x, x))]
    if weighted:
        errs.append(_rel(g.d_log_weights, _fd(f_v, v)))
    if form == "lp":
        errs.append(_rel(g.d_p, _fd(f_p, np.array(p))))
    return max(errs)


def _mex_layer_grad_error(rng, xi):
    inp = rng.standard_normal(12)
    blocks = rng.integers(0, 12, size=(5, 4))
    offsets = rng.standard_normal(6)
    oidx = rng.integers(0, 6, size=(5, 4))
    const = rng.standard_normal(5)
    up = rng.standard_normal(5)

    def layer(o=offsets, c=const, x=xi):
        return MexLayerParams(blocks, x, o, oidx, c)

    d_in, g = mex_layer_backward(inp, layer(), up)
    errs = [
        _rel(d_in, _fd(lambda t: float(up @ mex_layer_forward(t, layer())), inp)),
        _rel(g.d_offsets, _fd(lambda t: float(up @ mex_layer_forward(inp, layer(o=t))), offsets)),
        _rel(g.d_constants, _fd(lambda t: float(up @ mex_layer_forward(inp, layer(c=t))), const)),
        _rel(g.d_xi, _fd(lambda t: float(up @ mex_layer_forward(inp, layer(x=float(t)))), np.array(xi))),
    ]
    return max(errs)


def _small_net(rng, p, xi2, weighted=True):
    z = 0.5 * rng.standard_normal((4, 9))
    v = 0.3 * rng.standard_normal((4, 9)) if weighted else None
    sim = SimilarityParams("lp", z, v, p)
    return PatchLabelingNet(sim, rng.standard_normal((3, 4, 2, 2)), (8, 8, 1), patch=(3, 3), xi1=1.0, xi2=xi2,
                            trainable=("z", "v", "b", "p", "xi1", "xi2"))


def grad_suite(seed=0) -> SuiteReport:
    rep = SuiteReport("grad")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for p, tol in ((1.0, 1e-4), (1.5, 1e-5), (2.0, 1e-5)):
        for weighted in (False, True):
            worst = max(_similarity_grad_error(rng, "lp", p, weighted) for _ in range(3))
            rep.add_max(f"similarity lp p={p} {'weighted' if weighted else 'unweighted'}", worst, tol)
    rep.add_max("similarity linear", max(_similarity_grad_error(rng, "linear", 2.0, w) for w in (False, True)), 1e-5)
    for xi in (-2.0, -0.1, 0.0, 0.1, 2.0):
        rep.add_max(f"mex layer xi={xi:g}", max(_mex_layer_grad_error(rng, xi) for _ in range(3)), 1e-5)
    for p, tol, margin in ((2.0, 1e-5, None), (1.0, 1e-4, 1e-3)):
        for xi2 in (None, 0.5):
            worst = 0.0
            for _ in range(2):
                net = _small_net(rng, p, xi2)
                x = 0.5 * rng.standard_normal((2, 8, 8, 1))
                y = rng.integers(0, 3, size=2)
                worst = max(worst, max(grad_check(net, x, y, margin=margin, seed=int(rng.integers(1 << 30))).values()))
            rep.add_max(f"patch net p={p} xi2={'mean' if xi2 is None else xi2}", worst, tol)
    rep.seconds = time.perf_counter() - t0
    return rep


# -- kernel equivalences ----------------------------------------------------------------------

def kernel_mlp_suite(seed=0, count: int = 1000) -> SuiteReport:
    rep = SuiteReport("kernel-mlp")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for form, kind, p in (("linear", "exponential", 2.0), ("lp", "generalized_gaussian", 1.0),
                          ("lp", "generalized_gaussian", 2.0)):
        worst, agree = 0.0, 0
        for _ in range(count):
            n, d, k = int(rng.integers(1, 9)), int(rng.integers(1, 9)), int(rng.integers(1, 5))
            xi = float(rng.uniform(0.1, 2.0))
            x = rng.standard_normal(d)
            z = rng.standard_normal((n, d))
            b = rng.standard_normal((k, n))
            sim = SimilarityParams(form, z, None, p)
            spec = K.KernelSpec(kind, xi, p)
            h_mex = mlp_scores(x, sim, b, xi)
            h_ker = K.mlp_kernel_form(x, z, b, xi, spec)
            worst = max(worst, float(np.max(np.abs(h_mex - h_ker))))
            agree += int(np.argmax(h_mex)) == K.mlp_kernel_classify(x, z, b, xi, spec)
        label = f"{form}/{kind}" + (f" p={p:g}" if form == "lp" else "")
        rep.add_max(f"{label} score |delta|", worst, 1e-9)
        rep.add_min(f"{label} argmax agreement", agree / count, 1.0, f"{agree}/{count}")
    rep.seconds = time.perf_counter() - t0
    return rep


def _random_kernel_net(rng):
    form, p = [("linear", 2.0), ("lp", 1.0), ("lp", 2.0)][int(rng.integers(3))]
    n, k = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    xi = float(rng.uniform(0.2, 1.5))
    sim = SimilarityParams(form, 0.5 * rng.standard_normal((n, 4)), None, p)
    return PatchLabelingNet(sim, rng.standard_normal((k, n, 2, 2)), (5, 5, 1), patch=(2, 2), xi1=xi, xi2=xi)


def kernel_patch_suite(seed=0, nets: int = 100, inputs: int = 100) -> SuiteReport:
    rep = SuiteReport("kernel-patch")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    err_svm, err_sum, mismatch, total = 0.0, 0.0, 0, 0
    for _ in range(nets):
        net = _random_kernel_net(rng)
        model = patch_svm_from_net(net)
        scale = net.n_patches * net.n
        for _ in range(inputs):
            img = 0.5 * rng.standard_normal(net.image_shape)
            X = net.patches(img)[0]
            mex_scores = scale * np.exp(net.xi1 * net.forward(img))
            svm_scores = K.patch_svm_scores(list(X), model)
            sum_scores = K.patch_double_sum_scores(X, net.similarity.templates, model.coefficients, net.pool,
                                                   model.kernel)
            err_svm = max(err_svm, _rel(mex_scores, svm_scores, 1e-300))
            err_sum = max(err_sum, _rel(sum_scores, svm_scores, 1e-300))
            preds = {net.predict(img), K.patch_svm_classify(list(X), model), int(np.argmax(sum_scores))}
            mismatch += len(preds) > 1
            total += 1
    rep.add_max("MEX pipeline vs patch SVM (relative)", err_svm, 1e-9)
    rep.add_max("double sum vs patch SVM (relative)", err_sum, 1e-9)
    rep.add_max("prediction disagreements", mismatch, 0, f"{total - mismatch}/{total} identical")
    rep.seconds = time.perf_counter() - t0
    return rep


# -- positive semi-definiteness --------------------------------------------------------------

def _psd_margin(G) -> float:
    """``min_eig / trace``; PSD up to roundoff when >= -1e-10."""
    G = 0.5 * (G + G.T)
    return float(np.linalg.eigvalsh(G)[0] / abs(np.trace(G)))


def _slot_sample(rng, m, D, d):
    out = []
    for _ in range(m):
        out.append([None if rng.random() < 0.4 else rng.standard_normal(d) for _ in range(D)])
    return out


def psd_suite(seed=0, seeds: int = 50, p_witness: float = 3.0) -> SuiteReport:
    rep = SuiteReport("psd")
    t0 = time.perf_counter()
    kinds = {
        "K_lin": K.KernelSpec("exponential", 0.5),
        "K_l1": K.KernelSpec("generalized_gaussian", 1.0, 1.0),
        "K_l2": K.KernelSpec("generalized_gaussian", 1.0, 2.0),
    }
    worst = {name: 0.0 for name in list(kinds) + ["K_V", "big K"]}
    for s in range(seeds):
        rng = np.random.default_rng([seed, s])
        m = int(rng.integers(2, 21))
        pts = rng.standard_normal((m, 3))
        for name, spec in kinds.items():
            worst[name] = min(worst[name], _psd_margin(K.kernel_matrix(spec, pts, pts)))
        base = kinds["K_l2"]
        mixed = [None if rng.random() < 0.3 else rng.standard_normal(3) for _ in range(m)]
        worst["K_V"] = min(worst["K_V"], _psd_margin(
            K.gram_matrix(mixed, lambda a, b: K.patch_kernel_KV(a, b, base))) if any(v is not None for v in mixed)
            else 0.0)
        slots = _slot_sample(rng, min(m, 15), 4, 3)
        worst["big K"] = min(worst["big K"], _psd_margin(
            K.gram_matrix(slots, lambda a, b: K.patch_kernel_big(a, b, base))))
    for name, val in worst.items():
        rep.add_max(f"{name} min eigenvalue / trace (negated)", -val, 1e-10)
    witness = K.find_non_psd_witness(p_witness, trials=1000, seed=seed)
    if p_witness > 2:
        rep.add_flag(f"non-PSD witness for p={p_witness:g}", witness is not None,
                     "" if witness is None else f"{len(witness)} points")
    else:
        rep.add_flag(f"no witness for p={p_witness:g}", witness is None)
    for p in (2.0, 1.0):
        rep.add_flag(f"control p={p:g}: no witness in 1000 trials",
                     K.find_non_psd_witness(p, trials=1000, seed=seed) is None)
    rep.seconds = time.perf_counter() - t0
    return rep


# -- GGM initialization ---------------------------------------------------------------------------

def planted_mixture(seed=0, d: int = 8) -> GGMixture:
    """Three well-separated components with shapes (1, 2, 2)."""
    rng = np.random.default_rng(seed)
    means = np.stack([np.full(d, -4.0), np.zeros(d), np.full(d, 4.0)]) + 0.5 * rng.standard_normal((3, d))
    scales = rng.uniform(0.5, 1.0, (3, d))
    return GGMixture(np.array([0.3, 0.3, 0.4]), means, scales, np.array([1.0, 2.0, 2.0]))


def ggm_suite(seed=0, runs: int = 20) -> SuiteReport:
    rep = SuiteReport("ggm")
    t0 = time.perf_counter()
    worst_drop = 0.0
    for s in range(runs):
        rng = np.random.default_rng([seed, s])
        true = GGMixture(np.array([0.5, 0.5]), rng.standard_normal((2, 4)) * 2, rng.uniform(0.3, 1.5, (2, 4)),
                         rng.uniform(0.8, 3.0, 2))
        X, _ = synthetic_mixture_dataset(true, 1500, seed=int(rng.integers(1 << 30)))
        mix = fit_ggm(X, int(rng.integers(2, 5)), GGMFitConfig(max_iter=25, seed=s))
        tr = np.asarray(mix.log_likelihood_trace)
        worst_drop = max(worst_drop, float(np.max(tr[:-1] - tr[1:], initial=0.0)))
    rep.add_max(f"EM log-likelihood decrease over {runs} runs", worst_drop, 1e-8)

    true = planted_mixture(seed)
    X, _ = synthetic_mixture_dataset(true, 10_000, seed=seed + 1)
    fit = fit_ggm(X, 3, GGMFitConfig(seed=seed))
    cost = np.max(np.abs(true.means[:, None, :] - fit.means[None]), axis=2)
    rows, cols = linear_sum_assignment(cost)
    rep.add_max("planted recovery mean L-inf error", float(cost[rows, cols].mean()), 0.1)

    sim = mixture_to_similarity_params(fit)
    xs = X[:50]
    identity = 0.0
    consts = fit.log_constants()
    for l in range(fit.n):
        one = SimilarityParams("lp", sim.templates[l:l + 1], sim.log_weights[l:l + 1], fit.shapes[l])
        lhs = similarity_forward(xs, one)[:, 0] + consts[l]
        rhs = np.array([ggm_log_joint(x, fit, l) for x in xs])
        identity = max(identity, float(np.max(np.abs(lhs - rhs))))
    rep.add_max("similarity + offset == log-joint", identity, 1e-12)

    # location 0 only ever sees component 0; location 1 sees the global mix
    loc_priors = np.array([[1.0, 0.0, 0.0], true.priors])
    Xl, _, locs = synthetic_mixture_dataset(true, 4000, seed=seed + 2, location_priors=loc_priors)
    lp = fit_location_priors(Xl, locs, true, (1, 2))
    rep.add_min("planted location prior lambda_1", float(lp.priors[0, 0, 0]), 0.9)
    b = location_offsets(true, lp)
    off_id = 0.0
    for l in range(true.n):
        one = SimilarityParams("lp", true.means[l:l + 1], -true.shapes[l] * np.log(true.scales[l:l + 1]),
                               true.shapes[l])
        for g in range(2):
            lam = np.maximum(lp.priors[0, g], 1e-12)
            mixed = GGMixture(lam, true.means, true.scales, true.shapes)
            lhs = similarity_forward(Xl[:20], one)[:, 0] + b[l, 0, g]
            rhs = np.array([ggm_log_joint(x, mixed, l) for x in Xl[:20]])
            off_id = max(off_id, float(np.max(np.abs(lhs - rhs))))
    rep.add_max("similarity + location offset == location log-joint", off_id, 1e-12)
    rep.seconds = time.perf_counter() - t0
    return rep


# -- decision regions -------------------------------------------------------------------------------

def two_template_classifier(templates, weights, offsets=(0.0, 0.0), p=1.0):
    """Hard-max rule over two weighted l_p templates, one class per template."""
    sim = SimilarityParams("lp", np.asarray(templates, float), np.log(np.asarray(weights, float)), p)
    b = np.asarray(offsets, dtype=np.float64)
    return lambda pts: similarity_forward(pts, sim) + b


def regions_suite(seed=0, resolution: int = 201) -> SuiteReport:
    rep = SuiteReport("regions")
    t0 = time.perf_counter()
    bounds = (-6.0, 6.0, -6.0, 6.0)
    z = [[-1.0, 0.0], [1.5, 0.5]]
    heavy = K.decision_region_raster(two_template_classifier(z, [[8.0, 8.0], [1.0, 1.0]]), bounds, resolution)
    uniform = K.decision_region_raster(two_template_classifier(z, [[1.0, 1.0], [1.0, 1.0]]), bounds, resolution)
    rep.add_flag("heavy template region is bounded", not heavy.touches_boundary(0) and (heavy.labels == 0).any())
    cells = [ndimage.label(uniform.labels == c)[1] for c in (0, 1)]
    rep.add_flag("uniform control: two connected cells", cells == [1, 1], f"components {cells}")
    rep.add_flag("uniform control: both cells unbounded", uniform.touches_boundary(0) and uniform.touches_boundary(1))

    # unweighted l2, equal offsets: labels flip across the perpendicular bisector
    rng = np.random.default_rng(seed)
    zz = rng.standard_normal((2, 2))
    clf = two_template_classifier(zz, np.ones((2, 2)), p=2.0)
    mid, normal = zz.mean(axis=0), (zz[1] - zz[0]) / np.linalg.norm(zz[1] - zz[0])
    tangent = np.array([-normal[1], normal[0]])
    along = mid + rng.uniform(-3, 3, (200, 1)) * tangent
    near0 = np.argmax(clf(along - 1e-6 * normal), axis=1)
    near1 = np.argmax(clf(along + 1e-6 * normal), axis=1)
    rep.add_flag("l2 bisector split", bool(np.all(near0 == 0) and np.all(near1 == 1)))
    const = K.decision_region_raster(lambda pts: np.tile([0.0, 1.0], (len(pts), 1)), bounds, 11)
    rep.add_flag("constant classifier gives a uniform raster", bool(np.all(const.labels == 1)))
    rep.seconds = time.perf_counter() - t0
    return rep


RUNNERS = {
    "mex": mex_suite,
    "grad": grad_suite,
    "kernel-mlp": kernel_mlp_suite,
    "kernel-patch": kernel_patch_suite,
    "psd": psd_suite,
    "ggm": ggm_suite,
    "regions": regions_suite,
}


def run_suite(name: str, seed=0, **kwargs) -> SuiteReport:
    if name not in RUNNERS:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return RUNNERS[name](seed=seed, **kwargs)
