"""Run configuration and the prepare / init / train / eval steps as library calls."""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (DataFormatError, LabeledImageSet, SyntheticImageSpec, WhiteningTransform, load_cifar10,
                   load_image_set, load_whitening, normalize_image, sample_patches, save_image_set,
                   save_whitening, synthetic_image_dataset, zca_fit)
from .ggm import GGMFitConfig, fit_ggm, fit_location_priors, location_offsets, mixture_to_similarity_params
from .network import PatchLabelingNet
from .similarity import SimilarityParams
from .trainer import SgdConfig, evaluate, train

DEFAULTS = {
    "seed": 0,
    "data": {
        "source": "cifar10",  # or "synthetic"
        "dir": None,
        "train_per_class": None,
        "test_per_class": None,
        "contrast_eps": 10.0 / 255.0 ** 2,
        "whitening_eps": 0.1,
        "whitening_patches": 100_000,
    },
    "model": {
        "n": 50,
        "form": "lp",
        "p": 2.0,
        "weighted": True,
        "xi1": 1.0,
        "xi2_mode": "mean",  # "mean", "sum" or "finite"
        "xi2": 1.0,  # only read when xi2_mode == "finite"
        "patch": [6, 6],
        "stride": 1,
        "pool": [2, 2],
        "trainable": ["z", "v", "b"],
    },
    "init": {
        "method": "ggm",  # or "random"
        "patches": 50_000,
        "max_iter": 50,
        "fixed_beta": 2.0,
    },
    "train": {
        "batch_size": 64,
        "momentum": 0.9,
        "learning_rate": 0.01,
        "decay_factor": 0.1,
        "decay_epoch": 50,
        "epochs": 100,
        "weight_decay": 1e-4,
        "template_weight_decay": 0.0,
    },
    "verify": {
        "suites": ["mex", "grad", "kernel-mlp", "kernel-patch", "psd", "ggm", "regions"],
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be a section")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the JSON file, then ``key.sub=value`` overrides (values parsed as JSON)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            cfg = _merge(cfg, json.load(fh))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        nested = val
        for part in reversed(key.split(".")):
            nested = {part: nested}
        cfg = _merge(cfg, nested)
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    m = cfg["model"]
    if m["xi2_mode"] not in ("mean", "sum", "finite"):
        raise ConfigError(f"model.xi2_mode must be mean, sum or finite, got {m['xi2_mode']!r}")
    if cfg["init"]["method"] not in ("ggm", "random"):
        raise ConfigError(f"init.method must be ggm or random, got {cfg['init']['method']!r}")
    if cfg["data"]["source"] not in ("cifar10", "synthetic"):
        raise ConfigError(f"data.source must be cifar10 or synthetic, got {cfg['data']['source']!r}")
    if m["n"] < 1:
        raise ConfigError("model.n must be positive")
    for key in ("contrast_eps", "whitening_eps"):
        if not cfg["data"][key] >= 0:
            raise ConfigError(f"data.{key} must be non-negative")
    try:
        sgd_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def sgd_config(cfg: dict) -> SgdConfig:
    return SgdConfig(seed=int(cfg["seed"]) + 2, **cfg["train"])


# -- prepare ------------------------------------------------------------------------------------

@dataclass
class PreparedData:
    train: LabeledImageSet
    test: LabeledImageSet
    whitening: WhiteningTransform


def _raw_splits(cfg: dict, data_dir):
    d = cfg["data"]
    seed = int(cfg["seed"])
    if d["source"] == "synthetic":
        tr_pc = d["train_per_class"] or 500
        te_pc = d["test_per_class"] or max(1, tr_pc // 5)
        spec = SyntheticImageSpec(seed=seed + 1234)
        return (synthetic_image_dataset(tr_pc, spec, seed=seed),
                synthetic_image_dataset(te_pc, spec, seed=seed + 1))
    root = data_dir or d["dir"]
    if root is None or not Path(root).is_dir():
        raise FileNotFoundError(f"data directory {root!r} does not exist")
    return (load_cifar10(root, d["train_per_class"], seed, "train"),
            load_cifar10(root, d["test_per_class"], seed, "test"))


def prepare(cfg: dict, data_dir=None, out_dir=None) -> PreparedData:
    """Normalize images and fit patch whitening on training patches only."""
    d = cfg["data"]
    raw_train, raw_test = _raw_splits(cfg, data_dir)
    train_set = LabeledImageSet(normalize_image(raw_train.images, d["contrast_eps"]), raw_train.labels)
    test_set = LabeledImageSet(normalize_image(raw_test.images, d["contrast_eps"]), raw_test.labels)
    h, w = cfg["model"]["patch"]
    rng = np.random.default_rng(int(cfg["seed"]) + 3)
    patches, _ = sample_patches(train_set.images, h, w, int(d["whitening_patches"]), rng, cfg["model"]["stride"])
    white = zca_fit(patches, d["whitening_eps"])
    prepared = PreparedData(train_set, test_set, white)
    if out_dir is not None:
        save_prepared(prepared, out_dir)
    return prepared


def save_prepared(prepared: PreparedData, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image_set(prepared.train, out, "train")
    save_image_set(prepared.test, out, "test")
    save_whitening(prepared.whitening, out / "whitening.bin")
    with open(out / "summary.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["split", "count", "height", "width", "depth", "classes", "min_per_class", "max_per_class"])
        for name, ds in (("train", prepared.train), ("test", prepared.test)):
            counts = np.bincount(ds.labels) if len(ds) else np.zeros(0, int)
            wr.writerow([name, len(ds), *ds.images.shape[1:], int(np.count_nonzero(counts)),
                         int(counts[counts > 0].min(initial=0)), int(counts.max(initial=0))])


def load_prepared(cache_dir) -> PreparedData:
    cache = Path(cache_dir)
    if not (cache / "whitening.bin").exists():
        raise FileNotFoundError(f"{cache} is not a prepared data cache")
    return PreparedData(load_image_set(cache, "train"), load_image_set(cache, "test"),
                        load_whitening(cache / "whitening.bin"))


# -- init ---------------------------------------------------------------------------------------

def _net_kwargs(cfg: dict, image_shape, whitening) -> dict:
    m = cfg["model"]
    xi2 = float(m["xi2"]) if m["xi2_mode"] == "finite" else None
    return dict(image_shape=image_shape, patch=tuple(m["patch"]), stride=m["stride"], xi1=m["xi1"], xi2=xi2,
                trainable=tuple(m["trainable"]), whitening=whitening,
                pooling="sum" if m["xi2_mode"] == "sum" else "mean")


def _n_classes(data: LabeledImageSet) -> int:
    return int(data.labels.max()) + 1 if len(data) else 0


def init_random(cfg: dict, prepared: PreparedData) -> PatchLabelingNet:
    """Standard-normal templates, unit weights, zero offsets."""
    m = cfg["model"]
    h, w = m["patch"]
    d = h * w * prepared.train.images.shape[-1]
    rng = np.random.default_rng(int(cfg["seed"]) + 1)
    z = rng.standard_normal((m["n"], d))
    v = np.zeros((m["n"], d)) if m["weighted"] else None
    sim = SimilarityParams(m["form"], z, v, m["p"])
    k = _n_classes(prepared.train)
    b = np.zeros((k, m["n"], *m["pool"]))
    return PatchLabelingNet(sim, b, **_net_kwargs(cfg, prepared.train.images.shape[1:], prepared.whitening))


def init_ggm(cfg: dict, prepared: PreparedData) -> PatchLabelingNet:
    """Mixture fit on whitened training patches, location priors per pool region."""
    m, ini = cfg["model"], cfg["init"]
    if m["form"] != "lp":
        raise ConfigError("GGM initialization needs the lp similarity form")
    h, w = m["patch"]
    rng = np.random.default_rng(int(cfg["seed"]) + 1)
    patches, locs = sample_patches(prepared.train.images, h, w, int(ini["patches"]), rng, m["stride"])
    X = prepared.whitening.apply(patches)
    if X.shape[0] < m["n"]:
        raise ConfigError(f"n={m['n']} templates but only {X.shape[0]} patches")
    fixed = ini["fixed_beta"]
    mix = fit_ggm(X, m["n"], GGMFitConfig(max_iter=int(ini["max_iter"]), seed=int(cfg["seed"]) + 1,
                                          fixed_beta=None if fixed is None else float(fixed)))
    net_kw = _net_kwargs(cfg, prepared.train.images.shape[1:], prepared.whitening)
    probe = PatchLabelingNet(mixture_to_similarity_params(mix, p=m["p"]), np.zeros((1, m["n"], *m["pool"])),
                             **net_kw)
    Ph, Pw = probe.grid_shape
    Qh, Qw = m["pool"]
    group = (locs[:, 0] * Qh // Ph) * Qw + locs[:, 1] * Qw // Pw
    priors = fit_location_priors(X, group, mix, (Qh, Qw))
    b = location_offsets(mix, priors)
    sim = mixture_to_similarity_params(mix, p=m["p"])
    if not m["weighted"]:
        sim = SimilarityParams("lp", sim.templates, None, sim.p)
    k = _n_classes(prepared.train)
    net = PatchLabelingNet(sim, np.repeat(b[None], k, axis=0), **net_kw)
    net.mixture = mix
    return net


def init_model(cfg: dict, prepared: PreparedData) -> PatchLabelingNet:
    if len(prepared.train) == 0:
        raise ValueError("training set is empty")
    return init_ggm(cfg, prepared) if cfg["init"]["method"] == "ggm" else init_random(cfg, prepared)


# -- train / eval -------------------------------------------------------------------------------

def train_model(net: PatchLabelingNet, prepared: PreparedData, cfg: dict, history_path=None, log=None):
    return train(net, prepared.train, sgd_config(cfg), validation=prepared.test, history_path=history_path, log=log)


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # rows true, columns predicted

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "count": int(self.confusion.sum()), "confusion": self.confusion.tolist()}

    def confusion_csv(self, path) -> None:
        k = self.confusion.shape[0]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["true"] + [f"pred_{j}" for j in range(k)])
            for i in range(k):
                wr.writerow([i] + [int(c) for c in self.confusion[i]])


def evaluate_model(net: PatchLabelingNet, data: LabeledImageSet, batch: int = 256) -> EvalReport:
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty set")
    pred = np.concatenate([np.atleast_1d(net.predict(data.images[i:i + batch])) for i in range(0, len(data), batch)])
    k = max(net.k, int(data.labels.max()) + 1)
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (data.labels, pred), 1)
    return EvalReport(float(np.mean(pred == data.labels)), conf)


__all__ = ["DEFAULTS", "ConfigError", "DataFormatError", "PreparedData", "EvalReport", "load_config", "prepare",
           "load_prepared", "init_model", "init_ggm", "init_random", "train_model", "evaluate_model", "evaluate",
           "sgd_config"]
