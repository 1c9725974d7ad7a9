"""Unsupervised initialization from a generalized Gaussian mixture.

Patches from synthetic class-structured images are whitened and a mixture
is fitted. Means become templates, scales become weights, and per-region
priors become offsets, so that similarity plus offset is exactly the log
joint probability of a patch and a component at that location.

Run: python3 demos/04_ggm_initialization.py
"""

import numpy as np

from simnets.data import normalize_image, sample_patches, synthetic_image_dataset, zca_fit
from simnets.ggm import GGMFitConfig, GGMixture, fit_ggm, fit_location_priors, location_offsets, \
    mixture_to_similarity_params
from simnets.similarity import similarity_forward

rng = np.random.default_rng(0)
images = normalize_image(synthetic_image_dataset(50, seed=0).images)
patches, locs = sample_patches(images, 6, 6, 20_000, rng)
white = zca_fit(patches, 0.1)
X = white.apply(patches)

mix = fit_ggm(X, 16, GGMFitConfig(fixed_beta=2.0, max_iter=30, seed=0))
trace = np.array(mix.log_likelihood_trace) / len(X)
print(f"EM: {len(trace)} iterations, mean log-likelihood {trace[0]:.3f} -> {trace[-1]:.3f}")
print(f"likelihood never decreased: {bool(np.all(np.diff(trace) >= -1e-12))}")

# pool regions: 27x27 patch grid split into 2x2 quadrants
group = (locs[:, 0] * 2 // 27) * 2 + locs[:, 1] * 2 // 27
priors = fit_location_priors(X, group, mix, (2, 2))
b = location_offsets(mix, priors)
print("prior of the top component per quadrant:", np.round(priors.priors.max(axis=-1), 3).tolist())

sim = mixture_to_similarity_params(mix, p=2.0)
S = similarity_forward(X[:1000], sim)
worst = 0.0
for q in range(4):
    local = GGMixture(priors.priors.reshape(4, -1)[q], mix.means, mix.scales, mix.shapes)
    worst = max(worst, np.abs(S + b[:, q // 2, q % 2] - local.log_joint(X[:1000])).max())
print(f"similarity + offset vs log joint, max |diff|: {worst:.2e}")
