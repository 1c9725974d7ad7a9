"""A SimNet with unweighted similarity is a kernel machine, checked numerically.

A one-hidden-layer MEX network and the exponential / generalized Gaussian
kernel form give the same scores. The patch-labeling network with
xi1 == xi2 matches a patch-based kernel SVM whose support elements obey
locality and sharing.

Run: python3 demos/02_kernel_equivalence.py
"""

import numpy as np

from simnets.kernels import KernelSpec, mlp_kernel_form, patch_svm_classify, patch_svm_scores
from simnets.network import PatchLabelingNet, mlp_scores, patch_svm_from_net
from simnets.similarity import SimilarityParams

rng = np.random.default_rng(7)

x, z, b, xi = rng.standard_normal(5), rng.standard_normal((6, 5)), rng.standard_normal((3, 6)), 0.8
for form, kind in (("linear", "exponential"), ("lp", "generalized_gaussian")):
    net_scores = mlp_scores(x, SimilarityParams(form, z, None, 2.0), b, xi)
    ker_scores = mlp_kernel_form(x, z, b, xi, KernelSpec(kind, xi, 2.0))
    print(f"{form:>6} network: {np.round(net_scores, 10)}")
    print(f"{kind:>6} kernel : {np.round(ker_scores, 10)}  max |diff| {np.abs(net_scores - ker_scores).max():.1e}")

sim = SimilarityParams("lp", rng.standard_normal((3, 4)), None, 1.0)
net = PatchLabelingNet(sim, rng.standard_normal((4, 3, 2, 2)), (6, 6, 1), (2, 2), xi1=0.5, xi2=0.5)
svm = patch_svm_from_net(net)
agree = 0
for _ in range(25):
    img = rng.standard_normal((6, 6, 1))
    patches = list(net.patches(img)[0])
    agree += net.predict(img) == patch_svm_classify(patches, svm)
print(f"patch network vs patch SVM: {agree}/25 identical predictions")
img = rng.standard_normal((6, 6, 1))
svm_scores = np.log(patch_svm_scores(list(net.patches(img)[0]), svm) / (net.n * net.n_patches)) / net.xi1
print("scores, network:", np.round(net.forward(img), 10))
print("scores, SVM    :", np.round(svm_scores, 10))
