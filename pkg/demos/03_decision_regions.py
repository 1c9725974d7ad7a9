"""Weights let one template claim a bounded neighbourhood of the plane.

Two templates, weighted l1 similarity. With heavy weights on template 0 its
region shrinks to a bounded island; with uniform weights the plane splits
into two unbounded cells. Writes CSV rasters to the working directory.

Run: python3 demos/03_decision_regions.py
"""

from simnets.kernels import decision_region_raster
from simnets.verify import two_template_classifier

templates = [[-1.0, 0.0], [1.5, 0.5]]
for name, weights in (("heavy", [[8.0, 8.0], [1.0, 1.0]]), ("uniform", [[1.0, 1.0], [1.0, 1.0]])):
    raster = decision_region_raster(two_template_classifier(templates, weights, p=1.0), (-3, 3, -3, 3), 41)
    print(f"{name}: template 0 bounded = {not raster.touches_boundary(0)}")
    for row in raster.labels[::-2]:
        print("   " + "".join("#" if v == 0 else "." for v in row))
    raster.to_csv(f"regions_{name}.csv")
    print(f"   wrote regions_{name}.csv")
