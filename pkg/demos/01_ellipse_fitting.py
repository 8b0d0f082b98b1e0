"""Fit ellipses to boundary samples and to rasterized regions.

An exact boundary sample gives back the ellipse to machine precision. A filled
pixel region gives the right center and orientation but axes shrunk by sqrt(2),
which fit_region undoes.
"""
import numpy as np

from ellipseg.geometry import Ellipse, FitError, fit_ellipse, raster_mask, sample_boundary
from ellipseg.labelgen import fit_region, pixel_coords

truth = Ellipse(cx=60.0, cy=40.0, a=25.0, b=9.0, theta=0.7)
print("truth          ", truth)

# 1. exact boundary points
fit = fit_ellipse(sample_boundary(truth, 50))
print("boundary fit   ", fit)

# 2. noisy boundary points still give an ellipse
rng = np.random.default_rng(0)
noisy = sample_boundary(truth, 50) + rng.normal(0, 0.5, (50, 2))
print("noisy fit      ", fit_ellipse(noisy))

# 3. all pixels of the rasterized region
mask = raster_mask(truth, (80, 120))
pts = pixel_coords(mask)
print(f"region pixels   {len(pts)}")
print("raw region fit ", fit_ellipse(pts))
print("fit_region     ", fit_region(pts))

# 4. degenerate input is rejected
try:
    fit_ellipse(np.c_[np.arange(10.0), np.arange(10.0)])
except FitError as exc:
    print("collinear      ", "FitError:", exc)
