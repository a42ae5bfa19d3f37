"""
A tour of the lesion features
=============================

Shape, intensity and texture features on a few hand-built lesions, to get a
feel for what moves each number.
"""
import numpy as np

from lesion_unc.features import first_order, shape, texture
from lesion_unc.instance import connected_components
from lesion_unc.volio import Volume

n = 32
g = np.indices((n, n, n)) - n // 2

shapes = {
    "ball r=8": (g ** 2).sum(0) <= 64,
    "cube 11": np.all(np.abs(g) <= 5, axis=0),
    "cigar 12x3x3": (g[0] / 12.0) ** 2 + (g[1] / 3.0) ** 2 + (g[2] / 3.0) ** 2 <= 1,
    "pancake 10x10x2": (g[0] / 10.0) ** 2 + (g[1] / 10.0) ** 2 + (g[2] / 2.0) ** 2 <= 1,
}

rng = np.random.default_rng(0)
image = Volume(1.0 + 0.1 * rng.standard_normal((n, n, n)))

cols = ("Sphericity", "SurfaceVolumeRatio", "Elongation", "Flatness", "Maximum2DDiameterColumn")
print(f"{'':<16}" + "".join(f"{c[:12]:>13}" for c in cols))
for name, mask in shapes.items():
    (L,) = connected_components(mask)
    s = shape(L)
    print(f"{name:<16}" + "".join(f"{s[c]:>13.3f}" for c in cols))

# texture: the same ball, smooth versus speckled intensities
(L,) = connected_components(shapes["ball r=8"])
smooth = Volume(np.where(shapes["ball r=8"], 0.5 + 0.002 * g[0], 1.0))
speckled = Volume(np.where(shapes["ball r=8"], rng.random((n, n, n)), 1.0))
for label, img in (("smooth", smooth), ("speckled", speckled)):
    t = texture(img, L, 16)
    print(f"\n{label}: SRE {t['GLRLM_ShortRunEmphasis']:.3f}, "
          f"SDE {t['GLDM_SmallDependenceEmphasis']:.3f}, "
          f"Energy {first_order(img, L)['Energy']:.1f}")
