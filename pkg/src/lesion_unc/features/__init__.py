"""Per-lesion explanatory features: intensity, shape, texture and location."""
from .firstorder import NAMES as INTENSITY_NAMES, first_order
from .location import (
    assign_structure,
    location_features,
    read_centroids,
    structure_centroids,
    write_centroids,
)
from .shape import NAMES as SHAPE_NAMES, shape
from .texture import NAMES as TEXTURE_NAMES
from .texture import (
    DEFAULT_BINS,
    DiscretizedRoi,
    discretize,
    gldm_features,
    glrlm_features,
    texture,
)
RADIOMIC_NAMES = (*INTENSITY_NAMES, *SHAPE_NAMES, *TEXTURE_NAMES)


def lesion_features(img, lesion, atlas=None, centroids=None, names=None, bins: int = DEFAULT_BINS) -> dict:
    """All features of one lesion, radiomics first, then ``Dist_*`` columns."""
    out = {}
    out.update(first_order(img, lesion))
    out.update(shape(lesion))
    out.update(texture(img, lesion, bins))
    ordered = {k: out[k] for k in RADIOMIC_NAMES}
    if atlas is not None:
        ordered.update(location_features(lesion, atlas, centroids, names))
    return ordered


__all__ = [
    "RADIOMIC_NAMES",
    "DiscretizedRoi",
    "assign_structure",
    "discretize",
    "first_order",
    "gldm_features",
    "glrlm_features",
    "lesion_features",
    "location_features",
    "read_centroids",
    "shape",
    "structure_centroids",
    "texture",
    "write_centroids",
]
