"""Shape descriptors of a binary lesion.

Surface area comes from a marching-cubes mesh of the zero-padded binary
mask at iso-level 0.5, so vertices sit halfway between inside and outside
voxel centres. Sphericity and the surface-to-volume ratio pair that area
with the volume enclosed by the same mesh, which keeps Sphericity <= 1 for
any lesion, single voxels included. Axis lengths come from the eigenvalues of the covariance of
voxel-centre positions in millimetres.
"""
import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist
from skimage.measure import marching_cubes

NAMES = (
    "VoxelVolume",
    "SurfaceArea",
    "SurfaceVolumeRatio",
    "Sphericity",
    "Maximum2DDiameterColumn",
    "LeastAxisLength",
    "Elongation",
    "Flatness",
)

EIG_FLOOR = 1e-12


def crop_mask(coords: np.ndarray, pad: int = 1) -> np.ndarray:
    """Binary mask of ``coords`` inside their bounding box plus ``pad``."""
    lo = coords.min(axis=0)
    local = coords - lo + pad
    box = np.zeros(tuple(local.max(axis=0) + 1 + pad), dtype=np.float32)
    box[tuple(local.T)] = 1.0
    return box


def surface_mesh(coords: np.ndarray, spacing) -> tuple:
    """Marching-cubes ``(area, enclosed volume)`` in mm^2 / mm^3."""
    box = crop_mask(coords)
    verts, faces, _, _ = marching_cubes(box, level=0.5, spacing=tuple(spacing), method="lorensen")
    tri = verts[faces].astype(np.float64)
    area = 0.5 * float(np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1).sum())
    signed = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0
    return area, abs(float(signed))


def surface_area(coords: np.ndarray, spacing) -> float:
    return surface_mesh(coords, spacing)[0]


def _max_planar_distance(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    if len(points) > 64:
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:  # collinear plane slice
            pass
    return float(pdist(points).max())


def max_2d_diameter_column(coords: np.ndarray, spacing) -> float:
    """Largest in-plane distance between voxel centres over planes of constant y."""
    sx, _, sz = spacing
    best = 0.0
    order = np.argsort(coords[:, 1], kind="stable")
    ys, starts = np.unique(coords[order, 1], return_index=True)
    bounds = np.append(starts, len(order))
    for k in range(len(ys)):
        plane = coords[order[bounds[k]:bounds[k + 1]]]
        pts = np.column_stack([plane[:, 0] * sx, plane[:, 2] * sz]).astype(np.float64)
        best = max(best, _max_planar_distance(pts))
    return best


def axis_eigenvalues(coords: np.ndarray, spacing) -> np.ndarray:
    """Eigenvalues (major, minor, least) of the voxel-centre covariance."""
    pts = coords * np.asarray(spacing, dtype=np.float64)
    if len(pts) < 2:
        return np.zeros(3)
    cov = np.cov(pts, rowvar=False, bias=True)
    return np.clip(np.linalg.eigvalsh(cov)[::-1], 0.0, None)


def shape(lesion, spacing=None) -> dict:
    coords = lesion.coords
    if len(coords) == 0:
        raise ValueError("empty lesion")
    coords = coords - coords.min(axis=0)  # exact translation invariance
    spacing = tuple(lesion.spacing if spacing is None else spacing)
    volume = len(coords) * float(np.prod(spacing))
    area, mesh_volume = surface_mesh(coords, spacing)
    major, minor, least = axis_eigenvalues(coords, spacing)
    fmajor, fminor, fleast = (max(v, EIG_FLOOR) for v in (major, minor, least))
    return {
        "VoxelVolume": volume,
        "SurfaceArea": area,
        "SurfaceVolumeRatio": area / mesh_volume,
        "Sphericity": float((36.0 * np.pi * mesh_volume ** 2) ** (1.0 / 3.0) / area),
        "Maximum2DDiameterColumn": max_2d_diameter_column(coords, spacing),
        "LeastAxisLength": float(4.0 * np.sqrt(least)),
        "Elongation": float(np.sqrt(fminor / fmajor)),
        "Flatness": float(np.sqrt(fleast / fmajor)),
    }
