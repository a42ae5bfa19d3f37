"""Synthetic lesion phantoms with a planted uncertainty mechanism.

Each patient is a noisy bright "brain" ellipsoid split into four atlas
structures, carrying hypointense ellipsoidal lesions. Every lesion receives a
perturbation magnitude::

    r = logistic(w . z + offset + noise_std * xi + error_coupling * h)

where ``z`` are the dataset-standardised planted features of the
ground-truth lesion (SurfaceVolumeRatio, Sphericity, Energy by default),
``xi`` is independent noise and ``h`` is a hidden "segmentation error"
factor. Each of the ``M`` sampled predictions erodes or dilates the lesion
by a Euclidean radius proportional to ``r`` and to the lesion's smallest
semi-axis, then blurs the binary result into a probability map.

With ``error_coupling > 0`` the lesion the samples are perturbed around is
also shifted away from the ground truth by an amount increasing with ``h``,
so segmentation quality carries information about ``r`` that the lesion's
own features do not.

A spec without any drive (all weights zero, no noise, no coupling) produces
unperturbed samples, i.e. ``r = 0`` for every lesion.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage as ndi
from scipy.spatial.transform import Rotation

from .errors import SpecInfeasible
from .features import first_order, shape
from .features.location import structure_centroids
from .instance import LesionInstance, Source, connected_components
from .volio import Volume

STRUCTURE_NAMES = {1: "AnteriorR", 2: "AnteriorL", 3: "PosteriorR", 4: "PosteriorL"}

PLANTED_DEFAULT = {"SurfaceVolumeRatio": 0.8, "Sphericity": -0.6, "Energy": -0.5}


@dataclass
class PhantomSpec:
    dims: tuple = (96, 96, 64)
    spacing: tuple = (1.0, 1.0, 1.0)
    n_patients: int = 1
    lesions_per_patient: int = 10
    radius_mm: tuple = (2.0, 4.5)
    axis_ratio: tuple = (1.0, 3.0)
    contrast: tuple = (0.25, 0.75)
    texture: tuple = (0.0, 0.15)
    lobulation: tuple = (0.0, 0.3)
    background: float = 1.0
    image_noise: float = 0.03
    weights: dict = field(default_factory=lambda: dict(PLANTED_DEFAULT))
    logit_offset: float = 0.0
    noise_std: float = 0.3
    error_coupling: float = 0.0
    error_shift: float = 0.8
    perturbation: float = 0.4
    anchor_fraction: float = 0.6
    blur_sigma: float = 0.5
    M: int = 10
    seed: int = 0

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        self.spacing = tuple(float(s) for s in self.spacing)
        for name in ("radius_mm", "axis_ratio", "contrast", "texture", "lobulation"):
            lo, hi = (float(v) for v in getattr(self, name))
            if hi < lo:
                raise ValueError(f"{name}: range upper bound below lower bound")
            setattr(self, name, (lo, hi))
        if self.radius_mm[0] <= 0 or self.axis_ratio[0] < 1:
            raise ValueError("radius must be positive and axis ratio >= 1")
        if not (0 <= self.lobulation[0] and self.lobulation[1] < 1):
            raise ValueError("lobulation must lie in [0, 1)")
        if not (0 <= self.contrast[0] and self.contrast[1] < 1):
            raise ValueError("contrast must lie in [0, 1)")
        if not 0.0 <= self.anchor_fraction < 1.0:
            raise ValueError("anchor_fraction must lie in [0, 1)")
        if self.M < 2:
            raise ValueError("need at least two samples")
        if self.n_patients < 1 or self.lesions_per_patient < 1:
            raise ValueError("need at least one patient and one lesion")
        self.weights = {str(k): float(v) for k, v in self.weights.items()}

    @property
    def has_drive(self) -> bool:
        return any(self.weights.values()) or self.noise_std > 0 or self.error_coupling != 0

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown phantom spec keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "PhantomSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


@dataclass
class Phantom:
    patient_id: str
    image: Volume
    gt: Volume
    atlas: Volume
    centroids: dict
    samples: list
    lesions: list  # per-lesion dicts, ground-truth id order


@dataclass
class PhantomDataset:
    spec: PhantomSpec
    patients: list
    oracle: list  # flat list of per-lesion dicts across patients

    def oracle_columns(self) -> list:
        return list(self.oracle[0].keys()) if self.oracle else []


def logistic(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

N_LOBES = 3
JITTER = 0.25  # relative spread of per-sample perturbation radii
LOBE_FREQUENCY = 4.0


def ellipsoid_mask(dims, spacing, center, semi_axes, rotation, lobes=None) -> np.ndarray:
    """Voxels whose centres fall inside a rotated, optionally lobulated ellipsoid.

    ``center`` is in voxel units, ``semi_axes`` in mm. ``lobes`` is
    ``(amplitude, directions, phases)``: the boundary radius along unit
    direction ``u`` (in the ellipsoid's normalised frame) becomes
    ``1 + amplitude * mean_k cos(f * u.dir_k + phase_k)``.
    """
    spacing = np.asarray(spacing)
    amp = 0.0 if lobes is None else float(lobes[0])
    reach = np.max(semi_axes) * (1.0 + amp) / spacing + 1
    lo = np.maximum(np.floor(np.asarray(center) - reach).astype(int), 0)
    hi = np.minimum(np.ceil(np.asarray(center) + reach).astype(int) + 1, dims)
    mask = np.zeros(dims, dtype=bool)
    if np.any(hi <= lo):
        return mask
    grids = np.meshgrid(*[np.arange(a, b) for a, b in zip(lo, hi)], indexing="ij")
    p = np.stack([(g - c) * s for g, c, s in zip(grids, center, spacing)], axis=-1)
    q = (p @ rotation) / np.asarray(semi_axes)  # rows of p times R == R^T applied to each point
    rho = np.sqrt(np.sum(q * q, axis=-1))
    if amp > 0:
        u = q / np.where(rho > 0, rho, 1.0)[..., None]
        dirs, phases = np.asarray(lobes[1]), np.asarray(lobes[2])
        wave = np.cos(LOBE_FREQUENCY * (u @ dirs.T) + phases).mean(axis=-1)
        inside = rho <= 1.0 + amp * wave
    else:
        inside = rho <= 1.0
    mask[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = inside
    return mask


def _largest_component(mask: np.ndarray) -> np.ndarray:
    nz = np.argwhere(mask)
    if nz.size == 0:
        return mask
    box = tuple(slice(a, b + 1) for a, b in zip(nz.min(axis=0), nz.max(axis=0)))
    labels, n = ndi.label(mask[box], structure=np.ones((3, 3, 3), bool))
    if n <= 1:
        return mask
    sizes = np.bincount(labels.ravel())[1:]
    out = np.zeros_like(mask)
    out[box] = labels == (1 + int(np.argmax(sizes)))
    return out


def perturb(center, semi_axes, rotation, radius: float, dilate: bool, dims, spacing,
            lobes=None) -> np.ndarray:
    """Erode or dilate an analytic ellipsoid by ``radius`` mm, then voxelise.

    The boundary moves by ``radius`` along every principal axis, so the
    change is continuous in ``radius`` rather than quantised to whole voxel
    layers. Erosion never shrinks an axis below a tenth of its length.
    """
    semi = np.asarray(semi_axes, dtype=np.float64)
    semi = semi + radius if dilate else np.maximum(semi - radius, 0.1 * semi)
    return ellipsoid_mask(dims, spacing, center, semi, rotation, lobes)


def _brain_mask(dims) -> np.ndarray:
    c = (np.asarray(dims) - 1) / 2.0
    half = np.asarray(dims) / 2.0 - 1.5
    g = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    return sum(((gi - ci) / hi) ** 2 for gi, ci, hi in zip(g, c, half)) <= 1.0


def _atlas(dims, brain) -> np.ndarray:
    x = np.arange(dims[0])[:, None, None]
    y = np.arange(dims[1])[None, :, None]
    right = np.broadcast_to(x < dims[0] / 2.0, dims)
    anterior = np.broadcast_to(y >= dims[1] / 2.0, dims)
    lab = np.where(anterior, np.where(right, 1, 2), np.where(right, 3, 4))
    return np.where(brain, lab, 0).astype(np.int32)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _draw_geometry(spec: PhantomSpec, rng, brain) -> list:
    """Non-overlapping lesion placements for one patient."""
    dims = np.asarray(spec.dims)
    spacing = np.asarray(spec.spacing)
    placed = []
    for _ in range(spec.lesions_per_patient):
        base = rng.uniform(*spec.radius_mm)
        q = rng.uniform(*spec.axis_ratio)
        semi = np.array([base * q ** (2 / 3), base * q ** (-1 / 3), base * q ** (-1 / 3)])
        semi = np.maximum(semi, 1.2 * spacing.max())
        rot = Rotation.random(random_state=rng).as_matrix()
        contrast = rng.uniform(*spec.contrast)
        tex = rng.uniform(*spec.texture)
        dirs = rng.standard_normal((N_LOBES, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        lobes = (rng.uniform(*spec.lobulation), dirs, rng.uniform(0, 2 * np.pi, N_LOBES))
        hidden = rng.standard_normal()
        xi = rng.standard_normal()
        shift_dir = rng.standard_normal(3)
        shift_dir /= np.linalg.norm(shift_dir)
        # bounding radius in voxels, covering dilation and the coupled shift
        shift = spec.error_shift * semi.min() if spec.error_coupling else 0.0
        reach = semi.max() * (1.0 + lobes[0]) + (1 + JITTER) * spec.perturbation * semi.min() + shift
        bound = reach / spacing.min() + 1.0
        if np.any(bound + 1 >= dims - bound - 2):
            raise SpecInfeasible(f"a lesion of reach {reach:.1f} mm does not fit a {spec.dims} grid")
        for _attempt in range(2000):
            c = rng.uniform(bound + 1, dims - bound - 2)
            if not brain[tuple(np.round(c).astype(int))]:
                continue
            if all(np.linalg.norm(c - p["center"]) > bound + p["bound"] + 2 for p in placed):
                break
        else:
            raise SpecInfeasible(
                f"cannot place {spec.lesions_per_patient} non-adjacent lesions in a {spec.dims} grid"
            )
        placed.append(dict(center=c, bound=bound, semi=semi, rot=rot, lobes=lobes, contrast=contrast,
                           texture=tex, hidden=hidden, xi=xi, shift_dir=shift_dir))
    return placed


def _patient_base(spec: PhantomSpec, rng, pid: str):
    """Image, ground truth and atlas of one patient plus raw lesion records."""
    dims = spec.dims
    brain = _brain_mask(dims)
    geo = _draw_geometry(spec, rng, brain)
    image = np.where(brain, spec.background, 0.0) + spec.image_noise * rng.standard_normal(dims)
    gt = np.zeros(dims, dtype=bool)
    masks = []
    for g in geo:
        m = _largest_component(ellipsoid_mask(dims, spec.spacing, g["center"], g["semi"], g["rot"], g["lobes"]))
        masks.append(m)
        gt |= m
        lesion_level = spec.background * (1.0 - g["contrast"])
        image[m] = lesion_level + g["texture"] * rng.standard_normal(int(m.sum()))
    image_v = Volume(image.astype(np.float32), spec.spacing, (0.0, 0.0, 0.0), "intensity")
    gt_v = Volume(gt, spec.spacing, (0.0, 0.0, 0.0), "label")
    atlas_v = Volume(_atlas(dims, brain), spec.spacing, (0.0, 0.0, 0.0), "label")
    return image_v, gt_v, atlas_v, geo, masks


def _planted_values(image: Volume, mask: np.ndarray, spacing) -> dict:
    idx = np.flatnonzero(mask.ravel(order="F"))
    inst = LesionInstance(1, idx, mask.shape, tuple(spacing), (0.0, 0.0, 0.0), Source.GROUND_TRUTH)
    return {**first_order(image, inst), **shape(inst)}


def generate(spec: PhantomSpec) -> PhantomDataset:
    """Generate ``spec.n_patients`` phantoms sharing one planted mechanism.

    Fully determined by ``spec.seed``.
    """
    root = np.random.SeedSequence(spec.seed)
    streams = [np.random.default_rng(s) for s in root.spawn(2 * spec.n_patients)]
    width = max(3, len(str(spec.n_patients)))

    bases = []
    for p in range(spec.n_patients):
        pid = f"P{p:0{width}d}"
        bases.append((pid, *_patient_base(spec, streams[2 * p], pid)))

    unknown = set(spec.weights) - set(_planted_values(bases[0][1], bases[0][5][0], spec.spacing))
    if unknown:
        raise ValueError(f"cannot plant weights on unknown features {sorted(unknown)}")
    planted = sorted(spec.weights)
    raw = np.array([
        [_planted_values(b[1], m, spec.spacing)[k] for k in planted]
        for b in bases for m in b[5]
    ]).reshape(spec.n_patients * spec.lesions_per_patient, len(planted))
    std = raw.std(axis=0)
    z = (raw - raw.mean(axis=0)) / np.where(std > 0, std, 1.0)
    w = np.array([spec.weights[k] for k in planted])
    geos = [g for b in bases for g in b[4]]
    hidden = np.array([g["hidden"] for g in geos])
    xi = np.array([g["xi"] for g in geos])
    eta = z @ w + spec.logit_offset + spec.noise_std * xi + spec.error_coupling * hidden
    r = logistic(eta) if spec.has_drive else np.zeros(len(geos))

    patients, oracle = [], []
    k = 0
    for p, (pid, image, gt, atlas, geo, masks) in enumerate(bases):
        rng = streams[2 * p + 1]
        centers, records = [], []
        for j, g in enumerate(geo):
            shift = 0.0
            if spec.error_coupling:
                shift = spec.error_shift * g["semi"].min() * float(logistic(g["hidden"]))
            center = g["center"] + shift * g["shift_dir"] / np.asarray(spec.spacing)
            core = _largest_component(ellipsoid_mask(spec.dims, spec.spacing, center, g["semi"], g["rot"], g["lobes"]))
            centers.append((core, center, g, r[k + j]))
            records.append(dict(
                patient_id=pid,
                center_x=float(g["center"][0]), center_y=float(g["center"][1]), center_z=float(g["center"][2]),
                semi_major=float(g["semi"][0]), semi_minor=float(g["semi"][1]),
                contrast=float(g["contrast"]), texture=float(g["texture"]),
                lobulation=float(g["lobes"][0]),
                hidden=float(g["hidden"]), shift_mm=float(shift),
                **{f"planted_{n}": float(raw[k + j, i]) for i, n in enumerate(planted)},
                **{f"z_{n}": float(z[k + j, i]) for i, n in enumerate(planted)},
                eta=float(eta[k + j]), r=float(r[k + j]),
            ))
        # Per lesion, a fixed share of samples reproduces it unchanged so the
        # fused prediction does not drift with r; the rest alternate between
        # erosion and dilation in random order.
        n_anchor = int(round(spec.anchor_fraction * spec.M))
        plans = []
        for _ in centers:
            order = rng.permutation(spec.M)
            plan = [None] * spec.M
            for k2, m in enumerate(order[n_anchor:]):
                plan[m] = (k2 % 2 == 0, rng.uniform(1.0 - JITTER, 1.0 + JITTER))
            plans.append(plan)
        samples = []
        for m in range(spec.M):
            sample = np.zeros(spec.dims, dtype=bool)
            for (core, center, g, rr), plan in zip(centers, plans):
                radius = 0.0 if plan[m] is None else spec.perturbation * rr * g["semi"].min() * plan[m][1]
                if radius > 0:
                    sample |= perturb(center, g["semi"], g["rot"], radius, plan[m][0], spec.dims,
                                      spec.spacing, g["lobes"])
                else:
                    sample |= core
            prob = sample.astype(np.float64)
            if spec.blur_sigma > 0:
                prob = ndi.gaussian_filter(prob, spec.blur_sigma)
            samples.append(Volume(np.clip(prob, 0, 1).astype(np.float32), spec.spacing,
                                  (0.0, 0.0, 0.0), "probability"))

        # oracle rows carry the ground-truth instance id of each lesion
        gt_ids = {}
        for inst in connected_components(gt, 26, source=Source.GROUND_TRUTH):
            gt_ids[int(inst.index[0])] = inst.id
        for mask, rec in zip(masks, records):
            first = int(np.flatnonzero(mask.ravel(order="F"))[0])
            rec["lesion_id"] = gt_ids.get(first, -1)
        records.sort(key=lambda d: d["lesion_id"])
        records = [{"patient_id": d["patient_id"], "lesion_id": d["lesion_id"],
                    **{k2: v for k2, v in d.items() if k2 not in ("patient_id", "lesion_id")}}
                   for d in records]
        patients.append(Phantom(pid, image, gt, atlas, structure_centroids(atlas), samples, records))
        oracle.extend(records)
        k += len(geo)
    return PhantomDataset(spec, patients, oracle)
