"""Volumes and the two on-disk formats the pipeline speaks.

Volumes are stored as a minimal single-file NIfTI-1 subset:

* ``.nii`` only, no gzip, no header extensions;
* datatypes uint8, int16 and float32;
* at most three non-singleton dimensions;
* geometry limited to voxel spacing (``pixdim``) and origin (``qoffset``).
  Orientation codes and rotation quaternions are ignored, so every input of
  one case must already be co-registered on the same grid.

Voxel data are indexed ``data[x, y, z]``; the flat, on-disk order is
x-fastest (Fortran order).

Per-lesion tables are CSV files with a ``patient_id,lesion_id`` prefix,
numeric feature columns and the optional ``lsu``/``iou_adj`` target columns.
"""
from __future__ import annotations

import csv
import io
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptHeader,
    DuplicateColumn,
    InvalidDims,
    IoFailure,
    LabelOverflow,
    NonNumericCell,
    RaggedRow,
    TableError,
    TruncatedData,
    UnsupportedDatatype,
)
from .regress.matrix import TARGET_COLUMNS, FeatureMatrix

KINDS = ("intensity", "probability", "label")

HEADER_SIZE = 348
VOX_OFFSET = 352

# NIfTI datatype code -> numpy dtype (without byte order)
_DATATYPES = {2: "u1", 4: "i2", 16: "f4"}
_BITPIX = {2: 8, 4: 16, 16: 32}

# offsets into the 348-byte header
_OFF_DIM = 40
_OFF_DATATYPE = 70
_OFF_PIXDIM = 76
_OFF_VOX_OFFSET = 108
_OFF_SCL = 112
_OFF_XYZT_UNITS = 123
_OFF_DESCRIP = 148
_OFF_QFORM = 252
_OFF_QOFFSET = 268
_OFF_INTENT_NAME = 328
_OFF_MAGIC = 344


@dataclass(frozen=True, eq=False)
class Volume:
    """A 3D scalar grid with physical geometry.

    Parameters
    ----------
    data : ndarray
        Voxel values indexed ``[x, y, z]``. Stored read-only.
    spacing : tuple of float
        Voxel size in millimetres along x, y, z.
    origin : tuple of float
        Physical position (mm) of voxel ``(0, 0, 0)``.
    kind : {'intensity', 'probability', 'label'}
    """

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    kind: str = "intensity"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown volume kind {self.kind!r}")
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise InvalidDims(f"expected a 3D array, got shape {data.shape}")
        if min(data.shape) < 1:
            raise InvalidDims(f"zero-sized dimension in {data.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or not all(math.isfinite(s) and s > 0 for s in spacing):
            raise InvalidDims(f"spacing must be three positive values, got {self.spacing}")
        if len(origin) != 3 or not all(math.isfinite(o) for o in origin):
            raise InvalidDims(f"origin must be three finite values, got {self.origin}")

        if self.kind == "label":
            data = _as_label_array(data)
        else:
            if data.dtype.kind not in "f":
                data = data.astype(np.float64)
            if self.kind == "probability" and data.size and (
                not np.all(np.isfinite(data)) or data.min() < 0 or data.max() > 1
            ):
                raise ValueError("probability volume has values outside [0, 1]")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple:
        return tuple(int(n) for n in self.data.shape)

    @property
    def nvox(self) -> int:
        return int(self.data.size)

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    @property
    def flat(self) -> np.ndarray:
        """Voxel values in x-fastest order."""
        return self.data.ravel(order="F")

    def same_grid(self, other: "Volume") -> bool:
        return self.dims == other.dims and self.spacing == other.spacing

    def with_data(self, data, kind: str | None = None) -> "Volume":
        return Volume(data, self.spacing, self.origin, kind or self.kind)

    def to_physical(self, index) -> np.ndarray:
        """Map voxel indices (``(..., 3)`` array) to millimetres."""
        return np.asarray(self.origin) + np.asarray(index, dtype=float) * np.asarray(self.spacing)

    def equals(self, other: "Volume") -> bool:
        """Field-for-field equality; float data compared bitwise."""
        if not isinstance(other, Volume):
            return False
        if (self.dims, self.spacing, self.origin, self.kind) != (
            other.dims, other.spacing, other.origin, other.kind,
        ):
            return False
        a, b = self.data, other.data
        if a.dtype.kind == "f" and b.dtype.kind == "f":
            if a.dtype != b.dtype:
                return False
            return a.tobytes() == b.tobytes()
        return bool(np.array_equal(a, b))


def _as_label_array(data: np.ndarray) -> np.ndarray:
    if data.dtype == bool:
        return data.astype(np.int32)
    if data.dtype.kind in "iu":
        if data.size and (data.min() < 0 or data.max() > np.iinfo(np.int32).max):
            raise ValueError("label values must be non-negative int32")
        return data.astype(np.int32)
    if data.dtype.kind == "f":
        if data.size and (
            not np.all(np.isfinite(data)) or np.any(data < 0) or np.any(data != np.round(data))
        ):
            raise ValueError("label volume holds non-integer or negative values")
        return data.astype(np.int32)
    raise ValueError(f"unsupported label dtype {data.dtype}")


# ---------------------------------------------------------------------------
# NIfTI-1
# ---------------------------------------------------------------------------

def read_nifti(path, kind: str | None = None) -> Volume:
    """Read a single-file NIfTI-1 volume.

    ``kind`` overrides the volume kind recorded in the header's intent name.
    Raises a :class:`~lesion_unc.errors.NiftiError` subclass on any malformed
    input.
    """
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_nifti(buf, kind=kind)


def parse_nifti(buf: bytes, kind: str | None = None) -> Volume:
    if len(buf) < HEADER_SIZE:
        raise CorruptHeader(f"header needs {HEADER_SIZE} bytes, got {len(buf)}")
    if buf[_OFF_MAGIC:_OFF_MAGIC + 4] != b"n+1\x00":
        raise CorruptHeader(f"bad magic {buf[_OFF_MAGIC:_OFF_MAGIC + 4]!r}")

    endian = None
    for cand in ("<", ">"):
        ndim = struct.unpack_from(cand + "h", buf, _OFF_DIM)[0]
        if 1 <= ndim <= 7:
            endian = cand
            break
    if endian is None:
        raise CorruptHeader("dim[0] is implausible in both byte orders")
    if struct.unpack_from(endian + "i", buf, 0)[0] != HEADER_SIZE:
        raise CorruptHeader("sizeof_hdr is not 348")

    dim = struct.unpack_from(endian + "8h", buf, _OFF_DIM)
    ndim = dim[0]
    shape = list(dim[1:ndim + 1])
    if any(n < 1 for n in shape):
        raise CorruptHeader(f"non-positive dimension in {shape}")
    if any(n != 1 for n in shape[3:]):
        raise CorruptHeader(f"more than three effective dimensions: {shape}")
    shape = (shape + [1, 1, 1])[:3]

    datatype, bitpix = struct.unpack_from(endian + "2h", buf, _OFF_DATATYPE)
    if datatype not in _DATATYPES:
        raise UnsupportedDatatype(f"datatype code {datatype} not supported")
    if bitpix != _BITPIX[datatype]:
        raise CorruptHeader(f"bitpix {bitpix} inconsistent with datatype {datatype}")

    pixdim = struct.unpack_from(endian + "8f", buf, _OFF_PIXDIM)
    spacing = []
    for axis in range(3):
        s = float(pixdim[axis + 1])
        if axis >= ndim and not (math.isfinite(s) and s > 0):
            s = 1.0
        if not (math.isfinite(s) and s > 0):
            raise CorruptHeader(f"pixdim[{axis + 1}] = {s} is not a positive spacing")
        spacing.append(s)

    vox_offset = struct.unpack_from(endian + "f", buf, _OFF_VOX_OFFSET)[0]
    if not math.isfinite(vox_offset) or vox_offset < HEADER_SIZE or vox_offset != int(vox_offset):
        raise CorruptHeader(f"invalid vox_offset {vox_offset}")
    vox_offset = int(vox_offset)

    slope, inter = struct.unpack_from(endian + "2f", buf, _OFF_SCL)
    if slope == 0 or not math.isfinite(slope):
        slope = 1.0
    if not math.isfinite(inter):
        inter = 0.0

    qoffset = struct.unpack_from(endian + "3f", buf, _OFF_QOFFSET)
    origin = tuple(float(q) if math.isfinite(q) else 0.0 for q in qoffset)

    nvox = shape[0] * shape[1] * shape[2]
    dtype = np.dtype(endian + _DATATYPES[datatype])
    nbytes = nvox * dtype.itemsize
    payload = buf[vox_offset:vox_offset + nbytes]
    if len(payload) < nbytes:
        raise TruncatedData(f"expected {nbytes} payload bytes, found {len(payload)}")
    raw = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
    raw = raw.astype(dtype.newbyteorder("="))

    scaled = slope != 1.0 or inter != 0.0
    data = raw * np.float64(slope) + np.float64(inter) if scaled else raw

    if kind is None:
        intent = buf[_OFF_INTENT_NAME:_OFF_INTENT_NAME + 16].split(b"\x00")[0]
        intent = intent.decode("ascii", "replace")
        if intent in KINDS:
            kind = intent
        else:
            kind = "label" if data.dtype.kind in "iu" else "intensity"
    try:
        return Volume(data, tuple(spacing), origin, kind)
    except (ValueError, InvalidDims) as exc:
        raise CorruptHeader(f"payload inconsistent with kind {kind!r}: {exc}") from exc


def _label_dtype(v: Volume) -> tuple:
    hi = int(v.data.max()) if v.nvox else 0
    if hi <= 255:
        return 2, np.dtype("<u1")
    if hi <= 32767:
        return 4, np.dtype("<i2")
    raise LabelOverflow(f"label value {hi} exceeds int16 range")


def nifti_bytes(v: Volume) -> bytes:
    """Serialise a volume to single-file NIfTI-1 bytes."""
    if v.kind == "label":
        datatype, dtype = _label_dtype(v)
    else:
        datatype, dtype = 16, np.dtype("<f4")

    hdr = bytearray(VOX_OFFSET)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    nx, ny, nz = v.dims
    struct.pack_into("<8h", hdr, _OFF_DIM, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, _OFF_DATATYPE, datatype, _BITPIX[datatype])
    struct.pack_into("<8f", hdr, _OFF_PIXDIM, 1.0, *v.spacing, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, _OFF_VOX_OFFSET, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, _OFF_SCL, 1.0, 0.0)
    hdr[_OFF_XYZT_UNITS] = 2  # mm
    hdr[_OFF_DESCRIP:_OFF_DESCRIP + 10] = b"lesion_unc"
    struct.pack_into("<2h", hdr, _OFF_QFORM, 1, 0)
    struct.pack_into("<3f", hdr, _OFF_QOFFSET, *v.origin)
    name = v.kind.encode("ascii")
    hdr[_OFF_INTENT_NAME:_OFF_INTENT_NAME + len(name)] = name
    hdr[_OFF_MAGIC:_OFF_MAGIC + 4] = b"n+1\x00"

    payload = np.asarray(v.data, dtype=dtype).ravel(order="F").tobytes()
    return bytes(hdr) + payload


def write_nifti(v: Volume, path) -> None:
    """Write ``v`` as little-endian single-file NIfTI-1.

    Intensity and probability volumes are stored as float32. Label volumes
    use uint8 when every label fits, int16 otherwise.
    """
    data = nifti_bytes(v)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

ID_COLUMNS = ("patient_id", "lesion_id")


def format_float(x) -> str:
    """Shortest repr that round-trips a finite double."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x}")
    return repr(x)


def table_text(fm: FeatureMatrix) -> str:
    targets = [t for t in TARGET_COLUMNS if t in fm.targets]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([*ID_COLUMNS, *fm.names, *targets])
    for i in range(fm.n):
        writer.writerow([
            fm.patient_ids[i],
            fm.lesion_ids[i],
            *(format_float(x) for x in fm.X[i]),
            *(format_float(fm.targets[t][i]) for t in targets),
        ])
    return out.getvalue()


def write_table(fm: FeatureMatrix, path) -> None:
    text = table_text(fm)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def parse_table(text: str) -> FeatureMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise TableError("empty table")
    header = [h.strip() for h in rows[0]]
    seen = set()
    for name in header:
        if name in seen:
            raise DuplicateColumn(f"column {name!r} appears twice")
        seen.add(name)
    if tuple(header[:2]) != ID_COLUMNS:
        raise TableError(f"table must start with {','.join(ID_COLUMNS)}")

    value_cols = header[2:]
    values = np.empty((len(rows) - 1, len(value_cols)), dtype=np.float64)
    patients, lesions = [], []
    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise RaggedRow(f"line {r + 2}: {len(row)} cells under a {len(header)}-column header")
        patients.append(row[0])
        lesions.append(row[1])
        for c, cell in enumerate(row[2:]):
            try:
                x = float(cell)
            except ValueError:
                raise NonNumericCell(f"line {r + 2}, column {value_cols[c]!r}: {cell!r}") from None
            if not math.isfinite(x):
                raise NonNumericCell(f"line {r + 2}, column {value_cols[c]!r}: non-finite {cell!r}")
            values[r, c] = x

    feat_idx = [i for i, n in enumerate(value_cols) if n not in TARGET_COLUMNS]
    targets = {n: values[:, i].copy() for i, n in enumerate(value_cols) if n in TARGET_COLUMNS}
    return FeatureMatrix(
        patient_ids=patients,
        lesion_ids=lesions,
        names=[value_cols[i] for i in feat_idx],
        X=values[:, feat_idx].copy(),
        targets=targets,
    )


def read_table(path) -> FeatureMatrix:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_table(text)


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {path}: {exc}") from exc
    return path
