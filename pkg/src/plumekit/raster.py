"""Raster data model and BRF file I/O.

BRF ("band raster file") is the interchange format used everywhere in this
package: a single UTF-8 JSON header line terminated by ``\\n`` (0x0A),
followed immediately by the raw payload. The header carries::

    {"magic": "BRF1", "kind": "scene|field|mask", "dtype": "f32|u8",
     "width": W, "height": H,
     "bands": ["B11", "B12", ...],      # kind=scene only
     "pixel_size_m": 20.0,              # kind=scene only
     "meta": {...}}

The payload is band-sequential, row-major, little-endian IEEE-754 for f32
and one byte per pixel for u8. The byte count must equal
width*height*bands*dtype_size exactly; anything else is a FormatError.

There is no georeferencing: CRS strings or any other metadata ride along
untouched in ``meta``. Feature stacks (see :mod:`plumekit.enhance`) are
stored as three-band scenes named ["V", "S", "V2"] with a ``meta["stack"]``
marker, since their channels may be negative and therefore are not valid
radiance scenes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .validation import (
    FormatError,
    InvariantError,
    MissingBandError,
    as_float2d,
    as_u8_2d,
    check_finite,
)

_MAGIC = "BRF1"
_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("|u1")}

# Difference-map palette: TN black, TP green, FP red, FN yellow.
DIFFMAP_PALETTE = np.array(
    [(0, 0, 0), (0, 255, 0), (255, 0, 0), (255, 255, 0)], dtype=np.uint8
)


class Field:
    """Single-channel float32 raster (radiances, ratio maps, probabilities).

    Values must be finite; negative values are allowed (ratio fields are
    negative over plumes). Instances are immutable after construction.
    """

    def __init__(self, values, meta: Mapping[str, object] | None = None):
        self.values = as_float2d(values, "Field values")
        self.values.setflags(write=False)
        self.meta = dict(meta) if meta else {}

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def validate(self) -> None:
        check_finite(self.values, "Field values")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Field):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.values.tobytes() == other.values.tobytes()
            and self.meta == other.meta
        )

    def __repr__(self) -> str:
        return f"Field({self.width}x{self.height})"


class Mask:
    """Per-pixel uint8 label raster.

    0 is background; labels 1..255 identify plume sources. Binary masks use
    the single label 1. Instances are immutable after construction.
    """

    def __init__(self, labels, meta: Mapping[str, object] | None = None):
        self.labels = as_u8_2d(labels, "Mask labels")
        self.labels.setflags(write=False)
        self.meta = dict(meta) if meta else {}

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def validate(self) -> None:
        pass  # the u8 dtype already enforces the label range

    def binarized(self) -> np.ndarray:
        """Boolean foreground view (any nonzero label)."""
        return self.labels != 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.labels.tobytes() == other.labels.tobytes()
            and self.meta == other.meta
        )

    def __repr__(self) -> str:
        return f"Mask({self.width}x{self.height})"


class Scene:
    """Multi-band radiance raster.

    ``bands`` is an ordered mapping from band id ("B01".."B12") to a Field
    of identical shape. Radiances must be finite and non-negative; the
    enhancement workflows additionally require B11 and B12 to be present.
    """

    def __init__(
        self,
        bands: Mapping[str, Field | np.ndarray],
        pixel_size_m: float = 20.0,
        meta: Mapping[str, object] | None = None,
    ):
        if not bands:
            raise InvariantError("Scene needs at least one band")
        self.bands: dict[str, Field] = {}
        shape = None
        for name, values in bands.items():
            field = values if isinstance(values, Field) else Field(values)
            if shape is None:
                shape = field.shape
            elif field.shape != shape:
                raise InvariantError(
                    f"band {name} has shape {field.shape}, expected {shape}"
                )
            self.bands[str(name)] = field
        self.pixel_size_m = float(pixel_size_m)
        self.meta = dict(meta) if meta else {}

    @property
    def shape(self) -> tuple[int, int]:
        return next(iter(self.bands.values())).shape

    @property
    def height(self) -> int:
        return self.shape[0]

    @property
    def width(self) -> int:
        return self.shape[1]

    @property
    def band_names(self) -> list[str]:
        return list(self.bands)

    def band(self, name: str) -> Field:
        try:
            return self.bands[name]
        except KeyError:
            raise MissingBandError(
                f"scene has no band {name!r} (has {self.band_names})"
            ) from None

    def has_band(self, name: str) -> bool:
        return name in self.bands

    def with_band(self, name: str, values) -> "Scene":
        """Copy of this scene with one band replaced or added."""
        bands = dict(self.bands)
        bands[name] = values if isinstance(values, Field) else Field(values)
        return Scene(bands, self.pixel_size_m, self.meta)

    def validate(self) -> None:
        for name, field in self.bands.items():
            check_finite(field.values, f"band {name}")
            if field.values.size and field.values.min() < 0:
                raise InvariantError(f"band {name} has negative radiance")

    def __iter__(self) -> Iterator[tuple[str, Field]]:
        return iter(self.bands.items())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.band_names == other.band_names
            and all(self.bands[k] == other.bands[k] for k in self.bands)
            and self.pixel_size_m == other.pixel_size_m
            and self.meta == other.meta
        )

    def __repr__(self) -> str:
        return f"Scene({self.width}x{self.height}, bands={self.band_names})"


# ---------------------------------------------------------------------------
# BRF read / write
# ---------------------------------------------------------------------------


def _encode_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"


def write_brf(obj, path) -> None:
    """Write a Scene, Field, Mask or FeatureStack to ``path`` in BRF format.

    The object is validated first; anything violating its invariants
    (non-finite values, negative radiance) is refused rather than written.
    Re-reading the file yields a bit-identical object.
    """
    from .enhance import FeatureStack  # lazy: enhance imports this module

    if isinstance(obj, FeatureStack):
        _write_stack(obj, path)
        return

    obj.validate()
    if isinstance(obj, Scene):
        header = {
            "magic": _MAGIC,
            "kind": "scene",
            "dtype": "f32",
            "width": obj.width,
            "height": obj.height,
            "bands": obj.band_names,
            "pixel_size_m": obj.pixel_size_m,
            "meta": obj.meta,
        }
        payload = b"".join(
            f.values.astype("<f4", copy=False).tobytes() for f in obj.bands.values()
        )
    elif isinstance(obj, Field):
        header = {
            "magic": _MAGIC,
            "kind": "field",
            "dtype": "f32",
            "width": obj.width,
            "height": obj.height,
            "meta": obj.meta,
        }
        payload = obj.values.astype("<f4", copy=False).tobytes()
    elif isinstance(obj, Mask):
        header = {
            "magic": _MAGIC,
            "kind": "mask",
            "dtype": "u8",
            "width": obj.width,
            "height": obj.height,
            "meta": obj.meta,
        }
        payload = obj.labels.tobytes()
    else:
        raise TypeError(f"cannot write object of type {type(obj).__name__}")

    Path(path).write_bytes(_encode_header(header) + payload)


def _write_stack(stack, path) -> None:
    stack.validate()
    meta: dict = {"stack": "vsv"}
    if stack.normalization is not None:
        meta["normalization"] = [list(pair) for pair in stack.normalization]
    v, s, v2 = stack.channels
    header = {
        "magic": _MAGIC,
        "kind": "scene",
        "dtype": "f32",
        "width": v.width,
        "height": v.height,
        "bands": ["V", "S", "V2"],
        "pixel_size_m": 20.0,
        "meta": meta,
    }
    payload = b"".join(
        f.values.astype("<f4", copy=False).tobytes() for f in (v, s, v2)
    )
    Path(path).write_bytes(_encode_header(header) + payload)


def read_brf(path):
    """Read a BRF file, returning a Scene, Field, Mask or FeatureStack.

    Raises FormatError on a malformed header, unknown dtype, or a payload
    whose byte length disagrees with the header.
    """
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: no header line found")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from None
    if not isinstance(header, dict) or header.get("magic") != _MAGIC:
        raise FormatError(f"{path}: missing BRF1 magic")

    kind = header.get("kind")
    dtype_name = header.get("dtype")
    if dtype_name not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype {dtype_name!r} (only f32/u8)")
    dtype = _DTYPES[dtype_name]

    try:
        width = int(header["width"])
        height = int(header["height"])
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{path}: header lacks integer width/height") from None
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: non-positive dimensions")
    meta = header.get("meta", {})

    payload = raw[nl + 1 :]
    if kind == "scene":
        band_names = header.get("bands")
        if not isinstance(band_names, list) or not band_names:
            raise FormatError(f"{path}: scene header lacks a band list")
        n_bands = len(band_names)
    elif kind in ("field", "mask"):
        n_bands = 1
    else:
        raise FormatError(f"{path}: unknown kind {kind!r}")

    expected = width * height * n_bands * dtype.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload length {len(payload)} != expected {expected} bytes"
        )

    data = np.frombuffer(payload, dtype=dtype).reshape(n_bands, height, width)

    if kind == "field":
        if dtype_name != "f32":
            raise FormatError(f"{path}: field payload must be f32")
        return Field(data[0], meta=meta)
    if kind == "mask":
        if dtype_name != "u8":
            raise FormatError(f"{path}: mask payload must be u8")
        return Mask(data[0], meta=meta)

    if dtype_name != "f32":
        raise FormatError(f"{path}: scene payload must be f32")
    if isinstance(meta, dict) and meta.get("stack") == "vsv":
        return _read_stack(path, band_names, data, meta)
    scene = Scene(
        {name: data[i] for i, name in enumerate(band_names)},
        pixel_size_m=float(header.get("pixel_size_m", 20.0)),
        meta=meta,
    )
    return scene


def _read_stack(path, band_names, data, meta):
    from .enhance import FeatureStack  # lazy: enhance imports this module

    if band_names != ["V", "S", "V2"]:
        raise FormatError(f"{path}: stack file must have bands [V, S, V2]")
    norm = meta.get("normalization")
    normalization = (
        tuple((float(m), float(s)) for m, s in norm) if norm is not None else None
    )
    return FeatureStack(
        v=Field(data[0]),
        s=Field(data[1]),
        v_dup=Field(data[2]),
        normalization=normalization,
    )


# ---------------------------------------------------------------------------
# Image export
# ---------------------------------------------------------------------------


def export_image(obj, path, colormap: str = "grayscale") -> None:
    """Render a Field or Mask to a binary PPM (P6, maxval 255).

    grayscale: linear rescale of [min, max] to [0, 255]; a constant input
    maps to mid-gray 128 (no divide by zero).
    diffmap: input must be a 4-valued code mask (TN=0, TP=1, FP=2, FN=3 from
    evalmetrics.difference_map); rendered black/green/red/yellow.
    """
    if colormap == "grayscale":
        if isinstance(obj, Field):
            values = obj.values.astype(np.float64)
        elif isinstance(obj, Mask):
            values = obj.labels.astype(np.float64)
        else:
            raise TypeError(f"cannot export {type(obj).__name__}")
        lo, hi = values.min(), values.max()
        if hi > lo:
            gray = np.rint((values - lo) / (hi - lo) * 255.0)
        else:
            gray = np.full(values.shape, 128.0)
        gray = np.clip(gray, 0, 255).astype(np.uint8)
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
    elif colormap == "diffmap":
        if not isinstance(obj, Mask):
            raise InvariantError("diffmap colormap needs a code Mask")
        codes = obj.labels
        if codes.size and codes.max() > 3:
            raise InvariantError(
                "diffmap input must use only codes 0..3 (TN/TP/FP/FN)"
            )
        rgb = DIFFMAP_PALETTE[codes]
    else:
        raise InvariantError(f"unknown colormap {colormap!r}")

    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb.tobytes())
