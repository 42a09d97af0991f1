"""Deterministic synthetic degradations for building quality-graded groups.

Eleven ordered severity levels (0 = pristine) are supported for four kinds
of degradation: gaussian blur, bilinear down/up resampling, square
occlusion, and additive gaussian noise. Level 0 is a bit-exact identity for
every kind, and a (kind, level, seed, image) tuple fully determines the
output bytes.

Stochastic kinds draw from splitmix64, a counter-based 64-bit generator
that is trivial to reproduce in any language:

    state_i = seed + i * 0x9E3779B97F4A7C15          (mod 2^64)
    out_i   = mix(state_i)   with the standard splitmix64 finalizer

so the i-th draw is a pure function of (seed, i). Child seeds for grouped
generation are derived by folding indices through the same finalizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError

DEGRADATION_KINDS = ("gaussian_blur", "down_up", "occlusion", "gaussian_noise")
NUM_LEVELS = 11  # levels 0..10

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


# --- splitmix64 -------------------------------------------------------------

def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *indices: int) -> int:
    """Fold indices into `seed`, one finalizer round per index."""
    state = seed & _MASK64
    for ix in indices:
        state = _mix64((state + _GOLDEN + int(ix)) & _MASK64)
    return state


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First `n` splitmix64 outputs for `seed`, as uint64."""
    with np.errstate(over="ignore"):
        i = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(seed & _MASK64) + i * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def normal_draws(seed: int, n: int) -> np.ndarray:
    """`n` standard normals via Box-Muller over splitmix64 uniforms."""
    pairs = (n + 1) // 2
    z = splitmix64(seed, 2 * pairs)
    u1 = ((z[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53  # (0, 1]
    u2 = (z[pairs:] >> np.uint64(11)).astype(np.float64) * 2.0 ** -53          # [0, 1)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
    return out[:n]


# --- PPM I/O ----------------------------------------------------------------

def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM with maxval 255 into a (H, W, 3) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()

    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(data):
            c = data[pos:pos + 1]
            if c == b"#":  # comment runs to end of line
                while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        return data[start:pos]

    magic = next_token()
    if magic != b"P6":
        raise FormatError(f"{path}: unsupported PPM magic {magic!r}, only binary P6 is handled")
    try:
        width, height, maxval = (int(next_token()) for _ in range(3))
    except ValueError as exc:
        raise FormatError(f"{path}: bad PPM header: {exc}") from exc
    if maxval != 255:
        raise FormatError(f"{path}: PPM maxval {maxval} unsupported, expected 255")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    raster = data[pos:pos + expected]
    if len(raster) != expected:
        raise FormatError(f"{path}: PPM raster truncated, wanted {expected} bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(img: np.ndarray, path) -> None:
    """Write a (H, W, 3) uint8 array as binary P6 PPM with maxval 255."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ContractError(f"write_ppm needs a (H, W, 3) uint8 array, got {img.shape} {img.dtype}")
    height, width = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


# --- degradations -----------------------------------------------------------

@dataclass(frozen=True)
class DegradationSpec:
    """One degradation: a kind, a severity level 0..10, and a seed."""

    kind: str
    level: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEGRADATION_KINDS:
            raise ContractError(f"unknown degradation kind {self.kind!r}")
        if not 0 <= self.level <= 10:
            raise ContractError(f"level must be in 0..10, got {self.level}")


def _round_u8(arr: np.ndarray) -> np.ndarray:
    # round half away from zero so results do not depend on banker's rounding
    return np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable gaussian blur with clamp-to-edge borders."""
    if sigma <= 0:
        return img.copy()
    kernel = _gaussian_kernel(sigma)
    radius = len(kernel) // 2
    work = img.astype(np.float64)
    # horizontal then vertical pass
    padded = np.pad(work, ((0, 0), (radius, radius), (0, 0)), mode="edge")
    work = sum(kernel[i] * padded[:, i:i + img.shape[1], :] for i in range(len(kernel)))
    padded = np.pad(work, ((radius, radius), (0, 0), (0, 0)), mode="edge")
    work = sum(kernel[i] * padded[i:i + img.shape[0], :, :] for i in range(len(kernel)))
    return _round_u8(work)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with pixel-center alignment, float64 math."""
    in_h, in_w = img.shape[:2]
    if (out_h, out_w) == (in_h, in_w):
        return img.astype(np.float64, copy=True)
    ys = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0, in_h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0, in_w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    src = img.astype(np.float64)
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def apply(img: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Apply one degradation; level 0 returns a bit-identical copy."""
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ContractError(f"expected a (H, W, 3) uint8 image, got {img.shape} {img.dtype}")
    if spec.level == 0:
        return img.copy()
    h, w = img.shape[:2]

    if spec.kind == "gaussian_blur":
        return gaussian_blur(img, sigma=0.4 * spec.level)

    if spec.kind == "down_up":
        factor = 1.0 + spec.level / 2.0
        small_h = max(1, round(h / factor))
        small_w = max(1, round(w / factor))
        small = bilinear_resize(img, small_h, small_w)
        restored = bilinear_resize(small, h, w)
        return _round_u8(restored)

    if spec.kind == "occlusion":
        # square side chosen so the covered area matches 5%*level of the image
        target = 0.05 * spec.level * h * w
        side = min(int(np.floor(np.sqrt(target) + 0.5)), h, w)
        if side == 0:
            return img.copy()
        draws = splitmix64(spec.seed, 2)
        top = int(draws[0] % np.uint64(h - side + 1))
        left = int(draws[1] % np.uint64(w - side + 1))
        out = img.copy()
        out[top:top + side, left:left + side, :] = 0
        return out

    if spec.kind == "gaussian_noise":
        sigma = 2.5 * spec.level
        noise = normal_draws(spec.seed, img.size).reshape(img.shape)
        return _round_u8(img.astype(np.float64) + sigma * noise)

    raise ContractError(f"unknown degradation kind {spec.kind!r}")  # unreachable


def make_quality_groups(images, kinds, levels=range(NUM_LEVELS), seed: int = 0):
    """Degrade every image by every (kind, level); returns (level, image) pairs.

    Output order is (image, kind, level)-major and the per-variant seed is
    derive_seed(seed, image_index, kind_index, level), so results depend only
    on the inputs and `seed`.
    """
    images = list(images)
    kinds = list(kinds)
    levels = list(levels)
    if not images or not kinds or not levels:
        raise ContractError("make_quality_groups needs non-empty images, kinds and levels")
    for kind in kinds:
        if kind not in DEGRADATION_KINDS:
            raise ContractError(f"unknown degradation kind {kind!r}")
    out = []
    for img_ix, img in enumerate(images):
        for kind_ix, kind in enumerate(kinds):
            for level in levels:
                spec = DegradationSpec(
                    kind=kind, level=level,
                    seed=derive_seed(seed, img_ix, kind_ix, level),
                )
                out.append((level, apply(img, spec)))
    return out


def write_group_manifest(entries, path) -> None:
    """Line-oriented manifest: one `<level>\\t<path>` row per entry."""
    with open(path, "w", encoding="utf-8") as fh:
        for level, img_path in entries:
            fh.write(f"{level}\t{img_path}\n")
