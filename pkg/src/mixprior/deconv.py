"""Non-blind image deconvolution by the multiplicative fixed-point update.

Gray images are treated as densities on the pixel grid.  Blurring spreads
every pixel's mass through the point spread function into a padded canvas
and folds the margins back according to the boundary mode, so the operator
conserves mass exactly for the reflecting and periodic modes and has an
exact adjoint (padding followed by correlation) for all modes.  The
deconvolution iteration is the weighted self-consistency update with the
blurred image as the empirical measure over pixels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

BOUNDARY_MODES = ("reflect", "periodic", "zero-pad")

# guards the multiplicative update against exact zeros from zero-padding
PIXEL_FLOOR = 1e-300

NORMALIZATION_TOL = 1e-9
KERNEL_TOL = 1e-12


@dataclass(frozen=True)
class Image:
    """Nonnegative gray values on a pixel grid."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=float)
        if p.ndim != 2 or p.size == 0:
            raise ValidationError("image must be a non-empty 2-D array")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValidationError("pixel values must be finite and >= 0")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def is_normalized(self) -> bool:
        return abs(float(np.sum(self.pixels)) - 1.0) <= NORMALIZATION_TOL

    def normalized(self) -> "Image":
        total = float(np.sum(self.pixels))
        if total <= 0:
            raise ValidationError("cannot normalize an all-zero image")
        return Image(self.pixels / total)

    @staticmethod
    def uniform(height: int, width: int) -> "Image":
        if height < 1 or width < 1:
            raise ValidationError("image dimensions must be >= 1")
        return Image(np.full((height, width), 1.0 / (height * width)))

    def l1_distance(self, other: "Image") -> float:
        if self.pixels.shape != other.pixels.shape:
            raise ValidationError("images differ in shape")
        return float(np.sum(np.abs(self.pixels - other.pixels)))


@dataclass(frozen=True)
class Psf:
    """Point spread function: odd-sized nonnegative kernel of unit mass."""

    kernel: np.ndarray
    boundary: str = "reflect"

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != 2:
            raise ValidationError("kernel must be 2-D")
        if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
            raise ValidationError("kernel dimensions must be odd")
        if not np.all(np.isfinite(k)) or np.any(k < 0):
            raise ValidationError("kernel entries must be finite and >= 0")
        if abs(float(np.sum(k)) - 1.0) > KERNEL_TOL:
            raise ValidationError(f"kernel must sum to 1 within {KERNEL_TOL}")
        if self.boundary not in BOUNDARY_MODES:
            raise ValidationError(
                f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}"
            )
        k = k.copy()
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)

    @property
    def radius(self) -> tuple[int, int]:
        return self.kernel.shape[0] // 2, self.kernel.shape[1] // 2

    @staticmethod
    def from_kernel(values, boundary: str = "reflect") -> "Psf":
        """Kernel from raw nonnegative values, normalized to unit mass."""
        k = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(k)) or np.any(k < 0):
            raise ValidationError("kernel entries must be finite and >= 0")
        total = float(np.sum(k))
        if total <= 0:
            raise ValidationError("kernel must have positive mass")
        return Psf(k / total, boundary=boundary)

    @staticmethod
    def gaussian(sigma: float, radius: int, boundary: str = "reflect") -> "Psf":
        if sigma <= 0 or radius < 0:
            raise ValidationError("need sigma > 0 and radius >= 0")
        offsets = np.arange(-radius, radius + 1, dtype=float)
        profile = np.exp(-0.5 * (offsets / sigma) ** 2)
        return Psf.from_kernel(np.outer(profile, profile), boundary=boundary)

    @staticmethod
    def delta(radius: int = 0, boundary: str = "reflect") -> "Psf":
        k = np.zeros((2 * radius + 1, 2 * radius + 1))
        k[radius, radius] = 1.0
        return Psf(k, boundary=boundary)


# ---------------------------------------------------------------------------
# the blur operator and its adjoint


def _check_fits(shape, psf: Psf):
    ry, rx = psf.radius
    if ry > shape[0] or rx > shape[1]:
        raise ValidationError("kernel radius exceeds the image extent")


def _fold(canvas: np.ndarray, ry: int, rx: int, mode: str) -> np.ndarray:
    """Return excess margin mass to the core frame."""
    if mode == "zero-pad":
        h = canvas.shape[0] - 2 * ry
        w = canvas.shape[1] - 2 * rx
        return canvas[ry : ry + h, rx : rx + w].copy()
    out = canvas
    for axis, r in ((0, ry), (1, rx)):
        if r == 0:
            continue
        out = np.moveaxis(out, axis, 0)
        n = out.shape[0] - 2 * r
        core = out[r : r + n].copy()
        top = out[:r]
        bottom = out[r + n :]
        if mode == "periodic":
            core[n - r :] += top
            core[:r] += bottom
        else:  # reflect
            core[:r] += top[::-1]
            core[n - r :] += bottom[::-1]
        out = np.moveaxis(core, 0, axis)
    return out


def _pad(pixels: np.ndarray, ry: int, rx: int, mode: str) -> np.ndarray:
    """Extend the frame; the exact transpose of _fold."""
    if mode == "zero-pad":
        return np.pad(pixels, ((ry, ry), (rx, rx)), mode="constant")
    if mode == "periodic":
        return np.pad(pixels, ((ry, ry), (rx, rx)), mode="wrap")
    return np.pad(pixels, ((ry, ry), (rx, rx)), mode="symmetric")


def _blur_array(pixels: np.ndarray, psf: Psf) -> np.ndarray:
    ry, rx = psf.radius
    h, w = pixels.shape
    canvas = np.zeros((h + 2 * ry, w + 2 * rx))
    kernel = psf.kernel
    for a in range(kernel.shape[0]):
        for b in range(kernel.shape[1]):
            if kernel[a, b] != 0.0:
                canvas[a : a + h, b : b + w] += kernel[a, b] * pixels
    return _fold(canvas, ry, rx, psf.boundary)


def _adjoint_array(pixels: np.ndarray, psf: Psf) -> np.ndarray:
    ry, rx = psf.radius
    h, w = pixels.shape
    padded = _pad(pixels, ry, rx, psf.boundary)
    kernel = psf.kernel
    out = np.zeros((h, w))
    for a in range(kernel.shape[0]):
        for b in range(kernel.shape[1]):
            if kernel[a, b] != 0.0:
                out += kernel[a, b] * padded[a : a + h, b : b + w]
    return out


def blur(image: Image, psf: Psf) -> Image:
    """Convolve the image with the point spread function."""
    _check_fits(image.pixels.shape, psf)
    return Image(_blur_array(image.pixels, psf))


# ---------------------------------------------------------------------------
# deconvolution


@dataclass(frozen=True)
class DeconvResult:
    """Final iterate plus the cross-likelihood value at every iterate."""

    image: Image
    objectives: np.ndarray

    def write_trace_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("iter,objective\n")
            for i, value in enumerate(self.objectives):
                fh.write(f"{i},{value:.17g}\n")


def cross_likelihood(blurred: np.ndarray, convolved: np.ndarray) -> float:
    """sum_z blurred(z) * log(convolved(z)), the EM ascent objective."""
    guarded = np.maximum(convolved, PIXEL_FLOOR)
    terms = np.where(blurred > 0, blurred * np.log(guarded), 0.0)
    return float(np.sum(terms))


def deconvolve(
    blurred: Image, psf: Psf, n_iter: int, start: Image | None = None
) -> DeconvResult:
    """Run the multiplicative update from a uniform (or given) start image.

    Every iterate stays nonnegative with unit mass, and the recorded
    objective is non-decreasing.
    """
    if n_iter < 0:
        raise ValidationError("n_iter must be >= 0")
    if not blurred.is_normalized:
        raise ValidationError("blurred image must be normalized")
    _check_fits(blurred.pixels.shape, psf)
    if start is None:
        start = Image.uniform(blurred.height, blurred.width)
    else:
        if start.pixels.shape != blurred.pixels.shape:
            raise ValidationError("start image shape differs from blurred image")
        if not start.is_normalized:
            raise ValidationError("start image must be normalized")
    est = start.pixels.copy()
    data = blurred.pixels
    objectives = np.empty(int(n_iter) + 1)
    for it in range(int(n_iter) + 1):
        convolved = _blur_array(est, psf)
        objectives[it] = cross_likelihood(data, convolved)
        if it == n_iter:
            break
        ratio = data / np.maximum(convolved, PIXEL_FLOOR)
        est = est * _adjoint_array(ratio, psf)
        est = est / np.sum(est)
    return DeconvResult(image=Image(est), objectives=objectives)


# ---------------------------------------------------------------------------
# image and kernel I/O


def _read_pgm_header(data: bytes):
    # tokenizer over the header bytes; '#' starts a comment to end of line
    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        begin = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if begin == pos:
            raise ValidationError("truncated image header")
        return data[begin:pos]

    magic = next_token()
    width = int(next_token())
    height = int(next_token())
    maxval = int(next_token())
    pos += 1  # single whitespace byte after maxval
    return magic.decode("ascii"), width, height, maxval, pos


def read_pgm(path) -> Image:
    """Load a P2 or P5 gray image and normalize it to unit mass."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        magic, width, height, maxval, offset = _read_pgm_header(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ValidationError(f"malformed image header in {path}") from exc
    if magic not in ("P2", "P5"):
        raise ValidationError(f"unsupported image magic {magic!r} in {path}")
    if width < 1 or height < 1:
        raise ValidationError("image dimensions must be >= 1")
    if not 0 < maxval < 65536:
        raise ValidationError("maxval must be in [1, 65535]")
    count = width * height
    if magic == "P2":
        try:
            text = data[offset - 1 :].decode("ascii")
            lines = [line.split("#", 1)[0] for line in text.splitlines()]
            tokens = " ".join(lines).split()
            values = np.array([int(t) for t in tokens], dtype=float)
        except (ValueError, UnicodeDecodeError) as exc:
            raise ValidationError(f"malformed pixel data in {path}") from exc
        if values.size != count:
            raise ValidationError(
                f"expected {count} pixel values, found {values.size}"
            )
    else:
        bytes_per = 1 if maxval < 256 else 2
        raw = data[offset : offset + count * bytes_per]
        if len(raw) != count * bytes_per:
            raise ValidationError("truncated binary pixel data")
        dtype = ">u2" if bytes_per == 2 else "u1"
        values = np.frombuffer(raw, dtype=dtype).astype(float)
    if np.any(values > maxval):
        raise ValidationError("pixel value exceeds declared maxval")
    pixels = values.reshape(height, width)
    return Image(pixels).normalized()


def write_pgm(image: Image, path, maxval: int = 255, binary: bool = True) -> None:
    """Write gray levels scaled so the brightest pixel maps to maxval."""
    if not 0 < maxval < 65536:
        raise ValidationError("maxval must be in [1, 65535]")
    peak = float(np.max(image.pixels))
    if peak <= 0:
        levels = np.zeros(image.pixels.shape, dtype=np.int64)
    else:
        levels = np.rint(image.pixels / peak * maxval).astype(np.int64)
    header = f"{'P5' if binary else 'P2'}\n{image.width} {image.height}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            dtype = ">u2" if maxval > 255 else "u1"
            fh.write(levels.astype(dtype).tobytes())
        else:
            rows = (" ".join(str(v) for v in row) for row in levels)
            fh.write("\n".join(rows).encode("ascii") + b"\n")


def read_kernel_text(path, boundary: str = "reflect") -> Psf:
    """Kernel from whitespace-separated rows of numbers, one row per line."""
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError as exc:
                raise ValidationError(f"malformed kernel row: {line!r}") from exc
    if not rows:
        raise ValidationError("kernel text holds no rows")
    if len({len(r) for r in rows}) != 1:
        raise ValidationError("kernel rows differ in length")
    return Psf.from_kernel(np.array(rows), boundary=boundary)


def read_psf(path, boundary: str = "reflect") -> Psf:
    """Point spread function from a gray image or a kernel text file."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic in (b"P2", b"P5"):
        return Psf.from_kernel(read_pgm(path).pixels, boundary=boundary)
    return read_kernel_text(path, boundary=boundary)
