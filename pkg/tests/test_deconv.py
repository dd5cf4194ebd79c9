"""Blur operator oracles, fixed-point deconvolution, gray image I/O."""

import numpy as np
import pytest
import scipy.ndimage

from mixprior.core import AtomSet, LikelihoodMatrix, MeasurementSet, WeightVector
from mixprior.deconv import (
    Image,
    Psf,
    blur,
    cross_likelihood,
    deconvolve,
    read_kernel_text,
    read_pgm,
    read_psf,
    write_pgm,
)
from mixprior.errors import ValidationError
from mixprior.estimators import npmle_step


def reference_blur(pixels, kernel, mode):
    """Scalar spread loop with explicit boundary mapping, kept independent
    of the vectorized implementation."""
    h, w = pixels.shape
    ry, rx = kernel.shape[0] // 2, kernel.shape[1] // 2
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            for a in range(kernel.shape[0]):
                for b in range(kernel.shape[1]):
                    y, x = i + a - ry, j + b - rx
                    if mode == "periodic":
                        y, x = y % h, x % w
                    elif mode == "reflect":
                        if y < 0:
                            y = -1 - y
                        elif y >= h:
                            y = 2 * h - 1 - y
                        if x < 0:
                            x = -1 - x
                        elif x >= w:
                            x = 2 * w - 1 - x
                    elif not (0 <= y < h and 0 <= x < w):
                        continue
                    out[y, x] += pixels[i, j] * kernel[a, b]
    return out


def random_image(shape, seed):
    rng = np.random.default_rng(seed)
    return Image(rng.uniform(0.0, 1.0, shape)).normalized()


def asymmetric_kernel(seed=1):
    rng = np.random.default_rng(seed)
    return Psf.from_kernel(rng.uniform(0.0, 1.0, (3, 5)))


# ---------------------------------------------------------------------------
# blur operator


@pytest.mark.parametrize("mode", ["reflect", "periodic", "zero-pad"])
def test_blur_matches_scalar_oracle(mode):
    img = random_image((6, 5), seed=3)
    psf = Psf(asymmetric_kernel().kernel, boundary=mode)
    got = blur(img, psf).pixels
    want = reference_blur(img.pixels, psf.kernel, mode)
    np.testing.assert_allclose(got, want, atol=1e-15)


def test_blur_matches_scipy_wrap_and_constant():
    img = random_image((7, 6), seed=4)
    kernel = asymmetric_kernel(seed=2).kernel
    got = blur(img, Psf(kernel, boundary="periodic")).pixels
    want = scipy.ndimage.convolve(img.pixels, kernel, mode="wrap")
    np.testing.assert_allclose(got, want, atol=1e-14)
    got = blur(img, Psf(kernel, boundary="zero-pad")).pixels
    want = scipy.ndimage.convolve(img.pixels, kernel, mode="constant", cval=0.0)
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_box_blur_4x4_oracle():
    img = Image(np.arange(16, dtype=float).reshape(4, 4)).normalized()
    psf = Psf.from_kernel(np.ones((3, 3)))
    for mode in ("reflect", "periodic", "zero-pad"):
        got = blur(img, Psf(psf.kernel, boundary=mode)).pixels
        np.testing.assert_allclose(
            got, reference_blur(img.pixels, psf.kernel, mode), atol=1e-15
        )


@pytest.mark.parametrize("mode", ["reflect", "periodic"])
def test_blur_preserves_mass(mode):
    img = random_image((9, 4), seed=5)
    psf = Psf.gaussian(1.5, radius=3, boundary=mode)
    assert abs(np.sum(blur(img, psf).pixels) - 1.0) < 1e-9


def test_zero_pad_blur_loses_boundary_mass():
    img = random_image((5, 5), seed=6)
    psf = Psf.gaussian(2.0, radius=4, boundary="zero-pad")
    assert np.sum(blur(img, psf).pixels) < 1.0 - 1e-3


def test_delta_psf_is_identity():
    img = random_image((5, 7), seed=7)
    for mode in ("reflect", "periodic", "zero-pad"):
        np.testing.assert_array_equal(
            blur(img, Psf.delta(radius=2, boundary=mode)).pixels, img.pixels
        )


def test_uniform_image_periodic_blur_fixed_point():
    img = Image.uniform(6, 6)
    psf = Psf.gaussian(1.0, radius=2, boundary="periodic")
    np.testing.assert_allclose(blur(img, psf).pixels, img.pixels, atol=1e-15)


def test_psf_validation():
    with pytest.raises(ValidationError):
        Psf(np.ones((2, 3)) / 6.0)
    with pytest.raises(ValidationError):
        Psf(np.ones((3, 3)))
    with pytest.raises(ValidationError):
        Psf(np.full((1, 1), 1.0), boundary="mirror")
    with pytest.raises(ValidationError):
        Psf.from_kernel(np.zeros((3, 3)))
    with pytest.raises(ValidationError):
        blur(Image.uniform(2, 2), Psf.gaussian(1.0, radius=3))


def test_image_validation():
    with pytest.raises(ValidationError):
        Image(np.array([1.0, 2.0]))
    with pytest.raises(ValidationError):
        Image(np.array([[1.0, -0.5]]))
    with pytest.raises(ValidationError):
        Image(np.zeros((2, 2))).normalized()
    assert Image.uniform(3, 4).is_normalized


# ---------------------------------------------------------------------------
# deconvolution


def test_deconvolve_zero_iterations_returns_start():
    img = random_image((8, 8), seed=8)
    psf = Psf.gaussian(1.5, radius=3)
    result = deconvolve(img, psf, n_iter=0)
    np.testing.assert_array_equal(result.image.pixels, Image.uniform(8, 8).pixels)
    assert result.objectives.shape == (1,)


def test_deconvolve_delta_psf_returns_blurred():
    img = random_image((6, 6), seed=9)
    for n_iter in (1, 3):
        result = deconvolve(img, Psf.delta(), n_iter=n_iter)
        np.testing.assert_allclose(result.image.pixels, img.pixels, atol=1e-14)


@pytest.mark.parametrize("mode", ["reflect", "periodic", "zero-pad"])
def test_deconvolve_objective_monotone_and_mass_conserved(mode):
    rng = np.random.default_rng(10)
    original = Image(rng.uniform(0.0, 1.0, (12, 10)) ** 2).normalized()
    psf = Psf.gaussian(1.2, radius=3, boundary=mode)
    blurred = blur(original, psf).normalized()
    start = Image.uniform(12, 10)
    est = start
    previous = None
    for _ in range(15):
        step = deconvolve(blurred, psf, n_iter=1, start=est)
        assert abs(np.sum(step.image.pixels) - 1.0) < 1e-9
        assert np.all(step.image.pixels >= 0)
        if previous is not None:
            assert step.objectives[0] >= previous - 1e-12
        assert step.objectives[1] >= step.objectives[0] - 1e-12
        previous = step.objectives[1]
        est = step.image
    full = deconvolve(blurred, psf, n_iter=15, start=start)
    assert np.all(np.diff(full.objectives) >= -1e-12)
    np.testing.assert_allclose(full.image.pixels, est.pixels, atol=1e-13)


def test_deconvolve_improves_l1_distance():
    rng = np.random.default_rng(11)
    original = np.zeros((32, 32))
    original[8:14, 6:20] = 1.0
    original[20:28, 22:30] = 0.5
    original[16:30, 4:10] = rng.uniform(0.2, 1.0, (14, 6))
    original_img = Image(original).normalized()
    psf = Psf.gaussian(1.5, radius=5)
    blurred = blur(original_img, psf).normalized()
    result = deconvolve(blurred, psf, n_iter=50)
    assert result.image.l1_distance(original_img) < blurred.l1_distance(
        original_img
    )


def test_deconvolve_matches_weighted_self_consistency_step():
    # a 3x3 image under periodic blur is a 9-atom, 9-record mixture whose
    # transition kernel is the blur operator acting on unit pixels
    rng = np.random.default_rng(12)
    original = Image(rng.uniform(0.1, 1.0, (3, 3))).normalized()
    psf = Psf.from_kernel(
        np.array([[0.0, 0.2, 0.0], [0.1, 0.4, 0.1], [0.0, 0.2, 0.0]]),
        boundary="periodic",
    )
    blurred = blur(original, psf)
    columns = np.empty((9, 9))
    for j in range(9):
        unit = np.zeros((3, 3))
        unit[divmod(j, 3)] = 1.0
        columns[:, j] = blur(Image(unit), psf).pixels.ravel()
    with np.errstate(divide="ignore"):
        log_values = np.maximum(np.log(columns), -700.0)
    atoms = AtomSet(np.arange(9, dtype=float)[:, None])
    data = MeasurementSet.from_points(np.arange(9, dtype=float)[:, None])
    matrix = LikelihoodMatrix(log_values=log_values, atoms=atoms, data=data)

    est = Image.uniform(3, 3)
    weights = WeightVector.uniform(9)
    for _ in range(5):
        est = deconvolve(blurred, psf, n_iter=1, start=est).image
        weights = npmle_step(
            matrix, weights, measurement_weights=blurred.pixels.ravel()
        )
        assert np.sum(np.abs(est.pixels.ravel() - weights.w)) < 1e-10


def test_deconvolve_validation():
    psf = Psf.delta()
    not_normalized = Image(np.full((2, 2), 1.0))
    with pytest.raises(ValidationError):
        deconvolve(not_normalized, psf, n_iter=1)
    img = Image.uniform(2, 2)
    with pytest.raises(ValidationError):
        deconvolve(img, psf, n_iter=-1)
    with pytest.raises(ValidationError):
        deconvolve(img, psf, n_iter=1, start=Image.uniform(3, 3))
    with pytest.raises(ValidationError):
        deconvolve(img, psf, n_iter=1, start=not_normalized)


def test_cross_likelihood_ignores_empty_pixels():
    blurred = np.array([[0.5, 0.5], [0.0, 0.0]])
    convolved = np.array([[0.25, 0.5], [0.0, 1.0]])
    want = 0.5 * np.log(0.25) + 0.5 * np.log(0.5)
    assert cross_likelihood(blurred, convolved) == pytest.approx(want)


def test_trace_csv(tmp_path):
    img = random_image((4, 4), seed=13)
    result = deconvolve(img, Psf.gaussian(1.0, radius=1), n_iter=3)
    path = tmp_path / "trace.csv"
    result.write_trace_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "iter,objective"
    assert len(lines) == 5
    assert float(lines[1].split(",")[1]) == result.objectives[0]


# ---------------------------------------------------------------------------
# I/O


@pytest.mark.parametrize("binary", [False, True])
@pytest.mark.parametrize("maxval", [255, 65535])
def test_pgm_round_trip(tmp_path, binary, maxval):
    rng = np.random.default_rng(14)
    levels = rng.integers(0, maxval + 1, size=(9, 7)).astype(float)
    levels.flat[0] = maxval  # pin the peak so scaling is exact
    img = Image(levels).normalized()
    path = tmp_path / "img.pgm"
    write_pgm(img, path, maxval=maxval, binary=binary)
    back = read_pgm(path)
    np.testing.assert_allclose(back.pixels, img.pixels, rtol=0, atol=1e-15)
    assert back.is_normalized


def test_pgm_reads_comments(tmp_path):
    path = tmp_path / "ascii.pgm"
    path.write_text("P2\n# a comment\n3 2\n# another\n255\n0 1 2\n3 4 250\n")
    img = read_pgm(path)
    assert img.pixels.shape == (2, 3)
    assert img.pixels[1, 2] == pytest.approx(250.0 / 260.0)


def test_pgm_rejects_malformed(tmp_path):
    bad_magic = tmp_path / "a.pgm"
    bad_magic.write_bytes(b"P7\n2 2\n255\n\x00\x00\x00\x00")
    with pytest.raises(ValidationError):
        read_pgm(bad_magic)
    truncated = tmp_path / "b.pgm"
    truncated.write_bytes(b"P5\n2 2\n255\n\x00\x00")
    with pytest.raises(ValidationError):
        read_pgm(truncated)
    short_text = tmp_path / "c.pgm"
    short_text.write_text("P2\n2 2\n255\n0 1 2\n")
    with pytest.raises(ValidationError):
        read_pgm(short_text)
    overflow = tmp_path / "d.pgm"
    overflow.write_text("P2\n1 1\n255\n300\n")
    with pytest.raises(ValidationError):
        read_pgm(overflow)


def test_pgm_16bit_binary_is_big_endian(tmp_path):
    img = Image(np.array([[1.0, 0.0]])).normalized()
    path = tmp_path / "wide.pgm"
    write_pgm(img, path, maxval=65535, binary=True)
    raw = path.read_bytes()
    assert raw.endswith(b"\xff\xff\x00\x00")


def test_kernel_text_reader(tmp_path):
    path = tmp_path / "kernel.txt"
    path.write_text("# box\n1 1 1\n1 2 1\n1 1 1\n")
    psf = read_kernel_text(path)
    assert psf.kernel.shape == (3, 3)
    assert psf.kernel[1, 1] == pytest.approx(0.2)
    ragged = tmp_path / "ragged.txt"
    ragged.write_text("1 2\n1\n")
    with pytest.raises(ValidationError):
        read_kernel_text(ragged)
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    with pytest.raises(ValidationError):
        read_kernel_text(empty)


def test_read_psf_dispatches_on_magic(tmp_path):
    img_path = tmp_path / "psf.pgm"
    write_pgm(Image(np.array([[0.0, 1.0, 0.0]] * 3)).normalized(), img_path)
    psf = read_psf(img_path)
    assert psf.kernel.shape == (3, 3)
    assert abs(np.sum(psf.kernel) - 1.0) < 1e-12
    txt_path = tmp_path / "psf.txt"
    txt_path.write_text("0 1 0\n1 4 1\n0 1 0\n")
    assert read_psf(txt_path, boundary="periodic").boundary == "periodic"
