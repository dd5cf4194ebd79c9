"""Regenerate everything under fixtures/ from fixed seeds.

The files are committed; this script exists so they can be rebuilt and
diffed when the generating code changes.  Run from the repository root:

    python scripts/make_fixtures.py
"""

from pathlib import Path

import numpy as np

from mixprior.core import AtomSet, WeightVector
from mixprior.core import write_measurements_csv, write_weighted_atoms_csv
from mixprior.deconv import Image, Psf, blur, write_pgm
from mixprior.rng import substream
from mixprior.toymodel import (
    DEFAULT_MEASUREMENT_STD,
    TreatmentSpec,
    measure,
    one_time_model,
    write_treatment_spec,
)

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

TWO_ATOM_STIFFNESS = (15.0, 30.0)
TWO_ATOM_PROPORTIONS = (0.3, 0.7)
TWO_ATOM_COUNT = 10_000
TWO_ATOM_SEED = 20_240_501

DECONV_SIDE = 32
DECONV_PSF_SIGMA = 1.5
DECONV_PSF_RADIUS = 5


def make_two_atom() -> None:
    """Spring measurements drawn from a known two-point stiffness mixture.

    The group column records the true component, so the empirical mixing
    proportions can be read back from the file itself.
    """
    out = FIXTURES / "two_atom"
    out.mkdir(parents=True, exist_ok=True)

    atoms = AtomSet(np.array(TWO_ATOM_STIFFNESS)[:, None])
    truth = WeightVector(np.array(TWO_ATOM_PROPORTIONS))
    write_weighted_atoms_csv(out / "truth.csv", atoms, truth)

    rng = substream(TWO_ATOM_SEED, "two-atom-components")
    component = rng.choice(2, size=TWO_ATOM_COUNT, p=TWO_ATOM_PROPORTIONS)
    stiffness = np.array(TWO_ATOM_STIFFNESS)[component]
    ids = [f"m{i:04d}" for i in range(TWO_ATOM_COUNT)]
    groups = [f"k{TWO_ATOM_STIFFNESS[c]:g}" for c in component]
    data = measure(
        one_time_model(),
        stiffness,
        DEFAULT_MEASUREMENT_STD,
        seed=TWO_ATOM_SEED,
        ids=ids,
        groups=groups,
    )
    write_measurements_csv(out / "measurements.csv", data)

    (out / "config.ini").write_text(
        "[model]\n"
        "kind = spring-one-time\n"
        "\n"
        "[noise]\n"
        f"sigma = {DEFAULT_MEASUREMENT_STD}\n",
        encoding="utf-8",
    )


def make_deconv() -> None:
    """A structured 32x32 test card and its Gaussian-blurred counterpart."""
    out = FIXTURES / "deconv"
    out.mkdir(parents=True, exist_ok=True)

    yy, xx = np.mgrid[0:DECONV_SIDE, 0:DECONV_SIDE].astype(float)
    pixels = np.zeros((DECONV_SIDE, DECONV_SIDE))
    pixels += 1.0 * np.exp(-((yy - 9) ** 2 + (xx - 8) ** 2) / (2 * 2.0**2))
    pixels += 0.7 * np.exp(-((yy - 22) ** 2 + (xx - 24) ** 2) / (2 * 3.0**2))
    pixels[14:18, 4:28] += 0.5
    pixels[24, 8] += 2.0
    original = Image(pixels).normalized()

    psf = Psf.gaussian(DECONV_PSF_SIGMA, radius=DECONV_PSF_RADIUS)
    blurred = blur(original, psf)

    write_pgm(original, out / "original.pgm", maxval=65535)
    write_pgm(blurred, out / "blurred.pgm", maxval=65535)
    with open(out / "psf.txt", "w", encoding="utf-8") as fh:
        fh.write(f"# gaussian kernel, sigma {DECONV_PSF_SIGMA} px\n")
        for row in psf.kernel:
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")


def make_treatment() -> None:
    write_treatment_spec(TreatmentSpec.default(), FIXTURES / "treatment.ini")


if __name__ == "__main__":
    make_two_atom()
    make_deconv()
    make_treatment()
    print(f"fixtures written under {FIXTURES}")
