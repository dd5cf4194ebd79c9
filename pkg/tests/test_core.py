"""Core data model: likelihood matrices, marginals, posteriors, CSV I/O."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixprior.core import (
    LOG_LIKELIHOOD_FLOOR,
    AtomSet,
    ForwardModel,
    GaussianNoise,
    LikelihoodMatrix,
    MeasurementSet,
    WeightVector,
    likelihood_matrix,
    log_likelihood_at,
    log_likelihood_dd,
    log_marginal_likelihood,
    marginal_likelihood,
    measurement_grid,
    posterior_weights,
    pushforward_l1,
    read_measurements_csv,
    read_weighted_atoms_csv,
    sample_mixture,
    write_measurements_csv,
    write_weighted_atoms_csv,
)
from mixprior.errors import NumericalError, ValidationError


def identity_model(dim=1):
    return ForwardModel(dim_param=dim, dim_obs=dim, eval=lambda x: x)


# ---------------------------------------------------------------------------
# types


def test_weight_vector_simplex_enforced():
    WeightVector(np.array([0.5, 0.5]))
    with pytest.raises(ValidationError):
        WeightVector(np.array([0.5, 0.6]))
    with pytest.raises(ValidationError):
        WeightVector(np.array([1.5, -0.5]))
    with pytest.raises(ValidationError):
        WeightVector(np.array([np.nan, 1.0]))


def test_weight_vector_uniform_and_normalized():
    for k in (1, 3, 7, 200):
        w = WeightVector.uniform(k)
        assert abs(w.w.sum() - 1.0) <= 1e-12
    w = WeightVector.normalized([2.0, 6.0])
    np.testing.assert_allclose(w.w, [0.25, 0.75])
    with pytest.raises(ValidationError):
        WeightVector.normalized([0.0, 0.0])


def test_atom_set_validation():
    a = AtomSet(np.array([1.0, 2.0, 3.0]))
    assert a.points.shape == (3, 1)
    with pytest.raises(ValidationError):
        AtomSet(np.array([[np.inf]]))
    with pytest.raises(ValidationError):
        AtomSet(np.empty((0, 1)))
    with pytest.raises(ValidationError):
        AtomSet(np.array([[1.0]]), provenance="guess")


def test_atom_grid_is_equidistant_with_endpoints():
    g = AtomSet.grid_1d(1.0, 50.0, 200)
    assert g.count == 200
    assert g.points[0, 0] == 1.0 and g.points[-1, 0] == 50.0
    diffs = np.diff(g.points[:, 0])
    np.testing.assert_allclose(diffs, diffs[0])


def test_measurement_set_unique_ids_and_finite():
    with pytest.raises(ValidationError):
        MeasurementSet.from_points(np.zeros((2, 1)), ids=("a", "a"))
    with pytest.raises(ValidationError):
        MeasurementSet.from_points(np.array([[np.nan]]))
    # a masked-out coordinate may carry any placeholder
    ms = MeasurementSet.from_points(
        np.array([[np.nan, 1.0]]), mask=np.array([[False, True]])
    )
    assert ms.count == 1


def test_gaussian_noise_mode_and_normalization():
    noise = GaussianNoise(0.7, dim=1)
    # the mode sits at zero
    assert noise.log_density(np.array([0.0])) > noise.log_density(np.array([0.3]))
    nodes, vol = measurement_grid([-10.0 * 0.7], [10.0 * 0.7], [4001])
    total = np.sum(np.exp(noise.log_density(nodes))) * vol
    assert abs(total - 1.0) < 1e-6


def test_gaussian_noise_validation():
    with pytest.raises(ValidationError):
        GaussianNoise(0.0, dim=1)
    with pytest.raises(ValidationError):
        GaussianNoise([1.0, -1.0])


# ---------------------------------------------------------------------------
# likelihood matrix


def test_likelihood_matrix_gaussian_closed_form():
    # 1-D identity model, sigma_E = 1, z = 1, atom x = 0:
    # log L = -0.5 - 0.5 * log(2 pi)
    model = identity_model()
    noise = GaussianNoise(1.0, dim=1)
    atoms = AtomSet(np.array([[0.0]]))
    data = MeasurementSet.from_points(np.array([[1.0]]))
    mat = likelihood_matrix(model, noise, atoms, data)
    expected = -0.5 - 0.5 * math.log(2.0 * math.pi)
    assert mat.log_values[0, 0] == pytest.approx(expected, abs=1e-15)


def test_likelihood_matrix_floor_applied():
    model = identity_model()
    noise = GaussianNoise(1.0, dim=1)
    atoms = AtomSet(np.array([[0.0]]))
    data = MeasurementSet.from_points(np.array([[1e6]]))
    mat = likelihood_matrix(model, noise, atoms, data)
    assert mat.log_values[0, 0] == LOG_LIKELIHOOD_FLOOR


def test_likelihood_matrix_rejects_all_false_mask_naming_record():
    model = identity_model(2)
    noise = GaussianNoise(1.0, dim=2)
    atoms = AtomSet(np.zeros((1, 2)))
    data = MeasurementSet.from_points(
        np.zeros((2, 2)),
        ids=("ok", "hidden"),
        mask=np.array([[True, True], [False, False]]),
    )
    with pytest.raises(ValidationError, match="hidden"):
        likelihood_matrix(model, noise, atoms, data)


def test_likelihood_matrix_nonfinite_model_names_atom():
    model = ForwardModel(1, 1, eval=lambda x: np.sqrt(x))  # nan for x < 0
    noise = GaussianNoise(1.0, dim=1)
    atoms = AtomSet(np.array([[4.0], [-1.0]]))
    data = MeasurementSet.from_points(np.array([[1.0]]))
    with pytest.raises(NumericalError, match="atom 1"):
        likelihood_matrix(model, noise, atoms, data)


def test_masked_rows_use_observed_coordinates_only():
    model = identity_model(2)
    noise = GaussianNoise([1.0, 3.0])
    atoms = AtomSet(np.array([[0.0, 0.0], [1.0, -2.0]]))
    z = np.array([[0.5, 123.0]])  # second coordinate hidden
    data = MeasurementSet.from_points(z, mask=np.array([[True, False]]))
    mat = likelihood_matrix(model, noise, atoms, data)
    one_d = GaussianNoise(1.0, dim=1)
    for k, xk in enumerate(atoms.points):
        expected = float(one_d.log_density(np.array([z[0, 0] - xk[0]])))
        assert mat.log_values[0, k] == pytest.approx(expected, abs=1e-14)


def test_masked_rows_need_factorizing_noise():
    class JointNoise(GaussianNoise):
        mask_support = False

        def coord_log_density(self, e, coords):
            raise ValidationError("no factorization")

    model = identity_model(2)
    noise = JointNoise(1.0, dim=2)
    atoms = AtomSet(np.zeros((1, 2)))
    data = MeasurementSet.from_points(
        np.zeros((1, 2)), mask=np.array([[True, False]])
    )
    with pytest.raises(ValidationError, match="factorize"):
        likelihood_matrix(model, noise, atoms, data)


def test_log_likelihood_at_matches_matrix_when_unmasked():
    model = identity_model(2)
    noise = GaussianNoise([0.5, 2.0])
    atoms = AtomSet(np.array([[0.3, -0.7]]))
    data = MeasurementSet.from_points(np.array([[1.0, 0.5]]))
    mat = likelihood_matrix(model, noise, atoms, data)
    direct = log_likelihood_at(model, noise, data.z[0], data.mask[0], atoms.points[0])
    assert direct == pytest.approx(mat.log_values[0, 0], abs=1e-14)


# ---------------------------------------------------------------------------
# marginals and posteriors


def _matrix_from_log(log_values, dim=1):
    log_values = np.asarray(log_values, dtype=float)
    m, k = log_values.shape
    atoms = AtomSet(np.arange(k, dtype=float)[:, None])
    data = MeasurementSet.from_points(np.zeros((m, dim)))
    return LikelihoodMatrix(log_values=log_values, atoms=atoms, data=data)


def test_marginal_likelihood_row_example():
    # row [2, 4] with w = [1/2, 1/2] -> marginal 3
    mat = _matrix_from_log(np.log([[2.0, 4.0]]))
    w = WeightVector(np.array([0.5, 0.5]))
    np.testing.assert_allclose(marginal_likelihood(mat, w), [3.0])


def test_log_likelihood_dd_example():
    # marginals [e, e^2] -> mean log = 1.5
    mat = _matrix_from_log(np.log([[np.e], [np.e**2]]))
    w = WeightVector(np.array([1.0]))
    assert log_likelihood_dd(mat, w) == pytest.approx(1.5, abs=1e-12)


def test_log_sum_exp_stability_extreme_logs():
    # naive exp would underflow entirely; the mean log marginal stays finite
    mat = _matrix_from_log(np.array([[-690.0, -700.0]]))
    w = WeightVector(np.array([0.5, 0.5]))
    got = log_marginal_likelihood(mat, w)[0]
    naive = math.log(0.5 * math.exp(-690.0 + 690.0) + 0.5 * math.exp(-700.0 + 690.0)) - 690.0 + 0.0
    # shift-by-hand oracle
    assert got == pytest.approx(naive + 690.0 - 690.0, abs=1e-12)
    assert np.isfinite(got)


def test_posterior_weights_bayes_example():
    # w = [1/2, 1/2], L = [2, 1] -> [2/3, 1/3]
    w = WeightVector(np.array([0.5, 0.5]))
    post = posterior_weights(np.log([2.0, 1.0]), w)
    np.testing.assert_allclose(post.w, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)


def test_posterior_weights_keeps_prior_zeros():
    w = WeightVector(np.array([0.0, 1.0]))
    post = posterior_weights(np.log([5.0, 1.0]), w)
    np.testing.assert_allclose(post.w, [0.0, 1.0])


def test_posterior_weights_unsupported_measurement():
    w = WeightVector(np.array([1.0, 0.0]))
    with pytest.raises(NumericalError, match="unsupported"):
        posterior_weights(np.array([-np.inf, 0.0]), w)


@settings(max_examples=1000, deadline=None)
@given(st.data())
def test_posterior_weights_simplex_closure(data):
    k = data.draw(st.integers(min_value=1, max_value=8))
    logs = data.draw(
        st.lists(
            st.floats(min_value=-600.0, max_value=600.0),
            min_size=k,
            max_size=k,
        )
    )
    raw = data.draw(
        st.lists(
            st.floats(min_value=0.0, max_value=1.0),
            min_size=k,
            max_size=k,
        ).filter(lambda v: sum(v) > 0)
    )
    w = WeightVector.normalized(np.asarray(raw))
    post = posterior_weights(np.asarray(logs), w)
    assert np.all(post.w >= 0)
    assert abs(post.w.sum() - 1.0) <= 1e-12


def test_posterior_equal_likelihood_returns_prior():
    w = WeightVector(np.array([0.2, 0.3, 0.5]))
    post = posterior_weights(np.array([-3.0, -3.0, -3.0]), w)
    np.testing.assert_allclose(post.w, w.w, atol=1e-15)


# ---------------------------------------------------------------------------
# pushforward / contraction


def test_pushforward_l1_of_weight_vector_is_one():
    model = identity_model()
    noise = GaussianNoise(0.5, dim=1)
    atoms = AtomSet(np.array([[-1.0], [0.5], [2.0]]))
    nodes, vol = measurement_grid([-8.0], [9.0], [3000])
    grid_data = MeasurementSet.from_points(nodes, id_prefix="q")
    mat = likelihood_matrix(model, noise, atoms, grid_data)
    w = np.array([0.2, 0.5, 0.3])
    assert pushforward_l1(mat, w, vol) == pytest.approx(1.0, abs=1e-6)


def test_pushforward_contraction_signed_inputs():
    rng = np.random.default_rng(7)
    model = identity_model()
    for _ in range(20):
        k = int(rng.integers(1, 10))
        sigma = float(rng.uniform(0.3, 1.5))
        pts = rng.uniform(-3, 3, size=(k, 1))
        noise = GaussianNoise(sigma, dim=1)
        atoms = AtomSet(pts)
        lo, hi = pts.min() - 10 * sigma, pts.max() + 10 * sigma
        count = int(np.ceil((hi - lo) / (sigma / 8)))
        nodes, vol = measurement_grid([lo], [hi], [count])
        mat = likelihood_matrix(model, noise, atoms, MeasurementSet.from_points(nodes, id_prefix="q"))
        f = rng.normal(size=k)
        assert pushforward_l1(mat, f, vol) <= np.abs(f).sum() + 1e-3


def test_measurement_grid_validation():
    with pytest.raises(ValidationError):
        measurement_grid([0.0], [1.0], [0])
    with pytest.raises(ValidationError):
        measurement_grid([1.0], [0.0], [10])


# ---------------------------------------------------------------------------
# mixture sampling


def test_sample_mixture_matches_weights():
    model = identity_model()
    noise = GaussianNoise(0.01, dim=1)
    atoms = AtomSet(np.array([[0.0], [10.0]]))
    w = WeightVector(np.array([0.25, 0.75]))
    pts = sample_mixture(model, noise, atoms, w, 20000, np.random.default_rng(3))
    frac_hi = np.mean(pts[:, 0] > 5.0)
    assert abs(frac_hi - 0.75) < 0.02


# ---------------------------------------------------------------------------
# CSV round trips


def test_measurements_csv_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    z = rng.normal(size=(5, 3)) * np.pi
    mask = np.ones((5, 3), dtype=bool)
    mask[2, 1] = False
    z[2, 1] = 0.0
    ms = MeasurementSet.from_points(
        z, ids=[f"r{i}" for i in range(5)],
        groups=["a", "a", None, "b", "b"], mask=mask,
    )
    path = tmp_path / "meas.csv"
    write_measurements_csv(path, ms)
    back = read_measurements_csv(path)
    assert back.ids == ms.ids
    assert back.groups == ms.groups
    np.testing.assert_array_equal(back.mask, ms.mask)
    np.testing.assert_array_equal(back.z[back.mask], ms.z[ms.mask])


def test_measurements_csv_mask_columns_optional(tmp_path):
    path = tmp_path / "meas.csv"
    path.write_text("id,group,z_0\nr0,,1.5\nr1,grp,2.5\n")
    ms = read_measurements_csv(path)
    assert ms.count == 2 and ms.mask.all()
    assert ms.groups == (None, "grp")


def test_measurements_csv_malformed_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,z_0\nr0,1.0\n")
    with pytest.raises(ValidationError):
        read_measurements_csv(path)


def test_weighted_atoms_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    atoms = AtomSet(rng.normal(size=(7, 2)) * 1e3)
    weights = WeightVector.normalized(rng.uniform(0.1, 1.0, size=7))
    path = tmp_path / "atoms.csv"
    write_weighted_atoms_csv(path, atoms, weights)
    a2, w2 = read_weighted_atoms_csv(path)
    np.testing.assert_array_equal(a2.points, atoms.points)
    np.testing.assert_array_equal(w2.w, weights.w)
    assert a2.provenance == "file"


def test_weighted_atoms_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "atoms.csv"
    path.write_text("x_0,weight\n1.0,1.0\n")
    with pytest.raises(ValidationError):
        read_weighted_atoms_csv(path)


def test_forward_model_purity_of_shipped_models():
    model = identity_model(2)
    x = np.array([0.1, -0.2])
    y1, y2 = model(x), model(x)
    np.testing.assert_array_equal(y1, y2)
