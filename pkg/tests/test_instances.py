import dataclasses

import numpy as np
import pytest

from logitprice.instances import (
    INTEL_REFERENCE_PRICES,
    INTEL_WEIGHTS,
    CustomerProfile,
    ParkingParams,
    continuous_ml_revenue,
    gaussian_grid,
    intel_instance,
    parking_context,
    parking_instance,
    random_instance,
    synthetic_profiles,
)
from logitprice.model import expected_revenue


def test_intel_shape_and_weights():
    inst = intel_instance()
    assert (inst.n_alternatives, inst.n_customers, inst.n_classes, inst.n_priced) == (4, 1, 7, 3)
    assert inst.class_weight[:, 0].sum() == pytest.approx(1.0, abs=1e-15)
    assert inst.customer_mass[0] == pytest.approx(0.9998)
    np.testing.assert_allclose(inst.class_weight[:, 0] * inst.customer_mass[0], INTEL_WEIGHTS, rtol=1e-14)
    np.testing.assert_array_equal(inst.price_ub, [5000.0] * 3)
    assert inst.is_feasible(INTEL_REFERENCE_PRICES)


def test_intel_table_entries():
    inst = intel_instance()
    assert inst.exo_utility[0, 0, 0] == -1.0334
    assert inst.price_coef[0, 0, 0] == -0.00416
    assert inst.exo_utility[3, 0, 4] == 0.0


def test_random_instance_reproducible():
    a, b = random_instance(7), random_instance(7)
    np.testing.assert_array_equal(a.price_coef, b.price_coef)
    np.testing.assert_array_equal(a.exo_utility, b.exo_utility)
    assert not np.array_equal(a.exo_utility, random_instance(8).exo_utility)


def test_random_instance_ranges_and_means():
    inst = random_instance(0, I=100, K=100, N=10, outside_option=False)   # 10^5 draws
    beta, q = inst.price_coef, inst.exo_utility
    assert beta.size == 100_000
    assert beta.min() >= -5.0 and beta.max() <= -0.025
    assert q.min() >= -5.0 and q.max() <= 5.0
    assert abs(q.mean()) <= 0.05
    np.testing.assert_allclose(inst.class_weight, 0.01)
    np.testing.assert_array_equal(inst.price_ub, 100.0)


def test_random_instance_weight_argument():
    inst = random_instance(1, K=3, weights=[1.0, 1.0, 2.0])
    np.testing.assert_allclose(inst.class_weight[:, 0], [0.25, 0.25, 0.5])
    with pytest.raises(ValueError):
        random_instance(1, K=3, weights=[1.0, 2.0])


def test_gaussian_grid_degenerate():
    assert gaussian_grid(ParkingParams(), 1) == [(-0.788, -32.3, 1.0)]


def test_gaussian_grid_nine_points():
    g = gaussian_grid(ParkingParams(), 3)
    assert len(g) == 9
    w = np.array([x[2] for x in g])
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(w >= 0)


def test_gaussian_grid_symmetric_weights():
    params = ParkingParams(mean=(0.0, 0.0), cov=((1.0, 0.0), (0.0, 4.0)), support=((-2.0, 2.0), (-5.0, 5.0)))
    w = np.array([x[2] for x in gaussian_grid(params, 4)]).reshape(4, 4)
    np.testing.assert_allclose(w, w[::-1], rtol=1e-12)
    np.testing.assert_allclose(w, w[:, ::-1], rtol=1e-12)


def test_gaussian_grid_matches_monte_carlo_cells():
    params = ParkingParams()
    n = 4
    g = gaussian_grid(params, n)
    rng = np.random.default_rng(0)
    S = rng.multivariate_normal(params.mean, params.cov, size=1_000_000)
    (a0, a1), (f0, f1) = params.support
    inside = (S[:, 0] >= a0) & (S[:, 0] < a1) & (S[:, 1] >= f0) & (S[:, 1] < f1)
    S = S[inside]
    ia = np.floor((S[:, 0] - a0) / (a1 - a0) * n).astype(int)
    jf = np.floor((S[:, 1] - f0) / (f1 - f0) * n).astype(int)
    freq = np.bincount(ia * n + jf, minlength=n * n) / S.shape[0]
    w = np.array([x[2] for x in g])
    assert np.max(np.abs(freq - w)) <= 0.01


def test_parking_plain_mnl_with_one_grid_point():
    inst = parking_instance(seed=4, N=6, n_grid=1)
    assert inst.n_classes == 1 and inst.n_customers == 6
    assert [a.name for a in inst.alternatives] == ["FSP", "PSP", "PUP"]
    assert inst.priced_index.tolist() == [1, 2]
    np.testing.assert_array_equal(inst.price_ub, [2.0, 2.0])


def test_parking_composed_coefficient():
    prof = CustomerProfile((5.0, 5.0, 5.0), (5.0, 5.0, 5.0), origin=0, low_income=1, resident=1, new_vehicle=0)
    inst = parking_instance(n_grid=1, profiles=[prof])
    assert inst.price_coef[2, 0, 0] == pytest.approx(-56.697, abs=1e-12)
    assert inst.price_coef[1, 0, 0] == pytest.approx(-32.3 - 10.995 - 11.44, abs=1e-12)


def test_parking_reproducible_and_carries_context():
    a, b = parking_instance(seed=2, N=5, n_grid=2), parking_instance(seed=2, N=5, n_grid=2)
    np.testing.assert_array_equal(a.exo_utility, b.exo_utility)
    params, profiles = parking_context(a)
    assert params == ParkingParams()
    assert len(profiles) == 5
    np.testing.assert_array_equal(parking_instance(n_grid=2, profiles=profiles).exo_utility, a.exo_utility)


def test_synthetic_profile_ranges():
    profiles = synthetic_profiles(np.random.default_rng(0), 500)
    at = np.array([c.access_time for c in profiles])
    assert at.min() >= 1.0 and at.max() <= 15.0
    assert {c.resident for c in profiles} == {0, 1}


def test_parking_rejects_bad_arguments():
    with pytest.raises(ValueError):
        parking_instance(N=0)
    with pytest.raises(ValueError):
        parking_instance(n_grid=0)


def test_continuous_revenue_with_zero_covariance_is_discrete_mnl():
    params = dataclasses.replace(ParkingParams(), cov=((0.0, 0.0), (0.0, 0.0)))
    inst = parking_instance(seed=1, N=4, n_grid=1)
    _, profiles = parking_context(inst)
    p = np.array([0.4, 0.6])
    assert continuous_ml_revenue(params, profiles, p, samples=50, seed=3) == pytest.approx(
        expected_revenue(inst, p), rel=1e-12)


def test_continuous_revenue_variance_shrinks_like_one_over_samples():
    _, profiles = parking_context(parking_instance(seed=0, N=3, n_grid=1))
    sizes = np.array([1_000, 10_000, 100_000])
    se = np.array([continuous_ml_revenue(ParkingParams(), profiles, [0.5, 0.5], samples=int(s), seed=1,
                                         return_std_error=True)[1] for s in sizes])
    slope = np.polyfit(np.log(sizes), np.log(se ** 2), 1)[0]
    assert -1.2 <= slope <= -0.8


def test_continuous_revenue_seeded():
    _, profiles = parking_context(parking_instance(seed=0, N=2, n_grid=1))
    a = continuous_ml_revenue(ParkingParams(), profiles, [0.3, 0.7], samples=2000, seed=5)
    b = continuous_ml_revenue(ParkingParams(), profiles, [0.3, 0.7], samples=2000, seed=5)
    assert a == b
    with pytest.raises(ValueError):
        continuous_ml_revenue(ParkingParams(), profiles, [0.3], samples=10)
