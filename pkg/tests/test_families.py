import numpy as np
import pytest

from chronos.errors import ConfigError, DimensionError, DomainError
from chronos.families import (SIGMA_X, SIGMA_Z, GeneratorFamily,
                              builtin_family, derivative_probe,
                              family_from_csv, family_from_evaluator,
                              family_from_matrix, integrate_family,
                              integrate_family_with_estimate,
                              variance_integral, yosida_family, yosida_stack)
from chronos.linalg import yosida


def test_constant_builtin_classification():
    fam = builtin_family("constant")
    assert fam.commutativity_class == "constant"
    assert fam.dissipative
    assert np.allclose(fam(0.3), -1j * SIGMA_Z)


def test_scalar_commuting_classification():
    fam = builtin_family("scalar_commuting")
    assert fam.commutativity_class == "commuting"
    H1, H2 = fam(0.3), fam(0.9)
    assert np.linalg.norm(H1 @ H2 - H2 @ H1, 2) <= 1e-14


def test_two_level_driven_is_noncommuting():
    fam = builtin_family("two_level_driven", [1.0, 1.0, 1.0], interval=(0.0, 2.0))
    assert fam.commutativity_class == "general"
    H1, H2 = fam(0.3), fam(1.1)
    assert np.linalg.norm(H1 @ H2 - H2 @ H1, 2) > 1e-6


def test_damped_two_level_margin():
    fam = builtin_family("damped_two_level", [1.0, 1.0, 1.0, 0.5])
    assert fam.dissipative
    from chronos.linalg import dissipativity
    assert dissipativity(fam(0.4)).margin == pytest.approx(-0.5, abs=1e-12)


def test_random_smooth_reproducible():
    f1 = builtin_family("random_smooth", [7, 4, 0.3])
    f2 = builtin_family("random_smooth", [7, 4, 0.3])
    assert np.allclose(f1(0.6), f2(0.6))
    assert f1.dim == 4


def test_unknown_builtin_rejected():
    with pytest.raises(ConfigError):
        builtin_family("nonexistent")


def test_family_interval_validation():
    with pytest.raises(ConfigError):
        GeneratorFamily(a=1.0, b=0.0, dim=2,
                        evaluate_batch=lambda ts: np.zeros((len(ts), 2, 2)))


def test_family_from_matrix_constant_integral():
    H = -1j * SIGMA_Z
    fam = family_from_matrix(H)
    assert np.allclose(integrate_family(fam, 0.0, 1.0), H, atol=1e-12)


def test_integrate_linear_family():
    fam = family_from_evaluator(lambda t: t * SIGMA_X)
    assert np.allclose(integrate_family(fam, 0.0, 1.0), 0.5 * SIGMA_X, atol=1e-12)


def test_integral_is_additive():
    fam = builtin_family("two_level_driven")
    whole = integrate_family(fam, 0.0, 1.0)
    split = integrate_family(fam, 0.0, 0.4) + integrate_family(fam, 0.4, 1.0)
    assert np.linalg.norm(whole - split, 2) <= 1e-11


def test_integrate_outside_interval_rejected():
    fam = builtin_family("constant")
    with pytest.raises(DomainError):
        integrate_family(fam, 0.0, 2.0)
    with pytest.raises(DomainError):
        integrate_family(fam, 0.5, 0.2)


def test_integrate_reports_estimate():
    fam = builtin_family("two_level_driven")
    _, est, panels = integrate_family_with_estimate(fam, 0.0, 1.0)
    assert est <= 1e-12
    assert panels >= 2


def test_yosida_stack_matches_single():
    fam = builtin_family("damped_two_level")
    ts = np.array([0.1, 0.5, 0.9])
    stack = yosida_stack(fam.evaluate_batch(ts), 10.0)
    for k, t in enumerate(ts):
        assert np.allclose(stack[k], yosida(fam(t), 10.0), atol=1e-12)


def test_yosida_family_keeps_labels():
    fam = builtin_family("scalar_commuting")
    yf = yosida_family(fam, 100.0)
    assert yf.commutativity_class == "commuting"
    assert yf.dissipative
    assert yf.interval == fam.interval


def test_variance_integral_aligned_state_vanishes():
    # H = -i sigma_z on e1: H e is parallel to e, so the variance is 0.
    fam = family_from_matrix(-1j * SIGMA_Z)
    e = np.array([1.0, 0.0])
    assert variance_integral(fam, 1e6, e, 1.0) == pytest.approx(0.0, abs=1e-9)


def test_variance_integral_orthogonal_state():
    # H = -i sigma_x on e1: <He,e> = 0 and ||He|| = 1, so the value tends to t.
    fam = family_from_matrix(-1j * SIGMA_X)
    e = np.array([1.0, 0.0])
    val = variance_integral(fam, 1e6, e, 1.0)
    assert val == pytest.approx(1.0, rel=1e-5)


def test_variance_integral_validates_state():
    fam = family_from_matrix(-1j * SIGMA_X)
    with pytest.raises(DimensionError):
        variance_integral(fam, 10.0, np.ones(3), 1.0)
    with pytest.raises(DomainError):
        variance_integral(fam, 10.0, np.array([2.0, 0.0]), 1.0)


def test_derivative_probe_constant_family_saturates():
    fam = builtin_family("constant", interval=(0.0, 2.0))
    assert derivative_probe(fam, 1.0, [0.1, 0.01]) == float("inf")


def test_derivative_probe_linear_family_first_order():
    fam = family_from_evaluator(lambda t: t * SIGMA_X, interval=(0.0, 2.0))
    slope = derivative_probe(fam, 0.5, [0.1, 0.05, 0.025, 0.0125])
    assert slope == pytest.approx(1.0, abs=0.05)


def test_derivative_probe_driven_family():
    fam = builtin_family("two_level_driven", interval=(0.0, 2.0))
    slope = derivative_probe(fam, 1.0, [0.1, 0.05, 0.025, 0.0125])
    assert slope >= 0.9


def test_family_csv_round_trip(tmp_path):
    fam = builtin_family("two_level_driven")
    ts = np.linspace(0.0, 1.0, 4001)
    H = fam.evaluate_batch(ts)
    path = tmp_path / "family.csv"
    with open(path, "w") as fh:
        cols = ["t"] + [f"{p}_h{i}{j}" for i in range(2) for j in range(2)
                        for p in ("re", "im")]
        fh.write(",".join(cols) + "\n")
        for k, t in enumerate(ts):
            vals = [t] + [x for entry in H[k].reshape(-1)
                          for x in (entry.real, entry.imag)]
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")
    loaded = family_from_csv(path)
    assert loaded.dim == 2
    assert loaded.interval == (0.0, 1.0)
    for t in (0.123, 0.5, 0.987):
        assert np.linalg.norm(loaded(t) - fam(t), 2) <= 1e-6


def test_family_csv_rejects_bad_column_count(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,a,b,c\n0,1,2,3\n1,1,2,3\n")
    with pytest.raises(ConfigError):
        family_from_csv(path)


def test_family_csv_rejects_unsorted_times(tmp_path):
    path = tmp_path / "bad.csv"
    header = "t," + ",".join(f"c{k}" for k in range(8))
    row = ",".join(["0"] * 9)
    path.write_text(header + "\n1,0,0,0,0,0,0,0,0\n" + row + "\n")
    with pytest.raises(ConfigError):
        family_from_csv(path)
