import numpy as np
import pytest

from fracthj.hamiltonians import check_structural_assumptions, make_hamiltonian


def _bump(x):
    return 1 + 0.5 * np.cos(2 * np.pi * x)


class TestConstruction:
    def test_quadratic_example(self):
        H = make_hamiltonian({"kind": "quadratic"})
        p = np.array([1.0, 0.0])
        assert H.value(p, 1.0) == 1.0
        assert np.array_equal(H.grad_p(p, 1.0), [2.0, 0.0])

    def test_power_two_matches_quadratic(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(-5, 5, (2, 50))
        Hq = make_hamiltonian({"kind": "quadratic"})
        Hp = make_hamiltonian({"kind": "power", "gamma": 2.0})
        assert np.allclose(Hq.value(p, 1.0), Hp.value(p, 1.0), rtol=1e-13)
        assert np.allclose(Hq.grad_p(p, 1.0), Hp.grad_p(p, 1.0), rtol=1e-13)

    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "quadratic", "coefficient": 0.3},
            {"kind": "power", "gamma": 3.0, "coefficient": _bump},
            {"kind": "custom", "gamma": 2.0, "value": lambda p, h: h * np.sum(p**2, axis=0) ** 2 / (1 + np.sum(p**2, axis=0))},
        ],
    )
    def test_zero_momentum(self, spec):
        H = make_hamiltonian(spec)
        p0 = np.zeros((1, 7))
        h = H.coefficient_on((np.linspace(0, 1, 7),))
        assert np.all(H.value(p0, h) == 0)
        assert np.max(np.abs(H.grad_p(p0, h))) < 1e-9

    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "quadratic", "coefficient": _bump},
            {"kind": "power", "gamma": 1.5, "coefficient": 2.0},
            {"kind": "power", "gamma": 3.0, "coefficient": _bump},
        ],
    )
    def test_gradient_matches_differences(self, spec):
        H = make_hamiltonian(spec)
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, 200)
        p = rng.uniform(-10, 10, (1, 200))
        h = H.coefficient_on((x,))
        g = H.grad_p(p, h)
        fd = H._fd_grad(p, h)
        assert np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(g))) < 1e-6

    def test_nonnegative(self):
        H = make_hamiltonian({"kind": "power", "gamma": 2.5, "coefficient": _bump})
        p = np.random.default_rng(2).uniform(-10, 10, (2, 500))
        x = np.random.default_rng(3).uniform(0, 1, (1, 500))
        assert np.all(H.value_at(x, p) >= 0)

    def test_mixed_derivative(self):
        H = make_hamiltonian({"kind": "quadratic", "coefficient": _bump})
        x = np.array([[0.1, 0.3]])
        p = np.array([[2.0, -1.0]])
        expected = -0.5 * 2 * np.pi * np.sin(2 * np.pi * x) * p**2
        assert np.allclose(H.grad_x(x, p), expected, rtol=1e-6)

    def test_hessian(self):
        H = make_hamiltonian({"kind": "quadratic", "coefficient": 1.5})
        hess = H.hess_pp(np.array([[0.3], [-2.0]]), 1.5)
        assert np.allclose(hess[:, :, 0], 3.0 * np.eye(2), atol=1e-6)

    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "quadratic", "coefficient": 0.0},
            {"kind": "quadratic", "coefficient": -1.0},
            {"kind": "power", "gamma": 1.0},
            {"kind": "quadratic", "gamma": 3.0},
            {"kind": "quadratic", "coefficient": lambda x: np.cos(2 * np.pi * x)},
            {"kind": "custom"},
            {"kind": "cubic"},
        ],
    )
    def test_rejected(self, spec):
        with pytest.raises(ValueError):
            make_hamiltonian(spec)


class TestAssumptions:
    def test_quadratic_constants(self):
        r = check_structural_assumptions(make_hamiltonian({"kind": "quadratic"}), sample_count=256)
        assert r.all_satisfied
        h1, h2, h5 = r.conditions["H1"], r.conditions["H2"], r.conditions["H5"]
        assert h1.C == pytest.approx(1.0, abs=1e-6) and h1.c == pytest.approx(0.0, abs=1e-6)
        assert h2.C == pytest.approx(2.0, abs=1e-6) and h2.c == pytest.approx(0.0, abs=1e-6)
        assert h5.C == pytest.approx(2.0, abs=1e-4)

    def test_degenerate_hamiltonian_flagged(self):
        H = make_hamiltonian({"kind": "custom", "gamma": 2.0, "value": lambda p, h: np.zeros(p.shape[1:])})
        r = check_structural_assumptions(H, sample_count=128)
        assert "H1" in r.violated()
        assert r.conditions["H1"].margin < 0
        assert not r.all_satisfied

    def test_power_three_feasible(self):
        r = check_structural_assumptions(make_hamiltonian({"kind": "power", "gamma": 3.0}), sample_count=512)
        assert r.violated() == []
        for cond in r.conditions.values():
            assert np.isfinite(cond.C) and np.isfinite(cond.c) and np.isfinite(cond.margin)

    def test_variable_coefficient_in_two_dimensions(self):
        H = make_hamiltonian(
            {"kind": "quadratic", "coefficient": lambda x, y: 1 + 0.5 * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)}
        )
        r = check_structural_assumptions(H, sample_count=256, dim=2)
        assert r.all_satisfied
        # D_xx H = h''|p|^2 with |h''| <= 2 pi^2, D_px H = 2 h' p with |h'| <= pi
        assert r.conditions["H3"].C <= 2 * np.pi**2 * (1 + 1e-3)
        assert r.conditions["H4"].C <= 2 * np.pi * (1 + 1e-3)

    def test_deterministic_given_seed(self):
        H = make_hamiltonian({"kind": "power", "gamma": 1.5, "coefficient": _bump})
        a = check_structural_assumptions(H, sample_count=128, seed=4)
        b = check_structural_assumptions(H, sample_count=128, seed=4)
        assert a == b

    def test_sample_count_floor(self):
        with pytest.raises(ValueError):
            check_structural_assumptions(make_hamiltonian({"kind": "quadratic"}), sample_count=50)
