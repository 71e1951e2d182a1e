import numpy as np
import pytest

from rmfem import fem as F
from rmfem import mesh as M

ONE = lambda x: np.ones_like(x)


def test_solve_poisson_exact_at_node():
    prob = F.EllipticProblem(ONE, ONE)
    u = F.solve(prob, M.build_uniform_1d(2))
    assert u.nodal_values[1] == pytest.approx(0.125, abs=1e-14)


def test_zero_data_zero_solution():
    prob = F.EllipticProblem(ONE, lambda x: np.zeros_like(x))
    u = F.solve(prob, M.build_uniform_1d(5))
    assert np.allclose(u.nodal_values, 0.0)


def test_solve_rate_one():
    prob = F.EllipticProblem(ONE, lambda x: 4 * np.pi ** 2 * np.sin(2 * np.pi * x))
    exact = lambda x: np.sin(2 * np.pi * x)
    grad = lambda x: 2 * np.pi * np.cos(2 * np.pi * x)
    errs = [F.error_norms(F.solve(prob, M.build_uniform_1d(n)), exact, grad)[0]
            for n in (20, 40, 80)]
    rates = np.diff(np.log(errs)) / np.diff(np.log([1 / 20, 1 / 40, 1 / 80]))
    assert np.all((rates > 0.9) & (rates < 1.1))


def test_norm_examples():
    m = M.build_uniform_1d(2)
    hat = F.PwLinearField(m, np.array([0.0, 1.0, 0.0]))
    assert hat.h1_seminorm() == pytest.approx(2.0)
    assert hat.l2_norm() == pytest.approx(np.sqrt(1 / 3))
    zero = F.PwLinearField(m, np.zeros(3))
    assert zero.h1_seminorm() == 0.0 and zero.l2_norm() == 0.0


def test_error_norms_closed_form():
    prob = F.EllipticProblem(ONE, ONE)
    u = F.solve(prob, M.build_uniform_1d(2))
    h1, _ = F.error_norms(u, lambda x: x * (1 - x) / 2, lambda x: (1 - 2 * x) / 2)
    assert h1 == pytest.approx(1 / (4 * np.sqrt(3)), rel=1e-12)
    # self comparison: a P1 field against its own gradient
    hat = F.PwLinearField(M.build_uniform_1d(4), np.array([0, 0.2, 0.7, 0.1, 0.0]))
    grads = hat.gradients()
    x = hat.mesh.vertices[:, 0]

    def self_grad(t):
        idx = np.clip(np.searchsorted(x, t) - 1, 0, 3)
        return grads[idx]

    def self_u(t):
        return np.interp(t, x, hat.nodal_values)

    h1_self, l2_self = F.error_norms(hat, self_u, self_grad)
    assert h1_self <= 1e-12 and l2_self <= 1e-12


def test_error_halves_with_h():
    prob = F.EllipticProblem(ONE, lambda x: 4 * np.pi ** 2 * np.sin(2 * np.pi * x))
    exact = lambda x: np.sin(2 * np.pi * x)
    grad = lambda x: 2 * np.pi * np.cos(2 * np.pi * x)
    e1 = F.error_norms(F.solve(prob, M.build_uniform_1d(32)), exact, grad)[0]
    e2 = F.error_norms(F.solve(prob, M.build_uniform_1d(64)), exact, grad)[0]
    assert e1 / e2 == pytest.approx(2.0, rel=0.1)


def test_interpolate_lagrange_semantics():
    m = M.build_uniform_1d(2)
    hat = F.PwLinearField(m, np.array([0.0, 1.0, 0.0]))
    pm = M.displace(m, M.PerturbationConfig(p=1), np.array([[0.0], [0.25], [0.0]]))
    iu = F.interpolate(hat, pm)
    # value at the displaced node equals the field there: u_h(0.625) = 0.75
    assert iu.nodal_values[1] == pytest.approx(0.75)
    assert np.allclose(iu.gradients(), [1.2, -2.0])
    # zero perturbation reproduces the field exactly
    pm0 = M.displace(m, M.PerturbationConfig(p=1), np.zeros((3, 1)))
    assert np.array_equal(F.interpolate(hat, pm0).nodal_values, hat.nodal_values)


def test_interpolate_agrees_with_field_at_new_nodes():
    m = M.build_structured_2d(3)
    field = F.PwLinearField(m, np.sin(3 * m.vertices[:, 0]) + m.vertices[:, 1] ** 2)
    cfg = M.PerturbationConfig(p=2, seed=1)
    pm = M.perturb(m, cfg, cfg.realization_rng(0))
    iu = F.interpolate(field, pm)
    oracle = field.eval(pm.vertices)
    assert np.max(np.abs(iu.nodal_values - oracle)) < 1e-13


def test_interpolate_rejects_mismatched_connectivity():
    a = M.build_uniform_1d(4)
    b = M.build_uniform_1d(5)
    field = F.PwLinearField(a, np.zeros(5))
    with pytest.raises(ValueError):
        F.interpolate(field, b)


def test_linear_field_gradient_preserved():
    m = M.build_uniform_1d(4)
    lin = F.PwLinearField(m, m.vertices[:, 0].copy())
    cfg = M.PerturbationConfig(p=1, seed=2)
    pm = M.perturb(m, cfg, cfg.realization_rng(0))
    iu = F.interpolate(lin, pm)
    assert np.allclose(iu.gradients(), 1.0)


def test_supermesh():
    a = M.build_uniform_1d(2)
    b = M.displace(a, M.PerturbationConfig(p=1), np.array([[0.0], [0.25], [0.0]]))
    assert np.allclose(F.supermesh_1d(a, b), [0, 0.5, 0.625, 1.0])
    assert np.allclose(F.supermesh_1d(a, a), a.vertices[:, 0])
    m10 = M.build_uniform_1d(10)
    cfg = M.PerturbationConfig(p=2, seed=4)
    pm = M.perturb(m10, cfg, cfg.realization_rng(0))
    union = F.supermesh_1d(m10, pm)
    assert len(union) - 2 <= 2 * 10 - 1


def test_galerkin_orthogonality():
    prob = F.EllipticProblem(lambda x: 1 + x ** 3, lambda x: np.cos(3 * x))
    mesh = M.build_uniform_1d(17)
    u = F.solve(prob, mesh)
    A, b = F.assemble(prob, mesh)
    res = b - A @ u.nodal_values
    rng = np.random.default_rng(0)
    interior = ~mesh.boundary_mask
    f_norm = np.linalg.norm(b)
    for _ in range(50):
        v = np.where(interior, rng.normal(size=mesh.n_vertices), 0.0)
        assert abs(np.dot(v, res)) <= 1e-10 * f_norm


def test_assembled_matrix_spd():
    for mesh, prob in [
        (M.build_uniform_1d(9), F.EllipticProblem(lambda x: 2 + np.sin(5 * x), ONE)),
        (M.build_structured_2d(4),
         F.EllipticProblem(lambda x, y: 1 + x, lambda x, y: np.ones_like(x))),
    ]:
        A, _ = F.assemble(prob, mesh)
        ii = np.nonzero(~mesh.boundary_mask)[0]
        Aii = A[ii][:, ii].toarray()
        assert np.allclose(Aii, Aii.T)
        np.linalg.cholesky(Aii)  # raises if not positive definite


def test_nonpositive_kappa_rejected():
    prob = F.EllipticProblem(lambda x: x - 0.5, ONE)
    with pytest.raises(F.AssemblyError):
        F.solve(prob, M.build_uniform_1d(4))


def test_solve_2d_manufactured():
    prob = F.EllipticProblem(
        lambda x, y: np.ones_like(x),
        lambda x, y: 8 * np.pi ** 2 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
    exact = lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    grad = lambda x, y: (2 * np.pi * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y),
                         2 * np.pi * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
    errs = [F.error_norms(F.solve(prob, M.build_structured_2d(n)), exact, grad)[0]
            for n in (8, 16, 32)]
    rates = np.diff(np.log(errs)) / np.diff(np.log([1 / 8, 1 / 16, 1 / 32]))
    assert np.all((rates > 0.85) & (rates < 1.15))


def test_inhomogeneous_dirichlet_lifting():
    # harmonic u = x + y is reproduced exactly by P1 with g = x + y
    prob = F.EllipticProblem(lambda x, y: np.ones_like(x),
                             lambda x, y: np.zeros_like(x),
                             dirichlet=lambda x, y: x + y)
    mesh = M.build_structured_2d(4)
    u = F.solve(prob, mesh)
    assert np.allclose(u.nodal_values, mesh.vertices.sum(axis=1), atol=1e-12)


def test_solve_on_perturbed_mesh():
    mesh = M.build_uniform_1d(16)
    cfg = M.PerturbationConfig(p=1, seed=5)
    pm = M.perturb(mesh, cfg, cfg.realization_rng(0))
    prob = F.EllipticProblem(ONE, lambda x: 4 * np.pi ** 2 * np.sin(2 * np.pi * x))
    u = F.solve(prob, pm)
    err = F.error_norms(u, lambda x: np.sin(2 * np.pi * x),
                        lambda x: 2 * np.pi * np.cos(2 * np.pi * x))[0]
    assert err < 1.0  # O(h) sanity on the randomized solve


def test_h1_distance():
    m = M.build_uniform_1d(2)
    hat = F.PwLinearField(m, np.array([0.0, 1.0, 0.0]))
    assert F.h1_distance_1d(hat, hat) == 0.0
    other = F.PwLinearField(m, np.array([0.0, 0.5, 0.0]))
    assert F.h1_distance_1d(hat, other) == pytest.approx(1.0)


def test_field_serialization():
    m = M.build_uniform_1d(3)
    field = F.PwLinearField(m, np.array([0.0, 1.0, 0.5, 0.0]))
    import json
    d = json.loads(field.to_json("mesh.json"))
    assert d["mesh_ref"] == "mesh.json"
    assert d["nodal_values"] == [0.0, 1.0, 0.5, 0.0]
