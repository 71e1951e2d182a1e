import numpy as np
import pytest

from rmfem import mesh as M



def test_uniform_1d_examples():
    m = M.build_uniform_1d(2)
    assert np.allclose(m.vertices[:, 0], [0, 0.5, 1])
    assert m.elements.tolist() == [[0, 1], [1, 2]]
    assert m.h == 0.5
    assert M.build_uniform_1d(30).h == pytest.approx(1 / 30)
    m4 = M.build_uniform_1d(4, domain=(0, 2))
    assert np.allclose(m4.element_diam, 0.5)
    with pytest.raises(ValueError):
        M.build_uniform_1d(1)


def test_structured_2d_examples():
    m = M.build_structured_2d(2)
    assert m.n_vertices == 9 and m.n_elements == 8
    m10 = M.build_structured_2d(10)
    pts = m10.vertices[m10.elements]
    sides = np.concatenate([np.linalg.norm(pts[:, i] - pts[:, (i + 1) % 3], axis=1)
                            for i in range(3)])
    assert sides.min() == pytest.approx(0.1)
    m3 = M.build_structured_2d(3)
    patch_sizes = {len(m3.vertex_patch[i]) for i in m3.interior_vertices()}
    assert patch_sizes == {6}
    with pytest.raises(ValueError):
        M.build_structured_2d(1)


def test_lshape_examples():
    m = M.build_lshape_2d(3)
    pts = m.vertices[m.elements]
    sides = np.concatenate([np.linalg.norm(pts[:, i] - pts[:, (i + 1) % 3], axis=1)
                            for i in range(3)])
    assert sides.min() == pytest.approx(1 / 3)
    assert m.h == pytest.approx(np.sqrt(2) / 3)
    m2 = M.build_lshape_2d(2)
    assert np.all((m2.vertices[:, 0] >= -1e-12) | (m2.vertices[:, 1] >= -1e-12))
    assert M.signed_areas(m2.vertices, m2.elements).sum() == pytest.approx(3.0)
    # origin is a vertex
    assert np.any(np.all(np.abs(m2.vertices) < 1e-12, axis=1))


def test_perturb_direct_substitution():
    m = M.build_uniform_1d(2)
    cfg = M.PerturbationConfig(p=1)
    pm = M.displace(m, cfg, np.array([[0.0], [0.25], [0.0]]))
    assert pm.vertices[1, 0] == pytest.approx(0.625)
    # zero perturbation is the identity
    pm0 = M.displace(m, cfg, np.zeros((3, 1)))
    assert np.array_equal(pm0.vertices, m.vertices)


def test_perturb_displacement_bound():
    m = M.build_uniform_1d(10)
    cfg = M.PerturbationConfig(p=2, seed=8)
    for k in range(50):
        pm = M.perturb(m, cfg, cfg.realization_rng(k))
        assert np.max(np.abs(pm.vertices - m.vertices)) <= 0.1 ** 2 * 0.5 + 1e-15


def test_perturbation_config_validation():
    with pytest.raises(ValueError):
        M.PerturbationConfig(p=0.5)
    with pytest.raises(ValueError):
        M.PerturbationConfig(radius=0.6)
    with pytest.raises(ValueError):
        M.PerturbationConfig(radius=0.0)


def test_quasi_uniformity():
    assert M.quasi_uniformity(M.build_uniform_1d(7)) == pytest.approx(1.0)
    m = M.mesh_from_breakpoints([0, 0.2, 0.6, 1.0])
    assert M.quasi_uniformity(m) == pytest.approx(2.0)
    assert M.quasi_uniformity(M.build_structured_2d(4)) == pytest.approx(1.0)


def test_refine_1d():
    m = M.build_uniform_1d(2)
    r = M.refine(m, [0])
    assert np.allclose(r.vertices[:, 0], [0, 0.25, 0.5, 1.0])


def test_refine_2d_empty_and_conformity():
    m = M.build_structured_2d(2)
    r = M.refine(m, [])
    assert r.n_elements == m.n_elements
    r1, parents = M.refine_info(m, [3])
    r1.check_conforming()
    assert (parents == 3).sum() >= 2
    # children of marked elements are strictly smaller
    assert np.all(r1.element_diam[parents == 3] < m.element_diam[3])


def test_refine_random_markings_conform():
    rng = np.random.default_rng(0)
    for trial in range(25):
        mesh = M.build_structured_2d(2) if trial % 2 else M.build_lshape_2d(2)
        for _ in range(8):
            marked = rng.choice(mesh.n_elements, size=max(1, mesh.n_elements // 6),
                                replace=False)
            mesh = M.refine(mesh, marked)
        mesh.check_conforming()


def test_coarsen_examples():
    m = M.mesh_from_breakpoints([0, 0.25, 0.5, 1.0])
    c = M.coarsen_1d(m, [1])
    assert np.allclose(c.vertices[:, 0], [0, 0.5, 1.0])
    assert M.coarsen_1d(m, []) is m
    m5 = M.mesh_from_breakpoints([0, 0.25, 0.5, 0.75, 1.0])
    c2 = M.coarsen_1d(m5, [1, 2])
    assert np.allclose(c2.vertices[:, 0], [0, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        M.coarsen_1d(m, [0])


def test_locate():
    m = M.build_uniform_1d(2)
    k, lam = M.locate(m, 0.25)
    assert k == 0 and np.allclose(lam, [0.5, 0.5])
    k, lam = M.locate(m, 0.5)  # shared vertex -> lowest element
    assert k == 0 and lam[1] == pytest.approx(1.0)
    m2 = M.build_structured_2d(2)
    k2, lam2 = M.locate(m2, (0.1, 0.1))
    assert abs(lam2.sum() - 1.0) < 1e-14
    # brute-force oracle: barycentric coordinates in the returned element
    p = m2.vertices[m2.elements[k2]]
    rec = lam2 @ p
    assert np.allclose(rec, [0.1, 0.1])
    with pytest.raises(M.OutOfDomainError):
        M.locate(m, 1.5)
    with pytest.raises(M.OutOfDomainError):
        M.locate(m2, (-0.2, 0.5))


def test_1d_draws_strictly_increasing():
    m = M.mesh_from_breakpoints([0, 0.2, 0.45, 0.8, 1.0])
    cfg = M.PerturbationConfig(p=1, seed=7)
    for k in range(1000):
        pm = M.perturb(m, cfg, cfg.realization_rng(k))
        assert np.all(np.diff(pm.vertices[:, 0]) > 0)


def test_2d_draws_positive_areas():
    m = M.build_structured_2d(3)
    cfg = M.PerturbationConfig(p=1, seed=3)
    for k in range(1000):
        pm = M.perturb(m, cfg, cfg.realization_rng(k))
        assert np.all(M.signed_areas(pm.vertices, pm.elements) > 0)


def test_alpha_mean_zero():
    m = M.mesh_from_breakpoints([0, 0.2, 0.45, 0.8, 1.0])
    cfg = M.PerturbationConfig(p=2, seed=9)
    rng = cfg.realization_rng(0)
    movable = ~m.boundary_mask
    draws = np.stack([M.draw_alpha_bar(m, cfg, rng)[movable, 0] for _ in range(10 ** 5)])
    means = draws.mean(axis=0)
    stds = draws.std(axis=0)
    assert np.all(np.abs(means) <= 3 * stds / np.sqrt(draws.shape[0]))


def test_perturb_deterministic():
    m = M.build_structured_2d(3)
    cfg = M.PerturbationConfig(p=1, seed=3)
    a = M.perturb(m, cfg, cfg.realization_rng(5)).vertices
    b = M.perturb(m, cfg, cfg.realization_rng(5)).vertices
    assert np.array_equal(a, b)


def test_boundary_perturbation_stays_in_domain():
    m = M.build_structured_2d(3)
    cfg = M.PerturbationConfig(p=1, seed=2, include_boundary=True)
    corners = {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}
    for k in range(100):
        pm = M.perturb(m, cfg, cfg.realization_rng(k))
        for i in np.nonzero(m.boundary_mask)[0]:
            x0, y0 = m.vertices[i]
            x1, y1 = pm.vertices[i]
            if (x0, y0) in corners:
                assert (x1, y1) == (x0, y0)
            else:
                assert -1e-12 <= x1 <= 1 + 1e-12 and -1e-12 <= y1 <= 1 + 1e-12


def test_include_boundary_1d_rejected():
    m = M.build_uniform_1d(4)
    cfg = M.PerturbationConfig(p=1, seed=0, include_boundary=True)
    with pytest.raises(ValueError):
        M.perturb(m, cfg, cfg.realization_rng(0))


def test_batch_matches_individual():
    m = M.build_uniform_1d(6)
    cfg = M.PerturbationConfig(p=2, seed=77)
    batch = M.perturb_batch_1d(m, cfg, cfg.realization_rng(0), 5)
    assert len(batch) == 5
    for row in batch.coords:
        assert np.all(np.diff(row) > 0)


def test_json_roundtrip_and_validation():
    m = M.build_lshape_2d(2)
    m2 = M.SimplicialMesh.from_json(m.to_json())
    assert np.allclose(m2.vertices, m.vertices)
    assert np.array_equal(m2.elements, m.elements)
    # corrupt connectivity -> loader rejects
    import json
    data = json.loads(m.to_json())
    data["elements"][0] = [0, 1, 1]
    with pytest.raises(M.MeshError):
        M.SimplicialMesh.from_json(json.dumps(data))


def test_displace_abort_on_nonconforming():
    m = M.build_uniform_1d(2)
    cfg = M.PerturbationConfig(p=1)
    with pytest.raises(M.MeshError):
        # push the midpoint past the right endpoint
        M.displace(m, cfg, np.array([[0.0], [1.2], [0.0]]))
