import numpy as np
import pytest

from _oracle import a_form, adjoint_rhs_form, bstar_form, btilde_form, saddle_matrix_oracle
from stfosls.assembly import (
    ProblemSpec,
    SolutionFields,
    adjoint_offsets,
    assemble_adjoint_ls,
    assemble_saddle,
    build_dofmap,
    compute_l2_errors,
    evaluate_field,
    pack_saddle,
    split_adjoint,
    split_saddle,
)
from stfosls.experiments import exp1_problem, make_experiment, zero_problem
from stfosls.mesh import bisect, build_tensor_mesh, mesh_from_arrays, refine_uniform

PI = np.pi


def poly_problem(alpha=0.7, beta=0.4, lam=1.3):
    # data of low polynomial degree, so every quadrature in play is exact
    return ProblemSpec(alpha, beta, lam, 1.0,
                       u0=lambda x: x**2, ud=lambda x, t: x * t + x**2, uTd=lambda x: x**3)


def random_fields(mesh, dm, rng):
    lat = dm.lateral_mask
    f = rng.standard_normal(mesh.n_elems)
    u = np.where(lat, 0.0, rng.standard_normal(mesh.n_nodes))
    q = rng.standard_normal(mesh.n_nodes)
    return f, u, q


def small_meshes():
    m = build_tensor_mesh(2, 3, 1.0)
    yield m
    yield bisect(refine_uniform(build_tensor_mesh(2, 2, 1.0)), [1, 4, 9])


def test_dofmap_two_triangles():
    dm = build_dofmap(build_tensor_mesh(1, 1))
    assert dm.n_nodes == 4 and dm.lateral_mask.all() and dm.n_free == 0
    assert dm.offsets["q"] - dm.offsets["u"] == 0


def test_dofmap_4x4():
    m = build_tensor_mesh(4, 4)
    dm = build_dofmap(m)
    assert (dm.n_nodes, dm.n_elems) == (25, 32)
    assert int(dm.lateral_mask.sum()) == 10
    assert dm.ndof_metric == 132 == m.ndof
    assert dm.n_unknowns == 32 + 2 * 15 + 2 * 25
    off = dm.offsets
    assert [off[k] for k in ("f", "u", "q", "y", "xi", "end")] == [0, 32, 47, 72, 87, 112]
    x = dm.free_nodes()
    assert np.all((m.vertices[x, 0] > 0) & (m.vertices[x, 0] < 1))


def test_dofmap_metric_increases():
    m = build_tensor_mesh(3, 3)
    before = build_dofmap(m).ndof_metric
    assert build_dofmap(bisect(m, [0])).ndof_metric > before


def test_zero_data_rhs():
    m = build_tensor_mesh(4, 4)
    _, rhs = assemble_saddle(m, build_dofmap(m), zero_problem())
    assert not np.any(rhs)


def test_saddle_bitwise_symmetric():
    m = build_tensor_mesh(4, 4)
    M, _ = assemble_saddle(m, build_dofmap(m), make_experiment("exp1").problem)
    assert (M != M.T).nnz == 0


def test_b_block_spd():
    m = build_tensor_mesh(4, 4)
    dm = build_dofmap(m)
    M, _ = assemble_saddle(m, dm, make_experiment("exp1").problem)
    o = dm.offsets
    B = M[o["y"]:o["end"], o["u"]:o["y"]].toarray()
    assert np.array_equal(B, B.T)
    L = np.linalg.cholesky(B)
    assert np.all(np.diag(L) > 0)


def test_adjoint_matrix_spd():
    m = build_tensor_mesh(4, 4)
    dm = build_dofmap(m)
    Ma, _ = assemble_adjoint_ls(m, dm, np.zeros(m.n_nodes), make_experiment("exp3").problem)
    assert (Ma != Ma.T).nnz == 0
    assert np.all(np.diag(np.linalg.cholesky(Ma.toarray())) > 0)


@pytest.mark.parametrize("verts", [
    [[0.2, 0.0], [0.9, 0.0], [0.4, 0.7]],   # bottom edge
    [[0.1, 0.2], [0.8, 1.0], [0.3, 1.0]],   # top edge
    [[0.2, 0.1], [0.7, 0.3], [0.4, 0.8]],   # interior
])
def test_single_element_entries_match_oracle(verts):
    m = mesh_from_arrays(verts, [[0, 1, 2]], 1.0)
    dm = build_dofmap(m)
    prob = poly_problem()
    M, rhs = assemble_saddle(m, dm, prob)
    assert dm.n_unknowns == 13
    O = saddle_matrix_oracle(m, dm, prob, split_saddle)
    A = M.toarray()
    scale = np.abs(O).max()
    assert np.abs(A - O).max() <= 1e-13 * scale


@pytest.mark.parametrize("mesh_index", [0, 1])
def test_saddle_bilinear_forms_match_oracle(mesh_index):
    m = list(small_meshes())[mesh_index]
    dm = build_dofmap(m)
    prob = poly_problem()
    M, rhs = assemble_saddle(m, dm, prob)
    rng = np.random.default_rng(7)
    X = random_fields(m, dm, rng)
    Z = random_fields(m, dm, rng)
    _, v, psi = random_fields(m, dm, rng)
    _, w, chi = random_fields(m, dm, rng)
    zero_e, zero_n = np.zeros(m.n_elems), np.zeros(m.n_nodes)
    vx = pack_saddle(dm, *X, zero_n, zero_n)
    vz = pack_saddle(dm, *Z, zero_n, zero_n)
    vy = pack_saddle(dm, zero_e, zero_n, zero_n, v, psi)
    vw = pack_saddle(dm, zero_e, zero_n, zero_n, w, chi)

    ref = a_form(m, prob, X, Z)
    assert abs(vz @ (M @ vx) - ref) <= 1e-12 * abs(ref)
    ref = btilde_form(m, X, (v, psi))
    assert abs(vy @ (M @ vx) - ref) <= 1e-12 * abs(ref)
    assert vw @ (M @ vy) == 0.0

    # right-hand side: alpha (u_d, w) + beta (u_Td, w(T)) and (u_0, v(0))
    f0, u0n, q0 = np.zeros(m.n_elems), X[1], np.zeros(m.n_nodes)
    from _oracle import edge_data, element_data, fields_at
    ref = 0.0
    for k, nodes, xq, wq, lam, dlam in element_data(m):
        uv, _, _ = fields_at(nodes, lam, dlam, u0n)
        ref += prob.alpha * np.sum(wq * prob.ud(xq[:, 0], xq[:, 1]) * uv)
    top, _ = m.trace_edges("top")
    for a, b, xq, wq, s in edge_data(m, top):
        ref += prob.beta * np.sum(wq * prob.uTd(xq[:, 0]) * (u0n[a] * (1 - s) + u0n[b] * s))
    vu = pack_saddle(dm, f0, u0n, q0, zero_n, zero_n)
    assert abs(rhs @ vu - ref) <= 1e-12 * abs(ref)
    ref = 0.0
    bottom, _ = m.trace_edges("bottom")
    for a, b, xq, wq, s in edge_data(m, bottom):
        ref += np.sum(wq * prob.u0(xq[:, 0]) * (v[a] * (1 - s) + v[b] * s))
    assert abs(rhs @ vy - ref) <= 1e-12 * abs(ref)


def test_adjoint_forms_match_oracle():
    m = list(small_meshes())[1]
    dm = build_dofmap(m)
    prob = poly_problem()
    rng = np.random.default_rng(3)
    _, u_h, _ = random_fields(m, dm, rng)
    Ma, ba = assemble_adjoint_ls(m, dm, u_h, prob)
    _, p, chi = random_fields(m, dm, rng)
    _, v, psi = random_fields(m, dm, rng)
    free = dm.free_nodes()
    vp = np.concatenate([p[free], chi])
    vv = np.concatenate([v[free], psi])
    ref = bstar_form(m, (p, chi), (v, psi))
    assert abs(vv @ (Ma @ vp) - ref) <= 1e-12 * abs(ref)
    ref = adjoint_rhs_form(m, prob, u_h, (v, psi))
    assert abs(ba @ vv - ref) <= 1e-12 * abs(ref)


def test_adjoint_zero_rhs_when_final_state_matches():
    m = refine_uniform(build_tensor_mesh(2, 2))
    dm = build_dofmap(m)
    prob = ProblemSpec(0.0, 2.0, 1.0, 1.0, u0=lambda x: 0 * x, ud=lambda x, t: 0 * x, uTd=lambda x: 0 * x)
    rng = np.random.default_rng(0)
    u_h = np.where(dm.lateral_mask | (m.vertices[:, 1] == 1.0), 0.0, rng.standard_normal(m.n_nodes))
    _, ba = assemble_adjoint_ls(m, dm, u_h, prob)
    assert not np.any(ba)


def test_adjoint_linearity():
    from stfosls.solver import solve_symmetric

    m = refine_uniform(build_tensor_mesh(2, 2))
    dm = build_dofmap(m)
    prob = ProblemSpec(1.0, 0.0, 1.0, 1.0, u0=lambda x: 0 * x, ud=lambda x, t: 0 * x, uTd=lambda x: 0 * x)
    rng = np.random.default_rng(1)
    u_h = np.where(dm.lateral_mask, 0.0, rng.standard_normal(m.n_nodes))
    M1, b1 = assemble_adjoint_ls(m, dm, u_h, prob)
    M2, b2 = assemble_adjoint_ls(m, dm, 2.5 * u_h, prob)
    x1 = solve_symmetric(M1, b1)
    x2 = solve_symmetric(M2, b2)
    assert np.allclose(x2, 2.5 * x1, rtol=1e-10, atol=1e-14)


def test_adjoint_rejects_nonconforming_state():
    m = build_tensor_mesh(2, 2)
    dm = build_dofmap(m)
    with pytest.raises(ValueError):
        assemble_adjoint_ls(m, dm, np.ones(m.n_nodes), poly_problem())


def test_dofmap_mesh_mismatch():
    m = build_tensor_mesh(2, 2)
    with pytest.raises(ValueError):
        assemble_saddle(refine_uniform(m), build_dofmap(m), poly_problem())


def test_mass_blocks():
    m = refine_uniform(build_tensor_mesh(2, 2))
    dm = build_dofmap(m)
    prob = ProblemSpec(1.0, 0.0, 1.0, 1.0, u0=lambda x: 0 * x, ud=lambda x, t: 0 * x, uTd=lambda x: 0 * x)
    M, _ = assemble_saddle(m, dm, prob)
    o = dm.offsets
    D = M[:o["u"], :o["u"]]
    assert np.allclose(np.asarray(D.sum(axis=1)).ravel(), m.signed_areas(), rtol=1e-14)


def test_element_mass_matrix():
    verts = [[0.2, 0.1], [0.7, 0.3], [0.4, 0.8]]
    m = mesh_from_arrays(verts, [[0, 1, 2]], 1.0)
    dm = build_dofmap(m)
    prob = ProblemSpec(1.0, 0.0, 1.0, 1.0, u0=lambda x: 0 * x, ud=lambda x, t: 0 * x, uTd=lambda x: 0 * x)
    M, _ = assemble_saddle(m, dm, prob)
    o = dm.offsets
    block = M[o["u"]:o["q"], o["u"]:o["q"]].toarray()
    area = m.signed_areas()[0]
    ref = area / 12 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
    assert np.allclose(block, ref, rtol=1e-14)


def test_saddle_consistency_exp1():
    # with the exact solution interpolated, the second block equation is off only by
    # b~(interpolant - exact; v, psi): no stray consistency terms
    from _oracle import edge_data, element_data, fields_at

    prob = exp1_problem()
    m = refine_uniform(build_tensor_mesh(4, 4))
    dm = build_dofmap(m)
    M, rhs = assemble_saddle(m, dm, prob)
    V = m.vertices
    u_I = np.sin(PI * V[:, 0]) * np.cos(PI * V[:, 1])
    u_I[dm.lateral_mask] = 0.0
    q_I = PI * np.cos(PI * V[:, 0]) * np.cos(PI * V[:, 1])
    f_I = prob.exact_f(*V[m.elements].mean(axis=1).T)
    X = pack_saddle(dm, f_I, u_I, q_I, np.zeros(m.n_nodes), np.zeros(m.n_nodes))
    o = dm.offsets
    res = (M @ X - rhs)[o["y"]:]

    ux = lambda x, t: PI * np.cos(PI * x) * np.cos(PI * t)
    ut = lambda x, t: -PI * np.sin(PI * x) * np.sin(PI * t)
    qx = lambda x, t: -PI**2 * np.sin(PI * x) * np.cos(PI * t)
    ref = np.zeros_like(res)
    n_free = dm.n_free
    E = np.eye(len(res))
    bottom, _ = m.trace_edges("bottom")
    for j in range(len(res)):
        v = np.zeros(m.n_nodes)
        v[dm.free_nodes()] = E[j, :n_free]
        psi = E[j, n_free:]
        tot = 0.0
        for k, nodes, xq, wq, lam, dlam in element_data(m):
            x, t = xq[:, 0], xq[:, 1]
            _, uIx, uIt = fields_at(nodes, lam, dlam, u_I)
            qIv, qIx, _ = fields_at(nodes, lam, dlam, q_I)
            _, vx, vt = fields_at(nodes, lam, dlam, v)
            pv, px, _ = fields_at(nodes, lam, dlam, psi)
            d1 = (uIx - ux(x, t)) - (qIv - ux(x, t))
            d2 = (uIt - ut(x, t)) - (qIx - qx(x, t)) - (f_I[k] - prob.exact_f(x, t))
            tot += np.sum(wq * (d1 * (vx - pv) + d2 * (vt - px)))
        for a, b, xq, wq, s in edge_data(m, bottom):
            d = u_I[a] * (1 - s) + u_I[b] * s - prob.u0(xq[:, 0])
            tot += np.sum(wq * d * (v[a] * (1 - s) + v[b] * s))
        ref[j] = tot
    assert np.linalg.norm(res - ref) <= 1e-10 * np.linalg.norm(ref)


def test_evaluate_field():
    m = refine_uniform(build_tensor_mesh(3, 2))
    assert abs(evaluate_field(m, np.ones(m.n_nodes), "S1", (0.37, 0.81)) - 1.0) <= 1e-14
    c = m.vertices[:, 0].copy()
    for pt in [(0.0, 0.0), (0.123, 0.456), (1.0, 1.0), (0.5, 0.25)]:
        assert abs(evaluate_field(m, c, "S1", pt) - pt[0]) <= 1e-14
    f = np.arange(m.n_elems, dtype=float)
    from stfosls.assembly import locate

    k, _ = locate(m, (0.3, 0.3))
    assert evaluate_field(m, f, "P0", (0.3, 0.3)) == f[k]
    assert evaluate_field(m, f, "p0", (0.301, 0.299)) in f
    with pytest.raises(ValueError):
        evaluate_field(m, c, "S1", (1.5, 0.5))
    with pytest.raises(ValueError):
        evaluate_field(m, c, "P2", (0.5, 0.5))


def test_locate_lowest_index_on_shared_edge():
    m = build_tensor_mesh(1, 1)
    k, bary = locate_point(m, (0.5, 0.5))
    assert k == 0
    assert abs(bary.sum() - 1) <= 1e-15


def locate_point(m, p):
    from stfosls.assembly import locate

    return locate(m, p)


def test_l2_errors_affine_exact():
    m = refine_uniform(build_tensor_mesh(2, 2))
    g = lambda x, t: x * (1 - x) * 0 + 0.5 * t - 0.25 * x
    prob = ProblemSpec(1.0, 0.0, 1.0, 1.0, u0=lambda x: 0 * x, ud=lambda x, t: 0 * x, uTd=lambda x: 0 * x,
                       exact_u=g, exact_f=lambda x, t: 0 * x + 2.0)
    V = m.vertices
    sol = SolutionFields(m, np.full(m.n_elems, 2.0), g(V[:, 0], V[:, 1]), None, None, None)
    eu, ef = compute_l2_errors(m, sol, prob)
    assert eu <= 1e-24 and ef <= 1e-24


def test_l2_errors_zero_and_missing():
    m = build_tensor_mesh(2, 2)
    prob = ProblemSpec(1.0, 0.0, 1.0, 1.0, u0=lambda x: 0 * x, ud=lambda x, t: 0 * x, uTd=lambda x: 0 * x,
                       exact_u=lambda x, t: 0 * x, exact_f=lambda x, t: 0 * x + 1.0)
    sol = SolutionFields(m, np.zeros(m.n_elems), np.zeros(m.n_nodes), None, None, None)
    eu, ef = compute_l2_errors(m, sol, prob)
    assert eu == 0.0 and abs(ef - 1.0) <= 1e-14
    with pytest.raises(ValueError):
        compute_l2_errors(m, sol, zero_problem())


def test_problem_validation():
    z = lambda x: 0 * x
    with pytest.raises(ValueError):
        ProblemSpec(0.0, 0.0, 1.0, 1.0, z, z, z)
    with pytest.raises(ValueError):
        ProblemSpec(1.0, 0.0, 0.0, 1.0, z, z, z)
    with pytest.raises(ValueError):
        ProblemSpec(-1.0, 1.0, 1.0, 1.0, z, z, z)
    with pytest.raises(ValueError):
        ProblemSpec(1.0, 1.0, 1.0, 0.0, z, z, z)


def test_split_pack_roundtrip():
    m = refine_uniform(build_tensor_mesh(2, 2))
    dm = build_dofmap(m)
    x = np.random.default_rng(0).standard_normal(dm.n_unknowns)
    assert np.array_equal(pack_saddle(dm, *split_saddle(dm, x)), x)
    xa = np.random.default_rng(1).standard_normal(adjoint_offsets(dm)["end"])
    p, chi = split_adjoint(dm, xa)
    assert np.all(p[dm.lateral_mask] == 0)
    assert np.array_equal(np.concatenate([p[dm.free_nodes()], chi]), xa)
