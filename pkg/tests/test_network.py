import numpy as np
import pytest

from deepuzawa.errors import ShapeError
from deepuzawa.geometry import CollocationSet, Domain, build_grid, cutoff_jet
from deepuzawa.lagrangian import MultiplierField, ProblemSpec, TargetSpec, discrete_lagrangian
from deepuzawa.network import (NetworkParameters, NetworkSpec, batch_jets, evaluate,
                               finite_difference_gradient, forward_jet, init_network,
                               load_checkpoint, loss_and_gradient, loss_value,
                               save_checkpoint)

DOM1 = Domain.unit_interval()


def poisson_problem(alpha=1e-2):
    return ProblemSpec("poisson", alpha, TargetSpec("sine1d"))


def random_multiplier(cset, seed=0):
    rng = np.random.default_rng(seed)
    return MultiplierField(rng.normal(size=cset.n_interior), rho=1.0)


def test_parameter_count_1_8_8_2():
    # sum over layers of d_out * (d_in + 1): 8*2 + 8*9 + 2*9
    assert NetworkSpec(1, (8, 8)).n_parameters == 106


def test_parameter_count_2_4_4_4_2():
    assert NetworkSpec(2, (4, 4, 4)).n_parameters == 62


def test_init_deterministic():
    spec = NetworkSpec(1, (8, 8), seed=0)
    a = init_network(spec)
    b = init_network(spec)
    assert np.array_equal(a.flat, b.flat)
    c = init_network(NetworkSpec(1, (8, 8), seed=1))
    assert not np.array_equal(a.flat, c.flat)


def test_init_biases_zero_weights_bounded():
    spec = NetworkSpec(2, (16, 16), seed=5)
    params = init_network(spec)
    for (w, b), n_in in zip(params.layers, spec.layer_dims):
        assert np.all(b == 0.0)
        assert np.all(np.abs(w) <= np.sqrt(3.0 / n_in))


def test_state_zero_on_boundary_for_any_parameters():
    g = build_grid(Domain.unit_square(), 7)
    cj = cutoff_jet(g.domain, g.points)
    for seed in range(3):
        params = init_network(NetworkSpec(2, (6, 6), seed=seed))
        jets = batch_jets(params, g.points, cj)
        assert np.all(jets.u[~g.interior_mask] == 0.0)


def test_single_linear_layer_jet():
    # one affine map u-channel: u = c x (no cutoff), so grad = c, lap = 0
    spec = NetworkSpec(1, (), seed=0, activation="identity")
    c = 1.75
    flat = np.array([c, 0.0, 0.0, 0.0])  # W = [[c], [0]], b = 0
    params = NetworkParameters(spec, flat)
    jet = forward_jet(params, [0.3])
    assert jet.u == pytest.approx(c * 0.3, abs=1e-15)
    assert jet.grad_u[0] == pytest.approx(c, abs=1e-15)
    assert jet.lap_u == 0.0


def test_jet_laplacian_matches_central_difference():
    h = 1e-3
    for dim in (1, 2):
        dom = DOM1 if dim == 1 else Domain.unit_square()
        params = init_network(NetworkSpec(dim, (8, 8), seed=4))
        rng = np.random.default_rng(11)
        pts = rng.uniform(0.1, 0.9, size=(30, dim))
        jets = batch_jets(params, pts, cutoff_jet(dom, pts))
        lap_fd = np.zeros(len(pts))
        for ax in range(dim):
            e = np.zeros(dim)
            e[ax] = h
            up, _ = evaluate(params, pts + e, cutoff_jet(dom, pts + e).b)
            mid, _ = evaluate(params, pts, cutoff_jet(dom, pts).b)
            dn, _ = evaluate(params, pts - e, cutoff_jet(dom, pts - e).b)
            lap_fd += (up - 2 * mid + dn) / h**2
        assert np.abs(jets.lap_u - lap_fd).max() <= 1e-5 * np.abs(lap_fd).max()


def test_jet_gradient_matches_central_difference():
    params = init_network(NetworkSpec(2, (8, 8), seed=9))
    dom = Domain.unit_square()
    pts = np.array([[0.37, 0.61], [0.2, 0.8]])
    jets = batch_jets(params, pts, cutoff_jet(dom, pts))
    h = 1e-6
    for ax in range(2):
        e = np.zeros(2)
        e[ax] = h
        up, _ = evaluate(params, pts + e, cutoff_jet(dom, pts + e).b)
        dn, _ = evaluate(params, pts - e, cutoff_jet(dom, pts - e).b)
        fd = (up - dn) / (2 * h)
        assert np.allclose(jets.grad_u[:, ax], fd, rtol=1e-6, atol=1e-8)


def test_loss_equals_discrete_lagrangian():
    g = build_grid(DOM1, 16)
    prob = poisson_problem()
    z = random_multiplier(g, 3)
    params = init_network(NetworkSpec(1, (8, 8), seed=3))
    loss, _ = loss_and_gradient(params, g, prob, z)
    jets = batch_jets(params, g.points, cutoff_jet(g.domain, g.points))
    assert loss == discrete_lagrangian(prob, g, jets, z)


@pytest.mark.parametrize("kind,beta", [("poisson", 0.0), ("poisson", 0.5),
                                       ("allen_cahn", 0.0), ("allen_cahn", 0.2)])
def test_gradient_matches_finite_differences(kind, beta):
    g = build_grid(DOM1, 16)
    if kind == "poisson":
        prob = poisson_problem()
    else:
        prob = ProblemSpec("allen_cahn", 1e-3, TargetSpec("ac_sine"), epsilon=0.8)
    z = random_multiplier(g, 17)
    params = init_network(NetworkSpec(1, (8, 8), seed=2))
    _, grad = loss_and_gradient(params, g, prob, z, beta)
    fd = finite_difference_gradient(params, g, prob, z, 1e-6, beta)
    scale = np.maximum(np.abs(fd), 1e-3 * np.abs(fd).max())
    assert np.max(np.abs(grad - fd) / scale) <= 1e-5


def test_gradient_matches_finite_differences_2d():
    g = build_grid(Domain.unit_square(), 5)
    prob = ProblemSpec("poisson", 1e-2, TargetSpec("sine2d"))
    z = random_multiplier(g, 23)
    params = init_network(NetworkSpec(2, (6, 6), seed=6))
    _, grad = loss_and_gradient(params, g, prob, z)
    fd = finite_difference_gradient(params, g, prob, z, 1e-6)
    scale = np.maximum(np.abs(fd), 1e-3 * np.abs(fd).max())
    assert np.max(np.abs(grad - fd) / scale) <= 1e-5


def test_finite_difference_gradient_second_order():
    # halving h must shrink the disagreement with the exact gradient ~4x
    g = build_grid(DOM1, 12)
    prob = poisson_problem()
    z = random_multiplier(g, 5)
    params = init_network(NetworkSpec(1, (6,), seed=8))
    _, grad = loss_and_gradient(params, g, prob, z)
    errs = []
    for h in (2e-4, 1e-4):
        fd = finite_difference_gradient(params, g, prob, z, h)
        errs.append(np.linalg.norm(fd - grad))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)


def test_zero_final_layer_loss_is_pure_misfit():
    g = build_grid(DOM1, 21)
    prob = poisson_problem(alpha=4.0)
    z = random_multiplier(g, 1)
    params = init_network(NetworkSpec(1, (8, 8), seed=0))
    flat = params.flat.copy()
    flat[-18:] = 0.0  # last layer: 2x8 weights + 2 biases
    params = params.with_flat(flat)
    from deepuzawa.lagrangian import target_values
    d = target_values(prob, g)
    expected = 0.5 * float(np.dot(g.weights, d * d))
    assert loss_value(params, g, prob, z) == pytest.approx(expected, rel=1e-14)


def test_weight_scaling_scales_loss_and_gradient_exactly():
    # scaling all quadrature weights by a power of two commutes with
    # rounding, so equality is exact
    g = build_grid(DOM1, 16)
    prob = poisson_problem()
    z = random_multiplier(g, 9)
    params = init_network(NetworkSpec(1, (8, 8), seed=12))
    loss1, grad1 = loss_and_gradient(params, g, prob, z)
    doubled = CollocationSet(g.domain, g.points, g.weights * 2.0, g.interior_mask)
    loss2, grad2 = loss_and_gradient(params, doubled, prob, z)
    assert loss2 == 2.0 * loss1
    assert np.array_equal(grad2, 2.0 * grad1)


def test_duplicated_point_with_split_weight():
    g = build_grid(DOM1, 16)
    prob = poisson_problem()
    z = random_multiplier(g, 2)
    params = init_network(NetworkSpec(1, (8, 8), seed=7))
    loss1, grad1 = loss_and_gradient(params, g, prob, z)

    j = 5  # duplicate an interior point, splitting its weight
    points = np.vstack([g.points, g.points[j]])
    weights = g.weights.copy()
    weights[j] /= 2
    weights = np.append(weights, weights[j])
    mask = np.append(g.interior_mask, True)
    dup = CollocationSet(g.domain, points, weights, mask)
    zj = np.where(np.flatnonzero(g.interior_mask) == j)[0][0]
    z_dup = MultiplierField(np.append(z.values, z.values[zj]), rho=1.0)
    loss2, grad2 = loss_and_gradient(params, dup, prob, z_dup)
    assert loss2 == pytest.approx(loss1, rel=1e-13)
    assert np.allclose(grad2, grad1, rtol=1e-12, atol=1e-15)


def test_loss_and_gradient_deterministic():
    g = build_grid(DOM1, 16)
    prob = poisson_problem()
    z = random_multiplier(g, 4)
    params = init_network(NetworkSpec(1, (8, 8), seed=4))
    loss1, grad1 = loss_and_gradient(params, g, prob, z)
    loss2, grad2 = loss_and_gradient(params, g, prob, z)
    assert loss1 == loss2
    assert np.array_equal(grad1, grad2)


def test_multiplier_shape_mismatch():
    g = build_grid(DOM1, 16)
    prob = poisson_problem()
    params = init_network(NetworkSpec(1, (8, 8), seed=4))
    bad = MultiplierField(np.zeros(g.n_interior - 1), rho=1.0)
    with pytest.raises(ShapeError):
        loss_and_gradient(params, g, prob, bad)


def test_checkpoint_roundtrip(tmp_path):
    spec = NetworkSpec(2, (8, 4), seed=42)
    params = init_network(spec)
    path = tmp_path / "params.bin"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert loaded.spec == spec
    assert np.array_equal(loaded.flat, params.flat)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTANETx" + b"\x00" * 32)
    with pytest.raises(ValueError):
        load_checkpoint(path)
