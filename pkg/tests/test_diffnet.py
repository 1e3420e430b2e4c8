import numpy as np
import pytest

from mixopt.diffnet import (
    AdamState,
    InputNorm,
    NetworkSpec,
    ParameterSet,
    adam_step,
    forward,
    init_adam,
    init_params,
    load_params,
    net_apply,
    param_gradient,
    save_params,
    spatial_jacobian,
    tape,
)
from mixopt.errors import CheckpointError, DomainError, NumericalError


# ---------------------------------------------------------------- tape ops


def fd_scalar(fn, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        g[idx] = (fn(xp) - fn(xm)) / (2.0 * h)
        it.iternext()
    return g


@pytest.mark.parametrize(
    "build",
    [
        lambda a: tape.nmean(tape.square(a * 2.0 + 1.0)),
        lambda a: tape.nsum(tape.exp(a * 0.3) - a),
        lambda a: tape.nmean(tape.log(tape.exp(a) + 1.0)),
        lambda a: tape.nmean(tape.minimum(a, 0.4) * tape.maximum(a, -0.2)),
        lambda a: tape.nsum(tape.clip(a, -0.5, 0.5) * 3.0),
        lambda a: tape.nmean(tape.nsum(tape.square(a), axis=1)),
        lambda a: tape.nmean(tape.col(a, 1) / (tape.col(a, 0) + 4.0)),
        lambda a: tape.nsum((2.0 - a) * (1.0 / (a + 3.0))),
        lambda a: tape.nmean(-a + a * a * 0.5),
    ],
)
def test_tape_ops_match_finite_differences(build):
    rng = np.random.default_rng(99)
    x = rng.uniform(-1.0, 1.0, size=(4, 3))
    a = tape.leaf(x)
    root = build(a)
    got = tape.gradient(root, a)
    want = fd_scalar(lambda v: float(build(tape.leaf(v)).value), x)
    assert np.max(np.abs(got - want)) < 1e-7


def test_tape_broadcasting_gradients():
    a = tape.leaf(np.array([[1.0, 2.0], [3.0, 4.0]]))
    b = tape.leaf(np.array([10.0, 20.0]))
    root = tape.nsum(a * b)
    ga, gb = tape.gradient(root, [a, b])
    assert np.allclose(ga, [[10.0, 20.0], [10.0, 20.0]])
    assert np.allclose(gb, [4.0, 6.0])


def test_tape_mean_axis_gradient():
    a = tape.leaf(np.ones((3, 5)))
    root = tape.nsum(tape.nmean(a, axis=0))
    g = tape.gradient(root, a)
    assert np.allclose(g, 1.0 / 3.0)


def test_gradient_requires_scalar_root():
    a = tape.leaf(np.ones(3))
    with pytest.raises(DomainError):
        tape.gradient(a * 2.0, a)


def test_gradient_of_unrelated_leaf_is_zero():
    a = tape.leaf(np.ones(3))
    b = tape.leaf(np.ones(3))
    g = tape.gradient(tape.nsum(a), b)
    assert np.all(g == 0.0)


def test_unsupported_primitives_fail_at_construction():
    a = tape.leaf(np.ones(3))
    with pytest.raises(TypeError):
        np.sin(a)
    with pytest.raises(TypeError):
        a @ np.ones(3)
    with pytest.raises(DomainError):
        a ** 3
    with pytest.raises(NumericalError):
        tape.log(tape.leaf(np.array([1.0, -2.0])))


# ---------------------------------------------------------------- network


def make_params(input_dim=7, output_dim=9, hidden=(6, 5), seed=0, norm=None):
    spec = NetworkSpec(input_dim=input_dim, output_dim=output_dim, hidden=hidden)
    return init_params(spec, norm=norm, seed=seed)


def test_spec_validation_and_param_count():
    spec = NetworkSpec(input_dim=3, output_dim=2, hidden=(4,))
    assert spec.param_count == 3 * 4 + 4 + 4 * 2 + 2
    with pytest.raises(DomainError):
        NetworkSpec(activation="relu6")
    with pytest.raises(DomainError):
        NetworkSpec(hidden=(0,))


def test_init_deterministic_zero_bias_unit_fan_in_variance():
    spec = NetworkSpec(input_dim=50, output_dim=40, hidden=(300,))
    a = init_params(spec, seed=5)
    b = init_params(spec, seed=5)
    assert np.array_equal(a.flat, b.flat)
    (W0, b0), (W1, b1) = a.views()
    assert np.all(b0 == 0.0) and np.all(b1 == 0.0)
    assert np.max(np.abs(W0)) <= np.sqrt(3.0 / 50)
    assert abs(W0.var() - 1.0 / 50) < 0.15 / 50
    assert abs(W1.var() - 1.0 / 300) < 0.15 / 300


def test_forward_matches_hand_computation():
    spec = NetworkSpec(input_dim=2, output_dim=1, hidden=(2,))
    flat = np.array([0.5, -1.0, 2.0, 0.25, 0.1, -0.2, 1.5, -0.5, 0.3], dtype=np.float64)
    params = ParameterSet(spec=spec, norm=InputNorm.identity(2), flat=flat)
    X = np.array([[0.4, -0.7], [1.0, 2.0]])
    W0 = flat[:4].reshape(2, 2)
    b0 = flat[4:6]
    W1 = flat[6:8].reshape(1, 2)
    b1 = flat[8:]
    want = np.tanh(X @ W0.T + b0) @ W1.T + b1
    assert np.allclose(forward(params, X), want, atol=1e-15)


def test_forward_applies_input_normalization():
    norm = InputNorm.from_bounds([(0.0, 7.0), (0.0, 1.0)])
    spec = NetworkSpec(input_dim=2, output_dim=1, hidden=(3,))
    params = init_params(spec, norm=norm, seed=1)
    ident = ParameterSet(spec=spec, norm=InputNorm.identity(2), flat=params.flat)
    X = np.array([[3.5, 0.5]])  # normalizes to the origin
    assert np.allclose(forward(params, X), forward(ident, np.zeros((1, 2))))


def test_pinned_dimension_is_ignored():
    norm = InputNorm.from_bounds([(0.0, 2.0), (5.0, 5.0)])
    params = make_params(input_dim=2, output_dim=3, hidden=(4,), seed=3, norm=norm)
    X1 = np.array([[1.0, 5.0]])
    X2 = np.array([[1.0, 99.0]])
    assert np.allclose(forward(params, X1), forward(params, X2))
    jac = spatial_jacobian(params, X1)
    assert np.all(jac[:, :, 1] == 0.0)


def test_batch_permutation_equivariance():
    params = make_params(seed=7)
    rng = np.random.default_rng(0)
    X = rng.normal(size=(12, 7))
    perm = rng.permutation(12)
    out = forward(params, X)
    jac = spatial_jacobian(params, X)
    assert np.allclose(out[perm], forward(params, X[perm]), atol=1e-14)
    assert np.allclose(jac[perm], spatial_jacobian(params, X[perm]), atol=1e-14)


def rel_linf(got, want):
    return np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want)))


def test_spatial_jacobian_matches_central_differences():
    rng = np.random.default_rng(42)
    norm = InputNorm.from_bounds([(0.0, 7.0), (0.0, 1.0), (-0.5, 0.5), (-0.5, 0.5),
                                  (-0.5, 0.5), (5.0, 40.0), (1.0, 100.0)])
    for trial in range(5):
        params = make_params(hidden=(8, 6), seed=trial, norm=norm)
        X = np.column_stack([
            rng.uniform(0, 7, 4), rng.uniform(0, 1, 4),
            rng.uniform(-0.5, 0.5, (4, 3)), rng.uniform(5, 40, 4), rng.uniform(1, 100, 4),
        ])
        jac = spatial_jacobian(params, X)
        h = 1e-5
        for d in range(2):
            Xp, Xm = X.copy(), X.copy()
            Xp[:, d] += h
            Xm[:, d] -= h
            fd = (forward(params, Xp) - forward(params, Xm)) / (2.0 * h)
            assert rel_linf(jac[:, :, d], fd) < 1e-5


def composite_loss_value(params, X):
    """Numpy-only twin of composite_loss_node, for FD cross-checks."""
    out = forward(params, X)
    jac = spatial_jacobian(params, X)
    return float(np.mean(out ** 2) + np.mean(jac ** 2) + np.mean(out[:, 0] * jac[:, 1, 0]))


def composite_loss_node(leaf_node, template, X):
    out, jac = net_apply(leaf_node, template, X, need_jac=True)
    term1 = tape.nmean(tape.square(out))
    term2 = tape.nmean(tape.square(jac))
    term3 = tape.nmean(tape.col(out, 0) * tape.pick(jac, (slice(None), 1, 0)))
    return term1 + term2 + term3


def test_param_gradient_matches_central_differences():
    norm = InputNorm.from_bounds([(0.0, 7.0), (0.0, 1.0), (-0.5, 0.5), (-0.5, 0.5),
                                  (-0.5, 0.5), (5.0, 40.0), (1.0, 100.0)])
    rng = np.random.default_rng(3)
    params = make_params(hidden=(5, 4), seed=11, norm=norm)
    X = np.column_stack([
        rng.uniform(0, 7, 3), rng.uniform(0, 1, 3),
        rng.uniform(-0.5, 0.5, (3, 3)), rng.uniform(5, 40, 3), rng.uniform(1, 100, 3),
    ])
    leaf_node = tape.leaf(params.flat)
    root = composite_loss_node(leaf_node, params, X)
    got = param_gradient(root, leaf_node)
    assert abs(float(root.value) - composite_loss_value(params, X)) < 1e-12

    h = 1e-6
    want = np.zeros_like(params.flat)
    for i in range(params.flat.size):
        fp = params.flat.copy()
        fp[i] += h
        fm = params.flat.copy()
        fm[i] -= h
        want[i] = (composite_loss_value(params.with_flat(fp), X)
                   - composite_loss_value(params.with_flat(fm), X)) / (2.0 * h)
    assert rel_linf(got, want) < 1e-5


def test_net_apply_without_jacobian_gradients():
    params = make_params(input_dim=3, output_dim=2, hidden=(4,), seed=2)
    X = np.random.default_rng(1).normal(size=(5, 3))
    leaf_node = tape.leaf(params.flat)
    out, _ = net_apply(leaf_node, params, X, need_jac=False)
    root = tape.nmean(tape.square(out - 0.3))
    got = param_gradient(root, leaf_node)

    def value(flat):
        return float(np.mean((forward(params.with_flat(flat), X) - 0.3) ** 2))

    want = fd_scalar(value, params.flat.copy(), h=1e-6)
    assert rel_linf(got, want) < 1e-6


def test_softplus_activation_gradients():
    spec = NetworkSpec(input_dim=2, output_dim=2, hidden=(5,), activation="softplus")
    params = init_params(spec, seed=4)
    X = np.random.default_rng(2).normal(size=(4, 2))
    leaf_node = tape.leaf(params.flat)
    root = composite_loss_node(leaf_node, params, X)

    def value(flat):
        return composite_loss_value(params.with_flat(flat), X)

    want = fd_scalar(value, params.flat.copy(), h=1e-6)
    got = param_gradient(root, leaf_node)
    assert rel_linf(got, want) < 1e-5


# ---------------------------------------------------------------- adam


def test_adam_first_step_is_signed_lr():
    params = make_params(input_dim=2, output_dim=1, hidden=(2,), seed=0)
    grad = np.linspace(-2.0, 3.0, params.flat.size)
    grad[grad == 0.0] = 0.5
    state = init_adam(params.flat.size, lr=0.01)
    new, state2 = adam_step(params, grad, state)
    assert state2.step == 1
    delta = new.flat - params.flat
    assert np.allclose(delta, -0.01 * np.sign(grad), atol=1e-6)


def test_adam_pure_and_deterministic():
    params = make_params(input_dim=2, output_dim=1, hidden=(2,), seed=0)
    grad = np.full(params.flat.size, 0.25)
    state = init_adam(params.flat.size, lr=0.05)
    a1, s1 = adam_step(params, grad, state)
    a2, s2 = adam_step(params, grad, state)
    assert np.array_equal(a1.flat, a2.flat)
    assert np.array_equal(s1.m, s2.m) and s1.step == s2.step
    assert np.all(state.m == 0.0)  # inputs untouched


def test_adam_refuses_non_finite_gradient():
    params = make_params(input_dim=2, output_dim=1, hidden=(2,), seed=0)
    grad = np.zeros(params.flat.size)
    grad[3] = np.nan
    with pytest.raises(NumericalError):
        adam_step(params, grad, init_adam(params.flat.size))


def test_adam_validates_shapes_and_hyperparameters():
    params = make_params(input_dim=2, output_dim=1, hidden=(2,), seed=0)
    with pytest.raises(DomainError):
        adam_step(params, np.zeros(3), init_adam(params.flat.size))
    with pytest.raises(DomainError):
        init_adam(10, lr=-1.0)


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip_bit_exact(tmp_path):
    norm = InputNorm.from_bounds([(0.0, 7.0)] * 7)
    params = make_params(seed=123, norm=norm)
    path = tmp_path / "net.ckpt"
    save_params(params, path, role="field", seed=123)
    loaded, header = load_params(path)
    assert np.array_equal(loaded.flat, params.flat)
    assert loaded.flat.tobytes() == params.flat.tobytes()
    assert loaded.spec == params.spec
    assert np.array_equal(loaded.norm.center, params.norm.center)
    assert header["role"] == "field" and header["seed"] == 123


def test_checkpoint_rejects_corruption(tmp_path):
    params = make_params(input_dim=2, output_dim=1, hidden=(2,), seed=0)
    path = tmp_path / "net.ckpt"
    save_params(params, path)

    data = path.read_bytes()
    (tmp_path / "magic.ckpt").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(CheckpointError):
        load_params(tmp_path / "magic.ckpt")

    (tmp_path / "short.ckpt").write_bytes(data[:-8])
    with pytest.raises(CheckpointError):
        load_params(tmp_path / "short.ckpt")

    (tmp_path / "header.ckpt").write_bytes(data[:20] + b"\x00" + data[21:])
    with pytest.raises(CheckpointError):
        load_params(tmp_path / "header.ckpt")
