import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msgm import autodiff as ad
from msgm.autodiff import Node, Tape, backward
from msgm.rng import Rng


def fd_gradient(f, tape, h=1e-5, indices=None):
    """Central finite differences of scalar f() w.r.t. tape values."""
    indices = range(tape.size) if indices is None else indices
    g = np.zeros(tape.size)
    for i in indices:
        orig = tape.values[i]
        tape.values[i] = orig + h
        fp = f()
        tape.values[i] = orig - h
        fm = f()
        tape.values[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g


def test_identity_loss_gives_basis_adjoint():
    tape = Tape([np.arange(4.0)])
    onehot = np.array([0.0, 0.0, 1.0, 0.0])
    loss = ad.vsum(ad.mul(tape.leaf(0), onehot))
    adj = backward(tape, loss)
    np.testing.assert_array_equal(adj, onehot)


def test_sum_of_squares_gradient():
    theta = np.array([1.5, -2.0, 0.25])
    tape = Tape([theta])
    loss = ad.vsum(ad.square(tape.leaf(0)))
    adj = backward(tape, loss)
    np.testing.assert_allclose(adj, 2 * theta, rtol=1e-12)


def test_backward_requires_scalar_loss():
    tape = Tape([np.ones(3)])
    with pytest.raises(ValueError):
        backward(tape, tape.leaf(0))


def test_unreached_parameters_keep_zero_adjoint():
    tape = Tape([np.ones(2), np.ones(3)])
    loss = ad.vmean(ad.square(tape.leaf(0)))
    adj = backward(tape, loss)
    assert np.all(adj[2:] == 0.0)
    assert np.any(adj[:2] != 0.0)


def test_parameter_reused_twice_accumulates():
    tape = Tape([np.array([2.0])])
    w = tape.leaf(0)
    loss = ad.vsum(ad.mul(w, w))  # w^2 through two leaf uses of the same slot
    adj = backward(tape, loss)
    np.testing.assert_allclose(adj, [4.0])


def random_mlp_loss(tape, x, target):
    w1, b1, w2, b2 = (tape.leaf(i) for i in range(4))
    h = ad.silu(ad.add(ad.matmul(Node(x), w1), b1))
    out = ad.add(ad.matmul(h, w2), b2)
    diff = ad.sub(out, target)
    return ad.vmean(ad.vsum(ad.square(diff), axis=1))


def test_random_mlp_matches_finite_differences():
    rng = Rng(11)
    tape = Tape([
        rng.child(0).normal((3, 8)) * 0.5,
        rng.child(1).normal(8) * 0.1,
        rng.child(2).normal((8, 2)) * 0.5,
        rng.child(3).normal(2) * 0.1,
    ])
    x = rng.child(4).normal((6, 3))
    target = rng.child(5).normal((6, 2))
    adj = backward(tape, random_mlp_loss(tape, x, target)).copy()
    probes = rng.child(6).integers(0, tape.size, 100)
    fd = fd_gradient(lambda: float(random_mlp_loss(tape, x, target).value),
                     tape, indices=probes)
    for i in probes:
        denom = max(abs(fd[i]), abs(adj[i]), 1e-8)
        assert abs(fd[i] - adj[i]) / denom < 1e-4


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_broadcast_ops_match_finite_differences(rows, cols, seed):
    rng = Rng(seed)
    tape = Tape([rng.child(0).normal((rows, cols)), rng.child(1).normal(cols)])
    c = rng.child(2).normal((rows, cols))

    def build():
        a = tape.leaf(0)
        b = tape.leaf(1)
        return ad.vmean(ad.square(ad.add(ad.mul(a, c), b)))

    adj = backward(tape, build()).copy()
    fd = fd_gradient(lambda: float(build().value), tape)
    np.testing.assert_allclose(adj, fd, rtol=5e-5, atol=1e-7)


def test_silu_and_relu_values():
    x = np.array([-2.0, 0.0, 3.0])
    s = ad.silu(Node(x))
    np.testing.assert_allclose(s.value, x / (1 + np.exp(-x)))
    r = ad.relu(Node(x))
    np.testing.assert_array_equal(r.value, [0.0, 0.0, 3.0])


def test_axis_sum_backward():
    tape = Tape([np.ones((3, 4))])
    lam = np.array([1.0, 2.0, 3.0])
    loss = ad.vmean(ad.mul(ad.vsum(tape.leaf(0), axis=1), lam))
    adj = backward(tape, loss).reshape(3, 4)
    np.testing.assert_allclose(adj, np.repeat(lam[:, None] / 3.0, 4, axis=1))


def test_tape_views_alias_values():
    tape = Tape([np.zeros((2, 2)), np.zeros(3)])
    tape.values[:] = np.arange(7.0)
    np.testing.assert_array_equal(tape.view(0), [[0, 1], [2, 3]])
    np.testing.assert_array_equal(tape.view(1), [4, 5, 6])
    tape.view(1)[0] = 99.0
    assert tape.values[4] == 99.0


def test_tape_rejects_nonfinite_init():
    with pytest.raises(ValueError):
        Tape([np.array([1.0, np.inf])])
