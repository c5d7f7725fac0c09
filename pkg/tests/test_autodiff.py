import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import check
from hgmda import autodiff as ad
from hgmda.autodiff import (
    AdamW,
    DomainError,
    EmptyReductionError,
    NonFiniteError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    load_checkpoint,
    save_checkpoint,
)

rng = np.random.default_rng(7)


def _r(*shape):
    return rng.normal(size=shape)


W = _r(3, 4)  # fixed projection so every op reduces to a non-trivial scalar


def scalarise(t):
    x = t.reshape(t.size, 1) if t.data.ndim != 2 else t
    w = Tensor(np.linspace(0.3, 1.7, x.shape[1] * 4).reshape(x.shape[1], 4))
    return (x @ w).sum()


OPS = [
    ("add", lambda a, b: scalarise(a + b), [_r(3, 4), _r(1, 4)]),
    ("sub", lambda a, b: scalarise(a - b), [_r(3, 4), _r(3, 1)]),
    ("mul", lambda a, b: scalarise(a * b), [_r(3, 4), _r(3, 4)]),
    ("div", lambda a, b: scalarise(a / b), [_r(3, 4), 2 + np.abs(_r(3, 4))]),
    ("neg", lambda a: scalarise(-a), [_r(2, 3)]),
    ("power", lambda a: scalarise(a ** 3), [_r(2, 3)]),
    ("power_frac", lambda a: scalarise(a ** 0.5), [1 + np.abs(_r(2, 3))]),
    ("exp", lambda a: scalarise(ad.exp(a)), [_r(2, 3)]),
    ("log", lambda a: scalarise(ad.log(a)), [1 + np.abs(_r(2, 3))]),
    ("tanh", lambda a: scalarise(ad.tanh(a)), [_r(2, 3)]),
    ("sigmoid", lambda a: scalarise(ad.sigmoid(a)), [_r(2, 3)]),
    ("relu", lambda a: scalarise(ad.relu(a)), [np.array([[0.5, -0.7, 1.2], [-2.0, 0.3, 0.9]])]),
    ("clip_min", lambda a: scalarise(ad.clip_min(a, 0.1)), [np.array([[0.5, -0.7, 1.2], [0.02, 0.3, 0.9]])]),
    ("matmul", lambda a, b: scalarise(a @ b), [_r(3, 2), _r(2, 5)]),
    ("reshape", lambda a: scalarise(a.reshape(3, 2)), [_r(2, 3)]),
    ("concat0", lambda a, b: scalarise(ad.concat([a, b], axis=0)), [_r(2, 3), _r(1, 3)]),
    ("concat1", lambda a, b: scalarise(ad.concat([a, b], axis=1)), [_r(2, 3), _r(2, 2)]),
    ("gather", lambda a: scalarise(ad.gather_rows(a, [2, 0, 2, 1])), [_r(3, 3)]),
    ("scatter", lambda a: scalarise(ad.scatter_add_rows(a, [1, 0, 1, 3], 4)), [_r(4, 3)]),
    ("sum_axis", lambda a: scalarise(a.sum(axis=0, keepdims=True)), [_r(3, 4)]),
    ("sum_all", lambda a: (a * a).sum(), [_r(3, 4)]),
    ("mean_axis", lambda a: scalarise(a.mean(axis=1)), [_r(3, 4)]),
    ("row_softmax", lambda a: scalarise(ad.row_softmax(a)), [_r(3, 4)]),
    ("segment_softmax", lambda a: scalarise(ad.segment_softmax(a, [0, 1, 0, 2, 1], 3)), [_r(5, 2)]),
]


@pytest.mark.parametrize("name,build,arrays", OPS)
def test_op_gradients_match_finite_differences(name, build, arrays):
    check(build, arrays)


def test_repeated_use_accumulates():
    check(lambda a: scalarise(a * a + ad.tanh(a) * a), [_r(2, 3)])


def test_untracked_inputs_get_no_gradient():
    x = Tensor(_r(2, 2), requires_grad=True)
    c = Tensor(_r(2, 2))
    with Tape() as tape:
        loss = (x @ c).sum()
    grads = tape.backward(loss)
    assert c.grad is None and list(grads) == [x]


def test_no_recording_outside_a_tape():
    x = Tensor(_r(2, 2), requires_grad=True)
    y = x * 2
    assert y.tape_id is None


def test_backward_rejects_bad_losses():
    x = Tensor(_r(2, 2), requires_grad=True)
    with Tape() as tape:
        y = x * 3
    with pytest.raises(ShapeError):
        tape.backward(y)
    with pytest.raises(TapeError):
        tape.backward(Tensor(1.0))
    with Tape() as tape:
        loss = (x * 3).sum()
    tape.backward(loss)
    with pytest.raises(TapeError):
        tape.backward(loss)
    tape.reset()
    with tape:
        loss = (x * 3).sum()
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, 3.0)


def test_domain_and_shape_errors():
    with pytest.raises(DomainError):
        ad.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        Tensor([1.0]) / Tensor([0.0])
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))
    with pytest.raises(EmptyReductionError):
        Tensor(np.ones((0, 3))).sum(axis=0)
    with pytest.raises(NonFiniteError):
        ad.exp(Tensor([1000.0]))


def test_softmax_is_stable_for_large_inputs():
    z = ad.row_softmax(Tensor([[1000.0, 999.0, -1000.0]]))
    assert np.isclose(z.data.sum(), 1.0)
    a = ad.segment_softmax(Tensor([[800.0], [801.0], [5.0]]), [0, 0, 1], 2)
    np.testing.assert_allclose(a.data.ravel(), [1 / (1 + np.e), np.e / (1 + np.e), 1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_segment_softmax_sums_to_one(n, n_seg, heads, seed):
    r = np.random.default_rng(seed)
    seg = r.integers(0, n_seg, size=n)
    out = ad.segment_softmax(Tensor(r.normal(scale=5, size=(n, heads))), seg, n_seg).data
    sums = np.zeros((n_seg, heads))
    np.add.at(sums, seg, out)
    present = np.bincount(seg, minlength=n_seg) > 0
    np.testing.assert_allclose(sums[present], 1.0, atol=1e-12)


def test_segment_sum_matches_add_at():
    idx = rng.integers(0, 7, size=40)
    vals = rng.normal(size=(40, 3))
    ref = np.zeros((9, 3))
    np.add.at(ref, idx, vals)
    np.testing.assert_allclose(ad.segment_sum(vals, idx, 9), ref, rtol=1e-13)


def test_adamw_first_step_by_hand():
    # after one step the bias-corrected update is lr * sign(g), plus decay
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = AdamW(lr=0.1, weight_decay=0.5)
    opt.step({"p": p}, {"p": np.array([0.3, -4.0])})
    expected = np.array([1.0, -2.0]) * (1 - 0.1 * 0.5) - 0.1 * np.array([1.0, -1.0]) * (1 / (1 + 1e-8 / 0.3))
    np.testing.assert_allclose(p.data, expected, rtol=1e-7)


def test_adamw_minimises_a_quadratic():
    target = np.array([3.0, -1.0])
    p = Tensor(np.zeros(2), requires_grad=True)
    opt = AdamW(lr=0.1)
    for _ in range(500):
        with Tape() as tape:
            d = p - target
            loss = (d * d).sum()
        tape.backward(loss)
        opt.step({"p": p}, {"p": p.grad})
    np.testing.assert_allclose(p.data, target, atol=1e-3)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_checkpoint_round_trip(tmp_path, dtype):
    params = {"a.w": _r(3, 4), "b": _r(1, 2), "gate": np.ones((1, 1))}
    save_checkpoint(tmp_path / "c.bin", params, dtype=dtype)
    back = load_checkpoint(tmp_path / "c.bin")
    assert sorted(back) == sorted(params)
    for k in params:
        np.testing.assert_array_equal(back[k], params[k].astype(dtype))
    raw = (tmp_path / "c.bin").read_bytes()
    assert raw[:4] == b"HGMC"


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"nope" + bytes(20))
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(tmp_path / "x.bin")
