import math

import numpy as np
import pytest

from ldf import autodiff as ad
from ldf.autodiff import Tensor
from ldf.errors import ConfigError, ShapeError
from ldf.losses import (
    contrastive_loss,
    label_weight_matrix,
    lcl_loss,
    mse_loss,
    scl_loss,
    total_loss,
)

HAND_REPS = [[1.0, 0.2], [0.8, -0.3], [0.1, 1.0], [-0.4, 0.9]]
HAND_CLASSES = [0, 0, 1, 1]
# frozen from brute_force() below at tau = 0.1
HAND_SCL = 0.007031797164431429
HAND_LCL_HALF = 0.003518987943909567


def brute_force(reps, classes, w=None, tau=0.1, strict=False):
    """Oracle: the contrastive sum written out anchor by anchor in plain Python."""
    def unit(v):
        n = math.sqrt(sum(x * x for x in v))
        return [x / n for x in v]

    z = [unit(r) for r in reps]
    total = 0.0
    for i in range(len(z)):
        pos = [p for p in range(len(z)) if p != i and classes[p] == classes[i]]
        if not pos:
            continue
        den = 0.0
        for m in range(len(z)):
            if m == i or (strict and classes[m] == classes[i]):
                continue
            weight = 1.0 if w is None else w[classes[m]][classes[i]]
            den += weight * math.exp(sum(a * b for a, b in zip(z[i], z[m])) / tau)
        acc = sum(math.log(math.exp(sum(a * b for a, b in zip(z[i], z[p])) / tau) / den)
                  for p in pos)
        total -= acc / len(pos)
    return total


# -- mse ---------------------------------------------------------------------

def test_mse_zero_at_target():
    y = np.array([[0, 1, 0], [1, 1, 0]])
    assert mse_loss(y.astype(float), y).item() == 0.0


def test_mse_hand_value():
    assert mse_loss([[0.5, 0.5]], [[1, 0]]).item() == 0.5


def test_mse_grad_zero_at_target():
    y = np.array([[0.0, 1.0]])
    t = Tensor(y.copy(), requires_grad=True)
    ad.backward(mse_loss(t, y))
    assert np.array_equal(t.grad, [[0.0, 0.0]])


def test_mse_sums_over_queries():
    a = mse_loss([[0.5, 0.5]], [[1, 0]]).item()
    b = mse_loss([[0.5, 0.5], [0.5, 0.5]], [[1, 0], [0, 1]]).item()
    assert b == 2 * a


def test_mse_shape_mismatch():
    with pytest.raises(ShapeError):
        mse_loss([[0.5, 0.5]], [[1, 0, 0]])


def test_mse_nonnegative():
    r = np.random.default_rng(0)
    for _ in range(20):
        y_hat = r.dirichlet(np.ones(4), size=3)
        y = (r.random((3, 4)) > 0.5).astype(int)
        assert mse_loss(y_hat, y).item() >= 0.0


# -- contrastive -------------------------------------------------------------

def test_scl_hand_example():
    got = scl_loss(np.array(HAND_REPS), HAND_CLASSES).item()
    assert abs(got - brute_force(HAND_REPS, HAND_CLASSES)) < 1e-10
    assert abs(got - HAND_SCL) < 1e-10


def test_lcl_hand_example():
    w = np.array([[1.0, 0.5], [0.5, 1.0]])
    got = contrastive_loss(np.array(HAND_REPS), HAND_CLASSES, w).item()
    assert abs(got - brute_force(HAND_REPS, HAND_CLASSES, w.tolist())) < 1e-10
    assert abs(got - HAND_LCL_HALF) < 1e-10


def test_lcl_via_label_vectors():
    # label vectors at 60 degrees -> w_12 = cos = 0.5
    labels = np.array([[1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    got = lcl_loss(np.array(HAND_REPS), labels, HAND_CLASSES).item()
    assert abs(got - HAND_LCL_HALF) < 1e-10


def test_k1_gives_zero():
    reps = np.random.default_rng(1).normal(size=(5, 1, 4))
    assert scl_loss(reps).item() == 0.0
    assert lcl_loss(reps, np.eye(5)).item() == 0.0


def test_lcl_equals_scl_under_unit_weights():
    r = np.random.default_rng(2)
    reps = r.normal(size=(4, 3, 6))
    same = np.tile(r.normal(size=(1, 8)), (4, 1))
    assert abs(lcl_loss(reps, same).item() - scl_loss(reps).item()) < 1e-12
    assert contrastive_loss(reps, weights=np.ones((4, 4))).item() == scl_loss(reps).item()


def test_permutation_and_relabel_invariance():
    r = np.random.default_rng(3)
    reps = r.normal(size=(3, 4, 5))
    labels = r.normal(size=(3, 7))
    base_s = scl_loss(reps).item()
    base_l = lcl_loss(reps, labels).item()
    perm_within = reps[:, ::-1]
    assert abs(scl_loss(perm_within).item() - base_s) < 1e-12
    assert abs(lcl_loss(perm_within, labels).item() - base_l) < 1e-12
    order = [2, 0, 1]
    assert abs(scl_loss(reps[order]).item() - base_s) < 1e-12
    assert abs(lcl_loss(reps[order], labels[order]).item() - base_l) < 1e-12


def test_random_batches_match_brute_force():
    r = np.random.default_rng(4)
    for _ in range(10):
        n, k = int(r.integers(2, 5)), int(r.integers(1, 4))
        reps = r.normal(size=(n * k, 3))
        cls = np.repeat(np.arange(n), k)
        w = np.clip(r.uniform(-0.2, 1, (n, n)), 0, 1)
        w = (w + w.T) / 2
        np.fill_diagonal(w, 1.0)
        for strict in (False, True):
            got = contrastive_loss(reps, cls, w, strict_negatives=strict).item()
            want = brute_force(reps.tolist(), cls.tolist(), w.tolist(), strict=strict)
            assert abs(got - want) < 1e-10


def test_lcl_monotone_in_weight():
    w = np.eye(2)
    values = []
    for w12 in np.linspace(0.05, 1.0, 20):
        w[0, 1] = w[1, 0] = w12
        values.append(contrastive_loss(np.array(HAND_REPS), HAND_CLASSES, w).item())
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_label_weight_matrix():
    L = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.1], [0.0, 0.0]])
    w = label_weight_matrix(L)
    assert np.allclose(w, w.T)
    assert np.allclose(np.diag(w)[:3], 1.0)
    assert w[0, 2] == 0.0  # negative cosine clamped
    assert w[3, 3] == 0.0  # zero label embedding
    assert ((w >= 0) & (w <= 1)).all()


def test_all_zero_weights_floor():
    out = contrastive_loss(np.array(HAND_REPS), HAND_CLASSES, np.zeros((2, 2))).item()
    assert math.isfinite(out)


def test_bad_tau():
    with pytest.raises(ConfigError):
        scl_loss(np.ones((2, 2, 2)), tau=0.0)


@pytest.mark.parametrize("seed", range(10))
def test_contrastive_gradients(seed):
    r = np.random.default_rng(seed)
    # positive label vectors keep every w_mn in (0, 1); with w = I and K = 2 the loss is constant
    labels = np.abs(r.normal(size=(3, 4))) + 0.1

    def fn(reps):
        return lcl_loss(ad.reshape(reps, (3, 2, 5)), labels)

    assert ad.check_gradients(fn, [r.normal(size=(6, 5))]) < 1e-4


# -- total -------------------------------------------------------------------

def test_total_lambda_zero_is_mse():
    mse = mse_loss([[0.3, 0.7]], [[0, 1]])
    assert total_loss(mse, scl_loss(np.array(HAND_REPS), HAND_CLASSES), 0.0) is mse


def test_total_arithmetic():
    assert abs(total_loss(Tensor(1.0), Tensor(2.0), 0.2).item() - 1.4) < 1e-15


def test_total_default_lambda():
    assert total_loss.__defaults__ == (0.2,)
