"""Training objectives: MSE on class scores plus (label-weighted) supervised contrastive terms."""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError

DENOM_FLOOR = 1e-30


def mse_loss(y_hat, y):
    """Sum over queries and classes of squared score error."""
    y_hat = ad.as_tensor(y_hat)
    y = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ShapeError(f"mse_loss: prediction {y_hat.shape} vs target {y.shape}")
    return ad.sum_(ad.square(ad.sub(y_hat, y)))


def label_weight_matrix(label_vecs):
    """w_mn = cos(L^m, L^n) clamped to [0, 1]; (N, dim) -> (N, N)."""
    L = np.asarray(label_vecs, dtype=np.float64)
    w = ad.cosine(L[:, None, :], L[None, :, :]).data
    return np.clip(w, 0.0, 1.0)


def _flatten(reps, classes):
    reps = ad.as_tensor(reps)
    if reps.ndim == 3:
        n, k, h = reps.shape
        if classes is None:
            classes = np.repeat(np.arange(n), k)
        reps = ad.reshape(reps, (n * k, h))
    elif classes is None:
        raise ShapeError("flat representations need explicit class ids")
    return reps, np.asarray(classes)


def contrastive_loss(reps, classes=None, weights=None, tau=0.1, strict_negatives=False):
    """Supervised contrastive loss over support-instance representations.

    For every anchor with at least one same-class partner, adds
    ``-(1/|P|) sum_p log(exp(z.z_p/tau) / sum_m w[c_m, c] exp(z.z_m/tau))``,
    the denominator running over all other representations. ``z`` are the
    L2-normalised reps. ``weights=None`` means all ones (plain SupCon);
    ``strict_negatives`` keeps only other-class terms in the denominator.

    ``reps`` is (N, K, h) or flat (R, h) with ``classes`` giving each row's
    class index; ``weights`` is indexed by class index.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    reps, cls = _flatten(reps, classes)
    R = reps.shape[0]
    same = cls[:, None] == cls[None, :]
    off_diag = ~np.eye(R, dtype=bool)
    positive = same & off_diag
    n_pos = positive.sum(axis=1)
    has_pos = n_pos > 0
    if not has_pos.any():
        return Tensor(0.0) if not reps.requires_grad else ad.mul(ad.sum_(reps), 0.0)

    if weights is None:
        denom_w = np.ones((R, R))
    else:
        w = np.asarray(weights, dtype=np.float64)
        # anchor row i (class n), term column j (class m) carries w_mn
        denom_w = w[cls[None, :], cls[:, None]]
    denom_w = denom_w * off_diag
    if strict_negatives:
        denom_w = denom_w * ~same

    z = ad.normalize(reps)
    sim = ad.mul(ad.matmul(z, ad.swapaxes(z, 0, 1)), 1.0 / tau)
    denom = ad.sum_(ad.mul(ad.exp(sim), denom_w), axis=1)
    log_denom = ad.log(ad.clamp_min(denom, DENOM_FLOOR))
    pos_w = np.where(positive, 1.0 / np.maximum(n_pos, 1)[:, None], 0.0)
    pos_term = ad.sum_(ad.mul(sim, pos_w))
    return ad.sub(ad.sum_(ad.mul(log_denom, has_pos.astype(np.float64))), pos_term)


def scl_loss(reps, classes=None, tau=0.1, strict_negatives=False):
    return contrastive_loss(reps, classes, None, tau, strict_negatives)


def lcl_loss(reps, label_vecs, classes=None, tau=0.1, strict_negatives=False):
    """Contrastive loss with each denominator term weighted by label-embedding cosine."""
    return contrastive_loss(reps, classes, label_weight_matrix(label_vecs), tau, strict_negatives)


def total_loss(mse, contrastive, lam=0.2):
    if lam < 0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    if contrastive is None or lam == 0:
        return mse
    return ad.add(mse, ad.mul(contrastive, lam))
