"""Ordinary least squares per arm, solved through a QR decomposition."""

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, RankDeficient


def augment(x):
    """Prepend an intercept column."""
    x = np.asarray(x, dtype=np.float64)
    return np.concatenate([np.ones((x.shape[0], 1)), x], axis=1)


def ols_batch(xa, y):
    """Least-squares coefficients for a stack of problems.

    ``xa`` has shape (B, m, k) and ``y`` shape (B, m). Returns (B, k).
    Raises RankDeficient if any design in the stack has rank < k, judged
    from the diagonal of R with the usual LAPACK-style tolerance.
    """
    b, m, k = xa.shape
    if m < k:
        raise RankDeficient(m, k, m)
    q, r = np.linalg.qr(xa)
    diag = np.abs(np.diagonal(r, axis1=1, axis2=2))
    tol = diag.max(axis=1, keepdims=True) * max(m, k) * np.finfo(np.float64).eps
    small = diag <= tol
    if small.any():
        worst = int(small.sum(axis=1).argmax())
        raise RankDeficient(k - int(small[worst].sum()), k, m)
    qty = np.einsum("bmk,bm->bk", q, y)
    return np.linalg.solve(r, qty[..., None])[..., 0]


@dataclass(frozen=True)
class LinearModel:
    """Fitted OLS model; ``coef[0]`` is the intercept."""

    coef: np.ndarray
    kind = "linear"

    @property
    def n_features(self):
        return self.coef.shape[0] - 1

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise DimensionMismatch(self.n_features, x.shape[-1] if x.ndim else 0)
        # accumulate column by column in a fixed order so that appending a
        # column with a zero coefficient leaves predictions bitwise unchanged
        out = np.full(x.shape[0], self.coef[0])
        for j in range(self.n_features):
            out += x[:, j] * self.coef[j + 1]
        return out


def fit_ols(x, y):
    coef = ols_batch(augment(x)[None], np.asarray(y, dtype=np.float64)[None])[0]
    coef.setflags(write=False)
    return LinearModel(coef)
