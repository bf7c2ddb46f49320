"""Training objective: mean squared error plus a Pearson-correlation term.

All functions take ``(..., N)`` arrays or tensors (typically ``(12, N)`` or
``(B, 12, N)``) and return a scalar :class:`Tensor` that can be
back-propagated when ``x_hat`` carries gradients.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class LossShapeError(ValueError):
    pass


@dataclass(frozen=True)
class LossParams:
    """Weight of the Pearson term.

    ``pearson_only=True`` drops the MSE term altogether (the limit of an
    infinite weight); ``alpha`` is then ignored.
    """

    alpha: float = 0.1
    pearson_eps: float = 1e-8
    pearson_only: bool = False

    def __post_init__(self):
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError("alpha must be finite and >= 0; use pearson_only for the Pearson-only loss")
        if not self.pearson_eps > 0:
            raise ValueError("pearson_eps must be > 0")

    @classmethod
    def parse(cls, text, pearson_eps=1e-8):
        """``"inf"`` selects the Pearson-only loss, anything else is a weight."""
        if str(text).strip().lower() in ("inf", "infinity", "pearson"):
            return cls(alpha=0.0, pearson_eps=pearson_eps, pearson_only=True)
        return cls(alpha=float(text), pearson_eps=pearson_eps)

    @property
    def label(self):
        return "inf" if self.pearson_only else f"{self.alpha:g}"


def _pair(x_hat, x):
    x_hat = x_hat if isinstance(x_hat, Tensor) else Tensor(np.asarray(x_hat))
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=x_hat.dtype))
    if x_hat.shape != x.shape:
        raise LossShapeError(f"shape mismatch: {x_hat.shape} vs {x.shape}")
    return x_hat, x


def mse_loss(x_hat, x):
    """Mean of squared differences over every cell."""
    x_hat, x = _pair(x_hat, x)
    d = x_hat - x
    return (d * d).mean()


def pearson_loss(x_hat, x, eps=1e-8):
    """Mean over leads of ``1 - r`` between each reconstructed and true lead.

    ``eps`` is added to both square-root factors of the denominator, so a
    constant lead gives ``r ~ 0`` (loss ~ 1) rather than a division by zero.
    """
    x_hat, x = _pair(x_hat, x)
    a = x_hat - x_hat.mean(axis=-1, keepdims=True)
    b = x - x.mean(axis=-1, keepdims=True)
    num = (a * b).sum(axis=-1)
    den = (ad.sqrt((a * a).sum(axis=-1)) + eps) * (ad.sqrt((b * b).sum(axis=-1)) + eps)
    r = num / den
    return (1.0 - r).mean()


def loss_components(x_hat, x, params=LossParams()):
    """``(composite, mse, pearson)`` as scalar tensors.

    With ``alpha == 0`` the composite *is* the MSE tensor and the Pearson
    term is evaluated outside the graph, for logging only.
    """
    x_hat, x = _pair(x_hat, x)
    if params.pearson_only:
        with ad.no_grad():
            mse = mse_loss(x_hat, x)
        p = pearson_loss(x_hat, x, params.pearson_eps)
        return p, mse, p
    mse = mse_loss(x_hat, x)
    if params.alpha == 0:
        with ad.no_grad():
            p = pearson_loss(x_hat, x, params.pearson_eps)
        return mse, mse, p
    p = pearson_loss(x_hat, x, params.pearson_eps)
    return mse + params.alpha * p, mse, p


def composite_loss(x_hat, x, params=LossParams()):
    """``mse + alpha * pearson`` (or the Pearson term alone in Pearson-only mode)."""
    return loss_components(x_hat, x, params)[0]
