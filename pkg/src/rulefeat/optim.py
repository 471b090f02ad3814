"""AdaDelta: learning-rate-free adaptive updates from running averages.

Per scalar parameter x with gradient g:

    E[g2]  <- rho * E[g2]  + (1 - rho) * g^2
    delta   = -(sqrt(E[dx2] + eps) / sqrt(E[g2] + eps)) * g
    E[dx2] <- rho * E[dx2] + (1 - rho) * delta^2
    x      <- x + delta
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import NonFiniteGradient
from .network import ModelParams


@dataclasses.dataclass
class AdaDeltaState:
    """Per-tensor running averages of squared gradients and updates."""

    rho: float = 0.95
    eps: float = 1e-6
    accum_grad_sq: dict[str, np.ndarray] = dataclasses.field(default_factory=dict)
    accum_delta_sq: dict[str, np.ndarray] = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (0.0 < self.rho < 1.0):
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if self.eps <= 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    def update(self, name: str, value: np.ndarray, grad: np.ndarray) -> None:
        """Apply one AdaDelta update to ``value`` in place."""
        eg = self.accum_grad_sq.setdefault(name, np.zeros_like(value))
        ed = self.accum_delta_sq.setdefault(name, np.zeros_like(value))
        eg *= self.rho
        eg += (1.0 - self.rho) * grad * grad
        delta = -(np.sqrt(ed + self.eps) / np.sqrt(eg + self.eps)) * grad
        ed *= self.rho
        ed += (1.0 - self.rho) * delta * delta
        value += delta


def rescale_columns(weights: np.ndarray, max_norm: float) -> None:
    """Scale down any column whose L2 norm exceeds ``max_norm``, in place."""
    norms = np.sqrt((weights * weights).sum(axis=0))
    over = norms > max_norm
    if np.any(over):
        weights[:, over] *= max_norm / norms[over]


def adadelta_step(
    state: AdaDeltaState,
    params: ModelParams,
    grads: ModelParams,
    max_col_norm: float | None = 3.0,
) -> None:
    """One optimizer step over every model tensor, in place.

    After the update the dense-layer weight columns are rescaled to L2
    norm at most ``max_col_norm`` (pass None to disable).

    Raises:
        NonFiniteGradient: any gradient tensor contains NaN or infinity.
    """
    pairs = list(zip(params.tensors(), grads.tensors()))
    for (name, _), (_, grad) in pairs:
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    for (name, value), (_, grad) in pairs:
        state.update(name, value, grad)
    if max_col_norm is not None:
        rescale_columns(params.dense_weights, max_col_norm)
