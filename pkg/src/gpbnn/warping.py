"""Input warpings shared by kernels and network architectures.

The periodic warp x -> (cos(2*pi*x/p), sin(2*pi*x/p)) maps a coordinate onto
the unit circle, which makes anything downstream exactly p-periodic in that
coordinate.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["PeriodicWarp", "warp_periodic"]


@dataclass(frozen=True)
class PeriodicWarp:
    """Replace selected input coordinates by their (cos, sin) circle embedding.

    Warped coordinates are emitted first (a cos/sin pair per coordinate, in
    ``warp_dims`` order), followed by the remaining coordinates in their
    original order.  With ``in_dim=1`` this is the plain scalar warp
    x -> (cos(2*pi*x/p), sin(2*pi*x/p)).
    """

    period: float
    in_dim: int = 1
    warp_dims: tuple = (0,)

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if self.in_dim < 1:
            raise ValueError("in_dim must be >= 1")
        dims = tuple(int(d) for d in self.warp_dims)
        if len(dims) == 0 or len(set(dims)) != len(dims):
            raise ValueError("warp_dims must be non-empty and unique")
        if any(d < 0 or d >= self.in_dim for d in dims):
            raise ValueError(f"warp_dims {dims} out of range for in_dim={self.in_dim}")
        object.__setattr__(self, "warp_dims", dims)

    @property
    def out_dim(self):
        return self.in_dim + len(self.warp_dims)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise ValueError(f"expected inputs of shape (n, {self.in_dim}), got {X.shape}")
        angle = 2.0 * np.pi * X[:, self.warp_dims] / self.period
        rest = [j for j in range(self.in_dim) if j not in self.warp_dims]
        cols = []
        for k in range(angle.shape[1]):
            cols.append(np.cos(angle[:, k]))
            cols.append(np.sin(angle[:, k]))
        for j in rest:
            cols.append(X[:, j])
        return np.stack(cols, axis=1)


def warp_periodic(x, p):
    """Map a scalar onto the unit circle: ``(cos(2*pi*x/p), sin(2*pi*x/p))``.

    Raises ``ValueError`` for non-positive ``p``.
    """
    if p <= 0:
        raise ValueError(f"period must be positive, got {p}")
    a = 2.0 * np.pi * x / p
    return np.array([np.cos(a), np.sin(a)])
