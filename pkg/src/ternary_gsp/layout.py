"""Conversions between the two signal/parameter layouts.

The ternary path uses channel-major signals ``B x P x N`` and parameters
``Q x P x K``.  The graph-layer formulas act on vertex-major signals
``B x N x P`` and right-multiply by ``P x Q`` matrices.
"""

import numpy as np


def to_vertex_major(x_bpn) -> np.ndarray:
    """B x P x N -> B x N x P."""
    return np.ascontiguousarray(np.swapaxes(np.asarray(x_bpn, dtype=np.float64), 1, 2))


def to_channel_major(x_bnp) -> np.ndarray:
    """B x N x P -> B x P x N."""
    return np.ascontiguousarray(np.swapaxes(np.asarray(x_bnp, dtype=np.float64), 1, 2))


def theta_from_matrices(mats) -> np.ndarray:
    """C matrices of shape P x Q -> ternary theta Q x P x C."""
    stack = np.asarray(mats, dtype=np.float64)
    if stack.ndim == 2:
        stack = stack[None]
    return np.ascontiguousarray(np.transpose(stack, (2, 1, 0)))


def matrices_from_theta(theta_qpk) -> np.ndarray:
    """Ternary theta Q x P x C -> C x P x Q stack of right-multiplied matrices."""
    return np.ascontiguousarray(np.transpose(np.asarray(theta_qpk, dtype=np.float64), (2, 1, 0)))
