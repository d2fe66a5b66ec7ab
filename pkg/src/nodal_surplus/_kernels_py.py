"""Pure numpy fallback for the compiled kernels."""

import numpy as np


def secular_det(S, phases):
    """Return det(I - diag(exp(i*phases[b])) S) for every row b."""
    S = np.asarray(S, dtype=float)
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    n = S.shape[0]
    M = np.eye(n) - np.exp(1j * phases)[:, :, None] * S[None, :, :]
    return np.linalg.det(M)
