"""Pure numpy implementation of the strategy-evaluation kernel.

Drop-in fallback for the compiled extension; see _evalcore.pyx for the
reference semantics.
"""

import numpy as np

BACKEND = "numpy"


def row_costs(R, V, out):
    """Accumulate per-opponent stage costs for one strategy branch.

    R: (S, E1, K) stage tensor of the fixed branch: estimate s, own
       evidence cell e1, joint coordinate k.
    V: (N, K, E2) stacked opponent branch tensors.
    out: (N,) accumulator; adds, for every opponent j,
       sum over (e1, e2) of min over s of sum_k R[s, e1, k] * V[j, k, e2].

    The inner minimum realizes the per-evidence-cell optimal estimate.
    """
    S, E1, K = R.shape
    N, _, E2 = V.shape
    # (S*E1, K) @ (K, N*E2) -> (S, E1, N, E2)
    prod = (R.reshape(S * E1, K) @ V.transpose(1, 0, 2).reshape(K, N * E2)).reshape(
        S, E1, N, E2
    )
    out += prod.min(axis=0).sum(axis=(0, 2))
