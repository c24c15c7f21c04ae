"""Pure-numpy stepping loop with the same signature and semantics as the compiled kernel.

The loop runs over time; each step is vectorized across ensemble members.
"""

from __future__ import annotations

import numpy as np


def propagate(P, L, xi, state, phase, obs, every, countdown, out, written):
    n_phase = P.shape[0]
    for n in range(xi.shape[0]):
        state[...] = state @ P[phase].T + xi[n] @ L[phase].T
        phase += 1
        if phase == n_phase:
            phase = 0
        countdown -= 1
        if countdown == 0:
            countdown = every
            out[written] = state @ obs.T
            written += 1
    return phase, countdown, written
