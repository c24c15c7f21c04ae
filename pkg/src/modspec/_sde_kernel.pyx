# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping loop for the linear stochastic integrator.

One step for every ensemble member ``b``::

    c_b <- P[j] c_b + L[j] xi[n, b]          j = (phase + n) mod n_phase

and every ``every``-th step the observables ``obs @ c_b`` are written to ``out``.
"""

cimport cython


def propagate(const double complex[:, :, ::1] P,
              const double complex[:, :, ::1] L,
              const double[:, :, ::1] xi,
              double complex[:, ::1] state,
              Py_ssize_t phase,
              const double complex[:, ::1] obs,
              Py_ssize_t every,
              Py_ssize_t countdown,
              double complex[:, :, ::1] out,
              Py_ssize_t written):
    """Advance ``state`` in place through ``xi.shape[0]`` steps.

    Returns ``(phase, countdown, written)`` so a long run can be split into chunks.
    """
    cdef Py_ssize_t n_steps = xi.shape[0]
    cdef Py_ssize_t n_batch = state.shape[0]
    cdef Py_ssize_t d = state.shape[1]
    cdef Py_ssize_t r = xi.shape[2]
    cdef Py_ssize_t n_obs = obs.shape[0]
    cdef Py_ssize_t n_phase = P.shape[0]
    cdef Py_ssize_t n, b, i, k
    cdef double complex acc
    cdef double complex tmp[64]
    if d > 64:
        raise ValueError("state dimension above 64 is not supported by the compiled kernel")
    for n in range(n_steps):
        for b in range(n_batch):
            for i in range(d):
                acc = 0
                for k in range(d):
                    acc = acc + P[phase, i, k] * state[b, k]
                for k in range(r):
                    acc = acc + L[phase, i, k] * xi[n, b, k]
                tmp[i] = acc
            for i in range(d):
                state[b, i] = tmp[i]
        phase += 1
        if phase == n_phase:
            phase = 0
        countdown -= 1
        if countdown == 0:
            countdown = every
            for b in range(n_batch):
                for i in range(n_obs):
                    acc = 0
                    for k in range(d):
                        acc = acc + obs[i, k] * state[b, k]
                    out[written, b, i] = acc
            written += 1
    return phase, countdown, written
