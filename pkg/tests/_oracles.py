"""Independent numpy reference implementations used as test oracles.

Everything here is written directly from the update formulas with plain
numpy, sharing no code with the package, so agreement is meaningful.
"""

import numpy as np


def np_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def params_to_np(p):
    """GruParams -> dict of plain arrays."""
    return {name.split(".")[-1]: t.data.copy() for name, t in p.named().items()}


def np_gates(below, state, P):
    r = np_sigmoid(P["w_reset"] @ below + P["u_reset"] @ state + P["b_reset"])
    z = np_sigmoid(P["w_update"] @ below + P["u_update"] @ state + P["b_update"])
    g = np.tanh(P["w_cand"] @ below + P["u_cand"] @ (r * state) + P["b_cand"])
    return r, z, g


def np_discrete_step(below, state, P):
    _, z, g = np_gates(below, state, P)
    return z * state + (1.0 - z) * g


def np_ode_field(below, state, P):
    _, z, g = np_gates(below, state, P)
    return (1.0 - z) * (g - state)


def np_horizontal(state, below, P):
    _, z, g = np_gates(below, state, P)
    return z * state + (1.0 - z) * g + below - state


def np_vertical(state, left, P):
    _, z, g = np_gates(state, left, P)
    return z * left + (1.0 - z) * g


def np_encode(x, enc):
    return enc.weight.data @ np.asarray(x, dtype=float) + enc.bias.data


def np_head(h, head):
    return head.weight.data @ np.asarray(h, dtype=float) + head.bias.data


def np_zoh_euler(times, below_list, y0, field, n_steps):
    """Fixed-step Euler across observation intervals.

    below_list[i] drives the interval from times[i] to times[i+1]; the
    returned list holds the state at every observation time.
    """
    y = np.asarray(y0, dtype=float).copy()
    states = [y.copy()]
    for i in range(len(times) - 1):
        h = (times[i + 1] - times[i]) / n_steps
        for _ in range(n_steps):
            y = y + h * field(y, below_list[i])
        states.append(y.copy())
    return states


def np_stencil_gaps(gaps, k, spacing_mode):
    if spacing_mode == "uniform" or k == 1:
        return np.ones(k), np.ones(k)
    d = np.asarray(gaps, dtype=float)
    dl = np.concatenate([[d[0]], d])
    dr = np.concatenate([d, [d[-1]]])
    return dl, dr


def np_laplacian(states, gaps, spacing_mode, boundary_mode, diffusivity=1.0):
    """Second difference along the row; states is a list of vectors."""
    k = len(states)
    arr = [np.asarray(s, dtype=float) for s in states]
    zero = np.zeros_like(arr[0])
    dl, dr = np_stencil_gaps(gaps, k, spacing_mode)
    out = []
    for i in range(k):
        if i > 0:
            hl = arr[i - 1]
        else:
            hl = arr[0] if boundary_mode == "zero_flux" else zero
        if i < k - 1:
            hr = arr[i + 1]
        else:
            hr = arr[-1] if boundary_mode == "zero_flux" else zero
        lap = 2.0 * (hl / (dl[i] * (dl[i] + dr[i]))
                     - arr[i] / (dl[i] * dr[i])
                     + hr / (dr[i] * (dl[i] + dr[i])))
        out.append(diffusivity * lap)
    return out


def np_mol_field(states, gaps, P, spacing_mode, boundary_mode,
                 diffusivity=1.0, include_cell=True):
    lap = np_laplacian(states, gaps, spacing_mode, boundary_mode, diffusivity)
    if not include_cell:
        return lap
    arr = [np.asarray(s, dtype=float) for s in states]
    zero = np.zeros_like(arr[0])
    out = []
    for i in range(len(arr)):
        left = arr[i - 1] if i > 0 else zero
        out.append(lap[i] + np_vertical(arr[i], left, P))
    return out


def np_fdm_step(states, gaps, dt, P, spacing_mode, boundary_mode,
                diffusivity=1.0, include_cell=True):
    field = np_mol_field(states, gaps, P, spacing_mode, boundary_mode,
                         diffusivity, include_cell)
    return [np.asarray(s, dtype=float) + dt * f for s, f in zip(states, field)]


def np_cross_entropy(logits, target):
    logits = np.asarray(logits, dtype=float)
    m = logits.max()
    return float(np.log(np.exp(logits - m).sum()) - (logits[target] - m))


def np_mse(pred, target):
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(np.mean(d * d))
