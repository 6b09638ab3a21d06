"""Hot numeric kernels with a numba path and a numpy/scipy fallback.

The numba path is used when numba imports cleanly and ``AGEGENDER_NUMBA`` is
not set to ``0``.  Both paths compute the same quantities; results agree to
rounding error but are not guaranteed bit-identical to each other, so a
reproducible run should keep the flag fixed.
"""

import os

import numpy as np
from scipy.signal import lfilter

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

USE_NUMBA = njit is not None and os.environ.get("AGEGENDER_NUMBA", "1") != "0"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _windows(x, kernel, stride):
    # x: [T, C] -> [T_out, K, C] strided view
    view = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=0)
    return view[::stride].transpose(0, 2, 1)


def conv1d_forward_np(x, w, stride, groups):
    c_out, c_in_g, k = w.shape
    t_out = (x.shape[0] - k) // stride + 1
    out = np.empty((t_out, c_out))
    cols = _windows(x, k, stride)
    c_out_g = c_out // groups
    for g in range(groups):
        xg = cols[:, :, g * c_in_g:(g + 1) * c_in_g].reshape(t_out, k * c_in_g)
        wg = w[g * c_out_g:(g + 1) * c_out_g].transpose(0, 2, 1).reshape(c_out_g, k * c_in_g)
        out[:, g * c_out_g:(g + 1) * c_out_g] = xg @ wg.T
    return out


def conv1d_backward_np(x, w, gout, stride, groups):
    c_out, c_in_g, k = w.shape
    t_out = gout.shape[0]
    cols = _windows(x, k, stride)
    c_out_g = c_out // groups
    gx = np.zeros_like(x)
    gw = np.empty_like(w)
    for g in range(groups):
        go = gout[:, g * c_out_g:(g + 1) * c_out_g]
        xg = cols[:, :, g * c_in_g:(g + 1) * c_in_g].reshape(t_out, k * c_in_g)
        wg = w[g * c_out_g:(g + 1) * c_out_g].transpose(0, 2, 1).reshape(c_out_g, k * c_in_g)
        gw[g * c_out_g:(g + 1) * c_out_g] = (go.T @ xg).reshape(c_out_g, k, c_in_g).transpose(0, 2, 1)
        gcols = (go @ wg).reshape(t_out, k, c_in_g)
        for j in range(k):
            gx[j:j + stride * (t_out - 1) + 1:stride, g * c_in_g:(g + 1) * c_in_g] += gcols[:, j, :]
    return gx, gw


def frame_power_np(x, frame, hop):
    n = 1 + (x.shape[0] - frame) // hop
    if n <= 0:
        return np.zeros(0)
    view = np.lib.stride_tricks.sliding_window_view(x, frame)[::hop][:n]
    return np.mean(view * view, axis=1)


def one_pole_np(x, coef):
    return lfilter([1.0], [1.0, -coef], x)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if njit is not None:

    # Weights are re-laid out as [k, c_in_g, c_out] so the innermost loop runs
    # over contiguous output channels of one group and vectorises.

    @njit(cache=True)
    def conv1d_forward_nb(x, w, stride, groups):
        c_out, c_in_g, k = w.shape
        t_out = (x.shape[0] - k) // stride + 1
        c_out_g = c_out // groups
        wt = np.ascontiguousarray(w.transpose(2, 1, 0))
        out = np.zeros((t_out, c_out))
        for t in range(t_out):
            base = t * stride
            for g in range(groups):
                o0 = g * c_out_g
                for j in range(k):
                    for c in range(c_in_g):
                        xv = x[base + j, g * c_in_g + c]
                        for o in range(o0, o0 + c_out_g):
                            out[t, o] += wt[j, c, o] * xv
        return out

    @njit(cache=True)
    def conv1d_backward_nb(x, w, gout, stride, groups):
        c_out, c_in_g, k = w.shape
        t_out = gout.shape[0]
        c_out_g = c_out // groups
        wt = np.ascontiguousarray(w.transpose(2, 1, 0))
        gx = np.zeros_like(x)
        gwt = np.zeros((k, c_in_g, c_out))
        for t in range(t_out):
            base = t * stride
            for g in range(groups):
                o0 = g * c_out_g
                for j in range(k):
                    for c in range(c_in_g):
                        xi = g * c_in_g + c
                        xv = x[base + j, xi]
                        acc = 0.0
                        for o in range(o0, o0 + c_out_g):
                            go = gout[t, o]
                            gwt[j, c, o] += go * xv
                            acc += go * wt[j, c, o]
                        gx[base + j, xi] += acc
        return gx, np.ascontiguousarray(gwt.transpose(2, 1, 0))

    @njit(cache=True)
    def frame_power_nb(x, frame, hop):
        n = 1 + (x.shape[0] - frame) // hop
        if n <= 0:
            return np.zeros(0)
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            start = i * hop
            for j in range(frame):
                v = x[start + j]
                acc += v * v
            out[i] = acc / frame
        return out

    @njit(cache=True)
    def one_pole_nb(x, coef):
        y = np.empty_like(x)
        prev = 0.0
        for i in range(x.shape[0]):
            prev = x[i] + coef * prev
            y[i] = prev
        return y


def conv1d_forward(x, w, stride, groups=1):
    """Valid (unpadded) strided grouped conv; ``x`` is [T, C_in], result [T_out, C_out]."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if USE_NUMBA:
        return conv1d_forward_nb(x, w, int(stride), int(groups))
    return conv1d_forward_np(x, w, stride, groups)


def conv1d_backward(x, w, gout, stride, groups=1):
    """Gradients of :func:`conv1d_forward` w.r.t. input and weight."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    gout = np.ascontiguousarray(gout, dtype=np.float64)
    if USE_NUMBA:
        return conv1d_backward_nb(x, w, gout, int(stride), int(groups))
    return conv1d_backward_np(x, w, gout, stride, groups)


def frame_power(x, frame, hop):
    """Mean-square power of each full frame."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return frame_power_nb(x, int(frame), int(hop))
    return frame_power_np(x, frame, hop)


def one_pole(x, coef):
    """First-order recursive filter y[n] = x[n] + coef * y[n-1]."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return one_pole_nb(x, float(coef))
    return one_pole_np(x, coef)
