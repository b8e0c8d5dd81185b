"""Batched AND/OR layer kernels with a compiled core and a numpy fallback.

A layer holds ``R`` nodes with weights ``w`` of shape ``(R, n)`` and biases
of shape ``(R,)``. Inputs are either shared by every node, shape ``(B, n)``,
or private to each node, shape ``(B, R, n)``. Outputs have shape ``(B, R)``.

The backend is picked at import: the Cython extension when it was built,
numpy otherwise. Setting ``NLN_KERNELS=numpy`` forces the fallback.
"""

import os

import numpy as np
from numpy.lib.stride_tricks import as_strided

try:
    from . import _kernels as _ext
except ImportError:  # extension not built
    _ext = None

BACKEND = "cython" if _ext is not None and os.environ.get("NLN_KERNELS", "") != "numpy" else "numpy"


def _prod_except(f):
    """Products along the last axis leaving out each position in turn."""
    pre = np.ones_like(f)
    suf = np.ones_like(f)
    if f.shape[-1] > 1:
        pre[..., 1:] = np.cumprod(f[..., :-1], axis=-1)
        suf[..., :-1] = np.cumprod(f[..., :0:-1], axis=-1)[..., ::-1]
    return pre * suf


def _as3(z):
    return z[:, None, :] if z.ndim == 2 else z


def _and_factors(z3, w):
    return (1.0 - np.maximum(w, 0.0) * (1.0 - z3)) * (1.0 - np.maximum(-w, 0.0) * z3)


def _or_factors(z3, w):
    return (1.0 - np.maximum(w, 0.0) * z3) * (1.0 - np.maximum(-w, 0.0) * (1.0 - z3))


class NumpyKernels:
    """Reference implementation, also used by the benchmark."""

    name = "numpy"

    @staticmethod
    def and_forward(z, w, bias):
        f = _and_factors(_as3(z), w)
        return np.clip(bias * np.prod(f, axis=-1), 0.0, 1.0)

    @staticmethod
    def or_forward(z, w, bias):
        f = _or_factors(_as3(z), w)
        return np.clip(1.0 - (1.0 - bias) * np.prod(f, axis=-1), 0.0, 1.0)

    @staticmethod
    def and_backward(z, w, bias, g):
        z3 = _as3(z)
        f = _and_factors(z3, w)
        full = np.prod(f, axis=-1)
        rest = (g * bias)[..., None] * _prod_except(f)
        dbias = np.sum(g * full, axis=0)
        dfdw = np.where(w > 0, -(1.0 - z3), np.where(w < 0, z3, 2.0 * z3 - 1.0))
        dw = np.sum(rest * dfdw, axis=0)
        dz = rest * w
        if z.ndim == 2:
            dz = dz.sum(axis=1)
        return dz, dw, dbias

    @staticmethod
    def or_backward(z, w, bias, g):
        z3 = _as3(z)
        f = _or_factors(z3, w)
        full = np.prod(f, axis=-1)
        rest = (g * (1.0 - bias))[..., None] * _prod_except(f)
        dbias = np.sum(g * full, axis=0)
        dfdw = np.where(w > 0, z3, np.where(w < 0, -(1.0 - z3), 2.0 * z3 - 1.0))
        dw = np.sum(rest * dfdw, axis=0)
        dz = rest * w
        if z.ndim == 2:
            dz = dz.sum(axis=1)
        return dz, dw, dbias


def _view3(z, n_nodes):
    if z.ndim == 3:
        return z
    return np.broadcast_to(z[:, None, :], (z.shape[0], n_nodes, z.shape[1]))


def _grad_buffer(z, n_nodes):
    dz = np.zeros(z.shape)
    if z.ndim == 3:
        return dz, dz
    s0, s1 = dz.strides
    return dz, as_strided(dz, shape=(z.shape[0], n_nodes, z.shape[1]), strides=(s0, 0, s1), writeable=True)


class CythonKernels:
    name = "cython"

    @staticmethod
    def _prep(z, w, bias):
        z = np.asarray(z, dtype=np.float64)
        w = np.ascontiguousarray(w, dtype=np.float64)
        bias = np.ascontiguousarray(bias, dtype=np.float64)
        return z, w, bias

    @classmethod
    def and_forward(cls, z, w, bias):
        z, w, bias = cls._prep(z, w, bias)
        out = np.empty((z.shape[0], w.shape[0]))
        _ext.and_forward(_view3(z, w.shape[0]), w, bias, out)
        return out

    @classmethod
    def or_forward(cls, z, w, bias):
        z, w, bias = cls._prep(z, w, bias)
        out = np.empty((z.shape[0], w.shape[0]))
        _ext.or_forward(_view3(z, w.shape[0]), w, bias, out)
        return out

    @classmethod
    def and_backward(cls, z, w, bias, g):
        z, w, bias = cls._prep(z, w, bias)
        dz, dz3 = _grad_buffer(z, w.shape[0])
        dw = np.zeros(w.shape)
        dbias = np.zeros(w.shape[0])
        _ext.and_backward(_view3(z, w.shape[0]), w, bias, np.ascontiguousarray(g, dtype=np.float64), dz3, dw, dbias)
        return dz, dw, dbias

    @classmethod
    def or_backward(cls, z, w, bias, g):
        z, w, bias = cls._prep(z, w, bias)
        dz, dz3 = _grad_buffer(z, w.shape[0])
        dw = np.zeros(w.shape)
        dbias = np.zeros(w.shape[0])
        _ext.or_backward(_view3(z, w.shape[0]), w, bias, np.ascontiguousarray(g, dtype=np.float64), dz3, dw, dbias)
        return dz, dw, dbias


def get_backend(name=None):
    """Return the kernel class for ``name`` ('cython' or 'numpy'), default the active one."""
    name = name or BACKEND
    if name == "cython":
        if _ext is None:
            raise ImportError("compiled kernels are not built")
        return CythonKernels
    if name == "numpy":
        return NumpyKernels
    raise ValueError(f"unknown kernel backend {name!r}")


_active = get_backend()
and_forward = _active.and_forward
or_forward = _active.or_forward
and_backward = _active.and_backward
or_backward = _active.or_backward
