"""Finite-difference Wirtinger calculus on real surrogates.

Conventions:  d/dz = (d/dx - i d/dy)/2  and  d/dzbar = (d/dx + i d/dy)/2,
applied coordinate-wise with central differences (error O(step^2)).  A point
z in C^d is identified with the length-2d real vector (x_1..x_d, y_1..y_d);
``numpy`` complex arrays already store exactly this data, so the surrogate
views are free.

No automatic differentiation here on purpose: the whole point of the metric
construction downstream is that one finite-difference Jacobian pass is all a
metric evaluation needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFiniteEvaluation
from .linalg import hermitian_part

Map = Callable[[np.ndarray], np.ndarray]


def to_real(z: np.ndarray) -> np.ndarray:
    """C^d point (or batch) -> real surrogate (x_1..x_d, y_1..y_d)."""
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, z.imag], axis=-1)


def to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = x.shape[-1] // 2
    return x[..., :d] + 1j * x[..., d:]


def default_step(z: np.ndarray) -> float:
    """1e-4 * (1 + ||z||_inf): balances truncation vs roundoff at unit scale."""
    z = np.asarray(z)
    peak = float(np.max(np.abs(z))) if z.size else 0.0
    return 1e-4 * (1.0 + peak)


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteEvaluation(f"{what} returned NaN/Inf at a stencil point")


@dataclass(frozen=True)
class WirtingerJacobian:
    """Wirtinger pair of an n-valued map at a point: d_z and d_zbar, both n x d."""

    d_z: np.ndarray
    d_zbar: np.ndarray
    step: float

    def recombined_real(self) -> np.ndarray:
        """d/dx block = d_z + d_zbar (sanity hook for the FD conventions)."""
        return self.d_z + self.d_zbar


def wirtinger_jacobian(f: Map, z: np.ndarray, step: float | None = None) -> WirtingerJacobian:
    """Central-difference Wirtinger Jacobian of f: C^d -> C^n at z."""
    z = np.asarray(z, dtype=complex)
    h = default_step(z) if step is None else float(step)
    d = z.size
    f0 = np.atleast_1d(np.asarray(f(z)))
    n = f0.size
    dz = np.empty((n, d), dtype=complex)
    dzb = np.empty((n, d), dtype=complex)
    for a in range(d):
        ex = np.zeros(d, dtype=complex)
        ex[a] = h
        ey = np.zeros(d, dtype=complex)
        ey[a] = 1j * h
        fx = (np.asarray(f(z + ex)) - np.asarray(f(z - ex))) / (2 * h)
        fy = (np.asarray(f(z + ey)) - np.asarray(f(z - ey))) / (2 * h)
        _check_finite(fx, "map")
        _check_finite(fy, "map")
        dz[:, a] = 0.5 * (fx - 1j * fy)
        dzb[:, a] = 0.5 * (fx + 1j * fy)
    return WirtingerJacobian(d_z=dz, d_zbar=dzb, step=h)


def batch_wirtinger_jacobian(
    f_batch: Map, zs: np.ndarray, step: float | None = None
) -> tuple[np.ndarray, np.ndarray, float]:
    """Wirtinger Jacobians at m points in one stacked evaluation.

    ``f_batch`` must map an (m, d) batch to an (m, n) batch.  Returns
    (d_z, d_zbar) of shape (m, n, d) plus the shared step.  One call costs a
    single f_batch evaluation on m*4d points.
    """
    zs = np.atleast_2d(np.asarray(zs, dtype=complex))
    m, d = zs.shape
    h = default_step(zs) if step is None else float(step)
    offsets = np.zeros((d, 4, d), dtype=complex)
    idx = np.arange(d)
    offsets[idx, 0, idx] = h
    offsets[idx, 1, idx] = -h
    offsets[idx, 2, idx] = 1j * h
    offsets[idx, 3, idx] = -1j * h
    pts = (zs[:, None, None, :] + offsets[None, :, :, :]).reshape(m * d * 4, d)
    vals = np.asarray(f_batch(pts))
    _check_finite(vals, "batch map")
    n = vals.shape[-1]
    vals = vals.reshape(m, d, 4, n)
    fx = (vals[:, :, 0] - vals[:, :, 1]) / (2 * h)  # (m, d, n)
    fy = (vals[:, :, 2] - vals[:, :, 3]) / (2 * h)
    d_z = 0.5 * (fx - 1j * fy)
    d_zbar = 0.5 * (fx + 1j * fy)
    return d_z.transpose(0, 2, 1), d_zbar.transpose(0, 2, 1), h


def wirtinger_gradient(f: Map, z: np.ndarray, step: float | None = None) -> np.ndarray:
    """d_z gradient of a scalar map; for real-valued f, d_zbar is its conjugate."""
    jac = wirtinger_jacobian(lambda w: np.atleast_1d(f(w)), z, step)
    return jac.d_z[0]


def _dzbar_scalar(f: Map, b: int, h: float) -> Map:
    def g(w: np.ndarray) -> np.ndarray:
        d = w.size
        ex = np.zeros(d, dtype=complex)
        ex[b] = h
        ey = np.zeros(d, dtype=complex)
        ey[b] = 1j * h
        fx = (np.asarray(f(w + ex)) - np.asarray(f(w - ex))) / (2 * h)
        fy = (np.asarray(f(w + ey)) - np.asarray(f(w - ey))) / (2 * h)
        return 0.5 * (fx + 1j * fy)

    return g


def mixed_hessian_scalar(
    K: Map, z: np.ndarray, step: float | None = None, symmetrize: bool = True
) -> np.ndarray:
    """Matrix of d^2 K / dz^a dzbar^b for a real scalar potential K.

    Nested central differences; FD noise breaks exact Hermitian symmetry, so
    the result is projected with (H + H^dagger)/2 unless ``symmetrize=False``
    (kept for the asymmetry diagnostic).
    """
    z = np.asarray(z, dtype=complex)
    h = default_step(z) if step is None else float(step)
    d = z.size
    H = np.empty((d, d), dtype=complex)
    for b in range(d):
        g = _dzbar_scalar(K, b, h)
        for a in range(d):
            ex = np.zeros(d, dtype=complex)
            ex[a] = h
            ey = np.zeros(d, dtype=complex)
            ey[a] = 1j * h
            gx = (g(z + ex) - g(z - ex)) / (2 * h)
            gy = (g(z + ey) - g(z - ey)) / (2 * h)
            H[a, b] = 0.5 * (gx - 1j * gy)
    _check_finite(H, "potential")
    return hermitian_part(H) if symmetrize else H


def mixed_second_component(
    f: Map, z: np.ndarray, a: int, b: int, step: float | None = None
) -> np.ndarray:
    """Vector of d^2 f_k / dz^a dzbar^b across output components k."""
    z = np.asarray(z, dtype=complex)
    h = default_step(z) if step is None else float(step)
    d = z.size

    def g(w: np.ndarray) -> np.ndarray:
        ex = np.zeros(d, dtype=complex)
        ex[b] = h
        ey = np.zeros(d, dtype=complex)
        ey[b] = 1j * h
        fx = (np.asarray(f(w + ex)) - np.asarray(f(w - ex))) / (2 * h)
        fy = (np.asarray(f(w + ey)) - np.asarray(f(w - ey))) / (2 * h)
        return 0.5 * (fx + 1j * fy)

    ex = np.zeros(d, dtype=complex)
    ex[a] = h
    ey = np.zeros(d, dtype=complex)
    ey[a] = 1j * h
    gx = (g(z + ex) - g(z - ex)) / (2 * h)
    gy = (g(z + ey) - g(z - ey)) / (2 * h)
    out = 0.5 * (gx - 1j * gy)
    _check_finite(out, "map")
    return out


def pluriharmonic_residual(
    f: Map,
    z: np.ndarray,
    step: float | None = None,
    max_pairs: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """max |d^2 f_k / dz^a dzbar^b| over (a, b, k) - a diagnostic, not an assertion.

    All d^2 index pairs are taken when affordable; otherwise ``max_pairs``
    pairs are sampled with ``rng``.
    """
    z = np.asarray(z, dtype=complex)
    d = z.size
    pairs = [(a, b) for a in range(d) for b in range(d)]
    if max_pairs is not None and len(pairs) > max_pairs:
        if rng is None:
            rng = np.random.default_rng(0)
        keep = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[int(i)] for i in keep]
    worst = 0.0
    for a, b in pairs:
        vals = mixed_second_component(f, z, a, b, step)
        worst = max(worst, float(np.max(np.abs(vals))))
    return worst
