"""Closed-form two-band Hopf Hamiltonian.

Everything in this module is a pure function of the momentum k (radians,
periodic in 2*pi per axis) and the model parameters.  The Hamiltonian is
H_k = omega * u(k) . sigma with dimensionless coefficients

    ux = 2 [ sin kx sin kz + C(k) sin ky ]
    uy = 2 [ C(k) sin kx  -  sin ky sin kz ]
    uz = sin^2 kx + sin^2 ky - sin^2 kz - C(k)^2
    C(k) = cos kx + cos ky + cos kz + h

The module also provides the factorisation of k -> u(k)/|u(k)| through the
3-sphere (map ``eta`` then the classic fibration ``hopf_f``) together with
stereographic charts of S3, which is how preimage loops get embedded in R3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEta, GaplessPoint, PoleSingular

GAP_TOL = 1e-12
POLE_DELTA = 1e-9

TRANSITION_VALUES = (-3.0, -1.0, 1.0, 3.0)


@dataclass(frozen=True)
class HopfParams:
    """Model parameters: dimensionless h and the energy unit omega.

    omega scales eigenvalues only; no topological quantity depends on it.
    """

    h: float
    omega: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.h):
            raise ValueError(f"h must be finite, got {self.h}")
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"omega must be positive and finite, got {self.omega}")


def u_of_k(k, params):
    """Coefficient vector u(k) of the Hamiltonian.

    Parameters
    ----------
    k : array_like, shape (..., 3)
        Momenta in radians.
    params : HopfParams

    Returns
    -------
    ndarray, shape (..., 3)
    """
    k = np.asarray(k, dtype=float)
    sx, sy, sz = np.sin(k[..., 0]), np.sin(k[..., 1]), np.sin(k[..., 2])
    c = np.cos(k[..., 0]) + np.cos(k[..., 1]) + np.cos(k[..., 2]) + params.h
    u = np.empty(k.shape, dtype=float)
    u[..., 0] = 2.0 * (sx * sz + c * sy)
    u[..., 1] = 2.0 * (c * sx - sy * sz)
    u[..., 2] = sx * sx + sy * sy - sz * sz - c * c
    return u


def energy_gap(k, params):
    """Band gap 2 * omega * |u(k)|."""
    return 2.0 * params.omega * np.linalg.norm(u_of_k(k, params), axis=-1)


def _check_gapped(norms, k):
    if np.any(norms < GAP_TOL):
        idx = np.unravel_index(int(np.argmin(norms)), norms.shape)
        bad_k = np.asarray(k, dtype=float)[idx] if np.ndim(k) > 1 else np.asarray(k)
        raise GaplessPoint(
            f"|u(k)| < {GAP_TOL:g} at k={np.round(bad_k, 12).tolist()}; "
            "parameter h sits at (or too close to) a phase transition",
            k=bad_k,
        )


def ground_state(k, params):
    """Normalized lower-band eigenvector of u(k).sigma, fixed gauge.

    The gauge makes the larger-magnitude amplitude real positive (ties toward
    the spin-up amplitude), so repeated calls are bit-reproducible.

    Raises
    ------
    GaplessPoint
        If |u(k)| < 1e-12 anywhere in the batch.
    """
    u = u_of_k(k, params)
    n = np.linalg.norm(u, axis=-1)
    _check_gapped(n, k)
    ux, uy, uz = u[..., 0], u[..., 1], u[..., 2]
    psi = np.empty(u.shape[:-1] + (2,), dtype=complex)
    # Lower-band eigenvector, branch chosen away from its vanishing pole:
    #   uz <= 0:  (n - uz, -(ux + i uy))     uz > 0:  (-(ux - i uy), n + uz)
    # Either branch already has its dominant amplitude real positive, which is
    # exactly the documented gauge.
    lower = uz <= 0
    psi[..., 0] = np.where(lower, n - uz, -(ux - 1j * uy))
    psi[..., 1] = np.where(lower, -(ux + 1j * uy), n + uz)
    psi /= np.linalg.norm(psi, axis=-1, keepdims=True)
    return psi


def bloch_ground(k, params):
    """Ground-state Bloch vector S(k) = -u(k)/|u(k)| (lower-band convention)."""
    u = u_of_k(k, params)
    n = np.linalg.norm(u, axis=-1)
    _check_gapped(n, k)
    return -u / n[..., None]


def eta_of_k(k, params):
    """Unnormalized components (eta_up, eta_down) of the torus -> S3 map.

    eta_up = sin kx - i sin ky,  eta_down = sin kz - i C(k).
    """
    k = np.asarray(k, dtype=float)
    c = np.cos(k[..., 0]) + np.cos(k[..., 1]) + np.cos(k[..., 2]) + params.h
    eta_up = np.sin(k[..., 0]) - 1j * np.sin(k[..., 1])
    eta_down = np.sin(k[..., 2]) - 1j * c
    return eta_up, eta_down


def map_g(k, params):
    """Torus point -> unit 4-vector on S3.

    Components are (Re eta_up, Im eta_up, Re eta_down, Im eta_down) after
    normalization.

    Raises
    ------
    DegenerateEta
        If both complex components vanish (equivalently |u(k)| = 0 there).
    """
    eta_up, eta_down = eta_of_k(k, params)
    eta = np.stack(
        [eta_up.real, eta_up.imag, eta_down.real, eta_down.imag], axis=-1
    )
    norm = np.linalg.norm(eta, axis=-1)
    if np.any(norm < GAP_TOL):
        raise DegenerateEta(
            "both components of the S3 map vanish (gap closes at this momentum)"
        )
    return eta / norm[..., None]


def hopf_f(eta_up, eta_down):
    """Hopf map S3 -> S2: (eta_up, eta_down) -> u.

    ux + i uy = 2 eta_up conj(eta_down),  uz = |eta_up|^2 - |eta_down|^2.
    For unit-norm input the image lies on the unit sphere; for the raw
    (unnormalized) output of ``eta_of_k`` the image is exactly u(k).
    """
    eta_up = np.asarray(eta_up, dtype=complex)
    eta_down = np.asarray(eta_down, dtype=complex)
    w = 2.0 * eta_up * np.conj(eta_down)
    u = np.stack(
        [w.real, w.imag, np.abs(eta_up) ** 2 - np.abs(eta_down) ** 2], axis=-1
    )
    return u


def stereographic_embed(eta, chart="plus", delta_pole=POLE_DELTA):
    """Stereographic chart of S3 onto R3.

    chart "plus" maps (e1, e2, e3, e4) -> (e1, e2, e3) / (1 + e4) and is
    singular at e4 = -1; chart "minus" divides by (1 - e4) with the third
    coordinate negated (so both charts induce the same orientation) and is
    singular at e4 = +1.

    Raises
    ------
    PoleSingular
        If any point comes within delta_pole of the active chart's pole.
    """
    eta = np.asarray(eta, dtype=float)
    e4 = eta[..., 3]
    if chart == "plus":
        denom = 1.0 + e4
        out = eta[..., :3].copy()
    elif chart == "minus":
        denom = 1.0 - e4
        out = eta[..., :3].copy()
        out[..., 2] = -out[..., 2]
    else:
        raise ValueError(f"unknown chart {chart!r}; expected 'plus' or 'minus'")
    if np.any(denom <= delta_pole):
        raise PoleSingular(
            f"point within {delta_pole:g} of the {chart} chart pole; "
            "re-project from the antipodal chart"
        )
    return out / denom[..., None]
