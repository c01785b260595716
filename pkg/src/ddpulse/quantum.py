"""Small-dimension linear algebra for piecewise-constant Hamiltonians.

All Hamiltonians here are dense ``(dim, dim)`` complex arrays with
``dim <= 4``.  Propagators are obtained from an exact eigendecomposition,
which is cheaper and more accurate than a Pade approximant at this size and
needs no step-size control.

Conventions
-----------
* The first basis vector is spin-up (``|1>`` for the three-level system).
* ``rotation_unitary(theta, phi) = exp(-i theta/2 (cos(phi) sx + sin(phi) sy))``.
* Global phases are not tracked; only populations are observable.
"""

import numpy as np

from .exceptions import InvalidInputError

HERMITIAN_ATOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


def _as_square(M, name="matrix"):
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {M.shape}")
    return M


def is_hermitian(H, atol=HERMITIAN_ATOL):
    """Entrywise check of ``H == H^dagger``, tolerance scaled by ``max(1, |H|_max)``."""
    H = _as_square(H)
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)))
    return bool(np.max(np.abs(H - H.conj().T), initial=0.0) <= atol * scale)


def is_unitary(U, atol=HERMITIAN_ATOL):
    U = _as_square(U)
    return bool(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))) <= atol)


def expm_hermitian(H, t):
    """Propagator ``exp(-i H t)`` for a time-independent Hermitian ``H``.

    Parameters
    ----------
    H : array_like, shape (dim, dim)
        Hermitian generator in angular-frequency units.
    t : float
        Duration; any finite real (negative durations invert the step).

    Returns
    -------
    ndarray
        Unitary matrix.

    Raises
    ------
    InvalidInputError
        If ``H`` is not Hermitian or ``t`` is not finite.
    """
    H = _as_square(H, "H")
    if not is_hermitian(H):
        raise InvalidInputError("expm_hermitian requires a Hermitian generator")
    t = float(t)
    if not np.isfinite(t):
        raise InvalidInputError(f"duration must be finite, got {t}")
    # symmetrize so eigh sees exactly Hermitian data
    w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def rotation_unitary(theta, phi):
    """Rotation by ``theta`` about the in-plane axis at azimuth ``phi``."""
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    return np.array(
        [
            [c, -1j * s * np.exp(-1j * phi)],
            [-1j * s * np.exp(1j * phi), c],
        ],
        dtype=complex,
    )


def conjugate_density(rho, U):
    """Von Neumann step ``rho -> U rho U^dagger``."""
    rho = _as_square(rho, "rho")
    U = _as_square(U, "U")
    if rho.shape != U.shape:
        raise InvalidInputError(
            f"dimension mismatch: rho is {rho.shape}, U is {U.shape}"
        )
    return U @ rho @ U.conj().T


def partial_trace_second(rho, dims=(2, 2)):
    """Trace out the second factor of a bipartite density matrix."""
    d1, d2 = dims
    rho = _as_square(rho, "rho")
    if rho.shape != (d1 * d2, d1 * d2):
        raise InvalidInputError(f"rho shape {rho.shape} does not match dims {dims}")
    return np.einsum("ijkj->ik", rho.reshape(d1, d2, d1, d2))


def pure_density(psi):
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())
