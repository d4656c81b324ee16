"""Closed-form validation oracles on concentric sphere models.

EEG: Legendre-series surface potential of a current dipole inside a
multilayer isotropic sphere. Per degree n the radial two-point problem is
solved by forward recursion of scaled per-shell coefficients, which keeps
every intermediate quantity O((r_out/r_in)^n) and avoids overflow for the
eccentricities and truncation orders used here.

MEG: the closed-form total magnetic field outside a spherically symmetric
conductor. It depends on the dipole and the sphere center only, not on
the conductivity profile.

Units: mm, S/m, nA*mm. Potentials come out in microvolts and magnetic
fields in femtotesla (mu0 / 4 pi = 100 exactly in this system).

Error metrics: rdm(u, v) = || u/||u|| - v/||v|| ||_2 in [0, 2] and
mag(u, v) = ||u|| / ||v||. EEG comparisons are reference-free; use
``compare_montage`` to subtract montage means before applying the metrics.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError

MU0_OVER_4PI = 100.0  # fT * mm^2 / (nA * mm)

CONVERGENCE_RTOL = 1e-10


@dataclass
class SphereModel:
    """Concentric isotropic shells: radii ascending (mm), sigma per shell (S/m)."""
    radii: np.ndarray
    conductivities: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.conductivities = np.asarray(self.conductivities, dtype=float)
        self.center = np.asarray(self.center, dtype=float)
        if self.radii.ndim != 1 or len(self.radii) == 0:
            raise ConfigError("sphere model needs at least one shell")
        if (np.diff(self.radii) <= 0).any() or self.radii[0] <= 0:
            raise ConfigError("shell radii must be positive and ascending")
        if self.conductivities.shape != self.radii.shape:
            raise ConfigError("need one conductivity per shell")
        if (self.conductivities <= 0).any():
            raise ConfigError("shell conductivities must be positive")

    @property
    def outer_radius(self):
        return float(self.radii[-1])


def _surface_gain(model, b, n_terms):
    """Per-degree outer-surface values g_n for the unit singular source.

    g_n is the value at the outer radius of the radial solution whose
    singular part in the innermost shell is b^(n-1) / r^(n+1), with
    interface continuity of value and sigma-flux and a zero Neumann
    condition at the outer surface. Per degree the small banded system is
    solved directly in per-shell scaled variables ((r/r_out)^n and
    (r_in/r)^(n+1) stay within [0, 1] on their shell), so no intermediate
    quantity grows with n and any truncation depth is usable.
    """
    n = np.arange(1, n_terms + 1, dtype=float)
    radii = model.radii
    sig = model.conductivities
    r1 = radii[0]
    s_count = len(radii)
    m = 2 * s_count - 1  # unknowns: c1, then (a_j, b_j) per outer shell
    mat = np.zeros((n_terms, m, m))
    rhs = np.zeros((n_terms, m))
    # Singular part at r1, written as (b/r1)^(n-1) / r1^2 so b = 0 cleanly
    # leaves only n = 1 (0^0 = 1).
    sV = (b / r1) ** (n - 1) / r1**2
    sDer = -(n + 1) * sV / r1
    if s_count == 1:
        # Only the outer Neumann row: sigma (c1 n / r1 + s'(r1)) = 0.
        gain = sV - sDer * r1 / n
        return gain
    # Value rows are plain continuity; flux rows are scaled by r_i so all
    # entries stay O(n).
    for i in range(1, s_count):
        ri = radii[i - 1]
        rj = radii[i]
        rho = ri / rj
        row_v, row_f = 2 * (i - 1), 2 * (i - 1) + 1
        ca, cb = 2 * i - 1, 2 * i  # columns of (a_{i+1}, b_{i+1})
        if i == 1:
            mat[:, row_v, 0] = 1.0
            mat[:, row_f, 0] = sig[0] * n
            rhs[:, row_v] = -sV
            rhs[:, row_f] = -sig[0] * sDer * ri
        else:
            pa, pb = 2 * i - 3, 2 * i - 2  # (a_i, b_i) of the inner shell
            rho_in = radii[i - 2] / ri
            mat[:, row_v, pa] = 1.0
            mat[:, row_v, pb] = rho_in ** (n + 1)
            mat[:, row_f, pa] = sig[i - 1] * n
            mat[:, row_f, pb] = -sig[i - 1] * (n + 1) * rho_in ** (n + 1)
        mat[:, row_v, ca] = -(rho**n)
        mat[:, row_v, cb] = -1.0
        mat[:, row_f, ca] = -sig[i] * n * rho**n
        mat[:, row_f, cb] = sig[i] * (n + 1)
    # Outer Neumann at r_S for shell S.
    rho_last = radii[-2] / radii[-1]
    mat[:, -1, -2] = n
    mat[:, -1, -1] = -(n + 1) * rho_last ** (n + 1)
    coeff = np.linalg.solve(mat, rhs[..., None])[..., 0]
    return coeff[:, -2] + coeff[:, -1] * rho_last ** (n + 1)


def _legendre_terms(x, n_terms):
    """P_n(x) and P_n'(x) for n = 1..n_terms, x of shape (N,)."""
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    p = x.copy()
    d_prev = np.zeros_like(x)
    d = np.ones_like(x)
    ps, ds = [p.copy()], [d.copy()]
    for k in range(1, n_terms):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        d_next = d_prev + (2 * k + 1) * p
        p_prev, p = p, p_next
        d_prev, d = d, d_next
        ps.append(p.copy())
        ds.append(d.copy())
    return np.stack(ps), np.stack(ds)


def sphere_eeg(model, dipole_position, dipole_moment, electrodes, n_terms=80,
               strict=False):
    """Surface potential of a dipole inside a multilayer sphere.

    Parameters
    ----------
    model : SphereModel
    dipole_position : (3,) mm, strictly inside the innermost shell
    dipole_moment : (3,) nA*mm
    electrodes : (N, 3) points on the outer surface (within 1e-6 * R)
    n_terms : series truncation order L
    strict : raise instead of warn when the truncated tail is not
        negligible (last term above 1e-10 of the partial sum)

    Returns
    -------
    (N,) potentials in microvolts, zero-mean over the full sphere (the
    n = 0 term is absent); montage comparisons should still subtract
    montage means from both sides.
    """
    electrodes = np.atleast_2d(np.asarray(electrodes, dtype=float))
    x0 = np.asarray(dipole_position, dtype=float) - model.center
    m = np.asarray(dipole_moment, dtype=float)
    b = float(np.linalg.norm(x0))
    r1, rs = model.radii[0], model.outer_radius
    if b >= r1:
        raise ConfigError(
            "dipole at radius %.3f mm is not strictly inside the innermost "
            "shell (radius %.3f mm)" % (b, r1))
    erad = np.linalg.norm(electrodes - model.center, axis=1)
    off = np.abs(erad - rs)
    if (off > 1e-6 * rs).any():
        raise ConfigError(
            "electrodes must lie on the outer surface within 1e-6 * R; "
            "worst offset %.3e mm" % off.max())
    if np.linalg.norm(m) == 0.0:
        return np.zeros(len(electrodes))
    if b > 1e-12 * r1:
        ez = x0 / b
    else:
        b = 0.0
        ez = m / np.linalg.norm(m)
    m_r = float(m @ ez)
    mt_vec = m - m_r * ez
    m_t = float(np.linalg.norm(mt_vec))
    et = mt_vec / m_t if m_t > 0 else np.zeros(3)

    eh = (electrodes - model.center) / erad[:, None]
    cos_t = np.clip(eh @ ez, -1.0, 1.0)
    # sin(theta) * cos(phi) with phi measured from the tangential moment.
    sincos = eh @ et

    g = _surface_gain(model, b, n_terms)  # (L,)
    p, dp = _legendre_terms(cos_t, n_terms)  # (L, N)
    n = np.arange(1, n_terms + 1, dtype=float)[:, None]
    terms = g[:, None] * (m_r * n * p + m_t * dp * sincos[None, :])
    u = terms.sum(axis=0) / (4.0 * np.pi * model.conductivities[0])
    tail = np.abs(terms[-1]).max() / (4.0 * np.pi * model.conductivities[0])
    scale = max(np.abs(u).max(), 1e-300)
    if tail > CONVERGENCE_RTOL * scale:
        msg = ("sphere series not converged at L=%d: last term %.2e of the "
               "partial sum; increase n_terms" % (n_terms, tail / scale))
        if strict:
            raise NumericalError(msg)
        warnings.warn(msg)
    return u


def sphere_eeg_transfer(model, dipole_position, electrodes, n_terms=80, **kw):
    """Lead field rows: potentials for unit moments along x, y, z -> (N, 3)."""
    cols = [sphere_eeg(model, dipole_position, m, electrodes, n_terms, **kw)
            for m in np.eye(3)]
    return np.stack(cols, axis=1)


def sarvas_meg(model, dipole_position, dipole_moment, positions, orientations):
    """Total magnetic flux density projected on coil orientations (fT).

    Valid outside any spherically symmetric conductor centered at
    model.center; the conductivity profile drops out. Raises when a coil
    is not strictly outside the outer radius.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    orientations = np.atleast_2d(np.asarray(orientations, dtype=float))
    r0 = np.asarray(dipole_position, dtype=float) - model.center
    q = np.asarray(dipole_moment, dtype=float)
    y = positions - model.center
    ny = np.linalg.norm(y, axis=1)
    if (ny <= model.outer_radius).any():
        raise ConfigError("coils must be strictly outside the outer radius")
    a = y - r0
    na = np.linalg.norm(a, axis=1)
    f = na * (ny * na + ny**2 - y @ r0)
    qxr = np.cross(q, r0)
    ady = np.einsum("cx,cx->c", a, y)
    grad_f = ((na**2 / ny + ady / na + 2 * na + 2 * ny)[:, None] * y
              - (na + 2 * ny + ady / na)[:, None] * r0)
    b_field = (MU0_OVER_4PI / f[:, None] ** 2) * (
        f[:, None] * qxr[None, :] - (y @ qxr)[:, None] * grad_f)
    o = orientations / np.linalg.norm(orientations, axis=1, keepdims=True)
    return np.einsum("cx,cx->c", b_field, o)


def rdm(u, v):
    """Relative difference measure of two sensor vectors, in [0, 2]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise NumericalError("rdm undefined for zero-norm inputs")
    return float(np.linalg.norm(u / nu - v / nv))


def mag(u, v):
    """Magnitude ratio ||u|| / ||v||."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise NumericalError("mag undefined for zero-norm reference")
    return float(np.linalg.norm(u) / nv)


def compare_montage(u, v):
    """Reference-free (rdm, mag) after subtracting montage means."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    uc = u - u.mean()
    vc = v - v.mean()
    return rdm(uc, vc), mag(uc, vc)
