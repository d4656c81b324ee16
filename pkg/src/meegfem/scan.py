"""Normal-constrained single-dipole scanning.

Every source-space position carries a unit normal; the scan places a unit
dipole along it, predicts sensor values through a transfer matrix, and
keeps the optimal non-negative strength together with the goodness of
fit. GOF is 1 when the measurement is reproduced exactly and 0 when the
best the position can do is the zero signal.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError, NumericalError
from .locator import find_element
from .sources import Dipole, bind
from .transfer import apply_transfer

RAW_ORIENTATION_TOL = 1e-6  # text round-trips cost a few ulps


class SourceSpace:
    """Candidate dipole positions, optionally with unit normals.

    Normals are renormalized on construction; inputs deviating from unit
    length by more than 1e-6 are rejected as malformed.
    """

    def __init__(self, positions, orientations=None):
        self.positions = np.atleast_2d(np.asarray(positions, dtype=float))
        if self.positions.shape[1] != 3 or len(self.positions) == 0:
            raise ConfigError("source space needs at least one 3D position")
        if orientations is None:
            self.orientations = None
        else:
            self.orientations = np.atleast_2d(
                np.asarray(orientations, dtype=float))
            if self.orientations.shape != self.positions.shape:
                raise ConfigError("orientations must match positions")
            norms = np.linalg.norm(self.orientations, axis=1)
            if np.abs(norms - 1.0).max() > RAW_ORIENTATION_TOL:
                raise ConfigError(
                    "source-space orientations must be unit vectors")
            self.orientations = self.orientations / norms[:, None]

    @property
    def n(self):
        return len(self.positions)


class ScanResult:
    """Per-position strength/GOF arrays plus the best-fit record.

    Skipped positions (outside the mesh) hold NaN in both arrays and are
    listed in ``skipped``.
    """

    def __init__(self, strengths, gofs, skipped):
        self.strengths = np.asarray(strengths, dtype=float)
        self.gofs = np.asarray(gofs, dtype=float)
        self.skipped = list(skipped)
        valid = ~np.isnan(self.gofs)
        if not valid.any():
            raise ConfigError("no source-space position was inside the mesh")
        # first occurrence of the maximum: lower index wins ties
        self.best_index = int(np.nanargmax(self.gofs))

    @property
    def best_strength(self):
        return float(self.strengths[self.best_index])

    @property
    def best_gof(self):
        return float(self.gofs[self.best_index])


def optimal_strength(leadfield, measurement):
    """Non-negative strength minimizing ||l s - m||.

    The closed form is <l, m>/||l||^2 clamped at zero; the clamp keeps the
    solution on the positive normal direction.
    """
    l = np.asarray(leadfield, dtype=float)
    m = np.asarray(measurement, dtype=float)
    ll = float(l @ l)
    if ll == 0.0:
        raise NumericalError("optimal strength undefined for a zero "
                             "leadfield")
    return max(float(l @ m) / ll, 0.0)


def gof(leadfield, strength, measurement):
    """Goodness of fit 1 - ||l s - m||^2 / ||m||^2."""
    l = np.asarray(leadfield, dtype=float)
    m = np.asarray(measurement, dtype=float)
    mm = float(m @ m)
    if mm == 0.0:
        raise NumericalError("goodness of fit undefined for a zero "
                             "measurement")
    r = l * float(strength) - m
    return 1.0 - float(r @ r) / mm


def dipole_scan(transfer, vc, locator, space, kind, measurement,
                electrodes=None, workers=1):
    """Scan the source space against a mean-centered measurement.

    Positions that fall outside the mesh are skipped and reported in the
    result, not fatal. The best position maximizes GOF; exact ties go to
    the lower index.
    """
    if space.orientations is None:
        raise ConfigError("the normal-constrained scan needs source-space "
                          "orientations")
    m = np.asarray(measurement, dtype=float)
    if m.shape != (transfer.n_sensors,):
        raise ConfigError("measurement length %d does not match %d sensors"
                          % (m.size, transfer.n_sensors))
    m = m - m.mean()

    def scan_one(i):
        if not find_element(locator, space.positions[i]).found:
            return i, np.nan, np.nan, True
        dipole = Dipole(space.positions[i], space.orientations[i])
        source = bind(kind, vc, locator, dipole)
        values = apply_transfer(transfer, source.assemble_rhs(), electrodes)
        values = values - values.mean()
        s = optimal_strength(values, m)
        return i, s, gof(values, s, m), False

    strengths = np.empty(space.n)
    gofs = np.empty(space.n)
    skipped = []
    if workers <= 1:
        results = map(scan_one, range(space.n))
    else:
        pool = ThreadPoolExecutor(max_workers=int(workers))
        try:
            results = list(pool.map(scan_one, range(space.n)))
        finally:
            pool.shutdown()
    for i, s, g, missed in results:
        strengths[i] = s
        gofs[i] = g
        if missed:
            skipped.append(i)
    return ScanResult(strengths, gofs, skipped)
