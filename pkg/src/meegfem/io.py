"""Plain-text readers and writers for the small interchange formats.

Everything here is line-oriented: per-line records, ``#`` comments, blank
lines ignored. Errors carry the file name and line number. Matrices are
written with full float64 precision so a text round trip is lossless for
practical purposes; the binary transfer container in the transfer module
is the lossless path.
"""

import numpy as np

from .errors import ConfigError
from .sources import Dipole


def _records(path):
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _floats(path, lineno, parts):
    try:
        return [float(x) for x in parts]
    except ValueError:
        raise ConfigError("%s:%d: expected numbers, got %r"
                          % (path, lineno, " ".join(parts)))


def load_dipoles(path):
    """Read `x y z mx my mz` lines into a list of dipoles."""
    dipoles = []
    for lineno, parts in _records(path):
        vals = _floats(path, lineno, parts)
        if len(vals) != 6:
            raise ConfigError("%s:%d: a dipole line needs 6 values"
                              % (path, lineno))
        dipoles.append(Dipole(vals[:3], vals[3:]))
    if not dipoles:
        raise ConfigError("%s: no dipoles" % path)
    return dipoles


def load_electrodes(path):
    """Read `x y z` electrode positions into an (N, 3) array."""
    rows = []
    for lineno, parts in _records(path):
        vals = _floats(path, lineno, parts)
        if len(vals) != 3:
            raise ConfigError("%s:%d: an electrode line needs 3 values"
                              % (path, lineno))
        rows.append(vals)
    if not rows:
        raise ConfigError("%s: no electrodes" % path)
    return np.array(rows)


def load_coils(path):
    """Read `x y z nx ny nz` lines into (positions, orientations)."""
    pos, ori = [], []
    for lineno, parts in _records(path):
        vals = _floats(path, lineno, parts)
        if len(vals) != 6:
            raise ConfigError("%s:%d: a coil line needs 6 values"
                              % (path, lineno))
        pos.append(vals[:3])
        ori.append(vals[3:])
    if not pos:
        raise ConfigError("%s: no coils" % path)
    return np.array(pos), np.array(ori)


def load_source_space(path):
    """Read `x y z [nx ny nz]` lines into (positions, orientations).

    Orientations must be present on every line or on none; a mixed file
    is an error. Returns orientations as None when absent.
    """
    pos, ori = [], []
    for lineno, parts in _records(path):
        vals = _floats(path, lineno, parts)
        if len(vals) == 3:
            pos.append(vals)
            ori.append(None)
        elif len(vals) == 6:
            pos.append(vals[:3])
            ori.append(vals[3:])
        else:
            raise ConfigError("%s:%d: a source-space line needs 3 or 6 "
                              "values" % (path, lineno))
    if not pos:
        raise ConfigError("%s: no source positions" % path)
    have = [o is not None for o in ori]
    if any(have) and not all(have):
        raise ConfigError("%s: orientations must be given for every "
                          "position or for none" % path)
    return np.array(pos), (np.array(ori) if all(have) else None)


def load_measurement(path):
    """Read whitespace-separated sensor values (any line layout)."""
    vals = []
    for lineno, parts in _records(path):
        vals.extend(_floats(path, lineno, parts))
    if not vals:
        raise ConfigError("%s: no measurement values" % path)
    return np.array(vals)


def load_sphere_model(path):
    """Read a sphere-model description: `radius sigma` per shell.

    An optional line `center x y z` moves the model off the origin.
    Shells must appear with ascending radii.
    """
    radii, sigmas = [], []
    center = np.zeros(3)
    for lineno, parts in _records(path):
        if parts[0] == "center":
            vals = _floats(path, lineno, parts[1:])
            if len(vals) != 3:
                raise ConfigError("%s:%d: center needs 3 values"
                                  % (path, lineno))
            center = np.array(vals)
            continue
        vals = _floats(path, lineno, parts)
        if len(vals) != 2:
            raise ConfigError("%s:%d: a shell line is `radius sigma`"
                              % (path, lineno))
        radii.append(vals[0])
        sigmas.append(vals[1])
    if not radii:
        raise ConfigError("%s: no shells" % path)
    return radii, sigmas, center


def save_matrix_text(matrix, path):
    """One row per line, full float64 precision."""
    np.savetxt(path, np.atleast_2d(np.asarray(matrix, dtype=float)),
               fmt="%.17g")


def load_matrix_text(path):
    try:
        m = np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise ConfigError("%s: %s" % (path, exc))
    return m
