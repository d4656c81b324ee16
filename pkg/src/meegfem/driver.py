"""Coarse-grained facade: build everything from a config tree, then solve.

A Driver owns the volume conductor, a lazily assembled stiffness system
(assembled at most once, however many solves and transfers follow), an
element locator, and the transfer matrices it has computed. The intended
call pattern mirrors scripting use: create once, compute a transfer
matrix, apply it to many dipoles.
"""

import numpy as np

from .config import Config
from .errors import ConfigError, NumericalError
from .femsolver import assemble_stiffness, solve
from .locator import ElementLocator
from .meg import CoilArray, apply_meg_transfer, compute_meg_transfer
from .mesh import VolumeConductor, load_conductivities, load_msh
from .scan import SourceSpace, dipole_scan
from .sources import VENANT_REFERENCE_LENGTH, VENANT_REGULARIZATION, bind, \
    post_process
from .transfer import apply_transfer, build_restriction, \
    compute_eeg_transfer, load_transfer

DEFAULT_SOURCE_MODEL = "venant"


class Driver:
    """One volume conductor, one stiffness system, many queries."""

    def __init__(self, config, vc=None):
        if not isinstance(config, Config):
            config = Config(config)
        self.config = config.validate()
        if vc is None:
            mesh = load_msh(config.require("volume_conductor.grid.filename"))
            tensors = load_conductivities(
                config.require("volume_conductor.tensors.filename"))
            vc = VolumeConductor(mesh, tensors)
        if vc.mesh.kind != config.require("element_type"):
            raise ConfigError("config says element_type = %s but the mesh "
                              "holds %ss" % (config.get("element_type"),
                                             vc.mesh.kind))
        self.vc = vc
        self.locator = ElementLocator(vc.mesh)
        self.assembly_count = 0
        self._system = None
        self._restriction_cache = None
        self.transfers = {}

    @property
    def system(self):
        if self._system is None:
            self._system = assemble_stiffness(self.vc)
            self.assembly_count += 1
        return self._system

    # per-call solver knobs fall back to the config tree
    def _solver_args(self, tol=None, workers=None):
        cfg = self.config
        return {
            "tol": tol if tol is not None else
            cfg.get_float("solver.tolerance", 1e-8),
            "workers": workers if workers is not None else
            cfg.get_int("solver.workers", 1),
            "max_iterations": cfg.get_int("solver.max_iterations"),
            "preconditioner": cfg.get("solver.preconditioner", "jacobi"),
        }

    def _source_kind(self, kind=None):
        return kind or self.config.get("source_model.type",
                                       DEFAULT_SOURCE_MODEL)

    def _bind(self, kind, dipole):
        cfg = self.config
        return bind(kind, self.vc, self.locator, dipole,
                    reference_length=cfg.get_float(
                        "source_model.reference_length",
                        VENANT_REFERENCE_LENGTH),
                    regularization=cfg.get_float(
                        "source_model.regularization",
                        VENANT_REGULARIZATION),
                    quadrature_order=cfg.get_int(
                        "source_model.quadrature_order", 2))

    def _bind_all(self, kind, dipoles):
        sources, failures = [], []
        for i, dipole in enumerate(dipoles):
            try:
                sources.append(self._bind(kind, dipole))
            except ConfigError as exc:
                failures.append("dipole %d: %s" % (i, exc))
        if failures:
            raise ConfigError("; ".join(failures))
        return sources

    def restriction(self, electrodes):
        """ElectrodeArray and sparse R, cached on the electrode set."""
        electrodes = np.atleast_2d(np.asarray(electrodes, dtype=float))
        key = electrodes.tobytes()
        if self._restriction_cache is None or \
                self._restriction_cache[0] != key:
            arr, r = build_restriction(self.vc, self.locator, electrodes)
            self._restriction_cache = (key, arr, r)
        return self._restriction_cache[1], self._restriction_cache[2]

    def solve_eeg(self, dipoles, electrodes, source_model=None, tol=None):
        """Direct path: one Poisson solve per dipole, restricted and
        centered at the electrodes. Returns a (dipoles, N) array."""
        kind = self._source_kind(source_model)
        args = self._solver_args(tol=tol)
        arr, r = self.restriction(electrodes)
        sources = self._bind_all(kind, dipoles)
        out = np.empty((len(sources), arr.n))
        for i, source in enumerate(sources):
            output = source.assemble_rhs()
            b = output.dense()
            b -= b.mean()
            sol = solve(self.system, b, tol=args["tol"],
                        max_iterations=args["max_iterations"],
                        preconditioner=args["preconditioner"])
            if not sol.converged:
                raise NumericalError(
                    "dipole %d: solver stalled at relative residual %g "
                    "after %d iterations" % (i, sol.residual,
                                             sol.iterations))
            values = r @ sol.coefficients
            values -= values.mean()
            out[i] = post_process(output, values, arr.projected)
        return out

    def compute_transfer(self, modality, sensors, path=None, tol=None,
                         workers=None):
        """EEG or MEG transfer matrix; cached on the driver and optionally
        persisted (with the mesh checksum) to ``path``."""
        args = self._solver_args(tol=tol, workers=workers)
        if modality == "eeg":
            _, r = self.restriction(sensors)
            transfer = compute_eeg_transfer(
                self.system, r, tol=args["tol"], workers=args["workers"],
                preconditioner=args["preconditioner"])
        elif modality == "meg":
            coils = sensors if isinstance(sensors, CoilArray) else \
                CoilArray(*sensors)
            transfer = compute_meg_transfer(
                self.system, self.vc, coils, tol=args["tol"],
                workers=args["workers"],
                quadrature_order=self.config.get_int(
                    "meg.quadrature_order", 2),
                preconditioner=args["preconditioner"])
        else:
            raise ConfigError("modality must be eeg or meg, got %r"
                              % modality)
        if path is not None:
            transfer.save(path)
        self.transfers[modality] = transfer
        return transfer

    def load_transfer(self, path):
        """Load a persisted transfer matrix, refusing a mesh mismatch."""
        transfer = load_transfer(path, mesh_checksum=self.system.mesh_checksum)
        self.transfers[transfer.modality] = transfer
        return transfer

    def apply_transfer(self, transfer, dipoles, electrodes=None,
                       coils=None, source_model=None):
        """Lead-field rows for many dipoles through a transfer matrix."""
        kind = self._source_kind(source_model)
        if transfer.mesh_checksum != self.system.mesh_checksum:
            raise ConfigError("transfer matrix was computed for a different "
                              "mesh")
        sources = self._bind_all(kind, dipoles)
        rows = np.empty((len(sources), transfer.n_sensors))
        for i, source in enumerate(sources):
            output = source.assemble_rhs()
            if transfer.modality == "eeg":
                arr = None
                if electrodes is not None:
                    arr, _ = self.restriction(electrodes)
                rows[i] = apply_transfer(transfer, output, arr)
            else:
                include = self.config.get_bool("meg.include_primary", True)
                rows[i] = apply_meg_transfer(
                    transfer, output, coils=coils, dipole=source.dipole,
                    include_primary=include)
        return rows

    def scan(self, transfer, space, measurement, electrodes=None,
             source_model=None, workers=None):
        """Normal-constrained dipole scan over a source space."""
        if not isinstance(space, SourceSpace):
            space = SourceSpace(*space)
        kind = self._source_kind(source_model)
        args = self._solver_args(workers=workers)
        arr = None
        if electrodes is not None:
            arr, _ = self.restriction(electrodes)
        return dipole_scan(transfer, self.vc, self.locator, space, kind,
                           measurement, electrodes=arr,
                           workers=args["workers"])


def create_driver(config, vc=None):
    """Config tree (mapping, Config, or INI path) -> ready Driver."""
    if isinstance(config, str):
        config = Config.from_file(config)
    return Driver(config, vc=vc)
