"""Command-line frontend.

One binary, subcommands for the driver operations. Every numerical
subcommand takes `--config FILE` (INI-style tree) plus any number of
`--set key=value` overrides applied on top. Exit codes: 0 success, 2 bad
configuration or input files, 3 numerical failure.
"""

import argparse
import sys

import numpy as np

from . import io as mio
from .analytic import SphereModel, compare_montage, sphere_eeg
from .config import Config
from .driver import create_driver
from .errors import ConfigError, NumericalError
from .meg import CoilArray
from .mesh import load_msh
from .scan import SourceSpace
from .transfer import TransferMatrix, load_transfer, read_transfer_header, \
    save_transfer


def _load_config(args):
    cfg = Config.from_file(args.config) if args.config else Config()
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError("--set expects key=value, got %r" % item)
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    return cfg


def _add_config_args(p):
    p.add_argument("--config", help="INI-style configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")


def cmd_solve_eeg(args):
    driver = create_driver(_load_config(args))
    dipoles = mio.load_dipoles(args.dipoles)
    electrodes = mio.load_electrodes(args.electrodes)
    potentials = driver.solve_eeg(dipoles, electrodes)
    mio.save_matrix_text(potentials, args.output)
    print("wrote %d x %d potentials to %s"
          % (potentials.shape[0], potentials.shape[1], args.output))
    return 0


def cmd_transfer(args):
    if args.action == "info":
        if not args.file:
            raise ConfigError("transfer info needs a file argument")
        info = read_transfer_header(args.file)
        print("modality:      %s" % info["modality"])
        print("sensors:       %d" % info["sensors"])
        print("dofs:          %d" % info["dofs"])
        print("tolerance:     %g" % info["tolerance"])
        print("mesh checksum: %s" % info["mesh_checksum"])
        return 0
    driver = create_driver(_load_config(args))
    if not args.output:
        raise ConfigError("transfer computation needs --output")
    if args.modality == "eeg":
        if not args.electrodes:
            raise ConfigError("EEG transfer needs --electrodes")
        sensors = mio.load_electrodes(args.electrodes)
    else:
        if not args.coils:
            raise ConfigError("MEG transfer needs --coils")
        sensors = CoilArray(*mio.load_coils(args.coils))
    transfer = driver.compute_transfer(args.modality, sensors,
                                       path=args.output)
    print("wrote %s transfer (%d sensors, %d dofs) to %s"
          % (transfer.modality, transfer.n_sensors, transfer.n_dofs,
             args.output))
    return 0


def cmd_apply_transfer(args):
    driver = create_driver(_load_config(args))
    transfer = driver.load_transfer(args.transfer)
    dipoles = mio.load_dipoles(args.dipoles)
    electrodes = coils = None
    if transfer.modality == "eeg":
        if args.electrodes:
            electrodes = mio.load_electrodes(args.electrodes)
    else:
        if not args.coils:
            raise ConfigError("applying an MEG transfer needs --coils")
        coils = CoilArray(*mio.load_coils(args.coils))
    rows = driver.apply_transfer(transfer, dipoles, electrodes=electrodes,
                                 coils=coils)
    # lead field convention: sensors down the rows, one column per dipole
    lead = np.ascontiguousarray(rows.T)
    if args.binary:
        container = TransferMatrix(lead, transfer.modality,
                                   transfer.mesh_checksum,
                                   transfer.tolerance)
        save_transfer(container, args.output)
    else:
        mio.save_matrix_text(lead, args.output)
    print("wrote %d x %d lead field to %s"
          % (lead.shape[0], lead.shape[1], args.output))
    return 0


def cmd_scan(args):
    driver = create_driver(_load_config(args))
    transfer = driver.load_transfer(args.transfer)
    positions, orientations = mio.load_source_space(args.source_space)
    space = SourceSpace(positions, orientations)
    measurement = mio.load_measurement(args.measurement)
    electrodes = mio.load_electrodes(args.electrodes) if args.electrodes \
        else None
    result = driver.scan(transfer, space, measurement,
                         electrodes=electrodes)
    print("# index x y z strength gof")
    for i in range(space.n):
        if i in result.skipped:
            print("%d %g %g %g skipped skipped"
                  % (i, *space.positions[i]))
            continue
        print("%d %g %g %g %.8g %.8g"
              % (i, *space.positions[i], result.strengths[i],
                 result.gofs[i]))
    print("best: index %d strength %.8g gof %.8g"
          % (result.best_index, result.best_strength, result.best_gof))
    if result.skipped:
        print("skipped %d positions outside the mesh: %s"
              % (len(result.skipped), result.skipped))
    return 0


def cmd_validate_sphere(args):
    driver = create_driver(_load_config(args))
    radii, sigmas, center = mio.load_sphere_model(args.sphere)
    model = SphereModel(radii, sigmas, center=center)
    dipoles = mio.load_dipoles(args.dipoles)
    electrodes = mio.load_electrodes(args.electrodes)
    numeric = driver.solve_eeg(dipoles, electrodes)
    print("# dipole rdm mag")
    worst = 0.0
    for i, dipole in enumerate(dipoles):
        exact = sphere_eeg(model, dipole.position, dipole.moment,
                           electrodes)
        r, m = compare_montage(numeric[i], exact)
        worst = max(worst, r)
        print("%d %.6f %.6f" % (i, r, m))
    print("worst rdm: %.6f" % worst)
    return 0


def cmd_mesh_info(args):
    mesh = load_msh(args.mesh)
    labels, counts = np.unique(mesh.labels, return_counts=True)
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    print("kind:           %s" % mesh.kind)
    print("vertices:       %d" % mesh.n_vertices)
    print("elements:       %d" % mesh.n_elements)
    print("boundary faces: %d" % len(mesh.boundary_faces))
    print("bounding box:   [%g, %g] x [%g, %g] x [%g, %g]"
          % (lo[0], hi[0], lo[1], hi[1], lo[2], hi[2]))
    for lab, cnt in zip(labels, counts):
        print("label %-6d %d elements" % (lab, cnt))
    print("checksum:       %s" % mesh.checksum())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="meegfem",
        description="FEM forward modeling of EEG and MEG")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-eeg", help="direct EEG forward solves")
    _add_config_args(p)
    p.add_argument("--dipoles", required=True)
    p.add_argument("--electrodes", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_solve_eeg)

    p = sub.add_parser("transfer",
                       help="compute a transfer matrix, or `transfer info "
                            "FILE` to inspect one")
    p.add_argument("action", nargs="?", choices=["info"],
                   help="`info` prints a transfer file header")
    p.add_argument("file", nargs="?", help="transfer file for `info`")
    _add_config_args(p)
    p.add_argument("--modality", choices=["eeg", "meg"], default="eeg")
    p.add_argument("--electrodes")
    p.add_argument("--coils")
    p.add_argument("--output")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("apply-transfer",
                       help="lead field from a stored transfer matrix")
    _add_config_args(p)
    p.add_argument("--transfer", required=True)
    p.add_argument("--dipoles", required=True)
    p.add_argument("--electrodes")
    p.add_argument("--coils")
    p.add_argument("--output", required=True)
    p.add_argument("--binary", action="store_true",
                   help="write the binary container instead of text")
    p.set_defaults(func=cmd_apply_transfer)

    p = sub.add_parser("scan", help="single-dipole scan over a source space")
    _add_config_args(p)
    p.add_argument("--transfer", required=True)
    p.add_argument("--source-space", required=True)
    p.add_argument("--measurement", required=True)
    p.add_argument("--electrodes")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("validate-sphere",
                       help="compare FEM potentials against the sphere "
                            "series oracle")
    _add_config_args(p)
    p.add_argument("--sphere", required=True,
                   help="shell description file: `radius sigma` per line")
    p.add_argument("--dipoles", required=True)
    p.add_argument("--electrodes", required=True)
    p.set_defaults(func=cmd_validate_sphere)

    p = sub.add_parser("mesh-info", help="print mesh statistics")
    p.add_argument("mesh")
    p.set_defaults(func=cmd_mesh_info)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except NumericalError as exc:
        print("numerical error: %s" % exc, file=sys.stderr)
        return 3
    except OSError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
