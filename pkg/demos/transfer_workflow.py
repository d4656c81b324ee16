"""
Transfer matrices and the driver workflow
=========================================

The driver ties the pieces together the way a study pipeline would
use them: a config names the mesh and conductivity files on disk, a
transfer matrix is computed once per montage, then thousands of
dipoles are applied against it without touching the solver again.

This demo writes its inputs into a temporary directory, runs the
whole round trip in-process, and finishes by calling the command
line interface on the same files.

    python3 demos/transfer_workflow.py
"""

import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from meegfem import create_driver, read_transfer_header
from meegfem.geometry import fibonacci_sphere_points, layered_sphere_tet_mesh
from meegfem.io import save_matrix_text
from meegfem.mesh import save_msh
from meegfem.sources import Dipole

work = Path(tempfile.mkdtemp(prefix="meegfem_demo_"))
print("working directory:", work)

# ---------------------------------------------------------- input files
# A modest three-layer sphere, saved in gmsh msh 2.2 format next to a
# whitespace-separated label/conductivity table.
mesh = layered_sphere_tet_mesh(
    [(80.0, 1, [19, 35, 49, 61, 71, 80]), (86.0, 2, 2), (92.0, 3, 2)],
    frequency=8)
save_msh(mesh, work / "sphere.msh")
(work / "tensors.dat").write_text("1 0.33\n2 0.0125\n3 0.43\n")

# Electrode files are one `x y z` line each; dipole files append the
# moment for six numbers per line.
electrodes = fibonacci_sphere_points(74, 92.0)
(work / "electrodes.txt").write_text(
    "".join("%.17g %.17g %.17g\n" % tuple(p) for p in electrodes))

rng = np.random.default_rng(3)
dipoles = []
for _ in range(5):
    d = rng.standard_normal(3)
    d /= np.linalg.norm(d)
    dipoles.append(Dipole(d * rng.uniform(20, 60), rng.standard_normal(3)))
(work / "dipoles.txt").write_text(
    "".join("%g %g %g %g %g %g\n" % (tuple(dp.position) + tuple(dp.moment))
            for dp in dipoles))

# -------------------------------------------------------------- driver
# Listing-style nested mapping; the same keys flatten to the dotted
# form used by config files and --set overrides.
driver = create_driver({
    "type": "fitted",
    "solver_type": "cg",
    "element_type": "tetrahedron",
    "volume_conductor": {
        "grid.filename": str(work / "sphere.msh"),
        "tensors.filename": str(work / "tensors.dat"),
    },
    "solver": {"tolerance": 1e-8},
})
print("driver ready: %d elements, stiffness assembled %d time(s)"
      % (driver.vc.mesh.n_elements, driver.assembly_count))

# Transfer matrix: one solve per electrode (minus the reference), then
# every dipole costs a sparse dot product. Saved as a binary container
# whose header records shape, tolerance and a mesh checksum.
t0 = time.time()
transfer = driver.compute_transfer("eeg", electrodes,
                                   path=work / "eeg_transfer.bin")
print("transfer %dx%d in %.1f s (stiffness assembled %d time(s))"
      % (transfer.matrix.shape[0], transfer.matrix.shape[1],
         time.time() - t0, driver.assembly_count))

header = read_transfer_header(work / "eeg_transfer.bin")
print("container header: modality=%s sensors=%d dofs=%d tol=%g"
      % (header["modality"], header["sensors"], header["dofs"],
         header["tolerance"]))

# Apply vs direct solve. Both give electrode potentials in uV, rows
# zero-meaned; agreement is at solver tolerance, not machine epsilon.
t0 = time.time()
applied = driver.apply_transfer(transfer, dipoles, electrodes=electrodes)
t_apply = time.time() - t0
t0 = time.time()
direct = driver.solve_eeg(dipoles, electrodes)
t_direct = time.time() - t0

rel = (np.linalg.norm(applied - direct)
       / np.linalg.norm(direct))
print("apply %.3f s vs direct %.2f s, relative difference %.2e"
      % (t_apply, t_direct, rel))
save_matrix_text(applied, work / "potentials.txt")

# ------------------------------------------------------------- the CLI
# Everything above is reachable from the command line. `transfer info`
# prints the container header without loading the payload.
config = work / "demo.ini"
config.write_text(
    "type = fitted\n"
    "solver_type = cg\n"
    "element_type = tetrahedron\n"
    "\n"
    "[volume_conductor]\n"
    "grid.filename = %s\n"
    "tensors.filename = %s\n" % (work / "sphere.msh", work / "tensors.dat"))

for args in (["transfer", "info", str(work / "eeg_transfer.bin")],
             ["solve-eeg", "--config", str(config),
              "--electrodes", str(work / "electrodes.txt"),
              "--dipoles", str(work / "dipoles.txt"),
              "--output", str(work / "cli_potentials.txt")]):
    print("\n$ meegfem " + " ".join(args))
    proc = subprocess.run([sys.executable, "-m", "meegfem"] + args,
                          capture_output=True, text=True)
    print(proc.stdout.strip())
    assert proc.returncode == 0, proc.stderr

cli = np.loadtxt(work / "cli_potentials.txt")
print("\nCLI result matches in-process solve: %s"
      % np.allclose(cli, direct, rtol=1e-6, atol=1e-9))
