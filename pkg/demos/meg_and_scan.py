"""
Magnetometers and dipole scanning
=================================

Two shorter stories. First the MEG forward solution on a layered
sphere: the secondary (volume-current) field from the FEM solution
plus the primary field of the dipole itself, checked against the
closed-form solution for a spherical conductor, where radial
magnetometers see nothing from radial sources. Then the inverse
direction: a goodness-of-fit scan over a candidate grid recovers
position, orientation and strength of a simulated source.

    python3 demos/meg_and_scan.py
"""

import numpy as np

from meegfem import (SourceSpace, SphereModel, VolumeConductor,
                     apply_meg_transfer, apply_transfer,
                     assemble_stiffness, bind, compute_meg_transfer,
                     compute_eeg_transfer, dipole_scan, rdm, sarvas_meg)
from meegfem.geometry import (fibonacci_sphere_points,
                              layered_sphere_tet_mesh, tangent_basis)
from meegfem.locator import ElementLocator
from meegfem.meg import CoilArray
from meegfem.sources import Dipole
from meegfem.transfer import build_restriction

RADII = (80.0, 86.0, 92.0)
SIGMAS = (0.33, 0.0125, 0.43)

mesh = layered_sphere_tet_mesh(
    [(RADII[0], 1, [19, 35, 49, 61, 71, 80]), (RADII[1], 2, 2),
     (RADII[2], 3, 2)],
    frequency=8)
vc = VolumeConductor(mesh, {label: sigma * np.eye(3)
                            for label, sigma in zip((1, 2, 3), SIGMAS)})
system = assemble_stiffness(vc)
locator = ElementLocator(mesh)
print("mesh: %d tets" % mesh.n_elements)

# ----------------------------------------------------------------- meg
# 30 radial magnetometers on a 120 mm helmet sphere. Fields in fT for
# moments in nA mm.
positions = fibonacci_sphere_points(30, 120.0)
coils = CoilArray(positions, positions / 120.0)
meg_transfer = compute_meg_transfer(system, vc, coils, tol=1e-8)

tangential = Dipole((0.0, 0.0, 40.0), (20.0, 0.0, 0.0))
radial = Dipole((0.0, 0.0, 40.0), (0.0, 0.0, 20.0))

fields = {}
for name, dipole in (("tangential", tangential), ("radial", radial)):
    out = bind("venant", vc, locator, dipole).assemble_rhs()
    fields[name] = apply_meg_transfer(meg_transfer, out, coils,
                                      dipole, include_primary=True)

silence = (np.linalg.norm(fields["radial"])
           / np.linalg.norm(fields["tangential"]))
model = SphereModel(np.array(RADII), np.array(SIGMAS))
exact = sarvas_meg(model, tangential.position, tangential.moment,
                   positions, coils.orientations)
print("radial source leakage: %.2e of the tangential field norm"
      % silence)
print("tangential field vs closed form: rdm %.4f" % rdm(fields["tangential"], exact))

# ---------------------------------------------------------------- scan
# Candidate grid at fixed orientations; the scan fits the optimal
# non-negative strength per candidate and ranks by goodness of fit.
electrodes = fibonacci_sphere_points(74, RADII[2])
arr, restrict = build_restriction(vc, locator, electrodes)
eeg_transfer = compute_eeg_transfer(system, restrict, tol=1e-8)

rng = np.random.default_rng(11)
grid_dirs = rng.standard_normal((25, 3))
grid_dirs /= np.linalg.norm(grid_dirs, axis=1, keepdims=True)
grid_pos = grid_dirs * rng.uniform(15, 60, 25)[:, None]
normals = np.array([tangent_basis(d)[0] for d in grid_dirs])
space = SourceSpace(grid_pos, normals)

truth = 17
strength = 3.2
lead = apply_transfer(
    eeg_transfer,
    bind("venant", vc, locator,
         Dipole(grid_pos[truth], normals[truth])).assemble_rhs())
measurement = strength * lead

result = dipole_scan(eeg_transfer, vc, locator, space, "venant",
                     measurement)
print("scan: best index %d (truth %d), strength %.4f (truth %.1f), "
      "gof %.6f" % (result.best_index, truth, result.best_strength,
                    strength, result.best_gof))
