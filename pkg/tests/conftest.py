"""Shared fixtures: one small three-shell sphere conductor per session."""

import numpy as np
import pytest

from meegfem.analytic import SphereModel
from meegfem.femsolver import assemble_stiffness
from meegfem.geometry import fibonacci_sphere_points, layered_sphere_tet_mesh
from meegfem.locator import ElementLocator
from meegfem.mesh import VolumeConductor

# Brain / skull / scalp, mm and S/m.
RADII = (80.0, 86.0, 92.0)
SIGMAS = (0.33, 0.0125, 0.43)


def iso_tensors(sigma_by_label):
    return {lab: s * np.eye(3) for lab, s in sigma_by_label.items()}


def sphere_conductor(frequency=4, brain_rings=4, skull_rings=1, scalp_rings=1):
    shells = [(RADII[0], 1, brain_rings),
              (RADII[1], 2, skull_rings),
              (RADII[2], 3, scalp_rings)]
    mesh = layered_sphere_tet_mesh(shells, frequency=frequency)
    return VolumeConductor(mesh, iso_tensors(dict(zip((1, 2, 3), SIGMAS))))


@pytest.fixture(scope="session")
def sphere_vc():
    # frequency 4, six rings: 5120 tets. Coarse but fast; module tests that
    # need accuracy state their own tolerances against this resolution.
    return sphere_conductor()


@pytest.fixture(scope="session")
def sphere_system(sphere_vc):
    return assemble_stiffness(sphere_vc)


@pytest.fixture(scope="session")
def sphere_locator(sphere_vc):
    return ElementLocator(sphere_vc.mesh)


@pytest.fixture(scope="session")
def scalp_electrodes():
    return fibonacci_sphere_points(32, RADII[2])


@pytest.fixture(scope="session")
def sphere_model():
    return SphereModel(np.array(RADII), np.array(SIGMAS))
