"""Finite-element forward modeling of EEG and MEG on volume head meshes."""

from .analytic import (MU0_OVER_4PI, SphereModel, compare_montage, mag, rdm,
                       sarvas_meg, sphere_eeg, sphere_eeg_transfer)
from .config import Config
from .driver import Driver, create_driver
from .errors import ConfigError, Error, MeshError, NumericalError
from .femsolver import Solution, StiffnessSystem, assemble_stiffness, solve
from .locator import ElementLocator, LocateResult, edge_hop, find_element
from .meg import (CoilArray, FluxRepresentation, apply_meg_transfer,
                  assemble_sensor_functional, compute_meg_transfer,
                  meg_primary, meg_secondary, project_flux)
from .mesh import (Mesh, VolumeConductor, element_measure,
                   load_conductivities, load_msh, save_msh)
from .scan import ScanResult, SourceSpace, dipole_scan, gof, optimal_strength
from .sources import (Dipole, SourceModelOutput, assemble_rhs_venant, bind,
                      post_process, u_inf)
from .transfer import (ElectrodeArray, TransferMatrix, apply_transfer,
                       build_restriction, compute_eeg_transfer,
                       load_transfer, read_transfer_header, save_transfer)

__version__ = "0.1.0"
