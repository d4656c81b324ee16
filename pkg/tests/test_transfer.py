"""Electrode restriction, transfer identities, and the binary container."""

import numpy as np
import pytest

from meegfem.errors import ConfigError, NumericalError
from meegfem.femsolver import Solution, solve
from meegfem.geometry import fibonacci_sphere_points
from meegfem.locator import ElementLocator
from meegfem.sources import Dipole, bind, post_process
from meegfem.transfer import (MAGIC, ElectrodeArray, TransferMatrix,
                              apply_transfer, build_restriction,
                              compute_eeg_transfer, load_transfer,
                              read_transfer_header, save_transfer)
from meegfem import transfer as transfer_mod


@pytest.fixture(scope="module")
def restriction(sphere_vc, sphere_locator, scalp_electrodes):
    return build_restriction(sphere_vc, sphere_locator, scalp_electrodes)


@pytest.fixture(scope="module")
def eeg_transfer(sphere_system, restriction):
    _, r = restriction
    return compute_eeg_transfer(sphere_system, r, tol=1e-10)


def test_restriction_partition_of_unity(restriction, sphere_vc):
    arr, r = restriction
    sums = np.asarray(r.sum(axis=1)).ravel()
    assert np.allclose(sums, 1.0, atol=1e-12)
    nnz = np.diff(r.indptr)
    assert nnz.max() <= 4  # one tet element per electrode
    assert r.shape == (arr.n, sphere_vc.mesh.n_vertices)


def test_restriction_projects_onto_surface(sphere_vc, sphere_locator):
    # Electrodes floated 3 mm off the scalp land on it.
    electrodes = fibonacci_sphere_points(16, 95.0)
    arr, _ = build_restriction(sphere_vc, sphere_locator, electrodes)
    rad = np.linalg.norm(arr.projected, axis=1)
    assert (rad <= 92.0 + 1e-9).all()
    dist = np.linalg.norm(arr.positions - arr.projected, axis=1)
    assert np.allclose(dist, 95.0 - rad, atol=0.5)  # radial projection


def test_restriction_reproduces_linear_fields(restriction, sphere_vc):
    # P1 interpolation is exact for affine functions, so R applied to
    # vertex samples must return the values at the projected points.
    arr, r = restriction
    a = np.array([0.3, -1.1, 0.7])
    g = sphere_vc.mesh.vertices @ a + 2.5
    assert np.allclose(r @ g, arr.projected @ a + 2.5, atol=1e-10)


def test_far_electrode_rejected_with_listing(sphere_vc, sphere_locator):
    electrodes = np.array([[0.0, 0.0, 92.0],
                           [0.0, 0.0, 150.0],
                           [130.0, 0.0, 0.0]])
    with pytest.raises(ConfigError) as err:
        build_restriction(sphere_vc, sphere_locator, electrodes)
    msg = str(err.value)
    assert "#1" in msg and "#2" in msg and "#0" not in msg
    assert "58.0 mm" in msg


def test_restriction_rejects_bad_shape(sphere_vc, sphere_locator):
    with pytest.raises(ConfigError, match="shape"):
        build_restriction(sphere_vc, sphere_locator, np.zeros((4, 2)))


def direct_montage(system, vc, locator, restriction, dipole, kind):
    arr, r = restriction
    out = bind(kind, vc, locator, dipole).assemble_rhs()
    b = out.dense()
    b -= b.mean()
    sol = solve(system, b, tol=1e-10)
    assert sol.converged
    vals = r @ sol.coefficients
    vals -= vals.mean()
    return post_process(out, vals, arr.projected), out


def test_transfer_identity_sparse_models(sphere_vc, sphere_system,
                                         sphere_locator, restriction,
                                         eeg_transfer):
    rng = np.random.default_rng(42)
    for kind in ("partial_integration", "venant"):
        for _ in range(3):
            pos = rng.uniform(-30, 30, size=3)
            dip = Dipole(pos, rng.normal(size=3))
            want, out = direct_montage(sphere_system, sphere_vc,
                                       sphere_locator, restriction, dip, kind)
            got = apply_transfer(eeg_transfer, out)
            rel = np.linalg.norm(got - want) / np.linalg.norm(want)
            assert rel <= 1e-6


def test_transfer_identity_subtraction(sphere_vc, sphere_system,
                                       sphere_locator, restriction,
                                       eeg_transfer):
    arr, _ = restriction
    dip = Dipole([0.0, 10.0, 25.0], [1.0, -1.0, 0.5])
    want, out = direct_montage(sphere_system, sphere_vc, sphere_locator,
                               restriction, dip, "subtraction")
    got = apply_transfer(eeg_transfer, out, electrodes=arr)
    rel = np.linalg.norm(got - want) / np.linalg.norm(want)
    assert rel <= 1e-6
    # Subtraction montages keep the singularity offset.
    assert abs(got.mean()) > 0


def test_transfer_rows_zero_mean(eeg_transfer):
    means = eeg_transfer.matrix.mean(axis=1)
    scale = np.abs(eeg_transfer.matrix).max()
    assert np.abs(means).max() <= 1e-12 * scale


def test_worker_count_does_not_change_bits(sphere_system, restriction):
    _, r = restriction
    serial = compute_eeg_transfer(sphere_system, r, tol=1e-8, workers=1)
    pooled = compute_eeg_transfer(sphere_system, r, tol=1e-8, workers=3)
    assert (serial.matrix == pooled.matrix).all()


def test_apply_sparse_equals_dense(sphere_vc, sphere_locator, eeg_transfer):
    dip = Dipole([5.0, -10.0, 30.0], [0.5, 1.0, 0.0])
    out = bind("venant", sphere_vc, sphere_locator, dip).assemble_rhs()
    assert out.is_sparse
    sparse_pot = apply_transfer(eeg_transfer, out)
    from meegfem.sources import SourceModelOutput
    dense_pot = apply_transfer(
        eeg_transfer, SourceModelOutput(out.n, dense=out.dense()))
    assert np.allclose(sparse_pot, dense_pot, rtol=0, atol=1e-14)
    assert abs(sparse_pot.mean()) <= 1e-12 * np.abs(sparse_pot).max()


def test_apply_zero_moment_gives_silence(sphere_vc, sphere_locator,
                                         eeg_transfer):
    out = bind("venant", sphere_vc, sphere_locator,
               Dipole([0.0, 0.0, 30.0], [0.0, 0.0, 0.0])).assemble_rhs()
    assert (apply_transfer(eeg_transfer, out) == 0.0).all()


def test_apply_rejects_meg_matrix(sphere_vc, sphere_locator, eeg_transfer):
    wrong = TransferMatrix(eeg_transfer.matrix, "meg",
                           eeg_transfer.mesh_checksum, 1e-8)
    out = bind("venant", sphere_vc, sphere_locator,
               Dipole([0.0, 0.0, 30.0], [1.0, 0.0, 0.0])).assemble_rhs()
    with pytest.raises(ConfigError, match="meg"):
        apply_transfer(wrong, out)


def test_subtraction_apply_requires_electrodes(sphere_vc, sphere_locator,
                                               eeg_transfer):
    out = bind("subtraction", sphere_vc, sphere_locator,
               Dipole([0.0, 0.0, 30.0], [1.0, 0.0, 0.0])).assemble_rhs()
    with pytest.raises(ConfigError, match="electrode"):
        apply_transfer(eeg_transfer, out)


def test_unknown_modality_rejected(eeg_transfer):
    with pytest.raises(ConfigError, match="modality"):
        TransferMatrix(eeg_transfer.matrix, "ecog",
                       eeg_transfer.mesh_checksum, 1e-8)


def test_nonconverged_row_names_sensor(monkeypatch, sphere_system,
                                       restriction):
    _, r = restriction

    def stuck(system, b, tol=1e-8, max_iterations=None, preconditioner=None):
        return Solution(np.zeros(system.n), 7, 1.0, False)

    monkeypatch.setattr(transfer_mod, "solve", stuck)
    with pytest.raises(NumericalError, match="sensor 0"):
        compute_eeg_transfer(sphere_system, r)


def test_restriction_dof_mismatch(sphere_system):
    import scipy.sparse as sp
    bad = sp.csr_matrix((3, sphere_system.n + 1))
    with pytest.raises(ConfigError, match="columns"):
        compute_eeg_transfer(sphere_system, bad)


def test_container_round_trip(tmp_path, eeg_transfer):
    path = tmp_path / "scalp.xfer"
    save_transfer(eeg_transfer, path)
    info = read_transfer_header(path)
    assert info["modality"] == "eeg"
    assert info["sensors"] == eeg_transfer.n_sensors
    assert info["dofs"] == eeg_transfer.n_dofs
    assert info["tolerance"] == eeg_transfer.tolerance
    assert info["mesh_checksum"] == eeg_transfer.mesh_checksum

    back = load_transfer(path)
    assert (back.matrix == eeg_transfer.matrix).all()  # bit-for-bit
    assert back.modality == "eeg"

    # Saving twice produces identical bytes: nothing in the container
    # depends on time or environment.
    path2 = tmp_path / "again.xfer"
    save_transfer(eeg_transfer, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_container_header_is_aligned():
    from meegfem.transfer import _HEADER
    assert _HEADER.size == 104
    assert _HEADER.size % 8 == 0
    assert MAGIC == b"MEEGXFER"


def test_load_checks_mesh_checksum(tmp_path, eeg_transfer):
    path = tmp_path / "scalp.xfer"
    save_transfer(eeg_transfer, path)
    assert load_transfer(path, eeg_transfer.mesh_checksum) is not None
    with pytest.raises(ConfigError, match="different mesh"):
        load_transfer(path, "f" * 64)


def test_load_rejects_foreign_files(tmp_path):
    garbage = tmp_path / "not.xfer"
    garbage.write_bytes(b"PNG garbage" + b"\0" * 200)
    with pytest.raises(ConfigError, match="not a transfer matrix"):
        read_transfer_header(garbage)

    short = tmp_path / "short.xfer"
    short.write_bytes(b"MEEG")
    with pytest.raises(ConfigError, match="truncated"):
        read_transfer_header(short)


def test_load_rejects_bad_version_and_truncated_data(tmp_path, eeg_transfer):
    path = tmp_path / "scalp.xfer"
    save_transfer(eeg_transfer, path)
    blob = bytearray(path.read_bytes())
    blob[8] = 99  # version field, little endian
    bad = tmp_path / "future.xfer"
    bad.write_bytes(bytes(blob))
    with pytest.raises(ConfigError, match="version"):
        read_transfer_header(bad)

    cut = tmp_path / "cut.xfer"
    cut.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(ConfigError, match="data truncated"):
        load_transfer(cut)
