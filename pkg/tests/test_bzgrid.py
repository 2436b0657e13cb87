import json

import numpy as np
import pytest

from hopfsim.bzgrid import (
    MeshSpec,
    StateField,
    coverage_fraction,
    field_from_dict,
    field_to_dict,
    load_field,
    load_texture_csv,
    sample_state_field,
    save_field,
    save_texture_csv,
    slice_field,
    texture_rows,
)
from hopfsim.errors import EmptyInput, GaplessPoint
from hopfsim.model import HopfParams


def test_mesh_spec():
    m = MeshSpec(10)
    assert m.spacing == pytest.approx(2 * np.pi / 10)
    pts = m.points()
    assert pts.shape == (10, 10, 10, 3)
    np.testing.assert_allclose(pts[1, 2, 3], 2 * np.pi * np.array([1, 2, 3]) / 10)
    with pytest.raises(ValueError):
        MeshSpec(3)


def test_sample_state_field_examples():
    f = sample_state_field(HopfParams(2.0), MeshSpec(10))
    assert f.kind == "spinor" and f.provenance == "analytic"
    norms = np.linalg.norm(f.data, axis=-1)
    assert np.abs(norms - 1).max() < 1e-12
    np.testing.assert_allclose(f.site_state((0, 0, 0)), [1, 0], atol=1e-12)


def test_sample_state_field_gapless():
    with pytest.raises(GaplessPoint) as err:
        sample_state_field(HopfParams(1.0), MeshSpec(10))
    # u(k)=0 at h=1 forces sines to vanish and cos kx+cos ky+cos kz = -1
    assert err.value.site in {(0, 5, 5), (5, 0, 5), (5, 5, 0)}


def test_slice_views_and_reassembly():
    f = sample_state_field(HopfParams(2.0), MeshSpec(6))
    for axis, ax_idx in (("x", 0), ("y", 1), ("z", 2)):
        stack = np.stack(
            [slice_field(f, axis, j).pure_states() for j in range(6)], axis=ax_idx
        )
        np.testing.assert_array_equal(stack, f.data)
    sl = slice_field(f, "z", 0)
    assert sl.pure_states().shape == (6, 6, 2)
    np.testing.assert_allclose(sl.bloch_vectors()[0, 0], [0, 0, 1], atol=1e-12)
    sx = slice_field(f, "x", 5)
    np.testing.assert_array_equal(sx.pure_states(), f.data[5])
    with pytest.raises(IndexError):
        slice_field(f, "z", 6)
    with pytest.raises(ValueError):
        slice_field(f, "w", 0)


def test_coverage_single_cell():
    vecs = np.tile([0.0, 0.0, 1.0], (7, 1))
    assert coverage_fraction(vecs, 128) == pytest.approx(1 / 128)


def test_coverage_full_field_vs_slice():
    f = sample_state_field(HopfParams(2.0), MeshSpec(10))
    assert coverage_fraction(f.bloch_vectors(), 64) == 1.0
    sl = slice_field(f, "z", 0)
    assert coverage_fraction(sl.bloch_vectors(), 64) < 1.0


def test_coverage_trivial_phase_not_full():
    f = sample_state_field(HopfParams(4.0), MeshSpec(10))
    assert coverage_fraction(f.bloch_vectors(), 64) < 1.0


def test_coverage_permutation_invariant():
    rng = np.random.default_rng(5)
    v = rng.normal(size=(300, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    perm = rng.permutation(300)
    assert coverage_fraction(v, 72) == coverage_fraction(v[perm], 72)


def test_coverage_input_validation():
    with pytest.raises(EmptyInput):
        coverage_fraction(np.empty((0, 3)), 64)
    with pytest.raises(ValueError):
        coverage_fraction([[0, 0, 1]], 4)
    with pytest.raises(ValueError):
        coverage_fraction([[0, 0, 2]], 64)


def test_field_json_roundtrip_spinor(tmp_path):
    f = sample_state_field(HopfParams(2.0), MeshSpec(5))
    path = tmp_path / "field.json"
    save_field(f, path)
    g = load_field(path)
    assert np.array_equal(f.data, g.data)
    assert g.params == f.params and g.provenance == f.provenance
    # document structure is json-native
    doc = json.loads(path.read_text())
    assert doc["n"] == 5 and len(doc["entries"]) == 125 and len(doc["entries"][0]) == 4


def test_field_json_roundtrip_rho(tmp_path):
    f = sample_state_field(HopfParams(2.0), MeshSpec(4))
    rho = np.einsum("...i,...j->...ij", f.data, np.conj(f.data))
    fr = StateField(MeshSpec(4), f.params, rho, provenance="simulated-experiment")
    path = tmp_path / "rho.json"
    save_field(fr, path)
    g = load_field(path)
    assert g.kind == "rho"
    assert np.array_equal(fr.data, g.data)
    np.testing.assert_allclose(g.bloch_vectors(), f.bloch_vectors(), atol=1e-12)


def test_rho_validation_rejects_unphysical():
    n = 4
    bad = np.zeros((n, n, n, 2, 2), dtype=complex)
    bad[..., 0, 0] = 1.2
    bad[..., 1, 1] = -0.2
    with pytest.raises(ValueError):
        StateField(MeshSpec(n), HopfParams(2.0), bad)


def test_rho_pure_states_dominant_eigenvector():
    f = sample_state_field(HopfParams(2.0), MeshSpec(4))
    rho = np.einsum("...i,...j->...ij", f.data, np.conj(f.data))
    fr = StateField(MeshSpec(4), f.params, rho, provenance="simulated-experiment")
    pure = fr.pure_states()
    overlap = np.abs(np.sum(np.conj(pure) * f.data, axis=-1))
    assert np.abs(overlap - 1).max() < 1e-10


def test_apply_gauge_changes_phases_only():
    f = sample_state_field(HopfParams(2.0), MeshSpec(4))
    rng = np.random.default_rng(2)
    g = f.apply_gauge(rng.uniform(0, 2 * np.pi, (4, 4, 4)))
    np.testing.assert_allclose(
        np.abs(g.data), np.abs(f.data), atol=1e-15
    )
    np.testing.assert_allclose(g.bloch_vectors(), f.bloch_vectors(), atol=1e-12)


def test_texture_csv(tmp_path):
    f = sample_state_field(HopfParams(2.0), MeshSpec(4))
    path = tmp_path / "tex.csv"
    save_texture_csv(f, path)
    rows = load_texture_csv(path)
    assert rows.shape == (64, 6)
    np.testing.assert_allclose(rows[:, 3:], texture_rows(f)[:, 3:], rtol=0, atol=0)
