import numpy as np
import pytest

from stokes_homog.coeff import make_preset
from stokes_homog.dump import (
    MAGIC,
    FieldDump,
    dump_correctors,
    dump_field,
    dump_state,
    dumps,
    load_correctors,
    load_field,
    loads,
)
from stokes_homog.exceptions import FieldDumpError, MissingArtifactError


def header_length(blob):
    return blob.index(b"\nEND\n") + len(b"\nEND\n")


def test_zero_field_layout():
    blob = dumps(FieldDump("mac-p", np.zeros((8, 8))))
    assert blob.startswith((MAGIC + "\nkind=mac-p\ndims=8,8\n").encode())
    assert len(blob) - header_length(blob) == 512
    assert loads(blob) == FieldDump("mac-p", np.zeros((8, 8)))


def test_random_field_is_bit_exact(tmp_path, rng):
    data = rng.standard_normal((64, 64))
    data[0, 0] = -0.0
    data[1, 1] = np.nan
    data[2, 2] = 5e-324
    path = tmp_path / "f.field"
    dump_field(path, FieldDump("cell", data, dict(note="random", n=64)))
    back = load_field(path)
    assert back.data.tobytes() == data.tobytes()
    assert back.meta == dict(note="random", n="64")
    assert back.kind == "cell"
    assert back.dims == (64, 64)


def test_payload_length_is_checked():
    blob = dumps(FieldDump("mac-u", np.ones((9, 8))))
    with pytest.raises(FieldDumpError, match="truncated"):
        loads(blob[:-1])
    with pytest.raises(FieldDumpError, match="oversized"):
        loads(blob + b"\0")


@pytest.mark.parametrize(
    "blob,match",
    [
        (b"NOT-A-FIELD\nkind=cell\ndims=1\nEND\n", "magic"),
        ((MAGIC + "\nkind=cell\ndims=1\n").encode(), "END"),
        ((MAGIC + "\nkind=cell\ndims=65536,65536,2\nEND\n").encode(), "overflow"),
        ((MAGIC + "\nkind=cell\ndims=a,b\nEND\n").encode(), "dims"),
        ((MAGIC + "\nkind=cell\ndims=0,4\nEND\n").encode(), "positive"),
        ((MAGIC + "\ndims=2\nEND\n" + "\0" * 16).encode(), "kind"),
        ((MAGIC + "\nkind=vector\ndims=2\nEND\n" + "\0" * 16).encode(), "kind"),
        ((MAGIC + "\nkind=cell\nbroken\ndims=2\nEND\n").encode(), "Malformed"),
    ],
)
def test_malformed_dumps(blob, match):
    with pytest.raises(FieldDumpError, match=match):
        loads(blob)


def test_bad_metadata():
    with pytest.raises(FieldDumpError):
        FieldDump("cell", np.zeros(2), {"a=b": 1})
    with pytest.raises(FieldDumpError):
        FieldDump("cell", np.zeros(2), {"dims": "3"})
    with pytest.raises(FieldDumpError):
        FieldDump("cell", np.zeros(2), {"note": "two\nlines"})


def test_missing_file(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_field(tmp_path / "nothing.field")


def test_corrector_round_trip(tmp_path, layered, layered_chi):
    paths = dump_correctors(str(tmp_path), layered_chi)
    assert len(paths) == 4
    back = load_correctors(str(tmp_path), layered)
    for a, b in zip(layered_chi, back):
        assert (a.i, a.k) == (b.i, b.k)
        assert a.velocity.tobytes() == b.velocity.tobytes()
        assert a.pressure.tobytes() == b.pressure.tobytes()
        assert a.iterations == b.iterations
        assert a.residual == b.residual
    with pytest.raises(MissingArtifactError, match="solved for"):
        load_correctors(str(tmp_path), make_preset("layered", [2.0]))
    assert load_correctors(str(tmp_path), layered, n_cell=32).n_cell == 32
    with pytest.raises(MissingArtifactError, match="n_cell=32, not 16"):
        load_correctors(str(tmp_path), layered, n_cell=16)
    with pytest.raises(MissingArtifactError):
        load_correctors(str(tmp_path / "elsewhere"), layered)


def test_state_dump(tmp_path, identity_trajectory, grid16):
    state = identity_trajectory.final
    paths = dump_state(str(tmp_path), "homog-final", grid16, state, dict(variant="homog"))
    assert [p.rsplit("-", 1)[1] for p in paths] == ["u.field", "v.field", "p.field"]
    u, v, p = (load_field(path) for path in paths)
    assert u.dims == (17, 16) and v.dims == (16, 17) and p.dims == (16, 16)
    assert u.meta == dict(variant="homog", t="1.0", n="16")
    np.testing.assert_array_equal(grid16.join(u.data, v.data), state.u)
    np.testing.assert_array_equal(p.data.ravel(), state.p)
