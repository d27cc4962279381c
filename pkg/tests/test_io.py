import numpy as np
import pytest

from hybridreg.core import PointCloud, random_transform
from hybridreg.io import CloudParseError, load_cloud, load_transform, save_cloud, save_transform


def _cloud(normals=True, n=25, seed=0):
    rng = np.random.default_rng(seed)
    nrm = None
    if normals:
        nrm = rng.normal(size=(n, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return PointCloud(rng.normal(size=(n, 3)), nrm)


@pytest.mark.parametrize("name,binary", [("c.ply", True), ("c.ply", False), ("c.xyz", True)])
@pytest.mark.parametrize("normals", [True, False])
def test_roundtrip_is_exact(tmp_path, name, binary, normals):
    c = _cloud(normals)
    save_cloud(c, tmp_path / name, binary=binary)
    back = load_cloud(tmp_path / name)
    assert np.array_equal(back.points, c.points)
    if normals:
        assert np.allclose(back.normals, c.normals, atol=1e-15)
    else:
        assert back.normals is None


def test_float_ply_with_extra_elements(tmp_path):
    p = tmp_path / "f.ply"
    body = np.array([[0, 0, 0, 7], [1, 2, 3, 8]], dtype="<f4")
    header = ("ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 2\n"
              "property float x\nproperty float y\nproperty float z\nproperty float intensity\n"
              "element face 0\nproperty list uchar int vertex_indices\nend_header\n")
    p.write_bytes(header.encode() + body.tobytes())
    c = load_cloud(p)
    assert np.allclose(c.points, [[0, 0, 0], [1, 2, 3]])


@pytest.mark.parametrize("text,msg", [
    ("plx\n", "magic"),
    ("ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nend_header\n0\n", "lacks property"),
    ("ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\n"
     "end_header\n0 0 0\n", "truncated"),
    ("ply\nformat binary_big_endian 1.0\nend_header\n", "unsupported format"),
    ("ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\n"
     "end_header\n0 nan 0\n", "non-finite"),
])
def test_malformed_ply(tmp_path, text, msg):
    p = tmp_path / "bad.ply"
    p.write_bytes(text.encode())
    with pytest.raises(CloudParseError, match=msg):
        load_cloud(p)


def test_truncated_binary_reports_offset(tmp_path):
    c = _cloud(False, 4)
    save_cloud(c, tmp_path / "c.ply")
    data = (tmp_path / "c.ply").read_bytes()
    (tmp_path / "c.ply").write_bytes(data[:-5])
    with pytest.raises(CloudParseError, match="byte offset"):
        load_cloud(tmp_path / "c.ply")


def test_xyz_column_mismatch(tmp_path):
    p = tmp_path / "c.xyz"
    p.write_text("0 0 0\n1 1\n")
    with pytest.raises(CloudParseError, match="line 2"):
        load_cloud(p)


def test_unknown_extension(tmp_path):
    with pytest.raises(ValueError):
        load_cloud(tmp_path / "c.obj")


def test_transform_file_is_4x4_row_major(tmp_path):
    T = random_transform(np.random.default_rng(1))
    save_transform(T, tmp_path / "T.txt")
    rows = (tmp_path / "T.txt").read_text().split("\n")
    assert len([r for r in rows if r.strip()]) == 4
    assert [float(v) for v in rows[3].split()] == [0, 0, 0, 1]
    assert float(rows[0].split()[3]) == T.translation[0]
    assert np.array_equal(load_transform(tmp_path / "T.txt").as_matrix(), T.as_matrix())


def test_bad_transform_file(tmp_path):
    (tmp_path / "T.txt").write_text("2 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n")
    with pytest.raises(CloudParseError):
        load_transform(tmp_path / "T.txt")
