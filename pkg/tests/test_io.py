import numpy as np
import pytest

from ellipseg import io
from ellipseg.embedding import EmbeddingField
from ellipseg.geometry import Ellipse
from ellipseg.labelgen import LabelImage


def test_pgm_8bit(tmp_path):
    px = np.array([[0, 1, 2], [255, 7, 0]])
    io.write_pgm(tmp_path / "a.pgm", px)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n3 2\n255\n")
    assert len(raw) == len(b"P5\n3 2\n255\n") + 6
    assert np.array_equal(io.read_pgm(tmp_path / "a.pgm"), px)


def test_pgm_16bit_big_endian(tmp_path):
    px = np.array([[0, 256], [1000, 65535]])
    io.write_pgm(tmp_path / "b.pgm", px)
    raw = (tmp_path / "b.pgm").read_bytes()
    assert b"\n65535\n" in raw[:20]
    assert raw.endswith(bytes([0x03, 0xE8, 0xFF, 0xFF]))
    assert np.array_equal(io.read_pgm(tmp_path / "b.pgm"), px)


def test_pgm_header_comments_and_errors(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x01\x02")
    assert io.read_pgm(p).tolist() == [[1, 2]]
    p.write_bytes(b"P5\n2 2\n255\n\x01")
    with pytest.raises(ValueError):
        io.read_pgm(p)
    p.write_bytes(b"P2\n1 1\n255\n1")
    with pytest.raises(ValueError):
        io.read_pgm(p)
    with pytest.raises(ValueError):
        io.write_pgm(p, np.array([[-1]]))


def test_label_round_trip(tmp_path):
    li = LabelImage(np.array([[0, 1], [2, 2]]), "categorical3")
    io.write_label(tmp_path / "l.pgm", li)
    back = io.read_label(tmp_path / "l.pgm", "categorical3")
    assert back.kind == "categorical3" and np.array_equal(back.pixels, li.pixels)


def test_features_png(tmp_path):
    f = np.random.default_rng(0).integers(0, 256, (5, 7, 3)) / 255.0
    io.write_features(tmp_path / "f.png", f)
    assert np.array_equal(io.read_features(tmp_path / "f.png"), f)
    g = f[..., :1]
    io.write_features(tmp_path / "g.png", g)
    assert io.read_features(tmp_path / "g.png").shape == (5, 7, 1)


def test_embedding_binary(tmp_path):
    v = np.random.default_rng(1).normal(size=(3, 4, 2)).astype(np.float32).astype(float)
    io.write_embedding(tmp_path / "e.bin", EmbeddingField(v))
    assert (tmp_path / "e.bin").stat().st_size == 3 * 4 * 2 * 4
    # pixel-major, channel fastest, little-endian float32
    first = np.frombuffer((tmp_path / "e.bin").read_bytes()[:8], "<f4")
    assert np.array_equal(first, v[0, 0])
    assert np.array_equal(io.read_embedding(tmp_path / "e.bin").vectors, v)


def test_ellipses_and_json(tmp_path):
    es = [Ellipse(1, 2, 3, 1, 0.5, -1, 0)]
    io.write_ellipses(tmp_path / "e.json", es)
    assert io.read_ellipses(tmp_path / "e.json") == es
    io.dump_json(tmp_path / "d.json", {"b": 1, "a": [1.5, None]})
    assert (tmp_path / "d.json").read_text() == '{\n  "a": [\n    1.5,\n    null\n  ],\n  "b": 1\n}\n'
    assert io.load_json(tmp_path / "d.json") == {"a": [1.5, None], "b": 1}
