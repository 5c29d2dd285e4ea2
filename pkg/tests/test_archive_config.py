import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from lcmdiar import archive
from lcmdiar.config import RunConfig
from lcmdiar.errors import FormatError, ParameterError, ParseError, TruncationError


def test_archive_round_trip_is_bit_exact(tmp_path, rng):
    arrays = {"a.x": rng.standard_normal((3, 4)), "b": np.array(2.5), "c.v": rng.standard_normal(7),
              "d": rng.standard_normal((2, 3, 2)), "e": np.zeros((0, 3))}
    archive.write_archive(arrays, tmp_path / "m.lcmd")
    back = archive.read_archive(tmp_path / "m.lcmd")
    assert set(back) == set(arrays)
    for k, v in arrays.items():
        assert back[k].shape == v.shape and back[k].tobytes() == v.tobytes()


def test_archive_layout(tmp_path):
    archive.write_archive({"ab": np.array([1.0, 2.0])}, tmp_path / "m.lcmd")
    raw = (tmp_path / "m.lcmd").read_bytes()
    expected = b"LCMD" + struct.pack("<IIH", 1, 1, 2) + b"ab" + struct.pack("<BI", 1, 2) + struct.pack("<2d", 1, 2)
    assert raw == expected


def test_archive_errors(tmp_path):
    path = tmp_path / "m.lcmd"
    archive.write_archive({"x": np.ones(4)}, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(TruncationError):
        archive.read_archive(path)
    path.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError):
        archive.read_archive(path)
    path.write_bytes(raw + b"\0")
    with pytest.raises(TruncationError):
        archive.read_archive(path)


def test_update_and_dependencies(tmp_path, small_models):
    path = tmp_path / "m.lcmd"
    archive.write_archive(archive.ubm_arrays(small_models.ubm), path)
    with pytest.raises(FormatError, match="tv.T"):
        archive.load_models(archive.read_archive(path), need_plda=False)
    archive.update_archive(path, archive.tv_arrays(small_models.tv))
    m = archive.load_models(archive.read_archive(path), need_plda=False)
    assert m.plda is None
    with pytest.raises(FormatError, match="plda"):
        archive.load_models(archive.read_archive(path))
    archive.update_archive(path, archive.plda_arrays(small_models.plda, small_models.prep))
    full = archive.load_models(archive.read_archive(path))
    assert_array_equal(full.plda.phi, small_models.plda.phi)
    assert_array_equal(full.ubm.variances, small_models.ubm.variances)
    assert set(archive.models_to_arrays(full)) == {k for v in archive.STAGES.values() for k in v}


def test_config_defaults_and_round_trip():
    cfg = RunConfig()
    assert (cfg.n_components, cfg.rank, cfg.plda_rank) == (512, 300, 150)
    assert (cfg.data_half_window, cfg.score_half_window, cfg.lam) == (40, 40, 0.05)
    assert (cfg.kappa_plda, cfg.kappa_svm, cfg.self_loop) == (1.0, 10.0, 0.98)
    assert (cfg.hard_prior_q, cfg.soft_prior_k) == (0.7, 10.0)
    assert RunConfig.from_text(cfg.dump()) == cfg


def test_config_parsing():
    cfg = RunConfig.from_text("# comment\nrank = 20  # trailing\n\nscore_overlap = no\nbackend=svm\n")
    assert cfg.rank == 20 and cfg.score_overlap is False and cfg.backend == "svm"
    with pytest.raises(ParseError) as err:
        RunConfig.from_text("rank = 2\nbogus = 1\n", "x.cfg")
    assert err.value.lineno == 2
    with pytest.raises(ParseError):
        RunConfig.from_text("rank = two\n")
    with pytest.raises(ParseError):
        RunConfig.from_text("rank 2\n")
    with pytest.raises(ParameterError):
        RunConfig().diarization_config()
    d = RunConfig(n_speakers=3, lam=0.1).diarization_config()
    assert d.n_speakers == 3 and d.lam == 0.1
