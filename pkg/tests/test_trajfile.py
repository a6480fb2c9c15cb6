import numpy as np
import pytest

from paritybench import trajfile
from paritybench.codes import bit_flip_code, reference_entangled_state
from paritybench.sme import MeasurementSetup, NoiseModel, run_ensemble


@pytest.fixture(scope="module")
def small_ensemble():
    code = bit_flip_code()
    phi = reference_entangled_state(code)
    setup = MeasurementSetup(operators=("ZZI", "IZZ"), gamma_meas=3.7e8,
                             gamma_deph_odd=1.6e7, eta=1.0)
    model = NoiseModel(gamma_x=2 * np.pi * 5e6)
    return run_ensemble(phi, model, setup, 2e-9, 0.05e-9, count=6, master_seed=17,
                        n_system=3)


def test_roundtrip(tmp_path, small_ensemble):
    path = tmp_path / "ens.pbtrj"
    trajfile.write_ensemble(path, small_ensemble, header={"code": "bit_flip",
                                                          "master_seed": 17})
    header, records = trajfile.read_ensemble(path)
    assert header["format_version"] == trajfile.FORMAT_VERSION
    assert header["count"] == 6
    assert header["code"] == "bit_flip"
    assert header["dim"] == 16
    assert header["n_ops"] == 2
    for orig, back in zip(small_ensemble, records):
        assert back.seed == orig.seed
        assert back.dt == orig.dt
        np.testing.assert_array_equal(back.currents, orig.currents)
        np.testing.assert_array_equal(back.final_state, orig.final_state)


def test_iter_records_streams(tmp_path, small_ensemble):
    path = tmp_path / "ens.pbtrj"
    trajfile.write_ensemble(path, small_ensemble, header={"code": "bit_flip"})
    seeds = [rec.seed for rec in trajfile.iter_records(path)]
    assert seeds == [r.seed for r in small_ensemble]


def test_rejects_non_trajectory_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a trajectory file")
    with pytest.raises(ValueError):
        trajfile.read_header(path)


def test_rejects_empty_write(tmp_path):
    with pytest.raises(ValueError):
        trajfile.write_ensemble(tmp_path / "x.pbtrj", [], header={})


def test_little_endian_layout(tmp_path, small_ensemble):
    # seed of the first trajectory sits right after the JSON header, as u64 LE
    import json
    import struct
    path = tmp_path / "ens.pbtrj"
    trajfile.write_ensemble(path, small_ensemble, header={"code": "bit_flip"})
    blob = path.read_bytes()
    assert blob.startswith(trajfile.MAGIC)
    (hlen,) = struct.unpack("<I", blob[len(trajfile.MAGIC):len(trajfile.MAGIC) + 4])
    off = len(trajfile.MAGIC) + 4
    json.loads(blob[off:off + hlen])  # header parses as JSON
    (seed,) = struct.unpack("<Q", blob[off + hlen:off + hlen + 8])
    assert seed == small_ensemble[0].seed
