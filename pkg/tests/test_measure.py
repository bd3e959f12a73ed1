import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xplat import circuits as qc
from xplat import measure as ms
from xplat import platforms as pl
from xplat.errors import CapacityError, DatasetError

NOISELESS = pl.PlatformProfile("ideal", "simulation", pl.NoiseModel())


def mean_pairwise_distance(settings_list):
    pairs = list(itertools.combinations(settings_list, 2))
    return np.mean([ms.setting_distance(a, b) for a, b in pairs])


def born_probabilities(circuit, setting):
    """Oracle: rotate the ideal statevector with full Kronecker products."""
    psi = qc.apply_circuit(circuit)
    u = np.eye(1)
    for b in reversed(setting):
        u = np.kron(u, ms.BASIS_ROTATIONS[b])
    return np.abs(u @ psi) ** 2


# --- bitstrings -------------------------------------------------------------------

def test_bitstring_is_qubit0_first():
    assert ms.bitstring(1, 3) == "100"
    assert ms.bit_index("001") == 4


@given(st.integers(1, 10), st.data())
def test_bitstring_roundtrip(n, data):
    i = data.draw(st.integers(0, 2**n - 1))
    assert ms.bit_index(ms.bitstring(i, n)) == i


# --- random settings ----------------------------------------------------------------

def test_random_settings_shape():
    s = ms.sample_settings_random(13, 1000, np.random.default_rng(0))
    assert len(s) == 1000 and all(len(x) == 13 and set(x) <= set("XYZ") for x in s)


def test_random_settings_uniform():
    s = ms.sample_settings_random(1, 30000, np.random.default_rng(1))
    for b in "XYZ":
        assert abs(s.count(b) / 30000 - 1 / 3) < 0.01


def test_random_settings_deterministic():
    a = ms.sample_settings_random(5, 20, np.random.default_rng(9))
    b = ms.sample_settings_random(5, 20, np.random.default_rng(9))
    assert a == b


def test_random_settings_reject_zero():
    with pytest.raises(ValueError):
        ms.sample_settings_random(3, 0, np.random.default_rng(0))


def test_subsample_without_replacement():
    all_s = ms.all_pauli_settings(5)
    assert len(all_s) == 243 and len(set(all_s)) == 243
    idx = ms.subsample_settings(all_s, 100, np.random.default_rng(0))
    assert len(set(idx)) == 100
    with pytest.raises(ValueError):
        ms.subsample_settings(all_s, 244, np.random.default_rng(0))


# --- distances ----------------------------------------------------------------------

def test_bloch_design_has_26_unit_points():
    assert ms.BLOCH_DESIGN.shape == (26, 3)
    np.testing.assert_allclose(np.linalg.norm(ms.BLOCH_DESIGN, axis=1), 1)


def test_distance_identical_is_zero():
    assert ms.setting_distance("XYZZX", "XYZZX") == 0


def test_single_qubit_distance_symmetry():
    zx = ms.setting_distance("Z", "X")
    assert zx > 0
    assert zx == pytest.approx(ms.setting_distance("Z", "Y"))
    assert zx == pytest.approx(ms.setting_distance("X", "Y"))
    assert zx == pytest.approx(ms.setting_distance("X", "Z"))


def test_single_qubit_distance_value():
    # Z and X readouts give (1 +- z)/2 and (1 +- x)/2, an L1 gap of |z - x|,
    # maximised on the design at (x, z) = (-1, 1)/sqrt(2)
    assert ms.setting_distance("Z", "X") == pytest.approx(np.sqrt(2))


def test_distance_additive():
    assert ms.setting_distance("ZZ", "ZX") == pytest.approx(ms.setting_distance("Z", "X"))
    assert ms.setting_distance("ZY", "XX") == pytest.approx(2 * ms.setting_distance("Z", "X"))


def test_distance_max_aggregation():
    assert ms.setting_distance("ZY", "XX", "max") == pytest.approx(ms.setting_distance("Z", "X"))
    with pytest.raises(ValueError):
        ms.setting_distance("Z", "X", "mean")


def test_distance_length_mismatch():
    with pytest.raises(ValueError):
        ms.setting_distance("ZZ", "Z")


@given(st.text("XYZ", min_size=1, max_size=8).flatmap(
    lambda a: st.tuples(st.just(a), st.text("XYZ", min_size=len(a), max_size=len(a)))))
def test_distance_zero_iff_equal(pair):
    a, b = pair
    d = ms.setting_distance(a, b)
    assert (d == 0) == (a == b)
    assert d == ms.setting_distance(b, a)


# --- greedy settings ----------------------------------------------------------------

def test_greedy_single_qubit_covers_all_bases():
    s = ms.sample_settings_greedy(1, 3, np.random.default_rng(0))
    assert sorted(s) == ["X", "Y", "Z"]
    assert all(ms.setting_distance(a, b) > 0 for a, b in itertools.combinations(s, 2))


def test_greedy_m_u_one():
    s = ms.sample_settings_greedy(4, 1, np.random.default_rng(2))
    assert len(s) == 1 and len(s[0]) == 4


def test_greedy_rejects_bad_args():
    with pytest.raises(ValueError):
        ms.sample_settings_greedy(2, 0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        ms.sample_settings_greedy(2, 3, np.random.default_rng(0), n_candidates=0)


@settings(max_examples=25)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.data())
def test_greedy_no_duplicates(n, seed, data):
    m_u = data.draw(st.integers(1, 3**n))
    s = ms.sample_settings_greedy(n, m_u, np.random.default_rng(seed), n_candidates=20)
    assert len(s) == m_u and len(set(s)) == m_u


def test_greedy_more_spread_than_random():
    greedy, rand = [], []
    for seed in range(20):
        greedy.append(mean_pairwise_distance(ms.sample_settings_greedy(5, 100, np.random.default_rng(seed))))
        rand.append(mean_pairwise_distance(ms.sample_settings_random(5, 100, np.random.default_rng(seed))))
    assert np.mean(greedy) >= np.mean(rand)


def test_greedy_balances_bases():
    # summed distance rewards even use of X, Y, Z on every qubit
    s = ms.sample_settings_greedy(5, 99, np.random.default_rng(4))
    for q in range(5):
        counts = [sum(x[q] == b for x in s) for b in "XYZ"]
        assert max(counts) - min(counts) <= 2


def test_greedy_max_aggregation_runs():
    s = ms.sample_settings_greedy(3, 10, np.random.default_rng(0), aggregation="max")
    assert len(set(s)) == 10


def test_greedy_deterministic():
    a = ms.sample_settings_greedy(5, 30, np.random.default_rng(3))
    b = ms.sample_settings_greedy(5, 30, np.random.default_rng(3))
    assert a == b


# --- acquisition ---------------------------------------------------------------------

def test_ghz5_z_basis_outcomes():
    rec = ms.acquire_shots(NOISELESS, qc.build_ghz(5), "ZZZZZ", 2000, np.random.default_rng(0))
    assert set(rec.counts) == {"00000", "11111"}
    assert abs(rec.counts["00000"] / 2000 - 0.5) < 0.02


def test_ghz2_xx_parity():
    rec = ms.acquire_shots(NOISELESS, qc.build_ghz(2), "XX", 2000, np.random.default_rng(1))
    assert set(rec.counts) <= {"00", "11"}


def test_ghz2_yy_anti_parity():
    # <YY> = -1 on the Bell state
    rec = ms.acquire_shots(NOISELESS, qc.build_ghz(2), "YY", 2000, np.random.default_rng(1))
    assert set(rec.counts) <= {"01", "10"}


@settings(max_examples=20)
@given(st.text("XYZ", min_size=3, max_size=3), st.integers(1, 3000), st.integers(0, 2**32 - 1))
def test_counts_sum_to_shots(setting, m_s, seed):
    prof = pl.PlatformProfile("n", noise=pl.NoiseModel(0.01, 0.05, 0.1))
    rec = ms.acquire_shots(prof, qc.build_ghz(3), setting, m_s, np.random.default_rng(seed))
    assert sum(rec.counts.values()) == m_s == rec.shots


def test_acquire_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ms.acquire_shots(NOISELESS, qc.build_ghz(3), "ZZZ", 0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        ms.acquire_shots(NOISELESS, qc.build_ghz(3), "ZZ", 10, np.random.default_rng(0))


@pytest.mark.parametrize("seed", range(4))
def test_born_probabilities_within_4_se(seed):
    rng = np.random.default_rng(seed)
    c = qc.sample_qv_circuit(3, 2, rng)
    setting = ms.sample_settings_random(3, 1, rng)[0]
    m_s = 20000
    rec = ms.acquire_shots(NOISELESS, c, setting, m_s, rng)
    p = born_probabilities(c, setting)
    for i in np.flatnonzero(p >= 0.01):
        freq = rec.counts.get(ms.bitstring(int(i), 3), 0) / m_s
        assert abs(freq - p[i]) <= 4 * np.sqrt(p[i] * (1 - p[i]) / m_s)


def test_prepared_probabilities_match_oracle():
    c = qc.qv_circuit_from_seed(4, 3, 5)
    prep = ms.PreparedState(NOISELESS, c)
    for setting in ("XYZX", "ZZZZ", "YYXZ"):
        np.testing.assert_allclose(prep.probabilities(setting), born_probabilities(c, setting), atol=1e-12)


def test_readout_flips_single_qubit():
    eps = 0.1
    prof = pl.PlatformProfile("r", noise=pl.NoiseModel(0, 0, eps))
    rec = ms.acquire_shots(prof, qc.Circuit(1), "Z", 40000, np.random.default_rng(0))
    freq = rec.counts.get("1", 0) / 40000
    assert abs(freq - eps) < 4 * np.sqrt(eps * (1 - eps) / 40000)


def test_trajectory_path_matches_density_path():
    c = qc.qv_circuit_from_seed(4, 2, 8)
    prof = pl.PlatformProfile("t", noise=pl.NoiseModel(0.02, 0.1, 0))
    dm = ms.PreparedState(prof, c)
    traj = ms.PreparedState(prof, c, dm_max_qubits=2)
    assert traj.method == "trajectory" and dm.method == "density-matrix"
    m_s = 40000
    rec = traj.sample("XZYZ", m_s, np.random.default_rng(0))
    p = dm.probabilities("XZYZ")
    for i in np.flatnonzero(p >= 0.01):
        freq = rec.counts.get(ms.bitstring(int(i), 4), 0) / m_s
        assert abs(freq - p[i]) <= 4 * np.sqrt(p[i] * (1 - p[i]) / m_s)


def test_trajectory_path_needs_no_exact_probabilities():
    prep = ms.PreparedState(NOISELESS, qc.build_ghz(3), dm_max_qubits=2)
    with pytest.raises(CapacityError):
        prep.probabilities("ZZZ")


def test_prepared_state_capacity():
    with pytest.raises(CapacityError):
        ms.PreparedState(NOISELESS, qc.build_ghz(14))


def test_line_platform_readout_in_logical_order():
    # GHZ on a line with routing: Z-basis outcomes must still be all-equal
    prof = pl.PlatformProfile("line", "superconducting", pl.NoiseModel(), "line")
    c = qc.Circuit(4, [qc.Gate((0,), qc.H), qc.Gate((0, 3), qc.CNOT),
                       qc.Gate((3, 1), qc.CNOT), qc.Gate((1, 2), qc.CNOT)])
    rec = ms.acquire_shots(prof, c, "ZZZZ", 500, np.random.default_rng(0))
    assert set(rec.counts) <= {"0000", "1111"}


def test_acquire_dataset_thread_independent():
    c = qc.qv_circuit_from_seed(4, 2, 1)
    prof = pl.load_preset("trapped_ion")
    settings_list = ms.sample_settings_random(4, 12, np.random.default_rng(0))
    a = ms.acquire_dataset(prof, c, settings_list, 100, seed=42, threads=1)
    b = ms.acquire_dataset(prof, c, settings_list, 100, seed=42, threads=4)
    assert a.dumps() == b.dumps()
    assert a.metadata["technology"] == "trapped-ion"


# --- dataset format -----------------------------------------------------------------

def small_dataset():
    c = qc.build_ghz(3)
    s = ms.sample_settings_random(3, 5, np.random.default_rng(0))
    return ms.acquire_dataset(NOISELESS, c, s, 50, seed=3, metadata={"note": "x"})


def test_dataset_roundtrip(tmp_path):
    ds = small_dataset()
    path = tmp_path / "d.jsonl"
    ds.save(path)
    back = ms.ingest_dataset(path)
    assert back.dumps() == ds.dumps()
    assert back.m_u == 5 and back.m_s == 50 and back.seed == 3
    assert back.metadata["note"] == "x"


def test_dataset_header_fields(tmp_path):
    import json
    head = json.loads(small_dataset().dumps().splitlines()[0])
    assert {"platform", "circuit_label", "n_qubits", "m_u", "m_s", "seed"} <= set(head)


def test_ingest_rejects_bad_count_sum():
    text = small_dataset().dumps().splitlines()
    text[3] = '{"bases": "ZZZ", "counts": {"000": 10}}'
    with pytest.raises(DatasetError, match="record 2") as err:
        ms.parse_dataset("\n".join(text))
    assert err.value.record == 2


def test_ingest_rejects_bad_outcome_length():
    text = small_dataset().dumps().splitlines()
    text[1] = '{"bases": "ZZZ", "counts": {"00": 50}}'
    with pytest.raises(DatasetError, match="record 0"):
        ms.parse_dataset("\n".join(text))


def test_ingest_rejects_parse_error():
    with pytest.raises(DatasetError, match="parse"):
        ms.parse_dataset('{"platform": "a", "circuit_label": "c", "n_qubits": 1}\n{oops')


def test_ingest_real_device_schema():
    # hand-written file, as a real device would produce: varying shots per record
    text = "\n".join([
        '{"platform": "lab", "circuit_label": "bell", "n_qubits": 2}',
        '{"bases": "ZZ", "counts": {"00": 48, "11": 52}, "shots": 100}',
        '{"bases": "XX", "counts": {"00": 30, "11": 30}, "shots": 60}',
    ])
    ds = ms.parse_dataset(text)
    assert ds.m_u == 2 and ds.m_s is None and ds.total_shots == 160
    assert ms.parse_dataset(ds.dumps()).dumps() == ds.dumps()


def test_ingest_header_m_u_mismatch():
    text = small_dataset().dumps().splitlines()
    with pytest.raises(DatasetError):
        ms.parse_dataset("\n".join(text[:-1]))
