"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every test runs its full computation, prints the verdict with the measured
numbers, then asserts. Failing criteria are left failing on purpose.
"""

import itertools
import json
import time

import numpy as np
import pytest
from sklearn.metrics import silhouette_score

from xplat import analyze as an
from xplat import circuits as qc
from xplat import cli
from xplat import estimate as es
from xplat import measure as ms
from xplat import platforms as pl
from xplat import route as rt

pytestmark = pytest.mark.acceptance


def report(capsys, number, title, passed, detail):
    line = f"CRITERION {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    with capsys.disabled():
        print("\n" + line)
    return passed


def exact_pair_fidelity(a, b, circuit):
    ra = pl.platform_density_matrix(a, circuit, include_readout=True)
    rb = pl.platform_density_matrix(b, circuit, include_readout=True)
    return pl.exact_fidelity(ra, rb)


# --- criteria 1 and 2: oracle convergence and protocol agreement ---------------------

def _oracle_cases():
    rng = np.random.default_rng(2024)
    cases = []
    for k in range(10):
        n = int(rng.integers(2, 6))
        if rng.random() < 0.7:
            circuit = qc.qv_circuit_from_seed(n, int(rng.integers(1, 4)), int(rng.integers(2**31)))
        else:
            circuit = qc.build_ghz(n)
        profiles = [pl.PlatformProfile(f"case{k}_{side}", "simulation",
                                       pl.NoiseModel(float(rng.uniform(0, 0.005)),
                                                     float(rng.uniform(0, 0.05)),
                                                     float(rng.uniform(0, 0.03))))
                    for side in "ab"]
        cases.append((circuit, profiles, [int(s) for s in rng.integers(2**31, size=2)]))
    return cases


@pytest.fixture(scope="module")
def oracle_runs():
    start = time.perf_counter()
    rows = []
    for k, (circuit, (a, b), seeds) in enumerate(_oracle_cases()):
        settings = ms.all_pauli_settings(circuit.n_qubits)
        da = ms.acquire_dataset(a, circuit, settings, 2000, seeds[0])
        db = ms.acquire_dataset(b, circuit, settings, 2000, seeds[1])
        exact = exact_pair_fidelity(a, b, circuit)
        e1 = es.estimate_fidelity(da, db, "I", B=100, rng=np.random.default_rng([k, 1]))
        e2 = es.estimate_fidelity(da, db, "II", B=100, rng=np.random.default_rng([k, 2]))
        rows.append((circuit, exact, e1, e2))
    return rows, time.perf_counter() - start


def test_criterion_01_oracle_convergence(oracle_runs, capsys):
    rows, elapsed = oracle_runs
    good = sum(abs(e1.fidelity - ex) <= 0.02 and abs(e2.fidelity - ex) <= 0.02
               for _, ex, e1, e2 in rows)
    worst = max(max(abs(e1.fidelity - ex), abs(e2.fidelity - ex)) for _, ex, e1, e2 in rows)
    ok = good >= 9 and elapsed < 300
    report(capsys, 1, "oracle convergence", ok,
           f"{good}/10 pairs within 0.02 (worst {worst:.4f}), {elapsed:.0f}s")
    assert ok


def test_criterion_02_protocol_equivalence(oracle_runs, capsys):
    rows, _ = oracle_runs
    z = [abs(e1.fidelity - e2.fidelity) / np.hypot(e1.bootstrap_std, e2.bootstrap_std)
         for _, _, e1, e2 in rows]
    ok = all(v <= 3 for v in z)
    report(capsys, 2, "protocol equivalence", ok,
           f"max |F_I - F_II| / combined std = {max(z):.2f} over {len(z)} pairs")
    assert ok


# --- criterion 3: unbiased purity ------------------------------------------------------

def test_criterion_03_unbiased_purity(capsys):
    circuit = qc.qv_circuit_from_seed(3, 2, 31)
    platform = pl.PlatformProfile("noisy3", "simulation", pl.NoiseModel(0.002, 0.03, 0.01))
    exact = pl.platform_density_matrix(platform, circuit, include_readout=True).purity()
    prepared = ms.PreparedState(platform, circuit)
    settings = ms.all_pauli_settings(3)
    values = {"I": [], "II": [], "naive": []}
    for seed in range(200):
        ds = ms.acquire_dataset(platform, circuit, settings, 500, [seed, 3], prepared=prepared)
        values["I"].append(es.purity_protocol1(ds))
        values["II"].append(es.purity_protocol2(ds))
        values["naive"].append(es.purity_protocol1(ds, unbiased=False))
    z = {k: (np.mean(v) - exact) / (np.std(v, ddof=1) / np.sqrt(len(v))) for k, v in values.items()}
    ok = abs(z["I"]) <= 3 and abs(z["II"]) <= 3 and abs(z["naive"]) > 3
    report(capsys, 3, "unbiased purity", ok,
           f"exact {exact:.4f}; z-scores I {z['I']:+.2f}, II {z['II']:+.2f}, naive {z['naive']:+.1f}")
    assert ok


# --- criterion 4: greedy vs random settings --------------------------------------------

def test_criterion_04_greedy_vs_random(capsys):
    start = time.perf_counter()
    circuit = qc.build_ghz(5)
    a, b = pl.load_preset("trapped_ion"), pl.load_preset("superconducting")
    exact = exact_pair_fidelity(a, b, circuit)
    pa, pb = ms.PreparedState(a, circuit), ms.PreparedState(b, circuit)
    grid = (10, 20, 40, 80)
    err = {(m, kind): [] for m in grid for kind in ("greedy", "random")}
    for seed in range(20):
        for m in grid:
            rng = np.random.default_rng([seed, m])
            designs = {"greedy": ms.sample_settings_greedy(5, m, rng),
                       "random": ms.sample_settings_random(5, m, rng)}
            for kind, settings in designs.items():
                da = ms.acquire_dataset(a, circuit, settings, 2000, [seed, m, 1], prepared=pa)
                db = ms.acquire_dataset(b, circuit, settings, 2000, [seed, m, 2], prepared=pb)
                err[m, kind].append(abs(es.estimate_fidelity(da, db).fidelity - exact))
    elapsed = time.perf_counter() - start
    means = {key: float(np.mean(v)) for key, v in err.items()}
    ok = all(means[m, "greedy"] <= means[m, "random"] for m in grid) and elapsed < 600
    detail = ", ".join(f"M_U={m}: {means[m, 'greedy']:.3f} vs {means[m, 'random']:.3f}" for m in grid)
    report(capsys, 4, "greedy vs random", ok, f"greedy vs random error {detail}, {elapsed:.0f}s")
    assert ok


# --- criterion 5: error versus tomography fraction -------------------------------------

def test_criterion_05_tomography_fraction(capsys):
    circuit = qc.build_ghz(5)
    sim = pl.load_preset("simulation")
    prepared = ms.PreparedState(sim, circuit)
    settings = ms.all_pauli_settings(5)
    grid = (10, 25, 50, 100, 243)
    err = {m: [] for m in grid}
    for seed in range(10):
        fa = ms.acquire_dataset(sim, circuit, settings, 2000, [seed, 1], prepared=prepared)
        fb = ms.acquire_dataset(sim, circuit, settings, 2000, [seed, 2], prepared=prepared)
        for m in grid:
            keep = ms.subsample_settings(settings, m, np.random.default_rng([seed, m]))
            da = fa.with_records([fa.records[k] for k in keep])
            db = fb.with_records([fb.records[k] for k in keep])
            err[m].append(abs(es.estimate_fidelity(da, db).fidelity - 1.0))
    curve = [float(np.mean(err[m])) for m in grid]
    slope = np.polyfit(np.log(grid), curve, 1)[0]
    ok = slope < 0 and curve[0] > curve[-1] and curve[grid.index(100)] <= 0.03
    report(capsys, 5, "tomography fraction", ok,
           "mean error " + ", ".join(f"{m}:{c:.4f}" for m, c in zip(grid, curve)))
    assert ok


# --- criterion 6: subsystems --------------------------------------------------------------

def test_criterion_06_subsystems(capsys):
    circuit = qc.build_ghz(5)
    sim = pl.load_preset("simulation")
    prepared = ms.PreparedState(sim, circuit)
    rho = pl.platform_density_matrix(sim, circuit)
    settings = ms.all_pauli_settings(5)
    da = ms.acquire_dataset(sim, circuit, settings, 2000, 61, prepared=prepared)
    db = ms.acquire_dataset(sim, circuit, settings, 2000, 62, prepared=prepared)
    worst = 0.0
    for size in (1, 2):
        for sub in itertools.combinations(range(5), size):
            reduced = rho.partial_trace(list(sub))
            exact_f = pl.exact_fidelity(reduced, reduced)
            ra, rb = es.subsystem_restrict(da, sub), es.subsystem_restrict(db, sub)
            for protocol in ("I", "II"):
                e = es.estimate_fidelity(ra, rb, protocol)
                worst = max(worst, abs(e.purity_i - reduced.purity()),
                            abs(e.purity_j - reduced.purity()), abs(e.fidelity - exact_f))
    ok = worst <= 0.03
    report(capsys, 6, "subsystem oracle", ok,
           f"worst deviation {worst:.4f} over 15 subsets, both protocols")
    assert ok


# --- criterion 7: 13-qubit scale -----------------------------------------------------------

def test_criterion_07_thirteen_qubits(capsys):
    start = time.perf_counter()
    circuit = qc.qv_circuit_from_seed(13, 2, 7)
    a = pl.PlatformProfile("ion_a", "trapped-ion", pl.NoiseModel(4e-4, 0.0120, 0.005))
    b = pl.PlatformProfile("ion_b", "trapped-ion", pl.NoiseModel(4e-4, 0.0121, 0.005))
    settings = ms.sample_settings_greedy(13, 100, np.random.default_rng(13))
    da = ms.acquire_dataset(a, circuit, settings, 500, 131)
    db = ms.acquire_dataset(b, circuit, settings, 500, 132)
    e = es.estimate_fidelity(da, db, "I", B=100, rng=np.random.default_rng(133))
    elapsed = time.perf_counter() - start
    ok = np.isfinite(e.fidelity) and e.bootstrap_std < 0.1 and elapsed < 1800
    report(capsys, 7, "13-qubit scale", ok,
           f"F={e.fidelity:.3f} bootstrap std {e.bootstrap_std:.3f} "
           f"(purities {e.purity_i:.3f}, {e.purity_j:.3f}), {elapsed:.0f}s")
    assert ok


# --- criterion 8: routing overhead -------------------------------------------------------

def test_criterion_08_routing(capsys):
    depths = list(range(1, 7))
    complete = rt.overhead_curve(7, depths, rt.complete_graph(7), 30, np.random.default_rng(8))
    line = rt.overhead_curve(7, depths, rt.line_graph(7), 30, np.random.default_rng(8))
    exact = all(p.mean_total == 3 * (7 // 2) * p.d and p.std_total == 0 for p in complete)
    exceeds = all(l.mean_total > c.mean_total for l, c in zip(line, complete))
    y = np.array([p.mean_total for p in line])
    slope, intercept = np.polyfit(depths, y, 1)
    fit = slope * np.array(depths) + intercept
    r2 = 1 - np.sum((y - fit) ** 2) / np.sum((y - y.mean()) ** 2)
    ok = exact and exceeds and slope > 0 and r2 > 0.95
    report(capsys, 8, "routing trend", ok,
           f"complete exact={exact}, line exceeds={exceeds}, slope {slope:.2f}, R^2 {r2:.4f}")
    assert ok


# --- criterion 9: PCA separation ----------------------------------------------------------

def test_criterion_09_pca_separation(capsys):
    families = {
        "trapped-ion": [pl.PlatformProfile(f"ion{k}", "trapped-ion", pl.NoiseModel(4e-4, p, 0.005))
                        for k, p in enumerate((0.008, 0.012))],
        "superconducting": [pl.PlatformProfile(f"sc{k}", "superconducting",
                                               pl.NoiseModel(1e-3, p, 0.02), "line")
                            for k, p in enumerate((0.02, 0.025))],
    }
    circuits = [qc.qv_circuit_from_seed(7, 2, 11, "qv7d2"), qc.qv_circuit_from_seed(7, 3, 12, "qv7d3")]
    settings = ms.sample_settings_random(7, 200, np.random.default_rng(1))
    datasets = []
    for ci, circuit in enumerate(circuits):
        for pi, platform in enumerate(p for ps in families.values() for p in ps):
            datasets.append(ms.acquire_dataset(platform, circuit, settings, 500, [9, ci, pi]))
    fm = an.build_feature_matrix(datasets, 1000, 50, rng=0)
    res = an.pca_project(fm, 2)
    circ = [lab["circuit"] for lab in fm.labels]
    tech = [lab["technology"] for lab in fm.labels]
    s1 = silhouette_score(res.projections[:, :1], circ)
    s2 = silhouette_score(res.projections[:, 1:2], tech)
    ratios = res.explained_variance_ratio
    ok = s1 > 0 and s2 > 0 and len(ratios) == 2
    report(capsys, 9, "PCA separation", ok,
           f"silhouette PC1/circuit {s1:.3f}, PC2/family {s2:.3f}; "
           f"explained variance {ratios[0]:.3f}, {ratios[1]:.3f}")
    assert ok


# --- criterion 10: reproducibility ----------------------------------------------------------

def _pipeline(out, threads):
    common = ["--out", str(out), "--seed", "10", "--threads", str(threads)]
    steps = [["gen", "--ghz", "4"], ["gen", "--qv", "4", "--d", "2"],
             ["acquire", "--circuit", "ghz4", "--platform", "trapped_ion", "--platform",
              "superconducting", "--mu", "30", "--ms", "200"],
             ["acquire", "--circuit", "qv4d2", "--platform", "trapped_ion", "--platform",
              "superconducting", "--mu", "30", "--ms", "200"],
             ["estimate", "--circuit", "ghz4", "--B", "20"],
             ["estimate", "--circuit", "qv4d2", "--B", "20"],
             ["subsystem", "--circuit", "ghz4", "--sizes", "1", "2"],
             ["pca", "--shots-per-sample", "1000", "--repeats", "5"],
             ["route", "--graph", "line", "--n", "5", "--depths", "1", "2", "3", "--trials", "5"],
             ["report"]]
    for step in steps:
        assert cli.main(common + step) == 0, step


def test_criterion_10_reproducibility(tmp_path, capsys):
    runs = {"first_t1": 1, "second_t1": 1, "third_t8": 8}
    for name, threads in runs.items():
        _pipeline(tmp_path / name, threads)
    base = tmp_path / "first_t1"
    files = sorted(p.relative_to(base) for p in base.rglob("*")
                   if p.is_file() and p.name not in ("manifest.json", ".lock"))
    mismatched = [str(rel) for rel in files for other in ("second_t1", "third_t8")
                  if (base / rel).read_bytes() != (tmp_path / other / rel).read_bytes()]
    hashes = {cli.manifest_hash(json.loads((tmp_path / name / "manifest.json").read_text()))
              for name in runs}
    ok = not mismatched and len(hashes) == 1 and len(files) >= 10
    report(capsys, 10, "reproducibility", ok,
           f"{len(files)} output files compared over 3 runs (threads 1, 1, 8); "
           f"{len(mismatched)} mismatches; {len(hashes)} distinct manifest hash")
    assert ok
