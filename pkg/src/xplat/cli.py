"""Command-line pipeline: gen, acquire, estimate, subsystem, pca, route, report.

Everything for one run lives under ``--out`` (default ``runs/default``)::

    manifest.json  circuits/  datasets/  estimates/  analysis/

``manifest.json`` records the master seed and the parameters of every stage.
Its hash (over everything except timestamps) is embedded in each output, and
all randomness is drawn from named substreams of the master seed, so the same
command sequence reproduces the same bytes regardless of ``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import itertools
import json
import sys
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import __version__
from . import analyze as an
from . import circuits as qc
from . import estimate as es
from . import measure as me
from . import platforms as pl
from . import route as rt
from .errors import CapacityError, DatasetError, UndefinedValueError
from .seeding import substream

SUBDIRS = ("circuits", "datasets", "estimates", "analysis")
LOCK_TIMEOUT = 30  # seconds


class CliError(Exception):
    pass


# --- run directory ---------------------------------------------------------------

# wall-clock times and the directory name do not change any number
_UNHASHED = ("timestamps", "run_id")


def manifest_hash(manifest: dict) -> str:
    body = {k: v for k, v in manifest.items() if k not in _UNHASHED}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


class Run:
    """A run directory with its manifest, held under a lock while in use."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        for sub in SUBDIRS:
            (self.root / sub).mkdir(exist_ok=True)
        self.lock = FileLock(str(self.root / ".lock"))
        self.manifest: dict = {}

    def load(self, seed: int | None) -> None:
        """Read (or start) the manifest; call with the lock held."""
        path = self.root / "manifest.json"
        if path.exists():
            self.manifest = json.loads(path.read_text())
            if seed is not None and seed != self.manifest["seed"]:
                raise CliError(
                    f"run {self.root} was created with seed {self.manifest['seed']}, not {seed}"
                )
        else:
            self.manifest = {"run_id": self.root.name, "seed": 0 if seed is None else seed,
                             "version": __version__, "circuits": {}, "platforms": {},
                             "acquisitions": {}, "estimates": {}, "timestamps": {}}

    @property
    def seed(self) -> int:
        return int(self.manifest["seed"])

    @property
    def hash(self) -> str:
        return manifest_hash(self.manifest)

    def rng(self, name: str) -> np.random.Generator:
        return substream(self.seed, name)

    def stamp(self, command: str) -> None:
        now = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        self.manifest.setdefault("timestamps", {})[command] = now

    def save_manifest(self) -> None:
        (self.root / "manifest.json").write_text(json.dumps(self.manifest, indent=1, sort_keys=True) + "\n")

    def circuit(self, label: str | None) -> tuple[str, qc.Circuit]:
        circuits = self.manifest["circuits"]
        if label is None:
            if len(circuits) != 1:
                raise CliError(f"choose a circuit with --circuit; run has {sorted(circuits)}")
            label = next(iter(circuits))
        if label not in circuits:
            raise CliError(f"no circuit {label!r} in run; have {sorted(circuits)}")
        return label, qc.Circuit.load(self.root / circuits[label]["file"])

    def datasets(self, label: str) -> list[me.MeasurementDataset]:
        entries = self.manifest["acquisitions"].get(label, {}).get("datasets", {})
        missing = [f for f in entries.values() if not (self.root / f).exists()]
        if missing:
            raise CliError(f"dataset files missing: {missing}")
        return [me.ingest_dataset(self.root / entries[name]) for name in sorted(entries)]


def _write_text(path: Path, text: str) -> None:
    path.write_text(text)


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def _csv_text(rows, run_hash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# manifest_sha256={run_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


# --- commands --------------------------------------------------------------------

def cmd_gen(args, run: Run) -> list[Path]:
    if args.ghz is not None:
        circuit = qc.build_ghz(args.ghz)
        spec = {"kind": "ghz", "n": args.ghz, "d": None, "seed": None}
    else:
        if args.d is None:
            raise CliError("--qv needs --d")
        label = args.label or f"qv{args.qv}d{args.d}"
        seed = int(run.rng(f"circuit:{label}").integers(2**63))
        circuit = qc.qv_circuit_from_seed(args.qv, args.d, seed, label=label)
        spec = {"kind": "qv", "n": args.qv, "d": args.d, "seed": seed}
    if args.label:
        circuit.label = args.label
    path = run.root / "circuits" / f"{circuit.label}.json"
    spec.update(label=circuit.label, file=str(path.relative_to(run.root)))
    run.manifest["circuits"][circuit.label] = spec
    data = circuit.to_dict()
    data["manifest_sha256"] = run.hash
    _write_text(path, json.dumps(data, indent=1) + "\n")
    return [path]


def _resolve_platform(name: str) -> pl.PlatformProfile:
    if Path(name).exists():
        return pl.load_profile(name)
    return pl.load_preset(name)


def cmd_acquire(args, run: Run) -> list[Path]:
    label, circuit = run.circuit(args.circuit)
    n = circuit.n_qubits
    if args.all_settings:
        settings = me.all_pauli_settings(n)
        sampler = "all"
    elif args.sampler == "greedy":
        settings = me.sample_settings_greedy(n, args.mu, run.rng(f"settings:{label}"),
                                             n_candidates=args.candidates)
        sampler = "greedy"
    else:
        settings = me.sample_settings_random(n, args.mu, run.rng(f"settings:{label}"))
        sampler = "random"
    profiles = [_resolve_platform(p) for p in args.platform]
    names = [p.name for p in profiles]
    if len(set(names)) != len(names):
        raise CliError(f"platform names must be unique, got {names}")
    entry = run.manifest["acquisitions"].setdefault(label, {"datasets": {}})
    entry.update(m_u=len(settings), m_s=args.ms, sampler=sampler)
    for p in profiles:
        run.manifest["platforms"][p.name] = p.to_dict()
    datasets = []
    for p in profiles:
        seed = int(run.rng(f"shots:{p.name}:{label}").integers(2**63))
        ds = me.acquire_dataset(p, circuit, settings, args.ms, seed, threads=args.threads)
        datasets.append(ds)
    paths = []
    for ds in datasets:
        path = run.root / "datasets" / f"{label}__{ds.platform}.jsonl"
        entry["datasets"][ds.platform] = str(path.relative_to(run.root))
        paths.append(path)
    run_hash = run.hash
    for ds, path in zip(datasets, paths):
        ds.metadata["manifest_sha256"] = run_hash
        _write_text(path, ds.dumps())
    return paths


def _check_datasets(datasets, label):
    if len(datasets) < 1:
        raise CliError(f"no datasets acquired for circuit {label!r}")
    sizes = {ds.n_qubits for ds in datasets}
    if len(sizes) != 1:
        raise DatasetError(f"datasets have different qubit counts: {sorted(sizes)}")


def _diagonal(ds, protocol, B, run, label, threads):
    """Self-consistency entry from two random shot halves of one dataset.

    Both halves keep every setting, so overlap and purities see the same
    setting design, as they do for a real pair of platforms.
    """
    a, b = es.split_shots(ds, run.rng(f"split:{label}:{ds.platform}"))
    est = es.estimate_fidelity(a, b, protocol, B=B, rng=run.rng(f"bootstrap:{label}:{ds.platform}"),
                               threads=threads)
    est.pair = (ds.platform, ds.platform)
    return est, "shot halves (every setting split in two)"


def cmd_estimate(args, run: Run) -> list[Path]:
    label, _ = run.circuit(args.circuit)
    datasets = run.datasets(label)
    _check_datasets(datasets, label)
    n = datasets[0].n_qubits
    protocol = es.resolve_protocol(args.protocol, n)
    names = [ds.platform for ds in datasets]
    k = len(datasets)
    matrix = np.full((k, k), np.nan)
    entries = []
    split_rule = None
    # compute everything before writing anything
    for i, j in itertools.combinations_with_replacement(range(k), 2):
        if i == j:
            est, split_rule = _diagonal(datasets[i], protocol, args.B, run, label, args.threads)
        else:
            est = es.estimate_fidelity(datasets[i], datasets[j], protocol, B=args.B,
                                       rng=run.rng(f"bootstrap:{label}:{names[i]}:{names[j]}"),
                                       threads=args.threads)
        matrix[i, j] = matrix[j, i] = est.fidelity
        entries.append(est.to_dict())
    run.manifest["estimates"][label] = {"protocol": protocol, "B": args.B}
    run_hash = run.hash
    payload = {"manifest_sha256": run_hash, "circuit": label, "protocol": protocol,
               "diagonal": split_rule, "platforms": names, "estimates": entries}
    json_path = run.root / "estimates" / f"{label}_fidelities.json"
    csv_path = run.root / "estimates" / f"{label}_matrix.csv"
    rows = [["platform"] + names] + [[names[i]] + [_num(v) for v in matrix[i]] for i in range(k)]
    _write_text(json_path, _json_text(payload))
    _write_text(csv_path, _csv_text(rows, run_hash))
    return [json_path, csv_path]


def cmd_subsystem(args, run: Run) -> list[Path]:
    label, _ = run.circuit(args.circuit)
    datasets = run.datasets(label)
    _check_datasets(datasets, label)
    n = datasets[0].n_qubits
    sizes = args.sizes or list(range(1, n + 1))
    if any(s < 1 or s > n for s in sizes):
        raise CliError(f"subsystem sizes must lie in 1..{n}")
    rows = [["size", "platform_i", "platform_j", "mean_fidelity", "std_fidelity", "n_subsets"]]
    for i, j in itertools.combinations(range(len(datasets)), 2):
        a, b = datasets[i], datasets[j]
        for size in sizes:
            rng = run.rng(f"subsets:{label}:{a.platform}:{b.platform}:{size}")
            values = np.array([f for _, f in es.subsystem_fidelities(
                a, b, size, args.protocol, args.max_subsets, rng)])
            rows.append([size, a.platform, b.platform, _num(values.mean()),
                         _num(values.std()), len(values)])
    path = run.root / "analysis" / f"{label}_subsystems.csv"
    _write_text(path, _csv_text(rows, run.hash))
    return [path]


def cmd_pca(args, run: Run) -> list[Path]:
    labels = args.circuits or sorted(run.manifest["acquisitions"])
    datasets = []
    for label in labels:
        if label not in run.manifest["acquisitions"]:
            raise CliError(f"no datasets acquired for circuit {label!r}")
        datasets.extend(run.datasets(label))
    fm = an.build_feature_matrix(datasets, args.shots_per_sample, args.repeats, args.w,
                                 args.n_min, run.rng("pca"), strict=args.strict)
    result = an.pca_project(fm, args.k)
    run_hash = run.hash
    feat_rows = [["platform", "technology", "circuit"] + fm.columns]
    feat_rows += [[lab["platform"], lab["technology"], lab["circuit"]] + [_num(v) for v in row]
                  for lab, row in zip(fm.labels, fm.values)]
    proj_rows = [["label", "technology", "circuit"] + [f"PC{a + 1}" for a in range(args.k)]]
    proj_rows += [[lab["platform"], lab["technology"], lab["circuit"]] + [_num(v) for v in row]
                  for lab, row in zip(fm.labels, result.projections)]
    sidecar = result.to_dict()
    sidecar.update(manifest_sha256=run_hash, features=fm.metadata, n_features=len(fm.columns),
                   circuits=labels)
    out = run.root / "analysis"
    paths = [out / "features.csv", out / "pca.csv", out / "pca.json"]
    _write_text(paths[0], _csv_text(feat_rows, run_hash))
    _write_text(paths[1], _csv_text(proj_rows, run_hash))
    _write_text(paths[2], _json_text(sidecar))
    return paths


def cmd_route(args, run: Run) -> list[Path]:
    graph = rt.graph_from_spec(args.graph, args.n)
    n = graph.n_qubits
    depths = args.depths or list(range(1, 7))
    rng = run.rng(f"route:{graph.name}:{n}")
    points = rt.overhead_curve(n, depths, graph, args.trials, rng)
    rows = [["d", "graph", "heuristic", "mean_cnot_equivalent", "std_cnot_equivalent",
             "complete_graph_cnot_equivalent"]]
    for pt in points:
        rows.append([pt.d, pt.graph, rt.HEURISTIC, _num(pt.mean_total), _num(pt.std_total),
                     rt.CNOTS_PER_SU4 * (n // 2) * pt.d])
    path = run.root / "analysis" / f"route_{graph.name}_n{n}.csv"
    _write_text(path, _csv_text(rows, run.hash))
    return [path]


def cmd_report(args, run: Run) -> list[Path]:
    manifest = {k: v for k, v in run.manifest.items() if k not in _UNHASHED}
    bundle = {"manifest": manifest, "manifest_sha256": run.hash, "artifacts": {}}
    for sub in ("estimates", "analysis"):
        for path in sorted((run.root / sub).glob("*")):
            rel = str(path.relative_to(run.root))
            if path.suffix == ".json":
                bundle["artifacts"][rel] = json.loads(path.read_text())
            elif path.suffix == ".csv":
                lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
                bundle["artifacts"][rel] = list(csv.reader(lines))
    path = run.root / "report.json"
    _write_text(path, _json_text(bundle))
    return [path]


COMMANDS = {"gen": cmd_gen, "acquire": cmd_acquire, "estimate": cmd_estimate,
            "subsystem": cmd_subsystem, "pca": cmd_pca, "route": cmd_route, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xplat", description=__doc__.split("\n")[0])
    parser.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    parser.add_argument("--out", default="runs/default", help="run directory")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a test circuit")
    kind = p.add_mutually_exclusive_group(required=True)
    kind.add_argument("--ghz", type=int, metavar="N")
    kind.add_argument("--qv", type=int, metavar="N")
    p.add_argument("--d", type=int, help="QV depth")
    p.add_argument("--label")

    p = sub.add_parser("acquire", help="simulate randomized measurements on platforms")
    p.add_argument("--platform", action="append", required=True,
                   help="preset name or profile file (repeatable)")
    p.add_argument("--circuit")
    p.add_argument("--mu", type=int, default=100)
    p.add_argument("--ms", type=int, default=2000)
    p.add_argument("--sampler", choices=("random", "greedy"), default="greedy")
    p.add_argument("--candidates", type=int, default=200)
    p.add_argument("--all-settings", action="store_true", help="measure all 3^N settings")

    p = sub.add_parser("estimate", help="pairwise cross-platform fidelities")
    p.add_argument("--circuit")
    p.add_argument("--protocol", default="auto", choices=("auto", "1", "2", "I", "II"))
    p.add_argument("--B", type=int, default=100, help="bootstrap replicates (0 = none)")

    p = sub.add_parser("subsystem", help="fidelities of subsystems vs size")
    p.add_argument("--circuit")
    p.add_argument("--protocol", default="auto", choices=("auto", "1", "2", "I", "II"))
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--max-subsets", type=int, default=None)

    p = sub.add_parser("pca", help="Pauli-feature PCA across platforms")
    p.add_argument("--circuits", nargs="+")
    p.add_argument("--shots-per-sample", type=int, default=1000)
    p.add_argument("--repeats", type=int, default=500)
    p.add_argument("--w", type=int, default=an.DEFAULT_WEIGHT)
    p.add_argument("--n-min", type=int, default=an.DEFAULT_N_MIN)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--strict", action="store_true", help="disjoint shot samples")

    p = sub.add_parser("route", help="SWAP overhead of random QV circuits")
    p.add_argument("--graph", default="line", help="complete, line, t-shaped, or a graph JSON file")
    p.add_argument("--n", type=int, default=7)
    p.add_argument("--depths", type=int, nargs="+")
    p.add_argument("--trials", type=int, default=50)

    sub.add_parser("report", help="bundle all run artifacts into report.json")
    return parser


def _record_args(run: Run, args) -> None:
    # threads never changes results, so it stays out of the manifest
    skip = {"seed", "out", "threads", "command"}
    params = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    run.manifest.setdefault("commands", {})[args.command] = params


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        run = Run(args.out)
        with run.lock.acquire(timeout=LOCK_TIMEOUT):
            run.load(args.seed)
            if args.command != "report":
                _record_args(run, args)
            paths = COMMANDS[args.command](args, run)
            run.stamp(args.command)
            run.save_manifest()
    except Timeout:
        print(f"error: run directory {args.out} is locked by another process", file=sys.stderr)
        return 3
    except (CliError, DatasetError, CapacityError, UndefinedValueError, es.BootstrapError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
