"""Reproducible experiment pipelines behind the command-line interface.

A run is described by a :class:`RunConfig` (JSON on disk). Stages read and
write plain files under an output directory::

    datasets/<name>/dataset.json, states/*.json, profiles.csv, rdms.json
    kernels/<name>__<kind>.csv (+ .json sidecar)
    embeddings/<name>__<kind>.csv (+ .json)
    clusters/<name>__<kind>.csv
    summary.json, manifest.json

Every CSV is written with ``%.17g`` floats so identical configs give
byte-identical files.
"""

import copy
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import BackendCapError, ValidationError, rng_for
from .circuits import (
    BrickworkCircuit,
    GeneratorPath,
    apply_brickwork,
    random_local_path,
    trotter_evolve,
    verify_theorem1,
    verify_theorem2,
)
from .embed import contiguous_runs, diffusion_map, kernel_pca, kmeans, same_partition
from .kernels import KernelConfig, KernelMatrix, build_kernel_matrix
from .models import (
    SOLVER_MAX_QUBITS,
    ETCParams,
    PauliSum,
    ToricLattice,
    XXZParams,
    build_etc,
    build_xxz,
    ground_state,
    random_product_bits,
    random_product_state,
)
from .shadows import ShadowEnsemble, collect_shadows
from .stabilizer import StabilizerState, toric_stabilizer_state
from .statespace import ChainOrdering, PureState

SCHEMA_VERSION = 1
EXPERIMENTS = ("xxz-sweep", "toric-vs-rps", "etc-sweep", "verify-bounds", "shadows")
EMBED_METHODS = ("diffusion_map", "kernel_pca")

# stream ids for derived seeds
_RPS, _NOISE, _SHADOW, _T1, _T2 = 1, 2, 3, 4, 5

_MODEL_DEFAULTS = {
    "xxz-sweep": {"n": 10, "n_samples": 30, "J1": 1.0, "ratio_max": 2.5, "delta": 3.0, "h0": 0.0},
    "toric-vs-rps": {"Lx": 2, "Ly": 2, "n_toric": 10, "n_rps": 10, "depths": [0, 1, 2, 3, 4]},
    "etc-sweep": {
        "Lx": 2, "Ly": 2, "JW": 1.0, "JH": -1.0, "n_etc": 10, "n_rps": 10,
        "h_values": [round(0.02 * i, 10) for i in range(11)],
    },
    "verify-bounds": {
        "theorem1_n": 4, "theorem1_trials": 200, "theorem2_n": 8, "theorem2_trials": 100,
        "include_geodesic": True, "include_trivial": True,
    },
    "shadows": {"Lx": 2, "Ly": 2, "n_toric": 10, "n_rps": 10, "T": 500},
}

_KERNEL_DEFAULTS = {
    "xxz-sweep": [{"kind": "entanglement", "beta": 2.0}, {"kind": "fidelity", "beta": 50.0}],
    "toric-vs-rps": [
        {"kind": "fidelity", "beta": 0.1, "subset_policy": "all"},
        {"kind": "entanglement", "beta": 2.0},
    ],
    "etc-sweep": [
        {"kind": "fidelity", "beta": 0.2, "subset_policy": "all"},
        {"kind": "entanglement", "beta": 2.0},
    ],
    "verify-bounds": [],
    "shadows": [{"kind": "shadow", "beta": 1.0, "nu": 1.0}, {"kind": "fidelity", "beta": 0.1, "subset_policy": "all"}],
}

_EMBED_DEFAULTS = {
    "xxz-sweep": {"method": "diffusion_map", "dims": 2, "eigen_indices": [2, 3], "k": 3, "stability_seeds": 10},
    "toric-vs-rps": {"method": "kernel_pca", "dims": 1, "eigen_indices": None, "k": 2, "stability_seeds": 1},
    "etc-sweep": {"method": "kernel_pca", "dims": 1, "eigen_indices": None, "k": 2, "stability_seeds": 1},
    "verify-bounds": {},
    "shadows": {"method": "kernel_pca", "dims": 1, "eigen_indices": None, "k": 2, "stability_seeds": 1},
}

_KERNEL_KEYS = set(KernelConfig.__dataclass_fields__)
_EMBED_KEYS = {"method", "dims", "eigen_indices", "k", "stability_seeds"}


def _require(cond, field_name, message):
    if not cond:
        raise ValidationError(f"{field_name}: {message}")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


@dataclass
class RunConfig:
    """Complete description of one run; :meth:`from_dict` fills defaults and validates."""

    experiment: str
    seed: int = 0
    threads: int = 1
    model: dict = field(default_factory=dict)
    kernels: list = field(default_factory=list)
    embedding: dict = field(default_factory=dict)
    output: str = None
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data):
        _require(isinstance(data, dict), "config", "must be a JSON object")
        known = {"experiment", "seed", "threads", "model", "kernels", "embedding", "output", "schema_version"}
        unknown = sorted(set(data) - known)
        _require(not unknown, unknown[0] if unknown else "", "unknown field")
        version = data.get("schema_version", SCHEMA_VERSION)
        _require(version == SCHEMA_VERSION, "schema_version", f"unsupported version {version!r}")
        exp = data.get("experiment")
        _require(exp in EXPERIMENTS, "experiment", f"must be one of {EXPERIMENTS}, got {exp!r}")
        seed = data.get("seed", 0)
        _require(_is_int(seed) and 0 <= seed < 2**64, "seed", "must be an integer in [0, 2^64)")
        threads = data.get("threads", 1)
        _require(_is_int(threads) and 1 <= threads <= 256, "threads", "must be an integer in 1..256")
        model = copy.deepcopy(_MODEL_DEFAULTS[exp])
        given = data.get("model", {}) or {}
        _require(isinstance(given, dict), "model", "must be an object")
        for k in given:
            _require(k in model, f"model.{k}", f"unknown field for {exp}")
        model.update(copy.deepcopy(given))
        kernels = copy.deepcopy(data.get("kernels", _KERNEL_DEFAULTS[exp]))
        _require(isinstance(kernels, list), "kernels", "must be a list")
        embedding = copy.deepcopy(_EMBED_DEFAULTS[exp])
        emb = data.get("embedding", {}) or {}
        _require(isinstance(emb, dict), "embedding", "must be an object")
        embedding.update(copy.deepcopy(emb))
        output = data.get("output")
        _require(output is None or isinstance(output, str), "output", "must be a path string")
        cfg = cls(exp, seed, threads, model, kernels, embedding, output, version)
        cfg.validate()
        return cfg

    def validate(self):
        m = self.model
        exp = self.experiment
        if exp == "xxz-sweep":
            _require(_is_int(m["n"]) and 2 <= m["n"] <= SOLVER_MAX_QUBITS, "model.n", f"must be an integer in 2..{SOLVER_MAX_QUBITS}")
            _require(_is_int(m["n_samples"]) and 1 <= m["n_samples"] <= 1000, "model.n_samples", "must be an integer in 1..1000")
            _require(_is_num(m["ratio_max"]) and m["ratio_max"] > 0, "model.ratio_max", "must be > 0")
            _require(_is_num(m["J1"]) and m["J1"] != 0, "model.J1", "must be a nonzero number")
            for k in ("delta", "h0"):
                _require(_is_num(m[k]), f"model.{k}", "must be a finite number")
        if exp in ("toric-vs-rps", "etc-sweep", "shadows"):
            for k in ("Lx", "Ly"):
                _require(_is_int(m[k]) and 2 <= m[k] <= 16, f"model.{k}", "must be an integer in 2..16")
            counts = [k for k in m if k.startswith("n_")]
            for k in counts:
                _require(_is_int(m[k]) and 0 <= m[k] <= 1000, f"model.{k}", "must be an integer in 0..1000")
            _require(sum(m[k] for k in counts) >= 1, f"model.{counts[0]}", "dataset must have at least one sample")
        n_lat = 2 * m["Lx"] * m["Ly"] if "Lx" in m else 0
        if exp == "toric-vs-rps":
            depths = m["depths"]
            _require(isinstance(depths, list) and all(_is_int(d) and 0 <= d <= 100 for d in depths),
                     "model.depths", "must be a list of integers in 0..100")
            _require(not any(depths) or n_lat <= SOLVER_MAX_QUBITS, "model.depths",
                     f"brickwork noise needs the dense backend (n <= {SOLVER_MAX_QUBITS}), lattice has {n_lat} qubits")
        if exp == "etc-sweep":
            hs = m["h_values"]
            _require(isinstance(hs, list) and hs and all(_is_num(h) for h in hs), "model.h_values",
                     "must be a nonempty list of numbers")
            for k in ("JW", "JH"):
                _require(_is_num(m[k]), f"model.{k}", "must be a finite number")
            _require(all(h == 0 for h in hs) or n_lat <= SOLVER_MAX_QUBITS, "model.h_values",
                     f"h != 0 needs the dense backend (n <= {SOLVER_MAX_QUBITS}), lattice has {n_lat} qubits")
            for k in ("JW", "JH"):
                _require(m[k] != 0, f"model.{k}", "must be nonzero so the ground state is unique")
        if exp == "shadows":
            _require(_is_int(m["T"]) and 1 <= m["T"] <= 100000, "model.T", "must be an integer in 1..100000")
            _require(n_lat <= SOLVER_MAX_QUBITS, "model.Lx", f"shadows need a dense state (n <= {SOLVER_MAX_QUBITS})")
        if exp == "verify-bounds":
            _require(_is_int(m["theorem1_n"]) and 2 <= m["theorem1_n"] <= 8, "model.theorem1_n", "must be an integer in 2..8")
            _require(_is_int(m["theorem2_n"]) and 2 <= m["theorem2_n"] <= 8, "model.theorem2_n", "must be an integer in 2..8")
            for k in ("theorem1_trials", "theorem2_trials"):
                _require(_is_int(m[k]) and 0 <= m[k] <= 100000, f"model.{k}", "must be an integer in 0..100000")
            for k in ("include_geodesic", "include_trivial"):
                _require(isinstance(m[k], bool), f"model.{k}", "must be true or false")
        for i, kc in enumerate(self.kernels):
            _require(isinstance(kc, dict), f"kernels[{i}]", "must be an object")
            bad = sorted(set(kc) - _KERNEL_KEYS)
            _require(not bad, f"kernels[{i}].{bad[0] if bad else ''}", "unknown field")
            try:
                KernelConfig(**kc)
            except ValidationError as exc:
                raise ValidationError(f"kernels[{i}]: {exc}") from None
            except TypeError as exc:
                raise ValidationError(f"kernels[{i}]: {exc}") from None
            if exp == "shadows":
                continue
            _require(kc.get("kind") != "shadow", f"kernels[{i}].kind", "shadow kernels need the shadows experiment")
        if exp != "verify-bounds":
            e = self.embedding
            bad = sorted(set(e) - _EMBED_KEYS)
            _require(not bad, f"embedding.{bad[0] if bad else ''}", "unknown field")
            _require(e["method"] in EMBED_METHODS, "embedding.method", f"must be one of {EMBED_METHODS}")
            _require(_is_int(e["dims"]) and e["dims"] >= 1, "embedding.dims", "must be an integer >= 1")
            _require(_is_int(e["k"]) and e["k"] >= 1, "embedding.k", "must be an integer >= 1")
            _require(_is_int(e["stability_seeds"]) and e["stability_seeds"] >= 1, "embedding.stability_seeds",
                     "must be an integer >= 1")
            idx = e["eigen_indices"]
            _require(idx is None or (isinstance(idx, list) and all(_is_int(i) and i >= 1 for i in idx)),
                     "embedding.eigen_indices", "must be null or a list of 1-based integers")

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "seed": self.seed,
            "threads": self.threads,
            "model": copy.deepcopy(self.model),
            "kernels": copy.deepcopy(self.kernels),
            "embedding": copy.deepcopy(self.embedding),
            "output": self.output,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config: not valid JSON ({exc})") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def hash(self):
        payload = self.to_dict()
        payload.pop("output", None)
        payload.pop("threads", None)
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def kernel_configs(self):
        return [KernelConfig(**{"seed": self.seed, **kc}) for kc in self.kernels]


@dataclass
class Dataset:
    name: str
    items: list
    samples: list


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _pmap(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _xxz_datasets(cfg):
    m = cfg.model
    N = m["n_samples"]
    order = ChainOrdering.identity(m["n"])

    def point(i):
        ratio = m["ratio_max"] * (i + 1) / N
        p = XXZParams(m["n"], m["J1"], m["J1"] * ratio, m["delta"], m["h0"])
        s = ground_state(build_xxz(p), ordering=order)
        return s.with_meta(model="xxz", ratio=ratio)

    states = _pmap(point, range(N), cfg.threads)
    samples = [{"class": "xxz", "ratio": s.meta["ratio"], "energy": s.meta["energy"]} for s in states]
    return [Dataset("xxz", states, samples)]


def _toric_state(lat, dense):
    st = toric_stabilizer_state(lat)
    return st.to_pure_state() if dense else st


def _rps(n, seed, i, order, dense):
    if dense:
        return random_product_state(n, (seed, _RPS, i), order)
    bits = random_product_bits(n, (seed, _RPS, i))
    return StabilizerState.computational_basis(bits, order, {"model": "rps", "bits": "".join(map(str, bits))})


def _toric_datasets(cfg):
    m = cfg.model
    lat = ToricLattice(m["Lx"], m["Ly"])
    order = lat.chain_ordering()
    depths = m["depths"] or [0]
    dense = lat.n <= SOLVER_MAX_QUBITS
    toric = _toric_state(lat, dense)
    rps = [_rps(lat.n, cfg.seed, i, order, dense) for i in range(m["n_rps"])]
    out = []
    for depth in depths:
        def noisy(job):
            cls_id, i, st = job
            if depth == 0:
                return st
            return apply_brickwork(st, depth, (cfg.seed, _NOISE, depth, cls_id, i))

        jobs = [(0, i, toric) for i in range(m["n_toric"])] + [(1, i, s) for i, s in enumerate(rps)]
        items = _pmap(noisy, jobs, cfg.threads)
        samples = [{"class": "toric" if c == 0 else "rps", "depth": depth, "index": i} for c, i, _ in jobs]
        out.append(Dataset(f"depth{depth}", items, samples))
    return out


def _etc_datasets(cfg):
    m = cfg.model
    lat = ToricLattice(m["Lx"], m["Ly"])
    order = lat.chain_ordering()
    dense = lat.n <= SOLVER_MAX_QUBITS
    rps = [_rps(lat.n, cfg.seed, i, order, dense) for i in range(m["n_rps"])]

    def etc_state(h):
        if h == 0 and not dense:
            # the loop terms pick the sector with W = sign(JW), H = sign(JH)
            return toric_stabilizer_state(lat, wilson=int(np.sign(m["JW"])), thooft=int(np.sign(m["JH"])))
        s = ground_state(build_etc(ETCParams(lat, m["JW"], m["JH"], h)), ordering=order)
        return s.with_meta(model="etc", h=h)

    states = _pmap(etc_state, m["h_values"], cfg.threads)
    out = []
    for h, st in zip(m["h_values"], states):
        items = [st] * m["n_etc"] + rps
        samples = [{"class": "etc", "h": float(h), "index": i} for i in range(m["n_etc"])]
        samples += [{"class": "rps", "h": float(h), "index": i} for i in range(m["n_rps"])]
        out.append(Dataset(f"h{float(h):.6g}", items, samples))
    return out


def _shadow_datasets(cfg):
    m = cfg.model
    lat = ToricLattice(m["Lx"], m["Ly"])
    order = lat.chain_ordering()
    toric = _toric_state(lat, True)
    states = [toric] * m["n_toric"] + [_rps(lat.n, cfg.seed, i, order, True) for i in range(m["n_rps"])]
    samples = [{"class": "toric", "index": i} for i in range(m["n_toric"])]
    samples += [{"class": "rps", "index": i} for i in range(m["n_rps"])]
    return [Dataset("shadows", states, samples)]


_GENERATORS = {
    "xxz-sweep": _xxz_datasets,
    "toric-vs-rps": _toric_datasets,
    "etc-sweep": _etc_datasets,
    "shadows": _shadow_datasets,
}


def _sample_header(samples):
    return sorted({k for s in samples for k in s})


def _profiles_csv(ds):
    keys = _sample_header(ds.samples)
    profiles = [it.entanglement_profile().entropies for it in ds.items]
    ncut = len(profiles[0])
    lines = [",".join(["sample"] + keys + [f"S{k}" for k in range(1, ncut + 1)])]
    for i, (s, p) in enumerate(zip(ds.samples, profiles)):
        lines.append(",".join([str(i)] + [_fmt(s.get(k, "")) for k in keys] + ["%.17g" % v for v in p]))
    return "\n".join(lines) + "\n"


def _rdm_cache(ds):
    item0 = ds.items[0]
    order = item0.ordering or ChainOrdering.identity(item0.n)
    pairs = [list(p) for p in order.adjacent_pairs()]
    mats = []
    for it in ds.items:
        mats.append([np.asarray(it.reduced_density_matrix(p).matrix).view(np.float64).ravel().tolist() for p in pairs])
    return json.dumps({"format_version": 1, "kind": "rdm_cache", "pairs": pairs, "layout": "row-major re/im",
                       "rdms": mats}, sort_keys=True)


def _load_item(record):
    kind = record.get("kind")
    if kind == "pure_state":
        return PureState.from_record(record)
    if kind == "stabilizer_state":
        return StabilizerState.from_record(record)
    if kind == "shadow_ensemble":
        return ShadowEnsemble.from_text(record["text"])
    raise ValidationError(f"unknown state record kind {kind!r}")


class Run:
    """One run rooted at an output directory; stages can be invoked separately."""

    def __init__(self, config, out_dir):
        self.config = config
        self.out = Path(out_dir)
        self.files = {}
        self.stage_seeds = {}
        self.started = time.time()

    # ---- generate ----
    def generate(self):
        cfg = self.config
        if cfg.experiment == "verify-bounds":
            raise ValidationError("experiment: verify-bounds has no dataset; use the verify-bounds command")
        datasets = _GENERATORS[cfg.experiment](cfg)
        self.stage_seeds["generate"] = {"rps": [cfg.seed, _RPS], "brickwork": [cfg.seed, _NOISE]}
        for ds in datasets:
            self._save_dataset(ds)
        self._write_json("datasets/index.json", {"datasets": [d.name for d in datasets]})
        return datasets

    def _save_dataset(self, ds):
        base = f"datasets/{ds.name}"
        files = []
        for i, it in enumerate(ds.items):
            rel = f"{base}/states/{i:03d}.json"
            self._write_json(rel, it.to_record())
            files.append(f"states/{i:03d}.json")
        self._write_text(f"{base}/profiles.csv", _profiles_csv(ds))
        self._write_text(f"{base}/rdms.json", _rdm_cache(ds) + "\n")
        self._write_json(f"{base}/dataset.json", {"name": ds.name, "files": files, "samples": ds.samples})

    def load_datasets(self):
        index = self.out / "datasets" / "index.json"
        if not index.exists():
            raise ValidationError(f"dataset: no dataset found under {self.out}; run generate first")
        names = json.loads(index.read_text())["datasets"]
        out = []
        for name in names:
            base = self.out / "datasets" / name
            meta = json.loads((base / "dataset.json").read_text())
            items = [_load_item(json.loads((base / f).read_text())) for f in meta["files"]]
            out.append(Dataset(name, items, meta["samples"]))
        return out

    def datasets(self):
        if (self.out / "datasets" / "index.json").exists():
            return self.load_datasets()
        return self.generate()

    # ---- kernels ----
    def kernels(self, datasets=None):
        cfg = self.config
        datasets = datasets if datasets is not None else self.datasets()
        configs = cfg.kernel_configs()
        self.stage_seeds["kernel"] = {"subsets": cfg.seed}
        if any(k.kind == "shadow" for k in configs):
            self.stage_seeds["shadows"] = [cfg.seed, _SHADOW]
        results = {}
        for ds in datasets:
            shadow_items = None
            for kc in configs:
                items = ds.items
                if kc.kind == "shadow":
                    if shadow_items is None:
                        shadow_items = self._shadows(ds)
                    items = shadow_items
                km = build_kernel_matrix(items, kc, n_jobs=cfg.threads, sample_metadata=ds.samples)
                rel = f"kernels/{ds.name}__{kc.kind}"
                self._write_text(rel + ".csv", km.to_csv())
                self._write_text(rel + ".json", km.sidecar() + "\n")
                results[(ds.name, kc.kind)] = km
        return results

    def _shadows(self, ds):
        cfg = self.config
        T = cfg.model["T"]

        def collect(i):
            return collect_shadows(ds.items[i], T, (cfg.seed, _SHADOW, i), {"sample": i})

        ens = _pmap(collect, range(len(ds.items)), cfg.threads)
        for i, e in enumerate(ens):
            self._write_text(f"shadows/{ds.name}/{i:03d}.txt", e.to_text())
        return ens

    def load_kernels(self):
        out = {}
        kdir = self.out / "kernels"
        if not kdir.exists():
            raise ValidationError(f"kernel: no kernel matrices under {self.out}; run the kernel stage first")
        for csv in sorted(kdir.glob("*.csv")):
            name, kind = csv.stem.split("__")
            meta = json.loads(csv.with_suffix(".json").read_text())
            km = KernelMatrix.from_csv(csv.read_text(), meta.get("normalization", "cosine"))
            km.metadata = meta
            out[(name, kind)] = km
        return out

    # ---- embeddings ----
    def embed(self, kernels=None):
        e = self.config.embedding
        kernels = kernels if kernels is not None else self.load_kernels()
        results = {}
        for key in sorted(kernels):
            km = kernels[key]
            if e["method"] == "diffusion_map":
                idx = tuple(e["eigen_indices"]) if e["eigen_indices"] else None
                res = diffusion_map(km.values, e["dims"], idx)
            else:
                res = kernel_pca(km.values, e["dims"])
            samples = km.metadata.get("samples")
            rel = f"embeddings/{key[0]}__{key[1]}"
            self._write_text(rel + ".csv", res.to_csv(samples))
            self._write_json(rel + ".json", {
                "method": res.method, "indices": list(res.indices),
                "eigenvalues": [float(v) for v in res.eigenvalues],
                "degenerate": res.degenerate, "ties": res.ties,
            })
            results[key] = (res, samples)
        return results

    def load_embeddings(self):
        edir = self.out / "embeddings"
        if not edir.exists():
            raise ValidationError(f"embedding: no embeddings under {self.out}; run the embed stage first")
        out = {}
        for csv in sorted(edir.glob("*.csv")):
            name, kind = csv.stem.split("__")
            lines = csv.read_text().strip().splitlines()
            header = lines[0].split(",")
            dim_cols = [j for j, h in enumerate(header) if h.startswith("dim")]
            coords = np.array([[float(r.split(",")[j]) for j in dim_cols] for r in lines[1:]])
            meta_cols = [j for j, h in enumerate(header) if j not in dim_cols and h != "sample"]
            samples = [{header[j]: _parse_cell(r.split(",")[j]) for j in meta_cols} for r in lines[1:]]
            info = json.loads(csv.with_suffix(".json").read_text())
            out[(name, kind)] = (coords, samples, info)
        return out

    # ---- clustering ----
    def cluster(self, embeddings=None):
        e = self.config.embedding
        if embeddings is None:
            embeddings = {k: (c, s) for k, (c, s, _) in self.load_embeddings().items()}
        else:
            embeddings = {k: (r.coordinates, s) for k, (r, s) in embeddings.items()}
        self.stage_seeds["cluster"] = {"kmeans": list(range(self.config.seed, self.config.seed + e["stability_seeds"]))}
        summary = {}
        for key in sorted(embeddings):
            coords, samples = embeddings[key]
            k = min(e["k"], len(np.unique(np.round(coords, 12), axis=0)))
            runs = [kmeans(coords, k, self.config.seed + s) for s in range(e["stability_seeds"])]
            best = runs[0]
            self._write_text(f"clusters/{key[0]}__{key[1]}.csv", best.to_csv(samples))
            stable = all(same_partition(best.labels, r.labels) for r in runs[1:])
            entry = {"k": int(k), "inertia": float(best.inertia), "stable_across_seeds": bool(stable),
                     "contiguous_runs": contiguous_runs(best.labels)}
            classes = [s.get("class") for s in samples] if samples else []
            if len(set(classes)) == 2:
                entry["class_margin"] = class_margin(coords[:, 0], classes)
            summary[f"{key[0]}__{key[1]}"] = entry
        return summary

    # ---- outputs ----
    def _write_text(self, rel, text):
        path = self.out / rel
        _write(path, text)
        self.files[rel] = hashlib.sha256(text.encode()).hexdigest()

    def _write_json(self, rel, obj):
        self._write_text(rel, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def write_manifest(self, stage):
        path = self.out / "manifest.json"
        previous = json.loads(path.read_text()) if path.exists() else {}
        files = dict(previous.get("files", {}))
        files.update(self.files)
        files = {k: v for k, v in files.items() if (self.out / k).exists()}
        stages = list(previous.get("stages", []))
        stages.append({"stage": stage, "wall_clock_s": round(time.time() - self.started, 3),
                       "seeds": self.stage_seeds})
        manifest = {
            "config_hash": self.config.hash(),
            "config": self.config.to_dict(),
            "version": __version__,
            "numpy": np.__version__,
            "files": dict(sorted(files.items())),
            "stages": stages,
        }
        _write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        _write(self.out / "config.json", self.config.to_json())
        return manifest


def _parse_cell(text):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def class_margin(coord, classes):
    """Gap between two classes along a 1D coordinate; positive iff linearly separated."""
    coord = np.asarray(coord, dtype=float)
    labels = sorted(set(classes))
    if len(labels) != 2:
        raise ValidationError(f"class_margin needs exactly two classes, got {labels}")
    mask = np.array([c == labels[0] for c in classes])
    a, b = coord[mask], coord[~mask]
    return float(max(a.min() - b.max(), b.min() - a.max()))


def _out_dir(config, out):
    path = out or config.output
    if not path:
        raise ValidationError("output: no output directory given (use --out or the config's output field)")
    return path


def generate_dataset(config, out=None):
    run = Run(config, _out_dir(config, out))
    datasets = run.generate()
    run.write_manifest("generate")
    return datasets


def run_pipeline(config, out=None):
    """Generate (if needed), then kernel -> embed -> cluster; returns the summary dict."""
    if config.experiment == "verify-bounds":
        return verify_bounds(config, out)
    run = Run(config, _out_dir(config, out))
    datasets = run.datasets()
    kernels = run.kernels(datasets)
    embeddings = run.embed(kernels)
    clusters = run.cluster(embeddings)
    summary = {"experiment": config.experiment, "config_hash": config.hash(), "results": clusters}
    for key, (res, _) in embeddings.items():
        clusters[f"{key[0]}__{key[1]}"]["degenerate_embedding"] = res.degenerate
    run._write_json("summary.json", summary)
    run.write_manifest("pipeline")
    return summary


# ---- bound verification ----

def _theorem1_trial(n, seed):
    path = random_local_path(n, seed)
    state0 = PureState.haar_random(n, rng_for(seed, 0))
    return verify_theorem1(path, trotter_evolve(state0, path), seed=list(seed))


def _theorem2_trial(n, seed):
    rng = rng_for(seed)
    position = int(rng.integers(0, n - 1))
    state0 = PureState.haar_random(n, rng_for(seed, 0), ChainOrdering.identity(n))
    circuit = BrickworkCircuit.single_gate(n, position, rng_for(seed, 1))
    return verify_theorem2(circuit, state0, seed=list(seed))


def geodesic_trial():
    """Single-qubit rotation |0> -> |1> along the Y geodesic."""
    path = GeneratorPath.constant(PauliSum(1, (("Y", math.pi / 2),)))
    report = verify_theorem1(path, trotter_evolve(PureState.from_bits([0]), path), seed="geodesic")
    report.kind = "theorem1-geodesic"
    return report


def trivial_trial(n):
    path = GeneratorPath.zero(n)
    report = verify_theorem1(path, trotter_evolve(PureState.from_bits([0] * n), path), seed="trivial")
    report.kind = "theorem1-trivial"
    return report


def bound_reports(config):
    """All configured bound-check reports, in a fixed order."""
    m = config.model
    s = config.seed
    reports = []
    if m["include_geodesic"]:
        reports.append(geodesic_trial())
    if m["include_trivial"]:
        reports.append(trivial_trial(m["theorem1_n"]))
    reports += _pmap(lambda i: _theorem1_trial(m["theorem1_n"], (s, _T1, i)), range(m["theorem1_trials"]), config.threads)
    reports += _pmap(lambda i: _theorem2_trial(m["theorem2_n"], (s, _T2, i)), range(m["theorem2_trials"]), config.threads)
    return reports


def summarize_reports(reports):
    summary = {}
    for r in reports:
        entry = summary.setdefault(r.kind, {"trials": 0, "violations": 0, "margins": {}})
        entry["trials"] += 1
        entry["violations"] += len(r.violations)
        for k, v in r.margins.items():
            if v is None:
                continue
            stats = entry["margins"].setdefault(k, {"min": math.inf, "max": -math.inf, "sum": 0.0})
            stats["min"] = min(stats["min"], v)
            stats["max"] = max(stats["max"], v)
            stats["sum"] += v
    for entry in summary.values():
        for stats in entry["margins"].values():
            stats["mean"] = stats.pop("sum") / entry["trials"]
    return summary


def verify_bounds(config, out=None):
    if config.experiment != "verify-bounds":
        raise ValidationError(f"experiment: expected verify-bounds, got {config.experiment!r}")
    run = Run(config, _out_dir(config, out))
    run.stage_seeds["verify-bounds"] = {"theorem1": [config.seed, _T1], "theorem2": [config.seed, _T2]}
    reports = bound_reports(config)
    lines = [json.dumps(r.to_record(), sort_keys=True, default=_json_default) for r in reports]
    run._write_text("bounds.jsonl", "\n".join(lines) + "\n")
    summary = summarize_reports(reports)
    rows = ["kind,trials,violations,min_margin"]
    for kind in sorted(summary):
        e = summary[kind]
        mins = [st["min"] for st in e["margins"].values()]
        rows.append(f"{kind},{e['trials']},{e['violations']},{'%.17g' % min(mins) if mins else ''}")
    run._write_text("bounds_summary.csv", "\n".join(rows) + "\n")
    total = {"experiment": "verify-bounds", "config_hash": config.hash(), "results": summary,
             "total_violations": sum(e["violations"] for e in summary.values())}
    run._write_json("summary.json", total)
    run.write_manifest("verify-bounds")
    return total
