"""Experiment driver and command-line interface.

Subcommands: construct, encode, decode, simulate, dominate, gap.  All
randomness derives from counter-based Philox streams keyed by (seed,
channel, trial), so reports are byte-identical across reruns and worker
counts and trials may be processed in any order.

File formats: bit files are either text ('0'/'1' characters, whitespace
ignored) or packed binary (LSB-first within each byte); LLR files are
whitespace-separated decimal floats or little-endian float64 binary.
Reports are a CSV table plus a JSON metadata sidecar.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import chaining, staircase
from .channels import (
    BmsChannel,
    capacity,
    dominating_set,
    parse_channel,
    sample_llrs,
)
from .polar import PinnedMap, build_spec, polar_transform, sc_decode

CSV_COLUMNS = (
    "scheme",
    "channel",
    "n",
    "rate",
    "trials",
    "errors",
    "error_rate",
    "ci_low",
    "ci_high",
    "bound",
)

SCHEMES = ("intersection", "scheme1", "scheme2chain", "scheme2aligned")


def trial_rng(seed: int, channel_idx: int, trial: int) -> np.random.Generator:
    """Independent substream for one (channel, trial) pair."""
    if not 0 <= channel_idx < 256:
        raise ValueError("channel index must fit in 8 bits")
    key = np.array([seed, (trial << 8) | channel_idx], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def wilson_interval(errors: int, trials: int, z: float = 1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    phat = errors / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(
        phat * (1 - phat) / trials + z * z / (4 * trials * trials)
    )
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class ExperimentConfig:
    """One simulation run: a scheme, its design parameters, and a budget."""

    scheme: str
    channels: list[str]
    n: int = 8
    rate: float = 0.3
    eps: float = 0.25
    k: int = 4
    rs_dimension: int | None = None
    design_rate: float | None = None
    p_target: float = 0.01
    c: float = 0.0
    trials: int = 100
    seed: int = 1
    out: str | None = None
    workers: int = 1
    exact: bool = True
    chunk: int = 256

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.channels:
            raise ValueError("at least one channel descriptor is required")
        for d in self.channels:
            parse_channel(d)  # fails early on malformed descriptors

    @classmethod
    def from_file(cls, path: str, **overrides) -> "ExperimentConfig":
        values = dict(read_key_value_file(path))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        def get(key, cast, default):
            v = values.get(key, default)
            if v is None:
                return None
            return cast(v)

        channels = values.get("channels", "")
        if isinstance(channels, str):
            channels = [c.strip() for c in channels.split(",") if c.strip()]
        return cls(
            scheme=str(values.get("scheme", "intersection")).lower(),
            channels=channels,
            n=get("n", int, 8),
            rate=get("rate", float, 0.3),
            eps=get("eps", float, 0.25),
            k=get("k", int, 4),
            rs_dimension=get("rs_dimension", int, None),
            design_rate=get("design_rate", float, None),
            p_target=get("p", float, 0.01),
            c=get("c", float, 0.0),
            trials=get("trials", int, 100),
            seed=get("seed", int, 1),
            out=values.get("out"),
            workers=get("workers", int, 1),
            exact=bool(int(values.get("exact", 1))),
            chunk=get("chunk", int, 256),
        )


def read_key_value_file(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {line!r}")
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


@dataclass
class RunReport:
    """Per-channel error estimates plus construction metadata."""

    scheme: str
    n: int
    rate: float
    gap: float | None
    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            lines.append(
                ",".join(
                    _fmt(row.get(col, "")) for col in CSV_COLUMNS
                )
            )
        return "\n".join(lines) + "\n"

    def json_text(self) -> str:
        payload = {
            "scheme": self.scheme,
            "n": self.n,
            "rate": self.rate,
            "gap": self.gap,
            "rows": self.rows,
            "metadata": self.metadata,
        }
        return json.dumps(payload, sort_keys=True, indent=2, default=_json_default)

    def write(self, out_prefix: str):
        with open(out_prefix + ".csv", "w") as fh:
            fh.write(self.csv_text())
        with open(out_prefix + ".json", "w") as fh:
            fh.write(self.json_text())


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _json_default(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(f"not JSON serializable: {type(v)}")


# -- per-scheme simulation ---------------------------------------------------


def _mc_channel(config, channel_idx, kernel, trials_per_call):
    """Run ``kernel(chunk_trial_indices)`` over all trials, optionally on a
    thread pool; kernel returns an error count.  Deterministic merge."""
    chunks = [
        range(t0, min(t0 + trials_per_call, config.trials))
        for t0 in range(0, config.trials, trials_per_call)
    ]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            counts = list(pool.map(kernel, chunks))
    else:
        counts = [kernel(c) for c in chunks]
    return int(sum(counts))


def _sample_batch(config, channel: BmsChannel, channel_idx: int, trials,
                  encode_fn, n_info: int, n_bits: int):
    """Per-trial substreams: draw info bits then channel noise."""
    infos = np.empty((len(trials), n_info), dtype=np.uint8)
    llrs = np.empty((len(trials), n_bits))
    for row, trial in enumerate(trials):
        rng = trial_rng(config.seed, channel_idx, trial)
        infos[row] = rng.integers(0, 2, size=n_info, dtype=np.uint8)
        codeword = encode_fn(infos[row])
        llrs[row] = sample_llrs(channel, codeword, rng)
    return infos, llrs


def run(config: ExperimentConfig) -> RunReport:
    """Construct the configured scheme, simulate every channel in the set,
    and assemble the report."""
    channels = [parse_channel(d) for d in config.channels]
    if config.scheme == "intersection":
        return _run_intersection(config, channels)
    if config.scheme == "scheme1":
        return _run_scheme1(config, channels)
    if config.scheme == "scheme2chain":
        return _run_chain(config, channels)
    return _run_aligned(config, channels)


def _error_row(config, label, errors, bound):
    lo, hi = wilson_interval(errors, config.trials)
    return {
        "scheme": config.scheme,
        "channel": label,
        "n": config.n,
        "trials": config.trials,
        "errors": errors,
        "error_rate": errors / config.trials,
        "ci_low": lo,
        "ci_high": hi,
        "bound": bound,
    }


def _run_intersection(config, channels):
    specs = [build_spec(ch, config.n, config.rate) for ch in channels]
    types = chaining.classify_indices(specs)
    gap = chaining.compound_gap(types, config.rate)
    inter = np.flatnonzero(np.all(types == 1, axis=1))
    N = 1 << config.n
    rate = len(inter) / N
    pins = PinnedMap.from_good_set(N, inter)
    report = RunReport(config.scheme, config.n, rate, gap)
    report.metadata = {
        "intersection_size": len(inter),
        "per_channel_bounds": {s.channel_label: s.bound for s in specs},
        "config": {"rate": config.rate, "seed": config.seed},
    }

    for idx, (ch, spec) in enumerate(zip(channels, specs)):
        bound = float(spec.z[inter].sum())

        def encode_fn(info):
            u = np.zeros(N, dtype=np.uint8)
            u[inter] = info
            return polar_transform(u)

        def kernel(trials, ch=ch, idx=idx, encode_fn=encode_fn):
            infos, llrs = _sample_batch(
                config, ch, idx, trials, encode_fn, len(inter), N
            )
            res = sc_decode(llrs, pins, exact=config.exact)
            return int(np.sum(np.any(res.u[:, inter] != infos, axis=1)))

        errors = _mc_channel(config, idx, kernel, config.chunk)
        row = _error_row(config, ch.label, errors, bound)
        row["rate"] = rate
        report.rows.append(row)
    return report


def _make_staircase(config) -> staircase.StaircaseCode:
    N = 1 << config.n
    rs_dim = config.rs_dimension
    if rs_dim is None:
        rs_dim = int(math.floor((0.5 - config.eps / 2.0) * N))
    params = staircase.StaircaseParams(n=config.n, k=config.k, rs_dimension=rs_dim)
    return staircase.StaircaseCode(params, design_rate=config.design_rate)


def _run_scheme1(config, channels):
    code = _make_staircase(config)
    p = code.params
    report = RunReport(config.scheme, config.n, code.rate, None)
    report.metadata = {
        "k": p.k,
        "rs_dimension": p.rs_dimension,
        "design_rate": code.design_rate,
        "blocklength": p.blocklength,
        "n_blocks": p.n * p.k * p.N,
        "info_length": code.info_length,
        "config": {"seed": config.seed},
    }
    for idx, ch in enumerate(channels):
        spec = build_spec(ch, config.n, code.design_rate)
        union_bound = (p.n * p.k * p.N) * spec.bound

        def kernel(trials, ch=ch, idx=idx):
            infos, llrs = _sample_batch(
                config, ch, idx, trials, code.encode, code.info_length, p.blocklength
            )
            res = code.decode_batch(llrs, ch, exact=config.exact)
            wrong = np.any(res.info != infos, axis=1) | res.failed
            return int(wrong.sum())

        errors = _mc_channel(config, idx, kernel, min(config.chunk, 64))
        row = _error_row(config, ch.label, errors, union_bound)
        row["rate"] = code.rate
        report.rows.append(row)
    return report


def _run_chain(config, channels):
    if len(channels) != 2:
        raise ValueError("the chain scheme is defined for exactly two channels")
    spec = chaining.chain_spec_from_channels(
        channels[0], channels[1], config.n, config.rate, config.k
    )
    bound = config.k * max(spec.bound_a, spec.bound_b)
    report = RunReport(config.scheme, config.n, spec.rate, None)
    report.metadata = {
        "k": config.k,
        "inter_size": len(spec.inter),
        "one_sided_size": spec.S,
        "info_length": spec.info_length,
        "per_block_bounds": {spec.label_a: spec.bound_a, spec.label_b: spec.bound_b},
        "config": {"rate": config.rate, "seed": config.seed},
    }
    for idx, (ch, which) in enumerate(zip(channels, ("first", "second"))):

        def kernel(trials, ch=ch, idx=idx, which=which):
            infos, llrs = _sample_batch(
                config, ch, idx, trials,
                lambda info: chaining.chain_encode(info, spec),
                spec.info_length, config.k * spec.N,
            )
            decoded = chaining.chain_decode(llrs, which, spec, exact=config.exact)
            return int(np.sum(np.any(decoded != infos, axis=1)))

        errors = _mc_channel(config, idx, kernel, config.chunk)
        row = _error_row(config, ch.label, errors, bound)
        row["rate"] = spec.rate
        report.rows.append(row)
    return report


def _run_aligned(config, channels):
    built = chaining.build_universal_block(
        channels, config.n, config.rate, config.eps
    )
    block = built.block
    n_info = len(block.info_slots())
    leaf_bounds = {
        ch.label: build_spec(ch, config.n, config.rate).bound for ch in channels
    }
    bound = (2 ** sum(built.kappas)) * max(leaf_bounds.values())
    report = RunReport(
        config.scheme, config.n, n_info / block.length, built.initial_gap
    )
    report.metadata = {
        "kappas": built.kappas,
        "length": block.length,
        "length_bound": built.length_bound,
        "info_fraction": built.final_info_fraction,
        "per_block_bounds": leaf_bounds,
        "config": {"rate": config.rate, "eps": config.eps, "seed": config.seed},
    }
    for idx, ch in enumerate(channels):

        def kernel(trials, ch=ch, idx=idx):
            infos, llrs = _sample_batch(
                config, ch, idx, trials,
                lambda info: chaining.aligned_encode(info, block),
                n_info, block.length,
            )
            decoded = chaining.aligned_decode(llrs, block, exact=config.exact)
            return int(np.sum(np.any(decoded != infos, axis=1)))

        errors = _mc_channel(config, idx, kernel, config.chunk)
        row = _error_row(config, ch.label, errors, bound)
        row["rate"] = n_info / block.length
        report.rows.append(row)
    return report


# -- bit / llr file io --------------------------------------------------------


def pack_bits(bits: np.ndarray) -> bytes:
    """LSB-first byte packing."""
    bits = np.asarray(bits, dtype=np.uint8) & 1
    return np.packbits(bits, bitorder="little").tobytes()


def unpack_bits(raw: bytes, n_bits: int) -> np.ndarray:
    out = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    if len(out) < n_bits:
        raise ValueError(f"file holds {len(out)} bits, need {n_bits}")
    return out[:n_bits]


def read_bits(path: str, n_bits: int, fmt: str) -> np.ndarray:
    if fmt == "binary":
        with open(path, "rb") as fh:
            return unpack_bits(fh.read(), n_bits)
    with open(path) as fh:
        text = "".join(fh.read().split())
    if len(text) != n_bits:
        raise ValueError(f"expected {n_bits} bits, file has {len(text)}")
    return np.array([int(c) for c in text], dtype=np.uint8)


def write_bits(path: str, bits: np.ndarray, fmt: str):
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(pack_bits(bits))
    else:
        with open(path, "w") as fh:
            fh.write("".join(str(int(b)) for b in np.asarray(bits)))
            fh.write("\n")


def read_llrs(path: str, fmt: str) -> np.ndarray:
    if fmt == "binary":
        return np.fromfile(path, dtype="<f8")
    return np.loadtxt(path, dtype=float).ravel()


# -- CLI ----------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--channels", help="comma-separated channel descriptors")
    p.add_argument("--n", type=int)
    p.add_argument("--rate", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--rs-dimension", type=int, dest="rs_dimension")
    p.add_argument("--design-rate", type=float, dest="design_rate")
    p.add_argument("--p", type=float, dest="p")
    p.add_argument("--c", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")


def _config_from_args(args) -> ExperimentConfig:
    overrides = {
        k: getattr(args, k, None)
        for k in (
            "scheme", "channels", "n", "rate", "eps", "k", "rs_dimension",
            "design_rate", "p", "c", "trials", "seed", "workers", "out",
        )
    }
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    values = {k: v for k, v in overrides.items() if v is not None}
    return ExperimentConfig.from_mapping(values)


def _cmd_simulate(args) -> int:
    config = _config_from_args(args)
    report = run(config)
    out = config.out or "report"
    report.write(out)
    sys.stdout.write(report.csv_text())
    return 0


def _cmd_construct(args) -> int:
    config = _config_from_args(args)
    channels = [parse_channel(d) for d in config.channels]
    if config.scheme == "scheme1":
        code = _make_staircase(config)
        text = code.to_text()
    elif config.scheme == "scheme2chain":
        spec = chaining.chain_spec_from_channels(
            channels[0], channels[1], config.n, config.rate, config.k
        )
        text = spec.to_text()
    elif config.scheme == "scheme2aligned":
        built = chaining.build_universal_block(
            channels, config.n, config.rate, config.eps
        )
        text = chaining.block_to_text(built.block)
    else:
        specs = [build_spec(ch, config.n, config.rate) for ch in channels]
        types = chaining.classify_indices(specs)
        inter = np.flatnonzero(np.all(types == 1, axis=1))
        text = json.dumps(
            {
                "format": "intersection-v1",
                "n": config.n,
                "rate": config.rate,
                "channels": [ch.label for ch in channels],
                "good_sets": [s.good_set.tolist() for s in specs],
                "intersection": inter.tolist(),
            },
            sort_keys=True,
        )
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return 0


def _load_spec_file(path: str):
    with open(path) as fh:
        text = fh.read()
    head = text.lstrip()
    if head.startswith("{"):
        d = json.loads(text)
        fmt = d.get("format", "")
        if fmt == "chain-spec-v1":
            return "scheme2chain", chaining.ChainSpec.from_text(text)
        if fmt == "aligned-block-v1":
            return "scheme2aligned", chaining.block_from_text(text)
        raise ValueError(f"unrecognized spec format {fmt!r}")
    return "scheme1", staircase.StaircaseCode.from_text(text)


def _cmd_encode(args) -> int:
    kind, spec = _load_spec_file(args.spec)
    if kind == "scheme1":
        n_info = spec.info_length
        encode = lambda bits: spec.encode(bits)
    elif kind == "scheme2chain":
        n_info = spec.info_length
        encode = lambda bits: chaining.chain_encode(bits, spec)
    else:
        n_info = len(spec.info_slots())
        encode = lambda bits: chaining.aligned_encode(bits, spec)
    bits = read_bits(args.infile, n_info, args.format)
    write_bits(args.outfile, encode(bits), args.format)
    return 0


def _cmd_decode(args) -> int:
    kind, spec = _load_spec_file(args.spec)
    channel = parse_channel(args.channel)
    llrs = read_llrs(args.infile, args.format)
    if kind == "scheme1":
        info = spec.decode(llrs, channel)
    elif kind == "scheme2chain":
        which = "second" if args.second else "first"
        info = chaining.chain_decode(llrs, which, spec)
    else:
        info = chaining.aligned_decode(llrs, spec)
    write_bits(args.outfile, info, args.format)
    return 0


def _cmd_dominate(args) -> int:
    fam = dominating_set(args.capacity, args.eps)
    rng = np.random.Generator(np.random.Philox(key=np.array([args.seed, 0],
                                                            dtype=np.uint64)))
    probes = []
    for _ in range(args.probes):
        probes.append(random_bms_channel(rng, min_capacity=args.capacity))
    for ch in probes:
        fam.cover(ch)
    payload = {
        "capacity": args.capacity,
        "eps": args.eps,
        "A": fam.A,
        "T": fam.T,
        "size_bound": str(fam.size_bound),
        "shift": fam.shift,
        "probes": len(probes),
        "members": [
            {"x": m.x.tolist(), "p": m.p.tolist(), "capacity": capacity(m)}
            for m in fam.members
        ],
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return 0


def _cmd_gap(args) -> int:
    channels = [parse_channel(d) for d in args.channels.split(",")]
    lines = ["n,N,rate,intersection_fraction,gap"]
    for n in range(args.n_min, args.n_max + 1):
        specs = [build_spec(ch, n, args.rate) for ch in channels]
        types = chaining.classify_indices(specs)
        gap = chaining.compound_gap(types, args.rate)
        inter = float(np.all(types == 1, axis=1).mean())
        lines.append(f"{n},{1 << n},{_fmt(args.rate)},{_fmt(inter)},{_fmt(gap)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def random_bms_channel(rng: np.random.Generator, min_capacity: float = 0.0,
                       max_atoms: int = 8, label: str = "random-mix") -> BmsChannel:
    """Random BSC mixture with capacity at least ``min_capacity`` (rejection
    sampling with atoms biased toward the clean end)."""
    while True:
        m = int(rng.integers(2, max_atoms + 1))
        x = np.sort(rng.random(m) ** 0.5)
        if len(np.unique(x)) != m:
            continue
        p = rng.dirichlet(np.ones(m))
        ch = BmsChannel(x, p, label)
        if capacity(ch) >= min_capacity:
            return ch


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="unipolar",
        description="compound-channel polar coding toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="Monte-Carlo error-rate run")
    _add_common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_con = sub.add_parser("construct", help="emit a serialized code spec")
    _add_common(p_con)
    p_con.set_defaults(func=_cmd_construct)

    p_enc = sub.add_parser("encode", help="encode an info bit file")
    p_enc.add_argument("--spec", required=True)
    p_enc.add_argument("--in", dest="infile", required=True)
    p_enc.add_argument("--out", dest="outfile", required=True)
    p_enc.add_argument("--format", choices=("text", "binary"), default="text")
    p_enc.set_defaults(func=_cmd_encode)

    p_dec = sub.add_parser("decode", help="decode an LLR file")
    p_dec.add_argument("--spec", required=True)
    p_dec.add_argument("--channel", required=True)
    p_dec.add_argument("--in", dest="infile", required=True)
    p_dec.add_argument("--out", dest="outfile", required=True)
    p_dec.add_argument("--format", choices=("text", "binary"), default="text")
    p_dec.add_argument("--second", action="store_true",
                       help="chain decode right-to-left (second channel)")
    p_dec.set_defaults(func=_cmd_decode)

    p_dom = sub.add_parser("dominate", help="build a dominating channel family")
    p_dom.add_argument("--capacity", type=float, required=True)
    p_dom.add_argument("--eps", type=float, required=True)
    p_dom.add_argument("--probes", type=int, default=0)
    p_dom.add_argument("--seed", type=int, default=1)
    p_dom.add_argument("--out")
    p_dom.set_defaults(func=_cmd_dominate)

    p_gap = sub.add_parser("gap", help="good-set intersection gap sweep")
    p_gap.add_argument("--channels", required=True)
    p_gap.add_argument("--rate", type=float, required=True)
    p_gap.add_argument("--n-min", type=int, default=4)
    p_gap.add_argument("--n-max", type=int, default=10)
    p_gap.add_argument("--out")
    p_gap.set_defaults(func=_cmd_gap)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
