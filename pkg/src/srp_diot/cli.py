"""Command-line front end: ontologies, traces, single runs and sweep comparisons."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

from .errors import ConfigError, SrpError
from .ontology import format_ontology, generate_ontology, write_ontology_file
from .simnet import CSV_COLUMNS, PROTOCOLS, SimConfig, csv_text, format_config, load_config, parse_config, run
from .simnet.mobility import write_trace
from .simnet.world import SimWorld, load_ontology

log = logging.getLogger("srp_diot")

SWEEP_AXES = ("node_count", "ontology_leaves", "QA_pair", "mobility_mix", "rtb_bytes")


class UsageError(SrpError):
    """Bad invocation or input; maps to exit status 2."""


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    base: SimConfig
    seeds: tuple[int, ...]
    protocols: tuple[str, ...]

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; choose from {', '.join(SWEEP_AXES)}")
        if not self.values or not self.seeds or not self.protocols:
            raise ConfigError("a sweep needs at least one value, seed and protocol")
        bad = [p for p in self.protocols if p not in PROTOCOLS]
        if bad:
            raise ConfigError(f"unknown protocol(s) {', '.join(bad)}")

    def apply(self, value) -> SimConfig:
        cfg = self.base
        if self.axis == "node_count":
            return replace(cfg, nodes=value)
        if self.axis == "ontology_leaves":
            return replace(cfg, ontology_leaves=value, ontology_file=None)
        if self.axis == "QA_pair":
            return replace(cfg, q_interval=value[0], a_interval=value[1])
        if self.axis == "mobility_mix":
            return replace(cfg, mobility_mix=value)
        return replace(cfg, rtb_bytes=value)

    def cells(self) -> list[SimConfig]:
        """Every run of the sweep in report order: value, then protocol, then seed."""
        return [
            replace(self.apply(v), protocol=p, seed=s)
            for v in self.values
            for p in self.protocols
            for s in self.seeds
        ]


def _parse_value(axis: str, raw: str):
    parts = [int(p) for p in raw.split(",")]
    if axis == "QA_pair":
        if len(parts) != 2:
            raise ValueError(raw)
        return tuple(parts)
    if axis == "mobility_mix":
        if len(parts) != 3:
            raise ValueError(raw)
        return tuple(parts)
    if len(parts) != 1:
        raise ValueError(raw)
    return parts[0]


def parse_sweep(text: str) -> SweepSpec:
    """Read a sweep file: a ``[sweep]`` section plus ordinary config sections.

    Values are whitespace separated; pairs and mixes use commas inside a value,
    e.g. ``values = 100,0,0 20,50,30``.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if not cp.has_section("sweep"):
        raise ConfigError("sweep file has no [sweep] section")
    sw = dict(cp["sweep"])
    unknown = set(sw) - {"axis", "values", "seeds", "protocols"}
    if unknown:
        raise ConfigError(f"unknown key(s) in [sweep]: {', '.join(sorted(unknown))}")
    axis = sw.get("axis", "").strip()
    try:
        values = tuple(_parse_value(axis, v) for v in sw.get("values", "").split())
        seeds = tuple(int(s) for s in sw.get("seeds", "1").replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad sweep value: {exc}") from None
    protocols = tuple(sw.get("protocols", " ".join(PROTOCOLS)).replace(",", " ").split())
    cp.remove_section("sweep")
    buf = io.StringIO()
    cp.write(buf)
    return SweepSpec(axis, values, parse_config(buf.getvalue()), seeds, protocols)


def ablate(cfg: SimConfig, no_stability: bool, no_coverage: bool) -> SimConfig:
    u = cfg.utility
    if no_stability:
        u = replace(u, use_stability=False)
    if no_coverage:
        u = replace(u, use_coverage=False)
    return replace(cfg, utility=u)


@lru_cache(maxsize=8)
def _ontology(seed: int, leaves: int, path: str | None):
    return load_ontology(SimConfig(ontology_seed=seed, ontology_leaves=leaves, ontology_file=path))


def run_cell(cfg: SimConfig) -> dict[str, object]:
    tree = _ontology(cfg.ontology_seed, cfg.ontology_leaves, cfg.ontology_file)
    return run(cfg, tree).row


def _axis_label(cfg: SimConfig, axis: str) -> str:
    return {
        "node_count": str(cfg.nodes),
        "ontology_leaves": str(cfg.ontology_leaves),
        "QA_pair": f"({cfg.q_interval},{cfg.a_interval})",
        "mobility_mix": "({},{},{})".format(*cfg.mobility_mix),
        "rtb_bytes": str(cfg.rtb_bytes),
    }[axis]


def summary_table(spec: SweepSpec, cells: list[SimConfig], rows: list[dict]) -> str:
    """Mean traffic and hops per protocol and axis value; ``*`` marks the cheapest protocol."""
    acc: dict[tuple[str, str], list[dict]] = defaultdict(list)
    for cfg, row in zip(cells, rows):
        acc[(cfg.protocol, _axis_label(cfg, spec.axis))].append(row)
    labels = list(dict.fromkeys(_axis_label(spec.apply(v), spec.axis) for v in spec.values))

    def mean(key: str, proto: str, label: str) -> float:
        rs = acc[(proto, label)]
        return sum(float(r[key]) for r in rs) / len(rs)

    out = []
    for title, key, fmt in (
        ("total traffic (bytes)", "total_bytes", "{:.0f}"),
        ("query traffic (bytes)", "query_bytes", "{:.0f}"),
        ("mean query hops", "avg_query_hops", "{:.2f}"),
        ("success rate", "success_rate", "{:.3f}"),
    ):
        cheapest = {}
        if key.endswith("bytes"):
            for label in labels:
                cheapest[label] = min(spec.protocols, key=lambda p: mean(key, p, label))
        width = max(12, *(len(lab) + 2 for lab in labels))
        out.append(f"{title} vs {spec.axis}")
        out.append(f"{'protocol':<12}" + "".join(f"{lab:>{width}}" for lab in labels))
        for p in spec.protocols:
            line = f"{p:<12}"
            for label in labels:
                mark = "*" if cheapest.get(label) == p else ""
                line += f"{fmt.format(mean(key, p, label)) + mark:>{width}}"
            out.append(line)
        out.append("")
    out.append("* lowest traffic in its column")
    return "\n".join(out) + "\n"


def _rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_gen_ontology(args) -> int:
    tree = generate_ontology(args.seed, args.leaves)
    if args.out:
        write_ontology_file(tree, args.out)
        print(f"{len(tree.leaves())} leaves, {len(tree.nodes)} nodes, {tree.onid_width_bits}-bit codes -> {args.out}")
    else:
        sys.stdout.write(format_ontology(tree))
    return 0


def cmd_gen_trace(args) -> int:
    cfg = load_config(args.config)
    world = SimWorld(replace(cfg, trace_file=None), load_ontology(cfg))
    write_trace(world.positions, args.out)
    print(f"{world.n} nodes x {len(world.positions)} periods -> {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.dry_run:
        sys.stdout.write(format_config(cfg))
        return 0
    rep = run(cfg)
    text = csv_text([rep])
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(rep.summary())
    else:
        sys.stdout.write(text)
        print(rep.summary(), file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    try:
        text = Path(args.sweep).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read sweep {args.sweep}: {exc}") from None
    spec = parse_sweep(text)
    spec = replace(spec, base=ablate(spec.base, args.no_stability, args.no_coverage))
    cells = spec.cells()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(_rows_csv(rows), encoding="utf-8")
    table = summary_table(spec, cells, rows)
    (out / "summary.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srp-diot", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-ontology", help="generate a random capability ontology")
    g.add_argument("--leaves", type=int, required=True)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--out")
    g.set_defaults(fn=cmd_gen_ontology)

    t = sub.add_parser("gen-trace", help="write the mobility trace a config would simulate")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_gen_trace)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("compare", help="run a sweep and tabulate protocols side by side")
    c.add_argument("--sweep", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--no-stability", action="store_true", help="pin the stability factor to neutral")
    c.add_argument("--no-coverage", action="store_true", help="pin ontology coverage to 1")
    c.set_defaults(fn=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "leaves", 1) < 1 or getattr(args, "jobs", 1) < 1:
        parser.error("--leaves and --jobs must be positive")
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SrpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
