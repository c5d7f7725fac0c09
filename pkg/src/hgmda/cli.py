"""Command-line driver: ``hgmda <command> [options]``.

Every command writes its outputs plus ``manifest.txt`` into ``--out``. The
manifest echoes the resolved configuration, its inputs and a hash of each
output, so ``hgmda replay`` can rerun the command and compare.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
failure, 5 replay mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import NonFiniteError, Tensor, load_checkpoint, save_checkpoint
from .benchmark import evaluate
from .encoder import export_attention, forward, init_params
from .graph import (
    DatasetError,
    SyntheticSpec,
    generate_synthetic,
    load_graph,
    node_id_table,
    save_graph,
    split_nodes,
)
from .train import EpochLog, RunConfig, TrainingDiverged, train
from .node_aug import plan_feature_exchange
from .triangles import (
    EdgeOverlay,
    before_after_report,
    plan_edge_adding,
    plan_edge_removing,
    read_overlay_tsv,
    worker_count,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME, EXIT_MISMATCH = 0, 2, 3, 4, 5
MANIFEST = "manifest.txt"
PRECEDENCE = "default<file<set<flag"


class ConfigError(ValueError):
    pass


class ReplayMismatch(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _synthetic_defaults() -> dict[str, str]:
    spec = SyntheticSpec()
    return {
        "synthetic.node_types": ",".join(f"{t}:{n}:{d}" for t, (n, d) in spec.node_types.items()),
        "synthetic.relations": ",".join(f"{r}:{s}:{t}:{m}" for r, s, t, m in spec.relations),
        "synthetic.target_type": spec.target_type,
        "synthetic.num_classes": str(spec.num_classes),
        "synthetic.homophily": str(spec.homophily),
        "synthetic.degree_exponent": str(spec.degree_exponent),
        "synthetic.feature_signal": str(spec.feature_signal),
        "split.ratios": "0.24,0.06,0.70",
        "seed": "0",
    }


DEFAULTS = {
    "generate": _synthetic_defaults,
    "train": lambda: {**RunConfig().flat(), "split.ratios": "0.24,0.06,0.70"},
    "eval": lambda: {"restarts": "10", "cluster": "true"},
    "augment": lambda: {"strategy": "both", "k_ratio": "0.5", "seed": "0"},
    "analyze": lambda: {"dataset": "graph"},
    "export-embeddings": lambda: {"node_type": ""},
}


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def resolve_config(command: str, file_values: dict[str, str], overrides: list[str],
                   flags: dict[str, str]) -> tuple[dict[str, str], dict[str, str]]:
    """Merge defaults < file < ``--set`` < explicit flags; returns (values, sources)."""
    values = DEFAULTS[command]()
    sources = {k: "default" for k in values}
    set_values = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        set_values[k.strip()] = v.strip()
    for layer, name in ((file_values, "file"), (set_values, "set"), (flags, "flag")):
        for k, v in layer.items():
            if k not in values:
                raise ConfigError(f"unknown config key {k!r} for {command}")
            values[k] = v
            sources[k] = name
    return values, sources


def config_hash(values: dict[str, str]) -> str:
    text = "\n".join(f"{k}={v}" for k, v in sorted(values.items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _ratios(text: str) -> tuple[float, float, float]:
    try:
        r = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"split.ratios must be three numbers, got {text!r}") from None
    if len(r) != 3:
        raise ConfigError(f"split.ratios must be three numbers, got {text!r}")
    return r


def synthetic_spec(values: dict[str, str]) -> SyntheticSpec:
    try:
        node_types = {}
        for item in values["synthetic.node_types"].split(","):
            name, n, d = item.split(":")
            node_types[name] = (int(n), int(d))
        relations = []
        for item in values["synthetic.relations"].split(","):
            name, s, t, m = item.split(":")
            relations.append((name, s, t, int(m)))
        return SyntheticSpec(
            node_types=node_types, relations=relations, target_type=values["synthetic.target_type"],
            num_classes=int(values["synthetic.num_classes"]), homophily=float(values["synthetic.homophily"]),
            degree_exponent=float(values["synthetic.degree_exponent"]),
            feature_signal=float(values["synthetic.feature_signal"]), seed=int(values["seed"]))
    except ValueError as exc:
        raise ConfigError(f"bad synthetic spec: {exc}") from None


def run_config(values: dict[str, str]) -> RunConfig:
    try:
        return RunConfig.from_flat({k: v for k, v in values.items() if k != "split.ratios"})
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# manifests


def canonical_bytes(path: Path) -> bytes:
    """File content used for replay comparison.

    Wall-clock timings are the one thing a rerun cannot reproduce, so the
    ``wall_ms`` column of a metrics log is dropped before hashing.
    """
    data = path.read_bytes()
    if path.name != "metrics.tsv":
        return data
    lines = data.decode("utf-8").splitlines()
    if not lines:
        return data
    header = lines[0].split("\t")
    if "wall_ms" not in header:
        return data
    col = header.index("wall_ms")
    kept = ["\t".join(c for i, c in enumerate(ln.split("\t")) if i != col) for ln in lines]
    return ("\n".join(kept) + "\n").encode("utf-8")


def file_digest(path: Path) -> str:
    return hashlib.sha256(canonical_bytes(path)).hexdigest()


@dataclass
class Manifest:
    command: str
    config: dict[str, str]
    sources: dict[str, str] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)

    def write(self, out: Path) -> None:
        lines = [f"command={self.command}", f"version={__version__}", f"precedence={PRECEDENCE}",
                 f"config_hash={config_hash(self.config)}", f"threads={worker_count()}"]
        lines += [f"input.{k}={v}" for k, v in sorted(self.inputs.items())]
        lines += [f"config.{k}={v}" for k, v in sorted(self.config.items())]
        lines += [f"source.{k}={v}" for k, v in sorted(self.sources.items())]
        lines += [f"output.{k}={v}" for k, v in sorted(self.outputs.items())]
        (out / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "Manifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read manifest {path}: {exc.strerror}") from None
        m = cls(command="", config={})
        for line in lines:
            if "=" not in line:
                continue
            key, value = line.split("=", 1)
            for prefix, target in (("config.", m.config), ("source.", m.sources),
                                   ("input.", m.inputs), ("output.", m.outputs)):
                if key.startswith(prefix):
                    target[key[len(prefix):]] = value
                    break
            else:
                if key == "command":
                    m.command = value
        if not m.command:
            raise ConfigError(f"{path}: manifest has no command")
        return m


def prepare_out(out, force: bool) -> Path:
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigError(f"output directory {out} is not empty (use --force)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def finish(out: Path, command: str, values, sources, inputs) -> Manifest:
    outputs = {p.name: file_digest(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != MANIFEST}
    m = Manifest(command, values, sources, {k: str(v) for k, v in inputs.items()}, outputs)
    m.write(out)
    return m


# ---------------------------------------------------------------------------
# commands


def _load(data):
    g, labels, splits = load_graph(data)
    return g, labels, splits


def _load_run(run_dir) -> tuple[RunConfig, dict[str, Tensor]]:
    manifest = Manifest.read(run_dir)
    if manifest.command != "train":
        raise ConfigError(f"{run_dir} is not a training run")
    config = run_config(manifest.config)
    dtype = np.float32 if config.dtype == "float32" else np.float64
    try:
        raw = load_checkpoint(Path(run_dir) / "checkpoint.bin")
    except OSError as exc:
        raise DatasetError(f"cannot read checkpoint: {exc.strerror}", Path(run_dir) / "checkpoint.bin") from None
    return config, {k: Tensor(v, requires_grad=True, dtype=dtype) for k, v in raw.items()}


def cmd_generate(values, inputs, out: Path) -> None:
    spec = synthetic_spec(values)
    try:
        g, labels = generate_synthetic(spec)
        splits = split_nodes(labels, ratios=_ratios(values["split.ratios"]), seed=spec.seed)
    except DatasetError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    save_graph(out, g, labels, splits)


def cmd_train(values, inputs, out: Path) -> None:
    config = run_config(values)
    g, labels, splits = _load(inputs["data"])
    if labels is None:
        raise DatasetError("dataset has no labels.tsv", inputs["data"])
    if splits is None:
        splits = split_nodes(labels, ratios=_ratios(values["split.ratios"]), seed=config.seed)
    dtype = np.float32 if config.dtype == "float32" else np.float64
    with open(out / "metrics.tsv", "w", encoding="utf-8") as log:
        log.write(EpochLog.HEADER + "\n")
        try:
            result = train(g, labels, splits, config, on_epoch=lambda e: (log.write(e.line() + "\n"), log.flush()))
        except TrainingDiverged as exc:
            save_checkpoint(out / "checkpoint.bin", exc.params, dtype=dtype)
            raise
    save_checkpoint(out / "checkpoint.bin", result.params, dtype=dtype)
    (out / "best_epoch.txt").write_text(f"{result.best_epoch}\n", encoding="utf-8")
    export_attention(out / "attention.tsv", g, forward(g, result.params, config.encoder))


def cmd_eval(values, inputs, out: Path) -> None:
    g, labels, splits = _load(inputs["data"])
    if labels is None:
        raise DatasetError("dataset has no labels.tsv", inputs["data"])
    cluster = values["cluster"].lower() in ("1", "true", "yes")
    restarts = int(values["restarts"])
    rows = []
    for run in inputs["runs"].split(","):
        config, params = _load_run(run)
        sp = splits or split_nodes(labels, ratios=(0.24, 0.06, 0.70), seed=config.seed)
        s = evaluate(g, labels, sp, params, config, cluster=cluster, restarts=restarts)
        rows.append((Path(run).name, s.macro_f1, s.micro_f1, s.nmi, s.ari))
    arr = np.array([r[1:] for r in rows], dtype=np.float64)
    with open(out / "eval.tsv", "w", encoding="utf-8") as fh:
        fh.write("run_id\tmacro_f1\tmicro_f1\tnmi\tari\n")
        for r in rows:
            fh.write(r[0] + "".join(f"\t{v:.6f}" for v in r[1:]) + "\n")
        fh.write("mean" + "".join(f"\t{v:.6f}" for v in arr.mean(axis=0)) + "\n")
        fh.write("std" + "".join(f"\t{v:.6f}" for v in arr.std(axis=0)) + "\n")


def cmd_augment(values, inputs, out: Path) -> None:
    try:
        k = float(values["k_ratio"])
    except ValueError:
        raise ConfigError(f"k_ratio must be a number, got {values['k_ratio']!r}") from None
    if not 0 < k <= 1:
        raise ConfigError(f"k_ratio must be in (0, 1], got {k}")
    strategy = values["strategy"]
    if strategy not in ("add", "remove", "both", "exchange"):
        raise ConfigError(f"strategy must be add, remove, both or exchange, got {strategy!r}")
    g, labels, splits = _load(inputs["data"])
    ids = node_id_table(inputs["data"])
    if "run" in inputs:
        config, params = _load_run(inputs["run"])
        encoder = config.encoder
    else:
        # no trained model: attention from freshly initialised weights
        encoder = RunConfig().encoder
        if labels is not None:
            encoder.num_classes = labels.num_classes
        params = init_params(g, encoder, seed=int(values["seed"]))
    encoded = forward(g, params, encoder)
    n_target = g.num_nodes[g.target_type]
    targets = splits.pool(n_target) if splits is not None else np.arange(n_target)
    if strategy == "exchange":
        plan = plan_feature_exchange(g, encoded, targets, k)
        plan.write_report(out / "exchange.tsv", ids, g)
        return
    overlay = EdgeOverlay()
    if strategy in ("add", "both"):
        overlay = overlay.merge(plan_edge_adding(g, targets, k, encoded))
    if strategy in ("remove", "both"):
        overlay = overlay.merge(plan_edge_removing(g, targets, k, encoded))
    overlay.write_tsv(out / "overlay.tsv", g, ids)
    report = before_after_report(g, overlay)
    (out / "report.tsv").write_text(report.to_tsv(Path(inputs["data"]).name), encoding="utf-8")


def cmd_analyze(values, inputs, out: Path) -> None:
    g, _, _ = _load(inputs["data"])
    overlay = EdgeOverlay()
    if "overlay" in inputs:
        try:
            overlay = read_overlay_tsv(inputs["overlay"], g, node_id_table(inputs["data"]))
        except OSError as exc:
            raise DatasetError(f"cannot read overlay: {exc.strerror}", inputs["overlay"]) from None
        except ValueError as exc:
            raise DatasetError(str(exc), inputs["overlay"]) from None
    report = before_after_report(g, overlay)
    (out / "report.tsv").write_text(report.to_tsv(values["dataset"]), encoding="utf-8")


def cmd_export_embeddings(values, inputs, out: Path) -> None:
    g, _, _ = _load(inputs["data"])
    config, params = _load_run(inputs["run"])
    ids = node_id_table(inputs["data"])
    node_type = values["node_type"] or g.target_type
    if node_type not in g.num_nodes:
        raise ConfigError(f"unknown node type {node_type!r}")
    emb = forward(g, params, config.encoder).embeddings[node_type].data
    with open(out / "embeddings.tsv", "w", encoding="utf-8") as fh:
        for name, row in zip(ids[node_type], emb):
            fh.write(name + "".join(f"\t{v:.8g}" for v in row) + "\n")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "augment": cmd_augment,
    "analyze": cmd_analyze,
    "export-embeddings": cmd_export_embeddings,
}


def execute(command: str, values, sources, inputs, out, force: bool) -> Manifest:
    out = prepare_out(out, force)
    COMMANDS[command](values, inputs, out)
    return finish(out, command, values, sources, inputs)


def replay(manifest_path, out, force: bool) -> list[tuple[str, bool]]:
    """Rerun a recorded command into ``out`` and compare output hashes."""
    m = Manifest.read(manifest_path)
    if m.command not in COMMANDS:
        raise ConfigError(f"cannot replay command {m.command!r}")
    fresh = execute(m.command, dict(m.config), dict(m.sources), dict(m.inputs), out, force)
    names = sorted(set(m.outputs) | set(fresh.outputs))
    return [(n, m.outputs.get(n) == fresh.outputs.get(n)) for n in names]


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgmda", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        if seed:
            p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true", help="replace a non-empty output directory")

    p = sub.add_parser("generate", help="write a synthetic dataset")
    common(p)
    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True)
    common(p)
    p = sub.add_parser("eval", help="score trained runs on their test split")
    p.add_argument("--data", required=True)
    p.add_argument("--runs", nargs="+", required=True, help="training run directories")
    common(p, seed=False)
    p = sub.add_parser("augment", help="plan an augmentation and report its effect")
    p.add_argument("--data", required=True)
    p.add_argument("--run", help="training run whose attention guides the plan")
    p.add_argument("--strategy", choices=["add", "remove", "both", "exchange"])
    p.add_argument("--k", type=float, dest="k_ratio")
    common(p)
    p = sub.add_parser("analyze", help="triangle statistics, optionally before/after an overlay")
    p.add_argument("--data", required=True)
    p.add_argument("--overlay")
    p.add_argument("--dataset", help="name printed in the report")
    common(p, seed=False)
    p = sub.add_parser("export-embeddings", help="final-layer node states as TSV")
    p.add_argument("--data", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--node-type", dest="node_type")
    common(p, seed=False)
    p = sub.add_parser("replay", help="rerun a command from its manifest and compare outputs")
    p.add_argument("manifest", help="manifest.txt or the directory holding it")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    return parser


def _absolute(path) -> str:
    return str(Path(path).resolve())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            results = replay(args.manifest, args.out, args.force)
            bad = [n for n, ok in results if not ok]
            for name, ok in results:
                print(f"{'match' if ok else 'DIFFER'}\t{name}")
            if bad:
                raise ReplayMismatch(f"{len(bad)} output(s) differ: {', '.join(bad)}")
            return EXIT_OK
        inputs = {}
        for key in ("data", "run", "overlay"):
            if getattr(args, key, None):
                inputs[key] = _absolute(getattr(args, key))
        if getattr(args, "runs", None):
            inputs["runs"] = ",".join(_absolute(r) for r in args.runs)
        flags = {}
        for key in ("seed", "strategy", "k_ratio", "dataset", "node_type"):
            value = getattr(args, key, None)
            if value is not None:
                flags[key] = str(value)
        file_values = read_config_file(args.config) if args.config else {}
        values, sources = resolve_config(args.command, file_values, args.set, flags)
        execute(args.command, values, sources, inputs, args.out, args.force)
        print(f"wrote {args.out}")
        return EXIT_OK
    except ReplayMismatch as exc:
        print(f"hgmda: replay mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except ConfigError as exc:
        print(f"hgmda: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"hgmda: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, NonFiniteError) as exc:
        print(f"hgmda: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"hgmda: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"hgmda: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
