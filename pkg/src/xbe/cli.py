"""``xbe`` command line: synth, pretrain-kg, train, eval, probe-gates, ablate, sweep-layers, gradcheck.

Every command resolves one :class:`RunConfig` (defaults < ``--config`` JSON
file < flags), runs inside a workspace directory and writes
``manifests/<command>.json`` holding the resolved config.  Re-running with
``--from-manifest`` reproduces the outputs byte for byte.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .data import (DataFormatError, SynthSpec, load_dataset, save_corpus, save_kg,
                   synthesize_splits, write_split_manifest)
from .encoders import EncoderConfig
from .evaluate import evaluate, gate_probe, summary_dict, write_eval_csv, write_gate_csv, write_pr_csv
from .experiments import (VARIANTS, default_placements, gate_noise_correlation, layer_sweep,
                          noise_gate_sweep, reference_training, run_ablation_suite,
                          write_ablation_csv, write_sweep_csv)
from .gradcheck import gradcheck, tiny_setup
from .model import XbeConfig, load_checkpoint, save_checkpoint
from .train import TrainConfig, build_model, kg_relation_accuracy, pretrain_kg, fit_transe, train

log = logging.getLogger("xbe")

DATA_FILES = {"train": "data/train.tsv", "test": "data/test.tsv", "kg": "data/kg.tsv"}
SPLIT_MANIFEST = "data/split_manifest.json"


class CliError(Exception):
    """A one-line, user-facing failure."""


# ---- configuration ---------------------------------------------------------------
@dataclass
class ModelSection:
    width: int = 32
    depth: int = 3
    heads: int = 4
    ffn_mult: int = 4
    max_len: int = 32
    placements: List[int] = field(default_factory=lambda: [1])
    lambda_t: float = 1.0
    lambda_s: float = 1e-4
    gate_mode: str = "dynamic"
    gate_value: float = 0.5
    loss_weight: float = 1.0
    rht_dim: int = 32
    ablations: List[str] = field(default_factory=list)

    def xbe_config(self, seed: int) -> XbeConfig:
        enc = dict(depth=self.depth, width=self.width, heads=self.heads, ffn_mult=self.ffn_mult)
        return XbeConfig(text=EncoderConfig(max_len=self.max_len, **enc),
                         kg=EncoderConfig(max_len=3, **enc),
                         placements=tuple(self.placements), lambda_t=self.lambda_t,
                         lambda_s=self.lambda_s, gate_mode=self.gate_mode,
                         gate_value=self.gate_value, loss_weight=self.loss_weight,
                         rht_dim=self.rht_dim, ablations=tuple(self.ablations), seed=seed)


@dataclass
class RunSection:
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    variants: List[str] = field(default_factory=lambda: ["full", "no_xstitch", "no_kg_encoder",
                                                         "no_text_encoder", "random_init_kg",
                                                         "freeze_kg"])
    placements: List[str] = field(default_factory=list)
    noise_ratios: List[int] = field(default_factory=list)
    checkpoint: str = "model.ckpt"
    init: str = ""
    eval_ns: List[int] = field(default_factory=lambda: [10, 20, 50, 100, 200])
    tolerance: float = 1e-3


def default_train() -> TrainConfig:
    return reference_training()


@dataclass
class RunConfig:
    synth: SynthSpec = field(default_factory=SynthSpec)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=default_train)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict:
        return {k: dataclasses.asdict(getattr(self, k)) for k in ("synth", "model", "train", "run")}


SECTIONS = {"synth": SynthSpec, "model": ModelSection, "train": TrainConfig, "run": RunSection}


def _merge_section(current, values: dict, section: str):
    if not isinstance(values, dict):
        raise CliError(f"cli: config section {section!r} must be an object")
    known = {f.name: f for f in dataclasses.fields(current)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise CliError(f"cli: unknown key(s) in section {section!r}: {', '.join(unknown)}")
    merged = dataclasses.asdict(current)
    for k, v in values.items():
        default = merged[k]
        if isinstance(default, bool) and not isinstance(v, bool):
            raise CliError(f"cli: {section}.{k} expects true/false, got {v!r}")
        if isinstance(default, float) and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if isinstance(default, list) and not isinstance(v, list):
            v = [v]
        if type(default) in (int, float, str) and type(v) is not type(default):
            raise CliError(f"cli: {section}.{k} expects {type(default).__name__}, got {v!r}")
        merged[k] = v
    return type(current)(**merged)


def merge_config(cfg: RunConfig, doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise CliError("cli: config must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise CliError(f"cli: unknown config section(s): {', '.join(unknown)}")
    parts = {k: getattr(cfg, k) for k in SECTIONS}
    for k, v in doc.items():
        parts[k] = _merge_section(parts[k], v, k)
    return RunConfig(**parts)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _split_list(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str, flag: str) -> List[int]:
    try:
        return [int(t) for t in _split_list(text)]
    except ValueError:
        raise CliError(f"cli: {flag} expects comma-separated integers, got {text!r}") from None


def overrides_from_flags(args: argparse.Namespace) -> dict:
    doc: Dict[str, dict] = {k: {} for k in SECTIONS}
    flag_map = {
        "noise": ("synth", "noise"), "bag": ("synth", "bag_size"),
        "train_bags": ("synth", "train_bags"), "test_bags": ("synth", "test_bags"),
        "relations": ("synth", "n_relations"), "data_seed": ("synth", "seed"),
        "epochs": ("train", "epochs"), "lr": ("train", "lr"), "batch_size": ("train", "batch_size"),
        "width": ("model", "width"), "depth": ("model", "depth"),
        "gate_mode": ("model", "gate_mode"), "loss_weight": ("model", "loss_weight"),
        "checkpoint": ("run", "checkpoint"), "init": ("run", "init"),
        "tolerance": ("run", "tolerance"),
    }
    for attr, (sec, key) in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            doc[sec][key] = v
    if getattr(args, "seed", None) is not None:
        doc["train"]["seed"] = args.seed
    if getattr(args, "placement", None):
        doc["model"]["placements"] = [int(p.split("->")[0]) for p in _split_list(args.placement)]
    if getattr(args, "ablation", None):
        doc["model"]["ablations"] = list(args.ablation)
    if getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise CliError("cli: --seeds must be >= 1")
        doc["run"]["seeds"] = list(range(args.seeds))
    if getattr(args, "placements", None):
        doc["run"]["placements"] = _split_list(args.placements)
    if getattr(args, "sweep", None):
        doc["run"]["noise_ratios"] = _int_list(args.sweep, "--sweep")
    if getattr(args, "variants", None):
        doc["run"]["variants"] = _split_list(args.variants)
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        sec, dot, name = key.partition(".")
        if not sep or not dot or sec not in SECTIONS:
            raise CliError(f"cli: --set expects section.key=value, got {item!r}")
        doc[sec][name] = _parse_value(value)
    return {k: v for k, v in doc.items() if v}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"cli: config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise CliError(f"cli: malformed config {path}: {err}") from None
        cfg = merge_config(cfg, doc)
    return merge_config(cfg, overrides_from_flags(args))


def validate_config(cfg: RunConfig, command: str) -> None:
    try:
        cfg.synth.validate()
        cfg.train.validate()
        if command not in ("synth", "gradcheck"):
            check = cfg.model.xbe_config(cfg.train.seed)
            check.text = dataclasses.replace(check.text, vocab_size=1)
            check.kg = dataclasses.replace(check.kg, vocab_size=1)
            check.validate()
    except ValueError as err:
        raise CliError(str(err)) from None


# ---- workspace helpers -------------------------------------------------------------
class Workspace:
    def __init__(self, root: Path, force: bool):
        self.root = root
        self.force = force
        self.outputs: List[str] = []

    def path(self, rel: str) -> Path:
        return self.root / rel

    def claim(self, rel: str) -> Path:
        """Reserve an output path; refuses to overwrite without ``--force``."""
        p = self.path(rel)
        if p.exists() and not self.force:
            raise CliError(f"cli: {p} already exists (use --force to overwrite)")
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(rel)
        return p


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_dataset(ws: Workspace, spec: SynthSpec):
    train_ds, test_ds = synthesize_splits(spec)
    save_corpus(train_ds, ws.claim(DATA_FILES["train"]))
    save_corpus(test_ds, ws.claim(DATA_FILES["test"]))
    save_kg(train_ds.kg, ws.claim(DATA_FILES["kg"]))
    write_split_manifest(ws.claim(SPLIT_MANIFEST), spec, dict(DATA_FILES), train_ds, test_ds)
    return train_ds, test_ds


def load_workspace_data(ws: Workspace, cfg: RunConfig, inputs: dict):
    """Dataset of the workspace; synthesised from ``cfg.synth`` when absent."""
    paths = {k: ws.path(v) for k, v in DATA_FILES.items()}
    present = [p.exists() for p in paths.values()]
    if not any(present):
        log.info("no dataset in %s; synthesising one", ws.root)
        # inputs, not outputs: a replay elsewhere must record the same manifest
        saved, ws.force, outputs = ws.force, True, list(ws.outputs)
        try:
            write_dataset(ws, cfg.synth)
        finally:
            ws.force, ws.outputs = saved, outputs
    elif not all(present):
        missing = next(p for p, ok in zip(paths.values(), present) if not ok)
        raise CliError(f"cli: dataset incomplete, missing {missing}")
    else:
        split = ws.path(SPLIT_MANIFEST)
        if split.exists():
            spec = json.loads(split.read_text(encoding="utf-8")).get("spec")
            if spec is not None and spec != dataclasses.asdict(cfg.synth):
                cfg.synth = SynthSpec(**spec)
    try:
        train_ds = load_dataset(paths["train"], paths["kg"], "train")
        test_ds = load_dataset(paths["test"], paths["kg"], "test")
    except DataFormatError as err:
        raise CliError(str(err)) from None
    inputs.update({k: _sha256(p) for k, p in paths.items()})
    return train_ds, test_ds


def write_manifest(ws: Workspace, command: str, cfg: RunConfig, inputs: dict) -> Path:
    doc = {"command": command, "config": cfg.to_dict(), "inputs": inputs,
           "outputs": sorted(set(ws.outputs))}
    path = ws.path(f"manifests/{command.replace('-', '_')}.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---- commands -------------------------------------------------------------------------
def cmd_synth(ws: Workspace, cfg: RunConfig, inputs: dict) -> None:
    train_ds, test_ds = write_dataset(ws, cfg.synth)
    print(f"synth: {len(train_ds)} train bags, {len(test_ds)} test bags, {len(train_ds.kg)} KG triples")


def _checkpoint(ws: Workspace, rel: str, inputs: dict):
    path = Path(rel) if os.path.isabs(rel) else ws.path(rel)
    if not path.is_file():
        raise CliError(f"cli: checkpoint not found: {path}")
    inputs["checkpoint"] = _sha256(path)
    try:
        return load_checkpoint(path)
    except (ValueError, KeyError) as err:
        raise CliError(f"cli: cannot read checkpoint {path}: {err}") from None


def cmd_pretrain_kg(ws: Workspace, cfg: RunConfig, inputs: dict) -> None:
    train_ds, test_ds = load_workspace_data(ws, cfg, inputs)
    model = build_model(cfg.model.xbe_config(cfg.train.seed), train_ds, [test_ds])
    out = ws.claim("kg_pretrained.ckpt")
    if not model.config.has("no_rht"):
        fit_transe(model, train_ds.kg, cfg.train)
    history = pretrain_kg(model, train_ds.kg, cfg.train)
    save_checkpoint(model, out)
    acc = kg_relation_accuracy(model, [t for t in train_ds.kg])
    with open(ws.claim("kg_pretrain_log.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(history, 1):
            fh.write(f"{i},{v!r}\n")
    print(f"pretrain-kg: {len(history)} epochs, final loss {history[-1] if history else float('nan'):.4f}, "
          f"train-KG relation accuracy {acc:.3f}")


def cmd_train(ws: Workspace, cfg: RunConfig, inputs: dict) -> None:
    train_ds, test_ds = load_workspace_data(ws, cfg, inputs)
    tc = cfg.train
    model = build_model(cfg.model.xbe_config(tc.seed), train_ds, [test_ds])
    if cfg.run.init:
        init = _checkpoint(ws, cfg.run.init, inputs)
        for name in init.kg_param_names():
            if name not in model.params or model.params[name].data.shape != init.params[name].data.shape:
                raise CliError(f"cli: {cfg.run.init} does not match the model ({name})")
            model.params[name].data = init.params[name].data.copy()
        model.transe = init.transe
        tc = dataclasses.replace(tc, kg_pretrain_epochs=0)
    out = ws.claim(cfg.run.checkpoint)
    result = train(model, train_ds, tc)
    save_checkpoint(model, out)
    with open(ws.claim("train_log.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,loss,loss_re,loss_kg\n")
        for i, row in enumerate(zip(result.epoch_loss, result.epoch_re, result.epoch_kg), 1):
            fh.write(",".join([str(i)] + [repr(float(v)) for v in row]) + "\n")
    print(f"train: {tc.epochs} epochs, final loss {result.epoch_loss[-1]:.4f}, checkpoint {out}")


def cmd_eval(ws: Workspace, cfg: RunConfig, inputs: dict) -> None:
    model = _checkpoint(ws, cfg.run.checkpoint, inputs)
    _, test_ds = load_workspace_data(ws, cfg, inputs)
    rep = evaluate(model, test_ds, cfg.run.eval_ns)
    write_eval_csv(rep, ws.claim("eval_report.csv"))
    write_pr_csv(rep, ws.claim("pr_curve.csv"))
    summary = summary_dict(rep)
    ws.claim("eval_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")
    pat = " ".join(f"P@{n}={rep.p_at[n]:.3f}" for n in cfg.run.eval_ns)
    print(f"eval: AUC={rep.auc:.4f} {pat}")


def cmd_probe_gates(ws: Workspace, cfg: RunConfig, inputs: dict) -> None:
    if cfg.run.noise_ratios:
        rows = noise_gate_sweep(cfg.synth, cfg.run.noise_ratios, cfg.model.xbe_config(cfg.train.seed),
                                cfg.train)
        write_gate_csv([(r.label, r.gate_sum, r.gate_mean, r.entries) for r in rows],
                       ws.claim("gate_probe.csv"))
        for r in rows:
            print(f"probe-gates: {r.label} gate_sum={r.gate_sum:.2f} gate_mean={r.gate_mean:.4f} auc={r.auc:.3f}")
        if len(rows) > 1:
            print(f"probe-gates: spearman(noise, gate_sum)={gate_noise_correlation(rows):.3f}")
        return
    model = _checkpoint(ws, cfg.run.checkpoint, inputs)
    train_ds, _ = load_workspace_data(ws, cfg, inputs)
    try:
        probe = gate_probe(model, train_ds)
    except ValueError as err:
        raise CliError(str(err)) from None
    label = f"{cfg.synth.noise}/{cfg.synth.bag_size}"
    write_gate_csv([(label, probe.gate_sum, probe.gate_mean, probe.entries)], ws.claim("gate_probe.csv"))
    print(f"probe-gates: {label} gate_sum={probe.gate_sum:.2f} gate_mean={probe.gate_mean:.4f}")


def cmd_ablate(ws: Workspace, cfg: RunConfig, inputs: dict) -> None:
    unknown = [v for v in cfg.run.variants if v not in VARIANTS]
    if unknown:
        raise CliError(f"cli: unknown variant(s): {', '.join(unknown)}")
    train_ds, test_ds = load_workspace_data(ws, cfg, inputs)
    out = ws.claim("ablation_table.csv")
    rows = run_ablation_suite(cfg.model.xbe_config(cfg.train.seed), cfg.train, train_ds, test_ds,
                              cfg.run.seeds, cfg.run.variants)
    write_ablation_csv(rows, cfg.run.seeds, out)
    for r in rows:
        print(f"ablate: {r.variant:16s} AUC {r.mean:.4f} +- {r.std:.4f}")


def cmd_sweep_layers(ws: Workspace, cfg: RunConfig, inputs: dict) -> None:
    placements = cfg.run.placements or default_placements(cfg.model.depth)
    train_ds, test_ds = load_workspace_data(ws, cfg, inputs)
    out = ws.claim("layer_sweep.csv")
    try:
        rows = layer_sweep(cfg.model.xbe_config(cfg.train.seed), cfg.train, train_ds, test_ds, placements)
    except ValueError as err:
        raise CliError(str(err)) from None
    write_sweep_csv(rows, out)
    for label, auc in rows:
        print(f"sweep-layers: {label:6s} AUC {auc:.4f}")


def cmd_gradcheck(ws: Workspace, cfg: RunConfig, inputs: dict) -> None:
    model, bags = tiny_setup(seed=cfg.train.seed)
    result = gradcheck(model, bags, tolerance=cfg.run.tolerance, seed=cfg.train.seed)
    with open(ws.claim("gradcheck.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("parameter,entries,max_rel_error\n")
        for c in result.checks:
            fh.write(f"{c.name},{c.entries},{c.max_rel_error!r}\n")
    for c in result.checks:
        print(f"gradcheck: {c.name:28s} {c.max_rel_error:.3e}")
    worst = result.worst()
    if not result.passed:
        raise CliError(f"gradcheck: {worst.name} relative error {worst.max_rel_error:.3e} "
                       f"exceeds {result.tolerance:g}")
    print(f"gradcheck: pass, max relative error {result.max_rel_error:.3e} ({worst.name})")


HANDLERS = {
    "synth": cmd_synth, "pretrain-kg": cmd_pretrain_kg, "train": cmd_train, "eval": cmd_eval,
    "probe-gates": cmd_probe_gates, "ablate": cmd_ablate, "sweep-layers": cmd_sweep_layers,
    "gradcheck": cmd_gradcheck,
}


# ---- argument parsing ------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workspace", help="output directory (default: $XBE_WORKSPACE or ./xbe_workspace)")
    common.add_argument("--config", help="JSON config file with synth/model/train/run sections")
    common.add_argument("--from-manifest", dest="from_manifest",
                        help="re-run with the exact config recorded in a manifest")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override any config value (repeatable)")
    common.add_argument("--seed", type=int, help="training seed")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--noise", type=int, help="noisy sentences per bag (m)")
    data.add_argument("--bag", type=int, help="sentences per bag (n)")
    data.add_argument("--train-bags", dest="train_bags", type=int)
    data.add_argument("--test-bags", dest="test_bags", type=int)
    data.add_argument("--relations", type=int, help="number of non-NA relations")
    data.add_argument("--data-seed", dest="data_seed", type=int)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--width", type=int)
    model.add_argument("--depth", type=int)
    model.add_argument("--placement", help="cross-stitch layer pairs, e.g. 1->2 or 1,2")
    model.add_argument("--ablation", action="append", help="ablation switch (repeatable)")
    model.add_argument("--gate-mode", dest="gate_mode", choices=["dynamic", "fixed"])
    model.add_argument("--loss-weight", dest="loss_weight", type=float)
    model.add_argument("--epochs", type=int)
    model.add_argument("--lr", type=float)
    model.add_argument("--batch-size", dest="batch_size", type=int)

    ckpt = argparse.ArgumentParser(add_help=False)
    ckpt.add_argument("--checkpoint", help="checkpoint path (relative to the workspace)")

    parser = argparse.ArgumentParser(prog="xbe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common, data], help="write a synthetic corpus and KG")
    sub.add_parser("pretrain-kg", parents=[common, data, model], help="pre-train the KG encoder")
    p = sub.add_parser("train", parents=[common, data, model, ckpt], help="joint fine-tuning")
    p.add_argument("--init", help="start from a pretrain-kg checkpoint")
    sub.add_parser("eval", parents=[common, data, ckpt], help="held-out PR/AUC/P@N")
    p = sub.add_parser("probe-gates", parents=[common, data, model, ckpt], help="sum text-side gates")
    p.add_argument("--sweep", help="noise counts, e.g. 5,10,15,20,25,30 (trains one model each)")
    p = sub.add_parser("ablate", parents=[common, data, model], help="ablation table over seeds")
    p.add_argument("--seeds", type=int, help="number of seeds (0..N-1)")
    p.add_argument("--variants", help="comma-separated subset of variants")
    p = sub.add_parser("sweep-layers", parents=[common, data, model], help="cross-stitch placement sweep")
    p.add_argument("--placements", help="e.g. 1->2,2->3,all")
    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--tolerance", type=float)
    return parser


def _config_from_manifest(path: str, command: str) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"cli: manifest not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise CliError(f"cli: malformed manifest {p}: {err}") from None
    if doc.get("command") != command:
        raise CliError(f"cli: manifest {p} records command {doc.get('command')!r}, not {command!r}")
    return merge_config(RunConfig(), doc.get("config", {}))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.from_manifest:
            cfg = _config_from_manifest(args.from_manifest, args.command)
        else:
            cfg = resolve_config(args)
        validate_config(cfg, args.command)
        root = Path(args.workspace or os.environ.get("XBE_WORKSPACE") or "xbe_workspace").resolve()
        root.mkdir(parents=True, exist_ok=True)
        ws = Workspace(root, args.force)
        inputs: dict = {}
        HANDLERS[args.command](ws, cfg, inputs)
        write_manifest(ws, args.command, cfg, inputs)
    except CliError as err:
        print(f"xbe {args.command}: {err}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, IndexError, DataFormatError) as err:
        msg = err.args[0] if err.args else repr(err)
        print(f"xbe {args.command}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
