"""Command-line entry point: simulate / features / train / detect / bench.

Stages hand data off through JSONL files so each one is independently
testable and cacheable. Exit codes: 0 success, 1 usage/config error,
2 detector alerts raised, 3 runtime failure. Diagnostics go to stderr,
data to stdout or files.
"""

from __future__ import annotations

import difflib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .bench import (
    ExperimentSpec,
    compare_to_paper,
    render_comparison,
    render_report,
    run_cv_experiment,
    run_experiment,
)
from .detector import AlertPolicy, DetectorConfig, SourceSpec, run_detector
from .errors import ConfigurationError, SentinelError
from .events import Load, ProcessCategory, Profile, read_trace, write_trace
from .features import build_dataset, read_dataset, write_dataset
from .models import TrainConfig, fit, save_model
from .simgen import SimConfig, generate_trace

ENV_PREFIX = "HPC_SENTINEL_"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ALERTS = 2
EXIT_RUNTIME = 3


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


@dataclass(frozen=True)
class Opt:
    name: str
    type: object = str
    default: object = None
    help: str = ""
    choices: tuple | None = None
    required: bool = False
    is_flag: bool = False


_SIMULATE = [
    Opt("profile", str, None, "spectre|meltdown", ("spectre", "meltdown"), required=True),
    Opt("variant", str, None, "v1|v2 (spectre only)", ("v1", "v2")),
    Opt("load", str, "nl", "nl|al|fl"),
    Opt("benign", int, 3, "benign process count"),
    Opt("attack", int, 1, "attack process count"),
    Opt("windows", int, 200, "samples per process"),
    Opt("window-ms", int, 100, "sampling interval in ms"),
    Opt("noise", float, 0.03, "counter noise bound"),
    Opt("seed", int, 0, "generation seed"),
    Opt("out", str, None, "output trace JSONL", required=True),
]
_FEATURES = [
    Opt("in", str, None, "input trace JSONL", required=True),
    Opt("out", str, None, "output dataset JSONL", required=True),
    Opt("seed", int, 0, "shuffle seed"),
    Opt("balance", bool, False, "undersample the majority class", is_flag=True),
]
_TRAIN = [
    Opt("model", str, None, "lda|lr|svm|cnn", ("lda", "lr", "svm", "cnn"), required=True),
    Opt("data", str, None, "training dataset JSONL", required=True),
    Opt("out", str, None, "output model JSON", required=True),
    Opt("seed", int, 0, "training seed"),
    Opt("epochs", int, 500, "gradient-descent epochs (lr/svm)"),
    Opt("learning-rate", float, 0.1, "gradient-descent step (lr/svm)"),
    Opt("threshold", float, 0.5, "decision threshold on the score"),
]
_DETECT = [
    Opt("model", str, None, "trained model JSON", required=True),
    Opt("replay", str, None, "trace JSONL to replay", required=True),
    Opt("policy", str, "m-of-n", "first-hit|m-of-n", ("first-hit", "m-of-n")),
    Opt("m", int, 3, "malicious windows needed (m-of-n)"),
    Opt("n", int, 5, "window history length (m-of-n)"),
    Opt("out", str, None, "verdict JSONL file (default stdout)"),
    Opt("summary", str, None, "summary JSON file (default stderr)"),
]
_BENCH = [
    Opt("attack", str, None, "spectre-v1|spectre-v2|meltdown", ("spectre-v1", "spectre-v2", "meltdown"), required=True),
    Opt("models", str, "all", "all or comma list of lda,lr,svm,cnn"),
    Opt("loads", str, "all", "all or comma list of nl,al,fl"),
    Opt("windows", int, 10_000, "labeled windows per condition"),
    Opt("seed", int, 0, "experiment seed"),
    Opt("format", str, "text", "text|md|csv", ("text", "md", "markdown", "csv")),
    Opt("out", str, None, "report file (default stdout)"),
    Opt("compare", bool, False, "append deviation report vs the published tables", is_flag=True),
    Opt("paper-scale", bool, False, "use 100,000 windows per condition", is_flag=True),
    Opt("cv", bool, False, "also run k-fold cross-validation", is_flag=True),
    Opt("k", int, 5, "folds for --cv"),
    Opt("timing", bool, True, "measure overhead (disable for byte-reproducible tables)"),
]

SUBCOMMANDS: dict[str, list[Opt]] = {
    "simulate": _SIMULATE,
    "features": _FEATURES,
    "train": _TRAIN,
    "detect": _DETECT,
    "bench": _BENCH,
}

_GLOBAL_FLAGS = ("--config", "--print-config", "--help", "-h")


def _usage(cmd: str | None = None) -> str:
    if cmd is None:
        lines = ["usage: hpc-sentinel <command> [options]", "", "commands:"]
        lines += [f"  {name}" for name in SUBCOMMANDS]
        lines.append("")
        lines.append("common options: --config FILE, --print-config, --help")
        return "\n".join(lines)
    lines = [f"usage: hpc-sentinel {cmd} [options]", "", "options:"]
    for opt in SUBCOMMANDS[cmd]:
        flag = f"--{opt.name}"
        extra = " (required)" if opt.required else f" (default: {opt.default})" if opt.default is not None else ""
        lines.append(f"  {flag:<18} {opt.help}{extra}")
    lines.append(f"  {'--config FILE':<18} JSON config file (flags > env > file > defaults)")
    lines.append(f"  {'--print-config':<18} show effective config with sources and exit")
    return "\n".join(lines)


def _env_name(opt_name: str) -> str:
    return ENV_PREFIX + opt_name.upper().replace("-", "_")


def _coerce(opt: Opt, raw, source: str):
    try:
        value = _parse_bool(raw) if opt.type is bool else opt.type(raw)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"bad value for --{opt.name} from {source}: {raw!r} ({e})") from e
    if opt.choices and value not in opt.choices:
        raise ConfigurationError(f"--{opt.name}: {value!r} not one of {list(opt.choices)}")
    return value


def _parse_args(cmd: str, argv: list[str]) -> tuple[dict, dict, bool]:
    """Resolve options from flags > env > config file > defaults."""
    opts = {o.name: o for o in SUBCOMMANDS[cmd]}
    flag_values: dict[str, object] = {}
    config_path: str | None = None
    print_config = False

    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg in ("--help", "-h"):
            print(_usage(cmd))
            raise SystemExit(EXIT_OK)
        if arg == "--print-config":
            print_config = True
            i += 1
            continue
        if arg == "--config":
            if i + 1 >= len(argv):
                raise ConfigurationError("--config needs a file path")
            config_path = argv[i + 1]
            i += 2
            continue
        if not arg.startswith("--"):
            raise ConfigurationError(f"unexpected argument {arg!r}")
        name = arg[2:]
        if name not in opts:
            known = [f"--{n}" for n in opts] + list(_GLOBAL_FLAGS)
            close = difflib.get_close_matches(arg, known, n=1)
            hint = f"; did you mean {close[0]}?" if close else ""
            raise ConfigurationError(f"unknown flag {arg}{hint}")
        opt = opts[name]
        if opt.is_flag and (i + 1 >= len(argv) or argv[i + 1].startswith("--")):
            flag_values[name] = True
            i += 1
        else:
            if i + 1 >= len(argv):
                raise ConfigurationError(f"--{name} needs a value")
            flag_values[name] = argv[i + 1]
            i += 2

    file_values: dict[str, object] = {}
    if config_path:
        try:
            file_values = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read config file {config_path}: {e}") from e
        if not isinstance(file_values, dict):
            raise ConfigurationError(f"config file {config_path} must hold a JSON object")

    resolved: dict[str, object] = {}
    sources: dict[str, str] = {}
    for name, opt in opts.items():
        env = os.environ.get(_env_name(name))
        if name in flag_values:
            resolved[name] = _coerce(opt, flag_values[name], "flag")
            sources[name] = "flag"
        elif env is not None:
            resolved[name] = _coerce(opt, env, f"env {_env_name(name)}")
            sources[name] = "env"
        elif name in file_values:
            resolved[name] = _coerce(opt, file_values[name], f"file {config_path}")
            sources[name] = "file"
        else:
            resolved[name] = opt.default
            sources[name] = "default"
        if opt.required and resolved[name] is None and not print_config:
            raise ConfigurationError(f"--{name} is required")
    return resolved, sources, print_config


def _load_value(s: str) -> Load:
    try:
        return Load(s.upper())
    except ValueError:
        raise ConfigurationError(f"unknown load {s!r}; expected nl|al|fl") from None


# --- subcommand implementations ------------------------------------------------


def _run_simulate(cfg: dict) -> int:
    profile = Profile(cfg["profile"])
    attack_cat = None
    if cfg["variant"] is not None:
        if profile is not Profile.SPECTRE:
            raise ConfigurationError("--variant applies only to --profile spectre")
        attack_cat = ProcessCategory.SPECTRE_V1 if cfg["variant"] == "v1" else ProcessCategory.SPECTRE_V2
    sim = SimConfig(
        profile=profile,
        load=_load_value(cfg["load"]),
        n_benign=cfg["benign"],
        n_attack=cfg["attack"],
        duration_windows=cfg["windows"],
        window_ms=cfg["window-ms"],
        seed=cfg["seed"],
        counter_noise=cfg["noise"],
        attack=attack_cat,
    )
    trace = generate_trace(sim)
    write_trace(trace, cfg["out"])
    print(f"wrote {len(trace.samples)} samples for {len(trace.processes)} processes to {cfg['out']}", file=sys.stderr)
    return EXIT_OK


def _run_features(cfg: dict) -> int:
    trace = read_trace(cfg["in"])
    ds = build_dataset([trace], seed=cfg["seed"], balance=cfg["balance"])
    write_dataset(ds, cfg["out"])
    print(f"wrote {ds.n} labeled windows to {cfg['out']}", file=sys.stderr)
    return EXIT_OK


def _run_train(cfg: dict) -> int:
    ds = read_dataset(cfg["data"])
    train_config = TrainConfig(
        learning_rate=cfg["learning-rate"],
        epochs=cfg["epochs"],
        threshold=cfg["threshold"],
    )
    model = fit(cfg["model"], ds, train_config, seed=cfg["seed"])
    if model.warning:
        print(f"warning: {model.warning}", file=sys.stderr)
    save_model(model, cfg["out"])
    print(f"trained {cfg['model']} on {ds.n} windows -> {cfg['out']}", file=sys.stderr)
    return EXIT_OK


def _run_detect(cfg: dict) -> int:
    policy = (
        AlertPolicy(kind="first-hit", m=1, n=1)
        if cfg["policy"] == "first-hit"
        else AlertPolicy(kind="m-of-n", m=cfg["m"], n=cfg["n"])
    )
    detector_config = DetectorConfig(
        model_path=cfg["model"],
        source=SourceSpec(kind="replay", trace_path=cfg["replay"]),
        policy=policy,
        sink_path=cfg["out"],
    )
    result = run_detector(detector_config)
    if cfg["out"] is None:
        from .detector import verdict_to_json

        for v in result.verdicts:
            print(verdict_to_json(v))
    summary = json.dumps(result.summary, indent=2)
    if cfg["summary"]:
        Path(cfg["summary"]).write_text(summary + "\n", encoding="utf-8")
    else:
        print(summary, file=sys.stderr)
    if result.error:
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_ALERTS if result.alerts else EXIT_OK


_ATTACK_FLAGS = {
    "spectre-v1": ProcessCategory.SPECTRE_V1,
    "spectre-v2": ProcessCategory.SPECTRE_V2,
    "meltdown": ProcessCategory.MELTDOWN,
}


def _run_bench(cfg: dict) -> int:
    models = ("lda", "lr", "svm", "cnn") if cfg["models"] == "all" else tuple(m.strip() for m in cfg["models"].split(","))
    loads = (Load.NL, Load.AL, Load.FL) if cfg["loads"] == "all" else tuple(_load_value(s.strip()) for s in cfg["loads"].split(","))
    windows = 100_000 if cfg["paper-scale"] else cfg["windows"]
    spec = ExperimentSpec(
        attack=_ATTACK_FLAGS[cfg["attack"]],
        loads=loads,
        models=models,
        windows=windows,
        k=cfg["k"],
        seed=cfg["seed"],
    )
    table = run_experiment(spec, timing=cfg["timing"])
    fmt = {"md": "markdown"}.get(cfg["format"], cfg["format"])
    report = render_report(table, fmt)
    if cfg["compare"]:
        report += "\n" + render_comparison(compare_to_paper(table, spec.attack))
    if cfg["cv"]:
        lines = ["", "cross-validation (mean accuracy +/- std over folds):"]
        for (model, load), cv in run_cv_experiment(spec).items():
            lines.append(f"  {model:<4} {load}: {cv.mean_accuracy:6.2f} +/- {cv.std_accuracy:.2f}")
        report += "\n".join(lines) + "\n"
    if cfg["out"]:
        Path(cfg["out"]).write_text(report, encoding="utf-8")
        print(f"wrote report to {cfg['out']}", file=sys.stderr)
    else:
        print(report, end="")
    return EXIT_OK


_RUNNERS = {
    "simulate": _run_simulate,
    "features": _run_features,
    "train": _run_train,
    "detect": _run_detect,
    "bench": _run_bench,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("--help", "-h", "help"):
        print(_usage())
        return EXIT_OK
    cmd = argv[0]
    if cmd not in SUBCOMMANDS:
        close = difflib.get_close_matches(cmd, list(SUBCOMMANDS), n=1)
        hint = f"; did you mean {close[0]!r}?" if close else ""
        print(f"unknown command {cmd!r}{hint}\n\n{_usage()}", file=sys.stderr)
        return EXIT_USAGE

    try:
        cfg, sources, print_config = _parse_args(cmd, argv[1:])
    except ConfigurationError as e:
        print(f"error: {e}\n\n{_usage(cmd)}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    if print_config:
        for name in sorted(cfg):
            print(f"{name}={cfg[name]} ({sources[name]})")
        return EXIT_OK

    try:
        return _RUNNERS[cmd](cfg)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SentinelError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
