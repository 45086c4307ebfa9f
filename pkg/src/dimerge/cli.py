"""Command-line entry point: load, align, merge or diagnose, save.

Runs are driven by a declarative JSON config (versioned ``schema_version``
field) with repeatable ``--set dotted.key=value`` overrides. The effective,
fully-resolved config is echoed into the merge report so any run can be
reproduced byte-for-byte. Output is written to a temporary path and renamed
on success; partial outputs are removed on failure.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 numeric/shape error.
Set ``DIMERGE_LOG`` to DEBUG/INFO/WARNING/ERROR to control logging.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import shutil
import sys
from pathlib import Path

from .diagnostics import ModuleKeySchema, diagnose, export_csv, export_json
from .errors import ConfigError, DimergeError
from .geometry import EPSILON_DEFAULT
from .merge import MergeConfig, merge_checkpoint
from .presets import module_schema, remap_rules
from .store import Role, load_checkpoint, remap_keys, save_checkpoint

logger = logging.getLogger("dimerge")

SCHEMA_VERSION = 1
DEFAULT_SHARD_LIMIT = 4 * 1024**3


def _setup_logging() -> None:
    level = os.environ.get("DIMERGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_set_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(config: dict, assignments: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides to leaf fields of a config dict."""
    config = copy.deepcopy(config)
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"--set expects dotted.key=value, got {assignment!r}",
                              error_class="config.bad_override")
        dotted, raw = assignment.split("=", 1)
        keys = dotted.split(".")
        node = config
        for key in keys[:-1]:
            nxt = node.get(key)
            if not isinstance(nxt, dict):
                nxt = {}
                node[key] = nxt
            node = nxt
        node[keys[-1]] = _parse_set_value(raw)
    return config


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}", error_class="config.missing_path")
    try:
        config = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", error_class="config.parse") from exc
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object", error_class="config.parse")
    version = config.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}", error_class="config.version")
    return config


def _required_path(config: dict, key: str) -> Path:
    value = config.get(key)
    if not value:
        raise ConfigError(f"config field {key!r} is required", error_class="config.missing_path")
    p = Path(value)
    if not p.exists():
        raise ConfigError(f"{key} does not exist: {p}", error_class="config.missing_path")
    return p


def _resolve_remap(config: dict) -> dict[str, list[tuple[str, str]]]:
    remap = config.get("remap", {})
    if "preset" in remap:
        family = remap["preset"]
        return {role: remap_rules(family, role) for role in ("base", "multilingual", "anchor")}
    out = {}
    for role in ("base", "multilingual", "anchor"):
        rules = remap.get(role, [])
        out[role] = [(str(m), str(r)) for m, r in rules]
    return out


def _load_inputs(config: dict):
    base_path = _required_path(config, "base_path")
    ml_path = _required_path(config, "multilingual_path")
    anchor_path = _required_path(config, "anchor_path")
    rules = _resolve_remap(config)
    base = remap_keys(load_checkpoint(base_path, Role.BASE), rules["base"])
    ml = remap_keys(load_checkpoint(ml_path, Role.MULTILINGUAL), rules["multilingual"])
    anchor = remap_keys(load_checkpoint(anchor_path, Role.ANCHOR), rules["anchor"])
    return base, ml, anchor


def _remove_output(path: Path) -> None:
    if path.is_dir():
        shutil.rmtree(path)
    elif path.exists():
        path.unlink()


def cmd_merge(config_path: str, overrides: list[str], output: str | None, threads: int | None) -> int:
    config = apply_overrides(load_config(config_path), overrides)
    if output:
        config["output_path"] = output
    if threads:
        config["threads"] = threads

    out_value = config.get("output_path")
    if not out_value:
        raise ConfigError("config field 'output_path' is required", error_class="config.missing_path")
    out_path = Path(out_value)
    for key in ("base_path", "multilingual_path", "anchor_path"):
        if config.get(key) and Path(config[key]).resolve() == out_path.resolve():
            raise ConfigError(f"output_path collides with {key}", error_class="config.output_collision")

    cfg = MergeConfig.from_dict(config.get("merge", {}))
    base, ml, anchor = _load_inputs(config)

    effective = copy.deepcopy(config)
    effective["schema_version"] = SCHEMA_VERSION
    effective["merge"] = cfg.to_dict()
    effective.setdefault("threads", os.cpu_count() or 1)

    merged, report = merge_checkpoint(base, ml, anchor, cfg, threads=int(effective["threads"]))
    report.config = effective

    report_path = Path(config.get("report_path") or f"{out_path}.report.json")
    tmp_path = out_path.parent / f"{out_path.name}.tmp{os.getpid()}"
    if out_path.suffix == ".safetensors":
        tmp_path = tmp_path.with_name(tmp_path.name + ".safetensors")
    shard_limit = int(config.get("shard_limit", DEFAULT_SHARD_LIMIT))

    try:
        save_checkpoint(merged, tmp_path, shard_limit=shard_limit)
        _remove_output(out_path)
        os.replace(tmp_path, out_path)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    except BaseException:
        _remove_output(tmp_path)
        _remove_output(out_path)
        raise

    mean = "-" if report.mean_omega_ml is None else f"{report.mean_omega_ml:.4f}"
    print(
        f"merged {report.merged_count} tensors, passed through {report.pass_through_count}, "
        f"mean omega_ml {mean} -> {out_path}"
    )
    return 0


def _resolve_schema(section: dict) -> ModuleKeySchema:
    schema = section.get("schema", {})
    if isinstance(schema, str):
        return module_schema(schema)
    if "preset" in schema:
        return module_schema(schema["preset"])
    if schema:
        return ModuleKeySchema.from_dict(schema)
    return ModuleKeySchema()


def cmd_diagnose(config_path: str, overrides: list[str]) -> int:
    config = apply_overrides(load_config(config_path), overrides)
    section = config.get("diagnose", {})
    base, ml, anchor = _load_inputs(config)
    schema = _resolve_schema(section)
    rows = diagnose(base, ml, anchor, schema, epsilon=float(section.get("epsilon", EPSILON_DEFAULT)))
    wrote = []
    if section.get("csv_path"):
        export_csv(rows, section["csv_path"])
        wrote.append(section["csv_path"])
    if section.get("json_path"):
        export_json(rows, section["json_path"])
        wrote.append(section["json_path"])
    if not wrote:
        raise ConfigError("diagnose config needs csv_path and/or json_path",
                          error_class="config.missing_path")
    print(f"wrote {len(rows)} rows -> {', '.join(map(str, wrote))}")
    return 0


def cmd_inspect(checkpoint_path: str) -> int:
    ckpt = load_checkpoint(checkpoint_path, Role.BASE)
    for name, rec in ckpt.tensors.items():
        shape = "x".join(map(str, rec.shape)) or "scalar"
        print(f"{name}  {shape}  {rec.dtype.value}")
    print(f"{len(ckpt)} tensors, {ckpt.total_parameters} parameters")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dimerge",
                                     description="Checkpoint merging and residual diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    merge_p = sub.add_parser("merge", help="merge a multilingual residual into a multimodal anchor")
    merge_p.add_argument("--config", required=True, help="path to a JSON run config")
    merge_p.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="dotted.key=value", help="override a config leaf (repeatable)")
    merge_p.add_argument("--output", default=None, help="override output_path")
    merge_p.add_argument("--threads", type=int, default=None, help="worker pool size")

    diag_p = sub.add_parser("diagnose", help="export residual-heterogeneity tables")
    diag_p.add_argument("--config", required=True)
    diag_p.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="dotted.key=value")

    inspect_p = sub.add_parser("inspect", help="list tensors in a checkpoint")
    inspect_p.add_argument("checkpoint", help="tensor file, index manifest, or directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "merge":
            return cmd_merge(args.config, args.overrides, args.output, args.threads)
        if args.command == "diagnose":
            return cmd_diagnose(args.config, args.overrides)
        return cmd_inspect(args.checkpoint)
    except DimergeError as exc:
        print(f"error[{exc.error_class}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error[io.os]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
