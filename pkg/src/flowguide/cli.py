"""Command-line entry point.

One binary, subcommands per pipeline stage. Exit codes: 0 success, 1 usage,
2 data (bad files, digests, config), 3 numeric (non-finite values, failed
gradient checks). Every command echoes its effective configuration, writes a
manifest with input/output digests, and is deterministic given the seed.
FLOWGUIDE_SEED serves as the seed fallback when neither flag nor config
provides one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .errors import ConfigError, DataError, FlowGuideError, NumericError, SchemaMismatch
from .evalagg import CRITERIA, aggregate, aggregate_all, parse_records, render_csv, render_table
from .flow import Condition, SamplerConfig, sample, sample_guided
from .guidance import (
    GuidanceSpec,
    OptimizerConfig,
    appearance_loss,
    appearance_loss_grad,
    finite_difference_grad,
    global_pool_loss,
    global_pool_loss_grad,
    gradient_relative_error,
    structure_loss,
    structure_loss_grad,
)
from .partition import build_correspondence, cosegment, kmeans
from .toyflows import (
    AnalyticGaussianField,
    GaussianFlowSpec,
    MixtureField,
    TrainableField,
    ZeroField,
    train_cfm,
)

RUN_SCHEMA = "flowguide.run/1"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the convention here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _echo(args_dict: dict) -> None:
    print("config:", json.dumps(args_dict, sort_keys=True, default=str))


def _default_seed() -> int:
    env = os.environ.get("FLOWGUIDE_SEED")
    return int(env) if env else 0


def _resolve_seed(flag_seed, config_seed=None) -> int:
    if flag_seed is not None:
        return flag_seed
    if config_seed is not None:
        return config_seed
    return _default_seed()


# --- run-config validation ---

def _expect(kind, value, where):
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{where} must be an integer")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be an array")
        return value
    if kind is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be an object")
        return value
    raise AssertionError(kind)


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


_FIELD_KEYS = {"kind", "mean", "std", "components", "params"}
_GUIDANCE_KEYS = {
    "objective", "weight", "mode", "inner_steps", "apply_every", "denominator",
    "optimizer", "appearance_slat", "correspondence", "clusters",
    "reset_optimizer_each_step",
}
_OPTIMIZER_KEYS = {"learning_rate", "beta1", "beta2", "eps", "weight_decay"}
_RUN_KEYS = {"schema", "seed", "steps", "shape", "field", "condition", "guidance", "record_trajectory"}
_CONDITION_KEYS = {"kind", "values"}


def load_run_config(path: Path) -> dict:
    """Parse and schema-check a run config; unknown keys are fatal."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("run config must be an object")
    _check_keys(raw, _RUN_KEYS, "run config")
    if raw.get("schema") != RUN_SCHEMA:
        raise ConfigError(f"schema must be {RUN_SCHEMA!r}")
    if "shape" not in raw or "field" not in raw:
        raise ConfigError("run config needs 'shape' and 'field'")
    _expect(str, raw["shape"], "shape")
    field_cfg = _expect(dict, raw["field"], "field")
    _check_keys(field_cfg, _FIELD_KEYS, "field")
    if "seed" in raw:
        _expect(int, raw["seed"], "seed")
    if "steps" in raw:
        if _expect(int, raw["steps"], "steps") < 1:
            raise ConfigError("steps must be >= 1")
    if "record_trajectory" in raw:
        _expect(bool, raw["record_trajectory"], "record_trajectory")
    if "condition" in raw:
        cond = _expect(dict, raw["condition"], "condition")
        _check_keys(cond, _CONDITION_KEYS, "condition")
    if "guidance" in raw:
        g = _expect(dict, raw["guidance"], "guidance")
        _check_keys(g, _GUIDANCE_KEYS, "guidance")
        if "optimizer" in g:
            opt = _expect(dict, g["optimizer"], "guidance.optimizer")
            _check_keys(opt, _OPTIMIZER_KEYS, "guidance.optimizer")
    return raw


def _build_field(field_cfg: dict, base: Path, inputs: dict):
    kind = field_cfg.get("kind")
    if kind == "zero":
        return ZeroField()
    if kind == "gaussian":
        if "mean" not in field_cfg or "std" not in field_cfg:
            raise ConfigError("gaussian field needs 'mean' and 'std'")
        return AnalyticGaussianField(
            GaussianFlowSpec(
                mean=np.asarray(field_cfg["mean"], dtype=np.float64),
                std=_expect(float, field_cfg["std"], "field.std"),
            )
        )
    if kind == "mixture":
        comps = [
            GaussianFlowSpec(mean=np.asarray(c["mean"], dtype=np.float64), std=float(c["std"]))
            for c in _expect(list, field_cfg.get("components", []), "field.components")
        ]
        if not comps:
            raise ConfigError("mixture field needs components")
        return MixtureField(components=tuple(comps))
    if kind == "trained":
        params_path = base / _expect(str, field_cfg.get("params", ""), "field.params")
        inputs[params_path] = fio.sha256_file(params_path)
        return fio.read_params(params_path)
    raise ConfigError(f"unknown field kind {kind!r}")


def _build_condition(cfg: dict | None) -> Condition:
    if not cfg or cfg.get("kind", "none") == "none":
        return Condition.none()
    if cfg.get("kind") == "vector":
        return Condition.vector(cfg.get("values", []))
    raise ConfigError(f"unknown condition kind {cfg.get('kind')!r}")


def _build_guidance(cfg: dict | None, base: Path, query, query_digest: str, inputs: dict) -> GuidanceSpec:
    if not cfg:
        return GuidanceSpec(objective="none")
    objective = cfg.get("objective", "none")
    opt_cfg = cfg.get("optimizer", {})
    try:
        optimizer = OptimizerConfig(**opt_cfg)
        spec_kwargs = dict(
            objective=objective,
            weight=float(cfg.get("weight", 1.0)),
            mode=cfg.get("mode", "optimizer_steps"),
            inner_steps=int(cfg.get("inner_steps", 1)),
            apply_every=int(cfg.get("apply_every", 1)),
            denominator=cfg.get("denominator", "all_pairs"),
            optimizer=optimizer,
            reset_optimizer_each_step=bool(cfg.get("reset_optimizer_each_step", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    if objective in ("appearance", "global_pool"):
        if "appearance_slat" not in cfg:
            raise ConfigError(f"{objective} guidance needs 'appearance_slat'")
        a_path = base / cfg["appearance_slat"]
        appearance = fio.read_slat(a_path)
        a_digest = fio.sha256_file(a_path)
        inputs[a_path] = a_digest
        if appearance.channels != query.channels:
            raise ConfigError(
                f"appearance channels {appearance.channels} != query channels {query.channels}"
            )
        if objective == "appearance":
            if "correspondence" not in cfg:
                raise ConfigError("appearance guidance needs 'correspondence'")
            c_path = base / cfg["correspondence"]
            inputs[c_path] = fio.sha256_file(c_path)
            corr = fio.read_correspondence(
                c_path, query_slat_digest=query_digest, appearance_slat_digest=a_digest
            )
            if len(corr.target) != len(query):
                raise SchemaMismatch(
                    f"correspondence length {len(corr.target)} != query voxel count {len(query)}"
                )
            spec_kwargs["appearance_target"] = appearance.values[corr.target]
        else:
            spec_kwargs["appearance_target"] = appearance.values
    elif objective == "structure":
        if "clusters" not in cfg:
            raise ConfigError("structure guidance needs 'clusters'")
        cl_path = base / cfg["clusters"]
        inputs[cl_path] = fio.sha256_file(cl_path)
        clusters = fio.read_clusters(cl_path)
        if len(clusters["labels"]) != len(query):
            raise SchemaMismatch(
                f"cluster labels length {len(clusters['labels'])} != query voxel count {len(query)}"
            )
        spec_kwargs["cluster_labels"] = clusters["labels"]
    return GuidanceSpec(**spec_kwargs)


def _run_from_config(args, guided: bool):
    config_path = Path(args.config)
    cfg = load_run_config(config_path)
    base = config_path.parent
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = {config_path: fio.sha256_file(config_path)}

    shape_path = base / cfg["shape"]
    query = fio.read_slat(shape_path)
    query_digest = fio.sha256_file(shape_path)
    inputs[shape_path] = query_digest

    field = _build_field(cfg["field"], base, inputs)
    condition = _build_condition(cfg.get("condition"))
    seed = _resolve_seed(args.seed, cfg.get("seed"))
    guidance = (
        _build_guidance(cfg.get("guidance"), base, query, query_digest, inputs)
        if guided
        else GuidanceSpec(objective="none")
    )
    sampler = SamplerConfig(
        steps=cfg.get("steps", 300),
        seed=seed,
        guidance=guidance,
        record_trajectory=bool(cfg.get("record_trajectory", False)),
    )
    _echo({"command": "transfer" if guided else "sample", "seed": seed, "steps": sampler.steps,
           "objective": guidance.objective})

    slat_path = out_dir / "result.slat"
    ply_path = out_dir / "result.ply"
    outputs = {}
    if guided:
        state, report = sample_guided(query, field, condition, sampler)
        report_path = out_dir / "report.json"
        report_path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
        outputs[report_path] = fio.sha256_file(report_path)
    else:
        state = sample(query, field, condition, sampler)
    fio.write_slat(state, slat_path)
    fio.export_ply(state, ply_path)
    outputs[slat_path] = fio.sha256_file(slat_path)
    outputs[ply_path] = fio.sha256_file(ply_path)
    fio.write_manifest(
        out_dir / "manifest.json",
        "transfer" if guided else "sample",
        {"config": str(config_path), "seed": seed, "steps": sampler.steps},
        inputs,
        outputs,
    )
    return EXIT_OK


def cmd_transfer(args) -> int:
    return _run_from_config(args, guided=True)


def cmd_sample(args) -> int:
    return _run_from_config(args, guided=False)


def cmd_cluster(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [Path(p) for p in args.features]
    if len(paths) not in (1, 2):
        raise ConfigError("--features accepts one file (kmeans) or two (cosegment)")
    seed = _resolve_seed(args.seed)
    _echo({"command": "cluster", "features": [str(p) for p in paths], "k": args.k, "seed": seed})
    fields = []
    inputs = {}
    for p in paths:
        field, _, _ = fio.read_ffld(p)
        fields.append(field)
        inputs[p] = fio.sha256_file(p)
    outputs = {}
    if len(paths) == 1:
        assignment = kmeans(fields[0], args.k, seed, args.max_iters, args.tol)
        out = out_dir / "clusters.json"
        fio.write_clusters(assignment, inputs[paths[0]], out)
        outputs[out] = fio.sha256_file(out)
    else:
        qa, aa = cosegment(fields[0], fields[1], args.k, seed, args.max_iters, args.tol)
        for assignment, p, name in (
            (qa, paths[0], "clusters_query.json"),
            (aa, paths[1], "clusters_appearance.json"),
        ):
            out = out_dir / name
            fio.write_clusters(assignment, inputs[p], out)
            outputs[out] = fio.sha256_file(out)
    fio.write_manifest(
        out_dir / "manifest.json",
        "cluster",
        {"k": args.k, "seed": seed, "max_iters": args.max_iters, "tol": args.tol},
        inputs,
        outputs,
    )
    return EXIT_OK


def cmd_correspond(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(args.seed)
    _echo({"command": "correspond", "mode": args.mode, "k": args.k, "seed": seed})

    paths = {
        "query_slat": Path(args.query_slat),
        "query_features": Path(args.query_features),
        "appearance_slat": Path(args.appearance_slat),
        "appearance_features": Path(args.appearance_features),
    }
    digests = {name: fio.sha256_file(p) for name, p in paths.items()}
    query = fio.read_slat(paths["query_slat"])
    appearance = fio.read_slat(paths["appearance_slat"])
    qf, q_pos, _ = fio.read_ffld(paths["query_features"])
    af, a_pos, _ = fio.read_ffld(paths["appearance_features"])
    if len(qf) != len(query) or not np.array_equal(q_pos, query.positions):
        raise SchemaMismatch("query features are not aligned to the query slat")
    if len(af) != len(appearance) or not np.array_equal(a_pos, appearance.positions):
        raise SchemaMismatch("appearance features are not aligned to the appearance slat")

    if args.mode == "coseg_nn":
        qa, aa = cosegment(qf, af, args.k, seed)
        corr = build_correspondence(qf, af, args.mode, qa, aa)
    else:
        corr = build_correspondence(qf, af, args.mode)
    doc = fio.CorrespondenceDocument(
        method=corr.method,
        target=corr.target,
        appearance_length=len(appearance),
        query_slat_digest=digests["query_slat"],
        appearance_slat_digest=digests["appearance_slat"],
        query_features_digest=digests["query_features"],
        appearance_features_digest=digests["appearance_features"],
    )
    out = out_dir / "correspondence.json"
    fio.write_correspondence(doc, out)
    fio.write_manifest(
        out_dir / "manifest.json",
        "correspond",
        {"mode": args.mode, "k": args.k, "seed": seed},
        {p: digests[name] for name, p in paths.items()},
        {out: fio.sha256_file(out)},
    )
    return EXIT_OK


def cmd_train_toy(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(args.seed)
    mean = np.asarray([float(v) for v in args.mean.split(",")], dtype=np.float64)
    spec = GaussianFlowSpec(mean=mean, std=args.std)
    _echo({"command": "train-toy", "arch": args.arch, "channels": len(mean),
           "batches": args.batches, "batch_size": args.batch_size, "seed": seed})
    field = TrainableField(
        architecture=args.arch,
        channels=len(mean),
        hidden=args.hidden,
        time_degree=args.time_degree,
    )
    optimizer = OptimizerConfig(learning_rate=args.lr, weight_decay=args.weight_decay)
    trained, losses = train_cfm(
        field, spec, batch_count=args.batches, batch_size=args.batch_size,
        seed=seed, optimizer=optimizer,
    )
    params_path = out_dir / "params.json"
    losses_path = out_dir / "losses.json"
    fio.write_params(trained, params_path)
    losses_path.write_text(json.dumps({"losses": losses}) + "\n")
    print(f"final loss {losses[-1]:.6f} over {len(losses)} batches")
    fio.write_manifest(
        out_dir / "manifest.json",
        "train-toy",
        {"arch": args.arch, "mean": mean.tolist(), "std": args.std, "lr": args.lr,
         "batches": args.batches, "batch_size": args.batch_size, "seed": seed},
        {},
        {params_path: fio.sha256_file(params_path), losses_path: fio.sha256_file(losses_path)},
    )
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(args.seed)
    _echo({"command": "gradcheck", "instances": args.instances, "seed": seed, "h": args.h})
    rng = np.random.default_rng(seed)
    worst = {"appearance": 0.0, "structure_all_pairs": 0.0, "structure_complement": 0.0,
             "global_pool": 0.0}
    for _ in range(args.instances):
        n = int(rng.integers(4, 21))
        c = int(rng.integers(1, 9))
        values = rng.standard_normal((n, c))
        target = rng.standard_normal((n, c))
        err = gradient_relative_error(
            appearance_loss_grad(values, target),
            finite_difference_grad(lambda m: appearance_loss(m, target), values, args.h),
        )
        worst["appearance"] = max(worst["appearance"], err)

        labels = rng.integers(0, 2, size=n)
        labels[: 4] = [0, 0, 1, 1]  # both clusters populated
        for name, mode in (("structure_all_pairs", "all_pairs"), ("structure_complement", "complement")):
            err = gradient_relative_error(
                structure_loss_grad(values, labels, mode),
                finite_difference_grad(lambda m: structure_loss(m, labels, mode), values, args.h),
            )
            worst[name] = max(worst[name], err)

        other = rng.standard_normal((int(rng.integers(2, 12)), c))
        err = gradient_relative_error(
            global_pool_loss_grad(values, other),
            finite_difference_grad(lambda m: global_pool_loss(m, other), values, args.h),
        )
        worst["global_pool"] = max(worst["global_pool"], err)

    failed = False
    for name, err in worst.items():
        tol = args.pool_tolerance if name == "global_pool" else args.tolerance
        status = "ok" if err < tol else "FAIL"
        if err >= tol:
            failed = True
        print(f"{name}: max rel err {err:.3e} (tol {tol:.0e}) {status}")
    fio.write_manifest(
        out_dir / "manifest.json",
        "gradcheck",
        {"instances": args.instances, "seed": seed, "h": args.h,
         "tolerance": args.tolerance, "pool_tolerance": args.pool_tolerance},
        {},
        {},
    )
    if failed:
        raise NumericError(f"gradient check exceeded tolerance: {worst}")
    return EXIT_OK


def cmd_eval_aggregate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = Path(args.records)
    _echo({"command": "eval-aggregate", "records": str(records_path), "flat": args.flat})
    with open(records_path) as handle:
        records, skipped = parse_records(handle, strict=not args.lenient)
    for line_no, reason in skipped:
        print(f"skipped line {line_no}: {reason}", file=sys.stderr)
    if args.criterion == "all":
        tables = aggregate_all(records, flat=args.flat)
    else:
        tables = {args.criterion: aggregate(records, args.criterion, flat=args.flat)}
    table_text = render_table(tables)
    print(table_text)
    txt_path = out_dir / "table.txt"
    csv_path = out_dir / "table.csv"
    txt_path.write_text(table_text + "\n")
    csv_path.write_text(render_csv(tables) + "\n")
    fio.write_manifest(
        out_dir / "manifest.json",
        "eval-aggregate",
        {"criterion": args.criterion, "flat": args.flat, "lenient": args.lenient},
        {records_path: fio.sha256_file(records_path)},
        {txt_path: fio.sha256_file(txt_path), csv_path: fio.sha256_file(csv_path)},
    )
    return EXIT_OK


def cmd_export_ply(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    slat_path = Path(args.slat)
    _echo({"command": "export-ply", "slat": str(slat_path)})
    latent = fio.read_slat(slat_path)
    out = Path(args.out) if args.out else out_dir / "points.ply"
    fio.export_ply(latent, out)
    fio.write_manifest(
        out_dir / "manifest.json",
        "export-ply",
        {"slat": str(slat_path)},
        {slat_path: fio.sha256_file(slat_path)},
        {out: fio.sha256_file(out)},
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowguide", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cluster", help="k-means or co-segmentation over feature files")
    p.add_argument("--features", action="append", required=True,
                   help="FFLD feature file; give twice for co-segmentation")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("correspond", help="build a query->appearance voxel map")
    p.add_argument("--query-slat", required=True)
    p.add_argument("--query-features", required=True)
    p.add_argument("--appearance-slat", required=True)
    p.add_argument("--appearance-features", required=True)
    p.add_argument("--mode", choices=("coseg_nn", "global_nn", "global_pool"), default="coseg_nn")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_correspond)

    p = sub.add_parser("transfer", help="guided reverse-flow sampling from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("sample", help="unguided reverse-flow sampling from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train-toy", help="fit a toy velocity field with flow matching")
    p.add_argument("--arch", choices=("affine", "mlp1"), default="affine")
    p.add_argument("--mean", default="0.0", help="comma-separated data mean, one value per channel")
    p.add_argument("--std", type=float, default=1.0)
    p.add_argument("--batches", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--time-degree", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("gradcheck", help="finite-difference sweep over the guidance gradients")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--pool-tolerance", type=float, default=1e-4)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("eval-aggregate", help="mean-rank tables from ranking records")
    p.add_argument("--records", required=True, help="line-delimited JSON records")
    p.add_argument("--criterion", choices=CRITERIA + ("all",), default="all")
    p.add_argument("--flat", action="store_true", help="flat mean instead of view-then-object")
    p.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_eval_aggregate)

    p = sub.add_parser("export-ply", help="write a colored PLY point cloud for a latent file")
    p.add_argument("--slat", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_export_ply)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FlowGuideError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
