"""Command-line entry points wiring datasets, training, fitting, editing,
analysis, benchmarking and serving.

Numeric options live in a JSON config (``--config``); flags override config
values. Every run validates its inputs, then writes ``run_manifest.json``
into the output directory before doing work. Exit codes: 0 success, 2
config error, 3 data error, 4 numerical failure.

``SURFMORPH_NUM_THREADS`` caps the BLAS thread count; ``--deterministic``
forces single-threaded, fixed-order reductions and omits timestamps from
manifests so reruns are byte-identical. Heavy imports happen after thread
setup, inside the command handlers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_THREAD_ENV = "SURFMORPH_NUM_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _setup_threads(deterministic: bool) -> None:
    count = "1" if deterministic else os.environ.get(_THREAD_ENV)
    if count:
        for var in _BLAS_VARS:
            os.environ.setdefault(var, count)


def _common_flags(sub: argparse.ArgumentParser, needs_checkpoint=False,
                  needs_out=True):
    sub.add_argument("--config", type=Path, default=None,
                     help="JSON config file; flags override its values")
    sub.add_argument("--seed", type=int, default=None,
                     help="seed override (default 0 or config value)")
    if needs_out:
        sub.add_argument("--out", type=Path, required=True,
                         help="output directory for this run")
    sub.add_argument("--deterministic", action="store_true",
                     help="single-threaded ordered reductions, no timestamps")
    sub.add_argument("--force", action="store_true",
                     help="allow writing into an existing output directory")
    if needs_checkpoint:
        sub.add_argument("--checkpoint", type=Path, required=True,
                         help="trained model checkpoint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surfmorph",
        description="deformable surface models: data, training, fitting, editing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic dataset")
    _common_flags(p)
    p.add_argument("--template-kind", choices=("icosphere", "grid_dome"),
                   default="icosphere")
    p.add_argument("--template-param", type=int, default=3)
    p.add_argument("--fields", type=int, default=4,
                   help="number of deformation basis fields")
    p.add_argument("--examples", type=int, default=8)
    p.add_argument("--coeff-std", type=float, default=1.0)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    _common_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--val-count", type=int, default=0,
                   help="examples held out (from the end) for validation")

    p = sub.add_parser("fit", help="fit a latent code to an unseen mesh")
    _common_flags(p, needs_checkpoint=True)
    p.add_argument("--mesh", type=Path, required=True,
                   help="target OBJ sharing the template connectivity")

    p = sub.add_parser("reconstruct", help="reconstruct shape+pose from 2D landmarks")
    _common_flags(p, needs_checkpoint=True)
    p.add_argument("--landmarks", type=Path, required=True,
                   help='landmark JSON: [{"vertex", "x", "y"}, ...]')

    p = sub.add_parser("edit-handles", help="point-handle edit of a shape")
    _common_flags(p, needs_checkpoint=True)
    p.add_argument("--handles", type=Path, required=True,
                   help='handle JSON: [{"vertex", "dx", "dy", "dz"}, ...]')
    p.add_argument("--latent", type=Path, default=None,
                   help='base latent JSON {"z": [...]}; default: table mean')

    p = sub.add_parser("edit-semantic", help="move a shape along a labeled direction")
    _common_flags(p, needs_checkpoint=True)
    p.add_argument("--directions", type=Path, required=True,
                   help="semantic directions JSON file")
    p.add_argument("--label", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--latent", type=Path, default=None)

    p = sub.add_parser("sample", help="sample shapes from the latent distribution")
    _common_flags(p, needs_checkpoint=True)
    p.add_argument("-n", "--count", type=int, default=1)
    p.add_argument("--subdiv", type=int, default=0)

    p = sub.add_parser("subdivide-decode", help="decode one shape at higher resolution")
    _common_flags(p, needs_checkpoint=True)
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--latent", type=Path, default=None)

    p = sub.add_parser("analyze-pca", help="principal components needed for a dataset")
    _common_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=0.99)

    p = sub.add_parser("bench-ablation", help="compare the four decoder variants")
    _common_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--budget", type=int, default=300, help="epochs per variant")
    p.add_argument("--test-count", type=int, default=4,
                   help="examples held out (from the end) as the test split")

    p = sub.add_parser("serve", help="run the HTTP editing service")
    _common_flags(p, needs_checkpoint=True, needs_out=False)
    p.add_argument("--port", type=int, default=8642)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--directions", type=Path, default=None)
    p.add_argument("--edit-steps", type=int, default=500,
                   help="optimizer step cap per handle edit")
    p.add_argument("--edit-lr", type=float, default=1e-4)
    p.add_argument("--edit-lambda-con", type=float, default=3.0e3,
                   help="handle constraint weight")
    p.add_argument("--edit-lambda-pre", type=float, default=1.0e5,
                   help="shape preservation weight; scale down for small "
                        "desk-scale models")

    return parser


# ---------------------------------------------------------------------------
# run plumbing


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class Run:
    """Output directory + manifest lifecycle for one command invocation."""

    def __init__(self, args, out: Path | None = None):
        self.args = args
        self.out = out if out is not None else getattr(args, "out", None)
        self.deterministic = bool(getattr(args, "deterministic", False))
        self.manifest = {
            "command": args.command,
            "config": str(args.config) if getattr(args, "config", None) else None,
            "seed": getattr(args, "seed", None),
            "output_dir": str(self.out) if self.out else None,
            "checkpoint": (
                str(args.checkpoint) if getattr(args, "checkpoint", None) else None
            ),
        }

    def start(self):
        if self.out is None:
            return self
        from .errors import ConfigError

        if self.out.exists():
            if not self.args.force and any(self.out.iterdir()):
                raise ConfigError(
                    f"output directory {self.out} exists; pass --force to reuse"
                )
        self.out.mkdir(parents=True, exist_ok=True)
        if not self.deterministic:
            self.manifest["started"] = _now()
        self._write()
        return self

    def finish(self):
        if self.out is None:
            return
        if not self.deterministic:
            self.manifest["finished"] = _now()
        self._write()

    def _write(self):
        with open(self.out / "run_manifest.json", "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _load_train_config(args):
    from .errors import ConfigError
    from .training import TrainConfig

    data = {}
    if args.config is not None:
        if not args.config.exists():
            raise ConfigError(f"config file {args.config} does not exist")
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if args.seed is not None:
        data["seed"] = args.seed
    return TrainConfig.from_dict(data)


def _effective_seed(args) -> int:
    return args.seed if args.seed is not None else 0


def _load_latent(path, model):
    import numpy as np

    from .errors import DataError

    if path is None:
        return model.latent_table.mean(axis=0)
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    z = np.asarray(data["z"], dtype=np.float64)
    if z.shape != (model.latent_dim,):
        raise DataError(f"latent has {z.size} entries, model wants {model.latent_dim}")
    return z


def _save_latent(z, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"z": [float(v) for v in z]}, fh, indent=2)
        fh.write("\n")


def _write_curves(rows, path):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_error"])
        for epoch, train_loss, val_error in rows:
            writer.writerow([epoch, repr(float(train_loss)),
                             "" if val_error == "" else repr(float(val_error))])


# ---------------------------------------------------------------------------
# commands


def cmd_datagen(args) -> int:
    from .datagen import SynthSpec, make_dataset, save_dataset

    spec = SynthSpec(
        template_kind=args.template_kind,
        template_param=args.template_param,
        k=args.fields,
        coeff_std=args.coeff_std,
        n_examples=args.examples,
        seed=_effective_seed(args),
    )
    run = Run(args)
    run.manifest["seed"] = spec.seed
    run.start()
    template, examples, coeffs = make_dataset(spec)
    save_dataset(args.out / "dataset", template, examples, spec, coeffs)
    run.finish()
    print(f"wrote {len(examples)} examples to {args.out / 'dataset'}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .datagen import load_dataset
    from .errors import ConfigError
    from .training import build_dataset_samples, train

    cfg = _load_train_config(args)
    run = Run(args)
    run.manifest["seed"] = cfg.seed
    run.start()
    template, examples, _ = load_dataset(args.dataset)
    if args.val_count < 0 or args.val_count >= len(examples):
        raise ConfigError("val-count must leave at least one training example")
    val = examples[len(examples) - args.val_count:] if args.val_count else None
    train_meshes = examples[: len(examples) - args.val_count]
    samples = build_dataset_samples(template, train_meshes, cfg)
    result = train(template, samples, cfg, val_meshes=val)
    save_checkpoint(result.model, args.out / "checkpoint.dfrm")
    _write_curves(result.history_csv_rows(), args.out / "curves.csv")
    with open(args.out / "train_config.json", "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())
        fh.write("\n")
    run.manifest["best_epoch"] = result.best_epoch
    run.manifest["diverged"] = result.diverged
    run.finish()
    last = result.history[-1]
    print(f"trained {last['epoch']} epochs, final loss {last['train_loss']:.6g}, "
          f"checkpoint at {args.out / 'checkpoint.dfrm'}")
    return EXIT_NUMERIC if result.diverged else EXIT_OK


def cmd_fit(args) -> int:
    import numpy as np

    from .checkpoint import load_checkpoint
    from .mesh import load_obj, save_obj
    from .model import decode_mesh
    from .training import build_vertex_sample_set, fit_latent, mean_vertex_error

    cfg = _load_train_config(args)
    run = Run(args).start()
    model = load_checkpoint(args.checkpoint)
    mesh = load_obj(args.mesh)
    target = build_vertex_sample_set(mesh, model.template, str(args.mesh))
    fit = fit_latent(model, target, cfg,
                     rng=np.random.default_rng(_effective_seed(args)))
    fitted = decode_mesh(model, fit.z, 0)
    save_obj(fitted, args.out / "fitted.obj")
    _save_latent(fit.z, args.out / "latent.json")
    error = mean_vertex_error(fitted.vertices, mesh.vertices)
    with open(args.out / "fit_report.json", "w", encoding="utf-8") as fh:
        json.dump({"mean_vertex_error": error, "loss": fit.loss,
                   "steps": fit.steps, "converged": fit.converged},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    run.finish()
    print(f"fit mean vertex error {error:.6g} "
          f"({'converged' if fit.converged else 'step cap reached'})")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    import numpy as np

    from .checkpoint import load_checkpoint
    from .fitting import LandmarkSpec, reconstruct_from_landmarks
    from .mesh import save_obj
    from .model import decode_mesh

    run = Run(args).start()
    model = load_checkpoint(args.checkpoint)
    spec = LandmarkSpec.from_json(args.landmarks)
    result = reconstruct_from_landmarks(
        model, spec, rng=np.random.default_rng(_effective_seed(args))
    )
    save_obj(decode_mesh(model, result.z, 0), args.out / "reconstructed.obj")
    _save_latent(result.z, args.out / "latent.json")
    with open(args.out / "pose.json", "w", encoding="utf-8") as fh:
        json.dump(result.pose.to_dict() | {
            "reprojection_rmse": result.reprojection_rmse,
            "warning": result.warning,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    run.finish()
    print(f"reprojection rmse {result.reprojection_rmse:.6g}")
    return EXIT_OK


def cmd_edit_handles(args) -> int:
    from .checkpoint import load_checkpoint
    from .fitting import edit_point_handles, load_handles
    from .mesh import save_obj
    from .model import decode_mesh

    run = Run(args).start()
    model = load_checkpoint(args.checkpoint)
    handles = load_handles(args.handles)
    z0 = _load_latent(args.latent, model)
    result = edit_point_handles(model, z0, handles)
    save_obj(decode_mesh(model, result.z, 0), args.out / "edited.obj")
    _save_latent(result.z, args.out / "latent.json")
    with open(args.out / "edit_report.json", "w", encoding="utf-8") as fh:
        json.dump({
            "residual_before": list(result.residual_before),
            "residual_after": list(result.residual_after),
            "steps": result.steps, "converged": result.converged,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    run.finish()
    print(f"edited {len(handles)} handles in {result.steps} steps")
    return EXIT_OK


def cmd_edit_semantic(args) -> int:
    from .checkpoint import load_checkpoint
    from .errors import DataError
    from .mesh import save_obj
    from .model import decode_mesh
    from .semantics import apply_semantic, load_directions

    run = Run(args).start()
    model = load_checkpoint(args.checkpoint)
    directions = {d.label: d for d in load_directions(args.directions)}
    if args.label not in directions:
        raise DataError(
            f"label {args.label!r} not in directions file "
            f"(available: {sorted(directions)})"
        )
    z0 = _load_latent(args.latent, model)
    z = apply_semantic(z0, directions[args.label], args.alpha)
    save_obj(decode_mesh(model, z, 0), args.out / "edited.obj")
    _save_latent(z, args.out / "latent.json")
    run.finish()
    print(f"applied {args.label} with alpha {args.alpha}")
    return EXIT_OK


def cmd_sample(args) -> int:
    import numpy as np

    from .checkpoint import load_checkpoint
    from .mesh import save_obj
    from .model import decode_mesh, sample_latent

    run = Run(args).start()
    model = load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(_effective_seed(args))
    for i in range(args.count):
        z = sample_latent(model, rng)
        save_obj(decode_mesh(model, z, args.subdiv),
                 args.out / f"sample_{i:04d}.obj")
        _save_latent(z, args.out / f"sample_{i:04d}.latent.json")
    run.finish()
    print(f"wrote {args.count} sampled meshes to {args.out}")
    return EXIT_OK


def cmd_subdivide_decode(args) -> int:
    from .checkpoint import load_checkpoint
    from .mesh import save_obj
    from .model import decode_mesh

    run = Run(args).start()
    model = load_checkpoint(args.checkpoint)
    z = _load_latent(args.latent, model)
    mesh = decode_mesh(model, z, args.level)
    save_obj(mesh, args.out / f"decoded_level{args.level}.obj")
    run.finish()
    print(f"decoded V={mesh.n_vertices} F={mesh.n_faces} at level {args.level}")
    return EXIT_OK


def cmd_analyze_pca(args) -> int:
    from .datagen import load_dataset
    from .semantics import pca_complexity

    run = Run(args).start()
    _, examples, _ = load_dataset(args.dataset)
    count = pca_complexity([ex.vertices for ex in examples],
                           threshold=args.threshold)
    with open(args.out / "pca.json", "w", encoding="utf-8") as fh:
        json.dump({"components": count, "threshold": args.threshold,
                   "examples": len(examples)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    run.finish()
    print(f"{count} components explain {args.threshold:.0%} of the variance")
    return EXIT_OK


def cmd_bench_ablation(args) -> int:
    import csv

    from .benchmarks import ablation_benchmark
    from .datagen import load_dataset
    from .errors import ConfigError

    cfg = _load_train_config(args)
    run = Run(args).start()
    template, examples, _ = load_dataset(args.dataset)
    if not 0 < args.test_count < len(examples):
        raise ConfigError("test-count must leave at least one training example")
    split = len(examples) - args.test_count
    report = ablation_benchmark(template, examples[:split], examples[split:],
                                cfg, budget_epochs=args.budget)
    with open(args.out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "epoch", "train_loss", "test_error"])
        for row in report.rows:
            writer.writerow([row["model"], row["epoch"],
                             repr(row["train_loss"]),
                             "" if row["test_error"] is None else repr(row["test_error"])])
    with open(args.out / "ablation_summary.json", "w", encoding="utf-8") as fh:
        json.dump(report.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    run.finish()
    for tag, err in sorted(report.summary["test_error"].items()):
        print(f"{tag}: test error {err:.6g}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .checkpoint import load_checkpoint
    from .semantics import load_directions
    from .service import create_app

    model = load_checkpoint(args.checkpoint)
    directions = load_directions(args.directions) if args.directions else []
    app = create_app(model, directions=directions,
                     edit_steps=args.edit_steps, edit_lr=args.edit_lr,
                     lambda_con=args.edit_lambda_con,
                     lambda_pre=args.edit_lambda_pre)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


_COMMANDS = {
    "datagen": cmd_datagen,
    "train": cmd_train,
    "fit": cmd_fit,
    "reconstruct": cmd_reconstruct,
    "edit-handles": cmd_edit_handles,
    "edit-semantic": cmd_edit_semantic,
    "sample": cmd_sample,
    "subdivide-decode": cmd_subdivide_decode,
    "analyze-pca": cmd_analyze_pca,
    "bench-ablation": cmd_bench_ablation,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    _setup_threads(bool(getattr(args, "deterministic", False)))

    from .errors import ConfigError, DataError, NumericalError, SurfmorphError

    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SurfmorphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
