"""Benchmark harnesses shared by the CLI and the acceptance suite.

The ablation benchmark trains the four decoder variants on one dataset under
an identical epoch budget and evaluates held-out reconstruction by latent
fitting. The sampling benchmark compares hybrid (vertices + uniform surface
samples) against vertices-only training point sets on area-weighted test
error, which matters on templates with large sparsely-tessellated faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .mesh import TriMesh, resolve_many, sample_uniform
from .training import (
    TrainConfig,
    build_dataset_samples,
    build_vertex_sample_set,
    fit_latent,
    mean_vertex_error,
    point_rmse,
    train,
)
from .variants import VARIANT_TAGS, build_variant


def _fit_test_errors(model, template: TriMesh, test_meshes, cfg: TrainConfig,
                     eval_points=None):
    """Per-test-shape (mean vertex error, point RMSE) after latent fitting.

    When ``eval_points`` (a list of surface points) is given, errors are also
    measured at those points, which makes the metric area-weighted instead of
    vertex-weighted.
    """
    mean_errs, rmses, area_errs = [], [], []
    eval_template_pos = (
        resolve_many(template, eval_points) if eval_points is not None else None
    )
    for i, mesh in enumerate(test_meshes):
        target = build_vertex_sample_set(mesh, template, f"test{i}")
        fit = fit_latent(model, target, cfg, rng=np.random.default_rng([101, i]))
        pred, _ = model.predict_batch(fit.z[None], target.template_pos[None])
        mean_errs.append(mean_vertex_error(pred[0], target.target_pos))
        rmses.append(point_rmse(pred[0], target.target_pos))
        if eval_points is not None:
            pred_pts, _ = model.predict_batch(fit.z[None], eval_template_pos[None])
            truth = resolve_many(mesh, eval_points)
            area_errs.append(mean_vertex_error(pred_pts[0], truth))
    return mean_errs, rmses, area_errs


@dataclass
class AblationReport:
    rows: list[dict] = field(default_factory=list)
    histories: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def ablation_benchmark(template: TriMesh, train_meshes: Sequence[TriMesh],
                       test_meshes: Sequence[TriMesh], cfg: TrainConfig,
                       budget_epochs: int,
                       tags: Sequence[str] = VARIANT_TAGS) -> AblationReport:
    """Train every decoder variant for the same epoch budget and compare.

    Vertex-array variants can only emit per-vertex outputs, so they train on
    vertex-only sample sets; the two sine-MLP variants use the configured
    hybrid sample count.
    """
    report = AblationReport()
    final_loss, test_error, test_rmse = {}, {}, {}
    for tag in tags:
        vertex_only = tag.startswith("vertex")
        cfg_tag = replace(
            cfg,
            max_epochs=budget_epochs,
            n_samples=template.n_vertices if vertex_only else cfg.n_samples,
            stop_train_rmse=None,
        )
        decoder = build_variant(
            tag, template, len(train_meshes), np.random.default_rng(cfg_tag.seed),
            latent_dim=cfg_tag.latent_dim, siren_hidden=cfg_tag.siren_hidden,
            hyper_hidden=cfg_tag.hyper_hidden, omega0=cfg_tag.omega0,
            latent_init_std=cfg_tag.latent_init_std,
        )
        samples = build_dataset_samples(template, train_meshes, cfg_tag)
        result = train(template, samples, cfg_tag, decoder=decoder)
        losses = [row["train_loss"] for row in result.history]
        report.histories[tag] = losses
        mean_errs, rmses, _ = _fit_test_errors(decoder, template, test_meshes, cfg_tag)
        final_loss[tag] = losses[-1]
        test_error[tag] = float(np.mean(mean_errs))
        test_rmse[tag] = float(np.mean(rmses))
        mark = max(1, len(losses) // 10)
        for epoch in list(range(mark, len(losses) + 1, mark)):
            report.rows.append({
                "model": tag, "epoch": epoch,
                "train_loss": losses[epoch - 1],
                "test_error": test_error[tag] if epoch == len(losses) else None,
            })

    summary = {
        "final_train_loss": final_loss,
        "test_error": test_error,
        "test_rmse": test_rmse,
        "budget_epochs": budget_epochs,
    }
    if "siren_hyper" in final_loss and "siren_concat" in final_loss:
        threshold = final_loss["siren_concat"]
        reach = next(
            (i + 1 for i, l in enumerate(report.histories["siren_hyper"])
             if l <= threshold),
            None,
        )
        summary["hyper_epochs_to_concat_final_loss"] = reach
    report.summary = summary
    return report


def sampling_strategy_benchmark(template: TriMesh,
                                train_meshes: Sequence[TriMesh],
                                test_meshes: Sequence[TriMesh],
                                cfg: TrainConfig, uniform_extra: int,
                                n_eval_points: int = 20_000,
                                eval_seed: int = 12345) -> dict:
    """Hybrid vs vertices-only sample sets, scored by area-weighted error.

    Trains the same architecture twice: once with vertices plus
    ``uniform_extra`` uniform surface samples per example, once with vertex
    pairs only. Test shapes are latent-fitted from vertex pairs (all either
    model sees of them) and errors are evaluated at uniform surface points so
    large faces count by their area.
    """
    eval_points = sample_uniform(template, n_eval_points,
                                 np.random.default_rng(eval_seed))
    out = {}
    for name, n_samples in (
        ("hybrid", template.n_vertices + uniform_extra),
        ("vertices_only", template.n_vertices),
    ):
        cfg_run = replace(cfg, n_samples=n_samples, stop_train_rmse=None)
        samples = build_dataset_samples(template, train_meshes, cfg_run)
        result = train(template, samples, cfg_run)
        _, _, area_errs = _fit_test_errors(
            result.model, template, test_meshes, cfg_run, eval_points=eval_points
        )
        out[name] = float(np.mean(area_errs))
    return out
