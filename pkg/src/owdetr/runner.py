"""Command orchestration: artifact layout and the episodic run loop.

Artifacts under the output directory:
    data/          manifests + PPM rasters
    checkpoints/   task{t}.ckpt
    logs/          task{t}.train.jsonl, task{t}.finetune.jsonl
    reports/       task{t}.eval.json/.txt, task{t}.detections.jsonl
    report/        summary.txt, loss_curves.svg, urecall.svg
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import metrics as metrics_mod
from .config import RunConfig, dump_config, save_config, with_ablation
from .data import generate_dataset, load_manifest, project_to_task, save_manifest
from .errors import OwdetrError
from .metrics import (
    Detection,
    EvalReport,
    evaluate,
    gts_from_manifest,
    load_report,
    save_detections,
    save_report,
)
from .plots import svg_bars, svg_scatter
from .protocol import (
    build_exemplar_store,
    checkpoint_load,
    checkpoint_save,
    incremental_finetune,
    infer,
    load_training_items,
    new_episode_state,
    oracle_step,
    train_task,
)
from .protocol.state import EpisodeState


class MissingArtifactError(OwdetrError):
    """A command prerequisite file does not exist; message names it."""


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing {what}: {path} (run the producing command first)")
    return path


def data_dir(out: Path) -> Path:
    return out / "data"


def train_manifest_path(out: Path, task: int) -> Path:
    return data_dir(out) / f"task{task}.train.jsonl"


def test_manifest_path(out: Path) -> Path:
    return data_dir(out) / "test.jsonl"


def checkpoint_path(out: Path, task: int) -> Path:
    return out / "checkpoints" / f"task{task}.ckpt"


def eval_report_path(out: Path, task: int) -> Path:
    return out / "reports" / f"task{task}.eval.json"


def run_gen_data(cfg: RunConfig) -> Path:
    out = cfg.resolved_out_dir()
    ddir = data_dir(out)
    ddir.mkdir(parents=True, exist_ok=True)
    trains, test = generate_dataset(cfg.data, ddir)
    for t, manifest in enumerate(trains, start=1):
        save_manifest(manifest, train_manifest_path(out, t))
    save_manifest(test, test_manifest_path(out))
    save_config(cfg, out / "config.json")
    return ddir


def run_train(cfg: RunConfig) -> Path:
    """Train task 1 from scratch."""
    out = cfg.resolved_out_dir()
    manifest = load_manifest(_require(train_manifest_path(out, 1), "task 1 train manifest"))
    hyper = cfg.effective_hyper()
    state = new_episode_state(cfg.model, cfg.data.tasks[0], hyper, cfg.seed)
    items = load_training_items(manifest, data_dir(out))
    (out / "logs").mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    log_path = out / "logs" / "task1.train.jsonl"
    log_path.unlink(missing_ok=True)
    train_task(state, items, hyper, log_path=log_path)
    ckpt = checkpoint_path(out, 1)
    checkpoint_save(state, ckpt, config_hash=cfg.config_hash())
    return ckpt


def latest_task(out: Path, n_tasks: int) -> int:
    latest = 0
    for t in range(1, n_tasks + 1):
        if checkpoint_path(out, t).exists():
            latest = t
    return latest


def run_incremental(cfg: RunConfig) -> Path:
    """Advance one episode: oracle labels, train, store exemplars, finetune."""
    out = cfg.resolved_out_dir()
    n_tasks = len(cfg.data.tasks)
    t = latest_task(out, n_tasks)
    if t == 0:
        raise MissingArtifactError(
            f"missing checkpoint: {checkpoint_path(out, 1)} (run 'train' first)"
        )
    if t >= n_tasks:
        raise MissingArtifactError(f"all {n_tasks} tasks already trained")
    next_task = t + 1
    state = checkpoint_load(checkpoint_path(out, t))
    hyper = cfg.effective_hyper()

    manifest = load_manifest(
        _require(train_manifest_path(out, next_task), f"task {next_task} train manifest")
    )
    oracle_step(state, cfg.data.tasks[next_task - 1])
    items = load_training_items(manifest, data_dir(out))
    (out / "logs").mkdir(parents=True, exist_ok=True)
    train_log = out / "logs" / f"task{next_task}.train.jsonl"
    train_log.unlink(missing_ok=True)
    train_task(state, items, hyper, log_path=train_log)

    manifests = [
        load_manifest(train_manifest_path(out, i)) for i in range(1, next_task + 1)
    ]
    state.exemplars = build_exemplar_store(
        manifests, state.label_space.known, hyper.exemplar_cap, cfg.seed
    )
    ft_log = out / "logs" / f"task{next_task}.finetune.jsonl"
    ft_log.unlink(missing_ok=True)
    if hyper.finetune_epochs > 0 and state.exemplars.total() > 0:
        incremental_finetune(state, hyper, data_dir(out), log_path=ft_log)

    ckpt = checkpoint_path(out, next_task)
    checkpoint_save(state, ckpt, config_hash=cfg.config_hash())
    return ckpt


def evaluate_state(cfg: RunConfig, state: EpisodeState, test_manifest) -> tuple[EvalReport, dict]:
    """Project the test set to the state's known view, infer, evaluate."""
    hyper = cfg.effective_hyper()
    known = set(state.label_space.known)
    eval_manifest = project_to_task(test_manifest, known, "eval")
    gts = gts_from_manifest(eval_manifest)

    out_root = cfg.resolved_out_dir()
    images = sorted(eval_manifest.images, key=lambda im: im.image_id)

    def run_one(im) -> tuple[int, list[Detection]]:
        from .data.manifest import load_image_pixels

        pixels = load_image_pixels(data_dir(out_root), im)
        return im.image_id, infer(state, pixels, hyper)

    workers = cfg.eval.workers or (os.cpu_count() or 1)
    dets_per_image: dict[int, list[Detection]] = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for image_id, dets in pool.map(run_one, images):
                dets_per_image[image_id] = dets
    else:
        for im in images:
            image_id, dets = run_one(im)
            dets_per_image[image_id] = dets

    history = state.label_space.history
    current = history[-1] if history else ()
    previous = tuple(c for task in history[:-1] for c in task)
    report = evaluate(
        dets_per_image,
        gts,
        previous_known=previous,
        current_known=current,
        iou_thresh=cfg.eval.iou_thresh,
        wi_recall_level=cfg.eval.wi_recall_level,
        a_ose_counting=cfg.eval.a_ose_counting,
    )
    return report, dets_per_image


def run_eval(cfg: RunConfig, task: int | None = None) -> Path:
    out = cfg.resolved_out_dir()
    n_tasks = len(cfg.data.tasks)
    t = task or latest_task(out, n_tasks)
    if t == 0:
        raise MissingArtifactError(
            f"missing checkpoint: {checkpoint_path(out, 1)} (run 'train' first)"
        )
    state = checkpoint_load(_require(checkpoint_path(out, t), f"task {t} checkpoint"))
    test_manifest = load_manifest(_require(test_manifest_path(out), "test manifest"))
    report, dets = evaluate_state(cfg, state, test_manifest)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    save_detections(dets, out / "reports" / f"task{t}.detections.jsonl")
    save_report(report, eval_report_path(out, t), out / "reports" / f"task{t}.eval.txt")
    return eval_report_path(out, t)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def render_task_table(reports: dict[int, EvalReport], n_tasks: int) -> str:
    """One row per task; unknown-facing columns are absent for the final
    task when every class has become known."""
    header = f"{'task':>4} {'U-Recall':>9} {'WI':>9} {'A-OSE':>6} {'mAP prev':>9} {'mAP cur':>9} {'mAP both':>9}"
    lines = [header, "-" * len(header)]
    for t in sorted(reports.keys()):
        r = reports[t]
        lines.append(
            f"{t:>4} {_fmt(r.u_recall):>9} {_fmt(r.wi):>9} {_fmt(r.a_ose):>6} "
            f"{_fmt(r.map_previous):>9} {_fmt(r.map_current):>9} {_fmt(r.map_both):>9}"
        )
    return "\n".join(lines) + "\n"


def run_report(cfg: RunConfig) -> Path:
    out = cfg.resolved_out_dir()
    n_tasks = len(cfg.data.tasks)
    reports = {}
    for t in range(1, n_tasks + 1):
        path = eval_report_path(out, t)
        if path.exists():
            reports[t] = load_report(path)
    if not reports:
        raise MissingArtifactError(
            f"missing eval reports under {out / 'reports'} (run 'eval' first)"
        )
    rdir = out / "report"
    rdir.mkdir(parents=True, exist_ok=True)
    (rdir / "summary.txt").write_text(render_task_table(reports, n_tasks), encoding="utf-8")

    loss_series = {}
    for t in range(1, n_tasks + 1):
        log = out / "logs" / f"task{t}.train.jsonl"
        if log.exists():
            pts = []
            for line in log.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    pts.append((rec["epoch"], rec["loss"]))
            loss_series[f"task{t}"] = pts
    svg_scatter(loss_series, "training loss per epoch", rdir / "loss_curves.svg")
    svg_bars(
        [f"task{t}" for t in sorted(reports.keys())],
        [reports[t].u_recall for t in sorted(reports.keys())],
        "U-Recall per task",
        rdir / "urecall.svg",
    )
    return rdir / "summary.txt"


ABLATION_VARIANTS = (
    ("baseline", False, False),
    ("nc", True, False),
    ("full", True, True),
)


def run_protocol(cfg: RunConfig) -> dict[int, EvalReport]:
    """Full pipeline in cfg's out dir: gen-data (if absent), train task 1,
    incremental through the schedule, eval every task."""
    out = cfg.resolved_out_dir()
    n_tasks = len(cfg.data.tasks)
    if not test_manifest_path(out).exists():
        run_gen_data(cfg)
    if not checkpoint_path(out, 1).exists():
        run_train(cfg)
    for _ in range(1, n_tasks):
        if latest_task(out, n_tasks) >= n_tasks:
            break
        run_incremental(cfg)
    reports = {}
    for t in range(1, n_tasks + 1):
        run_eval(cfg, task=t)
        reports[t] = load_report(eval_report_path(out, t))
    return reports


def run_ablate(cfg: RunConfig) -> Path:
    """Baseline / +NC / full ladder with a shared seed and shared data."""
    out = cfg.resolved_out_dir()
    rows = []
    urecall_last = {}
    for name, nc, obj in ABLATION_VARIANTS:
        variant_cfg = with_ablation(cfg, nc, obj)
        variant_cfg = type(cfg)(
            **{**_cfg_dict(variant_cfg), "out_dir": str(out / "ablate" / name)}
        )
        reports = run_protocol(variant_cfg)
        rows.append((name, reports))
        first_unknown_task = next(
            (t for t in sorted(reports) if reports[t].u_recall is not None), None
        )
        urecall_last[name] = (
            reports[first_unknown_task].u_recall if first_unknown_task else None
        )

    lines = ["ablation ladder (shared seed)", "=" * 30]
    for name, reports in rows:
        lines.append(f"[{name}]")
        lines.append(render_task_table(reports, len(cfg.data.tasks)).rstrip("\n"))
        lines.append("")
    table = "\n".join(lines) + "\n"
    adir = out / "ablate"
    adir.mkdir(parents=True, exist_ok=True)
    (adir / "comparison.txt").write_text(table, encoding="utf-8")
    svg_bars(
        [name for name, _, _ in ABLATION_VARIANTS],
        [urecall_last[name] for name, _, _ in ABLATION_VARIANTS],
        "U-Recall (first task with unknowns) per variant",
        adir / "urecall.svg",
    )
    return adir / "comparison.txt"


def _cfg_dict(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "out_dir": cfg.out_dir,
        "preset": cfg.preset,
        "model": cfg.model,
        "data": cfg.data,
        "train": cfg.train,
        "eval": cfg.eval,
    }
