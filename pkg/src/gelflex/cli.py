"""Command line interface: gen, train, eval, pipeline, and report.

One executable with five subcommands. Every artifact a command writes embeds
the schema version, the seed, and a hash of the resolved configuration, so
reruns are verifiable byte for byte. Exit codes are stable: 2 configuration,
3 file I/O, 4 training divergence, 5 schema mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import SCHEMA_VERSION
from .checkpoint import load_checkpoint, save_checkpoint
from .datapipe import AugmentConfig
from .errors import ConfigError, DataIOError, GelflexError
from .experiments import (
    DEGREE_SCHEDULE,
    SIZE_SCHEDULE,
    TACTILE_SCHEDULE,
    TrainSchedule,
    evaluate_classifier,
    evaluate_proprio,
    evaluate_size,
    metrics_json,
    run_protocol,
    tactile_images,
    train_classifier,
    train_proprio,
    train_size,
)
from .kinematics import DEFAULT_GEOMETRY, FingerGeometry
from .models import SIZE_ARCHS, build_proprio_cnn, build_size_estimator, build_tactile_lenet
from .report import write_report
from .rng import Rng
from .synthgen import SceneConfig
from .synthgen.dataset import (
    config_digest,
    generate_dataset,
    geometry_from_dict,
    load_dataset,
    scene_from_dict,
)

TASKS = ("proprio", "tactile", "size")
_KIND_TO_TASK = {
    "proprio_single": ("proprio", 1),
    "proprio_double": ("proprio", 2),
    "tactile": ("tactile", None),
    "size": ("size", None),
}
_SCHEDULE_KEYS = ("epochs", "lr_init", "lr_final", "batch_size")
_AUGMENT_KEYS = ("contrast_lo", "contrast_hi", "gain_lo", "gain_hi",
                 "label_noise_var")
_DEFAULT_SCHEDULES = {"proprio": DEGREE_SCHEDULE, "tactile": TACTILE_SCHEDULE,
                      "size": SIZE_SCHEDULE}


@dataclass
class ExperimentConfig:
    """Resolved settings for one command: file values overridden by flags."""

    task: str | None = None
    seed: int | None = None
    out: str | None = None
    cameras: int = 1
    arch: str | None = None
    count: int | None = None
    trials: int = 10
    split: str = "test"
    angle_source: str | None = None
    tactile_mode: str = "direct"
    grasp_fraction: float = 0.5
    truth_angles: bool = False
    truth_label: bool = False
    proprio_ckpt: str | None = None
    scene: SceneConfig = field(default_factory=SceneConfig)
    geometry: FingerGeometry = DEFAULT_GEOMETRY
    schedule: TrainSchedule | None = None
    augment: AugmentConfig | None | str = "default"

    def to_dict(self) -> dict:
        from .synthgen.dataset import _geometry_dict, _scene_dict

        augment = self.augment
        if isinstance(augment, AugmentConfig):
            augment = {k: getattr(augment, k) for k in _AUGMENT_KEYS}
        schedule = self.schedule
        if schedule is not None:
            schedule = {k: getattr(schedule, k) for k in _SCHEDULE_KEYS}
        return {
            "task": self.task,
            "seed": self.seed,
            "cameras": self.cameras,
            "arch": self.arch,
            "count": self.count,
            "trials": self.trials,
            "split": self.split,
            "angle_source": self.angle_source,
            "tactile_mode": self.tactile_mode,
            "grasp_fraction": self.grasp_fraction,
            "truth_angles": self.truth_angles,
            "truth_label": self.truth_label,
            "scene": _scene_dict(self.scene),
            "geometry": _geometry_dict(self.geometry),
            "schedule": schedule,
            "augment": augment,
        }

    def digest(self) -> str:
        return config_digest(self.to_dict())


def _read_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _sub_config(kind: str, data: dict, keys, build):
    unknown = sorted(set(data) - set(keys))
    if unknown:
        raise ConfigError(f"unknown {kind} config keys: {', '.join(unknown)}")
    return build(data)


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults, the optional config file, and command line flags."""
    file_cfg = _read_config_file(args.config) if getattr(
        args, "config", None) else {}
    known = {"task", "seed", "out", "cameras", "arch", "count", "trials",
             "split", "angle_source", "tactile_mode", "grasp_fraction",
             "truth_angles", "truth_label", "proprio_ckpt", "scene",
             "geometry", "schedule", "augment"}
    unknown = sorted(set(file_cfg) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    cfg = ExperimentConfig()
    for key in known - {"scene", "geometry", "schedule", "augment"}:
        if key in file_cfg:
            setattr(cfg, key, file_cfg[key])
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, flag)
    if "scene" in file_cfg:
        cfg.scene = scene_from_dict(dict(file_cfg["scene"]))
    if "geometry" in file_cfg:
        cfg.geometry = geometry_from_dict(dict(file_cfg["geometry"]))
    if "schedule" in file_cfg:
        cfg.schedule = _sub_config("schedule", dict(file_cfg["schedule"]),
                                   _SCHEDULE_KEYS, lambda d: TrainSchedule(**d))
    if "augment" in file_cfg:
        block = file_cfg["augment"]
        cfg.augment = None if block is None else _sub_config(
            "augment", dict(block), _AUGMENT_KEYS, lambda d: AugmentConfig(**d))
    if cfg.task is not None and cfg.task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {cfg.task!r}")
    if cfg.cameras not in (1, 2):
        raise ConfigError(f"cameras must be 1 or 2, got {cfg.cameras}")
    return cfg


def _require_seed(cfg: ExperimentConfig) -> int:
    if cfg.seed is None:
        raise ConfigError(
            "a seed is required: pass --seed or set 'seed' in the config")
    return int(cfg.seed)


def _require_out(cfg: ExperimentConfig) -> Path:
    if cfg.out is None:
        raise ConfigError(
            "an output directory is required: pass --out or set 'out'")
    return Path(cfg.out)


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def _history_csv(history: list) -> str:
    lines = ["epoch,lr,loss"]
    lines += [f"{row['epoch']},{row['lr']!r},{row['loss']!r}"
              for row in history]
    return "\n".join(lines) + "\n"


def _confusion_csv(confusion: list, labels: list) -> str:
    header = "true\\pred," + ",".join(str(v) for v in labels)
    lines = [header]
    lines += [",".join([str(labels[i])] + [str(v) for v in row])
              for i, row in enumerate(confusion)]
    return "\n".join(lines) + "\n"


def _augment_of(cfg: ExperimentConfig):
    return None if cfg.augment is None else (
        cfg.augment if isinstance(cfg.augment, AugmentConfig) else "default")


def cmd_gen(cfg: ExperimentConfig) -> int:
    if cfg.task is None:
        raise ConfigError("gen needs a task: proprio, tactile, or size")
    if cfg.count is None:
        raise ConfigError("gen needs a sample count: pass --count")
    seed = _require_seed(cfg)
    out = _require_out(cfg)
    kind = {"proprio": f"proprio_{'single' if cfg.cameras == 1 else 'double'}",
            "tactile": "tactile", "size": "size"}[cfg.task]
    ds = generate_dataset(kind, int(cfg.count), seed, out, cfg=cfg.scene,
                          geom=cfg.geometry, tactile_mode=cfg.tactile_mode,
                          grasp_fraction=cfg.grasp_fraction)
    print(f"manifest: {out / 'manifest.json'}")
    print(f"kind: {kind}  samples: {ds.count}  "
          f"train/test: {len(ds.train_indices)}/{len(ds.test_indices)}")
    for name in ("shape", "size", "label"):
        if name in ds.arrays:
            values = ds.labels(name)
            classes = ds.manifest["label_maps"].get(
                "shape" if name == "label" else name)
            counts = np.bincount(values, minlength=len(classes))
            pairs = ", ".join(f"{cls}: {int(n)}"
                              for cls, n in zip(classes, counts))
            print(f"per-class ({name}): {pairs}")
    return 0


def _load_run_dataset(path: str):
    ds = load_dataset(path)
    task, cameras = _KIND_TO_TASK[ds.kind]
    return ds, task, cameras


def _task_checked(cfg: ExperimentConfig, task: str) -> None:
    if cfg.task is not None and cfg.task != task:
        raise ConfigError(
            f"dataset holds a {task} task but --task says {cfg.task}")


def cmd_train(cfg: ExperimentConfig, data: str) -> int:
    seed = _require_seed(cfg)
    out = _require_out(cfg)
    ds, task, cameras = _load_run_dataset(data)
    _task_checked(cfg, task)
    cfg.task = task
    if cameras is not None:
        cfg.cameras = cameras
    schedule = cfg.schedule or _DEFAULT_SCHEDULES[task]
    cfg.schedule = schedule
    started = time.time()
    norm_stats = None
    extra_metrics = {}

    if task == "proprio":
        image_size = ds.field("image").shape[-1]
        model = build_proprio_cnn(cameras=cameras, image_size=image_size,
                                  rng=Rng(seed).spawn("proprio"))
        augment = _augment_of(cfg)
        if augment == "default":
            augment = None
            cfg.augment = None
        norm_stats, history = train_proprio(model, ds, schedule, seed=seed,
                                            augment=augment)
        evaluation = evaluate_proprio(model, ds, norm_stats, split=cfg.split)
    elif task == "tactile":
        window = tactile_images(ds).shape[-1]
        model = build_tactile_lenet(window=window, rng=Rng(seed).spawn("tactile"))
        history = train_classifier(model, ds, schedule, seed=seed)
        idx = ds.test_indices if cfg.split == "test" else ds.train_indices
        evaluation = evaluate_classifier(
            model, tactile_images(ds)[idx], ds.labels("label")[idx],
            num_classes=2)
        evaluation["split"] = cfg.split
    else:
        if cfg.arch is None:
            raise ConfigError(
                f"size training needs an architecture: --arch with one of "
                f"{SIZE_ARCHS}")
        angle_source = cfg.angle_source or "truth"
        cfg.angle_source = angle_source
        proprio = _load_proprio_pair(cfg) if angle_source == "predicted" else None
        model = build_size_estimator(cfg.arch, rng=Rng(seed).spawn(cfg.arch))
        history = train_size(model, ds, schedule, seed=seed,
                             angle_source=angle_source, proprio=proprio)
        evaluation = evaluate_size(model, ds, split=cfg.split,
                                   angle_source=angle_source, proprio=proprio)
    runtime = time.time() - started

    payload = {
        "schema_version": SCHEMA_VERSION,
        "task": task,
        "variant": cfg.arch if task == "size" else (
            f"cameras{cameras}" if task == "proprio" else "lenet"),
        "seed": seed,
        "config_digest": cfg.digest(),
        "dataset": {"kind": ds.kind, "count": ds.count,
                    "seed": ds.manifest["seed"],
                    "cfg_hash": ds.manifest["cfg_hash"]},
        "final_loss": history[-1]["loss"],
        "metrics": evaluation,
    }
    _write_text(out / "metrics.json", metrics_json(payload))
    _write_text(out / "history.csv", _history_csv(history))
    if "confusion" in evaluation:
        labels = (ds.manifest["label_maps"]["size"] if task == "size"
                  else ds.manifest["label_maps"]["shape"])
        _write_text(out / "confusion.csv",
                    _confusion_csv(evaluation["confusion"], labels))
    save_checkpoint(model, out / "model.ckpt", seed=seed,
                    norm_stats=norm_stats,
                    extra={"task": task, "config_digest": cfg.digest()})
    _write_text(out / "run_info.json",
                json.dumps({"wall_time_s": round(runtime, 3)}) + "\n")
    print(f"checkpoint: {out / 'model.ckpt'}")
    print(f"final loss: {history[-1]['loss']:.6f}  epochs: {schedule.epochs}")
    _print_metrics(evaluation)
    return 0


def _load_proprio_pair(cfg: ExperimentConfig):
    if cfg.proprio_ckpt is None:
        raise ConfigError(
            "angle_source 'predicted' needs --proprio-ckpt CHECKPOINT")
    ck = load_checkpoint(cfg.proprio_ckpt)
    if ck.norm_stats is None:
        raise ConfigError(
            f"checkpoint {cfg.proprio_ckpt} has no normalization stats; "
            "it is not a proprioception model")
    return ck.model, ck.norm_stats


def _print_metrics(metrics: dict) -> None:
    for key in sorted(metrics):
        value = metrics[key]
        if isinstance(value, float):
            print(f"{key}: {value:.6g}")
        elif isinstance(value, (int, str)):
            print(f"{key}: {value}")


def cmd_eval(cfg: ExperimentConfig, checkpoint: str, data: str) -> int:
    ck = load_checkpoint(checkpoint)
    ds, task, cameras = _load_run_dataset(data)
    family = ck.model.spec["family"]
    if family != {"proprio": "proprio", "tactile": "tactile",
                  "size": "size"}[task]:
        raise ConfigError(
            f"checkpoint holds a {family} model but the dataset is {task}")
    if task == "proprio":
        evaluation = evaluate_proprio(ck.model, ds, ck.norm_stats,
                                      split=cfg.split)
    elif task == "tactile":
        idx = ds.test_indices if cfg.split == "test" else ds.train_indices
        evaluation = evaluate_classifier(
            ck.model, tactile_images(ds)[idx], ds.labels("label")[idx],
            num_classes=2)
        evaluation["split"] = cfg.split
    else:
        angle_source = cfg.angle_source or "truth"
        proprio = _load_proprio_pair(cfg) if angle_source == "predicted" else None
        evaluation = evaluate_size(ck.model, ds, split=cfg.split,
                                   angle_source=angle_source, proprio=proprio)
    print(f"split: {evaluation.get('split', cfg.split)}")
    _print_metrics(evaluation)
    if cfg.out is not None:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "task": task,
            "seed": ck.seed,
            "checkpoint": str(checkpoint),
            "metrics": evaluation,
        }
        _write_text(Path(cfg.out) / "eval_metrics.json", metrics_json(payload))
        print(f"wrote: {Path(cfg.out) / 'eval_metrics.json'}")
    return 0


def _trials_csv(trials: list) -> str:
    header = ("object_shape,object_size,angle_source,label_source,"
              "shape_pred,shape_hit,size_pred,size_hit,accum_err_mm")
    lines = [header]
    for t in trials:
        lines.append(",".join([
            t["scenario"]["shape"], str(t["scenario"]["size"]),
            t["angle_source"], t["label_source"], str(t["shape_pred"]),
            str(int(t["shape_hit"])), str(t["size_pred"]),
            str(int(t["size_hit"])), repr(t["accum_err_mm"]),
        ]))
    return "\n".join(lines) + "\n"


def cmd_pipeline(cfg: ExperimentConfig, proprio_ckpt: str | None,
                 tactile_ckpt: str | None, size_ckpt: str) -> int:
    seed = _require_seed(cfg)
    out = _require_out(cfg)
    if not cfg.truth_angles and proprio_ckpt is None:
        raise ConfigError(
            "pipeline needs --proprio CHECKPOINT (or --truth-angles)")
    if not cfg.truth_label and tactile_ckpt is None:
        raise ConfigError(
            "pipeline needs --tactile CHECKPOINT (or --truth-label)")
    proprio = None
    if proprio_ckpt is not None:
        ck = load_checkpoint(proprio_ckpt)
        if ck.norm_stats is None:
            raise ConfigError(
                f"{proprio_ckpt} has no normalization stats; "
                "not a proprioception checkpoint")
        proprio = (ck.model, ck.norm_stats)
    tactile_model = (load_checkpoint(tactile_ckpt).model
                     if tactile_ckpt is not None else None)
    size_model = load_checkpoint(size_ckpt).model
    result = run_protocol(proprio, tactile_model, size_model, seed=seed,
                          trials_per_object=int(cfg.trials), cfg=cfg.scene,
                          geom=cfg.geometry, truth_angles=cfg.truth_angles,
                          truth_label=cfg.truth_label)
    trials = result.pop("trials")
    payload = {
        "schema_version": SCHEMA_VERSION,
        "task": "pipeline",
        "variant": "protocol",
        "seed": seed,
        "config_digest": cfg.digest(),
        "metrics": result,
    }
    _write_text(out / "metrics.json", metrics_json(payload))
    _write_text(out / "trials.csv", _trials_csv(trials))
    print(f"trials: {result['total_trials']}  "
          f"size hits: {result['size_hits']}/{result['total_trials']}  "
          f"shape hits: {result['shape_hits']}/{result['total_trials']}")
    print(f"mean accumulative error: {result['mean_accum_err_mm']:.3f} mm")
    print(f"wrote: {out / 'metrics.json'} and {out / 'trials.csv'}")
    return 0


def cmd_report(cfg: ExperimentConfig, runs_dir: str) -> int:
    out = Path(cfg.out) if cfg.out is not None else Path(runs_dir) / "report"
    written = write_report(runs_dir, out)
    for path in written:
        print(f"wrote: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gelflex",
        description="Synthetic soft-finger perception: generate data, train "
                    "and evaluate the three networks, run the staged grasp "
                    "pipeline, and consolidate reports. GELFLEX_THREADS caps "
                    "render worker threads.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output directory")
        if seed:
            p.add_argument("--seed", type=int, help="master seed (required)")

    p_gen = sub.add_parser("gen", help="generate a labeled dataset")
    common(p_gen)
    p_gen.add_argument("--task", choices=TASKS)
    p_gen.add_argument("--count", type=int, help="number of samples")
    p_gen.add_argument("--cameras", type=int, choices=(1, 2),
                       help="proprio cameras (1 or 2)")
    p_gen.add_argument("--tactile-mode", dest="tactile_mode",
                       choices=("direct", "raw"))

    p_train = sub.add_parser("train", help="train one network on a dataset")
    common(p_train)
    p_train.add_argument("data", help="dataset directory")
    p_train.add_argument("--task", choices=TASKS,
                         help="cross-check against the dataset kind")
    p_train.add_argument("--arch", choices=SIZE_ARCHS,
                         help="size estimator architecture")
    p_train.add_argument("--cameras", type=int, choices=(1, 2))
    p_train.add_argument("--angle-source", dest="angle_source",
                         choices=("truth", "predicted"))
    p_train.add_argument("--proprio-ckpt", dest="proprio_ckpt",
                         help="proprioception checkpoint for predicted angles")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(p_eval, seed=False)
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("data")
    p_eval.add_argument("--split", choices=("train", "test"))
    p_eval.add_argument("--angle-source", dest="angle_source",
                        choices=("truth", "predicted"))
    p_eval.add_argument("--proprio-ckpt", dest="proprio_ckpt")

    p_pipe = sub.add_parser("pipeline", help="run the staged grasp protocol")
    common(p_pipe)
    p_pipe.add_argument("--proprio", help="proprioception checkpoint")
    p_pipe.add_argument("--tactile", help="tactile checkpoint")
    p_pipe.add_argument("--size", required=True, help="size checkpoint")
    p_pipe.add_argument("--trials", type=int, help="trials per object")
    p_pipe.add_argument("--truth-angles", dest="truth_angles",
                        action="store_const", const=True,
                        help="bypass proprioception with ground truth")
    p_pipe.add_argument("--truth-label", dest="truth_label",
                        action="store_const", const=True,
                        help="bypass tactile classification with ground truth")

    p_report = sub.add_parser("report", help="consolidate run metrics")
    common(p_report, seed=False)
    p_report.add_argument("runs_dir", help="directory tree holding run outputs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command in ("train", "eval"):
            cfg.proprio_ckpt = getattr(args, "proprio_ckpt", None)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.data)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.data)
        if args.command == "pipeline":
            return cmd_pipeline(cfg, args.proprio, args.tactile, args.size)
        return cmd_report(cfg, args.runs_dir)
    except GelflexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataIOError.exit_code


if __name__ == "__main__":
    sys.exit(main())
