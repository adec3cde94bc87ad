"""Training loops, deterministic evaluation, and the staged grasp pipeline.

Every loop draws all randomness from tagged spawns of a single seed, so a
repeated run with the same seed and data reproduces every weight and every
reported number byte for byte. Wall-clock timing never enters a metrics
payload; callers that want it must record it separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .datapipe import (
    AugmentConfig,
    NormalizationStats,
    add_label_noise,
    augment_image,
    denormalize,
    fit_normalizer,
    one_hot,
    tactile_preprocess,
)
from .errors import ConfigError, GelflexError, TrainingDiverged
from .kinematics import accumulative_error, DEFAULT_GEOMETRY
from .nn import Adam, Module, Tensor, cross_entropy, mse_loss
from .rng import Rng
from .synthgen import SceneConfig, render_finger_image, render_tactile_imprint
from .synthgen.dataset import Dataset
from .synthgen.poses import sample_grasp_pose
from .synthgen.scene import SHAPE_CLASSES, SIZE_CLASSES, ObjectSpec, all_objects


@dataclass(frozen=True)
class TrainSchedule:
    """Epoch count plus a linear learning-rate ramp between two endpoints."""

    epochs: int
    lr_init: float
    lr_final: float
    batch_size: int = 32

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not (self.lr_init >= self.lr_final > 0):
            raise ConfigError(
                f"learning rates must satisfy lr_init >= lr_final > 0, got "
                f"{self.lr_init} -> {self.lr_final}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")

    def lr_at(self, epoch: int) -> float:
        if self.epochs == 1:
            return self.lr_init
        if epoch >= self.epochs - 1:
            # roundoff in the interpolant must not blur the configured value
            return self.lr_final
        frac = epoch / (self.epochs - 1)
        return self.lr_init + (self.lr_final - self.lr_init) * frac


DEGREE_SCHEDULE = TrainSchedule(epochs=50, lr_init=1e-4, lr_final=1e-5)
TACTILE_SCHEDULE = TrainSchedule(epochs=20, lr_init=1e-3, lr_final=1e-4)
SIZE_SCHEDULE = TrainSchedule(epochs=150, lr_init=1e-3, lr_final=1e-5)

DEFAULT_AUGMENT = AugmentConfig()


def _guard_split(dataset: Dataset) -> None:
    """Refuse to proceed if the stored split leaks or drops samples."""
    train = set(int(i) for i in dataset.train_indices)
    test = set(int(i) for i in dataset.test_indices)
    if train & test:
        raise ConfigError("dataset split leaks: train and test overlap")
    if len(train) + len(test) != dataset.count:
        raise ConfigError("dataset split does not cover every sample")


def _batches(order: np.ndarray, batch_size: int):
    for at in range(0, len(order), batch_size):
        yield order[at:at + batch_size]


def _step(model: Module, optimizer: Adam, forward, epoch: int, step: int) -> float:
    """One optimizer step; any non-finite value aborts with loop context."""
    try:
        loss = forward()
    except ValueError as exc:
        if "non-finite" in str(exc):
            raise TrainingDiverged(str(exc), epoch=epoch, step=step) from exc
        raise
    model.zero_grad()
    loss.backward()
    try:
        optimizer.step()
    except TrainingDiverged as exc:
        raise TrainingDiverged(str(exc), epoch=epoch, step=step) from exc
    value = loss.item()
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss {value}", epoch=epoch, step=step)
    return value


def train_proprio(model: Module, dataset: Dataset,
                  schedule: TrainSchedule = DEGREE_SCHEDULE, *, seed: int,
                  augment: AugmentConfig | None = DEFAULT_AUGMENT):
    """Fit the joint-angle regressor; returns (normalization stats, history).

    Photometric augmentation and Gaussian label noise (standardized-angle
    units, redrawn every epoch so it averages out rather than baking in a
    bias) apply to the training split only.
    """
    _guard_split(dataset)
    images = dataset.field("image")
    angles = dataset.field("angles")
    train_idx = dataset.train_indices
    stats = fit_normalizer(angles[train_idx])
    span = stats.range_hi - stats.range_lo
    noise_var = augment.label_noise_var if augment is not None else 0.0
    rng = Rng(seed).spawn("train", "proprio")
    optimizer = Adam(model.named_parameters(), lr=schedule.lr_init)
    history = []
    model.train()
    for epoch in range(schedule.epochs):
        optimizer.lr = schedule.lr_at(epoch)
        erng = rng.spawn(f"epoch{epoch}")
        order = erng.spawn("order").permutation(len(train_idx))
        losses = []
        for step, batch in enumerate(_batches(order, schedule.batch_size)):
            idx = train_idx[batch]
            x = images[idx]
            if augment is not None:
                arng = erng.spawn(f"aug{step}")
                x = np.stack([augment_image(img, augment, arng)
                              for img in x]).astype(np.float32)
            z = (angles[idx] - stats.mean) / stats.std
            z = add_label_noise(z, noise_var, erng.spawn(f"noise{step}"))
            t = np.clip((z - stats.range_lo) / span, 0.0, 1.0)

            def forward(x=x, t=t):
                return mse_loss(model(Tensor(x)), t.astype(np.float32))

            losses.append(_step(model, optimizer, forward, epoch, step))
        history.append({"epoch": epoch, "lr": optimizer.lr,
                        "loss": float(np.mean(losses))})
    model.eval()
    return stats, history


def predict_proprio(model: Module, images: np.ndarray,
                    stats: NormalizationStats, batch_size: int = 256) -> np.ndarray:
    """Images -> joint angles in degrees, batched, in eval mode."""
    model.eval()
    outputs = []
    for at in range(0, len(images), batch_size):
        chunk = images[at:at + batch_size].astype(np.float32)
        outputs.append(model(Tensor(chunk)).data)
    t = np.concatenate(outputs, axis=0)
    return denormalize(t, stats)


def evaluate_proprio(model: Module, dataset: Dataset, stats: NormalizationStats,
                     split: str = "test") -> dict:
    """Within-tolerance rate plus angle and endpoint error means."""
    _guard_split(dataset)
    idx = _split_index(dataset, split)
    pred = predict_proprio(model, dataset.field("image")[idx], stats)
    truth = dataset.field("angles")[idx]
    err = np.abs(pred - truth)
    accum = accumulative_error(pred, truth)
    return {
        "split": split,
        "n": int(len(idx)),
        "within_one_deg": float(np.mean(err.max(axis=1) <= 1.0)),
        "mean_sum_abs_err_deg": float(err.sum(axis=1).mean()),
        "mean_max_abs_err_deg": float(err.max(axis=1).mean()),
        "mean_accum_err_mm": float(np.mean(accum)),
        "per_joint_mae_deg": [float(v) for v in err.mean(axis=0)],
    }


def _split_index(dataset: Dataset, split: str) -> np.ndarray:
    if split == "train":
        return dataset.train_indices
    if split == "test":
        return dataset.test_indices
    raise ConfigError(f"split must be 'train' or 'test', got {split!r}")


def tactile_images(dataset: Dataset) -> np.ndarray:
    """Classifier-ready imprint windows from either tactile dataset mode.

    Direct-mode datasets store the window itself; raw-mode datasets store
    (raw, calibration) pairs that run through the difference-and-crop path
    here. Deterministic either way.
    """
    if "image" in dataset.arrays:
        return dataset.field("image")
    raw = dataset.field("raw")
    calib = dataset.field("calib")
    scene = dataset.manifest["scene"]
    r0, c0 = scene["tactile_crop"]
    w = scene["tactile_window"]
    windows = [tactile_preprocess(r[0], c[0], (r0, c0, w, w))[None]
               for r, c in zip(raw, calib)]
    return np.stack(windows).astype(np.float32)


def train_classifier(model: Module, dataset: Dataset,
                     schedule: TrainSchedule = TACTILE_SCHEDULE, *,
                     seed: int) -> list:
    """Fit the imprint shape classifier on the training split; returns history."""
    _guard_split(dataset)
    images = tactile_images(dataset)
    labels = dataset.labels("label")
    train_idx = dataset.train_indices
    rng = Rng(seed).spawn("train", "tactile")
    optimizer = Adam(model.named_parameters(), lr=schedule.lr_init)
    history = []
    model.train()
    for epoch in range(schedule.epochs):
        optimizer.lr = schedule.lr_at(epoch)
        order = rng.spawn(f"epoch{epoch}").permutation(len(train_idx))
        losses = []
        for step, batch in enumerate(_batches(order, schedule.batch_size)):
            idx = train_idx[batch]

            def forward(idx=idx):
                probs = model(Tensor(images[idx].astype(np.float32)))
                return cross_entropy(probs, labels[idx])

            losses.append(_step(model, optimizer, forward, epoch, step))
        history.append({"epoch": epoch, "lr": optimizer.lr,
                        "loss": float(np.mean(losses))})
    model.eval()
    return history


def evaluate_classifier(model: Module, images: np.ndarray, labels: np.ndarray,
                        num_classes: int, batch_size: int = 256) -> dict:
    """Argmax accuracy and a row-true confusion matrix."""
    model.eval()
    preds = []
    for at in range(0, len(images), batch_size):
        probs = model(Tensor(images[at:at + batch_size].astype(np.float32)))
        preds.append(probs.data.argmax(axis=1))
    pred = np.concatenate(preds)
    labels = np.asarray(labels, dtype=np.int64)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, pred), 1)
    return {
        "n": int(len(labels)),
        "accuracy": float(np.mean(pred == labels)),
        "confusion": confusion.tolist(),
    }


def _size_inputs(dataset: Dataset, angle_source: str, proprio) -> tuple:
    """Angles (degrees) and shape one-hots for the size net, per sample."""
    if angle_source == "truth":
        angles = dataset.field("angles").astype(np.float64)
    elif angle_source == "predicted":
        if proprio is None:
            raise ConfigError(
                "angle_source 'predicted' needs proprio=(model, stats)")
        p_model, p_stats = proprio
        angles = predict_proprio(p_model, dataset.field("image"), p_stats)
    else:
        raise ConfigError(
            f"angle_source must be 'truth' or 'predicted', got {angle_source!r}")
    shapes = one_hot(dataset.labels("shape"), len(SHAPE_CLASSES))
    return angles, shapes


def train_size(model: Module, dataset: Dataset,
               schedule: TrainSchedule = SIZE_SCHEDULE, *, seed: int,
               angle_source: str = "truth", proprio=None) -> list:
    """Fit a size estimator from joint angles plus the shape label.

    angle_source 'truth' trains on the recorded poses; 'predicted' runs the
    given proprioception (model, stats) over the stored images first, so the
    estimator trains on the same error distribution it will see in the staged
    pipeline.
    """
    _guard_split(dataset)
    angles, shapes = _size_inputs(dataset, angle_source, proprio)
    sizes = dataset.labels("size")
    train_idx = dataset.train_indices
    rng = Rng(seed).spawn("train", "size", model.arch)
    optimizer = Adam(model.named_parameters(), lr=schedule.lr_init)
    history = []
    model.train()
    for epoch in range(schedule.epochs):
        optimizer.lr = schedule.lr_at(epoch)
        order = rng.spawn(f"epoch{epoch}").permutation(len(train_idx))
        losses = []
        for step, batch in enumerate(_batches(order, schedule.batch_size)):
            idx = train_idx[batch]

            def forward(idx=idx):
                probs = model(Tensor(angles[idx].astype(np.float32)),
                              Tensor(shapes[idx]))
                return cross_entropy(probs, sizes[idx])

            losses.append(_step(model, optimizer, forward, epoch, step))
        history.append({"epoch": epoch, "lr": optimizer.lr,
                        "loss": float(np.mean(losses))})
    model.eval()
    return history


def evaluate_size(model: Module, dataset: Dataset, *, split: str = "test",
                  angle_source: str = "truth", proprio=None) -> dict:
    _guard_split(dataset)
    angles, shapes = _size_inputs(dataset, angle_source, proprio)
    sizes = dataset.labels("size")
    idx = _split_index(dataset, split)
    model.eval()
    probs = model(Tensor(angles[idx].astype(np.float32)), Tensor(shapes[idx]))
    pred = probs.data.argmax(axis=1)
    confusion = np.zeros((len(SIZE_CLASSES),) * 2, dtype=np.int64)
    np.add.at(confusion, (sizes[idx], pred), 1)
    return {
        "split": split,
        "n": int(len(idx)),
        "arch": model.arch,
        "angle_source": angle_source,
        "accuracy": float(np.mean(pred == sizes[idx])),
        "confusion": confusion.tolist(),
    }


def _stage_output(stage: str, array: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise GelflexError(f"pipeline stage {stage!r} produced non-finite values")
    return array


def run_pipeline(proprio, tactile_model: Module | None, size_model: Module,
                 scenario: ObjectSpec, rng: Rng, *,
                 cfg: SceneConfig | None = None, geom=DEFAULT_GEOMETRY,
                 truth_angles: bool = False, truth_label: bool = False) -> dict:
    """One staged grasp: render -> regress angles -> touch -> shape -> size.

    proprio is a (model, stats) pair. Returns the full trial record: the
    sampled pose, every stage's output, and hit flags against the scenario's
    true labels. truth_angles and truth_label bypass the corresponding stage
    with ground truth, which isolates the size net from upstream error; the
    bypassed model may then be None.
    """
    cfg = cfg or SceneConfig()
    pose = sample_grasp_pose(rng.spawn("pose"), scenario)
    if truth_angles:
        angles = pose
        angle_source = "truth"
    else:
        proprio_model, proprio_stats = proprio
        proprio_model.eval()
        image = render_finger_image(pose, cfg, "mid", geom)
        t_hat = _stage_output(
            "proprioception",
            proprio_model(Tensor(image[None, None].astype(np.float32))).data)
        angles = _stage_output(
            "angle denormalization", denormalize(t_hat, proprio_stats))[0]
        angle_source = "predicted"
    if truth_label:
        shape_probs = None
        shape_pred = scenario.shape_label
        label_source = "truth"
    else:
        tactile_model.eval()
        imprint = render_tactile_imprint(scenario, rng.spawn("touch"), cfg)
        shape_probs = _stage_output(
            "shape classification",
            tactile_model(Tensor(imprint[None, None].astype(np.float32))).data)
        shape_pred = int(shape_probs.argmax())
        label_source = "predicted"
    size_model.eval()
    size_probs = _stage_output(
        "size estimation",
        size_model(Tensor(angles[None].astype(np.float32)),
                   Tensor(one_hot(np.array([shape_pred]),
                                  len(SHAPE_CLASSES)))).data)
    size_pred = int(size_probs.argmax())
    return {
        "scenario": {"shape": scenario.shape, "size": scenario.size},
        "pose_deg": [float(v) for v in pose],
        "angle_source": angle_source,
        "angles_deg": [float(v) for v in angles],
        "label_source": label_source,
        "shape_probs": None if shape_probs is None
        else [float(v) for v in shape_probs[0]],
        "shape_pred": shape_pred,
        "shape_hit": bool(shape_pred == scenario.shape_label),
        "size_probs": [float(v) for v in size_probs[0]],
        "size_pred": size_pred,
        "size_hit": bool(size_pred == scenario.size_label),
        "accum_err_mm": float(accumulative_error(angles, pose, geom)),
    }


def run_protocol(proprio, tactile_model: Module | None, size_model: Module, *,
                 seed: int, trials_per_object: int = 10,
                 cfg: SceneConfig | None = None, geom=DEFAULT_GEOMETRY,
                 truth_angles: bool = False, truth_label: bool = False) -> dict:
    """Grasp every object repeatedly through the staged pipeline.

    The default 8-object, 10-trial protocol reports per-object and overall
    hit counts plus the full per-trial records.
    """
    if trials_per_object < 1:
        raise ConfigError("trials_per_object must be >= 1")
    master = Rng(seed).spawn("pipeline")
    per_object = []
    trials = []
    size_hits = 0
    shape_hits = 0
    accum_errors = []
    for oi, obj in enumerate(all_objects()):
        obj_size_hits = 0
        obj_shape_hits = 0
        for trial in range(trials_per_object):
            rng = master.spawn(f"object{oi}", f"trial{trial}")
            record = run_pipeline(
                proprio, tactile_model, size_model, obj, rng, cfg=cfg,
                geom=geom, truth_angles=truth_angles, truth_label=truth_label)
            trials.append(record)
            obj_size_hits += int(record["size_hit"])
            obj_shape_hits += int(record["shape_hit"])
            accum_errors.append(record["accum_err_mm"])
        size_hits += obj_size_hits
        shape_hits += obj_shape_hits
        per_object.append({
            "shape": obj.shape,
            "size": obj.size,
            "size_hits": obj_size_hits,
            "shape_hits": obj_shape_hits,
            "trials": trials_per_object,
        })
    total = trials_per_object * len(all_objects())
    return {
        "seed": seed,
        "trials_per_object": trials_per_object,
        "total_trials": total,
        "size_hits": size_hits,
        "shape_hits": shape_hits,
        "size_accuracy": size_hits / total,
        "shape_accuracy": shape_hits / total,
        "mean_accum_err_mm": float(np.mean(accum_errors)),
        "per_object": per_object,
        "trials": trials,
    }


def metrics_json(payload: dict) -> str:
    """Canonical metrics serialization: stable key order, trailing newline.

    Running the same experiment with the same seed must reproduce this string
    byte for byte, which is why wall-clock times and hostnames are banned
    from metrics payloads.
    """
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"
