"""Experiment driver: corpus generation, engine training, the single-edit
comparison table, and sequential-editing runs.

All outputs are pure functions of (config, seeds, checkpoints): no
timestamps are written, floats are serialized with shortest-round-trip
repr, and aggregation runs in sorted case order, so reruns with the same
seeds produce byte-identical files.  Wall-clock timings go to the log
only.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import sys
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .engines import (
    CnnEditor,
    GeometricEditor,
    TrainConfig,
    apply_engine,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .grids import GridMeta, ScalarField, percentile, manhattan_distance_transform
from .interaction import (
    InteractionError,
    encode_edit,
    predicted_contour_set,
    select_test_edit,
)
from .metrics import (
    CSV_HEADER,
    MetricError,
    MetricReport,
    cas_to_prediction_values,
    pooled_values,
)
from .phantom import CaseBundle, PhantomParams, load_case, make_case, save_case

KNOWN_ENGINES = ("no_edit", "geometric", "ce", "dice", "editing", "intercnn")
TRAINABLE = ("ce", "dice", "editing", "intercnn")

# desk-scale vicinity: the paper-scale sigma shrunk with the grid
DESK_SIGMA = 7.5


class ConfigError(ValueError):
    """Bad experiment configuration."""


class MissingArtifactError(FileNotFoundError):
    """A required corpus or checkpoint is absent."""


@dataclass(frozen=True)
class ExperimentConfig:
    out_dir: str = "runs/default"
    dims: tuple[int, int, int] = (48, 48, 48)
    spacing_mm: float = 1.1024
    n_frames: int = 12
    span_rad: float = math.pi
    n_train: int = 100
    n_test: int = 25
    base_radii: tuple[float, float, float] = (13.0, 11.0, 9.0)
    radii_jitter: float = 1.5
    max_lobes: int = 2
    deform_amplitude: float = 0.08
    noise_level: float = 0.22
    error_level: float = 4.5
    engines: tuple[str, ...] = KNOWN_ENGINES
    n_sequential_edits: int = 10
    sigma_enc: float = DESK_SIGMA
    sigma_edit: float = DESK_SIGMA
    seed: int = 0
    epochs: int = 16
    learning_rate: float = 0.005
    batch_size: int = 4
    intercnn_steps: int = 10
    aggregate: str = "pooled"  # or "per_case"

    def __post_init__(self):
        if self.n_test < 1 or self.n_train < 1:
            raise ConfigError("n_train and n_test must be >= 1")
        unknown = set(self.engines) - set(KNOWN_ENGINES)
        if unknown:
            raise ConfigError(f"unknown engines: {sorted(unknown)}")
        if self.aggregate not in ("pooled", "per_case"):
            raise ConfigError("aggregate must be 'pooled' or 'per_case'")

    @property
    def meta(self) -> GridMeta:
        return GridMeta(self.dims, self.spacing_mm)

    @property
    def corpus_dir(self) -> str:
        return os.path.join(self.out_dir, "corpus")

    @property
    def checkpoint_dir(self) -> str:
        return os.path.join(self.out_dir, "checkpoints")

    @property
    def report_dir(self) -> str:
        return os.path.join(self.out_dir, "reports")

    def train_config(self, loss_kind: str) -> TrainConfig:
        return TrainConfig(
            loss_kind=loss_kind,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            intercnn_steps=self.intercnn_steps,
            seed=self.seed,
            sigma_enc=self.sigma_enc,
            sigma_edit=self.sigma_edit,
        )

    @staticmethod
    def from_json(path: str, **overrides) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from e
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        for key in ("dims", "base_radii", "engines"):
            if key in raw:
                raw[key] = tuple(raw[key])
        try:
            return ExperimentConfig(**raw)
        except TypeError as e:
            raise ConfigError(str(e)) from e


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

def _case_id(i: int) -> str:
    return f"case_{i:04d}"


def make_corpus(config: ExperimentConfig, force: bool = False) -> dict:
    """Generate n_train + n_test bundles plus a split manifest."""
    out = config.corpus_dir
    if os.path.isdir(out) and os.listdir(out) and not force:
        raise ConfigError(f"corpus directory {out} exists and is not empty (use --force)")
    os.makedirs(out, exist_ok=True)
    n_total = config.n_train + config.n_test
    children = np.random.SeedSequence(config.seed).spawn(n_total)
    rng = np.random.default_rng(config.seed)
    ids = []
    for i in range(n_total):
        case_seed = int(children[i].generate_state(1)[0])
        radii = tuple(
            float(r + config.radii_jitter * rng.uniform(-1.0, 1.0))
            for r in config.base_radii
        )
        params = PhantomParams(
            seed=case_seed,
            base_radii=radii,
            n_lobes=int(rng.integers(0, config.max_lobes + 1)),
            deform_amplitude=config.deform_amplitude,
            noise_level=config.noise_level,
        )
        bundle = make_case(
            config.meta,
            params,
            error_level=config.error_level,
            init_seed=case_seed + 1,
            n_frames=config.n_frames,
            span_rad=config.span_rad,
        )
        cid = _case_id(i)
        save_case(bundle, os.path.join(out, cid))
        ids.append(cid)
        if (i + 1) % 25 == 0:
            _log(f"corpus: {i + 1}/{n_total} cases")
    split = {
        "train": ids[: config.n_train],
        "test": ids[config.n_train :],
        "members": {
            cid: zlib.crc32(open(os.path.join(out, cid, "manifest.json"), "rb").read())
            for cid in ids
        },
    }
    tmp = os.path.join(out, "split.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(split, fh, sort_keys=True, indent=1)
    os.replace(tmp, os.path.join(out, "split.json"))
    return split


def load_split(corpus_dir: str) -> dict:
    path = os.path.join(corpus_dir, "split.json")
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing corpus split manifest: {path}")
    with open(path) as fh:
        return json.load(fh)


def load_corpus(corpus_dir: str, which: str) -> list[CaseBundle]:
    split = load_split(corpus_dir)
    return [load_case(os.path.join(corpus_dir, cid)) for cid in split[which]]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train_engine(config: ExperimentConfig, loss_kind: str) -> str:
    """Train one engine on the corpus' train split; returns checkpoint path."""
    if loss_kind not in TRAINABLE:
        raise ConfigError(f"loss must be one of {TRAINABLE}")
    corpus = load_corpus(config.corpus_dir, "train")
    tc = config.train_config(loss_kind)
    _log(f"training {loss_kind}: {len(corpus)} cases, {tc.epochs} epochs")
    model, history = train(corpus, tc)
    ckpt = os.path.join(config.checkpoint_dir, loss_kind)
    save_checkpoint(model, ckpt, config={"loss_kind": loss_kind, "epochs": tc.epochs,
                                         "seed": tc.seed})
    losses_csv = os.path.join(ckpt, "loss_log.csv")
    with open(losses_csv, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("epoch", "loss"))
        for e, val in enumerate(history.epoch_loss):
            wr.writerow((e, repr(float(val))))
    for e, (val, secs) in enumerate(zip(history.epoch_loss, history.epoch_seconds)):
        _log(f"  epoch {e}: loss {val:.5f} ({secs:.1f}s)")
    return ckpt


def resolve_engine(name: str, config: ExperimentConfig):
    if name == "geometric":
        return GeometricEditor()
    if name in TRAINABLE:
        ckpt = os.path.join(config.checkpoint_dir, name)
        if not os.path.isdir(ckpt):
            raise MissingArtifactError(f"missing checkpoint for engine '{name}': {ckpt}")
        model, _ = load_checkpoint(ckpt)
        return CnnEditor(model, name)
    raise ConfigError(f"'{name}' is not an applicable engine")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str, header, rows) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)


def write_json(path: str, obj) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Single-edit experiment (comparison table)
# ---------------------------------------------------------------------------

def _single_edit_case(engine, case: CaseBundle, config: ExperimentConfig):
    """One simulated edit on the worst CAS contour, then the engine."""
    scribble = select_test_edit(case.y_init, case.cas_contours, case.frames)
    edit = encode_edit(scribble, config.sigma_enc, config.sigma_edit, t=0)
    mask, _ = apply_engine(engine, case, edit)
    if not mask.as_bool().any() or mask.as_bool().all():
        raise MetricError(
            f"engine '{getattr(engine, 'name', engine)}' produced a degenerate "
            "mask (no surface); it is likely undertrained"
        )
    return mask, edit


def _region_stats(values: np.ndarray, weights: np.ndarray, spacing: float) -> MetricReport:
    near = weights >= 0.5
    values = np.asarray(values, dtype=np.float64)

    def stats(v):
        if v.size == 0:
            return None, None
        s = np.sort(v)
        return percentile(s, 95.0) * spacing, float(s.mean()) * spacing

    o_p95, o_mean = stats(values)
    n_p95, n_mean = stats(values[near])
    f_p95, f_mean = stats(values[~near])
    return MetricReport(
        overall_p95_mm=o_p95,
        overall_mean_mm=o_mean,
        near_p95_mm=n_p95,
        near_mean_mm=n_mean,
        far_p95_mm=f_p95,
        far_mean_mm=f_mean,
        n_points_near=int(near.sum()),
        n_points_far=int((~near).sum()),
        n_points=int(values.size),
    )


def run_single_edit_experiment(config: ExperimentConfig) -> dict[str, MetricReport]:
    """Evaluate every configured engine after one simulated edit per test
    case; emits CSV and JSON tables and returns {engine: MetricReport}."""
    cases = load_corpus(config.corpus_dir, "test")
    spacing = config.spacing_mm
    results: dict[str, MetricReport] = {}
    for name in config.engines:
        if name == "no_edit":
            vals = np.concatenate(
                [cas_to_prediction_values(c, c.y_init) for c in cases]
            )
            s = np.sort(vals.astype(np.float64))
            results[name] = MetricReport(
                overall_p95_mm=percentile(s, 95.0) * spacing,
                overall_mean_mm=float(s.mean()) * spacing,
                near_p95_mm=None, near_mean_mm=None,
                far_p95_mm=None, far_mean_mm=None,
                n_points_near=None, n_points_far=None,
                n_points=int(s.size),
            )
            _log(f"eval single no_edit: p95 {results[name].overall_p95_mm:.3f} mm")
            continue
        engine = resolve_engine(name, config)
        if config.aggregate == "pooled":
            all_vals, all_w = [], []
            for case in cases:
                mask, edit = _single_edit_case(engine, case, config)
                v, w = pooled_values(case, mask, edit)
                all_vals.append(v)
                all_w.append(w)
            results[name] = _region_stats(
                np.concatenate(all_vals), np.concatenate(all_w), spacing
            )
        else:
            from .metrics import evaluate

            reports = []
            for case in cases:
                mask, edit = _single_edit_case(engine, case, config)
                reports.append(evaluate(case, mask, edit))
            results[name] = _average_reports(reports)
        _log(
            f"eval single {name}: overall p95 {results[name].overall_p95_mm:.3f} mm, "
            f"far p95 {results[name].far_p95_mm:.3f} mm"
        )
    rows = []
    for name in config.engines:
        rows.extend(results[name].csv_rows(name))
    write_csv(os.path.join(config.report_dir, "single_edit.csv"), CSV_HEADER, rows)
    write_json(
        os.path.join(config.report_dir, "single_edit.json"),
        {name: rep.to_json() for name, rep in results.items()},
    )
    return results


def _average_reports(reports: list[MetricReport]) -> MetricReport:
    def avg(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    return MetricReport(
        overall_p95_mm=avg([r.overall_p95_mm for r in reports]),
        overall_mean_mm=avg([r.overall_mean_mm for r in reports]),
        near_p95_mm=avg([r.near_p95_mm for r in reports]),
        near_mean_mm=avg([r.near_mean_mm for r in reports]),
        far_p95_mm=avg([r.far_p95_mm for r in reports]),
        far_mean_mm=avg([r.far_mean_mm for r in reports]),
        n_points_near=sum(r.n_points_near or 0 for r in reports),
        n_points_far=sum(r.n_points_far or 0 for r in reports),
        n_points=sum(r.n_points for r in reports),
    )


# ---------------------------------------------------------------------------
# Sequential editing experiment
# ---------------------------------------------------------------------------

SEQ_HEADER = (
    "engine", "case", "iteration", "frame_id",
    "overall_p95_mm", "first_edit_mean_mm", "first_edit_p95_mm",
)


def _first_edit_region(case: CaseBundle, edit, scribble) -> np.ndarray:
    """CAS points of the first-edited contour that fall inside its A >= 0.5
    region; errors here track whether later edits corrupt the first one."""
    pos = [p.frame_id for p in case.frames.poses].index(scribble.frame_id)
    pts = case.cas_contours[pos].points
    sel = edit.A.data[tuple(pts.T)] >= 0.5
    return pts[sel]


def run_sequential_experiment(config: ExperimentConfig) -> dict:
    """Chained edits, never repeating a frame; per-iteration CSV plus curves.

    Records, per iteration: the overall CAS-to-prediction p95 and the raw
    distance of the prediction to the first edit's region.
    """
    cases = load_corpus(config.corpus_dir, "test")
    spacing = config.spacing_mm
    engines = [n for n in config.engines if n != "no_edit"]
    rows = []
    curves: dict[str, dict] = {}
    for name in engines:
        engine = resolve_engine(name, config)
        curves[name] = {"overall_p95_mm": [], "first_edit_mean_mm": [], "iterations": []}
        for ci, case in enumerate(cases):
            y_cur = case.y_init
            excluded: set[int] = set()
            u_acc = None
            first_pts = None
            overall_curve, first_curve = [], []
            for t in range(config.n_sequential_edits):
                try:
                    scribble = select_test_edit(
                        y_cur, case.cas_contours, case.frames, excluded
                    )
                except InteractionError:
                    break  # fewer candidate contours than iterations
                edit = encode_edit(scribble, config.sigma_enc, config.sigma_edit, t=t)
                if name == "intercnn":
                    u_acc = (
                        edit.u.data
                        if u_acc is None
                        else np.maximum(u_acc, edit.u.data)
                    )
                    edit = replace(edit, u=ScalarField(case.meta, u_acc))
                mask, _ = apply_engine(engine, case.with_initial(y_cur), edit)
                if first_pts is None:
                    first_pts = _first_edit_region(case, edit, scribble)
                vals = cas_to_prediction_values(case, mask)
                overall = percentile(np.sort(vals), 95.0) * spacing
                pred_set = predicted_contour_set(mask, case.frames)
                dt = manhattan_distance_transform(pred_set).data
                if first_pts.size:
                    fe = dt[tuple(first_pts.T)].astype(np.float64)
                    fe_mean = float(np.sort(fe).mean()) * spacing
                    fe_p95 = percentile(fe, 95.0) * spacing
                else:
                    fe_mean = fe_p95 = 0.0
                rows.append((name, _case_id(config.n_train + ci), t,
                             scribble.frame_id, overall, fe_mean, fe_p95))
                overall_curve.append(overall)
                first_curve.append(fe_mean)
                excluded.add(scribble.frame_id)
                y_cur = mask
            curves[name]["overall_p95_mm"].append(overall_curve)
            curves[name]["first_edit_mean_mm"].append(first_curve)
            curves[name]["iterations"].append(len(overall_curve))
        med = [
            float(np.median([c[t] for c in curves[name]["overall_p95_mm"] if len(c) > t]))
            for t in range(config.n_sequential_edits)
        ]
        _log(f"eval sequential {name}: median overall p95 per iter {['%.2f' % m for m in med]}")
    write_csv(os.path.join(config.report_dir, "sequential.csv"), SEQ_HEADER, rows)
    write_json(os.path.join(config.report_dir, "sequential.json"), curves)
    return curves
