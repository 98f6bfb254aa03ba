"""Evaluation harness: threshold sweeps, EER, accuracy-vs-k, timing benchmark.

Trials are scored once, threshold-free; accept/reject is decided per
operating point afterwards, so one pass over the probes yields the whole
FAR/FRR curve.
"""

import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import eigenfaces
from .dataset import load_split
from .errors import DimensionMismatchError, InvalidInputError


@dataclass
class TrialResult:
    probe_id: str
    true_subject: str  # None for an unlabeled impostor probe
    predicted: str
    best_distance: float
    enrolled: bool  # true_subject present in the gallery


@dataclass
class DetPoint:
    """One operating point. Raw counts are kept so alternative FAR/FRR
    denominators can be recomputed from the emitted data."""

    threshold: float
    far: float
    frr: float
    fa_count: int
    fr_count: int
    genuine_count: int  # enrolled trials (FRR denominator)
    total_count: int  # all trials (FAR denominator)


@dataclass
class TimingReport:
    per_probe_times: list  # median seconds per probe, monotonic clock
    model_kept_count: int

    @property
    def min_seconds(self):
        return min(self.per_probe_times)

    @property
    def median_seconds(self):
        return statistics.median(self.per_probe_times)

    @property
    def max_seconds(self):
        return max(self.per_probe_times)


def run_trials(model, probes):
    """Score every probe against the gallery; no threshold applied yet.

    probes: iterable of (image, true_subject_or_None). Returns (trials,
    skipped) where skipped counts probes whose dimensions did not match the
    model.
    """
    trials = []
    skipped = 0
    for i, (image, true_subject) in enumerate(probes):
        try:
            decision = eigenfaces.identify(image, model, theta=np.inf)
        except DimensionMismatchError:
            skipped += 1
            continue
        trials.append(TrialResult(
            probe_id=f"p{i:05d}",
            true_subject=true_subject,
            predicted=decision.subject_id,
            best_distance=decision.distance,
            enrolled=true_subject in model.class_projections,
        ))
    return trials, skipped


def far_frr_curve(trials, thresholds):
    """DET points over an ascending threshold grid.

    Accepted iff best_distance <= threshold. A false accept is an accepted
    trial whose claim is wrong (impostor, or enrolled but misidentified); a
    false reject is a rejected enrolled trial. FAR is over all trials, FRR
    over enrolled trials; the raw counts travel with every point.
    """
    if not trials:
        raise InvalidInputError("far_frr_curve needs at least one trial")
    thresholds = list(thresholds)
    if not thresholds:
        raise InvalidInputError("far_frr_curve needs at least one threshold")
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise InvalidInputError("thresholds must be sorted ascending")

    total = len(trials)
    genuine = sum(1 for t in trials if t.enrolled)
    points = []
    for theta in thresholds:
        fa = fr = 0
        for t in trials:
            accepted = t.best_distance <= theta
            claim_true = t.enrolled and t.predicted == t.true_subject
            if accepted and not claim_true:
                fa += 1
            elif not accepted and t.enrolled:
                fr += 1
        points.append(DetPoint(
            threshold=theta,
            far=fa / max(1, total),
            frr=fr / max(1, genuine),
            fa_count=fa,
            fr_count=fr,
            genuine_count=genuine,
            total_count=total,
        ))
    return points


def default_threshold_grid(trials, n=200):
    """Log-spaced grid between the smallest and largest observed distances."""
    if not trials:
        raise InvalidInputError("no trials to build a grid from")
    dists = [t.best_distance for t in trials]
    hi = max(dists)
    positive = [d for d in dists if d > 0]
    if not positive or hi <= 0:
        return [float(x) for x in np.linspace(0.0, max(hi, 1.0), n)]
    lo = min(positive)
    if lo == hi:
        return [float(x) for x in np.linspace(lo * 0.5, hi * 1.5, n)]
    return [float(x) for x in np.geomspace(lo, hi, n)]


def find_eer(points):
    """Grid point where |FAR - FRR| is smallest; ties go to the smallest
    threshold. Returns (threshold, (far + frr) / 2)."""
    if len(points) < 2:
        raise InvalidInputError("find_eer needs at least 2 points")
    best = min(points, key=lambda p: (abs(p.far - p.frr), p.threshold))
    return best.threshold, (best.far + best.frr) / 2.0


@dataclass
class SweepPoint:
    k: int
    matching_ratio: float
    n_test: int


def training_size_sweep(manifest, k_values, selection, theta=np.inf):
    """Matching ratio vs training images per subject.

    For each k, retrains on the first k train images of every subject (in
    manifest order) and scores the test split: a probe counts as matched when
    the nearest class projection is its own subject and the distance passes
    theta. Enrolled probes only. Returns (points, errors) where errors is a
    list of (k, message) for values that could not be evaluated.
    """
    train_pairs = load_split(manifest, "train")
    test_pairs = load_split(manifest, "test")
    if not test_pairs:
        raise InvalidInputError("manifest has no test records to score")

    points = []
    errors = []
    for k in k_values:
        taken = {}
        subset = []
        for iv, sid in train_pairs:
            c = taken.get(sid, 0)
            if c < k:
                taken[sid] = c + 1
                subset.append((iv, sid))
        if any(c < k for c in taken.values()):
            short = min(taken.values())
            errors.append((k, f"k={k} exceeds available train images (min {short} per subject)"))
            continue
        try:
            ts = eigenfaces.TrainingSet.from_pairs(subset)
            model = eigenfaces.train(ts, selection, dims=manifest.dims)
        except Exception as exc:
            errors.append((k, f"k={k}: {exc}"))
            continue
        enrolled = [(iv, sid) for iv, sid in test_pairs if sid in model.class_projections]
        hits = 0
        for iv, sid in enrolled:
            d = eigenfaces.identify(iv, model, theta=theta)
            if d.accepted and d.subject_id == sid:
                hits += 1
        n = len(enrolled)
        points.append(SweepPoint(k=k, matching_ratio=hits / n if n else 0.0, n_test=n))
    return points, errors


def _hot_path(model, x, gallery, subjects):
    """The timed identification kernel: project, distance to each class, argmin."""
    omega = model.eigenfaces.T @ (x - model.mean_face)
    diffs = gallery - omega
    d = np.einsum("ij,ij->i", diffs, diffs)
    i = int(np.argmin(d))
    return subjects[i], d[i]


def _time_model(model, xs, repetitions):
    subjects = model.subjects
    gallery = np.stack([model.class_projections[s] for s in subjects])
    for x in xs:  # warmup pass, excluded from timing
        _hot_path(model, x, gallery, subjects)
    times = np.empty((repetitions, len(xs)))
    for rep in range(repetitions):
        for i, x in enumerate(xs):
            t0 = time.perf_counter()
            _hot_path(model, x, gallery, subjects)
            times[rep, i] = time.perf_counter() - t0
    preds = [_hot_path(model, x, gallery, subjects)[0] for x in xs]
    return list(np.median(times, axis=0)), preds


def pruning_benchmark(full_model, pruned_model, probes, repetitions=3):
    """Time the identification hot path for a full vs a pruned model.

    Single-threaded, monotonic clock, one warmup pass per model excluded from
    the numbers; per-probe time is the median over repetitions. Returns
    (full_report, pruned_report, prediction_agreement).
    """
    if repetitions < 1:
        raise InvalidInputError("repetitions must be >= 1")
    if full_model.pixel_count != pruned_model.pixel_count:
        raise DimensionMismatchError(
            f"models disagree on pixel count: {full_model.pixel_count} "
            f"vs {pruned_model.pixel_count}")
    xs = [eigenfaces._image_data(p) for p in probes]
    if not xs:
        raise InvalidInputError("no probes to benchmark")
    full_times, full_preds = _time_model(full_model, xs, repetitions)
    pruned_times, pruned_preds = _time_model(pruned_model, xs, repetitions)
    agreement = sum(a == b for a, b in zip(full_preds, pruned_preds)) / len(xs)
    return (
        TimingReport(per_probe_times=full_times, model_kept_count=full_model.kept_count),
        TimingReport(per_probe_times=pruned_times, model_kept_count=pruned_model.kept_count),
        agreement,
    )


# ---------------------------------------------------------------------------
# emitters: CSV (repr floats, so a reparse is exact) and the DET chart as SVG

def _fmt(x):
    return repr(float(x))


def emit_det_csv(points, path):
    if not points:
        raise InvalidInputError("no DET points to emit")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("threshold,far,frr,fa,fr,genuine,total\n")
        for p in points:
            fh.write(f"{_fmt(p.threshold)},{_fmt(p.far)},{_fmt(p.frr)},"
                     f"{p.fa_count},{p.fr_count},{p.genuine_count},{p.total_count}\n")


def emit_sweep_csv(points, path):
    if not points:
        raise InvalidInputError("no sweep points to emit")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,matching_ratio,n_test\n")
        for p in points:
            fh.write(f"{p.k},{_fmt(p.matching_ratio)},{p.n_test}\n")


def emit_timing_csv(reports, path):
    """reports: list of (variant_name, TimingReport)."""
    if not reports:
        raise InvalidInputError("no timing reports to emit")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,kept_count,probe_id,median_seconds\n")
        for name, rep in reports:
            for i, t in enumerate(rep.per_probe_times):
                fh.write(f"{name},{rep.model_kept_count},p{i:05d},{_fmt(t)}\n")


def emit_det_svg(points, path, width=520, height=420):
    """Standalone SVG line chart of the DET curve, both axes in percent."""
    if not points:
        raise InvalidInputError("no DET points to plot")
    ml, mr, mt, mb = 60, 20, 20, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(far):
        return ml + far * pw  # far in [0, 1]

    def sy(frr):
        return mt + (1.0 - frr) * ph

    coords = " ".join(f"{sx(p.far):.2f},{sy(p.frr):.2f}" for p in points)
    ticks = []
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        pct = f"{frac * 100:.0f}"
        x = ml + frac * pw
        y = mt + (1.0 - frac) * ph
        ticks.append(f'<line x1="{x:.1f}" y1="{mt + ph}" x2="{x:.1f}" y2="{mt + ph + 5}" stroke="black"/>')
        ticks.append(f'<text x="{x:.1f}" y="{mt + ph + 18}" text-anchor="middle" font-size="11">{pct}</text>')
        ticks.append(f'<line x1="{ml - 5}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" stroke="black"/>')
        ticks.append(f'<text x="{ml - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="11">{pct}</text>')
    svg = f'''<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">
<rect width="{width}" height="{height}" fill="white"/>
<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>
{chr(10).join(ticks)}
<polyline points="{coords}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>
<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="13">False accept rate (%)</text>
<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {mt + ph / 2:.1f})">False reject rate (%)</text>
</svg>
'''
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)


def emit_results(obj, path):
    """Dispatch an evaluation product to the matching emitter by content."""
    if isinstance(obj, list) and obj and isinstance(obj[0], DetPoint):
        emit_det_csv(obj, path)
    elif isinstance(obj, list) and obj and isinstance(obj[0], SweepPoint):
        emit_sweep_csv(obj, path)
    elif isinstance(obj, list) and obj and isinstance(obj[0], tuple) \
            and isinstance(obj[0][1], TimingReport):
        emit_timing_csv(obj, path)
    else:
        raise InvalidInputError(f"do not know how to emit {type(obj).__name__} (or empty input)")
